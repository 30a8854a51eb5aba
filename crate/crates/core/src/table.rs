//! Tables, corpora, queries and the deterministic synthetic corpus generator.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::rng::SplitMix64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TableError {
    #[error("table {id:?}: row {row} has {found} cells, expected {expected}")]
    RaggedRows {
        id: String,
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("table {0:?} has no headers or no rows")]
    EmptyTable(String),
    #[error("table id is empty")]
    EmptyId,
    #[error("duplicate table id {0:?} in corpus")]
    DuplicateId(String),
    #[error("bad range: min {min} > max {max}")]
    BadRange { min: usize, max: usize },
    #[error("vocabulary of {vocab} words cannot fill {cols} distinct headers")]
    VocabTooSmall { vocab: usize, cols: usize },
    #[error("corpus has no tables")]
    EmptyCorpus,
    #[error("cell contains a tab or newline at line {line}")]
    CellContainsDelimiter { line: usize },
    #[error("malformed corpus file at line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("query {query:?} refers to unknown table {table:?}")]
    UnknownGold { query: String, table: String },
    #[error(transparent)]
    Io(#[from] IoError),
}

/// `std::io::Error` is not `Clone`/`PartialEq`; keep the message only.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{0}")]
pub struct IoError(pub String);

impl From<std::io::Error> for TableError {
    fn from(e: std::io::Error) -> Self {
        TableError::Io(IoError(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub id: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// Builds a table and validates it.
    pub fn new(id: impl Into<String>, headers: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self, TableError> {
        let t = Table {
            id: id.into(),
            headers,
            rows,
        };
        validate_table(&t)?;
        Ok(t)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.headers.len()
    }

    pub fn cell_count(&self) -> usize {
        self.n_rows() * self.n_cols()
    }
}

pub fn validate_table(t: &Table) -> Result<(), TableError> {
    if t.id.is_empty() {
        return Err(TableError::EmptyId);
    }
    if t.headers.is_empty() || t.rows.is_empty() {
        return Err(TableError::EmptyTable(t.id.clone()));
    }
    for (i, row) in t.rows.iter().enumerate() {
        if row.len() != t.headers.len() {
            return Err(TableError::RaggedRows {
                id: t.id.clone(),
                row: i,
                found: row.len(),
                expected: t.headers.len(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub name: String,
    tables: Vec<Table>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, tables: Vec<Table>) -> Result<Self, TableError> {
        let mut seen = HashSet::new();
        for t in &tables {
            validate_table(t)?;
            if !seen.insert(t.id.as_str()) {
                return Err(TableError::DuplicateId(t.id.clone()));
            }
        }
        Ok(Corpus {
            name: name.into(),
            tables,
        })
    }

    pub fn tables(&self) -> &[Table] {
        &self.tables
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub id: String,
    pub text: String,
    pub gold_table_id: String,
}

/// Shape and vocabulary parameters for [`gen_synthetic_corpus`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub n_tables: usize,
    pub rows: (usize, usize),
    pub cols: (usize, usize),
    pub vocab_size: usize,
    pub seed: u64,
}

pub fn vocab_word(index: u64) -> String {
    format!("w{index}")
}

/// Zero-padded table id; width is at least 5 digits.
pub fn table_id(index: usize, n_tables: usize) -> String {
    let width = n_tables.saturating_sub(1).to_string().len().max(5);
    format!("t{index:0width$}")
}

/// Generates a corpus with one `SplitMix64` stream seeded by `spec.seed`.
///
/// Per table, in order: row count `rows.0 + below(rows.1 - rows.0 + 1)`,
/// column count likewise, headers by rejection sampling `below(vocab)` until
/// distinct, then cells row-major with `below(vocab)`.
pub fn gen_synthetic_corpus(spec: &SyntheticSpec) -> Result<Corpus, TableError> {
    let (rmin, rmax) = spec.rows;
    let (cmin, cmax) = spec.cols;
    for &(min, max) in &[spec.rows, spec.cols] {
        if min > max {
            return Err(TableError::BadRange { min, max });
        }
    }
    if rmin == 0 || cmin == 0 {
        return Err(TableError::BadRange { min: 0, max: 0 });
    }
    if spec.vocab_size < cmax {
        return Err(TableError::VocabTooSmall {
            vocab: spec.vocab_size,
            cols: cmax,
        });
    }

    let vocab = spec.vocab_size as u64;
    let mut rng = SplitMix64::new(spec.seed);
    let mut tables = Vec::with_capacity(spec.n_tables);
    for index in 0..spec.n_tables {
        let n_rows = rmin + rng.below((rmax - rmin + 1) as u64) as usize;
        let n_cols = cmin + rng.below((cmax - cmin + 1) as u64) as usize;
        let mut picked: Vec<u64> = Vec::with_capacity(n_cols);
        while picked.len() < n_cols {
            let w = rng.below(vocab);
            if !picked.contains(&w) {
                picked.push(w);
            }
        }
        let headers = picked.into_iter().map(vocab_word).collect();
        let rows = (0..n_rows)
            .map(|_| (0..n_cols).map(|_| vocab_word(rng.below(vocab))).collect())
            .collect();
        tables.push(Table {
            id: table_id(index, spec.n_tables),
            headers,
            rows,
        });
    }
    Corpus::new(format!("synthetic-{}", spec.seed), tables)
}

/// Number of distinct cells sampled into each query.
pub const QUERY_CELLS: usize = 3;

/// Derives `per_table` queries for every table.
///
/// One `SplitMix64` stream seeded by `seed`. For each query: a partial
/// Fisher-Yates over the row-major cell indices picks `k = min(3, cells)`
/// positions (swap position `i` with `i + below(cells - i)`), then
/// `below(n_cols)` picks the header. Text is the picked cells followed by the
/// header, space-joined.
pub fn derive_queries(corpus: &Corpus, per_table: usize, seed: u64) -> Result<Vec<Query>, TableError> {
    if corpus.is_empty() {
        return Err(TableError::EmptyCorpus);
    }
    let per_table = per_table.max(1);
    let mut rng = SplitMix64::new(seed);
    let mut out = Vec::with_capacity(corpus.len() * per_table);
    for t in corpus.tables() {
        let cells = t.cell_count();
        let k = QUERY_CELLS.min(cells);
        for j in 0..per_table {
            let mut idx: Vec<usize> = (0..cells).collect();
            for i in 0..k {
                let pick = i + rng.below_usize(cells - i);
                idx.swap(i, pick);
            }
            let mut words: Vec<&str> = idx[..k]
                .iter()
                .map(|&c| t.rows[c / t.n_cols()][c % t.n_cols()].as_str())
                .collect();
            words.push(&t.headers[rng.below_usize(t.n_cols())]);
            out.push(Query {
                id: format!("q-{}-{j}", t.id),
                text: words.join(" "),
                gold_table_id: t.id.clone(),
            });
        }
    }
    Ok(out)
}

fn check_cell(cell: &str, line: usize) -> Result<(), TableError> {
    if cell.contains(['\t', '\n', '\r']) {
        return Err(TableError::CellContainsDelimiter { line });
    }
    Ok(())
}

/// Text form: `#table <id>`, `headers\t…`, `row\t…` lines, blank terminator.
/// A first line `#corpus <name>` carries the corpus name.
pub fn write_corpus_string(c: &Corpus) -> Result<String, TableError> {
    let mut s = String::new();
    let _ = writeln!(s, "#corpus {}", c.name);
    for t in c.tables() {
        let _ = writeln!(s, "#table {}", t.id);
        for h in &t.headers {
            check_cell(h, 0)?;
        }
        let _ = writeln!(s, "headers\t{}", t.headers.join("\t"));
        for row in &t.rows {
            for cell in row {
                check_cell(cell, 0)?;
            }
            let _ = writeln!(s, "row\t{}", row.join("\t"));
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn parse_corpus(text: &str) -> Result<Corpus, TableError> {
    let mut name = String::new();
    let mut tables = Vec::new();
    let mut current: Option<(String, Vec<String>, Vec<Vec<String>>)> = None;

    let finish = |cur: &mut Option<(String, Vec<String>, Vec<Vec<String>>)>,
                  tables: &mut Vec<Table>|
     -> Result<(), TableError> {
        if let Some((id, headers, rows)) = cur.take() {
            tables.push(Table::new(id, headers, rows)?);
        }
        Ok(())
    };

    for (i, raw) in text.split('\n').enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            finish(&mut current, &mut tables)?;
            continue;
        }
        if let Some(n) = line.strip_prefix("#corpus ") {
            name = n.to_string();
        } else if let Some(id) = line.strip_prefix("#table ") {
            finish(&mut current, &mut tables)?;
            current = Some((id.to_string(), Vec::new(), Vec::new()));
        } else if let Some(rest) = line.strip_prefix("headers\t") {
            let cur = current.as_mut().ok_or_else(|| TableError::Malformed {
                line: line_no,
                msg: "headers outside a table block".into(),
            })?;
            cur.1 = rest.split('\t').map(str::to_string).collect();
        } else if let Some(rest) = line.strip_prefix("row\t") {
            let cur = current.as_mut().ok_or_else(|| TableError::Malformed {
                line: line_no,
                msg: "row outside a table block".into(),
            })?;
            cur.2.push(rest.split('\t').map(str::to_string).collect());
        } else {
            return Err(TableError::Malformed {
                line: line_no,
                msg: format!("unrecognized line {line:?}"),
            });
        }
    }
    finish(&mut current, &mut tables)?;
    Corpus::new(name, tables)
}

pub fn save_corpus(c: &Corpus, path: &Path) -> Result<(), TableError> {
    std::fs::write(path, write_corpus_string(c)?)?;
    Ok(())
}

pub fn load_corpus(path: &Path) -> Result<Corpus, TableError> {
    parse_corpus(&std::fs::read_to_string(path)?)
}

/// Queries file: one `query\t<id>\t<gold>\t<text>` line per query.
pub fn write_queries_string(queries: &[Query]) -> String {
    let mut s = String::new();
    for q in queries {
        let _ = writeln!(s, "query\t{}\t{}\t{}", q.id, q.gold_table_id, q.text);
    }
    s
}

pub fn parse_queries(text: &str) -> Result<Vec<Query>, TableError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.splitn(4, '\t').collect();
        match parts.as_slice() {
            ["query", id, gold, text] => out.push(Query {
                id: id.to_string(),
                gold_table_id: gold.to_string(),
                text: text.to_string(),
            }),
            _ => {
                return Err(TableError::Malformed {
                    line: i + 1,
                    msg: "expected query<TAB>id<TAB>gold<TAB>text".into(),
                })
            }
        }
    }
    Ok(out)
}

/// Every query's gold id must name a table of `corpus`.
pub fn check_queries(corpus: &Corpus, queries: &[Query]) -> Result<(), TableError> {
    let ids: HashSet<&str> = corpus.tables().iter().map(|t| t.id.as_str()).collect();
    for q in queries {
        if !ids.contains(q.gold_table_id.as_str()) {
            return Err(TableError::UnknownGold {
                query: q.id.clone(),
                table: q.gold_table_id.clone(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    pub(crate) fn spec(n: usize, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_tables: n,
            rows: (3, 8),
            cols: (2, 5),
            vocab_size: 500,
            seed,
        }
    }

    #[test]
    fn validate_examples() {
        let ok = Table {
            id: "t".into(),
            headers: s(&["c1", "c2"]),
            rows: vec![s(&["a", "b"])],
        };
        assert!(validate_table(&ok).is_ok());

        let ragged = Table {
            rows: vec![s(&["a"])],
            ..ok.clone()
        };
        assert!(matches!(validate_table(&ragged), Err(TableError::RaggedRows { .. })));

        let empty = Table {
            id: "t".into(),
            headers: vec![],
            rows: vec![],
        };
        assert!(matches!(validate_table(&empty), Err(TableError::EmptyTable(_))));

        let no_id = Table {
            id: String::new(),
            ..ok
        };
        assert_eq!(validate_table(&no_id), Err(TableError::EmptyId));
    }

    #[test]
    fn empty_corpus_and_bad_args() {
        assert!(gen_synthetic_corpus(&spec(0, 1)).unwrap().is_empty());
        let mut bad = spec(3, 1);
        bad.rows = (5, 2);
        assert!(matches!(gen_synthetic_corpus(&bad), Err(TableError::BadRange { .. })));
        let mut small = spec(3, 1);
        small.vocab_size = 4;
        assert!(matches!(
            gen_synthetic_corpus(&small),
            Err(TableError::VocabTooSmall { .. })
        ));
    }

    #[test]
    fn generation_is_deterministic_and_valid() {
        let a = gen_synthetic_corpus(&spec(50, 3)).unwrap();
        let b = gen_synthetic_corpus(&spec(50, 3)).unwrap();
        assert_eq!(write_corpus_string(&a).unwrap(), write_corpus_string(&b).unwrap());
        for t in a.tables() {
            validate_table(t).unwrap();
            let distinct: HashSet<_> = t.headers.iter().collect();
            assert_eq!(distinct.len(), t.headers.len());
        }
    }

    #[test]
    fn single_table_query_tokens_are_contained() {
        let c = gen_synthetic_corpus(&spec(1, 5)).unwrap();
        let qs = derive_queries(&c, 1, 9).unwrap();
        assert_eq!(qs.len(), 1);
        let t = &c.tables()[0];
        for tok in qs[0].text.split(' ') {
            assert!(t.headers.iter().any(|h| h == tok) || t.rows.iter().flatten().any(|v| v == tok));
        }
    }

    #[test]
    fn queries_need_tables() {
        assert_eq!(derive_queries(&Corpus::default(), 1, 0), Err(TableError::EmptyCorpus));
    }

    #[test]
    fn corpus_file_rejects_delimiters() {
        let t = Table::new("t1", s(&["a\tb"]), vec![s(&["x"])]).unwrap();
        let c = Corpus::new("c", vec![t]).unwrap();
        assert!(matches!(
            write_corpus_string(&c),
            Err(TableError::CellContainsDelimiter { .. })
        ));

        let text = "#table t1\nheaders\th1\nrow\tx\ty\n\n";
        assert!(matches!(parse_corpus(text), Err(TableError::RaggedRows { .. })));
    }

    #[test]
    fn corpus_text_round_trip() {
        let c = gen_synthetic_corpus(&spec(7, 11)).unwrap();
        let text = write_corpus_string(&c).unwrap();
        assert_eq!(parse_corpus(&text).unwrap(), c);
        let empty = Corpus::new("empty", vec![]).unwrap();
        assert_eq!(write_corpus_string(&empty).unwrap(), "#corpus empty\n");
        assert_eq!(parse_corpus("#corpus empty\n").unwrap(), empty);
    }

    #[test]
    fn queries_text_round_trip() {
        let c = gen_synthetic_corpus(&spec(4, 2)).unwrap();
        let qs = derive_queries(&c, 2, 1).unwrap();
        assert_eq!(parse_queries(&write_queries_string(&qs)).unwrap(), qs);
        check_queries(&c, &qs).unwrap();
    }
}
