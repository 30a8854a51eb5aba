//! Canonical renderings of a [`Table`] into every serialization format.
//!
//! All templates are byte-exact, use `\n` line endings and carry no trailing
//! newline. For the reference table `c1,c2 / a,b / c,d`:
//!
//! ```text
//! pipe       c1 | c2 | a | b | c | d
//! space      c1 c2 a b c d
//! token      <Header, 0, 0> c1 <Header, 0, 1> c2 <CellValue, 1, 0> a ...
//! csv        ,c1,c2\n0,a,b\n1,c,d
//! tsv        c1\tc2\na\tb\nc\td
//! transpose  0 1 c1 a c c2 b d
//! ddl        CREATE TABLE Table (c1 TEXT, c2 TEXT); INSERT INTO Table VALUES ('a','b'); ...
//! ```
//!
//! Structural transforms (shuffled rows/cols, transpose) reuse the space
//! linearization. Only the shuffles consume the seed.

use std::fmt::Write as _;

use crate::format::{FormatError, FormatId, PERTURB_FORMATS, RENDERABLE};
use crate::rng::SplitMix64;
use crate::table::{validate_table, Table, TableError};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SerializeError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Table(#[from] TableError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SerializedView {
    pub table_id: String,
    pub format: FormatId,
    pub seed: u64,
    pub text: String,
}

pub fn serialize(t: &Table, format: FormatId, seed: u64) -> Result<SerializedView, SerializeError> {
    validate_table(t)?;
    let text = render(t, format, seed)?;
    Ok(SerializedView {
        table_id: t.id.clone(),
        format,
        seed,
        text,
    })
}

/// All 17 renderable views in canonical order.
pub fn serialize_all(t: &Table, seed: u64) -> Result<Vec<SerializedView>, SerializeError> {
    RENDERABLE.iter().map(|&f| serialize(t, f, seed)).collect()
}

/// Formats drawn per row by [`mixed_serialize`], in row order.
///
/// One `SplitMix64` seeded by `seed`; row `i` gets `PERTURB_FORMATS[below(9)]`.
pub fn mixed_formats(n_rows: usize, seed: u64) -> Vec<FormatId> {
    let mut rng = SplitMix64::new(seed);
    (0..n_rows)
        .map(|_| PERTURB_FORMATS[rng.below_usize(PERTURB_FORMATS.len())])
        .collect()
}

/// Renders each row as a one-row table (with headers) in an independently
/// drawn format; rows are joined with `\n`.
pub fn mixed_serialize(t: &Table, seed: u64) -> Result<SerializedView, SerializeError> {
    validate_table(t)?;
    let formats = mixed_formats(t.n_rows(), seed);
    let mut parts = Vec::with_capacity(t.n_rows());
    for (row, f) in t.rows.iter().zip(formats) {
        let single = Table {
            id: t.id.clone(),
            headers: t.headers.clone(),
            rows: vec![row.clone()],
        };
        parts.push(render(&single, f, seed)?);
    }
    Ok(SerializedView {
        table_id: t.id.clone(),
        format: FormatId::Mixed,
        seed,
        text: parts.join("\n"),
    })
}

fn render(t: &Table, format: FormatId, seed: u64) -> Result<String, FormatError> {
    Ok(match format {
        FormatId::Pipe => linearize(t, " | "),
        FormatId::Space => linearize(t, " "),
        FormatId::Token => token(t),
        FormatId::Csv => csv(t),
        FormatId::Tsv => tsv(t),
        FormatId::Html => html(t),
        FormatId::Markdown => markdown(t),
        FormatId::Latex => latex(t),
        FormatId::Dict => dict(t),
        FormatId::Json => json(t),
        FormatId::Xml => xml(t),
        FormatId::ShuffledRows => linearize(&shuffle_rows(t, seed), " "),
        FormatId::ShuffledCols => linearize(&shuffle_cols(t, seed), " "),
        FormatId::Transpose => transpose_text(t),
        FormatId::MSchema => mschema(t),
        FormatId::MacSchema => macschema(t),
        FormatId::Ddl => ddl(t),
        other => return Err(FormatError::NotRenderable(other)),
    })
}

/// Headers then cells row-major, joined by `sep`.
fn linearize(t: &Table, sep: &str) -> String {
    t.headers
        .iter()
        .chain(t.rows.iter().flatten())
        .map(String::as_str)
        .collect::<Vec<_>>()
        .join(sep)
}

fn token(t: &Table) -> String {
    let mut parts = Vec::with_capacity(t.cell_count() + t.n_cols());
    for (j, h) in t.headers.iter().enumerate() {
        parts.push(format!("<Header, 0, {j}> {h}"));
    }
    for (i, row) in t.rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            parts.push(format!("<CellValue, {}, {j}> {v}", i + 1));
        }
    }
    parts.join(" ")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv(t: &Table) -> String {
    let mut lines = Vec::with_capacity(t.n_rows() + 1);
    let header: Vec<String> = t.headers.iter().map(|h| csv_field(h)).collect();
    lines.push(format!(",{}", header.join(",")));
    for (i, row) in t.rows.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| csv_field(v)).collect();
        lines.push(format!("{i},{}", cells.join(",")));
    }
    lines.join("\n")
}

fn tsv(t: &Table) -> String {
    std::iter::once(&t.headers)
        .chain(t.rows.iter())
        .map(|r| r.join("\t"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn html_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn html(t: &Table) -> String {
    let mut s = String::from("<table>\n<tr>");
    for h in &t.headers {
        let _ = write!(s, "<th>{}</th>", html_escape(h));
    }
    s.push_str("</tr>\n");
    for row in &t.rows {
        s.push_str("<tr>");
        for v in row {
            let _ = write!(s, "<td>{}</td>", html_escape(v));
        }
        s.push_str("</tr>\n");
    }
    s.push_str("</table>");
    s
}

fn markdown(t: &Table) -> String {
    let line = |cells: &[String]| {
        let esc: Vec<String> = cells.iter().map(|c| c.replace('|', "\\|")).collect();
        format!("| {} |", esc.join(" | "))
    };
    let mut lines = vec![line(&t.headers), format!("|{}", "---|".repeat(t.n_cols()))];
    lines.extend(t.rows.iter().map(|r| line(r)));
    lines.join("\n")
}

fn latex_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        if matches!(ch, '&' | '%' | '$' | '#' | '_' | '{' | '}') {
            out.push('\\');
        }
        out.push(ch);
    }
    out
}

fn latex(t: &Table) -> String {
    let row = |cells: &[String]| {
        let esc: Vec<String> = cells.iter().map(|c| latex_escape(c)).collect();
        format!("{} \\\\", esc.join(" & "))
    };
    let mut lines = vec![format!("\\begin{{tabular}}{{{}}}", "l".repeat(t.n_cols()))];
    lines.push(row(&t.headers));
    lines.extend(t.rows.iter().map(|r| row(r)));
    lines.push("\\end{tabular}".to_string());
    lines.join("\n")
}

/// Single-quoted literal in the style of a Python repr.
fn py_str(s: &str) -> String {
    format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"))
}

fn dict(t: &Table) -> String {
    let cols: Vec<String> = t
        .headers
        .iter()
        .enumerate()
        .map(|(j, h)| {
            let entries: Vec<String> = t
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| format!("{i}: {}", py_str(&r[j])))
                .collect();
            format!("{}: {{{}}}", py_str(h), entries.join(", "))
        })
        .collect();
    format!("{{{}}}", cols.join(", "))
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization cannot fail")
}

fn json(t: &Table) -> String {
    let cols: Vec<String> = t
        .headers
        .iter()
        .enumerate()
        .map(|(j, h)| {
            let entries: Vec<String> = t
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| format!("\"{i}\": {}", json_str(&r[j])))
                .collect();
            format!("{}: {{{}}}", json_str(h), entries.join(", "))
        })
        .collect();
    format!("{{{}}}", cols.join(", "))
}

/// Element name for a column: characters outside `[A-Za-z0-9_.-]` become
/// `_`, as does a first character that cannot start a name.
pub fn xml_tag(name: &str) -> String {
    let mut out: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    match out.chars().next() {
        None => out.push('_'),
        Some(c) if !(c.is_ascii_alphabetic() || c == '_') => {
            out.replace_range(..c.len_utf8(), "_");
        }
        _ => {}
    }
    out
}

fn xml(t: &Table) -> String {
    let tags: Vec<String> = t.headers.iter().map(|h| xml_tag(h)).collect();
    let mut lines = vec!["<data>".to_string()];
    for row in &t.rows {
        lines.push("<row>".into());
        for (tag, v) in tags.iter().zip(row) {
            lines.push(format!("<{tag}>{}</{tag}>", html_escape(v)));
        }
        lines.push("</row>".into());
    }
    lines.push("</data>".into());
    lines.join("\n")
}

fn shuffle_rows(t: &Table, seed: u64) -> Table {
    let mut rows = t.rows.clone();
    SplitMix64::new(seed).shuffle(&mut rows);
    Table { rows, ..t.clone() }
}

fn shuffle_cols(t: &Table, seed: u64) -> Table {
    let mut order: Vec<usize> = (0..t.n_cols()).collect();
    SplitMix64::new(seed).shuffle(&mut order);
    Table {
        id: t.id.clone(),
        headers: order.iter().map(|&j| t.headers[j].clone()).collect(),
        rows: t
            .rows
            .iter()
            .map(|r| order.iter().map(|&j| r[j].clone()).collect())
            .collect(),
    }
}

/// Plain matrix transpose of a rectangular grid.
pub fn transpose_grid(grid: &[Vec<String>]) -> Vec<Vec<String>> {
    let Some(first) = grid.first() else {
        return Vec::new();
    };
    (0..first.len())
        .map(|j| grid.iter().map(|r| r[j].clone()).collect())
        .collect()
}

/// The transposed frame: positional index labels become the header row and
/// each original column becomes a row led by its name.
fn transpose_text(t: &Table) -> String {
    let mut grid = vec![t.headers.clone()];
    grid.extend(t.rows.iter().cloned());
    // grid[0] holds the column names, so each transposed row starts with one.
    let transposed = transpose_grid(&grid);
    let index: Vec<String> = (0..t.n_rows()).map(|i| i.to_string()).collect();
    index
        .iter()
        .chain(transposed.iter().flatten())
        .map(String::as_str)
        .collect::<Vec<_>>()
        .join(" ")
}

fn records(t: &Table, with_index: bool) -> String {
    let recs: Vec<String> = t
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut fields = Vec::with_capacity(r.len() + 1);
            if with_index {
                fields.push(format!("'index': {i}"));
            }
            fields.extend(
                t.headers
                    .iter()
                    .zip(r)
                    .map(|(h, v)| format!("{}: {}", py_str(h), py_str(v))),
            );
            format!("{{{}}}", fields.join(", "))
        })
        .collect();
    format!("[{}]", recs.join(", "))
}

fn mschema(t: &Table) -> String {
    let schema: Vec<String> = t.headers.iter().map(|h| format!("{h}: TEXT")).collect();
    format!("{{'schema': {{{}}}, 'data': {}}}", schema.join(", "), records(t, false))
}

fn macschema(t: &Table) -> String {
    let mut fields = vec!["{'name': 'index', 'type': 'integer'}".to_string()];
    fields.extend(
        t.headers
            .iter()
            .map(|h| format!("{{'name': {}, 'type': 'string'}}", py_str(h))),
    );
    format!(
        "{{'fields': [{}], 'primaryKey': ['index'], 'data': {}}}",
        fields.join(", "),
        records(t, true)
    )
}

fn sql_str(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

fn ddl(t: &Table) -> String {
    let cols: Vec<String> = t.headers.iter().map(|h| format!("{h} TEXT")).collect();
    let mut parts = vec![format!("CREATE TABLE Table ({});", cols.join(", "))];
    for row in &t.rows {
        let vals: Vec<String> = row.iter().map(|v| sql_str(v)).collect();
        parts.push(format!("INSERT INTO Table VALUES ({});", vals.join(",")));
    }
    parts.join(" ")
}
