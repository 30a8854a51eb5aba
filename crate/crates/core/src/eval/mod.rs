//! Brute-force cosine retrieval and the metrics computed over it: Recall@k,
//! log-rank deltas, cross-format variation, pairwise rank and score
//! differences, Wilcoxon signed-rank tests with Benjamini-Hochberg
//! adjustment, and a 2-d PCA export.

mod pca;
mod rank;
mod stats;

pub use pca::{project_2d, Projection, POWER_ITERATIONS};
pub use rank::{cosine, log_rank_delta, rank_documents, rank_query, recall_at_k, RankResult};
pub use stats::{
    average_ranks, bh_fdr_adjust, mean_score_diff, variation_stats, wilcoxon_signed_rank, wilcoxon_signed_rank_with,
    VariationStats, WilcoxonMethod, WilcoxonResult, EXACT_CUTOFF,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::format::FormatId;
use crate::geometry::build_centroid_set;
use crate::store::{EmbeddingStore, StoreError};
use crate::table::Query;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no results to aggregate")]
    EmptyResults,
    #[error("k must be >= 1")]
    BadK,
    #[error("need at least 2 formats, got {0}")]
    TooFewFormats(usize),
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("unmatched queries: {0}")]
    UnmatchedQueries(String),
    #[error("paired samples differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("p-value out of [0, 1]: {0}")]
    OutOfRangeP(f64),
    #[error("gold table of query {query} missing from format {format}")]
    MissingGold { query: String, format: String },
    #[error("format {0} has no vectors in the store")]
    EmptyFormat(String),
    #[error("{0} queries but {1} query vectors")]
    QueryVectorCount(usize, usize),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl From<std::io::Error> for EvalError {
    fn from(e: std::io::Error) -> Self {
        EvalError::Io(e.to_string())
    }
}

/// Square matrix over formats ordered by ascending mean gold rank.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseMatrix {
    pub formats: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl PairwiseMatrix {
    pub fn get(&self, row: &str, col: &str) -> Option<f64> {
        let i = self.formats.iter().position(|f| f == row)?;
        let j = self.formats.iter().position(|f| f == col)?;
        Some(self.values[i][j])
    }

    fn to_csv(&self) -> String {
        let mut out = String::from("row,col,value\n");
        for (i, r) in self.formats.iter().enumerate() {
            for (j, c) in self.formats.iter().enumerate() {
                let _ = writeln!(out, "{r},{c},{}", self.values[i][j]);
            }
        }
        out
    }
}

/// Per-format ranks keyed by query id.
pub type RankTable = BTreeMap<String, BTreeMap<String, usize>>;

fn order_by_mean_rank(ranks: &RankTable) -> Result<Vec<String>, EvalError> {
    let mut keys: Option<Vec<&String>> = None;
    for (f, per_q) in ranks {
        let k: Vec<&String> = per_q.keys().collect();
        match &keys {
            None => keys = Some(k),
            Some(first) if *first != k => {
                return Err(EvalError::UnmatchedQueries(format!(
                    "format {f} has a different query set"
                )))
            }
            _ => {}
        }
    }
    let mut means: Vec<(String, f64)> = ranks
        .iter()
        .map(|(f, per_q)| {
            let m = per_q.values().sum::<usize>() as f64 / per_q.len().max(1) as f64;
            (f.clone(), m)
        })
        .collect();
    means.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    Ok(means.into_iter().map(|(f, _)| f).collect())
}

/// `values[i][j]` is the mean over queries of `rank(i) - rank(j)`; a positive
/// cell means format `j` ranks the gold table higher.
pub fn pairwise_rank_diff_matrix(ranks: &RankTable) -> Result<PairwiseMatrix, EvalError> {
    let formats = order_by_mean_rank(ranks)?;
    let values = formats
        .iter()
        .map(|fi| {
            formats
                .iter()
                .map(|fj| {
                    let (a, b) = (&ranks[fi], &ranks[fj]);
                    if a.is_empty() {
                        return 0.0;
                    }
                    a.iter().map(|(q, r)| *r as f64 - b[q] as f64).sum::<f64>() / a.len() as f64
                })
                .collect()
        })
        .collect();
    Ok(PairwiseMatrix { formats, values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceMatrix {
    pub formats: Vec<String>,
    pub raw: Vec<Vec<f64>>,
    pub adjusted: Vec<Vec<f64>>,
    pub n_eff: Vec<Vec<usize>>,
}

impl SignificanceMatrix {
    fn to_csv(&self) -> String {
        let mut out = String::from("row,col,value,raw,n_eff\n");
        for (i, r) in self.formats.iter().enumerate() {
            for (j, c) in self.formats.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{r},{c},{},{},{}",
                    self.adjusted[i][j], self.raw[i][j], self.n_eff[i][j]
                );
            }
        }
        out
    }
}

/// Wilcoxon tests on per-query ranks for every unordered format pair, BH
/// adjusted jointly over those pairs and mirrored; the diagonal is 1.
pub fn pairwise_significance(ranks: &RankTable, order: &[String]) -> Result<SignificanceMatrix, EvalError> {
    let f = order.len();
    let series: Vec<Vec<f64>> = order
        .iter()
        .map(|name| ranks[name].values().map(|&r| r as f64).collect())
        .collect();
    let mut raw = vec![vec![1.0; f]; f];
    let mut n_eff = vec![vec![0; f]; f];
    let mut pairs = Vec::new();
    let mut pvals = Vec::new();
    for i in 0..f {
        for j in i + 1..f {
            let w = wilcoxon_signed_rank(&series[i], &series[j])?;
            raw[i][j] = w.p_value;
            raw[j][i] = w.p_value;
            n_eff[i][j] = w.n_eff;
            n_eff[j][i] = w.n_eff;
            pairs.push((i, j));
            pvals.push(w.p_value);
        }
    }
    let adj = bh_fdr_adjust(&pvals)?;
    let mut adjusted = vec![vec![1.0; f]; f];
    for ((i, j), q) in pairs.into_iter().zip(adj) {
        adjusted[i][j] = q;
        adjusted[j][i] = q;
    }
    Ok(SignificanceMatrix {
        formats: order.to_vec(),
        raw,
        adjusted,
        n_eff,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormatMetrics {
    pub format: String,
    /// `(k, recall@k)` for every requested k.
    pub recall: Vec<(usize, f64)>,
    pub mean_rank: f64,
    pub results: Vec<RankResult>,
}

impl FormatMetrics {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.recall.iter().find(|(kk, _)| *kk == k).map(|(_, r)| *r)
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub k_list: Vec<usize>,
    /// Tables whose views go into the PCA export (first n by id).
    pub pca_tables: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            k_list: vec![1, 5, 10],
            pca_tables: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LabeledProjection {
    pub labels: Vec<String>,
    pub projection: Projection,
}

#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub formats: Vec<FormatMetrics>,
    /// Variation of Recall@1 across the single serialization formats evaluated.
    pub variation: Option<VariationStats>,
    /// Mean Recall@1 over the same single formats (distinct from ranking a centroid).
    pub mean_over_formats: Option<f64>,
    /// Per-format mean log-rank delta against the baseline, when one was given.
    pub log_rank: Vec<(String, f64)>,
    pub pairwise_delta: PairwiseMatrix,
    pub pairwise_score: PairwiseMatrix,
    pub significance: SignificanceMatrix,
    pub pca: Option<LabeledProjection>,
}

impl MetricsReport {
    pub fn format(&self, name: &str) -> Option<&FormatMetrics> {
        self.formats.iter().find(|f| f.format == name)
    }

    pub fn log_rank_of(&self, name: &str) -> Option<f64> {
        self.log_rank.iter().find(|(f, _)| f == name).map(|(_, v)| *v)
    }

    pub fn ranks(&self) -> RankTable {
        self.formats
            .iter()
            .map(|fm| {
                let per_q = fm.results.iter().map(|r| (r.query_id.clone(), r.gold_rank)).collect();
                (fm.format.clone(), per_q)
            })
            .collect()
    }

    pub fn recall_csv(&self) -> String {
        let mut out = String::from("format,k,recall\n");
        for fm in &self.formats {
            for (k, r) in &fm.recall {
                let _ = writeln!(out, "{},{k},{r}", fm.format);
            }
        }
        if let Some(m) = self.mean_over_formats {
            let _ = writeln!(out, "mean_over_formats,1,{m}");
        }
        out
    }

    pub fn variation_csv(&self) -> String {
        let mut out = String::from("std,min,max,range\n");
        if let Some(v) = self.variation {
            let _ = writeln!(out, "{},{},{},{}", v.std, v.min, v.max, v.range);
        }
        out
    }

    pub fn logrank_csv(&self) -> String {
        let mut out = String::from("format,mean_delta\n");
        for (f, v) in &self.log_rank {
            let _ = writeln!(out, "{f},{v}");
        }
        out
    }

    pub fn ranks_csv(&self) -> String {
        let mut out = String::from("query_id,format,gold_rank,gold_score\n");
        for fm in &self.formats {
            for r in &fm.results {
                let _ = writeln!(out, "{},{},{},{}", r.query_id, r.format, r.gold_rank, r.gold_score);
            }
        }
        out
    }

    pub fn pca_csv(&self) -> String {
        let mut out = String::from("label,x,y\n");
        if let Some(p) = &self.pca {
            for (l, [x, y]) in p.labels.iter().zip(&p.projection.points) {
                let _ = writeln!(out, "{l},{x},{y}");
            }
        }
        out
    }

    /// Writes every report CSV into `dir` (created if needed).
    pub fn write_csvs(&self, dir: &Path) -> Result<(), EvalError> {
        std::fs::create_dir_all(dir)?;
        let files = [
            ("recall.csv", self.recall_csv()),
            ("variation.csv", self.variation_csv()),
            ("pairwise_delta.csv", self.pairwise_delta.to_csv()),
            ("pairwise_score.csv", self.pairwise_score.to_csv()),
            ("pairwise_p.csv", self.significance.to_csv()),
            ("logrank.csv", self.logrank_csv()),
            ("ranks.csv", self.ranks_csv()),
            ("pca.csv", self.pca_csv()),
        ];
        for (name, body) in files {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}

/// Document vectors for `format`: taken from the store, or for a centroid
/// variant missing from the store, built from the store's views.
fn document_view(store: &EmbeddingStore, format: &str) -> Result<Vec<(String, Vec<f64>)>, EvalError> {
    let direct: Vec<(String, Vec<f64>)> = store
        .format_view(format)
        .into_iter()
        .map(|(t, v)| (t.to_string(), v.to_vec()))
        .collect();
    if !direct.is_empty() {
        return Ok(direct);
    }
    if let Ok(id) = format.parse::<FormatId>() {
        if id.is_centroid() {
            let set = build_centroid_set(store);
            let built: Vec<(String, Vec<f64>)> = set
                .tables
                .iter()
                .filter_map(|(t, m)| m.get(&id).map(|c| (t.clone(), c.vector.clone())))
                .collect();
            if !built.is_empty() {
                return Ok(built);
            }
        }
    }
    Err(EvalError::EmptyFormat(format.to_string()))
}

fn is_single_format(name: &str) -> bool {
    name.parse::<FormatId>().is_ok_and(|f| f.is_renderable())
}

/// Ranks every query against every requested format and aggregates.
pub fn evaluate_run(
    queries: &[Query],
    query_vectors: &[Vec<f64>],
    store: &EmbeddingStore,
    formats: &[String],
    opts: &EvalOptions,
    baseline: Option<&MetricsReport>,
) -> Result<MetricsReport, EvalError> {
    if queries.len() != query_vectors.len() {
        return Err(EvalError::QueryVectorCount(queries.len(), query_vectors.len()));
    }
    if queries.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    if opts.k_list.contains(&0) {
        return Err(EvalError::BadK);
    }
    let top_k = opts.k_list.iter().copied().max().unwrap_or(1);
    let mut per_format = Vec::new();
    for f in formats {
        let docs_owned = document_view(store, f)?;
        let docs: Vec<(&str, &[f64])> = docs_owned.iter().map(|(t, v)| (t.as_str(), v.as_slice())).collect();
        let results = queries
            .iter()
            .zip(query_vectors)
            .map(|(q, v)| rank_query(&q.id, f, v, &docs, &q.gold_table_id, top_k))
            .collect::<Result<Vec<_>, _>>()?;
        let recall = opts
            .k_list
            .iter()
            .map(|&k| Ok((k, recall_at_k(&results, k)?)))
            .collect::<Result<Vec<_>, EvalError>>()?;
        let mean_rank = results.iter().map(|r| r.gold_rank as f64).sum::<f64>() / results.len() as f64;
        per_format.push(FormatMetrics {
            format: f.clone(),
            recall,
            mean_rank,
            results,
        });
    }

    let singles: Vec<f64> = per_format
        .iter()
        .filter(|fm| is_single_format(&fm.format))
        .map(|fm| {
            fm.recall_at(1)
                .unwrap_or_else(|| recall_at_k(&fm.results, 1).unwrap_or(0.0))
        })
        .collect();
    let variation = variation_stats(&singles).ok();
    let mean_over_formats = (!singles.is_empty()).then(|| singles.iter().sum::<f64>() / singles.len() as f64);

    let mut log_rank = Vec::new();
    if let Some(base) = baseline {
        for fm in &per_format {
            let Some(bm) = base.format(&fm.format) else { continue };
            let base_ranks: BTreeMap<&str, usize> =
                bm.results.iter().map(|r| (r.query_id.as_str(), r.gold_rank)).collect();
            let mut sum = 0.0;
            for r in &fm.results {
                let rb = base_ranks.get(r.query_id.as_str()).ok_or_else(|| {
                    EvalError::UnmatchedQueries(format!("query {} missing from baseline", r.query_id))
                })?;
                sum += log_rank_delta(*rb, r.gold_rank);
            }
            log_rank.push((fm.format.clone(), sum / fm.results.len() as f64));
        }
    }

    let mut report = MetricsReport {
        formats: per_format,
        variation,
        mean_over_formats,
        log_rank,
        pairwise_delta: PairwiseMatrix {
            formats: vec![],
            values: vec![],
        },
        pairwise_score: PairwiseMatrix {
            formats: vec![],
            values: vec![],
        },
        significance: SignificanceMatrix {
            formats: vec![],
            raw: vec![],
            adjusted: vec![],
            n_eff: vec![],
        },
        pca: None,
    };
    let ranks = report.ranks();
    report.pairwise_delta = pairwise_rank_diff_matrix(&ranks)?;
    let order = report.pairwise_delta.formats.clone();
    report.significance = pairwise_significance(&ranks, &order)?;
    let scores: BTreeMap<&str, Vec<f64>> = report
        .formats
        .iter()
        .map(|fm| (fm.format.as_str(), fm.results.iter().map(|r| r.gold_score).collect()))
        .collect();
    let values = order
        .iter()
        .map(|a| {
            order
                .iter()
                .map(|b| mean_score_diff(&scores[a.as_str()], &scores[b.as_str()]))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    report.pairwise_score = PairwiseMatrix { formats: order, values };
    report.pca = pca_export(store, formats, opts.pca_tables)?;
    Ok(report)
}

fn pca_export(
    store: &EmbeddingStore,
    formats: &[String],
    tables: usize,
) -> Result<Option<LabeledProjection>, EvalError> {
    let keep: Vec<String> = store.table_ids().into_iter().take(tables).collect();
    let mut labels = Vec::new();
    let mut vectors = Vec::new();
    for f in formats {
        for t in &keep {
            if let Some(v) = store.get(f, t) {
                labels.push(format!("{f}/{t}"));
                vectors.push(v.to_vec());
            }
        }
    }
    if vectors.len() < 2 {
        return Ok(None);
    }
    Ok(Some(LabeledProjection {
        labels,
        projection: project_2d(&vectors)?,
    }))
}
