//! Centroids over serialization views, the format-shift decomposition, and
//! executable checks of the centroid's least-squares and recovery properties.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::format::{FormatId, CENTROID_VARIANTS};
use crate::store::{EmbeddingStore, StoreBuilder, StoreError, StoreMetadata};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("no views to average")]
    EmptyViewSet,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no candidates supplied")]
    NoCandidates,
    #[error("table {table} has format {format} but no {reference} centroid")]
    MissingCentroid {
        table: String,
        format: String,
        reference: FormatId,
    },
    #[error("reference {0} is not a centroid variant")]
    NotACentroid(FormatId),
    #[error("centroid score differs from mean view score by {0:e}")]
    LinearityViolation(f64),
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_dims<V: AsRef<[f64]>>(views: &[V], dim: usize) -> Result<(), GeometryError> {
    for v in views {
        let found = v.as_ref().len();
        if found != dim {
            return Err(GeometryError::DimensionMismatch { expected: dim, found });
        }
    }
    Ok(())
}

/// Componentwise arithmetic mean, not renormalized.
pub fn centroid<V: AsRef<[f64]>>(views: &[V]) -> Result<Vec<f64>, GeometryError> {
    let first = views.first().ok_or(GeometryError::EmptyViewSet)?.as_ref();
    let dim = first.len();
    check_dims(views, dim)?;
    let mut out = vec![0.0; dim];
    for v in views {
        for (o, x) in out.iter_mut().zip(v.as_ref()) {
            *o += x;
        }
    }
    let n = views.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

/// Per table, the available centroid variants and the formats behind each.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CentroidSet {
    pub tables: BTreeMap<String, BTreeMap<FormatId, TableCentroid>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableCentroid {
    pub vector: Vec<f64>,
    pub members: Vec<FormatId>,
}

impl CentroidSet {
    pub fn get(&self, table: &str, variant: FormatId) -> Option<&TableCentroid> {
        self.tables.get(table).and_then(|m| m.get(&variant))
    }

    /// The centroid vectors as a store keyed by the variant ids.
    pub fn to_store(&self, dimension: usize, metadata: StoreMetadata) -> Result<EmbeddingStore, StoreError> {
        let mut b = StoreBuilder::new(dimension, metadata);
        for (table, variants) in &self.tables {
            for (variant, c) in variants {
                b.insert(variant.as_str(), table, c.vector.clone())?;
            }
        }
        Ok(b.seal())
    }
}

/// Computes every centroid variant whose category has at least one member
/// view for the table; other variants are simply absent.
pub fn build_centroid_set(store: &EmbeddingStore) -> CentroidSet {
    let mut set = CentroidSet::default();
    for (table, views) in store.views_by_table() {
        let mut variants = BTreeMap::new();
        for variant in CENTROID_VARIANTS {
            let members = variant.centroid_members().unwrap_or_default();
            let picked: Vec<(FormatId, &[f64])> = views
                .iter()
                .filter_map(|(f, v)| {
                    let id: FormatId = f.parse().ok()?;
                    members.contains(&id).then_some((id, *v))
                })
                .collect();
            if picked.is_empty() {
                continue;
            }
            let vecs: Vec<&[f64]> = picked.iter().map(|(_, v)| *v).collect();
            let vector = centroid(&vecs).expect("store vectors share one dimension");
            variants.insert(
                variant,
                TableCentroid {
                    vector,
                    members: picked.iter().map(|(f, _)| *f).collect(),
                },
            );
        }
        set.tables.insert(table.to_string(), variants);
    }
    set
}

/// `J(u) = sum_s ||u - z_s||^2`.
pub fn sum_sq_dist<V: AsRef<[f64]>>(u: &[f64], views: &[V]) -> f64 {
    views.iter().map(|v| sq_dist(u, v.as_ref())).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityReport {
    pub centroid_objective: f64,
    pub candidate_objectives: Vec<f64>,
    pub success: bool,
}

/// Checks that no candidate beats the centroid on `J` (slack 1e-9).
pub fn verify_centroid_optimality<V: AsRef<[f64]>, C: AsRef<[f64]>>(
    views: &[V],
    candidates: &[C],
) -> Result<OptimalityReport, GeometryError> {
    if candidates.is_empty() {
        return Err(GeometryError::NoCandidates);
    }
    let c = centroid(views)?;
    check_dims(candidates, c.len())?;
    let centroid_objective = sum_sq_dist(&c, views);
    let candidate_objectives: Vec<f64> = candidates.iter().map(|u| sum_sq_dist(u.as_ref(), views)).collect();
    let success = candidate_objectives.iter().all(|&j| centroid_objective <= j + 1e-9);
    Ok(OptimalityReport {
        centroid_objective,
        candidate_objectives,
        success,
    })
}

/// Builds `z_s = mu + delta_s` and returns `||centroid(z) - mu||`.
pub fn semantic_recovery_check<V: AsRef<[f64]>>(mu: &[f64], deltas: &[V]) -> Result<f64, GeometryError> {
    if deltas.is_empty() {
        return Err(GeometryError::EmptyViewSet);
    }
    check_dims(deltas, mu.len())?;
    let views: Vec<Vec<f64>> = deltas
        .iter()
        .map(|d| mu.iter().zip(d.as_ref()).map(|(m, x)| m + x).collect())
        .collect();
    let c = centroid(&views)?;
    Ok(sq_dist(&c, mu).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVarianceReport {
    pub view_scores: Vec<f64>,
    pub mean_score: f64,
    /// Population variance of the view scores.
    pub variance: f64,
    pub centroid_score: f64,
}

pub fn score_variance_report<V: AsRef<[f64]>>(
    query: &[f64],
    views: &[V],
) -> Result<ScoreVarianceReport, GeometryError> {
    if views.is_empty() {
        return Err(GeometryError::EmptyViewSet);
    }
    check_dims(views, query.len())?;
    let view_scores: Vec<f64> = views.iter().map(|v| dot(query, v.as_ref())).collect();
    let n = view_scores.len() as f64;
    let mean_score = view_scores.iter().sum::<f64>() / n;
    let variance = view_scores.iter().map(|s| (s - mean_score).powi(2)).sum::<f64>() / n;
    let centroid_score = dot(query, &centroid(views)?);
    let gap = (centroid_score - mean_score).abs();
    if gap > 1e-10 * (1.0 + mean_score.abs()) {
        return Err(GeometryError::LinearityViolation(gap));
    }
    Ok(ScoreVarianceReport {
        view_scores,
        mean_score,
        variance,
        centroid_score,
    })
}

/// Shift statistics of one format against the reference centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct FormatShift {
    pub format: String,
    /// Table-independent part: mean of `delta_s(T)` over tables.
    pub mean_shift: Vec<f64>,
    pub mean_shift_norm: f64,
    /// Mean over tables of `||eps_s(T)||`.
    pub residual_magnitude: f64,
    /// `mean_shift_norm / residual_magnitude`; infinite when only the
    /// residual vanishes, zero when both do.
    pub ratio: f64,
    /// `delta_s(T) = z_s(T) - c(T)` per table.
    pub deltas: BTreeMap<String, Vec<f64>>,
}

impl FormatShift {
    /// `eps_s(T) = delta_s(T) - mean_shift`.
    pub fn residual(&self, table: &str) -> Option<Vec<f64>> {
        self.deltas
            .get(table)
            .map(|d| d.iter().zip(&self.mean_shift).map(|(x, m)| x - m).collect())
    }

    pub fn residuals(&self) -> BTreeMap<String, Vec<f64>> {
        self.deltas
            .keys()
            .map(|t| (t.clone(), self.residual(t).expect("key present")))
            .collect()
    }

    /// True when the residual magnitude is zero, so the ratio is a flag
    /// rather than a measurement.
    pub fn is_degenerate(&self) -> bool {
        self.residual_magnitude == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftDecomposition {
    pub reference: FormatId,
    pub formats: Vec<FormatShift>,
}

impl ShiftDecomposition {
    pub fn get(&self, format: &str) -> Option<&FormatShift> {
        self.formats.iter().find(|f| f.format == format)
    }

    /// `format,mu_norm,eps_bar,ratio` rows; an infinite ratio prints as `inf`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("format,mu_norm,eps_bar,ratio\n");
        for f in &self.formats {
            let ratio = if f.ratio.is_infinite() {
                "inf".to_string()
            } else {
                f.ratio.to_string()
            };
            let _ = writeln!(
                s,
                "{},{},{},{}",
                f.format, f.mean_shift_norm, f.residual_magnitude, ratio
            );
        }
        s
    }
}

/// Decomposes each stored format's shift from the `reference` centroid into
/// its table-independent mean and per-table residuals.
pub fn shift_decompose(store: &EmbeddingStore, reference: FormatId) -> Result<ShiftDecomposition, GeometryError> {
    if !reference.is_centroid() {
        return Err(GeometryError::NotACentroid(reference));
    }
    let centroids = build_centroid_set(store);
    let mut formats = Vec::new();
    for format in store.formats() {
        if format.parse::<FormatId>().is_ok_and(FormatId::is_centroid) {
            continue;
        }
        let mut deltas = BTreeMap::new();
        for (table, z) in store.format_view(&format) {
            let c = centroids
                .get(table, reference)
                .ok_or_else(|| GeometryError::MissingCentroid {
                    table: table.to_string(),
                    format: format.clone(),
                    reference,
                })?;
            let delta: Vec<f64> = z.iter().zip(&c.vector).map(|(a, b)| a - b).collect();
            deltas.insert(table.to_string(), delta);
        }
        let delta_list: Vec<&Vec<f64>> = deltas.values().collect();
        let mean_shift = centroid(&delta_list)?;
        let mean_shift_norm = norm(&mean_shift);
        let residual_magnitude =
            delta_list.iter().map(|d| sq_dist(d, &mean_shift).sqrt()).sum::<f64>() / delta_list.len() as f64;
        let ratio = if residual_magnitude > 0.0 {
            mean_shift_norm / residual_magnitude
        } else if mean_shift_norm > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        formats.push(FormatShift {
            format,
            mean_shift,
            mean_shift_norm,
            residual_magnitude,
            ratio,
            deltas,
        });
    }
    Ok(ShiftDecomposition { reference, formats })
}
