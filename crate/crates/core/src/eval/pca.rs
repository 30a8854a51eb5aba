use ndarray::{Array1, Array2, Axis};

use super::EvalError;
use crate::rng::SplitMix64;

pub const POWER_ITERATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub points: Vec<[f64; 2]>,
    /// Population variance along each component.
    pub explained: [f64; 2],
    /// All points coincide; projections are zero.
    pub degenerate: bool,
}

/// Top-2 principal components by power iteration with deflation.
///
/// Both start vectors are consecutive `uniform(-1, 1)` draws from
/// `SplitMix64(0)`. Each component is signed so that its largest-magnitude
/// coordinate is positive.
pub fn project_2d<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Projection, EvalError> {
    if vectors.len() < 2 {
        return Err(EvalError::TooFewPoints(vectors.len()));
    }
    let d = vectors[0].as_ref().len();
    let n = vectors.len();
    let mut x = Array2::zeros((n, d));
    for (mut row, v) in x.rows_mut().into_iter().zip(vectors) {
        let v = v.as_ref();
        if v.len() != d {
            return Err(EvalError::DimensionMismatch {
                expected: d,
                found: v.len(),
            });
        }
        row.assign(&ndarray::ArrayView1::from(v));
    }
    let mean = x.mean_axis(Axis(0)).expect("n >= 2");
    x -= &mean;
    if x.iter().all(|v| *v == 0.0) {
        return Ok(Projection {
            points: vec![[0.0, 0.0]; n],
            explained: [0.0, 0.0],
            degenerate: true,
        });
    }
    let mut cov = x.t().dot(&x) / n as f64;
    let mut rng = SplitMix64::new(0);
    let mut comps: Vec<Array1<f64>> = Vec::new();
    let mut explained = [0.0; 2];
    for slot in 0..2 {
        let mut v = Array1::from_shape_fn(d, |_| rng.uniform(-1.0, 1.0));
        orthonormalize(&mut v, &comps);
        for _ in 0..POWER_ITERATIONS {
            let mut w = cov.dot(&v);
            orthonormalize(&mut w, &comps);
            if w.iter().all(|c| *c == 0.0) {
                break;
            }
            v = w;
        }
        let lambda = v.dot(&cov.dot(&v)).max(0.0);
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if pivot < 0.0 {
            v.mapv_inplace(|c| -c);
        }
        explained[slot] = lambda;
        let outer = v.view().insert_axis(Axis(1)).dot(&v.view().insert_axis(Axis(0)));
        cov = cov - outer * lambda;
        comps.push(v);
    }
    let a = x.dot(&comps[0]);
    let b = x.dot(&comps[1]);
    Ok(Projection {
        points: a.iter().zip(b.iter()).map(|(p, q)| [*p, *q]).collect(),
        explained,
        degenerate: false,
    })
}

/// Removes the components along `basis` and rescales to unit length
/// (left as zero when nothing remains).
fn orthonormalize(v: &mut Array1<f64>, basis: &[Array1<f64>]) {
    for b in basis {
        let c = v.dot(b);
        v.scaled_add(-c, b);
    }
    let norm = v.dot(v).sqrt();
    if norm > 1e-300 {
        *v /= norm;
    } else {
        v.fill(0.0);
    }
}
