use std::cmp::Ordering;

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationStats {
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub range: f64,
}

pub fn variation_stats(values: &[f64]) -> Result<VariationStats, EvalError> {
    if values.len() < 2 {
        return Err(EvalError::TooFewFormats(values.len()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(VariationStats {
        std: var.sqrt(),
        min,
        max,
        range: max - min,
    })
}

pub fn mean_score_diff(scores_i: &[f64], scores_j: &[f64]) -> Result<f64, EvalError> {
    if scores_i.len() != scores_j.len() || scores_i.is_empty() {
        return Err(EvalError::UnmatchedQueries(format!(
            "{} vs {} scores",
            scores_i.len(),
            scores_j.len()
        )));
    }
    let s: f64 = scores_i.iter().zip(scores_j).map(|(a, b)| a - b).sum();
    Ok(s / scores_i.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WilcoxonMethod {
    /// Exact for `n_eff <= 12`, normal approximation above.
    Auto,
    Exact,
    Normal,
}

pub const EXACT_CUTOFF: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// `min(W+, W-)`.
    pub statistic: f64,
    pub p_value: f64,
    /// Pairs left after discarding zero differences.
    pub n_eff: usize,
}

/// Average ranks (1-based) of `values`, ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided Wilcoxon signed-rank test on `x - y`.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<WilcoxonResult, EvalError> {
    wilcoxon_signed_rank_with(x, y, WilcoxonMethod::Auto)
}

pub fn wilcoxon_signed_rank_with(x: &[f64], y: &[f64], method: WilcoxonMethod) -> Result<WilcoxonResult, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|v| *v != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            statistic: 0.0,
            p_value: 1.0,
            n_eff: 0,
        });
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = ranks.iter().zip(&d).filter(|(_, v)| **v > 0.0).map(|(r, _)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w = w_plus.min(total - w_plus);

    let exact = match method {
        WilcoxonMethod::Auto => n <= EXACT_CUTOFF,
        WilcoxonMethod::Exact => true,
        WilcoxonMethod::Normal => false,
    };
    let p = if exact {
        exact_p(&ranks, w_plus)
    } else {
        normal_p(&abs, w)
    };
    Ok(WilcoxonResult {
        statistic: w,
        p_value: p.min(1.0),
        n_eff: n,
    })
}

/// Share of the `2^n` sign assignments whose `W+` is at least as far from
/// its null mean as the observed one.
fn exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len();
    assert!(n < 63, "exact enumeration needs n < 63");
    // ranks are multiples of 0.5; work in doubled integers
    let twice: Vec<i64> = ranks.iter().map(|r| (2.0 * r).round() as i64).collect();
    let total: i64 = twice.iter().sum();
    let observed = ((2.0 * w_plus).round() as i64 * 2 - total).abs();
    let mut extreme: u64 = 0;
    for mask in 0u64..(1u64 << n) {
        let mut s = 0i64;
        for (i, t) in twice.iter().enumerate() {
            if mask >> i & 1 == 1 {
                s += t;
            }
        }
        if (2 * s - total).abs() >= observed {
            extreme += 1;
        }
    }
    extreme as f64 / (1u64 << n) as f64
}

/// Normal approximation with tie-corrected variance and continuity correction.
fn normal_p(abs: &[f64], w: f64) -> f64 {
    let n = abs.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = abs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
    libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Benjamini-Hochberg step-up adjustment, returned in input order.
pub fn bh_fdr_adjust(pvals: &[f64]) -> Result<Vec<f64>, EvalError> {
    if let Some(&bad) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(EvalError::OutOfRangeP(bad));
    }
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        pvals[a]
            .partial_cmp(&pvals[b])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut out = vec![0.0; m];
    let mut running = f64::INFINITY;
    for (pos, &idx) in order.iter().enumerate().rev() {
        // max() guards against p * m / m rounding below p
        let q = (pvals[idx] * m as f64 / (pos + 1) as f64).max(pvals[idx]);
        running = running.min(q);
        out[idx] = running.min(1.0);
    }
    Ok(out)
}
