use std::cmp::Ordering;

use super::EvalError;

#[derive(Debug, Clone, PartialEq)]
pub struct RankResult {
    pub query_id: String,
    pub format: String,
    /// 1-based.
    pub gold_rank: usize,
    pub gold_score: f64,
    pub top_k: Vec<String>,
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Document ids with their cosine scores, best first; equal scores fall back
/// to ascending id.
pub fn rank_documents<'a>(qv: &[f64], docs: &[(&'a str, &[f64])]) -> Result<Vec<(&'a str, f64)>, EvalError> {
    if docs.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let mut scored = Vec::with_capacity(docs.len());
    for &(id, v) in docs {
        if v.len() != qv.len() {
            return Err(EvalError::DimensionMismatch {
                expected: qv.len(),
                found: v.len(),
            });
        }
        scored.push((id, cosine(qv, v)));
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.cmp(b.0))
    });
    Ok(scored)
}

/// Ranks `docs` for one query and records where `gold` lands.
pub fn rank_query(
    query_id: &str,
    format: &str,
    qv: &[f64],
    docs: &[(&str, &[f64])],
    gold: &str,
    top_k: usize,
) -> Result<RankResult, EvalError> {
    let ranked = rank_documents(qv, docs)?;
    let pos = ranked
        .iter()
        .position(|(id, _)| *id == gold)
        .ok_or_else(|| EvalError::MissingGold {
            query: query_id.to_string(),
            format: format.to_string(),
        })?;
    Ok(RankResult {
        query_id: query_id.to_string(),
        format: format.to_string(),
        gold_rank: pos + 1,
        gold_score: ranked[pos].1,
        top_k: ranked.iter().take(top_k).map(|(id, _)| id.to_string()).collect(),
    })
}

pub fn recall_at_k(results: &[RankResult], k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::BadK);
    }
    if results.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let hits = results.iter().filter(|r| r.gold_rank <= k).count();
    Ok(hits as f64 / results.len() as f64)
}

/// `ln(1 + r_base) - ln(1 + r_adapted)`; positive when the adapted rank is better.
pub fn log_rank_delta(r_base: usize, r_adapted: usize) -> f64 {
    (1.0 + r_base as f64).ln() - (1.0 + r_adapted as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rr(rank: usize) -> RankResult {
        RankResult {
            query_id: "q".into(),
            format: "f".into(),
            gold_rank: rank,
            gold_score: 0.0,
            top_k: vec![],
        }
    }

    #[test]
    fn recall_examples() {
        assert_eq!(recall_at_k(&[rr(1), rr(1)], 1).unwrap(), 1.0);
        assert_eq!(recall_at_k(&[rr(1), rr(2)], 1).unwrap(), 0.5);
        assert_eq!(recall_at_k(&[rr(1), rr(3), rr(7), rr(2)], 3).unwrap(), 0.75);
        assert_eq!(recall_at_k(&[], 1), Err(EvalError::EmptyResults));
        assert_eq!(recall_at_k(&[rr(1)], 0), Err(EvalError::BadK));
    }

    #[test]
    fn log_rank_examples() {
        assert_eq!(log_rank_delta(1, 1), 0.0);
        assert!((log_rank_delta(100, 2) - 3.516_508_228).abs() < 1e-8);
        assert!((log_rank_delta(2, 1) - 0.405_465_108).abs() < 1e-8);
    }

    #[test]
    fn ranking_examples() {
        let a = [1.0, 0.0];
        let b = [0.0, 1.0];
        assert_eq!(rank_documents(&a, &[("x", &b)]).unwrap()[0].0, "x");
        let r = rank_documents(&a, &[("o", &b), ("m", &a)]).unwrap();
        assert_eq!(r[0], ("m", 1.0));
        let r = rank_documents(&a, &[("z", &a), ("y", &a)]).unwrap();
        assert_eq!(r.iter().map(|p| p.0).collect::<Vec<_>>(), ["y", "z"]);
        assert!(matches!(
            rank_documents(&a, &[("x", &[1.0, 0.0, 0.0])]),
            Err(EvalError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gold_lookup() {
        let a = [1.0, 0.0];
        let b = [0.6, 0.8];
        let r = rank_query("q1", "csv", &a, &[("t1", &b), ("t2", &a)], "t1", 1).unwrap();
        assert_eq!(r.gold_rank, 2);
        assert!((r.gold_score - 0.6).abs() < 1e-12);
        assert_eq!(r.top_k, ["t2"]);
        assert!(matches!(
            rank_query("q1", "csv", &a, &[("t2", &a)], "t1", 1),
            Err(EvalError::MissingGold { .. })
        ));
    }
}
