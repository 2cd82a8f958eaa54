//! Dice-similarity retrieval over binarized embeddings.

use rayon::prelude::*;
use serde::Serialize;

/// Embeddings are binarized at this value (inclusive).
pub const BINARIZE_THRESHOLD: f64 = 0.5;

pub fn binarize(psi: &[f64], threshold: f64) -> Vec<bool> {
    psi.iter().map(|&p| p >= threshold).collect()
}

/// `2 |A ∩ B| / (|A| + |B|)` over active bits. Two empty sets score 1.
pub fn dice(a: &[bool], b: &[bool]) -> f64 {
    let (mut both, mut total) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        both += (x && y) as usize;
        total += x as usize + y as usize;
    }
    if total == 0 {
        1.0
    } else {
        2.0 * both as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalItem {
    pub id: String,
    pub label: String,
    pub bits: Vec<bool>,
}

impl RetrievalItem {
    pub fn new(id: impl Into<String>, label: impl Into<String>, psi: &[f64]) -> Self {
        RetrievalItem {
            id: id.into(),
            label: label.into(),
            bits: binarize(psi, BINARIZE_THRESHOLD),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hit {
    pub index: usize,
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranking {
    pub hits: Vec<Hit>,
    /// The query had no active bits, so every score is 0 or 1.
    pub degenerate_query: bool,
}

/// Candidates by descending Dice score, ties by ascending id, truncated to `top_k`.
/// Candidates whose id equals `exclude` are skipped.
pub fn rank(
    query: &[bool],
    candidates: &[RetrievalItem],
    top_k: usize,
    exclude: Option<&str>,
) -> Ranking {
    let mut hits: Vec<Hit> = candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| Some(c.id.as_str()) != exclude)
        .map(|(i, c)| Hit {
            index: i,
            id: c.id.clone(),
            score: dice(query, &c.bits),
        })
        .collect();
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    hits.truncate(top_k);
    Ranking {
        hits,
        degenerate_query: !query.iter().any(|&b| b),
    }
}

/// Mean precision and recall at every cutoff `k = 1..=candidates`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrCurve {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub degenerate_queries: usize,
}

impl PrCurve {
    pub fn points(&self) -> Vec<[f64; 2]> {
        self.recall
            .iter()
            .zip(&self.precision)
            .map(|(&r, &p)| [r, p])
            .collect()
    }

    pub fn precision_at(&self, k: usize) -> f64 {
        self.precision[k.clamp(1, self.precision.len()) - 1]
    }

    /// Highest precision at any cutoff reaching at least recall `r`.
    pub fn interpolated_precision(&self, r: f64) -> f64 {
        self.recall
            .iter()
            .zip(&self.precision)
            .filter(|(&rec, _)| rec >= r)
            .map(|(_, &p)| p)
            .fold(0.0, f64::max)
    }

    /// True when this curve's interpolated precision is at least `other`'s at
    /// every recall level `0, 0.05, ..., max_recall`.
    pub fn dominates(&self, other: &PrCurve, max_recall: f64) -> bool {
        let steps = (max_recall / 0.05).round() as usize;
        (0..=steps).all(|i| {
            let r = i as f64 * 0.05;
            self.interpolated_precision(r) >= other.interpolated_precision(r)
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,recall,precision\n");
        for (i, (r, p)) in self.recall.iter().zip(&self.precision).enumerate() {
            s.push_str(&format!("{},{},{}\n", i + 1, r, p));
        }
        s
    }
}

/// Precision/recall of ranking `candidates` for each query, where a candidate
/// is relevant when its label equals the query's. A candidate with the same id
/// as the query is excluded.
pub fn precision_recall(queries: &[RetrievalItem], candidates: &[RetrievalItem]) -> PrCurve {
    let per_query: Vec<(Vec<f64>, Vec<f64>, bool)> = queries
        .par_iter()
        .map(|q| {
            let ranking = rank(&q.bits, candidates, usize::MAX, Some(&q.id));
            let relevant = ranking
                .hits
                .iter()
                .filter(|h| candidates[h.index].label == q.label)
                .count()
                .max(1) as f64;
            let mut found = 0usize;
            let (mut p, mut r) = (Vec::new(), Vec::new());
            for (k, h) in ranking.hits.iter().enumerate() {
                found += (candidates[h.index].label == q.label) as usize;
                p.push(found as f64 / (k + 1) as f64);
                r.push(found as f64 / relevant);
            }
            (p, r, ranking.degenerate_query)
        })
        .collect();
    let len = per_query.iter().map(|(p, _, _)| p.len()).min().unwrap_or(0);
    let nq = per_query.len().max(1) as f64;
    let mut precision = vec![0.0; len];
    let mut recall = vec![0.0; len];
    for (p, r, _) in &per_query {
        for k in 0..len {
            precision[k] += p[k];
            recall[k] += r[k];
        }
    }
    precision
        .iter_mut()
        .chain(recall.iter_mut())
        .for_each(|v| *v /= nq);
    PrCurve {
        precision,
        recall,
        degenerate_queries: per_query.iter().filter(|(_, _, d)| *d).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(bits: &[usize], n: usize) -> Vec<bool> {
        (0..n).map(|i| bits.contains(&i)).collect()
    }

    #[test]
    fn dice_values() {
        let a = set(&[1, 2, 3], 6);
        assert_eq!(dice(&a, &a), 1.0);
        assert_eq!(dice(&a, &set(&[0, 4], 6)), 0.0);
        assert!((dice(&a, &set(&[2, 3, 4], 6)) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(dice(&set(&[], 3), &set(&[], 3)), 1.0);
        assert_eq!(dice(&set(&[], 3), &set(&[1], 3)), 0.0);
    }

    #[test]
    fn ties_break_by_id() {
        let c = vec![
            RetrievalItem {
                id: "b".into(),
                label: "x".into(),
                bits: set(&[0], 2),
            },
            RetrievalItem {
                id: "a".into(),
                label: "x".into(),
                bits: set(&[0], 2),
            },
            RetrievalItem {
                id: "c".into(),
                label: "x".into(),
                bits: set(&[1], 2),
            },
        ];
        let r = rank(&set(&[0], 2), &c, 3, None);
        let ids: Vec<&str> = r.hits.iter().map(|h| h.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert!(!r.degenerate_query);
        assert!(rank(&set(&[], 2), &c, 1, None).degenerate_query);
    }

    #[test]
    fn perfect_separation_has_unit_precision_until_full_recall() {
        let mk = |id: &str, label: &str, bits: &[usize]| RetrievalItem {
            id: id.into(),
            label: label.into(),
            bits: set(bits, 4),
        };
        let items = vec![
            mk("a1", "a", &[0, 1]),
            mk("a2", "a", &[0, 1]),
            mk("a3", "a", &[0]),
            mk("b1", "b", &[2, 3]),
            mk("b2", "b", &[3]),
            mk("b3", "b", &[2, 3]),
        ];
        let pr = precision_recall(&items, &items);
        assert_eq!(pr.precision.len(), 5);
        assert_eq!(pr.precision_at(2), 1.0);
        assert_eq!(pr.recall[1], 1.0);
        assert!(pr.dominates(&pr, 0.5));
    }
}
