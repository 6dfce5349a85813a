//! Detection scoring: greedy one-to-one matching of CFAR detections against
//! ground-truth cells, precision/recall/F1, and mean +- std aggregation over
//! independently trained models.

use serde::{Deserialize, Serialize};

use crate::cfar::DetectionList;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Chebyshev distance within which a detection counts as a hit.
    pub tolerance_cells: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig { tolerance_cells: 1 }
    }
}

/// Counts plus the derived precision/recall/F1 for one snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl Score {
    /// Derive precision/recall/F1 from raw counts; undefined ratios are 0.
    pub fn from_counts(tp: usize, fp: usize, fn_count: usize) -> Score {
        let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
        let recall = if tp + fn_count > 0 { tp as f64 / (tp + fn_count) as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Score { precision, recall, f1, true_positives: tp, false_positives: fp, false_negatives: fn_count }
    }
}

/// Chebyshev distance between cells. Plain (non-toroidal): detections sit on
/// the exact peak cells, so boundary wrap never matters at small tolerances.
fn chebyshev(a: (usize, usize), b: (usize, usize)) -> usize {
    a.0.abs_diff(b.0).max(a.1.abs_diff(b.1))
}

/// Greedy one-to-one matching in descending detection magnitude (ties broken
/// by cell order). Each ground-truth cell absorbs at most one detection
/// within the tolerance; among candidates a detection takes the closest
/// ground-truth cell, ties again by cell order.
pub fn match_and_score(
    detections: &DetectionList,
    ground_truth: &[(usize, usize)],
    config: &MatchConfig,
) -> Score {
    let mut order: Vec<usize> = (0..detections.cells.len()).collect();
    order.sort_by(|&a, &b| {
        let da = &detections.cells[a];
        let db = &detections.cells[b];
        db.magnitude
            .partial_cmp(&da.magnitude)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| (da.row, da.col).cmp(&(db.row, db.col)))
    });

    let mut taken = vec![false; ground_truth.len()];
    let mut tp = 0usize;
    let mut fp = 0usize;
    for &i in &order {
        let det = &detections.cells[i];
        let mut best: Option<(usize, usize, (usize, usize))> = None; // (dist, idx, cell)
        for (gi, &cell) in ground_truth.iter().enumerate() {
            if taken[gi] {
                continue;
            }
            let d = chebyshev((det.row, det.col), cell);
            if d > config.tolerance_cells {
                continue;
            }
            let key = (d, gi, cell);
            let better = match best {
                None => true,
                Some((bd, _, bc)) => (d, cell) < (bd, bc),
            };
            if better {
                best = Some(key);
            }
        }
        match best {
            Some((_, gi, _)) => {
                taken[gi] = true;
                tp += 1;
            }
            None => fp += 1,
        }
    }
    let fn_count = taken.iter().filter(|&&t| !t).count();
    Score::from_counts(tp, fp, fn_count)
}

/// Mean and sample standard deviation (n-1 denominator) of the F1 values.
pub fn aggregate(scores: &[Score]) -> Result<(f64, f64)> {
    if scores.is_empty() {
        return Err(Error::Usage("cannot aggregate an empty score list".into()));
    }
    let n = scores.len() as f64;
    let mean = scores.iter().map(|s| s.f1).sum::<f64>() / n;
    let std = if scores.len() > 1 {
        (scores.iter().map(|s| (s.f1 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok((mean, std))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfar::Detection;

    fn detections(cells: &[(usize, usize, f64)]) -> DetectionList {
        DetectionList {
            cells: cells.iter().map(|&(row, col, magnitude)| Detection { row, col, magnitude }).collect(),
        }
    }

    #[test]
    fn exact_match_scores_one() {
        let gt = vec![(3, 4), (10, 12)];
        let det = detections(&[(3, 4, 5.0), (10, 12, 4.0)]);
        let s = match_and_score(&det, &gt, &MatchConfig::default());
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        assert_eq!((s.true_positives, s.false_positives, s.false_negatives), (2, 0, 0));
    }

    #[test]
    fn no_detections_means_zero_recall_and_f1() {
        let gt = vec![(3, 4)];
        let s = match_and_score(&DetectionList::default(), &gt, &MatchConfig::default());
        assert_eq!(s.recall, 0.0);
        assert_eq!(s.f1, 0.0);
        assert_eq!(s.false_negatives, 1);
    }

    #[test]
    fn two_hits_one_false_alarm() {
        // 2 ground-truth cells, 3 detections, 2 within tolerance.
        let gt = vec![(10, 10), (20, 20)];
        let det = detections(&[(10, 10, 9.0), (20, 21, 7.0), (40, 40, 5.0)]);
        let s = match_and_score(&det, &gt, &MatchConfig::default());
        assert_eq!((s.true_positives, s.false_positives, s.false_negatives), (2, 1, 0));
        assert!((s.precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.recall, 1.0);
        assert!((s.f1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn matching_is_one_to_one() {
        // Two detections near one ground-truth cell: one hit, one false alarm.
        let gt = vec![(10, 10)];
        let det = detections(&[(10, 10, 9.0), (10, 11, 8.0)]);
        let s = match_and_score(&det, &gt, &MatchConfig::default());
        assert_eq!((s.true_positives, s.false_positives, s.false_negatives), (1, 1, 0));
    }

    #[test]
    fn permuting_detections_does_not_change_the_score() {
        let gt = vec![(5, 5), (9, 9), (30, 30)];
        let a = detections(&[(5, 6, 3.0), (9, 9, 7.0), (31, 31, 2.0), (50, 50, 1.0)]);
        let mut cells = a.cells.clone();
        cells.reverse();
        let b = DetectionList { cells };
        let sa = match_and_score(&a, &gt, &MatchConfig::default());
        let sb = match_and_score(&b, &gt, &MatchConfig::default());
        assert_eq!(sa, sb);
    }

    #[test]
    fn far_detection_lowers_precision_not_recall() {
        let gt = vec![(5, 5)];
        let near = detections(&[(5, 5, 9.0)]);
        let s1 = match_and_score(&near, &gt, &MatchConfig::default());
        let with_far = detections(&[(5, 5, 9.0), (60, 60, 1.0)]);
        let s2 = match_and_score(&with_far, &gt, &MatchConfig::default());
        assert!(s2.precision < s1.precision);
        assert_eq!(s2.recall, s1.recall);
        // f1 stays within [0, 1] and below min(2p, 2r).
        for s in [s1, s2] {
            assert!(s.f1 >= 0.0 && s.f1 <= 1.0);
            assert!(s.f1 <= 2.0 * s.precision + 1e-12);
            assert!(s.f1 <= 2.0 * s.recall + 1e-12);
        }
    }

    #[test]
    fn aggregate_mean_and_sample_std() {
        let s = |f1: f64| Score { precision: f1, recall: f1, f1, true_positives: 0, false_positives: 0, false_negatives: 0 };
        let (m, sd) = aggregate(&[s(0.9), s(0.9), s(0.9)]).unwrap();
        assert_eq!((m, sd), (0.9, 0.0));
        let (m, sd) = aggregate(&[s(0.8), s(1.0)]).unwrap();
        assert!((m - 0.9).abs() < 1e-12);
        assert!((sd - (0.02f64).sqrt()).abs() < 1e-12);
        let (m, sd) = aggregate(&[s(0.7)]).unwrap();
        assert_eq!((m, sd), (0.7, 0.0));
        assert!(matches!(aggregate(&[]), Err(Error::Usage(_))));
    }
}
