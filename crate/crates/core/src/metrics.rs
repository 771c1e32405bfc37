//! Voxelwise evaluation against a reference mask: confusion counts,
//! sensitivity/specificity/accuracy and ROC with trapezoidal AUC.

use std::fmt::Write as _;

use thiserror::Error;

use crate::imaging::{Mask, Volume};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("{0} is undefined: zero denominator")]
    UndefinedMetric(&'static str),
    #[error("truth mask must contain both classes")]
    SingleClassTruth,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Tallies one (truth, prediction) pair; nonzero labels count as tumor.
    pub fn record(&mut self, truth: u8, pred: u8) {
        match (truth != 0, pred != 0) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
            (false, true) => self.fp += 1,
        }
    }

    pub fn merge(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts { tp: self.tp + o.tp, tn: self.tn + o.tn, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_ }
    }
}

/// Counts `g` (reference) against `y` (prediction).
pub fn confusion(g: &Mask, y: &Mask) -> Result<ConfusionCounts, MetricsError> {
    if g.dims() != y.dims() {
        return Err(MetricsError::DimMismatch(format!("{:?} vs {:?}", g.dims(), y.dims())));
    }
    let mut c = ConfusionCounts::default();
    for (&t, &p) in g.labels().iter().zip(y.labels()) {
        c.record(t, p);
    }
    Ok(c)
}

fn ratio(num: usize, den: usize, name: &'static str) -> Result<f64, MetricsError> {
    if den == 0 {
        Err(MetricsError::UndefinedMetric(name))
    } else {
        Ok(num as f64 / den as f64)
    }
}

pub fn sensitivity(c: &ConfusionCounts) -> Result<f64, MetricsError> {
    ratio(c.tp, c.tp + c.fn_, "sensitivity")
}

pub fn specificity(c: &ConfusionCounts) -> Result<f64, MetricsError> {
    ratio(c.tn, c.tn + c.fp, "specificity")
}

pub fn accuracy(c: &ConfusionCounts) -> Result<f64, MetricsError> {
    ratio(c.tp + c.tn, c.total(), "accuracy")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC over raw score/label slices. A voxel is called positive when its
/// score is at least the threshold; thresholds run from `+∞` through every
/// distinct score (descending) to `-∞`.
pub fn roc_from_scores(scores: &[f64], truth: &[u8]) -> Result<RocCurve, MetricsError> {
    if scores.len() != truth.len() {
        return Err(MetricsError::DimMismatch(format!("{} scores vs {} labels", scores.len(), truth.len())));
    }
    let pos = truth.iter().filter(|&&t| t != 0).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClassTruth);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut k = 0;
    while k < order.len() {
        let t = scores[order[k]];
        while k < order.len() && scores[order[k]] == t {
            if truth[order[k]] != 0 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        let (x0, y0) = *points.last().expect("starts non-empty");
        let (x1, y1) = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        auc += (x1 - x0) * (y0 + y1) / 2.0;
        points.push((x1, y1));
    }
    // the -inf sentinel lands on (1, 1), already reached by the last group
    points.push((1.0, 1.0));
    Ok(RocCurve { points, auc })
}

pub fn roc_curve(scores: &Volume, truth: &Mask) -> Result<RocCurve, MetricsError> {
    if scores.dims() != truth.dims() {
        return Err(MetricsError::DimMismatch(format!("{:?} vs {:?}", scores.dims(), truth.dims())));
    }
    roc_from_scores(scores.voxels(), truth.labels())
}

/// Plain-text `metric=value` report. Rates are undefined-safe.
pub fn format_report(c: &ConfusionCounts, roc: Option<&RocCurve>) -> String {
    let mut out = String::new();
    for (k, v) in [("tp", c.tp), ("tn", c.tn), ("fp", c.fp), ("fn", c.fn_)] {
        let _ = writeln!(out, "{k}={v}");
    }
    let rates = [("sensitivity", sensitivity(c)), ("specificity", specificity(c)), ("accuracy", accuracy(c))];
    for (k, v) in rates {
        match v {
            Ok(v) => {
                let _ = writeln!(out, "{k}={v:.6}");
            }
            Err(_) => {
                let _ = writeln!(out, "{k}=undefined");
            }
        }
    }
    if let Some(r) = roc {
        let _ = writeln!(out, "auc={:.6}", r.auc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask(labels: &[u8]) -> Mask {
        Mask::new([labels.len(), 1, 1], labels.to_vec()).unwrap()
    }

    fn mann_whitney(scores: &[f64], truth: &[u8]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if truth[i] == 1 && truth[j] == 0 {
                    pairs += 1.0;
                    if si > sj {
                        wins += 1.0;
                    } else if si == sj {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn pseudocode_examples() {
        let c = confusion(&mask(&[0, 0, 0, 0]), &mask(&[0, 0, 0, 0])).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 0, tn: 4, fp: 0, fn_: 0 });
        let c = confusion(&mask(&[1, 1, 0, 0]), &mask(&[1, 0, 0, 1])).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 1, tn: 1, fp: 1, fn_: 1 });
        assert!(matches!(confusion(&mask(&[0]), &mask(&[0, 0])), Err(MetricsError::DimMismatch(_))));
    }

    #[test]
    fn random_cube_tally() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g: Vec<u8> = (0..4096).map(|_| rng.gen_range(0..2)).collect();
        let y: Vec<u8> = (0..4096).map(|_| rng.gen_range(0..2)).collect();
        let c = confusion(&Mask::new([16; 3], g.clone()).unwrap(), &Mask::new([16; 3], y.clone()).unwrap()).unwrap();
        let mut tally = [[0usize; 2]; 2];
        for (a, b) in g.iter().zip(&y) {
            tally[*a as usize][*b as usize] += 1;
        }
        assert_eq!((c.tn, c.fp, c.fn_, c.tp), (tally[0][0], tally[0][1], tally[1][0], tally[1][1]));
        assert_eq!(c.total(), 4096);
    }

    #[test]
    fn rate_examples() {
        let c = ConfusionCounts { tp: 2, tn: 2, fp: 1, fn_: 1 };
        assert!((sensitivity(&c).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((specificity(&c).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((accuracy(&c).unwrap() - 4.0 / 6.0).abs() < 1e-15);
        let perfect = confusion(&mask(&[1, 0, 1]), &mask(&[1, 0, 1])).unwrap();
        assert_eq!([sensitivity(&perfect), specificity(&perfect), accuracy(&perfect)], [Ok(1.0), Ok(1.0), Ok(1.0)]);
        let none = ConfusionCounts { tp: 0, tn: 3, fp: 0, fn_: 0 };
        assert_eq!(sensitivity(&none), Err(MetricsError::UndefinedMetric("sensitivity")));
    }

    #[test]
    fn roc_examples() {
        let r = roc_from_scores(&[0.9, 0.1], &[1, 0]).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(r.points.last(), Some(&(1.0, 1.0)));
        let r = roc_from_scores(&[0.4; 6], &[1, 0, 1, 0, 0, 1]).unwrap();
        assert_eq!(r.auc, 0.5);
        assert_eq!(roc_from_scores(&[0.3, 0.2], &[1, 1]), Err(MetricsError::SingleClassTruth));
    }

    #[test]
    fn auc_matches_pair_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.gen_range(2..60);
            // coarse scores so ties occur
            let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..12) as f64) / 11.0).collect();
            let mut truth: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            truth[0] = 0;
            truth[1] = 1;
            let r = roc_from_scores(&scores, &truth).unwrap();
            assert!((r.auc - mann_whitney(&scores, &truth)).abs() < 1e-9);
        }
    }

    #[test]
    fn report_lines() {
        let c = ConfusionCounts { tp: 2, tn: 2, fp: 1, fn_: 1 };
        let text = format_report(&c, None);
        assert!(text.contains("fn=1\n"));
        assert!(text.contains("sensitivity=0.666667\n"));
        let text = format_report(&ConfusionCounts { tn: 1, ..Default::default() }, None);
        assert!(text.contains("sensitivity=undefined\n"));
    }

    fn pair() -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
        (1usize..64).prop_flat_map(|n| (prop::collection::vec(0u8..2, n), prop::collection::vec(0u8..2, n)))
    }

    proptest! {
        #[test]
        fn swap_exchanges_errors((g, y) in pair()) {
            let a = confusion(&mask(&g), &mask(&y)).unwrap();
            let b = confusion(&mask(&y), &mask(&g)).unwrap();
            prop_assert_eq!(a.total(), g.len());
            prop_assert_eq!((a.tp, a.tn, a.fp, a.fn_), (b.tp, b.tn, b.fn_, b.fp));
            let acc = accuracy(&a).unwrap();
            prop_assert!((0.0..=1.0).contains(&acc));
            prop_assert_eq!(acc == 1.0, g == y);
        }

        #[test]
        fn roc_is_monotone_and_inverts(scores in prop::collection::vec(0.0f64..1.0, 2..40), seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut truth: Vec<u8> = scores.iter().map(|_| rng.gen_range(0..2)).collect();
            truth[0] = 0;
            truth[1] = 1;
            let r = roc_from_scores(&scores, &truth).unwrap();
            for w in r.points.windows(2) {
                prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
            }
            let inverted: Vec<f64> = scores.iter().map(|s| -s).collect();
            let ri = roc_from_scores(&inverted, &truth).unwrap();
            prop_assert!((ri.auc - (1.0 - r.auc)).abs() < 1e-12);
        }
    }
}
