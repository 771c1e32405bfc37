//! Fusion of the nine per-grid tumor probabilities into one voxel label.
//!
//! `vote` mode thresholds the mean of the raw probabilities. `bayes` mode
//! first passes every probability through its grid's sensitivity/specificity
//! weighting `αx / (αx + β(1 − x))` and then thresholds the mean of the fused
//! values. Both modes label tumor only on a strict majority (`> 0.5`).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::imaging::{Mask, Volume};

#[derive(Debug, Error, PartialEq)]
pub enum AggregationError {
    #[error("no votes to aggregate")]
    EmptyVotes,
    #[error("vote {0} outside [0, 1]")]
    VoteOutOfRange(f64),
    #[error("fusion denominator vanished (alpha={alpha}, beta={beta}, x={x})")]
    DegenerateDenominator { alpha: f64, beta: f64, x: f64 },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("invalid voter statistics: {0}")]
    InvalidStats(String),
    #[error("unknown fusion mode {0:?} (expected vote or bayes)")]
    UnknownMode(String),
}

/// Sensitivity (`alpha`) and specificity (`beta`) of one voter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoterStats {
    pub alpha: f64,
    pub beta: f64,
}

impl VoterStats {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, AggregationError> {
        if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&beta) {
            return Err(AggregationError::InvalidStats(format!("alpha={alpha}, beta={beta}")));
        }
        Ok(Self { alpha, beta })
    }
}

impl Default for VoterStats {
    fn default() -> Self {
        Self { alpha: 0.9, beta: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    Vote,
    Bayes,
}

impl FromStr for FusionMode {
    type Err = AggregationError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vote" => Ok(FusionMode::Vote),
            "bayes" => Ok(FusionMode::Bayes),
            other => Err(AggregationError::UnknownMode(other.to_string())),
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionMode::Vote => "vote",
            FusionMode::Bayes => "bayes",
        })
    }
}

/// Per-voter tumor probabilities for one voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelVotes {
    pub x: Vec<f64>,
    pub stats: Option<Vec<VoterStats>>,
}

/// Arithmetic mean of the votes, summed in sorted order so the result does
/// not depend on voter order.
pub fn mean_vote(votes: &[f64]) -> Result<f64, AggregationError> {
    if votes.is_empty() {
        return Err(AggregationError::EmptyVotes);
    }
    if let Some(&v) = votes.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(AggregationError::VoteOutOfRange(v));
    }
    let mut sorted = votes.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(sorted.iter().sum::<f64>() / votes.len() as f64)
}

/// 1 on a strict majority. A mean of exactly 0.5 stays background.
pub fn majority_label(alpha: f64) -> u8 {
    (alpha > 0.5) as u8
}

pub fn bayes_fuse(stats: VoterStats, x: f64) -> Result<f64, AggregationError> {
    let num = stats.alpha * x;
    let den = num + stats.beta * (1.0 - x);
    if den == 0.0 {
        return Err(AggregationError::DegenerateDenominator { alpha: stats.alpha, beta: stats.beta, x });
    }
    Ok(num / den)
}

impl VoxelVotes {
    /// Fused score of this voxel under `mode`. Vote mode hardens each voter
    /// at 0.5 and returns the fraction voting tumor; bayes mode averages the
    /// fused probabilities. Missing stats default to [`VoterStats::default`].
    pub fn score(&self, mode: FusionMode) -> Result<f64, AggregationError> {
        match mode {
            FusionMode::Vote => {
                mean_vote(&self.x)?;
                let hard: Vec<f64> = self.x.iter().map(|&x| majority_label(x) as f64).collect();
                mean_vote(&hard)
            }
            FusionMode::Bayes => {
                if let Some(s) = &self.stats {
                    if s.len() != self.x.len() {
                        return Err(AggregationError::DimMismatch(format!(
                            "{} votes but {} voter stats",
                            self.x.len(),
                            s.len()
                        )));
                    }
                }
                mean_vote(&self.x)?;
                let fused = self
                    .x
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| {
                        let st = self.stats.as_ref().map_or(VoterStats::default(), |s| s[i]);
                        bayes_fuse(st, x)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                mean_vote(&fused)
            }
        }
    }

    pub fn label(&self, mode: FusionMode) -> Result<u8, AggregationError> {
        Ok(majority_label(self.score(mode)?))
    }
}

/// Per-voxel fused scores of several probability volumes. `stats` pairs with
/// `per_grid` by position; an empty slice means default stats for every grid.
pub fn fuse_scores(
    per_grid: &[Volume],
    stats: &[VoterStats],
    mode: FusionMode,
) -> Result<Volume, AggregationError> {
    let first = per_grid.first().ok_or(AggregationError::EmptyVotes)?;
    let dims = first.dims();
    if let Some(v) = per_grid.iter().find(|v| v.dims() != dims) {
        return Err(AggregationError::DimMismatch(format!("{:?} vs {dims:?}", v.dims())));
    }
    if !stats.is_empty() && stats.len() != per_grid.len() {
        return Err(AggregationError::DimMismatch(format!(
            "{} volumes but {} voter stats",
            per_grid.len(),
            stats.len()
        )));
    }
    let voter_stats = (!stats.is_empty()).then(|| stats.to_vec());
    let scores = (0..first.len())
        .into_par_iter()
        .map(|i| {
            let votes = VoxelVotes { x: per_grid.iter().map(|v| v.voxels()[i]).collect(), stats: voter_stats.clone() };
            votes.score(mode)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Volume::new(dims, scores, first.spacing_mm())
        .map_err(|e| AggregationError::DimMismatch(e.to_string()))
}

pub fn threshold_scores(scores: &Volume) -> Mask {
    let labels = scores.voxels().iter().map(|&s| majority_label(s)).collect();
    Mask::new(scores.dims(), labels).expect("labels are binary and sized to the volume")
}

pub fn aggregate_segmentation(
    per_grid: &[Volume],
    stats: &[VoterStats],
    mode: FusionMode,
) -> Result<Mask, AggregationError> {
    Ok(threshold_scores(&fuse_scores(per_grid, stats, mode)?))
}

/// Measures each grid's sensitivity and specificity at the 0.5 threshold
/// against a reference mask. Undefined rates (a class absent from `truth`)
/// fall back to the default of 0.9.
pub fn calibrate_stats(per_grid: &[Volume], truth: &Mask) -> Result<Vec<VoterStats>, AggregationError> {
    per_grid
        .iter()
        .map(|v| {
            if v.dims() != truth.dims() {
                return Err(AggregationError::DimMismatch(format!("{:?} vs {:?}", v.dims(), truth.dims())));
            }
            let (mut tp, mut tn, mut fp, mut fneg) = (0usize, 0usize, 0usize, 0usize);
            for (&p, &g) in v.voxels().iter().zip(truth.labels()) {
                match (g, majority_label(p)) {
                    (1, 1) => tp += 1,
                    (1, _) => fneg += 1,
                    (_, 1) => fp += 1,
                    _ => tn += 1,
                }
            }
            let rate = |num: usize, den: usize| if den == 0 { 0.9 } else { num as f64 / den as f64 };
            VoterStats::new(rate(tp, tp + fneg), rate(tn, tn + fp))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vol(values: Vec<f64>, dims: [usize; 3]) -> Volume {
        Volume::new(dims, values, [1.0; 3]).unwrap()
    }

    #[test]
    fn mean_votes() {
        assert!((mean_vote(&[1.0, 1.0, 0.0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(mean_vote(&[0.5]).unwrap(), 0.5);
        assert_eq!(mean_vote(&[]), Err(AggregationError::EmptyVotes));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..9).map(|_| rng.gen()).collect();
        let mut direct = 0.0;
        for v in &x {
            direct += v;
        }
        assert!((mean_vote(&x).unwrap() - direct / 9.0).abs() < 1e-12);
    }

    #[test]
    fn majority_threshold() {
        assert_eq!(majority_label(0.66), 1);
        assert_eq!(majority_label(0.5), 0);
        assert_eq!(majority_label(0.0), 0);
    }

    #[test]
    fn fusion_values() {
        let s = VoterStats::new(0.9, 0.9).unwrap();
        assert!((bayes_fuse(s, 0.5).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(bayes_fuse(VoterStats::new(0.3, 0.7).unwrap(), 1.0).unwrap(), 1.0);
        let v = bayes_fuse(VoterStats::new(0.8, 0.6).unwrap(), 0.5).unwrap();
        assert!((v - 4.0 / 7.0).abs() < 1e-15);
        assert!(matches!(
            bayes_fuse(VoterStats::new(0.0, 0.5).unwrap(), 1.0),
            Err(AggregationError::DegenerateDenominator { .. })
        ));
        assert!(VoterStats::new(1.2, 0.5).is_err());
    }

    #[test]
    fn unanimous_and_split_votes() {
        let ones: Vec<Volume> = (0..9).map(|_| vol(vec![1.0], [1, 1, 1])).collect();
        assert_eq!(aggregate_segmentation(&ones, &[], FusionMode::Vote).unwrap().labels(), &[1]);
        assert_eq!(aggregate_segmentation(&ones, &[], FusionMode::Bayes).unwrap().labels(), &[1]);
        let split: Vec<Volume> = (0..9).map(|i| vol(vec![if i < 5 { 1.0 } else { 0.0 }], [1, 1, 1])).collect();
        assert_eq!(aggregate_segmentation(&split, &[], FusionMode::Vote).unwrap().labels(), &[1]);
    }

    #[test]
    fn vote_mode_counts_hard_votes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let vols: Vec<Volume> = (0..9).map(|_| vol((0..64).map(|_| rng.gen()).collect(), [4, 4, 4])).collect();
        let mask = aggregate_segmentation(&vols, &[], FusionMode::Vote).unwrap();
        for i in 0..64 {
            let count = vols.iter().filter(|v| v.voxels()[i] > 0.5).count();
            assert_eq!(mask.labels()[i], (count > 4) as u8);
        }
        let x = vec![1.0, 1.0, 1.0, 1.0, 0.4, 0.4, 0.4, 0.4, 0.8];
        let v = VoxelVotes { x, stats: None };
        assert_eq!(v.score(FusionMode::Vote).unwrap(), 5.0 / 9.0);
    }

    #[test]
    fn dimension_errors() {
        let a = vol(vec![0.0; 2], [2, 1, 1]);
        let b = vol(vec![0.0; 2], [1, 2, 1]);
        assert!(matches!(aggregate_segmentation(&[a.clone(), b], &[], FusionMode::Vote), Err(AggregationError::DimMismatch(_))));
        assert!(matches!(aggregate_segmentation(&[], &[], FusionMode::Vote), Err(AggregationError::EmptyVotes)));
        assert!(matches!(
            aggregate_segmentation(&[a], &[VoterStats::default(); 2], FusionMode::Bayes),
            Err(AggregationError::DimMismatch(_))
        ));
    }

    #[test]
    fn calibration_measures_rates() {
        let truth = Mask::new([4, 1, 1], vec![1, 1, 0, 0]).unwrap();
        let pred = vol(vec![0.9, 0.2, 0.1, 0.7], [4, 1, 1]);
        let s = calibrate_stats(&[pred], &truth).unwrap();
        assert_eq!(s, vec![VoterStats { alpha: 0.5, beta: 0.5 }]);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("vote".parse::<FusionMode>().unwrap(), FusionMode::Vote);
        assert_eq!("bayes".parse::<FusionMode>().unwrap(), FusionMode::Bayes);
        assert!("median".parse::<FusionMode>().is_err());
    }

    proptest! {
        #[test]
        fn equal_rates_make_fusion_identity(a in 0.01f64..=1.0, x in 0.0f64..=1.0) {
            let s = VoterStats::new(a, a).unwrap();
            prop_assert!((bayes_fuse(s, x).unwrap() - x).abs() <= 1e-12);
        }

        #[test]
        fn fusion_is_monotone(a in 0.01f64..=1.0, b in 0.01f64..=1.0, x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
            let s = VoterStats::new(a, b).unwrap();
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            prop_assert!(bayes_fuse(s, lo).unwrap() <= bayes_fuse(s, hi).unwrap() + 1e-15);
        }

        #[test]
        fn permutation_invariant(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vols: Vec<Volume> = (0..9).map(|_| vol((0..8).map(|_| rng.gen()).collect(), [2, 2, 2])).collect();
            let stats: Vec<VoterStats> = (0..9).map(|_| VoterStats::new(rng.gen_range(0.5..1.0), rng.gen_range(0.5..1.0)).unwrap()).collect();
            let mut idx: Vec<usize> = (0..9).collect();
            idx.reverse();
            idx.swap(0, 4);
            let pv: Vec<Volume> = idx.iter().map(|&i| vols[i].clone()).collect();
            let ps: Vec<VoterStats> = idx.iter().map(|&i| stats[i]).collect();
            for mode in [FusionMode::Vote, FusionMode::Bayes] {
                let a = aggregate_segmentation(&vols, &stats, mode).unwrap();
                let b = aggregate_segmentation(&pv, &ps, mode).unwrap();
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn binary_votes_match_counting(bits in proptest::collection::vec(0u8..2, 1..12)) {
            let x: Vec<f64> = bits.iter().map(|&b| b as f64).collect();
            let count = bits.iter().filter(|&&b| b == 1).count();
            let expect = (2 * count > bits.len()) as u8;
            prop_assert_eq!(majority_label(mean_vote(&x).unwrap()), expect);
        }
    }
}
