//! Whole-volume orchestration: denoise, nine-grid patch classification,
//! fusion, grading and evaluation. Stages run in order and every failure
//! names its stage.

use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::aggregation::{fuse_scores, threshold_scores, VoterStats};
use crate::config::RunConfig;
use crate::grading::{grade, lesion_features, GradeReport};
use crate::imaging::{save_mask, save_volume, Mask, Volume};
use crate::lpdmf::denoise_volume;
use crate::metrics::{confusion, format_report, roc_curve};
use crate::micronet::{load_model, Model, NetError};
use crate::patcher::{enumerate_centers, sample_patch, GridConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Load,
    Denoise,
    Extract,
    Train,
    Segment,
    Grade,
    Evaluate,
    Phantom,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Load => "load",
            Stage::Denoise => "denoise",
            Stage::Extract => "extract",
            Stage::Train => "train",
            Stage::Segment => "segment",
            Stage::Grade => "grade",
            Stage::Evaluate => "evaluate",
            Stage::Phantom => "phantom",
            Stage::Write => "write",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{stage} stage failed: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, err: impl fmt::Display) -> Self {
        let message = err.to_string().replace('\n', " ");
        Self { stage, message }
    }
}

/// Map a module error into a stage error.
pub trait StageContext<T> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: fmt::Display> StageContext<T> for Result<T, E> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError::new(stage, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    /// Tumor probability per voxel for each of the nine grids.
    pub per_grid: Vec<Volume>,
    pub scores: Volume,
    pub mask: Mask,
}

fn nearest_lattice(x: usize, margin: usize, stride: usize, count: usize) -> usize {
    let k = (x.saturating_sub(margin) + stride / 2) / stride;
    k.min(count - 1)
}

/// Tumor probabilities from every grid at every centre of the
/// `stride`/`margin` lattice. Voxels off the lattice take the value of the
/// nearest centre on each axis.
pub fn grid_probabilities(
    vol: &Volume,
    model: &Model,
    grid: &GridConfig,
    stride: usize,
    margin: usize,
) -> Result<Vec<Volume>, NetError> {
    let want = [grid.n, grid.n, grid.slices];
    if model.input_shape() != want {
        return Err(NetError::ShapeMismatch(format!(
            "model expects {:?} patches, grid produces {want:?}",
            model.input_shape()
        )));
    }
    let dims = vol.dims();
    let stride = stride.max(1);
    let centers = enumerate_centers(dims, stride, margin);
    if centers.is_empty() {
        return Err(NetError::ShapeMismatch(format!("margin {margin} leaves no centres in {dims:?}")));
    }
    let probs: Vec<[f64; 9]> = centers
        .par_iter()
        .map(|c| {
            let grids = grid.grids_at(c.map(|v| v as f64));
            let mut p = [0.0; 9];
            for (slot, g) in p.iter_mut().zip(grids.iter()) {
                let patch = sample_patch(vol, g, grid.slices, grid.slice_step);
                *slot = model.predict(&patch)?[1];
            }
            Ok(p)
        })
        .collect::<Result<_, NetError>>()?;
    let counts = dims.map(|d| if 2 * margin >= d { 0 } else { (d - 2 * margin - 1) / stride + 1 });
    let mut out = vec![Vec::with_capacity(vol.len()); 9];
    for z in 0..dims[2] {
        let kz = nearest_lattice(z, margin, stride, counts[2]);
        for y in 0..dims[1] {
            let ky = nearest_lattice(y, margin, stride, counts[1]);
            for x in 0..dims[0] {
                let kx = nearest_lattice(x, margin, stride, counts[0]);
                let p = &probs[kx + counts[0] * (ky + counts[1] * kz)];
                for (g, v) in out.iter_mut().zip(p) {
                    g.push(v.clamp(0.0, 1.0));
                }
            }
        }
    }
    Ok(out
        .into_iter()
        .map(|v| Volume::new(dims, v, vol.spacing_mm()).expect("sized to the input volume"))
        .collect())
}

/// Classifies every voxel of `vol` (already denoised) with the nine grids and
/// fuses them.
pub fn segment_volume(
    vol: &Volume,
    model: &Model,
    cfg: &RunConfig,
    stats: &[VoterStats],
) -> Result<Segmentation, PipelineError> {
    let s = &cfg.segment;
    let per_grid = grid_probabilities(vol, model, &cfg.grid, s.stride, s.margin).stage(Stage::Segment)?;
    let scores = fuse_scores(&per_grid, stats, s.mode).stage(Stage::Segment)?;
    let mask = threshold_scores(&scores);
    Ok(Segmentation { per_grid, scores, mask })
}

pub fn grade_mask(mask: &Mask, spacing_mm: [f64; 3], cfg: &RunConfig) -> Result<GradeReport, PipelineError> {
    let g = &cfg.grade;
    let mut summary = lesion_features(mask, spacing_mm, &g.landmarks);
    summary.subretinal_seeding = g.subretinal_seeding;
    summary.vitreous_seeding = g.vitreous_seeding;
    summary.advanced_flags = g.flags.clone();
    grade(&summary, &g.findings, &g.thresholds).stage(Stage::Grade)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub denoised: Volume,
    pub segmentation: Segmentation,
    pub grade: GradeReport,
    /// Present when a reference mask was supplied.
    pub metrics: Option<String>,
}

impl PipelineOutput {
    /// Writes `mask.rbmask`, `grade.txt`, `metrics.txt` (with a reference)
    /// and, if asked, `denoised.rbvol` and `scores.rbvol` into `dir`.
    pub fn write(&self, dir: &Path, intermediates: bool) -> Result<(), PipelineError> {
        fs::create_dir_all(dir).stage(Stage::Write)?;
        save_mask(&self.segmentation.mask, dir.join("mask.rbmask")).stage(Stage::Write)?;
        fs::write(dir.join("grade.txt"), self.grade.to_text()).stage(Stage::Write)?;
        if let Some(m) = &self.metrics {
            fs::write(dir.join("metrics.txt"), m).stage(Stage::Write)?;
        }
        if intermediates {
            save_volume(&self.denoised, dir.join("denoised.rbvol")).stage(Stage::Write)?;
            save_volume(&self.segmentation.scores, dir.join("scores.rbvol")).stage(Stage::Write)?;
        }
        Ok(())
    }
}

/// Denoise, segment with the model at `model_path`, grade, and evaluate
/// against `truth` when given. Nothing is written.
pub fn run_pipeline(
    cfg: &RunConfig,
    input: &Volume,
    model_path: &Path,
    truth: Option<&Mask>,
) -> Result<PipelineOutput, PipelineError> {
    let denoised = denoise_volume(input, &cfg.filter);
    let model = load_model(model_path).stage(Stage::Segment)?;
    let stats = vec![cfg.segment.stats; 9];
    let segmentation = segment_volume(&denoised, &model, cfg, &stats)?;
    let grade = grade_mask(&segmentation.mask, input.spacing_mm(), cfg)?;
    let metrics = truth
        .map(|t| -> Result<String, PipelineError> {
            let c = confusion(t, &segmentation.mask).stage(Stage::Evaluate)?;
            let roc = roc_curve(&segmentation.scores, t).ok();
            Ok(format_report(&c, roc.as_ref()))
        })
        .transpose()?;
    Ok(PipelineOutput { denoised, segmentation, grade, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::micronet::{build_network, save_model};

    fn tiny_config() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.grid = GridConfig { n: 24, spacing: 1.0, slices: 1, slice_step: 1.0 };
        cfg.segment.stride = 3;
        cfg
    }

    #[test]
    fn lattice_fill() {
        // margin 1, stride 3 on a 10-voxel axis: centres 1, 4, 7
        let picks: Vec<usize> = (0..10).map(|x| nearest_lattice(x, 1, 3, 3)).collect();
        assert_eq!(picks, vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 2]);
    }

    #[test]
    fn missing_model_is_a_segment_error() {
        let vol = Volume::filled([6, 6, 6], 0.4, [1.0; 3]).unwrap();
        let err = run_pipeline(&tiny_config(), &vol, Path::new("/nonexistent/m.rbmodel"), None).unwrap_err();
        assert_eq!(err.stage, Stage::Segment);
        assert!(err.to_string().starts_with("segment stage failed:"));
    }

    #[test]
    fn runs_end_to_end_with_untrained_model() {
        let cfg = tiny_config();
        let dir = tempfile::tempdir().unwrap();
        let model = build_network(&cfg.network()).unwrap();
        let path = dir.path().join("m.rbmodel");
        save_model(&model, &path).unwrap();
        let vol = Volume::filled([6, 6, 6], 0.4, [1.0; 3]).unwrap();
        let truth = Mask::zeros([6, 6, 6]);
        let a = run_pipeline(&cfg, &vol, &path, Some(&truth)).unwrap();
        let b = run_pipeline(&cfg, &vol, &path, Some(&truth)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.segmentation.per_grid.len(), 9);
        assert!(a.metrics.as_ref().unwrap().contains("tp="));
        let out = dir.path().join("out");
        a.write(&out, true).unwrap();
        for f in ["mask.rbmask", "grade.txt", "metrics.txt", "denoised.rbvol", "scores.rbvol"] {
            assert!(out.join(f).exists(), "{f}");
        }
    }

    #[test]
    fn grid_shape_must_match_model() {
        let cfg = tiny_config();
        let model = build_network(&crate::micronet::NetworkConfig { input: [24, 24, 3], ..cfg.net }).unwrap();
        let vol = Volume::filled([4, 4, 4], 0.4, [1.0; 3]).unwrap();
        let err = segment_volume(&vol, &model, &cfg, &[]).unwrap_err();
        assert_eq!(err.stage, Stage::Segment);
    }
}
