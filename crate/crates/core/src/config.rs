//! Run configuration: `key = value` lines with `#` comments, every key
//! optional and typed.
//!
//! ```text
//! # small phantom run
//! seed = 3
//! grid.n = 24
//! segment.mode = bayes
//! ```

use std::collections::BTreeSet;
use std::str::FromStr;

use thiserror::Error;

use crate::aggregation::{FusionMode, VoterStats};
use crate::grading::{AdvancedFlag, GradingThresholds, Landmarks, Seeding, SurgicalFindings};
use crate::lpdmf::FilterParams;
use crate::micronet::{NetworkConfig, TrainConfig};
use crate::patcher::GridConfig;
use crate::phantom::PhantomSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{0}`")]
    TypeError(String),
    #[error("line {0} is not `key = value`")]
    MalformedLine(usize),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentConfig {
    pub stride: usize,
    pub margin: usize,
    pub mode: FusionMode,
    /// Voter stats shared by all nine grids in bayes mode.
    pub stats: VoterStats,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self { stride: 1, margin: 0, mode: FusionMode::Vote, stats: VoterStats::default() }
    }
}

/// Grading inputs that cannot be measured from a mask.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradeInputs {
    pub thresholds: GradingThresholds,
    pub subretinal_seeding: Seeding,
    pub vitreous_seeding: Seeding,
    pub flags: BTreeSet<AdvancedFlag>,
    pub findings: SurgicalFindings,
    pub landmarks: Landmarks,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub filter: FilterParams,
    pub grid: GridConfig,
    pub segment: SegmentConfig,
    pub net: NetworkConfig,
    pub train: TrainConfig,
    pub grade: GradeInputs,
    /// Depth used when a single plane is lifted to a volume.
    pub volume_depth: usize,
    pub phantom: PhantomSpec,
    /// Balanced patches drawn per training volume.
    pub patches_per_volume: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut c = Self {
            seed: 1,
            filter: FilterParams::default(),
            grid: GridConfig::default(),
            segment: SegmentConfig::default(),
            net: NetworkConfig::default(),
            train: TrainConfig::default(),
            grade: GradeInputs::default(),
            volume_depth: 64,
            phantom: PhantomSpec::default(),
            patches_per_volume: 200,
        };
        c.set_seed(1);
        c
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError::TypeError(key.to_string()))
}

fn parse_list<T: FromStr, const N: usize>(key: &str, v: &str) -> Result<[T; N], ConfigError> {
    let items: Vec<T> = v.split(',').map(|t| parse(key, t.trim())).collect::<Result<_, _>>()?;
    items.try_into().map_err(|_| ConfigError::TypeError(key.to_string()))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::TypeError(key.to_string())),
    }
}

/// Parses `x,y,z` or `none`.
pub fn parse_coord(key: &str, v: &str) -> Result<Option<[usize; 3]>, ConfigError> {
    if v == "none" {
        return Ok(None);
    }
    parse_list(key, v).map(Some)
}

/// Parses a comma list of advanced flag names, or `none`.
pub fn parse_flags(key: &str, v: &str) -> Result<BTreeSet<AdvancedFlag>, ConfigError> {
    if v == "none" || v.is_empty() {
        return Ok(BTreeSet::new());
    }
    v.split(',').map(|t| parse(key, t.trim())).collect()
}

impl RunConfig {
    /// Sets the network, training and phantom seeds together.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.net.seed = seed;
        self.train.seed = seed;
        self.phantom.seed = seed;
    }

    /// Network input shape implied by the grid settings.
    pub fn network(&self) -> NetworkConfig {
        NetworkConfig { input: [self.grid.n, self.grid.n, self.grid.slices], ..self.net }
    }

    fn set(&mut self, key: &str, v: &str, lp: &mut (usize, usize, f64, f64, f64)) -> Result<(), ConfigError> {
        match key {
            "seed" => self.set_seed(parse(key, v)?),
            "lpdmf.radius" => lp.0 = parse(key, v)?,
            "lpdmf.max_radius" => lp.1 = parse(key, v)?,
            "lpdmf.low_clip" => lp.2 = parse(key, v)?,
            "lpdmf.high_clip" => lp.3 = parse(key, v)?,
            "lpdmf.density_switch" => lp.4 = parse(key, v)?,
            "grid.n" => self.grid.n = parse(key, v)?,
            "grid.spacing" => self.grid.spacing = parse(key, v)?,
            "grid.slices" => self.grid.slices = parse(key, v)?,
            "grid.slice_step" => self.grid.slice_step = parse(key, v)?,
            "segment.stride" => self.segment.stride = parse(key, v)?,
            "segment.margin" => self.segment.margin = parse(key, v)?,
            "segment.mode" => self.segment.mode = parse(key, v)?,
            "segment.alpha" => self.segment.stats.alpha = parse(key, v)?,
            "segment.beta" => self.segment.stats.beta = parse(key, v)?,
            "net.classes" => self.net.classes = parse(key, v)?,
            "net.seed" => self.net.seed = parse(key, v)?,
            "train.learning_rate" => self.train.learning_rate = parse(key, v)?,
            "train.epochs" => self.train.epochs = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.momentum" => self.train.momentum = parse(key, v)?,
            "train.seed" => self.train.seed = parse(key, v)?,
            "train.patches_per_volume" => self.patches_per_volume = parse(key, v)?,
            "grade.max_diameter_mm" => self.grade.thresholds.max_diameter_mm = parse(key, v)?,
            "grade.min_disc_mm" => self.grade.thresholds.min_disc_mm = parse(key, v)?,
            "grade.min_fovea_mm" => self.grade.thresholds.min_fovea_mm = parse(key, v)?,
            "grade.subretinal_seeding" => self.grade.subretinal_seeding = parse(key, v)?,
            "grade.vitreous_seeding" => self.grade.vitreous_seeding = parse(key, v)?,
            "grade.flags" => self.grade.flags = parse_flags(key, v)?,
            "grade.disc" => self.grade.landmarks.disc = parse_coord(key, v)?,
            "grade.fovea" => self.grade.landmarks.fovea = parse_coord(key, v)?,
            "grade.enucleated" => self.grade.findings.enucleated = parse_bool(key, v)?,
            "grade.completely_resected" => self.grade.findings.completely_resected = parse_bool(key, v)?,
            "grade.microscopic_remnants" => self.grade.findings.microscopic_remnants = parse_bool(key, v)?,
            "grade.regional_extension" => self.grade.findings.regional_extension = parse_bool(key, v)?,
            "grade.metastasis" => self.grade.findings.metastasis = parse_bool(key, v)?,
            "volume.depth" => self.volume_depth = parse(key, v)?,
            "phantom.dims" => self.phantom.dims = parse_list(key, v)?,
            "phantom.spacing_mm" => self.phantom.spacing_mm = parse(key, v)?,
            "phantom.tumors" => self.phantom.tumor_count = parse(key, v)?,
            "phantom.diameter_min_mm" => self.phantom.diameter_range_mm.0 = parse(key, v)?,
            "phantom.diameter_max_mm" => self.phantom.diameter_range_mm.1 = parse(key, v)?,
            "phantom.texture" => self.phantom.texture = parse(key, v)?,
            "phantom.noise" => self.phantom.noise_density = parse(key, v)?,
            "phantom.seed" => self.phantom.seed = parse(key, v)?,
            "phantom.landmarks" => self.phantom.landmarks = parse_bool(key, v)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.grid.n == 0 || self.grid.slices == 0 || !(self.grid.spacing > 0.0) {
            return bad("grid.n, grid.slices and grid.spacing must be positive".into());
        }
        if self.segment.stride == 0 {
            return bad("segment.stride must be positive".into());
        }
        if let Err(e) = VoterStats::new(self.segment.stats.alpha, self.segment.stats.beta) {
            return bad(e.to_string());
        }
        if self.volume_depth == 0 {
            return bad("volume.depth must be positive".into());
        }
        Ok(())
    }
}

/// Parses configuration text. `seed` is applied before any per-module seed
/// key regardless of line order.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut entries = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::MalformedLine(n + 1))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::MalformedLine(n + 1));
        }
        entries.push((k, v));
    }
    entries.sort_by_key(|(k, _)| *k != "seed");
    let f = FilterParams::default();
    let mut lp = (f.window_radius(), f.max_radius(), f.low_clip(), f.high_clip(), f.density_switch());
    for (k, v) in entries {
        cfg.set(k, v, &mut lp)?;
    }
    cfg.filter = FilterParams::new(lp.0, lp.1, lp.2, lp.3, lp.4).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::Texture;

    #[test]
    fn empty_is_default() {
        assert_eq!(parse_config("").unwrap(), RunConfig::default());
        assert_eq!(parse_config("# only a comment\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn single_override() {
        let c = parse_config("lpdmf.radius = 2").unwrap();
        assert_eq!(c.filter.window_radius(), 2);
        assert_eq!(c.filter.max_radius(), 2);
        assert_eq!(c.grid, RunConfig::default().grid);
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(parse_config("lpdmf.radius = banana"), Err(ConfigError::TypeError("lpdmf.radius".into())));
        assert_eq!(parse_config("lpdmf.colour = 2"), Err(ConfigError::UnknownKey("lpdmf.colour".into())));
        assert_eq!(parse_config("grid.n 24"), Err(ConfigError::MalformedLine(1)));
        assert!(matches!(parse_config("lpdmf.radius = 3\nlpdmf.max_radius = 2"), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn typed_values() {
        let text = "segment.mode = bayes  # fused\n\
                    train.seed = 9\n\
                    seed = 4\n\
                    grade.disc = 1,2,3\n\
                    grade.flags = touches_lens, orbital_cellulitis\n\
                    grade.enucleated = true\n\
                    phantom.dims = 20,20,16\n\
                    phantom.texture = gradient\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.segment.mode, FusionMode::Bayes);
        assert_eq!((c.seed, c.net.seed, c.phantom.seed, c.train.seed), (4, 4, 4, 9));
        assert_eq!(c.grade.landmarks.disc, Some([1, 2, 3]));
        assert_eq!(c.grade.flags.len(), 2);
        assert!(c.grade.findings.enucleated);
        assert_eq!(c.phantom.dims, [20, 20, 16]);
        assert_eq!(c.phantom.texture, Texture::Gradient);
        assert_eq!(parse_config("grade.disc = 1,2"), Err(ConfigError::TypeError("grade.disc".into())));
    }
}
