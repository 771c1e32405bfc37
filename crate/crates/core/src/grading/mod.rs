//! Rule engine for retinoblastoma grouping (A–E), staging (0–IV) and
//! treatment, plus the mask measurements it consumes.

mod features;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use features::{label_components, lesion_features, Component, Landmarks};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradingError {
    #[error("inconsistent surgical findings: {0}")]
    InconsistentFindings(String),
    #[error("unknown {kind} `{value}`")]
    UnknownValue { kind: &'static str, value: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Seeding {
    #[default]
    None,
    Focal,
    Diffuse,
}

impl FromStr for Seeding {
    type Err = GradingError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Seeding::None),
            "focal" => Ok(Seeding::Focal),
            "diffuse" => Ok(Seeding::Diffuse),
            other => Err(GradingError::UnknownValue { kind: "seeding", value: other.to_string() }),
        }
    }
}

impl fmt::Display for Seeding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Seeding::None => "none",
            Seeding::Focal => "focal",
            Seeding::Diffuse => "diffuse",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AdvancedFlag {
    TouchesLens,
    NeovascularGlaucoma,
    OrbitalCellulitis,
    IntraocularHemorrhage,
    DiffuseInfiltrating,
}

impl AdvancedFlag {
    pub const ALL: [AdvancedFlag; 5] = [
        AdvancedFlag::TouchesLens,
        AdvancedFlag::NeovascularGlaucoma,
        AdvancedFlag::OrbitalCellulitis,
        AdvancedFlag::IntraocularHemorrhage,
        AdvancedFlag::DiffuseInfiltrating,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AdvancedFlag::TouchesLens => "touches_lens",
            AdvancedFlag::NeovascularGlaucoma => "neovascular_glaucoma",
            AdvancedFlag::OrbitalCellulitis => "orbital_cellulitis",
            AdvancedFlag::IntraocularHemorrhage => "intraocular_hemorrhage",
            AdvancedFlag::DiffuseInfiltrating => "diffuse_infiltrating",
        }
    }
}

impl FromStr for AdvancedFlag {
    type Err = GradingError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AdvancedFlag::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| GradingError::UnknownValue { kind: "advanced flag", value: s.to_string() })
    }
}

impl fmt::Display for AdvancedFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Measured and externally supplied lesion features.
#[derive(Debug, Clone, PartialEq)]
pub struct LesionSummary {
    /// Number of connected lesion components.
    pub components: usize,
    pub max_diameter_mm: f64,
    /// Components per quadrant, counted from their centroids: `+x+y`, `-x+y`,
    /// `-x-y`, `+x-y` relative to the volume centre.
    pub quadrant_counts: [usize; 4],
    pub subretinal_seeding: Seeding,
    pub vitreous_seeding: Seeding,
    /// `f64::INFINITY` when the landmark is unknown.
    pub dist_to_disc_mm: f64,
    pub dist_to_fovea_mm: f64,
    pub advanced_flags: BTreeSet<AdvancedFlag>,
}

impl Default for LesionSummary {
    fn default() -> Self {
        Self {
            components: 0,
            max_diameter_mm: 0.0,
            quadrant_counts: [0; 4],
            subretinal_seeding: Seeding::None,
            vitreous_seeding: Seeding::None,
            dist_to_disc_mm: f64::INFINITY,
            dist_to_fovea_mm: f64::INFINITY,
            advanced_flags: BTreeSet::new(),
        }
    }
}

impl LesionSummary {
    fn worst_seeding(&self) -> Seeding {
        self.subretinal_seeding.max(self.vitreous_seeding)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SurgicalFindings {
    pub enucleated: bool,
    pub completely_resected: bool,
    pub microscopic_remnants: bool,
    pub regional_extension: bool,
    pub metastasis: bool,
}

impl SurgicalFindings {
    pub fn validate(&self) -> Result<(), GradingError> {
        if self.completely_resected && self.microscopic_remnants {
            return Err(GradingError::InconsistentFindings(
                "complete resection and microscopic remnants are exclusive".into(),
            ));
        }
        if (self.completely_resected || self.microscopic_remnants) && !self.enucleated {
            return Err(GradingError::InconsistentFindings("resection findings require enucleation".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Group {
    A,
    B,
    C,
    D,
    E,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    S0,
    I,
    II,
    III,
    IV,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::S0 => f.write_str("0"),
            other => write!(f, "{other:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Treatment {
    FocalTherapy,
    Chemotherapy,
    Enucleation,
}

impl fmt::Display for Treatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Group A limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradingThresholds {
    pub max_diameter_mm: f64,
    pub min_disc_mm: f64,
    pub min_fovea_mm: f64,
}

impl Default for GradingThresholds {
    fn default() -> Self {
        Self { max_diameter_mm: 3.0, min_disc_mm: 1.5, min_fovea_mm: 3.0 }
    }
}

/// First matching group rule, most severe first, with the identifier of the
/// rule that matched.
pub fn assign_group_with_rule(s: &LesionSummary, t: &GradingThresholds) -> (Group, String) {
    if !s.advanced_flags.is_empty() {
        let names: Vec<&str> = s.advanced_flags.iter().map(|f| f.name()).collect();
        return (Group::E, format!("group_e_advanced({})", names.join("+")));
    }
    match s.worst_seeding() {
        Seeding::Diffuse => return (Group::D, "group_d_diffuse_seeding".into()),
        Seeding::Focal => return (Group::C, "group_c_focal_seeding".into()),
        Seeding::None => {}
    }
    if s.max_diameter_mm < t.max_diameter_mm && s.dist_to_disc_mm >= t.min_disc_mm && s.dist_to_fovea_mm >= t.min_fovea_mm
    {
        let rule = format!(
            "group_a_small_isolated(diameter<{}mm,disc>={}mm,fovea>={}mm)",
            t.max_diameter_mm, t.min_disc_mm, t.min_fovea_mm
        );
        return (Group::A, rule);
    }
    (Group::B, "group_b_no_seeding".into())
}

pub fn assign_group(s: &LesionSummary, t: &GradingThresholds) -> Group {
    assign_group_with_rule(s, t).0
}

pub fn assign_stage_with_rule(f: &SurgicalFindings) -> Result<(Stage, &'static str), GradingError> {
    f.validate()?;
    Ok(if f.metastasis {
        (Stage::IV, "stage_iv_metastasis")
    } else if f.regional_extension {
        (Stage::III, "stage_iii_regional_extension")
    } else if f.enucleated && f.microscopic_remnants {
        (Stage::II, "stage_ii_microscopic_remnants")
    } else if f.enucleated && f.completely_resected {
        (Stage::I, "stage_i_completely_resected")
    } else {
        (Stage::S0, "stage_0_not_enucleated")
    })
}

pub fn assign_stage(f: &SurgicalFindings) -> Result<Stage, GradingError> {
    Ok(assign_stage_with_rule(f)?.0)
}

pub fn recommend_treatment(g: Group) -> Treatment {
    match g {
        Group::A => Treatment::FocalTherapy,
        Group::B | Group::C | Group::D => Treatment::Chemotherapy,
        Group::E => Treatment::Enucleation,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradeReport {
    /// `None` when the mask holds no lesion.
    pub group: Option<Group>,
    pub stage: Stage,
    pub treatment: Option<Treatment>,
    pub rationale: Vec<String>,
    pub summary: LesionSummary,
}

pub fn grade(
    summary: &LesionSummary,
    findings: &SurgicalFindings,
    thresholds: &GradingThresholds,
) -> Result<GradeReport, GradingError> {
    let mut rationale = Vec::new();
    let (group, treatment) = if summary.components == 0 {
        rationale.push("group_none_no_lesion".to_string());
        (None, None)
    } else {
        let (g, rule) = assign_group_with_rule(summary, thresholds);
        rationale.push(rule);
        (Some(g), Some(recommend_treatment(g)))
    };
    let (stage, rule) = assign_stage_with_rule(findings)?;
    rationale.push(rule.to_string());
    Ok(GradeReport { group, stage, treatment, rationale, summary: summary.clone() })
}

fn dist_text(d: f64) -> String {
    if d.is_finite() {
        format!("{d:.6}")
    } else {
        "inf".to_string()
    }
}

impl LesionSummary {
    /// `key=value` lines for the measured and supplied features.
    pub fn to_text(&self) -> String {
        let flags: Vec<&str> = self.advanced_flags.iter().map(|f| f.name()).collect();
        let q = self.quadrant_counts;
        [
            format!("components={}", self.components),
            format!("max_diameter_mm={:.6}", self.max_diameter_mm),
            format!("quadrants={},{},{},{}", q[0], q[1], q[2], q[3]),
            format!("subretinal_seeding={}", self.subretinal_seeding),
            format!("vitreous_seeding={}", self.vitreous_seeding),
            format!("dist_to_disc_mm={}", dist_text(self.dist_to_disc_mm)),
            format!("dist_to_fovea_mm={}", dist_text(self.dist_to_fovea_mm)),
            format!("advanced_flags={}", if flags.is_empty() { "none".to_string() } else { flags.join(",") }),
        ]
        .iter()
        .map(|l| format!("{l}\n"))
        .collect()
    }
}

impl GradeReport {
    /// `key=value` lines: the grade, fired rules, then the lesion summary.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".to_string());
        let mut out = format!(
            "group={}\nstage={}\ntreatment={}\nrules={}\n",
            opt(self.group.map(|g| g.to_string())),
            self.stage,
            opt(self.treatment.map(|t| t.to_string())),
            self.rationale.join(";")
        );
        out.push_str(&self.summary.to_text());
        out
    }
}
