//! Synthetic volumes with exactly known tumor masks, landmarks and lesion
//! summaries, plus impulse corruption and balanced patch sampling.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grading::{AdvancedFlag, Landmarks, LesionSummary, Seeding};
use crate::imaging::{Intensities, Mask, Volume};
use crate::patcher::{sample_patch, GridConfig, Patch, PlaneId, SamplingGrid, Tilt};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhantomError {
    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),
    #[error("could not place tumor {0} after 1000 attempts")]
    UnplaceableTumor(usize),
    #[error("volume {index} has no {class} voxels to sample")]
    InsufficientClassVoxels { index: usize, class: &'static str },
}

const MAX_ATTEMPTS: usize = 1000;
const BACKGROUND: (f64, f64) = (0.2, 0.6);
/// Tumor brightness stays under the impulse level of 1.0.
const TUMOR: (f64, f64) = (0.8, 0.95);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Texture {
    Flat,
    Gradient,
    /// Smoothly interpolated random lattice values.
    ValueNoise,
}

impl FromStr for Texture {
    type Err = PhantomError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flat" => Ok(Texture::Flat),
            "gradient" => Ok(Texture::Gradient),
            "value-noise" | "value_noise" => Ok(Texture::ValueNoise),
            other => Err(PhantomError::InvalidSpec(format!("unknown texture `{other}`"))),
        }
    }
}

impl fmt::Display for Texture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Texture::Flat => "flat",
            Texture::Gradient => "gradient",
            Texture::ValueNoise => "value-noise",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing_mm: f64,
    pub tumor_count: usize,
    pub diameter_range_mm: (f64, f64),
    pub texture: Texture,
    pub noise_density: f64,
    pub seed: u64,
    /// Ground-truth labels copied into the summary.
    pub subretinal_seeding: Seeding,
    pub vitreous_seeding: Seeding,
    pub advanced_flags: BTreeSet<AdvancedFlag>,
    /// Place optic disc and fovea landmarks.
    pub landmarks: bool,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            dims: [64, 64, 64],
            spacing_mm: 0.5,
            tumor_count: 2,
            diameter_range_mm: (3.0, 6.0),
            texture: Texture::ValueNoise,
            noise_density: 0.2,
            seed: 7,
            subretinal_seeding: Seeding::None,
            vitreous_seeding: Seeding::None,
            advanced_flags: BTreeSet::new(),
            landmarks: true,
        }
    }
}

impl PhantomSpec {
    fn validate(&self) -> Result<(), PhantomError> {
        let (lo, hi) = self.diameter_range_mm;
        let bad = |m: String| Err(PhantomError::InvalidSpec(m));
        if self.dims.contains(&0) {
            return bad(format!("dims {:?} must be positive", self.dims));
        }
        if !(self.spacing_mm > 0.0 && self.spacing_mm.is_finite()) {
            return bad(format!("spacing {} must be positive", self.spacing_mm));
        }
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("diameter range ({lo}, {hi}) must satisfy 0 < lo <= hi"));
        }
        if !(0.0..1.0).contains(&self.noise_density) {
            return bad(format!("noise density {} outside [0, 1)", self.noise_density));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomTruth {
    /// Noisy volume.
    pub volume: Volume,
    pub mask: Mask,
    pub summary: LesionSummary,
    pub clean_volume: Volume,
    pub landmarks: Landmarks,
}

impl PhantomTruth {
    pub fn report(&self) -> String {
        let coord = |c: Option<[usize; 3]>| match c {
            Some([x, y, z]) => format!("{x},{y},{z}"),
            None => "none".to_string(),
        };
        let [nx, ny, nz] = self.mask.dims();
        format!(
            "dims={nx},{ny},{nz}\ntumor_voxels={}\ndisc={}\nfovea={}\n{}",
            self.mask.count_ones(),
            coord(self.landmarks.disc),
            coord(self.landmarks.fovea),
            self.summary.to_text()
        )
    }
}

struct Ellipsoid {
    center: [usize; 3],
    /// Semi-axes in voxels.
    semi: [f64; 3],
}

impl Ellipsoid {
    fn contains(&self, p: [usize; 3]) -> bool {
        (0..3)
            .map(|a| ((p[a] as f64 - self.center[a] as f64) / self.semi[a]).powi(2))
            .sum::<f64>()
            <= 1.0
    }

    fn radius(&self) -> f64 {
        self.semi.iter().cloned().fold(0.0, f64::max)
    }
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn background(spec: &PhantomSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let [nx, ny, nz] = spec.dims;
    let (lo, hi) = BACKGROUND;
    let n = nx * ny * nz;
    match spec.texture {
        Texture::Flat => vec![(lo + hi) / 2.0; n],
        Texture::Gradient => {
            let span = (nx + ny + nz).saturating_sub(3).max(1) as f64;
            (0..n)
                .map(|i| {
                    let (x, y, z) = (i % nx, (i / nx) % ny, i / (nx * ny));
                    lo + (hi - lo) * (x + y + z) as f64 / span
                })
                .collect()
        }
        Texture::ValueNoise => {
            const CELL: usize = 6;
            let lattice = |d: usize| d / CELL + 2;
            let (lx, ly, lz) = (lattice(nx), lattice(ny), lattice(nz));
            let values: Vec<f64> = (0..lx * ly * lz).map(|_| rng.gen_range(lo..hi)).collect();
            let at = |x: usize, y: usize, z: usize| values[x + lx * (y + ly * z)];
            (0..n)
                .map(|i| {
                    let p = [i % nx, (i / nx) % ny, i / (nx * ny)];
                    let cell = p.map(|c| c / CELL);
                    let t = p.map(|c| smoothstep((c % CELL) as f64 / CELL as f64));
                    let mut v = 0.0;
                    for corner in 0..8 {
                        let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
                        let w: f64 = (0..3).map(|a| if o[a] == 1 { t[a] } else { 1.0 - t[a] }).product();
                        v += w * at(cell[0] + o[0], cell[1] + o[1], cell[2] + o[2]);
                    }
                    v
                })
                .collect()
        }
    }
}

fn place_tumors(spec: &PhantomSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Ellipsoid>, PhantomError> {
    let (lo, hi) = spec.diameter_range_mm;
    // keep distinct tumors out of each other's 6-neighbourhood
    let gap = 1.5;
    let mut placed: Vec<Ellipsoid> = Vec::with_capacity(spec.tumor_count);
    for t in 0..spec.tumor_count {
        let diameter = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
        let r = diameter / spec.spacing_mm / 2.0;
        let mut semi = [r; 3];
        // one axis keeps the full diameter, the others shrink a little
        let long = rng.gen_range(0..3);
        for (a, s) in semi.iter_mut().enumerate() {
            if a != long {
                *s = r * rng.gen_range(0.75..=1.0);
            }
        }
        let mut found = None;
        for _ in 0..MAX_ATTEMPTS {
            let mut center = [0usize; 3];
            let mut fits = true;
            for a in 0..3 {
                let reach = semi[a].floor() as usize;
                if 2 * reach + 1 > spec.dims[a] {
                    fits = false;
                    break;
                }
                center[a] = rng.gen_range(reach..spec.dims[a] - reach);
            }
            if !fits {
                break;
            }
            let candidate = Ellipsoid { center, semi };
            let clear = placed.iter().all(|e| {
                let d2: f64 = (0..3).map(|a| (e.center[a] as f64 - center[a] as f64).powi(2)).sum();
                d2.sqrt() > e.radius() + candidate.radius() + gap
            });
            if clear {
                found = Some(candidate);
                break;
            }
        }
        placed.push(found.ok_or(PhantomError::UnplaceableTumor(t))?);
    }
    Ok(placed)
}

fn fixed_landmarks(dims: [usize; 3]) -> Landmarks {
    let [nx, ny, nz] = dims;
    Landmarks { disc: Some([nx / 4, ny / 2, nz / 2]), fovea: Some([(3 * nx) / 5, ny / 2, nz / 2]) }
}

/// Deterministic phantom for `spec`.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<PhantomTruth, PhantomError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut voxels = background(spec, &mut rng);
    let tumors = place_tumors(spec, &mut rng)?;
    let [nx, ny, _] = spec.dims;
    let s = spec.spacing_mm;
    let mut mask = Mask::zeros(spec.dims);
    let landmarks = if spec.landmarks { fixed_landmarks(spec.dims) } else { Landmarks::default() };
    let mut summary = LesionSummary {
        components: tumors.len(),
        subretinal_seeding: spec.subretinal_seeding,
        vitreous_seeding: spec.vitreous_seeding,
        advanced_flags: spec.advanced_flags.clone(),
        ..Default::default()
    };
    let dist = |p: [usize; 3], lm: Option<[usize; 3]>| match lm {
        Some(q) => (0..3).map(|a| (p[a] as f64 - q[a] as f64).powi(2)).sum::<f64>().sqrt() * s,
        None => f64::INFINITY,
    };
    for e in &tumors {
        let level = rng.gen_range(TUMOR.0..TUMOR.1);
        let lo = (0..3).map(|a| e.center[a].saturating_sub(e.semi[a].ceil() as usize)).collect::<Vec<_>>();
        let hi = (0..3).map(|a| (e.center[a] + e.semi[a].ceil() as usize).min(spec.dims[a] - 1)).collect::<Vec<_>>();
        let (mut min, mut max) = ([usize::MAX; 3], [0usize; 3]);
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    let p = [x, y, z];
                    if !e.contains(p) {
                        continue;
                    }
                    mask.set(x, y, z, true);
                    voxels[x + nx * (y + ny * z)] = level;
                    for a in 0..3 {
                        min[a] = min[a].min(p[a]);
                        max[a] = max[a].max(p[a]);
                    }
                    summary.dist_to_disc_mm = summary.dist_to_disc_mm.min(dist(p, landmarks.disc));
                    summary.dist_to_fovea_mm = summary.dist_to_fovea_mm.min(dist(p, landmarks.fovea));
                }
            }
        }
        let extent = (0..3).map(|a| (max[a] - min[a] + 1) as f64 * s).fold(0.0, f64::max);
        summary.max_diameter_mm = summary.max_diameter_mm.max(extent);
        let dx = e.center[0] as f64 - (nx as f64 - 1.0) / 2.0;
        let dy = e.center[1] as f64 - (ny as f64 - 1.0) / 2.0;
        let q = match (dx >= 0.0, dy >= 0.0) {
            (true, true) => 0,
            (false, true) => 1,
            (false, false) => 2,
            (true, false) => 3,
        };
        summary.quadrant_counts[q] += 1;
    }
    let clean_volume = Volume::new(spec.dims, voxels, [s; 3]).expect("voxels sized to dims");
    let volume = add_impulse_noise(&clean_volume, spec.noise_density, spec.seed ^ 0x5eed_0f_1a11);
    Ok(PhantomTruth { volume, mask, summary, clean_volume, landmarks })
}

/// Copy of `img` with a seeded `density` fraction of samples forced to 0 or 1,
/// and the flags of the samples that were selected.
pub fn add_impulse_noise_tracked<T: Intensities + Clone>(img: &T, density: f64, seed: u64) -> (T, Vec<bool>) {
    let mut out = img.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hit = vec![false; out.intensities().len()];
    for (v, h) in out.intensities_mut().iter_mut().zip(hit.iter_mut()) {
        if rng.gen::<f64>() < density {
            *v = if rng.gen::<bool>() { 1.0 } else { 0.0 };
            *h = true;
        }
    }
    (out, hit)
}

pub fn add_impulse_noise<T: Intensities + Clone>(img: &T, density: f64, seed: u64) -> T {
    add_impulse_noise_tracked(img, density, seed).0
}

fn balanced_into(
    volume: &Volume,
    mask: &Mask,
    index: usize,
    per_volume: usize,
    grid: &GridConfig,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<Patch>,
) -> Result<(), PhantomError> {
    let labels = mask.labels();
    let tumor: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != 0).collect();
    let back: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    if tumor.is_empty() {
        return Err(PhantomError::InsufficientClassVoxels { index, class: "tumor" });
    }
    if back.is_empty() {
        return Err(PhantomError::InsufficientClassVoxels { index, class: "background" });
    }
    let positives = per_volume / 2;
    for (count, pool, label) in [(positives, &tumor, 1u8), (per_volume - positives, &back, 0u8)] {
        for _ in 0..count {
            let i = *pool.choose(rng).expect("pool checked non-empty");
            let c = mask.coords(i).map(|v| v as f64);
            let g = SamplingGrid::new(c, PlaneId::Xy, Tilt::Zero, grid.n, grid.spacing);
            out.push(sample_patch(volume, &g, grid.slices, grid.slice_step).with_label(label));
        }
    }
    Ok(())
}

fn check_per_volume(per_volume: usize) -> Result<(), PhantomError> {
    if per_volume < 2 {
        return Err(PhantomError::InvalidSpec(format!("per_volume {per_volume} must be at least 2")));
    }
    Ok(())
}

/// Balanced labelled patches from one volume and its mask, cut on the
/// untilted XY grid: `per_volume / 2` tumor-centred patches first, then the
/// rest from background.
pub fn sample_balanced_patches(
    volume: &Volume,
    mask: &Mask,
    per_volume: usize,
    grid: &GridConfig,
    seed: u64,
) -> Result<Vec<Patch>, PhantomError> {
    check_per_volume(per_volume)?;
    let mut out = Vec::with_capacity(per_volume);
    balanced_into(volume, mask, 0, per_volume, grid, &mut ChaCha8Rng::seed_from_u64(seed), &mut out)?;
    Ok(out)
}

/// [`sample_balanced_patches`] over each truth's `volume`, in order, from a
/// single seeded stream.
pub fn make_patch_dataset(
    truths: &[PhantomTruth],
    per_volume: usize,
    grid: &GridConfig,
    seed: u64,
) -> Result<Vec<Patch>, PhantomError> {
    check_per_volume(per_volume)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(truths.len() * per_volume);
    for (index, t) in truths.iter().enumerate() {
        balanced_into(&t.volume, &t.mask, index, per_volume, grid, &mut rng, &mut out)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grading::lesion_features;
    use crate::imaging::Plane;

    fn small(tumors: usize, seed: u64) -> PhantomSpec {
        PhantomSpec { dims: [24, 24, 24], tumor_count: tumors, seed, ..Default::default() }
    }

    #[test]
    fn no_tumors() {
        let t = generate_phantom(&small(0, 1)).unwrap();
        assert_eq!(t.mask.count_ones(), 0);
        assert_eq!(t.summary.max_diameter_mm, 0.0);
        assert_eq!(t.summary.components, 0);
    }

    #[test]
    fn single_tumor_extent() {
        let spec = PhantomSpec {
            spacing_mm: 1.0,
            diameter_range_mm: (4.0, 4.0),
            ..small(1, 3)
        };
        let t = generate_phantom(&spec).unwrap();
        let s = lesion_features(&t.mask, [1.0; 3], &t.landmarks);
        assert_eq!(s.components, 1);
        assert!((s.max_diameter_mm - 4.0).abs() <= 1.0, "extent {}", s.max_diameter_mm);
    }

    #[test]
    fn deterministic() {
        let a = generate_phantom(&small(2, 5)).unwrap();
        let b = generate_phantom(&small(2, 5)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_phantom(&small(2, 6)).unwrap());
    }

    #[test]
    fn intensity_ranges_and_painting() {
        for texture in [Texture::Flat, Texture::Gradient, Texture::ValueNoise] {
            let t = generate_phantom(&PhantomSpec { texture, ..small(2, 8) }).unwrap();
            for (i, &v) in t.clean_volume.voxels().iter().enumerate() {
                if t.mask.labels()[i] == 1 {
                    assert!((0.8..1.0).contains(&v));
                } else {
                    assert!((0.2..=0.6).contains(&v), "{texture} background {v}");
                }
            }
        }
    }

    #[test]
    fn summary_agrees_with_measurement() {
        for seed in 0..10 {
            let t = generate_phantom(&PhantomSpec { tumor_count: 3, ..small(3, seed) }).unwrap();
            let s = lesion_features(&t.mask, [0.5; 3], &t.landmarks);
            assert_eq!(s.components, t.summary.components);
            assert!((s.max_diameter_mm - t.summary.max_diameter_mm).abs() <= 0.5);
            assert_eq!(s.quadrant_counts.iter().sum::<usize>(), 3);
            assert!((s.dist_to_disc_mm - t.summary.dist_to_disc_mm).abs() < 1e-12);
        }
    }

    #[test]
    fn crowded_volume_fails_cleanly() {
        let spec = PhantomSpec { dims: [8, 8, 8], tumor_count: 20, diameter_range_mm: (2.0, 2.0), ..small(0, 1) };
        assert!(matches!(generate_phantom(&spec), Err(PhantomError::UnplaceableTumor(_))));
        let spec = PhantomSpec { noise_density: 1.0, ..small(1, 1) };
        assert!(matches!(generate_phantom(&spec), Err(PhantomError::InvalidSpec(_))));
    }

    #[test]
    fn impulse_noise() {
        let p = Plane::filled(100, 100, 0.5, 1.0).unwrap();
        assert_eq!(add_impulse_noise(&p, 0.0, 1), p);
        let (noisy, hit) = add_impulse_noise_tracked(&p, 0.3, 2);
        let changed = noisy.pixels().iter().filter(|&&v| v != 0.5).count();
        assert!((2800..=3200).contains(&changed), "{changed}");
        assert_eq!(changed, hit.iter().filter(|&&h| h).count());
        for (v, h) in noisy.pixels().iter().zip(&hit) {
            if *h {
                assert!(*v == 0.0 || *v == 1.0);
            } else {
                assert_eq!(*v, 0.5);
            }
        }
    }

    #[test]
    fn balanced_dataset() {
        let t = generate_phantom(&small(1, 4)).unwrap();
        let grid = GridConfig { n: 8, slices: 3, ..Default::default() };
        let ps = make_patch_dataset(std::slice::from_ref(&t), 10, &grid, 1).unwrap();
        assert_eq!(ps.len(), 10);
        assert_eq!(ps.iter().filter(|p| p.label == Some(1)).count(), 5);
        for p in ps.iter().filter(|p| p.label == Some(1)) {
            let c = p.provenance[1].center;
            let v = c.map(|x| x.round() as usize);
            assert_eq!(t.mask.get(v[0], v[1], v[2]), 1);
        }
        assert_eq!(ps, make_patch_dataset(std::slice::from_ref(&t), 10, &grid, 1).unwrap());
        let empty = generate_phantom(&small(0, 4)).unwrap();
        assert!(matches!(
            make_patch_dataset(&[empty], 4, &grid, 1),
            Err(PhantomError::InsufficientClassVoxels { index: 0, class: "tumor" })
        ));
    }
}
