//! Image and volume containers.
//!
//! Intensities are normalized to `[0, 1]` at the I/O boundary. Volumes and
//! masks are stored x-fastest: `index = x + nx * (y + ny * z)`.

mod files;
mod pnm;

pub use files::{load_mask, load_volume, save_mask, save_volume};
pub use pnm::{load_plane, read_plane, save_plane, write_plane};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported maxval {0}, only 255 is accepted")]
    UnsupportedMaxval(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("depth must be at least 1")]
    ZeroDepth,
    #[error("malformed mask file: {0}")]
    MalformedMaskFile(String),
    #[error("malformed volume file: {0}")]
    MalformedVolumeFile(String),
    #[error("invalid image: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, ImagingError>;

fn check_unit_range(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(i) => Err(ImagingError::Invalid(format!(
            "intensity {} at index {i} outside [0, 1]",
            values[i]
        ))),
        None => Ok(()),
    }
}

/// A single 2D intensity image with isotropic in-plane spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    spacing_mm: f64,
}

impl Plane {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>, spacing_mm: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(ImagingError::Invalid(format!("empty plane {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(ImagingError::DimMismatch(format!(
                "{width}x{height} plane needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if !(spacing_mm > 0.0 && spacing_mm.is_finite()) {
            return Err(ImagingError::Invalid(format!("spacing {spacing_mm} must be > 0")));
        }
        check_unit_range(&pixels)?;
        Ok(Self { width, height, pixels, spacing_mm })
    }

    pub fn filled(width: usize, height: usize, value: f64, spacing_mm: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height], spacing_mm)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spacing_mm(&self) -> f64 {
        self.spacing_mm
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub(crate) fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }
}

/// A 3D intensity grid with per-axis physical spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    voxels: Vec<f64>,
    spacing_mm: [f64; 3],
}

impl Volume {
    pub fn new(dims: [usize; 3], voxels: Vec<f64>, spacing_mm: [f64; 3]) -> Result<Self> {
        let len = dims.iter().product::<usize>();
        if voxels.len() != len {
            return Err(ImagingError::DimMismatch(format!(
                "{dims:?} volume needs {len} voxels, got {}",
                voxels.len()
            )));
        }
        if spacing_mm.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(ImagingError::Invalid(format!("spacing {spacing_mm:?} must be > 0")));
        }
        check_unit_range(&voxels)?;
        Ok(Self { dims, voxels, spacing_mm })
    }

    pub fn filled(dims: [usize; 3], value: f64, spacing_mm: [f64; 3]) -> Result<Self> {
        Self::new(dims, vec![value; dims.iter().product()], spacing_mm)
    }

    /// Stacks equally sized planes along z. The z spacing is taken from the
    /// in-plane spacing.
    pub fn from_slices(slices: &[Plane]) -> Result<Self> {
        let first = slices.first().ok_or(ImagingError::ZeroDepth)?;
        let (w, h) = (first.width, first.height);
        let mut voxels = Vec::with_capacity(w * h * slices.len());
        for s in slices {
            if s.width != w || s.height != h {
                return Err(ImagingError::DimMismatch(format!(
                    "slice {}x{} differs from {w}x{h}",
                    s.width, s.height
                )));
            }
            voxels.extend_from_slice(&s.pixels);
        }
        let sp = first.spacing_mm;
        Self::new([w, h, slices.len()], voxels, [sp, sp, sp])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn spacing_mm(&self) -> [f64; 3] {
        self.spacing_mm
    }

    pub fn voxels(&self) -> &[f64] {
        &self.voxels
    }

    pub(crate) fn voxels_mut(&mut self) -> &mut [f64] {
        &mut self.voxels
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.voxels[self.index(x, y, z)]
    }

    /// Voxel value with zero padding outside the grid.
    #[inline]
    pub fn get_padded(&self, x: i64, y: i64, z: i64) -> f64 {
        let [nx, ny, nz] = self.dims;
        if x < 0 || y < 0 || z < 0 || x >= nx as i64 || y >= ny as i64 || z >= nz as i64 {
            0.0
        } else {
            self.get(x as usize, y as usize, z as usize)
        }
    }

    pub fn slice_z(&self, z: usize) -> Plane {
        let [nx, ny, _] = self.dims;
        let start = nx * ny * z;
        Plane {
            width: nx,
            height: ny,
            pixels: self.voxels[start..start + nx * ny].to_vec(),
            spacing_mm: self.spacing_mm[0],
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.voxels
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Binary label volume, 1 = tumor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    dims: [usize; 3],
    labels: Vec<u8>,
}

impl Mask {
    pub fn new(dims: [usize; 3], labels: Vec<u8>) -> Result<Self> {
        let len = dims.iter().product::<usize>();
        if labels.len() != len {
            return Err(ImagingError::DimMismatch(format!(
                "{dims:?} mask needs {len} labels, got {}",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(ImagingError::MalformedMaskFile(format!("label {bad} is not 0 or 1")));
        }
        Ok(Self { dims, labels })
    }

    pub fn zeros(dims: [usize; 3]) -> Self {
        Self { dims, labels: vec![0; dims.iter().product()] }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.labels[self.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, on: bool) {
        let i = self.index(x, y, z);
        self.labels[i] = on as u8;
    }

    pub fn count_ones(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }
}

/// Mutable access to raw intensities, shared by planes and volumes.
pub trait Intensities {
    fn intensities(&self) -> &[f64];
    fn intensities_mut(&mut self) -> &mut [f64];
}

impl Intensities for Plane {
    fn intensities(&self) -> &[f64] {
        &self.pixels
    }
    fn intensities_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }
}

impl Intensities for Volume {
    fn intensities(&self) -> &[f64] {
        &self.voxels
    }
    fn intensities_mut(&mut self) -> &mut [f64] {
        &mut self.voxels
    }
}

/// Selects the green plane of an RGB triple. Kept as an explicit stage so
/// colour inputs pass through the same entry point as grey ones.
pub fn extract_green_channel(r: &Plane, g: &Plane, b: &Plane) -> Result<Plane> {
    let dims = |p: &Plane| (p.width, p.height);
    if dims(r) != dims(g) || dims(b) != dims(g) {
        return Err(ImagingError::DimMismatch(format!(
            "channels {:?}, {:?}, {:?} differ",
            dims(r),
            dims(g),
            dims(b)
        )));
    }
    Ok(g.clone())
}

/// Replicates a plane `depth` times along z.
pub fn lift_to_volume(p: &Plane, depth: usize) -> Result<Volume> {
    if depth == 0 {
        return Err(ImagingError::ZeroDepth);
    }
    let mut voxels = Vec::with_capacity(p.pixels.len() * depth);
    for _ in 0..depth {
        voxels.extend_from_slice(&p.pixels);
    }
    let s = p.spacing_mm;
    Volume::new([p.width, p.height, depth], voxels, [s, s, s])
}
