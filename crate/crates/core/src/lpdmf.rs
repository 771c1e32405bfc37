//! Linear predictive decision-based median filter.
//!
//! Pixels at the intensity extremes are treated as impulses. Every other
//! pixel is copied through untouched. Each impulse is replaced by the lower
//! median of its window, where window positions already visited by the
//! row-major scan contribute their *output* values. Those substituted values
//! make each replacement draw on previously repaired neighbours instead of
//! their corrupted originals.
//!
//! A window is accepted when the fraction of still-noisy positions is at most
//! `density_switch`; otherwise it grows by one ring up to `max_radius`. If
//! the largest window is still too noisy, the median of its noise-free
//! original values is used, and if there are none the previous output pixel
//! stands in (0.5 at the very first pixel).

use thiserror::Error;

use crate::imaging::{Plane, Volume};

#[derive(Debug, Error, PartialEq)]
pub enum LpdmfError {
    #[error("median of an empty set")]
    EmptySet,
    #[error("invalid filter parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    window_radius: usize,
    max_radius: usize,
    low_clip: f64,
    high_clip: f64,
    density_switch: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self { window_radius: 1, max_radius: 2, low_clip: 0.0, high_clip: 1.0, density_switch: 0.5 }
    }
}

impl FilterParams {
    pub fn new(
        window_radius: usize,
        max_radius: usize,
        low_clip: f64,
        high_clip: f64,
        density_switch: f64,
    ) -> Result<Self, LpdmfError> {
        if !(1 <= window_radius && window_radius <= max_radius && max_radius <= 3) {
            return Err(LpdmfError::InvalidParams(format!(
                "need 1 <= radius ({window_radius}) <= max_radius ({max_radius}) <= 3"
            )));
        }
        if !(0.0 <= low_clip && low_clip < high_clip && high_clip <= 1.0) {
            return Err(LpdmfError::InvalidParams(format!(
                "need 0 <= low_clip ({low_clip}) < high_clip ({high_clip}) <= 1"
            )));
        }
        if !(density_switch > 0.0 && density_switch <= 1.0) {
            return Err(LpdmfError::InvalidParams(format!(
                "density_switch {density_switch} outside (0, 1]"
            )));
        }
        Ok(Self { window_radius, max_radius, low_clip, high_clip, density_switch })
    }

    pub fn window_radius(&self) -> usize {
        self.window_radius
    }

    pub fn max_radius(&self) -> usize {
        self.max_radius
    }

    pub fn density_switch(&self) -> f64 {
        self.density_switch
    }

    pub fn low_clip(&self) -> f64 {
        self.low_clip
    }

    pub fn high_clip(&self) -> f64 {
        self.high_clip
    }

    #[inline]
    pub fn is_impulse(&self, v: f64) -> bool {
        v <= self.low_clip || v >= self.high_clip
    }
}

/// Salt-and-pepper detector: true at or beyond either clip level.
pub fn detect_impulse(v: f64, params: &FilterParams) -> bool {
    params.is_impulse(v)
}

/// Lower median, always a member of `values`.
pub fn median_of(values: &[f64]) -> Result<f64, LpdmfError> {
    if values.is_empty() {
        return Err(LpdmfError::EmptySet);
    }
    let mut buf = values.to_vec();
    Ok(lower_median_in_place(&mut buf))
}

fn lower_median_in_place(buf: &mut [f64]) -> f64 {
    let k = (buf.len() - 1) / 2;
    *buf.select_nth_unstable_by(k, f64::total_cmp).1
}

pub fn denoise(p: &Plane, params: &FilterParams) -> Plane {
    let mut out = p.clone();
    denoise_into(p.pixels(), p.width(), p.height(), params, out.pixels_mut());
    out
}

/// Applies [`denoise`] independently to every z-slice.
pub fn denoise_volume(v: &Volume, params: &FilterParams) -> Volume {
    let [nx, ny, nz] = v.dims();
    let mut out = v.clone();
    let area = nx * ny;
    let dst = out.voxels_mut();
    for z in 0..nz {
        let src = &v.voxels()[z * area..(z + 1) * area];
        denoise_into(src, nx, ny, params, &mut dst[z * area..(z + 1) * area]);
    }
    out
}

fn denoise_into(src: &[f64], w: usize, h: usize, params: &FilterParams, out: &mut [f64]) {
    out.copy_from_slice(src);
    let side = 2 * params.max_radius + 1;
    let mut candidates = Vec::with_capacity(side * side);
    let mut clean = Vec::with_capacity(side * side);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !params.is_impulse(src[i]) {
                continue;
            }
            out[i] = replacement(src, out, w, h, x, y, params, &mut candidates, &mut clean)
                .unwrap_or(if i > 0 { out[i - 1] } else { 0.5 });
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn replacement(
    src: &[f64],
    out: &[f64],
    w: usize,
    h: usize,
    x: usize,
    y: usize,
    params: &FilterParams,
    candidates: &mut Vec<f64>,
    clean: &mut Vec<f64>,
) -> Option<f64> {
    let i = y * w + x;
    for r in params.window_radius..=params.max_radius {
        candidates.clear();
        clean.clear();
        let mut noisy = 0usize;
        let mut total = 0usize;
        for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
            for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                let j = yy * w + xx;
                total += 1;
                if !params.is_impulse(src[j]) {
                    candidates.push(src[j]);
                    clean.push(src[j]);
                } else if j < i {
                    candidates.push(out[j]);
                } else {
                    noisy += 1;
                }
            }
        }
        let density = noisy as f64 / total as f64;
        if density <= params.density_switch && !candidates.is_empty() {
            return Some(lower_median_in_place(candidates));
        }
        if r == params.max_radius {
            if !clean.is_empty() {
                return Some(lower_median_in_place(clean));
            }
            if !candidates.is_empty() {
                return Some(lower_median_in_place(candidates));
            }
        }
    }
    None
}

/// Peak signal-to-noise ratio for unit-range images; `+inf` for identical inputs.
pub fn psnr(a: &Plane, b: &Plane) -> Result<f64, LpdmfError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(LpdmfError::DimMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let mse = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.pixels().len() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (1.0 / mse).log10() })
}
