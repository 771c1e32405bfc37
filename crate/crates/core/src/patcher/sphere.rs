//! Spiral sampling of the unit sphere.
//!
//! A spiral wound from pole to pole has the same length as the stack of
//! horizontal circles it crosses, so the number of surface samples is the sum
//! of circle circumferences `sum_{a=0..n} 2N |sin(a*pi/n)|`, which tends to
//! `4N^2 / pi` when `n = N` grows.

use std::f64::consts::{PI, TAU};

/// 2π(1 − 1/φ), the latitude advance between consecutive circles.
const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePoint {
    /// Azimuth in `[0, 2π)`.
    pub latitude: f64,
    /// Polar angle in `[0, π]`.
    pub longitude: f64,
    pub position: [f64; 3],
}

/// Discrete circle-sum count of surface samples for `n` circles of scale `big_n`.
pub fn sphere_point_count(big_n: usize, n: usize) -> f64 {
    let scale = 2.0 * big_n as f64;
    (0..=n)
        .map(|a| scale * (a as f64 * PI / n as f64).sin().abs())
        .sum()
}

/// Limit of [`sphere_point_count`] with `n = big_n`: `4N^2 / π`.
pub fn sphere_point_count_closed(big_n: usize) -> f64 {
    4.0 * (big_n as f64).powi(2) / PI
}

/// Number of points placed on circle `a` of `big_n`.
fn circle_points(big_n: usize, a: usize) -> usize {
    (2.0 * big_n as f64 * (a as f64 * PI / big_n as f64).sin().abs()).round() as usize
}

pub fn spiral_points(big_n: usize) -> Vec<SpherePoint> {
    let mut out = Vec::new();
    for a in 0..=big_n {
        let count = circle_points(big_n, a);
        if count == 0 {
            continue;
        }
        let longitude = a as f64 * PI / big_n as f64;
        let start = (a as f64 * GOLDEN_ANGLE).rem_euclid(TAU);
        let (st, ct) = longitude.sin_cos();
        for k in 0..count {
            let latitude = (start + TAU * k as f64 / count as f64).rem_euclid(TAU);
            let (sp, cp) = latitude.sin_cos();
            out.push(SpherePoint { latitude, longitude, position: [st * cp, st * sp, ct] });
        }
    }
    out
}
