use std::fmt;

use crate::imaging::Volume;

pub type Vec3 = [f64; 3];

#[inline]
fn add_scaled(a: Vec3, b: Vec3, s: f64) -> Vec3 {
    [a[0] + b[0] * s, a[1] + b[1] * s, a[2] + b[2] * s]
}

#[inline]
pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlaneId {
    /// Perpendicular to the z axis.
    Xy,
    /// Perpendicular to the x axis.
    Yz,
    /// Perpendicular to the y axis.
    Xz,
}

impl PlaneId {
    pub const ALL: [PlaneId; 3] = [PlaneId::Xy, PlaneId::Yz, PlaneId::Xz];

    fn base_axes(self) -> (Vec3, Vec3) {
        match self {
            PlaneId::Xy => ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
            PlaneId::Yz => ([0.0, 1.0, 0.0], [0.0, 0.0, 1.0]),
            PlaneId::Xz => ([1.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
        }
    }
}

impl fmt::Display for PlaneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlaneId::Xy => "xy",
            PlaneId::Yz => "yz",
            PlaneId::Xz => "xz",
        })
    }
}

/// In-plane rotation applied to a base grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tilt {
    Zero,
    Minus45,
    Plus45,
}

impl Tilt {
    /// Grid order: untilted first, then −45°, then +45°.
    pub const ALL: [Tilt; 3] = [Tilt::Zero, Tilt::Minus45, Tilt::Plus45];

    pub fn degrees(self) -> f64 {
        match self {
            Tilt::Zero => 0.0,
            Tilt::Minus45 => -45.0,
            Tilt::Plus45 => 45.0,
        }
    }
}

/// An `n × n` planar lattice of sample points centred on `center`.
///
/// Sample `(i, j)` sits at `center + (i - n/2)·spacing·u + (j - n/2)·spacing·v`
/// (integer division), so the centre is itself a sample for every `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingGrid {
    pub center: Vec3,
    pub u_axis: Vec3,
    pub v_axis: Vec3,
    pub n: usize,
    pub spacing: f64,
    pub plane: PlaneId,
    pub tilt: Tilt,
}

impl SamplingGrid {
    pub fn new(center: Vec3, plane: PlaneId, tilt: Tilt, n: usize, spacing: f64) -> Self {
        let (u, v) = plane.base_axes();
        let (u_axis, v_axis) = match tilt {
            Tilt::Zero => (u, v),
            _ => {
                let (s, c) = tilt.degrees().to_radians().sin_cos();
                (
                    [c * u[0] + s * v[0], c * u[1] + s * v[1], c * u[2] + s * v[2]],
                    [-s * u[0] + c * v[0], -s * u[1] + c * v[1], -s * u[2] + c * v[2]],
                )
            }
        };
        Self { center, u_axis, v_axis, n, spacing, plane, tilt }
    }

    pub fn normal(&self) -> Vec3 {
        cross(self.u_axis, self.v_axis)
    }

    #[inline]
    fn offset(&self, i: usize) -> f64 {
        (i as f64 - (self.n / 2) as f64) * self.spacing
    }

    /// World position of sample `(i, j)`: `i` runs along `u`, `j` along `v`.
    #[inline]
    pub fn point(&self, i: usize, j: usize) -> Vec3 {
        add_scaled(add_scaled(self.center, self.u_axis, self.offset(i)), self.v_axis, self.offset(j))
    }

    /// The same grid shifted along its normal.
    pub fn displaced(&self, distance: f64) -> Self {
        Self { center: add_scaled(self.center, self.normal(), distance), ..*self }
    }

    pub fn contains_point(&self, p: Vec3, tol: f64) -> bool {
        (0..self.n).any(|j| {
            (0..self.n).any(|i| {
                let q = self.point(i, j);
                (0..3).all(|k| (q[k] - p[k]).abs() <= tol)
            })
        })
    }
}

/// The nine grids of one centre: for each tilt (0°, −45°, +45°) the XY, YZ and
/// XZ planes, in that order.
pub fn build_grids(center: Vec3, n: usize, spacing: f64) -> [SamplingGrid; 9] {
    let mut grids = [SamplingGrid::new(center, PlaneId::Xy, Tilt::Zero, n, spacing); 9];
    for (t, tilt) in Tilt::ALL.into_iter().enumerate() {
        for (p, plane) in PlaneId::ALL.into_iter().enumerate() {
            grids[t * 3 + p] = SamplingGrid::new(center, plane, tilt, n, spacing);
        }
    }
    grids
}

/// Zero-padded trilinear interpolation; voxel centres sit on integer coordinates.
#[inline]
pub fn trilinear(vol: &Volume, p: Vec3) -> f64 {
    let fx = p[0].floor();
    let fy = p[1].floor();
    let fz = p[2].floor();
    let (tx, ty, tz) = (p[0] - fx, p[1] - fy, p[2] - fz);
    let (x0, y0, z0) = (fx as i64, fy as i64, fz as i64);
    let [nx, ny, nz] = vol.dims();
    let interior = x0 >= 0
        && y0 >= 0
        && z0 >= 0
        && x0 + 1 < nx as i64
        && y0 + 1 < ny as i64
        && z0 + 1 < nz as i64;
    let corner = |dx: i64, dy: i64, dz: i64| -> f64 {
        if interior {
            vol.get((x0 + dx) as usize, (y0 + dy) as usize, (z0 + dz) as usize)
        } else {
            vol.get_padded(x0 + dx, y0 + dy, z0 + dz)
        }
    };
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    let c00 = lerp(corner(0, 0, 0), corner(1, 0, 0), tx);
    let c10 = lerp(corner(0, 1, 0), corner(1, 1, 0), tx);
    let c01 = lerp(corner(0, 0, 1), corner(1, 0, 1), tx);
    let c11 = lerp(corner(0, 1, 1), corner(1, 1, 1), tx);
    lerp(lerp(c00, c10, ty), lerp(c01, c11, ty), tz)
}

/// An `n × n × slices` stack, row-major with the slice index fastest, so it
/// can be fed directly as an `(h, w, c)` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub n: usize,
    pub slices: usize,
    pub data: Vec<f64>,
    pub provenance: Vec<SamplingGrid>,
    pub label: Option<u8>,
}

impl Patch {
    pub fn with_label(mut self, label: u8) -> Self {
        self.label = Some(label);
        self
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(j * self.n + i) * self.slices + k]
    }
}

/// Interpolates `slices` copies of `grid` displaced along its normal by
/// multiples of `slice_step`, centred on the grid plane.
pub fn sample_patch(vol: &Volume, grid: &SamplingGrid, slices: usize, slice_step: f64) -> Patch {
    let slices = slices.max(1);
    let half = (slices - 1) as f64 / 2.0;
    let provenance: Vec<SamplingGrid> = (0..slices)
        .map(|k| {
            if slices == 1 {
                *grid
            } else {
                grid.displaced((k as f64 - half) * slice_step)
            }
        })
        .collect();
    let n = grid.n;
    let mut data = vec![0.0; n * n * slices];
    for (k, g) in provenance.iter().enumerate() {
        for j in 0..n {
            for i in 0..n {
                data[(j * n + i) * slices + k] = trilinear(vol, g.point(i, j));
            }
        }
    }
    Patch { n, slices, data, provenance, label: None }
}

/// Lattice of centres `margin, margin + stride, …` strictly below `dim - margin`
/// on every axis, x-fastest.
pub fn enumerate_centers(dims: [usize; 3], stride: usize, margin: usize) -> Vec<[usize; 3]> {
    let stride = stride.max(1);
    let axis = |d: usize| -> Vec<usize> {
        if 2 * margin >= d {
            return Vec::new();
        }
        (margin..d - margin).step_by(stride).collect()
    };
    let (xs, ys, zs) = (axis(dims[0]), axis(dims[1]), axis(dims[2]));
    let mut out = Vec::with_capacity(xs.len() * ys.len() * zs.len());
    for &z in &zs {
        for &y in &ys {
            for &x in &xs {
                out.push([x, y, z]);
            }
        }
    }
    out
}
