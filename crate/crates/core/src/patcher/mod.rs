//! Multi-view patch extraction: spiral sphere sampling, nine oriented
//! sampling grids per centre, and trilinear slice stacks.

mod archive;
mod grid;
mod sphere;

pub use archive::{
    decode_patches, encode_patches, load_patches, save_patches, ArchiveError, UNLABELED,
};
pub use grid::{
    build_grids, enumerate_centers, sample_patch, trilinear, Patch, PlaneId, SamplingGrid, Tilt,
    Vec3,
};
pub use sphere::{sphere_point_count, sphere_point_count_closed, spiral_points, SpherePoint};

/// How patches are cut around a centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    /// Side length of each grid in samples.
    pub n: usize,
    /// Distance between neighbouring samples, in voxels.
    pub spacing: f64,
    /// Slices stacked along the grid normal.
    pub slices: usize,
    pub slice_step: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n: 64, spacing: 1.0, slices: 9, slice_step: 1.0 }
    }
}

impl GridConfig {
    pub fn grids_at(&self, center: Vec3) -> [SamplingGrid; 9] {
        build_grids(center, self.n, self.spacing)
    }
}
