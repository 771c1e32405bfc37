use std::collections::VecDeque;

use super::LesionSummary;
use crate::imaging::Mask;

/// Optional landmark voxel coordinates.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Landmarks {
    pub disc: Option<[usize; 3]>,
    pub fovea: Option<[usize; 3]>,
}

/// One 6-connected set of foreground voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub voxels: Vec<usize>,
    pub min: [usize; 3],
    pub max: [usize; 3],
    pub centroid: [f64; 3],
}

/// 6-connected components in scan order of their first voxel.
pub fn label_components(mask: &Mask) -> Vec<Component> {
    let [nx, ny, nz] = mask.dims();
    let labels = mask.labels();
    let mut seen = vec![false; labels.len()];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..labels.len() {
        if labels[start] == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut voxels = Vec::new();
        while let Some(i) = queue.pop_front() {
            voxels.push(i);
            let [x, y, z] = mask.coords(i);
            let mut visit = |j: usize| {
                if labels[j] != 0 && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < nx {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - nx);
            }
            if y + 1 < ny {
                visit(i + nx);
            }
            if z > 0 {
                visit(i - nx * ny);
            }
            if z + 1 < nz {
                visit(i + nx * ny);
            }
        }
        voxels.sort_unstable();
        let mut min = [usize::MAX; 3];
        let mut max = [0usize; 3];
        let mut sum = [0.0; 3];
        for &i in &voxels {
            let c = mask.coords(i);
            for a in 0..3 {
                min[a] = min[a].min(c[a]);
                max[a] = max[a].max(c[a]);
                sum[a] += c[a] as f64;
            }
        }
        let n = voxels.len() as f64;
        out.push(Component { voxels, min, max, centroid: sum.map(|s| s / n) });
    }
    out
}

fn quadrant(centroid: [f64; 3], dims: [usize; 3]) -> usize {
    let dx = centroid[0] - (dims[0] as f64 - 1.0) / 2.0;
    let dy = centroid[1] - (dims[1] as f64 - 1.0) / 2.0;
    match (dx >= 0.0, dy >= 0.0) {
        (true, true) => 0,
        (false, true) => 1,
        (false, false) => 2,
        (true, false) => 3,
    }
}

/// Component count, largest bounding-box extent, quadrant tallies and the
/// distance from the nearest lesion voxel to each landmark. Seeding and
/// advanced flags are left at their defaults.
pub fn lesion_features(mask: &Mask, spacing_mm: [f64; 3], landmarks: &Landmarks) -> LesionSummary {
    let comps = label_components(mask);
    let mut s = LesionSummary { components: comps.len(), ..Default::default() };
    for c in &comps {
        let extent = (0..3).map(|a| (c.max[a] - c.min[a] + 1) as f64 * spacing_mm[a]).fold(0.0, f64::max);
        s.max_diameter_mm = s.max_diameter_mm.max(extent);
        s.quadrant_counts[quadrant(c.centroid, mask.dims())] += 1;
    }
    let nearest = |lm: Option<[usize; 3]>| -> f64 {
        let Some(p) = lm else { return f64::INFINITY };
        comps
            .iter()
            .flat_map(|c| &c.voxels)
            .map(|&i| {
                let q = mask.coords(i);
                (0..3).map(|a| ((q[a] as f64 - p[a] as f64) * spacing_mm[a]).powi(2)).sum::<f64>().sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    };
    s.dist_to_disc_mm = nearest(landmarks.disc);
    s.dist_to_fovea_mm = nearest(landmarks.fovea);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Recursive-free flood counter using a stack and a visited set.
    fn count_components(mask: &Mask) -> usize {
        let [nx, ny, nz] = mask.dims();
        let mut seen = std::collections::HashSet::new();
        let mut count = 0;
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    if mask.get(x, y, z) == 0 || seen.contains(&(x, y, z)) {
                        continue;
                    }
                    count += 1;
                    let mut stack = vec![(x as i64, y as i64, z as i64)];
                    while let Some((a, b, c)) = stack.pop() {
                        if a < 0 || b < 0 || c < 0 || a >= nx as i64 || b >= ny as i64 || c >= nz as i64 {
                            continue;
                        }
                        let key = (a as usize, b as usize, c as usize);
                        if mask.get(key.0, key.1, key.2) == 0 || !seen.insert(key) {
                            continue;
                        }
                        for (da, db, dc) in [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)] {
                            stack.push((a + da, b + db, c + dc));
                        }
                    }
                }
            }
        }
        count
    }

    #[test]
    fn empty_mask_is_zero_summary() {
        let s = lesion_features(&Mask::zeros([5, 5, 5]), [1.0; 3], &Landmarks::default());
        assert_eq!((s.components, s.max_diameter_mm, s.quadrant_counts), (0, 0.0, [0; 4]));
    }

    #[test]
    fn two_voxel_component() {
        let mut m = Mask::zeros([8, 8, 8]);
        m.set(5, 6, 2, true);
        m.set(6, 6, 2, true);
        let lm = Landmarks { disc: Some([5, 6, 5]), fovea: None };
        let s = lesion_features(&m, [1.0; 3], &lm);
        assert_eq!(s.components, 1);
        assert_eq!(s.max_diameter_mm, 2.0);
        assert_eq!(s.quadrant_counts, [1, 0, 0, 0]);
        assert_eq!(s.dist_to_disc_mm, 3.0);
        assert_eq!(s.dist_to_fovea_mm, f64::INFINITY);
        let s = lesion_features(&m, [0.5, 0.5, 0.5], &lm);
        assert_eq!(s.max_diameter_mm, 1.0);
    }

    #[test]
    fn diagonal_voxels_are_separate() {
        let mut m = Mask::zeros([4, 4, 4]);
        m.set(0, 0, 0, true);
        m.set(1, 1, 0, true);
        m.set(2, 2, 1, true);
        assert_eq!(label_components(&m).len(), 3);
    }

    #[test]
    fn planted_components_match_flood_fill() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let mut m = Mask::zeros([20, 20, 20]);
            for _ in 0..5 {
                let c = [rng.gen_range(2..18), rng.gen_range(2..18), rng.gen_range(2..18)];
                let r: i64 = rng.gen_range(0..3);
                for dz in -r..=r {
                    for dy in -r..=r {
                        for dx in -r..=r {
                            if dx * dx + dy * dy + dz * dz <= r * r {
                                let p = [c[0] as i64 + dx, c[1] as i64 + dy, c[2] as i64 + dz];
                                m.set(p[0] as usize, p[1] as usize, p[2] as usize, true);
                            }
                        }
                    }
                }
            }
            // sprinkle isolated noise too
            for _ in 0..30 {
                let (x, y, z) = (rng.gen_range(0..20), rng.gen_range(0..20), rng.gen_range(0..20));
                m.set(x, y, z, true);
            }
            let comps = label_components(&m);
            assert_eq!(comps.len(), count_components(&m));
            assert_eq!(comps.iter().map(|c| c.voxels.len()).sum::<usize>(), m.count_ones());
        }
    }
}
