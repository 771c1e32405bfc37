use proptest::prelude::*;

use retinoscan::imaging::{load_mask, load_plane, load_volume, save_mask, save_plane, save_volume, Mask, Plane, Volume};
use retinoscan::micronet::{build_network, load_model, save_model, NetworkConfig};
use retinoscan::patcher::{load_patches, sample_patch, save_patches, GridConfig};
use retinoscan::phantom::{generate_phantom, PhantomSpec};

/// Values are stored as f32.
fn q(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x as f32 as f64).collect()
}

fn small_phantom(seed: u64) -> retinoscan::phantom::PhantomTruth {
    let spec = PhantomSpec { dims: [12, 10, 8], tumor_count: 1, diameter_range_mm: (1.5, 2.5), seed, ..Default::default() };
    generate_phantom(&spec).unwrap()
}

#[test]
fn volume_and_mask_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let t = small_phantom(4);
    save_volume(&t.volume, dir.path().join("v.rbvol")).unwrap();
    save_mask(&t.mask, dir.path().join("m.rbmask")).unwrap();
    let back = load_volume(dir.path().join("v.rbvol")).unwrap();
    assert_eq!((back.dims(), back.spacing_mm()), (t.volume.dims(), t.volume.spacing_mm()));
    assert_eq!(back.voxels(), q(t.volume.voxels()).as_slice());
    save_volume(&back, dir.path().join("w.rbvol")).unwrap();
    assert_eq!(std::fs::read(dir.path().join("v.rbvol")).unwrap(), std::fs::read(dir.path().join("w.rbvol")).unwrap());
    assert_eq!(load_mask(dir.path().join("m.rbmask")).unwrap(), t.mask);
}

#[test]
fn patches_round_trip_with_labels() {
    let dir = tempfile::tempdir().unwrap();
    let t = small_phantom(5);
    let grid = GridConfig { n: 8, spacing: 1.0, slices: 3, slice_step: 1.0 };
    let patches: Vec<_> = grid
        .grids_at([5.0, 4.0, 3.0])
        .iter()
        .enumerate()
        .map(|(k, g)| sample_patch(&t.volume, g, grid.slices, grid.slice_step).with_label((k % 2) as u8))
        .collect();
    let path = dir.path().join("p.rbpatch");
    save_patches(&patches, &path).unwrap();
    let back = load_patches(&path).unwrap();
    assert_eq!(back.len(), 9);
    for (a, b) in patches.iter().zip(&back) {
        assert_eq!((a.n, a.slices, q(&a.data), a.label), (b.n, b.slices, b.data.clone(), b.label));
    }
}

#[test]
fn model_round_trip_keeps_f32_weights() {
    let dir = tempfile::tempdir().unwrap();
    let model = build_network(&NetworkConfig { input: [24, 24, 1], classes: 2, seed: 8 }).unwrap();
    let path = dir.path().join("m.rbmodel");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back.specs(), model.specs());
    for (a, b) in model.layers().iter().zip(back.layers()) {
        assert_eq!(q(&a.weights), b.weights);
        assert_eq!(q(&a.bias), b.bias);
    }
    let again = dir.path().join("again.rbmodel");
    save_model(&back, &again).unwrap();
    assert_eq!(load_model(&again).unwrap(), back);
}

#[test]
fn truncated_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let t = small_phantom(6);
    let path = dir.path().join("v.rbvol");
    save_volume(&t.volume, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(load_volume(&path).is_err());
    std::fs::write(dir.path().join("m.rbmask"), b"nonsense").unwrap();
    assert!(load_mask(dir.path().join("m.rbmask")).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pgm_round_trip_within_quantisation(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let px: Vec<f64> = (0..w * h).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.pgm");
        save_plane(&Plane::new(w, h, px.clone(), 1.0).unwrap(), &path).unwrap();
        let back = load_plane(&path, 1.0).unwrap();
        prop_assert_eq!((back.width(), back.height()), (w, h));
        for (a, b) in px.iter().zip(back.pixels()) {
            prop_assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn mask_round_trip(labels in prop::collection::vec(0u8..2, 1..200)) {
        let n = labels.len();
        let m = Mask::new([n, 1, 1], labels).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_mask(&m, dir.path().join("m.rbmask")).unwrap();
        prop_assert_eq!(load_mask(dir.path().join("m.rbmask")).unwrap(), m);
    }

    #[test]
    fn volume_round_trip(v in prop::collection::vec(0.0f64..=1.0, 8)) {
        let vol = Volume::new([2, 2, 2], q(&v), [0.5, 0.5, 1.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_volume(&vol, dir.path().join("v.rbvol")).unwrap();
        prop_assert_eq!(load_volume(dir.path().join("v.rbvol")).unwrap(), vol);
    }
}
