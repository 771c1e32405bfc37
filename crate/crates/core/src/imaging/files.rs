//! `.rbmask` and `.rbvol` containers.
//!
//! Mask: `RBMASK1\n`, `nx ny nz\n`, then one byte (0 or 1) per voxel.
//! Volume: `RBVOL1\n`, `nx ny nz sx sy sz\n`, then little-endian f32 voxels,
//! x-fastest.

use std::fs;
use std::path::Path;

use super::{ImagingError, Mask, Result, Volume};

const MASK_MAGIC: &[u8] = b"RBMASK1\n";
const VOLUME_MAGIC: &[u8] = b"RBVOL1\n";

/// Splits off one `\n`-terminated ASCII line.
fn take_line(bytes: &[u8]) -> Option<(&str, &[u8])> {
    let end = bytes.iter().position(|&b| b == b'\n')?;
    let line = std::str::from_utf8(&bytes[..end]).ok()?;
    Some((line, &bytes[end + 1..]))
}

pub fn encode_mask(m: &Mask) -> Result<Vec<u8>> {
    if m.is_empty() {
        return Err(ImagingError::MalformedMaskFile("refusing to write a 0-voxel mask".into()));
    }
    let [nx, ny, nz] = m.dims();
    let mut out = MASK_MAGIC.to_vec();
    out.extend(format!("{nx} {ny} {nz}\n").bytes());
    out.extend_from_slice(m.labels());
    Ok(out)
}

pub fn decode_mask(bytes: &[u8]) -> Result<Mask> {
    let bad = |msg: &str| ImagingError::MalformedMaskFile(msg.to_string());
    let rest = bytes.strip_prefix(MASK_MAGIC).ok_or_else(|| bad("missing RBMASK1 magic"))?;
    let (line, payload) = take_line(rest).ok_or_else(|| bad("missing dimension line"))?;
    let dims: Vec<usize> = line
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad("bad dimension")))
        .collect::<Result<_>>()?;
    let dims: [usize; 3] = dims.try_into().map_err(|_| bad("expected three dimensions"))?;
    let len = dims.iter().product::<usize>();
    if len == 0 {
        return Err(bad("0-voxel mask"));
    }
    if payload.len() != len {
        return Err(ImagingError::MalformedMaskFile(format!(
            "expected {len} label bytes, found {}",
            payload.len()
        )));
    }
    Mask::new(dims, payload.to_vec())
}

pub fn save_mask(m: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_mask(m)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    decode_mask(&fs::read(path)?)
}

pub fn encode_volume(v: &Volume) -> Vec<u8> {
    let [nx, ny, nz] = v.dims();
    let [sx, sy, sz] = v.spacing_mm();
    let mut out = VOLUME_MAGIC.to_vec();
    out.extend(format!("{nx} {ny} {nz} {sx} {sy} {sz}\n").bytes());
    out.reserve(v.len() * 4);
    for &x in v.voxels() {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    out
}

pub fn decode_volume(bytes: &[u8]) -> Result<Volume> {
    let bad = |msg: String| ImagingError::MalformedVolumeFile(msg);
    let rest = bytes
        .strip_prefix(VOLUME_MAGIC)
        .ok_or_else(|| bad("missing RBVOL1 magic".into()))?;
    let (line, payload) = take_line(rest).ok_or_else(|| bad("missing header line".into()))?;
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 6 {
        return Err(bad(format!("expected 6 header fields, found {}", fields.len())));
    }
    let mut dims = [0usize; 3];
    let mut spacing = [0f64; 3];
    for i in 0..3 {
        dims[i] = fields[i].parse().map_err(|_| bad(format!("bad dimension {:?}", fields[i])))?;
        spacing[i] =
            fields[i + 3].parse().map_err(|_| bad(format!("bad spacing {:?}", fields[i + 3])))?;
    }
    let len = dims.iter().product::<usize>();
    if payload.len() != len * 4 {
        return Err(bad(format!("expected {} payload bytes, found {}", len * 4, payload.len())));
    }
    let voxels = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Volume::new(dims, voxels, spacing)
}

pub fn save_volume(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_volume(v))?;
    Ok(())
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    decode_volume(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn mask_round_trip(dims in (1usize..6, 1usize..6, 1usize..6), bits in proptest::collection::vec(0u8..2, 216)) {
            let dims = [dims.0, dims.1, dims.2];
            let len = dims.iter().product::<usize>();
            let m = Mask::new(dims, bits[..len].to_vec()).unwrap();
            prop_assert_eq!(decode_mask(&encode_mask(&m).unwrap()).unwrap(), m);
        }

        #[test]
        fn volume_round_trip_of_f32_values(vals in proptest::collection::vec(0f32..=1.0, 24)) {
            let v = Volume::new([2, 3, 4], vals.iter().map(|&x| x as f64).collect(), [0.5, 1.0, 0.125]).unwrap();
            prop_assert_eq!(decode_volume(&encode_volume(&v)).unwrap(), v);
        }
    }

    #[test]
    fn mask_file_round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.rbmask");
        let m = Mask::new([2, 2, 1], vec![0, 1, 1, 0]).unwrap();
        save_mask(&m, &path).unwrap();
        assert_eq!(load_mask(&path).unwrap(), m);
    }

    #[test]
    fn degenerate_masks_are_rejected() {
        let empty = Mask::zeros([0, 3, 3]);
        assert!(matches!(encode_mask(&empty), Err(ImagingError::MalformedMaskFile(_))));

        let mut bytes = b"RBMASK1\n2 1 1\n".to_vec();
        bytes.extend([0, 7]);
        assert!(matches!(decode_mask(&bytes), Err(ImagingError::MalformedMaskFile(_))));

        let mut short = b"RBMASK1\n2 1 1\n".to_vec();
        short.push(1);
        assert!(matches!(decode_mask(&short), Err(ImagingError::MalformedMaskFile(_))));
        assert!(matches!(decode_mask(b"RBVOL1\n"), Err(ImagingError::MalformedMaskFile(_))));
    }

    #[test]
    fn volume_header_round_trips_spacing() {
        let v = Volume::filled([1, 2, 3], 0.25, [0.05, 0.1, 0.3]).unwrap();
        let bytes = encode_volume(&v);
        assert!(bytes.starts_with(b"RBVOL1\n1 2 3 0.05 0.1 0.3\n"));
        assert_eq!(bytes.len(), b"RBVOL1\n1 2 3 0.05 0.1 0.3\n".len() + 24);
        assert_eq!(decode_volume(&bytes).unwrap(), v);
    }
}
