//! Patch archive: `RBPATCH1\n`, `count n slices\n`, the f32 little-endian
//! payload of every patch in order, then one label byte per patch
//! (255 = unlabeled). Grid provenance is not persisted.

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::Patch;

const MAGIC: &[u8] = b"RBPATCH1\n";
pub const UNLABELED: u8 = 255;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed patch archive: {0}")]
    Malformed(String),
    #[error("patch {index} is {n}x{n}x{slices}, archive holds {an}x{an}x{aslices}")]
    MixedShapes { index: usize, n: usize, slices: usize, an: usize, aslices: usize },
}

pub fn encode_patches(patches: &[Patch]) -> Result<Vec<u8>, ArchiveError> {
    let (n, slices) = patches.first().map_or((0, 0), |p| (p.n, p.slices));
    let mut out = MAGIC.to_vec();
    out.extend(format!("{} {n} {slices}\n", patches.len()).bytes());
    for (index, p) in patches.iter().enumerate() {
        if p.n != n || p.slices != slices {
            return Err(ArchiveError::MixedShapes {
                index,
                n: p.n,
                slices: p.slices,
                an: n,
                aslices: slices,
            });
        }
        for &v in &p.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out.extend(patches.iter().map(|p| p.label.unwrap_or(UNLABELED)));
    Ok(out)
}

pub fn decode_patches(bytes: &[u8]) -> Result<Vec<Patch>, ArchiveError> {
    let bad = |m: String| ArchiveError::Malformed(m);
    let rest = bytes.strip_prefix(MAGIC).ok_or_else(|| bad("missing RBPATCH1 magic".into()))?;
    let end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header".into()))?;
    let header = std::str::from_utf8(&rest[..end]).map_err(|_| bad("header is not ASCII".into()))?;
    let fields: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad(format!("bad header field {t:?}"))))
        .collect::<Result<_, _>>()?;
    let [count, n, slices]: [usize; 3] =
        fields.try_into().map_err(|_| bad("expected `count n slices`".into()))?;
    let body = &rest[end + 1..];
    let per = n * n * slices;
    let expected = count * (per * 4 + 1);
    if body.len() != expected {
        return Err(bad(format!("expected {expected} payload bytes, found {}", body.len())));
    }
    let (values, labels) = body.split_at(count * per * 4);
    let mut out = Vec::with_capacity(count);
    for (k, chunk) in values.chunks_exact((per * 4).max(1)).take(count).enumerate() {
        let data: Vec<f64> = chunk
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(bad(format!("patch {k} holds out-of-range value {v}")));
        }
        let label = match labels[k] {
            UNLABELED => None,
            l => Some(l),
        };
        out.push(Patch { n, slices, data, provenance: Vec::new(), label });
    }
    Ok(out)
}

pub fn save_patches(patches: &[Patch], path: impl AsRef<Path>) -> Result<(), ArchiveError> {
    fs::write(path, encode_patches(patches)?)?;
    Ok(())
}

pub fn load_patches(path: impl AsRef<Path>) -> Result<Vec<Patch>, ArchiveError> {
    decode_patches(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn patch(values: Vec<f64>, label: Option<u8>) -> Patch {
        Patch { n: 2, slices: 1, data: values, provenance: Vec::new(), label }
    }

    proptest! {
        #[test]
        fn archive_round_trip(raw in proptest::collection::vec((proptest::collection::vec(0f32..=1.0, 4), proptest::option::of(0u8..3)), 0..6)) {
            let patches: Vec<Patch> = raw
                .into_iter()
                .map(|(v, l)| patch(v.into_iter().map(f64::from).collect(), l))
                .collect();
            let back = decode_patches(&encode_patches(&patches).unwrap()).unwrap();
            prop_assert_eq!(back, patches);
        }
    }

    #[test]
    fn layout_is_header_floats_labels() {
        let bytes = encode_patches(&[patch(vec![0.0, 0.5, 1.0, 0.25], None)]).unwrap();
        assert!(bytes.starts_with(b"RBPATCH1\n1 2 1\n"));
        let body = &bytes[b"RBPATCH1\n1 2 1\n".len()..];
        assert_eq!(body.len(), 17);
        assert_eq!(&body[4..8], &0.5f32.to_le_bytes());
        assert_eq!(body[16], UNLABELED);
    }

    #[test]
    fn rejects_mixed_shapes_and_truncation() {
        let a = patch(vec![0.0; 4], Some(1));
        let b = Patch { n: 1, slices: 1, data: vec![0.0], provenance: Vec::new(), label: None };
        assert!(matches!(encode_patches(&[a.clone(), b]), Err(ArchiveError::MixedShapes { .. })));
        let mut bytes = encode_patches(&[a]).unwrap();
        bytes.pop();
        assert!(matches!(decode_patches(&bytes), Err(ArchiveError::Malformed(_))));
    }
}
