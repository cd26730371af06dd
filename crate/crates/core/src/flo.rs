//! Middlebury `.flo` files: `"PIEH"`, little-endian `i32` width and height,
//! then row-major interleaved little-endian `f32` `(u, v)` pairs.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::FlowField;

pub const FLO_MAGIC: &[u8; 4] = b"PIEH";
const HEADER_LEN: usize = 12;
/// Sanity bound on either side, to reject garbage headers before allocating.
const MAX_SIDE: i32 = 1 << 16;

pub fn encode_flo(flow: &FlowField) -> Result<Vec<u8>> {
    if let Some(i) = flow
        .vectors()
        .iter()
        .position(|v| !v[0].is_finite() || !v[1].is_finite())
    {
        return Err(Error::format(
            (HEADER_LEN + 8 * i) as u64,
            "refusing to encode non-finite flow",
        ));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * flow.vectors().len());
    out.extend_from_slice(FLO_MAGIC);
    out.extend_from_slice(&(flow.width() as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height() as i32).to_le_bytes());
    for [u, v] in flow.vectors() {
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_flo(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < 4 {
        return Err(Error::format(bytes.len() as u64, "file shorter than magic"));
    }
    if &bytes[..4] != FLO_MAGIC {
        return Err(Error::format(0, format!("bad magic {:?}", &bytes[..4])));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(bytes.len() as u64, "truncated header"));
    }
    let read_i32 = |at: usize| i32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let width = read_i32(4);
    let height = read_i32(8);
    if !(1..=MAX_SIDE).contains(&width) {
        return Err(Error::format(4, format!("implausible width {width}")));
    }
    if !(1..=MAX_SIDE).contains(&height) {
        return Err(Error::format(8, format!("implausible height {height}")));
    }
    let (width, height) = (width as usize, height as usize);
    let expected = HEADER_LEN + 8 * width * height;
    if bytes.len() < expected {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated payload: {} of {expected} bytes", bytes.len()),
        ));
    }
    if bytes.len() > expected {
        return Err(Error::format(
            expected as u64,
            format!("{} trailing bytes after payload", bytes.len() - expected),
        ));
    }
    let mut vectors = Vec::with_capacity(width * height);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(8).enumerate() {
        let u = f32::from_le_bytes(chunk[..4].try_into().unwrap());
        let v = f32::from_le_bytes(chunk[4..].try_into().unwrap());
        let offset = HEADER_LEN + 8 * i;
        if !u.is_finite() {
            return Err(Error::format(offset as u64, "non-finite u component"));
        }
        if !v.is_finite() {
            return Err(Error::format(offset as u64 + 4, "non-finite v component"));
        }
        vectors.push([u, v]);
    }
    FlowField::new(width, height, vectors)
}

pub fn write_flo(flow: &FlowField, path: &Path) -> Result<()> {
    let bytes = encode_flo(flow)?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_flo(path: &Path) -> Result<FlowField> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flo(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_one_layout() {
        let f = FlowField::new(2, 1, vec![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let bytes = encode_flo(&f).unwrap();
        let mut expected = b"PIEH".to_vec();
        expected.extend_from_slice(&[2, 0, 0, 0, 1, 0, 0, 0]);
        for x in [1.0f32, 2.0, 3.0, 4.0] {
            expected.extend_from_slice(&x.to_bits().to_le_bytes());
        }
        assert_eq!(bytes.len(), 28);
        assert_eq!(bytes, expected);
        // 1.0f32 = 0x3f800000
        assert_eq!(&bytes[12..16], &[0x00, 0x00, 0x80, 0x3f]);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = encode_flo(&FlowField::zeros(2, 2)).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        match decode_flo(&bytes) {
            Err(Error::Format { offset: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncation_names_offset() {
        let bytes = encode_flo(&FlowField::zeros(3, 3)).unwrap();
        match decode_flo(&bytes[..40]) {
            Err(Error::Format { offset: 40, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(decode_flo(&bytes[..6]).is_err());
    }

    #[test]
    fn nan_payload_names_offset() {
        let mut bytes = encode_flo(&FlowField::zeros(2, 2)).unwrap();
        bytes[12 + 8 * 2 + 4..12 + 8 * 2 + 8].copy_from_slice(&f32::NAN.to_le_bytes());
        match decode_flo(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 32),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/a.flo");
        let f = FlowField::from_fn(5, 3, |x, y| [x as f32 * 0.25, -(y as f32)]);
        write_flo(&f, &path).unwrap();
        assert_eq!(read_flo(&path).unwrap(), f);
    }

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(
            w in 1usize..6,
            h in 1usize..6,
            raw in proptest::collection::vec(any::<u32>(), 72),
        ) {
            let vectors: Vec<[f32; 2]> = (0..w * h)
                .map(|i| {
                    let f = |b: u32| {
                        let x = f32::from_bits(b);
                        if x.is_finite() { x } else { (b % 1000) as f32 - 500.0 }
                    };
                    [f(raw[2 * i]), f(raw[2 * i + 1])]
                })
                .collect();
            let flow = FlowField::new(w, h, vectors).unwrap();
            let bytes = encode_flo(&flow).unwrap();
            let back = decode_flo(&bytes).unwrap();
            prop_assert_eq!(encode_flo(&back).unwrap(), bytes);
            for (a, b) in back.vectors().iter().zip(flow.vectors()) {
                prop_assert_eq!(a[0].to_bits(), b[0].to_bits());
                prop_assert_eq!(a[1].to_bits(), b[1].to_bits());
            }
        }
    }
}
