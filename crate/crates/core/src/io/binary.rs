//! Little-endian binary rasters: Middlebury `.flo` flow fields and `PMAP`
//! background-probability maps.

use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{BgProbMap, FlowField, Raster};

pub const FLO_MAGIC: f32 = 202021.25;
pub const PMAP_MAGIC: &[u8; 4] = b"PMAP";
const HEADER_LEN: usize = 12;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn word(bytes: &[u8], at: usize) -> [u8; 4] {
    bytes[at..at + 4].try_into().expect("4-byte slice")
}

/// Checks the payload length implied by the header before anything is
/// allocated.
fn check_len(path: &Path, bytes: &[u8], width: u64, height: u64, per_pixel: u64) -> Result<usize> {
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(per_pixel))
        .and_then(|n| n.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| Error::parse(path, 4, "dimensions overflow"))?;
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(Error::TruncatedFile {
            path: path.to_path_buf(),
            expected,
            actual,
        });
    }
    if actual > expected {
        return Err(Error::parse(path, expected as usize, "trailing bytes after payload"));
    }
    Ok((width * height) as usize)
}

fn truncated(path: &Path, bytes: &[u8], need: usize) -> Result<()> {
    if bytes.len() < need {
        return Err(Error::TruncatedFile {
            path: path.to_path_buf(),
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    Ok(())
}

pub fn encode_flow(flow: &FlowField) -> Vec<u8> {
    let (w, h) = flow.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * w * h);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    for (u, v) in flow.u().values().iter().zip(flow.v().values()) {
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_flow(path: &Path, bytes: &[u8]) -> Result<FlowField> {
    truncated(path, bytes, 4)?;
    if f32::from_le_bytes(word(bytes, 0)).to_bits() != FLO_MAGIC.to_bits() {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    truncated(path, bytes, HEADER_LEN)?;
    let w = i32::from_le_bytes(word(bytes, 4));
    let h = i32::from_le_bytes(word(bytes, 8));
    if w < 1 {
        return Err(Error::parse(path, 4, format!("invalid width {w}")));
    }
    if h < 1 {
        return Err(Error::parse(path, 8, format!("invalid height {h}")));
    }
    let n = check_len(path, bytes, w as u64, h as u64, 8)?;
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for px in bytes[HEADER_LEN..].chunks_exact(8) {
        for (dst, at) in [(&mut u, 0), (&mut v, 4)] {
            let x = f32::from_le_bytes(word(px, at));
            if !x.is_finite() {
                return Err(Error::ValueOutOfRange {
                    path: path.to_path_buf(),
                    value: x as f64,
                });
            }
            dst.push(x);
        }
    }
    let (w, h) = (w as usize, h as usize);
    FlowField::new(Raster::new(w, h, u)?, Raster::new(w, h, v)?)
}

pub fn write_flow(path: impl AsRef<Path>, flow: &FlowField) -> Result<()> {
    write_bytes(path.as_ref(), &encode_flow(flow))
}

pub fn read_flow(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    decode_flow(path, &read_bytes(path)?)
}

pub fn encode_probmap(map: &BgProbMap) -> Vec<u8> {
    let (w, h) = map.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * w * h);
    out.extend_from_slice(PMAP_MAGIC);
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    for p in map.probs().values() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode_probmap(path: &Path, bytes: &[u8]) -> Result<BgProbMap> {
    truncated(path, bytes, 4)?;
    if &word(bytes, 0) != PMAP_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    truncated(path, bytes, HEADER_LEN)?;
    let w = u32::from_le_bytes(word(bytes, 4));
    let h = u32::from_le_bytes(word(bytes, 8));
    if w == 0 {
        return Err(Error::parse(path, 4, "width is zero"));
    }
    if h == 0 {
        return Err(Error::parse(path, 8, "height is zero"));
    }
    let n = check_len(path, bytes, w as u64, h as u64, 4)?;
    let mut probs = Vec::with_capacity(n);
    for px in bytes[HEADER_LEN..].chunks_exact(4) {
        let p = f32::from_le_bytes(word(px, 0));
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::ValueOutOfRange {
                path: path.to_path_buf(),
                value: p as f64,
            });
        }
        probs.push(p);
    }
    BgProbMap::new(Raster::new(w as usize, h as usize, probs)?)
}

pub fn write_probmap(path: impl AsRef<Path>, map: &BgProbMap) -> Result<()> {
    write_bytes(path.as_ref(), &encode_probmap(map))
}

pub fn read_probmap(path: impl AsRef<Path>) -> Result<BgProbMap> {
    let path = path.as_ref();
    decode_probmap(path, &read_bytes(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn zero_flow_1x1_is_20_bytes() {
        let bytes = encode_flow(&FlowField::constant(1, 1, 0.0, 0.0).unwrap());
        assert_eq!(bytes.len(), 20);
        assert_eq!(&bytes[..4], &[0x50, 0x49, 0x45, 0x48]);
        assert_eq!(&bytes[4..12], &[1, 0, 0, 0, 1, 0, 0, 0]);
        assert!(bytes[12..].iter().all(|&b| b == 0));
    }

    #[test]
    fn flow_bad_magic() {
        let mut bytes = encode_flow(&FlowField::constant(1, 1, 0.0, 0.0).unwrap());
        bytes[0] ^= 1;
        assert!(matches!(decode_flow(p(), &bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn flow_truncated() {
        let bytes = encode_flow(&FlowField::constant(3, 2, 1.0, 2.0).unwrap());
        for cut in [0, 3, 11, 12, bytes.len() - 1] {
            assert!(matches!(
                decode_flow(p(), &bytes[..cut]),
                Err(Error::TruncatedFile { .. })
            ));
        }
    }

    #[test]
    fn flow_huge_header_does_not_allocate() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&FLO_MAGIC.to_le_bytes());
        bytes.extend_from_slice(&65536i32.to_le_bytes());
        bytes.extend_from_slice(&65536i32.to_le_bytes());
        assert!(matches!(
            decode_flow(p(), &bytes),
            Err(Error::TruncatedFile { expected, .. }) if expected == 12 + 8 * (1 << 32)
        ));
        bytes[4..12].copy_from_slice(&[0xff, 0xff, 0xff, 0x7f, 0xff, 0xff, 0xff, 0x7f]);
        assert!(matches!(decode_flow(p(), &bytes), Err(Error::Parse { offset: 4, .. })));
    }

    #[test]
    fn probmap_half_2x2_is_28_bytes() {
        let bytes = encode_probmap(&BgProbMap::uniform(2, 2, 0.5).unwrap());
        assert_eq!(bytes.len(), 28);
        assert_eq!(&bytes[..4], b"PMAP");
        assert_eq!(&bytes[12..16], &0.5f32.to_le_bytes());
    }

    #[test]
    fn probmap_out_of_range() {
        let mut bytes = encode_probmap(&BgProbMap::uniform(2, 2, 0.5).unwrap());
        bytes[16..20].copy_from_slice(&1.5f32.to_le_bytes());
        assert!(matches!(
            decode_probmap(p(), &bytes),
            Err(Error::ValueOutOfRange { value, .. }) if value == 1.5
        ));
        bytes[16..20].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            decode_probmap(p(), &bytes),
            Err(Error::ValueOutOfRange { .. })
        ));
    }

    proptest! {
        #[test]
        fn flow_round_trip(w in 1usize..6, h in 1usize..6, seed in proptest::collection::vec(-1e4f32..1e4, 72)) {
            let n = w * h;
            let u = Raster::new(w, h, seed[..n].to_vec()).unwrap();
            let v = Raster::new(w, h, seed[36..36 + n].to_vec()).unwrap();
            let flow = FlowField::new(u, v).unwrap();
            let bytes = encode_flow(&flow);
            let back = decode_flow(p(), &bytes).unwrap();
            prop_assert_eq!(encode_flow(&back), bytes);
            prop_assert_eq!(back, flow);
        }

        #[test]
        fn probmap_round_trip(w in 1usize..6, h in 1usize..6, vals in proptest::collection::vec(0f32..=1.0, 36)) {
            let map = BgProbMap::new(Raster::new(w, h, vals[..w * h].to_vec()).unwrap()).unwrap();
            let bytes = encode_probmap(&map);
            let back = decode_probmap(p(), &bytes).unwrap();
            prop_assert_eq!(encode_probmap(&back), bytes);
        }

        #[test]
        fn garbage_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = decode_flow(p(), &bytes);
            let _ = decode_probmap(p(), &bytes);
        }
    }
}
