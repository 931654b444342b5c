//! EXCF field files.
//!
//! Layout (little endian): `"EXCF"`, `u8` version (1), `u8` dtype
//! (0 = f32, 1 = f64), `u8` ndim (2 or 3), `u8` padding, `ndim × u64` dims,
//! then the row-major payload.

use std::fs;
use std::path::Path;

use super::ScalarField;
use crate::{Error, Result};

pub(crate) const FIELD_MAGIC: [u8; 4] = *b"EXCF";
const VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(DType::F32),
            1 => Ok(DType::F64),
            other => Err(Error::HeaderMismatch(format!("unknown dtype code {other}"))),
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

pub fn encode_field(field: &ScalarField, dtype: DType) -> Vec<u8> {
    let dims = field.dims();
    let mut out = Vec::with_capacity(8 + 8 * dims.len() + field.len() * dtype.size());
    out.extend_from_slice(&FIELD_MAGIC);
    out.extend_from_slice(&[VERSION, dtype.code(), dims.len() as u8, 0]);
    for &d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    match dtype {
        DType::F32 => {
            for &v in field.values() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        DType::F64 => {
            for &v in field.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn decode_field(bytes: &[u8]) -> Result<(ScalarField, DType)> {
    if bytes.len() < 8 {
        return Err(Error::Truncated {
            expected: 8,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != FIELD_MAGIC {
        return Err(Error::BadMagic {
            expected: FIELD_MAGIC,
            found: magic,
        });
    }
    if bytes[4] != VERSION {
        return Err(Error::UnsupportedVersion(bytes[4]));
    }
    let dtype = DType::from_code(bytes[5])?;
    let ndim = bytes[6] as usize;
    if ndim != 2 && ndim != 3 {
        return Err(Error::HeaderMismatch(format!(
            "ndim must be 2 or 3, got {ndim}"
        )));
    }
    let header = 8 + 8 * ndim;
    if bytes.len() < header {
        return Err(Error::Truncated {
            expected: header,
            found: bytes.len(),
        });
    }
    let dims: Vec<usize> = bytes[8..header]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::HeaderMismatch(format!("dims {dims:?} overflow")))?;
    let expected = count
        .checked_mul(dtype.size())
        .and_then(|p| p.checked_add(header))
        .ok_or_else(|| Error::HeaderMismatch(format!("dims {dims:?} overflow")))?;
    if bytes.len() != expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let payload = &bytes[header..];
    let values: Vec<f64> = match dtype {
        DType::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        DType::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    Ok((ScalarField::new(&dims, values)?, dtype))
}

pub fn load_field_with_dtype(path: impl AsRef<Path>) -> Result<(ScalarField, DType)> {
    decode_field(&fs::read(path)?)
}

pub fn load_field(path: impl AsRef<Path>) -> Result<ScalarField> {
    load_field_with_dtype(path).map(|(f, _)| f)
}

/// Writes the field as f64; edited fields must not be narrowed.
pub fn save_field(field: &ScalarField, path: impl AsRef<Path>) -> Result<()> {
    save_field_as(field, path, DType::F64)
}

pub fn save_field_as(field: &ScalarField, path: impl AsRef<Path>, dtype: DType) -> Result<()> {
    fs::write(path, encode_field(field, dtype))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wrong_magic() {
        let f = ScalarField::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut bytes = encode_field(&f, DType::F64);
        bytes[0] = b'X';
        assert!(matches!(decode_field(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn short_payload() {
        let f = ScalarField::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = encode_field(&f, DType::F64);
        assert!(matches!(
            decode_field(&bytes[..bytes.len() - 8]),
            Err(Error::Truncated { .. })
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_field(&long), Err(Error::Truncated { .. })));
    }

    #[test]
    fn bad_dtype_and_ndim() {
        let f = ScalarField::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut bytes = encode_field(&f, DType::F64);
        bytes[5] = 7;
        assert!(matches!(
            decode_field(&bytes),
            Err(Error::HeaderMismatch(_))
        ));
        let mut bytes = encode_field(&f, DType::F64);
        bytes[6] = 4;
        assert!(matches!(
            decode_field(&bytes),
            Err(Error::HeaderMismatch(_))
        ));
        let mut bytes = encode_field(&f, DType::F64);
        bytes[4] = 2;
        assert!(matches!(
            decode_field(&bytes),
            Err(Error::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join(format!("excf-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("f.excf");
        let f = ScalarField::new(&[2, 3, 2], (0..12).map(|i| i as f64 * 0.1).collect()).unwrap();
        save_field(&f, &path).unwrap();
        assert_eq!(load_field(&path).unwrap(), f);
        fs::remove_dir_all(dir).unwrap();
    }

    proptest! {
        #[test]
        fn round_trip_is_bitwise(
            dims in prop_oneof![
                proptest::collection::vec(1usize..6, 2),
                proptest::collection::vec(1usize..5, 3)
            ],
            seed in any::<u64>(),
            single in any::<bool>(),
        ) {
            let n: usize = dims.iter().product();
            let mut x = seed | 1;
            let values: Vec<f64> = (0..n).map(|_| {
                x ^= x << 13; x ^= x >> 7; x ^= x << 17;
                let v = (x >> 11) as f64 / (1u64 << 53) as f64 * 200.0 - 100.0;
                if single { v as f32 as f64 } else { v }
            }).collect();
            let f = ScalarField::new(&dims, values).unwrap();
            let dtype = if single { DType::F32 } else { DType::F64 };
            let bytes = encode_field(&f, dtype);
            let (back, dt) = decode_field(&bytes).unwrap();
            prop_assert_eq!(dt, dtype);
            prop_assert_eq!(back.dims(), f.dims());
            for (a, b) in back.values().iter().zip(f.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            prop_assert_eq!(encode_field(&back, dtype), bytes);
        }
    }
}
