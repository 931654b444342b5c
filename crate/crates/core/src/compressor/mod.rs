//! A small error-bounded compressor, the edit log, and their file formats.
//!
//! The compressor predicts each value from the previous reconstructed value
//! in row-major order and quantizes the residual into bins of width `2ξ`.
//! Residuals that do not fit, or whose reconstruction would leave
//! `[f - ξ, f + ξ]` after rounding, are stored verbatim. With `ξ = 0` the
//! values are stored bit-exactly as XOR deltas.
//!
//! EXCZ layout (little endian): `"EXCZ"`, `u8` version (1), `u8` lossless
//! stage id, `u8` source dtype, `u8` predictor id, `u8` ndim, three padding
//! bytes, `f64` ξ, `ndim × u64` dims, then the staged payload.

mod codec;
mod edit_log;

pub use codec::{stage_by_id, Deflate, Identity, LosslessStage};
pub use edit_log::{
    apply_edit_log, apply_edit_log_checked, deserialize_edit_log, serialize_edit_log,
    serialize_edit_log_with, step_value, EditKind, EditLog,
};

use codec::{put_varint, unzigzag, zigzag, Reader};

use crate::grid::{DType, Grid, ScalarField};
use crate::{Error, Result};

const BLOB_MAGIC: [u8; 4] = *b"EXCZ";
const BLOB_VERSION: u8 = 1;

/// Largest quantization index stored as a code.
const MAX_CODE: f64 = (1u64 << 52) as f64;

/// Smallest double not below the exact value `f - ξ`.
#[inline]
pub fn lower_limit(f: f64, xi: f64) -> f64 {
    let c = f - xi;
    if rounding_error(f, -xi, c) > 0.0 {
        c.next_up()
    } else {
        c
    }
}

/// Largest double not above the exact value `f + ξ`.
#[inline]
pub fn upper_limit(f: f64, xi: f64) -> f64 {
    let c = f + xi;
    if rounding_error(f, xi, c) < 0.0 {
        c.next_down()
    } else {
        c
    }
}

/// Exact `(a + b) - s` for `s = fl(a + b)` (Knuth's two-sum).
#[inline]
fn rounding_error(a: f64, b: f64, s: f64) -> f64 {
    if !s.is_finite() {
        return 0.0;
    }
    let bb = s - a;
    (a - (s - bb)) + (b - bb)
}

/// `|f - g| ≤ ξ` holds exactly, not just after rounding.
#[inline]
pub fn within_bound(f: f64, g: f64, xi: f64) -> bool {
    g >= lower_limit(f, xi) && g <= upper_limit(f, xi)
}

/// First vertex where `g` leaves the `ξ` band around `f`, as an error.
pub fn check_bound(f: &ScalarField, g: &ScalarField, xi: f64) -> Result<()> {
    f.same_grid(g)?;
    let bad = f
        .values()
        .iter()
        .zip(g.values())
        .position(|(&a, &b)| !within_bound(a, b, xi));
    match bad {
        None => Ok(()),
        Some(v) => Err(Error::BoundViolated {
            vertex: v,
            error: (f.value(v) - g.value(v)).abs(),
            bound: xi,
        }),
    }
}

/// Largest pointwise absolute difference.
pub fn max_abs_error(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    f.same_grid(g)?;
    Ok(f.values()
        .iter()
        .zip(g.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Converts a bound relative to the data range into an absolute one.
pub fn absolute_bound(field: &ScalarField, xi_rel: f64) -> Result<f64> {
    if !(xi_rel > 0.0 && xi_rel <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "relative error bound {xi_rel} is outside (0, 1]"
        )));
    }
    Ok(xi_rel * field.span())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Predictor {
    /// XOR of consecutive bit patterns; used when `ξ = 0`.
    Verbatim,
    /// Previous reconstructed value.
    Lorenzo,
}

impl Predictor {
    fn code(self) -> u8 {
        match self {
            Predictor::Verbatim => 0,
            Predictor::Lorenzo => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Predictor::Verbatim),
            1 => Ok(Predictor::Lorenzo),
            other => Err(Error::Corrupt(format!("unknown predictor {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompressedBlob {
    dims: Vec<usize>,
    dtype: DType,
    xi_abs: f64,
    predictor: Predictor,
    /// `0` marks an escape; otherwise `zigzag(q) + 1` (Lorenzo) or the XOR
    /// delta of the bit pattern (Verbatim).
    codes: Vec<u64>,
    escapes: Vec<f64>,
}

/// Compresses with `ξ_abs = ξ_rel × (max - min)`.
pub fn compress(field: &ScalarField, xi_rel: f64) -> Result<CompressedBlob> {
    compress_abs(field, absolute_bound(field, xi_rel)?)
}

pub fn compress_abs(field: &ScalarField, xi_abs: f64) -> Result<CompressedBlob> {
    if !(xi_abs.is_finite() && xi_abs >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "absolute error bound {xi_abs} must be finite and non-negative"
        )));
    }
    let mut codes = Vec::with_capacity(field.len());
    let mut escapes = Vec::new();
    let predictor = if xi_abs == 0.0 {
        let mut prev = 0u64;
        for &v in field.values() {
            codes.push(v.to_bits() ^ prev);
            prev = v.to_bits();
        }
        Predictor::Verbatim
    } else {
        let bin = 2.0 * xi_abs;
        let mut prev = 0.0f64;
        for &v in field.values() {
            let q = ((v - prev) / bin).round();
            if q.abs() < MAX_CODE {
                let r = prev + q * bin;
                if within_bound(v, r, xi_abs) {
                    codes.push(zigzag(q as i64) + 1);
                    prev = r;
                    continue;
                }
            }
            codes.push(0);
            escapes.push(v);
            prev = v;
        }
        Predictor::Lorenzo
    };
    Ok(CompressedBlob {
        dims: field.dims().to_vec(),
        dtype: DType::F64,
        xi_abs,
        predictor,
        codes,
        escapes,
    })
}

impl CompressedBlob {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn xi_abs(&self) -> f64 {
        self.xi_abs
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    /// Records the on-disk precision of the source field.
    pub fn with_dtype(mut self, dtype: DType) -> Self {
        self.dtype = dtype;
        self
    }

    pub fn predictor(&self) -> Predictor {
        self.predictor
    }

    /// Number of values stored verbatim.
    pub fn escape_count(&self) -> usize {
        self.escapes.len()
    }

    pub fn decompress(&self) -> Result<ScalarField> {
        let n: usize = self.dims.iter().product();
        if self.codes.len() != n {
            return Err(Error::Corrupt(format!(
                "{} codes for {n} vertices",
                self.codes.len()
            )));
        }
        let mut values = Vec::with_capacity(n);
        match self.predictor {
            Predictor::Verbatim => {
                let mut prev = 0u64;
                for &c in &self.codes {
                    prev ^= c;
                    values.push(f64::from_bits(prev));
                }
            }
            Predictor::Lorenzo => {
                let bin = 2.0 * self.xi_abs;
                let mut escapes = self.escapes.iter();
                let mut prev = 0.0f64;
                for &c in &self.codes {
                    prev = if c == 0 {
                        *escapes
                            .next()
                            .ok_or_else(|| Error::Corrupt("escape list too short".into()))?
                    } else {
                        prev + (unzigzag(c - 1) as f64) * bin
                    };
                    values.push(prev);
                }
                if escapes.next().is_some() {
                    return Err(Error::Corrupt("escape list too long".into()));
                }
            }
        }
        ScalarField::new(&self.dims, values)
            .map_err(|e| Error::Corrupt(format!("reconstruction: {e}")))
    }

    /// Serializes with the default DEFLATE stage.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_bytes_with(&Deflate::default())
    }

    pub fn to_bytes_with(&self, stage: &dyn LosslessStage) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&BLOB_MAGIC);
        out.extend_from_slice(&[
            BLOB_VERSION,
            stage.id(),
            self.dtype.code(),
            self.predictor.code(),
            self.dims.len() as u8,
            0,
            0,
            0,
        ]);
        out.extend_from_slice(&self.xi_abs.to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        let mut body = Vec::with_capacity(self.codes.len() + 8 * self.escapes.len() + 16);
        put_varint(&mut body, self.codes.len() as u64);
        for &c in &self.codes {
            put_varint(&mut body, c);
        }
        put_varint(&mut body, self.escapes.len() as u64);
        for &e in &self.escapes {
            body.extend_from_slice(&e.to_le_bytes());
        }
        out.extend_from_slice(&stage.encode(&body));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let magic: [u8; 4] = r.array()?;
        if magic != BLOB_MAGIC {
            return Err(Error::BadMagic {
                expected: BLOB_MAGIC,
                found: magic,
            });
        }
        let [version, stage, dtype, predictor, ndim, ..] = r.array::<8>()?;
        if version != BLOB_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let stage = stage_by_id(stage)?;
        let dtype = DType::from_code(dtype)?;
        let predictor = Predictor::from_code(predictor)?;
        let xi_abs = r.f64()?;
        if !(xi_abs.is_finite() && xi_abs >= 0.0) {
            return Err(Error::Corrupt(format!("error bound {xi_abs}")));
        }
        let dims = (0..ndim)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let grid = Grid::new(&dims).map_err(|e| Error::HeaderMismatch(e.to_string()))?;

        let body = stage.decode(r.rest())?;
        let mut b = Reader::new(&body);
        let count = b.varint()? as usize;
        if count != grid.len() {
            return Err(Error::Corrupt(format!(
                "{count} codes for {} vertices",
                grid.len()
            )));
        }
        let codes = (0..count).map(|_| b.varint()).collect::<Result<Vec<_>>>()?;
        let n_escapes = b.varint()? as usize;
        let expected = match predictor {
            Predictor::Verbatim => 0,
            Predictor::Lorenzo => codes.iter().filter(|&&c| c == 0).count(),
        };
        if n_escapes != expected {
            return Err(Error::Corrupt(format!(
                "{n_escapes} escapes, codes call for {expected}"
            )));
        }
        let escapes = (0..n_escapes)
            .map(|_| b.f64())
            .collect::<Result<Vec<_>>>()?;
        b.finish()?;
        Ok(CompressedBlob {
            dims,
            dtype,
            xi_abs,
            predictor,
            codes,
            escapes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn limits_are_exact() {
        // fl(1.1 - 0.3) rounds below the true difference
        let c: f64 = 1.1 - 0.3;
        assert!(1.1 - c > 0.3);
        let lb = lower_limit(1.1, 0.3);
        assert_eq!(lb, c.next_up());
        assert!(1.1 - lb <= 0.3);
        assert_eq!(lower_limit(1.0, 0.5), 0.5);
        assert_eq!(upper_limit(1.0, 0.5), 1.5);
        let mut rng = 0x9e3779b97f4a7c15u64;
        for _ in 0..10_000 {
            rng = rng
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let f = (rng >> 11) as f64 / (1u64 << 53) as f64 * 7.0 - 3.0;
            let xi = ((rng >> 40) as f64 + 1.0) * 1e-7;
            let (lo, hi) = (lower_limit(f, xi), upper_limit(f, xi));
            assert!(f - lo <= xi && hi - f <= xi);
            assert!(f - lo.next_down() > xi || lo.next_down() < f - xi);
            assert!(hi.next_up() - f > xi || hi.next_up() > f + xi);
        }
    }

    #[test]
    fn constant_field_is_lossless() {
        let f = ScalarField::new(&[8, 8], vec![3.25; 64]).unwrap();
        let blob = compress(&f, 1e-3).unwrap();
        assert_eq!(blob.xi_abs(), 0.0);
        assert_eq!(blob.predictor(), Predictor::Verbatim);
        assert!(blob.codes[1..].iter().all(|&c| c == 0));
        let g = blob.decompress().unwrap();
        assert_eq!(g, f);
        let bytes = blob.to_bytes();
        assert!(bytes.len() < 64 * 8, "{}", bytes.len());
    }

    #[test]
    fn two_point_bound() {
        let f = ScalarField::new(&[1, 2], vec![0.0, 1.0]).unwrap();
        let g = compress_abs(&f, 0.5).unwrap().decompress().unwrap();
        assert!(max_abs_error(&f, &g).unwrap() <= 0.5);
    }

    #[test]
    fn random_cube_pointwise() {
        let f = synth::random_field(&[16, 16, 16], 5);
        let blob = compress(&f, 1e-3).unwrap();
        let g = blob.decompress().unwrap();
        let xi = blob.xi_abs();
        let mut checked = 0;
        for (a, b) in f.values().iter().zip(g.values()) {
            assert!(within_bound(*a, *b, xi));
            checked += 1;
        }
        assert_eq!(checked, 4096);
    }

    #[test]
    fn huge_residuals_escape() {
        let f = ScalarField::new(&[1, 4], vec![0.0, 1e300, -1e300, 5.0]).unwrap();
        let blob = compress_abs(&f, 1e-12).unwrap();
        assert!(blob.escape_count() >= 2);
        let g = blob.decompress().unwrap();
        check_bound(&f, &g, 1e-12).unwrap();
    }

    #[test]
    fn deterministic_bytes() {
        let f = synth::gaussian_mix(&[20, 20], 3, 2).unwrap();
        let a = compress(&f, 1e-4).unwrap().to_bytes();
        let b = compress(&f, 1e-4).unwrap().to_bytes();
        assert_eq!(a, b);
    }

    #[test]
    fn blob_round_trip_both_stages() {
        let f = synth::gaussian_mix(&[12, 9], 3, 4).unwrap();
        let blob = compress(&f, 1e-3).unwrap();
        for stage in [&Identity as &dyn LosslessStage, &Deflate::default()] {
            let back = CompressedBlob::from_bytes(&blob.to_bytes_with(stage)).unwrap();
            assert_eq!(back, blob);
        }
    }

    #[test]
    fn corrupt_blobs() {
        let f = synth::random_field(&[4, 4], 1);
        let bytes = compress(&f, 1e-2).unwrap().to_bytes_with(&Identity);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            CompressedBlob::from_bytes(&bad),
            Err(Error::BadMagic { .. })
        ));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            CompressedBlob::from_bytes(&bad),
            Err(Error::UnsupportedVersion(9))
        ));
        assert!(CompressedBlob::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(CompressedBlob::from_bytes(&long).is_err());
    }

    #[test]
    fn rejects_bad_bounds() {
        let f = synth::random_field(&[4, 4], 1);
        assert!(compress(&f, 0.0).is_err());
        assert!(compress(&f, 1.5).is_err());
        assert!(compress_abs(&f, f64::NAN).is_err());
    }
}
