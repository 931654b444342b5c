//! Byte-level helpers shared by the EXCZ and EXCE formats.

use miniz_oxide::deflate::compress_to_vec;
use miniz_oxide::inflate::decompress_to_vec_with_limit;

use crate::{Error, Result};

/// General-purpose lossless stage applied to a serialized body.
pub trait LosslessStage {
    /// Identifier stored in the stream header.
    fn id(&self) -> u8;
    fn encode(&self, raw: &[u8]) -> Vec<u8>;
    fn decode(&self, packed: &[u8]) -> Result<Vec<u8>>;
}

/// Stores the body unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct Identity;

impl LosslessStage for Identity {
    fn id(&self) -> u8 {
        0
    }

    fn encode(&self, raw: &[u8]) -> Vec<u8> {
        raw.to_vec()
    }

    fn decode(&self, packed: &[u8]) -> Result<Vec<u8>> {
        Ok(packed.to_vec())
    }
}

/// Raw DEFLATE.
#[derive(Clone, Copy, Debug)]
pub struct Deflate {
    pub level: u8,
}

impl Default for Deflate {
    fn default() -> Self {
        Deflate { level: 6 }
    }
}

/// Refuses to inflate beyond this many bytes.
const INFLATE_LIMIT: u64 = 1 << 34;

impl LosslessStage for Deflate {
    fn id(&self) -> u8 {
        1
    }

    fn encode(&self, raw: &[u8]) -> Vec<u8> {
        compress_to_vec(raw, self.level.min(10))
    }

    fn decode(&self, packed: &[u8]) -> Result<Vec<u8>> {
        decompress_to_vec_with_limit(packed, usize::try_from(INFLATE_LIMIT).unwrap_or(usize::MAX))
            .map_err(|e| Error::Corrupt(format!("deflate stream: {e:?}")))
    }
}

/// Looks up a stage by its stored identifier.
pub fn stage_by_id(id: u8) -> Result<Box<dyn LosslessStage>> {
    match id {
        0 => Ok(Box::new(Identity)),
        1 => Ok(Box::new(Deflate::default())),
        other => Err(Error::Corrupt(format!("unknown lossless stage {other}"))),
    }
}

pub(crate) fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

pub(crate) fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

pub(crate) fn unzigzag(v: u64) -> i64 {
    ((v >> 1) as i64) ^ -((v & 1) as i64)
}

/// Bounds-checked cursor over a byte slice.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated {
                expected: self.pos.saturating_add(n),
                found: self.bytes.len(),
            }),
        }
    }

    pub(crate) fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub(crate) fn varint(&mut self) -> Result<u64> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.u8()?;
            v |= u64::from(b & 0x7f) << shift;
            if b & 0x80 == 0 {
                if shift == 63 && b > 1 {
                    break;
                }
                return Ok(v);
            }
        }
        Err(Error::Corrupt("varint overflows 64 bits".into()))
    }

    pub(crate) fn rest(&mut self) -> &'a [u8] {
        let s = &self.bytes[self.pos..];
        self.pos = self.bytes.len();
        s
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(Error::Corrupt(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn varint_round_trip() {
        let values = [0u64, 1, 127, 128, 300, u32::MAX as u64, u64::MAX];
        let mut buf = Vec::new();
        for &v in &values {
            put_varint(&mut buf, v);
        }
        let mut r = Reader::new(&buf);
        for &v in &values {
            assert_eq!(r.varint().unwrap(), v);
        }
        r.finish().unwrap();
    }

    #[test]
    fn zigzag_round_trip() {
        for v in [0i64, -1, 1, i64::MIN, i64::MAX, -12345] {
            assert_eq!(unzigzag(zigzag(v)), v);
        }
        assert_eq!(zigzag(-1), 1);
        assert_eq!(zigzag(1), 2);
    }

    #[test]
    fn overlong_varint_is_corrupt() {
        let buf = [0xffu8; 11];
        assert!(matches!(Reader::new(&buf).varint(), Err(Error::Corrupt(_))));
    }

    #[test]
    fn stages_round_trip() {
        let data: Vec<u8> = (0..5000u32).map(|i| (i % 7) as u8).collect();
        for id in [0, 1] {
            let s = stage_by_id(id).unwrap();
            assert_eq!(s.id(), id);
            assert_eq!(s.decode(&s.encode(&data)).unwrap(), data);
        }
        assert!(stage_by_id(9).is_err());
        assert!(Deflate::default().decode(&[0xff, 0xff, 0xff]).is_err());
    }
}
