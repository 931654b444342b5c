//! The correction edit log and its EXCE encoding.
//!
//! EXCE layout: `"EXCE"`, `u8` version (1), `u8` lossless stage id, then the
//! staged body: `f64` ξ, `u32` N, `u64` entry count, and per entry (sorted by
//! vertex) a varint vertex delta followed by a varint step count. A count of
//! zero marks a lossless entry and is followed by the stored `f64` value.

use std::collections::BTreeMap;

use serde::Serialize;

use super::codec::{put_varint, stage_by_id, Deflate, LosslessStage, Reader};
use super::{lower_limit, upper_limit, within_bound};
use crate::grid::{ScalarField, VertexId};
use crate::{Error, Result};

const EDIT_MAGIC: [u8; 4] = *b"EXCE";
const EDIT_VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum EditKind {
    /// Lowered by `count` steps of `ξ / N`.
    Stepped(u32),
    /// Clamped to the stored lower bound `f_v - ξ`.
    Lossless(f64),
}

/// `f̂_v - count·Δ` with `Δ = ξ / N`.
#[inline]
pub fn step_value(fhat: f64, count: u32, xi: f64, steps: u32) -> f64 {
    fhat - f64::from(count) * (xi / f64::from(steps))
}

/// Accumulated edits, at most one per vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct EditLog {
    xi_abs: f64,
    steps: u32,
    entries: BTreeMap<u32, EditKind>,
}

impl EditLog {
    pub fn new(xi_abs: f64, steps: u32) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidArgument(
                "step count N must be at least 1".into(),
            ));
        }
        if !(xi_abs.is_finite() && xi_abs >= 0.0) {
            return Err(Error::InvalidArgument(format!("error bound {xi_abs}")));
        }
        Ok(EditLog {
            xi_abs,
            steps,
            entries: BTreeMap::new(),
        })
    }

    pub fn xi_abs(&self) -> f64 {
        self.xi_abs
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn delta(&self) -> f64 {
        self.xi_abs / f64::from(self.steps)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, v: VertexId) -> Option<EditKind> {
        self.entries.get(&v.0).copied()
    }

    /// Entries in ascending vertex order.
    pub fn entries(&self) -> impl Iterator<Item = (VertexId, EditKind)> + '_ {
        self.entries.iter().map(|(&v, &k)| (VertexId(v), k))
    }

    /// Number of lossless entries.
    pub fn lossless_count(&self) -> usize {
        self.entries
            .values()
            .filter(|k| matches!(k, EditKind::Lossless(_)))
            .count()
    }

    /// Sets the entry for `v`, replacing any previous one.
    pub fn set(&mut self, v: VertexId, kind: EditKind) -> Result<()> {
        match kind {
            EditKind::Stepped(c) if c == 0 || c > self.steps => {
                return Err(Error::EditCorruption(format!(
                    "step count {c} at vertex {v} outside 1..={}",
                    self.steps
                )))
            }
            EditKind::Lossless(x) if !x.is_finite() => {
                return Err(Error::EditCorruption(format!(
                    "lossless value {x} at vertex {v}"
                )))
            }
            _ => {}
        }
        self.entries.insert(v.0, kind);
        Ok(())
    }

    /// Edited value of `v` given its decompressed value.
    #[inline]
    pub fn value_of(&self, kind: EditKind, fhat: f64) -> f64 {
        match kind {
            EditKind::Stepped(c) => step_value(fhat, c, self.xi_abs, self.steps),
            EditKind::Lossless(x) => x,
        }
    }
}

/// Applies `log` to `fhat`. Entries outside the field, or with step counts
/// outside `1..=N`, are rejected.
pub fn apply_edit_log(fhat: &ScalarField, log: &EditLog) -> Result<ScalarField> {
    let mut values = fhat.values().to_vec();
    for (v, kind) in log.entries() {
        let i = v.index();
        if i >= values.len() {
            return Err(Error::EditCorruption(format!(
                "vertex {v} outside a field of {} vertices",
                values.len()
            )));
        }
        values[i] = log.value_of(kind, values[i]);
    }
    fhat.with_values(values)
}

/// [`apply_edit_log`] followed by a check against the original field: every
/// edit must lower its vertex, stay within `[f - ξ, f + ξ]`, and lossless
/// values must equal `f_v - ξ` exactly.
pub fn apply_edit_log_checked(
    fhat: &ScalarField,
    log: &EditLog,
    f: &ScalarField,
) -> Result<ScalarField> {
    f.same_grid(fhat)?;
    let g = apply_edit_log(fhat, log)?;
    let xi = log.xi_abs();
    for (v, kind) in log.entries() {
        let i = v.index();
        let (fv, gv) = (f.value(i), g.value(i));
        let lb = lower_limit(fv, xi);
        if let EditKind::Lossless(x) = kind {
            if x.to_bits() != lb.to_bits() {
                return Err(Error::EditCorruption(format!(
                    "lossless value at vertex {v} is {x}, expected {lb}"
                )));
            }
        }
        if !within_bound(fv, gv, xi) || gv > fhat.value(i) {
            return Err(Error::EditCorruption(format!(
                "vertex {v} edited to {gv}, outside [{lb}, {}]",
                fhat.value(i).min(upper_limit(fv, xi))
            )));
        }
    }
    Ok(g)
}

/// Serializes with the default DEFLATE stage.
pub fn serialize_edit_log(log: &EditLog) -> Vec<u8> {
    serialize_edit_log_with(log, &Deflate::default())
}

pub fn serialize_edit_log_with(log: &EditLog, stage: &dyn LosslessStage) -> Vec<u8> {
    let mut body = Vec::with_capacity(20 + 3 * log.len());
    body.extend_from_slice(&log.xi_abs.to_le_bytes());
    body.extend_from_slice(&log.steps.to_le_bytes());
    body.extend_from_slice(&(log.len() as u64).to_le_bytes());
    let mut prev = 0u64;
    for (v, kind) in log.entries() {
        put_varint(&mut body, u64::from(v.0) - prev);
        prev = u64::from(v.0);
        match kind {
            EditKind::Stepped(c) => put_varint(&mut body, u64::from(c)),
            EditKind::Lossless(x) => {
                put_varint(&mut body, 0);
                body.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    let mut out = Vec::with_capacity(body.len() + 6);
    out.extend_from_slice(&EDIT_MAGIC);
    out.push(EDIT_VERSION);
    out.push(stage.id());
    out.extend_from_slice(&stage.encode(&body));
    out
}

pub fn deserialize_edit_log(bytes: &[u8]) -> Result<EditLog> {
    let mut r = Reader::new(bytes);
    let magic: [u8; 4] = r.array()?;
    if magic != EDIT_MAGIC {
        return Err(Error::BadMagic {
            expected: EDIT_MAGIC,
            found: magic,
        });
    }
    let version = r.u8()?;
    if version != EDIT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let stage = stage_by_id(r.u8()?)?;
    let body = stage.decode(r.rest())?;
    let mut b = Reader::new(&body);
    let xi = b.f64()?;
    let steps = b.u32()?;
    let count = b.u64()?;
    let mut log = EditLog::new(xi, steps).map_err(|e| Error::Corrupt(e.to_string()))?;
    let mut vertex = 0u64;
    for i in 0..count {
        let delta = b.varint()?;
        if i > 0 && delta == 0 {
            return Err(Error::Corrupt(format!(
                "duplicate entry for vertex {vertex}"
            )));
        }
        vertex = vertex
            .checked_add(delta)
            .filter(|&v| v <= u64::from(u32::MAX))
            .ok_or_else(|| Error::Corrupt("vertex id overflows".into()))?;
        let kind = match b.varint()? {
            0 => EditKind::Lossless(b.f64()?),
            c => EditKind::Stepped(
                u32::try_from(c).map_err(|_| Error::Corrupt(format!("step count {c}")))?,
            ),
        };
        log.set(VertexId(vertex as u32), kind)
            .map_err(|e| Error::Corrupt(e.to_string()))?;
    }
    b.finish()?;
    Ok(log)
}
