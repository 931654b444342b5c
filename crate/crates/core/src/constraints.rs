//! Violation detectors.
//!
//! Every detector compares an ordered pair `(a, b)` with `a` above `b` in the
//! original field. The pair is violated when `g` puts `a` below `b`, and the
//! fix is always to lower `b`: decreasing the vertex that should be lower is
//! the only way to restore the order with decrease-only edits. Violations
//! therefore carry `target = b` and `witness = a`.

use std::collections::HashMap;

use serde::Serialize;

use crate::corrector::CorrectionMode;
use crate::grid::{less, ScalarField, VertexId};
use crate::topology::{
    classify_flags, classify_vertex, egp_trace, extreme_neighbor, extremum_graph_from_flags,
    Direction, ExtremumGraph, Polarity, ReferenceTopology,
};
use crate::{par, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ViolationReason {
    /// A neighbour overtook the original largest neighbour, or the vertex
    /// rose above it.
    WrongMaxNeighbor,
    /// A neighbour dropped below the original smallest neighbour, or the
    /// vertex sank below it.
    WrongMinNeighbor,
    /// A saddle and one of its neighbours swapped.
    SaddleNeighborFlip,
    /// An extremum and a neighbour swapped, or a regular vertex changed type.
    CriticalTypeChange,
    /// Two saddles adjacent in the original saddle order swapped.
    SaddleOrderFlip,
    /// A merge event picked a different surviving extremum.
    EventPairFlip,
    /// Two critical points adjacent in the original order swapped.
    CpOrderFlip,
}

impl ViolationReason {
    pub const ALL: [ViolationReason; 7] = [
        ViolationReason::WrongMaxNeighbor,
        ViolationReason::WrongMinNeighbor,
        ViolationReason::SaddleNeighborFlip,
        ViolationReason::CriticalTypeChange,
        ViolationReason::SaddleOrderFlip,
        ViolationReason::EventPairFlip,
        ViolationReason::CpOrderFlip,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ViolationReason::WrongMaxNeighbor => "WrongMaxNeighbor",
            ViolationReason::WrongMinNeighbor => "WrongMinNeighbor",
            ViolationReason::SaddleNeighborFlip => "SaddleNeighborFlip",
            ViolationReason::CriticalTypeChange => "CriticalTypeChange",
            ViolationReason::SaddleOrderFlip => "SaddleOrderFlip",
            ViolationReason::EventPairFlip => "EventPairFlip",
            ViolationReason::CpOrderFlip => "CpOrderFlip",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Violation {
    /// Vertex to decrease.
    pub target: VertexId,
    pub reason: ViolationReason,
    /// The vertex `target` has to go below.
    pub witness: VertexId,
}

/// Checks the pair `{x, y}` and returns a violation if `g` disagrees with
/// the original order.
#[inline]
pub(crate) fn pair_violation(
    f: &[f64],
    g: &[f64],
    x: usize,
    y: usize,
    reason: ViolationReason,
) -> Option<Violation> {
    let (hi, lo) = if less(f, y, x) { (x, y) } else { (y, x) };
    less(g, hi, lo).then(|| Violation {
        target: VertexId::from(lo),
        reason,
        witness: VertexId::from(hi),
    })
}

/// Local constraints centred on vertex `i`. Reads `g` at `i` and its
/// neighbours only.
pub(crate) fn vertex_violations(
    reference: &ReferenceTopology,
    g: &[f64],
    i: usize,
    out: &mut Vec<Violation>,
) {
    let field = reference.field();
    let grid = field.grid();
    let f = field.values();
    let (Some(w_max), Some(w_min)) = (reference.n_max(i), reference.n_min(i)) else {
        return;
    };

    let g_max = extreme_neighbor(grid, g, i, Direction::Ascent).expect("vertex has neighbours");
    if g_max != w_max {
        out.push(Violation {
            target: VertexId::from(g_max),
            reason: ViolationReason::WrongMaxNeighbor,
            witness: VertexId::from(w_max),
        });
    }
    let g_min = extreme_neighbor(grid, g, i, Direction::Descent).expect("vertex has neighbours");
    if g_min != w_min {
        out.push(Violation {
            target: VertexId::from(w_min),
            reason: ViolationReason::WrongMinNeighbor,
            witness: VertexId::from(g_min),
        });
    }
    out.extend(pair_violation(
        f,
        g,
        i,
        w_max,
        ViolationReason::WrongMaxNeighbor,
    ));
    out.extend(pair_violation(
        f,
        g,
        i,
        w_min,
        ViolationReason::WrongMinNeighbor,
    ));

    let flags = reference.flags()[i];
    let reason = if flags.is_saddle() {
        ViolationReason::SaddleNeighborFlip
    } else if flags.is_critical() || classify_vertex(grid, g, i) != flags {
        ViolationReason::CriticalTypeChange
    } else {
        return;
    };
    for u in grid.neighbors_iter(i) {
        out.extend(pair_violation(f, g, i, u, reason));
    }
}

/// Adjacent pair `k, k + 1` of an ascending sequence.
#[inline]
pub(crate) fn sequence_violation(
    seq: &[u32],
    k: usize,
    g: &[f64],
    reason: ViolationReason,
) -> Option<Violation> {
    let (lo, hi) = (seq[k] as usize, seq[k + 1] as usize);
    less(g, hi, lo).then(|| Violation {
        target: VertexId::from(lo),
        reason,
        witness: VertexId::from(hi),
    })
}

fn check_dims(reference: &ReferenceTopology, g: &ScalarField) -> Result<()> {
    reference.field().same_grid(g)
}

fn canonical(mut v: Vec<Violation>) -> Vec<Violation> {
    v.sort_unstable();
    v.dedup();
    v
}

/// Critical-point and extremum-graph constraints: the original largest and
/// smallest neighbour of every vertex stay extreme, every critical point
/// keeps its order against all neighbours, and regular vertices stay
/// regular.
pub fn check_eg_constraints(
    reference: &ReferenceTopology,
    g: &ScalarField,
) -> Result<Vec<Violation>> {
    check_dims(reference, g)?;
    let gv = g.values();
    Ok(canonical(par::flat_map_range(g.len(), |i, out| {
        vertex_violations(reference, gv, i, out)
    })))
}

fn sequence_violations(seq: &[u32], g: &ScalarField, reason: ViolationReason) -> Vec<Violation> {
    let n = seq.len().saturating_sub(1);
    let gv = g.values();
    canonical(par::flat_map_range(n, |k, out| {
        out.extend(sequence_violation(seq, k, gv, reason))
    }))
}

/// Saddles adjacent in the original order must stay in that order.
pub fn check_saddle_ordering(
    reference: &ReferenceTopology,
    g: &ScalarField,
) -> Result<Vec<Violation>> {
    check_dims(reference, g)?;
    Ok(sequence_violations(
        reference.sorted_saddles(),
        g,
        ViolationReason::SaddleOrderFlip,
    ))
}

/// Critical points adjacent in the original order must stay in that order.
pub fn check_event_constraints_reformulated(
    reference: &ReferenceTopology,
    g: &ScalarField,
) -> Result<Vec<Violation>> {
    check_dims(reference, g)?;
    Ok(sequence_violations(
        reference.sorted_critical_points(),
        g,
        ViolationReason::CpOrderFlip,
    ))
}

/// Join and split extremum graphs of `g`.
pub fn extremum_graphs(g: &ScalarField) -> [ExtremumGraph; 2] {
    let flags = classify_flags(g);
    Polarity::BOTH.map(|p| extremum_graph_from_flags(g, &flags, p))
}

/// Merge events of `g` computed on its own extremum graphs. When a saddle
/// merges the same components as in the original but a different extremum
/// survives, the survivor and the intruder are out of order; lowering the
/// one that is lower in the original restores the choice. Events whose
/// component sets differ are left alone: they follow from an earlier event
/// or from an extremum-graph change that the other detectors report.
pub fn check_event_constraints_original(
    reference: &ReferenceTopology,
    g: &ScalarField,
    eg_g: &[ExtremumGraph; 2],
) -> Result<Vec<Violation>> {
    check_dims(reference, g)?;
    let f = reference.field().values();
    let gv = g.values();
    let mut out = Vec::new();
    for (p, eg) in Polarity::BOTH.into_iter().zip(eg_g) {
        if eg.polarity() != p {
            return Err(Error::InvalidArgument(
                "extremum graphs must be ordered join, split".into(),
            ));
        }
        let trace = egp_trace(eg, g)?;
        let by_saddle: HashMap<VertexId, &[VertexId]> = trace
            .events
            .iter()
            .map(|e| (e.saddle, e.reps.as_slice()))
            .collect();
        for event in reference.merge_events(p) {
            let Some(&reps_g) = by_saddle.get(&event.saddle) else {
                continue;
            };
            if reps_g[0] == event.survivor() || reps_g.len() != event.reps.len() {
                continue;
            }
            let mut a: Vec<VertexId> = event.reps.clone();
            let mut b: Vec<VertexId> = reps_g.to_vec();
            a.sort_unstable();
            b.sort_unstable();
            if a != b {
                continue;
            }
            let r = event.survivor().index();
            for &x in event.paired() {
                out.extend(pair_violation(
                    f,
                    gv,
                    r,
                    x.index(),
                    ViolationReason::EventPairFlip,
                ));
            }
        }
    }
    Ok(canonical(out))
}

/// All detectors for `mode`, sorted by target and deduplicated.
pub fn check_all(
    reference: &ReferenceTopology,
    g: &ScalarField,
    mode: CorrectionMode,
) -> Result<Vec<Violation>> {
    let mut all = check_eg_constraints(reference, g)?;
    all.extend(check_saddle_ordering(reference, g)?);
    match mode {
        CorrectionMode::Reformulated => {
            all.extend(check_event_constraints_reformulated(reference, g)?)
        }
        CorrectionMode::Original => {
            let eg_g = extremum_graphs(g);
            all.extend(check_event_constraints_original(reference, g, &eg_g)?)
        }
    }
    Ok(canonical(all))
}

/// Distinct targets of `violations`, ascending.
pub fn targets(violations: &[Violation]) -> Vec<VertexId> {
    let mut t: Vec<VertexId> = violations.iter().map(|v| v.target).collect();
    t.sort_unstable();
    t.dedup();
    t
}
