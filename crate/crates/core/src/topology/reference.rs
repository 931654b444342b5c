use super::{
    all_termini, classify_flags, egp_trace, extreme_neighbor,
    extremum_graph::extremum_graph_with_termini, flags_to_points, CpFlags, CriticalPoint,
    Direction, EgpTrace, ExtremumGraph, MergeEvent, MergeTree, Polarity,
};
use crate::grid::{sorted_order, ScalarField};
use crate::{par, Result};

const NONE: u32 = u32::MAX;

/// Everything the correction needs to know about the original field.
#[derive(Clone, Debug)]
pub struct ReferenceTopology {
    field: ScalarField,
    flags: Vec<CpFlags>,
    critical_points: Vec<CriticalPoint>,
    n_min: Vec<u32>,
    n_max: Vec<u32>,
    sorted_saddles: Vec<u32>,
    sorted_critical: Vec<u32>,
    graphs: [ExtremumGraph; 2],
    traces: [EgpTrace; 2],
}

fn slot(p: Polarity) -> usize {
    match p {
        Polarity::Join => 0,
        Polarity::Split => 1,
    }
}

pub fn build_reference(field: &ScalarField) -> Result<ReferenceTopology> {
    let grid = field.grid();
    let values = field.values();
    let flags = classify_flags(field);
    let critical_points = flags_to_points(&flags);

    let (n_min, n_max): (Vec<u32>, Vec<u32>) = par::map_range(field.len(), |v| {
        let lo = extreme_neighbor(grid, values, v, Direction::Descent).map_or(NONE, |u| u as u32);
        let hi = extreme_neighbor(grid, values, v, Direction::Ascent).map_or(NONE, |u| u as u32);
        (lo, hi)
    })
    .into_iter()
    .unzip();

    let order = sorted_order(values);
    let sorted_saddles = order
        .iter()
        .filter(|&&v| flags[v].is_saddle())
        .map(|&v| v as u32)
        .collect();
    let sorted_critical = order
        .iter()
        .filter(|&&v| flags[v].is_critical())
        .map(|&v| v as u32)
        .collect();

    let build = |p: Polarity| -> Result<(ExtremumGraph, EgpTrace)> {
        let termini = all_termini(field, p.direction());
        let eg = extremum_graph_with_termini(field, &flags, p, &termini);
        let trace = egp_trace(&eg, field)?;
        Ok((eg, trace))
    };
    let (join_eg, join_trace) = build(Polarity::Join)?;
    let (split_eg, split_trace) = build(Polarity::Split)?;

    Ok(ReferenceTopology {
        field: field.clone(),
        flags,
        critical_points,
        n_min,
        n_max,
        sorted_saddles,
        sorted_critical,
        graphs: [join_eg, split_eg],
        traces: [join_trace, split_trace],
    })
}

impl ReferenceTopology {
    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn flags(&self) -> &[CpFlags] {
        &self.flags
    }

    pub fn critical_points(&self) -> &[CriticalPoint] {
        &self.critical_points
    }

    /// Smallest neighbour of `v` in the original field.
    #[inline]
    pub fn n_min(&self, v: usize) -> Option<usize> {
        let u = self.n_min[v];
        (u != NONE).then_some(u as usize)
    }

    /// Largest neighbour of `v` in the original field.
    #[inline]
    pub fn n_max(&self, v: usize) -> Option<usize> {
        let u = self.n_max[v];
        (u != NONE).then_some(u as usize)
    }

    /// Saddles (of either kind) in ascending original order.
    pub fn sorted_saddles(&self) -> &[u32] {
        &self.sorted_saddles
    }

    /// All critical points in ascending original order.
    pub fn sorted_critical_points(&self) -> &[u32] {
        &self.sorted_critical
    }

    pub fn extremum_graph(&self, p: Polarity) -> &ExtremumGraph {
        &self.graphs[slot(p)]
    }

    pub fn merge_tree(&self, p: Polarity) -> &MergeTree {
        &self.traces[slot(p)].tree
    }

    pub fn merge_events(&self, p: Polarity) -> &[MergeEvent] {
        &self.traces[slot(p)].events
    }
}
