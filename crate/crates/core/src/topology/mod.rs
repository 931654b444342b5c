//! Critical points, integral paths, extremum graphs and merge trees.
//!
//! All comparisons use simulation of simplicity, so every vertex is either
//! regular or critical with no degenerate cases. A vertex is a minimum when
//! its lower link is empty, a maximum when its upper link is empty, a join
//! saddle when its lower link has at least two components and a split saddle
//! when its upper link does. The flags are independent. On grids where every
//! axis has length two or more, links are connected and extrema never carry a
//! saddle flag; on path-like grids a local maximum is also a join saddle.

mod extremum_graph;
mod merge_tree;
mod reference;

use std::ops::BitOr;

use serde::Serialize;

pub use extremum_graph::{build_extremum_graph, ExtremumGraph};
pub use merge_tree::{
    brute_force_merge_tree, egp_merge_tree, egp_trace, EgpTrace, MergeEvent, MergeTree,
};
pub use reference::{build_reference, ReferenceTopology};

pub(crate) use extremum_graph::extremum_graph_from_flags;

use crate::grid::{less, link_components, Grid, ScalarField, VertexId};
use crate::{par, Result};

/// Which sweep a structure belongs to: `Join` follows sublevel sets
/// (minima, join saddles, descending paths), `Split` follows superlevel sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Join,
    Split,
}

impl Polarity {
    pub const BOTH: [Polarity; 2] = [Polarity::Join, Polarity::Split];

    /// `a` is met before `b` in this polarity's sweep.
    #[inline]
    pub(crate) fn before(self, values: &[f64], a: usize, b: usize) -> bool {
        match self {
            Polarity::Join => less(values, a, b),
            Polarity::Split => less(values, b, a),
        }
    }

    pub(crate) fn extremum_flag(self) -> CpFlags {
        match self {
            Polarity::Join => CpFlags::MIN,
            Polarity::Split => CpFlags::MAX,
        }
    }

    pub(crate) fn saddle_flag(self) -> CpFlags {
        match self {
            Polarity::Join => CpFlags::JOIN,
            Polarity::Split => CpFlags::SPLIT,
        }
    }

    pub(crate) fn direction(self) -> Direction {
        match self {
            Polarity::Join => Direction::Descent,
            Polarity::Split => Direction::Ascent,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Descent,
    Ascent,
}

/// Bit set of critical point kinds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct CpFlags(pub u8);

impl CpFlags {
    pub const REGULAR: CpFlags = CpFlags(0);
    pub const MIN: CpFlags = CpFlags(1);
    pub const MAX: CpFlags = CpFlags(2);
    pub const JOIN: CpFlags = CpFlags(4);
    pub const SPLIT: CpFlags = CpFlags(8);

    #[inline]
    pub fn contains(self, other: CpFlags) -> bool {
        self.0 & other.0 == other.0 && other.0 != 0
    }

    #[inline]
    pub fn is_critical(self) -> bool {
        self.0 != 0
    }

    #[inline]
    pub fn is_saddle(self) -> bool {
        self.0 & (Self::JOIN.0 | Self::SPLIT.0) != 0
    }

    #[inline]
    pub fn is_extremum(self) -> bool {
        self.0 & (Self::MIN.0 | Self::MAX.0) != 0
    }
}

impl BitOr for CpFlags {
    type Output = CpFlags;
    fn bitor(self, rhs: CpFlags) -> CpFlags {
        CpFlags(self.0 | rhs.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct CriticalPoint {
    pub vertex: VertexId,
    pub is_min: bool,
    pub is_max: bool,
    pub is_join_saddle: bool,
    pub is_split_saddle: bool,
}

impl CriticalPoint {
    pub fn from_flags(vertex: VertexId, flags: CpFlags) -> Self {
        CriticalPoint {
            vertex,
            is_min: flags.contains(CpFlags::MIN),
            is_max: flags.contains(CpFlags::MAX),
            is_join_saddle: flags.contains(CpFlags::JOIN),
            is_split_saddle: flags.contains(CpFlags::SPLIT),
        }
    }

    pub fn flags(&self) -> CpFlags {
        let mut f = CpFlags::REGULAR;
        if self.is_min {
            f = f | CpFlags::MIN;
        }
        if self.is_max {
            f = f | CpFlags::MAX;
        }
        if self.is_join_saddle {
            f = f | CpFlags::JOIN;
        }
        if self.is_split_saddle {
            f = f | CpFlags::SPLIT;
        }
        f
    }
}

/// Lower and upper link of `v` as stencil-slot masks.
#[inline]
pub(crate) fn link_masks(grid: &Grid, values: &[f64], v: usize) -> (u16, u16) {
    let valid = grid.valid_mask(v);
    let mut lower = 0u16;
    let mut m = valid;
    while m != 0 {
        let k = m.trailing_zeros() as usize;
        m &= m - 1;
        if less(values, grid.slot_neighbor(v, k), v) {
            lower |= 1 << k;
        }
    }
    (lower, valid & !lower)
}

#[inline]
pub(crate) fn classify_vertex(grid: &Grid, values: &[f64], v: usize) -> CpFlags {
    let (lower, upper) = link_masks(grid, values, v);
    let mut flags = CpFlags::REGULAR;
    if lower == 0 {
        flags = flags | CpFlags::MIN;
    }
    if upper == 0 {
        flags = flags | CpFlags::MAX;
    }
    let adj = grid.link_adjacency();
    if link_components(lower, adj) >= 2 {
        flags = flags | CpFlags::JOIN;
    }
    if link_components(upper, adj) >= 2 {
        flags = flags | CpFlags::SPLIT;
    }
    flags
}

/// Per-vertex classification flags.
pub(crate) fn classify_flags(field: &ScalarField) -> Vec<CpFlags> {
    let grid = field.grid();
    let values = field.values();
    par::map_range(field.len(), |v| classify_vertex(grid, values, v))
}

pub(crate) fn flags_to_points(flags: &[CpFlags]) -> Vec<CriticalPoint> {
    flags
        .iter()
        .enumerate()
        .filter(|(_, f)| f.is_critical())
        .map(|(v, &f)| CriticalPoint::from_flags(VertexId::from(v), f))
        .collect()
}

/// Critical points of `field`, ascending by vertex id. Regular vertices are
/// omitted.
pub fn classify_critical_points(field: &ScalarField) -> Vec<CriticalPoint> {
    flags_to_points(&classify_flags(field))
}

/// The SoS-smallest (`Descent`) or SoS-largest (`Ascent`) neighbour of `v`.
#[inline]
pub(crate) fn extreme_neighbor(
    grid: &Grid,
    values: &[f64],
    v: usize,
    dir: Direction,
) -> Option<usize> {
    let mut best: Option<usize> = None;
    for u in grid.neighbors_iter(v) {
        best = match best {
            None => Some(u),
            Some(b) => {
                let better = match dir {
                    Direction::Descent => less(values, u, b),
                    Direction::Ascent => less(values, b, u),
                };
                Some(if better { u } else { b })
            }
        };
    }
    best
}

/// Next vertex on the steepest path from `v`, or `None` when `v` is the
/// extremum that ends it.
#[inline]
pub(crate) fn steepest_step(
    grid: &Grid,
    values: &[f64],
    v: usize,
    dir: Direction,
) -> Option<usize> {
    let u = extreme_neighbor(grid, values, v, dir)?;
    let moves = match dir {
        Direction::Descent => less(values, u, v),
        Direction::Ascent => less(values, v, u),
    };
    moves.then_some(u)
}

/// Follows steepest descent (or ascent) from `v` until an extremum is reached.
pub fn steepest_terminus(field: &ScalarField, v: VertexId, dir: Direction) -> Result<VertexId> {
    field.grid().check(v.index())?;
    let mut cur = v.index();
    while let Some(next) = steepest_step(field.grid(), field.values(), cur, dir) {
        cur = next;
    }
    Ok(VertexId::from(cur))
}

/// Terminus of the steepest path from every vertex.
pub(crate) fn all_termini(field: &ScalarField, dir: Direction) -> Vec<u32> {
    let grid = field.grid();
    let values = field.values();
    let next: Vec<u32> = par::map_range(field.len(), |v| {
        steepest_step(grid, values, v, dir).map_or(v as u32, |u| u as u32)
    });
    // Pointer jumping: each round halves the remaining path length.
    let mut term = next;
    loop {
        let jumped: Vec<u32> = par::map_range(term.len(), |v| term[term[v] as usize]);
        if jumped == term {
            return term;
        }
        term = jumped;
    }
}

/// Machine-readable dump of a field's topology.
#[derive(Clone, Debug, Serialize)]
pub struct TopologySummary {
    pub dims: Vec<usize>,
    pub critical_points: Vec<CriticalPointRecord>,
    /// `(saddle, extremum)` edges.
    pub join_graph: Vec<Link>,
    pub split_graph: Vec<Link>,
    /// `(extremum, saddle)` arcs, plus the root arc.
    pub join_tree: Vec<Link>,
    pub split_tree: Vec<Link>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Link {
    pub from: u32,
    pub to: u32,
    pub from_value: f64,
    pub to_value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalPointRecord {
    pub vertex: u32,
    pub value: f64,
    pub is_min: bool,
    pub is_max: bool,
    pub is_join_saddle: bool,
    pub is_split_saddle: bool,
}

impl TopologySummary {
    pub fn new(reference: &ReferenceTopology) -> Self {
        let f = reference.field();
        let pairs = |v: &[(VertexId, VertexId)]| {
            v.iter()
                .map(|&(a, b)| Link {
                    from: a.0,
                    to: b.0,
                    from_value: f.value(a.index()),
                    to_value: f.value(b.index()),
                })
                .collect()
        };
        TopologySummary {
            dims: f.dims().to_vec(),
            critical_points: reference
                .critical_points()
                .iter()
                .map(|cp| CriticalPointRecord {
                    vertex: cp.vertex.0,
                    value: f.value(cp.vertex.index()),
                    is_min: cp.is_min,
                    is_max: cp.is_max,
                    is_join_saddle: cp.is_join_saddle,
                    is_split_saddle: cp.is_split_saddle,
                })
                .collect(),
            join_graph: pairs(reference.extremum_graph(Polarity::Join).edges()),
            split_graph: pairs(reference.extremum_graph(Polarity::Split).edges()),
            join_tree: pairs(reference.merge_tree(Polarity::Join).arcs()),
            split_tree: pairs(reference.merge_tree(Polarity::Split).arcs()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(dims: &[usize], v: &[f64]) -> ScalarField {
        ScalarField::new(dims, v.to_vec()).unwrap()
    }

    /// Brute-force link analysis: components of the lower/upper neighbour
    /// sets under the "both are neighbours of each other" relation.
    fn brute_components(f: &ScalarField, v: usize, lower: bool) -> usize {
        let grid = f.grid();
        let nb: Vec<usize> = grid
            .neighbors_iter(v)
            .filter(|&u| f.less(u, v) == lower)
            .collect();
        let mut comp: Vec<usize> = (0..nb.len()).collect();
        let mut changed = true;
        while changed {
            changed = false;
            for i in 0..nb.len() {
                for j in 0..nb.len() {
                    if grid.adjacent(nb[i], nb[j]) && comp[j] < comp[i] {
                        comp[i] = comp[j];
                        changed = true;
                    }
                }
            }
        }
        let mut c = comp.clone();
        c.sort();
        c.dedup();
        c.len()
    }

    #[test]
    fn centre_minimum() {
        let f = field(&[3, 3], &[5.0, 5.0, 5.0, 5.0, 0.0, 5.0, 5.0, 5.0, 5.0]);
        let cps = classify_critical_points(&f);
        let centre = cps.iter().find(|c| c.vertex == VertexId(4)).unwrap();
        assert!(centre.is_min && !centre.is_join_saddle);
    }

    #[test]
    fn monotone_field_has_only_corner_extrema() {
        let f = ScalarField::from_fn(&[3, 3], |c| (c[1] + c[2]) as f64).unwrap();
        let cps = classify_critical_points(&f);
        assert_eq!(cps.len(), 2);
        assert!(cps[0].vertex == VertexId(0) && cps[0].is_min);
        assert!(cps[1].vertex == VertexId(8) && cps[1].is_max);
    }

    #[test]
    fn monkey_cross_is_both_saddles() {
        // two low and two high regions around the centre, along the link cycle
        // (1, 2, 5, 8, 7, 6? ..) of the Freudenthal stencil
        let f = field(&[3, 3], &[0.0, 5.0, 1.0, 5.0, 3.0, 5.0, 2.0, 5.0, 0.5]);
        let flags = classify_vertex(f.grid(), f.values(), 4);
        assert_eq!(brute_components(&f, 4, true), 2);
        assert_eq!(brute_components(&f, 4, false), 2);
        assert!(flags.contains(CpFlags::JOIN) && flags.contains(CpFlags::SPLIT));
    }

    #[test]
    fn classification_matches_brute_force_links() {
        let mut x = 12345u64;
        for dims in [vec![5, 6], vec![4, 4, 4], vec![1, 7]] {
            for _ in 0..10 {
                let n: usize = dims.iter().product();
                let vals: Vec<f64> = (0..n)
                    .map(|_| {
                        x ^= x << 13;
                        x ^= x >> 7;
                        x ^= x << 17;
                        (x % 5) as f64
                    })
                    .collect();
                let f = field(&dims, &vals);
                for v in 0..n {
                    let fl = classify_vertex(f.grid(), f.values(), v);
                    let lo = brute_components(&f, v, true);
                    let up = brute_components(&f, v, false);
                    assert_eq!(fl.contains(CpFlags::MIN), lo == 0);
                    assert_eq!(fl.contains(CpFlags::MAX), up == 0);
                    if lo > 0 && up > 0 {
                        assert_eq!(fl.contains(CpFlags::JOIN), lo >= 2);
                        assert_eq!(fl.contains(CpFlags::SPLIT), up >= 2);
                    }
                }
            }
        }
    }

    #[test]
    fn descent_on_monotone_field() {
        let f = ScalarField::from_fn(&[4, 5], |c| (c[1] + c[2]) as f64).unwrap();
        for v in 0..f.len() {
            assert_eq!(
                steepest_terminus(&f, VertexId::from(v), Direction::Descent).unwrap(),
                VertexId(0)
            );
            assert_eq!(
                steepest_terminus(&f, VertexId::from(v), Direction::Ascent).unwrap(),
                VertexId(19)
            );
        }
    }

    #[test]
    fn descent_from_minimum_stays() {
        let f = field(&[3, 3], &[5.0, 5.0, 5.0, 5.0, 0.0, 5.0, 5.0, 5.0, 5.0]);
        assert_eq!(
            steepest_terminus(&f, VertexId(4), Direction::Descent).unwrap(),
            VertexId(4)
        );
    }

    #[test]
    fn plateau_descent_follows_index_order() {
        // all equal: SoS makes the field strictly increasing in the index
        let f = field(&[3, 4], &[1.0; 12]);
        for v in 0..12 {
            // brute force: walk to the smallest-index neighbour as long as it
            // is smaller than the current vertex
            let mut cur = v;
            loop {
                let m = f.grid().neighbors_iter(cur).min().unwrap();
                if m < cur {
                    cur = m;
                } else {
                    break;
                }
            }
            assert_eq!(cur, 0);
            assert_eq!(
                steepest_terminus(&f, VertexId::from(v), Direction::Descent).unwrap(),
                VertexId::from(cur)
            );
        }
    }

    #[test]
    fn termini_match_single_walks() {
        let f = crate::synth::gaussian_mix(&[9, 11], 4, 3).unwrap();
        for dir in [Direction::Descent, Direction::Ascent] {
            let t = all_termini(&f, dir);
            for (v, &tv) in t.iter().enumerate() {
                assert_eq!(
                    tv as usize,
                    steepest_terminus(&f, VertexId::from(v), dir)
                        .unwrap()
                        .index()
                );
            }
        }
    }
}
