//! Regular grids, piecewise-linear connectivity and the vertex total order.
//!
//! Every grid is handled internally as a 3D block `[d0, d1, d2]` with the
//! last axis fastest; 2D inputs are padded with a leading axis of length 1.
//! Connectivity is the Freudenthal triangulation: a vertex is adjacent to
//! every `v ± e` with `e` a non-zero vector in `{0,1}^3`, clipped at the
//! domain boundary. That gives 6 neighbours in 2D and 14 in 3D.

mod io;

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use io::{
    decode_field, encode_field, load_field, load_field_with_dtype, save_field, save_field_as, DType,
};

use crate::{Error, Result};

/// Maximum number of neighbours of a vertex.
pub const MAX_NEIGHBORS: usize = 14;

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct VertexId(pub u32);

impl VertexId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for VertexId {
    #[inline]
    fn from(idx: usize) -> Self {
        VertexId(idx as u32)
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A value paired with its vertex id. Ties on the value are broken by the
/// id, so keys of one field are always strictly ordered.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SosKey {
    pub value: f64,
    pub idx: VertexId,
}

impl SosKey {
    pub fn new(value: f64, idx: VertexId) -> Self {
        SosKey { value, idx }
    }
}

impl Eq for SosKey {}

impl Ord for SosKey {
    fn cmp(&self, other: &Self) -> Ordering {
        if self.value < other.value {
            Ordering::Less
        } else if self.value > other.value {
            Ordering::Greater
        } else {
            self.idx.cmp(&other.idx)
        }
    }
}

impl PartialOrd for SosKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn sos_less(a: SosKey, b: SosKey) -> bool {
    a.value < b.value || (a.value == b.value && a.idx < b.idx)
}

/// `values[a] < values[b]` under simulation of simplicity.
#[inline]
pub(crate) fn less(values: &[f64], a: usize, b: usize) -> bool {
    let (x, y) = (values[a], values[b]);
    x < y || (x == y && a < b)
}

/// Vertex ids sorted ascending under simulation of simplicity.
pub(crate) fn sorted_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_unstable_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

#[derive(Clone, Copy, Debug)]
struct Offset {
    delta: [isize; 3],
    linear: isize,
}

#[derive(Clone, Debug)]
pub struct Grid {
    dims: Vec<usize>,
    shape: [usize; 3],
    offsets: Vec<Offset>,
    link_adj: [u16; MAX_NEIGHBORS],
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims
    }
}

impl Grid {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.len() != 2 && dims.len() != 3 {
            return Err(Error::InvalidDims(format!(
                "expected 2 or 3 axes, got {}",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidDims(format!("zero-length axis in {dims:?}")));
        }
        let total = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        match total {
            Some(t) if t <= u32::MAX as usize => {}
            _ => {
                return Err(Error::InvalidDims(format!(
                    "{dims:?} exceeds the supported vertex count"
                )))
            }
        }
        let shape = if dims.len() == 2 {
            [1, dims[0], dims[1]]
        } else {
            [dims[0], dims[1], dims[2]]
        };
        let strides = [(shape[1] * shape[2]) as isize, shape[2] as isize, 1isize];

        let mut offsets = Vec::with_capacity(MAX_NEIGHBORS);
        for bits in 1u8..8 {
            let e = [
                ((bits >> 2) & 1) as isize,
                ((bits >> 1) & 1) as isize,
                (bits & 1) as isize,
            ];
            for sign in [1isize, -1] {
                let delta = [sign * e[0], sign * e[1], sign * e[2]];
                let linear = delta[0] * strides[0] + delta[1] * strides[1] + delta[2];
                offsets.push(Offset { delta, linear });
            }
        }
        offsets.sort_by_key(|o| (o.linear, o.delta));

        let mut link_adj = [0u16; MAX_NEIGHBORS];
        for (k, a) in offsets.iter().enumerate() {
            for (l, b) in offsets.iter().enumerate() {
                let d = [
                    b.delta[0] - a.delta[0],
                    b.delta[1] - a.delta[1],
                    b.delta[2] - a.delta[2],
                ];
                if offsets.iter().any(|o| o.delta == d) {
                    link_adj[k] |= 1 << l;
                }
            }
        }

        Ok(Grid {
            dims: dims.to_vec(),
            shape,
            offsets,
            link_adj,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn coords(&self, v: usize) -> [usize; 3] {
        let plane = self.shape[1] * self.shape[2];
        [
            v / plane,
            (v / self.shape[2]) % self.shape[1],
            v % self.shape[2],
        ]
    }

    #[inline]
    pub fn index(&self, c: [usize; 3]) -> usize {
        (c[0] * self.shape[1] + c[1]) * self.shape[2] + c[2]
    }

    pub fn check(&self, v: usize) -> Result<()> {
        if v < self.len() {
            Ok(())
        } else {
            Err(Error::InvalidVertex {
                idx: v,
                len: self.len(),
            })
        }
    }

    /// Bit `k` is set when stencil slot `k` is inside the domain.
    #[inline]
    pub(crate) fn valid_mask(&self, v: usize) -> u16 {
        let c = self.coords(v);
        let mut mask = 0u16;
        for (k, o) in self.offsets.iter().enumerate() {
            let inside = (0..3).all(|a| {
                let x = c[a] as isize + o.delta[a];
                x >= 0 && (x as usize) < self.shape[a]
            });
            if inside {
                mask |= 1 << k;
            }
        }
        mask
    }

    /// Neighbour id in stencil slot `k`; only meaningful for valid slots.
    #[inline]
    pub(crate) fn slot_neighbor(&self, v: usize, k: usize) -> usize {
        (v as isize + self.offsets[k].linear) as usize
    }

    /// For slot `k`, the set of slots that are adjacent to it inside the link.
    #[inline]
    pub(crate) fn link_adjacency(&self) -> &[u16; MAX_NEIGHBORS] {
        &self.link_adj
    }

    /// Neighbours of `v`, ascending by id.
    #[inline]
    pub fn neighbors_iter(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        let mask = self.valid_mask(v);
        (0..self.offsets.len())
            .filter(move |k| mask & (1 << k) != 0)
            .map(move |k| self.slot_neighbor(v, k))
    }

    pub fn neighbors(&self, v: VertexId) -> Result<Vec<VertexId>> {
        self.check(v.index())?;
        Ok(self.neighbors_iter(v.index()).map(VertexId::from).collect())
    }

    /// Whether `a` and `b` share an edge of the triangulation.
    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.neighbors_iter(a).any(|u| u == b)
    }
}

/// Number of connected components of `mask` inside the link graph.
#[inline]
pub(crate) fn link_components(mask: u16, adj: &[u16; MAX_NEIGHBORS]) -> u32 {
    let mut rest = mask;
    let mut count = 0;
    while rest != 0 {
        count += 1;
        let mut frontier = rest & rest.wrapping_neg();
        let mut seen = frontier;
        while frontier != 0 {
            let k = frontier.trailing_zeros() as usize;
            frontier &= frontier - 1;
            let next = adj[k] & mask & !seen;
            seen |= next;
            frontier |= next;
        }
        rest &= !seen;
    }
    count
}

/// A scalar field on a regular grid. Values are held as `f64` regardless of
/// the on-disk precision.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
    range: (f64, f64),
}

impl ScalarField {
    pub fn new(dims: &[usize], values: Vec<f64>) -> Result<Self> {
        let grid = Grid::new(dims)?;
        Self::on_grid(grid, values)
    }

    pub fn on_grid(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidDims(format!(
                "{:?} needs {} values, got {}",
                grid.dims(),
                grid.len(),
                values.len()
            )));
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { idx });
        }
        let range = value_range(&values);
        Ok(ScalarField {
            grid,
            values,
            range,
        })
    }

    pub fn from_fn(dims: &[usize], mut f: impl FnMut([usize; 3]) -> f64) -> Result<Self> {
        let grid = Grid::new(dims)?;
        let values = (0..grid.len()).map(|v| f(grid.coords(v))).collect();
        Self::on_grid(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> &[usize] {
        self.grid.dims()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn value(&self, v: usize) -> f64 {
        self.values[v]
    }

    pub fn value_range(&self) -> (f64, f64) {
        self.range
    }

    pub fn span(&self) -> f64 {
        self.range.1 - self.range.0
    }

    #[inline]
    pub fn key(&self, v: usize) -> SosKey {
        SosKey::new(self.values[v], VertexId::from(v))
    }

    /// `self[a] < self[b]` under simulation of simplicity.
    #[inline]
    pub fn less(&self, a: usize, b: usize) -> bool {
        less(&self.values, a, b)
    }

    pub fn same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.dims() == other.dims() {
            Ok(())
        } else {
            Err(Error::DimMismatch {
                left: self.dims().to_vec(),
                right: other.dims().to_vec(),
            })
        }
    }

    pub fn negated(&self) -> ScalarField {
        let values: Vec<f64> = self.values.iter().map(|v| -v).collect();
        let range = value_range(&values);
        ScalarField {
            grid: self.grid.clone(),
            values,
            range,
        }
    }

    /// Overwrites one value. Callers keep values finite.
    pub(crate) fn set(&mut self, v: usize, value: f64) {
        debug_assert!(value.is_finite());
        self.values[v] = value;
    }

    pub(crate) fn refresh_range(&mut self) {
        self.range = value_range(&self.values);
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<ScalarField> {
        Self::on_grid(self.grid.clone(), values)
    }
}

fn value_range(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(v: Vec<VertexId>) -> Vec<u32> {
        v.into_iter().map(|v| v.0).collect()
    }

    #[test]
    fn center_link_2d() {
        let g = Grid::new(&[3, 3]).unwrap();
        assert_eq!(
            ids(g.neighbors(VertexId(4)).unwrap()),
            vec![0, 1, 3, 5, 7, 8]
        );
    }

    #[test]
    fn corner_link_is_clipped() {
        let g = Grid::new(&[3, 3]).unwrap();
        assert_eq!(ids(g.neighbors(VertexId(0)).unwrap()), vec![1, 3, 4]);
        assert_eq!(ids(g.neighbors(VertexId(8)).unwrap()), vec![4, 5, 7]);
    }

    #[test]
    fn center_link_3d_has_14() {
        let g = Grid::new(&[3, 3, 3]).unwrap();
        assert_eq!(g.neighbors(VertexId(13)).unwrap().len(), 14);
    }

    #[test]
    fn row_is_a_path() {
        let g = Grid::new(&[1, 5]).unwrap();
        assert_eq!(ids(g.neighbors(VertexId(0)).unwrap()), vec![1]);
        assert_eq!(ids(g.neighbors(VertexId(2)).unwrap()), vec![1, 3]);
    }

    #[test]
    fn out_of_range_vertex() {
        let g = Grid::new(&[3, 3]).unwrap();
        assert!(matches!(
            g.neighbors(VertexId(9)),
            Err(Error::InvalidVertex { idx: 9, len: 9 })
        ));
    }

    #[test]
    fn adjacency_is_symmetric() {
        for dims in [vec![4, 5], vec![3, 4, 5], vec![1, 6], vec![2, 1, 3]] {
            let g = Grid::new(&dims).unwrap();
            for v in 0..g.len() {
                for u in g.neighbors_iter(v) {
                    assert!(g.adjacent(u, v), "{dims:?}: {u} -> {v} missing");
                }
                let n: Vec<usize> = g.neighbors_iter(v).collect();
                assert!(n.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn link_of_interior_2d_vertex_is_a_cycle() {
        let g = Grid::new(&[3, 3]).unwrap();
        let mask = g.valid_mask(4);
        assert_eq!(mask.count_ones(), 6);
        assert_eq!(link_components(mask, g.link_adjacency()), 1);
        // every link vertex has exactly two link neighbours
        for k in 0..MAX_NEIGHBORS {
            if mask & (1 << k) != 0 {
                assert_eq!((g.link_adjacency()[k] & mask).count_ones(), 2);
            }
        }
    }

    #[test]
    fn sos_examples() {
        let k = |v, i| SosKey::new(v, VertexId(i));
        assert!(sos_less(k(5.0, 3), k(5.0, 7)));
        assert!(sos_less(k(1.0, 9), k(2.0, 0)));
        assert!(!sos_less(k(2.0, 0), k(1.0, 9)));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ScalarField::new(&[2, 2], vec![0.0; 3]).is_err());
        assert!(matches!(
            ScalarField::new(&[2, 2], vec![0.0, f64::NAN, 0.0, 0.0]),
            Err(Error::NonFinite { idx: 1 })
        ));
        assert!(Grid::new(&[4]).is_err());
        assert!(Grid::new(&[0, 3]).is_err());
    }

    proptest! {
        #[test]
        fn sos_is_a_strict_total_order(
            keys in proptest::collection::vec((-3i8..3, 0u32..16), 1..24)
        ) {
            let keys: Vec<SosKey> = keys
                .into_iter()
                .map(|(v, i)| SosKey::new(v as f64 * 0.5, VertexId(i)))
                .collect();
            for &a in &keys {
                prop_assert!(!sos_less(a, a));
                for &b in &keys {
                    if a.idx != b.idx {
                        prop_assert!(sos_less(a, b) ^ sos_less(b, a));
                    }
                    for &c in &keys {
                        if sos_less(a, b) && sos_less(b, c) {
                            prop_assert!(sos_less(a, c));
                        }
                    }
                    prop_assert_eq!(sos_less(a, b), a < b);
                }
            }
        }
    }
}
