use super::{ExtremumGraph, Polarity};
use crate::dsu::DisjointSets;
use crate::grid::{sorted_order, ScalarField, VertexId};
use crate::{Error, Result};

/// Branches of a join (or split) tree: one `(extremum, saddle)` arc per
/// non-global extremum plus the root arc `(global extremum, opposite end)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MergeTree {
    polarity: Polarity,
    arcs: Vec<(VertexId, VertexId)>,
}

impl MergeTree {
    fn new(polarity: Polarity, mut arcs: Vec<(VertexId, VertexId)>) -> Self {
        arcs.sort_unstable();
        MergeTree { polarity, arcs }
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    /// Sorted arc list.
    pub fn arcs(&self) -> &[(VertexId, VertexId)] {
        &self.arcs
    }
}

/// One merge: the components whose oldest extrema are `reps` meet at
/// `saddle`. `reps` is in sweep order, so `reps[0]` survives and every other
/// entry is paired with the saddle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MergeEvent {
    pub saddle: VertexId,
    pub reps: Vec<VertexId>,
}

impl MergeEvent {
    pub fn survivor(&self) -> VertexId {
        self.reps[0]
    }

    pub fn paired(&self) -> &[VertexId] {
        &self.reps[1..]
    }
}

#[derive(Clone, Debug)]
pub struct EgpTrace {
    pub tree: MergeTree,
    /// Merge events in sweep order.
    pub events: Vec<MergeEvent>,
}

/// Extremum graph pairing.
///
/// Saddles are visited in sweep order. Each one gathers the components of
/// the extrema it is connected to; when it touches two or more, every
/// component except the one holding the oldest extremum ends there and its
/// oldest extremum is paired with the saddle. Components then merge, so a
/// saddle whose extrema already share a component produces nothing.
pub fn egp_merge_tree(eg: &ExtremumGraph, field: &ScalarField) -> Result<MergeTree> {
    egp_trace(eg, field).map(|t| t.tree)
}

pub fn egp_trace(eg: &ExtremumGraph, field: &ScalarField) -> Result<EgpTrace> {
    let n = field.len();
    let values = field.values();
    let polarity = eg.polarity();
    let out_of_range = eg
        .edges()
        .iter()
        .flat_map(|&(s, e)| [s, e])
        .chain(eg.extrema().iter().copied())
        .find(|v| v.index() >= n);
    if let Some(v) = out_of_range {
        return Err(Error::InvalidArgument(format!(
            "extremum graph vertex {v} outside a field of {n} vertices"
        )));
    }
    if eg.extrema().is_empty() {
        return Err(Error::InvalidArgument(
            "extremum graph has no extrema".into(),
        ));
    }

    let slot = |v: VertexId| eg.extrema().binary_search(&v);
    let mut sets = DisjointSets::new(eg.extrema().len());
    let mut oldest: Vec<usize> = eg.extrema().iter().map(|v| v.index()).collect();

    let mut saddles: Vec<usize> = eg.saddles().iter().map(|v| v.index()).collect();
    saddles.sort_unstable_by(|&a, &b| {
        if polarity.before(values, a, b) {
            std::cmp::Ordering::Less
        } else {
            std::cmp::Ordering::Greater
        }
    });

    let mut arcs = Vec::new();
    let mut events = Vec::new();
    for s in saddles {
        let mut roots: Vec<usize> = Vec::new();
        for e in eg.extrema_of(VertexId::from(s)) {
            let i = slot(e).map_err(|_| {
                Error::InvalidArgument(format!("edge ({s}, {e}) ends in a non-extremum"))
            })?;
            let r = sets.find(i);
            if !roots.contains(&r) {
                roots.push(r);
            }
        }
        if roots.len() < 2 {
            continue;
        }
        let mut reps: Vec<usize> = roots.iter().map(|&r| oldest[r]).collect();
        reps.sort_unstable_by(|&a, &b| {
            if polarity.before(values, a, b) {
                std::cmp::Ordering::Less
            } else {
                std::cmp::Ordering::Greater
            }
        });
        for &m in &reps[1..] {
            arcs.push((VertexId::from(m), VertexId::from(s)));
        }
        let mut root = roots[0];
        for &r in &roots[1..] {
            root = sets.union(root, r);
        }
        oldest[root] = reps[0];
        events.push(MergeEvent {
            saddle: VertexId::from(s),
            reps: reps.into_iter().map(VertexId::from).collect(),
        });
    }

    let (first, last) = sweep_ends(values, polarity);
    arcs.push((VertexId::from(first), VertexId::from(last)));
    Ok(EgpTrace {
        tree: MergeTree::new(polarity, arcs),
        events,
    })
}

fn sweep_ends(values: &[f64], polarity: Polarity) -> (usize, usize) {
    let (mut lo, mut hi) = (0, 0);
    for v in 1..values.len() {
        if crate::grid::less(values, v, lo) {
            lo = v;
        }
        if crate::grid::less(values, hi, v) {
            hi = v;
        }
    }
    match polarity {
        Polarity::Join => (lo, hi),
        Polarity::Split => (hi, lo),
    }
}

/// Merge tree from a union-find sweep over the whole field.
///
/// Vertices are added in sweep order and united with their already-added
/// neighbours; a vertex that has none starts a component, a vertex touching
/// several components is a merge that ends all but the oldest one.
pub fn brute_force_merge_tree(field: &ScalarField, polarity: Polarity) -> MergeTree {
    let grid = field.grid();
    let mut order = sorted_order(field.values());
    if polarity == Polarity::Split {
        order.reverse();
    }
    let n = field.len();
    let mut position = vec![0usize; n];
    for (i, &v) in order.iter().enumerate() {
        position[v] = i;
    }
    let mut sets = DisjointSets::new(n);
    let mut oldest: Vec<usize> = (0..n).collect();
    let mut arcs = Vec::new();
    for (i, &v) in order.iter().enumerate() {
        let mut roots: Vec<usize> = Vec::new();
        for u in grid.neighbors_iter(v) {
            if position[u] < i {
                let r = sets.find(u);
                if !roots.contains(&r) {
                    roots.push(r);
                }
            }
        }
        if roots.is_empty() {
            continue;
        }
        let mut reps: Vec<usize> = roots.iter().map(|&r| oldest[r]).collect();
        reps.sort_unstable_by_key(|&m| position[m]);
        for &m in &reps[1..] {
            arcs.push((VertexId::from(m), VertexId::from(v)));
        }
        let mut root = sets.union(roots[0], v);
        for &r in &roots[1..] {
            root = sets.union(root, r);
        }
        oldest[root] = reps[0];
    }
    arcs.push((VertexId::from(order[0]), VertexId::from(order[n - 1])));
    MergeTree::new(polarity, arcs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_extremum_graph, classify_critical_points};

    fn egp(f: &ScalarField, p: Polarity) -> MergeTree {
        let eg = build_extremum_graph(f, &classify_critical_points(f), p).unwrap();
        egp_merge_tree(&eg, f).unwrap()
    }

    fn arcs(t: &MergeTree) -> Vec<(u32, u32)> {
        t.arcs().iter().map(|(a, b)| (a.0, b.0)).collect()
    }

    #[test]
    fn higher_minimum_pairs_first() {
        // m1 = 0 (value 1.0) is above m2 = 4 (value 0.0): (m1, i) is the branch
        let f = ScalarField::new(&[1, 5], vec![1.0, 1.5, 2.0, 1.2, 0.0]).unwrap();
        let t = egp(&f, Polarity::Join);
        assert_eq!(arcs(&t), vec![(0, 2), (4, 2)]);
        // root arc runs from the global minimum to the global maximum
        assert!(t.arcs().contains(&(VertexId(4), VertexId(2))));
    }

    #[test]
    fn single_minimum_is_lone_root_arc() {
        let f = ScalarField::from_fn(&[4, 4], |c| (c[1] * 4 + c[2]) as f64).unwrap();
        assert_eq!(arcs(&egp(&f, Polarity::Join)), vec![(0, 15)]);
        assert_eq!(
            arcs(&brute_force_merge_tree(&f, Polarity::Join)),
            vec![(0, 15)]
        );
    }

    #[test]
    fn constant_field_sweeps_by_index() {
        let f = ScalarField::new(&[3, 3], vec![2.0; 9]).unwrap();
        assert_eq!(
            arcs(&brute_force_merge_tree(&f, Polarity::Join)),
            vec![(0, 8)]
        );
        assert_eq!(
            arcs(&brute_force_merge_tree(&f, Polarity::Split)),
            vec![(8, 0)]
        );
        assert_eq!(arcs(&egp(&f, Polarity::Join)), vec![(0, 8)]);
    }

    #[test]
    fn two_basins() {
        let f = ScalarField::new(&[1, 5], vec![0.0, 1.0, 2.0, 1.5, 0.5]).unwrap();
        // union-find by hand: 0 starts, 4 starts, 3 joins 4, 1 joins 0,
        // 2 merges {0,1} and {3,4}: the younger minimum 4 dies at 2
        assert_eq!(
            arcs(&brute_force_merge_tree(&f, Polarity::Join)),
            vec![(0, 2), (4, 2)]
        );
        assert_eq!(arcs(&egp(&f, Polarity::Join)), vec![(0, 2), (4, 2)]);
    }

    #[test]
    fn five_critical_point_profile() {
        // minima 0, 2, 4 and join saddles 1, 3 on a path
        let f = ScalarField::new(&[1, 5], vec![0.2, 3.0, 0.0, 2.0, 0.5]).unwrap();
        let t = egp(&f, Polarity::Join);
        // 4 (0.5) dies at 3 (2.0); then 0 (0.2) dies at 1 (3.0)
        assert_eq!(arcs(&t), vec![(0, 1), (2, 1), (4, 3)]);
        assert_eq!(t, brute_force_merge_tree(&f, Polarity::Join));
    }

    #[test]
    fn random_fields_agree_with_union_find() {
        for seed in 0..30 {
            let f = crate::synth::random_field(&[5, 5], seed);
            for p in Polarity::BOTH {
                assert_eq!(
                    egp(&f, p),
                    brute_force_merge_tree(&f, p),
                    "seed {seed} {p:?}"
                );
            }
        }
    }

    #[test]
    fn every_extremum_in_one_arc() {
        let f = crate::synth::random_field(&[6, 7], 3);
        let cps = classify_critical_points(&f);
        let t = egp(&f, Polarity::Join);
        for cp in cps.iter().filter(|c| c.is_min) {
            let n = t.arcs().iter().filter(|(m, _)| *m == cp.vertex).count();
            assert_eq!(n, 1);
        }
    }
}
