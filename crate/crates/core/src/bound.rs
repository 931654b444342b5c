//! Vulnerability graphs and the iteration bound.
//!
//! A pair of vertices is *vulnerable* when some detector compares it and
//! the `ξ` bands around the two original values overlap, so the compressor
//! or an edit could swap them. Edges point from the vertex that is larger in
//! `f` to the smaller one, which makes every stage acyclic. The strong stage
//! keeps pairs whose lower vertex can still reach the upper vertex's lower
//! bound, and the reduced stage keeps what is reachable from pairs already
//! swapped in `f̂`. Its longest path, counted in vertices, bounds how far a
//! cascade of edits can travel.

use std::collections::VecDeque;
use std::sync::OnceLock;

use serde::Serialize;

use crate::compressor::{lower_limit, upper_limit, EditLog};
use crate::grid::{less, ScalarField};
use crate::topology::{Polarity, ReferenceTopology};
use crate::{par, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Weak,
    Strong,
    Reduced,
}

#[derive(Clone, Debug)]
pub struct VulnerabilityGraph {
    stage: Stage,
    n: usize,
    /// `(upper, lower)` pairs, sorted.
    edges: Vec<(u32, u32)>,
    seeds: Vec<(u32, u32)>,
    d_max: OnceLock<usize>,
}

impl VulnerabilityGraph {
    /// Graph over `n` vertices. Edges are sorted and deduplicated.
    pub fn from_edges(stage: Stage, n: usize, mut edges: Vec<(u32, u32)>) -> Self {
        edges.sort_unstable();
        edges.dedup();
        VulnerabilityGraph {
            stage,
            n,
            edges,
            seeds: Vec::new(),
            d_max: OnceLock::new(),
        }
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    /// Swapped pairs the reduced graph grew from; empty for other stages.
    pub fn seeds(&self) -> &[(u32, u32)] {
        &self.seeds
    }

    /// Distinct vertices incident to an edge, ascending.
    pub fn vertices(&self) -> Vec<u32> {
        let mut mark = vec![false; self.n];
        for &(a, b) in &self.edges {
            mark[a as usize] = true;
            mark[b as usize] = true;
        }
        (0..self.n as u32).filter(|&v| mark[v as usize]).collect()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices().len()
    }

    /// Longest directed path in vertices, computed once.
    pub fn d_max(&self) -> Result<usize> {
        if let Some(&d) = self.d_max.get() {
            return Ok(d);
        }
        let d = longest_path(self)?;
        Ok(*self.d_max.get_or_init(|| d))
    }
}

/// Every vertex pair a detector may compare, oriented `(upper, lower)` by
/// the original order: mesh edges, pairs of neighbours of a vertex against
/// its original largest or smallest neighbour, consecutive saddles and
/// critical points, and the survivor of each merge event against the other
/// extrema it meets.
fn candidate_pairs(
    reference: &ReferenceTopology,
    keep: impl Fn(usize, usize) -> bool + Sync + Send,
) -> Vec<(u32, u32)> {
    let field = reference.field();
    let grid = field.grid();
    let f = field.values();
    let orient = |a: usize, b: usize| if less(f, b, a) { (a, b) } else { (b, a) };
    let push = |out: &mut Vec<(u32, u32)>, a: usize, b: usize| {
        let (hi, lo) = orient(a, b);
        if keep(hi, lo) {
            out.push((hi as u32, lo as u32));
        }
    };
    let mut pairs = par::flat_map_range(field.len(), |i, out| {
        let w_max = reference.n_max(i);
        let w_min = reference.n_min(i);
        for u in grid.neighbors_iter(i) {
            if u > i {
                push(out, i, u);
            }
            for w in [w_max, w_min].into_iter().flatten() {
                if u != w {
                    push(out, w, u);
                }
            }
        }
    });
    for seq in [
        reference.sorted_saddles(),
        reference.sorted_critical_points(),
    ] {
        for w in seq.windows(2) {
            push(&mut pairs, w[0] as usize, w[1] as usize);
        }
    }
    for p in Polarity::BOTH {
        for event in reference.merge_events(p) {
            let r = event.survivor().index();
            for x in event.paired() {
                push(&mut pairs, r, x.index());
            }
        }
    }
    pairs
}

/// `(upper, lower)` can swap: the lowest value the upper vertex may take is
/// not above the highest value the lower one may take.
#[inline]
pub fn weak_pair(f_upper: f64, f_lower: f64, xi: f64) -> bool {
    lower_limit(f_upper, xi) <= upper_limit(f_lower, xi)
}

/// A weak pair stays a risk when `f̂_l` is not below the lower limit of `f_u`.
#[inline]
pub fn strong_pair(f_upper: f64, fhat_lower: f64, xi: f64) -> bool {
    fhat_lower >= lower_limit(f_upper, xi)
}

pub fn build_weak(reference: &ReferenceTopology, xi: f64) -> VulnerabilityGraph {
    let f = reference.field().values();
    let pairs = candidate_pairs(reference, |hi, lo| weak_pair(f[hi], f[lo], xi));
    VulnerabilityGraph::from_edges(Stage::Weak, f.len(), pairs)
}

pub fn prune_strong(
    weak: &VulnerabilityGraph,
    f: &ScalarField,
    fhat: &ScalarField,
    xi: f64,
) -> Result<VulnerabilityGraph> {
    f.same_grid(fhat)?;
    if weak.n != f.len() {
        return Err(Error::InvalidArgument(
            "graph and field sizes differ".into(),
        ));
    }
    let (fv, hv) = (f.values(), fhat.values());
    let edges = weak
        .edges
        .iter()
        .copied()
        .filter(|&(u, l)| strong_pair(fv[u as usize], hv[l as usize], xi))
        .collect();
    Ok(VulnerabilityGraph::from_edges(Stage::Strong, weak.n, edges))
}

/// Seeds are strong pairs already swapped in `f̂`; the reduced graph is
/// every strong edge reachable from a seed endpoint.
pub fn reduce(strong: &VulnerabilityGraph, fhat: &ScalarField) -> Result<VulnerabilityGraph> {
    if strong.n != fhat.len() {
        return Err(Error::InvalidArgument(
            "graph and field sizes differ".into(),
        ));
    }
    let hv = fhat.values();
    let seeds: Vec<(u32, u32)> = strong
        .edges
        .iter()
        .copied()
        .filter(|&(u, l)| less(hv, u as usize, l as usize))
        .collect();

    let offsets = csr_offsets(strong.n, &strong.edges);
    let mut reached = vec![false; strong.n];
    let mut queue: VecDeque<u32> = VecDeque::new();
    for &(u, l) in &seeds {
        for v in [u, l] {
            if !reached[v as usize] {
                reached[v as usize] = true;
                queue.push_back(v);
            }
        }
    }
    while let Some(v) = queue.pop_front() {
        let v = v as usize;
        for &(_, w) in &strong.edges[offsets[v]..offsets[v + 1]] {
            if !reached[w as usize] {
                reached[w as usize] = true;
                queue.push_back(w);
            }
        }
    }
    let edges = strong
        .edges
        .iter()
        .copied()
        .filter(|&(u, _)| reached[u as usize])
        .collect();
    let mut g = VulnerabilityGraph::from_edges(Stage::Reduced, strong.n, edges);
    g.seeds = seeds;
    Ok(g)
}

/// Start of each vertex's out-edges in a source-sorted edge list.
fn csr_offsets(n: usize, edges: &[(u32, u32)]) -> Vec<usize> {
    let mut offsets = vec![0usize; n + 1];
    for &(u, _) in edges {
        offsets[u as usize + 1] += 1;
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    offsets
}

/// Longest directed path counted in vertices; `0` for an edgeless graph.
pub fn longest_path(g: &VulnerabilityGraph) -> Result<usize> {
    if g.edges.is_empty() {
        return Ok(0);
    }
    let offsets = csr_offsets(g.n, &g.edges);
    let mut indegree = vec![0u32; g.n];
    for &(_, w) in &g.edges {
        indegree[w as usize] += 1;
    }
    let mut depth = vec![1usize; g.n];
    let mut queue: Vec<usize> = (0..g.n)
        .filter(|&v| indegree[v] == 0 && offsets[v] < offsets[v + 1])
        .collect();
    let mut processed_edges = 0usize;
    let mut best = 1;
    while let Some(v) = queue.pop() {
        for &(_, w) in &g.edges[offsets[v]..offsets[v + 1]] {
            let w = w as usize;
            processed_edges += 1;
            depth[w] = depth[w].max(depth[v] + 1);
            best = best.max(depth[w]);
            indegree[w] -= 1;
            if indegree[w] == 0 {
                queue.push(w);
            }
        }
    }
    if processed_edges != g.edges.len() {
        return Err(Error::Cycle);
    }
    Ok(best)
}

/// `N · D_max`.
pub fn iteration_bound(steps: u32, d_max: usize) -> usize {
    (steps as usize).saturating_mul(d_max)
}

/// Weak, strong and reduced graphs in one go.
pub fn reduced_graph(
    reference: &ReferenceTopology,
    fhat: &ScalarField,
    xi: f64,
) -> Result<VulnerabilityGraph> {
    let weak = build_weak(reference, xi);
    let strong = prune_strong(&weak, reference.field(), fhat, xi)?;
    reduce(&strong, fhat)
}

#[derive(Clone, Debug, Serialize)]
pub struct VulnerabilityStats {
    pub vertices: usize,
    pub gv_vertices: usize,
    pub gs_vertices: usize,
    pub gr_vertices: usize,
    pub gv_pct: f64,
    pub gs_pct: f64,
    pub gr_pct: f64,
    pub gv_edges: usize,
    pub gs_edges: usize,
    pub gr_edges: usize,
    pub seeds: usize,
    pub edit_pct: Option<f64>,
    pub d_max: usize,
    pub theoretical_max_iter: usize,
}

/// Fractions of vertices touched by each stage (in percent), plus the
/// fraction edited by `edits` when given.
pub fn vulnerability_stats(
    reference: &ReferenceTopology,
    fhat: &ScalarField,
    xi: f64,
    steps: u32,
    edits: Option<&EditLog>,
) -> Result<VulnerabilityStats> {
    let f = reference.field();
    let weak = build_weak(reference, xi);
    let strong = prune_strong(&weak, f, fhat, xi)?;
    let reduced = reduce(&strong, fhat)?;
    let n = f.len();
    let pct = |k: usize| 100.0 * k as f64 / n as f64;
    let (gv, gs, gr) = (
        weak.vertex_count(),
        strong.vertex_count(),
        reduced.vertex_count(),
    );
    let d_max = reduced.d_max()?;
    Ok(VulnerabilityStats {
        vertices: n,
        gv_vertices: gv,
        gs_vertices: gs,
        gr_vertices: gr,
        gv_pct: pct(gv),
        gs_pct: pct(gs),
        gr_pct: pct(gr),
        gv_edges: weak.edges.len(),
        gs_edges: strong.edges.len(),
        gr_edges: reduced.edges.len(),
        seeds: reduced.seeds.len(),
        edit_pct: edits.map(|e| pct(e.len())),
        d_max,
        theoretical_max_iter: iteration_bound(steps, d_max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::build_reference;

    fn chain(edges: &[(u32, u32)], n: usize) -> VulnerabilityGraph {
        VulnerabilityGraph::from_edges(Stage::Reduced, n, edges.to_vec())
    }

    #[test]
    fn weak_boundary_is_inclusive() {
        assert!(weak_pair(1.0, 0.75, 0.125));
        assert!(!weak_pair(1.0, 0.75f64.next_down(), 0.125));
    }

    #[test]
    fn strong_filter() {
        assert!(!strong_pair(1.0, 0.875f64.next_down(), 0.125));
        assert!(strong_pair(1.0, 0.875, 0.125));
    }

    #[test]
    fn monotone_row_is_a_chain() {
        let f = ScalarField::new(&[1, 5], vec![0.4, 0.3, 0.2, 0.1, 0.0]).unwrap();
        let r = build_reference(&f).unwrap();
        // spacing 0.1 < 2ξ but 0.2 > 2ξ: only mesh neighbours qualify
        let weak = build_weak(&r, 0.06);
        assert_eq!(weak.edges(), &[(0, 1), (1, 2), (2, 3), (3, 4)]);
    }

    #[test]
    fn strong_keeps_per_pair_condition() {
        let f = ScalarField::new(&[1, 4], vec![0.3, 0.2, 0.1, 0.0]).unwrap();
        let r = build_reference(&f).unwrap();
        let xi = 0.08;
        let weak = build_weak(&r, xi);
        let strong = prune_strong(&weak, &f, &f, xi).unwrap();
        for &(u, l) in weak.edges() {
            let keep = f.value(l as usize) >= lower_limit(f.value(u as usize), xi);
            assert_eq!(strong.edges().contains(&(u, l)), keep);
        }
        assert!(strong.edges().len() < weak.edges().len());
    }

    #[test]
    fn unflipped_input_has_empty_reduction() {
        let f = crate::synth::gaussian_mix(&[10, 10], 3, 1).unwrap();
        let r = build_reference(&f).unwrap();
        let g = reduced_graph(&r, &f, 1e-2).unwrap();
        assert!(g.seeds().is_empty());
        assert!(g.edges().is_empty());
        assert_eq!(g.d_max().unwrap(), 0);
    }

    #[test]
    fn reachability_from_seeds() {
        let strong =
            VulnerabilityGraph::from_edges(Stage::Strong, 5, vec![(0, 1), (1, 2), (2, 3), (3, 4)]);
        // seed at the head: f̂ swaps 0 and 1
        let head = ScalarField::new(&[1, 5], vec![0.9, 1.0, 0.5, 0.4, 0.3]).unwrap();
        let g = reduce(&strong, &head).unwrap();
        assert_eq!(g.seeds(), &[(0, 1)]);
        assert_eq!(g.edges().len(), 4);
        assert_eq!(g.d_max().unwrap(), 5);
        // seed in the middle: only the suffix survives
        let mid = ScalarField::new(&[1, 5], vec![1.0, 0.9, 0.5, 0.6, 0.3]).unwrap();
        let g = reduce(&strong, &mid).unwrap();
        assert_eq!(g.seeds(), &[(2, 3)]);
        assert_eq!(g.edges(), &[(2, 3), (3, 4)]);
    }

    #[test]
    fn longest_paths() {
        assert_eq!(longest_path(&chain(&[], 3)).unwrap(), 0);
        assert_eq!(
            longest_path(&chain(&[(0, 1), (1, 2), (2, 3)], 4)).unwrap(),
            4
        );
        let diamond = chain(&[(1, 2), (1, 3), (2, 4), (3, 4)], 5);
        assert_eq!(longest_path(&diamond).unwrap(), 3);
        assert_eq!(diamond.d_max().unwrap(), 3);
        assert!(matches!(
            longest_path(&chain(&[(0, 1), (1, 0)], 2)),
            Err(Error::Cycle)
        ));
    }

    #[test]
    fn bound_products() {
        assert_eq!(iteration_bound(5, 0), 0);
        assert_eq!(iteration_bound(5, 3), 15);
    }

    #[test]
    fn stage_chain() {
        let f = crate::synth::gaussian_mix(&[16, 16], 4, 2).unwrap();
        let fhat = crate::compressor::compress(&f, 1e-2)
            .unwrap()
            .decompress()
            .unwrap();
        let r = build_reference(&f).unwrap();
        let xi = 1e-2 * f.span();
        let weak = build_weak(&r, xi);
        let strong = prune_strong(&weak, &f, &fhat, xi).unwrap();
        let reduced = reduce(&strong, &fhat).unwrap();
        assert!(strong
            .edges()
            .iter()
            .all(|e| weak.edges().binary_search(e).is_ok()));
        assert!(reduced
            .edges()
            .iter()
            .all(|e| strong.edges().binary_search(e).is_ok()));
        let s = vulnerability_stats(&r, &fhat, xi, 5, None).unwrap();
        assert!(s.gr_vertices <= s.gs_vertices && s.gs_vertices <= s.gv_vertices);
        assert_eq!(s.theoretical_max_iter, 5 * s.d_max);
        let clean =
            vulnerability_stats(&r, &f, xi, 5, Some(&EditLog::new(xi, 5).unwrap())).unwrap();
        assert_eq!(clean.gr_pct, 0.0);
        assert_eq!(clean.edit_pct, Some(0.0));
    }
}
