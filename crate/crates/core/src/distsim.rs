//! Single-process simulation of block-partitioned correction.
//!
//! The grid is cut into `p` blocks by recursive bisection. Each rank keeps
//! its own copy of `g` that is only meaningful on its owned block, a ghost
//! layer of width one, and the critical points directly before and after
//! each owned critical point in the original order; everything else holds
//! NaN. A round runs the local detectors on owned vertices, turns the
//! targets into proposed edits, ships each proposal to the target's owner
//! where the smallest proposal wins, and then refreshes ghosts and
//! critical-point neighbours from their owners. Rounds repeat until a
//! global reduction finds no violation on any rank.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

use crate::bound;
use crate::compressor::{check_bound, EditKind, EditLog};
use crate::constraints::{sequence_violation, vertex_violations, Violation, ViolationReason};
use crate::corrector::{
    correct_with_reference, next_edit, CorrectionConfig, CorrectionMode, CorrectionResult,
};
use crate::grid::{Grid, ScalarField, VertexId};
use crate::topology::ReferenceTopology;
use crate::{par, Error, Result};

/// Half-open box `[lo, hi)` in padded 3D coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Block {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl Block {
    pub fn extent(&self, axis: usize) -> usize {
        self.hi[axis] - self.lo[axis]
    }

    pub fn len(&self) -> usize {
        (0..3).map(|a| self.extent(a)).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, c: [usize; 3]) -> bool {
        (0..3).all(|a| self.lo[a] <= c[a] && c[a] < self.hi[a])
    }
}

/// Splits the grid into `p` blocks, halving the rank count along the
/// longest axis at each level.
pub fn partition(dims: &[usize], p: usize) -> Result<Vec<Block>> {
    let grid = Grid::new(dims)?;
    if p == 0 || p > grid.len() {
        return Err(Error::InvalidArgument(format!(
            "{p} ranks for a grid of {} vertices",
            grid.len()
        )));
    }
    let mut out = Vec::with_capacity(p);
    bisect(
        Block {
            lo: [0; 3],
            hi: grid.shape(),
        },
        p,
        &mut out,
    )?;
    Ok(out)
}

fn bisect(block: Block, p: usize, out: &mut Vec<Block>) -> Result<()> {
    if p == 1 {
        out.push(block);
        return Ok(());
    }
    let axis = (0..3).fold(0, |best, a| {
        if block.extent(a) > block.extent(best) {
            a
        } else {
            best
        }
    });
    let e = block.extent(axis);
    let p1 = p / 2;
    let cut = (e * p1 / p).max(1);
    if cut >= e {
        return Err(Error::InvalidArgument(format!(
            "cannot split a block of extent {e} among {p} ranks"
        )));
    }
    let (mut a, mut b) = (block, block);
    a.hi[axis] = block.lo[axis] + cut;
    b.lo[axis] = block.lo[axis] + cut;
    if a.len() < p1 || b.len() < p - p1 {
        return Err(Error::InvalidArgument(format!(
            "block {block:?} is too small for {p} ranks"
        )));
    }
    bisect(a, p1, out)?;
    bisect(b, p - p1, out)
}

/// Keeps the smaller of two candidate states for one vertex.
pub fn merge_min(
    a: (f64, Option<EditKind>),
    b: (f64, Option<EditKind>),
) -> (f64, Option<EditKind>) {
    let rank = |s: &(f64, Option<EditKind>)| match s.1 {
        None => 0,
        Some(EditKind::Stepped(_)) => 1,
        Some(EditKind::Lossless(_)) => 2,
    };
    if b.0 < a.0 || (b.0 == a.0 && rank(&b) > rank(&a)) {
        b
    } else {
        a
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SimStats {
    pub ranks: usize,
    pub blocks: Vec<Block>,
    pub rounds: usize,
    /// Violations found by each round's global reduction.
    pub violations_per_round: Vec<usize>,
    /// Edits applied in each round, per rank.
    pub edits_per_round: Vec<Vec<usize>>,
    /// Values shipped between ranks in each round.
    pub exchanged_per_round: Vec<usize>,
    pub exchanged_values: usize,
    pub detect_s: f64,
    pub edit_s: f64,
    pub exchange_s: f64,
    /// Sum over rounds of the slowest rank's local work plus exchange time.
    pub modeled_time_s: f64,
    pub strong_efficiency: Option<f64>,
    pub weak_efficiency: Option<f64>,
}

/// `T(1) / (p · T(p))`.
pub fn strong_scaling_efficiency(t1: f64, tp: f64, p: usize) -> f64 {
    t1 / (p as f64 * tp)
}

/// `T(1) / T(p)`.
pub fn weak_scaling_efficiency(t1: f64, tp: f64) -> f64 {
    t1 / tp
}

impl SimStats {
    /// Fills the efficiency fields from a single-rank modeled time.
    pub fn with_baseline(mut self, t1: f64) -> Self {
        if self.modeled_time_s > 0.0 {
            self.strong_efficiency = Some(strong_scaling_efficiency(
                t1,
                self.modeled_time_s,
                self.ranks,
            ));
            self.weak_efficiency = Some(weak_scaling_efficiency(t1, self.modeled_time_s));
        }
        self
    }
}

struct Rank {
    owned: Vec<u32>,
    /// Non-owned vertices this rank mirrors: ghosts and critical-point
    /// neighbours.
    mirrored: Vec<u32>,
    /// Positions `k` in the saddle / critical-point sequences whose vertex
    /// this rank owns.
    saddle_slots: Vec<usize>,
    cp_slots: Vec<usize>,
    g: Vec<f64>,
    state: Vec<Option<EditKind>>,
}

impl Rank {
    fn detect(&self, reference: &ReferenceTopology) -> Vec<Violation> {
        let mut out = Vec::new();
        for &i in &self.owned {
            vertex_violations(reference, &self.g, i as usize, &mut out);
        }
        let seqs = [
            (
                reference.sorted_saddles(),
                &self.saddle_slots,
                ViolationReason::SaddleOrderFlip,
            ),
            (
                reference.sorted_critical_points(),
                &self.cp_slots,
                ViolationReason::CpOrderFlip,
            ),
        ];
        for (seq, slots, reason) in seqs {
            for &k in slots {
                if k > 0 {
                    out.extend(sequence_violation(seq, k - 1, &self.g, reason));
                }
                if k + 1 < seq.len() {
                    out.extend(sequence_violation(seq, k, &self.g, reason));
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Runs the partitioned correction with `p` ranks. Only the reformulated
/// mode is distributable; the original mode is accepted for `p = 1`, where
/// it runs the serial corrector.
pub fn run_distributed_correction(
    reference: &ReferenceTopology,
    fhat: &ScalarField,
    cfg: &CorrectionConfig,
    p: usize,
) -> Result<(CorrectionResult, SimStats)> {
    let f = reference.field();
    f.same_grid(fhat)?;
    let blocks = partition(f.dims(), p)?;
    if cfg.mode == CorrectionMode::Original {
        if p > 1 {
            return Err(Error::Unsupported(
                "the original event constraint needs global integral paths; use the \
                 reformulated mode with more than one rank"
                    .into(),
            ));
        }
        let start = Instant::now();
        let result = correct_with_reference(reference, fhat, cfg)?;
        let elapsed = start.elapsed().as_secs_f64();
        let stats = SimStats {
            ranks: 1,
            blocks,
            rounds: result.iterations,
            violations_per_round: result.violation_counts.clone(),
            modeled_time_s: elapsed,
            ..SimStats::default()
        };
        return Ok((result, stats));
    }

    let xi = cfg.xi_abs(f)?;
    check_bound(f, fhat, xi)?;
    let d_max = bound::reduced_graph(reference, fhat, xi)?.d_max()?;
    let theoretical_bound = bound::iteration_bound(cfg.steps, d_max);
    let limit = theoretical_bound.saturating_add(cfg.max_iter_override.unwrap_or(0));

    let grid = f.grid();
    let n = f.len();
    let mut owner = vec![0u32; n];
    for (r, b) in blocks.iter().enumerate() {
        for (v, o) in owner.iter_mut().enumerate() {
            if b.contains(grid.coords(v)) {
                *o = r as u32;
            }
        }
    }
    let mut ranks: Vec<Rank> = (0..p)
        .map(|r| build_rank(reference, fhat, &owner, r as u32))
        .collect();

    let mut stats = SimStats {
        ranks: p,
        blocks,
        ..SimStats::default()
    };
    let mut reason_counts = BTreeMap::new();
    loop {
        // local detection
        let t0 = Instant::now();
        let timed: Vec<(Vec<Violation>, f64)> = par::map_range(p, |r| {
            let t = Instant::now();
            let v = ranks[r].detect(reference);
            (v, t.elapsed().as_secs_f64())
        });
        let detect_wall = t0.elapsed().as_secs_f64();
        stats.detect_s += detect_wall;
        let slowest_detect = timed.iter().map(|t| t.1).fold(0.0, f64::max);
        let local: Vec<Vec<Violation>> = timed.into_iter().map(|t| t.0).collect();

        // global reduction
        let mut all: Vec<Violation> = local.iter().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        stats.violations_per_round.push(all.len());
        for v in &all {
            *reason_counts.entry(v.reason).or_insert(0) += 1;
        }
        if all.is_empty() {
            stats.modeled_time_s += slowest_detect;
            break;
        }
        let rounds = stats.violations_per_round.len() - 1;
        if rounds >= limit {
            return Err(Error::NonConvergence {
                iterations: rounds,
                bound: theoretical_bound,
            });
        }

        // proposals from each rank's view
        let t1 = Instant::now();
        let proposals: Vec<Result<Vec<(u32, f64, EditKind)>>> = par::map_range(p, |r| {
            let rank = &ranks[r];
            let mut out: Vec<(u32, f64, EditKind)> = Vec::new();
            let mut last = None;
            for v in &local[r] {
                let t = v.target.0;
                if last == Some(t) {
                    continue;
                }
                last = Some(t);
                let i = t as usize;
                let kind = next_edit(f.value(i), fhat.value(i), rank.state[i], xi, cfg.steps)
                    .ok_or(Error::Escalation {
                        target: i,
                        witness: v.witness.index(),
                    })?;
                let value = match kind {
                    EditKind::Stepped(k) => {
                        crate::compressor::step_value(fhat.value(i), k, xi, cfg.steps)
                    }
                    EditKind::Lossless(x) => x,
                };
                out.push((t, value, kind));
            }
            Ok(out)
        });
        let proposals = proposals.into_iter().collect::<Result<Vec<_>>>()?;
        let edit_wall = t1.elapsed().as_secs_f64();
        stats.edit_s += edit_wall;
        stats
            .edits_per_round
            .push(proposals.iter().map(Vec::len).collect());

        // delivery to owners: the smallest proposal wins
        let t2 = Instant::now();
        let mut exchanged = 0usize;
        let mut inbox: BTreeMap<u32, (f64, Option<EditKind>)> = BTreeMap::new();
        for (r, props) in proposals.iter().enumerate() {
            for &(t, value, kind) in props {
                if owner[t as usize] != r as u32 {
                    exchanged += 1;
                }
                let incoming = (value, Some(kind));
                inbox
                    .entry(t)
                    .and_modify(|cur| *cur = merge_min(*cur, incoming))
                    .or_insert(incoming);
            }
        }
        for (&t, &(value, kind)) in &inbox {
            let o = &mut ranks[owner[t as usize] as usize];
            let (value, kind) = merge_min((o.g[t as usize], o.state[t as usize]), (value, kind));
            o.g[t as usize] = value;
            o.state[t as usize] = kind;
        }

        // ghost and critical-point neighbour refresh
        let snapshot: Vec<(f64, Option<EditKind>)> = (0..n)
            .map(|v| {
                let o = &ranks[owner[v] as usize];
                (o.g[v], o.state[v])
            })
            .collect();
        for rank in &mut ranks {
            for &v in &rank.mirrored {
                let v = v as usize;
                let merged = merge_min((rank.g[v], rank.state[v]), snapshot[v]);
                rank.g[v] = merged.0;
                rank.state[v] = merged.1;
                exchanged += 1;
            }
        }
        let exchange_wall = t2.elapsed().as_secs_f64();
        stats.exchange_s += exchange_wall;
        stats.exchanged_per_round.push(exchanged);
        stats.exchanged_values += exchanged;
        stats.modeled_time_s += slowest_detect + edit_wall / p as f64 + exchange_wall;
    }
    stats.rounds = stats.violations_per_round.len();

    let mut values = vec![0.0; n];
    let mut log = EditLog::new(xi, cfg.steps)?;
    for v in 0..n {
        let o = &ranks[owner[v] as usize];
        values[v] = o.g[v];
        if let Some(kind) = o.state[v] {
            log.set(VertexId::from(v), kind)?;
        }
    }
    let g = fhat.with_values(values)?;
    let result = CorrectionResult {
        g,
        edits: log,
        iterations: stats.rounds,
        violation_counts: stats.violations_per_round.clone(),
        reason_counts,
        d_max,
        theoretical_bound,
    };
    Ok((result, stats))
}

fn build_rank(reference: &ReferenceTopology, fhat: &ScalarField, owner: &[u32], r: u32) -> Rank {
    let grid = fhat.grid();
    let n = fhat.len();
    let owned: Vec<u32> = (0..n as u32).filter(|&v| owner[v as usize] == r).collect();
    let mut local = vec![false; n];
    for &v in &owned {
        local[v as usize] = true;
    }
    let mut mirrored = Vec::new();
    let mut mirror = |v: usize, local: &mut Vec<bool>| {
        if !local[v] {
            local[v] = true;
            mirrored.push(v as u32);
        }
    };
    for &v in &owned {
        for u in grid.neighbors_iter(v as usize) {
            mirror(u, &mut local);
        }
    }
    let mut slots = |seq: &[u32]| -> Vec<usize> {
        let s: Vec<usize> = (0..seq.len())
            .filter(|&k| owner[seq[k] as usize] == r)
            .collect();
        for &k in &s {
            if k > 0 {
                mirror(seq[k - 1] as usize, &mut local);
            }
            if k + 1 < seq.len() {
                mirror(seq[k + 1] as usize, &mut local);
            }
        }
        s
    };
    let saddle_slots = slots(reference.sorted_saddles());
    let cp_slots = slots(reference.sorted_critical_points());
    mirrored.sort_unstable();
    let g = (0..n)
        .map(|v| if local[v] { fhat.value(v) } else { f64::NAN })
        .collect();
    Rank {
        owned,
        mirrored,
        saddle_slots,
        cp_slots,
        g,
        state: vec![None; n],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compressor::compress;
    use crate::constraints::check_all;
    use crate::topology::build_reference;

    #[test]
    fn partitions() {
        let one = partition(&[8, 8], 1).unwrap();
        assert_eq!(
            one,
            vec![Block {
                lo: [0; 3],
                hi: [1, 8, 8]
            }]
        );
        let two = partition(&[8, 8], 2).unwrap();
        assert_eq!(
            two,
            vec![
                Block {
                    lo: [0, 0, 0],
                    hi: [1, 4, 8]
                },
                Block {
                    lo: [0, 4, 0],
                    hi: [1, 8, 8]
                },
            ]
        );
        let eight = partition(&[8, 8, 8], 8).unwrap();
        assert_eq!(eight.len(), 8);
        assert!(eight.iter().all(|b| (0..3).all(|a| b.extent(a) == 4)));
        assert!(partition(&[2, 2], 5).is_err());
        assert!(partition(&[2, 2], 0).is_err());
    }

    #[test]
    fn partitions_tile_the_grid() {
        for p in 1..=12 {
            let blocks = partition(&[7, 5, 3], p).unwrap();
            let grid = Grid::new(&[7, 5, 3]).unwrap();
            for v in 0..grid.len() {
                let c = grid.coords(v);
                assert_eq!(blocks.iter().filter(|b| b.contains(c)).count(), 1);
            }
        }
    }

    #[test]
    fn smaller_proposal_wins() {
        let a = (0.5, Some(EditKind::Stepped(1)));
        let b = (0.4, Some(EditKind::Stepped(2)));
        assert_eq!(merge_min(a, b), b);
        assert_eq!(merge_min(b, a), b);
        assert_eq!(merge_min(a, a), a);
    }

    #[test]
    fn matches_serial_for_any_rank_count() {
        let f = crate::synth::gaussian_mix(&[24, 20], 5, 4).unwrap();
        let fhat = compress(&f, 1e-2).unwrap().decompress().unwrap();
        let r = build_reference(&f).unwrap();
        let cfg = CorrectionConfig::relative(1e-2);
        let serial = correct_with_reference(&r, &fhat, &cfg).unwrap();
        assert!(serial.iterations > 1);
        for p in [1, 2, 3, 4, 8] {
            let (dist, stats) = run_distributed_correction(&r, &fhat, &cfg, p).unwrap();
            assert_eq!(dist.g, serial.g, "p = {p}");
            assert_eq!(dist.edits, serial.edits);
            assert_eq!(dist.iterations, serial.iterations);
            assert_eq!(stats.rounds, serial.iterations);
            assert!(check_all(&r, &dist.g, CorrectionMode::Reformulated)
                .unwrap()
                .is_empty());
        }
    }

    #[test]
    fn original_mode_is_serial_only() {
        let f = crate::synth::gaussian_mix(&[8, 8], 2, 1).unwrap();
        let r = build_reference(&f).unwrap();
        let cfg = CorrectionConfig::relative(1e-2).with_mode(CorrectionMode::Original);
        assert!(matches!(
            run_distributed_correction(&r, &f, &cfg, 4),
            Err(Error::Unsupported(_))
        ));
        assert!(run_distributed_correction(&r, &f, &cfg, 1).is_ok());
    }

    #[test]
    fn efficiencies() {
        assert_eq!(strong_scaling_efficiency(8.0, 2.0, 4), 1.0);
        assert_eq!(weak_scaling_efficiency(2.0, 4.0), 0.5);
    }
}
