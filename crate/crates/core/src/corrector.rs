//! The iterative correction loop.
//!
//! Each iteration runs the detectors on the current field `g`. If nothing is
//! violated the loop stops; otherwise every distinct target is lowered by
//! one step `Δ = ξ / N`. A target that has used all `N` steps, or whose next
//! step would pass `f_v - ξ`, is clamped to exactly `f_v - ξ` and recorded as
//! a lossless edit.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::bound;
use crate::compressor::{check_bound, lower_limit, step_value, EditKind, EditLog};
use crate::constraints::{check_all, Violation, ViolationReason};
use crate::grid::{ScalarField, VertexId};
use crate::topology::{build_reference, ReferenceTopology};
use crate::{Error, Result};

/// Which event constraint the loop enforces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectionMode {
    /// Merge events recomputed from the extremum graphs of `g`.
    Original,
    /// Global order of all critical points.
    Reformulated,
}

impl fmt::Display for CorrectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorrectionMode::Original => "original",
            CorrectionMode::Reformulated => "reformulated",
        })
    }
}

impl FromStr for CorrectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(CorrectionMode::Original),
            "reformulated" => Ok(CorrectionMode::Reformulated),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ErrorBound {
    /// Fraction of the original data range.
    Relative(f64),
    Absolute(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrectionConfig {
    pub bound: ErrorBound,
    /// Number of steps `N` the bound is divided into.
    pub steps: u32,
    pub mode: CorrectionMode,
    /// Extra edit rounds tolerated beyond the theoretical bound.
    pub max_iter_override: Option<usize>,
}

impl CorrectionConfig {
    pub const DEFAULT_STEPS: u32 = 5;

    pub fn relative(xi_rel: f64) -> Self {
        CorrectionConfig {
            bound: ErrorBound::Relative(xi_rel),
            steps: Self::DEFAULT_STEPS,
            mode: CorrectionMode::Reformulated,
            max_iter_override: None,
        }
    }

    pub fn absolute(xi_abs: f64) -> Self {
        CorrectionConfig {
            bound: ErrorBound::Absolute(xi_abs),
            ..Self::relative(0.0)
        }
    }

    pub fn with_mode(mut self, mode: CorrectionMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_steps(mut self, steps: u32) -> Self {
        self.steps = steps;
        self
    }

    /// Absolute bound for the original field `f`, after validation.
    pub fn xi_abs(&self, f: &ScalarField) -> Result<f64> {
        if self.steps == 0 {
            return Err(Error::InvalidArgument(
                "step count N must be at least 1".into(),
            ));
        }
        let xi = match self.bound {
            ErrorBound::Relative(r) => {
                if !(r > 0.0 && r <= 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "relative error bound {r} is outside (0, 1]"
                    )));
                }
                r * f.span()
            }
            ErrorBound::Absolute(a) => a,
        };
        if !xi.is_finite() || xi < 0.0 || (xi == 0.0 && f.span() > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "absolute error bound {xi} must be positive for a non-constant field"
            )));
        }
        Ok(xi)
    }
}

#[derive(Clone, Debug)]
pub struct CorrectionResult {
    pub g: ScalarField,
    pub edits: EditLog,
    /// Detector passes, including the final clean one.
    pub iterations: usize,
    /// Violations found by each pass; the last entry is zero.
    pub violation_counts: Vec<usize>,
    /// Violations per reason, summed over all passes.
    pub reason_counts: BTreeMap<ViolationReason, usize>,
    /// Longest path of the reduced vulnerability graph, in vertices.
    pub d_max: usize,
    /// `N · D_max`.
    pub theoretical_bound: usize,
}

impl CorrectionResult {
    /// Passes that edited something.
    pub fn edit_rounds(&self) -> usize {
        self.iterations.saturating_sub(1)
    }
}

/// The edit that lowers a vertex one more step, or `None` when it already
/// sits at its lower bound `f_v - ξ`.
pub fn next_edit(
    fv: f64,
    fhat_v: f64,
    current: Option<EditKind>,
    xi: f64,
    steps: u32,
) -> Option<EditKind> {
    let lb = lower_limit(fv, xi);
    let (count, value) = match current {
        None => (0, fhat_v),
        Some(EditKind::Stepped(k)) => (k, step_value(fhat_v, k, xi, steps)),
        Some(EditKind::Lossless(_)) => return None,
    };
    if value <= lb {
        return None;
    }
    let next = count + 1;
    if next <= steps {
        let v = step_value(fhat_v, next, xi, steps);
        if v >= lb {
            return Some(EditKind::Stepped(next));
        }
    }
    Some(EditKind::Lossless(lb))
}

/// Lowers each distinct target of `violations` by one step, recording the
/// edits in `log`. A target that cannot go lower is an escalation error.
pub fn apply_bounded_edits(
    g: &mut ScalarField,
    violations: &[Violation],
    f: &ScalarField,
    fhat: &ScalarField,
    log: &mut EditLog,
) -> Result<usize> {
    let mut seen: Vec<VertexId> = Vec::with_capacity(violations.len());
    let mut sorted: Vec<&Violation> = violations.iter().collect();
    sorted.sort_unstable();
    for v in sorted {
        let t = v.target;
        if seen.last() == Some(&t) {
            continue;
        }
        seen.push(t);
        let i = t.index();
        let kind = next_edit(
            f.value(i),
            fhat.value(i),
            log.get(t),
            log.xi_abs(),
            log.steps(),
        )
        .ok_or(Error::Escalation {
            target: i,
            witness: v.witness.index(),
        })?;
        let value = log.value_of(kind, fhat.value(i));
        debug_assert!(value < g.value(i));
        g.set(i, value);
        log.set(t, kind)?;
    }
    g.refresh_range();
    Ok(seen.len())
}

/// Corrects `fhat` against `f`.
pub fn correct(
    f: &ScalarField,
    fhat: &ScalarField,
    cfg: &CorrectionConfig,
) -> Result<CorrectionResult> {
    let reference = build_reference(f)?;
    correct_with_reference(&reference, fhat, cfg)
}

pub fn correct_with_reference(
    reference: &ReferenceTopology,
    fhat: &ScalarField,
    cfg: &CorrectionConfig,
) -> Result<CorrectionResult> {
    correct_observed(reference, fhat, cfg, |_, _| {})
}

/// [`correct_with_reference`] calling `observe(pass, g)` before every
/// detector pass.
pub fn correct_observed(
    reference: &ReferenceTopology,
    fhat: &ScalarField,
    cfg: &CorrectionConfig,
    mut observe: impl FnMut(usize, &ScalarField),
) -> Result<CorrectionResult> {
    let f = reference.field();
    f.same_grid(fhat)?;
    let xi = cfg.xi_abs(f)?;
    check_bound(f, fhat, xi)?;

    let d_max = bound::reduced_graph(reference, fhat, xi)?.d_max()?;
    let theoretical_bound = bound::iteration_bound(cfg.steps, d_max);
    let limit = theoretical_bound.saturating_add(cfg.max_iter_override.unwrap_or(0));

    let mut g = fhat.clone();
    let mut log = EditLog::new(xi, cfg.steps)?;
    let mut violation_counts = Vec::new();
    let mut reason_counts = BTreeMap::new();
    loop {
        observe(violation_counts.len(), &g);
        let violations = check_all(reference, &g, cfg.mode)?;
        violation_counts.push(violations.len());
        for v in &violations {
            *reason_counts.entry(v.reason).or_insert(0) += 1;
        }
        if violations.is_empty() {
            break;
        }
        let rounds = violation_counts.len() - 1;
        if rounds >= limit {
            return Err(Error::NonConvergence {
                iterations: rounds,
                bound: theoretical_bound,
            });
        }
        apply_bounded_edits(&mut g, &violations, f, fhat, &mut log)?;
    }
    Ok(CorrectionResult {
        g,
        edits: log,
        iterations: violation_counts.len(),
        violation_counts,
        reason_counts,
        d_max,
        theoretical_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compressor::{apply_edit_log_checked, compress};
    use crate::constraints::check_all;
    use crate::synth;

    #[test]
    fn clean_input_takes_one_pass() {
        let f = synth::gaussian_mix(&[12, 12], 3, 1).unwrap();
        let r = correct(&f, &f, &CorrectionConfig::relative(1e-3)).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.edits.is_empty());
        assert_eq!(r.g, f);
        assert_eq!(r.d_max, 0);
    }

    #[test]
    fn single_step() {
        let e = next_edit(1.0, 1.2, None, 0.5, 5).unwrap();
        assert_eq!(e, EditKind::Stepped(1));
        assert_eq!(step_value(1.2, 1, 0.5, 5), 1.2 - 0.1);
    }

    #[test]
    fn last_step_landing_on_bound_is_stepped() {
        // f̂ = f: N steps of ξ/N land exactly on f - ξ
        let (f, xi) = (1.0, 0.5);
        assert_eq!(step_value(f, 5, xi, 5), f - xi);
        assert_eq!(
            next_edit(f, f, Some(EditKind::Stepped(4)), xi, 5),
            Some(EditKind::Stepped(5))
        );
        // nothing left below the bound
        assert_eq!(next_edit(f, f, Some(EditKind::Stepped(5)), xi, 5), None);
    }

    #[test]
    fn exhausted_steps_clamp_losslessly() {
        // f̂ above f: after N steps the value is still above f - ξ
        let e = next_edit(1.0, 1.3, Some(EditKind::Stepped(5)), 0.5, 5);
        assert_eq!(e, Some(EditKind::Lossless(1.0 - 0.5)));
        assert_eq!(next_edit(1.0, 1.3, e, 0.5, 5), None);
        // a step that would undershoot also clamps
        let e = next_edit(1.0, 0.55, None, 0.5, 5);
        assert_eq!(e, Some(EditKind::Lossless(0.5)));
    }

    #[test]
    fn escalation_when_target_is_stuck() {
        let f = ScalarField::new(&[1, 2], vec![1.0, 0.0]).unwrap();
        let fhat = ScalarField::new(&[1, 2], vec![1.0, 0.0]).unwrap();
        let mut g = fhat.clone();
        let mut log = EditLog::new(0.5, 5).unwrap();
        log.set(VertexId(1), EditKind::Lossless(-0.5)).unwrap();
        let v = [Violation {
            target: VertexId(1),
            reason: ViolationReason::CpOrderFlip,
            witness: VertexId(0),
        }];
        assert!(matches!(
            apply_bounded_edits(&mut g, &v, &f, &fhat, &mut log),
            Err(Error::Escalation {
                target: 1,
                witness: 0
            })
        ));
    }

    #[test]
    fn duplicate_targets_step_once() {
        let f = ScalarField::new(&[1, 3], vec![0.0, 1.0, 2.0]).unwrap();
        let mut g = f.clone();
        let mut log = EditLog::new(0.5, 5).unwrap();
        let mk = |w| Violation {
            target: VertexId(1),
            reason: ViolationReason::WrongMinNeighbor,
            witness: VertexId(w),
        };
        let n = apply_bounded_edits(&mut g, &[mk(0), mk(2)], &f, &f, &mut log).unwrap();
        assert_eq!(n, 1);
        assert_eq!(log.get(VertexId(1)), Some(EditKind::Stepped(1)));
    }

    #[test]
    fn cascade_walks_down_the_row() {
        let (f, fhat) = synth::cascade_1d(5);
        let cfg = CorrectionConfig::absolute(synth::CASCADE_XI);
        let r = correct(&f, &fhat, &cfg).unwrap();
        assert_eq!(r.g.values(), &[1.0, 0.75, 0.625, 0.375, 0.125]);
        assert_eq!(r.iterations, 4);
        assert_eq!(r.d_max, 4);
        assert_eq!(r.theoretical_bound, 20);
    }

    #[test]
    fn corrected_fields_are_clean_in_both_modes() {
        for seed in 0..6 {
            let f = synth::gaussian_mix(&[24, 20], 5, seed).unwrap();
            let fhat = compress(&f, 1e-2).unwrap().decompress().unwrap();
            let reference = build_reference(&f).unwrap();
            for mode in [CorrectionMode::Original, CorrectionMode::Reformulated] {
                let cfg = CorrectionConfig::relative(1e-2).with_mode(mode);
                let r = correct_with_reference(&reference, &fhat, &cfg).unwrap();
                assert!(check_all(&reference, &r.g, mode).unwrap().is_empty());
                assert!(r.edit_rounds() <= r.theoretical_bound);
                let again = apply_edit_log_checked(&fhat, &r.edits, &f).unwrap();
                assert_eq!(again, r.g);
            }
        }
    }

    #[test]
    fn monotone_and_bounded_per_pass() {
        let f = synth::gaussian_mix(&[20, 20], 6, 3).unwrap();
        let fhat = compress(&f, 5e-3).unwrap().decompress().unwrap();
        let reference = build_reference(&f).unwrap();
        let cfg = CorrectionConfig::relative(5e-3);
        let xi = cfg.xi_abs(&f).unwrap();
        let mut prev = fhat.values().to_vec();
        correct_observed(&reference, &fhat, &cfg, |_, g| {
            for (v, (&now, &before)) in g.values().iter().zip(&prev).enumerate() {
                assert!(now <= before);
                assert!(now >= f.value(v) - xi);
            }
            prev = g.values().to_vec();
        })
        .unwrap();
    }

    #[test]
    fn rejects_out_of_bound_input() {
        let f = ScalarField::new(&[1, 3], vec![0.0, 1.0, 2.0]).unwrap();
        let fhat = ScalarField::new(&[1, 3], vec![0.0, 1.5, 2.0]).unwrap();
        let err = correct(&f, &fhat, &CorrectionConfig::absolute(0.1)).unwrap_err();
        assert!(matches!(err, Error::BoundViolated { vertex: 1, .. }));
        assert!(correct(&f, &f, &CorrectionConfig::relative(0.1).with_steps(0)).is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!(
            "original".parse::<CorrectionMode>().unwrap(),
            CorrectionMode::Original
        );
        assert!("fast".parse::<CorrectionMode>().is_err());
    }
}
