//! Topology recalls and compression ratios.

use std::collections::{BTreeMap, HashSet};
use std::hash::Hash;

use serde::Serialize;

use crate::compressor::EditLog;
use crate::grid::ScalarField;
use crate::topology::{build_reference, Polarity, ReferenceTopology};
use crate::{Error, Result};

/// Fraction of `reference` items also present in `candidate`; `1.0` when
/// the reference is empty.
fn recall<T: Eq + Hash>(
    reference: impl IntoIterator<Item = T>,
    candidate: impl IntoIterator<Item = T>,
) -> f64 {
    let cand: HashSet<T> = candidate.into_iter().collect();
    let (mut total, mut hit) = (0usize, 0usize);
    for item in reference {
        total += 1;
        hit += usize::from(cand.contains(&item));
    }
    if total == 0 {
        1.0
    } else {
        hit as f64 / total as f64
    }
}

/// A critical point matches when its vertex and full set of flags agree.
pub fn cp_recall_refs(f: &ReferenceTopology, g: &ReferenceTopology) -> f64 {
    recall(
        f.critical_points().iter().copied(),
        g.critical_points().iter().copied(),
    )
}

/// Saddle–extremum edges of both polarities.
pub fn eg_recall_refs(f: &ReferenceTopology, g: &ReferenceTopology) -> f64 {
    let edges = |r: &ReferenceTopology| {
        Polarity::BOTH
            .into_iter()
            .flat_map(|p| r.extremum_graph(p).edges().iter().map(move |&e| (p, e)))
            .collect::<Vec<_>>()
    };
    recall(edges(f), edges(g))
}

/// Join- and split-tree arcs.
pub fn ct_recall_refs(f: &ReferenceTopology, g: &ReferenceTopology) -> f64 {
    let arcs = |r: &ReferenceTopology| {
        Polarity::BOTH
            .into_iter()
            .flat_map(|p| r.merge_tree(p).arcs().iter().map(move |&a| (p, a)))
            .collect::<Vec<_>>()
    };
    recall(arcs(f), arcs(g))
}

pub fn cp_recall(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    f.same_grid(g)?;
    Ok(cp_recall_refs(&build_reference(f)?, &build_reference(g)?))
}

pub fn eg_recall(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    f.same_grid(g)?;
    Ok(eg_recall_refs(&build_reference(f)?, &build_reference(g)?))
}

pub fn ct_recall(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    f.same_grid(g)?;
    Ok(ct_recall_refs(&build_reference(f)?, &build_reference(g)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Recalls {
    pub cp_recall: f64,
    pub eg_recall: f64,
    pub ct_recall: f64,
}

impl Recalls {
    pub fn all_one(&self) -> bool {
        self.cp_recall == 1.0 && self.eg_recall == 1.0 && self.ct_recall == 1.0
    }
}

/// All three recalls, building the candidate's topology once.
pub fn recalls(reference: &ReferenceTopology, g: &ScalarField) -> Result<Recalls> {
    reference.field().same_grid(g)?;
    let cand = build_reference(g)?;
    Ok(Recalls {
        cp_recall: cp_recall_refs(reference, &cand),
        eg_recall: eg_recall_refs(reference, &cand),
        ct_recall: ct_recall_refs(reference, &cand),
    })
}

/// `(CR, OCR)` = `(orig / blob, orig / (blob + edits))`.
pub fn compression_ratios(
    orig_bytes: usize,
    blob_bytes: usize,
    edit_bytes: usize,
) -> Result<(f64, f64)> {
    if orig_bytes == 0 || blob_bytes == 0 {
        return Err(Error::InvalidArgument("sizes must be positive".into()));
    }
    let o = orig_bytes as f64;
    Ok((o / blob_bytes as f64, o / (blob_bytes + edit_bytes) as f64))
}

/// Distinct edited vertices over all vertices.
pub fn edit_ratio(log: &EditLog, field: &ScalarField) -> f64 {
    if field.is_empty() {
        0.0
    } else {
        log.len() as f64 / field.len() as f64
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MetricsReport {
    pub cp_recall: f64,
    pub eg_recall: f64,
    pub ct_recall: f64,
    pub cr: Option<f64>,
    pub ocr: Option<f64>,
    pub edit_ratio: Option<f64>,
    pub edit_count: Option<usize>,
    pub lossless_edits: Option<usize>,
    pub max_abs_error: f64,
    pub iterations: Option<usize>,
    pub theoretical_bound: Option<usize>,
    pub violation_histogram: BTreeMap<String, usize>,
}

impl MetricsReport {
    /// Recalls and error of `g` against the reference; the optional fields
    /// are left empty.
    pub fn new(reference: &ReferenceTopology, g: &ScalarField) -> Result<Self> {
        let r = recalls(reference, g)?;
        Ok(MetricsReport {
            cp_recall: r.cp_recall,
            eg_recall: r.eg_recall,
            ct_recall: r.ct_recall,
            cr: None,
            ocr: None,
            edit_ratio: None,
            edit_count: None,
            lossless_edits: None,
            max_abs_error: crate::compressor::max_abs_error(reference.field(), g)?,
            iterations: None,
            theoretical_bound: None,
            violation_histogram: BTreeMap::new(),
        })
    }

    pub fn with_sizes(
        mut self,
        orig_bytes: usize,
        blob_bytes: usize,
        edit_bytes: usize,
    ) -> Result<Self> {
        let (cr, ocr) = compression_ratios(orig_bytes, blob_bytes, edit_bytes)?;
        self.cr = Some(cr);
        self.ocr = Some(ocr);
        Ok(self)
    }

    pub fn with_edits(mut self, log: &EditLog, field: &ScalarField) -> Self {
        self.edit_ratio = Some(edit_ratio(log, field));
        self.edit_count = Some(log.len());
        self.lossless_edits = Some(log.lossless_count());
        self
    }

    pub fn with_run(mut self, result: &crate::CorrectionResult) -> Self {
        self.iterations = Some(result.iterations);
        self.theoretical_bound = Some(result.theoretical_bound);
        self.violation_histogram = result
            .reason_counts
            .iter()
            .map(|(r, &c)| (r.name().to_string(), c))
            .collect();
        self.with_edits(&result.edits, &result.g)
    }

    /// Header matching [`MetricsReport::csv_row`].
    pub const CSV_HEADER: &'static str =
        "cp_recall,eg_recall,ct_recall,cr,ocr,edit_ratio,edit_count,max_abs_error,iterations,theoretical_bound";

    pub fn csv_row(&self) -> String {
        fn opt<T: ToString>(v: Option<T>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.cp_recall,
            self.eg_recall,
            self.ct_recall,
            opt(self.cr),
            opt(self.ocr),
            opt(self.edit_ratio),
            opt(self.edit_count),
            self.max_abs_error,
            opt(self.iterations),
            opt(self.theoretical_bound)
        )
    }
}
