//! Browser bindings for the static demo page in `www/`.
//!
//! [`Session`] holds the state and is plain Rust so it can be tested
//! natively; [`Demo`] is the thin wasm-bindgen wrapper the page talks to.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use exactz::compressor::{self, serialize_edit_log};
use exactz::constraints::check_all;
use exactz::corrector::correct_with_reference;
use exactz::grid::{encode_field, DType};
use exactz::metrics::recalls;
use exactz::synth;
use exactz::topology::{build_reference, classify_critical_points, CriticalPoint};
use exactz::{CorrectionConfig, CorrectionMode, ReferenceTopology, ScalarField};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    Original,
    Decompressed,
    Corrected,
}

impl std::str::FromStr for Which {
    type Err = exactz::Error;

    fn from_str(s: &str) -> exactz::Result<Self> {
        match s {
            "original" => Ok(Which::Original),
            "decompressed" => Ok(Which::Decompressed),
            "corrected" => Ok(Which::Corrected),
            other => Err(exactz::Error::InvalidArgument(format!(
                "unknown field {other:?}"
            ))),
        }
    }
}

#[derive(Serialize, Debug)]
pub struct CompressionSummary {
    pub width: usize,
    pub height: usize,
    pub xi_abs: f64,
    pub original_bytes: usize,
    pub compressed_bytes: usize,
    pub cr: f64,
    pub max_abs_error: f64,
    pub violations: usize,
    pub cp_recall: f64,
    pub eg_recall: f64,
    pub ct_recall: f64,
}

#[derive(Serialize, Debug)]
pub struct CorrectionSummary {
    pub mode: String,
    pub steps: u32,
    pub iterations: usize,
    pub theoretical_bound: usize,
    pub d_max: usize,
    pub edit_count: usize,
    pub lossless_edits: usize,
    pub edit_bytes: usize,
    pub ocr: f64,
    pub violations_per_pass: Vec<usize>,
    pub max_abs_error: f64,
    pub cp_recall: f64,
    pub eg_recall: f64,
    pub ct_recall: f64,
}

#[derive(Serialize, Debug)]
pub struct PointView {
    pub x: usize,
    pub y: usize,
    pub kind: &'static str,
    /// Same vertex with the same type in the original field.
    pub preserved: bool,
}

#[derive(Serialize, Debug)]
pub struct TopologyView {
    pub points: Vec<PointView>,
    /// Original critical points absent from this field.
    pub missing: Vec<PointView>,
    pub violations: usize,
}

fn kind(cp: &CriticalPoint) -> &'static str {
    match (
        cp.is_min,
        cp.is_max,
        cp.is_join_saddle || cp.is_split_saddle,
    ) {
        (true, _, _) => "min",
        (_, true, _) => "max",
        (_, _, true) => "saddle",
        _ => "regular",
    }
}

pub struct Session {
    width: usize,
    height: usize,
    reference: ReferenceTopology,
    fhat: ScalarField,
    g: Option<ScalarField>,
    xi_rel: f64,
    original_bytes: usize,
    compressed_bytes: usize,
}

impl Session {
    /// Generates a Gaussian-mixture field and compresses it.
    pub fn new(
        width: usize,
        height: usize,
        bumps: usize,
        seed: u64,
        xi_rel: f64,
    ) -> exactz::Result<Self> {
        let f = synth::gaussian_mix(&[height, width], bumps, seed)?;
        let blob = compressor::compress(&f, xi_rel)?;
        let fhat = blob.decompress()?;
        Ok(Session {
            width,
            height,
            original_bytes: encode_field(&f, DType::F64).len(),
            compressed_bytes: blob.to_bytes().len(),
            reference: build_reference(&f)?,
            fhat,
            g: None,
            xi_rel,
        })
    }

    pub fn field(&self, which: Which) -> exactz::Result<&ScalarField> {
        match which {
            Which::Original => Ok(self.reference.field()),
            Which::Decompressed => Ok(&self.fhat),
            Which::Corrected => self
                .g
                .as_ref()
                .ok_or_else(|| exactz::Error::InvalidArgument("run the correction first".into())),
        }
    }

    pub fn compression(&self) -> exactz::Result<CompressionSummary> {
        let f = self.reference.field();
        let r = recalls(&self.reference, &self.fhat)?;
        Ok(CompressionSummary {
            width: self.width,
            height: self.height,
            xi_abs: compressor::absolute_bound(f, self.xi_rel)?,
            original_bytes: self.original_bytes,
            compressed_bytes: self.compressed_bytes,
            cr: self.original_bytes as f64 / self.compressed_bytes as f64,
            max_abs_error: compressor::max_abs_error(f, &self.fhat)?,
            violations: check_all(&self.reference, &self.fhat, CorrectionMode::Reformulated)?.len(),
            cp_recall: r.cp_recall,
            eg_recall: r.eg_recall,
            ct_recall: r.ct_recall,
        })
    }

    pub fn correct(
        &mut self,
        mode: CorrectionMode,
        steps: u32,
    ) -> exactz::Result<CorrectionSummary> {
        let cfg = CorrectionConfig::relative(self.xi_rel)
            .with_mode(mode)
            .with_steps(steps);
        let res = correct_with_reference(&self.reference, &self.fhat, &cfg)?;
        let r = recalls(&self.reference, &res.g)?;
        let edit_bytes = serialize_edit_log(&res.edits).len();
        let summary = CorrectionSummary {
            mode: mode.to_string(),
            steps,
            iterations: res.iterations,
            theoretical_bound: res.theoretical_bound,
            d_max: res.d_max,
            edit_count: res.edits.len(),
            lossless_edits: res.edits.lossless_count(),
            edit_bytes,
            ocr: self.original_bytes as f64 / (self.compressed_bytes + edit_bytes) as f64,
            violations_per_pass: res.violation_counts.clone(),
            max_abs_error: compressor::max_abs_error(self.reference.field(), &res.g)?,
            cp_recall: r.cp_recall,
            eg_recall: r.eg_recall,
            ct_recall: r.ct_recall,
        };
        self.g = Some(res.g);
        Ok(summary)
    }

    pub fn topology(&self, which: Which) -> exactz::Result<TopologyView> {
        let field = self.field(which)?;
        let at = |v: usize| (v % self.width, v / self.width);
        let original = self.reference.critical_points();
        let mine = classify_critical_points(field);
        let preserved = |cp: &CriticalPoint, others: &[CriticalPoint]| {
            others
                .binary_search_by_key(&cp.vertex, |c| c.vertex)
                .is_ok_and(|i| others[i].flags() == cp.flags())
        };
        let view = |cp: &CriticalPoint, others: &[CriticalPoint]| {
            let (x, y) = at(cp.vertex.index());
            PointView {
                x,
                y,
                kind: kind(cp),
                preserved: preserved(cp, others),
            }
        };
        Ok(TopologyView {
            points: mine.iter().map(|cp| view(cp, original)).collect(),
            missing: original
                .iter()
                .filter(|cp| !preserved(cp, &mine))
                .map(|cp| view(cp, &mine))
                .collect(),
            violations: check_all(&self.reference, field, CorrectionMode::Reformulated)?.len(),
        })
    }
}

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(js_err)
}

#[wasm_bindgen]
pub struct Demo {
    session: Session,
}

#[wasm_bindgen]
impl Demo {
    /// Generates and compresses a `width × height` field.
    #[wasm_bindgen(constructor)]
    pub fn new(
        width: usize,
        height: usize,
        bumps: usize,
        seed: u32,
        xi_rel: f64,
    ) -> Result<Demo, JsError> {
        let session = Session::new(width, height, bumps, seed as u64, xi_rel).map_err(js_err)?;
        Ok(Demo { session })
    }

    /// Compression statistics as JSON.
    pub fn compression(&self) -> Result<String, JsError> {
        to_json(&self.session.compression().map_err(js_err)?)
    }

    /// Runs the correction (`"original"` or `"reformulated"`) and returns its
    /// statistics as JSON.
    pub fn correct(&mut self, mode: &str, steps: u32) -> Result<String, JsError> {
        let mode: CorrectionMode = mode.parse().map_err(js_err)?;
        to_json(&self.session.correct(mode, steps).map_err(js_err)?)
    }

    /// Values of `"original"`, `"decompressed"` or `"corrected"`, row by row.
    pub fn values(&self, which: &str) -> Result<Vec<f64>, JsError> {
        let which: Which = which.parse().map_err(js_err)?;
        Ok(self.session.field(which).map_err(js_err)?.values().to_vec())
    }

    /// Critical points of a field compared with the original, as JSON.
    pub fn topology(&self, which: &str) -> Result<String, JsError> {
        let which: Which = which.parse().map_err(js_err)?;
        to_json(&self.session.topology(which).map_err(js_err)?)
    }
}
