use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use exactz::bound::vulnerability_stats;
use exactz::compressor::{
    self, absolute_bound, apply_edit_log_checked, check_bound, deserialize_edit_log, max_abs_error,
    serialize_edit_log, CompressedBlob, Deflate, Identity, LosslessStage,
};
use exactz::constraints::check_all;
use exactz::corrector::{correct_with_reference, ErrorBound};
use exactz::distsim::{run_distributed_correction, SimStats};
use exactz::grid::{encode_field, load_field_with_dtype, save_field, save_field_as, DType};
use exactz::metrics::MetricsReport;
use exactz::synth::{self, SyntheticKind};
use exactz::topology::{build_reference, classify_critical_points, TopologySummary};
use exactz::{CorrectionConfig, CorrectionMode, CorrectionResult, ScalarField};

use crate::args::*;
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn emit<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
    match path {
        Some(p) => fs::write(p, text + "\n").map_err(|e| CliError::Core(e.into())),
        None => print_out(&text),
    }
}

/// Writes a line to stdout; a closed pipe is not an error.
fn print_out(text: &str) -> Result<()> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Core(e.into())),
        _ => Ok(()),
    }
}

fn load(path: &Path) -> Result<(ScalarField, DType)> {
    Ok(load_field_with_dtype(path)?)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Core(e.into()))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::Core(e.into()))
}

fn optional_bound(rel: Option<f64>, abs: Option<f64>) -> Option<ErrorBound> {
    rel.map(ErrorBound::Relative)
        .or(abs.map(ErrorBound::Absolute))
}

fn resolve_xi(bound: ErrorBound, f: &ScalarField) -> Result<f64> {
    Ok(match bound {
        ErrorBound::Relative(r) => absolute_bound(f, r)?,
        ErrorBound::Absolute(a) => {
            if !(a.is_finite() && a >= 0.0) {
                return Err(CliError::Core(exactz::Error::InvalidArgument(format!(
                    "absolute error bound {a} must be finite and non-negative"
                ))));
            }
            a
        }
    })
}

fn config(eb: &BoundSpec, opts: &CorrectionOpts) -> CorrectionConfig {
    CorrectionConfig {
        bound: eb.bound(),
        steps: opts.steps,
        mode: opts.mode.into(),
        max_iter_override: opts.max_iter_override,
    }
}

fn synthetic(kind: KindArg, s: &SynthOpts) -> Result<(ScalarField, Option<ScalarField>)> {
    Ok(match kind {
        KindArg::Gaussian => (
            synth::generate(
                &s.dims,
                SyntheticKind::GaussianMix {
                    k: s.k,
                    seed: s.seed,
                },
            )?,
            None,
        ),
        KindArg::Monotone => (synth::generate(&s.dims, SyntheticKind::Monotone)?, None),
        KindArg::Cascade => {
            let (f, fhat) = synth::cascade_1d(s.len);
            (f, Some(fhat))
        }
    })
}

fn dtype_of(d: DTypeArg) -> DType {
    match d {
        DTypeArg::F32 => DType::F32,
        DTypeArg::F64 => DType::F64,
    }
}

fn dtype_name(d: DType) -> &'static str {
    match d {
        DType::F32 => "f32",
        DType::F64 => "f64",
    }
}

#[derive(Serialize)]
struct GenOutput {
    dims: Vec<usize>,
    dtype: &'static str,
    min: f64,
    max: f64,
    critical_points: usize,
    out: String,
    out_decomp: Option<String>,
}

pub fn gen(a: &GenArgs) -> Result<()> {
    let (f, fhat) = synthetic(a.kind, &a.synth)?;
    let dtype = dtype_of(a.dtype);
    save_field_as(&f, &a.out, dtype)?;
    let mut out_decomp = None;
    if let Some(p) = &a.out_decomp {
        let fhat = fhat.ok_or_else(|| {
            CliError::Core(exactz::Error::InvalidArgument(
                "--out-decomp is only available for the cascade kind".into(),
            ))
        })?;
        save_field_as(&fhat, p, dtype)?;
        out_decomp = Some(p.display().to_string());
    }
    let (f, _) = load(&a.out)?;
    let (min, max) = f.value_range();
    emit(
        &GenOutput {
            dims: f.dims().to_vec(),
            dtype: dtype_name(dtype),
            min,
            max,
            critical_points: classify_critical_points(&f).len(),
            out: a.out.display().to_string(),
            out_decomp,
        },
        None,
    )
}

#[derive(Serialize)]
struct CompressOutput {
    xi_abs: f64,
    original_bytes: usize,
    compressed_bytes: usize,
    cr: f64,
    escapes: usize,
    max_abs_error: f64,
}

pub fn compress(a: &CompressArgs) -> Result<()> {
    let (f, dtype) = load(&a.field)?;
    let xi = resolve_xi(a.eb.bound(), &f)?;
    let blob = compressor::compress_abs(&f, xi)?.with_dtype(dtype);
    let stage: &dyn LosslessStage = match a.stage {
        StageArg::Deflate => &Deflate::default(),
        StageArg::Identity => &Identity,
    };
    let bytes = blob.to_bytes_with(stage);
    write_bytes(&a.out, &bytes)?;
    let original_bytes = encode_field(&f, dtype).len();
    emit(
        &CompressOutput {
            xi_abs: xi,
            original_bytes,
            compressed_bytes: bytes.len(),
            cr: original_bytes as f64 / bytes.len() as f64,
            escapes: blob.escape_count(),
            max_abs_error: max_abs_error(&f, &blob.decompress()?)?,
        },
        None,
    )
}

#[derive(Serialize)]
struct DecompressOutput {
    dims: Vec<usize>,
    xi_abs: f64,
    source_dtype: &'static str,
    out: String,
}

pub fn decompress(a: &DecompressArgs) -> Result<()> {
    let blob = CompressedBlob::from_bytes(&read_bytes(&a.blob)?)?;
    let g = blob.decompress()?;
    save_field(&g, &a.out)?;
    emit(
        &DecompressOutput {
            dims: g.dims().to_vec(),
            xi_abs: blob.xi_abs(),
            source_dtype: dtype_name(blob.dtype()),
            out: a.out.display().to_string(),
        },
        None,
    )
}

#[derive(Serialize)]
struct IngestOutput {
    dims: Vec<usize>,
    max_abs_error: f64,
    xi_abs: f64,
    /// The bound was taken from the measured error.
    effective_bound: bool,
    within_bound: bool,
}

pub fn ingest(a: &IngestArgs) -> Result<()> {
    let (f, _) = load(&a.orig)?;
    let (fhat, _) = load(&a.decomp)?;
    f.same_grid(&fhat)?;
    let err = max_abs_error(&f, &fhat)?;
    let (mut xi, effective) = match optional_bound(a.rel, a.abs) {
        Some(b) => (resolve_xi(b, &f)?, false),
        None => (err, true),
    };
    let mut verdict = check_bound(&f, &fhat, xi);
    // the measured error is rounded; widen it to the exact one
    while effective && verdict.is_err() {
        xi = xi.next_up();
        verdict = check_bound(&f, &fhat, xi);
    }
    emit(
        &IngestOutput {
            dims: f.dims().to_vec(),
            max_abs_error: err,
            xi_abs: xi,
            effective_bound: effective,
            within_bound: verdict.is_ok(),
        },
        None,
    )?;
    Ok(verdict?)
}

#[derive(Serialize)]
struct CorrectionStats {
    mode: String,
    steps: u32,
    xi_abs: f64,
    iterations: usize,
    edit_rounds: usize,
    d_max: usize,
    theoretical_bound: usize,
    edit_count: usize,
    lossless_edits: usize,
    max_abs_error: f64,
    violation_counts: Vec<usize>,
    reason_counts: BTreeMap<String, usize>,
}

impl CorrectionStats {
    fn new(res: &CorrectionResult, f: &ScalarField, mode: CorrectionMode) -> Result<Self> {
        Ok(CorrectionStats {
            mode: mode.to_string(),
            steps: res.edits.steps(),
            xi_abs: res.edits.xi_abs(),
            iterations: res.iterations,
            edit_rounds: res.edit_rounds(),
            d_max: res.d_max,
            theoretical_bound: res.theoretical_bound,
            edit_count: res.edits.len(),
            lossless_edits: res.edits.lossless_count(),
            max_abs_error: max_abs_error(f, &res.g)?,
            violation_counts: res.violation_counts.clone(),
            reason_counts: res
                .reason_counts
                .iter()
                .map(|(r, &c)| (r.name().to_string(), c))
                .collect(),
        })
    }
}

fn write_outputs(res: &CorrectionResult, field: Option<&Path>, edits: Option<&Path>) -> Result<()> {
    if let Some(p) = field {
        save_field(&res.g, p)?;
    }
    if let Some(p) = edits {
        write_bytes(p, &serialize_edit_log(&res.edits))?;
    }
    Ok(())
}

pub fn correct(a: &CorrectArgs) -> Result<()> {
    let (f, _) = load(&a.orig)?;
    let (fhat, _) = load(&a.decomp)?;
    let cfg = config(&a.eb, &a.opts);
    let reference = build_reference(&f)?;
    let res = correct_with_reference(&reference, &fhat, &cfg)?;
    write_outputs(&res, a.out_field.as_deref(), a.out_edits.as_deref())?;
    emit(
        &CorrectionStats::new(&res, &f, cfg.mode)?,
        a.stats.as_deref(),
    )
}

#[derive(Serialize)]
struct VerifyOutput {
    mode: String,
    violations: usize,
    targets: usize,
    by_reason: BTreeMap<String, usize>,
    listed: Vec<exactz::Violation>,
    within_bound: Option<bool>,
}

pub fn verify(a: &VerifyArgs) -> Result<()> {
    let (f, _) = load(&a.orig)?;
    let (g, _) = load(&a.cand)?;
    f.same_grid(&g)?;
    let mode: CorrectionMode = a.mode.into();
    let bound_check = match optional_bound(a.rel, a.abs) {
        Some(b) => Some(check_bound(&f, &g, resolve_xi(b, &f)?)),
        None => None,
    };
    let reference = build_reference(&f)?;
    let violations = check_all(&reference, &g, mode)?;
    let mut by_reason = BTreeMap::new();
    for v in &violations {
        *by_reason.entry(v.reason.name().to_string()).or_insert(0) += 1;
    }
    emit(
        &VerifyOutput {
            mode: mode.to_string(),
            violations: violations.len(),
            targets: exactz::constraints::targets(&violations).len(),
            by_reason,
            listed: violations.iter().take(a.limit).copied().collect(),
            within_bound: bound_check.as_ref().map(|r| r.is_ok()),
        },
        None,
    )?;
    if let Some(r) = bound_check {
        r?;
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(CliError::Violations(violations.len()))
    }
}

pub fn bound(a: &BoundArgs) -> Result<()> {
    let (f, _) = load(&a.orig)?;
    let (fhat, _) = load(&a.decomp)?;
    f.same_grid(&fhat)?;
    let xi = resolve_xi(a.eb.bound(), &f)?;
    check_bound(&f, &fhat, xi)?;
    let edits = match &a.edits {
        Some(p) => Some(deserialize_edit_log(&read_bytes(p)?)?),
        None => None,
    };
    let reference = build_reference(&f)?;
    let stats = vulnerability_stats(&reference, &fhat, xi, a.steps, edits.as_ref())?;
    emit(&stats, None)
}

#[derive(Serialize)]
struct SimulateOutput {
    correction: CorrectionStats,
    simulation: SimStats,
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let (f, _) = load(&a.orig)?;
    let (fhat, _) = load(&a.decomp)?;
    let cfg = config(&a.eb, &a.opts);
    let reference = build_reference(&f)?;
    let (res, mut stats) = run_distributed_correction(&reference, &fhat, &cfg, a.ranks)?;
    if let Some(t1) = a.baseline {
        stats = stats.with_baseline(t1);
    }
    write_outputs(&res, a.out_field.as_deref(), a.out_edits.as_deref())?;
    emit(
        &SimulateOutput {
            correction: CorrectionStats::new(&res, &f, cfg.mode)?,
            simulation: stats,
        },
        a.stats.as_deref(),
    )
}

fn print_report(report: &MetricsReport, csv: bool) -> Result<()> {
    if csv {
        print_out(&format!(
            "{}\n{}",
            MetricsReport::CSV_HEADER,
            report.csv_row()
        ))
    } else {
        emit(report, None)
    }
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let (f, dtype) = load(&a.orig)?;
    let (g, _) = load(&a.cand)?;
    let reference = build_reference(&f)?;
    let mut report = MetricsReport::new(&reference, &g)?;
    let mut edit_bytes = 0;
    if let Some(p) = &a.edits {
        let bytes = read_bytes(p)?;
        edit_bytes = bytes.len();
        report = report.with_edits(&deserialize_edit_log(&bytes)?, &f);
    }
    if let Some(p) = &a.blob {
        let blob_bytes = read_bytes(p)?.len();
        report = report.with_sizes(encode_field(&f, dtype).len(), blob_bytes, edit_bytes)?;
    }
    print_report(&report, a.csv)
}

pub fn pipeline(c: &PipelineConfig) -> Result<()> {
    let (f, dtype) = match (&c.field, c.gen) {
        (Some(p), _) => load(p)?,
        (None, Some(kind)) => (synthetic(kind, &c.synth)?.0, DType::F64),
        (None, None) => unreachable!("clap requires --gen or --field"),
    };
    let cfg = config(&c.eb, &c.opts);
    let xi = cfg.xi_abs(&f)?;
    let blob = compressor::compress_abs(&f, xi)?.with_dtype(dtype);
    let blob_bytes = blob.to_bytes();
    let fhat = blob.decompress()?;
    let reference = build_reference(&f)?;
    let res = match c.ranks {
        Some(p) => run_distributed_correction(&reference, &fhat, &cfg, p)?.0,
        None => correct_with_reference(&reference, &fhat, &cfg)?,
    };
    let edit_bytes = serialize_edit_log(&res.edits);
    let report = MetricsReport::new(&reference, &res.g)?
        .with_sizes(
            encode_field(&f, dtype).len(),
            blob_bytes.len(),
            edit_bytes.len(),
        )?
        .with_run(&res);

    if let Some(dir) = &c.out_dir {
        fs::create_dir_all(dir).map_err(|e| CliError::Core(e.into()))?;
        save_field_as(&f, dir.join("orig.excf"), dtype)?;
        write_bytes(&dir.join("compressed.excz"), &blob_bytes)?;
        save_field(&fhat, dir.join("decompressed.excf"))?;
        write_bytes(&dir.join("edits.exce"), &edit_bytes)?;
        save_field(&res.g, dir.join("corrected.excf"))?;
        emit(&report, Some(&dir.join("report.json")))?;
    }
    print_report(&report, c.csv)?;

    // the stored artifacts alone must rebuild the corrected field
    let stored = CompressedBlob::from_bytes(&blob_bytes)?.decompress()?;
    let rebuilt = apply_edit_log_checked(&stored, &deserialize_edit_log(&edit_bytes)?, &f)?;
    check_bound(&f, &rebuilt, xi)?;
    if rebuilt != res.g {
        return Err(CliError::Breach(
            "edit log does not reproduce the corrected field".into(),
        ));
    }
    let left = check_all(&reference, &rebuilt, cfg.mode)?;
    if !left.is_empty()
        || report.cp_recall < 1.0
        || report.eg_recall < 1.0
        || report.ct_recall < 1.0
    {
        return Err(CliError::Breach(format!(
            "{} violations remain after correction",
            left.len()
        )));
    }
    Ok(())
}

pub fn topo(a: &TopoArgs) -> Result<()> {
    let (f, _) = load(&a.field)?;
    let reference = build_reference(&f)?;
    emit(&TopologySummary::new(&reference), a.out.as_deref())
}
