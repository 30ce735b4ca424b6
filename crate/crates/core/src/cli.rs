//! Command layer behind the `rotator` binary: JSON run configs, the four commands,
//! deterministic CSV/JSON output and the exit-code contract.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::forcing::ForcingSpec;
use crate::frequency::{
    bryuno_partial_sum, compute_alpha, scale_sequence, BryunoTable, FrequencyVector, ScaleSequence,
};
use crate::mode::Mode;
use crate::resummation::{
    decay_fit, gain_bound, property1_check, self_energy_at_zero, symmetry_check,
    ward_identity_check, StructureBank,
};
use crate::scales::{Cutoff, CutoffFamily};
use crate::series::{SeriesTable, ZERO_TOL};
use crate::solver::{
    continuation::geometric_grid, solve_spec, ContinuationOptions, Route, SolveConfig, SolveReport,
};
use crate::trees::{counting_sweep, structure_counting_sweep, sum_trees, TreeContext, TreeSet};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_FAILED: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

const MAX_SCAN_M: u32 = 20;
const MAX_K_SERIES: usize = 12;
const MAX_K_TREES: usize = 6;
const MAX_K_COUNTING: usize = 7;
const MAX_K_SELFENERGY: usize = 5;
const MAX_TRUNCATION: usize = 24;
const MAX_EPS: f64 = 0.1;

pub const SUITES: [&str; 6] = [
    "oracle",
    "counting",
    "ward",
    "symmetry",
    "property1",
    "bounds",
];
pub const TARGETS: [&str; 3] = ["psi", "series_decay", "curve"];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] Error),
    #[error("check failed: {0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Failed(_) => EXIT_FAILED,
            CliError::Run(e) => match e {
                Error::InvalidFrequency(_)
                | Error::ScanCapExceeded { .. }
                | Error::Resonance { .. }
                | Error::InvalidForcing(_)
                | Error::DimensionMismatch { .. }
                | Error::Config(_)
                | Error::Io(_)
                | Error::Json(_) => EXIT_INPUT,
                _ => EXIT_FAILED,
            },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EpsRange {
    pub min: f64,
    pub max: f64,
    /// Number of geometric samples; 0 gives the single sample `eps = 0`.
    pub count: usize,
}

impl Default for EpsRange {
    fn default() -> Self {
        EpsRange {
            min: 1e-5,
            max: 1e-3,
            count: 9,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Path to a forcing spec (relative to the config file), or `bundled:<name>`.
    pub spec: Option<String>,
    /// Named frequency preset; only `"golden"` exists.
    pub omega_preset: Option<String>,
    /// Explicit frequency components.
    pub omega: Option<Vec<f64>>,
    pub precision: usize,
    /// `alpha` command exports `m = 0..=alpha_max_m`.
    pub alpha_max_m: u32,
    /// Table depth behind the cutoff family.
    pub scale_max_m: u32,
    pub scan_cap: u32,
    pub k_series: usize,
    pub k_trees: usize,
    pub k_counting: usize,
    pub k_selfenergy: usize,
    pub cutoff: Cutoff,
    pub eps: EpsRange,
    pub truncation: usize,
    pub grid: usize,
    /// Output directory (relative to the config file).
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            spec: None,
            omega_preset: None,
            omega: None,
            precision: 128,
            alpha_max_m: 10,
            scale_max_m: 14,
            scan_cap: 16,
            k_series: 4,
            k_trees: 4,
            k_counting: 6,
            k_selfenergy: 4,
            cutoff: Cutoff::Sharp,
            eps: EpsRange::default(),
            truncation: 8,
            grid: 64,
            output_dir: PathBuf::from("out"),
            seed: 7,
        }
    }
}

fn cap(name: &str, value: usize, max: usize) -> Result<()> {
    if value > max {
        return Err(Error::Config(format!(
            "{name} = {value} exceeds the compiled limit {max}"
        )));
    }
    Ok(())
}

impl RunConfig {
    /// Parse and validate; relative paths are resolved against `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        if let Some(s) = &cfg.spec {
            if !s.starts_with("bundled:") && Path::new(s).is_relative() {
                cfg.spec = Some(base.join(s).to_string_lossy().into_owned());
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        RunConfig::from_json(&text, &base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.omega.is_some() && self.omega_preset.is_some() {
            return Err(Error::Config(
                "give either omega or omega_preset, not both".into(),
            ));
        }
        if let Some(p) = &self.omega_preset {
            if p != "golden" {
                return Err(Error::Config(format!("unknown omega preset {p:?}")));
            }
        }
        cap("scan_cap", self.scan_cap as usize, MAX_SCAN_M as usize)?;
        cap(
            "alpha_max_m",
            self.alpha_max_m as usize,
            self.scan_cap as usize,
        )?;
        cap(
            "scale_max_m",
            self.scale_max_m as usize,
            self.scan_cap as usize,
        )?;
        cap("k_series", self.k_series, MAX_K_SERIES)?;
        cap("k_trees", self.k_trees, MAX_K_TREES)?;
        cap("k_counting", self.k_counting, MAX_K_COUNTING)?;
        cap("k_selfenergy", self.k_selfenergy, MAX_K_SELFENERGY)?;
        cap("truncation", self.truncation, MAX_TRUNCATION)?;
        if self.truncation == 0 {
            return Err(Error::Config("truncation must be positive".into()));
        }
        let e = &self.eps;
        if self.eps.count > 0 && !(e.min > 0.0 && e.min <= e.max && e.max <= MAX_EPS) {
            return Err(Error::Config(format!(
                "eps range needs 0 < min <= max <= {MAX_EPS}"
            )));
        }
        Ok(())
    }

    pub fn frequency(&self) -> Result<FrequencyVector> {
        match &self.omega {
            Some(w) => FrequencyVector::new(w, self.precision),
            None => FrequencyVector::golden(self.precision),
        }
    }

    pub fn forcing(&self) -> Result<ForcingSpec> {
        match self.spec.as_deref() {
            None => Err(Error::Config("this command needs a forcing spec".into())),
            Some(s) => match s.strip_prefix("bundled:") {
                Some(name) => ForcingSpec::bundled(name),
                None => ForcingSpec::load(Path::new(s)),
            },
        }
    }

    /// `|eps|` values for continuation; empty when `count == 0`.
    pub fn eps_values(&self) -> Vec<f64> {
        if self.eps.count == 0 {
            vec![]
        } else {
            geometric_grid(self.eps.min, self.eps.max, self.eps.count)
        }
    }

    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            truncation: self.truncation,
            grid: self.grid,
            eps_values: self.eps_values(),
            series_order: self.k_series,
            options: ContinuationOptions {
                seed: self.seed,
                ..ContinuationOptions::default()
            },
        }
    }
}

/// Float formatting used for every exported number: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        // no negative zero in exports
        format!("{:.16e}", 0.0)
    } else if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn write_json_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |out: &mut String, n: usize| out.extend(std::iter::repeat_n(' ', n));
    match v {
        Value::Null | Value::Bool(_) | Value::String(_) => out.push_str(&v.to_string()),
        Value::Number(n) => match (n.as_i64(), n.as_u64(), n.as_f64()) {
            (Some(i), _, _) => write!(out, "{i}").unwrap(),
            (_, Some(u), _) => write!(out, "{u}").unwrap(),
            (_, _, Some(f)) => out.push_str(&fmt_f64(f)),
            _ => out.push_str(&n.to_string()),
        },
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(out, indent + 2);
                write_json_value(out, item, indent + 2);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (i, (k, item)) in map.iter().enumerate() {
                pad(out, indent + 2);
                out.push_str(&Value::String(k.clone()).to_string());
                out.push_str(": ");
                write_json_value(out, item, indent + 2);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push('}');
        }
    }
}

/// Pretty JSON with floats at 17 significant digits. Non-finite floats become `null`.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_json_value(&mut out, &v, 0);
    out.push('\n');
    Ok(out)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

fn csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

fn mode_field(nu: &Mode) -> String {
    format!("\"{nu}\"")
}

/// What a command wrote, and whether its checks passed.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub passed: bool,
    pub summary: String,
}

impl Outcome {
    pub fn into_result(self) -> std::result::Result<Outcome, CliError> {
        if self.passed {
            Ok(self)
        } else {
            Err(CliError::Failed(self.summary))
        }
    }
}

/// Bryuno table, scale ladder and cutoff levels for `cfg`.
pub struct Ladder {
    pub omega: FrequencyVector,
    pub table: BryunoTable,
    pub seq: ScaleSequence,
}

impl Ladder {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        let omega = cfg.frequency()?;
        let table = BryunoTable::compute(&omega, cfg.scale_max_m, cfg.scan_cap)?;
        let seq = scale_sequence(&table);
        Ok(Ladder { omega, table, seq })
    }

    pub fn family(&self, variant: Cutoff) -> Result<CutoffFamily> {
        CutoffFamily::new(variant, &self.table, &self.seq)
    }
}

/// `alpha_m` for `m <= alpha_max_m` plus the certified scale ladder.
pub fn cmd_alpha(cfg: &RunConfig) -> Result<Outcome> {
    let omega = cfg.frequency()?;
    let mut rows = vec![];
    let mut alphas = vec![];
    for m in 0..=cfg.alpha_max_m {
        let e = compute_alpha(&omega, m, cfg.scan_cap)?;
        alphas.push(e.alpha);
        rows.push(vec![
            m.to_string(),
            fmt_f64(e.alpha),
            mode_field(&e.witness),
        ]);
    }
    let table = BryunoTable::from_alphas(&alphas);
    let seq = scale_sequence(&table);
    let srows: Vec<Vec<String>> = seq
        .ms
        .iter()
        .enumerate()
        .map(|(n, &m)| {
            let p = seq.ps.get(n).map(|p| p.to_string()).unwrap_or_default();
            vec![n.to_string(), m.to_string(), p, fmt_f64(alphas[m])]
        })
        .collect();
    let partial = bryuno_partial_sum(&table, cfg.alpha_max_m as usize)?;
    let files = vec![
        write_file(
            &cfg.output_dir,
            "alpha.csv",
            &csv(&["m", "alpha", "witness"], &rows),
        )?,
        write_file(
            &cfg.output_dir,
            "scales.csv",
            &csv(&["n", "m_n", "p_n", "alpha_m_n"], &srows),
        )?,
    ];
    Ok(Outcome {
        files,
        passed: true,
        summary: format!(
            "{} alpha values, {} certified scales, partial Bryuno sum {}",
            rows.len(),
            seq.len(),
            fmt_f64(partial)
        ),
    })
}

/// Result of one verification suite.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub spec: String,
    pub passed: bool,
    pub details: Value,
}

fn check_suite(name: &str) -> std::result::Result<(), CliError> {
    if SUITES.contains(&name) {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "unknown suite {name:?}; expected one of {}",
            SUITES.join(", ")
        )))
    }
}

/// Coefficient-wise deviation between tree sums and the series recursion.
pub fn oracle_suite(spec: &ForcingSpec, ladder: &Ladder, k_max: usize) -> Result<(bool, Value)> {
    let fam = ladder.family(Cutoff::Sharp)?;
    let ctx = TreeContext::new(spec, &ladder.omega, &fam, k_max.max(1))?;
    let table = SeriesTable::extend_series(spec, &ladder.omega, k_max)?;
    let mut orders = vec![];
    let mut worst: f64 = 0.0;
    for k in 1..=k_max {
        let mut rel: f64 = 0.0;
        let mut count = 0usize;
        for nu in Mode::ball(spec.dim(), k as u64 * spec.max_norm()) {
            let got = sum_trees(&ctx, k, &nu, TreeSet::Plain)?;
            let want = if nu.is_zero() {
                table.g(k - 1)?
            } else {
                table.b(k, &nu)
            };
            rel = rel.max(got.relative_deviation(&want));
            count += 1;
        }
        worst = worst.max(rel);
        orders.push(json!({ "k": k, "modes": count, "max_relative_deviation": rel }));
    }
    Ok((
        worst <= 1e-10,
        json!({ "tolerance": 1e-10, "orders": orders }),
    ))
}

/// Integer line-counting bounds on trees and on standalone self-energy structures.
pub fn counting_suite(spec: &ForcingSpec, ladder: &Ladder, k_max: usize) -> Result<(bool, Value)> {
    let fam = ladder.family(Cutoff::Sharp)?;
    let ctx = TreeContext::new(spec, &ladder.omega, &fam, k_max.max(1))?.with_cap(k_max.max(1));
    let ms = &ladder.seq.ms;
    let trees = counting_sweep(&ctx, ms, k_max)?;
    let entering = Mode::ball(spec.dim(), 16);
    let structures = structure_counting_sweep(&ctx, &ladder.omega, ms, k_max, &entering)?;
    let passed = trees.violations.is_empty() && structures.violations.is_empty();
    let brief = |r: &crate::trees::CountingReport| {
        json!({
            "checked": r.trees_checked,
            "renormalised_trees": r.renormalised_trees,
            "strict_clusters": r.strict_clusters,
            "gapped_clusters": r.gapped_clusters,
            "violations": r.violations.len(),
            "first_violations": r.violations.iter().take(5).collect::<Vec<_>>(),
            "min_slack_per_scale": r.min_slack.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
        })
    };
    Ok((
        passed,
        json!({ "max_order": k_max, "scales": ms, "trees": brief(&trees), "structures": brief(&structures) }),
    ))
}

/// `dG^(k-1)/dbeta0` against the zero-argument self-energy, per order.
pub fn ward_suite(spec: &ForcingSpec, ladder: &Ladder, k_max: usize) -> Result<(bool, Value)> {
    let fam = ladder.family(Cutoff::Sharp)?;
    let ctx = TreeContext::new(spec, &ladder.omega, &fam, k_max.max(1))?;
    let bank = StructureBank::build(&ctx, k_max)?;
    let table = SeriesTable::extend_series(spec, &ladder.omega, k_max)?;
    let mut orders = vec![];
    let mut worst: f64 = 0.0;
    for k in 1..=k_max {
        let dev = ward_identity_check(&ctx, &bank, &table, k)?;
        let rhs = self_energy_at_zero(&bank, &ctx, k);
        let lhs = table.g(k - 1)?.derivative(1);
        worst = worst.max(dev);
        orders.push(json!({
            "k": k,
            "deviation": dev,
            "derivative_max_coeff": lhs.max_abs_coeff(),
            "self_energy_max_coeff": rhs.max_abs_coeff(),
            "both_zero": lhs.is_negligible(ZERO_TOL) && rhs.is_negligible(ZERO_TOL),
        }));
    }
    Ok((
        worst <= 1e-10,
        json!({ "tolerance": 1e-10, "orders": orders }),
    ))
}

/// Even symmetry of `M^(k)_n` and its vanishing derivative at `0`, smooth cutoffs.
pub fn symmetry_suite(spec: &ForcingSpec, ladder: &Ladder, k_max: usize) -> Result<(bool, Value)> {
    let fam = ladder.family(Cutoff::Smooth)?;
    let ctx = TreeContext::new(spec, &ladder.omega, &fam, k_max.max(1))?;
    let bank = StructureBank::build(&ctx, k_max)?;
    let mut rows = vec![];
    let mut passed = true;
    for n in 0..=3i64 {
        for k in 1..=k_max {
            let r = symmetry_check(&ctx, &bank, n, k, 1e-4, 8)?;
            passed &=
                r.residual <= 1e-10 && r.derivative_richardson <= 1e-6 && r.derivative_h <= 1e-6;
            rows.push(serde_json::to_value(&r)?);
        }
    }
    Ok((
        passed,
        json!({ "residual_tolerance": 1e-10, "derivative_tolerance": 1e-6, "h": 1e-4, "checks": rows }),
    ))
}

/// Property-1 margins and clamp activity at every sample of every continued curve,
/// smooth cutoffs.
pub fn property1_suite(
    spec: &ForcingSpec,
    ladder: &Ladder,
    cfg: &RunConfig,
    report: &SolveReport,
) -> Result<(bool, Value)> {
    let fam = ladder.family(Cutoff::Smooth)?;
    let ctx = TreeContext::new(spec, &ladder.omega, &fam, cfg.k_selfenergy.max(1))?;
    let bank = StructureBank::build(&ctx, cfg.k_selfenergy)?;
    let mut passed = !report.curves.is_empty();
    let mut curves = vec![];
    for c in &report.curves {
        let mut samples = vec![];
        for s in &c.samples {
            let r = property1_check(&ctx, &bank, s.eps, s.beta0, cfg.k_selfenergy, 3, 16)?;
            passed &= r.passes();
            samples.push(serde_json::to_value(&r)?);
        }
        curves.push(
            json!({ "beta0_star": c.candidate.beta0, "eps_sign": c.eps_sign, "samples": samples }),
        );
    }
    Ok((
        passed,
        json!({ "max_order": cfg.k_selfenergy, "max_scale": 3, "curves": curves }),
    ))
}

/// Gain bound `|M_n(x)| / x^2` (asserted on the null route) and the decay of `M_n(0)`.
pub fn bounds_suite(
    spec: &ForcingSpec,
    ladder: &Ladder,
    k_max: usize,
    k_series: usize,
) -> Result<(bool, Value)> {
    let fam = ladder.family(Cutoff::Smooth)?;
    let ctx = TreeContext::new(spec, &ladder.omega, &fam, k_max.max(1))?;
    let bank = StructureBank::build(&ctx, k_max)?;
    let table = SeriesTable::extend_series(spec, &ladder.omega, k_series)?;
    let null_route = matches!(
        crate::solver::find_candidates(&table).route,
        Route::Null { .. }
    );
    let gain = gain_bound(&ctx, &bank, 3, k_max, 16)?;
    let uniform = uniform_across_scales(&gain.ratios);
    let decay = decay_fit(&ctx, &bank, &ladder.seq.ms, 2.min(k_max), 3)?;
    let passed = !null_route || (gain.is_finite() && uniform);
    Ok((
        passed,
        json!({
            "null_route": null_route,
            "gain": gain,
            "gain_uniform": uniform,
            "decay_order2": decay,
        }),
    ))
}

/// Per order, the largest ratio over scales is within a factor 10 of the smallest nonzero one.
pub fn uniform_across_scales(ratios: &[Vec<f64>]) -> bool {
    let kmax = ratios.iter().map(Vec::len).max().unwrap_or(0);
    (0..kmax).all(|k| {
        let col: Vec<f64> = ratios
            .iter()
            .filter_map(|r| r.get(k).copied())
            .filter(|r| *r > 1e-300)
            .collect();
        match (
            col.iter().copied().reduce(f64::max),
            col.iter().copied().reduce(f64::min),
        ) {
            (Some(hi), Some(lo)) => hi.is_finite() && hi <= 10.0 * lo,
            _ => true,
        }
    })
}

pub fn cmd_verify(cfg: &RunConfig, suite: &str) -> std::result::Result<Outcome, CliError> {
    check_suite(suite)?;
    let spec = cfg.forcing()?;
    let ladder = Ladder::build(cfg)?;
    let (passed, details) = match suite {
        "oracle" => oracle_suite(&spec, &ladder, cfg.k_trees)?,
        "counting" => counting_suite(&spec, &ladder, cfg.k_counting)?,
        "ward" => ward_suite(&spec, &ladder, cfg.k_selfenergy)?,
        "symmetry" => symmetry_suite(&spec, &ladder, cfg.k_selfenergy)?,
        "property1" => {
            let table = SeriesTable::extend_series(&spec, &ladder.omega, cfg.k_series)?;
            let report = solve_spec(&spec, &ladder.omega, &table, &cfg.solve_config())?;
            property1_suite(&spec, &ladder, cfg, &report)?
        }
        "bounds" => bounds_suite(&spec, &ladder, cfg.k_selfenergy, cfg.k_series)?,
        _ => unreachable!("suite checked above"),
    };
    let report = SuiteReport {
        suite: suite.into(),
        spec: spec.name().into(),
        passed,
        details,
    };
    let file = write_file(
        &cfg.output_dir,
        &format!("verify_{suite}.json"),
        &to_json_string(&report)?,
    )?;
    Outcome {
        files: vec![file],
        passed,
        summary: format!(
            "suite {suite} on {}: {}",
            spec.name(),
            if passed { "pass" } else { "FAIL" }
        ),
    }
    .into_result()
}

fn curve_rows(report: &SolveReport) -> Vec<Vec<String>> {
    let mut rows = vec![];
    for (i, c) in report.curves.iter().enumerate() {
        for s in &c.samples {
            rows.push(vec![
                i.to_string(),
                c.eps_sign.to_string(),
                fmt_f64(c.candidate.beta0),
                fmt_f64(s.eps),
                fmt_f64(s.beta0),
                fmt_f64(s.g_resid),
                fmt_f64(s.dg),
                fmt_f64(s.ode_resid),
                s.tail_change.map(fmt_f64).unwrap_or_default(),
            ]);
        }
    }
    rows
}

const CURVE_HEADER: [&str; 9] = [
    "curve",
    "eps_sign",
    "beta0_star",
    "eps",
    "beta0",
    "G_resid",
    "dG",
    "ode_resid",
    "tail_change",
];

fn run_solve(cfg: &RunConfig) -> Result<(ForcingSpec, SolveReport)> {
    let spec = cfg.forcing()?;
    let omega = cfg.frequency()?;
    let table = SeriesTable::extend_series(&spec, &omega, cfg.k_series)?;
    let report = solve_spec(&spec, &omega, &table, &cfg.solve_config())?;
    Ok((spec, report))
}

/// Candidates and continued curves, exported as JSON (with mode values) and CSV.
pub fn cmd_solve(cfg: &RunConfig) -> std::result::Result<Outcome, CliError> {
    let (spec, report) = run_solve(cfg)?;
    let opts = cfg.solve_config().options;
    let passed = report.all_accepted(&opts);
    let files = vec![
        write_file(&cfg.output_dir, "curves.json", &to_json_string(&report)?)?,
        write_file(
            &cfg.output_dir,
            "curves.csv",
            &csv(&CURVE_HEADER, &curve_rows(&report)),
        )?,
    ];
    let samples: usize = report.curves.iter().map(|c| c.samples.len()).sum();
    Outcome {
        files,
        passed,
        summary: format!(
            "{}: {} curves, {samples} samples, {}",
            spec.name(),
            report.curves.len(),
            if passed { "accepted" } else { "REJECTED" }
        ),
    }
    .into_result()
}

fn psi_rows(cfg: &RunConfig) -> Result<Vec<Vec<String>>> {
    let ladder = Ladder::build(cfg)?;
    let fam = ladder.family(cfg.cutoff)?;
    let levels = fam.levels();
    if levels.len() < 5 {
        return Err(Error::Config(format!(
            "psi export needs 5 scales, the table certifies {}",
            levels.len()
        )));
    }
    let (lo, hi) = ((levels[4] / 4.0).ln(), (2.0 * levels[0]).ln());
    let count = 512;
    let mut rows = vec![];
    for i in 0..count {
        let x = (lo + (hi - lo) * i as f64 / (count - 1) as f64).exp();
        let mut row = vec![fmt_f64(x)];
        let mut sum = 0.0;
        for n in 0..5 {
            let v = fam.big_psi(n, x)?;
            sum += v;
            row.push(fmt_f64(v));
        }
        row.push(fmt_f64(sum));
        rows.push(row);
    }
    Ok(rows)
}

fn decay_rows(cfg: &RunConfig) -> Result<Vec<Vec<String>>> {
    let spec = cfg.forcing()?;
    let omega = cfg.frequency()?;
    let table = SeriesTable::extend_series(&spec, &omega, cfg.k_series)?;
    Ok((1..=cfg.k_series)
        .map(|k| {
            let sup = table
                .b_order(k)
                .values()
                .map(|p| {
                    (0..256)
                        .map(|i| p.evaluate(i as f64 * std::f64::consts::TAU / 256.0).norm())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            vec![k.to_string(), fmt_f64(sup)]
        })
        .collect())
}

/// Sampled data for external plotting.
pub fn cmd_plotdata(cfg: &RunConfig, target: &str) -> std::result::Result<Outcome, CliError> {
    let (name, body) = match target {
        "psi" => (
            "psi.csv",
            csv(
                &["x", "Psi_0", "Psi_1", "Psi_2", "Psi_3", "Psi_4", "sum"],
                &psi_rows(cfg)?,
            ),
        ),
        "series_decay" => ("series_decay.csv", csv(&["k", "max_b"], &decay_rows(cfg)?)),
        "curve" => (
            "curve.csv",
            csv(&CURVE_HEADER, &curve_rows(&run_solve(cfg)?.1)),
        ),
        other => {
            return Err(CliError::Usage(format!(
                "unknown target {other:?}; expected one of {}",
                TARGETS.join(", ")
            )));
        }
    };
    let file = write_file(&cfg.output_dir, name, &body)?;
    Ok(Outcome {
        files: vec![file],
        passed: true,
        summary: format!(
            "target {target}: {} rows",
            body.lines().count().saturating_sub(1)
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.0), "-2.0000000000000000e0");
        assert_eq!(fmt_f64(-0.0), fmt_f64(0.0));
        let s = to_json_string(&json!({ "a": 0.5, "b": [1, 2.5e-300], "c": "x" })).unwrap();
        assert!(s.contains("\"a\": 5.0000000000000000e-1"));
        assert!(s.contains("2.5000000000000000e-300"));
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["b"][0], 1);
    }

    #[test]
    fn omega_preset_and_components_are_exclusive() {
        let both = r#"{"omega_preset": "golden", "omega": [1.0, 0.5]}"#;
        assert!(matches!(
            RunConfig::from_json(both, Path::new(".")),
            Err(Error::Config(_))
        ));
        let neither = RunConfig::from_json("{}", Path::new(".")).unwrap();
        assert_eq!(neither.frequency().unwrap().dim(), 2);
        assert!(matches!(
            RunConfig::from_json(r#"{"k_trees": 40}"#, Path::new(".")),
            Err(Error::Config(_))
        ));
        assert!(RunConfig::from_json(r#"{"bogus": 1}"#, Path::new(".")).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), EXIT_USAGE);
        assert_eq!(CliError::Failed("x".into()).exit_code(), EXIT_FAILED);
        let res = Error::Resonance {
            nu: Mode::new(&[1, -2]),
            value: 0.0,
            threshold: 1e-19,
        };
        assert_eq!(CliError::Run(res).exit_code(), EXIT_INPUT);
        assert_eq!(
            CliError::Run(Error::SingularJacobian).exit_code(),
            EXIT_FAILED
        );
    }

    #[test]
    fn uniformity_rule() {
        assert!(uniform_across_scales(&[vec![1.0, 2.0], vec![1.5, 2.5]]));
        assert!(!uniform_across_scales(&[vec![1.0], vec![50.0]]));
        assert!(uniform_across_scales(&[vec![0.0], vec![3.0]]));
    }
}
