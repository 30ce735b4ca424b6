//! Numerical response solutions: Galerkin range solve, candidate search and
//! continuation of the bifurcation curve.

pub mod candidates;
pub mod continuation;
pub mod galerkin;

pub use candidates::{find_candidates, Candidate, CandidateReport, Route};
pub use continuation::{
    continue_curve, series_vs_numerics, BifurcationCurve, ContinuationOptions, CurveSample,
};
pub use galerkin::{GalerkinProblem, RangeSolution};

use serde::Serialize;

use crate::error::Result;
use crate::forcing::ForcingSpec;
use crate::frequency::FrequencyVector;
use crate::series::SeriesTable;

#[derive(Clone, Debug, Serialize)]
pub struct SolveConfig {
    pub truncation: usize,
    pub grid: usize,
    /// `|eps|` values, ascending; empty means the single sample `eps = 0`.
    pub eps_values: Vec<f64>,
    pub series_order: usize,
    pub options: ContinuationOptions,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            truncation: galerkin::DEFAULT_TRUNCATION,
            grid: galerkin::DEFAULT_GRID,
            eps_values: continuation::geometric_grid(1e-5, 1e-3, 9),
            series_order: 4,
            options: ContinuationOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub candidates: CandidateReport,
    pub curves: Vec<BifurcationCurve>,
    /// Largest `|G|` over a sweep of `beta0` at the largest `|eps|`; null route only.
    pub null_sweep: Option<f64>,
}

impl SolveReport {
    pub fn all_accepted(&self, opts: &ContinuationOptions) -> bool {
        !self.curves.is_empty()
            && self
                .curves
                .iter()
                .all(|c| c.accepted(opts) && c.truncated.is_none())
    }
}

/// Candidates, then one curve per admissible `(candidate, eps sign)`.
pub fn solve_spec(
    spec: &ForcingSpec,
    omega: &FrequencyVector,
    table: &SeriesTable,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    let main = GalerkinProblem::new(spec, omega, cfg.truncation, cfg.grid)?;
    let tail = if cfg.options.tail_check {
        Some(GalerkinProblem::new(
            spec,
            omega,
            cfg.truncation + 4,
            cfg.grid.max(4 * (cfg.truncation + 4)),
        )?)
    } else {
        None
    };
    let candidates = find_candidates(table);
    let mut anchors: Vec<Candidate> = candidates
        .candidates
        .iter()
        .filter(|c| c.is_admissible())
        .cloned()
        .collect();
    let mut null_sweep = None;
    if let Route::Null { through } = candidates.route {
        anchors.push(Candidate::null_anchor(0.0, through));
        let eps = cfg.eps_values.last().copied().unwrap_or(0.0);
        let mut worst: f64 = 0.0;
        for i in 0..8 {
            let b = i as f64 * std::f64::consts::TAU / 8.0;
            worst = worst.max(
                main.solve_range(eps, b, None, cfg.options.range_tol)?
                    .g
                    .abs(),
            );
        }
        null_sweep = Some(worst);
    }
    let mut curves = vec![];
    for c in &anchors {
        for &s in &c.eps_signs {
            curves.push(continue_curve(
                &main,
                tail.as_ref(),
                c,
                s,
                &cfg.eps_values,
                &cfg.options,
            )?);
        }
    }
    Ok(SolveReport {
        candidates,
        curves,
        null_sweep,
    })
}
