//! Continuation of `G(eps, beta0) = 0` in `eps` and the checks run on every sample.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mode::Mode;
use crate::series::SeriesTable;

use super::candidates::{Candidate, Route};
use super::galerkin::{GalerkinProblem, RangeSolution};

#[derive(Clone, Debug, Serialize)]
pub struct ContinuationOptions {
    /// Accepted `|G|`.
    pub g_tol: f64,
    /// Newton tolerance on the range equation.
    pub range_tol: f64,
    /// Accepted ODE residual.
    pub ode_tol: f64,
    /// Allowed change of the solution when the truncation grows by 4.
    pub tail_tol: f64,
    pub tail_check: bool,
    /// Smallest ratio between consecutive `|eps|` before giving up.
    pub min_step_ratio: f64,
    pub seed: u64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            g_tol: 1e-10,
            range_tol: 1e-13,
            ode_tol: 1e-8,
            tail_tol: 1e-9,
            tail_check: true,
            min_step_ratio: 1.0 + 1e-3,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeValue {
    pub nu: Mode,
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CurveSample {
    pub eps: f64,
    pub beta0: f64,
    #[serde(rename = "G_resid")]
    pub g_resid: f64,
    #[serde(rename = "dG")]
    pub dg: f64,
    pub ode_resid: f64,
    pub range_resid: f64,
    pub tail_change: Option<f64>,
    pub modes: Vec<ModeValue>,
    #[serde(skip)]
    pub coeffs: Vec<Complex64>,
}

impl CurveSample {
    /// `eps dG/dbeta0 <= 0`, with `|dG| < 1e-12` counted as zero.
    pub fn sign_ok(&self) -> bool {
        self.dg.abs() < 1e-12 || self.eps * self.dg <= 0.0
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BifurcationCurve {
    pub candidate: Candidate,
    pub eps_sign: i8,
    pub samples: Vec<CurveSample>,
    /// Why the curve stopped early, if it did.
    pub truncated: Option<String>,
    /// `beta0(eps)` extrapolated to `eps = 0`.
    pub limit: f64,
}

impl BifurcationCurve {
    /// Every sample within tolerances and with the admissible derivative sign.
    pub fn accepted(&self, opts: &ContinuationOptions) -> bool {
        !self.samples.is_empty()
            && self
                .samples
                .iter()
                .all(|s| s.g_resid <= opts.g_tol && s.ode_resid <= opts.ode_tol && s.sign_ok())
    }

    pub fn limit_error(&self) -> f64 {
        let d = (self.limit - self.candidate.beta0).rem_euclid(std::f64::consts::TAU);
        d.min(std::f64::consts::TAU - d)
    }
}

/// `count` values from `lo` to `hi` in geometric progression.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 || lo == hi {
        return vec![hi];
    }
    let r = (hi / lo).ln() / (count - 1) as f64;
    let mut out: Vec<f64> = (0..count).map(|i| lo * (r * i as f64).exp()).collect();
    // endpoints exact, so range checks against `hi` are not off by an ulp
    out[count - 1] = hi;
    out
}

/// 256 equispaced times in `[0, 2 pi / |omega|]` and 64 seeded random ones.
pub fn residual_times(omega: &[f64], seed: u64) -> Vec<f64> {
    let norm = omega.iter().map(|w| w * w).sum::<f64>().sqrt();
    let period = std::f64::consts::TAU / norm;
    let mut out: Vec<f64> = (0..256).map(|i| period * i as f64 / 256.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    out.extend((0..64).map(|_| rng.gen_range(0.0..period)));
    out
}

struct Solvers<'a, 'b> {
    main: &'b GalerkinProblem<'a>,
    tail: Option<&'b GalerkinProblem<'a>>,
    times: Vec<f64>,
}

fn find_root(
    p: &GalerkinProblem,
    eps: f64,
    start: f64,
    guess: Option<&[Complex64]>,
    opts: &ContinuationOptions,
) -> Result<RangeSolution> {
    let mut sol = p.solve_range(eps, start, guess, opts.range_tol)?;
    let target = opts.g_tol * 1e-3;
    for _ in 0..30 {
        if sol.g.abs() <= target || sol.dg == 0.0 {
            break;
        }
        let step = (-sol.g / sol.dg).clamp(-0.05, 0.05);
        let next = p.solve_range(eps, sol.beta0 + step, Some(&sol.coeffs), opts.range_tol)?;
        if next.g.abs() >= sol.g.abs() && next.g.abs() > target {
            break;
        }
        sol = next;
    }
    if sol.g.abs() <= opts.g_tol {
        return Ok(sol);
    }
    bisect_root(p, eps, sol, opts)
}

/// Bracket a sign change around the current point and bisect.
fn bisect_root(
    p: &GalerkinProblem,
    eps: f64,
    sol: RangeSolution,
    opts: &ContinuationOptions,
) -> Result<RangeSolution> {
    let g0 = sol.g;
    let mut width = 1e-4;
    let mut bracket = None;
    while width <= 0.5 {
        for dir in [1.0, -1.0] {
            let other = p.solve_range(
                eps,
                sol.beta0 + dir * width,
                Some(&sol.coeffs),
                opts.range_tol,
            )?;
            if (other.g < 0.0) != (g0 < 0.0) {
                bracket = Some((sol.clone(), other));
                break;
            }
        }
        if bracket.is_some() {
            break;
        }
        width *= 2.0;
    }
    let (mut a, mut b) = bracket.ok_or_else(|| Error::StepFailure {
        eps,
        reason: format!("no sign change of G near beta0 = {}", sol.beta0),
    })?;
    for _ in 0..100 {
        let mid = p.solve_range(
            eps,
            0.5 * (a.beta0 + b.beta0),
            Some(&a.coeffs),
            opts.range_tol,
        )?;
        if mid.g.abs() <= opts.g_tol * 1e-3 || (a.beta0 - b.beta0).abs() < 1e-15 {
            return Ok(mid);
        }
        if (mid.g < 0.0) == (a.g < 0.0) {
            a = mid;
        } else {
            b = mid;
        }
    }
    let best = if a.g.abs() < b.g.abs() { a } else { b };
    if best.g.abs() <= opts.g_tol {
        Ok(best)
    } else {
        Err(Error::StepFailure {
            eps,
            reason: format!("bisection stalled at |G| = {:e}", best.g.abs()),
        })
    }
}

fn make_sample(s: &Solvers, sol: RangeSolution, opts: &ContinuationOptions) -> Result<CurveSample> {
    let ode = s.main.ode_residual(&sol, &s.times);
    let tail_change = match s.tail {
        Some(t) if opts.tail_check && sol.eps != 0.0 => {
            let mut guess = vec![Complex64::default(); t.modes().len()];
            for (nu, c) in s.main.modes().iter().zip(&sol.coeffs) {
                guess[t.index_of(nu).expect("larger truncation contains modes")] = *c;
            }
            let wide = t.solve_range(sol.eps, sol.beta0, Some(&guess), opts.range_tol)?;
            let mut diff: f64 = 0.0;
            for (i, nu) in t.modes().iter().enumerate() {
                let base = s
                    .main
                    .index_of(nu)
                    .map(|j| sol.coeffs[j])
                    .unwrap_or_default();
                diff = diff.max((wide.coeffs[i] - base).norm());
            }
            Some(diff)
        }
        _ => None,
    };
    let modes = s
        .main
        .modes()
        .iter()
        .zip(&sol.coeffs)
        .map(|(nu, c)| ModeValue {
            nu: *nu,
            re: c.re,
            im: c.im,
        })
        .collect();
    Ok(CurveSample {
        eps: sol.eps,
        beta0: sol.beta0,
        g_resid: sol.g.abs(),
        dg: sol.dg,
        ode_resid: ode,
        range_resid: sol.residual,
        tail_change,
        modes,
        coeffs: sol.coeffs,
    })
}

/// Continue the curve from `candidate` along `|eps|` values `eps_abs` (ascending) on
/// the side `eps_sign`. The null route keeps `beta0` fixed and only checks `G`.
pub fn continue_curve(
    main: &GalerkinProblem,
    tail: Option<&GalerkinProblem>,
    candidate: &Candidate,
    eps_sign: i8,
    eps_abs: &[f64],
    opts: &ContinuationOptions,
) -> Result<BifurcationCurve> {
    let solvers = Solvers {
        main,
        tail,
        times: residual_times(main.omega(), opts.seed),
    };
    let sign = eps_sign as f64;
    let fixed = matches!(candidate.route, Route::Null { .. });
    let mut samples: Vec<CurveSample> = vec![];
    let mut truncated = None;
    let mut prev_eps = 0.0;
    let mut beta = candidate.beta0;
    let mut guess: Option<Vec<Complex64>> = None;
    let mut queue: Vec<f64> = eps_abs.iter().rev().copied().collect();
    if queue.is_empty() {
        queue.push(0.0);
    }
    while let Some(e) = queue.pop() {
        let eps = sign * e;
        let attempt = if fixed {
            main.solve_range(eps, beta, guess.as_deref(), opts.range_tol)
                .and_then(|s| {
                    if s.g.abs() <= opts.g_tol {
                        Ok(s)
                    } else {
                        Err(Error::StepFailure {
                            eps,
                            reason: format!("|G| = {:e} at fixed beta0", s.g.abs()),
                        })
                    }
                })
        } else {
            find_root(main, eps, beta, guess.as_deref(), opts)
        };
        match attempt {
            Ok(sol) => {
                beta = sol.beta0;
                guess = Some(sol.coeffs.clone());
                prev_eps = e;
                samples.push(make_sample(&solvers, sol, opts)?);
            }
            Err(err) => {
                let mid = if prev_eps > 0.0 {
                    (prev_eps * e).sqrt()
                } else {
                    0.5 * e
                };
                if e / mid.max(f64::MIN_POSITIVE) < opts.min_step_ratio || mid <= 0.0 {
                    truncated = Some(err.to_string());
                    break;
                }
                queue.push(e);
                queue.push(mid);
            }
        }
    }
    let limit = extrapolate_limit(&samples).unwrap_or(candidate.beta0);
    Ok(BifurcationCurve {
        candidate: candidate.clone(),
        eps_sign,
        samples,
        truncated,
        limit,
    })
}

/// Quadratic least-squares fit of `beta0(eps)` over the (at most four) smallest
/// `|eps|` samples, evaluated at `eps = 0`.
pub fn extrapolate_limit(samples: &[CurveSample]) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.eps, s.beta0)).collect();
    pts.sort_by(|a, b| a.0.abs().total_cmp(&b.0.abs()));
    pts.truncate(4);
    match pts.len() {
        0 => None,
        1 | 2 => Some(pts[0].1),
        _ => {
            let deg = (pts.len() - 1).min(2);
            let a = nalgebra::DMatrix::from_fn(pts.len(), deg + 1, |i, j| pts[i].0.powi(j as i32));
            let b = nalgebra::DVector::from_iterator(pts.len(), pts.iter().map(|p| p.1));
            let sol = a.svd(true, true).solve(&b, 1e-300).ok()?;
            Some(sol[0])
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SlopeFit {
    pub order: usize,
    /// `(eps, sup_nu |b_num - b_series|)`.
    pub errors: Vec<(f64, f64)>,
    pub slope: f64,
}

/// Slope of `log ||b_num - sum_{k<=K} eps^k b^(k)(beta0(eps))||` against `log |eps|`.
pub fn series_vs_numerics(
    problem: &GalerkinProblem,
    table: &SeriesTable,
    curve: &BifurcationCurve,
    order: usize,
) -> Result<SlopeFit> {
    let samples: Vec<&CurveSample> = curve.samples.iter().filter(|s| s.eps != 0.0).collect();
    if samples.len() < 3 {
        return Err(Error::InsufficientSamples {
            need: 3,
            got: samples.len(),
        });
    }
    let mut errors = vec![];
    for s in samples {
        let series = table.mode_values(s.beta0, s.eps, order);
        let mut err: f64 = 0.0;
        for (nu, c) in problem.modes().iter().zip(&s.coeffs) {
            let want = series.get(nu).copied().unwrap_or_default();
            err = err.max((c - want).norm());
        }
        for (nu, c) in &series {
            if problem.index_of(nu).is_none() {
                err = err.max(c.norm());
            }
        }
        errors.push((s.eps, err));
    }
    let pts: Vec<(f64, f64)> = errors
        .iter()
        .filter(|e| e.1 > 0.0)
        .map(|e| (e.0.abs().ln(), e.1.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientSamples {
            need: 3,
            got: pts.len(),
        });
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(SlopeFit {
        order,
        errors,
        slope: sxy / sxx,
    })
}
