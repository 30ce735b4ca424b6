//! Truncated range equation `(omega . nu)^2 b_nu = eps [F]_nu`, solved by Newton
//! with pseudo-spectral evaluation of `F` on a torus grid.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::forcing::ForcingSpec;
use crate::frequency::FrequencyVector;
use crate::mode::Mode;

pub const DEFAULT_TRUNCATION: usize = 8;
pub const DEFAULT_GRID: usize = 64;
const MAX_NEWTON: usize = 40;

/// Torus grid with `m^d` points and forward/inverse transforms along every axis.
struct TorusGrid {
    d: usize,
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl TorusGrid {
    fn new(d: usize, m: usize) -> Self {
        let mut planner = FftPlanner::new();
        TorusGrid {
            d,
            m,
            forward: planner.plan_fft_forward(m),
            inverse: planner.plan_fft_inverse(m),
        }
    }

    fn len(&self) -> usize {
        self.m.pow(self.d as u32)
    }

    fn index(&self, nu: &Mode) -> usize {
        let mut idx = 0;
        for i in 0..self.d {
            idx = idx * self.m + nu.get(i).rem_euclid(self.m as i32) as usize;
        }
        idx
    }

    /// Angles of grid point `idx`.
    fn point(&self, mut idx: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for i in (0..self.d).rev() {
            out[i] = (idx % self.m) as f64 * std::f64::consts::TAU / self.m as f64;
            idx /= self.m;
        }
        out
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let m = self.m;
        let n = data.len();
        let mut line = vec![Complex64::default(); m];
        for axis in 0..self.d {
            let stride = m.pow((self.d - 1 - axis) as u32);
            for start in 0..n {
                if !(start / stride).is_multiple_of(m) {
                    continue;
                }
                for (k, slot) in line.iter_mut().enumerate() {
                    *slot = data[start + k * stride];
                }
                plan.process(&mut line);
                for (k, v) in line.iter().enumerate() {
                    data[start + k * stride] = *v;
                }
            }
        }
    }

    /// Values from Fourier coefficients (unnormalised synthesis).
    fn synthesise(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
    }

    /// Fourier coefficients from values.
    fn analyse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
        let norm = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= norm;
        }
    }
}

/// The truncated problem for fixed forcing, frequency and truncation.
pub struct GalerkinProblem<'a> {
    spec: &'a ForcingSpec,
    omega: Vec<f64>,
    modes: Vec<Mode>,
    index: HashMap<Mode, usize>,
    divisors: Vec<f64>,
    grid: TorusGrid,
    angles: Vec<Vec<f64>>,
    /// Derivatives of `F_mu` for the support, stored as `(mu, F_mu, dF_mu)`.
    force: Vec<(
        Mode,
        crate::trig::TrigPolynomial,
        crate::trig::TrigPolynomial,
    )>,
}

/// A solved range equation at `(eps, beta0)`.
#[derive(Clone, Debug)]
pub struct RangeSolution {
    pub eps: f64,
    pub beta0: f64,
    /// `b_nu` in the order of `GalerkinProblem::modes`.
    pub coeffs: Vec<Complex64>,
    /// `sup_nu |(omega . nu)^2 b_nu - eps [F]_nu|`.
    pub residual: f64,
    pub iterations: usize,
    /// `G = [F]_0` on the solution.
    pub g: f64,
    /// `dG / d beta0` by implicit differentiation.
    pub dg: f64,
}

impl<'a> GalerkinProblem<'a> {
    pub fn new(
        spec: &'a ForcingSpec,
        omega: &FrequencyVector,
        truncation: usize,
        grid: usize,
    ) -> Result<Self> {
        if omega.dim() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                got: omega.dim(),
            });
        }
        if grid < 4 * truncation.max(1) {
            return Err(Error::Config(format!(
                "grid {grid} too coarse for truncation {truncation}"
            )));
        }
        let modes = Mode::ball(spec.dim(), truncation as u64);
        let index = modes.iter().enumerate().map(|(i, m)| (*m, i)).collect();
        let divisors = modes
            .iter()
            .map(|m| omega.divisor(m).map(|v| v * v))
            .collect::<Result<Vec<_>>>()?;
        let grid = TorusGrid::new(spec.dim(), grid);
        let angles = (0..grid.len()).map(|i| grid.point(i)).collect();
        let force = spec
            .force_modes()
            .map(|(m, p)| (*m, p.clone(), p.derivative(1)))
            .collect();
        Ok(GalerkinProblem {
            spec,
            omega: omega.components().to_vec(),
            modes,
            index,
            divisors,
            grid,
            angles,
            force,
        })
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn spec(&self) -> &ForcingSpec {
        self.spec
    }

    pub fn index_of(&self, nu: &Mode) -> Option<usize> {
        self.index.get(nu).copied()
    }

    /// Fourier coefficients of `F(alpha, beta0 + b(alpha))` and of `dF/dbeta` on the grid.
    fn force_coefficients(
        &self,
        beta0: f64,
        coeffs: &[Complex64],
    ) -> (Vec<Complex64>, Vec<Complex64>) {
        let n = self.grid.len();
        let mut b = vec![Complex64::default(); n];
        for (nu, c) in self.modes.iter().zip(coeffs) {
            b[self.grid.index(nu)] += c;
        }
        self.grid.synthesise(&mut b);
        let mut f = vec![Complex64::default(); n];
        let mut df = vec![Complex64::default(); n];
        for (i, alpha) in self.angles.iter().enumerate() {
            let beta = beta0 + b[i].re;
            for (mu, p, dp) in &self.force {
                let phase = Complex64::from_polar(1.0, mu.dot_f64(alpha));
                f[i] += phase * p.evaluate(beta);
                df[i] += phase * dp.evaluate(beta);
            }
        }
        self.grid.analyse(&mut f);
        self.grid.analyse(&mut df);
        (f, df)
    }

    fn coeff(&self, data: &[Complex64], nu: &Mode) -> Complex64 {
        data[self.grid.index(nu)]
    }

    fn residual_vector(&self, eps: f64, coeffs: &[Complex64], f: &[Complex64]) -> Vec<Complex64> {
        self.modes
            .iter()
            .enumerate()
            .map(|(i, nu)| self.divisors[i] * coeffs[i] - eps * self.coeff(f, nu))
            .collect()
    }

    fn jacobian(&self, eps: f64, df: &[Complex64]) -> DMatrix<Complex64> {
        let n = self.modes.len();
        DMatrix::from_fn(n, n, |i, j| {
            let diag = if i == j {
                Complex64::new(self.divisors[i], 0.0)
            } else {
                Complex64::default()
            };
            diag - eps * self.coeff(df, &(self.modes[i] - self.modes[j]))
        })
    }

    fn symmetrise(&self, coeffs: &mut [Complex64]) {
        for i in 0..self.modes.len() {
            let j = self.index[&-self.modes[i]];
            if i < j {
                let avg = (coeffs[i] + coeffs[j].conj()) * 0.5;
                coeffs[i] = avg;
                coeffs[j] = avg.conj();
            }
        }
    }

    /// First-order series guess `eps F_nu(beta0) / (omega . nu)^2`.
    pub fn first_order_guess(&self, eps: f64, beta0: f64) -> Vec<Complex64> {
        self.modes
            .iter()
            .enumerate()
            .map(|(i, nu)| eps * self.spec.force_mode(nu).evaluate(beta0) / self.divisors[i])
            .collect()
    }

    /// Newton iteration for the range equation at fixed `beta0`.
    pub fn solve_range(
        &self,
        eps: f64,
        beta0: f64,
        guess: Option<&[Complex64]>,
        tol: f64,
    ) -> Result<RangeSolution> {
        let mut coeffs = match guess {
            Some(g) if g.len() == self.modes.len() => g.to_vec(),
            _ => self.first_order_guess(eps, beta0),
        };
        if eps == 0.0 {
            coeffs.iter_mut().for_each(|c| *c = Complex64::default());
        }
        self.symmetrise(&mut coeffs);
        let mut trace = vec![];
        let mut best = f64::INFINITY;
        let mut stalled = 0;
        for it in 0..MAX_NEWTON {
            let (f, df) = self.force_coefficients(beta0, &coeffs);
            let r = self.residual_vector(eps, &coeffs, &f);
            let res = r.iter().map(|c| c.norm()).fold(0.0, f64::max);
            trace.push(res);
            if res < best * 0.5 {
                best = res;
                stalled = 0;
            } else {
                stalled += 1;
            }
            // keep iterating past the tolerance until the residual stops improving
            if res <= tol && (stalled >= 1 || res == 0.0) {
                return Ok(self.finish(eps, beta0, coeffs, res, it, &f, &df));
            }
            if stalled >= 4 {
                break;
            }
            let jac = self.jacobian(eps, &df);
            let rhs = DVector::from_vec(r);
            let step = jac.lu().solve(&rhs).ok_or(Error::SingularJacobian)?;
            for (c, s) in coeffs.iter_mut().zip(step.iter()) {
                *c -= s;
            }
            self.symmetrise(&mut coeffs);
        }
        let (f, df) = self.force_coefficients(beta0, &coeffs);
        let res = self
            .residual_vector(eps, &coeffs, &f)
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        if res <= tol {
            return Ok(self.finish(eps, beta0, coeffs, res, MAX_NEWTON, &f, &df));
        }
        Err(Error::NonConvergence {
            iterations: trace.len(),
            residual: res,
            trace,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        eps: f64,
        beta0: f64,
        coeffs: Vec<Complex64>,
        residual: f64,
        iterations: usize,
        f: &[Complex64],
        df: &[Complex64],
    ) -> RangeSolution {
        let zero = Mode::zero(self.spec.dim());
        let g = self.coeff(f, &zero).re;
        // db/dbeta0 = eps J^{-1} [dF]_S
        let rhs = DVector::from_iterator(
            self.modes.len(),
            self.modes.iter().map(|nu| eps * self.coeff(df, nu)),
        );
        let db = self.jacobian(eps, df).lu().solve(&rhs);
        let mut dg = self.coeff(df, &zero);
        if let Some(db) = db {
            for (mu, d) in self.modes.iter().zip(db.iter()) {
                dg += self.coeff(df, &-*mu) * d;
            }
        }
        RangeSolution {
            eps,
            beta0,
            coeffs,
            residual,
            iterations,
            g,
            dg: dg.re,
        }
    }

    /// `G` at `(eps, beta0)` after solving the range equation.
    pub fn bifurcation_g(
        &self,
        eps: f64,
        beta0: f64,
        guess: Option<&[Complex64]>,
        tol: f64,
    ) -> Result<RangeSolution> {
        self.solve_range(eps, beta0, guess, tol)
    }

    /// Largest `|b_{-nu} - conj(b_nu)|`.
    pub fn symmetry_defect(&self, coeffs: &[Complex64]) -> f64 {
        (0..self.modes.len())
            .map(|i| (coeffs[self.index[&-self.modes[i]]] - coeffs[i].conj()).norm())
            .fold(0.0, f64::max)
    }

    /// `sup_t |beta'' + eps F(omega t, beta(t))|` over the given times, evaluated
    /// directly from the modes and the forcing.
    pub fn ode_residual(&self, sol: &RangeSolution, times: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for &t in times {
            let mut beta = Complex64::new(sol.beta0, 0.0);
            let mut accel = Complex64::default();
            for (i, nu) in self.modes.iter().enumerate() {
                let w = nu.dot_f64(&self.omega);
                let e = sol.coeffs[i] * Complex64::from_polar(1.0, w * t);
                beta += e;
                accel -= e * (w * w);
            }
            let alpha: Vec<f64> = self.omega.iter().map(|w| w * t).collect();
            let mut force = Complex64::default();
            for (mu, p, _) in &self.force {
                force += Complex64::from_polar(1.0, mu.dot_f64(&alpha)) * p.evaluate(beta.re);
            }
            worst = worst.max((accel.re + sol.eps * force.re).abs());
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn problem(_: &ForcingSpec) -> (FrequencyVector, usize) {
        (FrequencyVector::golden(128).unwrap(), DEFAULT_TRUNCATION)
    }

    #[test]
    fn grid_round_trip() {
        let g = TorusGrid::new(2, 8);
        let mut data = vec![Complex64::default(); g.len()];
        data[g.index(&Mode::new(&[1, -2]))] = Complex64::new(0.5, 0.25);
        let orig = data.clone();
        g.synthesise(&mut data);
        let p = g.point(3 * 8 + 5);
        let want = Complex64::new(0.5, 0.25) * Complex64::from_polar(1.0, p[0] - 2.0 * p[1]);
        assert!((data[3 * 8 + 5] - want).norm() < 1e-14);
        g.analyse(&mut data);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn zero_eps_is_trivial() {
        let spec = ForcingSpec::bundled("pendulum_like").unwrap();
        let (w, n) = problem(&spec);
        let p = GalerkinProblem::new(&spec, &w, n, DEFAULT_GRID).unwrap();
        let s = p.solve_range(0.0, 0.7, None, 1e-14).unwrap();
        assert!(s.coeffs.iter().all(|c| c.norm() == 0.0));
        assert_eq!(s.residual, 0.0);
        assert!((s.g + 0.7f64.sin()).abs() < 1e-15);
        assert!(p.ode_residual(&s, &[0.0, 1.0, 2.5]) == 0.0);
    }

    #[test]
    fn first_order_agreement() {
        let spec = ForcingSpec::bundled("cos_a1_cos_b").unwrap();
        let (w, n) = problem(&spec);
        let p = GalerkinProblem::new(&spec, &w, n, DEFAULT_GRID).unwrap();
        let eps = 1e-3;
        let s = p.solve_range(eps, FRAC_PI_2, None, 1e-14).unwrap();
        let i = p.index_of(&Mode::new(&[1, 0])).unwrap();
        assert!((s.coeffs[i] - Complex64::new(-eps / 2.0, 0.0)).norm() < 10.0 * eps * eps);
        assert!(p.symmetry_defect(&s.coeffs) == 0.0);
        let q = p.solve_range(eps, FRAC_PI_4, None, 1e-14).unwrap();
        assert!((q.g - eps / 4.0).abs() < 10.0 * eps * eps);
        // dG/dbeta0 ~ eps cos(2 beta0) / 2
        assert!((s.dg + eps / 2.0).abs() < 10.0 * eps * eps);
    }

    #[test]
    fn implicit_derivative_matches_difference() {
        let spec = ForcingSpec::bundled("pendulum_like").unwrap();
        let (w, n) = problem(&spec);
        let p = GalerkinProblem::new(&spec, &w, n, DEFAULT_GRID).unwrap();
        let (eps, b, h) = (2e-2, 0.3, 1e-5);
        let mid = p.solve_range(eps, b, None, 1e-14).unwrap();
        let hi = p.solve_range(eps, b + h, None, 1e-14).unwrap();
        let lo = p.solve_range(eps, b - h, None, 1e-14).unwrap();
        assert!(((hi.g - lo.g) / (2.0 * h) - mid.dg).abs() < 1e-8);
    }

    #[test]
    fn ode_residual_and_perturbation() {
        let spec = ForcingSpec::bundled("pendulum_like").unwrap();
        let (w, n) = problem(&spec);
        let p = GalerkinProblem::new(&spec, &w, n, DEFAULT_GRID).unwrap();
        let s = p.solve_range(1e-3, 0.0, None, 1e-14).unwrap();
        let times: Vec<f64> = (0..64).map(|i| i as f64 * 0.37).collect();
        let base = p.ode_residual(&s, &times);
        assert!(base < 1e-12, "{base}");
        let i = p.index_of(&Mode::new(&[1, 0])).unwrap();
        let j = p.index_of(&Mode::new(&[-1, 0])).unwrap();
        let r = |delta: f64| {
            let mut b = s.clone();
            b.coeffs[i] += delta;
            b.coeffs[j] += delta;
            p.ode_residual(&b, &times)
        };
        let (r1, r2) = (r(1e-6), r(2e-6));
        assert!((r2 / r1 - 2.0).abs() < 0.05, "{r1} {r2}");
    }

    #[test]
    fn coarse_truncation_reports() {
        let spec = ForcingSpec::bundled("cos_a1_cos_b").unwrap();
        let w = FrequencyVector::golden(128).unwrap();
        let p = GalerkinProblem::new(&spec, &w, 2, 16).unwrap();
        match p.solve_range(1e-2, 0.4, None, 1e-14) {
            Ok(s) => assert!(s.residual <= 1e-14),
            Err(Error::NonConvergence { trace, .. }) => assert!(!trace.is_empty()),
            Err(e) => panic!("{e}"),
        }
        assert!(matches!(
            GalerkinProblem::new(&spec, &w, 8, 16),
            Err(Error::Config(_))
        ));
    }
}
