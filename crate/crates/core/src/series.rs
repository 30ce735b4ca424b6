//! Formal power series `b(t) = sum_k eps^k b^(k)(t)` and `G = sum_k eps^k G^(k)`,
//! with the beta_0-dependence kept exact.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forcing::{factorial, ForcingSpec};
use crate::frequency::FrequencyVector;
use crate::mode::Mode;
use crate::trig::TrigPolynomial;

pub type ModeMap = BTreeMap<Mode, TrigPolynomial>;

/// Tolerance on coefficients below which a polynomial counts as identically zero.
pub const ZERO_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SeriesTable {
    order: usize,
    dim: usize,
    /// `b[k][nu]`, `b[0]` empty.
    b: Vec<ModeMap>,
    /// `[F]^(k)_nu` for `k = 0..=order`.
    brackets: Vec<ModeMap>,
    divisors: BTreeMap<Mode, f64>,
}

fn convolve_into(out: &mut ModeMap, a: &ModeMap, b: &ModeMap) {
    for (na, pa) in a {
        for (nb, pb) in b {
            let prod = pa * pb;
            if !prod.is_zero() {
                *out.entry(*na + *nb).or_default() += &prod;
            }
        }
    }
}

fn prune(map: &mut ModeMap) {
    map.retain(|_, p| !p.is_zero());
}

impl SeriesTable {
    /// Fill orders `1..=order` by the Fourier-space recursion.
    pub fn extend_series(
        spec: &ForcingSpec,
        omega: &FrequencyVector,
        order: usize,
    ) -> Result<Self> {
        let d = spec.dim();
        if omega.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: omega.dim(),
            });
        }
        let zero = Mode::zero(d);
        let mut b: Vec<ModeMap> = vec![ModeMap::new()];
        let mut brackets: Vec<ModeMap> = Vec::with_capacity(order + 1);
        let mut divisors = BTreeMap::new();
        // powers[s][k] is the order-k part of b^s as a mode map
        let mut powers: Vec<Vec<ModeMap>> =
            vec![vec![ModeMap::from([(zero, TrigPolynomial::constant(1.0))])]];
        let force: Vec<(Mode, &TrigPolynomial)> =
            spec.force_modes().map(|(m, p)| (*m, p)).collect();

        for k in 0..=order {
            // extend powers to order k using b^(1..=k)
            if k > 0 {
                for s in 1..=k {
                    if powers.len() <= s {
                        powers.push(vec![ModeMap::new(); s]);
                    }
                    let mut cell = ModeMap::new();
                    for j in 1..=(k - s + 1) {
                        if powers[s - 1].len() > k - j {
                            convolve_into(&mut cell, &b[j], &powers[s - 1][k - j]);
                        }
                    }
                    prune(&mut cell);
                    while powers[s].len() < k {
                        powers[s].push(ModeMap::new());
                    }
                    powers[s].push(cell);
                }
                powers[0].push(ModeMap::new());
            }
            let mut bracket = ModeMap::new();
            for (s, ps) in powers.iter().enumerate() {
                let Some(cell) = ps.get(k) else { continue };
                if cell.is_empty() {
                    continue;
                }
                let inv = 1.0 / factorial(s as u32);
                for (nu0, f) in &force {
                    let df = f.derivative(s as u32).scale_real(inv);
                    if df.is_zero() {
                        continue;
                    }
                    for (nu, p) in cell {
                        *bracket.entry(*nu0 + *nu).or_default() += &(&df * p);
                    }
                }
            }
            prune(&mut bracket);
            if k < order {
                let mut next = ModeMap::new();
                for (nu, p) in &bracket {
                    if nu.is_zero() {
                        continue;
                    }
                    let w = omega.divisor(nu)?;
                    divisors.insert(*nu, w);
                    next.insert(*nu, p.scale_real(1.0 / (w * w)));
                }
                b.push(next);
            }
            brackets.push(bracket);
        }
        Ok(SeriesTable {
            order,
            dim: d,
            b,
            brackets,
            divisors,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `b^(k)_nu`; zero when absent.
    pub fn b(&self, k: usize, nu: &Mode) -> TrigPolynomial {
        self.b
            .get(k)
            .and_then(|m| m.get(nu))
            .cloned()
            .unwrap_or_default()
    }

    /// All nonzero `b^(k)_nu` at order `k`.
    pub fn b_order(&self, k: usize) -> &ModeMap {
        &self.b[k]
    }

    /// `G^(k) = [F]^(k)_0`.
    pub fn g(&self, k: usize) -> Result<TrigPolynomial> {
        let m = self.brackets.get(k).ok_or(Error::IncompleteTable {
            need: k,
            have: self.order,
        })?;
        Ok(m.get(&Mode::zero(self.dim)).cloned().unwrap_or_default())
    }

    /// `[F]^(k)_nu` as stored by the recursion.
    pub fn bracket(&self, k: usize, nu: &Mode) -> Result<TrigPolynomial> {
        let m = self.brackets.get(k).ok_or(Error::IncompleteTable {
            need: k,
            have: self.order,
        })?;
        Ok(m.get(nu).cloned().unwrap_or_default())
    }

    /// `(omega . nu)` values used as divisors.
    pub fn divisors(&self) -> &BTreeMap<Mode, f64> {
        &self.divisors
    }

    /// `sum_{k<=order} eps^k sum_nu e^{i nu.omega t} b^(k)_nu(beta0)`.
    pub fn evaluate_solution(
        &self,
        omega: &[f64],
        beta0: f64,
        eps: f64,
        t: f64,
        order: usize,
    ) -> f64 {
        let mut total = Complex64::default();
        for k in 1..=order.min(self.order) {
            let mut at_k = Complex64::default();
            for (nu, p) in &self.b[k] {
                at_k += p.evaluate(beta0) * Complex64::from_polar(1.0, nu.dot_f64(omega) * t);
            }
            total += at_k * eps.powi(k as i32);
        }
        total.re
    }

    /// Coefficients `b_nu = sum_{k<=order} eps^k b^(k)_nu(beta0)`.
    pub fn mode_values(&self, beta0: f64, eps: f64, order: usize) -> BTreeMap<Mode, Complex64> {
        let mut out: BTreeMap<Mode, Complex64> = BTreeMap::new();
        for k in 1..=order.min(self.order) {
            let e = eps.powi(k as i32);
            for (nu, p) in &self.b[k] {
                *out.entry(*nu).or_default() += p.evaluate(beta0) * e;
            }
        }
        out
    }

    /// Smallest `k` with `G^(k)` not negligible.
    pub fn find_k0(&self) -> LeadingOrder {
        for k in 0..=self.order {
            let g = self.g(k).expect("k within table");
            if !g.is_negligible(ZERO_TOL) {
                return LeadingOrder::Order(k);
            }
        }
        LeadingOrder::AllZero(self.order)
    }

    /// `sup_beta0 |b^(k)_nu|` bound per order (coefficient l1 norm, max over nu).
    pub fn decay_profile(&self) -> Vec<(usize, f64)> {
        (1..=self.order)
            .map(|k| {
                (
                    k,
                    self.b[k].values().map(|p| p.l1_norm()).fold(0.0, f64::max),
                )
            })
            .collect()
    }

    /// Heuristic radius `1 / max_k (sup |b^(k)|)^{1/k}`; a hint, not a bound.
    pub fn radius_hint(&self) -> f64 {
        let growth = self
            .decay_profile()
            .into_iter()
            .filter(|(_, v)| *v > 0.0)
            .map(|(k, v)| v.powf(1.0 / k as f64))
            .fold(0.0, f64::max);
        if growth == 0.0 {
            f64::INFINITY
        } else {
            1.0 / growth
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LeadingOrder {
    Order(usize),
    AllZero(usize),
}

/// `[F]^(k)_nu` by explicit sum over `s`, `nu_0` and ordered compositions
/// `k_1 + ... + k_s = k` with momenta `nu_1 + ... + nu_s = nu - nu_0`.
/// Independent of the power recursion used by [`SeriesTable::extend_series`].
pub fn bracket_f(
    spec: &ForcingSpec,
    table: &SeriesTable,
    k: usize,
    nu: &Mode,
) -> Result<TrigPolynomial> {
    if k > table.order() {
        return Err(Error::IncompleteTable {
            need: k,
            have: table.order(),
        });
    }
    let mut out = TrigPolynomial::zero();
    for (nu0, _) in spec.force_modes() {
        let rest = *nu - *nu0;
        for s in 0..=k {
            if s == 0 && k > 0 {
                continue;
            }
            let node = spec.node_factor(nu0, s as u32);
            if node.is_zero() {
                continue;
            }
            let mut acc = TrigPolynomial::zero();
            compositions(table, s, k, rest, TrigPolynomial::constant(1.0), &mut acc);
            out += &(&node * &acc);
        }
    }
    Ok(out)
}

fn compositions(
    table: &SeriesTable,
    slots: usize,
    k_left: usize,
    nu_left: Mode,
    prod: TrigPolynomial,
    acc: &mut TrigPolynomial,
) {
    if slots == 0 {
        if k_left == 0 && nu_left.is_zero() {
            *acc += &prod;
        }
        return;
    }
    if k_left < slots {
        return;
    }
    for ki in 1..=(k_left - slots + 1) {
        for (nui, p) in table.b_order(ki) {
            let next = &prod * p;
            if next.is_zero() {
                continue;
            }
            compositions(table, slots - 1, k_left - ki, nu_left - *nui, next, acc);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn golden() -> FrequencyVector {
        FrequencyVector::golden(128).unwrap()
    }

    #[test]
    fn first_orders_cos_cos() {
        let spec = ForcingSpec::bundled("cos_a1_cos_b").unwrap();
        let t = SeriesTable::extend_series(&spec, &golden(), 4).unwrap();
        let half_sin = TrigPolynomial::sin(1).scale_real(-0.5);
        assert!(t.b(1, &Mode::new(&[1, 0])).max_deviation(&half_sin) < 1e-15);
        assert!(t.b(1, &Mode::new(&[-1, 0])).max_deviation(&half_sin) < 1e-15);
        assert!(t.g(0).unwrap().is_zero());
        let g1 = t.g(1).unwrap();
        assert!(g1.max_deviation(&TrigPolynomial::sin(2).scale_real(0.25)) < 1e-15);
        let br = t.bracket(1, &Mode::new(&[2, 0])).unwrap();
        assert!(br.max_deviation(&TrigPolynomial::sin(2).scale_real(0.125)) < 1e-15);
        assert!(t.bracket(1, &Mode::new(&[3, 0])).unwrap().is_zero());
        assert_eq!(t.find_k0(), LeadingOrder::Order(1));
    }

    #[test]
    fn solution_values() {
        let spec = ForcingSpec::bundled("cos_a1_cos_b").unwrap();
        let w = golden();
        let t = SeriesTable::extend_series(&spec, &w, 3).unwrap();
        assert_eq!(t.evaluate_solution(w.components(), 1.0, 0.0, 2.0, 3), 0.0);
        let eps = 1e-3;
        let v = t.evaluate_solution(w.components(), 0.7, eps, 0.0, 1);
        assert!((v + eps * 0.7f64.sin()).abs() < 1e-15);
        assert!(t.evaluate_solution(w.components(), 0.0, eps, 0.0, 1).abs() < 1e-18);
    }

    #[test]
    fn k0_routes() {
        let w = golden();
        let p = SeriesTable::extend_series(&ForcingSpec::bundled("pendulum_like").unwrap(), &w, 2)
            .unwrap();
        assert_eq!(p.find_k0(), LeadingOrder::Order(0));
        let n = SeriesTable::extend_series(&ForcingSpec::bundled("cos_a1_plus_b").unwrap(), &w, 4)
            .unwrap();
        assert_eq!(n.find_k0(), LeadingOrder::AllZero(4));
    }

    #[test]
    fn recursion_matches_composition_sums() {
        let w = golden();
        for name in crate::forcing::BUNDLED {
            let spec = ForcingSpec::bundled(name).unwrap();
            let t = SeriesTable::extend_series(&spec, &w, 4).unwrap();
            for k in 0..=3 {
                for nu in Mode::ball(2, ((k + 1) as u64) * spec.max_norm())
                    .into_iter()
                    .chain([Mode::zero(2)])
                {
                    let direct = bracket_f(&spec, &t, k, &nu).unwrap();
                    let stored = t.bracket(k, &nu).unwrap();
                    assert!(
                        direct.max_deviation(&stored) <= 1e-13 * (1.0 + stored.max_abs_coeff()),
                        "{name} k={k} nu={nu}"
                    );
                    if !nu.is_zero() && k < 4 {
                        let x = w.dot(&nu);
                        let lhs = t.b(k + 1, &nu).scale_real(x * x);
                        assert!(
                            lhs.max_deviation(&direct) <= 1e-12 * (1.0 + direct.max_abs_coeff())
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn support_and_reality() {
        let w = golden();
        for name in crate::forcing::BUNDLED {
            let spec = ForcingSpec::bundled(name).unwrap();
            let t = SeriesTable::extend_series(&spec, &w, 4).unwrap();
            for k in 1..=4 {
                for (nu, p) in t.b_order(k) {
                    assert!(nu.norm1() <= k as u64 * spec.max_norm());
                    assert!(!nu.is_zero());
                    let mirror = t.b(k, &-*nu);
                    for beta in [0.0, 0.3, FRAC_PI_2, 2.0, PI] {
                        assert!((p.evaluate(beta) - mirror.evaluate(beta).conj()).norm() < 1e-12);
                    }
                }
                let g = t.g(k).unwrap();
                assert!(g.is_real(1e-12));
            }
        }
    }

    #[test]
    fn incomplete_table() {
        let spec = ForcingSpec::bundled("cos_a1_cos_b").unwrap();
        let t = SeriesTable::extend_series(&spec, &golden(), 2).unwrap();
        assert!(matches!(
            bracket_f(&spec, &t, 3, &Mode::zero(2)),
            Err(Error::IncompleteTable { .. })
        ));
    }
}
