//! Self-energies of order-truncated cluster structures, the identity and symmetry
//! checks, and the dressed propagator scheme with the `xi` clamp.

use std::cell::RefCell;
use std::collections::HashMap;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::Result;
use crate::scales::Cutoff;
use crate::series::SeriesTable;
use crate::trees::{
    enumerate_skeletons, is_renormalised, LabelledTree, TreeContext, UNBOUNDED_SCALE,
};
use crate::trig::TrigPolynomial;

/// A self-energy structure with its node-factor product.
#[derive(Clone, Debug)]
pub struct Structure {
    pub tree: LabelledTree,
    pub factor: TrigPolynomial,
}

/// All structures (trees with one entry leaf and zero total mode) of order `1..=max_k`.
pub struct StructureBank {
    by_order: Vec<Vec<Structure>>,
}

impl StructureBank {
    pub fn build(ctx: &TreeContext, max_k: usize) -> Result<Self> {
        let mut by_order = vec![vec![]];
        for k in 1..=max_k {
            let mut v = vec![];
            enumerate_skeletons(ctx, k, true, None, &mut |t| {
                v.push(Structure {
                    tree: t.clone(),
                    factor: ctx.node_product(t),
                });
            })?;
            by_order.push(v);
        }
        Ok(StructureBank { by_order })
    }

    pub fn max_order(&self) -> usize {
        self.by_order.len() - 1
    }

    pub fn order(&self, k: usize) -> &[Structure] {
        self.by_order.get(k).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Undressed `M^(k)_n(x)`: structures of order `k` whose internal lines all sit on
/// scales `<= n`, with at least one on scale `n`. For `k = 1` only `n = -1` is nonempty.
pub fn self_energy(
    ctx: &TreeContext,
    bank: &StructureBank,
    n: i64,
    k: usize,
    x: f64,
) -> Result<TrigPolynomial> {
    let mut acc = TrigPolynomial::zero();
    if k == 1 {
        if n == -1 {
            for s in bank.order(1) {
                acc += &s.factor;
            }
        }
        return Ok(acc);
    }
    if n < 0 {
        return Ok(acc);
    }
    for s in bank.order(k) {
        let t = &s.tree;
        for (lab, w) in ctx.scale_assignments_upto(t, x, n)? {
            if t.internal_lines().map(|v| lab[v]).max() != Some(n) {
                continue;
            }
            let mut weight = w;
            for v in t.internal_lines() {
                let a = t.argument(v, &ctx.divisors, x);
                weight /= a * a;
            }
            acc.add_scaled(&s.factor, Complex64::new(weight, 0.0));
        }
    }
    Ok(acc)
}

/// `sum_{p=-1}^{n} M^(k)_p(x)`.
pub fn cumulative_self_energy(
    ctx: &TreeContext,
    bank: &StructureBank,
    n: i64,
    k: usize,
    x: f64,
) -> Result<TrigPolynomial> {
    let mut acc = TrigPolynomial::zero();
    for p in -1..=n {
        acc += &self_energy(ctx, bank, p, k, x)?;
    }
    Ok(acc)
}

/// Self-energy of order `k` summed over every scale at zero argument. Structures
/// with a path line of zero momentum vanish there.
pub fn self_energy_at_zero(bank: &StructureBank, ctx: &TreeContext, k: usize) -> TrigPolynomial {
    let mut acc = TrigPolynomial::zero();
    'outer: for s in bank.order(k) {
        let t = &s.tree;
        let mut w = 1.0;
        for v in t.internal_lines() {
            let a = t.argument(v, &ctx.divisors, 0.0);
            if a == 0.0 {
                continue 'outer;
            }
            w /= a * a;
        }
        acc.add_scaled(&s.factor, Complex64::new(w, 0.0));
    }
    acc
}

/// Largest coefficient deviation between `d G^(k-1) / d beta_0` and the zero-argument
/// self-energy of order `k`.
pub fn ward_identity_check(
    ctx: &TreeContext,
    bank: &StructureBank,
    series: &SeriesTable,
    k: usize,
) -> Result<f64> {
    let lhs = series.g(k - 1)?.derivative(1);
    let rhs = self_energy_at_zero(bank, ctx, k);
    Ok(lhs.max_deviation(&rhs))
}

#[derive(Clone, Debug, Serialize)]
pub struct SymmetryReport {
    pub n: i64,
    pub k: usize,
    /// `max_x |M(x) - M(-x)|` over the grid, coefficient-wise.
    pub residual: f64,
    /// Central differences at `0` with steps `h` and `h/2`, and their Richardson combination.
    pub derivative_h: f64,
    pub derivative_half: f64,
    pub derivative_richardson: f64,
}

/// Even-symmetry residual of `M^(k)_n` on `+-{h, 2h, ..., points * h}` and the
/// central-difference derivative at `0`.
pub fn symmetry_check(
    ctx: &TreeContext,
    bank: &StructureBank,
    n: i64,
    k: usize,
    h: f64,
    points: usize,
) -> Result<SymmetryReport> {
    let mut residual: f64 = 0.0;
    for i in 1..=points {
        let x = h * i as f64;
        let plus = self_energy(ctx, bank, n, k, x)?;
        let minus = self_energy(ctx, bank, n, k, -x)?;
        residual = residual.max(plus.max_deviation(&minus));
    }
    let diff = |step: f64| -> Result<TrigPolynomial> {
        let d = &self_energy(ctx, bank, n, k, step)? - &self_energy(ctx, bank, n, k, -step)?;
        Ok(d.scale_real(1.0 / (2.0 * step)))
    };
    let dh = diff(h)?;
    let dh2 = diff(h / 2.0)?;
    let rich = (&dh2.scale_real(4.0) - &dh).scale_real(1.0 / 3.0);
    Ok(SymmetryReport {
        n,
        k,
        residual,
        derivative_h: dh.max_abs_coeff(),
        derivative_half: dh2.max_abs_coeff(),
        derivative_richardson: rich.max_abs_coeff(),
    })
}

/// `x` samples inside the open support of `Psi_n`, both signs, log-spaced.
pub fn support_grid(ctx: &TreeContext, n: usize, per_side: usize) -> Vec<f64> {
    let levels = ctx.family.levels();
    if n >= levels.len() {
        return vec![];
    }
    let lo = levels[n]
        / if ctx.family.variant() == Cutoff::Smooth {
            8.0
        } else {
            4.0
        };
    let hi = if n == 0 {
        4.0 * levels[0]
    } else {
        levels[n - 1] / 4.0
    };
    let (llo, lhi) = (lo.ln(), hi.ln());
    let mut out = Vec::with_capacity(2 * per_side);
    for i in 0..per_side {
        let t = (i as f64 + 0.5) / per_side as f64;
        let x = (llo + t * (lhi - llo)).exp();
        out.push(x);
        out.push(-x);
    }
    out
}

fn sup_over_beta(p: &TrigPolynomial) -> f64 {
    (0..64)
        .map(|i| p.evaluate(i as f64 * std::f64::consts::TAU / 64.0).norm())
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct GainBound {
    /// `ratios[n][k-1] = sup |M^(k)_n(x)| / x^2` over the support of `Psi_{n+2}`.
    pub ratios: Vec<Vec<f64>>,
    /// Smallest `C` with every ratio `<= C^k`.
    pub constant: f64,
}

impl GainBound {
    pub fn is_finite(&self) -> bool {
        self.constant.is_finite() && self.ratios.iter().flatten().all(|r| r.is_finite())
    }
}

/// Sweep of `|M^(k)_n(x)| / x^2` over the support of `Psi_{n+2}`, `n <= nmax`, `k <= kmax`.
pub fn gain_bound(
    ctx: &TreeContext,
    bank: &StructureBank,
    nmax: usize,
    kmax: usize,
    per_side: usize,
) -> Result<GainBound> {
    let mut ratios = vec![];
    let mut constant: f64 = 0.0;
    for n in 0..=nmax {
        let grid = support_grid(ctx, n + 2, per_side);
        let mut row = vec![];
        for k in 1..=kmax {
            let mut sup: f64 = 0.0;
            for &x in &grid {
                let m = cumulative_self_energy(ctx, bank, n as i64, k, x)?;
                sup = sup.max(sup_over_beta(&m) / (x * x));
            }
            constant = constant.max(sup.powf(1.0 / k as f64));
            row.push(sup);
        }
        ratios.push(row);
    }
    Ok(GainBound { ratios, constant })
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    /// `(n, 2^{m_n}, sup_beta |M^(k)_n(0)|)`.
    pub samples: Vec<(usize, f64, f64)>,
    /// Slope of `-ln |M|` against `2^{m_n}` over the nonzero samples; `None` with fewer than two.
    pub rate: Option<f64>,
    pub prefactor: Option<f64>,
}

/// Fit `|M^(k)_n(0)| <= K1 e^{-K2 2^{m_n}}` over `n <= nmax`.
pub fn decay_fit(
    ctx: &TreeContext,
    bank: &StructureBank,
    ms: &[usize],
    k: usize,
    nmax: usize,
) -> Result<DecayFit> {
    let mut samples = vec![];
    for n in 0..=nmax.min(ms.len() - 1) {
        let m = self_energy(ctx, bank, n as i64, k, 0.0)?;
        samples.push((n, (1u64 << ms[n]) as f64, sup_over_beta(&m)));
    }
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.2 > 1e-300)
        .map(|s| (s.1, s.2.ln()))
        .collect();
    if pts.len() < 2 {
        return Ok(DecayFit {
            samples,
            rate: None,
            prefactor: None,
        });
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    // shift the intercept so every sample sits under the fitted line
    let icpt = pts
        .iter()
        .map(|p| p.1 - slope * p.0)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(DecayFit {
        samples,
        rate: Some(-slope),
        prefactor: Some(icpt.exp()),
    })
}

/// Dressed self-energies at fixed `(eps, beta_0)`, truncated at order `max_k`.
pub struct DressedScheme<'a> {
    ctx: &'a TreeContext<'a>,
    bank: &'a StructureBank,
    eps: f64,
    beta0: f64,
    max_k: usize,
    regularised: bool,
    factors: Vec<Vec<Complex64>>,
    base: f64,
    memo: RefCell<HashMap<(i64, u64), f64>>,
}

impl<'a> DressedScheme<'a> {
    pub fn new(
        ctx: &'a TreeContext<'a>,
        bank: &'a StructureBank,
        eps: f64,
        beta0: f64,
        max_k: usize,
        regularised: bool,
    ) -> Self {
        let factors = (0..=max_k.min(bank.max_order()))
            .map(|k| {
                bank.order(k)
                    .iter()
                    .map(|s| s.factor.evaluate(beta0))
                    .collect()
            })
            .collect();
        let base = eps
            * ctx
                .spec
                .zero_mode_force()
                .derivative(1)
                .evaluate_real(beta0);
        DressedScheme {
            ctx,
            bank,
            eps,
            beta0,
            max_k,
            regularised,
            factors,
            base,
            memo: RefCell::new(HashMap::new()),
        }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    /// `xi_n(M_n(0))`, or 1 in the plain scheme.
    pub fn clamp(&self, n: i64) -> Result<f64> {
        if !self.regularised {
            return Ok(1.0);
        }
        self.ctx.family.xi_n(n, self.cumulative(n, 0.0)?)
    }

    /// `xi_n(M_n(0))` regardless of the scheme flag.
    pub fn xi_value(&self, n: i64) -> Result<f64> {
        self.ctx.family.xi_n(n, self.cumulative(n, 0.0)?)
    }

    /// Dressed propagator on scale `q` at argument `a`.
    pub fn propagator(&self, q: i64, a: f64) -> Result<f64> {
        let psi = self.ctx.family.big_psi(q as usize, a)?;
        if psi == 0.0 {
            return Ok(0.0);
        }
        let m = self.cumulative(q - 1, a)? * self.clamp(q - 1)?;
        Ok(psi / (a * a - m))
    }

    /// Cumulative self-energy up to scale `n` at argument `x`.
    pub fn cumulative(&self, n: i64, x: f64) -> Result<f64> {
        if n < 0 {
            return Ok(self.base);
        }
        if let Some(v) = self.memo.borrow().get(&(n, x.to_bits())) {
            return Ok(*v);
        }
        let below = self.cumulative(n - 1, x)?;
        let chi = self.ctx.family.chi_n(n, x)?;
        let v = if chi == 0.0 {
            below
        } else {
            below + chi * self.scale_term(n, x)?
        };
        self.memo.borrow_mut().insert((n, x.to_bits()), v);
        Ok(v)
    }

    /// Renormalised structures on scale `n` with dressed inner propagators.
    pub fn scale_term(&self, n: i64, x: f64) -> Result<f64> {
        let ext = if x == 0.0 {
            UNBOUNDED_SCALE
        } else {
            match self.ctx.family.top_scale(x) {
                Ok(s) => s as i64,
                Err(_) => UNBOUNDED_SCALE,
            }
        };
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 2..=self.max_k.min(self.bank.max_order()) {
            let mut order_sum = Complex64::new(0.0, 0.0);
            for (s, f) in self.bank.order(k).iter().zip(&self.factors[k]) {
                let t = &s.tree;
                for (lab, _) in self.ctx.scale_assignments_upto(t, x, n)? {
                    if t.internal_lines().map(|v| lab[v]).max() != Some(n) {
                        continue;
                    }
                    let mut lt = t.clone();
                    lt.scales = lab;
                    if !is_renormalised(&lt, Some(ext)) {
                        continue;
                    }
                    let mut w = 1.0;
                    for v in lt.internal_lines() {
                        w *=
                            self.propagator(lt.scales[v], lt.argument(v, &self.ctx.divisors, x))?;
                        if w == 0.0 {
                            break;
                        }
                    }
                    order_sum += f * w;
                }
            }
            acc += order_sum * self.eps.powi(k as i32);
        }
        Ok(acc.re)
    }

    /// Smallest `Psi_{n+1}(x) (|x^2 - xi M_n(x)| - x^2/2)` over the grid points in the
    /// support of `Psi_{n+1}`.
    pub fn property1_margin(&self, n: usize, grid: &[f64]) -> Result<f64> {
        let clamp = self.clamp(n as i64)?;
        let mut margin = f64::INFINITY;
        for &x in grid {
            let psi = self.ctx.family.big_psi(n + 1, x)?;
            if psi == 0.0 {
                continue;
            }
            let m = self.cumulative(n as i64, x)? * clamp;
            margin = margin.min(psi * ((x * x - m).abs() - x * x / 2.0));
        }
        Ok(margin)
    }

    /// Smallest `|x^2 - xi M_n(x)| / x^2 - 1/2` over the grid points in the support of
    /// `Psi_{n+1}`: the margin without the cutoff weight.
    pub fn property1_relative_margin(&self, n: usize, grid: &[f64]) -> Result<f64> {
        let clamp = self.clamp(n as i64)?;
        let mut margin = f64::INFINITY;
        for &x in grid {
            if self.ctx.family.big_psi(n + 1, x)? == 0.0 {
                continue;
            }
            let m = self.cumulative(n as i64, x)? * clamp;
            margin = margin.min((x * x - m).abs() / (x * x) - 0.5);
        }
        Ok(margin)
    }

    /// Whether every `xi_n(M_n(0))`, `-1 <= n <= nmax`, equals 1.
    pub fn clamp_inactive(&self, nmax: usize) -> Result<bool> {
        for n in -1..=nmax as i64 {
            if self.xi_value(n)? != 1.0 {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Value of a renormalised tree with dressed propagators at `beta_0`.
    pub fn tree_value(&self, t: &LabelledTree) -> Result<f64> {
        let mut w = Complex64::new(1.0, 0.0);
        for v in 0..t.len() {
            if t.is_node(v) {
                match self.ctx.node_factor(&t.modes[v], t.s(v)) {
                    Some(f) => w *= f.evaluate(self.beta0),
                    None => return Ok(0.0),
                }
            }
        }
        for v in t.internal_lines() {
            if t.scales[v] < 0 {
                continue;
            }
            w *= self.propagator(t.scales[v], t.argument(v, &self.ctx.divisors, 0.0))?;
        }
        Ok(w.re)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Property1Report {
    pub eps: f64,
    pub beta0: f64,
    /// Margins for `n = 0..=nmax`.
    pub margins: Vec<f64>,
    /// The same without the cutoff weight; at most `1/2` when `M` vanishes.
    pub relative_margins: Vec<f64>,
    pub clamp_inactive: bool,
}

impl Property1Report {
    pub fn passes(&self) -> bool {
        self.clamp_inactive && self.margins.iter().all(|m| *m > 0.0)
    }
}

/// Property-1 margins of the regularised scheme at `(eps, beta_0)`.
pub fn property1_check(
    ctx: &TreeContext,
    bank: &StructureBank,
    eps: f64,
    beta0: f64,
    max_k: usize,
    nmax: usize,
    per_side: usize,
) -> Result<Property1Report> {
    let scheme = DressedScheme::new(ctx, bank, eps, beta0, max_k, true);
    let mut margins = vec![];
    let mut relative_margins = vec![];
    for n in 0..=nmax {
        let grid = support_grid(ctx, n + 1, per_side);
        margins.push(scheme.property1_margin(n, &grid)?);
        relative_margins.push(scheme.property1_relative_margin(n, &grid)?);
    }
    Ok(Property1Report {
        eps,
        beta0,
        margins,
        relative_margins,
        clamp_inactive: scheme.clamp_inactive(nmax)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::ForcingSpec;
    use crate::frequency::{scale_sequence, BryunoTable, FrequencyVector};
    use crate::scales::CutoffFamily;
    use std::f64::consts::PI;

    fn family(variant: Cutoff) -> (FrequencyVector, CutoffFamily, Vec<usize>) {
        let w = FrequencyVector::golden(128).unwrap();
        let t = BryunoTable::compute(&w, 14, 14).unwrap();
        let s = scale_sequence(&t);
        (w.clone(), CutoffFamily::new(variant, &t, &s).unwrap(), s.ms)
    }

    #[test]
    fn order_one_is_the_zero_mode_derivative() {
        let (w, fam, _) = family(Cutoff::Sharp);
        let spec = ForcingSpec::bundled("pendulum_like").unwrap();
        let ctx = TreeContext::new(&spec, &w, &fam, 6).unwrap();
        let bank = StructureBank::build(&ctx, 1).unwrap();
        let m = self_energy(&ctx, &bank, -1, 1, 0.3).unwrap();
        assert!(m.max_deviation(&TrigPolynomial::cos(1).scale_real(-1.0)) < 1e-15);
        assert!(self_energy(&ctx, &bank, 0, 1, 0.3).unwrap().is_zero());
        let none = ForcingSpec::bundled("cos_a1_cos_b").unwrap();
        let ctx2 = TreeContext::new(&none, &w, &fam, 6).unwrap();
        let bank2 = StructureBank::build(&ctx2, 1).unwrap();
        for n in -1..3 {
            assert!(self_energy(&ctx2, &bank2, n, 1, 0.2).unwrap().is_zero());
        }
    }

    #[test]
    fn ward_anchor_order_two() {
        let (w, fam, _) = family(Cutoff::Sharp);
        let spec = ForcingSpec::bundled("cos_a1_cos_b").unwrap();
        let ctx = TreeContext::new(&spec, &w, &fam, 6).unwrap();
        let bank = StructureBank::build(&ctx, 2).unwrap();
        let m = self_energy_at_zero(&bank, &ctx, 2);
        assert!(m.max_deviation(&TrigPolynomial::cos(2).scale_real(0.5)) < 1e-14);
        let mut total = TrigPolynomial::zero();
        for n in 0..4 {
            total += &self_energy(&ctx, &bank, n, 2, 0.0).unwrap();
        }
        assert!(total.max_deviation(&m) < 1e-14);
        let series = SeriesTable::extend_series(&spec, &w, 2).unwrap();
        assert!(ward_identity_check(&ctx, &bank, &series, 2).unwrap() < 1e-14);
        assert!(ward_identity_check(&ctx, &bank, &series, 1).unwrap() == 0.0);
    }

    #[test]
    fn symmetric_in_x() {
        let (w, fam, _) = family(Cutoff::Smooth);
        let spec = ForcingSpec::bundled("pendulum_like").unwrap();
        let ctx = TreeContext::new(&spec, &w, &fam, 6).unwrap();
        let bank = StructureBank::build(&ctx, 3).unwrap();
        for k in 1..=3 {
            for n in -1..=2 {
                let r = symmetry_check(&ctx, &bank, n, k, 1e-4, 4).unwrap();
                assert!(r.residual <= 1e-10, "{r:?}");
                assert!(r.derivative_h <= 1e-6, "{r:?}");
                if k == 1 {
                    assert_eq!(r.residual, 0.0);
                }
            }
        }
    }

    #[test]
    fn unperturbed_scheme_has_plain_margin() {
        let (w, fam, _) = family(Cutoff::Smooth);
        let spec = ForcingSpec::bundled("pendulum_like").unwrap();
        let ctx = TreeContext::new(&spec, &w, &fam, 6).unwrap();
        let bank = StructureBank::build(&ctx, 3).unwrap();
        let r = property1_check(&ctx, &bank, 0.0, 0.4, 3, 2, 16).unwrap();
        assert!(r.passes());
        let s = DressedScheme::new(&ctx, &bank, 0.0, 0.4, 3, true);
        assert_eq!(s.cumulative(2, 0.01).unwrap(), 0.0);
    }

    #[test]
    fn clamp_restores_margin() {
        let (w, fam, _) = family(Cutoff::Smooth);
        let spec = ForcingSpec::bundled("pendulum_like").unwrap();
        let ctx = TreeContext::new(&spec, &w, &fam, 6).unwrap();
        let bank = StructureBank::build(&ctx, 2).unwrap();
        // eps d F_0 = +eps at beta_0 = pi, so x^2 - M vanishes near x = sqrt(eps)
        let eps = 2e-3;
        let grid = support_grid(&ctx, 1, 400);
        let plain = DressedScheme::new(&ctx, &bank, eps, PI, 2, false);
        assert!(plain.property1_margin(0, &grid).unwrap() < 0.0);
        let reg = DressedScheme::new(&ctx, &bank, eps, PI, 2, true);
        assert_eq!(reg.xi_value(0).unwrap(), 0.0);
        assert!(reg.property1_margin(0, &grid).unwrap() > 0.0);
        assert!(!reg.clamp_inactive(0).unwrap());
    }

    #[test]
    fn decay_fit_on_sparse_values() {
        let (w, fam, ms) = family(Cutoff::Sharp);
        let spec = ForcingSpec::bundled("pendulum_like").unwrap();
        let ctx = TreeContext::new(&spec, &w, &fam, 6).unwrap();
        let bank = StructureBank::build(&ctx, 2).unwrap();
        let fit = decay_fit(&ctx, &bank, &ms, 2, 3).unwrap();
        assert_eq!(fit.samples.len(), 4);
        assert!(fit.samples[0].2 > 0.0);
        if let Some(r) = fit.rate {
            assert!(r > 0.0);
        }
    }
}
