//! Zero-order candidates `beta0*`: odd-order roots of `F_0` or of the leading
//! nonvanishing `G^(k0)`, with the admissible sign of `eps`.

use serde::Serialize;

use crate::series::{LeadingOrder, SeriesTable};
use crate::trig::TrigPolynomial;

const SCAN_POINTS: usize = 2048;
const ORDER_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "route", rename_all = "snake_case")]
pub enum Route {
    /// `F_0` has an odd-order zero.
    ZeroMode,
    /// `G^(j) = 0` for `j < k0` and `G^(k0)` has an odd-order zero.
    Leading { k0: usize },
    /// Every computed `G^(k)` vanishes.
    Null { through: usize },
}

#[derive(Clone, Debug, Serialize)]
pub struct Candidate {
    pub beta0: f64,
    /// Vanishing order of the root.
    pub order: u32,
    pub route: Route,
    /// Signs of `eps` on which `eps dG/dbeta0 < 0` near the root; empty when none.
    pub eps_signs: Vec<i8>,
}

impl Candidate {
    /// The fixed anchor used when every coefficient vanishes.
    pub fn null_anchor(beta0: f64, through: usize) -> Self {
        Candidate {
            beta0,
            order: 0,
            route: Route::Null { through },
            eps_signs: vec![1, -1],
        }
    }

    pub fn is_admissible(&self) -> bool {
        !self.eps_signs.is_empty()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CandidateReport {
    pub route: Route,
    pub candidates: Vec<Candidate>,
}

fn refine(p: &TrigPolynomial, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = p.evaluate_real(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = p.evaluate_real(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Smallest `s >= 1` with `|p^(s)(x)|` above tolerance, and the sign of that derivative.
pub fn vanishing_order(p: &TrigPolynomial, x: f64) -> (u32, f64) {
    let scale = p.l1_norm().max(1e-300);
    for s in 1..=32u32 {
        let v = p.derivative(s).evaluate_real(x);
        if v.abs() > ORDER_TOL * scale * (s as f64).powi(s as i32).max(1.0) {
            return (s, v.signum());
        }
    }
    (0, 0.0)
}

/// Roots in `[0, 2 pi)` where `p` changes sign, each with its vanishing order and the
/// sign of the first nonvanishing derivative there.
pub fn odd_roots(p: &TrigPolynomial) -> Vec<(f64, u32, f64)> {
    use std::f64::consts::TAU;
    let mut out: Vec<(f64, u32, f64)> = vec![];
    let step = TAU / SCAN_POINTS as f64;
    let val = |i: usize| p.evaluate_real(i as f64 * step);
    let scale = p.l1_norm();
    let mut push = |x: f64| {
        let x = x.rem_euclid(TAU);
        let x = if TAU - x < 1e-12 { 0.0 } else { x };
        let (order, sign) = vanishing_order(p, x);
        if order % 2 == 1
            && !out
                .iter()
                .any(|r| (r.0 - x).abs() < 1e-9 || (TAU - (r.0 - x).abs()) < 1e-9)
        {
            out.push((x, order, sign));
        }
    };
    for i in 0..SCAN_POINTS {
        let (a, b) = (val(i), val(i + 1));
        let tiny = 1e-14 * scale;
        if a.abs() <= tiny {
            push(i as f64 * step);
            continue;
        }
        if b.abs() <= tiny {
            continue;
        }
        if (a < 0.0) != (b < 0.0) {
            push(refine(p, i as f64 * step, (i + 1) as f64 * step));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Candidates from the series table. `eps dG/dbeta0 < 0` near the root reads
/// `eps^{k0+1} sign(p^(order)(beta0*)) < 0` with `p` the leading coefficient.
pub fn find_candidates(table: &SeriesTable) -> CandidateReport {
    let (route, k0) = match table.find_k0() {
        LeadingOrder::Order(0) => (Route::ZeroMode, 0),
        LeadingOrder::Order(k) => (Route::Leading { k0: k }, k),
        LeadingOrder::AllZero(through) => {
            return CandidateReport {
                route: Route::Null { through },
                candidates: vec![],
            }
        }
    };
    let p = table.g(k0).expect("k0 within table");
    let candidates = odd_roots(&p)
        .into_iter()
        .map(|(beta0, order, sign)| {
            let eps_signs: Vec<i8> = [1i8, -1]
                .into_iter()
                .filter(|&e| (e as f64).powi(k0 as i32 + 1) * sign < 0.0)
                .collect();
            Candidate {
                beta0,
                order,
                route,
                eps_signs,
            }
        })
        .collect();
    CandidateReport { route, candidates }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::ForcingSpec;
    use crate::frequency::FrequencyVector;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn report(name: &str) -> CandidateReport {
        let spec = ForcingSpec::bundled(name).unwrap();
        let w = FrequencyVector::golden(128).unwrap();
        find_candidates(&SeriesTable::extend_series(&spec, &w, 4).unwrap())
    }

    #[test]
    fn zero_mode_route() {
        let r = report("pendulum_like");
        assert_eq!(r.route, Route::ZeroMode);
        assert_eq!(r.candidates.len(), 2);
        assert!(r.candidates[0].beta0.abs() < 1e-12);
        assert_eq!(r.candidates[0].eps_signs, vec![1]);
        assert!((r.candidates[1].beta0 - PI).abs() < 1e-12);
        assert_eq!(r.candidates[1].eps_signs, vec![-1]);
        assert!(r.candidates.iter().all(|c| c.order == 1));
    }

    #[test]
    fn leading_order_route() {
        let r = report("cos_a1_cos_b");
        assert_eq!(r.route, Route::Leading { k0: 1 });
        let roots: Vec<f64> = r.candidates.iter().map(|c| c.beta0).collect();
        assert_eq!(roots.len(), 4);
        for (got, want) in roots.iter().zip([0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2]) {
            assert!((got - want).abs() < 1e-12, "{roots:?}");
        }
        let admissible: Vec<bool> = r.candidates.iter().map(|c| c.is_admissible()).collect();
        assert_eq!(admissible, vec![false, true, false, true]);
        assert_eq!(r.candidates[1].eps_signs, vec![1, -1]);
    }

    #[test]
    fn null_route() {
        let r = report("cos_a1_plus_b");
        assert_eq!(r.route, Route::Null { through: 4 });
        assert!(r.candidates.is_empty());
    }

    #[test]
    fn cubic_root_order() {
        // sin^3 has a third-order zero at 0 and pi
        let s = TrigPolynomial::sin(1);
        let p = &(&s * &s) * &s;
        let roots = odd_roots(&p);
        assert_eq!(roots.len(), 2);
        assert!(roots.iter().all(|r| r.1 == 3));
        // even-order zeros are skipped
        assert!(odd_roots(&(&s * &s)).is_empty());
    }
}
