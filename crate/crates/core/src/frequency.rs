//! Diophantine data of a frequency vector: the ladder `alpha_m`, partial
//! Bryuno sums and the scale subsequence `m_n`.

use std::cmp::Ordering;
use std::collections::HashMap;

use astro_float::{BigFloat, RoundingMode, Sign};

use crate::error::{Error, Result};
use crate::mode::{Mode, MAX_DIM};

const RM: RoundingMode = RoundingMode::ToEven;

/// Default working precision in bits.
pub const DEFAULT_PRECISION: usize = 128;
/// Default largest `m` the exhaustive scan accepts (`|nu|_1 <= 2^14`).
pub const DEFAULT_SCAN_CAP: u32 = 14;

/// `(sqrt 5 - 1) / 2`.
pub const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Round a big float to the nearest `f64`.
pub fn big_to_f64(x: &BigFloat) -> f64 {
    let Some((words, _, sign, exp, _)) = x.as_raw_parts() else {
        return f64::NAN;
    };
    let top = words.len();
    if top == 0 || words.iter().all(|&w| w == 0) {
        return 0.0;
    }
    // mantissa is a fraction in [1/2, 1) with the most significant word last
    let hi = words[top - 1] as u128;
    let lo = if top >= 2 { words[top - 2] as u128 } else { 0 };
    let m = (hi << 64) | lo;
    let v = m as f64 * 2f64.powi(exp - 128);
    match sign {
        Sign::Neg => -v,
        Sign::Pos => v,
    }
}

#[derive(Clone, Debug)]
pub struct FrequencyVector {
    hi: Vec<BigFloat>,
    lo: Vec<f64>,
    precision: usize,
}

impl FrequencyVector {
    pub fn new(components: &[f64], precision: usize) -> Result<Self> {
        if components.is_empty() || components.len() > MAX_DIM {
            return Err(Error::InvalidFrequency(format!(
                "dimension {} outside 1..={MAX_DIM}",
                components.len()
            )));
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidFrequency("non-finite component".into()));
        }
        if components.iter().all(|&c| c == 0.0) {
            return Err(Error::InvalidFrequency("zero vector".into()));
        }
        check_precision(precision)?;
        let hi = components
            .iter()
            .map(|&c| BigFloat::from_f64(c, precision))
            .collect();
        Ok(FrequencyVector {
            hi,
            lo: components.to_vec(),
            precision,
        })
    }

    /// `(1, gamma)` with `gamma` the golden-mean conjugate, computed at full precision.
    pub fn golden(precision: usize) -> Result<Self> {
        check_precision(precision)?;
        let p = precision;
        let five = BigFloat::from_i64(5, p);
        let gamma = five.sqrt(p, RM).sub(&BigFloat::from_i64(1, p), p, RM).div(
            &BigFloat::from_i64(2, p),
            p,
            RM,
        );
        let g = big_to_f64(&gamma);
        Ok(FrequencyVector {
            hi: vec![BigFloat::from_i64(1, p), gamma],
            lo: vec![1.0, g],
            precision,
        })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn precision(&self) -> usize {
        self.precision
    }

    pub fn components(&self) -> &[f64] {
        &self.lo
    }

    fn threshold(&self) -> f64 {
        2f64.powi(-((self.precision / 2) as i32))
    }

    /// `omega . nu` at working precision.
    pub fn dot_big(&self, nu: &Mode) -> BigFloat {
        let p = self.precision;
        let mut acc = BigFloat::from_i64(0, p);
        for (i, w) in self.hi.iter().enumerate() {
            let n = nu.get(i);
            if n != 0 {
                acc = acc.add(&w.mul(&BigFloat::from_i64(n as i64, p), p, RM), p, RM);
            }
        }
        acc
    }

    /// `omega . nu` rounded to `f64` after a high-precision evaluation.
    pub fn dot(&self, nu: &Mode) -> f64 {
        big_to_f64(&self.dot_big(nu))
    }

    /// `omega . nu`, rejecting nonzero `nu` on which it vanishes at working precision.
    pub fn divisor(&self, nu: &Mode) -> Result<f64> {
        let v = self.dot(nu);
        if !nu.is_zero() && v.abs() < self.threshold() {
            return Err(Error::Resonance {
                nu: *nu,
                value: v.abs(),
                threshold: self.threshold(),
            });
        }
        Ok(v)
    }
}

fn check_precision(p: usize) -> Result<()> {
    if !(64..=4096).contains(&p) {
        return Err(Error::InvalidFrequency(format!(
            "precision {p} outside 64..=4096 bits"
        )));
    }
    Ok(())
}

/// Result of one exhaustive scan.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaEntry {
    pub m: u32,
    pub alpha: f64,
    pub witness: Mode,
}

struct Best {
    value: BigFloat,
    witness: Mode,
}

impl Best {
    fn offer(&mut self, value: BigFloat, nu: Mode) {
        let nu = nu.canonical();
        match value.cmp(&self.value) {
            Some(c) if c < 0 => {
                self.value = value;
                self.witness = nu;
            }
            Some(0) if nu < self.witness => self.witness = nu,
            _ => {}
        }
    }
}

/// Exact minimum of `|omega . nu|` over `0 < |nu|_1 <= 2^m`.
///
/// The pivot (largest `|omega_i|`) coordinate is optimised by rounding, so only the
/// remaining coordinates are enumerated.
pub fn compute_alpha(omega: &FrequencyVector, m: u32, cap: u32) -> Result<AlphaEntry> {
    if m > cap {
        return Err(Error::ScanCapExceeded { m, cap });
    }
    let d = omega.dim();
    let p = omega.precision;
    let radius: i64 = 1 << m;
    let pivot = (0..d)
        .max_by(|&a, &b| {
            omega.lo[a]
                .abs()
                .partial_cmp(&omega.lo[b].abs())
                .unwrap_or(Ordering::Equal)
                .then(b.cmp(&a))
        })
        .unwrap();
    let wp = &omega.hi[pivot];
    let wp_lo = omega.lo[pivot];
    let mut best = Best {
        value: BigFloat::from_f64(f64::INFINITY, p),
        witness: Mode::zero(d),
    };
    let tail: Vec<usize> = (0..d).filter(|&i| i != pivot).collect();
    let mut cur = vec![0i64; tail.len()];
    scan_tail(&mut cur, 0, radius, &mut |t: &[i64], used: i64| {
        let mut nu = [0i32; MAX_DIM];
        let mut s = BigFloat::from_i64(0, p);
        let mut s_lo = 0.0;
        for (j, &i) in tail.iter().enumerate() {
            nu[i] = t[j] as i32;
            if t[j] != 0 {
                s = s.add(&omega.hi[i].mul(&BigFloat::from_i64(t[j], p), p, RM), p, RM);
                s_lo += t[j] as f64 * omega.lo[i];
            }
        }
        let budget = radius - used;
        let centre = if wp_lo != 0.0 {
            (-s_lo / wp_lo).floor() as i64
        } else {
            0
        };
        let mut tried = Vec::with_capacity(6);
        for c in [centre - 1, centre, centre + 1, centre + 2, -budget, budget] {
            let c = c.clamp(-budget, budget);
            if tried.contains(&c) {
                continue;
            }
            tried.push(c);
            if c == 0 && used == 0 {
                continue;
            }
            nu[pivot] = c as i32;
            let v = s
                .add(&wp.mul(&BigFloat::from_i64(c, p), p, RM), p, RM)
                .abs();
            best.offer(v, Mode::new(&nu[..d]));
        }
        if used == 0 {
            for c in [-1i64, 1] {
                nu[pivot] = c as i32;
                best.offer(wp.abs(), Mode::new(&nu[..d]));
            }
        }
    });
    let alpha = big_to_f64(&best.value);
    if alpha < omega.threshold() {
        return Err(Error::Resonance {
            nu: best.witness,
            value: alpha,
            threshold: omega.threshold(),
        });
    }
    Ok(AlphaEntry {
        m,
        alpha,
        witness: best.witness,
    })
}

fn scan_tail(cur: &mut [i64], idx: usize, budget: i64, visit: &mut impl FnMut(&[i64], i64)) {
    fn go(cur: &mut [i64], idx: usize, left: i64, total: i64, visit: &mut impl FnMut(&[i64], i64)) {
        if idx == cur.len() {
            visit(cur, total - left);
            return;
        }
        for v in -left..=left {
            cur[idx] = v;
            go(cur, idx + 1, left - v.abs(), total, visit);
        }
        cur[idx] = 0;
    }
    go(cur, idx, budget, budget, visit);
}

/// Continued-fraction shortcut for `d = 2`: candidates are the unit vectors plus the
/// convergents and semiconvergents of `omega_small / omega_big`.
pub fn compute_alpha_cf(omega: &FrequencyVector, m: u32) -> Result<AlphaEntry> {
    if omega.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: omega.dim(),
        });
    }
    let p = omega.precision;
    let radius: i64 = 1 << m;
    let (big, small) = if omega.lo[0].abs() >= omega.lo[1].abs() {
        (0, 1)
    } else {
        (1, 0)
    };
    let mut best = Best {
        value: BigFloat::from_f64(f64::INFINITY, p),
        witness: Mode::zero(2),
    };
    let mut offer = |a: i64, b: i64| {
        // a multiplies omega_big, b multiplies omega_small
        if a.abs() + b.abs() > radius || (a == 0 && b == 0) {
            return;
        }
        let mut c = [0i32; 2];
        c[big] = a as i32;
        c[small] = b as i32;
        let nu = Mode::new(&c);
        best.offer(omega.dot_big(&nu).abs(), nu);
    };
    offer(1, 0);
    offer(0, 1);
    // continued fraction of r = |omega_small / omega_big| in [0, 1]
    let mut r = omega.hi[small].div(&omega.hi[big], p, RM).abs();
    let sgn: i64 = if (omega.lo[small] < 0.0) != (omega.lo[big] < 0.0) {
        -1
    } else {
        1
    };
    // convergents h/k approximate r; the form is k*omega_small - h*omega_big (up to sign)
    let (mut h_prev, mut k_prev, mut h, mut k) = (1i64, 0i64, 0i64, 1i64);
    let one = BigFloat::from_i64(1, p);
    for _ in 0..200 {
        if r.is_zero() {
            break;
        }
        let x = one.div(&r, p, RM);
        let a = big_to_f64(&x).floor() as i64;
        if a <= 0 || a > radius * 4 {
            break;
        }
        for j in 1..=a {
            let hs = j * h + h_prev;
            let ks = j * k + k_prev;
            if hs.abs() + ks.abs() > radius {
                break;
            }
            offer(-sgn * hs, ks);
            offer(-sgn * hs + 1, ks);
            offer(-sgn * hs - 1, ks);
        }
        let (hn, kn) = (a * h + h_prev, a * k + k_prev);
        h_prev = h;
        k_prev = k;
        h = hn;
        k = kn;
        if h.abs() + k.abs() > radius {
            break;
        }
        r = x.sub(&BigFloat::from_i64(a, p), p, RM);
    }
    let alpha = big_to_f64(&best.value);
    if alpha < omega.threshold() {
        return Err(Error::Resonance {
            nu: best.witness,
            value: alpha,
            threshold: omega.threshold(),
        });
    }
    Ok(AlphaEntry {
        m,
        alpha,
        witness: best.witness,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BryunoTable {
    pub entries: Vec<AlphaEntry>,
}

impl BryunoTable {
    /// Scan `m = 0..=max_m`.
    pub fn compute(omega: &FrequencyVector, max_m: u32, cap: u32) -> Result<Self> {
        let entries = (0..=max_m)
            .map(|m| compute_alpha(omega, m, cap))
            .collect::<Result<Vec<_>>>()?;
        Ok(BryunoTable { entries })
    }

    /// Build from raw values (for hand-made tables); witnesses are left zero.
    pub fn from_alphas(alphas: &[f64]) -> Self {
        let entries = alphas
            .iter()
            .enumerate()
            .map(|(m, &a)| AlphaEntry {
                m: m as u32,
                alpha: a,
                witness: Mode::zero(1),
            })
            .collect();
        BryunoTable { entries }
    }

    pub fn max_m(&self) -> Option<u32> {
        self.entries.last().map(|e| e.m)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn alpha(&self, m: usize) -> Result<f64> {
        self.entries
            .get(m)
            .map(|e| e.alpha)
            .ok_or(Error::InsufficientTable {
                have: self.entries.len() as i64 - 1,
                want: m as i64,
            })
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.alpha).collect()
    }

    pub fn is_monotone(&self) -> bool {
        self.entries.windows(2).all(|w| w[1].alpha <= w[0].alpha)
    }
}

/// `sum_{m <= big_m} 2^-m log(1 / alpha_m)`.
pub fn bryuno_partial_sum(table: &BryunoTable, big_m: usize) -> Result<f64> {
    (0..=big_m)
        .map(|m| {
            table
                .alpha(m)
                .map(|a| 2f64.powi(-(m as i32)) * (1.0 / a).ln())
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScaleSequence {
    pub ms: Vec<usize>,
    pub ps: Vec<usize>,
}

impl ScaleSequence {
    /// Number of scales `n` for which `alpha_{m_n}` is known.
    pub fn len(&self) -> usize {
        self.ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ms.is_empty()
    }
}

/// Certified prefix of `m_0 = 0, m_{n+1} = m_n + p_n + 1`.
///
/// `p_n` is only accepted when some later entry of the table already fails
/// `alpha_{m_n} < 2 alpha_{m_n + q}`; otherwise the table cannot bound it.
pub fn scale_sequence(table: &BryunoTable) -> ScaleSequence {
    let a = table.alphas();
    let mut ms = vec![];
    let mut ps = vec![];
    if a.is_empty() {
        return ScaleSequence { ms, ps };
    }
    let mut m = 0usize;
    ms.push(m);
    loop {
        let base = a[m];
        // alpha is non-increasing, so the condition holds on an initial run of q
        let Some(q_fail) = (0..a.len() - m).find(|&q| !(base < 2.0 * a[m + q])) else {
            break;
        };
        let p = q_fail - 1;
        ps.push(p);
        m += p + 1;
        if m >= a.len() {
            break;
        }
        ms.push(m);
    }
    ScaleSequence { ms, ps }
}

/// `omega . nu` for every `nu` in a ball, evaluated once at working precision.
#[derive(Clone, Debug)]
pub struct DivisorTable {
    values: HashMap<Mode, f64>,
    radius: u64,
}

impl DivisorTable {
    pub fn build(omega: &FrequencyVector, radius: u64) -> Result<Self> {
        let mut values = HashMap::new();
        for nu in Mode::ball(omega.dim(), radius) {
            values.insert(nu, omega.divisor(&nu)?);
        }
        values.insert(Mode::zero(omega.dim()), 0.0);
        Ok(DivisorTable { values, radius })
    }

    pub fn radius(&self) -> u64 {
        self.radius
    }

    /// `omega . nu`; panics outside the ball it was built for.
    pub fn get(&self, nu: &Mode) -> f64 {
        match self.values.get(nu) {
            Some(v) => *v,
            None => panic!("divisor for {nu} outside table radius {}", self.radius),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversion_round_trips() {
        for v in [0.75, 3.0, -1e-20, 1.0, GOLDEN, -123456.789, 2f64.powi(-70)] {
            assert_eq!(big_to_f64(&BigFloat::from_f64(v, 128)), v, "{v}");
        }
        assert_eq!(big_to_f64(&BigFloat::from_i64(0, 128)), 0.0);
    }

    #[test]
    fn golden_component() {
        let w = FrequencyVector::golden(128).unwrap();
        assert_eq!(w.components()[1], GOLDEN);
    }

    #[test]
    fn half_frequency_m0() {
        let w = FrequencyVector::new(&[1.0, 0.5], 128).unwrap();
        let e = compute_alpha(&w, 0, 14).unwrap();
        assert_eq!(e.alpha, 0.5);
        assert_eq!(e.witness, Mode::new(&[0, 1]));
        assert!(matches!(
            compute_alpha(&w, 2, 14),
            Err(Error::Resonance { .. })
        ));
    }

    #[test]
    fn golden_small_m() {
        let w = FrequencyVector::golden(128).unwrap();
        let e0 = compute_alpha(&w, 0, 14).unwrap();
        assert!((e0.alpha - GOLDEN).abs() < 1e-15);
        let e2 = compute_alpha(&w, 2, 14).unwrap();
        assert!((e2.alpha - GOLDEN.powi(3)).abs() < 1e-15);
        assert_eq!(e2.witness, Mode::new(&[1, -2]));
    }

    #[test]
    fn cap_is_enforced() {
        let w = FrequencyVector::golden(128).unwrap();
        assert!(matches!(
            compute_alpha(&w, 15, 14),
            Err(Error::ScanCapExceeded { .. })
        ));
    }

    #[test]
    fn invalid_vectors() {
        assert!(FrequencyVector::new(&[], 128).is_err());
        assert!(FrequencyVector::new(&[0.0, 0.0], 128).is_err());
        assert!(FrequencyVector::new(&[1.0, f64::NAN], 128).is_err());
    }

    #[test]
    fn partial_sums() {
        let t = BryunoTable::from_alphas(&[0.5, 0.5]);
        let s = bryuno_partial_sum(&t, 1).unwrap();
        assert!((s - 1.5 * 2f64.ln()).abs() < 1e-15);
        assert!(matches!(
            bryuno_partial_sum(&t, 2),
            Err(Error::InsufficientTable { .. })
        ));
        let w = FrequencyVector::golden(128).unwrap();
        let g = BryunoTable::compute(&w, 0, 14).unwrap();
        assert!((bryuno_partial_sum(&g, 0).unwrap() - 0.481_211_825_059_603_5).abs() < 1e-12);
    }

    #[test]
    fn scale_sequence_examples() {
        let s = scale_sequence(&BryunoTable::from_alphas(&[0.6, 0.4, 0.25, 0.1]));
        assert_eq!(s.ms, vec![0, 2, 3]);
        assert_eq!(s.ps, vec![1, 0]);
        let flat = scale_sequence(&BryunoTable::from_alphas(&[0.5, 0.4, 0.3, 0.3]));
        assert_eq!(flat.ms, vec![0]);
        assert!(flat.ps.is_empty());
    }

    #[test]
    fn golden_scales() {
        let w = FrequencyVector::golden(128).unwrap();
        let t = BryunoTable::compute(&w, 12, 14).unwrap();
        assert!(t.is_monotone());
        let s = scale_sequence(&t);
        assert_eq!(&s.ms[..4], &[0, 2, 3, 5]);
        for w in s.ms.windows(2) {
            assert!(t.alpha(w[1]).unwrap() <= t.alpha(w[0]).unwrap() / 2.0);
        }
    }

    #[test]
    fn cf_matches_scan() {
        let w = FrequencyVector::golden(128).unwrap();
        for m in 0..=10 {
            let a = compute_alpha(&w, m, 14).unwrap();
            let b = compute_alpha_cf(&w, m).unwrap();
            assert_eq!(a, b, "m = {m}");
        }
        let w = FrequencyVector::new(&[2f64.sqrt(), -1.0], 128).unwrap();
        for m in 0..=10 {
            let a = compute_alpha(&w, m, 14).unwrap();
            let b = compute_alpha_cf(&w, m).unwrap();
            assert_eq!(a, b, "m = {m}");
        }
    }
}
