//! Finite trigonometric polynomials `sum_j c_j e^{i j beta}`.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;

/// Dense coefficient vector over the harmonics `min..min + len`.
#[derive(Clone, Default, PartialEq)]
pub struct TrigPolynomial {
    min: i64,
    coeffs: Vec<Complex64>,
}

impl TrigPolynomial {
    pub fn zero() -> Self {
        TrigPolynomial::default()
    }

    pub fn constant(c: f64) -> Self {
        TrigPolynomial::monomial(0, Complex64::new(c, 0.0))
    }

    pub fn monomial(j: i64, c: Complex64) -> Self {
        let mut p = TrigPolynomial {
            min: j,
            coeffs: vec![c],
        };
        p.trim();
        p
    }

    pub fn cos(j: i64) -> Self {
        TrigPolynomial::from_pairs(&[
            (j, Complex64::new(0.5, 0.0)),
            (-j, Complex64::new(0.5, 0.0)),
        ])
    }

    pub fn sin(j: i64) -> Self {
        TrigPolynomial::from_pairs(&[
            (j, Complex64::new(0.0, -0.5)),
            (-j, Complex64::new(0.0, 0.5)),
        ])
    }

    pub fn from_pairs(pairs: &[(i64, Complex64)]) -> Self {
        let mut p = TrigPolynomial::zero();
        for &(j, c) in pairs {
            p.add_coeff(j, c);
        }
        p.trim();
        p
    }

    fn trim(&mut self) {
        while self
            .coeffs
            .last()
            .is_some_and(|c| *c == Complex64::default())
        {
            self.coeffs.pop();
        }
        let lead = self
            .coeffs
            .iter()
            .take_while(|c| **c == Complex64::default())
            .count();
        if lead > 0 {
            self.coeffs.drain(..lead);
            self.min += lead as i64;
        }
        if self.coeffs.is_empty() {
            self.min = 0;
        }
    }

    fn add_coeff(&mut self, j: i64, c: Complex64) {
        if self.coeffs.is_empty() {
            self.min = j;
            self.coeffs.push(c);
            return;
        }
        if j < self.min {
            let pad = (self.min - j) as usize;
            self.coeffs
                .splice(0..0, std::iter::repeat_n(Complex64::default(), pad));
            self.min = j;
        }
        let idx = (j - self.min) as usize;
        if idx >= self.coeffs.len() {
            self.coeffs.resize(idx + 1, Complex64::default());
        }
        self.coeffs[idx] += c;
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Every coefficient has modulus at most `tol`.
    pub fn is_negligible(&self, tol: f64) -> bool {
        self.coeffs.iter().all(|c| c.norm() <= tol)
    }

    pub fn coeff(&self, j: i64) -> Complex64 {
        if j < self.min {
            return Complex64::default();
        }
        self.coeffs
            .get((j - self.min) as usize)
            .copied()
            .unwrap_or_default()
    }

    /// Nonzero `(j, c_j)` in increasing `j`.
    pub fn terms(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != Complex64::default())
            .map(move |(i, c)| (self.min + i as i64, *c))
    }

    /// Largest `|j|` carried.
    pub fn degree(&self) -> i64 {
        if self.is_zero() {
            return 0;
        }
        self.min
            .abs()
            .max((self.min + self.coeffs.len() as i64 - 1).abs())
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Sum of coefficient moduli, a bound on `sup_beta |p(beta)|`.
    pub fn l1_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        if s == Complex64::default() {
            return TrigPolynomial::zero();
        }
        let mut p = TrigPolynomial {
            min: self.min,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        };
        p.trim();
        p
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }

    /// `d^s / dbeta^s`: `c_j -> (i j)^s c_j`.
    pub fn derivative(&self, s: u32) -> Self {
        if s == 0 {
            return self.clone();
        }
        let i_pow = Complex64::i().powu(s);
        let mut p = TrigPolynomial {
            min: self.min,
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    let j = (self.min + k as i64) as f64;
                    c * i_pow * j.powi(s as i32)
                })
                .collect(),
        };
        p.trim();
        p
    }

    pub fn evaluate(&self, beta: f64) -> Complex64 {
        self.terms()
            .map(|(j, c)| c * Complex64::from_polar(1.0, j as f64 * beta))
            .sum()
    }

    /// Real part of the value; the imaginary part is dropped.
    pub fn evaluate_real(&self, beta: f64) -> f64 {
        self.evaluate(beta).re
    }

    /// `c_{-j} = conj(c_j)` within `tol`.
    pub fn is_real(&self, tol: f64) -> bool {
        self.terms()
            .all(|(j, c)| (self.coeff(-j) - c.conj()).norm() <= tol)
    }

    /// Largest coefficient-wise `|p_j - q_j|`.
    pub fn max_deviation(&self, other: &Self) -> f64 {
        (self - other).max_abs_coeff()
    }

    /// Largest coefficient-wise deviation relative to the larger of the two magnitudes.
    pub fn relative_deviation(&self, other: &Self) -> f64 {
        let scale = self.max_abs_coeff().max(other.max_abs_coeff());
        if scale == 0.0 {
            return 0.0;
        }
        self.max_deviation(other) / scale
    }

    /// Drop coefficients of modulus at most `tol`.
    pub fn chop(&self, tol: f64) -> Self {
        let pairs: Vec<_> = self.terms().filter(|(_, c)| c.norm() > tol).collect();
        TrigPolynomial::from_pairs(&pairs)
    }

    pub fn add_scaled(&mut self, other: &Self, s: Complex64) {
        for (j, c) in other.terms() {
            self.add_coeff(j, c * s);
        }
        self.trim();
    }
}

impl Add for &TrigPolynomial {
    type Output = TrigPolynomial;
    fn add(self, rhs: &TrigPolynomial) -> TrigPolynomial {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl AddAssign<&TrigPolynomial> for TrigPolynomial {
    fn add_assign(&mut self, rhs: &TrigPolynomial) {
        if rhs.is_zero() {
            return;
        }
        if self.is_zero() {
            *self = rhs.clone();
            return;
        }
        let lo = self.min.min(rhs.min);
        let hi = (self.min + self.coeffs.len() as i64).max(rhs.min + rhs.coeffs.len() as i64);
        if lo < self.min || hi > self.min + self.coeffs.len() as i64 {
            let mut coeffs = vec![Complex64::default(); (hi - lo) as usize];
            let off = (self.min - lo) as usize;
            coeffs[off..off + self.coeffs.len()].copy_from_slice(&self.coeffs);
            self.coeffs = coeffs;
            self.min = lo;
        }
        let off = (rhs.min - self.min) as usize;
        for (k, c) in rhs.coeffs.iter().enumerate() {
            self.coeffs[off + k] += c;
        }
        self.trim();
    }
}

impl Sub for &TrigPolynomial {
    type Output = TrigPolynomial;
    fn sub(self, rhs: &TrigPolynomial) -> TrigPolynomial {
        self + &(-rhs)
    }
}

impl Neg for &TrigPolynomial {
    type Output = TrigPolynomial;
    fn neg(self) -> TrigPolynomial {
        TrigPolynomial {
            min: self.min,
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }
}

impl Mul for &TrigPolynomial {
    type Output = TrigPolynomial;
    fn mul(self, rhs: &TrigPolynomial) -> TrigPolynomial {
        if self.is_zero() || rhs.is_zero() {
            return TrigPolynomial::zero();
        }
        let mut coeffs = vec![Complex64::default(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (a, ca) in self.coeffs.iter().enumerate() {
            if *ca == Complex64::default() {
                continue;
            }
            for (b, cb) in rhs.coeffs.iter().enumerate() {
                coeffs[a + b] += ca * cb;
            }
        }
        let mut p = TrigPolynomial {
            min: self.min + rhs.min,
            coeffs,
        };
        p.trim();
        p
    }
}

impl fmt::Debug for TrigPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms()
            .map(|(j, c)| format!("({:.6e}{:+.6e}i)e^{{{j}ib}}", c.re, c.im))
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}
