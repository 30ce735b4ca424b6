//! Forcing `f(alpha, beta) = sum_nu f_nu(beta) e^{i nu . alpha}` with trigonometric
//! polynomial coefficients, and its beta-derivative `F = d f / d beta`.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mode::{Mode, MAX_DIM};
use crate::trig::TrigPolynomial;

const REALITY_TOL: f64 = 1e-14;

pub const BUNDLED: [&str; 3] = ["cos_a1_cos_b", "pendulum_like", "cos_a1_plus_b"];

#[derive(Debug, Serialize, Deserialize)]
struct CoeffFile {
    j: i64,
    re: f64,
    #[serde(default)]
    im: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModeFile {
    nu: Vec<i32>,
    coeffs: Vec<CoeffFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SpecFile {
    #[serde(default)]
    name: Option<String>,
    d: usize,
    modes: Vec<ModeFile>,
}

#[derive(Clone, Debug)]
pub struct ForcingSpec {
    name: String,
    d: usize,
    potential: BTreeMap<Mode, TrigPolynomial>,
    force: BTreeMap<Mode, TrigPolynomial>,
}

impl ForcingSpec {
    pub fn new(name: &str, d: usize, modes: Vec<(Mode, TrigPolynomial)>) -> Result<Self> {
        if d == 0 || d > MAX_DIM {
            return Err(Error::InvalidForcing(format!(
                "dimension {d} outside 1..={MAX_DIM}"
            )));
        }
        let mut potential: BTreeMap<Mode, TrigPolynomial> = BTreeMap::new();
        for (nu, p) in modes {
            if nu.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: nu.dim(),
                });
            }
            *potential.entry(nu).or_default() += &p;
        }
        potential.retain(|_, p| !p.is_zero());
        for (nu, p) in &potential {
            let mirror = potential.get(&-*nu).cloned().unwrap_or_default();
            for (j, c) in p.terms() {
                if (mirror.coeff(-j) - c.conj()).norm() > REALITY_TOL * (1.0 + c.norm()) {
                    return Err(Error::InvalidForcing(format!(
                        "reality violated at nu = {nu}, j = {j}: coefficient of (-nu, -j) must be the conjugate"
                    )));
                }
            }
        }
        let force = potential
            .iter()
            .map(|(nu, p)| (*nu, p.derivative(1)))
            .filter(|(_, p)| !p.is_zero())
            .collect();
        Ok(ForcingSpec {
            name: name.to_string(),
            d,
            potential,
            force,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SpecFile = serde_json::from_str(text)?;
        let mut modes = Vec::with_capacity(file.modes.len());
        for m in file.modes {
            if m.nu.len() != file.d {
                return Err(Error::DimensionMismatch {
                    expected: file.d,
                    got: m.nu.len(),
                });
            }
            let pairs: Vec<_> = m
                .coeffs
                .iter()
                .map(|c| (c.j, Complex64::new(c.re, c.im)))
                .collect();
            if pairs
                .iter()
                .any(|(_, c)| !c.re.is_finite() || !c.im.is_finite())
            {
                return Err(Error::InvalidForcing("non-finite coefficient".into()));
            }
            modes.push((Mode::new(&m.nu), TrigPolynomial::from_pairs(&pairs)));
        }
        ForcingSpec::new(file.name.as_deref().unwrap_or("unnamed"), file.d, modes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut spec = ForcingSpec::from_json(&text)?;
        if spec.name == "unnamed" {
            if let Some(stem) = path.file_stem() {
                spec.name = stem.to_string_lossy().into_owned();
            }
        }
        Ok(spec)
    }

    /// One of the specs shipped with the crate.
    pub fn bundled(name: &str) -> Result<Self> {
        let text = match name {
            "cos_a1_cos_b" => include_str!("../specs/cos_a1_cos_b.json"),
            "pendulum_like" => include_str!("../specs/pendulum_like.json"),
            "cos_a1_plus_b" => include_str!("../specs/cos_a1_plus_b.json"),
            other => {
                return Err(Error::InvalidForcing(format!(
                    "no bundled spec named {other:?}"
                )))
            }
        };
        ForcingSpec::from_json(text)
    }

    pub fn to_json(&self) -> String {
        let modes = self
            .potential
            .iter()
            .map(|(nu, p)| ModeFile {
                nu: nu.components().to_vec(),
                coeffs: p
                    .terms()
                    .map(|(j, c)| CoeffFile {
                        j,
                        re: c.re,
                        im: c.im,
                    })
                    .collect(),
            })
            .collect();
        let file = SpecFile {
            name: Some(self.name.clone()),
            d: self.d,
            modes,
        };
        serde_json::to_string_pretty(&file).expect("spec serialises")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// `f_nu`.
    pub fn potential_mode(&self, nu: &Mode) -> TrigPolynomial {
        self.potential.get(nu).cloned().unwrap_or_default()
    }

    /// `F_nu = d f_nu / d beta`; zero off the support.
    pub fn force_mode(&self, nu: &Mode) -> TrigPolynomial {
        self.force.get(nu).cloned().unwrap_or_default()
    }

    pub fn force_modes(&self) -> impl Iterator<Item = (&Mode, &TrigPolynomial)> {
        self.force.iter()
    }

    /// Modes with `F_nu != 0`, including `0` when present.
    pub fn support(&self) -> Vec<Mode> {
        self.force.keys().copied().collect()
    }

    /// `N_f = max |nu|_1` over the support.
    pub fn max_norm(&self) -> u64 {
        self.force.keys().map(|m| m.norm1()).max().unwrap_or(0)
    }

    pub fn zero_mode_force(&self) -> TrigPolynomial {
        self.force_mode(&Mode::zero(self.d))
    }

    /// `(1/s!) d^s F_nu`.
    pub fn node_factor(&self, nu: &Mode, s: u32) -> TrigPolynomial {
        match self.force.get(nu) {
            Some(p) => p.derivative(s).scale_real(1.0 / factorial(s)),
            None => TrigPolynomial::zero(),
        }
    }

    /// Constants with `sup_beta |(1/s!) d^s F_nu| <= f1 f2^s e^{-xi |nu|}` for
    /// `s <= max_s`; `xi` is fixed at 1.
    pub fn analyticity_constants(&self, max_s: u32) -> AnalyticityFit {
        let xi = 1.0;
        let f2 = self
            .force
            .values()
            .map(|p| p.degree())
            .max()
            .unwrap_or(0)
            .max(1) as f64;
        let mut f1: f64 = 0.0;
        for nu in self.force.keys() {
            for s in 0..=max_s {
                let bound = self.node_factor(nu, s).l1_norm();
                f1 = f1.max(bound * (xi * nu.norm1() as f64).exp() / f2.powi(s as i32));
            }
        }
        AnalyticityFit { f1, f2, xi }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AnalyticityFit {
    pub f1: f64,
    pub f2: f64,
    pub xi: f64,
}

pub fn factorial(s: u32) -> f64 {
    (1..=s).map(|k| k as f64).product()
}
