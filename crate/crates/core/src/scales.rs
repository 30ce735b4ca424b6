//! Multiscale cutoffs `chi_n`, `psi_n`, `Psi_n` built on the scale ladder
//! `alpha_{m_n}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frequency::{BryunoTable, ScaleSequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Cutoff {
    Smooth,
    #[default]
    Sharp,
}

/// Upper edge of a scale window: `alpha_{m_{-1}}` is unbounded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bound {
    Unbounded,
    Finite(f64),
}

fn h(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Smooth step: 1 on `|x| <= 1/2`, 0 on `|x| >= 1`.
pub fn chi_profile(x: f64) -> f64 {
    let a = x.abs();
    if a <= 0.5 {
        return 1.0;
    }
    if a >= 1.0 {
        return 0.0;
    }
    let up = h(2.0 - 2.0 * a);
    let down = h(2.0 * a - 1.0);
    up / (up + down)
}

#[derive(Clone, Debug)]
pub struct CutoffFamily {
    variant: Cutoff,
    /// `alpha_{m_n}` for `n = 0..len`.
    levels: Vec<f64>,
}

impl CutoffFamily {
    pub fn new(variant: Cutoff, table: &BryunoTable, seq: &ScaleSequence) -> Result<Self> {
        let levels = seq
            .ms
            .iter()
            .map(|&m| table.alpha(m))
            .collect::<Result<Vec<_>>>()?;
        Ok(CutoffFamily { variant, levels })
    }

    /// Family from explicit `alpha_{m_n}` values.
    pub fn from_levels(variant: Cutoff, levels: Vec<f64>) -> Self {
        CutoffFamily { variant, levels }
    }

    pub fn variant(&self) -> Cutoff {
        self.variant
    }

    pub fn with_variant(&self, variant: Cutoff) -> Self {
        CutoffFamily {
            variant,
            levels: self.levels.clone(),
        }
    }

    /// Number of resolved scales.
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// `alpha_{m_n}`, with `n = -1` unbounded.
    pub fn level(&self, n: i64) -> Result<Bound> {
        if n == -1 {
            return Ok(Bound::Unbounded);
        }
        if n < -1 || n as usize >= self.levels.len() {
            return Err(self.out_of_range(n));
        }
        Ok(Bound::Finite(self.levels[n as usize]))
    }

    fn out_of_range(&self, n: i64) -> Error {
        Error::ScaleOutOfRange {
            n,
            max: self.levels.len().saturating_sub(1),
        }
    }

    /// Smallest `|x|` for which the scale sum is complete.
    pub fn floor(&self) -> f64 {
        self.levels.last().copied().unwrap_or(f64::INFINITY) / 4.0
    }

    pub fn chi_n(&self, n: i64, x: f64) -> Result<f64> {
        match self.level(n)? {
            Bound::Unbounded => Ok(1.0),
            Bound::Finite(a) => Ok(match self.variant {
                Cutoff::Sharp => {
                    if x.abs() <= a / 4.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
                Cutoff::Smooth => chi_profile(4.0 * x / a),
            }),
        }
    }

    pub fn psi_n(&self, n: i64, x: f64) -> Result<f64> {
        Ok(1.0 - self.chi_n(n, x)?)
    }

    /// `Psi_n = chi_{n-1} psi_n`.
    pub fn big_psi(&self, n: usize, x: f64) -> Result<f64> {
        let n = n as i64;
        let upper = self.chi_n(n - 1, x)?;
        if upper == 0.0 {
            return Ok(0.0);
        }
        Ok(upper * self.psi_n(n, x)?)
    }

    /// `|psi_p(x) + sum_{n > p} Psi_n(x) - 1|`.
    pub fn partition_check(&self, p: usize, x: f64) -> Result<f64> {
        if x == 0.0 {
            return Err(Error::ZeroArgument);
        }
        let mut sum = self.psi_n(p as i64, x)?;
        let mut n = p + 1;
        loop {
            if self.chi_n(n as i64 - 1, x)? == 0.0 {
                break;
            }
            if n >= self.levels.len() {
                return Err(Error::BelowScaleFloor {
                    x,
                    floor: self.floor(),
                });
            }
            sum += self.big_psi(n, x)?;
            n += 1;
        }
        Ok((sum - 1.0).abs())
    }

    /// Scales `n >= 0` with `Psi_n(x) > 0`, in increasing `n`.
    pub fn admissible_scales(&self, x: f64) -> Result<Vec<(usize, f64)>> {
        if x == 0.0 {
            return Err(Error::ZeroArgument);
        }
        let mut out = Vec::with_capacity(2);
        for n in 0..self.levels.len() {
            if self.chi_n(n as i64 - 1, x)? == 0.0 {
                break;
            }
            let w = self.big_psi(n, x)?;
            if w > 0.0 {
                out.push((n, w));
            }
            if self.chi_n(n as i64, x)? == 0.0 {
                return Ok(out);
            }
        }
        Err(Error::BelowScaleFloor {
            x,
            floor: self.floor(),
        })
    }

    /// The unique scale of `x` under sharp cutoffs, or the larger admissible one.
    pub fn top_scale(&self, x: f64) -> Result<usize> {
        Ok(self.admissible_scales(x)?.last().map(|s| s.0).unwrap_or(0))
    }

    /// `xi_n`: 1 below `alpha_{m_{n+1}}^2 / 2^9`, 0 above `alpha_{m_{n+1}}^2 / 2^8`.
    /// `xi_{-1}` is identically 1.
    pub fn xi_n(&self, n: i64, x: f64) -> Result<f64> {
        if n == -1 {
            return Ok(1.0);
        }
        let Bound::Finite(a) = self.level(n + 1)? else {
            unreachable!()
        };
        let lo = a * a / 512.0;
        // rescale so the step runs from 1/2 to 1
        Ok(match self.variant {
            Cutoff::Sharp => {
                if x <= lo {
                    1.0
                } else {
                    0.0
                }
            }
            Cutoff::Smooth => {
                if x <= lo {
                    1.0
                } else {
                    chi_profile(x / (2.0 * lo))
                }
            }
        })
    }
}
