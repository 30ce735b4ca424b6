//! Integer lattice vectors used as Fourier modes and line momenta.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Largest supported torus dimension.
pub const MAX_DIM: usize = 4;

/// A vector of `Z^d` with `d <= MAX_DIM`, stored inline so it is `Copy`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mode {
    d: u8,
    c: [i32; MAX_DIM],
}

impl Mode {
    pub fn zero(d: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&d), "dimension {d} unsupported");
        Mode {
            d: d as u8,
            c: [0; MAX_DIM],
        }
    }

    pub fn new(components: &[i32]) -> Self {
        let mut m = Mode::zero(components.len());
        m.c[..components.len()].copy_from_slice(components);
        m
    }

    pub fn unit(d: usize, axis: usize) -> Self {
        let mut m = Mode::zero(d);
        m.c[axis] = 1;
        m
    }

    pub fn dim(&self) -> usize {
        self.d as usize
    }

    pub fn components(&self) -> &[i32] {
        &self.c[..self.d as usize]
    }

    pub fn get(&self, i: usize) -> i32 {
        self.c[i]
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|&x| x == 0)
    }

    /// `|nu|_1`.
    pub fn norm1(&self) -> u64 {
        self.components()
            .iter()
            .map(|x| x.unsigned_abs() as u64)
            .sum()
    }

    /// True when the first nonzero component is positive.
    pub fn is_canonical(&self) -> bool {
        self.components()
            .iter()
            .find(|&&x| x != 0)
            .is_some_and(|&x| x > 0)
    }

    /// Representative of `{nu, -nu}` whose first nonzero component is positive.
    pub fn canonical(self) -> Self {
        if self.is_zero() || self.is_canonical() {
            self
        } else {
            -self
        }
    }

    pub fn dot_f64(&self, w: &[f64]) -> f64 {
        self.components()
            .iter()
            .zip(w)
            .map(|(&n, &x)| n as f64 * x)
            .sum()
    }

    /// All vectors with `0 < |nu|_1 <= radius` in lexicographic order.
    pub fn ball(d: usize, radius: u64) -> Vec<Mode> {
        let mut out = Vec::new();
        let mut cur = vec![0i32; d];
        fill_ball(&mut cur, 0, radius as i64, &mut out);
        out.retain(|m| !m.is_zero());
        out
    }
}

fn fill_ball(cur: &mut Vec<i32>, idx: usize, budget: i64, out: &mut Vec<Mode>) {
    if idx == cur.len() {
        out.push(Mode::new(cur));
        return;
    }
    for v in -budget..=budget {
        cur[idx] = v as i32;
        fill_ball(cur, idx + 1, budget - v.abs(), out);
    }
    cur[idx] = 0;
}

impl Add for Mode {
    type Output = Mode;
    fn add(self, rhs: Mode) -> Mode {
        debug_assert_eq!(self.d, rhs.d);
        let mut c = self.c;
        for (a, b) in c.iter_mut().zip(rhs.c) {
            *a += b;
        }
        Mode { d: self.d, c }
    }
}

impl Sub for Mode {
    type Output = Mode;
    fn sub(self, rhs: Mode) -> Mode {
        self + (-rhs)
    }
}

impl Neg for Mode {
    type Output = Mode;
    fn neg(self) -> Mode {
        let mut c = self.c;
        for a in c.iter_mut() {
            *a = -*a;
        }
        Mode { d: self.d, c }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.components().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Debug for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for Mode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.components().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v: Vec<i32> = Vec::deserialize(d)?;
        if v.is_empty() || v.len() > MAX_DIM {
            return Err(serde::de::Error::custom(format!(
                "mode dimension {} outside 1..={MAX_DIM}",
                v.len()
            )));
        }
        Ok(Mode::new(&v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_counts() {
        // |nu|_1 <= 8 in Z^2 has 2*8^2 + 2*8 + 1 points
        assert_eq!(Mode::ball(2, 8).len(), 144);
        assert_eq!(Mode::ball(1, 3).len(), 6);
        assert_eq!(Mode::ball(3, 1).len(), 6);
    }

    #[test]
    fn canonical_half() {
        assert_eq!(Mode::new(&[-1, 2]).canonical(), Mode::new(&[1, -2]));
        assert_eq!(Mode::new(&[0, -1]).canonical(), Mode::new(&[0, 1]));
        assert!(Mode::new(&[0, 3]).is_canonical());
        assert!(!Mode::zero(2).is_canonical());
    }

    #[test]
    fn arithmetic() {
        let a = Mode::new(&[1, -2]);
        let b = Mode::new(&[3, 5]);
        assert_eq!(a + b, Mode::new(&[4, 3]));
        assert_eq!(a - a, Mode::zero(2));
        assert_eq!((a + b).norm1(), 7);
        assert_eq!(format!("{a}"), "(1,-2)");
    }
}
