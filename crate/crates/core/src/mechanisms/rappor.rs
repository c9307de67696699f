//! Basic One-Time RAPPOR.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

use super::{check_eps, Channel};

/// Report bit vector. Bit `u` lives in word `u / 64` at position
/// `63 − u % 64`, so word order matches the canonical bit-string order
/// (element 0 first).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVectorReport {
    len: usize,
    words: Vec<u64>,
}

impl BitVectorReport {
    pub fn zeros(len: usize) -> Self {
        Self { len, words: vec![0; len.div_ceil(64)] }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut r = Self::zeros(bits.len());
        for (u, &b) in bits.iter().enumerate() {
            if b {
                r.set(u);
            }
        }
        r
    }

    pub fn one_hot(len: usize, x: usize) -> Self {
        let mut r = Self::zeros(len);
        r.set(x);
        r
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, u: usize) -> bool {
        debug_assert!(u < self.len);
        self.words[u / 64] >> (63 - u % 64) & 1 == 1
    }

    pub fn set(&mut self, u: usize) {
        debug_assert!(u < self.len);
        self.words[u / 64] |= 1 << (63 - u % 64);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Indices of the set bits in ascending order.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(i, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let lead = rest.leading_zeros() as usize;
                rest &= !(1u64 << (63 - lead));
                Some(i * 64 + lead)
            })
        })
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len).map(|u| self.get(u)).collect()
    }
}

impl fmt::Display for BitVectorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for u in 0..self.len {
            f.write_str(if self.get(u) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl std::str::FromStr for BitVectorReport {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Malformed(format!("bit string contains {other:?}"))),
            })
            .collect::<Result<Vec<bool>>>()?;
        Ok(Self::from_bools(&bits))
    }
}

/// Keep probability `e^{ε/2}/(1+e^{ε/2})`.
pub fn rappor_keep_probability(eps: f64) -> f64 {
    1.0 / (1.0 + (-eps / 2.0).exp())
}

/// Implicit RAPPOR channel over `{0,1}^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RapporChannel {
    k: usize,
    eps: f64,
    keep: f64,
}

impl RapporChannel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn keep_probability(&self) -> f64 {
        self.keep
    }

    /// `Π_u p^{[v_u = B(x)_u]} (1−p)^{[v_u ≠ B(x)_u]}`.
    pub fn prob(&self, x: usize, v: &BitVectorReport) -> f64 {
        let (matches, mismatches) = self.agreement(x, v);
        self.keep.powi(matches as i32) * (1.0 - self.keep).powi(mismatches as i32)
    }

    /// Number of bits of `v` that agree / disagree with the one-hot code of `x`.
    pub fn agreement(&self, x: usize, v: &BitVectorReport) -> (usize, usize) {
        let h = v.count_ones();
        let mismatches = if v.get(x) { h - 1 } else { h + 1 };
        (self.k - mismatches, mismatches)
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> BitVectorReport {
        let mut v = BitVectorReport::zeros(self.k);
        for u in 0..self.k {
            let keep = rng.random::<f64>() < self.keep;
            if (u == x) == keep {
                v.set(u);
            }
        }
        v
    }
}

/// Basic One-Time RAPPOR on a `k`-element alphabet.
pub fn rappor(k: usize, eps: f64) -> Result<Channel> {
    if k == 0 {
        return Err(Error::InvalidParameter("RAPPOR needs k >= 1".into()));
    }
    check_eps(eps)?;
    Ok(Channel::Rappor(RapporChannel { k, eps, keep: rappor_keep_probability(eps) }))
}
