//! Distributions over an even domain `[2k]`, the sign-perturbation family
//! around uniform, and divergence/entropy primitives.
//!
//! The domain is `{0, .., 2k-1}` and elements are paired as `(2i, 2i+1)` for
//! pair index `i in {0, .., k-1}`. The perturbed distribution for a sign
//! vector `z` and magnitude `eps` puts mass `(1 + 4 eps z_i) / (2k)` on `2i`
//! and `(1 - 4 eps z_i) / (2k)` on `2i+1`. Its total variation distance to
//! uniform is `2 eps` (computed, never assumed); the perturbation magnitude
//! is exposed as a parameter rather than conflated with a target distance.
//!
//! Logarithms are base 2 throughout: `kl` and `binary_entropy` return bits.

use crate::rng::Substream;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

const SUM_TOL: f64 = 1e-12;

/// A probability distribution over `[2k]`, immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    k: usize,
    probs: Vec<f64>,
    shape: Shape,
}

#[derive(Clone, Debug, PartialEq)]
enum Shape {
    Uniform,
    /// Paired masses `(1 ± 4 eps z_i) / (2k)`; `bias[i]` is the conditional
    /// probability of the even element given pair `i`.
    Paired { bias: Vec<f64> },
    General,
}

/// A sign vector in `{-1,+1}^k` together with a perturbation magnitude
/// `eps in (0, 1/4]` (so that all perturbed masses stay nonnegative).
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationSign {
    z: Vec<i8>,
    eps: f64,
}

impl PerturbationSign {
    pub fn new(z: Vec<i8>, eps: f64) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::InvalidParameter("sign vector must be nonempty".into()));
        }
        if let Some(bad) = z.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::InvalidParameter(format!(
                "sign entries must be ±1, got {bad}"
            )));
        }
        if !(eps > 0.0 && eps <= 0.25) {
            return Err(Error::InvalidParameter(format!(
                "perturbation magnitude must lie in (0, 1/4], got {eps}"
            )));
        }
        Ok(PerturbationSign { z, eps })
    }

    pub fn all_plus(k: usize, eps: f64) -> Result<Self> {
        Self::new(vec![1; k], eps)
    }

    /// Sign vector drawn from a substream, one Rademacher draw per pair.
    pub fn random(k: usize, eps: f64, stream: &mut Substream) -> Result<Self> {
        let z = (0..k).map(|_| if stream.next_u64() & 1 == 0 { 1 } else { -1 }).collect();
        Self::new(z, eps)
    }

    /// The same vector with coordinate `i` flipped.
    pub fn flipped(&self, i: usize) -> Self {
        let mut z = self.z.clone();
        z[i] = -z[i];
        PerturbationSign { z, eps: self.eps }
    }

    pub fn k(&self) -> usize {
        self.z.len()
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn z(&self) -> &[i8] {
        &self.z
    }
}

impl Distribution {
    /// Validates and wraps an explicit mass vector. The length must be even
    /// and at least 2, entries in `[0,1]`, and the sum within `1e-12` of 1.
    /// Never renormalizes.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 || probs.len() % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "domain size must be even and ≥ 2, got {}",
                probs.len()
            )));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) || p.is_nan() {
                return Err(Error::InvalidProbability { index: i, value: p });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::NotNormalized { sum });
        }
        let k = probs.len() / 2;
        Ok(Distribution { k, probs, shape: Shape::General })
    }

    /// The uniform distribution over `[2k]`.
    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be ≥ 1".into()));
        }
        Ok(Distribution {
            k,
            probs: vec![1.0 / (2 * k) as f64; 2 * k],
            shape: Shape::Uniform,
        })
    }

    /// The perturbed distribution `p_z` for a sign vector: pair `i` carries
    /// masses `(1 ± 4 eps z_i) / (2k)` on its even/odd element.
    pub fn paninski(sign: &PerturbationSign) -> Self {
        let k = sign.k();
        let mut probs = vec![0.0; 2 * k];
        let mut bias = vec![0.0; k];
        for i in 0..k {
            let up = (1.0 + 4.0 * sign.eps * f64::from(sign.z[i])) / (2 * k) as f64;
            let dn = (1.0 - 4.0 * sign.eps * f64::from(sign.z[i])) / (2 * k) as f64;
            probs[2 * i] = up;
            probs[2 * i + 1] = dn;
            bias[i] = up * k as f64; // conditional P(even | pair i); pair mass is 1/k
        }
        Distribution { k, probs, shape: Shape::Paired { bias } }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn domain_size(&self) -> usize {
        2 * self.k
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, x: usize) -> f64 {
        self.probs[x]
    }

    /// One sample using a single uniform draw from the stream.
    pub fn sample(&self, stream: &mut Substream) -> usize {
        let u = stream.next_f64();
        match &self.shape {
            Shape::Uniform => {
                let x = (u * self.domain_size() as f64) as usize;
                x.min(self.domain_size() - 1)
            }
            Shape::Paired { bias } => {
                // Pairs have equal mass 1/k; the fractional part of u*k is
                // again uniform and decides the within-pair element.
                let scaled = u * self.k as f64;
                let pair = (scaled as usize).min(self.k - 1);
                let frac = scaled - pair as f64;
                if frac < bias[pair] {
                    2 * pair
                } else {
                    2 * pair + 1
                }
            }
            Shape::General => {
                let mut acc = 0.0;
                for (x, &p) in self.probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return x;
                    }
                }
                self.domain_size() - 1
            }
        }
    }

    /// Domain relabeling: entry `x` of the result is `self[perm[x]]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.domain_size())?;
        Distribution::new(perm.iter().map(|&x| self.probs[x]).collect())
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::DomainMismatch { left: perm.len(), right: n });
    }
    let mut seen = vec![false; n];
    for &x in perm {
        if x >= n || seen[x] {
            return Err(Error::InvalidParameter(format!("not a permutation of [{n}]")));
        }
        seen[x] = true;
    }
    Ok(())
}

fn check_same_domain(p: &Distribution, q: &Distribution) -> Result<()> {
    if p.domain_size() != q.domain_size() {
        return Err(Error::DomainMismatch {
            left: p.domain_size(),
            right: q.domain_size(),
        });
    }
    Ok(())
}

/// Total variation distance: half the L1 distance, in `[0, 1]`.
pub fn tv(p: &Distribution, q: &Distribution) -> Result<f64> {
    check_same_domain(p, q)?;
    let l1: f64 = p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum();
    Ok(0.5 * l1)
}

/// Kullback-Leibler divergence in bits, with the `0 log 0 = 0` convention.
/// Errors if `q(x) = 0 < p(x)` somewhere.
pub fn kl(p: &Distribution, q: &Distribution) -> Result<f64> {
    check_same_domain(p, q)?;
    kl_slice(&p.probs, &q.probs)
}

pub(crate) fn kl_slice(p: &[f64], q: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    for (i, (&a, &b)) in p.iter().zip(q).enumerate() {
        if a > 0.0 {
            if b <= 0.0 {
                return Err(Error::AbsoluteContinuity { index: i, p: a });
            }
            s += a * (a / b).log2();
        }
    }
    Ok(s.max(0.0))
}

/// Chi-square divergence `sum (p - q)^2 / q`. Errors if `q(x) = 0 < p(x)`.
pub fn chi2(p: &Distribution, q: &Distribution) -> Result<f64> {
    check_same_domain(p, q)?;
    let mut s = 0.0;
    for (i, (&a, &b)) in p.probs.iter().zip(&q.probs).enumerate() {
        if b <= 0.0 {
            if a > 0.0 {
                return Err(Error::AbsoluteContinuity { index: i, p: a });
            }
            continue;
        }
        let d = a - b;
        s += d * d / b;
    }
    Ok(s)
}

/// Binary entropy `h(t) = -t log2 t - (1-t) log2 (1-t)` on `[0, 1]`.
pub fn binary_entropy(t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) || t.is_nan() {
        return Err(Error::InvalidParameter(format!("entropy argument {t} outside [0,1]")));
    }
    let mut h = 0.0;
    if t > 0.0 {
        h -= t * t.log2();
    }
    if t < 1.0 {
        h -= (1.0 - t) * (1.0 - t).log2();
    }
    Ok(h.max(0.0))
}

/// JSON form of a distribution.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DistributionSpec {
    Uniform { k: usize },
    Paninski { k: usize, eps: f64, z: Vec<i8> },
    Explicit { probs: Vec<f64> },
}

impl DistributionSpec {
    pub fn build(&self) -> Result<Distribution> {
        match self {
            DistributionSpec::Uniform { k } => Distribution::uniform(*k),
            DistributionSpec::Paninski { k, eps, z } => {
                if z.len() != *k {
                    return Err(Error::DomainMismatch { left: z.len(), right: *k });
                }
                Ok(Distribution::paninski(&PerturbationSign::new(z.clone(), *eps)?))
            }
            DistributionSpec::Explicit { probs } => Distribution::new(probs.clone()),
        }
    }
}
