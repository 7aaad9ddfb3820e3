//! The logarithmic level law and the arithmetic that turns a product of
//! integers into a sum of level energies.
//!
//! All energies here are dimensionless, in units of the reference energy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scaling parameter of the one-dimensional spectrum together with its
/// three-dimensional s-state counterpart `K = (L + 1) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectrumTarget {
    l: u32,
    k: u32,
}

impl SpectrumTarget {
    pub fn new(l: u32) -> Result<Self> {
        validate_l(l)?;
        Ok(Self { l, k: l.div_ceil(2) })
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn level_1d(&self, k: u32) -> f64 {
        ln_ratio(k, self.l)
    }

    pub fn level_3d(&self, j: u32) -> f64 {
        ln_ratio(j, self.k)
    }

    /// First `count` one-dimensional levels.
    pub fn levels_1d(&self, count: usize) -> Vec<f64> {
        (0..count as u32).map(|k| self.level_1d(k)).collect()
    }

    /// Energy subtracted from the odd one-dimensional levels to obtain the
    /// s-state spectrum.
    pub fn odd_shift(&self) -> f64 {
        self.level_1d(1)
    }
}

fn validate_l(l: u32) -> Result<()> {
    if l < 3 || l.is_multiple_of(2) {
        return Err(Error::Parameter(format!("scaling parameter L must be odd and at least 3, got {l}")));
    }
    Ok(())
}

// ln(k/s + 1) written as ln_1p to keep the small-k levels accurate.
fn ln_ratio(k: u32, s: u32) -> f64 {
    (k as f64 / s as f64).ln_1p()
}

/// `ln(k/L + 1)` for an odd `L >= 3`.
pub fn level_1d(k: u32, l: u32) -> Result<f64> {
    validate_l(l)?;
    Ok(ln_ratio(k, l))
}

/// `ln(j/K + 1)` for `K >= 2`.
pub fn level_3d(j: u32, k: u32) -> Result<f64> {
    if k < 2 {
        return Err(Error::Parameter(format!("three-dimensional scaling parameter K must be at least 2, got {k}")));
    }
    Ok(ln_ratio(j, k))
}

/// A number to factor. The factors are known only to test oracles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Semiprime {
    pub n: u64,
    factors: Option<(u64, u64)>,
}

impl Semiprime {
    pub fn unknown(n: u64) -> Self {
        Self { n, factors: None }
    }

    /// Oracle constructor: `p` and `q` must both be prime. They are stored
    /// with `p >= q`.
    pub fn from_factors(a: u64, b: u64) -> Result<Self> {
        if !is_prime(a) || !is_prime(b) {
            return Err(Error::Parameter(format!("{a} and {b} must both be prime")));
        }
        let (p, q) = if a >= b { (a, b) } else { (b, a) };
        Ok(Self { n: p * q, factors: Some((p, q)) })
    }

    pub fn factors(&self) -> Option<(u64, u64)> {
        self.factors
    }
}

/// The two-particle state whose energy equals `ln(N/K^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorState {
    pub j1: u32,
    pub j2: u32,
    pub total_energy: f64,
}

/// Oracle side of the protocol: where the energy `ln(N/K^2)` lives.
pub fn factor_state_of(n: &Semiprime, k: u32) -> Result<FactorState> {
    let (p, q) = n.factors().ok_or_else(|| Error::Parameter("factor_state_of needs the oracle factors".into()))?;
    let kk = k as u64;
    if q <= kk {
        return Err(Error::ProtocolDomain(format!("factor {q} of {} is not larger than K = {k}", n.n)));
    }
    let total_energy = (n.n as f64 / (kk * kk) as f64).ln();
    Ok(FactorState { j1: (p - kk) as u32, j2: (q - kk) as u32, total_energy })
}

/// Default decode window around level `j`: half the gap to the next level.
pub fn default_decode_tolerance(j: u32, k: u32) -> f64 {
    0.5 * (1.0 / (j as f64 + k as f64)).ln_1p()
}

/// Nearest-level decode of a measured single-particle energy.
///
/// Returns `(q, N / q)` where `q = j + K` is the factor read off the
/// measured level. `tolerance` overrides the default half-gap window.
pub fn factor_from_energy(e: f64, k: u32, n: u64, tolerance: Option<f64>) -> Result<(u64, u64)> {
    if k < 2 || !e.is_finite() {
        return Err(Error::Decode { energy: e });
    }
    let kf = k as f64;
    let j_real = kf * e.exp_m1();
    let mut best: Option<(u32, f64)> = None;
    for cand in [j_real.floor(), j_real.ceil()] {
        if cand < 1.0 || cand > u32::MAX as f64 {
            continue;
        }
        let j = cand as u32;
        let dist = (e - ln_ratio(j, k)).abs();
        if best.is_none_or(|(_, d)| dist < d) {
            best = Some((j, dist));
        }
    }
    let (j, dist) = best.ok_or(Error::Decode { energy: e })?;
    let tol = tolerance.unwrap_or_else(|| default_decode_tolerance(j, k));
    if dist > tol {
        return Err(Error::Decode { energy: e });
    }
    let q = j as u64 + k as u64;
    if !n.is_multiple_of(q) {
        return Err(Error::Inconsistent { factor: q, n });
    }
    Ok((q, n / q))
}

/// All index pairs `j1 >= j2 >= 1` with `(j1 + K)(j2 + K) = N`, found in
/// integer arithmetic.
pub fn distributions(n: u64, k: u32) -> Vec<(u32, u32)> {
    let kk = k as u64;
    let mut out = Vec::new();
    let mut q = kk + 1;
    while q * q <= n {
        if n.is_multiple_of(q) {
            out.push(((n / q - kk) as u32, (q - kk) as u32));
        }
        q += 1;
    }
    out
}

/// Small factors removed before the protocol runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreDivision {
    pub removed: Vec<u64>,
    pub remainder: u64,
}

/// Divides out every factor in `2..=k` by trial division.
pub fn predivide(n_raw: u64, k: u32) -> PreDivision {
    let mut removed = Vec::new();
    let mut rest = n_raw;
    for d in 2..=k as u64 {
        while rest > 1 && rest.is_multiple_of(d) {
            removed.push(d);
            rest /= d;
        }
    }
    PreDivision { removed, remainder: rest }
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_dimensional_levels() {
        assert_eq!(level_1d(0, 3).unwrap(), 0.0);
        assert!((level_1d(3, 3).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((level_1d(6, 3).unwrap() - 3f64.ln()).abs() < 1e-15);
        assert!(level_1d(1, 4).is_err());
        assert!(level_1d(1, 1).is_err());
    }

    #[test]
    fn three_dimensional_levels_and_shift_identity() {
        assert_eq!(level_3d(0, 2).unwrap(), 0.0);
        assert!((level_3d(2, 2).unwrap() - 2f64.ln()).abs() < 1e-15);
        for j in 0..=20u32 {
            let lhs = level_1d(2 * j + 1, 3).unwrap() - level_1d(1, 3).unwrap();
            let rhs = level_3d(j, 2).unwrap();
            assert!((lhs - rhs).abs() < 1e-14, "j={j}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn target_validates_l() {
        assert_eq!(SpectrumTarget::new(5).unwrap().k(), 3);
        assert!(SpectrumTarget::new(2).is_err());
    }

    #[test]
    fn factor_states() {
        let fs = factor_state_of(&Semiprime::from_factors(5, 3).unwrap(), 2).unwrap();
        assert_eq!((fs.j1, fs.j2), (3, 1));
        assert!((fs.total_energy - (15.0f64 / 4.0).ln()).abs() < 1e-15);
        let fs = factor_state_of(&Semiprime::from_factors(7, 5).unwrap(), 2).unwrap();
        assert_eq!((fs.j1, fs.j2), (5, 3));
        let fs = factor_state_of(&Semiprime::from_factors(3, 3).unwrap(), 2).unwrap();
        assert_eq!((fs.j1, fs.j2), (1, 1));
        assert!((fs.total_energy - (9.0f64 / 4.0).ln()).abs() < 1e-15);
        let err = factor_state_of(&Semiprime::from_factors(7, 3).unwrap(), 3);
        assert!(matches!(err, Err(Error::ProtocolDomain(_))));
    }

    #[test]
    fn total_energy_is_sum_of_levels() {
        let fs = factor_state_of(&Semiprime::from_factors(13, 11).unwrap(), 2).unwrap();
        let sum = level_3d(fs.j1, 2).unwrap() + level_3d(fs.j2, 2).unwrap();
        assert!((sum - fs.total_energy).abs() < 1e-14);
    }

    #[test]
    fn decode_examples() {
        assert_eq!(factor_from_energy(2.5f64.ln(), 2, 15, None).unwrap(), (5, 3));
        assert_eq!(factor_from_energy(1.5f64.ln(), 2, 15, None).unwrap(), (3, 5));
        assert_eq!(factor_from_energy(3.5f64.ln() + 1e-9, 2, 35, None).unwrap(), (7, 5));
    }

    #[test]
    fn decode_errors() {
        // Halfway between ln(5/2) and ln(3).
        let mid = 0.5 * (2.5f64.ln() + 3f64.ln());
        assert!(matches!(factor_from_energy(mid, 2, 15, None), Err(Error::Decode { .. })));
        // Ground level is not a factor.
        assert!(matches!(factor_from_energy(0.0, 2, 15, None), Err(Error::Decode { .. })));
        // ln(2) is j = 2, q = 4, which does not divide 15.
        assert!(matches!(factor_from_energy(2f64.ln(), 2, 15, None), Err(Error::Inconsistent { factor: 4, n: 15 })));
    }

    #[test]
    fn predivision() {
        assert_eq!(predivide(60, 2), PreDivision { removed: vec![2, 2], remainder: 15 });
        assert_eq!(predivide(15, 2).remainder, 15);
        assert_eq!(predivide(16, 2).remainder, 1);
        assert_eq!(predivide(2 * 3 * 3 * 35, 3), PreDivision { removed: vec![2, 3, 3], remainder: 35 });
    }

    fn primes_in(lo: u64, hi: u64) -> Vec<u64> {
        (lo..=hi).filter(|&x| is_prime(x)).collect()
    }

    #[test]
    fn decode_inverts_factor_state_for_all_small_semiprimes() {
        for k in [2u32, 3, 5] {
            let ps = primes_in(k as u64 + 1, 200);
            for (i, &q) in ps.iter().enumerate() {
                for &p in &ps[i..] {
                    let sp = Semiprime::from_factors(p, q).unwrap();
                    let fs = factor_state_of(&sp, k).unwrap();
                    let e1 = level_3d(fs.j1, k).unwrap();
                    let e2 = level_3d(fs.j2, k).unwrap();
                    assert_eq!(factor_from_energy(e1, k, sp.n, None).unwrap(), (p, q));
                    assert_eq!(factor_from_energy(e2, k, sp.n, None).unwrap(), (q, p));
                }
            }
        }
    }

    #[test]
    fn distribution_is_unique_for_semiprimes() {
        for k in [2u32, 3, 5] {
            let ps = primes_in(k as u64 + 1, 200);
            for (i, &q) in ps.iter().enumerate() {
                for &p in &ps[i..] {
                    let d = distributions(p * q, k);
                    assert_eq!(d, vec![((p - k as u64) as u32, (q - k as u64) as u32)]);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn levels_increase_and_are_concave(j in 0u32..10_000, k in 2u32..50) {
            let e0 = level_3d(j, k).unwrap();
            let e1 = level_3d(j + 1, k).unwrap();
            let e2 = level_3d(j + 2, k).unwrap();
            prop_assert!(e1 > e0);
            prop_assert!(e2 - e1 < e1 - e0);
        }
    }
}
