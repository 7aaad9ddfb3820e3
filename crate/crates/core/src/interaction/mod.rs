//! Contact-interaction matrix elements between central-potential orbitals.
//!
//! `W_{ab;cd} = ∫ d³r conj(ψ_a ψ_b) ψ_c ψ_d` with `ψ = R_{k,l}(r) Y_{lm}`,
//! in units of the inverse oscillator volume.

pub mod gaunt;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radial::RadialBasis;
use crate::spectrum::FactorState;

/// Allowed deviation of `∫ R² r² dr` from one.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QuantumTriple {
    pub k: usize,
    pub ell: u32,
    pub m: i32,
}

impl QuantumTriple {
    pub fn new(k: usize, ell: u32, m: i32) -> Result<Self> {
        if m.unsigned_abs() > ell {
            return Err(Error::Parameter(format!("|m| = {} exceeds l = {ell}", m.abs())));
        }
        Ok(Self { k, ell, m })
    }

    pub const fn s(k: usize) -> Self {
        Self { k, ell: 0, m: 0 }
    }

    pub const GROUND: Self = Self::s(0);
}

/// Composite Simpson; a trailing odd interval takes the 3/8 rule.
pub fn simpson(f: &[f64], h: f64) -> f64 {
    let n = f.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (f[0] + f[1]),
        3 => h / 3.0 * (f[0] + 4.0 * f[1] + f[2]),
        _ => {
            let end = if n % 2 == 1 { n } else { n - 3 };
            let mut s = f[0] + f[end - 1];
            for (i, v) in f.iter().enumerate().take(end - 1).skip(1) {
                s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            let mut total = h / 3.0 * s;
            if end < n {
                total += 3.0 * h / 8.0 * (f[n - 4] + 3.0 * f[n - 3] + 3.0 * f[n - 2] + f[n - 1]);
            }
            total
        }
    }
}

/// Integrand `r² R_0² R_a R_b` of the ground-pair element.
pub fn ground_integrand(r: &[f64], r0: &[f64], ra: &[f64], rb: &[f64]) -> Vec<f64> {
    (0..r.len()).map(|i| (r[i] * r[i] * r0[i] * r0[i]) * (ra[i] * rb[i])).collect()
}

fn check_norm(basis: &RadialBasis, k: usize, ell: u32) -> Result<Vec<f64>> {
    let rr = basis.radial_r(k, ell)?;
    let r = basis.r();
    let integrand: Vec<f64> = rr.iter().zip(r).map(|(v, x)| v * v * x * x).collect();
    let norm = simpson(&integrand, basis.spacing());
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::Contract(format!("state (k={k}, l={ell}) has norm {norm}")));
    }
    Ok(rr)
}

/// `(1/4π) ∫ r² R_{0,0}² R_{k1,l} R_{k2,l} dr`.
pub fn w_ground_to(k1: usize, k2: usize, ell: u32, basis: &RadialBasis) -> Result<f64> {
    let r0 = check_norm(basis, 0, 0)?;
    let ra = check_norm(basis, k1, ell)?;
    let rb = check_norm(basis, k2, ell)?;
    Ok(simpson(&ground_integrand(basis.r(), &r0, &ra, &rb), basis.spacing()) / (4.0 * PI))
}

fn is_ground_pair(p: &(QuantumTriple, QuantumTriple)) -> bool {
    p.0 == QuantumTriple::GROUND && p.1 == QuantumTriple::GROUND
}

fn sign_of(m: i32) -> f64 {
    if m % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Element of the ground pair against `(a, b)`: zero unless `l_a = l_b`
/// and `m_a + m_b = 0`, otherwise `(-1)^m_a` times [`w_ground_to`].
pub fn w_ground_pair(a: QuantumTriple, b: QuantumTriple, basis: &RadialBasis) -> Result<f64> {
    if a.ell != b.ell || a.m + b.m != 0 {
        return Ok(0.0);
    }
    Ok(sign_of(a.m) * w_ground_to(a.k, b.k, a.ell, basis)?)
}

/// `⟨bra| W |ket⟩` for arbitrary orbital pairs.
///
/// Either side being the ground pair reduces to [`w_ground_pair`]; the
/// radial parts are real, so both orders give the same value. Structural
/// zeros return `0.0` before any quadrature.
pub fn w_general(
    bra: (QuantumTriple, QuantumTriple),
    ket: (QuantumTriple, QuantumTriple),
    basis: &RadialBasis,
) -> Result<f64> {
    if is_ground_pair(&bra) {
        return w_ground_pair(ket.0, ket.1, basis);
    }
    if is_ground_pair(&ket) {
        return w_ground_pair(bra.0, bra.1, basis);
    }
    let angular = gaunt::four_harmonic_integral(
        (bra.0.ell as i64, bra.0.m as i64),
        (bra.1.ell as i64, bra.1.m as i64),
        (ket.0.ell as i64, ket.0.m as i64),
        (ket.1.ell as i64, ket.1.m as i64),
    );
    if angular == 0.0 {
        return Ok(0.0);
    }
    Ok(angular * radial_four(basis, [bra.0, bra.1, ket.0, ket.1])?)
}

/// `∫ r² R_a R_b R_c R_d dr`.
pub fn radial_four(basis: &RadialBasis, states: [QuantumTriple; 4]) -> Result<f64> {
    let rs = states.iter().map(|s| check_norm(basis, s.k, s.ell)).collect::<Result<Vec<_>>>()?;
    let r = basis.r();
    let f: Vec<f64> = (0..r.len()).map(|i| (r[i] * r[i]) * (rs[0][i] * rs[1][i]) * (rs[2][i] * rs[3][i])).collect();
    Ok(simpson(&f, basis.spacing()))
}

/// Ground-pair elements `W_{0,0;(k1,l),(k2,l)}` for `m1 = -m2 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixElementTable {
    entries: BTreeMap<(usize, usize, u32), f64>,
}

impl MatrixElementTable {
    /// All `k1, k2 < k_count[l]` for every channel `l` present in the basis,
    /// up to `max_ell`.
    pub fn build(basis: &RadialBasis, max_ell: u32, k_count: usize) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for ell in 0..=max_ell {
            let available = basis.channel(ell).map_or(0, |c| c.functions.len());
            if available < k_count {
                return Err(Error::Truncation(format!(
                    "channel l={ell} holds {available} states, {k_count} requested"
                )));
            }
            for k1 in 0..k_count {
                for k2 in k1..k_count {
                    let w = w_ground_to(k1, k2, ell, basis)?;
                    entries.insert((k1, k2, ell), w);
                    entries.insert((k2, k1, ell), w);
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn radial(&self, k1: usize, k2: usize, ell: u32) -> Option<f64> {
        self.entries.get(&(k1, k2, ell)).copied()
    }

    /// `⟨bra|W|ket⟩` where one side is the ground pair. `None` when neither
    /// side is the ground pair or the entry was not tabulated.
    pub fn element(&self, bra: (QuantumTriple, QuantumTriple), ket: (QuantumTriple, QuantumTriple)) -> Option<f64> {
        let (a, b) = if is_ground_pair(&bra) {
            ket
        } else if is_ground_pair(&ket) {
            bra
        } else {
            return None;
        };
        if a.ell != b.ell || a.m + b.m != 0 {
            return Some(0.0);
        }
        self.radial(a.k, b.k, a.ell).map(|w| sign_of(a.m) * w)
    }

    /// CSV rows `k1,k2,ell,W`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k1,k2,ell,W\n");
        for ((k1, k2, ell), w) in &self.entries {
            writeln!(out, "{k1},{k2},{ell},{w}").unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub intercept: f64,
    /// Root-mean-square residual in `ln |W|`.
    pub residual: f64,
}

/// Least-squares fit of `ln |w|` against `ln n`.
pub fn fit_power_law(ns: &[f64], ws: &[f64]) -> Result<ScalingFit> {
    if ns.len() != ws.len() {
        return Err(Error::Parameter("mismatched sample lengths".into()));
    }
    let mut distinct: Vec<f64> = ns.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Parameter("need at least two distinct N".into()));
    }
    if ws.iter().any(|w| *w == 0.0 || !w.is_finite()) || ns.iter().any(|n| *n <= 0.0) {
        return Err(Error::Parameter("samples must be finite and nonzero".into()));
    }
    let x: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let y: Vec<f64> = ws.iter().map(|w| w.abs().ln()).collect();
    let len = x.len() as f64;
    let mx = x.iter().sum::<f64>() / len;
    let my = y.iter().sum::<f64>() / len;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let residual = (x.iter().zip(&y).map(|(a, b)| (b - intercept - exponent * a).powi(2)).sum::<f64>() / len).sqrt();
    Ok(ScalingFit { exponent, intercept, residual })
}

/// Fits `W_{0,0;j1,j2}` over the given factor states against `N = (j1+K)(j2+K)`.
pub fn scaling_probe(basis: &RadialBasis, states: &[FactorState]) -> Result<ScalingFit> {
    let k = basis.k() as f64;
    let mut ns = Vec::with_capacity(states.len());
    let mut ws = Vec::with_capacity(states.len());
    for s in states {
        ns.push((s.j1 as f64 + k) * (s.j2 as f64 + k));
        ws.push(w_ground_to(s.j1 as usize, s.j2 as usize, 0, basis)?);
    }
    fit_power_law(&ns, &ws)
}
