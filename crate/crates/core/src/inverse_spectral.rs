//! Reconstruction of an even one-dimensional potential from a prescribed
//! set of low-lying levels.
//!
//! The first-order response of level `k` to a local change of the potential
//! is `dE_k / dV(x) = u_k(x)^2`. Corrections are expanded in the densities
//! `u_k^2 / rho`, where `rho` is the summed density of the fitted states.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

use crate::eigensolver1d::{solve_lowest, EigenPair, Grid, PotentialOnGrid};
use crate::error::{Error, Result};
use crate::spectrum::SpectrumTarget;

/// Relative floor added to the summed density.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Grid spacing used by [`default_grid`].
pub const DEFAULT_SPACING: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionConfig {
    pub l: u32,
    pub m_fit: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Initial step factor; grows back towards 1 after accepted steps.
    pub damping: f64,
}

impl InversionConfig {
    pub fn new(l: u32) -> Self {
        Self { l, m_fit: 16, tol: 1e-8, max_iter: 500, damping: 0.5 }
    }

    pub fn validate(&self) -> Result<SpectrumTarget> {
        let target = SpectrumTarget::new(self.l)?;
        if !(self.tol > 0.0) {
            return Err(Error::Parameter(format!("tolerance must be positive, got {}", self.tol)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Parameter(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if self.m_fit < 2 {
            return Err(Error::Parameter("need at least two fitted levels".into()));
        }
        Ok(target)
    }
}

/// Grid wide enough to confine the top fitted level of `ln(k/L + 1)`.
///
/// For a potential growing like `ln x` the classical turning point of level
/// `k` sits near `sqrt(pi/2) (k + L)`; three times that leaves the edge more
/// than one unit above the level.
pub fn default_grid(l: u32, m_fit: usize) -> Result<Grid> {
    let turning = (std::f64::consts::PI / 2.0).sqrt() * ((m_fit - 1) as f64 + l as f64);
    Grid::with_spacing((3.0 * turning).max(15.0), DEFAULT_SPACING)
}

#[derive(Debug, Clone)]
pub struct InversionReport {
    pub l: u32,
    pub tol: f64,
    /// Gauge fixed so the ground level is zero.
    pub potential: PotentialOnGrid,
    pub energies: Vec<f64>,
    /// `E_k - E_0 - target_k` for each fitted level.
    pub level_errors: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest level error before the first step and after every accepted step.
    pub history: Vec<f64>,
}

impl InversionReport {
    pub fn max_error(&self) -> f64 {
        max_abs(&self.level_errors)
    }

    pub fn m_fit(&self) -> usize {
        self.level_errors.len()
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Builds the potential whose lowest `m_fit` levels follow `ln(k/L + 1)`.
pub fn invert_spectrum(cfg: &InversionConfig, grid: Grid) -> Result<InversionReport> {
    let target = cfg.validate()?;
    let omega = target.level_1d(1);
    let initial = PotentialOnGrid::from_fn(grid, |x| 0.5 * (omega * x).powi(2).ln_1p());
    let mut report = fit_levels(initial, &target.levels_1d(cfg.m_fit), cfg)?;
    report.l = cfg.l;
    Ok(report)
}

fn level_errors(pairs: &[EigenPair], targets: &[f64]) -> Vec<f64> {
    let e0 = pairs[0].energy;
    pairs.iter().zip(targets).map(|(p, t)| p.energy - e0 - t).collect()
}

/// Fits the level spacings `E_k - E_0` of `initial` to `targets`
/// (`targets[0]` is expected to be zero).
pub fn fit_levels(initial: PotentialOnGrid, targets: &[f64], cfg: &InversionConfig) -> Result<InversionReport> {
    let m = targets.len();
    let mut pot = initial;
    let mut pairs = solve_lowest(&pot, m)?;
    // Absolute targets keep the ground level where the initial guess put it.
    let offset = pairs[0].energy;
    let absolute: Vec<f64> = targets.iter().map(|t| t + offset).collect();
    let mut err = max_abs(&level_errors(&pairs, targets));
    let mut history = vec![err];
    let mut step = cfg.damping;
    let mut iterations = 0;
    while err > cfg.tol && iterations < cfg.max_iter {
        let delta = newton_correction(&pairs, &absolute, pot.grid().spacing());
        let accepted = loop {
            let trial = continue_logarithmically(&apply_correction(&pot, &delta, step), &pairs);
            match solve_lowest(&trial, m) {
                Ok(p) => {
                    let e = max_abs(&level_errors(&p, targets));
                    if e < err {
                        break Some((trial, p, e));
                    }
                }
                Err(Error::DomainTruncation(_)) => {}
                Err(other) => return Err(other),
            }
            step *= 0.5;
            if step < 1e-6 {
                break None;
            }
        };
        let Some((trial, p, e)) = accepted else { break };
        pot = trial;
        pairs = p;
        err = e;
        history.push(err);
        iterations += 1;
        step = (step * 1.25).min(1.0);
    }
    // Gauge: ground level at zero.
    let e0 = pairs[0].energy;
    let potential = pot.shifted(-e0);
    let pairs = solve_lowest(&potential, m)?;
    let level_errors = level_errors(&pairs, targets);
    Ok(InversionReport {
        l: 0,
        tol: cfg.tol,
        converged: max_abs(&level_errors) <= cfg.tol,
        energies: pairs.iter().map(|p| p.energy).collect(),
        level_errors,
        potential,
        iterations,
        history,
    })
}

struct Densities {
    dens: Vec<Vec<f64>>,
    rho: Vec<f64>,
    floor: f64,
}

fn densities(pairs: &[EigenPair]) -> Densities {
    let n = pairs[0].wavefunction.len();
    let dens: Vec<Vec<f64>> = pairs.iter().map(|p| p.wavefunction.iter().map(|u| u * u).collect()).collect();
    let rho: Vec<f64> = (0..n).map(|i| dens.iter().map(|d| d[i]).sum()).collect();
    let floor = DENSITY_FLOOR * rho.iter().fold(0.0f64, |m, v| m.max(*v));
    Densities { dens, rho, floor }
}

/// One first-order update: `V + damping * sum_k (t_k - E_k) u_k^2 / rho`,
/// with `rho = sum_k u_k^2 + eps`, symmetrized.
pub fn hf_update(current: &PotentialOnGrid, pairs: &[EigenPair], targets: &[f64], damping: f64) -> PotentialOnGrid {
    let d = densities(pairs);
    let mut next = current.clone();
    for (i, v) in next.values_mut().iter_mut().enumerate() {
        let rho = d.rho[i] + d.floor;
        let num: f64 = pairs.iter().zip(targets).zip(&d.dens).map(|((p, t), dk)| (t - p.energy) * dk[i]).sum();
        *v += damping * num / rho;
    }
    next.symmetrize();
    next
}

/// Correction profile whose first-order level shifts equal
/// `targets - energies`: coefficients `c` solve `A c = delta` with
/// `A_jk = int u_j^2 u_k^2 / rho`. Zero where `rho` is below the floor.
fn newton_correction(pairs: &[EigenPair], targets: &[f64], h: f64) -> Vec<f64> {
    let d = densities(pairs);
    let m = pairs.len();
    let n = d.rho.len();
    let support: Vec<bool> = d.rho.iter().map(|r| *r > d.floor).collect();
    let mut a = vec![vec![0.0; m]; m];
    for i in (0..n).filter(|&i| support[i]) {
        let inv = h / d.rho[i];
        for j in 0..m {
            let w = d.dens[j][i] * inv;
            for k in j..m {
                a[j][k] += w * d.dens[k][i];
            }
        }
    }
    for j in 0..m {
        for k in 0..j {
            a[j][k] = a[k][j];
        }
    }
    let delta: Vec<f64> = pairs.iter().zip(targets).map(|(p, t)| t - p.energy).collect();
    // A is a Gram matrix; fall back to the plain update if it is singular.
    let coeffs = solve_dense(a, delta.clone()).unwrap_or(delta);
    (0..n)
        .map(|i| if support[i] { (0..m).map(|k| coeffs[k] * d.dens[k][i]).sum::<f64>() / d.rho[i] } else { 0.0 })
        .collect()
}

fn apply_correction(pot: &PotentialOnGrid, delta: &[f64], step: f64) -> PotentialOnGrid {
    let mut next = pot.clone();
    next.values_mut().iter_mut().zip(delta).for_each(|(v, d)| *v += step * d);
    next.symmetrize();
    next
}

/// Beyond the outermost node where the fitted density exceeds the floor,
/// replaces the potential by `V(x_b) + s ln(x / x_b)` with the slope `s`
/// fitted against `ln x` on `[0.8 x_b, x_b]` (at least 1/2).
fn continue_logarithmically(pot: &PotentialOnGrid, pairs: &[EigenPair]) -> PotentialOnGrid {
    let d = densities(pairs);
    let grid = *pot.grid();
    let n = grid.len();
    let c = grid.center();
    let Some(b) = (c..n).rev().find(|&i| d.rho[i] > d.floor) else {
        return pot.clone();
    };
    if b + 1 >= n || b <= c + 4 {
        return pot.clone();
    }
    let xb = grid.point(b);
    let values = pot.values();
    let start = (c + 1..=b).find(|&i| grid.point(i) >= 0.8 * xb).unwrap_or(c + 1);
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    let count = (b - start + 1) as f64;
    for i in start..=b {
        let lx = grid.point(i).ln();
        sx += lx;
        sy += values[i];
        sxx += lx * lx;
        sxy += lx * values[i];
    }
    let denom = count * sxx - sx * sx;
    let slope = if denom > 0.0 { (count * sxy - sx * sy) / denom } else { 0.5 };
    let slope = slope.max(0.5);
    let vb = values[b];
    let mut next = pot.clone();
    let vals = next.values_mut();
    for i in b + 1..n {
        let v = vb + slope * (grid.point(i) / xb).ln();
        vals[i] = v;
        vals[n - 1 - i] = v;
    }
    next
}

/// Gaussian elimination with partial pivoting.
pub(crate) fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Header carried on the first line of a potential CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialHeader {
    #[serde(rename = "L")]
    pub l: u32,
    pub xmax: f64,
    pub n: usize,
    pub tol: f64,
    pub iterations: usize,
    pub converged: bool,
    pub m_fit: usize,
    pub columns: [String; 2],
}

impl PotentialHeader {
    pub fn of(report: &InversionReport) -> Self {
        let g = report.potential.grid();
        Self {
            l: report.l,
            xmax: g.xmax(),
            n: g.len(),
            tol: report.tol,
            iterations: report.iterations,
            converged: report.converged,
            m_fit: report.m_fit(),
            columns: ["xi".into(), "v".into()],
        }
    }
}

/// One JSON header line, then one `xi,v` row per node in shortest
/// round-trip decimal.
pub fn potential_to_csv(header: &PotentialHeader, pot: &PotentialOnGrid) -> Result<String> {
    let mut out = serde_json::to_string(header)?;
    out.push('\n');
    for (x, v) in pot.grid().points().iter().zip(pot.values()) {
        writeln!(out, "{x},{v}").expect("writing to a String cannot fail");
    }
    Ok(out)
}

pub fn potential_from_csv(reader: impl Read) -> Result<(PotentialHeader, PotentialOnGrid)> {
    let mut lines = BufReader::new(reader).lines();
    let first = lines.next().ok_or_else(|| Error::Format("empty potential file".into()))??;
    let header: PotentialHeader = serde_json::from_str(&first)?;
    let grid = Grid::new(header.xmax, header.n)?;
    let mut values = Vec::with_capacity(header.n);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (x, v) = line.split_once(',').ok_or_else(|| Error::Format(format!("row {i}: expected two columns")))?;
        let x: f64 = x.trim().parse().map_err(|_| Error::Format(format!("row {i}: bad xi")))?;
        let v: f64 = v.trim().parse().map_err(|_| Error::Format(format!("row {i}: bad value")))?;
        if x.to_bits() != grid.point(i).to_bits() {
            return Err(Error::Format(format!("row {i}: node {x} does not match the header grid")));
        }
        values.push(v);
    }
    let pot = PotentialOnGrid::new(grid, values)?;
    Ok((header, pot))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensolver1d::overlap;
    use proptest::prelude::*;

    #[test]
    fn config_validation() {
        let mut cfg = InversionConfig::new(3);
        assert!(cfg.validate().is_ok());
        cfg.damping = 0.0;
        assert!(cfg.validate().is_err());
        cfg.damping = 0.5;
        cfg.tol = -1.0;
        assert!(cfg.validate().is_err());
        assert!(InversionConfig::new(4).validate().is_err());
    }

    #[test]
    fn zero_residual_update_is_identity() {
        let grid = Grid::new(12.0, 1201).unwrap();
        let pot = PotentialOnGrid::from_fn(grid, |x| 0.5 * x * x);
        let pairs = solve_lowest(&pot, 4).unwrap();
        let targets: Vec<f64> = pairs.iter().map(|p| p.energy).collect();
        let next = hf_update(&pot, &pairs, &targets, 0.5);
        assert_eq!(next, pot);
    }

    #[test]
    fn update_of_symmetric_input_is_bitwise_symmetric() {
        let grid = Grid::new(12.0, 1201).unwrap();
        let pot = PotentialOnGrid::from_fn(grid, |x| 0.5 * x * x);
        let pairs = solve_lowest(&pot, 4).unwrap();
        let targets = [0.3, 1.4, 2.6, 3.5];
        let next = hf_update(&pot, &pairs, &targets, 0.7);
        let v = next.values();
        let n = v.len();
        assert!((0..n).all(|i| v[i].to_bits() == v[n - 1 - i].to_bits()));
    }

    #[test]
    fn single_level_offset_matches_first_order_prediction() {
        let grid = Grid::new(12.0, 1201).unwrap();
        let h = grid.spacing();
        let pot = PotentialOnGrid::from_fn(grid, |x| 0.5 * x * x);
        let pairs = solve_lowest(&pot, 4).unwrap();
        let delta = 1e-4;
        let damping = 0.5;
        let mut targets: Vec<f64> = pairs.iter().map(|p| p.energy).collect();
        targets[0] += delta;
        let next = hf_update(&pot, &pairs, &targets, damping);
        // First-order shift: damping * delta * int u0^4 / rho.
        let d = densities(&pairs);
        let weight: f64 = (0..d.rho.len()).map(|i| d.dens[0][i] * d.dens[0][i] / (d.rho[i] + d.floor)).sum::<f64>() * h;
        let predicted = damping * delta * weight;
        let resolved = solve_lowest(&next, 4).unwrap()[0].energy - pairs[0].energy;
        assert!((resolved - predicted).abs() < 1e-3 * predicted.abs(), "{resolved} vs {predicted}");
    }

    #[test]
    fn fixed_point_of_discrete_harmonic_levels() {
        let grid = Grid::new(12.0, 1201).unwrap();
        let pot = PotentialOnGrid::from_fn(grid, |x| 0.5 * x * x);
        let pairs = solve_lowest(&pot, 6).unwrap();
        let targets: Vec<f64> = pairs.iter().map(|p| p.energy - pairs[0].energy).collect();
        let report = fit_levels(pot.clone(), &targets, &InversionConfig::new(3)).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 0);
        let e0 = pairs[0].energy;
        for (a, b) in report.potential.values().iter().zip(pot.values()) {
            assert!((a + e0 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn continuum_harmonic_targets_barely_move_a_harmonic_start() {
        let grid = Grid::new(12.0, 1201).unwrap();
        let pot = PotentialOnGrid::from_fn(grid, |x| 0.5 * x * x);
        let targets: Vec<f64> = (0..6).map(|k| k as f64).collect();
        let report = fit_levels(pot.clone(), &targets, &InversionConfig::new(3)).unwrap();
        assert!(report.converged, "{:?}", report.level_errors);
        // Only the second-order discretization error gets absorbed.
        let c = grid.center();
        let shift = report.potential.values()[c] - pot.values()[c];
        for i in (c..c + 200).step_by(10) {
            let dv = report.potential.values()[i] - pot.values()[i] - shift;
            assert!(dv.abs() < 5e-3, "node {i}: {dv}");
        }
    }

    #[test]
    fn small_log_fit_converges_monotonically() {
        let cfg = InversionConfig { m_fit: 7, ..InversionConfig::new(3) };
        let report = invert_spectrum(&cfg, default_grid(3, 7).unwrap()).unwrap();
        assert!(report.converged);
        assert!(report.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(report.energies[0].abs() < 1e-12);
        let h = report.potential.grid().spacing();
        let pairs = solve_lowest(&report.potential, 7).unwrap();
        assert!((overlap(&pairs[3].wavefunction, &pairs[3].wavefunction, h) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn csv_rejects_garbage() {
        assert!(potential_from_csv("".as_bytes()).is_err());
        assert!(potential_from_csv("{}\n".as_bytes()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn csv_round_trip_is_bit_exact(scale in -1e3f64..1e3, bump in 1e-300f64..1e300, seed in 0u64..1000) {
            let grid = Grid::new(7.5, 201).unwrap();
            let mut s = seed;
            let vals: Vec<f64> = grid.half_points().iter().map(|x| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                scale * x.sin() + (s >> 40) as f64 * bump.sqrt().recip()
            }).collect();
            let c = grid.center();
            let full: Vec<f64> = (0..grid.len()).map(|i| vals[i.abs_diff(c)]).collect();
            let pot = PotentialOnGrid::new(grid, full).unwrap();
            let header = PotentialHeader {
                l: 3, xmax: 7.5, n: 201, tol: 1e-8, iterations: 4, converged: true, m_fit: 7,
                columns: ["xi".into(), "v".into()],
            };
            let text = potential_to_csv(&header, &pot).unwrap();
            let (h2, p2) = potential_from_csv(text.as_bytes()).unwrap();
            prop_assert_eq!(h2, header);
            for (a, b) in p2.values().iter().zip(pot.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
