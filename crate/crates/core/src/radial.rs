//! Central-potential lift of the one-dimensional solution.
//!
//! Odd full-line states vanish at the origin and serve directly as `u = rR`
//! for `l = 0`. Higher channels add the centrifugal barrier on the half-line.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::eigensolver1d::{richardson_halfline, solve_halfline_with, solve_lowest, Grid, PotentialOnGrid};
use crate::error::{Error, Result};
use crate::inverse_spectral::InversionReport;
use crate::spectrum::SpectrumTarget;

/// Gaps below this are reported as suspicious near-degeneracies.
pub const FLAG_THRESHOLD: f64 = 1e-4;

/// Energies (in the 3D gauge) and reduced radial functions `u = rR` of one channel.
#[derive(Debug, Clone)]
pub struct Channel {
    pub energies: Vec<f64>,
    /// On the half-line nodes, `u[0] = 0`.
    pub functions: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct RadialBasis {
    target: SpectrumTarget,
    potential: PotentialOnGrid,
    r: Vec<f64>,
    shift: f64,
    channels: BTreeMap<u32, Channel>,
}

/// Selects the odd states of a converged inversion as s-states.
///
/// Energies are shifted by `-ln(1/L + 1)` so that state `j` sits at
/// `ln(j/K + 1)`.
pub fn lift_to_3d(inv: &InversionReport) -> Result<RadialBasis> {
    if !inv.converged {
        return Err(Error::NotConverged { max_error: inv.max_error(), tol: inv.tol });
    }
    // Odd indices 1, 3, ..., below m_fit.
    let s_count = inv.m_fit() / 2;
    RadialBasis::from_potential(SpectrumTarget::new(inv.l)?, inv.potential.clone(), s_count)
}

/// Lowest `m` levels of `-u''/2 + (V + l(l+1)/(2 r^2)) u` with `u(0) = 0`.
/// Energies are in the gauge of `pot`.
pub fn solve_ell_channel(pot: &PotentialOnGrid, ell: u32, m: usize) -> Result<Channel> {
    let cent = centrifugal(ell);
    let pairs = solve_halfline_with(pot, cent, m)?;
    Ok(Channel {
        energies: pairs.iter().map(|p| p.energy).collect(),
        functions: pairs.into_iter().map(|p| p.wavefunction).collect(),
    })
}

fn centrifugal(ell: u32) -> impl Fn(f64) -> f64 {
    let c = 0.5 * (ell * (ell + 1)) as f64;
    move |r: f64| c / (r * r)
}

impl RadialBasis {
    /// Takes the first `s_count` odd states of `pot` as s-states.
    pub fn from_potential(target: SpectrumTarget, pot: PotentialOnGrid, s_count: usize) -> Result<Self> {
        if s_count == 0 {
            return Err(Error::Parameter("need at least one s-state".into()));
        }
        let full = solve_lowest(&pot, 2 * s_count)?;
        let grid = *pot.grid();
        let c = grid.center();
        let shift = target.odd_shift();
        let mut energies = Vec::with_capacity(s_count);
        let mut functions = Vec::with_capacity(s_count);
        for j in 0..s_count {
            let pair = &full[2 * j + 1];
            let half = &pair.wavefunction[c..];
            // Positive just right of the origin; unit norm on the half-line.
            let sign = if half[1] < 0.0 { -1.0 } else { 1.0 };
            let mut u: Vec<f64> = half.iter().map(|x| sign * std::f64::consts::SQRT_2 * x).collect();
            u[0] = 0.0;
            energies.push(pair.energy - shift);
            functions.push(u);
        }
        let mut channels = BTreeMap::new();
        channels.insert(0, Channel { energies, functions });
        Ok(Self { target, r: grid.half_points(), potential: pot, shift, channels })
    }

    pub fn k(&self) -> u32 {
        self.target.k()
    }

    pub fn l(&self) -> u32 {
        self.target.l()
    }

    pub fn target(&self) -> &SpectrumTarget {
        &self.target
    }

    pub fn potential(&self) -> &PotentialOnGrid {
        &self.potential
    }

    pub fn grid(&self) -> &Grid {
        self.potential.grid()
    }

    /// Half-line nodes, starting at `r = 0`.
    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn spacing(&self) -> f64 {
        self.grid().spacing()
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn s_energies(&self) -> &[f64] {
        &self.channels[&0].energies
    }

    pub fn s_functions(&self) -> &[Vec<f64>] {
        &self.channels[&0].functions
    }

    pub fn s_count(&self) -> usize {
        self.s_energies().len()
    }

    pub fn channel(&self, ell: u32) -> Option<&Channel> {
        self.channels.get(&ell)
    }

    pub fn channels(&self) -> impl Iterator<Item = (u32, &Channel)> {
        self.channels.iter().map(|(l, c)| (*l, c))
    }

    pub fn max_ell(&self) -> u32 {
        *self.channels.keys().next_back().unwrap_or(&0)
    }

    /// Solves channel `ell` (l ≥ 1) for `m` levels, replacing any earlier result.
    pub fn add_channel(&mut self, ell: u32, m: usize) -> Result<&Channel> {
        if ell == 0 {
            return Err(Error::Parameter("the s channel comes from the lift".into()));
        }
        let mut ch = solve_ell_channel(&self.potential, ell, m)?;
        ch.energies.iter_mut().for_each(|e| *e -= self.shift);
        self.channels.insert(ell, ch);
        Ok(&self.channels[&ell])
    }

    /// Solves channel `ell` (l ≥ 1) with enough levels that the last one
    /// lies above `cutoff`.
    pub fn ensure_channel(&mut self, ell: u32, cutoff: f64) -> Result<&Channel> {
        let mut m = self.channels.get(&ell).map_or(2, |c| c.energies.len().max(2));
        loop {
            if ell > 0 {
                self.add_channel(ell, m)?;
            }
            if *self.channels[&ell].energies.last().unwrap() > cutoff {
                return Ok(&self.channels[&ell]);
            }
            if ell == 0 {
                return Err(Error::Truncation(format!("s channel ends below {cutoff}; fit more levels")));
            }
            m += 2;
        }
    }

    /// Adds channels `l = 1, 2, ...` up to `max_ell`, or until a channel
    /// ground state exceeds `cutoff`, each with a level above it.
    pub fn populate_channels_upto(&mut self, cutoff: f64, max_ell: u32) -> Result<()> {
        for ell in 1..=max_ell {
            if self.ensure_channel(ell, cutoff)?.energies[0] > cutoff {
                break;
            }
        }
        Ok(())
    }

    pub fn populate_channels(&mut self, cutoff: f64) -> Result<()> {
        self.populate_channels_upto(cutoff, u32::MAX)
    }

    #[cfg(test)]
    pub(crate) fn scale_s_function(&mut self, j: usize, by: f64) {
        let ch = self.channels.get_mut(&0).unwrap();
        ch.functions[j].iter_mut().for_each(|v| *v *= by);
    }

    /// `u_{k,l}` on the half-line nodes.
    pub fn reduced(&self, k: usize, ell: u32) -> Result<&[f64]> {
        self.channels
            .get(&ell)
            .and_then(|c| c.functions.get(k))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Truncation(format!("state (k={k}, l={ell}) is not in the basis")))
    }

    /// `R_{k,l} = u/r`, with `R(0)` extrapolated quadratically from the
    /// first three interior nodes.
    pub fn radial_r(&self, k: usize, ell: u32) -> Result<Vec<f64>> {
        Ok(reduced_to_radial(self.reduced(k, ell)?, &self.r))
    }

    pub fn energy(&self, k: usize, ell: u32) -> Option<f64> {
        self.channels.get(&ell).and_then(|c| c.energies.get(k)).copied()
    }

    /// CSV rows `ell,k,energy,multiplicity` for every stored level.
    pub fn spectrum_csv(&self) -> String {
        let mut out = String::from("ell,k,energy,multiplicity\n");
        for (ell, ch) in &self.channels {
            for (k, e) in ch.energies.iter().enumerate() {
                writeln!(out, "{ell},{k},{e},{}", 2 * ell + 1).unwrap();
            }
        }
        out
    }
}

pub fn reduced_to_radial(u: &[f64], r: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = u.iter().zip(r).map(|(u, r)| if *r > 0.0 { u / r } else { 0.0 }).collect();
    out[0] = 3.0 * out[1] - 3.0 * out[2] + out[3];
    out
}

/// `(k, l)` of one radial level.
pub type LevelId = (usize, u32);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditLevel {
    pub k: usize,
    pub ell: u32,
    pub energy: f64,
    pub multiplicity: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyAudit {
    pub cutoff: f64,
    /// Sorted by energy.
    pub levels: Vec<AuditLevel>,
    /// Infinite when fewer than two levels lie below the cutoff.
    pub min_gap: f64,
    pub min_gap_pair: Option<(LevelId, LevelId)>,
    pub flagged: Vec<(LevelId, LevelId, f64)>,
    pub harmonic_reference: Option<Box<DegeneracyAudit>>,
}

impl DegeneracyAudit {
    pub fn from_channels<'a>(channels: impl Iterator<Item = (u32, &'a [f64])>, cutoff: f64) -> Self {
        let mut levels: Vec<AuditLevel> = channels
            .flat_map(|(ell, es)| {
                es.iter().enumerate().filter(|(_, e)| **e <= cutoff).map(move |(k, e)| AuditLevel {
                    k,
                    ell,
                    energy: *e,
                    multiplicity: 2 * ell + 1,
                })
            })
            .collect();
        levels.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.ell.cmp(&b.ell)).then(a.k.cmp(&b.k)));
        let mut min_gap = f64::INFINITY;
        let mut min_gap_pair = None;
        let mut flagged = Vec::new();
        for w in levels.windows(2) {
            let gap = w[1].energy - w[0].energy;
            let pair = ((w[0].k, w[0].ell), (w[1].k, w[1].ell));
            if gap < min_gap {
                min_gap = gap;
                min_gap_pair = Some(pair);
            }
            if gap < FLAG_THRESHOLD {
                flagged.push((pair.0, pair.1, gap));
            }
        }
        Self { cutoff, levels, min_gap, min_gap_pair, flagged, harmonic_reference: None }
    }
}

/// Cutoff that admits exactly the lowest `count` stored levels.
pub fn cutoff_for_lowest(basis: &RadialBasis, count: usize) -> Option<f64> {
    let mut all: Vec<f64> = basis.channels().flat_map(|(_, c)| c.energies.iter().copied()).collect();
    all.sort_by(f64::total_cmp);
    all.get(count.checked_sub(1)?).copied()
}

/// Populates channels until the lowest `count` levels are all known, then
/// audits exactly those.
pub fn audit_lowest(basis: &mut RadialBasis, count: usize) -> Result<DegeneracyAudit> {
    let mut cutoff = 0.25;
    loop {
        basis.populate_channels(cutoff)?;
        if let Some(c) = cutoff_for_lowest(basis, count).filter(|c| *c <= cutoff) {
            return Ok(audit_degeneracy(basis, c));
        }
        cutoff += 0.125;
    }
}

/// Gap audit of every stored level up to `cutoff`, with the isotropic
/// oscillator over the same number of shells as reference.
pub fn audit_degeneracy(basis: &RadialBasis, cutoff: f64) -> DegeneracyAudit {
    let mut audit = DegeneracyAudit::from_channels(basis.channels().map(|(l, c)| (l, c.energies.as_slice())), cutoff);
    audit.harmonic_reference = harmonic_reference(3.0).ok().map(Box::new);
    audit
}

/// Oscillator levels `2k + l` (ground at zero) up to `cutoff`, from the
/// Richardson-extrapolated half-line solver.
pub fn harmonic_reference(cutoff: f64) -> Result<DegeneracyAudit> {
    let grid = Grid::new(10.0, 2001)?;
    let max_ell = cutoff.floor() as u32;
    let mut channels = Vec::new();
    let mut ground = None;
    for ell in 0..=max_ell {
        let m = ((cutoff - ell as f64) / 2.0).floor() as usize + 1;
        let es = richardson_halfline(grid, |x| 0.5 * x * x, centrifugal(ell), m)?;
        let e0 = *ground.get_or_insert(es[0]);
        channels.push((ell, es.iter().map(|e| e - e0).collect::<Vec<_>>()));
    }
    Ok(DegeneracyAudit::from_channels(channels.iter().map(|(l, e)| (*l, e.as_slice())), cutoff + 0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensolver1d::overlap;
    use crate::inverse_spectral::{default_grid, invert_spectrum, InversionConfig};
    use std::sync::OnceLock;

    fn basis() -> &'static RadialBasis {
        static B: OnceLock<RadialBasis> = OnceLock::new();
        B.get_or_init(|| {
            let cfg = InversionConfig { m_fit: 16, ..InversionConfig::new(3) };
            let inv = invert_spectrum(&cfg, default_grid(3, 16).unwrap()).unwrap();
            lift_to_3d(&inv).unwrap()
        })
    }

    #[test]
    fn lifted_energies_follow_the_3d_law() {
        let b = basis();
        assert_eq!(b.k(), 2);
        assert!((b.shift() - (4.0f64 / 3.0).ln()).abs() < 1e-15);
        let expected = [0.0, 1.5f64.ln(), 2f64.ln(), 2.5f64.ln(), 3f64.ln(), 3.5f64.ln()];
        for (e, x) in b.s_energies().iter().zip(expected) {
            assert!((e - x).abs() < 1e-8, "{e} vs {x}");
        }
    }

    #[test]
    fn s_functions_are_orthonormal_and_vanish_at_origin() {
        let b = basis();
        let h = b.spacing();
        for (j, u) in b.s_functions().iter().enumerate() {
            assert_eq!(u[0], 0.0);
            assert!(u[1] > 0.0);
            for (k, v) in b.s_functions().iter().enumerate() {
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((overlap(u, v, h) - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn s_channel_matches_halfline_solve() {
        let b = basis();
        let ch = solve_ell_channel(b.potential(), 0, b.s_count()).unwrap();
        for (a, e) in ch.energies.iter().zip(b.s_energies()) {
            assert!((a - b.shift() - e).abs() < 1e-8);
        }
    }

    #[test]
    fn channel_ground_rises_with_ell() {
        let b = basis();
        let mut prev = b.s_energies()[0];
        for ell in 1..5 {
            let ch = solve_ell_channel(b.potential(), ell, 2).unwrap();
            let e = ch.energies[0] - b.shift();
            assert!(e > prev);
            assert!(ch.energies[1] > ch.energies[0]);
            prev = e;
        }
    }

    #[test]
    fn harmonic_channels_reproduce_oscillator_shells() {
        let grid = Grid::new(10.0, 2001).unwrap();
        for ell in 0..4u32 {
            let es = richardson_halfline(grid, |x| 0.5 * x * x, centrifugal(ell), 3).unwrap();
            for (k, e) in es.iter().enumerate() {
                let exact = 2.0 * k as f64 + ell as f64 + 1.5;
                assert!((e - exact).abs() < 1e-5, "k={k} l={ell}: {e}");
            }
        }
    }

    #[test]
    fn harmonic_reference_shows_the_n2_degeneracy() {
        let audit = harmonic_reference(3.0).unwrap();
        assert!(audit.min_gap < 1e-5);
        assert!(audit.flagged.iter().any(|(a, b, _)| (*a == (1, 0) && *b == (0, 2)) || (*a == (0, 2) && *b == (1, 0))));
        assert!(audit.levels.iter().all(|l| l.multiplicity == 2 * l.ell + 1));
    }

    #[test]
    fn single_channel_gap_is_top_s_gap() {
        let b = basis();
        let cutoff = b.s_energies()[4] + 1e-9;
        let audit = DegeneracyAudit::from_channels(std::iter::once((0, b.s_energies())), cutoff);
        let k = b.k() as f64;
        let expected = ((3.0 + 1.0 + k) / (3.0 + k)).ln();
        assert!((audit.min_gap - expected).abs() < 1e-8);
    }

    #[test]
    fn log_potential_has_no_accidental_degeneracy() {
        let mut b = basis().clone();
        let audit = audit_lowest(&mut b, 12).unwrap();
        assert_eq!(audit.levels.len(), 12);
        assert!(audit.min_gap > 1e-3, "{:?}", audit.min_gap_pair);
        assert!(audit.flagged.is_empty());
        for (_, ch) in b.channels() {
            assert!(ch.energies.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn radial_function_extrapolates_to_finite_origin_value() {
        let b = basis();
        let r = b.radial_r(0, 0).unwrap();
        let slope = b.s_functions()[0][1] / b.r()[1];
        assert!((r[0] - slope).abs() < 1e-3 * slope);
    }

    #[test]
    fn spectrum_csv_lists_multiplicities() {
        let mut b = basis().clone();
        b.add_channel(2, 2).unwrap();
        let csv = b.spectrum_csv();
        assert!(csv.starts_with("ell,k,energy,multiplicity\n0,0,"));
        assert!(csv.lines().any(|l| l.starts_with("2,1,") && l.ends_with(",5")));
    }
}
