//! Driven two-boson dynamics in the interaction picture.
//!
//! Amplitudes obey `i db_A/dt = γ sin(ω t) Σ_B V_AB e^{i(E_A - E_B) t} b_B`,
//! where `V_AB` is the contact element between symmetrized pair states.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interaction::{w_general, MatrixElementTable, QuantumTriple};
use crate::ode::{Dopri5, OdeSystem};
use crate::radial::RadialBasis;

/// Minimum `Ω T` for the time-averaged populations to be meaningful.
pub const MIN_OMEGA_T: f64 = 20.0;

/// Unordered pair of orbitals, stored with `a <= b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairKet {
    pub a: QuantumTriple,
    pub b: QuantumTriple,
}

impl PairKet {
    pub fn new(x: QuantumTriple, y: QuantumTriple) -> Self {
        if x <= y {
            Self { a: x, b: y }
        } else {
            Self { a: y, b: x }
        }
    }

    pub fn s(j1: usize, j2: usize) -> Self {
        Self::new(QuantumTriple::s(j1), QuantumTriple::s(j2))
    }

    pub const GROUND: Self = Self { a: QuantumTriple::GROUND, b: QuantumTriple::GROUND };

    pub fn is_doubly_occupied(&self) -> bool {
        self.a == self.b
    }

    /// Number of distinct orderings: 1 for a doubly occupied orbital, else 2.
    pub fn orderings(&self) -> f64 {
        if self.is_doubly_occupied() {
            1.0
        } else {
            2.0
        }
    }
}

impl fmt::Display for PairKet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}_{}:{}_{}_{}", self.a.k, self.a.ell, self.a.m, self.b.k, self.b.ell, self.b.m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoBosonBasis {
    kets: Vec<PairKet>,
    /// Pair energies relative to the ground pair.
    energies: Vec<f64>,
    /// Single-particle energies relative to the lowest s level, indexed by orbital.
    orbitals: Vec<(u32, usize, f64)>,
    /// Orbital indices of each ket's two particles.
    members: Vec<(usize, usize)>,
    e_cut: f64,
}

/// All pairs `{(k1,l,m), (k2,l,-m)}` with `l <= ell_max` and energy at most
/// `e_cut` above the ground pair, sorted by energy.
pub fn build_basis(basis: &RadialBasis, e_cut: f64, ell_max: u32) -> Result<TwoBosonBasis> {
    if !(e_cut >= 0.0) {
        return Err(Error::Parameter(format!("cutoff must be non-negative, got {e_cut}")));
    }
    let e0 = basis.s_energies()[0];
    let mut orbitals = Vec::new();
    for ell in 0..=ell_max {
        let ch = basis.channel(ell).ok_or_else(|| Error::Truncation(format!("channel l={ell} was not solved")))?;
        let top = ch.energies.last().copied().unwrap_or(f64::NEG_INFINITY) - e0;
        if top <= e_cut {
            return Err(Error::Truncation(format!("channel l={ell} ends at {top}, below the cutoff {e_cut}")));
        }
        for (k, e) in ch.energies.iter().enumerate() {
            if e - e0 <= e_cut {
                orbitals.push((ell, k, e - e0));
            }
        }
    }
    let mut set = BTreeSet::new();
    for (i, &(l1, k1, e1)) in orbitals.iter().enumerate() {
        for &(l2, k2, e2) in &orbitals[i..] {
            if l1 != l2 || e1 + e2 > e_cut {
                continue;
            }
            for m in -(l1 as i32)..=(l1 as i32) {
                let x = QuantumTriple { k: k1, ell: l1, m };
                let y = QuantumTriple { k: k2, ell: l2, m: -m };
                set.insert(PairKet::new(x, y));
            }
        }
    }
    let index = |q: &QuantumTriple| orbitals.iter().position(|(l, k, _)| *l == q.ell && *k == q.k).unwrap();
    let mut rows: Vec<(f64, PairKet, (usize, usize))> = set
        .into_iter()
        .map(|p| {
            let (ia, ib) = (index(&p.a), index(&p.b));
            (orbitals[ia].2 + orbitals[ib].2, p, (ia, ib))
        })
        .collect();
    rows.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    Ok(TwoBosonBasis {
        energies: rows.iter().map(|r| r.0).collect(),
        kets: rows.iter().map(|r| r.1).collect(),
        members: rows.iter().map(|r| r.2).collect(),
        orbitals,
        e_cut,
    })
}

impl TwoBosonBasis {
    pub fn len(&self) -> usize {
        self.kets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kets.is_empty()
    }

    pub fn kets(&self) -> &[PairKet] {
        &self.kets
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn e_cut(&self) -> f64 {
        self.e_cut
    }

    pub fn index_of(&self, ket: &PairKet) -> Option<usize> {
        self.kets.iter().position(|k| k == ket)
    }

    /// Largest pair energy difference, the fastest phase in the equations.
    pub fn largest_gap(&self) -> f64 {
        self.energies.last().copied().unwrap_or(0.0) - self.energies.first().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoBosonState {
    pub amplitudes: Vec<Complex64>,
    pub time: f64,
}

impl TwoBosonState {
    /// All weight on the first ket (the ground pair).
    pub fn ground(dim: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Self { amplitudes, time: 0.0 }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|b| b.norm_sqr()).sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|b| b.norm_sqr()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    pub gamma: f64,
    pub omega_ext: f64,
}

impl DriveSpec {
    pub fn new(gamma: f64, omega_ext: f64) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::Parameter(format!("drive strength must be non-negative, got {gamma}")));
        }
        Ok(Self { gamma, omega_ext })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CouplingScope {
    /// Ground row and column only, from the ground-pair table.
    GroundStar,
    /// Every pair of kets, from the general element.
    AllPairs,
}

/// Sparse real symmetric `V_AB` between symmetrized pair states.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    dim: usize,
    entries: Vec<(usize, usize, f64)>,
}

/// `⟨A|V|B⟩ = sqrt(n_A n_B) W_{A;B}` with `n` the number of orderings.
fn symmetrized(a: &PairKet, b: &PairKet, w: f64) -> f64 {
    (a.orderings() * b.orderings()).sqrt() * w
}

impl CouplingMatrix {
    pub fn ground_star(two: &TwoBosonBasis, table: &MatrixElementTable) -> Result<Self> {
        let g = PairKet::GROUND;
        let mut entries = Vec::new();
        for (i, ket) in two.kets.iter().enumerate() {
            let w = table
                .element((g.a, g.b), (ket.a, ket.b))
                .ok_or_else(|| Error::Truncation(format!("no tabulated element for {ket}")))?;
            if w == 0.0 {
                continue;
            }
            let v = symmetrized(&g, ket, w);
            entries.push((0, i, v));
            if i != 0 {
                entries.push((i, 0, v));
            }
        }
        Ok(Self { dim: two.len(), entries })
    }

    pub fn all_pairs(two: &TwoBosonBasis, basis: &RadialBasis) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, a) in two.kets.iter().enumerate() {
            for (j, b) in two.kets.iter().enumerate().skip(i) {
                let w = w_general((a.a, a.b), (b.a, b.b), basis)?;
                if w == 0.0 {
                    continue;
                }
                let v = symmetrized(a, b, w);
                entries.push((i, j, v));
                if i != j {
                    entries.push((j, i, v));
                }
            }
        }
        Ok(Self { dim: two.len(), entries })
    }

    pub fn build(
        scope: CouplingScope,
        two: &TwoBosonBasis,
        basis: &RadialBasis,
        table: &MatrixElementTable,
    ) -> Result<Self> {
        match scope {
            CouplingScope::GroundStar => Self::ground_star(two, table),
            CouplingScope::AllPairs => Self::all_pairs(two, basis),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn element(&self, i: usize, j: usize) -> f64 {
        self.entries.iter().filter(|e| e.0 == i && e.1 == j).map(|e| e.2).sum()
    }

    pub fn is_symmetric(&self) -> bool {
        self.entries.iter().all(|&(i, j, v)| self.element(j, i) == v)
    }

    /// Multiplies the stored `(i, j)` element by `factor`, leaving `(j, i)`.
    pub fn inject_asymmetry(&mut self, i: usize, j: usize, factor: f64) {
        for e in self.entries.iter_mut().filter(|e| e.0 == i && e.1 == j) {
            e.2 *= factor;
        }
    }
}

struct Driven<'a> {
    two: &'a TwoBosonBasis,
    coupling: &'a CouplingMatrix,
    drive: DriveSpec,
    scratch: RefCell<Scratch>,
}

#[derive(Default)]
struct Scratch {
    single: Vec<Complex64>,
    phase: Vec<Complex64>,
    rotated: Vec<Complex64>,
    acc: Vec<Complex64>,
}

impl<'a> Driven<'a> {
    fn new(two: &'a TwoBosonBasis, coupling: &'a CouplingMatrix, drive: DriveSpec) -> Self {
        let n = two.len();
        let zero = Complex64::new(0.0, 0.0);
        Self {
            two,
            coupling,
            drive,
            scratch: RefCell::new(Scratch {
                single: vec![zero; two.orbitals.len()],
                phase: vec![zero; n],
                rotated: vec![zero; n],
                acc: vec![zero; n],
            }),
        }
    }
}

impl OdeSystem for Driven<'_> {
    fn dim(&self) -> usize {
        2 * self.two.len()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let drive = self.drive.gamma * (self.drive.omega_ext * t).sin();
        if drive == 0.0 {
            dy.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let mut guard = self.scratch.borrow_mut();
        let Scratch { single, phase, rotated, acc } = &mut *guard;
        // e^{i E_A t} factorizes over the two occupied orbitals.
        for (z, (_, _, e)) in single.iter_mut().zip(&self.two.orbitals) {
            let (s, c) = (e * t).sin_cos();
            *z = Complex64::new(c, s);
        }
        for (a, (p, (i, j))) in phase.iter_mut().zip(&self.two.members).enumerate() {
            *p = single[*i] * single[*j];
            rotated[a] = p.conj() * Complex64::new(y[2 * a], y[2 * a + 1]);
        }
        acc.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for &(i, j, v) in &self.coupling.entries {
            acc[i] += v * rotated[j];
        }
        for (a, (p, s)) in phase.iter().zip(acc.iter()).enumerate() {
            // -i * drive * p_a * acc_a
            let z = p * s * drive;
            dy[2 * a] = z.im;
            dy[2 * a + 1] = -z.re;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub kets: Vec<PairKet>,
    pub times: Vec<f64>,
    pub amplitudes: Vec<Vec<Complex64>>,
    /// Largest `|Σ|b|² - 1|` over the samples.
    pub max_norm_error: f64,
}

impl Trajectory {
    pub fn population(&self, sample: usize, ket: usize) -> f64 {
        self.amplitudes[sample][ket].norm_sqr()
    }

    /// CSV rows `t,pair_id,re,im,abs2`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,pair_id,re,im,abs2\n");
        for (t, amps) in self.times.iter().zip(&self.amplitudes) {
            for (ket, b) in self.kets.iter().zip(amps) {
                writeln!(out, "{t},{ket},{},{},{}", b.re, b.im, b.norm_sqr()).unwrap();
            }
        }
        out
    }
}

/// Integrates the coupled amplitudes and records them at `times`.
pub fn evolve_full(
    two: &TwoBosonBasis,
    coupling: &CouplingMatrix,
    drive: DriveSpec,
    initial: &TwoBosonState,
    times: &[f64],
    tol: f64,
) -> Result<Trajectory> {
    let mut traj = Trajectory {
        kets: two.kets.clone(),
        times: Vec::with_capacity(times.len()),
        amplitudes: Vec::with_capacity(times.len()),
        max_norm_error: 0.0,
    };
    evolve_with(two, coupling, drive, initial, times, tol, |t, amps| {
        traj.times.push(t);
        traj.amplitudes.push(amps.to_vec());
    })
    .map(|e| {
        traj.max_norm_error = e;
        traj
    })
}

/// As [`evolve_full`] but hands each sample to `observe`; returns the
/// largest norm error seen.
pub fn evolve_with(
    two: &TwoBosonBasis,
    coupling: &CouplingMatrix,
    drive: DriveSpec,
    initial: &TwoBosonState,
    times: &[f64],
    tol: f64,
    mut observe: impl FnMut(f64, &[Complex64]),
) -> Result<f64> {
    if coupling.dim != two.len() || initial.amplitudes.len() != two.len() {
        return Err(Error::Parameter("basis, coupling and state dimensions differ".into()));
    }
    let sys = Driven::new(two, coupling, drive);
    let mut y: Vec<f64> = initial.amplitudes.iter().flat_map(|b| [b.re, b.im]).collect();
    let mut solver = Dopri5::new(y.len(), tol, tol * 1e-3);
    let fastest = two.largest_gap() + drive.omega_ext.abs();
    if fastest > 0.0 {
        // Keeps the first steps from skipping whole phase periods.
        solver.h_max = 1.0 / fastest;
    }
    let mut worst = 0.0f64;
    let mut amps = vec![Complex64::new(0.0, 0.0); two.len()];
    let h0 = solver.h_max.min(0.01);
    let t0 = initial.time;
    solver
        .integrate(&sys, t0, &mut y, times, h0, |t, y| {
            for (i, a) in amps.iter_mut().enumerate() {
                *a = Complex64::new(y[2 * i], y[2 * i + 1]);
            }
            let norm: f64 = amps.iter().map(|b| b.norm_sqr()).sum();
            worst = worst.max((norm - 1.0).abs());
            observe(t, &amps);
        })
        .inspect(|_| log_stats(&solver))
        .map_err(|e| match e {
            Error::Stiffness { t, .. } => Error::Stiffness { t, largest_gap: two.largest_gap() },
            other => other,
        })?;
    Ok(worst)
}

fn log_stats(s: &Dopri5) {
    if std::env::var_os("LF_ODE_STATS").is_some() {
        eprintln!("ode: {:?}", s.stats);
    }
}

/// Two-level resonant solution `b_0 = cos Ωt`, `b_f = sin Ωt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RabiSolution {
    pub omega: f64,
}

impl RabiSolution {
    /// `Ω = γ W / 2` for the symmetrized element `W`.
    pub fn new(drive: DriveSpec, w: f64) -> Self {
        Self { omega: 0.5 * drive.gamma * w.abs() }
    }

    pub fn b_ground(&self, t: f64) -> f64 {
        (self.omega * t).cos()
    }

    pub fn b_factor(&self, t: f64) -> f64 {
        (self.omega * t).sin()
    }

    pub fn factor_population(&self, t: f64) -> f64 {
        self.b_factor(t).powi(2)
    }
}

/// `(cos Ωt, sin Ωt)`.
pub fn rwa_solution(drive: DriveSpec, w: f64, t: f64) -> (f64, f64) {
    let s = RabiSolution::new(drive, w);
    (s.b_ground(t), s.b_factor(t))
}

/// Time-dependent pair populations from which a measurement collapses.
pub trait PopulationSource {
    fn kets(&self) -> &[PairKet];
    fn populations_at(&self, t: f64, out: &mut Vec<f64>);
}

/// The ground pair and resonant pairs sharing `sin² Ωt` by weight.
#[derive(Debug, Clone, PartialEq)]
pub struct RwaModel {
    pub rabi: RabiSolution,
    kets: Vec<PairKet>,
    shares: Vec<f64>,
}

impl RwaModel {
    /// `resonant` lists `(ket, symmetrized element)`; the collective
    /// frequency uses the root-sum-square element.
    pub fn new(drive: DriveSpec, resonant: &[(PairKet, f64)]) -> Self {
        let total = resonant.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        let mut kets = vec![PairKet::GROUND];
        kets.extend(resonant.iter().map(|(k, _)| *k));
        let shares = resonant.iter().map(|(_, w)| (w / total).powi(2)).collect();
        Self { rabi: RabiSolution::new(drive, total), kets, shares }
    }
}

impl PopulationSource for RwaModel {
    fn kets(&self) -> &[PairKet] {
        &self.kets
    }

    fn populations_at(&self, t: f64, out: &mut Vec<f64>) {
        out.clear();
        let s2 = self.rabi.factor_population(t);
        out.push(1.0 - s2);
        out.extend(self.shares.iter().map(|w| w * s2));
    }
}

/// Populations tabulated on a uniform time grid, linearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationTable {
    kets: Vec<PairKet>,
    t_end: f64,
    samples: usize,
    /// Row-major, one row per sample.
    values: Vec<f64>,
    pub max_norm_error: f64,
}

impl PopulationTable {
    /// Integrates from the ground pair over `[0, t_end]`, keeping `samples`
    /// equally spaced population snapshots.
    pub fn integrate(
        two: &TwoBosonBasis,
        coupling: &CouplingMatrix,
        drive: DriveSpec,
        t_end: f64,
        samples: usize,
        tol: f64,
    ) -> Result<Self> {
        if samples < 2 || !(t_end > 0.0) {
            return Err(Error::Parameter("need a positive window and at least two samples".into()));
        }
        let times: Vec<f64> = (0..samples).map(|i| t_end * i as f64 / (samples - 1) as f64).collect();
        let mut values = Vec::with_capacity(samples * two.len());
        let worst = evolve_with(two, coupling, drive, &TwoBosonState::ground(two.len()), &times, tol, |_, amps| {
            values.extend(amps.iter().map(|b| b.norm_sqr()));
        })?;
        Ok(Self { kets: two.kets.clone(), t_end, samples, values, max_norm_error: worst })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }
}

impl PopulationSource for PopulationTable {
    fn kets(&self) -> &[PairKet] {
        &self.kets
    }

    fn populations_at(&self, t: f64, out: &mut Vec<f64>) {
        let n = self.kets.len();
        let x = (t / self.t_end).clamp(0.0, 1.0) * (self.samples - 1) as f64;
        let i = (x.floor() as usize).min(self.samples - 2);
        let f = x - i as f64;
        out.clear();
        let (lo, hi) = (&self.values[i * n..(i + 1) * n], &self.values[(i + 1) * n..(i + 2) * n]);
        out.extend(lo.iter().zip(hi).map(|(a, b)| a + f * (b - a)));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub t: f64,
    pub ket: PairKet,
    /// Index of the collapsed ket in the source.
    pub index: usize,
}

/// Collapses at time `t` using the uniform variate `u` in `[0, 1)`.
pub fn measure_at(src: &dyn PopulationSource, t: f64, u: f64) -> Measurement {
    let mut pops = Vec::new();
    src.populations_at(t, &mut pops);
    let total: f64 = pops.iter().sum();
    let mut acc = 0.0;
    let mut index = pops.len() - 1;
    for (i, p) in pops.iter().enumerate() {
        acc += p / total;
        if u < acc {
            index = i;
            break;
        }
    }
    Measurement { t, ket: src.kets()[index], index }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledMeasurement {
    pub measurement: Measurement,
    /// Single-particle energies of the two bosons in the 3D gauge.
    pub energies: (f64, f64),
    pub window_short: bool,
}

/// Draws `t ~ U[0, window]`, collapses, and reports both particle energies.
pub fn sample_measurement<R: Rng + ?Sized>(
    src: &dyn PopulationSource,
    basis: &RadialBasis,
    window: f64,
    omega: f64,
    rng: &mut R,
) -> Result<SampledMeasurement> {
    let t = window * rng.random::<f64>();
    let u = rng.random::<f64>();
    let measurement = measure_at(src, t, u);
    let energy = |q: &QuantumTriple| {
        basis
            .energy(q.k, q.ell)
            .ok_or_else(|| Error::Truncation(format!("orbital (k={}, l={}) has no energy", q.k, q.ell)))
    };
    Ok(SampledMeasurement {
        energies: (energy(&measurement.ket.a)?, energy(&measurement.ket.b)?),
        measurement,
        window_short: omega * window < MIN_OMEGA_T,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub trials: usize,
    pub seed: u64,
    pub window: f64,
    pub omega_t: f64,
    pub window_short: bool,
    /// `(pair id, count)` in source order.
    pub counts: Vec<(String, usize)>,
}

impl EnsembleSummary {
    pub fn frequency(&self, ket: &PairKet) -> f64 {
        let id = ket.to_string();
        let hits = self.counts.iter().find(|(k, _)| *k == id).map_or(0, |c| c.1);
        hits as f64 / self.trials as f64
    }
}

/// Repeated independent measurements from one seeded generator.
pub fn measurement_ensemble(
    src: &dyn PopulationSource,
    window: f64,
    omega: f64,
    trials: usize,
    seed: u64,
) -> EnsembleSummary {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; src.kets().len()];
    for _ in 0..trials {
        let t = window * rng.random::<f64>();
        let u = rng.random::<f64>();
        counts[measure_at(src, t, u).index] += 1;
    }
    EnsembleSummary {
        trials,
        seed,
        window,
        omega_t: omega * window,
        window_short: omega * window < MIN_OMEGA_T,
        counts: src.kets().iter().map(|k| k.to_string()).zip(counts).collect(),
    }
}
