//! Factorization by resonant driving: prepare, drive at `ln(N/K²)`,
//! measure one particle, decode.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    build_basis, sample_measurement, CouplingMatrix, CouplingScope, DriveSpec, PairKet, PopulationSource,
    PopulationTable, RwaModel, TwoBosonBasis, MIN_OMEGA_T,
};
use crate::error::{Error, Result};
use crate::interaction::{w_ground_to, MatrixElementTable};
use crate::inverse_spectral::{default_grid, invert_spectrum, InversionConfig};
use crate::radial::{lift_to_3d, RadialBasis};
use crate::spectrum::{factor_from_energy, is_prime, predivide, SpectrumTarget};

pub const DEFAULT_ATTEMPT_CAP: u32 = 64;
/// Default `Ω T`.
pub const DEFAULT_OMEGA_T: f64 = 40.0;
/// Default `Ω T` for full integration, whose cost grows with `T`.
pub const DEFAULT_OMEGA_T_FULL: f64 = 24.0;
/// Default `Ω` as a fraction of the resonance margin.
pub const DEFAULT_RABI_FRACTION: f64 = 0.01;
/// Coarser default for full integration, where cost scales as `1/Ω`.
pub const DEFAULT_RABI_FRACTION_FULL: f64 = 0.02;
pub const DEFAULT_ELL_MAX: u32 = 2;
pub const FULL_TOLERANCE: f64 = 1e-9;
/// Population snapshots kept from a full trajectory.
pub const TRAJECTORY_SAMPLES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Rwa,
    Full,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Rwa => "rwa",
            Mode::Full => "full",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rwa" => Ok(Mode::Rwa),
            "full" => Ok(Mode::Full),
            other => Err(Error::Parameter(format!("unknown mode {other:?}, expected rwa or full"))),
        }
    }
}

/// Smallest relative gap `ln(1 + 1/N)` between the drive and the nearest
/// integer product.
pub fn resonance_margin(n: u64, _k: u32) -> f64 {
    let n = n as f64;
    (1.0 / n).ln_1p().min(-(-1.0 / n).ln_1p())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    #[serde(rename = "N")]
    pub n: u64,
    pub n_raw: u64,
    pub predivided: Vec<u64>,
    #[serde(rename = "L")]
    pub l: u32,
    #[serde(rename = "K")]
    pub k: u32,
    pub omega_ext: f64,
    /// Derived from a target `Ω` when absent.
    pub gamma: Option<f64>,
    /// `DEFAULT_OMEGA_T / Ω` when absent.
    pub t_window: Option<f64>,
    pub seed: u64,
    pub mode: Mode,
    pub attempt_cap: u32,
    /// Pair-energy cutoff for the full basis; defaults to the resonant
    /// energy plus three single-particle gaps at the larger factor.
    pub e_cut: Option<f64>,
    pub ell_max: u32,
    pub scope: CouplingScope,
}

impl ProtocolConfig {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Preparation {
    Ready(ProtocolConfig),
    /// Nothing left to factor after trial division.
    NothingToDo {
        n_raw: u64,
        removed: Vec<u64>,
        remainder: u64,
        reason: String,
    },
}

/// Trial division by every factor up to `K`; the remainder is the number
/// actually driven.
pub fn prepare(n_raw: u64, l: u32) -> Result<Preparation> {
    let target = SpectrumTarget::new(l)?;
    if n_raw < 2 {
        return Err(Error::Parameter(format!("N must be at least 2, got {n_raw}")));
    }
    let k = target.k();
    let pre = predivide(n_raw, k);
    let nothing = |reason: &str| Preparation::NothingToDo {
        n_raw,
        removed: pre.removed.clone(),
        remainder: pre.remainder,
        reason: reason.into(),
    };
    if pre.remainder == 1 {
        return Ok(nothing("fully divided by factors up to K"));
    }
    if is_prime(pre.remainder) {
        return Ok(nothing("remainder is prime"));
    }
    let n = pre.remainder;
    Ok(Preparation::Ready(ProtocolConfig {
        n,
        n_raw,
        predivided: pre.removed,
        l,
        k,
        omega_ext: (n as f64 / (k as f64 * k as f64)).ln(),
        gamma: None,
        t_window: None,
        seed: 0,
        mode: Mode::Rwa,
        attempt_cap: DEFAULT_ATTEMPT_CAP,
        e_cut: None,
        ell_max: DEFAULT_ELL_MAX,
        scope: CouplingScope::GroundStar,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub l: u32,
    pub m_fit: usize,
    pub tol: f64,
    /// Solve `l ≥ 1` channels up to this single-particle energy (none if zero).
    pub channel_cut: f64,
    pub channel_ell_max: u32,
}

impl SystemConfig {
    pub fn new(l: u32, m_fit: usize) -> Self {
        Self { l, m_fit, tol: 1e-8, channel_cut: 0.0, channel_ell_max: DEFAULT_ELL_MAX }
    }
}

/// Largest fitted level count chosen by [`SystemConfig::sized_for`].
pub const MAX_AUTO_M_FIT: usize = 128;
/// Channel levels solved beyond the pair cutoff.
const CHANNEL_HEADROOM: f64 = 0.08;

impl SystemConfig {
    /// A system large enough for `config`.
    ///
    /// RWA: every split `N = a b` with `a, b > K` has an s-state pair, up to
    /// [`MAX_AUTO_M_FIT`]. Full: channels reach the pair cutoff above the
    /// resonant pairs predicted by the level law.
    pub fn sized_for(config: &ProtocolConfig) -> Self {
        let k = config.k as u64;
        let even = |m: u64| (m.max(16) as usize).next_multiple_of(2).min(MAX_AUTO_M_FIT);
        match config.mode {
            Mode::Rwa => {
                let top = (config.n / (k + 1)).saturating_sub(k);
                Self::new(config.l, even(2 * (top + 2)))
            }
            Mode::Full => {
                let e_cut = config.e_cut.unwrap_or_else(|| config.omega_ext + 3.0 * predicted_gap(config));
                let channel_cut = e_cut + CHANNEL_HEADROOM;
                let top = (k as f64 * channel_cut.exp_m1()).ceil() as u64;
                Self { channel_cut, channel_ell_max: config.ell_max, ..Self::new(config.l, even(2 * (top + 2))) }
            }
        }
    }
}

/// Level spacing above the highest resonant s-state, from the level law.
fn predicted_gap(config: &ProtocolConfig) -> f64 {
    let k = config.k as f64;
    let margin = resonance_margin(config.n, config.k);
    let limit = config.n / (config.k as u64 + 1);
    let mut top = 0;
    for j1 in 0..=limit {
        let e1 = (j1 as f64 / k).ln_1p();
        if 2.0 * e1 > config.omega_ext + margin {
            break;
        }
        let e2 = config.omega_ext - e1;
        let j2 = (k * e2.exp_m1()).round().max(j1 as f64) as u64;
        if ((j2 as f64 / k).ln_1p() - e2).abs() < 0.5 * margin {
            top = top.max(j2);
        }
    }
    (((top + 1) as f64 + k) / (top as f64 + k)).ln()
}

/// Potential and single-particle basis for one `L`, shared by experiments.
#[derive(Debug, Clone)]
pub struct System {
    basis: RadialBasis,
}

impl System {
    pub fn build(cfg: &SystemConfig) -> Result<Self> {
        let inv_cfg = InversionConfig { m_fit: cfg.m_fit, tol: cfg.tol, ..InversionConfig::new(cfg.l) };
        let inv = invert_spectrum(&inv_cfg, default_grid(cfg.l, cfg.m_fit)?)?;
        let mut basis = lift_to_3d(&inv)?;
        if cfg.channel_cut > 0.0 {
            basis.populate_channels_upto(cfg.channel_cut + basis.s_energies()[0], cfg.channel_ell_max)?;
        }
        Ok(Self { basis })
    }

    pub fn from_basis(basis: RadialBasis) -> Self {
        Self { basis }
    }

    pub fn basis(&self) -> &RadialBasis {
        &self.basis
    }

    pub fn l(&self) -> u32 {
        self.basis.l()
    }

    pub fn k(&self) -> u32 {
        self.basis.k()
    }
}

struct FullModel {
    two: TwoBosonBasis,
    coupling: CouplingMatrix,
    table: OnceLock<PopulationTable>,
}

/// A configured drive for one `N`: resonant pairs, `Ω`, window, and for
/// full mode the truncated pair basis. Trajectories are cached, so repeated
/// runs differ only in their measurement draws.
pub struct Experiment<'a> {
    system: &'a System,
    config: ProtocolConfig,
    resonant: Vec<(PairKet, f64)>,
    rwa: RwaModel,
    drive: DriveSpec,
    window: f64,
    margin: f64,
    nearest_detuning: f64,
    basis_complete: bool,
    full: Option<FullModel>,
}

impl<'a> Experiment<'a> {
    pub fn new(system: &'a System, config: &ProtocolConfig) -> Result<Self> {
        let basis = system.basis();
        if config.l != system.l() {
            return Err(Error::Parameter(format!("system built for L={}, config has L={}", system.l(), config.l)));
        }
        let k = system.k();
        let e = basis.s_energies();
        let e0 = e[0];
        let margin = resonance_margin(config.n, k);
        let mut resonant = Vec::new();
        let mut nearest_detuning = f64::INFINITY;
        for j1 in 0..e.len() {
            for j2 in j1..e.len() {
                let detuning = (e[j1] + e[j2] - 2.0 * e0 - config.omega_ext).abs();
                if detuning < 0.5 * margin {
                    let ket = PairKet::s(j1, j2);
                    let w = w_ground_to(j1, j2, 0, basis)?;
                    resonant.push((ket, (PairKet::GROUND.orderings() * ket.orderings()).sqrt() * w));
                } else {
                    nearest_detuning = nearest_detuning.min(detuning);
                }
            }
        }
        if resonant.is_empty() {
            return Err(Error::Truncation(format!(
                "no pair in the {}-state basis is resonant with {}",
                e.len(),
                config.omega_ext
            )));
        }
        // Every split N = a b with a > K has its larger index below N/(K+1) - K.
        let basis_complete = (e.len() as u64 + k as u64) > config.n / (k as u64 + 1);
        let w_total = resonant.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        let gamma = match config.gamma {
            Some(g) => g,
            None => {
                let fraction = match config.mode {
                    Mode::Rwa => DEFAULT_RABI_FRACTION,
                    Mode::Full => DEFAULT_RABI_FRACTION_FULL,
                };
                2.0 * fraction * margin / w_total
            }
        };
        let drive = DriveSpec::new(gamma, config.omega_ext)?;
        let rwa = RwaModel::new(drive, &resonant);
        let omega = rwa.rabi.omega;
        if !(omega > 0.0) {
            return Err(Error::Parameter("drive produces no Rabi oscillation".into()));
        }
        let omega_t = match config.mode {
            Mode::Rwa => DEFAULT_OMEGA_T,
            Mode::Full => DEFAULT_OMEGA_T_FULL,
        };
        let window = config.t_window.unwrap_or(omega_t / omega);
        if !(window > 0.0) {
            return Err(Error::Parameter(format!("window must be positive, got {window}")));
        }
        let full = match config.mode {
            Mode::Rwa => None,
            Mode::Full => {
                let top = resonant.iter().map(|(p, _)| p.b.k).max().unwrap();
                let gap = (((top + 1) as f64 + k as f64) / (top as f64 + k as f64)).ln();
                let e_cut = config.e_cut.unwrap_or(config.omega_ext + 3.0 * gap);
                let two = build_basis(basis, e_cut, config.ell_max)?;
                for (ket, _) in &resonant {
                    if two.index_of(ket).is_none() {
                        return Err(Error::Truncation(format!("factor pair {ket} lies above the cutoff {e_cut}")));
                    }
                }
                let k_count = two.kets().iter().map(|p| p.b.k.max(p.a.k)).max().unwrap_or(0) + 1;
                let table = MatrixElementTable::build(
                    basis,
                    config.ell_max,
                    k_count.min(min_channel_len(basis, config.ell_max)),
                )?;
                let coupling = CouplingMatrix::build(config.scope, &two, basis, &table)?;
                Some(FullModel { two, coupling, table: OnceLock::new() })
            }
        };
        Ok(Self {
            system,
            config: config.clone(),
            resonant,
            rwa,
            drive,
            window,
            margin,
            nearest_detuning,
            basis_complete,
            full,
        })
    }

    pub fn omega(&self) -> f64 {
        self.rwa.rabi.omega
    }

    pub fn gamma(&self) -> f64 {
        self.drive.gamma
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn resonant(&self) -> &[(PairKet, f64)] {
        &self.resonant
    }

    pub fn rwa_model(&self) -> &RwaModel {
        &self.rwa
    }

    pub fn pair_basis(&self) -> Option<&TwoBosonBasis> {
        self.full.as_ref().map(|f| &f.two)
    }

    /// The population source measurements collapse from; integrates the
    /// full trajectory on first use.
    pub fn source(&self) -> Result<&dyn PopulationSource> {
        match &self.full {
            None => Ok(&self.rwa),
            Some(f) => {
                if f.table.get().is_none() {
                    let table = PopulationTable::integrate(
                        &f.two,
                        &f.coupling,
                        self.drive,
                        self.window,
                        TRAJECTORY_SAMPLES,
                        FULL_TOLERANCE,
                    )?;
                    let _ = f.table.set(table);
                }
                Ok(f.table.get().unwrap())
            }
        }
    }

    /// Measures until a non-ground outcome, then decodes one particle.
    pub fn run(&self, seed: u64) -> Result<ProtocolResult> {
        let src = self.source()?;
        let basis = self.system.basis();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = &self.config;
        let mut result = ProtocolResult {
            n: cfg.n,
            n_raw: cfg.n_raw,
            predivided: cfg.predivided.clone(),
            l: cfg.l,
            k: cfg.k,
            factors: None,
            attempts: 0,
            omega: self.omega(),
            gamma: self.gamma(),
            t_window: self.window,
            omega_t: self.omega() * self.window,
            window_short: self.omega() * self.window < MIN_OMEGA_T,
            margin: self.margin,
            nearest_detuning: self.nearest_detuning,
            basis_complete: self.basis_complete,
            measured_energy: None,
            seed,
            mode: cfg.mode,
            failure: None,
        };
        for attempt in 1..=cfg.attempt_cap {
            result.attempts = attempt;
            let m = sample_measurement(src, basis, self.window, self.omega(), &mut rng)?;
            if m.measurement.ket == PairKet::GROUND {
                continue;
            }
            let e = if rng.random_bool(0.5) { m.energies.0 } else { m.energies.1 };
            result.measured_energy = Some(e);
            let (a, b) = factor_from_energy(e, cfg.k, cfg.n, None)?;
            result.factors = Some((a.max(b), a.min(b)));
            return Ok(result);
        }
        result.failure = Some(format!("no factor outcome within {} attempts", cfg.attempt_cap));
        Ok(result)
    }
}

fn min_channel_len(basis: &RadialBasis, ell_max: u32) -> usize {
    (0..=ell_max).map(|l| basis.channel(l).map_or(0, |c| c.functions.len())).min().unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResult {
    #[serde(rename = "N")]
    pub n: u64,
    pub n_raw: u64,
    pub predivided: Vec<u64>,
    #[serde(rename = "L")]
    pub l: u32,
    #[serde(rename = "K")]
    pub k: u32,
    /// `(p, q)` with `p >= q`.
    pub factors: Option<(u64, u64)>,
    pub attempts: u32,
    #[serde(rename = "Omega")]
    pub omega: f64,
    pub gamma: f64,
    pub t_window: f64,
    pub omega_t: f64,
    pub window_short: bool,
    pub margin: f64,
    /// Distance from the drive to the nearest non-resonant pair energy.
    pub nearest_detuning: f64,
    /// Whether the s basis reaches every split of `N` into two factors above `K`.
    pub basis_complete: bool,
    pub measured_energy: Option<f64>,
    pub seed: u64,
    pub mode: Mode,
    pub failure: Option<String>,
}

impl ProtocolResult {
    pub fn succeeded(&self) -> bool {
        self.factors.is_some()
    }
}

/// One protocol run: builds the experiment for `config` and runs it with
/// `config.seed`.
pub fn run(config: &ProtocolConfig, system: &System) -> Result<ProtocolResult> {
    Experiment::new(system, config)?.run(config.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::level_3d;

    fn system() -> &'static System {
        static S: OnceLock<System> = OnceLock::new();
        S.get_or_init(|| System::build(&SystemConfig::new(3, 24)).unwrap())
    }

    fn ready(n: u64, l: u32) -> ProtocolConfig {
        match prepare(n, l).unwrap() {
            Preparation::Ready(c) => c,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn preparation_examples() {
        let c = ready(60, 3);
        assert_eq!((c.n, c.predivided.as_slice()), (15, &[2u64, 2][..]));
        assert_eq!(ready(15, 3).n, 15);
        assert!(matches!(prepare(16, 3).unwrap(), Preparation::NothingToDo { remainder: 1, .. }));
        assert!(matches!(prepare(13, 3).unwrap(), Preparation::NothingToDo { remainder: 13, .. }));
        assert!(matches!(prepare(15, 4), Err(Error::Parameter(_))));
        assert!(prepare(1, 3).is_err());
    }

    #[test]
    fn drive_frequency_is_the_factor_pair_energy() {
        for (p, q) in [(5u64, 3u64), (7, 5), (11, 7), (13, 11), (3, 3)] {
            let c = ready(p * q, 3);
            let expected = level_3d((p - 2) as u32, 2).unwrap() + level_3d((q - 2) as u32, 2).unwrap();
            assert!((c.omega_ext - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn margin_examples() {
        assert!((resonance_margin(15, 2) - (16.0f64 / 15.0).ln()).abs() < 1e-15);
        let m = resonance_margin(100, 2);
        assert!((m * 100.0 - 1.0).abs() < 0.01);
        let big = resonance_margin(1_000_000, 2) * 1e6;
        assert!((big - 1.0).abs() < 1e-5);
    }

    #[test]
    fn sizing_covers_the_factor_pairs() {
        let c = SystemConfig::sized_for(&ready(143, 3));
        assert_eq!((c.m_fit, c.channel_cut), (94, 0.0));
        assert_eq!(SystemConfig::sized_for(&ready(15, 3)).m_fit, 16);
        // 35 = 5 * 7 resonates with s(3, 5); the cutoff sits three spacings above.
        let full = ready(35, 3).with_mode(Mode::Full);
        let c = SystemConfig::sized_for(&full);
        let e_cut = full.omega_ext + 3.0 * (8.0f64 / 7.0).ln();
        assert!((c.channel_cut - e_cut - CHANNEL_HEADROOM).abs() < 1e-12);
        assert!(c.m_fit / 2 > (2.0 * c.channel_cut.exp_m1()) as usize);
    }

    #[test]
    fn factors_fifteen() {
        let r = run(&ready(15, 3).with_seed(3), system()).unwrap();
        assert_eq!(r.factors, Some((5, 3)));
        assert!(r.omega_t >= 20.0 && !r.window_short);
        assert!(r.nearest_detuning > 0.5 * r.margin);
    }

    #[test]
    fn factors_nine_through_the_doubly_occupied_pair() {
        let exp = Experiment::new(system(), &ready(9, 3)).unwrap();
        assert_eq!(exp.resonant()[0].0, PairKet::s(1, 1));
        assert_eq!(exp.run(11).unwrap().factors, Some((3, 3)));
    }

    #[test]
    fn attempts_average_about_two() {
        let exp = Experiment::new(system(), &ready(15, 3)).unwrap();
        let n = 1000;
        let total: u32 = (0..n).map(|s| exp.run(s).unwrap().attempts).sum();
        let mean = total as f64 / n as f64;
        assert!((1.8..=2.2).contains(&mean), "{mean}");
    }

    #[test]
    fn runs_are_reproducible() {
        let exp = Experiment::new(system(), &ready(77, 3)).unwrap();
        assert_eq!(exp.run(5).unwrap(), exp.run(5).unwrap());
    }

    #[test]
    fn out_of_basis_number_is_a_truncation() {
        assert!(matches!(Experiment::new(system(), &ready(23 * 29, 3)), Err(Error::Truncation(_))));
    }

    #[test]
    fn result_json_uses_published_field_names() {
        let r = run(&ready(15, 3), system()).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in ["N", "L", "K", "factors", "attempts", "Omega", "margin", "seed", "mode"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["mode"], "rwa");
    }
}
