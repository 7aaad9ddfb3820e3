//! Command-line surface: each subcommand writes its files plus a digest
//! manifest into the output directory.
//!
//! Flags may also come from a JSON file (`--config`) whose keys are the flag
//! names; flags given on the command line win.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::classical::{self, apsidal_angle, integrate_orbit, CentralPotential, OrbitConfig};
use crate::eigensolver1d::Grid;
use crate::error::{Error, Result};
use crate::inverse_spectral::{
    default_grid, invert_spectrum, potential_to_csv, InversionConfig, PotentialHeader, DEFAULT_SPACING,
};
use crate::io::RunWriter;
use crate::limits::{self, LimitInputs};
use crate::protocol::{self, prepare, Mode, Preparation, System, SystemConfig};
use crate::radial::audit_degeneracy;
use crate::spectrum::SpectrumTarget;

pub const OUT_DIR_ENV: &str = "LOGFACTOR_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "logfactor-out";

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;
pub const EXIT_PROTOCOL: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "logfactor", version, about = "Factoring with a logarithmic energy spectrum")]
pub struct Cli {
    /// JSON file supplying defaults for the subcommand's flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = DEFAULT_OUT_DIR)]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Construct the 1D potential with levels ln(k/L + 1).
    BuildPotential(PotentialArgs),
    /// Single-particle 3D spectrum and degeneracy audit.
    Spectrum(SpectrumArgs),
    /// Run the resonance protocol on N.
    Factor(FactorArgs),
    /// Classical orbit in the effective potential.
    Orbit(OrbitArgs),
    /// Decoherence bounds on the largest factorable N.
    Limits(LimitsArgs),
}

/// Fills every unset flag from the config file.
macro_rules! overlay {
    ($flags:ident, $file:ident; $($f:ident),+ $(,)?) => {
        $( if $flags.$f.is_none() { $flags.$f = $file.$f; } )+
    };
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct PotentialArgs {
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub l: Option<u32>,
    /// Number of fitted levels.
    #[arg(long)]
    pub m_fit: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Grid half-width.
    #[arg(long)]
    pub xmax: Option<f64>,
    #[arg(long)]
    pub spacing: Option<f64>,
}

impl PotentialArgs {
    fn layer(mut self, file: Self) -> Self {
        overlay!(self, file; l, m_fit, tol, max_iter, xmax, spacing);
        self
    }

    fn resolve(mut self) -> Self {
        let d = InversionConfig::new(self.l.unwrap_or(3));
        self.l = Some(d.l);
        self.m_fit.get_or_insert(d.m_fit);
        self.tol.get_or_insert(d.tol);
        self.max_iter.get_or_insert(d.max_iter);
        self.spacing.get_or_insert(DEFAULT_SPACING);
        self
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SpectrumArgs {
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub l: Option<u32>,
    #[arg(long)]
    pub m_fit: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Highest angular momentum solved.
    #[arg(long)]
    pub ell_max: Option<u32>,
    /// Energy above the ground level up to which levels are listed.
    #[arg(long)]
    pub cutoff: Option<f64>,
}

impl SpectrumArgs {
    fn layer(mut self, file: Self) -> Self {
        overlay!(self, file; l, m_fit, tol, ell_max, cutoff);
        self
    }

    fn resolve(mut self) -> Result<Self> {
        let l = *self.l.get_or_insert(3);
        let k = SpectrumTarget::new(l)?.k() as f64;
        let cutoff = *self.cutoff.get_or_insert(1.0);
        if !(cutoff > 0.0 && cutoff < 20.0) {
            return Err(Error::Parameter(format!("cutoff must lie in (0, 20), got {cutoff}")));
        }
        // Enough s-states to pass the cutoff.
        let top = (k * cutoff.exp_m1()).ceil() as usize + 2;
        self.m_fit.get_or_insert((2 * top).max(16));
        self.tol.get_or_insert(1e-8);
        Ok(self)
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FactorArgs {
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<u64>,
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub l: Option<u32>,
    /// Drive strength; derived from the resonance margin when absent.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Measurement window; derived from the Rabi frequency when absent.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t_window: Option<f64>,
    #[arg(long)]
    pub m_fit: Option<usize>,
    #[arg(long)]
    pub attempt_cap: Option<u32>,
    /// Two-boson energy cutoff for the full dynamics.
    #[arg(long)]
    pub e_cut: Option<f64>,
    #[arg(long)]
    pub ell_max: Option<u32>,
}

impl FactorArgs {
    fn layer(mut self, file: Self) -> Self {
        overlay!(self, file; n, l, gamma, mode, seed, t_window, m_fit, attempt_cap, e_cut, ell_max);
        self
    }

    fn resolve(mut self) -> Result<Self> {
        if self.n.is_none() {
            return Err(Error::Parameter("--N is required".into()));
        }
        self.l.get_or_insert(3);
        self.mode.get_or_insert(Mode::Rwa);
        self.seed.get_or_insert(0);
        self.attempt_cap.get_or_insert(protocol::DEFAULT_ATTEMPT_CAP);
        self.ell_max.get_or_insert(protocol::DEFAULT_ELL_MAX);
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrbitPotential {
    /// The constructed logarithmic-spectrum potential.
    Log,
    Harmonic,
    Kepler,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct OrbitArgs {
    /// Total energy in units of the potential scale.
    #[arg(long)]
    pub energy_frac: Option<f64>,
    /// Radial periods to integrate.
    #[arg(long)]
    pub periods: Option<usize>,
    #[arg(long, value_enum)]
    pub potential: Option<OrbitPotential>,
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub l: Option<u32>,
    #[arg(long)]
    pub m_fit: Option<usize>,
    /// Angular momentum.
    #[arg(long = "J")]
    #[serde(rename = "J")]
    pub j: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
}

impl OrbitArgs {
    fn layer(mut self, file: Self) -> Self {
        overlay!(self, file; energy_frac, periods, potential, l, m_fit, j, tol);
        self
    }

    fn resolve(mut self) -> Self {
        self.energy_frac.get_or_insert(classical::DEFAULT_ENERGY);
        self.periods.get_or_insert(5);
        self.potential.get_or_insert(OrbitPotential::Log);
        self.l.get_or_insert(3);
        self.m_fit.get_or_insert(16);
        self.j.get_or_insert(1.0);
        self.tol.get_or_insert(classical::DEFAULT_TOLERANCE);
        self
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct LimitsArgs {
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Decoherence time.
    #[arg(long = "T-dec")]
    #[serde(rename = "T-dec")]
    pub t_dec: Option<f64>,
    /// Points in a log-spaced drive-strength sweep around the optimum.
    #[arg(long)]
    pub sweep: Option<usize>,
    /// Rabi frequency to test against the window inequalities.
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<u64>,
    /// Factor standing in for "much greater than".
    #[arg(long)]
    pub margin: Option<f64>,
}

impl LimitsArgs {
    fn layer(mut self, file: Self) -> Self {
        overlay!(self, file; gamma, t_dec, sweep, omega, n, margin);
        self
    }

    fn resolve(mut self) -> Result<Self> {
        let t = *self.t_dec.get_or_insert(1e6);
        self.gamma.get_or_insert(limits::optimal_gamma(t, 1.0));
        self.margin.get_or_insert(limits::DEFAULT_MARGIN_FACTOR);
        if self.omega.is_some() != self.n.is_some() {
            return Err(Error::Parameter("--omega and --N go together".into()));
        }
        Ok(self)
    }
}

/// Failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parameter(_)
            | Error::DomainTruncation(_)
            | Error::ProtocolDomain(_)
            | Error::NoMotion { .. }
            | Error::Json(_) => EXIT_USAGE,
            Error::NotConverged { .. } => EXIT_NOT_CONVERGED,
            _ => EXIT_FAILURE,
        };
        Self { code, message: e.to_string() }
    }
}

fn protocol_failure(e: Error) -> Failure {
    match e {
        Error::Decode { .. } | Error::Inconsistent { .. } | Error::Truncation(_) | Error::Stiffness { .. } => {
            Failure { code: EXIT_PROTOCOL, message: e.to_string() }
        }
        other => other.into(),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code() as u8;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn file_layer<T: for<'de> Deserialize<'de> + Default>(config: &Option<PathBuf>) -> std::result::Result<T, Failure> {
    let Some(path) = config else { return Ok(T::default()) };
    let text = fs::read_to_string(path)
        .map_err(|e| Failure { code: EXIT_USAGE, message: format!("cannot read config {}: {e}", path.display()) })?;
    serde_json::from_str(&text)
        .map_err(|e| Failure { code: EXIT_USAGE, message: format!("bad config {}: {e}", path.display()) })
}

pub fn execute(cli: Cli) -> std::result::Result<u8, Failure> {
    let out = cli.out;
    match cli.command {
        Command::BuildPotential(a) => build_potential(a.layer(file_layer(&cli.config)?).resolve(), out),
        Command::Spectrum(a) => spectrum(a.layer(file_layer(&cli.config)?).resolve()?, out),
        Command::Factor(a) => factor(a.layer(file_layer(&cli.config)?).resolve()?, out),
        Command::Orbit(a) => orbit(a.layer(file_layer(&cli.config)?).resolve(), out),
        Command::Limits(a) => limits(a.layer(file_layer(&cli.config)?).resolve()?, out),
    }
}

fn snapshot<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("argument structs serialize")
}

/// Summary on stdout; a closed pipe is not an error.
fn print_json(value: &serde_json::Value) {
    let text = serde_json::to_string_pretty(value).expect("values serialize");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn build_potential(a: PotentialArgs, out: PathBuf) -> std::result::Result<u8, Failure> {
    let cfg = InversionConfig {
        m_fit: a.m_fit.unwrap(),
        tol: a.tol.unwrap(),
        max_iter: a.max_iter.unwrap(),
        ..InversionConfig::new(a.l.unwrap())
    };
    let target = cfg.validate()?;
    let spacing = a.spacing.unwrap();
    let grid = match a.xmax {
        Some(xmax) => Grid::with_spacing(xmax, spacing)?,
        None => {
            let d = default_grid(cfg.l, cfg.m_fit)?;
            Grid::with_spacing(d.xmax(), spacing)?
        }
    };
    let report = invert_spectrum(&cfg, grid)?;
    let header = PotentialHeader::of(&report);

    let mut levels = String::from("k,target,energy,error\n");
    for (k, err) in report.level_errors.iter().enumerate() {
        let target_k = target.level_1d(k as u32);
        writeln!(levels, "{k},{target_k},{},{err}", target_k + err).unwrap();
    }
    let summary = json!({
        "L": report.l,
        "m_fit": report.m_fit(),
        "tol": report.tol,
        "converged": report.converged,
        "iterations": report.iterations,
        "max_error": report.max_error(),
        "xmax": header.xmax,
        "n": header.n,
        "spacing": report.potential.grid().spacing(),
        "history": report.history,
    });
    let mut w = RunWriter::new(out, "build-potential", snapshot(&a), None);
    w.write("potential.csv", potential_to_csv(&header, &report.potential)?.as_bytes())?;
    w.write("levels.csv", levels.as_bytes())?;
    w.write_json("report.json", &summary)?;
    w.finish()?;
    print_json(&summary);
    if report.converged {
        Ok(EXIT_OK)
    } else {
        Err(Error::NotConverged { max_error: report.max_error(), tol: report.tol }.into())
    }
}

fn spectrum(a: SpectrumArgs, out: PathBuf) -> std::result::Result<u8, Failure> {
    let system =
        System::build(&SystemConfig { tol: a.tol.unwrap(), ..SystemConfig::new(a.l.unwrap(), a.m_fit.unwrap()) })?;
    let mut basis = system.basis().clone();
    let ground = basis.s_energies()[0];
    let cutoff = ground + a.cutoff.unwrap();
    let top = *basis.s_energies().last().unwrap();
    if top < cutoff {
        return Err(Error::DomainTruncation(format!(
            "the {} fitted s-levels end at {top}, below the cutoff; raise --m-fit",
            basis.s_count()
        ))
        .into());
    }
    if let Some(ell_max) = a.ell_max {
        if ell_max > 0 {
            basis.populate_channels_upto(cutoff, ell_max)?;
        }
    } else {
        basis.populate_channels(cutoff)?;
    }
    let audit = audit_degeneracy(&basis, cutoff);
    let mut csv = String::from("ell,k,energy,multiplicity\n");
    for lv in &audit.levels {
        writeln!(csv, "{},{},{},{}", lv.ell, lv.k, lv.energy - ground, lv.multiplicity).unwrap();
    }
    let mut w = RunWriter::new(out, "spectrum", snapshot(&a), None);
    w.write("spectrum.csv", csv.as_bytes())?;
    w.write_json("audit.json", &audit)?;
    w.finish()?;
    print_json(&json!({
        "levels": audit.levels.len(),
        "min_gap": audit.min_gap,
        "min_gap_pair": audit.min_gap_pair,
        "flagged": audit.flagged.len(),
    }));
    Ok(EXIT_OK)
}

fn factor(a: FactorArgs, out: PathBuf) -> std::result::Result<u8, Failure> {
    let n_raw = a.n.unwrap();
    let seed = a.seed.unwrap();
    let mut w = RunWriter::new(out, "factor", snapshot(&a), Some(seed));
    let mut config = match prepare(n_raw, a.l.unwrap())? {
        Preparation::Ready(c) => c,
        Preparation::NothingToDo { n_raw, removed, remainder, reason } => {
            let report = json!({
                "status": "nothing-to-do",
                "N_raw": n_raw,
                "predivided": removed,
                "remainder": remainder,
                "reason": reason,
            });
            w.write_json("result.json", &report)?;
            w.finish()?;
            print_json(&report);
            return Ok(EXIT_OK);
        }
    };
    config.mode = a.mode.unwrap();
    config.seed = seed;
    config.gamma = a.gamma;
    config.t_window = a.t_window;
    config.attempt_cap = a.attempt_cap.unwrap();
    config.e_cut = a.e_cut;
    config.ell_max = a.ell_max.unwrap();
    let mut sys_cfg = SystemConfig::sized_for(&config);
    if let Some(m) = a.m_fit {
        sys_cfg.m_fit = m;
    }
    let system = System::build(&sys_cfg)?;
    let result = protocol::run(&config, &system).map_err(protocol_failure)?;
    let value = serde_json::to_value(&result).map_err(Error::from)?;
    w.write_json("result.json", &value)?;
    w.finish()?;
    print_json(&value);
    if result.succeeded() {
        Ok(EXIT_OK)
    } else {
        Err(Failure { code: EXIT_PROTOCOL, message: result.failure.unwrap_or_else(|| "no factors found".into()) })
    }
}

fn orbit(a: OrbitArgs, out: PathBuf) -> std::result::Result<u8, Failure> {
    let potential = match a.potential.unwrap() {
        OrbitPotential::Harmonic => CentralPotential::Harmonic,
        OrbitPotential::Kepler => CentralPotential::Kepler,
        OrbitPotential::Log => {
            let cfg = InversionConfig { m_fit: a.m_fit.unwrap(), ..InversionConfig::new(a.l.unwrap()) };
            let report = invert_spectrum(&cfg, default_grid(cfg.l, cfg.m_fit)?)?;
            if !report.converged {
                return Err(Error::NotConverged { max_error: report.max_error(), tol: report.tol }.into());
            }
            CentralPotential::from_inversion(&report)?
        }
    };
    let cfg = OrbitConfig { energy: a.energy_frac.unwrap(), j: a.j.unwrap(), potential, tol: a.tol.unwrap() };
    let periods = a.periods.unwrap();
    let trace = integrate_orbit(&cfg, periods)?;
    let (inner, outer) = cfg.turning_radii()?;
    let apsidal = (periods > 0).then(|| apsidal_angle(&trace, classical::DEFAULT_CLOSURE_TOLERANCE)).transpose()?;
    let summary = json!({
        "energy": cfg.energy,
        "J": cfg.j,
        "turning_radii": [inner, outer],
        "periods": periods,
        "max_drift": trace.max_drift,
        "turning_points": trace.turning_points,
        "apsidal": apsidal,
        "cumulative_inner_angle": trace.cumulative_inner_angle(periods),
    });
    let mut csv = Vec::new();
    trace.write_csv(&mut csv)?;
    let mut w = RunWriter::new(out, "orbit", snapshot(&a), None);
    w.write("orbit.csv", &csv)?;
    w.write_json("orbit.json", &summary)?;
    w.finish()?;
    print_json(&json!({
        "apsidal": apsidal,
        "cumulative_inner_angle": trace.cumulative_inner_angle(periods),
        "max_drift": trace.max_drift,
    }));
    Ok(EXIT_OK)
}

fn limits(a: LimitsArgs, out: PathBuf) -> std::result::Result<u8, Failure> {
    let t = a.t_dec.unwrap();
    let inputs = LimitInputs::new(a.gamma.unwrap(), t)?;
    let best = limits::optimal_gamma(t, inputs.omega0);
    let window = match (a.omega, a.n) {
        (Some(omega), Some(n)) => Some(limits::rabi_window_check(omega, t, n, a.margin.unwrap())),
        _ => None,
    };
    let summary = json!({
        "gamma": inputs.gamma,
        "T_dec": t,
        "max_semiprime": limits::max_semiprime(&inputs),
        "optimal_gamma": best,
        "max_semiprime_at_optimum": limits::max_semiprime(&LimitInputs::new(best, t)?),
        "window": window,
    });
    let mut w = RunWriter::new(out, "limits", snapshot(&a), None);
    if let Some(count) = a.sweep {
        let mut csv = String::from("gamma,max_semiprime\n");
        for (g, n) in limits::gamma_sweep(t, best / 100.0, best * 100.0, count)? {
            writeln!(csv, "{g},{n}").unwrap();
        }
        w.write("sweep.csv", csv.as_bytes())?;
    }
    w.write_json("limits.json", &summary)?;
    w.finish()?;
    print_json(&summary);
    Ok(EXIT_OK)
}
