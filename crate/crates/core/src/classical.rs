//! Classical motion in the effective potential `J²/(2ρ²) + v(ρ)`.
//!
//! Units: μ = V0 = J = 1 unless the config overrides `j`. The orbit starts at
//! the inner turning point with Θ = 0.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inverse_spectral::InversionReport;
use crate::ode::{Dopri5, OdeSystem};
use crate::spline::CubicSpline;

pub const DEFAULT_ENERGY: f64 = 0.86;
pub const DEFAULT_TOLERANCE: f64 = 1e-13;
pub const DRIFT_LIMIT: f64 = 1e-8;
pub const DEFAULT_CLOSURE_TOLERANCE: f64 = 1e-4;
/// Largest denominator tried by the closure test.
pub const CLOSURE_DENOMINATOR: u32 = 8;
const STEP_CAP: usize = 20_000_000;

#[derive(Debug, Clone)]
pub enum CentralPotential {
    /// `ρ²/2`.
    Harmonic,
    /// `-1/ρ`.
    Kepler,
    /// Cubic interpolant of a tabulated even potential on `ρ >= 0`.
    Tabulated(CubicSpline),
}

impl CentralPotential {
    /// Reinterprets an inverted potential (ground level at zero) as `v(ρ)`.
    pub fn from_inversion(inv: &InversionReport) -> Result<Self> {
        let x = inv.potential.grid().half_points();
        let y = inv.potential.half_values().to_vec();
        Ok(Self::Tabulated(CubicSpline::new(x, y, Some(0.0))?))
    }

    pub fn eval(&self, rho: f64) -> (f64, f64) {
        match self {
            Self::Harmonic => (0.5 * rho * rho, rho),
            Self::Kepler => (-1.0 / rho, 1.0 / (rho * rho)),
            Self::Tabulated(s) => s.eval(rho),
        }
    }

    /// Radius beyond which the potential is not trusted.
    fn reach(&self) -> f64 {
        match self {
            Self::Tabulated(s) => s.domain().1,
            _ => 1e6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OrbitConfig {
    /// Total energy in units of V0.
    pub energy: f64,
    pub j: f64,
    pub potential: CentralPotential,
    pub tol: f64,
}

impl OrbitConfig {
    pub fn new(potential: CentralPotential) -> Self {
        Self { energy: DEFAULT_ENERGY, j: 1.0, potential, tol: DEFAULT_TOLERANCE }
    }

    pub fn with_energy(mut self, energy: f64) -> Self {
        self.energy = energy;
        self
    }

    fn effective(&self, rho: f64) -> f64 {
        0.5 * self.j * self.j / (rho * rho) + self.potential.eval(rho).0
    }

    /// Location and value of the effective-potential minimum.
    pub fn effective_minimum(&self) -> (f64, f64) {
        let reach = self.potential.reach();
        let (lo, hi) = (1e-3 * self.j.abs().max(1e-3), reach);
        let count = 4000;
        let ratio = (hi / lo).ln() / count as f64;
        let at = |i: usize| lo * (ratio * i as f64).exp();
        let best = (0..=count).min_by(|&a, &b| self.effective(at(a)).total_cmp(&self.effective(at(b)))).unwrap();
        let (mut a, mut b) = (at(best.saturating_sub(1)), at((best + 1).min(count)));
        let g = 0.5 * (5f64.sqrt() - 1.0);
        while b - a > 1e-12 * b {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if self.effective(c) < self.effective(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let rho = 0.5 * (a + b);
        (rho, self.effective(rho))
    }

    /// Inner and outer turning radii.
    pub fn turning_radii(&self) -> Result<(f64, f64)> {
        if !(self.j != 0.0 && self.j.is_finite() && self.tol > 0.0) {
            return Err(Error::Parameter("orbit needs nonzero J and a positive tolerance".into()));
        }
        let (rho0, vmin) = self.effective_minimum();
        if !(self.energy > vmin) {
            return Err(Error::NoMotion { energy: self.energy, minimum: vmin });
        }
        let reach = self.potential.reach();
        let excess = |rho: f64| self.effective(rho) - self.energy;
        let mut inner = rho0;
        while excess(inner) <= 0.0 {
            inner *= 0.5;
        }
        let mut outer = rho0;
        while excess(outer) <= 0.0 {
            outer = (outer * 1.25).min(reach);
            if outer == reach && excess(outer) <= 0.0 {
                return Err(Error::Parameter(format!(
                    "energy {} reaches the edge of the potential at rho = {reach}",
                    self.energy
                )));
            }
        }
        Ok((bisect(&excess, inner, rho0), bisect(&excess, rho0, outer)))
    }
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if (f(m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

struct Radial<'a>(&'a OrbitConfig);

impl OdeSystem for Radial<'_> {
    fn dim(&self) -> usize {
        3
    }

    /// State `(ρ, p_ρ, Θ)`.
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let j = self.0.j;
        let inv = 1.0 / y[0];
        dy[0] = y[1];
        dy[1] = j * j * inv * inv * inv - self.0.potential.eval(y[0]).1;
        dy[2] = j * inv * inv;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Apsis {
    Inner,
    Outer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitSample {
    pub t: f64,
    pub rho: f64,
    pub theta: f64,
}

impl OrbitSample {
    pub fn xy(&self) -> (f64, f64) {
        (self.rho * self.theta.cos(), self.rho * self.theta.sin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurningPoint {
    pub sample: OrbitSample,
    pub kind: Apsis,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OrbitTrace {
    pub samples: Vec<OrbitSample>,
    pub turning_points: Vec<TurningPoint>,
    pub energy: f64,
    pub max_drift: f64,
}

impl OrbitTrace {
    pub fn inner(&self) -> impl Iterator<Item = &OrbitSample> {
        self.turning_points.iter().filter(|p| p.kind == Apsis::Inner).map(|p| &p.sample)
    }

    /// Θ at the inner turning point closing radial period `periods`, reduced mod 2π.
    pub fn cumulative_inner_angle(&self, periods: usize) -> Option<f64> {
        self.inner().nth(periods).map(|s| s.theta.rem_euclid(2.0 * PI))
    }

    /// Columns `t,rho,theta,x,y`; an empty trace gives only the header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,rho,theta,x,y")?;
        for s in &self.samples {
            let (x, y) = s.xy();
            writeln!(out, "{},{},{},{},{}", s.t, s.rho, s.theta, x, y)?;
        }
        Ok(())
    }
}

/// Integrates `periods` radial periods (inner turning point to inner turning point).
pub fn integrate_orbit(cfg: &OrbitConfig, periods: usize) -> Result<OrbitTrace> {
    let (inner, _) = cfg.turning_radii()?;
    if periods == 0 {
        return Ok(OrbitTrace { energy: cfg.energy, ..OrbitTrace::default() });
    }
    let sys = Radial(cfg);
    let energy_of = |y: &[f64]| 0.5 * y[1] * y[1] + cfg.effective(y[0]);
    let mut y = [inner, 0.0, 0.0];
    let e0 = energy_of(&y);
    let scale = e0.abs().max(f64::MIN_POSITIVE);

    let (rho_min, _) = cfg.effective_minimum();
    let curvature = 3.0 * cfg.j * cfg.j / rho_min.powi(4) + {
        let d = 1e-4 * rho_min;
        (cfg.potential.eval(rho_min + d).1 - cfg.potential.eval(rho_min - d).1) / (2.0 * d)
    };
    let period_guess = 2.0 * PI / curvature.max(1e-12).sqrt();

    let mut ode = Dopri5::new(3, cfg.tol, cfg.tol);
    ode.h_max = period_guess / 20.0;
    let mut locator = ode.clone();
    let start = OrbitSample { t: 0.0, rho: inner, theta: 0.0 };
    let mut trace = OrbitTrace {
        samples: vec![start],
        turning_points: vec![TurningPoint { sample: start, kind: Apsis::Inner }],
        energy: e0,
        max_drift: 0.0,
    };
    let mut t = 0.0;
    let mut h = period_guess / 1000.0;
    let mut inner_found = 0;
    let mut steps = 0;
    while inner_found < periods {
        steps += 1;
        if steps > STEP_CAP {
            return Err(Error::InsufficientTurningPoints { need: periods + 1, found: inner_found + 1 });
        }
        let before = y;
        let outcome = ode.try_step(&sys, t, &mut y, h);
        if !outcome.accepted {
            h = outcome.h_next;
            continue;
        }
        let kind = if before[1] < 0.0 && y[1] >= 0.0 {
            Some(Apsis::Inner)
        } else if before[1] > 0.0 && y[1] <= 0.0 {
            Some(Apsis::Outer)
        } else {
            None
        };
        if let Some(kind) = kind {
            let (tau, state) = locate_turn(&mut locator, &sys, t, &before, h);
            let sample = OrbitSample { t: t + tau, rho: state[0], theta: state[2] };
            trace.samples.push(sample);
            trace.turning_points.push(TurningPoint { sample, kind });
            if kind == Apsis::Inner {
                inner_found += 1;
            }
        }
        t += h;
        let drift = (energy_of(&y) - e0).abs() / scale;
        trace.max_drift = trace.max_drift.max(drift);
        if drift > DRIFT_LIMIT {
            return Err(Error::IntegratorAccuracy { drift, limit: DRIFT_LIMIT });
        }
        if inner_found < periods {
            trace.samples.push(OrbitSample { t, rho: y[0], theta: y[2] });
        }
        h = outcome.h_next;
    }
    Ok(trace)
}

/// Re-steps from `y0` to find where `p_ρ` vanishes inside `(0, h]`.
fn locate_turn(ode: &mut Dopri5, sys: &Radial<'_>, t: f64, y0: &[f64; 3], h: f64) -> (f64, [f64; 3]) {
    let mut out = [0.0; 3];
    let mut probe = |tau: f64, ode: &mut Dopri5| {
        ode.fixed_step(sys, t, y0, tau, &mut out);
        out
    };
    let (mut a, mut fa) = (0.0, y0[1]);
    let mut b = h;
    let mut fb = probe(b, ode)[1];
    let mut best = (b, probe(b, ode));
    // Illinois regula falsi.
    let mut side = 0;
    for _ in 0..100 {
        if fa == fb {
            break;
        }
        let c = b - fb * (b - a) / (fb - fa);
        let state = probe(c, ode);
        let fc = state[1];
        best = (c, state);
        if fc == 0.0 || (b - a).abs() < 1e-15 * (t + h).max(1.0) {
            break;
        }
        if (fc > 0.0) == (fb > 0.0) {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApsidalAnalysis {
    /// Mean ΔΘ between consecutive inner turning points.
    pub delta_theta: f64,
    pub periods: usize,
    /// Closest `2π a/b` with `a, b <= 8`.
    pub nearest: (u32, u32),
    pub distance: f64,
    pub closed: bool,
}

pub fn apsidal_angle(trace: &OrbitTrace, closure_tol: f64) -> Result<ApsidalAnalysis> {
    let inner: Vec<&OrbitSample> = trace.inner().collect();
    if inner.len() < 2 {
        return Err(Error::InsufficientTurningPoints { need: 2, found: inner.len() });
    }
    let periods = inner.len() - 1;
    let delta_theta = (inner[periods].theta - inner[0].theta) / periods as f64;
    let mut nearest = (1, 1);
    let mut distance = f64::INFINITY;
    for b in 1..=CLOSURE_DENOMINATOR {
        for a in 1..=CLOSURE_DENOMINATOR {
            let d = (delta_theta - 2.0 * PI * a as f64 / b as f64).abs();
            if d < distance {
                distance = d;
                nearest = (a, b);
            }
        }
    }
    Ok(ApsidalAnalysis { delta_theta, periods, nearest, distance, closed: distance <= closure_tol })
}


#[cfg(test)]
mod log_spectrum {
    use super::*;
    use crate::inverse_spectral::{default_grid, invert_spectrum, InversionConfig};

    #[test]
    fn precesses_without_closing() {
        let cfg = InversionConfig::new(3);
        let inv = invert_spectrum(&cfg, default_grid(3, cfg.m_fit).unwrap()).unwrap();
        let orbit = OrbitConfig::new(CentralPotential::from_inversion(&inv).unwrap());
        let trace = integrate_orbit(&orbit, 50).unwrap();
        assert!(trace.max_drift < DRIFT_LIMIT);
        let a = apsidal_angle(&trace, DEFAULT_CLOSURE_TOLERANCE).unwrap();
        assert!(!a.closed);
        assert!((a.delta_theta - PI).abs() > 1e-2 && (a.delta_theta - 2.0 * PI).abs() > 1e-2);
        let five = trace.cumulative_inner_angle(5).unwrap();
        eprintln!("dtheta/pi={} five/pi={}", a.delta_theta / PI, five / PI);
        assert!((five / (11.0 * PI / 8.0) - 1.0).abs() < 0.05);
    }
}
