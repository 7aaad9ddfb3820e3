//! Adaptive Dormand–Prince 5(4) for real first-order systems.

use crate::error::{Error, Result};

pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order minus embedded fourth-order weights.
const E: [f64; 7] =
    [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub accepted: bool,
    /// Scaled error norm; at most one when accepted.
    pub error: f64,
    pub h_next: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    /// Smallest step relative to `max(1, |t|)` before giving up.
    pub h_min_rel: f64,
    pub h_max: f64,
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
    fsal_valid: bool,
    pub stats: Stats,
}

impl Dopri5 {
    pub fn new(dim: usize, rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            h_min_rel: 1e-13,
            h_max: f64::INFINITY,
            k: std::array::from_fn(|_| vec![0.0; dim]),
            ytmp: vec![0.0; dim],
            ynew: vec![0.0; dim],
            fsal_valid: false,
            stats: Stats::default(),
        }
    }

    /// Drops the cached derivative; required after modifying `y` externally.
    pub fn reset(&mut self) {
        self.fsal_valid = false;
    }

    /// Attempts one step of size `h`; on acceptance `y` is advanced.
    pub fn try_step<S: OdeSystem + ?Sized>(&mut self, sys: &S, t: f64, y: &mut [f64], h: f64) -> StepOutcome {
        let n = y.len();
        if !self.fsal_valid {
            sys.rhs(t, y, &mut self.k[0]);
            self.stats.evaluations += 1;
        }
        for s in 1..7 {
            self.ytmp.copy_from_slice(y);
            for (j, a) in A[s].iter().enumerate().take(s) {
                if *a != 0.0 {
                    let ha = h * a;
                    for (t, k) in self.ytmp.iter_mut().zip(&self.k[j]) {
                        *t += ha * k;
                    }
                }
            }
            sys.rhs(t + C[s] * h, &self.ytmp, &mut self.k[s]);
            self.stats.evaluations += 1;
        }
        // Stage 7 was evaluated at the fifth-order solution.
        self.ynew.copy_from_slice(&self.ytmp);
        let mut sum = 0.0;
        for i in 0..n {
            let e = E[0] * self.k[0][i]
                + E[2] * self.k[2][i]
                + E[3] * self.k[3][i]
                + E[4] * self.k[4][i]
                + E[5] * self.k[5][i]
                + E[6] * self.k[6][i];
            let scale = self.atol + self.rtol * y[i].abs().max(self.ynew[i].abs());
            sum += (h * e / scale).powi(2);
        }
        let error = (sum / n.max(1) as f64).sqrt();
        let factor = if error == 0.0 { 5.0 } else { (0.9 * error.powf(-0.2)).clamp(0.2, 5.0) };
        if error <= 1.0 {
            y.copy_from_slice(&self.ynew);
            self.k.swap(0, 6);
            self.fsal_valid = true;
            self.stats.accepted += 1;
            StepOutcome { accepted: true, error, h_next: (h * factor).min(self.h_max) }
        } else {
            self.fsal_valid = true;
            self.stats.rejected += 1;
            StepOutcome { accepted: false, error, h_next: h * factor.min(1.0) }
        }
    }

    /// Fifth-order solution of one step from `(t, y)` of size `h`, without
    /// error control. Leaves the adaptive state untouched except the cache.
    pub fn fixed_step<S: OdeSystem + ?Sized>(&mut self, sys: &S, t: f64, y: &[f64], h: f64, out: &mut [f64]) {
        self.fsal_valid = false;
        out.copy_from_slice(y);
        let accepted = self.rtol;
        // A huge tolerance forces acceptance.
        self.rtol = f64::INFINITY;
        self.try_step(sys, t, out, h);
        self.rtol = accepted;
        self.stats.accepted -= 1;
        self.fsal_valid = false;
    }

    /// Integrates from `t0` to the last of `times`, calling `observe` at
    /// each requested time (sorted, all ≥ `t0`). Returns the final step hint.
    pub fn integrate<S: OdeSystem + ?Sized>(
        &mut self,
        sys: &S,
        t0: f64,
        y: &mut [f64],
        times: &[f64],
        h0: f64,
        mut observe: impl FnMut(f64, &[f64]),
    ) -> Result<f64> {
        let mut t = t0;
        let mut h = h0.min(self.h_max);
        self.reset();
        for &target in times {
            if target < t {
                return Err(Error::Parameter(format!("sample time {target} precedes {t}")));
            }
            while t < target {
                let remaining = target - t;
                let clipped = remaining <= h;
                let step = if clipped { remaining } else { h };
                let out = self.try_step(sys, t, y, step);
                if out.accepted {
                    t = if clipped { target } else { t + step };
                    if !clipped || out.h_next < h {
                        h = out.h_next;
                    }
                } else {
                    h = out.h_next;
                    if h < self.h_min_rel * t.abs().max(1.0) {
                        return Err(Error::Stiffness { t, largest_gap: f64::NAN });
                    }
                }
            }
            observe(t, y);
        }
        Ok(h)
    }
}
