//! Decoherence bounds on the largest factorable number.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Factor standing in for "much greater than".
pub const DEFAULT_MARGIN_FACTOR: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitInputs {
    pub gamma: f64,
    pub t_dec: f64,
    pub omega0: f64,
}

impl LimitInputs {
    pub fn new(gamma: f64, t_dec: f64) -> Result<Self> {
        let inputs = Self { gamma, t_dec, omega0: 1.0 };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gamma", self.gamma), ("T_dec", self.t_dec), ("omega0", self.omega0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// `min((γ T_dec)², (ω0/γ)²)`.
pub fn max_semiprime(inputs: &LimitInputs) -> f64 {
    let coherent = (inputs.gamma * inputs.t_dec).powi(2);
    let resolved = (inputs.omega0 / inputs.gamma).powi(2);
    coherent.min(resolved)
}

/// `γ* = sqrt(ω0 / T_dec)`, where both terms of [`max_semiprime`] equal `ω0 T_dec`.
pub fn optimal_gamma(t_dec: f64, omega0: f64) -> f64 {
    (omega0 / t_dec).sqrt()
}

/// Bound for `count` log-spaced drive strengths in `[lo, hi]`.
pub fn gamma_sweep(t_dec: f64, lo: f64, hi: f64, count: usize) -> Result<Vec<(f64, f64)>> {
    if !(lo > 0.0 && hi > lo) || count < 2 {
        return Err(Error::Parameter("sweep needs 0 < lo < hi and at least two points".into()));
    }
    let step = (hi / lo).ln() / (count - 1) as f64;
    (0..count)
        .map(|i| {
            let gamma = lo * (step * i as f64).exp();
            Ok((gamma, max_semiprime(&LimitInputs::new(gamma, t_dec)?)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowCheck {
    /// `Ω T_dec >= margin`.
    pub coherent: bool,
    /// `Ω N / ω0 <= 1 / margin`.
    pub resolved: bool,
    pub omega_t: f64,
    pub omega_n: f64,
    pub margin: f64,
}

impl WindowCheck {
    pub fn passes(&self) -> bool {
        self.coherent && self.resolved
    }
}

/// Both Rabi-frequency inequalities with an explicit margin factor.
pub fn rabi_window_check(omega: f64, t_dec: f64, n: u64, margin: f64) -> WindowCheck {
    let omega_t = omega * t_dec;
    let omega_n = omega * n as f64;
    WindowCheck { coherent: omega_t >= margin, resolved: omega_n * margin <= 1.0, omega_t, omega_n, margin }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn balanced_example() {
        let b = max_semiprime(&LimitInputs::new(1e-3, 1e6).unwrap());
        assert!((b - 1e6).abs() < 1e-6);
    }

    #[test]
    fn doubling_gamma_moves_each_term() {
        let t = 1e6;
        let a = LimitInputs::new(1e-4, t).unwrap();
        let b = LimitInputs::new(2e-4, t).unwrap();
        // Below the optimum the coherence term binds.
        assert!((max_semiprime(&b) / max_semiprime(&a) - 4.0).abs() < 1e-12);
        let c = LimitInputs::new(1e-2, t).unwrap();
        let d = LimitInputs::new(2e-2, t).unwrap();
        assert!((max_semiprime(&c) / max_semiprime(&d) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_finds_the_optimum() {
        for t in [1e3, 1e5, 1e8] {
            let g = optimal_gamma(t, 1.0);
            let sweep = gamma_sweep(t, g / 100.0, g * 100.0, 2001).unwrap();
            let (g_best, n_best) = sweep.iter().copied().fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
            assert!((n_best / t - 1.0).abs() < 0.01);
            assert!((g_best / g - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn window_examples() {
        let ok = rabi_window_check(1e-3, 1e5, 15, DEFAULT_MARGIN_FACTOR);
        assert!(ok.passes());
        assert!(!rabi_window_check(1.0 / 15.0, 1e5, 15, DEFAULT_MARGIN_FACTOR).resolved);
        assert!(!rabi_window_check(1e-5, 1e5, 15, DEFAULT_MARGIN_FACTOR).coherent);
    }

    #[test]
    fn non_positive_inputs_are_rejected() {
        assert!(LimitInputs::new(0.0, 1.0).is_err());
        assert!(LimitInputs::new(1.0, -1.0).is_err());
        assert!(gamma_sweep(1.0, 1.0, 0.5, 10).is_err());
    }

    proptest! {
        #[test]
        fn bound_is_monotone_in_decoherence_time(g in 1e-6f64..1.0, t in 1.0f64..1e9, f in 1.0f64..10.0) {
            let a = max_semiprime(&LimitInputs::new(g, t).unwrap());
            let b = max_semiprime(&LimitInputs::new(g, t * f).unwrap());
            prop_assert!(b >= a);
        }

        #[test]
        fn optimum_dominates(g in 1e-6f64..1.0, t in 1.0f64..1e9) {
            let best = max_semiprime(&LimitInputs::new(optimal_gamma(t, 1.0), t).unwrap());
            prop_assert!((best / t - 1.0).abs() < 1e-12);
            prop_assert!(max_semiprime(&LimitInputs::new(g, t).unwrap()) <= best * (1.0 + 1e-12));
        }
    }
}
