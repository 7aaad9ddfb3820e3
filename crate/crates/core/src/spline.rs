//! Cubic spline interpolation on strictly increasing knots.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    /// Spline with first derivative `slope0` at the first knot (when given)
    /// and a natural end at the last.
    pub fn new(x: Vec<f64>, y: Vec<f64>, slope0: Option<f64>) -> Result<Self> {
        let n = x.len();
        if n < 3 || y.len() != n {
            return Err(Error::Parameter("spline needs at least three matching knots".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parameter("spline knots must increase strictly".into()));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        // Tridiagonal system for the second derivatives.
        let mut sub = vec![0.0; n];
        let mut diag = vec![1.0; n];
        let mut sup = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        if let Some(s) = slope0 {
            diag[0] = h[0] / 3.0;
            sup[0] = h[0] / 6.0;
            rhs[0] = (y[1] - y[0]) / h[0] - s;
        }
        for i in 1..n - 1 {
            sub[i] = h[i - 1] / 6.0;
            diag[i] = (h[i - 1] + h[i]) / 3.0;
            sup[i] = h[i] / 6.0;
            rhs[i] = (y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1];
        }
        // Thomas algorithm; the system is diagonally dominant.
        for i in 1..n {
            let w = sub[i] / diag[i - 1];
            diag[i] -= w * sup[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        let mut m = vec![0.0; n];
        m[n - 1] = rhs[n - 1] / diag[n - 1];
        for i in (0..n - 1).rev() {
            m[i] = (rhs[i] - sup[i] * m[i + 1]) / diag[i];
        }
        Ok(Self { x, y, m })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    fn segment(&self, t: f64) -> usize {
        match self.x.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => i.min(self.x.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.x.len() - 2),
        }
    }

    /// Value and first derivative; the end cubics extend beyond the knots.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let value = a * self.y[i] + b * self.y[i + 1] + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let slope = (self.y[i + 1] - self.y[i]) / h + ((1.0 - 3.0 * a * a) * m0 + (3.0 * b * b - 1.0) * m1) * h / 6.0;
        (value, slope)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_knots_and_smooth_functions() {
        let x: Vec<f64> = (0..=200).map(|i| i as f64 * 0.05).collect();
        let y: Vec<f64> = x.iter().map(|v| (1.0 + v * v).ln()).collect();
        let s = CubicSpline::new(x.clone(), y.clone(), Some(0.0)).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((s.eval(*a).0 - b).abs() < 1e-14);
        }
        for t in [0.013, 0.5, 2.71, 7.77] {
            let (v, d) = s.eval(t);
            assert!((v - (1.0f64 + t * t).ln()).abs() < 1e-6);
            assert!((d - 2.0 * t / (1.0 + t * t)).abs() < 1e-4);
        }
    }

    #[test]
    fn clamped_start_slope() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let s = CubicSpline::new(x, y, Some(0.0)).unwrap();
        assert!(s.eval(0.0).1.abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(CubicSpline::new(vec![0.0, 1.0], vec![0.0, 1.0], None).is_err());
        assert!(CubicSpline::new(vec![0.0, 1.0, 1.0], vec![0.0; 3], None).is_err());
    }
}
