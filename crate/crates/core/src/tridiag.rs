//! Lowest eigenpairs of a real symmetric tridiagonal matrix.
//!
//! Eigenvalues come from Sturm-sequence bisection, eigenvectors from
//! inverse iteration with a partially pivoted tridiagonal solve.

/// Symmetric tridiagonal matrix: `diag[i]` on the diagonal and
/// `off[i] = T[i][i+1] = T[i+1][i]`.
#[derive(Debug, Clone)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert!(!diag.is_empty());
        assert_eq!(off.len() + 1, diag.len());
        Self { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 } + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    fn scale(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE)
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        let tiny = f64::EPSILON * self.scale() * 1e-3;
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q == 0.0 {
            q = -tiny;
        }
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.len() {
            let e = self.off[i - 1];
            q = self.diag[i] - x - e * e / q;
            if q == 0.0 {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `m` smallest eigenvalues in ascending order.
    pub fn lowest_eigenvalues(&self, m: usize) -> Vec<f64> {
        let m = m.min(self.len());
        let (glo, ghi) = self.gershgorin();
        let mut out = Vec::with_capacity(m);
        let mut floor = glo;
        for idx in 0..m {
            let mut lo = floor;
            let mut hi = ghi;
            // Invariant: count_below(lo) <= idx < count_below(hi).
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if self.count_below(mid) > idx {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let value = 0.5 * (lo + hi);
            out.push(value);
            floor = lo;
        }
        out
    }

    /// Solves `(T - shift I) x = rhs` in place by Gaussian elimination with
    /// partial pivoting. Exactly zero pivots are replaced by `tiny`.
    fn solve_shifted(&self, shift: f64, rhs: &mut [f64], tiny: f64) {
        let n = self.len();
        if n == 1 {
            let p = self.diag[0] - shift;
            rhs[0] /= if p == 0.0 { tiny } else { p };
            return;
        }
        let mut d: Vec<f64> = self.diag.iter().map(|v| v - shift).collect();
        let mut dl = self.off.clone();
        let mut du = self.off.clone();
        for i in 0..n - 1 {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = tiny;
                }
                let fact = dl[i] / d[i];
                d[i + 1] -= fact * du[i];
                rhs[i + 1] -= fact * rhs[i];
                dl[i] = 0.0;
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                let temp = d[i + 1];
                d[i + 1] = du[i] - fact * temp;
                if i + 2 < n {
                    dl[i] = du[i + 1];
                    du[i + 1] = -fact * dl[i];
                } else {
                    dl[i] = 0.0;
                }
                du[i] = temp;
                let t = rhs[i];
                rhs[i] = rhs[i + 1];
                rhs[i + 1] = t - fact * rhs[i + 1];
            }
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = tiny;
        }
        rhs[n - 1] /= d[n - 1];
        rhs[n - 2] = (rhs[n - 2] - du[n - 2] * rhs[n - 1]) / d[n - 2];
        for i in (0..n.saturating_sub(2)).rev() {
            rhs[i] = (rhs[i] - du[i] * rhs[i + 1] - dl[i] * rhs[i + 2]) / d[i];
        }
    }

    /// Unit-norm (Euclidean) eigenvector for an accurate eigenvalue.
    pub fn eigenvector(&self, value: f64, seed: u64) -> Vec<f64> {
        let n = self.len();
        let tiny = f64::EPSILON * self.scale();
        // Deterministic, non-structured start vector.
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut x: Vec<f64> = (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                0.5 + ((state >> 11) as f64) / ((1u64 << 53) as f64)
            })
            .collect();
        for _ in 0..3 {
            self.solve_shifted(value, &mut x, tiny);
            normalize(&mut x);
        }
        x
    }

    /// The `m` lowest eigenpairs; vectors have unit Euclidean norm.
    pub fn lowest_eigenpairs(&self, m: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let values = self.lowest_eigenvalues(m);
        let scale = self.scale();
        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(values.len());
        for (i, &v) in values.iter().enumerate() {
            let mut x = self.eigenvector(v, i as u64);
            // Re-orthogonalize inside near-degenerate clusters.
            let mut touched = false;
            for (j, prev) in vectors.iter().enumerate() {
                if (values[j] - v).abs() < 1e-10 * scale {
                    let dot: f64 = x.iter().zip(prev).map(|(a, b)| a * b).sum();
                    x.iter_mut().zip(prev).for_each(|(a, b)| *a -= dot * b);
                    touched = true;
                }
            }
            if touched {
                normalize(&mut x);
            }
            vectors.push(x);
        }
        (values, vectors)
    }
}

fn normalize(x: &mut [f64]) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Discrete Laplacian on n points with Dirichlet ends has eigenvalues
    // 2 - 2 cos(k pi / (n + 1)).
    #[test]
    fn dirichlet_laplacian_spectrum() {
        let n = 50;
        let t = SymTridiagonal::new(vec![2.0; n], vec![-1.0; n - 1]);
        let (vals, vecs) = t.lowest_eigenpairs(6);
        for (k, v) in vals.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((v - exact).abs() < 1e-13, "{k}: {v} vs {exact}");
        }
        for (i, a) in vecs.iter().enumerate() {
            for (j, b) in vecs.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn residual_is_small() {
        let n = 200;
        let diag: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.37).sin() * 3.0 + 5.0).collect();
        let off: Vec<f64> = (0..n - 1).map(|i| -1.0 - 0.1 * (i % 7) as f64).collect();
        let t = SymTridiagonal::new(diag.clone(), off.clone());
        let (vals, vecs) = t.lowest_eigenpairs(10);
        for (v, x) in vals.iter().zip(&vecs) {
            let mut r = 0.0f64;
            for i in 0..n {
                let mut y = diag[i] * x[i] - v * x[i];
                if i > 0 {
                    y += off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    y += off[i] * x[i + 1];
                }
                r = r.max(y.abs());
            }
            assert!(r < 1e-11, "residual {r}");
        }
        assert!(vals.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn count_matches_values() {
        let t = SymTridiagonal::new(vec![1.0, 2.0, 3.0], vec![0.0, 0.0]);
        assert_eq!(t.count_below(2.5), 2);
        let vals = t.lowest_eigenvalues(3);
        assert!((vals[2] - 3.0).abs() < 1e-14);
    }
}
