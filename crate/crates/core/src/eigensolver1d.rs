//! Finite-difference solver for `-1/2 u'' + V u = E u` on a uniform,
//! symmetric grid in the dimensionless coordinate.
//!
//! Lengths are in units of the oscillator length, energies in units of the
//! reference energy, so the kinetic prefactor is exactly 1/2.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tridiag::SymTridiagonal;

/// Minimum gap between the edge potential and the highest requested level.
pub const CONFINEMENT_MARGIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    xmax: f64,
    n: usize,
}

impl Grid {
    pub fn new(xmax: f64, n: usize) -> Result<Self> {
        if n < 201 || n.is_multiple_of(2) {
            return Err(Error::Parameter(format!("grid size must be odd and >= 201, got {n}")));
        }
        if !(xmax > 0.0 && xmax.is_finite()) {
            return Err(Error::Parameter(format!("grid half-width must be positive, got {xmax}")));
        }
        Ok(Self { xmax, n })
    }

    /// Smallest odd grid on `[-xmax, xmax]` whose spacing does not exceed `h`.
    pub fn with_spacing(xmax: f64, h: f64) -> Result<Self> {
        let mut n = (2.0 * xmax / h).ceil() as usize + 1;
        if n.is_multiple_of(2) {
            n += 1;
        }
        Self::new(xmax, n.max(201))
    }

    pub fn xmax(&self) -> f64 {
        self.xmax
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.xmax / (self.n - 1) as f64
    }

    /// Index of the node at the origin.
    pub fn center(&self) -> usize {
        (self.n - 1) / 2
    }

    pub fn point(&self, i: usize) -> f64 {
        (i as f64 - self.center() as f64) * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Nodes with `x >= 0`, starting at the origin.
    pub fn half_points(&self) -> Vec<f64> {
        (self.center()..self.n).map(|i| self.point(i)).collect()
    }

    /// Same extent, spacing halved.
    pub fn refined(&self) -> Grid {
        Grid { xmax: self.xmax, n: 2 * self.n - 1 }
    }
}

/// An even potential sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOnGrid {
    grid: Grid,
    values: Vec<f64>,
}

impl PotentialOnGrid {
    /// Rejects values that are not mirror symmetric to 1e-12 relative.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Parameter(format!(
                "potential has {} values for a grid of {}",
                values.len(),
                grid.len()
            )));
        }
        let n = values.len();
        let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..n / 2 {
            if (values[i] - values[n - 1 - i]).abs() > 1e-12 * scale {
                return Err(Error::Parameter(format!("potential is not even at index {i}")));
            }
        }
        let mut p = Self { grid, values };
        p.symmetrize();
        Ok(p)
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let mut p = Self { grid, values: grid.points().into_iter().map(f).collect() };
        p.symmetrize();
        p
    }

    /// Replaces each value pair by its mean. Leaves even input bitwise unchanged.
    pub fn symmetrize(&mut self) {
        let n = self.values.len();
        for i in 0..n / 2 {
            let a = self.values[i];
            let b = self.values[n - 1 - i];
            let m = if a == b { a } else { 0.5 * (a + b) };
            self.values[i] = m;
            self.values[n - 1 - i] = m;
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Values on the nodes `x >= 0`.
    pub fn half_values(&self) -> &[f64] {
        &self.values[self.grid.center()..]
    }

    pub fn edge_value(&self) -> f64 {
        self.values[0].min(self.values[self.values.len() - 1])
    }

    pub fn shifted(&self, by: f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| v + by).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub index: usize,
    pub energy: f64,
    pub wavefunction: Vec<f64>,
    pub parity: Parity,
}

fn hamiltonian(values: &[f64], h: f64) -> SymTridiagonal {
    let kin = 1.0 / (h * h);
    SymTridiagonal::new(values.iter().map(|v| kin + v).collect(), vec![-0.5 * kin; values.len() - 1])
}

fn check_confinement(edge: f64, highest: f64) -> Result<()> {
    if edge - highest < CONFINEMENT_MARGIN {
        return Err(Error::DomainTruncation(format!(
            "level {highest:.6} is within {CONFINEMENT_MARGIN} of the edge potential {edge:.6}"
        )));
    }
    Ok(())
}

// First element that is not a numerically negligible tail decides the sign.
fn fix_sign(u: &mut [f64]) {
    let peak = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(first) = u.iter().find(|v| v.abs() > 1e-8 * peak) {
        if *first < 0.0 {
            u.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

/// The `m` lowest eigenpairs on the full line.
///
/// Wavefunctions satisfy `sum u^2 h = 1`, have exact parity (projected),
/// and start with a positive lobe at the left edge.
pub fn solve_lowest(pot: &PotentialOnGrid, m: usize) -> Result<Vec<EigenPair>> {
    if m == 0 || m >= pot.grid.len() / 4 {
        return Err(Error::Parameter(format!("cannot request {m} levels on this grid")));
    }
    let h = pot.grid.spacing();
    let (values, vectors) = hamiltonian(&pot.values, h).lowest_eigenpairs(m);
    check_confinement(pot.edge_value(), values[m - 1])?;
    let inv_sqrt_h = 1.0 / h.sqrt();
    let n = pot.grid.len();
    Ok(values
        .into_iter()
        .zip(vectors)
        .enumerate()
        .map(|(index, (energy, v))| {
            let overlap: f64 = (0..n).map(|i| v[i] * v[n - 1 - i]).sum();
            let parity = if overlap >= 0.0 { Parity::Even } else { Parity::Odd };
            let sign = if parity == Parity::Even { 1.0 } else { -1.0 };
            let mut u: Vec<f64> = (0..n).map(|i| 0.5 * (v[i] + sign * v[n - 1 - i]) * inv_sqrt_h).collect();
            if parity == Parity::Odd {
                u[pot.grid.center()] = 0.0;
            }
            normalize_on_grid(&mut u, h);
            fix_sign(&mut u);
            EigenPair { index, energy, wavefunction: u, parity }
        })
        .collect())
}

/// Half-line problem `x >= 0` with `u(0) = 0` and an optional extra
/// potential term evaluated at each interior node (used for the
/// centrifugal barrier).
///
/// Wavefunctions are returned on [`Grid::half_points`] (first entry is the
/// origin, value zero), normalized as `sum u^2 h = 1`, positive near the
/// origin.
pub fn solve_halfline_with(pot: &PotentialOnGrid, extra: impl Fn(f64) -> f64, m: usize) -> Result<Vec<EigenPair>> {
    let grid = pot.grid;
    let c = grid.center();
    let h = grid.spacing();
    let interior: Vec<f64> = ((c + 1)..grid.len()).map(|i| pot.values[i] + extra(grid.point(i))).collect();
    if m == 0 || m >= interior.len() / 4 {
        return Err(Error::Parameter(format!("cannot request {m} levels on this grid")));
    }
    let (values, vectors) = hamiltonian(&interior, h).lowest_eigenpairs(m);
    check_confinement(*interior.last().unwrap(), values[m - 1])?;
    let inv_sqrt_h = 1.0 / h.sqrt();
    Ok(values
        .into_iter()
        .zip(vectors)
        .enumerate()
        .map(|(index, (energy, v))| {
            let mut u = Vec::with_capacity(v.len() + 1);
            u.push(0.0);
            u.extend(v.iter().map(|x| x * inv_sqrt_h));
            normalize_on_grid(&mut u, h);
            if u[1..].iter().find(|x| x.abs() > 0.0).is_some_and(|x| *x < 0.0) {
                u.iter_mut().for_each(|x| *x = -*x);
            }
            EigenPair { index, energy, wavefunction: u, parity: Parity::Odd }
        })
        .collect())
}

/// Half-line Dirichlet eigenpairs (the odd sector of the full problem).
pub fn dirichlet_halfline(pot: &PotentialOnGrid, m: usize) -> Result<Vec<EigenPair>> {
    solve_halfline_with(pot, |_| 0.0, m)
}

pub fn normalize_on_grid(u: &mut [f64], h: f64) {
    let norm = (u.iter().map(|v| v * v).sum::<f64>() * h).sqrt();
    if norm > 0.0 {
        u.iter_mut().for_each(|v| *v /= norm);
    }
}

pub fn overlap(a: &[f64], b: &[f64], h: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * h
}

/// `||H u - E u|| / ||u||` in the grid norm, for a full-line pair.
pub fn residual(pot: &PotentialOnGrid, pair: &EigenPair) -> f64 {
    let h = pot.grid.spacing();
    let u = &pair.wavefunction;
    let n = u.len();
    let kin = 1.0 / (h * h);
    let mut r2 = 0.0;
    let mut u2 = 0.0;
    for i in 0..n {
        let left = if i > 0 { u[i - 1] } else { 0.0 };
        let right = if i + 1 < n { u[i + 1] } else { 0.0 };
        let hu = -0.5 * kin * (left + right) + (kin + pot.values[i]) * u[i];
        r2 += (hu - pair.energy * u[i]).powi(2);
        u2 += u[i] * u[i];
    }
    (r2 / u2).sqrt()
}

/// Leading error model of the three-point Laplacian: the discrete
/// eigenvalue sits about `h^2/24 <u''''>` below the continuum one.
pub fn discretization_error_estimate(pair: &EigenPair, h: f64) -> f64 {
    let u = &pair.wavefunction;
    let n = u.len();
    let mut acc = 0.0;
    for i in 0..n {
        let left = if i > 0 { u[i - 1] } else { 0.0 };
        let right = if i + 1 < n { u[i + 1] } else { 0.0 };
        let d2 = (left - 2.0 * u[i] + right) / (h * h);
        acc += d2 * d2;
    }
    h * h / 24.0 * acc * h
}

/// Richardson-extrapolated lowest energies of an analytic even potential:
/// `(4 E(h/2) - E(h)) / 3`.
pub fn richardson_lowest(grid: Grid, v: impl Fn(f64) -> f64, m: usize) -> Result<Vec<f64>> {
    let coarse = solve_lowest(&PotentialOnGrid::from_fn(grid, &v), m)?;
    let fine = solve_lowest(&PotentialOnGrid::from_fn(grid.refined(), &v), m)?;
    Ok(extrapolate(&coarse, &fine))
}

/// Richardson-extrapolated half-line energies with an extra term.
pub fn richardson_halfline(
    grid: Grid,
    v: impl Fn(f64) -> f64,
    extra: impl Fn(f64) -> f64,
    m: usize,
) -> Result<Vec<f64>> {
    let coarse = solve_halfline_with(&PotentialOnGrid::from_fn(grid, &v), &extra, m)?;
    let fine = solve_halfline_with(&PotentialOnGrid::from_fn(grid.refined(), &v), &extra, m)?;
    Ok(extrapolate(&coarse, &fine))
}

fn extrapolate(coarse: &[EigenPair], fine: &[EigenPair]) -> Vec<f64> {
    coarse.iter().zip(fine).map(|(c, f)| (4.0 * f.energy - c.energy) / 3.0).collect()
}
