//! Eulerian grid, finite-element fields, and quadrature.
//!
//! Diffusing chemical fields live on a uniform partition of (a, b) into N
//! intervals and are expanded in hat functions phi_1 .. phi_{N-1} whose first
//! and last members are flattened into constants on the boundary intervals
//! [a, x_1] and [x_{N-1}, b]. That built-in plateau encodes the zero-flux
//! boundary condition: every field in the span has zero normal derivative at
//! the walls.
//!
//! Element integrals against the moving piecewise-constant cell density are
//! computed on the overlay partition (union of FE breakpoints and density
//! interfaces) with two-point Gauss per piece, which integrates the
//! polynomial products the scheme produces exactly.

use crate::error::{Error, Result};
use crate::mass::PiecewiseConstantDensity;
use crate::tridiag::Tridiag;

/// Uniform spatial grid on [a, b] with N intervals and nodes x_0 .. x_N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerGrid {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl EulerGrid {
    pub fn new(a: f64, b: f64, n: usize) -> Self {
        assert!(b > a, "domain must be non-degenerate");
        assert!(n >= 3, "the boundary-flattened basis needs at least 3 intervals");
        EulerGrid { a, b, n }
    }

    pub fn dx(&self) -> f64 {
        (self.b - self.a) / self.n as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.n {
            self.b
        } else {
            self.a + k as f64 * self.dx()
        }
    }

    /// Index of the interval containing x, clamped into 0..n-1.
    pub fn interval_of(&self, x: f64) -> usize {
        let raw = ((x - self.a) / self.dx()).floor();
        (raw.max(0.0) as usize).min(self.n - 1)
    }
}

/// A field in the plateau-hat basis: `coeffs[k-1]` is the nodal value at x_k
/// for k = 1 .. N-1. Evaluation is the interpolant, constant on the two
/// boundary intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct FeField {
    pub grid: EulerGrid,
    pub coeffs: Vec<f64>,
}

impl FeField {
    pub fn new(grid: EulerGrid, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != grid.n - 1 {
            return Err(Error::ResolutionMismatch {
                context: "finite-element coefficients",
                expected: grid.n - 1,
                got: coeffs.len(),
            });
        }
        Ok(FeField { grid, coeffs })
    }

    /// Nodal interpolation of a function: coefficient k-1 is f(x_k).
    pub fn from_fn(grid: EulerGrid, f: impl Fn(f64) -> f64) -> Self {
        let coeffs = (1..grid.n).map(|k| f(grid.node(k))).collect();
        FeField { grid, coeffs }
    }

    pub fn zero(grid: EulerGrid) -> Self {
        FeField {
            grid,
            coeffs: vec![0.0; grid.n - 1],
        }
    }

    /// Point evaluation with the boundary plateaus; out-of-domain queries
    /// clamp to the nearest end value.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.grid.n;
        let x1 = self.grid.node(1);
        let xn1 = self.grid.node(n - 1);
        if x <= x1 {
            return self.coeffs[0];
        }
        if x >= xn1 {
            return self.coeffs[n - 2];
        }
        let k = self.grid.interval_of(x); // 1 <= k <= n-2 here
        let xk = self.grid.node(k);
        let lam = (x - xk) / self.grid.dx();
        self.coeffs[k - 1] * (1.0 - lam) + self.coeffs[k] * lam
    }

    /// Values at all grid nodes x_0 .. x_N (the plateaus repeat the first and
    /// last coefficients), suitable as spline interpolation data.
    pub fn knot_values(&self) -> Vec<f64> {
        let n = self.grid.n;
        let mut ys = Vec::with_capacity(n + 1);
        ys.push(self.coeffs[0]);
        ys.extend_from_slice(&self.coeffs);
        ys.push(self.coeffs[n - 2]);
        ys
    }

    /// Weighted sum of fields on a shared grid.
    pub fn linear_combination(terms: &[(&FeField, f64)]) -> FeField {
        assert!(!terms.is_empty());
        let grid = terms[0].0.grid;
        let mut coeffs = vec![0.0; grid.n - 1];
        for (field, weight) in terms {
            assert_eq!(field.grid, grid, "fields must share a grid");
            for (c, f) in coeffs.iter_mut().zip(&field.coeffs) {
                *c += weight * f;
            }
        }
        FeField { grid, coeffs }
    }

    /// Clamp every negative coefficient to zero. Returns the number of
    /// clamped entries and the most negative value seen, so the caller can
    /// decide whether the undershoot was harmless quadrature noise.
    pub fn clamp_negatives(&mut self) -> (usize, f64) {
        let mut count = 0;
        let mut worst = 0.0_f64;
        for c in &mut self.coeffs {
            if *c < 0.0 {
                worst = worst.min(*c);
                *c = 0.0;
                count += 1;
            }
        }
        (count, worst)
    }
}

/// Precomputed element matrices of the plateau-hat basis, order N-1.
#[derive(Debug, Clone)]
pub struct FeMatrices {
    pub mass: Tridiag,
    pub stiffness: Tridiag,
}

/// Assemble mass and stiffness matrices. The boundary rows carry the plateau
/// contributions: the flattened functions have self-mass 4h/3 (h of plateau
/// plus h/3 of ramp) and self-stiffness 1/h (the ramp only).
pub fn assemble_fe_matrices(grid: &EulerGrid) -> FeMatrices {
    let n = grid.n;
    let h = grid.dx();
    let dim = n - 1;
    let mut mass = Tridiag::zeros(dim);
    let mut stiffness = Tridiag::zeros(dim);
    for i in 0..dim {
        let boundary = i == 0 || i == dim - 1;
        mass.diag[i] = if boundary { 4.0 * h / 3.0 } else { 2.0 * h / 3.0 };
        stiffness.diag[i] = if boundary { 1.0 / h } else { 2.0 / h };
    }
    for i in 0..dim - 1 {
        mass.lower[i] = h / 6.0;
        mass.upper[i] = h / 6.0;
        stiffness.lower[i] = -1.0 / h;
        stiffness.upper[i] = -1.0 / h;
    }
    FeMatrices { mass, stiffness }
}

/// Integrals of the individual basis functions: 3h/2 for the two boundary
/// functions, h for the interior ones. These sum to b - a because the basis
/// is a partition of unity.
pub fn basis_integrals(grid: &EulerGrid) -> Vec<f64> {
    let h = grid.dx();
    let dim = grid.n - 1;
    (0..dim)
        .map(|i| if i == 0 || i == dim - 1 { 1.5 * h } else { h })
        .collect()
}

/// Load vector (integral of R(rho_h, fields) * phi_l)_l on the overlay
/// partition with two-point Gauss per piece. `fields` are evaluated at each
/// quadrature point and passed to the integrand in order; the density is zero
/// outside its support, so compactly supported states need no special care.
pub fn overlay_quadrature(
    density: &PiecewiseConstantDensity,
    fields: &[&FeField],
    grid: &EulerGrid,
    integrand: impl Fn(f64, &[f64]) -> f64,
) -> Vec<f64> {
    let n = grid.n;
    let h = grid.dx();
    let dim = n - 1;

    // Overlay breakpoints: FE nodes plus density interfaces inside (a, b).
    let mut points: Vec<f64> = (0..=n).map(|k| grid.node(k)).collect();
    points.extend(
        density
            .interfaces
            .iter()
            .copied()
            .filter(|&x| x > grid.a && x < grid.b),
    );
    points.sort_by(|p, q| p.partial_cmp(q).unwrap());
    points.dedup_by(|p, q| (*p - *q).abs() <= 1e-14 * (grid.b - grid.a));

    const GAUSS: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)
    let mut load = vec![0.0; dim];
    let mut field_vals = vec![0.0; fields.len()];
    for piece in points.windows(2) {
        let (lo, hi) = (piece[0], piece[1]);
        let half = 0.5 * (hi - lo);
        if half <= 0.0 {
            continue;
        }
        let mid = 0.5 * (lo + hi);
        // Which interval of the FE grid does this piece sit in?
        let k = grid.interval_of(mid);
        for &sign in &[-1.0, 1.0] {
            let x = mid + sign * GAUSS * half;
            for (slot, field) in field_vals.iter_mut().zip(fields) {
                *slot = field.eval(x);
            }
            let w = half * integrand(density.eval(x), &field_vals);
            if k == 0 {
                load[0] += w; // phi_1 = 1 on the left plateau
            } else if k == n - 1 {
                load[dim - 1] += w; // phi_{N-1} = 1 on the right plateau
            } else {
                let lam = (x - grid.node(k)) / h;
                load[k - 1] += w * (1.0 - lam);
                load[k] += w * lam;
            }
        }
    }
    load
}
