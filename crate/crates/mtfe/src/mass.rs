//! Lagrangian mass-coordinate descriptions of the cell density.
//!
//! The moving-mesh half of the scheme never stores the density directly.
//! It stores the pseudo-inverse V of the cumulative distribution: node V_j
//! is the position below which a fraction j/M of the total mass m(t) sits,
//!
//! ```text
//! integral from a to V_j of rho(x) dx  =  j * m / M .
//! ```
//!
//! Cell averages are recovered from node gaps,
//!
//! ```text
//! rho_j = dw / (V_j - V_{j-1}),        dw = m / M,
//! ```
//!
//! and the exact piecewise-linear inversion of that piecewise-constant
//! density takes us back. Both directions are algebraically exact, which is
//! what makes the mass update after a reaction step conservative.

use crate::error::{Error, Result};

/// The normalized mass grid: `cells` equal mass cells carrying total `mass`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassGrid {
    pub cells: usize,
    pub mass: f64,
}

impl MassGrid {
    pub fn new(cells: usize, mass: f64) -> Result<Self> {
        assert!(cells > 0, "mass grid needs at least one cell");
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::ZeroMass { mass });
        }
        Ok(MassGrid { cells, mass })
    }

    /// Normalized cell width 1/M.
    pub fn h_w(&self) -> f64 {
        1.0 / self.cells as f64
    }

    /// Physical mass per cell, m(t)/M.
    pub fn dw(&self) -> f64 {
        self.mass * self.h_w()
    }
}

/// Node positions V_0 < V_1 < ... < V_M of the pseudo-inverse cumulative
/// distribution, together with the mass grid they discretize.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseDistribution {
    pub grid: MassGrid,
    pub nodes: Vec<f64>,
}

impl InverseDistribution {
    pub fn new(grid: MassGrid, nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() != grid.cells + 1 {
            return Err(Error::ResolutionMismatch {
                context: "inverse distribution nodes",
                expected: grid.cells + 1,
                got: nodes.len(),
            });
        }
        check_strictly_increasing(&nodes)?;
        Ok(InverseDistribution { grid, nodes })
    }

    /// Width of the occupied region, V_M - V_0.
    pub fn span(&self) -> f64 {
        self.nodes[self.grid.cells] - self.nodes[0]
    }
}

/// Validate that a node array is finite and strictly increasing.
pub fn check_strictly_increasing(nodes: &[f64]) -> Result<()> {
    for (i, &v) in nodes.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: "node positions",
            });
        }
        if i > 0 && v <= nodes[i - 1] {
            return Err(Error::NonMonotone {
                index: i,
                value: v,
                previous: nodes[i - 1],
            });
        }
    }
    Ok(())
}

/// A density that is constant on each cell of a partition. Queries outside
/// the support evaluate to zero, so the same type serves both bounded-domain
/// and whole-line (compactly supported) states.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstantDensity {
    /// Cell interfaces x_0 < x_1 < ... < x_M.
    pub interfaces: Vec<f64>,
    /// Cell values rho_1 ... rho_M (one fewer than interfaces).
    pub values: Vec<f64>,
}

impl PiecewiseConstantDensity {
    pub fn new(interfaces: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if interfaces.len() != values.len() + 1 {
            return Err(Error::ResolutionMismatch {
                context: "piecewise-constant density",
                expected: values.len() + 1,
                got: interfaces.len(),
            });
        }
        check_strictly_increasing(&interfaces)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "density values",
            });
        }
        Ok(PiecewiseConstantDensity { interfaces, values })
    }

    /// Constant density on a single partition of (a, b) into `cells` pieces.
    pub fn uniform(a: f64, b: f64, value: f64, cells: usize) -> Self {
        assert!(cells > 0 && b > a);
        let h = (b - a) / cells as f64;
        let interfaces = (0..=cells).map(|i| a + i as f64 * h).collect();
        PiecewiseConstantDensity {
            interfaces,
            values: vec![value; cells],
        }
    }

    /// Point evaluation; zero outside the support. Interfaces belong to the
    /// cell on their right except the last, which closes its cell.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        if x < self.interfaces[0] || x > self.interfaces[n] {
            return 0.0;
        }
        if x == self.interfaces[n] {
            return self.values[n - 1];
        }
        let idx = self.interfaces.partition_point(|&xi| xi <= x) - 1;
        self.values[idx.min(n - 1)]
    }

    pub fn total_mass(&self) -> f64 {
        self.values
            .iter()
            .zip(self.interfaces.windows(2))
            .map(|(v, w)| v * (w[1] - w[0]))
            .sum()
    }

    pub fn support(&self) -> (f64, f64) {
        (self.interfaces[0], *self.interfaces.last().unwrap())
    }
}

/// Recover cell averages from the inverse distribution:
/// `rho_j = dw / (V_j - V_{j-1})` on the cell (V_{j-1}, V_j).
pub fn reconstruct_density(v: &InverseDistribution) -> PiecewiseConstantDensity {
    let dw = v.grid.dw();
    let values = v.nodes.windows(2).map(|w| dw / (w[1] - w[0])).collect();
    PiecewiseConstantDensity {
        interfaces: v.nodes.clone(),
        values,
    }
}

/// Exact inversion of the piecewise-linear cumulative distribution of a
/// piecewise-constant density: the returned nodes satisfy
/// `integral from V_{j-1} to V_j of rho = target_mass / cells` for every
/// cell, with the end nodes pinned to the support ends.
///
/// `target_mass` is supplied by the caller (normally the exactly accumulated
/// integral of `density`) so that the mass bookkeeping of the reaction stage
/// stays bit-for-bit consistent with the grid it produces.
pub fn invert_cdf(
    density: &PiecewiseConstantDensity,
    target_mass: f64,
    cells: usize,
) -> Result<InverseDistribution> {
    for (j, &v) in density.values.iter().enumerate() {
        if !(v > 0.0) {
            return Err(Error::NonPositiveDensity {
                t: f64::NAN,
                cell: j,
                value: v,
            });
        }
    }
    let grid = MassGrid::new(cells, target_mass)?;

    let m = density.values.len();
    // Cumulative mass at each interface of the input partition.
    let mut cum = vec![0.0; m + 1];
    for j in 0..m {
        cum[j + 1] =
            cum[j] + density.values[j] * (density.interfaces[j + 1] - density.interfaces[j]);
    }

    let mut nodes = vec![0.0; cells + 1];
    nodes[0] = density.interfaces[0];
    nodes[cells] = density.interfaces[m];
    let mut k = 0usize; // input cell cursor; targets are increasing
    for j in 1..cells {
        let target = target_mass * (j as f64 / cells as f64);
        while k + 1 < m && cum[k + 1] < target {
            k += 1;
        }
        nodes[j] = density.interfaces[k] + (target - cum[k]) / density.values[k];
    }
    InverseDistribution::new(grid, nodes)
}

/// Discretize smooth nonnegative initial data `rho0` on `[a, b]` into an
/// inverse distribution with `cells` mass cells.
///
/// The cumulative integral is a composite trapezoid rule on a uniform fine
/// sampling of at least `min_samples` intervals (floored at 65536 so that
/// Gaussian-type data keeps its total mass accurate to ~1e-9 even when the
/// caller's resolution hint is small); each interior node is then located by
/// bisection on the sampled cumulative until the bracketed mass mismatch is
/// below 1e-12 of the total. End nodes are pinned to the domain ends.
pub fn init_inverse_from_density(
    rho0: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    cells: usize,
    min_samples: usize,
) -> Result<(InverseDistribution, f64)> {
    assert!(b > a, "domain must be non-degenerate");
    assert!(cells > 0);
    let n = min_samples.max(65536);
    let h = (b - a) / n as f64;
    let xs: Vec<f64> = (0..=n).map(|i| a + i as f64 * h).collect();
    let fs: Vec<f64> = xs.iter().map(|&x| rho0(x)).collect();
    if fs.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(Error::NonFinite {
            context: "initial density samples",
        });
    }
    let mut cum = vec![0.0; n + 1];
    for i in 0..n {
        cum[i + 1] = cum[i] + 0.5 * h * (fs[i] + fs[i + 1]);
    }
    let mass = cum[n];
    if !(mass > 0.0) {
        return Err(Error::ZeroMass { mass });
    }

    // Cumulative value at x inside sample interval i, with the integrand
    // taken as the linear interpolant of the samples.
    let cum_at = |i: usize, x: f64| -> f64 {
        let s = x - xs[i];
        let fx = fs[i] + (fs[i + 1] - fs[i]) * (s / h);
        cum[i] + 0.5 * s * (fs[i] + fx)
    };

    let tol = 1e-12 * mass;
    let mut nodes = vec![0.0; cells + 1];
    nodes[0] = a;
    nodes[cells] = b;
    for j in 1..cells {
        let target = mass * (j as f64 / cells as f64);
        // partition_point gives the first strictly larger cumulative entry.
        let mut i = cum.partition_point(|&c| c < target);
        i = i.clamp(1, n) - 1;
        let (mut lo, mut hi) = (xs[i], xs[i + 1]);
        let mut mid = 0.5 * (lo + hi);
        for _ in 0..200 {
            mid = 0.5 * (lo + hi);
            let g = cum_at(i, mid) - target;
            if g.abs() <= tol || hi - lo <= f64::EPSILON * (b - a).abs() {
                break;
            }
            if g > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        nodes[j] = mid;
    }
    let dist = InverseDistribution::new(MassGrid::new(cells, mass)?, nodes)?;
    Ok((dist, mass))
}
