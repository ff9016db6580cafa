//! The transport operator T: one implicit-explicit midpoint step of the
//! diffusion-taxis subsystem in inverse-distribution variables.
//!
//! With g_r = z_{j+1} - z_j, g_l = z_j - z_{j-1} and the flux kernel
//!
//! ```text
//! Phi(g) = d_lin / g + d_pow / g^gamma,
//! ```
//!
//! one step from the nodes V advances in two stages,
//!
//! ```text
//! stage 1 (implicit):  Vt_j = V_j - dt/2 * [ Phi(Vt gaps) difference - chi f_j dc(arg1_j) ]
//! stage 2 (explicit):  TV_j = V_j - dt   * [ Phi(Vt gaps) difference - chi f_j dc(Vt_j) ]
//! ```
//!
//! where dc is the attractant slope and f_j the volume-filling factor (1 for
//! the other laws). The attractant slope comes either from a clamped spline
//! fitted to the finite-element field — then stage 1 evaluates it at the old
//! nodes and the implicit system has a tridiagonal Jacobian — or from the
//! logarithmic-kernel convolution
//!
//! ```text
//! -dc(z_j) = dw/pi * sum over i != j of 1 / (z_j - z_i),
//! ```
//!
//! which couples every node to every other one: there stage 1 keeps the
//! convolution at the unknown nodes and the Newton solve works on the dense
//! Jacobian. Boundary fluxes follow the ghost convention 1/(gap outside) = 0
//! for free-end (whole line) runs; bounded domains pin the end nodes to the
//! walls instead, which is the discrete zero-flux condition there.
//!
//! Divergence of the Newton iteration is deliberately not repaired: for the
//! aggregation models it is the numerical signature of finite-time blow-up
//! and is reported as such.

use crate::error::{Error, Result};
use crate::mass::InverseDistribution;
use crate::spline::ClampedSpline;
use crate::tridiag::Tridiag;
use nalgebra::{DMatrix, DVector};

/// Diffusion nonlinearity of the cell equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiffusionLaw {
    /// Constant coefficient d_rho.
    Linear { d_rho: f64 },
    /// Coefficient d_rho * rho^(gamma-1), gamma > 1 (porous-medium type).
    PowerLaw { d_rho: f64, gamma: f64 },
    /// Volume filling with jump probability 1 - rho^gamma, gamma > 0:
    /// diffusion d_rho (1 + (gamma-1) rho^gamma), taxis damped by 1 - rho^gamma.
    VolumeFilling { d_rho: f64, gamma: f64 },
}

impl DiffusionLaw {
    pub fn check(&self) -> Result<()> {
        let mut problems = Vec::new();
        match *self {
            DiffusionLaw::Linear { d_rho } => {
                if !(d_rho >= 0.0) {
                    problems.push(format!("linear diffusion coefficient must be >= 0, got {d_rho}"));
                }
            }
            DiffusionLaw::PowerLaw { d_rho, gamma } => {
                if !(d_rho >= 0.0) {
                    problems.push(format!("power-law coefficient must be >= 0, got {d_rho}"));
                }
                if !(gamma > 1.0) {
                    problems.push(format!("power-law exponent must exceed 1, got {gamma}"));
                }
            }
            DiffusionLaw::VolumeFilling { d_rho, gamma } => {
                if !(d_rho >= 0.0) {
                    problems.push(format!("volume-filling coefficient must be >= 0, got {d_rho}"));
                }
                if !(gamma > 0.0) {
                    problems.push(format!("volume-filling exponent must be positive, got {gamma}"));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel { problems })
        }
    }

    /// Effective power-law coefficient d_rho * dw^(gamma-1) / gamma,
    /// recomputed from the current mass every step.
    pub fn d_tilde(&self, dw: f64) -> f64 {
        match *self {
            DiffusionLaw::Linear { .. } => 0.0,
            DiffusionLaw::PowerLaw { d_rho, gamma } | DiffusionLaw::VolumeFilling { d_rho, gamma } => {
                d_rho * dw.powf(gamma - 1.0) / gamma
            }
        }
    }

    fn flux_coeffs(&self, dw: f64) -> FluxCoeffs {
        match *self {
            DiffusionLaw::Linear { d_rho } => FluxCoeffs {
                lin: d_rho,
                pow: 0.0,
                gamma: 1.0,
            },
            DiffusionLaw::PowerLaw { gamma, .. } => FluxCoeffs {
                lin: 0.0,
                pow: self.d_tilde(dw),
                gamma,
            },
            DiffusionLaw::VolumeFilling { d_rho, gamma } => FluxCoeffs {
                // The nonlinear part of the jump-probability diffusion
                // D (1 + (gamma-1) rho^gamma) d_x rho transforms to the mass
                // coordinate as a power flux one order above gamma:
                // (gamma-1) rho^gamma d_x rho = (gamma-1)/(gamma+1) d_x rho^{gamma+1}.
                // Keeping the exponent at gamma would instead discretize
                // (gamma-1) rho^{gamma-1} d_x rho, whose combined coefficient
                // turns negative in the tails for gamma < 1 and pumps density
                // through the rho = 1 barrier.
                lin: d_rho,
                pow: d_rho * (gamma - 1.0) / (gamma + 1.0) * dw.powf(gamma),
                gamma: gamma + 1.0,
            },
        }
    }
}

/// Where the attractant slope comes from.
#[derive(Clone, Copy)]
pub enum TaxisSource<'a> {
    /// No taxis (chi = 0 runs and pure diffusion tests).
    None,
    /// Clamped-spline fit of the finite-element attractant.
    SplineField { spline: &'a ClampedSpline, chi: f64 },
    /// Logarithmic-kernel convolution of the cell density itself.
    LogKernel { chi: f64 },
}

/// Whether the end nodes move with the flow (whole-line models) or stay at
/// the domain walls (bounded, zero-flux models).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndMotion {
    Free,
    Pinned,
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonConfig {
    /// Residual sup-norm target, in length units.
    pub tol: f64,
    pub max_iter: u32,
    /// Residual growth ratio (against the best residual so far) that
    /// declares divergence.
    pub divergence_factor: f64,
}

impl NewtonConfig {
    /// Defaults scaled to the width of the occupied region.
    pub fn for_span(span: f64) -> Self {
        NewtonConfig {
            tol: 1e-10 * span,
            max_iter: 50,
            divergence_factor: 1e4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransportResult {
    pub v: InverseDistribution,
    /// Newton iterations spent in the implicit stage.
    pub newton_iters: u32,
}

#[derive(Clone, Copy)]
struct FluxCoeffs {
    lin: f64,
    pow: f64,
    gamma: f64,
}

impl FluxCoeffs {
    #[inline]
    fn phi(&self, g: f64) -> f64 {
        let mut v = self.lin / g;
        if self.pow != 0.0 {
            v += self.pow * g.powf(-self.gamma);
        }
        v
    }

    #[inline]
    fn dphi(&self, g: f64) -> f64 {
        let mut v = -self.lin / (g * g);
        if self.pow != 0.0 {
            v -= self.gamma * self.pow * g.powf(-self.gamma - 1.0);
        }
        v
    }
}

/// Volume-filling taxis damping 1 - (2 dw / (V_{j+1} - V_{j-1}))^gamma at the
/// previous nodes; the one-sided end estimates are replaced by zero density
/// (factor one), matching the no-flux walls.
fn vf_factors(nodes: &[f64], dw: f64, law: &DiffusionLaw) -> Vec<f64> {
    let m = nodes.len() - 1;
    match *law {
        DiffusionLaw::VolumeFilling { gamma, .. } => {
            let mut f = vec![1.0; m + 1];
            for j in 1..m {
                let centered = 2.0 * dw / (nodes[j + 1] - nodes[j - 1]);
                f[j] = 1.0 - centered.powf(gamma);
            }
            f
        }
        _ => vec![1.0; m + 1],
    }
}

/// Attractant slope at each position.
///
/// Spline sources return the clamped-spline derivative (zero outside the
/// fitted domain). The log kernel returns
/// `dc(x_j) = -dw/pi * sum over i != j of 1/(x_j - x_i)`, the principal-value
/// convolution on distinct points.
pub fn eval_taxis_gradient(
    taxis: &TaxisSource,
    dw: f64,
    positions: &[f64],
) -> Result<Vec<f64>> {
    match taxis {
        TaxisSource::None => Ok(vec![0.0; positions.len()]),
        TaxisSource::SplineField { spline, .. } => {
            Ok(positions.iter().map(|&x| spline.deriv(x)).collect())
        }
        TaxisSource::LogKernel { .. } => {
            let conv = log_kernel_sums(positions, dw)?;
            Ok(conv.into_iter().map(|s| -s).collect())
        }
    }
}

/// The raw convolution sums s_j = dw/pi * sum over i != j of 1/(x_j - x_i),
/// which equal minus the attractant slope.
fn log_kernel_sums(positions: &[f64], dw: f64) -> Result<Vec<f64>> {
    let n = positions.len();
    let scale = dw / std::f64::consts::PI;
    let mut sums = vec![0.0; n];
    for j in 0..n {
        let mut s = 0.0;
        for i in 0..n {
            if i == j {
                continue;
            }
            let d = positions[j] - positions[i];
            if d == 0.0 {
                return Err(Error::CoincidentNodes { i, j });
            }
            s += 1.0 / d;
        }
        sums[j] = scale * s;
    }
    Ok(sums)
}

/// Everything the stage-1 Newton solve needs, with the unknowns being the
/// node positions (all of them for free ends, the interior for pinned ends).
struct Stage1<'a> {
    v: &'a [f64],
    dt: f64,
    coeffs: FluxCoeffs,
    vf: &'a [f64],
    /// Precomputed -chi * f_j * dc(V_j) for explicit (spline) taxis.
    fixed_taxis: Option<Vec<f64>>,
    /// chi and dw for implicit (log-kernel) taxis.
    kernel: Option<(f64, f64)>,
    ends: EndMotion,
}

impl<'a> Stage1<'a> {
    fn node_count(&self) -> usize {
        self.v.len()
    }

    fn unknowns(&self) -> usize {
        match self.ends {
            EndMotion::Free => self.node_count(),
            EndMotion::Pinned => self.node_count() - 2,
        }
    }

    fn offset(&self) -> usize {
        match self.ends {
            EndMotion::Free => 0,
            EndMotion::Pinned => 1,
        }
    }

    /// G_j(z) (the bracketed operator) for every unknown index. For pinned
    /// runs the full node array z still carries the fixed wall values.
    fn operator(&self, z: &[f64]) -> Result<Vec<f64>> {
        let m = self.node_count() - 1;
        let off = self.offset();
        let conv = match self.kernel {
            Some((_, dw)) => Some(log_kernel_sums(z, dw)?),
            None => None,
        };
        let mut g = vec![0.0; self.unknowns()];
        for (u, gj) in g.iter_mut().enumerate() {
            let j = u + off;
            let mut val = 0.0;
            if j < m {
                val += self.coeffs.phi(z[j + 1] - z[j]);
            }
            if j > 0 {
                val -= self.coeffs.phi(z[j] - z[j - 1]);
            }
            if let Some(fixed) = &self.fixed_taxis {
                val += fixed[j];
            }
            if let (Some((chi, _)), Some(conv)) = (self.kernel, conv.as_ref()) {
                val += chi * self.vf[j] * conv[j];
            }
            *gj = val;
        }
        Ok(g)
    }

    /// Residual r_u = (z_j - V_j) + dt/2 G_j(z); returns the sup norm.
    fn residual(&self, z: &[f64], out: &mut Vec<f64>) -> Result<f64> {
        let g = self.operator(z)?;
        let off = self.offset();
        out.clear();
        let mut norm = 0.0_f64;
        for (u, gj) in g.iter().enumerate() {
            let j = u + off;
            let r = (z[j] - self.v[j]) + 0.5 * self.dt * gj;
            norm = if r.is_finite() { norm.max(r.abs()) } else { f64::INFINITY };
            out.push(r);
        }
        Ok(norm)
    }

    /// Tridiagonal Jacobian (diffusion implicit, taxis explicit).
    fn jacobian_tridiag(&self, z: &[f64]) -> Tridiag {
        let m = self.node_count() - 1;
        let off = self.offset();
        let n = self.unknowns();
        let half_dt = 0.5 * self.dt;
        let mut jac = Tridiag::zeros(n);
        for u in 0..n {
            let j = u + off;
            let mut diag = 0.0;
            if j < m {
                let dp = self.coeffs.dphi(z[j + 1] - z[j]);
                diag -= dp;
                if u + 1 < n {
                    jac.upper[u] = half_dt * dp;
                }
            }
            if j > 0 {
                let dp = self.coeffs.dphi(z[j] - z[j - 1]);
                diag -= dp;
                if u > 0 {
                    jac.lower[u - 1] = half_dt * dp;
                }
            }
            jac.diag[u] = 1.0 + half_dt * diag;
        }
        jac
    }

    /// Dense Jacobian for the implicit log-kernel convolution.
    fn jacobian_dense(&self, z: &[f64]) -> DMatrix<f64> {
        let m = self.node_count() - 1;
        let off = self.offset();
        let n = self.unknowns();
        let half_dt = 0.5 * self.dt;
        let (chi, dw) = self.kernel.expect("dense Jacobian is for kernel taxis");
        let scale = dw / std::f64::consts::PI;
        let mut jac = DMatrix::zeros(n, n);
        for u in 0..n {
            let j = u + off;
            let mut diag = 0.0;
            if j < m {
                let dp = self.coeffs.dphi(z[j + 1] - z[j]);
                diag -= dp;
                if u + 1 < n {
                    jac[(u, u + 1)] = half_dt * dp;
                }
            }
            if j > 0 {
                let dp = self.coeffs.dphi(z[j] - z[j - 1]);
                diag -= dp;
                if u > 0 {
                    jac[(u, u - 1)] = half_dt * dp;
                }
            }
            // d conv_j / d z_i = scale / (z_j - z_i)^2 for i != j, and the
            // diagonal collects minus the full inverse-square sum.
            let w = chi * self.vf[j] * scale;
            let mut sq_sum = 0.0;
            for i in 0..=m {
                if i == j {
                    continue;
                }
                let d = z[j] - z[i];
                let inv_sq = 1.0 / (d * d);
                sq_sum += inv_sq;
                if i >= off && i < off + n && i != j {
                    jac[(u, i - off)] += half_dt * w * inv_sq;
                }
            }
            jac[(u, u)] = 1.0 + half_dt * (diag - w * sq_sum);
        }
        jac
    }

    fn is_dense(&self) -> bool {
        self.kernel.is_some()
    }
}

/// Newton iteration on the stage-1 system, seeded with the current nodes.
/// Returns the full node array (walls included for pinned runs) and the
/// iteration count. Divergence — residual growth past the configured factor,
/// a non-finite residual, a singular Jacobian, or running out of iterations —
/// is reported as blow-up, which is its meaning for the aggregation models.
fn newton_stage1(sys: &Stage1, cfg: &NewtonConfig) -> Result<(Vec<f64>, u32)> {
    let mut z = sys.v.to_vec();
    let off = sys.offset();
    let mut r = Vec::new();
    let mut norm = sys.residual(&z, &mut r)?;
    if norm <= cfg.tol {
        return Ok((z, 0));
    }
    let mut best = norm;
    for it in 1..=cfg.max_iter {
        let delta = if sys.is_dense() {
            let jac = sys.jacobian_dense(&z);
            match jac.lu().solve(&DVector::from_column_slice(&r)) {
                Some(d) => d.as_slice().to_vec(),
                None => {
                    return Err(Error::BlowupDetected {
                        t: f64::NAN,
                        iterations: it,
                        residual: norm,
                    })
                }
            }
        } else {
            match sys.jacobian_tridiag(&z).solve(&r, "transport stage 1") {
                Ok(d) => d,
                Err(_) => {
                    return Err(Error::BlowupDetected {
                        t: f64::NAN,
                        iterations: it,
                        residual: norm,
                    })
                }
            }
        };
        for (u, d) in delta.iter().enumerate() {
            z[u + off] -= d;
        }
        norm = match sys.residual(&z, &mut r) {
            Ok(n) => n,
            Err(_) => f64::INFINITY,
        };
        if !norm.is_finite() || norm > cfg.divergence_factor * best {
            return Err(Error::BlowupDetected {
                t: f64::NAN,
                iterations: it,
                residual: norm,
            });
        }
        if norm <= cfg.tol {
            return Ok((z, it));
        }
        best = best.min(norm);
    }
    Err(Error::BlowupDetected {
        t: f64::NAN,
        iterations: cfg.max_iter,
        residual: norm,
    })
}

/// One transport step of size `dt` (mass and, for bounded runs, the wall
/// nodes are untouched). `dt` may be negative — the scheme is formally
/// time-reversible — but callers advancing a simulation pass `dt > 0`.
pub fn t_step(
    v: &InverseDistribution,
    taxis: &TaxisSource,
    law: &DiffusionLaw,
    ends: EndMotion,
    dt: f64,
    cfg: &NewtonConfig,
) -> Result<TransportResult> {
    assert!(dt.is_finite(), "time increment must be finite");
    let nodes = &v.nodes;
    let m = v.grid.cells;
    let dw = v.grid.dw();
    let coeffs = law.flux_coeffs(dw);
    let vf = vf_factors(nodes, dw, law);

    let (fixed_taxis, kernel) = match taxis {
        TaxisSource::None => (Some(vec![0.0; m + 1]), None),
        TaxisSource::SplineField { spline, chi } => {
            let fixed = nodes
                .iter()
                .zip(&vf)
                .map(|(&x, f)| -chi * f * spline.deriv(x))
                .collect();
            (Some(fixed), None)
        }
        TaxisSource::LogKernel { chi } => (None, Some((*chi, dw))),
    };

    let sys = Stage1 {
        v: nodes,
        dt,
        coeffs,
        vf: &vf,
        fixed_taxis,
        kernel,
        ends,
    };
    let (mid, newton_iters) = newton_stage1(&sys, cfg)?;

    // The midpoint nodes must be a valid arrangement for the explicit stage.
    if let Some(idx) = first_non_monotone(&mid) {
        return Err(Error::NonMonotoneResult {
            t: f64::NAN,
            index: idx,
        });
    }

    // Stage 2: same diffusion fluxes at the midpoint, taxis re-evaluated at
    // the midpoint positions (the volume-filling factor stays at the old
    // nodes), full step from the original positions.
    let off = sys.offset();
    let stage2_taxis: Vec<f64> = match taxis {
        TaxisSource::None => vec![0.0; m + 1],
        TaxisSource::SplineField { spline, chi } => mid
            .iter()
            .zip(&vf)
            .map(|(&x, f)| -chi * f * spline.deriv(x))
            .collect(),
        TaxisSource::LogKernel { chi } => {
            let conv = log_kernel_sums(&mid, dw).map_err(|_| Error::NonMonotoneResult {
                t: f64::NAN,
                index: 0,
            })?;
            conv.iter().zip(&vf).map(|(s, f)| chi * f * s).collect()
        }
    };

    let mut out = nodes.clone();
    for u in 0..sys.unknowns() {
        let j = u + off;
        let mut g = 0.0;
        if j < m {
            g += coeffs.phi(mid[j + 1] - mid[j]);
        }
        if j > 0 {
            g -= coeffs.phi(mid[j] - mid[j - 1]);
        }
        g += stage2_taxis[j];
        out[j] = nodes[j] - dt * g;
    }

    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            context: "transport step output",
        });
    }
    if let Some(idx) = first_non_monotone(&out) {
        return Err(Error::NonMonotoneResult {
            t: f64::NAN,
            index: idx,
        });
    }
    Ok(TransportResult {
        v: InverseDistribution {
            grid: v.grid,
            nodes: out,
        },
        newton_iters,
    })
}

fn first_non_monotone(nodes: &[f64]) -> Option<usize> {
    nodes
        .windows(2)
        .position(|w| !(w[1] > w[0]))
        .map(|i| i + 1)
}

/// Time scale of the explicit taxis motion: the smallest gap divided by the
/// velocity difference across it, using the nodal velocities the stage
/// equations actually apply (chi times the volume-filling factor times the
/// attractant slope). Infinite when the velocity field is uniform or the
/// taxis is absent.
pub fn taxis_velocity_time_scale(
    v: &InverseDistribution,
    taxis: &TaxisSource,
    law: &DiffusionLaw,
) -> Result<f64> {
    let chi = match taxis {
        TaxisSource::None => return Ok(f64::INFINITY),
        TaxisSource::SplineField { chi, .. } => *chi,
        TaxisSource::LogKernel { chi } => *chi,
    };
    let nodes = &v.nodes;
    let dw = v.grid.dw();
    let grad = eval_taxis_gradient(taxis, dw, nodes)?;
    let vf = vf_factors(nodes, dw, law);
    let mut scale = f64::INFINITY;
    for j in 0..nodes.len() - 1 {
        let du = (chi * vf[j + 1] * grad[j + 1] - chi * vf[j] * grad[j]).abs();
        if du > 0.0 {
            scale = scale.min((nodes[j + 1] - nodes[j]) / du);
        }
    }
    Ok(scale)
}

/// Largest admissible increment of the form dt0 / 2^k (k <= max_halvings)
/// for which the stage-1 Jacobian at the initial guess is strictly
/// diagonally dominant by rows. For explicit (spline) taxis the Jacobian is
/// an M-matrix perturbation of the identity and dt0 is returned unchanged;
/// for the log kernel the attraction term erodes the diagonal and forces
/// genuine halving near aggregation.
pub fn stage1_sdd_dt(
    v: &InverseDistribution,
    taxis: &TaxisSource,
    law: &DiffusionLaw,
    ends: EndMotion,
    dt0: f64,
    max_halvings: u32,
) -> Result<f64> {
    assert!(dt0 > 0.0 && dt0.is_finite());
    let nodes = &v.nodes;
    let m = v.grid.cells;
    let dw = v.grid.dw();
    let coeffs = law.flux_coeffs(dw);
    let vf = vf_factors(nodes, dw, law);
    let (off, n) = match ends {
        EndMotion::Free => (0usize, m + 1),
        EndMotion::Pinned => (1usize, m - 1),
    };

    // Assemble the dt-independent part a = dG/dz at z = V once; row u of the
    // Jacobian is then I + dt/2 * a and dominance is checked per candidate.
    let mut diag = vec![0.0; n];
    let mut offsum = vec![0.0; n];
    let kernel_chi = match taxis {
        TaxisSource::LogKernel { chi } => Some(*chi),
        _ => None,
    };
    let scale = dw / std::f64::consts::PI;
    for u in 0..n {
        let j = u + off;
        let mut d = 0.0;
        if j < m {
            let dp = coeffs.dphi(nodes[j + 1] - nodes[j]);
            d -= dp;
            if u + 1 < n {
                offsum[u] += dp.abs();
            }
        }
        if j > 0 {
            let dp = coeffs.dphi(nodes[j] - nodes[j - 1]);
            d -= dp;
            if u > 0 {
                offsum[u] += dp.abs();
            }
        }
        if let Some(chi) = kernel_chi {
            let w = chi * vf[j] * scale;
            let mut sq_sum = 0.0;
            for i in 0..=m {
                if i == j {
                    continue;
                }
                let dd = nodes[j] - nodes[i];
                let inv_sq = 1.0 / (dd * dd);
                sq_sum += inv_sq;
                if i >= off && i < off + n {
                    // off-diagonal kernel entry; diffusion neighbors were
                    // already counted, so add the kernel part separately.
                    offsum[u] += (w * inv_sq).abs();
                }
            }
            d -= w * sq_sum;
        }
        diag[u] = d;
    }

    let mut dt = dt0;
    for _ in 0..=max_halvings {
        let half = 0.5 * dt;
        let dominant = (0..n).all(|u| {
            let dd = (1.0 + half * diag[u]).abs();
            dd > half * offsum[u] && dd.is_finite()
        });
        if dominant {
            return Ok(dt);
        }
        dt *= 0.5;
    }
    Err(Error::TimeStepUnderflow {
        t: f64::NAN,
        dt,
        floor: dt0 * 0.5_f64.powi(max_halvings as i32),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mass::MassGrid;
    use statrs::function::erf::{erf, erf_inv};

    fn symmetric_nodes(m: usize, spread: f64) -> Vec<f64> {
        (0..=m)
            .map(|j| {
                let s = 2.0 * j as f64 / m as f64 - 1.0; // -1 .. 1
                spread * (s + 0.3 * s * s * s)
            })
            .collect()
    }

    fn inverse_peak_nodes(m: usize) -> Vec<f64> {
        (0..=m)
            .map(|j| {
                let w = j as f64 / m as f64;
                (w - 0.5) / ((w + 0.01) * (1.01 - w)).powf(0.25)
            })
            .collect()
    }

    #[test]
    fn pure_diffusion_keeps_symmetry_and_mass() {
        let m = 16;
        let v = InverseDistribution::new(
            MassGrid::new(m, 2.0).unwrap(),
            symmetric_nodes(m, 1.5),
        )
        .unwrap();
        let law = DiffusionLaw::Linear { d_rho: 1.0 };
        let cfg = NewtonConfig::for_span(v.span());
        let out = t_step(&v, &TaxisSource::None, &law, EndMotion::Free, 1e-3, &cfg).unwrap();
        assert_eq!(out.v.grid, v.grid, "mass grid must be untouched");
        for j in 0..=m {
            let sym = out.v.nodes[j] + out.v.nodes[m - j];
            assert!(sym.abs() <= 1e-9, "symmetry defect {sym:e} at node {j}");
        }
        // Diffusion spreads the support.
        assert!(out.v.span() > v.span());
    }

    #[test]
    fn zero_increment_is_the_identity() {
        let m = 10;
        let v = InverseDistribution::new(
            MassGrid::new(m, 1.0).unwrap(),
            symmetric_nodes(m, 1.0),
        )
        .unwrap();
        let cfg = NewtonConfig::for_span(v.span());
        let out = t_step(
            &v,
            &TaxisSource::None,
            &DiffusionLaw::Linear { d_rho: 1.0 },
            EndMotion::Free,
            0.0,
            &cfg,
        )
        .unwrap();
        assert_eq!(out.newton_iters, 0);
        assert_eq!(out.v.nodes, v.nodes);
    }

    #[test]
    fn translation_equivariance_without_taxis() {
        let m = 24;
        let nodes = symmetric_nodes(m, 2.0);
        let grid = MassGrid::new(m, 1.3).unwrap();
        let v = InverseDistribution::new(grid, nodes.clone()).unwrap();
        let shifted = InverseDistribution::new(
            grid,
            nodes.iter().map(|x| x + 2.37).collect(),
        )
        .unwrap();
        let law = DiffusionLaw::PowerLaw { d_rho: 0.7, gamma: 2.0 };
        let cfg = NewtonConfig::for_span(v.span());
        let a = t_step(&v, &TaxisSource::None, &law, EndMotion::Free, 5e-4, &cfg).unwrap();
        let b = t_step(&shifted, &TaxisSource::None, &law, EndMotion::Free, 5e-4, &cfg).unwrap();
        for j in 0..=m {
            let diff = b.v.nodes[j] - a.v.nodes[j] - 2.37;
            assert!(diff.abs() <= 1e-11 * v.span(), "node {j} off by {diff:e}");
        }
    }

    #[test]
    fn newton_converges_fast_on_linear_diffusion() {
        let m = 40;
        let v = InverseDistribution::new(
            MassGrid::new(m, 1.0).unwrap(),
            symmetric_nodes(m, 1.0),
        )
        .unwrap();
        let cfg = NewtonConfig::for_span(v.span());
        let out = t_step(
            &v,
            &TaxisSource::None,
            &DiffusionLaw::Linear { d_rho: 1.0 },
            EndMotion::Free,
            1e-4,
            &cfg,
        )
        .unwrap();
        assert!(
            out.newton_iters <= 5,
            "expected quadratic convergence, used {} iterations",
            out.newton_iters
        );
    }

    #[test]
    fn one_heat_kernel_step_tracks_the_exact_solution() {
        // rho(t, x) = (4 pi t)^(-1/2) exp(-x^2 / (4t)), unit mass, D = 1.
        // Seed the nodes with the exact quantiles at t0, take one step, and
        // compare the per-cell masses against the exact kernel at t0 + dt.
        let (m, t0, dt) = (50usize, 0.1, 1e-3);
        let sigma = |t: f64| (4.0 * t).sqrt();
        let quantile = |q: f64, t: f64| sigma(t) * erf_inv(2.0 * q.clamp(1e-12, 1.0 - 1e-12) - 1.0);
        let cdf = |x: f64, t: f64| 0.5 * (1.0 + erf(x / sigma(t)));

        let nodes: Vec<f64> = (0..=m).map(|j| quantile(j as f64 / m as f64, t0)).collect();
        let v = InverseDistribution::new(MassGrid::new(m, 1.0).unwrap(), nodes).unwrap();
        let cfg = NewtonConfig::for_span(v.span());
        let out = t_step(
            &v,
            &TaxisSource::None,
            &DiffusionLaw::Linear { d_rho: 1.0 },
            EndMotion::Free,
            dt,
            &cfg,
        )
        .unwrap();

        let dw = v.grid.dw();
        let mut l1 = 0.0;
        for j in 1..=m {
            let exact = cdf(out.v.nodes[j], t0 + dt) - cdf(out.v.nodes[j - 1], t0 + dt);
            l1 += (dw - exact).abs();
        }
        println!("one-step heat-kernel cell-mass error: {l1:e}");
        assert!(l1 <= 5.0 * (dt * dt + 1.0 / (m * m) as f64), "error {l1:e}");
    }

    #[test]
    fn log_kernel_gradient_is_antisymmetric() {
        let m = 12;
        let nodes = symmetric_nodes(m, 1.0);
        let grad = eval_taxis_gradient(&TaxisSource::LogKernel { chi: 1.0 }, 0.25, &nodes).unwrap();
        for j in 0..=m {
            let odd = grad[j] + grad[m - j];
            assert!(odd.abs() <= 1e-12, "gradient not odd at {j}: {odd:e}");
        }
    }

    #[test]
    fn log_kernel_gradient_three_node_values() {
        // V = (-1, 0, 1), dw = 1/3: the center sum cancels; at the left end
        // the sum is (1/(-1) + 1/(-2)) dw/pi, so the slope is +1.5 dw/pi.
        let nodes = [-1.0, 0.0, 1.0];
        let dw = 1.0 / 3.0;
        let grad = eval_taxis_gradient(&TaxisSource::LogKernel { chi: 1.0 }, dw, &nodes).unwrap();
        assert!(grad[1].abs() <= 1e-15);
        let want = 1.5 * dw / std::f64::consts::PI;
        assert!((grad[0] - want).abs() <= 1e-15, "left slope {}", grad[0]);
        assert!((grad[2] + want).abs() <= 1e-15, "right slope {}", grad[2]);
    }

    #[test]
    fn log_kernel_rejects_coincident_nodes() {
        let nodes = [0.0, 1.0, 1.0];
        let err = eval_taxis_gradient(&TaxisSource::LogKernel { chi: 1.0 }, 0.5, &nodes).unwrap_err();
        assert!(matches!(err, Error::CoincidentNodes { .. }));
    }

    #[test]
    fn spline_gradient_matches_logistic_derivative() {
        use crate::euler::{EulerGrid, FeField};
        let end = 0.5 / (0.0101_f64).powf(0.25);
        let grid = EulerGrid::new(-end, end, 230);
        let field = FeField::from_fn(grid, |x| 1.0 / (1.0 + (-5.0 * x).exp()));
        let spline = ClampedSpline::from_field(&field).unwrap();
        let taxis = TaxisSource::SplineField { spline: &spline, chi: 1.0 };
        let positions = [-0.8, -0.2, 0.0, 0.3, 0.9];
        let grad = eval_taxis_gradient(&taxis, 0.0, &positions).unwrap();
        for (&x, &g) in positions.iter().zip(&grad) {
            let s = 1.0 / (1.0 + (-5.0 * x).exp());
            let exact = 5.0 * s * (1.0 - s);
            assert!(
                (g - exact).abs() <= 0.02 * exact.abs().max(0.2),
                "slope at {x}: got {g}, want {exact}"
            );
        }
    }

    #[test]
    fn sdd_rule_only_halves_for_the_kernel() {
        let m = 50;
        let v = InverseDistribution::new(
            MassGrid::new(m, 1.0).unwrap(),
            inverse_peak_nodes(m),
        )
        .unwrap();
        let dt0 = 0.98;
        // Spline-free diffusive run: dominance holds at any dt.
        let dt_lin = stage1_sdd_dt(
            &v,
            &TaxisSource::None,
            &DiffusionLaw::Linear { d_rho: 1.0 },
            EndMotion::Free,
            dt0,
            200,
        )
        .unwrap();
        assert_eq!(dt_lin, dt0);
        // The aggregation kernel forces halving.
        let chi = 2.5 * std::f64::consts::PI;
        let dt_ker = stage1_sdd_dt(
            &v,
            &TaxisSource::LogKernel { chi },
            &DiffusionLaw::Linear { d_rho: 1.0 },
            EndMotion::Free,
            dt0,
            200,
        )
        .unwrap();
        assert!(dt_ker < dt0, "kernel run should halve, kept {dt_ker}");
        assert!(dt_ker > 0.0);
    }

    #[test]
    fn aggregation_collapses_under_the_dominance_rule() {
        // Keller-Segel with logarithmic kernel, chi = 2.5 pi, single-peak
        // initial data: supercritical mass, so the density concentrates in
        // finite time. Under the dominance rule the increments shrink with
        // the collapsing gap and the solver itself stays convergent while
        // the simulation time pins against the blow-up time; the peak height
        // grows without bound. (The driver turns that stall into the
        // blow-up verdict; divergence at fixed dt is tested separately.)
        let m = 50;
        let chi = 2.5 * std::f64::consts::PI;
        let law = DiffusionLaw::Linear { d_rho: 1.0 };
        let taxis = TaxisSource::LogKernel { chi };
        let mut v = InverseDistribution::new(
            MassGrid::new(m, 1.0).unwrap(),
            inverse_peak_nodes(m),
        )
        .unwrap();
        let rho_max_initial = {
            let min_gap = v.nodes.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
            v.grid.dw() / min_gap
        };
        let cfg = NewtonConfig::for_span(v.span());
        let dt0 = 0.49 * 100.0 * v.grid.dw();
        let mut t = 0.0;
        for _ in 0..30000 {
            let mut dt = stage1_sdd_dt(&v, &taxis, &law, EndMotion::Free, dt0, 300).unwrap();
            let mut attempts = 0;
            loop {
                match t_step(&v, &taxis, &law, EndMotion::Free, dt, &cfg) {
                    Ok(res) => {
                        v = res.v;
                        t += dt;
                        break;
                    }
                    Err(e) if e.is_retryable() && attempts < 60 => {
                        dt *= 0.5;
                        attempts += 1;
                    }
                    Err(e) => panic!("dominance-ruled stepping must stay convergent: {e}"),
                }
            }
        }
        let min_gap = v.nodes.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let rho_max = v.grid.dw() / min_gap;
        println!("after 30000 steps: t = {t:.6}, max rho = {rho_max:.3e}");
        assert!(
            (0.25..0.45).contains(&t),
            "time should pin near the blow-up time 0.33, got {t}"
        );
        assert!(
            rho_max > 100.0 * rho_max_initial,
            "peak should have concentrated: {rho_max:e} vs initial {rho_max_initial:e}"
        );
    }

    #[test]
    fn aggregation_at_fixed_increment_diverges() {
        // Holding dt fixed instead of shrinking it with the dominance rule,
        // the Newton iteration of the implicit stage eventually diverges as
        // the peak concentrates: that divergence is the numerical blow-up
        // signal and must appear before t = 0.35.
        let m = 50;
        let chi = 2.5 * std::f64::consts::PI;
        let law = DiffusionLaw::Linear { d_rho: 1.0 };
        let taxis = TaxisSource::LogKernel { chi };
        let mut v = InverseDistribution::new(
            MassGrid::new(m, 1.0).unwrap(),
            inverse_peak_nodes(m),
        )
        .unwrap();
        let cfg = NewtonConfig::for_span(v.span());
        let dt = 1e-3;
        let mut t = 0.0;
        let mut outcome = None;
        for _ in 0..2000 {
            match t_step(&v, &taxis, &law, EndMotion::Free, dt, &cfg) {
                Ok(res) => {
                    v = res.v;
                    t += dt;
                }
                Err(e) => {
                    outcome = Some(e);
                    break;
                }
            }
        }
        let err = outcome.expect("fixed-increment aggregation must fail in finite time");
        println!("fixed-dt run failed at t = {t:.4}: {err}");
        assert!(t < 0.35, "failure should arrive before t = 0.35, got {t}");
        assert!(
            matches!(err, Error::BlowupDetected { .. } | Error::NonMonotoneResult { .. }),
            "unexpected failure kind: {err}"
        );
    }

    #[test]
    fn pinned_ends_stay_on_the_walls() {
        use crate::euler::{EulerGrid, FeField};
        let m = 30;
        let (a, b) = (0.0, 1.0);
        let nodes: Vec<f64> = (0..=m)
            .map(|j| {
                let s = j as f64 / m as f64;
                a + (b - a) * (s + 0.2 * s * (1.0 - s)) // uneven but monotone
            })
            .collect();
        let v = InverseDistribution::new(MassGrid::new(m, 0.8).unwrap(), nodes).unwrap();
        let grid = EulerGrid::new(a, b, 40);
        let field = FeField::from_fn(grid, |x| (1.0 - x) * (1.0 - x));
        let spline = ClampedSpline::from_field(&field).unwrap();
        let taxis = TaxisSource::SplineField { spline: &spline, chi: 0.5 };
        let law = DiffusionLaw::Linear { d_rho: 0.01 };
        let cfg = NewtonConfig::for_span(b - a);
        let out = t_step(&v, &taxis, &law, EndMotion::Pinned, 1e-3, &cfg).unwrap();
        assert_eq!(out.v.nodes[0], a);
        assert_eq!(out.v.nodes[m], b);
        // Taxis pulls mass toward the attractant maximum at the left wall.
        assert!(out.v.nodes[m / 2] < v.nodes[m / 2]);
    }
}
