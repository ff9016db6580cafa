//! Monotonicity thresholds for the node motion, plus the explicit reference
//! scheme they are proved for.
//!
//! The forward Euler scheme on the inverse distribution,
//!
//! ```text
//!   V'_j = V_j + dt chi c'(V_j) - dt [ Dt / gap_j^g  -  Dt / gap_{j-1}^g ]
//! ```
//!
//! with `Dt = D dw^{g-1} / g` and the flux through a missing neighbor
//! dropped at the ends, preserves the strict ordering of the nodes whenever
//! dt stays below both of the following bounds for some split `theta` in
//! (0, 1):
//!
//! ```text
//!   dt_diffusion = theta / (2 D dw^{g-1})
//!                  * min_j  gap_j gap_{j-1} / max(gap_{j-1}, gap_j)^{-(g-1)}
//!   dt_taxis     = (1 - theta) / chi
//!                  * min_j  gap_j / | c'(V_{j+1}) - c'(V_j) |
//! ```
//!
//! The production stepper treats diffusion implicitly, so only the taxis
//! half matters there: the adaptive controller uses the theta-free taxis
//! time scale, capped by a multiple of the cell mass. The explicit scheme
//! and the two bounds live here so the thresholds can be property-tested
//! directly against the scheme they were derived for.

use crate::error::{Error, Result};
use crate::mass::InverseDistribution;
use crate::spline::ClampedSpline;
use crate::transport::DiffusionLaw;

fn plain_coefficients(law: &DiffusionLaw) -> Result<(f64, f64)> {
    match *law {
        DiffusionLaw::Linear { d_rho } => Ok((d_rho, 1.0)),
        DiffusionLaw::PowerLaw { d_rho, gamma } => Ok((d_rho, gamma)),
        DiffusionLaw::VolumeFilling { .. } => Err(Error::Unsupported(
            "the explicit reference scheme covers plain diffusion only".into(),
        )),
    }
}

/// One forward Euler step of the node positions. The output is returned raw
/// — a non-monotone result is the interesting outcome for the threshold
/// tests, not an error.
pub fn explicit_euler_step(
    v: &InverseDistribution,
    spline: &ClampedSpline,
    chi: f64,
    law: &DiffusionLaw,
    dt: f64,
) -> Result<Vec<f64>> {
    let (d_rho, gamma) = plain_coefficients(law)?;
    let dw = v.grid.dw();
    let d_tilde = d_rho * dw.powf(gamma - 1.0) / gamma;
    let m = v.grid.cells;
    let nodes = &v.nodes;
    let mut out = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let right = if j < m {
            d_tilde / (nodes[j + 1] - nodes[j]).powf(gamma)
        } else {
            0.0
        };
        let left = if j > 0 {
            d_tilde / (nodes[j] - nodes[j - 1]).powf(gamma)
        } else {
            0.0
        };
        out.push(nodes[j] + dt * chi * spline.deriv(nodes[j]) - dt * (right - left));
    }
    Ok(out)
}

/// The theta-free taxis time scale: `min_j gap_j / (chi |c'(V_{j+1}) -
/// c'(V_j)|)`. Infinite when chi = 0 or the attractant slope is constant.
pub fn taxis_time_scale(v: &InverseDistribution, spline: &ClampedSpline, chi: f64) -> f64 {
    if chi == 0.0 {
        return f64::INFINITY;
    }
    let mut scale = f64::INFINITY;
    let mut prev = spline.deriv(v.nodes[0]);
    for pair in v.nodes.windows(2) {
        let next = spline.deriv(pair[1]);
        let denom = chi.abs() * (next - prev).abs();
        let candidate = (pair[1] - pair[0]) / denom;
        if candidate < scale {
            scale = candidate;
        }
        prev = next;
    }
    scale
}

/// The two monotonicity thresholds `(dt_diffusion, dt_taxis)` for the split
/// `theta`, evaluated exactly as displayed. The diffusion minimum runs over
/// the interior nodes (both neighboring gaps defined); the end fluxes drop
/// out of the scheme, so the interior rows are the binding ones.
pub fn cfl_bounds(
    v: &InverseDistribution,
    spline: &ClampedSpline,
    chi: f64,
    law: &DiffusionLaw,
    theta: f64,
) -> Result<(f64, f64)> {
    assert!(
        theta > 0.0 && theta < 1.0,
        "the split must lie strictly inside (0, 1)"
    );
    let (d_rho, gamma) = plain_coefficients(law)?;
    let dw = v.grid.dw();
    let m = v.grid.cells;

    let dt_diffusion = if d_rho == 0.0 {
        f64::INFINITY
    } else {
        let mut tightest = f64::INFINITY;
        for j in 1..m {
            let gap_left = v.nodes[j] - v.nodes[j - 1];
            let gap_right = v.nodes[j + 1] - v.nodes[j];
            let shrink = gap_left
                .powf(-(gamma - 1.0))
                .max(gap_right.powf(-(gamma - 1.0)));
            let term = gap_right * gap_left / shrink;
            if term < tightest {
                tightest = term;
            }
        }
        theta / (2.0 * d_rho * dw.powf(gamma - 1.0)) * tightest
    };

    let dt_taxis = (1.0 - theta) * taxis_time_scale(v, spline, chi);
    Ok((dt_diffusion, dt_taxis))
}
