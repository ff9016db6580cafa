//! The reaction/diffusion half of the splitting: operator S.
//!
//! S advances the non-transport physics over one increment: the cell
//! averages of the transported density react by an explicit midpoint rule,
//! each diffusing chemical is advanced by an implicit-explicit midpoint
//! finite-element update, non-diffusing fields (such as extracellular
//! matrix) solve the same midpoint ODE at every node, and finally the total
//! mass is refreshed and the inverse distribution re-inverted on the new
//! cell values.
//!
//! With cell averages `rho_j` and reaction rate `R`:
//!
//! ```text
//!   rho~_j = rho_j + (dt/2) R(rho_j)
//!   S rho_j = rho_j + dt R(rho~_j)
//! ```
//!
//! and for a diffusing field c with diffusivity D and time scale eps
//! (eps dc/dt = D c'' + R_c), in weak form with mass matrix M and stiffness
//! matrix A:
//!
//! ```text
//!   (2 eps/dt) M (c~ - c) = -D A c~ + load(rho_h, c_h)
//!   (eps/dt)   M (Sc - c) = -D A c~ + load(rho~_h, c~_h)
//! ```
//!
//! The load vector integrates the reaction against each basis function over
//! the overlay of the finite-element mesh and the density's cell partition,
//! which makes the quadrature exact for the product reactions used by the
//! catalog models. The updated mass is
//!
//! ```text
//!   m' = sum_j (S rho_j) (V_j - V_{j-1})
//! ```
//!
//! after which the node positions are re-inverted from the piecewise
//! constant density with values `S rho_j` so that every cell again carries
//! the same mass fraction. When no reaction touches the cell averages the
//! re-inversion short-circuits and the nodes are returned bitwise unchanged.

use crate::error::{Error, Result};
use crate::euler::{assemble_fe_matrices, overlay_quadrature, EulerGrid, FeField};
use crate::mass::{invert_cdf, reconstruct_density, InverseDistribution, PiecewiseConstantDensity};

/// A quantity a reaction term can reference: the transported density itself
/// or one of the chemical fields, by position in the [`FieldSystem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Species {
    Rho,
    Field(usize),
}

/// One additive term of a reaction rate.
#[derive(Debug, Clone, PartialEq)]
pub enum ReactionTerm {
    /// `coef * product of factors`; an empty factor list is a constant source.
    Product { coef: f64, factors: Vec<Species> },
    /// `coef * s * (1 - s)`: logistic growth of one species.
    Logistic { coef: f64, species: Species },
}

/// A reaction rate: a sum of product and logistic terms.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Reaction {
    pub terms: Vec<ReactionTerm>,
}

impl Reaction {
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Evaluate the rate for the given density value and field values
    /// (indexed as in the owning [`FieldSystem`]).
    pub fn eval(&self, rho: f64, fields: &[f64]) -> f64 {
        let lookup = |s: Species| match s {
            Species::Rho => rho,
            Species::Field(i) => fields[i],
        };
        let mut rate = 0.0;
        for term in &self.terms {
            match term {
                ReactionTerm::Product { coef, factors } => {
                    let mut p = *coef;
                    for &f in factors {
                        p *= lookup(f);
                    }
                    rate += p;
                }
                ReactionTerm::Logistic { coef, species } => {
                    let s = lookup(*species);
                    rate += coef * s * (1.0 - s);
                }
            }
        }
        rate
    }

    /// Every species the reaction mentions, for validation.
    pub fn species(&self) -> Vec<Species> {
        let mut out = Vec::new();
        for term in &self.terms {
            match term {
                ReactionTerm::Product { factors, .. } => out.extend(factors.iter().copied()),
                ReactionTerm::Logistic { species, .. } => out.push(*species),
            }
        }
        out
    }
}

/// How a chemical field evolves between reactions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldKind {
    /// Diffusing chemical: `eps dc/dt = d c'' + R`, solved on the
    /// finite-element basis.
    Diffusing { d: f64, eps: f64 },
    /// Non-diffusing field: the reaction ODE is solved at every node.
    Nodal,
}

/// One named chemical field together with its dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldVariable {
    pub name: String,
    pub kind: FieldKind,
    pub field: FeField,
    pub reaction: Option<Reaction>,
}


/// The full set of chemical fields, all sharing one finite-element grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FieldSystem {
    pub vars: Vec<FieldVariable>,
}

impl FieldSystem {
    pub fn new(vars: Vec<FieldVariable>) -> Result<Self> {
        let mut problems = Vec::new();
        if let Some(first) = vars.first() {
            let grid = first.field.grid;
            for var in &vars {
                if var.field.grid != grid {
                    problems.push(format!(
                        "field '{}' lives on a different grid than '{}'",
                        var.name, first.name
                    ));
                }
            }
        }
        for (i, var) in vars.iter().enumerate() {
            if var.name.is_empty() {
                problems.push(format!("field #{i} has an empty name"));
            }
            if vars[..i].iter().any(|v| v.name == var.name) {
                problems.push(format!("duplicate field name '{}'", var.name));
            }
            if let FieldKind::Diffusing { d, eps } = var.kind {
                if !(d.is_finite() && d >= 0.0) {
                    problems.push(format!("field '{}': diffusivity must be >= 0", var.name));
                }
                if !(eps.is_finite() && eps > 0.0) {
                    problems.push(format!("field '{}': time scale must be > 0", var.name));
                }
            }
            if let Some(reaction) = &var.reaction {
                for s in reaction.species() {
                    if let Species::Field(k) = s {
                        if k >= vars.len() {
                            problems.push(format!(
                                "field '{}': reaction references field #{k}, out of range",
                                var.name
                            ));
                        }
                    }
                }
            }
        }
        if problems.is_empty() {
            Ok(FieldSystem { vars })
        } else {
            Err(Error::InvalidModel { problems })
        }
    }

    /// A system with no chemical fields at all.
    pub fn empty() -> Self {
        FieldSystem { vars: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// The shared finite-element grid, if any field exists.
    pub fn grid(&self) -> Option<EulerGrid> {
        self.vars.first().map(|v| v.field.grid)
    }

    pub fn by_name(&self, name: &str) -> Option<&FieldVariable> {
        self.vars.iter().find(|v| v.name == name)
    }
}

/// Boundary handling knobs for the reaction stage.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundaryPolicy {
    /// Exempt the last cell average from both reaction stages (its interfaces
    /// still move in the transport step). Used when a wall sits right of the
    /// populated region and the growth term would otherwise pile mass onto it.
    pub freeze_last_cell_reaction: bool,
}

/// Running count of negative field values clamped to zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClampWarnings {
    /// Number of coefficients clamped.
    pub clamped: usize,
    /// Largest magnitude that was clamped away.
    pub worst: f64,
}

impl ClampWarnings {
    /// Fold in one clamp report: `most_negative` is the raw (non-positive)
    /// extreme value that was floored, as returned by the field clamp.
    pub fn absorb(&mut self, count: usize, most_negative: f64) {
        self.clamped += count;
        let magnitude = (-most_negative).max(0.0);
        if magnitude > self.worst {
            self.worst = magnitude;
        }
    }

    pub fn merge(&mut self, other: ClampWarnings) {
        self.clamped += other.clamped;
        if other.worst > self.worst {
            self.worst = other.worst;
        }
    }
}

/// Output of one reaction step.
#[derive(Debug, Clone)]
pub struct ReactionResult {
    pub v: InverseDistribution,
    pub fields: FieldSystem,
    pub warnings: ClampWarnings,
}

/// New total mass after the reaction updated the cell averages:
/// the weighted sum of the values over the current cell widths.
pub fn update_mass(cell_values: &[f64], v: &InverseDistribution) -> Result<f64> {
    if cell_values.len() != v.grid.cells {
        return Err(Error::ResolutionMismatch {
            context: "cell values for the mass update",
            expected: v.grid.cells,
            got: cell_values.len(),
        });
    }
    let mass: f64 = cell_values
        .iter()
        .zip(v.nodes.windows(2))
        .map(|(&val, pair)| val * (pair[1] - pair[0]))
        .sum();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass { mass });
    }
    Ok(mass)
}

/// One reaction/diffusion step of size `dt`.
///
/// The cell averages react by the explicit midpoint rule, diffusing fields
/// by the implicit-explicit midpoint finite-element update (two tridiagonal
/// solves each), non-diffusing fields by the nodal midpoint ODE; then the
/// mass is refreshed and the nodes re-inverted. Stage one of every field
/// reads the old density and old fields; stage two reads the midpoint
/// density and midpoint fields, exactly as the scheme is written.
pub fn s_step(
    v: &InverseDistribution,
    fields: &FieldSystem,
    cell_reaction: Option<&Reaction>,
    dt: f64,
    policy: BoundaryPolicy,
) -> Result<ReactionResult> {
    assert!(dt.is_finite(), "time increment must be finite");

    let m = v.grid.cells;
    let rho_old = reconstruct_density(v);
    let rho = rho_old.values.clone();
    let mut warnings = ClampWarnings::default();

    let react_cells = cell_reaction.filter(|r| !r.is_empty());
    let frozen = |j: usize| policy.freeze_last_cell_reaction && j + 1 == m;

    // Stage one of the cell averages: explicit midpoint predictor.
    let rho_mid = match react_cells {
        None => rho.clone(),
        Some(r) => {
            let mut mid = rho.clone();
            for (j, val) in mid.iter_mut().enumerate() {
                if frozen(j) {
                    continue;
                }
                *val = rho[j] + 0.5 * dt * r.eval(rho[j], &[]);
                if !(*val > 0.0) {
                    return Err(Error::NonPositiveDensity {
                        t: f64::NAN,
                        cell: j,
                        value: *val,
                    });
                }
            }
            mid
        }
    };

    // Stage one of the fields: Jacobi-style, every load reads the old state.
    let mut new_vars = fields.vars.clone();
    if !fields.is_empty() {
        let grid = fields.grid().expect("non-empty system has a grid");
        let matrices = assemble_fe_matrices(&grid);
        let old_refs: Vec<&FeField> = fields.vars.iter().map(|var| &var.field).collect();

        let mut mid_fields: Vec<FeField> = Vec::with_capacity(fields.vars.len());
        for var in &fields.vars {
            let reaction = var.reaction.as_ref().filter(|r| !r.is_empty());
            let mid = match var.kind {
                FieldKind::Diffusing { d, eps } => {
                    if d == 0.0 && reaction.is_none() {
                        var.field.clone()
                    } else {
                        let scale = 2.0 * eps / dt;
                        let mut rhs = matrices.mass.mul_vec(&var.field.coeffs);
                        for r in rhs.iter_mut() {
                            *r *= scale;
                        }
                        if let Some(reac) = reaction {
                            let load = overlay_quadrature(&rho_old, &old_refs, &grid, |rv, fv| {
                                reac.eval(rv, fv)
                            });
                            for (r, l) in rhs.iter_mut().zip(&load) {
                                *r += l;
                            }
                        }
                        let lhs = scale_diag(&matrices.mass, scale).scaled_add(d, &matrices.stiffness);
                        let coeffs = lhs.solve(&rhs, "field stage one")?;
                        let mut f = FeField { grid, coeffs };
                        let (count, worst) = f.clamp_negatives();
                        warnings.absorb(count, worst);
                        f
                    }
                }
                FieldKind::Nodal => {
                    if reaction.is_none() {
                        var.field.clone()
                    } else {
                        let reac = reaction.unwrap();
                        let mut f = var.field.clone();
                        let mut at_node = vec![0.0; fields.vars.len()];
                        for k in 0..f.coeffs.len() {
                            let x = grid.node(k + 1);
                            for (slot, other) in at_node.iter_mut().zip(&fields.vars) {
                                *slot = other.field.coeffs[k];
                            }
                            f.coeffs[k] += 0.5 * dt * reac.eval(rho_old.eval(x), &at_node);
                        }
                        let (count, worst) = f.clamp_negatives();
                        warnings.absorb(count, worst);
                        f
                    }
                }
            };
            mid_fields.push(mid);
        }

        // Stage two: midpoint density and midpoint fields drive the update.
        let rho_mid_pc = PiecewiseConstantDensity {
            interfaces: v.nodes.clone(),
            values: rho_mid.clone(),
        };
        let mid_refs: Vec<&FeField> = mid_fields.iter().collect();
        for ((var, out), mid) in fields.vars.iter().zip(&mut new_vars).zip(&mid_fields) {
            let reaction = var.reaction.as_ref().filter(|r| !r.is_empty());
            match var.kind {
                FieldKind::Diffusing { d, eps } => {
                    if d == 0.0 && reaction.is_none() {
                        continue; // identity, bitwise
                    }
                    let mut rhs = matrices.mass.mul_vec(&var.field.coeffs);
                    if d != 0.0 {
                        let sm = matrices.stiffness.mul_vec(&mid.coeffs);
                        for (r, s) in rhs.iter_mut().zip(&sm) {
                            *r -= dt / eps * d * s;
                        }
                    }
                    if let Some(reac) = reaction {
                        let load = overlay_quadrature(&rho_mid_pc, &mid_refs, &grid, |rv, fv| {
                            reac.eval(rv, fv)
                        });
                        for (r, l) in rhs.iter_mut().zip(&load) {
                            *r += dt / eps * l;
                        }
                    }
                    let coeffs = matrices.mass.solve(&rhs, "field stage two")?;
                    out.field = FeField { grid, coeffs };
                    let (count, worst) = out.field.clamp_negatives();
                    warnings.absorb(count, worst);
                }
                FieldKind::Nodal => {
                    if reaction.is_none() {
                        continue;
                    }
                    let reac = reaction.unwrap();
                    let mut f = var.field.clone();
                    let mut at_node = vec![0.0; mid_fields.len()];
                    for k in 0..f.coeffs.len() {
                        let x = grid.node(k + 1);
                        for (slot, other) in at_node.iter_mut().zip(&mid_fields) {
                            *slot = other.coeffs[k];
                        }
                        f.coeffs[k] += dt * reac.eval(rho_mid_pc.eval(x), &at_node);
                    }
                    let (count, worst) = f.clamp_negatives();
                    warnings.absorb(count, worst);
                    out.field = f;
                }
            }
        }
    }

    // Stage two of the cell averages: corrector at the midpoint values.
    let rho_new = match react_cells {
        None => rho.clone(),
        Some(r) => {
            let mut out = rho.clone();
            for (j, val) in out.iter_mut().enumerate() {
                if frozen(j) {
                    continue;
                }
                *val = rho[j] + dt * r.eval(rho_mid[j], &[]);
                if !(*val > 0.0) {
                    return Err(Error::NonPositiveDensity {
                        t: f64::NAN,
                        cell: j,
                        value: *val,
                    });
                }
            }
            out
        }
    };

    for var in &new_vars {
        if var.field.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite {
                context: "chemical field after the reaction step",
            });
        }
    }
    if rho_new.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite {
            context: "cell averages after the reaction step",
        });
    }

    // Mass refresh and re-inversion; bitwise identity when the averages
    // were untouched so that a reaction-free step cannot perturb the nodes.
    let v_new = if rho_new == rho {
        v.clone()
    } else {
        let mass = update_mass(&rho_new, v)?;
        let density = PiecewiseConstantDensity {
            interfaces: v.nodes.clone(),
            values: rho_new,
        };
        invert_cdf(&density, mass, m)?
    };

    Ok(ReactionResult {
        v: v_new,
        fields: FieldSystem { vars: new_vars },
        warnings,
    })
}

fn scale_diag(t: &crate::tridiag::Tridiag, scale: f64) -> crate::tridiag::Tridiag {
    crate::tridiag::Tridiag {
        lower: t.lower.iter().map(|x| x * scale).collect(),
        diag: t.diag.iter().map(|x| x * scale).collect(),
        upper: t.upper.iter().map(|x| x * scale).collect(),
    }
}
