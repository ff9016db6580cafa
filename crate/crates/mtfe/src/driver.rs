//! Strang-split time integration.
//!
//! One step of the full scheme composes the transport operator T and the
//! reaction-diffusion operator S symmetrically,
//!
//! ```text
//!     (V, c)(t + dt) = T_{dt/2} S_{dt} T_{dt/2} (V, c)(t),
//! ```
//!
//! where the taxis spline entering the trailing transport half-step is
//! refit from the fields the reaction step just updated. The increment is
//! chosen adaptively,
//!
//! ```text
//!     dt = CFL * min{ min_j (V_{j+1} - V_j) / |c'(V_{j+1}) - c'(V_j)|, K dw(t) },
//! ```
//!
//! with CFL = 0.49 and K = 100; for kernel-attractant models the first
//! argument of the minimum is replaced by the strict-diagonal-dominance
//! rule for the implicit transport stage. Steps land exactly on requested
//! snapshot times, retryable failures halve the increment a bounded number
//! of times, and a Newton breakdown in the transport stage (or a stalled
//! increment with collapsing node gaps) ends the run with a blow-up record
//! instead of an error.

use crate::error::{Error, Result};
use crate::mass::InverseDistribution;
use crate::model::{AttractantKind, Domain, ModelSpec};
use crate::reaction::{s_step, ClampWarnings, FieldSystem};
use crate::spline::ClampedSpline;
use crate::stability::taxis_time_scale;
use crate::transport::{self, stage1_sdd_dt, t_step, EndMotion, NewtonConfig, TaxisSource};

/// Step-size policy and output schedule of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeController {
    pub cfl: f64,
    pub k_cap: f64,
    pub dt_min: f64,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
}

impl TimeController {
    /// Controller with the standard constants (CFL 0.49, K 100, floor
    /// 1e-12 relative to the end time) and the model's output schedule.
    pub fn for_model(model: &ModelSpec) -> Self {
        TimeController {
            cfl: 0.49,
            k_cap: 100.0,
            dt_min: if model.t_end > 0.0 {
                1e-12 * model.t_end
            } else {
                f64::MIN_POSITIVE
            },
            t_end: model.t_end,
            snapshot_times: model.snapshots.clone(),
        }
    }

    pub fn with_t_end(mut self, t_end: f64, snapshots: Vec<f64>) -> Self {
        self.t_end = t_end;
        self.dt_min = if t_end > 0.0 { 1e-12 * t_end } else { f64::MIN_POSITIVE };
        self.snapshot_times = snapshots;
        self
    }
}

/// Complete state of a simulation at one instant, plus running diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub v: InverseDistribution,
    pub fields: FieldSystem,
    pub mass: f64,
    pub step_count: u64,
    pub newton_iters: u64,
    /// Accepted increments as proposed by the step-size rule, before any
    /// clipping to snapshot times; owned by the driver loop.
    pub dt_history: Vec<f64>,
    /// Negative-value clamps applied to chemical fields so far.
    pub warnings: ClampWarnings,
}

/// Terminal record of a run that ended in finite-time blow-up.
#[derive(Debug, Clone)]
pub struct BlowupRecord {
    pub time: f64,
    pub state: SimState,
}

/// Everything a completed (or blown-up) run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Initial state, states at the requested snapshot times (as reached),
    /// and the final state.
    pub snapshots: Vec<SimState>,
    pub blowup: Option<BlowupRecord>,
    /// (t, mass) after every accepted step, starting at t = 0.
    pub mass_history: Vec<(f64, f64)>,
    pub warnings: ClampWarnings,
}

impl RunOutcome {
    pub fn blew_up(&self) -> bool {
        self.blowup.is_some()
    }

    pub fn final_state(&self) -> &SimState {
        match &self.blowup {
            Some(record) => &record.state,
            None => self.snapshots.last().expect("a run always has snapshots"),
        }
    }
}

/// State at t = 0 built from a model description.
pub fn initial_sim_state(model: &ModelSpec) -> Result<SimState> {
    let (v, fields) = model.initial_state()?;
    let mass = v.grid.mass;
    Ok(SimState {
        t: 0.0,
        v,
        fields,
        mass,
        step_count: 0,
        newton_iters: 0,
        dt_history: Vec::new(),
        warnings: ClampWarnings::default(),
    })
}

/// Cubic spline through the taxis-weighted combination of the driving
/// fields, or None when no field-driven taxis is present.
pub fn attractant_spline(
    fields: &FieldSystem,
    taxis: &[(String, f64)],
) -> Result<Option<ClampedSpline>> {
    if taxis.is_empty() {
        return Ok(None);
    }
    let mut parts = Vec::with_capacity(taxis.len());
    for (name, chi) in taxis {
        let var = fields
            .by_name(name)
            .ok_or_else(|| Error::Unsupported(format!("taxis references unknown field '{name}'")))?;
        parts.push((&var.field, *chi));
    }
    let combined = crate::euler::FeField::linear_combination(&parts);
    Ok(Some(ClampedSpline::from_field(&combined)?))
}

fn end_motion(model: &ModelSpec) -> EndMotion {
    match model.domain {
        Domain::Bounded { .. } => EndMotion::Pinned,
        Domain::WholeLine => EndMotion::Free,
    }
}

fn taxis_source<'a>(model: &ModelSpec, spline: Option<&'a ClampedSpline>) -> TaxisSource<'a> {
    match model.attractant {
        AttractantKind::LogKernel => TaxisSource::LogKernel {
            chi: model.kernel_chi,
        },
        AttractantKind::FeFields => match spline {
            Some(s) => TaxisSource::SplineField { spline: s, chi: 1.0 },
            None => TaxisSource::None,
        },
    }
}

/// One Strang step: transport half-step, reaction-diffusion full step,
/// transport half-step with the refit spline. The returned state has an
/// empty `dt_history`; the run loop owns the history.
pub fn strang_step(state: &SimState, model: &ModelSpec, dt: f64) -> Result<SimState> {
    assert!(dt.is_finite() && dt != 0.0, "increment must be finite and nonzero");
    let ends = end_motion(model);
    let law = &model.diffusion;
    let cfg = NewtonConfig::for_span(state.v.span());
    let stamp = |e: Error| e.at_time(state.t);

    let spline = attractant_spline(&state.fields, &model.taxis).map_err(stamp)?;
    let first = t_step(
        &state.v,
        &taxis_source(model, spline.as_ref()),
        law,
        ends,
        0.5 * dt,
        &cfg,
    )
    .map_err(stamp)?;

    let reacted = s_step(
        &first.v,
        &state.fields,
        model.cell_reaction.as_ref(),
        dt,
        model.policy,
    )
    .map_err(stamp)?;

    let spline = attractant_spline(&reacted.fields, &model.taxis).map_err(stamp)?;
    let second = t_step(
        &reacted.v,
        &taxis_source(model, spline.as_ref()),
        law,
        ends,
        0.5 * dt,
        &cfg,
    )
    .map_err(stamp)?;

    let mass = second.v.grid.mass;
    let mut warnings = state.warnings;
    warnings.merge(reacted.warnings);
    Ok(SimState {
        t: state.t + dt,
        v: second.v,
        fields: reacted.fields,
        mass,
        step_count: state.step_count + 1,
        newton_iters: state.newton_iters + u64::from(first.newton_iters + second.newton_iters),
        dt_history: Vec::new(),
        warnings,
    })
}

/// Proposed increment for the next step, before snapshot clipping: the
/// CFL-weighted minimum of the taxis time scale and the mass-scaled cap
/// K*dw(t). On kernel-attractant models the diagonal-dominance rule then
/// halves that candidate further as aggregation steepens the Jacobian.
pub fn adaptive_dt(state: &SimState, model: &ModelSpec, ctl: &TimeController) -> Result<f64> {
    let dw = state.mass / model.m_cells as f64;
    let cap = ctl.k_cap * dw;
    let dt = match model.attractant {
        AttractantKind::LogKernel => {
            let source = TaxisSource::LogKernel {
                chi: model.kernel_chi,
            };
            let scale =
                transport::taxis_velocity_time_scale(&state.v, &source, &model.diffusion)
                    .map_err(|e| e.at_time(state.t))?;
            let dt0 = ctl.cfl * scale.min(cap);
            stage1_sdd_dt(&state.v, &source, &model.diffusion, end_motion(model), dt0, 96)
                .map_err(|e| e.at_time(state.t))?
        }
        AttractantKind::FeFields => {
            let spline = attractant_spline(&state.fields, &model.taxis)?;
            let scale = match &spline {
                Some(s) => taxis_time_scale(&state.v, s, 1.0),
                None => f64::INFINITY,
            };
            ctl.cfl * scale.min(cap)
        }
    };
    if dt < ctl.dt_min {
        return Err(Error::TimeStepUnderflow {
            t: state.t,
            dt,
            floor: ctl.dt_min,
        });
    }
    Ok(dt)
}

/// Whether the node gaps have collapsed far enough below the span that a
/// stalled increment is the numerical signature of finite-time blow-up
/// rather than a step-size control failure.
fn gaps_collapsed(v: &InverseDistribution) -> bool {
    let min_gap = v
        .nodes
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    min_gap < 1e-5 * v.span()
}

const MAX_RETRIES: u32 = 8;

/// Integrate a model from t = 0 to the controller's end time.
///
/// Snapshots are taken at t = 0, at each requested snapshot time, and at
/// the end time. A transport Newton breakdown — or an increment underflow
/// while the node gaps have collapsed — ends the run early with a blow-up
/// record holding the last accepted state; any other failure is an error.
pub fn run(model: &ModelSpec, ctl: &TimeController) -> Result<RunOutcome> {
    let mut state = initial_sim_state(model)?;
    let mut snapshots = vec![state.clone()];
    let mut mass_history = vec![(0.0, state.mass)];

    let mut targets: Vec<f64> = ctl
        .snapshot_times
        .iter()
        .copied()
        .filter(|&s| s > 0.0 && s < ctl.t_end)
        .collect();
    targets.push(ctl.t_end);
    let mut next_target = 0usize;

    let blow_up = |state: SimState, snapshots: Vec<SimState>, mass_history: Vec<(f64, f64)>, time: f64| {
        let warnings = state.warnings;
        Ok(RunOutcome {
            snapshots,
            blowup: Some(BlowupRecord { time, state }),
            mass_history,
            warnings,
        })
    };

    while state.t < ctl.t_end {
        let raw = match adaptive_dt(&state, model, ctl) {
            Ok(dt) => dt,
            Err(e @ Error::TimeStepUnderflow { t, .. }) => {
                if gaps_collapsed(&state.v) {
                    return blow_up(state, snapshots, mass_history, t);
                }
                return Err(e);
            }
            Err(e) => return Err(e),
        };

        let target = targets[next_target];
        let (mut dt, mut lands) = if state.t + raw >= target {
            (target - state.t, true)
        } else {
            (raw, false)
        };

        let mut retries = 0u32;
        let stepped = loop {
            match strang_step(&state, model, dt) {
                Ok(next) => break next,
                Err(e) if e.is_retryable() && retries < MAX_RETRIES => {
                    retries += 1;
                    dt *= 0.5;
                    lands = false;
                }
                Err(e @ Error::BlowupDetected { .. }) => {
                    let time = match e {
                        Error::BlowupDetected { t, .. } => t,
                        _ => unreachable!(),
                    };
                    return blow_up(state, snapshots, mass_history, time);
                }
                Err(e) => {
                    return Err(Error::InstabilityDetected {
                        t: state.t,
                        reason: format!("step {} failed after {retries} retries: {e}", state.step_count),
                    });
                }
            }
        };

        let mut next = stepped;
        next.dt_history = std::mem::take(&mut state.dt_history);
        next.dt_history.push(raw);
        if lands {
            next.t = target;
        }
        state = next;
        mass_history.push((state.t, state.mass));

        if lands {
            next_target += 1;
            snapshots.push(state.clone());
        }
    }

    let warnings = state.warnings;
    Ok(RunOutcome {
        snapshots,
        blowup: None,
        mass_history,
        warnings,
    })
}
