//! Discrete-time propagation of the bicycle models.
//!
//! The centerpiece is [`step_backward_variant`]: position, heading and speed
//! advance by forward Euler, while the lateral velocity and yaw rate are the
//! closed-form solutions of per-variable implicit (backward-Euler style)
//! equations. The linear tire law makes those equations linear in the unknown,
//! so the step stays explicit — and, unlike the continuous model, it is
//! well defined at standstill.
//!
//! Forward-Euler steps for both models serve as baselines, and a fine-step
//! classical RK4 integrator of the continuous model provides the ground
//! truth that replaces a multibody prototype.

use crate::models::{
    dyn_rhs_mode, kin_rhs, ControlInput, DomainError, DynRhsMode, DynState, KinState,
    VehicleParams,
};
use std::fmt;

/// Integration method for the dynamic model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepMethod {
    /// The backward-Euler-inspired explicit step.
    #[default]
    BackwardVariant,
    /// Plain forward Euler on the continuous dynamic model.
    ForwardEuler,
    /// Fine-substep RK4 of the continuous model, sampled on the step grid.
    Rk4Reference,
}

/// Step-size and method selection for rollouts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    /// Discretization step length (s).
    pub t_s: f64,
    pub method: StepMethod,
    /// Inner step of the RK4 reference (s); must not exceed `t_s`.
    pub rk4_substep: f64,
    /// Continuous right-hand side used by Euler/RK4 methods.
    pub rhs_mode: DynRhsMode,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            t_s: 0.1,
            method: StepMethod::BackwardVariant,
            rk4_substep: 1e-3,
            rhs_mode: DynRhsMode::SmallAngle,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.t_s > 0.0) {
            return Err("T_s > 0");
        }
        if !(self.rk4_substep > 0.0) {
            return Err("rk4_substep > 0");
        }
        if self.rk4_substep > self.t_s {
            return Err("rk4_substep <= T_s");
        }
        Ok(())
    }
}

/// One recorded point of a rollout. The input is the one applied over the
/// interval starting at `t` (zero-order hold); the final sample repeats the
/// last applied input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<S> {
    pub t: f64,
    pub state: S,
    pub input: ControlInput,
}

/// Uniformly spaced rollout record.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory<S> {
    pub samples: Vec<Sample<S>>,
}

impl<S: Copy> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn terminal(&self) -> Option<&Sample<S>> {
        self.samples.last()
    }

    pub fn states(&self) -> impl Iterator<Item = &S> {
        self.samples.iter().map(|s| &s.state)
    }
}

/// A step failure inside a rollout, tagged with the failing step index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepError {
    /// Index of the step that failed (the transition from sample `step` to
    /// sample `step + 1`).
    pub step: usize,
    pub source: DomainError,
}

impl fmt::Display for StepError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {} failed: {}", self.step, self.source)
    }
}

impl std::error::Error for StepError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

/// The backward-Euler-inspired explicit step of the dynamic model.
///
/// `x`, `y`, `phi`, `u` advance by forward Euler; `v` and `omega` are the
/// closed-form solutions of their per-variable implicit equations. With the
/// negative-stiffness convention both denominators are strictly positive for
/// `u >= 0`, so the step is well defined at standstill — the property the
/// whole construction exists for.
pub fn step_backward_variant(
    p: &VehicleParams,
    s: &DynState,
    input: &ControlInput,
    t_s: f64,
) -> Result<DynState, DomainError> {
    let den_v = p.m * s.u - t_s * p.stiffness_sum();
    let den_omega = p.i_z * s.u - t_s * p.stiffness_second_moment();
    if den_v == 0.0 {
        return Err(DomainError::SingularDenominator { which: "m*u - T_s*(k_f + k_r)" });
    }
    if den_omega == 0.0 {
        return Err(DomainError::SingularDenominator {
            which: "I_z*u - T_s*(l_f^2*k_f + l_r^2*k_r)",
        });
    }
    let moment = p.stiffness_moment();
    let num_v = p.m * s.u * s.v + t_s * moment * s.omega
        - t_s * p.k_f * input.delta * s.u
        - t_s * p.m * s.u * s.u * s.omega;
    let num_omega = p.i_z * s.u * s.omega + t_s * moment * s.v
        - t_s * p.l_f * p.k_f * input.delta * s.u;
    Ok(DynState {
        x: s.x + t_s * (s.u * s.phi.cos() - s.v * s.phi.sin()),
        y: s.y + t_s * (s.v * s.phi.cos() + s.u * s.phi.sin()),
        phi: s.phi + t_s * s.omega,
        u: s.u + t_s * input.a,
        v: num_v / den_v,
        omega: num_omega / den_omega,
    })
}

/// Forward-Euler baseline on the continuous dynamic model.
///
/// Inherits the continuous model's standstill singularity: `u <= 0` is an
/// error, with no epsilon floor. Its low-speed and large-step failures are
/// the documented behavior this baseline exists to exhibit.
pub fn step_forward_euler_dyn(
    p: &VehicleParams,
    s: &DynState,
    input: &ControlInput,
    t_s: f64,
) -> Result<DynState, DomainError> {
    let d = dyn_rhs_mode(p, s, input, DynRhsMode::SmallAngle)?;
    Ok(DynState {
        x: s.x + t_s * d.x,
        y: s.y + t_s * d.y,
        phi: s.phi + t_s * d.phi,
        u: s.u + t_s * d.u,
        v: s.v + t_s * d.v,
        omega: s.omega + t_s * d.omega,
    })
}

/// Forward-Euler step of the kinematic model.
pub fn step_forward_euler_kin(
    p: &VehicleParams,
    s: &KinState,
    input: &ControlInput,
    t_s: f64,
) -> Result<KinState, DomainError> {
    let d = kin_rhs(p, s, input)?;
    Ok(KinState {
        x: s.x + t_s * d.x,
        y: s.y + t_s * d.y,
        u: s.u + t_s * d.u,
        phi: s.phi + t_s * d.phi,
    })
}

fn rk4_substep_dyn(
    p: &VehicleParams,
    s: &DynState,
    input: &ControlInput,
    h: f64,
    mode: DynRhsMode,
) -> Result<DynState, DomainError> {
    let axpy = |s: &DynState, k: &DynState, c: f64| DynState {
        x: s.x + c * k.x,
        y: s.y + c * k.y,
        phi: s.phi + c * k.phi,
        u: s.u + c * k.u,
        v: s.v + c * k.v,
        omega: s.omega + c * k.omega,
    };
    let k1 = dyn_rhs_mode(p, s, input, mode)?;
    let k2 = dyn_rhs_mode(p, &axpy(s, &k1, h / 2.0), input, mode)?;
    let k3 = dyn_rhs_mode(p, &axpy(s, &k2, h / 2.0), input, mode)?;
    let k4 = dyn_rhs_mode(p, &axpy(s, &k3, h), input, mode)?;
    Ok(DynState {
        x: s.x + h / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
        y: s.y + h / 6.0 * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
        phi: s.phi + h / 6.0 * (k1.phi + 2.0 * k2.phi + 2.0 * k3.phi + k4.phi),
        u: s.u + h / 6.0 * (k1.u + 2.0 * k2.u + 2.0 * k3.u + k4.u),
        v: s.v + h / 6.0 * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v),
        omega: s.omega + h / 6.0 * (k1.omega + 2.0 * k2.omega + 2.0 * k3.omega + k4.omega),
    })
}

/// Ground-truth trajectory: classical RK4 at `cfg.rk4_substep` (or finer, so
/// substeps land exactly on the `t_s` grid), sampled at the `t_s` grid points.
///
/// Refuses, rather than clamps, any excursion to `u <= 0`: ground truth must
/// never silently change the problem.
pub fn integrate_rk4_reference(
    p: &VehicleParams,
    s0: &DynState,
    inputs: &[ControlInput],
    cfg: &StepConfig,
) -> Result<Trajectory<DynState>, StepError> {
    let n_sub = (cfg.t_s / cfg.rk4_substep).ceil().max(1.0) as usize;
    let h = cfg.t_s / n_sub as f64;
    let mut samples = Vec::with_capacity(inputs.len() + 1);
    let mut state = *s0;
    let first_input = inputs.first().copied().unwrap_or_default();
    samples.push(Sample { t: 0.0, state, input: first_input });
    for (k, input) in inputs.iter().enumerate() {
        for _ in 0..n_sub {
            if state.u <= 0.0 {
                return Err(StepError {
                    step: k,
                    source: DomainError::NonpositiveSpeed { u: state.u },
                });
            }
            state = rk4_substep_dyn(p, &state, input, h, cfg.rhs_mode)
                .map_err(|source| StepError { step: k, source })?;
        }
        let next_input = inputs.get(k + 1).copied().unwrap_or(*input);
        samples.push(Sample { t: (k + 1) as f64 * cfg.t_s, state, input: next_input });
    }
    Ok(Trajectory { samples })
}

/// One dynamic-model step with the configured method.
pub fn step_dyn(
    p: &VehicleParams,
    s: &DynState,
    input: &ControlInput,
    cfg: &StepConfig,
) -> Result<DynState, DomainError> {
    match cfg.method {
        StepMethod::BackwardVariant => step_backward_variant(p, s, input, cfg.t_s),
        StepMethod::ForwardEuler => step_forward_euler_dyn(p, s, input, cfg.t_s),
        StepMethod::Rk4Reference => {
            let n_sub = (cfg.t_s / cfg.rk4_substep).ceil().max(1.0) as usize;
            let h = cfg.t_s / n_sub as f64;
            let mut state = *s;
            for _ in 0..n_sub {
                if state.u <= 0.0 {
                    return Err(DomainError::NonpositiveSpeed { u: state.u });
                }
                state = rk4_substep_dyn(p, &state, input, h, cfg.rhs_mode)?;
            }
            Ok(state)
        }
    }
}

/// Repeated application of the configured step, one input per step.
///
/// Fails with the index of the first failing step.
pub fn rollout(
    p: &VehicleParams,
    s0: &DynState,
    inputs: &[ControlInput],
    cfg: &StepConfig,
) -> Result<Trajectory<DynState>, StepError> {
    let record = rollout_recording(p, s0, inputs, cfg);
    match record.failure {
        Some(err) => Err(err),
        None => Ok(record.trajectory),
    }
}

/// Rollout that keeps the partial trajectory when a step fails. The baseline
/// comparisons need this: a forward-Euler run that escapes the model domain
/// is a result to record, not an abort.
pub struct RolloutRecord {
    pub trajectory: Trajectory<DynState>,
    pub failure: Option<StepError>,
}

pub fn rollout_recording(
    p: &VehicleParams,
    s0: &DynState,
    inputs: &[ControlInput],
    cfg: &StepConfig,
) -> RolloutRecord {
    let mut samples = Vec::with_capacity(inputs.len() + 1);
    let mut state = *s0;
    let first_input = inputs.first().copied().unwrap_or_default();
    samples.push(Sample { t: 0.0, state, input: first_input });
    for (k, input) in inputs.iter().enumerate() {
        match step_dyn(p, &state, input, cfg) {
            Ok(next) => {
                state = next;
                let next_input = inputs.get(k + 1).copied().unwrap_or(*input);
                samples.push(Sample { t: (k + 1) as f64 * cfg.t_s, state, input: next_input });
            }
            Err(source) => {
                return RolloutRecord {
                    trajectory: Trajectory { samples },
                    failure: Some(StepError { step: k, source }),
                };
            }
        }
    }
    RolloutRecord { trajectory: Trajectory { samples }, failure: None }
}

/// Forward-Euler rollout of the kinematic model.
pub fn rollout_kinematic(
    p: &VehicleParams,
    s0: &KinState,
    inputs: &[ControlInput],
    t_s: f64,
) -> Result<Trajectory<KinState>, StepError> {
    let mut samples = Vec::with_capacity(inputs.len() + 1);
    let mut state = *s0;
    let first_input = inputs.first().copied().unwrap_or_default();
    samples.push(Sample { t: 0.0, state, input: first_input });
    for (k, input) in inputs.iter().enumerate() {
        state = step_forward_euler_kin(p, &state, input, t_s)
            .map_err(|source| StepError { step: k, source })?;
        let next_input = inputs.get(k + 1).copied().unwrap_or(*input);
        samples.push(Sample { t: (k + 1) as f64 * t_s, state, input: next_input });
    }
    Ok(Trajectory { samples })
}

/// Constant-input schedule of `n` steps.
pub fn constant_schedule(input: ControlInput, n: usize) -> Vec<ControlInput> {
    vec![input; n]
}
