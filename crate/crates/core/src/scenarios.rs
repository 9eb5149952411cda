//! Experiment runners: open-loop step-steer comparisons, the stability
//! condition sweep, the closed-loop stop-and-go task and its timing study.
//!
//! Ground truth is the fine-step RK4 integration of the continuous dynamic
//! model with full steering trigonometry — the desk-scale stand-in for a
//! multibody prototype. Accuracy tables therefore measure discretization
//! plus model-class error against a shared analytic reference, not against
//! vehicle-grade truth; reports carry that caveat. Convergence-order
//! measurements instead integrate the decoupled-speed variant, the ODE the
//! discrete step actually discretizes.

use crate::integrate::{
    constant_schedule, integrate_rk4_reference, rollout, rollout_kinematic, rollout_recording,
    Sample, StepConfig, StepError, StepMethod, Trajectory,
};
use crate::models::{ControlInput, DomainError, DynRhsMode, DynState, KinState, VehicleParams};
use crate::mpc::{
    reference_window, solve_step_with, DynPredictor, KinPredictor, MpcConfig, MpcSolution,
    Predictor, ReferencePolicy,
};
use crate::stability::{condition_sweep, SweepReport};
use std::fmt;
use std::time::Duration;

/// Anything with a world-frame position, for trajectory comparison.
pub trait Positioned {
    fn position(&self) -> (f64, f64);
}

impl Positioned for DynState {
    fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

impl Positioned for KinState {
    fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

/// Scenario-level failures.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioError {
    /// Trajectories compared on different grids.
    LengthMismatch { left: usize, right: usize },
    /// Closed loop failed to reach the target in time.
    Timeout { limit: f64, remaining_distance: f64 },
    /// A model left its domain where the scenario cannot tolerate it.
    Step(StepError),
    Domain(DomainError),
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LengthMismatch { left, right } => {
                write!(f, "trajectory sample counts differ: {left} vs {right}")
            }
            Self::Timeout { limit, remaining_distance } => write!(
                f,
                "target not reached within {limit} s ({remaining_distance:.2} m remaining)"
            ),
            Self::Step(e) => write!(f, "{e}"),
            Self::Domain(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ScenarioError {}

impl From<StepError> for ScenarioError {
    fn from(e: StepError) -> Self {
        Self::Step(e)
    }
}

impl From<DomainError> for ScenarioError {
    fn from(e: DomainError) -> Self {
        Self::Domain(e)
    }
}

/// Root-mean-square location error between two trajectories on the same
/// time grid.
pub fn rms_location_error<A: Positioned, B: Positioned>(
    test: &Trajectory<A>,
    truth: &Trajectory<B>,
) -> Result<f64, ScenarioError> {
    if test.samples.len() != truth.samples.len() {
        return Err(ScenarioError::LengthMismatch {
            left: test.samples.len(),
            right: truth.samples.len(),
        });
    }
    let n = test.samples.len().max(1);
    let sum: f64 = test
        .samples
        .iter()
        .zip(&truth.samples)
        .map(|(a, b)| {
            let (xa, ya) = a.state.position();
            let (xb, yb) = b.state.position();
            (xa - xb).powi(2) + (ya - yb).powi(2)
        })
        .sum();
    Ok((sum / n as f64).sqrt())
}

/// Open-loop step-steer study definition.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenLoopSpec {
    pub params: VehicleParams,
    /// Initial speed (m/s); the kinematic run takes the same value as its
    /// absolute speed, which coincides at zero initial lateral velocity.
    pub u0: f64,
    /// Steering step magnitude (rad), applied at t = 0 with zero rise time.
    pub delta_step: f64,
    pub duration: f64,
    pub ts_list: Vec<f64>,
    pub rk4_substep: f64,
}

impl Default for OpenLoopSpec {
    fn default() -> Self {
        Self {
            params: VehicleParams::default(),
            u0: 8.0,
            delta_step: 0.2674,
            duration: 4.0,
            ts_list: vec![0.01, 0.05, 0.1],
            rk4_substep: 1e-3,
        }
    }
}

/// Discretization under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    BackwardVariantDyn,
    ForwardEulerDyn,
    ForwardEulerKin,
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::BackwardVariantDyn => "backward-variant dynamic",
            Self::ForwardEulerDyn => "forward-Euler dynamic",
            Self::ForwardEulerKin => "forward-Euler kinematic",
        };
        f.write_str(name)
    }
}

/// One (method, step length) rollout verdict. Kinematic states are embedded
/// with zero lateral components so every run carries the same state layout.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    pub method: MethodKind,
    pub t_s: f64,
    pub trajectory: Trajectory<DynState>,
    /// Step failure, if the rollout left the model domain early.
    pub failure: Option<StepError>,
    /// Largest absolute state component seen (infinite if non-finite).
    pub max_abs: f64,
    /// Divergence flag: non-finite or beyond-threshold states, or a rollout
    /// that aborted on a domain error before the horizon.
    pub divergent: bool,
    /// RMS location error against the reference; absent for divergent runs.
    pub rms_location: Option<f64>,
    pub terminal_v: f64,
    pub terminal_omega: f64,
}

/// State magnitude beyond which a trajectory is flagged divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e3;

/// Table-II style accuracy row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedRow {
    pub u0: f64,
    pub dynamic_rms: f64,
    pub kinematic_rms: f64,
    /// `1 − dynamic/kinematic`, positive when the dynamic model wins.
    pub improvement: f64,
}

/// Terminal-state convergence measurement against the decoupled-speed
/// reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    /// `(T_s, terminal-state error)` pairs, largest step first.
    pub errors: Vec<(f64, f64)>,
    /// Richardson slopes `log2(e_i / e_{i+1})` between consecutive halvings.
    pub slopes: Vec<f64>,
}

impl ConvergenceReport {
    pub fn min_slope(&self) -> f64 {
        self.slopes.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Combined report of the open-loop studies.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonReport {
    /// Per-(T_s, method) stability verdicts of the step-steer study.
    pub ts_rows: Vec<MethodRun>,
    /// Per-speed accuracy rows of the Table-II style sweep.
    pub speed_rows: Vec<SpeedRow>,
    /// Convergence-order measurement on the step-steer scenario.
    pub convergence: Option<ConvergenceReport>,
}

fn embed_kin_trajectory(traj: &Trajectory<KinState>) -> Trajectory<DynState> {
    Trajectory {
        samples: traj
            .samples
            .iter()
            .map(|s| Sample {
                t: s.t,
                state: DynState::new(s.state.x, s.state.y, s.state.phi, s.state.u, 0.0, 0.0),
                input: s.input,
            })
            .collect(),
    }
}

fn ground_truth(
    spec: &OpenLoopSpec,
    t_s: f64,
    mode: DynRhsMode,
) -> Result<Trajectory<DynState>, StepError> {
    let n = (spec.duration / t_s).round() as usize;
    let cfg = StepConfig {
        t_s,
        method: StepMethod::Rk4Reference,
        rk4_substep: spec.rk4_substep,
        rhs_mode: mode,
    };
    let s0 = DynState { u: spec.u0, ..DynState::default() };
    let inputs = constant_schedule(ControlInput::new(0.0, spec.delta_step), n);
    integrate_rk4_reference(&spec.params, &s0, &inputs, &cfg)
}

fn divergence_verdict(traj: &Trajectory<DynState>, failure: &Option<StepError>) -> (f64, bool) {
    let max_abs = traj.states().map(|s| s.max_abs()).fold(0.0, f64::max);
    let divergent =
        failure.is_some() || max_abs > DIVERGENCE_THRESHOLD || !max_abs.is_finite();
    (max_abs, divergent)
}

/// Rolls every method at every step length under the constant steering step
/// and scores it against the full-trigonometry RK4 reference.
///
/// Baseline divergence is recorded, not raised: a forward-Euler run that
/// blows past the threshold or escapes the model domain mid-horizon yields
/// a `divergent` row.
pub fn run_step_steer(spec: &OpenLoopSpec) -> Result<ComparisonReport, ScenarioError> {
    let mut ts_rows = Vec::new();
    let s0 = DynState { u: spec.u0, ..DynState::default() };
    let k0 = KinState { u: spec.u0, ..KinState::default() };
    for &t_s in &spec.ts_list {
        let n = (spec.duration / t_s).round() as usize;
        let inputs = constant_schedule(ControlInput::new(0.0, spec.delta_step), n);
        let reference = ground_truth(spec, t_s, DynRhsMode::FullTrig)?;

        for method in [MethodKind::BackwardVariantDyn, MethodKind::ForwardEulerDyn] {
            let cfg = StepConfig {
                t_s,
                method: match method {
                    MethodKind::BackwardVariantDyn => StepMethod::BackwardVariant,
                    _ => StepMethod::ForwardEuler,
                },
                rk4_substep: spec.rk4_substep,
                rhs_mode: DynRhsMode::SmallAngle,
            };
            let record = rollout_recording(&spec.params, &s0, &inputs, &cfg);
            let (max_abs, divergent) = divergence_verdict(&record.trajectory, &record.failure);
            let rms = if divergent {
                None
            } else {
                Some(rms_location_error(&record.trajectory, &reference)?)
            };
            let terminal = record.trajectory.terminal().expect("has initial sample").state;
            ts_rows.push(MethodRun {
                method,
                t_s,
                failure: record.failure,
                max_abs,
                divergent,
                rms_location: rms,
                terminal_v: terminal.v,
                terminal_omega: terminal.omega,
                trajectory: record.trajectory,
            });
        }

        let kin = rollout_kinematic(&spec.params, &k0, &inputs, t_s)?;
        let embedded = embed_kin_trajectory(&kin);
        let (max_abs, divergent) = divergence_verdict(&embedded, &None);
        let rms = rms_location_error(&embedded, &reference)?;
        let terminal = embedded.terminal().expect("has initial sample").state;
        ts_rows.push(MethodRun {
            method: MethodKind::ForwardEulerKin,
            t_s,
            failure: None,
            max_abs,
            divergent,
            rms_location: Some(rms),
            terminal_v: terminal.v,
            terminal_omega: terminal.omega,
            trajectory: embedded,
        });
    }
    let convergence = run_convergence_study(spec)?;
    Ok(ComparisonReport { ts_rows, speed_rows: Vec::new(), convergence: Some(convergence) })
}

/// Terminal-state error of the backward-variant step against the RK4
/// integration of the decoupled-speed model, across step halvings.
pub fn run_convergence_study(spec: &OpenLoopSpec) -> Result<ConvergenceReport, ScenarioError> {
    let ts_halvings = [0.1, 0.05, 0.025, 0.0125];
    let s0 = DynState { u: spec.u0, ..DynState::default() };
    let mut errors = Vec::with_capacity(ts_halvings.len());
    for t_s in ts_halvings {
        let n = (spec.duration / t_s).round() as usize;
        let inputs = constant_schedule(ControlInput::new(0.0, spec.delta_step), n);
        let reference = ground_truth(spec, t_s, DynRhsMode::DecoupledSpeed)?;
        let cfg = StepConfig { t_s, ..StepConfig::default() };
        let traj = rollout(&spec.params, &s0, &inputs, &cfg)?;
        let a = traj.terminal().expect("nonempty").state.to_array();
        let b = reference.terminal().expect("nonempty").state.to_array();
        let err: f64 =
            a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        errors.push((t_s, err));
    }
    let slopes = errors
        .windows(2)
        .map(|pair| (pair[0].1 / pair[1].1).log2())
        .collect();
    Ok(ConvergenceReport { errors, slopes })
}

/// Table-II style sweep: 4-second open-loop RMS location errors of both
/// model classes against the full-trigonometry reference, per initial speed.
pub fn run_speed_sweep(
    spec: &OpenLoopSpec,
    speeds: &[f64],
) -> Result<ComparisonReport, ScenarioError> {
    let mut speed_rows = Vec::with_capacity(speeds.len());
    let t_s = *spec.ts_list.last().expect("at least one step length");
    let n = (spec.duration / t_s).round() as usize;
    let inputs = constant_schedule(ControlInput::new(0.0, spec.delta_step), n);
    for &u0 in speeds {
        let sub_spec = OpenLoopSpec { u0, ..spec.clone() };
        let reference = ground_truth(&sub_spec, t_s, DynRhsMode::FullTrig)?;
        let s0 = DynState { u: u0, ..DynState::default() };
        let k0 = KinState { u: u0, ..KinState::default() };
        let cfg = StepConfig { t_s, ..StepConfig::default() };
        let dyn_traj = rollout(&spec.params, &s0, &inputs, &cfg)?;
        let kin_traj = rollout_kinematic(&spec.params, &k0, &inputs, t_s)?;
        let dynamic_rms = rms_location_error(&dyn_traj, &reference)?;
        let kinematic_rms = rms_location_error(&kin_traj, &reference)?;
        speed_rows.push(SpeedRow {
            u0,
            dynamic_rms,
            kinematic_rms,
            improvement: 1.0 - dynamic_rms / kinematic_rms,
        });
    }
    Ok(ComparisonReport { ts_rows: Vec::new(), speed_rows, convergence: None })
}

/// Condition-1 figure: `‖Â‖₂` over the speed envelope on a 1000-point grid.
pub fn run_condition_figure(p: &VehicleParams, t_s: f64, u_max: f64) -> SweepReport {
    condition_sweep(p, (0.0, u_max), t_s, 1000)
}

/// Closed-loop stop-and-go task definition.
#[derive(Debug, Clone, PartialEq)]
pub struct StopAndGoSpec {
    pub params: VehicleParams,
    pub mpc: MpcConfig,
    pub start: [f64; 2],
    pub target: [f64; 2],
    /// Reference speed encoded in the point spacing (m/s).
    pub v_ref: f64,
    pub obstacle_initial: [f64; 2],
    pub obstacle_moved: [f64; 2],
    /// Reference-march halt margin outside the keep-out disk (m).
    pub stop_margin: f64,
    /// Head-on discrimination threshold of the reference march (m).
    pub bypass_clearance: f64,
    /// Speed below which the vehicle counts as stopped (m/s).
    pub stop_speed: f64,
    /// Consecutive stopped samples required to trigger the obstacle move.
    pub stop_consecutive: usize,
    /// Speed the vehicle must first exceed before stop detection arms;
    /// otherwise the standing start would count as a stop.
    pub arming_speed: f64,
    /// Arrival radius around the target (m).
    pub target_radius: f64,
    /// Closed-loop time budget (s).
    pub timeout: f64,
}

impl Default for StopAndGoSpec {
    fn default() -> Self {
        Self {
            params: VehicleParams::default(),
            mpc: MpcConfig::default(),
            start: [0.0, 0.0],
            target: [30.0, 30.0],
            v_ref: 6.0,
            obstacle_initial: [15.0, 15.0],
            obstacle_moved: [18.0, 12.0],
            stop_margin: 4.5,
            bypass_clearance: 2.0,
            stop_speed: 0.01,
            stop_consecutive: 3,
            arming_speed: 1.0,
            target_radius: 0.5,
            timeout: 30.0,
        }
    }
}

impl StopAndGoSpec {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.start == self.target {
            return Err("start != target");
        }
        if !(self.v_ref > 0.0) {
            return Err("v_ref > 0");
        }
        if !(self.timeout > 0.0) {
            return Err("timeout > 0");
        }
        self.mpc.validate()
    }

    fn policy(&self) -> ReferencePolicy {
        ReferencePolicy {
            v_ref: self.v_ref,
            stop_margin: self.stop_margin,
            bypass_clearance: self.bypass_clearance,
        }
    }
}

/// Timestamped event log of one closed-loop run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StopAndGoEvents {
    /// When the stop detector fired (s).
    pub stop_time: Option<f64>,
    /// When the obstacle relocated (s); coincides with the stop detection.
    pub obstacle_move_time: Option<f64>,
    pub arrival_time: Option<f64>,
}

/// Per-solve metadata of the closed loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveMeta {
    pub t: f64,
    pub cost: f64,
    pub feasible: bool,
    pub worst_margin: f64,
    pub iterations: usize,
    pub solve_time: Duration,
}

impl SolveMeta {
    fn of(t: f64, sol: &MpcSolution) -> Self {
        Self {
            t,
            cost: sol.cost,
            feasible: sol.feasible,
            worst_margin: sol.worst_margin,
            iterations: sol.iterations,
            solve_time: sol.solve_time,
        }
    }
}

/// Completed closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct StopAndGoRun<S> {
    pub trajectory: Trajectory<S>,
    /// Obstacle position at each trajectory sample.
    pub obstacle_track: Vec<[f64; 2]>,
    pub events: StopAndGoEvents,
    pub solves: Vec<SolveMeta>,
}

fn run_stop_and_go_with<P: Predictor>(
    spec: &StopAndGoSpec,
    predictor: &P,
    initial: P::State,
) -> Result<StopAndGoRun<P::State>, ScenarioError> {
    let policy = spec.policy();
    let max_steps = (spec.timeout / spec.mpc.t_s).ceil() as usize;
    let mut state = initial;
    let mut obstacle = spec.obstacle_initial;
    let mut events = StopAndGoEvents::default();
    let mut armed = false;
    let mut slow_streak = 0usize;
    let mut samples = Vec::new();
    let mut obstacle_track = Vec::new();
    let mut solves = Vec::new();
    let mut last_input = ControlInput::default();

    for k in 0..=max_steps {
        let t = k as f64 * spec.mpc.t_s;
        let embedded = P::embed(&state);
        let cg = [embedded[0], embedded[1]];
        let remaining = ((cg[0] - spec.target[0]).powi(2) + (cg[1] - spec.target[1]).powi(2))
            .sqrt();
        if remaining <= spec.target_radius {
            samples.push(Sample { t, state, input: last_input });
            obstacle_track.push(obstacle);
            events.arrival_time = Some(t);
            return Ok(StopAndGoRun { trajectory: Trajectory { samples }, obstacle_track, events, solves });
        }
        if k == max_steps {
            return Err(ScenarioError::Timeout {
                limit: spec.timeout,
                remaining_distance: remaining,
            });
        }

        let window = reference_window(&spec.mpc, cg, spec.target, obstacle, &policy);
        let sol = solve_step_with(&spec.mpc, predictor, &state, &window)?;
        samples.push(Sample { t, state, input: sol.input });
        obstacle_track.push(obstacle);
        solves.push(SolveMeta::of(t, &sol));
        last_input = sol.input;

        let speed = P::speed(&state);
        if speed > spec.arming_speed {
            armed = true;
        }
        if armed && events.obstacle_move_time.is_none() {
            slow_streak = if speed < spec.stop_speed { slow_streak + 1 } else { 0 };
            if slow_streak >= spec.stop_consecutive {
                events.stop_time = Some(t);
                events.obstacle_move_time = Some(t);
                obstacle = spec.obstacle_moved;
            }
        }

        state = predictor.step(&state, &sol.input)?;
    }
    unreachable!("loop returns or times out");
}

/// Runs the stop-and-go task with the dynamic predictor against the
/// backward-variant plant. Initial heading faces the target; initial speed
/// is zero.
pub fn run_stop_and_go(spec: &StopAndGoSpec) -> Result<StopAndGoRun<DynState>, ScenarioError> {
    spec.validate().ok();
    let bearing = (spec.target[1] - spec.start[1]).atan2(spec.target[0] - spec.start[0]);
    let initial = DynState::new(spec.start[0], spec.start[1], bearing, 0.0, 0.0, 0.0);
    let predictor = DynPredictor { params: spec.params, t_s: spec.mpc.t_s };
    run_stop_and_go_with(spec, &predictor, initial)
}

/// The same task with the kinematic predictor against the forward-Euler
/// kinematic plant.
pub fn run_stop_and_go_kinematic(
    spec: &StopAndGoSpec,
) -> Result<StopAndGoRun<KinState>, ScenarioError> {
    let bearing = (spec.target[1] - spec.start[1]).atan2(spec.target[0] - spec.start[0]);
    let initial = KinState::new(spec.start[0], spec.start[1], 0.0, bearing);
    let predictor = KinPredictor { params: spec.params, t_s: spec.mpc.t_s };
    run_stop_and_go_with(spec, &predictor, initial)
}

/// Wall-time statistics of one predictor's closed-loop solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveTimingStats {
    pub count: usize,
    pub mean: Duration,
    pub median: Duration,
    pub p95: Duration,
}

impl SolveTimingStats {
    fn from_durations(mut times: Vec<Duration>) -> Self {
        assert!(!times.is_empty(), "no solves recorded");
        times.sort();
        let count = times.len();
        let total: Duration = times.iter().sum();
        let pick = |q: f64| times[((count - 1) as f64 * q).round() as usize];
        Self { count, mean: total / count as u32, median: pick(0.5), p95: pick(0.95) }
    }
}

/// Per-predictor timing over the full closed loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingReport {
    pub dynamic: SolveTimingStats,
    pub kinematic: SolveTimingStats,
}

impl TimingReport {
    /// Mean solve-time ratio, dynamic over kinematic.
    pub fn mean_ratio(&self) -> f64 {
        self.dynamic.mean.as_secs_f64() / self.kinematic.mean.as_secs_f64()
    }
}

/// Times every one-step solve of the closed loop for both predictors.
pub fn run_timing_benchmark(spec: &StopAndGoSpec) -> Result<TimingReport, ScenarioError> {
    let dyn_run = run_stop_and_go(spec)?;
    let kin_run = run_stop_and_go_kinematic(spec)?;
    Ok(TimingReport {
        dynamic: SolveTimingStats::from_durations(
            dyn_run.solves.iter().map(|s| s.solve_time).collect(),
        ),
        kinematic: SolveTimingStats::from_durations(
            kin_run.solves.iter().map(|s| s.solve_time).collect(),
        ),
    })
}
