//! Nonlinear model-predictive control with the discrete bicycle model as
//! predictor.
//!
//! The optimal control problem minimizes a quadratic tracking-plus-effort
//! objective over the predictive horizon, subject to the model dynamics, a
//! quadratic keep-out constraint around an obstacle, and box constraints on
//! state and input. With a control horizon of one the decision space is the
//! 2-D input box, which keeps the solver simple and exhaustively checkable:
//! a coarse grid seeds a compass pattern search over the box, with the
//! obstacle and state constraints folded in as an exact penalty.
//!
//! The predictor is pluggable so the kinematic model can be benchmarked
//! under the identical contract.

use crate::integrate::{step_backward_variant, step_forward_euler_kin};
use crate::models::{ControlInput, DomainError, DynState, KinState, VehicleParams};
use std::time::{Duration, Instant};

/// Exact-penalty weight on obstacle and state-box violations. Large enough
/// that the penalty gradient dominates every tracking gradient at any
/// violation the scenarios can produce, so minimizers sit on the constraint
/// boundary rather than inside it.
pub const EXACT_PENALTY_WEIGHT: f64 = 1e6;

/// Weights, horizons and bounds of the optimal control problem.
///
/// All 6-vectors are in the `(x, y, phi, u, v, omega)` slot order; the
/// kinematic predictor embeds its 4 states into the same slots with zero
/// lateral components, which restricts every quadratic form and box to the
/// corresponding sub-blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    /// Predictive horizon (steps).
    pub n_p: usize,
    /// Control horizon (free input decisions); inputs are held beyond it.
    pub n_c: usize,
    /// Diagonal state-error weight.
    pub q: [f64; 6],
    /// Diagonal input weight.
    pub r: [f64; 2],
    /// Diagonal obstacle metric.
    pub q_s: [f64; 6],
    /// Safety distance (m): keep-out requires the `q_s`-quadratic form to
    /// stay at or above `d_s²`.
    pub d_s: f64,
    pub x_min: [f64; 6],
    pub x_max: [f64; 6],
    pub u_min: [f64; 2],
    pub u_max: [f64; 2],
    /// Discretization step (s).
    pub t_s: f64,
}

impl Default for MpcConfig {
    /// The stop-and-go task configuration.
    fn default() -> Self {
        use std::f64::consts::FRAC_PI_4;
        Self {
            n_p: 20,
            n_c: 1,
            q: [100.0, 100.0, 0.0, 0.0, 0.0, 0.0],
            r: [10.0, 500.0],
            q_s: [1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            d_s: 8.0,
            x_min: [f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0, -4.0, -3.0],
            x_max: [f64::INFINITY, f64::INFINITY, f64::INFINITY, 20.0, 4.0, 3.0],
            u_min: [-5.0, -FRAC_PI_4],
            u_max: [2.0, FRAC_PI_4],
            t_s: 0.1,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.n_c < 1 || self.n_p < self.n_c {
            return Err("N_p >= N_c >= 1");
        }
        if self.q.iter().chain(&self.r).chain(&self.q_s).any(|w| *w < 0.0) {
            return Err("Q, R, Q_s >= 0");
        }
        if !(self.d_s > 0.0) {
            return Err("D_s > 0");
        }
        if self.x_min.iter().zip(&self.x_max).any(|(lo, hi)| lo > hi) {
            return Err("X_min <= X_max");
        }
        if self.u_min.iter().zip(&self.u_max).any(|(lo, hi)| lo > hi) {
            return Err("U_min <= U_max");
        }
        if !(self.t_s > 0.0) {
            return Err("T_s > 0");
        }
        Ok(())
    }
}

/// Reference states and obstacle positions over one predictive horizon,
/// one entry per predicted step.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceWindow {
    /// Reference states in the 6-slot order; unweighted slots are zero.
    pub points: Vec<[f64; 6]>,
    /// Obstacle position per step (held constant within the horizon by the
    /// builder below; the problem statement allows it to move).
    pub obstacle: Vec<[f64; 2]>,
}

impl ReferenceWindow {
    /// Stationary reference: every point and obstacle entry repeated.
    pub fn stationary(point: [f64; 6], obstacle: [f64; 2], n_p: usize) -> Self {
        Self { points: vec![point; n_p], obstacle: vec![obstacle; n_p] }
    }
}

/// How the reference march treats the obstacle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePolicy {
    /// Speed encoded by the point spacing (m/s).
    pub v_ref: f64,
    /// When the direct path is blocked head-on, the march halts this far
    /// outside the keep-out disk. The margin absorbs the braking overshoot
    /// of a held-input controller (which can only shed a fixed fraction of
    /// its speed per re-solve, roughly doubling the ideal stopping
    /// distance) and leaves turning room for a restart.
    pub stop_margin: f64,
    /// Perpendicular clearance below which a disk crossing counts as
    /// head-on. Oblique crossings march straight through and leave the
    /// detour to the optimizer's keep-out constraint.
    pub bypass_clearance: f64,
}

impl Default for ReferencePolicy {
    fn default() -> Self {
        Self { v_ref: 6.0, stop_margin: 4.5, bypass_clearance: 2.0 }
    }
}

/// Builds the horizon reference: points spaced `v_ref·T_s` apart along the
/// straight line from the C.G. to the target, clamped at the target, with
/// reference heading equal to the path bearing and zero velocity slots.
///
/// If that line would cross the obstacle's keep-out disk nearly head-on,
/// the march halts `stop_margin` short of the disk; with the C.G. already
/// inside that halt ring the anchor falls behind the C.G., which keeps the
/// braking incentive instead of collapsing the reference onto the vehicle.
pub fn reference_window(
    cfg: &MpcConfig,
    cg: [f64; 2],
    target: [f64; 2],
    obstacle: [f64; 2],
    policy: &ReferencePolicy,
) -> ReferenceWindow {
    let dx = target[0] - cg[0];
    let dy = target[1] - cg[1];
    let dist_target = (dx * dx + dy * dy).sqrt();
    if dist_target < 1e-12 {
        let point = [target[0], target[1], 0.0, 0.0, 0.0, 0.0];
        return ReferenceWindow::stationary(point, obstacle, cfg.n_p);
    }
    let dir = [dx / dist_target, dy / dist_target];
    let bearing = dy.atan2(dx);
    let mut s_max = dist_target;

    let rel = [obstacle[0] - cg[0], obstacle[1] - cg[1]];
    let foot = rel[0] * dir[0] + rel[1] * dir[1];
    let perp = (rel[0] * dir[1] - rel[1] * dir[0]).abs();
    let ring = cfg.d_s + policy.stop_margin;
    let inside_ring = rel[0] * rel[0] + rel[1] * rel[1] < ring * ring;
    if perp < policy.bypass_clearance && (foot > 0.0 || inside_ring) {
        let half_chord_sq = ring * ring - perp * perp;
        if half_chord_sq > 0.0 {
            s_max = s_max.min(foot - half_chord_sq.sqrt());
        }
    }

    let points = (1..=cfg.n_p)
        .map(|k| {
            let s = (k as f64 * policy.v_ref * cfg.t_s).min(s_max);
            [cg[0] + s * dir[0], cg[1] + s * dir[1], bearing, 0.0, 0.0, 0.0]
        })
        .collect();
    ReferenceWindow { points, obstacle: vec![obstacle; cfg.n_p] }
}

/// A one-step prediction model exposing its state in the common 6-slot
/// layout, so the same weights, bounds and obstacle metric apply to every
/// model class.
pub trait Predictor {
    type State: Copy + std::fmt::Debug;

    fn step(&self, s: &Self::State, input: &ControlInput) -> Result<Self::State, DomainError>;

    /// Embed into `(x, y, phi, u, v, omega)`; absent states are zero.
    fn embed(s: &Self::State) -> [f64; 6];

    /// Longitudinal speed, used to snap braking onto the standstill boundary.
    fn speed(s: &Self::State) -> f64;
}

/// Backward-variant discrete dynamic model as predictor.
#[derive(Debug, Clone, Copy)]
pub struct DynPredictor {
    pub params: VehicleParams,
    pub t_s: f64,
}

impl Predictor for DynPredictor {
    type State = DynState;

    fn step(&self, s: &DynState, input: &ControlInput) -> Result<DynState, DomainError> {
        step_backward_variant(&self.params, s, input, self.t_s)
    }

    fn embed(s: &DynState) -> [f64; 6] {
        s.to_array()
    }

    fn speed(s: &DynState) -> f64 {
        s.u
    }
}

/// Forward-Euler kinematic model as predictor.
#[derive(Debug, Clone, Copy)]
pub struct KinPredictor {
    pub params: VehicleParams,
    pub t_s: f64,
}

impl Predictor for KinPredictor {
    type State = KinState;

    fn step(&self, s: &KinState, input: &ControlInput) -> Result<KinState, DomainError> {
        step_forward_euler_kin(&self.params, s, input, self.t_s)
    }

    fn embed(s: &KinState) -> [f64; 6] {
        [s.x, s.y, s.phi, s.u, 0.0, 0.0]
    }

    fn speed(s: &KinState) -> f64 {
        s.u
    }
}

fn held_input(inputs: &[ControlInput], k: usize) -> ControlInput {
    inputs[k.min(inputs.len() - 1)]
}

/// Quadratic tracking-plus-effort objective over the horizon: the predictor
/// rolls forward `n_p` steps under the inputs (held beyond the control
/// horizon), accumulating state-error terms per predicted step and input
/// terms per applied step.
pub fn ocp_cost<P: Predictor>(
    cfg: &MpcConfig,
    predictor: &P,
    x0: &P::State,
    inputs: &[ControlInput],
    window: &ReferenceWindow,
) -> Result<f64, DomainError> {
    debug_assert!(!inputs.is_empty() && inputs.len() <= cfg.n_c);
    debug_assert_eq!(window.points.len(), cfg.n_p);
    let mut cost = 0.0;
    let mut state = *x0;
    for k in 0..cfg.n_p {
        let input = held_input(inputs, k);
        cost += cfg.r[0] * input.a * input.a + cfg.r[1] * input.delta * input.delta;
        state = predictor.step(&state, &input)?;
        let e = P::embed(&state);
        let r = &window.points[k];
        for i in 0..6 {
            let d = e[i] - r[i];
            cost += cfg.q[i] * d * d;
        }
    }
    Ok(cost)
}

/// Signed constraint margins along the predicted trajectory; a solution is
/// feasible iff every margin is nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolationReport {
    /// Per-step `(X − X_obs)ᵀ Q_s (X − X_obs) − D_s²`.
    pub obstacle: Vec<f64>,
    /// Per-step worst state-box margin, `min_i min(X_i − X_min_i, X_max_i − X_i)`.
    pub state_box: Vec<f64>,
    /// Per applied input, worst input-box margin.
    pub input_box: Vec<f64>,
}

impl ViolationReport {
    pub fn feasible(&self) -> bool {
        self.worst() >= 0.0
    }

    /// Most negative margin (or the smallest nonnegative one if feasible).
    pub fn worst(&self) -> f64 {
        self.obstacle
            .iter()
            .chain(&self.state_box)
            .chain(&self.input_box)
            .fold(f64::INFINITY, |acc, m| acc.min(*m))
    }
}

/// Evaluates the keep-out, state-box and input-box margins for a candidate
/// input sequence.
pub fn constraint_violations<P: Predictor>(
    cfg: &MpcConfig,
    predictor: &P,
    x0: &P::State,
    inputs: &[ControlInput],
    window: &ReferenceWindow,
) -> Result<ViolationReport, DomainError> {
    let mut obstacle = Vec::with_capacity(cfg.n_p);
    let mut state_box = Vec::with_capacity(cfg.n_p);
    let mut input_box = Vec::with_capacity(inputs.len());
    for input in inputs {
        let lo = (input.a - cfg.u_min[0]).min(input.delta - cfg.u_min[1]);
        let hi = (cfg.u_max[0] - input.a).min(cfg.u_max[1] - input.delta);
        input_box.push(lo.min(hi));
    }
    let mut state = *x0;
    for k in 0..cfg.n_p {
        state = predictor.step(&state, &held_input(inputs, k))?;
        let e = P::embed(&state);
        let obs = &window.obstacle[k];
        let obs6 = [obs[0], obs[1], 0.0, 0.0, 0.0, 0.0];
        let mut quad = 0.0;
        let mut box_margin = f64::INFINITY;
        for i in 0..6 {
            let d = e[i] - obs6[i];
            quad += cfg.q_s[i] * d * d;
            box_margin = box_margin.min(e[i] - cfg.x_min[i]).min(cfg.x_max[i] - e[i]);
        }
        obstacle.push(quad - cfg.d_s * cfg.d_s);
        state_box.push(box_margin);
    }
    Ok(ViolationReport { obstacle, state_box, input_box })
}

/// One solved control step.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    /// First (and, with a control horizon of one, only) input to apply.
    pub input: ControlInput,
    /// Objective value at the solution (tracking + effort, no penalties).
    pub cost: f64,
    /// Objective plus exact-penalty terms; what the solver minimized.
    pub penalized_cost: f64,
    /// Predicted states over the horizon, embedded in the 6-slot layout.
    pub predicted: Vec<[f64; 6]>,
    /// Whether the solution satisfies every constraint. `false` marks the
    /// least-violation fallback that forces the stop in a blocked scenario.
    pub feasible: bool,
    /// Most negative constraint margin at the solution.
    pub worst_margin: f64,
    /// Merit-function evaluations spent.
    pub iterations: usize,
    pub solve_time: Duration,
}

/// Exact-penalty merit: objective plus weighted obstacle and state-box
/// violations. Input bounds are handled by projection, not penalty.
fn merit<P: Predictor>(
    cfg: &MpcConfig,
    predictor: &P,
    x0: &P::State,
    input: &ControlInput,
    window: &ReferenceWindow,
) -> Result<f64, DomainError> {
    let mut cost =
        (cfg.r[0] * input.a * input.a + cfg.r[1] * input.delta * input.delta) * cfg.n_p as f64;
    let mut penalty = 0.0;
    let mut state = *x0;
    for k in 0..cfg.n_p {
        state = predictor.step(&state, input)?;
        let e = P::embed(&state);
        let r = &window.points[k];
        let obs = &window.obstacle[k];
        let mut quad = 0.0;
        for i in 0..6 {
            let d = e[i] - r[i];
            cost += cfg.q[i] * d * d;
            let o = e[i] - if i == 0 { obs[0] } else if i == 1 { obs[1] } else { 0.0 };
            quad += cfg.q_s[i] * o * o;
            if e[i] < cfg.x_min[i] {
                penalty += cfg.x_min[i] - e[i];
            }
            if e[i] > cfg.x_max[i] {
                penalty += e[i] - cfg.x_max[i];
            }
        }
        if quad < cfg.d_s * cfg.d_s {
            penalty += cfg.d_s * cfg.d_s - quad;
        }
    }
    Ok(cost + EXACT_PENALTY_WEIGHT * penalty)
}

const COMPASS_DIRECTIONS: [(f64, f64); 8] = [
    (1.0, 0.0),
    (-1.0, 0.0),
    (0.0, 1.0),
    (0.0, -1.0),
    (1.0, 1.0),
    (1.0, -1.0),
    (-1.0, 1.0),
    (-1.0, -1.0),
];

const SEED_GRID: usize = 21;
const REFINE_SEEDS: usize = 4;

/// Solves one control step for any predictor; the named entry points below
/// fix the two model classes.
pub fn solve_step_with<P: Predictor>(
    cfg: &MpcConfig,
    predictor: &P,
    x0: &P::State,
    window: &ReferenceWindow,
) -> Result<MpcSolution, DomainError> {
    let start = Instant::now();
    let clamp = |input: ControlInput| ControlInput {
        a: input.a.clamp(cfg.u_min[0], cfg.u_max[0]),
        delta: input.delta.clamp(cfg.u_min[1], cfg.u_max[1]),
    };
    let range_a = cfg.u_max[0] - cfg.u_min[0];
    let range_d = cfg.u_max[1] - cfg.u_min[1];
    let mut evals = 0usize;
    let mut eval = |input: &ControlInput| -> Result<f64, DomainError> {
        evals += 1;
        merit(cfg, predictor, x0, input, window)
    };

    // Coarse seeding over the input box.
    let mut grid = Vec::with_capacity(SEED_GRID * SEED_GRID);
    for i in 0..SEED_GRID {
        for j in 0..SEED_GRID {
            let input = ControlInput {
                a: cfg.u_min[0] + range_a * i as f64 / (SEED_GRID - 1) as f64,
                delta: cfg.u_min[1] + range_d * j as f64 / (SEED_GRID - 1) as f64,
            };
            let value = eval(&input)?;
            grid.push((value, input));
        }
    }
    grid.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Compass pattern search from the best few basins.
    let mut best = grid[0];
    for &(seed_value, seed) in grid.iter().take(REFINE_SEEDS) {
        let mut current = (seed_value, seed);
        let mut step_a = range_a / (SEED_GRID - 1) as f64 / 2.0;
        let mut step_d = range_d / (SEED_GRID - 1) as f64 / 2.0;
        while step_a > 1e-9 * range_a || step_d > 1e-9 * range_d {
            let mut improved = false;
            for (da, dd) in COMPASS_DIRECTIONS {
                let cand = clamp(ControlInput {
                    a: current.1.a + da * step_a,
                    delta: current.1.delta + dd * step_d,
                });
                if cand == current.1 {
                    continue;
                }
                let value = eval(&cand)?;
                if value < current.0 {
                    current = (value, cand);
                    improved = true;
                    break;
                }
            }
            if !improved {
                step_a /= 2.0;
                step_d /= 2.0;
            }
        }
        if current.0 < best.0 {
            best = current;
        }
    }

    // Snap onto the standstill boundary: braking minimizers sit on the
    // predicted-speed-nonnegativity kink, and quantization must not leave
    // the applied input a hair below it.
    let u0 = P::speed(x0);
    let a_stop = -u0 / cfg.t_s;
    if a_stop >= cfg.u_min[0]
        && best.1.a < a_stop
        && a_stop - best.1.a < 1e-4
        && a_stop <= cfg.u_max[0]
    {
        let snapped = ControlInput { a: a_stop, ..best.1 };
        best = (eval(&snapped)?, snapped);
    }

    let inputs = [best.1];
    let cost = ocp_cost(cfg, predictor, x0, &inputs, window)?;
    let report = constraint_violations(cfg, predictor, x0, &inputs, window)?;
    let mut predicted = Vec::with_capacity(cfg.n_p);
    let mut state = *x0;
    for _ in 0..cfg.n_p {
        state = predictor.step(&state, &best.1)?;
        predicted.push(P::embed(&state));
    }
    Ok(MpcSolution {
        input: best.1,
        cost,
        penalized_cost: best.0,
        predicted,
        feasible: report.worst() >= -1e-9,
        worst_margin: report.worst(),
        iterations: evals,
        solve_time: start.elapsed(),
    })
}

/// Solves one control step with the dynamic-model predictor.
pub fn solve_step(
    cfg: &MpcConfig,
    predictor: &DynPredictor,
    x0: &DynState,
    window: &ReferenceWindow,
) -> Result<MpcSolution, DomainError> {
    solve_step_with(cfg, predictor, x0, window)
}

/// Identical contract with the kinematic predictor.
pub fn solve_step_kinematic(
    cfg: &MpcConfig,
    predictor: &KinPredictor,
    x0: &KinState,
    window: &ReferenceWindow,
) -> Result<MpcSolution, DomainError> {
    solve_step_with(cfg, predictor, x0, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn cfg() -> MpcConfig {
        MpcConfig::default()
    }

    fn dyn_predictor() -> DynPredictor {
        DynPredictor { params: VehicleParams::default(), t_s: 0.1 }
    }

    #[test]
    fn cost_zero_on_reference_at_rest() {
        let c = cfg();
        let x0 = DynState::default();
        let window = ReferenceWindow::stationary([0.0; 6], [1e9, 1e9], c.n_p);
        let cost =
            ocp_cost(&c, &dyn_predictor(), &x0, &[ControlInput::default()], &window).unwrap();
        assert_eq!(cost, 0.0);
    }

    #[test]
    fn cost_reduces_to_input_effort_with_zero_q() {
        let mut c = cfg();
        c.q = [0.0; 6];
        let x0 = DynState::new(0.0, 0.0, 0.0, 5.0, 0.0, 0.0);
        let window = ReferenceWindow::stationary([0.0; 6], [1e9, 1e9], c.n_p);
        let input = ControlInput::new(1.0, 0.1);
        let cost = ocp_cost(&c, &dyn_predictor(), &x0, &[input], &window).unwrap();
        let expected = c.n_p as f64 * (10.0 * 1.0 + 500.0 * 0.01);
        assert_relative_eq!(cost, expected, max_relative = 1e-12);
    }

    #[test]
    fn cost_matches_independent_rollout_summation() {
        // Recompute the quadratic sums from a bare rollout of the public
        // step function.
        let c = cfg();
        let x0 = DynState::new(0.0, 0.0, std::f64::consts::FRAC_PI_4, 6.0, 0.0, 0.0);
        let pred = dyn_predictor();
        let bearing = 0.0;
        let points: Vec<[f64; 6]> =
            (1..=c.n_p).map(|k| [0.6 * k as f64, 0.0, bearing, 0.0, 0.0, 0.0]).collect();
        let window = ReferenceWindow { points: points.clone(), obstacle: vec![[1e9, 1e9]; c.n_p] };
        let input = ControlInput::default();
        let cost = ocp_cost(&c, &pred, &x0, &[input], &window).unwrap();

        let mut expected = 0.0;
        let mut s = x0;
        for point in &points {
            s = step_backward_variant(&pred.params, &s, &input, pred.t_s).unwrap();
            expected += 100.0 * (s.x - point[0]).powi(2) + 100.0 * (s.y - point[1]).powi(2);
        }
        assert_relative_eq!(cost, expected, max_relative = 1e-12);
        assert!(cost > 0.0);
    }

    #[test]
    fn obstacle_margins_positive_when_remote() {
        let c = cfg();
        let x0 = DynState::new(0.0, 0.0, 0.0, 5.0, 0.0, 0.0);
        let window = ReferenceWindow::stationary([0.0; 6], [1e9, 1e9], c.n_p);
        let report = constraint_violations(
            &c,
            &dyn_predictor(),
            &x0,
            &[ControlInput::default()],
            &window,
        )
        .unwrap();
        assert!(report.obstacle.iter().all(|m| *m > 0.0));
        assert!(report.feasible());
    }

    #[test]
    fn obstacle_margin_zero_on_the_circle() {
        // Stationary vehicle exactly D_s away from the obstacle.
        let c = cfg();
        let x0 = DynState::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let window = ReferenceWindow::stationary([0.0; 6], [c.d_s, 0.0], c.n_p);
        let report = constraint_violations(
            &c,
            &dyn_predictor(),
            &x0,
            &[ControlInput::default()],
            &window,
        )
        .unwrap();
        for m in &report.obstacle {
            assert_abs_diff_eq!(*m, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn first_violating_step_matches_line_circle_intersection() {
        // Straight 45-degree path from the origin at 6 m/s against the
        // (15,15) obstacle with D_s = 8: the geometric first-entry arc
        // length is 15√2 − 8, so the first violating sample is the first
        // k with 0.6k beyond it. The horizon is lengthened so that sample
        // lies inside the window.
        let mut c = cfg();
        c.n_p = 30;
        let x0 = KinState::new(0.0, 0.0, 6.0, std::f64::consts::FRAC_PI_4);
        let pred = KinPredictor { params: VehicleParams::default(), t_s: 0.1 };
        let window = ReferenceWindow::stationary([0.0; 6], [15.0, 15.0], c.n_p);
        let report =
            constraint_violations(&c, &pred, &x0, &[ControlInput::default()], &window).unwrap();
        let first_violation = report.obstacle.iter().position(|m| *m < 0.0).unwrap();
        let entry_arc = 15.0 * std::f64::consts::SQRT_2 - 8.0;
        let expected = (1..).find(|k| *k as f64 * 0.6 > entry_arc).unwrap() - 1; // 0-based
        assert_eq!(first_violation, expected);
        assert_eq!(first_violation, 22);
    }

    #[test]
    fn solve_at_rest_on_target_returns_near_zero_input() {
        let c = cfg();
        let x0 = DynState::default();
        let window = ReferenceWindow::stationary([0.0; 6], [1e9, 1e9], c.n_p);
        let sol = solve_step(&c, &dyn_predictor(), &x0, &window).unwrap();
        assert!(sol.input.a.abs() < 1e-6);
        assert!(sol.input.delta.abs() < 1e-6);
        assert!(sol.cost < 1e-9);
        assert!(sol.feasible);
    }

    #[test]
    fn solve_launch_toward_target_floors_acceleration() {
        // Start of the stop-and-go task: full acceleration along the
        // diagonal, negligible steering.
        let c = cfg();
        let x0 = DynState::new(0.0, 0.0, std::f64::consts::FRAC_PI_4, 0.0, 0.0, 0.0);
        let window =
            reference_window(&c, [0.0, 0.0], [30.0, 30.0], [15.0, 15.0], &ReferencePolicy::default());
        let sol = solve_step(&c, &dyn_predictor(), &x0, &window).unwrap();
        assert_relative_eq!(sol.input.a, 2.0, max_relative = 1e-6);
        assert!(sol.input.delta.abs() < 1e-3);
        assert!(sol.feasible);
    }

    #[test]
    fn solver_is_deterministic() {
        let c = cfg();
        let x0 = DynState::new(1.0, -2.0, 0.3, 4.0, 0.2, -0.1);
        let window = reference_window(
            &c,
            [1.0, -2.0],
            [25.0, 10.0],
            [12.0, 3.0],
            &ReferencePolicy::default(),
        );
        let a = solve_step(&c, &dyn_predictor(), &x0, &window).unwrap();
        let b = solve_step(&c, &dyn_predictor(), &x0, &window).unwrap();
        assert_eq!(a.input, b.input);
        assert_eq!(a.cost, b.cost);
    }

    #[test]
    fn kinematic_solver_mirrors_contract() {
        let c = cfg();
        let x0 = KinState::default();
        let window = ReferenceWindow::stationary([0.0; 6], [1e9, 1e9], c.n_p);
        let pred = KinPredictor { params: VehicleParams::default(), t_s: 0.1 };
        let sol = solve_step_kinematic(&c, &pred, &x0, &window).unwrap();
        assert!(sol.input.a.abs() < 1e-6);
        assert!(sol.input.delta.abs() < 1e-6);
    }

    #[test]
    fn reference_march_clamps_at_target() {
        let c = cfg();
        let window = reference_window(
            &c,
            [29.0, 30.0],
            [30.0, 30.0],
            [1e9, 1e9],
            &ReferencePolicy::default(),
        );
        for p in &window.points {
            assert!(p[0] <= 30.0 + 1e-12);
        }
        assert_abs_diff_eq!(window.points.last().unwrap()[0], 30.0, epsilon = 1e-12);
    }

    #[test]
    fn reference_march_halts_before_headon_obstacle() {
        let c = cfg();
        let policy = ReferencePolicy::default();
        let window = reference_window(&c, [0.0, 0.0], [30.0, 30.0], [15.0, 15.0], &policy);
        let ring = c.d_s + policy.stop_margin;
        let halt = 15.0 * std::f64::consts::SQRT_2 - ring;
        for p in &window.points {
            let s = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!(s <= halt + 1e-9, "reference point {s} beyond the halt ring {halt}");
        }
        let last = window.points.last().unwrap();
        let s_last = (last[0] * last[0] + last[1] * last[1]).sqrt();
        assert_abs_diff_eq!(s_last, halt, epsilon = 1e-9);
    }

    #[test]
    fn reference_march_ignores_oblique_obstacle() {
        // Perpendicular clearance above the bypass threshold: the march
        // runs straight through.
        let c = cfg();
        let policy = ReferencePolicy::default();
        let window = reference_window(&c, [0.0, 0.0], [30.0, 0.0], [15.0, 3.0], &policy);
        let expected = 20.0 * policy.v_ref * c.t_s;
        assert_abs_diff_eq!(window.points.last().unwrap()[0], expected, epsilon = 1e-12);
    }

    #[test]
    fn reference_anchor_falls_behind_inside_ring() {
        let c = cfg();
        let policy = ReferencePolicy::default();
        // C.G. one meter outside the keep-out disk, well inside the halt
        // ring, obstacle dead ahead.
        let cg = [15.0 - c.d_s - 1.0, 15.0 - 0.0];
        let window = reference_window(&c, [cg[0], 15.0], [30.0, 15.0], [15.0, 15.0], &policy);
        for p in &window.points {
            assert!(p[0] < cg[0], "anchor must fall behind the C.G.");
        }
    }

    #[test]
    fn config_validation_names_invariant() {
        let mut c = cfg();
        c.n_p = 0;
        assert_eq!(c.validate(), Err("N_p >= N_c >= 1"));
        let mut c = cfg();
        c.d_s = 0.0;
        assert_eq!(c.validate(), Err("D_s > 0"));
        assert!(cfg().validate().is_ok());
    }
}
