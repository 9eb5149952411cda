//! Continuous-time single-track (bicycle) vehicle models.
//!
//! Two model classes live here: the 3-DoF dynamic model with a linear tire
//! sideslip force law, and the kinematic model that ignores tire slip
//! entirely. Both are pure functions of parameters, state and input; the
//! discrete-time propagation built on top of them is in [`crate::integrate`].
//!
//! Sign convention: the axle sideslip stiffnesses `k_f`, `k_r` are negative,
//! so the lateral force is `k * alpha` with the slip angles as written below.
//! This keeps the denominators of the implicit discrete update strictly
//! positive for any forward speed.

use std::fmt;

/// Physical constants of the single-track model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// Vehicle mass (kg).
    pub m: f64,
    /// Yaw inertia of the vehicle body (kg·m²).
    pub i_z: f64,
    /// Distance from the C.G. to the front axle (m).
    pub l_f: f64,
    /// Distance from the C.G. to the rear axle (m).
    pub l_r: f64,
    /// Front axle equivalent sideslip stiffness (N/rad), negative.
    pub k_f: f64,
    /// Rear axle equivalent sideslip stiffness (N/rad), negative.
    pub k_r: f64,
}

impl Default for VehicleParams {
    /// C-Class hatchback parameter set used throughout the experiments.
    fn default() -> Self {
        Self {
            m: 1412.0,
            i_z: 1536.7,
            l_f: 1.06,
            l_r: 1.85,
            k_f: -128916.0,
            k_r: -85944.0,
        }
    }
}

impl VehicleParams {
    /// Wheelbase `l_f + l_r` (m).
    pub fn wheelbase(&self) -> f64 {
        self.l_f + self.l_r
    }

    /// `k_f + k_r`, the zeroth stiffness moment (negative).
    pub(crate) fn stiffness_sum(&self) -> f64 {
        self.k_f + self.k_r
    }

    /// `l_f·k_f − l_r·k_r`, the first stiffness moment about the C.G.
    pub(crate) fn stiffness_moment(&self) -> f64 {
        self.l_f * self.k_f - self.l_r * self.k_r
    }

    /// `l_f²·k_f + l_r²·k_r`, the second stiffness moment (negative).
    pub(crate) fn stiffness_second_moment(&self) -> f64 {
        self.l_f * self.l_f * self.k_f + self.l_r * self.l_r * self.k_r
    }

    /// Checks the parameter invariants, returning the violated one by name.
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.m > 0.0) {
            return Err("m > 0");
        }
        if !(self.i_z > 0.0) {
            return Err("I_z > 0");
        }
        if !(self.l_f > 0.0) {
            return Err("l_f > 0");
        }
        if !(self.l_r > 0.0) {
            return Err("l_r > 0");
        }
        if !(self.k_f < 0.0) {
            return Err("k_f < 0");
        }
        if !(self.k_r < 0.0) {
            return Err("k_r < 0");
        }
        Ok(())
    }
}

/// State of the dynamic model: `(x, y, phi, u, v, omega)`.
///
/// `x`, `y` are global positions (m), `phi` the yaw angle (rad), `u`/`v` the
/// body-frame longitudinal/lateral velocities (m/s) and `omega` the yaw rate
/// (rad/s). `phi` is not wrapped; it accumulates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DynState {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub u: f64,
    pub v: f64,
    pub omega: f64,
}

impl DynState {
    pub fn new(x: f64, y: f64, phi: f64, u: f64, v: f64, omega: f64) -> Self {
        Self { x, y, phi, u, v, omega }
    }

    /// State as an array in the `(x, y, phi, u, v, omega)` order.
    pub fn to_array(self) -> [f64; 6] {
        [self.x, self.y, self.phi, self.u, self.v, self.omega]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self { x: a[0], y: a[1], phi: a[2], u: a[3], v: a[4], omega: a[5] }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }

    /// Largest absolute state component; `NaN` maps to infinity.
    pub fn max_abs(&self) -> f64 {
        self.to_array()
            .iter()
            .map(|c| if c.is_nan() { f64::INFINITY } else { c.abs() })
            .fold(0.0, f64::max)
    }
}

/// State of the kinematic model: `(x, y, u, phi)`.
///
/// `u` is the absolute speed here, not the body-frame longitudinal component.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KinState {
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub phi: f64,
}

impl KinState {
    pub fn new(x: f64, y: f64, u: f64, phi: f64) -> Self {
        Self { x, y, u, phi }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.u, self.phi]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }
}

/// Control input: longitudinal acceleration command `a` (m/s²) and front
/// steering angle `delta` (rad).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    pub a: f64,
    pub delta: f64,
}

impl ControlInput {
    pub fn new(a: f64, delta: f64) -> Self {
        Self { a, delta }
    }
}

/// Linear tire law evaluation: lateral forces and the slip angles behind them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TireForces {
    /// Front axle lateral force (N).
    pub front: f64,
    /// Rear axle lateral force (N).
    pub rear: f64,
    /// Front sideslip angle (rad).
    pub alpha_front: f64,
    /// Rear sideslip angle (rad).
    pub alpha_rear: f64,
}

/// Errors raised where a model leaves its domain of definition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DomainError {
    /// Slip angles carry `u` in the denominator; the continuous dynamic
    /// model is undefined at or below standstill.
    NonpositiveSpeed { u: f64 },
    /// `tan(delta)` singularity of the kinematic slip relation.
    SteerSingular { delta: f64 },
    /// A denominator of the implicit update vanished (reachable only with
    /// reversed speed or nonphysical parameters).
    SingularDenominator { which: &'static str },
}

impl fmt::Display for DomainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonpositiveSpeed { u } => {
                write!(f, "dynamic model undefined at nonpositive speed u = {u}")
            }
            Self::SteerSingular { delta } => {
                write!(f, "steering angle delta = {delta} at the tan singularity")
            }
            Self::SingularDenominator { which } => {
                write!(f, "implicit update denominator `{which}` is zero")
            }
        }
    }
}

impl std::error::Error for DomainError {}

/// Right-hand-side variants of the continuous dynamic model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DynRhsMode {
    /// Small-angle steering (`cos δ → 1`, `sin δ → 0`) applied to the force
    /// terms; keeps the `v·ω` coupling in the speed equation.
    #[default]
    SmallAngle,
    /// Small-angle forces with `u̇ = a` exactly. This is the continuous
    /// counterpart of the discrete step, whose speed update drops the
    /// coupling term; use it for convergence measurements.
    DecoupledSpeed,
    /// Full steering trigonometry with the linear tire law. The highest
    /// fidelity variant; serves as the stand-in ground truth where a
    /// multibody prototype is not available.
    FullTrig,
}

/// Slip angles and linear lateral forces at the current state.
///
/// Fails below or at standstill, where the slip angles are undefined; the
/// discrete backward-variant step does not share this restriction.
pub fn tire_forces(
    p: &VehicleParams,
    s: &DynState,
    input: &ControlInput,
) -> Result<TireForces, DomainError> {
    if s.u <= 0.0 {
        return Err(DomainError::NonpositiveSpeed { u: s.u });
    }
    let alpha_front = (s.v + p.l_f * s.omega) / s.u - input.delta;
    let alpha_rear = (s.v - p.l_r * s.omega) / s.u;
    Ok(TireForces {
        front: p.k_f * alpha_front,
        rear: p.k_r * alpha_rear,
        alpha_front,
        alpha_rear,
    })
}

/// Continuous dynamic-model derivative with small-angle steering forces.
pub fn dyn_rhs(
    p: &VehicleParams,
    s: &DynState,
    input: &ControlInput,
) -> Result<DynState, DomainError> {
    dyn_rhs_mode(p, s, input, DynRhsMode::SmallAngle)
}

/// Continuous dynamic-model derivative with an explicit variant selection.
pub fn dyn_rhs_mode(
    p: &VehicleParams,
    s: &DynState,
    input: &ControlInput,
    mode: DynRhsMode,
) -> Result<DynState, DomainError> {
    let tf = tire_forces(p, s, input)?;
    let (cos_d, sin_d) = match mode {
        DynRhsMode::FullTrig => (input.delta.cos(), input.delta.sin()),
        _ => (1.0, 0.0),
    };
    let u_dot = match mode {
        DynRhsMode::DecoupledSpeed => input.a,
        _ => input.a + s.v * s.omega - tf.front * sin_d / p.m,
    };
    Ok(DynState {
        x: s.u * s.phi.cos() - s.v * s.phi.sin(),
        y: s.v * s.phi.cos() + s.u * s.phi.sin(),
        phi: s.omega,
        u: u_dot,
        v: -s.u * s.omega + (tf.front * cos_d + tf.rear) / p.m,
        omega: (p.l_f * tf.front * cos_d - p.l_r * tf.rear) / p.i_z,
    })
}

/// Kinematic sideslip angle `β(δ) = arctan(tan δ · l_r / (l_f + l_r))`.
pub fn kinematic_beta(p: &VehicleParams, delta: f64) -> Result<f64, DomainError> {
    if delta.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(DomainError::SteerSingular { delta });
    }
    Ok((delta.tan() * p.l_r / p.wheelbase()).atan())
}

/// Continuous kinematic-model derivative, in the `(x, y, u, phi)` state order.
///
/// Nonsingular at `u = 0`; the only failure is the steering singularity.
pub fn kin_rhs(
    p: &VehicleParams,
    s: &KinState,
    input: &ControlInput,
) -> Result<KinState, DomainError> {
    let beta = kinematic_beta(p, input.delta)?;
    Ok(KinState {
        x: s.u * (s.phi + beta).cos(),
        y: s.u * (s.phi + beta).sin(),
        u: input.a,
        phi: s.u / p.l_r * beta.sin(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn table_params() -> VehicleParams {
        VehicleParams::default()
    }

    #[test]
    fn straight_rolling_has_no_slip() {
        let s = DynState::new(0.0, 0.0, 0.0, 5.0, 0.0, 0.0);
        let tf = tire_forces(&table_params(), &s, &ControlInput::default()).unwrap();
        assert_eq!(tf.alpha_front, 0.0);
        assert_eq!(tf.alpha_rear, 0.0);
        assert_eq!(tf.front, 0.0);
        assert_eq!(tf.rear, 0.0);
    }

    #[test]
    fn tire_forces_match_direct_substitution() {
        // u=5, v=0.5: both slip angles are exactly 0.1 rad.
        let s = DynState::new(0.0, 0.0, 0.0, 5.0, 0.5, 0.0);
        let tf = tire_forces(&table_params(), &s, &ControlInput::default()).unwrap();
        assert_relative_eq!(tf.alpha_front, 0.1, max_relative = 1e-15);
        assert_relative_eq!(tf.alpha_rear, 0.1, max_relative = 1e-15);
        assert_relative_eq!(tf.front, -12891.6, max_relative = 1e-15);
        assert_relative_eq!(tf.rear, -8594.4, max_relative = 1e-15);
    }

    #[test]
    fn tire_forces_step_steer_point() {
        // Step-steer condition u = 8 m/s, delta = 0.2674 rad.
        let s = DynState::new(0.0, 0.0, 0.0, 8.0, 0.0, 0.0);
        let input = ControlInput::new(0.0, 0.2674);
        let tf = tire_forces(&table_params(), &s, &input).unwrap();
        assert_relative_eq!(tf.alpha_front, -0.2674, max_relative = 1e-15);
        assert_relative_eq!(tf.front, 34472.1384, max_relative = 1e-14);
        assert_eq!(tf.rear, 0.0);
    }

    #[test]
    fn tire_forces_reject_standstill() {
        let s = DynState::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let err = tire_forces(&table_params(), &s, &ControlInput::default()).unwrap_err();
        assert_eq!(err, DomainError::NonpositiveSpeed { u: 0.0 });
    }

    #[test]
    fn dyn_rhs_uniform_straight_motion() {
        let s = DynState::new(0.0, 0.0, 0.0, 5.0, 0.0, 0.0);
        let d = dyn_rhs(&table_params(), &s, &ControlInput::default()).unwrap();
        assert_eq!(d.to_array(), [5.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn dyn_rhs_heading_rotates_world_velocity() {
        let s = DynState::new(0.0, 0.0, std::f64::consts::FRAC_PI_2, 5.0, 0.0, 0.0);
        let d = dyn_rhs(&table_params(), &s, &ControlInput::new(2.0, 0.0)).unwrap();
        assert_abs_diff_eq!(d.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.y, 5.0, epsilon = 1e-15);
        assert_eq!(d.u, 2.0);
        assert_eq!(d.v, 0.0);
        assert_eq!(d.omega, 0.0);
    }

    #[test]
    fn dyn_rhs_step_steer_point() {
        // v̇ = F_front/m, ω̇ = l_f·F_front/I_z with the frozen force value;
        // expected digits from 50-digit evaluation of the closed forms.
        let s = DynState::new(0.0, 0.0, 0.0, 8.0, 0.0, 0.0);
        let input = ControlInput::new(0.0, 0.2674);
        let d = dyn_rhs(&table_params(), &s, &input).unwrap();
        assert_relative_eq!(d.v, 24.413695750708215, max_relative = 1e-14);
        assert_relative_eq!(d.omega, 23.778529774191449, max_relative = 1e-14);
        assert_eq!(d.u, 0.0);
    }

    #[test]
    fn dyn_rhs_decoupled_drops_speed_coupling() {
        let s = DynState::new(0.0, 0.0, 0.0, 8.0, 1.0, 0.5);
        let input = ControlInput::new(0.3, 0.1);
        let coupled = dyn_rhs(&table_params(), &s, &input).unwrap();
        let decoupled =
            dyn_rhs_mode(&table_params(), &s, &input, DynRhsMode::DecoupledSpeed).unwrap();
        assert_relative_eq!(coupled.u, 0.3 + 1.0 * 0.5, max_relative = 1e-15);
        assert_eq!(decoupled.u, 0.3);
        assert_eq!(coupled.v, decoupled.v);
        assert_eq!(coupled.omega, decoupled.omega);
    }

    #[test]
    fn dyn_rhs_full_trig_scales_front_force() {
        let s = DynState::new(0.0, 0.0, 0.0, 8.0, 0.0, 0.0);
        let input = ControlInput::new(0.0, 0.2674);
        let small = dyn_rhs(&table_params(), &s, &input).unwrap();
        let full = dyn_rhs_mode(&table_params(), &s, &input, DynRhsMode::FullTrig).unwrap();
        let tf = tire_forces(&table_params(), &s, &input).unwrap();
        assert_relative_eq!(full.v, small.v * input.delta.cos(), max_relative = 1e-14);
        assert_relative_eq!(
            full.u,
            -tf.front * input.delta.sin() / 1412.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn kin_rhs_at_rest_is_zero() {
        let s = KinState::new(3.0, -2.0, 0.0, 1.2);
        let d = kin_rhs(&table_params(), &s, &ControlInput::new(0.0, 0.4)).unwrap();
        assert_eq!(d.to_array(), [0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn kin_rhs_straight_line() {
        let s = KinState::new(0.0, 0.0, 6.0, 0.0);
        let d = kin_rhs(&table_params(), &s, &ControlInput::new(1.0, 0.0)).unwrap();
        assert_eq!(d.to_array(), [6.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn kin_rhs_matches_beta_substitution() {
        // Frozen digits from 50-digit evaluation of the beta formula.
        let s = KinState::new(0.0, 0.0, 6.0, 0.0);
        let input = ControlInput::new(1.0, 0.2674);
        let beta = kinematic_beta(&table_params(), input.delta).unwrap();
        assert_relative_eq!(beta, 0.17243792889916511, max_relative = 1e-15);
        let d = kin_rhs(&table_params(), &s, &input).unwrap();
        assert_relative_eq!(d.x, 5.911016303228121, max_relative = 1e-14);
        assert_relative_eq!(d.y, 1.0295077770329656, max_relative = 1e-14);
        assert_eq!(d.u, 1.0);
        assert_relative_eq!(d.phi, 0.55649069028808952, max_relative = 1e-14);
    }

    #[test]
    fn kin_rhs_rejects_steer_singularity() {
        let s = KinState::new(0.0, 0.0, 6.0, 0.0);
        let input = ControlInput::new(0.0, std::f64::consts::FRAC_PI_2);
        assert!(matches!(
            kin_rhs(&table_params(), &s, &input),
            Err(DomainError::SteerSingular { .. })
        ));
    }

    #[test]
    fn kin_rhs_zero_steer_zero_yaw_rate() {
        for u in [0.0, 0.5, 3.0, 12.0] {
            let s = KinState::new(0.0, 0.0, u, 0.7);
            let d = kin_rhs(&table_params(), &s, &ControlInput::new(0.0, 0.0)).unwrap();
            assert_eq!(d.phi, 0.0);
        }
    }

    #[test]
    fn params_validation_names_invariant() {
        let mut p = table_params();
        p.m = -1.0;
        assert_eq!(p.validate(), Err("m > 0"));
        let mut p = table_params();
        p.k_f = 1.0;
        assert_eq!(p.validate(), Err("k_f < 0"));
        assert!(table_params().validate().is_ok());
    }
}
