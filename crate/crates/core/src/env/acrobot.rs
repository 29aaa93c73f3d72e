use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{check_limits, DoneReason, EnvConfig, EnvSpec, Environment, Observation, StepResult, TaskMode};
use crate::error::{ensure_dim, Error, Result};

pub const LINK_LENGTH_1: f64 = 1.0;
pub const LINK_MASS_1: f64 = 1.0;
pub const LINK_MASS_2: f64 = 1.0;
pub const LINK_COM_1: f64 = 0.5;
pub const LINK_COM_2: f64 = 0.5;
pub const LINK_MOI: f64 = 1.0;
pub const GRAVITY: f64 = 9.8;
pub const DT: f64 = 0.2;
pub const MAX_VEL_1: f64 = 4.0 * PI;
pub const MAX_VEL_2: f64 = 9.0 * PI;
pub const TORQUES: [f64; 3] = [-1.0, 0.0, 1.0];
pub const DEFAULT_SUCCESS_EPSILON: f64 = 0.05;

/// `[θ1, θ2, ω1, ω2]`; angles measured from the hanging-down rest position.
pub type AcrobotState = [f64; 4];

/// Time derivative of `[θ1, θ2, ω1, ω2]` under joint-2 torque `torque`.
pub fn derivatives(s: &AcrobotState, torque: f64) -> AcrobotState {
    let (m1, m2, l1, lc1, lc2, i1, i2, g) = (
        LINK_MASS_1,
        LINK_MASS_2,
        LINK_LENGTH_1,
        LINK_COM_1,
        LINK_COM_2,
        LINK_MOI,
        LINK_MOI,
        GRAVITY,
    );
    let [theta1, theta2, dtheta1, dtheta2] = *s;
    let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * theta2.cos()) + i1 + i2;
    let d2 = m2 * (lc2 * lc2 + l1 * lc2 * theta2.cos()) + i2;
    // cos(x - π/2) written as sin(x), which is exact at the hanging rest state.
    let phi2 = m2 * lc2 * g * (theta1 + theta2).sin();
    let phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * theta2.sin()
        - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * theta2.sin()
        + (m1 * lc1 + m2 * l1) * g * theta1.sin()
        + phi2;
    let ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * theta2.sin() - phi2)
        / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
    [dtheta1, dtheta2, ddtheta1, ddtheta2]
}

/// One classical fourth-order Runge–Kutta step of length `dt` (no wrapping or clipping).
pub fn rk4_step(s: &AcrobotState, torque: f64, dt: f64) -> AcrobotState {
    let add = |a: &AcrobotState, k: &AcrobotState, h: f64| -> AcrobotState {
        std::array::from_fn(|i| a[i] + h * k[i])
    };
    let k1 = derivatives(s, torque);
    let k2 = derivatives(&add(s, &k1, dt / 2.0), torque);
    let k3 = derivatives(&add(s, &k2, dt / 2.0), torque);
    let k4 = derivatives(&add(s, &k3, dt), torque);
    std::array::from_fn(|i| s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Total mechanical energy, potential measured from the pivot height.
pub fn mechanical_energy(s: &AcrobotState) -> f64 {
    let [t1, t2, w1, w2] = *s;
    let (m1, m2, l1, lc1, lc2, i1, i2, g) = (
        LINK_MASS_1,
        LINK_MASS_2,
        LINK_LENGTH_1,
        LINK_COM_1,
        LINK_COM_2,
        LINK_MOI,
        LINK_MOI,
        GRAVITY,
    );
    // link-2 centre-of-mass velocity
    let vx = l1 * t1.cos() * w1 + lc2 * (t1 + t2).cos() * (w1 + w2);
    let vy = l1 * t1.sin() * w1 + lc2 * (t1 + t2).sin() * (w1 + w2);
    let kinetic = 0.5 * (m1 * lc1 * lc1 + i1) * w1 * w1
        + 0.5 * m2 * (vx * vx + vy * vy)
        + 0.5 * i2 * (w1 + w2) * (w1 + w2);
    let potential = -m1 * g * lc1 * t1.cos() - m2 * g * (l1 * t1.cos() + lc2 * (t1 + t2).cos());
    kinetic + potential
}

#[derive(Clone, Debug)]
pub struct Acrobot {
    spec: EnvSpec,
    state: AcrobotState,
    steps: usize,
    done: bool,
    mode: TaskMode,
    clip_velocity: bool,
}

impl Acrobot {
    pub fn new(cfg: &EnvConfig) -> Result<Self> {
        check_limits(cfg)?;
        Ok(Acrobot {
            spec: EnvSpec {
                name: "acrobot",
                obs_dim: 6,
                action_count: 3,
                max_steps_target: cfg.max_steps_target,
                max_steps_selfplay: cfg.max_steps_selfplay,
                success_epsilon: cfg.success_epsilon,
            },
            state: [0.0; 4],
            steps: 0,
            done: false,
            mode: TaskMode::Target,
            clip_velocity: true,
        })
    }

    pub fn state(&self) -> AcrobotState {
        self.state
    }

    pub fn set_state(&mut self, state: AcrobotState) {
        self.state = state;
        self.steps = 0;
        self.done = false;
    }

    pub fn set_velocity_clipping(&mut self, on: bool) {
        self.clip_velocity = on;
    }

    fn tip_above_bar(&self) -> bool {
        let [t1, t2, _, _] = self.state;
        -t1.cos() - (t1 + t2).cos() > 1.0
    }

    /// Integrates one control interval and applies wrapping and velocity bounds.
    pub fn advance(&self, state: &AcrobotState, action: usize) -> AcrobotState {
        let mut next = rk4_step(state, TORQUES[action], DT);
        next[0] = wrap_angle(next[0]);
        next[1] = wrap_angle(next[1]);
        if self.clip_velocity {
            next[2] = next[2].clamp(-MAX_VEL_1, MAX_VEL_1);
            next[3] = next[3].clamp(-MAX_VEL_2, MAX_VEL_2);
        }
        next
    }
}

impl Environment for Acrobot {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn set_mode(&mut self, mode: TaskMode) {
        self.mode = mode;
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Observation {
        let state: AcrobotState = std::array::from_fn(|_| rng.gen_range(-0.1..=0.1));
        self.set_state(state);
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(Error::contract("step after episode end"));
        }
        if action >= TORQUES.len() {
            return Err(Error::contract(format!("acrobot action {action} out of range")));
        }
        self.state = self.advance(&self.state, action);
        self.steps += 1;
        let mut reward = -1.0;
        let mut done_reason = DoneReason::None;
        if self.mode == TaskMode::Target {
            if self.tip_above_bar() {
                reward = 0.0;
                done_reason = DoneReason::Goal;
            } else if self.steps >= self.spec.max_steps_target {
                done_reason = DoneReason::TimeLimit;
            }
        }
        self.done = done_reason != DoneReason::None;
        Ok(StepResult {
            observation: self.observe(),
            reward,
            done: self.done,
            done_reason,
        })
    }

    fn observe(&self) -> Observation {
        let [t1, t2, w1, w2] = self.state;
        vec![t1.cos(), t1.sin(), t2.cos(), t2.sin(), w1, w2]
    }

    fn state_close(&self, a: &[f64], b: &[f64]) -> Result<bool> {
        ensure_dim("state_close lhs", 6, a.len())?;
        ensure_dim("state_close rhs", 6, b.len())?;
        let dist = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        Ok(dist < self.spec.success_epsilon)
    }

    fn place_agent(&mut self, observation: &[f64]) -> Result<()> {
        ensure_dim("acrobot observation", 6, observation.len())?;
        if observation.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("non-finite acrobot observation"));
        }
        for pair in [&observation[0..2], &observation[2..4]] {
            let norm = pair[0].hypot(pair[1]);
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::contract("acrobot observation has a non-unit (cos, sin) pair"));
            }
        }
        let (w1, w2) = (observation[4], observation[5]);
        if w1.abs() > MAX_VEL_1 || w2.abs() > MAX_VEL_2 {
            return Err(Error::contract("acrobot observation exceeds velocity bounds"));
        }
        let t1 = observation[1].atan2(observation[0]);
        let t2 = observation[3].atan2(observation[2]);
        self.set_state([wrap_angle(t1), wrap_angle(t2), w1, w2]);
        Ok(())
    }
}
