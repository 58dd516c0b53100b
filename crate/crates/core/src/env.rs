//! Cart-Pole physics.
//!
//! Classic inverted pendulum on a cart, integrated with explicit Euler.
//! Every step yields a reward of 1.0, the terminating step included.
//! Episodes end when the pole leans past `theta_threshold`, the cart
//! leaves `[-x_threshold, x_threshold]`, or `max_episode_steps` is reached.

use std::fmt;

use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::RunRng;

/// Half-width of the uniform range each state component is drawn from on reset.
pub const INIT_RANGE: f64 = 0.05;

/// Observation of the cart-pole system.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnvState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl EnvState {
    pub const fn new(x: f64, x_dot: f64, theta: f64, theta_dot: f64) -> Self {
        Self {
            x,
            x_dot,
            theta,
            theta_dot,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.x_dot, self.theta, self.theta_dot]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl fmt::Display for EnvState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.12e} {:.12e} {:.12e} {:.12e}",
            self.x, self.x_dot, self.theta, self.theta_dot
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Left = 0,
    Right = 1,
}

impl Action {
    pub const COUNT: usize = 2;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(Action::Left),
            1 => Some(Action::Right),
            _ => None,
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        if rng.gen_bool(0.5) {
            Action::Right
        } else {
            Action::Left
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvParams {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub pole_half_length: f64,
    pub force_magnitude: f64,
    pub time_step: f64,
    pub theta_threshold: f64,
    pub x_threshold: f64,
    pub max_episode_steps: usize,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_half_length: 0.5,
            force_magnitude: 10.0,
            time_step: 0.02,
            theta_threshold: 12.0_f64.to_radians(),
            x_threshold: 2.4,
            max_episode_steps: 200,
        }
    }
}

impl EnvParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gravity", self.gravity),
            ("cart_mass", self.cart_mass),
            ("pole_mass", self.pole_mass),
            ("pole_half_length", self.pole_half_length),
            ("force_magnitude", self.force_magnitude),
            ("time_step", self.time_step),
            ("theta_threshold", self.theta_threshold),
            ("x_threshold", self.x_threshold),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be a positive finite number, got {value}"
                )));
            }
        }
        if self.max_episode_steps == 0 {
            return Err(Error::InvalidConfig(
                "max_episode_steps must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.cart_mass + self.pole_mass
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DoneReason {
    PoleAngle,
    CartPosition,
    StepLimit,
    NotDone,
}

impl DoneReason {
    /// True when the episode ended because the pole fell or the cart left the track.
    pub fn is_failure(self) -> bool {
        matches!(self, DoneReason::PoleAngle | DoneReason::CartPosition)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: EnvState,
    pub reward: f64,
    pub done: bool,
    pub done_reason: DoneReason,
}

/// One explicit Euler step of the cart-pole equations of motion.
pub fn integrate(params: &EnvParams, state: &EnvState, action: Action) -> EnvState {
    let force = match action {
        Action::Right => params.force_magnitude,
        Action::Left => -params.force_magnitude,
    };
    let total_mass = params.total_mass();
    let polemass_length = params.pole_mass * params.pole_half_length;
    let (sin_theta, cos_theta) = state.theta.sin_cos();

    let temp = (force + polemass_length * state.theta_dot * state.theta_dot * sin_theta) / total_mass;
    let theta_acc = (params.gravity * sin_theta - cos_theta * temp)
        / (params.pole_half_length
            * (4.0 / 3.0 - params.pole_mass * cos_theta * cos_theta / total_mass));
    let x_acc = temp - polemass_length * theta_acc * cos_theta / total_mass;

    let tau = params.time_step;
    EnvState {
        x: state.x + tau * state.x_dot,
        x_dot: state.x_dot + tau * x_acc,
        theta: state.theta + tau * state.theta_dot,
        theta_dot: state.theta_dot + tau * theta_acc,
    }
}

/// Mean of the most recent 100 scores is at least 195.
pub fn is_solved(scores: &[f64]) -> bool {
    const WINDOW: usize = 100;
    const THRESHOLD: f64 = 195.0;
    if scores.len() < WINDOW {
        return false;
    }
    let recent = &scores[scores.len() - WINDOW..];
    recent.iter().sum::<f64>() / WINDOW as f64 >= THRESHOLD
}

/// A single cart-pole simulator instance.
#[derive(Clone, Debug)]
pub struct CartPole {
    params: EnvParams,
    state: EnvState,
    steps: usize,
    done: bool,
}

impl CartPole {
    pub fn new(params: EnvParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            state: EnvState::default(),
            steps: 0,
            done: false,
        })
    }

    pub fn params(&self) -> &EnvParams {
        &self.params
    }

    pub fn state(&self) -> EnvState {
        self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Starts an episode from a state drawn with a fresh generator seeded by `seed`.
    /// Without a seed the generator is seeded from OS entropy.
    pub fn reset(&mut self, seed: Option<u64>) -> EnvState {
        let mut rng = match seed {
            Some(seed) => RunRng::seed_from_u64(seed),
            None => RunRng::from_entropy(),
        };
        self.reset_with(&mut rng)
    }

    /// Starts an episode, drawing the initial state from `rng`.
    pub fn reset_with<R: Rng + ?Sized>(&mut self, rng: &mut R) -> EnvState {
        let mut draw = || rng.gen_range(-INIT_RANGE..=INIT_RANGE);
        let x = draw();
        let x_dot = draw();
        let theta = draw();
        let theta_dot = draw();
        self.start_from(EnvState::new(x, x_dot, theta, theta_dot))
    }

    /// Starts an episode from an explicit state.
    pub fn start_from(&mut self, state: EnvState) -> EnvState {
        self.state = state;
        self.steps = 0;
        self.done = false;
        state
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let next = integrate(&self.params, &self.state, action);
        self.steps += 1;

        let done_reason = if next.theta.abs() > self.params.theta_threshold {
            DoneReason::PoleAngle
        } else if next.x.abs() > self.params.x_threshold {
            DoneReason::CartPosition
        } else if self.steps >= self.params.max_episode_steps {
            DoneReason::StepLimit
        } else {
            DoneReason::NotDone
        };
        let done = done_reason != DoneReason::NotDone;

        self.state = next;
        self.done = done;
        Ok(StepResult {
            next_state: next,
            reward: 1.0,
            done,
            done_reason,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env() -> CartPole {
        CartPole::new(EnvParams::default()).unwrap()
    }

    #[test]
    fn reset_is_seeded_and_bounded() {
        let mut a = env();
        let mut b = env();
        let s1 = a.reset(Some(7));
        let s2 = b.reset(Some(7));
        assert_eq!(s1.to_array().map(f64::to_bits), s2.to_array().map(f64::to_bits));
        assert!(s1.to_array().iter().all(|v| v.abs() <= INIT_RANGE));
        let s3 = a.reset(Some(8));
        assert_ne!(s1, s3);
        assert_eq!(a.steps(), 0);
    }

    #[test]
    fn upright_push_right_matches_hand_evaluation() {
        let mut e = env();
        e.start_from(EnvState::default());
        let r = e.step(Action::Right).unwrap();
        // temp = 10 / 1.1, theta_acc = -temp / (0.5 * (4/3 - 0.1/1.1)), x_acc = temp - 0.05 * theta_acc / 1.1
        let temp: f64 = 10.0 / 1.1;
        let theta_acc = -temp / (0.5 * (4.0 / 3.0 - 0.1 / 1.1));
        let x_acc = temp - 0.05 * theta_acc / 1.1;
        assert!((temp - 9.09091).abs() < 1e-5);
        assert!((theta_acc + 14.63415).abs() < 1e-5);
        assert!((x_acc - 9.75610).abs() < 1e-5);
        let s = r.next_state;
        assert_eq!(s.x, 0.0);
        assert_eq!(s.theta, 0.0);
        assert!((s.x_dot - 0.02 * x_acc).abs() <= 1e-12 * (0.02 * x_acc).abs());
        assert!((s.theta_dot - 0.02 * theta_acc).abs() <= 1e-12 * (0.02 * theta_acc).abs());
        assert!((s.x_dot - 0.19512).abs() < 1e-5);
        assert!((s.theta_dot + 0.29268).abs() < 1e-5);
        assert_eq!(r.reward, 1.0);
        assert!(!r.done);
    }

    #[test]
    fn large_angle_terminates_on_pole_angle() {
        for action in [Action::Left, Action::Right] {
            let mut e = env();
            e.start_from(EnvState::new(0.0, 0.0, 0.3, 0.0));
            let r = e.step(action).unwrap();
            assert!(r.done);
            assert_eq!(r.done_reason, DoneReason::PoleAngle);
            assert_eq!(r.reward, 1.0);
        }
    }

    #[test]
    fn cart_out_of_bounds_terminates() {
        let mut e = env();
        e.start_from(EnvState::new(2.45, 1.0, 0.0, 0.0));
        let r = e.step(Action::Right).unwrap();
        assert_eq!(r.done_reason, DoneReason::CartPosition);
    }

    #[test]
    fn step_after_done_is_an_error() {
        let mut e = env();
        e.start_from(EnvState::new(0.0, 0.0, 0.3, 0.0));
        e.step(Action::Left).unwrap();
        assert!(matches!(e.step(Action::Left), Err(Error::EpisodeFinished)));
    }

    #[test]
    fn step_limit_caps_episode_length() {
        let params = EnvParams {
            max_episode_steps: 5,
            ..EnvParams::default()
        };
        let mut e = CartPole::new(params).unwrap();
        e.start_from(EnvState::default());
        let mut last = None;
        for i in 0..5 {
            // alternate pushes keep the pole near upright for a handful of steps
            let a = if i % 2 == 0 { Action::Right } else { Action::Left };
            last = Some(e.step(a).unwrap());
        }
        let last = last.unwrap();
        assert!(last.done);
        assert_eq!(last.done_reason, DoneReason::StepLimit);
        assert_eq!(e.steps(), 5);
    }

    #[test]
    fn upright_pole_stays_upright_without_angular_motion() {
        // sin(0) = 0: the angular terms vanish, only the cart accelerates
        let params = EnvParams::default();
        let mut s = EnvState::new(0.1, 0.3, 0.0, 0.0);
        for _ in 0..10 {
            let next = integrate(&params, &s, Action::Right);
            assert_eq!(next.theta, s.theta + params.time_step * s.theta_dot);
            s = next;
        }
    }

    #[test]
    fn is_solved_threshold() {
        assert!(is_solved(&[195.0; 100]));
        assert!(!is_solved(&[200.0; 99]));
        assert!(!is_solved(&[194.0; 100]));
        let mut history = vec![10.0; 50];
        history.extend([200.0; 100]);
        assert!(is_solved(&history));
    }

    #[test]
    fn invalid_params_rejected() {
        let params = EnvParams {
            pole_mass: 0.0,
            ..EnvParams::default()
        };
        assert!(CartPole::new(params).is_err());
        let params = EnvParams {
            max_episode_steps: 0,
            ..EnvParams::default()
        };
        assert!(CartPole::new(params).is_err());
    }

    #[test]
    fn display_has_ten_significant_digits() {
        let s = EnvState::new(0.012345678901, -1.0, 2.0 / 3.0, 1e-7);
        let text = s.to_string();
        let parsed: Vec<f64> = text.split_whitespace().map(|t| t.parse().unwrap()).collect();
        assert_eq!(parsed.len(), 4);
        for (p, v) in parsed.iter().zip(s.to_array()) {
            assert!((p - v).abs() <= 1e-10 * v.abs());
        }
    }
}
