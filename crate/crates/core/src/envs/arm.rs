use std::f64::consts::PI;

use super::{EnvSpec, Environment, StepOutcome};
use crate::policy::ActionBounds;
use crate::rng::Rng;

/// Two-link planar arm under joint-velocity control with a sparse
/// distance reward and a saturating action penalty.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmSpec {
    pub links: [f64; 2],
    pub max_joint_speed: f64,
    pub dt: f64,
    /// Goals are drawn uniformly (by area) from this annulus.
    pub goal_radius: (f64, f64),
    pub threshold: f64,
    pub rho: f64,
    /// Flip the penalty into a bonus, as the reward formula is sometimes written.
    pub literal_penalty_sign: bool,
}

impl Default for ArmSpec {
    fn default() -> Self {
        ArmSpec {
            links: [0.5, 0.5],
            max_joint_speed: 1.0,
            dt: 0.2,
            goal_radius: (0.2, 0.9),
            threshold: 0.2,
            rho: 0.1,
            literal_penalty_sign: false,
        }
    }
}

impl ArmSpec {
    pub fn end_effector(&self, theta: [f64; 2]) -> [f64; 2] {
        let [l1, l2] = self.links;
        let s = theta[0] + theta[1];
        [l1 * theta[0].cos() + l2 * s.cos(), l1 * theta[0].sin() + l2 * s.sin()]
    }

    pub fn reward(&self, ee: [f64; 2], goal: [f64; 2], action: &[f64]) -> f64 {
        let d2 = (ee[0] - goal[0]).powi(2) + (ee[1] - goal[1]).powi(2);
        let dist = if d2.sqrt() < self.threshold { (-d2).exp() } else { 0.0 };
        let v = self.max_joint_speed;
        let sq: f64 = action.iter().map(|a| a.clamp(-v, v).powi(2)).sum();
        let cost = 1.0 - (-sq).exp();
        if self.literal_penalty_sign {
            dist + self.rho * cost
        } else {
            dist - self.rho * cost
        }
    }
}

/// Angle in `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

#[derive(Clone, Debug)]
pub struct ArmEnv {
    arm: ArmSpec,
    spec: EnvSpec,
    theta: [f64; 2],
    goal: [f64; 2],
    t: usize,
    steps: u64,
}

impl ArmEnv {
    pub fn new(arm: ArmSpec, horizon: usize) -> Self {
        let reach = arm.links[0] + arm.links[1];
        let mut obs_low = vec![-1.0; 4];
        let mut obs_high = vec![1.0; 4];
        obs_low.extend([-reach; 4]);
        obs_high.extend([reach; 4]);
        let spec = EnvSpec {
            name: "sparse_arm".into(),
            obs_dim: 8,
            dynamic: vec![0, 1, 2, 3, 6, 7],
            action_bounds: ActionBounds::symmetric(2, arm.max_joint_speed),
            horizon,
            obs_low,
            obs_high,
        };
        ArmEnv { arm, spec, theta: [0.0; 2], goal: [reach * 0.5, 0.0], t: 0, steps: 0 }
    }

    pub fn arm(&self) -> &ArmSpec {
        &self.arm
    }

    pub fn angles(&self) -> [f64; 2] {
        self.theta
    }

    pub fn goal(&self) -> [f64; 2] {
        self.goal
    }

    pub fn set_state(&mut self, theta: [f64; 2], goal: [f64; 2]) {
        self.theta = [wrap_angle(theta[0]), wrap_angle(theta[1])];
        self.goal = goal;
    }

    fn obs(&self) -> Vec<f64> {
        let ee = self.arm.end_effector(self.theta);
        let [a, b] = self.theta;
        vec![a.cos(), a.sin(), b.cos(), b.sin(), self.goal[0], self.goal[1], ee[0], ee[1]]
    }
}

impl Environment for ArmEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        self.theta = [wrap_angle(rng.uniform_range(-PI, PI)), wrap_angle(rng.uniform_range(-PI, PI))];
        let (r0, r1) = self.arm.goal_radius;
        let r = rng.uniform_range(r0 * r0, r1 * r1).sqrt();
        let phi = rng.uniform_range(-PI, PI);
        self.goal = [r * phi.cos(), r * phi.sin()];
        self.t = 0;
        self.obs()
    }

    fn step(&mut self, action: &[f64]) -> StepOutcome {
        let v = self.arm.max_joint_speed;
        for i in 0..2 {
            self.theta[i] = wrap_angle(self.theta[i] + action[i].clamp(-v, v) * self.arm.dt);
        }
        self.t += 1;
        self.steps += 1;
        let obs = self.obs();
        let reward = self.arm.reward([obs[6], obs[7]], self.goal, action);
        StepOutcome { obs, reward, done: self.t >= self.spec.horizon }
    }

    fn reward_oracle(&self, _state: &[f64], action: &[f64], next: &[f64]) -> f64 {
        self.arm.reward([next[6], next[7]], [next[4], next[5]], action)
    }

    fn steps_taken(&self) -> u64 {
        self.steps
    }

    fn boxed_clone(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}
