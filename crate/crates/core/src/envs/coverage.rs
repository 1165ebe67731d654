use super::{EnvSpec, Environment, StepOutcome};
use crate::error::{Error, Result};
use crate::policy::ActionBounds;
use crate::rng::Rng;

const NEIGHBOURS: [(i64, i64); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];
const N_CENTRES: usize = 3;

/// Point mass in `[−1, 1]²` collecting a Gaussian-mixture density once per
/// grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageSpec {
    pub grid: usize,
    pub variance: f64,
    pub dt: f64,
    pub max_speed: f64,
    pub centre_range: f64,
}

impl Default for CoverageSpec {
    fn default() -> Self {
        CoverageSpec { grid: 20, variance: 0.05, dt: 0.1, max_speed: 1.0, centre_range: 0.8 }
    }
}

impl CoverageSpec {
    pub fn cell_size(&self) -> f64 {
        2.0 / self.grid as f64
    }

    /// `(row, col)` of a position; the closed upper edge belongs to the last cell.
    pub fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let g = self.grid;
        let idx = |v: f64| (((v + 1.0) / self.cell_size()).floor().max(0.0) as usize).min(g - 1);
        (idx(y), idx(x))
    }

    pub fn cell_centre(&self, r: usize, c: usize) -> (f64, f64) {
        let h = self.cell_size();
        (-1.0 + (c as f64 + 0.5) * h, -1.0 + (r as f64 + 0.5) * h)
    }

    /// `(1/3) Σᵢ N(p | μᵢ, variance·I)`.
    pub fn density(&self, x: f64, y: f64, centres: &[f64]) -> f64 {
        let norm = 1.0 / (2.0 * std::f64::consts::PI * self.variance);
        centres
            .chunks_exact(2)
            .map(|m| norm * (-((x - m[0]).powi(2) + (y - m[1]).powi(2)) / (2.0 * self.variance)).exp())
            .sum::<f64>()
            / N_CENTRES as f64
    }

    /// Upper bound of the density over one cell (each component at its
    /// closest point of the cell).
    pub fn cell_sup(&self, r: usize, c: usize, centres: &[f64]) -> f64 {
        let h = self.cell_size();
        let (x0, y0) = (-1.0 + c as f64 * h, -1.0 + r as f64 * h);
        let norm = 1.0 / (2.0 * std::f64::consts::PI * self.variance);
        centres
            .chunks_exact(2)
            .map(|m| {
                let dx = m[0].clamp(x0, x0 + h) - m[0];
                let dy = m[1].clamp(y0, y0 + h) - m[1];
                norm * (-(dx * dx + dy * dy) / (2.0 * self.variance)).exp()
            })
            .sum::<f64>()
            / N_CENTRES as f64
    }
}

#[derive(Clone, Debug)]
pub struct CoverageEnv {
    cov: CoverageSpec,
    spec: EnvSpec,
    pos: [f64; 2],
    vel: [f64; 2],
    centres: [f64; 2 * N_CENTRES],
    visited: Vec<bool>,
    t: usize,
    steps: u64,
}

impl CoverageEnv {
    pub fn new(cov: CoverageSpec, horizon: usize) -> Result<Self> {
        if cov.grid < 2 {
            return Err(Error::Config("coverage grid needs at least 2 cells per side".into()));
        }
        let peak = 1.0 / (2.0 * std::f64::consts::PI * cov.variance);
        let mut obs_low = vec![-1.0, -1.0, -cov.max_speed, -cov.max_speed];
        let mut obs_high = vec![1.0, 1.0, cov.max_speed, cov.max_speed];
        obs_low.extend([0.0; 9]);
        obs_high.extend([peak; 9]);
        obs_low.extend([-cov.centre_range; 2 * N_CENTRES]);
        obs_high.extend([cov.centre_range; 2 * N_CENTRES]);
        let spec = EnvSpec {
            name: "coverage".into(),
            obs_dim: 19,
            dynamic: (0..13).collect(),
            action_bounds: ActionBounds::symmetric(2, 1.0),
            horizon,
            obs_low,
            obs_high,
        };
        let visited = vec![false; cov.grid * cov.grid];
        Ok(CoverageEnv { cov, spec, pos: [0.0; 2], vel: [0.0; 2], centres: [0.0; 6], visited, t: 0, steps: 0 })
    }

    pub fn coverage(&self) -> &CoverageSpec {
        &self.cov
    }

    pub fn centres(&self) -> &[f64] {
        &self.centres
    }

    pub fn is_visited(&self, r: usize, c: usize) -> bool {
        self.visited[r * self.cov.grid + c]
    }

    /// Place the agent and the mixture directly (scripted tests). The current
    /// cell is marked visited, as at reset.
    pub fn set_state(&mut self, pos: [f64; 2], vel: [f64; 2], centres: [f64; 6]) {
        self.pos = pos;
        self.vel = vel;
        self.centres = centres;
        self.visited.iter_mut().for_each(|v| *v = false);
        self.mark(pos);
    }

    fn mark(&mut self, pos: [f64; 2]) {
        let (r, c) = self.cov.cell_of(pos[0], pos[1]);
        self.visited[r * self.cov.grid + c] = true;
    }

    fn obs(&self) -> Vec<f64> {
        let (x, y) = (self.pos[0], self.pos[1]);
        let mut o = vec![x, y, self.vel[0], self.vel[1], self.cov.density(x, y, &self.centres)];
        let (r, c) = self.cov.cell_of(x, y);
        let g = self.cov.grid as i64;
        for (dr, dc) in NEIGHBOURS {
            let (nr, nc) = (r as i64 + dr, c as i64 + dc);
            let v = if nr < 0 || nc < 0 || nr >= g || nc >= g || self.is_visited(nr as usize, nc as usize) {
                0.0
            } else {
                let (cx, cy) = self.cov.cell_centre(nr as usize, nc as usize);
                self.cov.density(cx, cy, &self.centres)
            };
            o.push(v);
        }
        o.extend(self.centres);
        o
    }
}

impl Environment for CoverageEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        let m = self.cov.centre_range;
        for v in self.centres.iter_mut() {
            *v = rng.uniform_range(-m, m);
        }
        self.pos = [rng.uniform_range(-0.9, 0.9), rng.uniform_range(-0.9, 0.9)];
        self.vel = [0.0; 2];
        self.visited.iter_mut().for_each(|v| *v = false);
        self.mark(self.pos);
        self.t = 0;
        self.obs()
    }

    fn step(&mut self, action: &[f64]) -> StepOutcome {
        let (dt, vmax) = (self.cov.dt, self.cov.max_speed);
        for i in 0..2 {
            let a = action[i].clamp(-1.0, 1.0);
            self.vel[i] = (self.vel[i] + a * dt).clamp(-vmax, vmax);
            let p = self.pos[i] + self.vel[i] * dt;
            if !(-1.0..=1.0).contains(&p) {
                self.vel[i] = 0.0;
            }
            self.pos[i] = p.clamp(-1.0, 1.0);
        }
        let (r, c) = self.cov.cell_of(self.pos[0], self.pos[1]);
        let reward =
            if self.is_visited(r, c) { 0.0 } else { self.cov.density(self.pos[0], self.pos[1], &self.centres) };
        self.mark(self.pos);
        self.t += 1;
        self.steps += 1;
        StepOutcome { obs: self.obs(), reward, done: self.t >= self.spec.horizon }
    }

    fn reward_oracle(&self, _state: &[f64], _action: &[f64], next: &[f64]) -> f64 {
        let (r, c) = self.cov.cell_of(next[0], next[1]);
        if self.is_visited(r, c) {
            0.0
        } else {
            self.cov.density(next[0], next[1], &next[13..19])
        }
    }

    /// Visitation is read off the observations: staying in the same cell pays
    /// nothing, and so does entering a neighbour whose masked value in `state`
    /// is zero.
    fn hallucination_reward(&self, state: &[f64], _action: &[f64], next: &[f64]) -> f64 {
        let (r0, c0) = self.cov.cell_of(state[0], state[1]);
        let (r1, c1) = self.cov.cell_of(next[0], next[1]);
        if (r0, c0) == (r1, c1) {
            return 0.0;
        }
        let (dr, dc) = (r1 as i64 - r0 as i64, c1 as i64 - c0 as i64);
        if let Some(k) = NEIGHBOURS.iter().position(|&n| n == (dr, dc)) {
            if state[5 + k] <= 0.0 {
                return 0.0;
            }
        }
        self.cov.density(next[0], next[1], &state[13..19])
    }

    fn steps_taken(&self) -> u64 {
        self.steps
    }

    fn boxed_clone(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}
