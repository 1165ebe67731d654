use super::{EnvSpec, Environment, StepOutcome};
use crate::error::{Error, Result};
use crate::policy::ActionBounds;
use crate::rng::Rng;

/// U-shaped corridor: the goal sits behind a wall bar from the start.
pub const U_MAZE: &str = "\
#####
#S..#
###.#
#G..#
#####";

/// Several dead ends between start and goal.
pub const MEDIUM_MAZE: &str = "\
########
#S.##..#
#..#...#
##...###
#..#...#
#.#..#.#
#...#.G#
########";

/// Occupancy grid with unit cells; cell `(r, c)` covers
/// `x ∈ [c, c+1)`, `y ∈ [r, r+1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MazeSpec {
    pub walls: Vec<Vec<bool>>,
    pub start: (usize, usize),
    pub goals: Vec<(usize, usize)>,
    pub goal_threshold: f64,
    pub max_speed: f64,
    pub start_jitter: f64,
    pub goal_jitter: f64,
}

impl MazeSpec {
    /// `#` wall, `.` free, `S` start (exactly one), `G` goal candidates.
    pub fn parse(grid: &str) -> Result<Self> {
        let lines: Vec<&str> = grid.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        if lines.is_empty() {
            return Err(Error::Config("empty maze grid".into()));
        }
        let cols = lines[0].chars().count();
        let mut walls = Vec::new();
        let mut start = None;
        let mut goals = Vec::new();
        for (r, line) in lines.iter().enumerate() {
            if line.chars().count() != cols {
                return Err(Error::Config(format!("maze row {r} has a different width")));
            }
            let mut row = Vec::with_capacity(cols);
            for (c, ch) in line.chars().enumerate() {
                match ch {
                    '#' => row.push(true),
                    '.' => row.push(false),
                    'S' => {
                        if start.replace((r, c)).is_some() {
                            return Err(Error::Config("maze has more than one start".into()));
                        }
                        row.push(false);
                    }
                    'G' => {
                        goals.push((r, c));
                        row.push(false);
                    }
                    other => return Err(Error::Config(format!("unexpected maze character `{other}`"))),
                }
            }
            walls.push(row);
        }
        let rows = walls.len();
        let start = start.ok_or_else(|| Error::Config("maze has no start cell".into()))?;
        if goals.is_empty() {
            return Err(Error::Config("maze has no goal cell".into()));
        }
        for r in 0..rows {
            for c in 0..cols {
                let border = r == 0 || c == 0 || r == rows - 1 || c == cols - 1;
                if border && !walls[r][c] {
                    return Err(Error::Config("maze boundary must be walled".into()));
                }
            }
        }
        Ok(MazeSpec { walls, start, goals, goal_threshold: 0.5, max_speed: 0.25, start_jitter: 0.1, goal_jitter: 0.25 })
    }

    pub fn rows(&self) -> usize {
        self.walls.len()
    }

    pub fn cols(&self) -> usize {
        self.walls[0].len()
    }

    pub fn is_wall_at(&self, x: f64, y: f64) -> bool {
        if x < 0.0 || y < 0.0 {
            return true;
        }
        let (r, c) = (y.floor() as usize, x.floor() as usize);
        r >= self.rows() || c >= self.cols() || self.walls[r][c]
    }
}

#[derive(Clone, Debug)]
pub struct MazeEnv {
    maze: MazeSpec,
    spec: EnvSpec,
    pos: [f64; 2],
    goal: [f64; 2],
    t: usize,
    steps: u64,
}

impl MazeEnv {
    pub fn new(maze: MazeSpec, name: &str, horizon: usize) -> Self {
        let (w, h) = (maze.cols() as f64, maze.rows() as f64);
        let spec = EnvSpec {
            name: name.to_string(),
            obs_dim: 4,
            dynamic: vec![0, 1],
            action_bounds: ActionBounds::symmetric(2, maze.max_speed),
            horizon,
            obs_low: vec![0.0; 4],
            obs_high: vec![w, h, w, h],
        };
        let centre = |(r, c): (usize, usize)| [c as f64 + 0.5, r as f64 + 0.5];
        MazeEnv { pos: centre(maze.start), goal: centre(maze.goals[0]), maze, spec, t: 0, steps: 0 }
    }

    pub fn maze(&self) -> &MazeSpec {
        &self.maze
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    pub fn goal(&self) -> [f64; 2] {
        self.goal
    }

    /// Place the agent and goal directly (scripted tests).
    pub fn set_state(&mut self, pos: [f64; 2], goal: [f64; 2]) {
        self.pos = pos;
        self.goal = goal;
    }

    fn obs(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.goal[0], self.goal[1]]
    }

    fn reward_at(&self, next: &[f64]) -> f64 {
        let d = ((next[0] - next[2]).powi(2) + (next[1] - next[3]).powi(2)).sqrt();
        if d < self.maze.goal_threshold {
            1.0
        } else {
            0.0
        }
    }

    /// Axis-separated move: x first, then y; a blocked axis keeps its
    /// coordinate.
    pub fn slide(&self, pos: [f64; 2], action: &[f64]) -> [f64; 2] {
        let v = self.maze.max_speed;
        let (dx, dy) = (action[0].clamp(-v, v), action[1].clamp(-v, v));
        let mut p = pos;
        if !self.maze.is_wall_at(p[0] + dx, p[1]) {
            p[0] += dx;
        }
        if !self.maze.is_wall_at(p[0], p[1] + dy) {
            p[1] += dy;
        }
        p
    }
}

impl Environment for MazeEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        let (sr, sc) = self.maze.start;
        let j = self.maze.start_jitter;
        self.pos = [sc as f64 + 0.5 + rng.uniform_range(-j, j), sr as f64 + 0.5 + rng.uniform_range(-j, j)];
        let (gr, gc) = self.maze.goals[rng.below(self.maze.goals.len())];
        let g = self.maze.goal_jitter;
        self.goal = [gc as f64 + 0.5 + rng.uniform_range(-g, g), gr as f64 + 0.5 + rng.uniform_range(-g, g)];
        self.t = 0;
        self.obs()
    }

    fn step(&mut self, action: &[f64]) -> StepOutcome {
        self.pos = self.slide(self.pos, action);
        self.t += 1;
        self.steps += 1;
        let obs = self.obs();
        StepOutcome { reward: self.reward_at(&obs), obs, done: self.t >= self.spec.horizon }
    }

    fn reward_oracle(&self, _state: &[f64], _action: &[f64], next: &[f64]) -> f64 {
        self.reward_at(next)
    }

    fn steps_taken(&self) -> u64 {
        self.steps
    }

    fn boxed_clone(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u_maze() -> MazeEnv {
        MazeEnv::new(MazeSpec::parse(U_MAZE).unwrap(), "u_maze", 150)
    }

    #[test]
    fn layouts_parse() {
        let u = MazeSpec::parse(U_MAZE).unwrap();
        assert_eq!((u.rows(), u.cols()), (5, 5));
        assert_eq!(u.start, (1, 1));
        assert_eq!(u.goals, vec![(3, 1)]);
        let m = MazeSpec::parse(MEDIUM_MAZE).unwrap();
        assert_eq!((m.rows(), m.cols()), (8, 8));
        assert!(MazeSpec::parse("###\n#S.\n###").is_err());
        assert!(MazeSpec::parse("###\n#.#\n###").is_err());
    }

    #[test]
    fn goal_reward_is_sparse() {
        let mut env = u_maze();
        env.set_state([1.5, 3.0], [1.5, 3.5]);
        assert_eq!(env.step(&[0.0, 0.2]).reward, 1.0);
        env.set_state([3.5, 1.5], [1.5, 3.5]);
        assert_eq!(env.step(&[0.0, 0.0]).reward, 0.0);
        assert_eq!(env.reward_oracle(&[], &[], &[1.5, 3.5, 1.5, 3.5]), 1.0);
    }

    #[test]
    fn walls_block_only_their_axis() {
        let mut env = u_maze();
        // just above the wall bar in row 2 (x ∈ [1, 3) walled)
        env.set_state([1.5, 1.9], [1.5, 3.5]);
        let out = env.step(&[0.2, 0.2]);
        assert_eq!(out.obs[1], 1.9);
        assert!((out.obs[0] - 1.7).abs() < 1e-15);
    }

    #[test]
    fn velocity_is_bounded() {
        let mut env = u_maze();
        env.set_state([2.0, 1.5], [1.5, 3.5]);
        let out = env.step(&[5.0, 0.0]);
        assert!((out.obs[0] - 2.25).abs() < 1e-15);
    }

    #[test]
    fn never_inside_a_wall() {
        for grid in [U_MAZE, MEDIUM_MAZE] {
            let mut env = MazeEnv::new(MazeSpec::parse(grid).unwrap(), "maze", 150);
            let mut rng = Rng::seed_from(99);
            env.reset(&mut rng);
            for t in 0..100_000 {
                if t % 150 == 0 {
                    env.reset(&mut rng);
                }
                let a = [rng.uniform_range(-0.25, 0.25), rng.uniform_range(-0.25, 0.25)];
                let out = env.step(&a);
                assert!(!env.maze().is_wall_at(out.obs[0], out.obs[1]));
                assert!(out.reward == 0.0 || out.reward == 1.0);
            }
        }
    }
}
