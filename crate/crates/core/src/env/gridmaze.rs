use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{check_limits, DoneReason, EnvConfig, EnvSpec, Environment, Observation, StepResult, TaskMode};
use crate::error::{ensure_dim, Error, Result};

pub const STEP_REWARD: f64 = -0.1;
pub const GOAL_REWARD: f64 = 1.0;

/// Moves in action order: up, down, left, right.
const MOVES: [(isize, isize); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

/// Goal-reaching maze with random interior walls.
///
/// Observation: three flattened `width × height` one-hot planes (walls, agent, goal).
#[derive(Clone, Debug)]
pub struct GridMaze {
    spec: EnvSpec,
    width: usize,
    height: usize,
    wall_fraction: f64,
    walls: Vec<bool>,
    agent: Cell,
    goal: Cell,
    steps: usize,
    done: bool,
    mode: TaskMode,
}

impl GridMaze {
    pub fn new(cfg: &EnvConfig) -> Result<Self> {
        check_limits(cfg)?;
        if cfg.width * cfg.height < 2 {
            return Err(Error::Config("grid maze needs at least two cells".into()));
        }
        if !(0.0..0.9).contains(&cfg.wall_fraction) {
            return Err(Error::Config("wall_fraction must be in [0, 0.9)".into()));
        }
        let cells = cfg.width * cfg.height;
        Ok(GridMaze {
            spec: EnvSpec {
                name: "gridmaze",
                obs_dim: 3 * cells,
                action_count: 4,
                max_steps_target: cfg.max_steps_target,
                max_steps_selfplay: cfg.max_steps_selfplay,
                success_epsilon: cfg.success_epsilon,
            },
            width: cfg.width,
            height: cfg.height,
            wall_fraction: cfg.wall_fraction,
            walls: vec![false; cells],
            agent: Cell { x: 0, y: 0 },
            goal: Cell { x: cfg.width - 1, y: cfg.height - 1 },
            steps: 0,
            done: false,
            mode: TaskMode::Target,
        })
    }

    fn cells(&self) -> usize {
        self.width * self.height
    }

    fn index(&self, c: Cell) -> usize {
        c.y * self.width + c.x
    }

    fn cell(&self, index: usize) -> Cell {
        Cell {
            x: index % self.width,
            y: index / self.width,
        }
    }

    pub fn agent(&self) -> Cell {
        self.agent
    }

    pub fn goal(&self) -> Cell {
        self.goal
    }

    pub fn is_wall(&self, c: Cell) -> bool {
        self.walls[self.index(c)]
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Installs an explicit layout. Fails if agent or goal sits on a wall.
    pub fn set_layout(&mut self, walls: &[Cell], agent: Cell, goal: Cell) -> Result<()> {
        let mut grid = vec![false; self.cells()];
        for &w in walls {
            if w.x >= self.width || w.y >= self.height {
                return Err(Error::contract(format!("wall {w:?} out of bounds")));
            }
            grid[self.index(w)] = true;
        }
        for (what, c) in [("agent", agent), ("goal", goal)] {
            if c.x >= self.width || c.y >= self.height || grid[self.index(c)] {
                return Err(Error::contract(format!("{what} at illegal cell {c:?}")));
            }
        }
        self.walls = grid;
        self.agent = agent;
        self.goal = goal;
        self.steps = 0;
        self.done = false;
        Ok(())
    }

    pub fn neighbor(&self, c: Cell, action: usize) -> Cell {
        let (dx, dy) = MOVES[action];
        let nx = c.x as isize + dx;
        let ny = c.y as isize + dy;
        if nx < 0 || ny < 0 || nx >= self.width as isize || ny >= self.height as isize {
            return c;
        }
        let next = Cell {
            x: nx as usize,
            y: ny as usize,
        };
        if self.is_wall(next) {
            c
        } else {
            next
        }
    }

    /// Number of free cells reachable from `from`.
    fn reachable_count(&self, from: Cell) -> usize {
        let mut seen = vec![false; self.cells()];
        let mut queue = VecDeque::from([from]);
        seen[self.index(from)] = true;
        let mut count = 0;
        while let Some(c) = queue.pop_front() {
            count += 1;
            for a in 0..4 {
                let n = self.neighbor(c, a);
                if !seen[self.index(n)] {
                    seen[self.index(n)] = true;
                    queue.push_back(n);
                }
            }
        }
        count
    }

    fn generate(&mut self, rng: &mut ChaCha8Rng) {
        loop {
            let walls: Vec<bool> = (0..self.cells()).map(|_| rng.gen_bool(self.wall_fraction)).collect();
            let free: Vec<usize> = (0..self.cells()).filter(|&i| !walls[i]).collect();
            if free.len() < 2 {
                continue;
            }
            self.walls = walls;
            let goal = self.cell(free[rng.gen_range(0..free.len())]);
            // every free cell must reach the goal
            if self.reachable_count(goal) != free.len() {
                continue;
            }
            let mut agent = goal;
            while agent == goal {
                agent = self.cell(free[rng.gen_range(0..free.len())]);
            }
            self.goal = goal;
            self.agent = agent;
            return;
        }
    }

    fn decode_agent(&self, observation: &[f64]) -> Result<Cell> {
        ensure_dim("grid maze observation", self.spec.obs_dim, observation.len())?;
        let n = self.cells();
        let (wall_plane, rest) = observation.split_at(n);
        let (agent_plane, goal_plane) = rest.split_at(n);
        for i in 0..n {
            let wall = if self.walls[i] { 1.0 } else { 0.0 };
            let goal = if i == self.index(self.goal) { 1.0 } else { 0.0 };
            if wall_plane[i] != wall || goal_plane[i] != goal {
                return Err(Error::contract("observation layout differs from this maze"));
            }
        }
        let mut found = None;
        for (i, &v) in agent_plane.iter().enumerate() {
            if v == 1.0 {
                if found.is_some() {
                    return Err(Error::contract("agent plane is not one-hot"));
                }
                found = Some(i);
            } else if v != 0.0 {
                return Err(Error::contract("agent plane is not one-hot"));
            }
        }
        let idx = found.ok_or_else(|| Error::contract("agent plane is empty"))?;
        if self.walls[idx] {
            return Err(Error::contract("cannot place agent inside a wall"));
        }
        Ok(self.cell(idx))
    }
}

impl Environment for GridMaze {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn set_mode(&mut self, mode: TaskMode) {
        self.mode = mode;
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Observation {
        self.generate(rng);
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(Error::contract("step after episode end"));
        }
        if action >= 4 {
            return Err(Error::contract(format!("grid maze action {action} out of range")));
        }
        self.agent = self.neighbor(self.agent, action);
        self.steps += 1;
        let (mut reward, mut done_reason) = (STEP_REWARD, DoneReason::None);
        if self.mode == TaskMode::Target {
            if self.agent == self.goal {
                reward += GOAL_REWARD;
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
        let n = self.cells();
        let mut obs = vec![0.0; 3 * n];
        for (i, &w) in self.walls.iter().enumerate() {
            if w {
                obs[i] = 1.0;
            }
        }
        obs[n + self.index(self.agent)] = 1.0;
        obs[2 * n + self.index(self.goal)] = 1.0;
        obs
    }

    /// Agent positions equal; the layout is shared within a self-play episode.
    fn state_close(&self, a: &[f64], b: &[f64]) -> Result<bool> {
        ensure_dim("state_close lhs", self.spec.obs_dim, a.len())?;
        ensure_dim("state_close rhs", self.spec.obs_dim, b.len())?;
        let n = self.cells();
        Ok(a[n..2 * n] == b[n..2 * n])
    }

    fn place_agent(&mut self, observation: &[f64]) -> Result<()> {
        self.agent = self.decode_agent(observation)?;
        self.steps = 0;
        self.done = false;
        Ok(())
    }
}
