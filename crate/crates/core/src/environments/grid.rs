use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{EnvSpec, Environment, EpisodeClock, Observation, ObservationSpace, StepResult};
use crate::error::{Error, Result};

/// `(row, col)`, row 0 at the top.
pub type Cell = (usize, usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridAction {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [GridAction::Up, GridAction::Down, GridAction::Left, GridAction::Right];

    fn delta(self) -> (isize, isize) {
        match self {
            GridAction::Up => (-1, 0),
            GridAction::Down => (1, 0),
            GridAction::Left => (0, -1),
            GridAction::Right => (0, 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridLayout {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub start: Cell,
    pub walls: BTreeSet<Cell>,
    /// Terminal cells and the reward for entering them.
    pub terminals: BTreeMap<Cell, f64>,
    /// Reward for every move that does not end in a terminal.
    pub step_penalty: f64,
    /// Which terminal counts as the goal.
    pub goal: Cell,
    /// Name of the non-goal terminals in the reward table.
    pub hazard: String,
    pub max_steps: usize,
}

impl GridLayout {
    /// 3 x 4 grid: start bottom-left, a wall at (1, 1), goal +1 top-right and
    /// a -1 trap directly below it.
    pub fn maze_runner() -> Self {
        Self {
            name: "maze_runner".into(),
            width: 4,
            height: 3,
            start: (2, 0),
            walls: [(1, 1)].into(),
            terminals: [((0, 3), 1.0), ((1, 3), -1.0)].into(),
            step_penalty: -0.1,
            goal: (0, 3),
            hazard: "trap".into(),
            max_steps: 200,
        }
    }

    /// 4 x 12 grid: start bottom-left, goal +10 bottom-right, and the ten
    /// cells between them a -100 cliff.
    pub fn cliff_walker() -> Self {
        let mut terminals: BTreeMap<Cell, f64> = (1..11).map(|c| ((3, c), -100.0)).collect();
        terminals.insert((3, 11), 10.0);
        Self {
            name: "cliff_walker".into(),
            width: 12,
            height: 4,
            start: (3, 0),
            walls: BTreeSet::new(),
            terminals,
            step_penalty: -1.0,
            goal: (3, 11),
            hazard: "cliff".into(),
            max_steps: 1000,
        }
    }

    pub fn num_states(&self) -> usize {
        self.width * self.height
    }

    pub fn state_of(&self, cell: Cell) -> usize {
        cell.0 * self.width + cell.1
    }

    pub fn cell_of(&self, state: usize) -> Cell {
        (state / self.width, state % self.width)
    }

    /// Deterministic move; walls and borders leave the agent in place.
    pub fn next_cell(&self, cell: Cell, action: GridAction) -> Cell {
        let (dr, dc) = action.delta();
        let (r, c) = (cell.0 as isize + dr, cell.1 as isize + dc);
        if r < 0 || c < 0 || r >= self.height as isize || c >= self.width as isize {
            return cell;
        }
        let next = (r as usize, c as usize);
        if self.walls.contains(&next) {
            cell
        } else {
            next
        }
    }

    /// Shortest number of moves from `start` to `target` that never passes
    /// through another terminal.
    pub fn shortest_path(&self, target: Cell) -> Option<usize> {
        let mut dist = BTreeMap::from([(self.start, 0usize)]);
        let mut queue = VecDeque::from([self.start]);
        while let Some(cell) = queue.pop_front() {
            let d = dist[&cell];
            if cell == target {
                return Some(d);
            }
            if self.terminals.contains_key(&cell) {
                continue;
            }
            for a in GridAction::ALL {
                let next = self.next_cell(cell, a);
                if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(next) {
                    e.insert(d + 1);
                    queue.push_back(next);
                }
            }
        }
        None
    }

    fn validate(&self) -> Result<()> {
        let inside = |c: &Cell| c.0 < self.height && c.1 < self.width;
        if !inside(&self.start) || self.walls.contains(&self.start) || self.terminals.contains_key(&self.start) {
            return Err(Error::Config(format!("{}: start must be a free cell", self.name)));
        }
        if !self.terminals.contains_key(&self.goal) {
            return Err(Error::Config(format!("{}: goal must be a terminal", self.name)));
        }
        for t in self.terminals.keys() {
            if !inside(t) || self.walls.contains(t) {
                return Err(Error::Config(format!("{}: terminal {t:?} is not a free cell", self.name)));
            }
            if self.shortest_path(*t).is_none() {
                return Err(Error::Config(format!("{}: terminal {t:?} unreachable from start", self.name)));
            }
        }
        Ok(())
    }
}

/// Deterministic gridworld. Entering a terminal pays that terminal's reward
/// and ends the episode; every other move pays the step penalty.
pub struct GridWorld {
    layout: GridLayout,
    spec: EnvSpec,
    pos: Cell,
    clock: EpisodeClock,
}

impl GridWorld {
    pub fn new(layout: GridLayout) -> Result<Self> {
        layout.validate()?;
        let mut rewards = vec![
            ("step".to_string(), layout.step_penalty),
            ("goal".to_string(), layout.terminals[&layout.goal]),
        ];
        if let Some((_, r)) = layout.terminals.iter().find(|(c, _)| **c != layout.goal) {
            rewards.push((layout.hazard.clone(), *r));
        }
        let spec = EnvSpec {
            name: layout.name.clone(),
            observation: ObservationSpace::Discrete {
                states: layout.num_states(),
            },
            action_count: 4,
            max_steps: layout.max_steps,
            rewards,
        };
        Ok(Self {
            pos: layout.start,
            layout,
            spec,
            clock: EpisodeClock::new(),
        })
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn position(&self) -> Cell {
        self.pos
    }
}

impl Environment for GridWorld {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _episode_seed: Option<u64>) -> Observation {
        self.clock.reset();
        self.pos = self.layout.start;
        Observation::Discrete(self.layout.state_of(self.pos))
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        self.clock.begin_step(&self.spec, action)?;
        self.pos = self.layout.next_cell(self.pos, GridAction::ALL[action]);
        let (reward, terminal) = match self.layout.terminals.get(&self.pos) {
            Some(r) => (*r, true),
            None => (self.layout.step_penalty, false),
        };
        let done = self.clock.finish(&self.spec, terminal);
        Ok(StepResult {
            observation: Observation::Discrete(self.layout.state_of(self.pos)),
            reward,
            done,
            step: self.clock.steps,
        })
    }
}
