//! Two-room key-and-door gridworld.
//!
//! The grid is `size × size` with an outer wall. A vertical wall splits it into
//! a left room holding the agent and a key, and a right room holding the goal
//! in the bottom-right corner. The only passage is a locked door in the
//! dividing wall, which opens when toggled while carrying the key.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::StepResult;
use crate::error::{Error, Result};

pub const TURN_LEFT: usize = 0;
pub const TURN_RIGHT: usize = 1;
pub const FORWARD: usize = 2;
pub const PICKUP: usize = 3;
pub const TOGGLE: usize = 4;
pub const NUM_ACTIONS: usize = 5;
pub const ACTION_NAMES: [&str; NUM_ACTIONS] = ["left", "right", "forward", "pickup", "toggle"];

/// Cell categories in the observation encoding, in one-hot order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    Empty = 0,
    Wall = 1,
    Key = 2,
    DoorLocked = 3,
    DoorOpen = 4,
    Goal = 5,
    Agent = 6,
}

pub const CELL_KINDS: usize = 7;

impl Cell {
    pub fn from_index(i: usize) -> Option<Cell> {
        [
            Cell::Empty,
            Cell::Wall,
            Cell::Key,
            Cell::DoorLocked,
            Cell::DoorOpen,
            Cell::Goal,
            Cell::Agent,
        ]
        .get(i)
        .copied()
    }
}

/// Heading: 0 = +x (east), 1 = +y (south), 2 = west, 3 = north.
pub fn heading_delta(dir: u8) -> (i64, i64) {
    match dir % 4 {
        0 => (1, 0),
        1 => (0, 1),
        2 => (-1, 0),
        _ => (0, -1),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridWorldConfig {
    /// Side length including the outer wall.
    pub size: usize,
    /// Observations are padded (with wall cells) to this side length so that
    /// layouts of different sizes share one encoding.
    pub obs_size: usize,
}

impl GridWorldConfig {
    pub fn new(size: usize) -> Self {
        Self { size, obs_size: size }
    }

    pub fn padded(size: usize, obs_size: usize) -> Self {
        Self { size, obs_size }
    }

    pub fn max_steps(&self) -> u32 {
        (10 * self.size * self.size) as u32
    }

    pub fn observation_len(&self) -> usize {
        self.obs_size * self.obs_size * CELL_KINDS + 4
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 5 {
            return Err(Error::Config(format!("door-key grids need size >= 5, got {}", self.size)));
        }
        if self.obs_size < self.size {
            return Err(Error::Config(format!(
                "observation size {} smaller than grid size {}",
                self.obs_size, self.size
            )));
        }
        Ok(())
    }
}

/// Static contents of a generated layout plus the mutable door/key state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Layout {
    pub size: usize,
    /// Row-major `size × size`; never contains [`Cell::Agent`].
    pub cells: Vec<Cell>,
}

impl Layout {
    pub fn get(&self, x: usize, y: usize) -> Cell {
        self.cells[y * self.size + x]
    }

    fn set(&mut self, x: usize, y: usize, cell: Cell) {
        self.cells[y * self.size + x] = cell;
    }
}

/// Full mutable state of a door-key episode.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DoorKeyState {
    pub layout: Layout,
    pub agent: (usize, usize),
    pub dir: u8,
    pub carrying_key: bool,
    pub steps: u32,
}

impl DoorKeyState {
    pub fn front(&self) -> Option<(usize, usize)> {
        let (dx, dy) = heading_delta(self.dir);
        let x = self.agent.0 as i64 + dx;
        let y = self.agent.1 as i64 + dy;
        let n = self.layout.size as i64;
        (x >= 0 && y >= 0 && x < n && y < n).then_some((x as usize, y as usize))
    }
}

/// Generates a layout the same way for a given RNG stream: dividing wall at a
/// random column, door at a random row of it, agent then key in the left room.
pub fn generate<R: Rng + ?Sized>(size: usize, rng: &mut R) -> DoorKeyState {
    let mut layout = Layout {
        size,
        cells: vec![Cell::Empty; size * size],
    };
    for i in 0..size {
        layout.set(i, 0, Cell::Wall);
        layout.set(i, size - 1, Cell::Wall);
        layout.set(0, i, Cell::Wall);
        layout.set(size - 1, i, Cell::Wall);
    }
    layout.set(size - 2, size - 2, Cell::Goal);
    let split = rng.random_range(2..size - 2);
    for y in 0..size {
        layout.set(split, y, Cell::Wall);
    }
    let left_room: Vec<(usize, usize)> = (1..size - 1)
        .flat_map(|y| (1..split).map(move |x| (x, y)))
        .collect();
    let agent = left_room[rng.random_range(0..left_room.len())];
    let dir = rng.random_range(0..4u8);
    let door_y = rng.random_range(1..size - 2);
    layout.set(split, door_y, Cell::DoorLocked);
    let key_spots: Vec<_> = left_room.iter().copied().filter(|&p| p != agent).collect();
    let (kx, ky) = key_spots[rng.random_range(0..key_spots.len())];
    layout.set(kx, ky, Cell::Key);
    DoorKeyState {
        layout,
        agent,
        dir,
        carrying_key: false,
        steps: 0,
    }
}

/// Pure transition: returns the reward and whether the goal was reached.
/// The step counter is incremented by the caller.
pub fn transition(state: &mut DoorKeyState, action: usize) -> (f64, bool) {
    match action {
        TURN_LEFT => state.dir = (state.dir + 3) % 4,
        TURN_RIGHT => state.dir = (state.dir + 1) % 4,
        FORWARD => {
            if let Some((fx, fy)) = state.front() {
                match state.layout.get(fx, fy) {
                    Cell::Empty | Cell::DoorOpen => state.agent = (fx, fy),
                    Cell::Goal => {
                        state.agent = (fx, fy);
                        return (0.0, true);
                    }
                    _ => {}
                }
            }
        }
        PICKUP => {
            if let Some((fx, fy)) = state.front() {
                if !state.carrying_key && state.layout.get(fx, fy) == Cell::Key {
                    state.carrying_key = true;
                    state.layout.set(fx, fy, Cell::Empty);
                }
            }
        }
        TOGGLE => {
            if let Some((fx, fy)) = state.front() {
                if state.carrying_key && state.layout.get(fx, fy) == Cell::DoorLocked {
                    state.layout.set(fx, fy, Cell::DoorOpen);
                }
            }
        }
        _ => unreachable!("action validated by caller"),
    }
    (0.0, false)
}

/// One-hot grid (padded with walls to `obs_size`) followed by a one-hot heading.
pub fn encode(state: &DoorKeyState, obs_size: usize) -> Vec<f64> {
    let mut obs = vec![0.0; obs_size * obs_size * CELL_KINDS + 4];
    for y in 0..obs_size {
        for x in 0..obs_size {
            let cell = if (x, y) == state.agent {
                Cell::Agent
            } else if x < state.layout.size && y < state.layout.size {
                state.layout.get(x, y)
            } else {
                Cell::Wall
            };
            obs[(y * obs_size + x) * CELL_KINDS + cell as usize] = 1.0;
        }
    }
    obs[obs_size * obs_size * CELL_KINDS + state.dir as usize] = 1.0;
    obs
}

/// What an observation reveals: cell categories, agent pose and key possession.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedGrid {
    pub size: usize,
    /// Row-major; the agent's own cell is reported as [`Cell::Empty`].
    pub cells: Vec<Cell>,
    pub agent: (usize, usize),
    pub dir: u8,
    /// The key is carried exactly when no key cell remains on the grid.
    pub carrying_key: bool,
}

pub fn decode(obs: &[f64]) -> Result<DecodedGrid> {
    let cells_len = obs
        .len()
        .checked_sub(4)
        .ok_or_else(|| Error::Contract("door-key observation too short".into()))?;
    let size = ((cells_len / CELL_KINDS) as f64).sqrt().round() as usize;
    if size * size * CELL_KINDS != cells_len {
        return Err(Error::Contract(format!("{} is not a door-key observation length", obs.len())));
    }
    let mut cells = Vec::with_capacity(size * size);
    let mut agent = None;
    for i in 0..size * size {
        let hot = &obs[i * CELL_KINDS..(i + 1) * CELL_KINDS];
        let kind = hot
            .iter()
            .position(|&v| v > 0.5)
            .and_then(Cell::from_index)
            .ok_or_else(|| Error::Contract(format!("cell {i} has no category")))?;
        if kind == Cell::Agent {
            agent = Some((i % size, i / size));
            cells.push(Cell::Empty);
        } else {
            cells.push(kind);
        }
    }
    let agent = agent.ok_or_else(|| Error::Contract("no agent in door-key observation".into()))?;
    let dir = obs[cells_len..]
        .iter()
        .position(|&v| v > 0.5)
        .ok_or_else(|| Error::Contract("door-key observation has no heading".into()))? as u8;
    let carrying_key = !cells.contains(&Cell::Key);
    Ok(DecodedGrid {
        size,
        cells,
        agent,
        dir,
        carrying_key,
    })
}

#[derive(Debug, Clone)]
pub struct DoorKey {
    config: GridWorldConfig,
    state: DoorKeyState,
    finished: bool,
    rng: ChaCha8Rng,
}

impl DoorKey {
    pub fn new(config: GridWorldConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = generate(config.size, &mut rng);
        Ok(Self {
            config,
            state,
            finished: false,
            rng,
        })
    }

    pub fn config(&self) -> &GridWorldConfig {
        &self.config
    }

    /// Layout changes apply at the next reset; the padded observation size must not change.
    pub fn set_config(&mut self, config: GridWorldConfig) -> Result<()> {
        config.validate()?;
        if config.obs_size != self.config.obs_size {
            return Err(Error::Config("observation size cannot change between phases".into()));
        }
        self.config = config;
        Ok(())
    }

    pub fn state(&self) -> &DoorKeyState {
        &self.state
    }

    pub fn set_state(&mut self, state: DoorKeyState) {
        self.state = state;
        self.finished = false;
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn reset(&mut self) -> Vec<f64> {
        self.state = generate(self.config.size, &mut self.rng);
        self.finished = false;
        self.observation()
    }

    pub fn observation(&self) -> Vec<f64> {
        encode(&self.state, self.config.obs_size)
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        if action >= NUM_ACTIONS {
            return Err(Error::Contract(format!("door-key has no action {action}")));
        }
        if self.finished {
            return Err(Error::Contract("door-key stepped after the episode ended".into()));
        }
        self.state.steps += 1;
        let (_, reached_goal) = transition(&mut self.state, action);
        let max_steps = self.config.max_steps();
        let reward = if reached_goal {
            1.0 - 0.9 * (self.state.steps as f64 / max_steps as f64)
        } else {
            0.0
        };
        let truncated = !reached_goal && self.state.steps >= max_steps;
        self.finished = reached_goal || truncated;
        Ok(StepResult {
            observation: self.observation(),
            reward,
            terminated: reached_goal,
            truncated,
        })
    }

    pub fn render(&self) -> serde_json::Value {
        let s = &self.state;
        let rows: Vec<Vec<Cell>> = (0..s.layout.size)
            .map(|y| (0..s.layout.size).map(|x| s.layout.get(x, y)).collect())
            .collect();
        serde_json::json!({
            "size": s.layout.size,
            "cells": rows,
            "agent": [s.agent.0, s.agent.1],
            "dir": s.dir,
            "carrying_key": s.carrying_key,
            "door_open": s.layout.cells.contains(&Cell::DoorOpen),
            "step": s.steps,
            "max_steps": self.config.max_steps(),
        })
    }
}
