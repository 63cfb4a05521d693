//! Scripted experts standing in for trained advisor policies.

use std::collections::VecDeque;

use crate::envs::cartpole::{PUSH_LEFT, PUSH_RIGHT};
use crate::envs::doorkey::{self, heading_delta, Cell, DecodedGrid};
use crate::error::{Error, Result};

/// Linear stabiliser: push right iff
/// `θ + 0.2·θ̇ + 0.01·x + 0.05·ẋ > 0`.
///
/// The same gains hold the pole for half-lengths 0.5, 1.0 and 2.0.
pub fn cartpole_expert(observation: &[f64]) -> usize {
    let (x, x_dot, theta, theta_dot) = (observation[0], observation[1], observation[2], observation[3]);
    let lean = theta + 0.2 * theta_dot + 0.01 * x + 0.05 * x_dot;
    if lean > 0.0 {
        PUSH_RIGHT
    } else {
        PUSH_LEFT
    }
}

/// Planner state: pose plus the two bits of progress.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct PlanNode {
    x: usize,
    y: usize,
    dir: u8,
    has_key: bool,
    door_open: bool,
}

/// First action of a shortest plan to the goal, found by breadth-first search
/// over `(position, heading, has-key, door-open)`.
pub fn doorkey_expert(observation: &[f64]) -> Result<usize> {
    let grid = doorkey::decode(observation)?;
    plan(&grid)
        .and_then(|p| p.first().copied())
        .ok_or_else(|| Error::Contract("decoded door-key state has no path to the goal".into()))
}

/// Full shortest action sequence from the decoded state to the goal.
pub fn doorkey_plan(observation: &[f64]) -> Result<Vec<usize>> {
    let grid = doorkey::decode(observation)?;
    plan(&grid).ok_or_else(|| Error::Contract("decoded door-key state has no path to the goal".into()))
}

fn plan(grid: &DecodedGrid) -> Option<Vec<usize>> {
    let n = grid.size;
    let idx = |node: &PlanNode| {
        ((node.y * n + node.x) * 4 + node.dir as usize) * 4
            + (node.has_key as usize) * 2
            + node.door_open as usize
    };
    let start = PlanNode {
        x: grid.agent.0,
        y: grid.agent.1,
        dir: grid.dir,
        has_key: grid.carrying_key,
        door_open: grid.cells.contains(&Cell::DoorOpen),
    };
    let cell = |x: usize, y: usize| grid.cells[y * n + x];
    // parent pointer: (previous node index, action)
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n * n * 16];
    let mut seen = vec![false; n * n * 16];
    let mut nodes = vec![start; n * n * 16];
    let mut queue = VecDeque::from([start]);
    seen[idx(&start)] = true;
    nodes[idx(&start)] = start;
    while let Some(node) = queue.pop_front() {
        let (dx, dy) = heading_delta(node.dir);
        let front = {
            let fx = node.x as i64 + dx;
            let fy = node.y as i64 + dy;
            (fx >= 0 && fy >= 0 && (fx as usize) < n && (fy as usize) < n).then_some((fx as usize, fy as usize))
        };
        for action in 0..doorkey::NUM_ACTIONS {
            let mut next = node;
            match action {
                doorkey::TURN_LEFT => next.dir = (node.dir + 3) % 4,
                doorkey::TURN_RIGHT => next.dir = (node.dir + 1) % 4,
                doorkey::FORWARD => {
                    let Some((fx, fy)) = front else { continue };
                    match cell(fx, fy) {
                        Cell::Goal => {
                            let mut actions = vec![doorkey::FORWARD];
                            let mut at = idx(&node);
                            while let Some((prev, a)) = parent[at] {
                                actions.push(a);
                                at = prev;
                            }
                            actions.reverse();
                            return Some(actions);
                        }
                        Cell::Empty => {}
                        Cell::DoorOpen => {}
                        Cell::DoorLocked if node.door_open => {}
                        // a picked-up key leaves an empty cell behind
                        Cell::Key if node.has_key => {}
                        _ => continue,
                    }
                    next.x = fx;
                    next.y = fy;
                }
                doorkey::PICKUP => {
                    let Some((fx, fy)) = front else { continue };
                    if node.has_key || cell(fx, fy) != Cell::Key {
                        continue;
                    }
                    next.has_key = true;
                }
                doorkey::TOGGLE => {
                    let Some((fx, fy)) = front else { continue };
                    if !node.has_key || node.door_open || cell(fx, fy) != Cell::DoorLocked {
                        continue;
                    }
                    next.door_open = true;
                }
                _ => unreachable!(),
            }
            let i = idx(&next);
            if !seen[i] {
                seen[i] = true;
                nodes[i] = next;
                parent[i] = Some((idx(&node), action));
                queue.push_back(next);
            }
        }
    }
    None
}
