use std::collections::VecDeque;

use crate::env::Trajectory;
use crate::error::{Error, Result};

/// One observed transition `(h, s, a, s')`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<S> {
    pub h: usize,
    pub state: S,
    pub action: usize,
    pub next: S,
}

/// FIFO transition store. Capacity 0 means unbounded.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<S> {
    capacity: usize,
    items: VecDeque<Transition<S>>,
}

impl<S: Clone> ReplayBuffer<S> {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: VecDeque::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends a transition and returns the evicted one, if any.
    pub fn push(&mut self, t: Transition<S>) -> Option<Transition<S>> {
        self.items.push_back(t);
        if self.capacity > 0 && self.items.len() > self.capacity {
            self.items.pop_front()
        } else {
            None
        }
    }

    pub fn push_trajectory(&mut self, traj: &Trajectory<S>) {
        for (h, s, a, next) in traj.transitions() {
            self.push(Transition {
                h,
                state: s.clone(),
                action: a,
                next: next.clone(),
            });
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition<S>> {
        self.items.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Transition<S>> {
        self.items.get(i)
    }
}

/// Replay buffer over finite states with incrementally maintained
/// `N(s, a)` and `N(s, a, s')`. Counts pool all timesteps.
#[derive(Debug, Clone)]
pub struct TabularBuffer {
    num_states: usize,
    num_actions: usize,
    buffer: ReplayBuffer<usize>,
    sa: Vec<u64>,
    sas: Vec<u64>,
}

impl TabularBuffer {
    pub fn new(num_states: usize, num_actions: usize, capacity: usize) -> Self {
        Self {
            num_states,
            num_actions,
            buffer: ReplayBuffer::new(capacity),
            sa: vec![0; num_states * num_actions],
            sas: vec![0; num_states * num_actions * num_states],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn buffer(&self) -> &ReplayBuffer<usize> {
        &self.buffer
    }

    pub fn push(&mut self, t: Transition<usize>) -> Result<()> {
        if t.state >= self.num_states || t.next >= self.num_states || t.action >= self.num_actions {
            return Err(Error::invalid(format!(
                "transition ({}, {}, {}) outside a {}x{} table",
                t.state, t.action, t.next, self.num_states, self.num_actions
            )));
        }
        self.adjust(&t, true);
        if let Some(old) = self.buffer.push(t) {
            self.adjust(&old, false);
        }
        Ok(())
    }

    pub fn push_trajectory(&mut self, traj: &Trajectory<usize>) -> Result<()> {
        for (h, &state, action, &next) in traj.transitions() {
            self.push(Transition {
                h,
                state,
                action,
                next,
            })?;
        }
        Ok(())
    }

    /// `N(s, a)`.
    pub fn count(&self, s: usize, a: usize) -> u64 {
        self.sa[s * self.num_actions + a]
    }

    /// `N(s, a, s')`.
    pub fn count_next(&self, s: usize, a: usize, next: usize) -> u64 {
        self.sas[(s * self.num_actions + a) * self.num_states + next]
    }

    fn adjust(&mut self, t: &Transition<usize>, add: bool) {
        let i = t.state * self.num_actions + t.action;
        let j = i * self.num_states + t.next;
        if add {
            self.sa[i] += 1;
            self.sas[j] += 1;
        } else {
            self.sa[i] -= 1;
            self.sas[j] -= 1;
        }
    }
}
