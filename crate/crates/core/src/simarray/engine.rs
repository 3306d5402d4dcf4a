//! Deterministic discrete-event scheduler for a task graph whose tasks hold
//! exclusive resources (the compute array, individual links) while running.
//!
//! Tasks become ready when their last dependency finishes. Ready tasks are
//! served in order of ready time, then task id, and each waits until every
//! resource it needs is free, so every resource behaves as a FIFO.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::hash::Hash;

pub type TaskId = usize;

#[derive(Debug, Clone)]
struct Task<R> {
    duration: f64,
    resources: Vec<R>,
    deps: Vec<TaskId>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub start: f64,
    pub finish: f64,
}

/// Ready-queue key. Times are finite and non-negative, so their bit
/// patterns order the same way as the values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Key(u64, TaskId);

#[derive(Debug, Clone)]
pub struct Schedule<R> {
    tasks: Vec<Task<R>>,
}

impl<R: Clone + Eq + Hash> Default for Schedule<R> {
    fn default() -> Self {
        Schedule { tasks: Vec::new() }
    }
}

impl<R: Clone + Eq + Hash> Schedule<R> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a task. Dependencies must already exist.
    pub fn add(&mut self, duration: f64, resources: Vec<R>, deps: Vec<TaskId>) -> TaskId {
        debug_assert!(duration.is_finite() && duration >= 0.0);
        debug_assert!(deps.iter().all(|&d| d < self.tasks.len()));
        self.tasks.push(Task {
            duration,
            resources,
            deps,
        });
        self.tasks.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Runs the graph and returns every task's span.
    pub fn run(&self) -> Vec<Span> {
        let n = self.tasks.len();
        let mut waiting: Vec<usize> = self.tasks.iter().map(|t| t.deps.len()).collect();
        let mut ready_at = vec![0.0f64; n];
        let mut dependents: Vec<Vec<TaskId>> = vec![Vec::new(); n];
        for (id, t) in self.tasks.iter().enumerate() {
            for &d in &t.deps {
                dependents[d].push(id);
            }
        }
        let mut queue: BinaryHeap<Reverse<Key>> = (0..n)
            .filter(|&id| waiting[id] == 0)
            .map(|id| Reverse(Key(0.0f64.to_bits(), id)))
            .collect();
        let mut free_at: HashMap<R, f64> = HashMap::new();
        let mut spans = vec![
            Span {
                start: 0.0,
                finish: 0.0
            };
            n
        ];
        while let Some(Reverse(Key(_, id))) = queue.pop() {
            let task = &self.tasks[id];
            let start = task
                .resources
                .iter()
                .map(|r| free_at.get(r).copied().unwrap_or(0.0))
                .fold(ready_at[id], f64::max);
            let finish = start + task.duration;
            for r in &task.resources {
                free_at.insert(r.clone(), finish);
            }
            spans[id] = Span { start, finish };
            for &next in &dependents[id] {
                ready_at[next] = ready_at[next].max(finish);
                waiting[next] -= 1;
                if waiting[next] == 0 {
                    queue.push(Reverse(Key(ready_at[next].to_bits(), next)));
                }
            }
        }
        spans
    }

    /// Finish time of the last task.
    pub fn makespan(spans: &[Span]) -> f64 {
        spans.iter().map(|s| s.finish).fold(0.0, f64::max)
    }
}
