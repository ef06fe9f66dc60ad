//! FIFO replay memory with uniform sampling.

use rand::Rng;

use crate::error::{LacError, Result};

/// Flat storage of transitions, all fields single precision.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    motion: usize,
    series: usize,
    action: usize,
    len: usize,
    head: usize,
    m: Vec<f32>,
    f: Vec<f32>,
    a: Vec<f32>,
    r: Vec<f32>,
    m2: Vec<f32>,
    f2: Vec<f32>,
    done: Vec<f32>,
}

/// Borrowed view of one transition.
#[derive(Debug, Clone, Copy)]
pub struct Transition<'a> {
    pub m: &'a [f32],
    pub f: &'a [f32],
    pub action: &'a [f32],
    pub reward: f32,
    pub next_m: &'a [f32],
    pub next_f: &'a [f32],
    pub done: bool,
}

/// Row-major minibatch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch<T> {
    pub size: usize,
    pub m: Vec<T>,
    pub f: Vec<T>,
    pub action: Vec<T>,
    pub reward: Vec<T>,
    pub next_m: Vec<T>,
    pub next_f: Vec<T>,
    pub done: Vec<T>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, motion: usize, series: usize, action: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            motion,
            series,
            action,
            len: 0,
            head: 0,
            m: Vec::new(),
            f: Vec::new(),
            a: Vec::new(),
            r: Vec::new(),
            m2: Vec::new(),
            f2: Vec::new(),
            done: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        assert_eq!(t.m.len(), self.motion);
        assert_eq!(t.f.len(), self.series);
        assert_eq!(t.action.len(), self.action);
        let i = self.head;
        if self.len < self.capacity && i == self.r.len() {
            self.m.extend_from_slice(t.m);
            self.f.extend_from_slice(t.f);
            self.a.extend_from_slice(t.action);
            self.r.push(t.reward);
            self.m2.extend_from_slice(t.next_m);
            self.f2.extend_from_slice(t.next_f);
            self.done.push(if t.done { 1.0 } else { 0.0 });
        } else {
            self.m[i * self.motion..(i + 1) * self.motion].copy_from_slice(t.m);
            self.f[i * self.series..(i + 1) * self.series].copy_from_slice(t.f);
            self.a[i * self.action..(i + 1) * self.action].copy_from_slice(t.action);
            self.r[i] = t.reward;
            self.m2[i * self.motion..(i + 1) * self.motion].copy_from_slice(t.next_m);
            self.f2[i * self.series..(i + 1) * self.series].copy_from_slice(t.next_f);
            self.done[i] = if t.done { 1.0 } else { 0.0 };
        }
        self.head = (self.head + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    pub fn get(&self, i: usize) -> Transition<'_> {
        assert!(i < self.len);
        Transition {
            m: &self.m[i * self.motion..(i + 1) * self.motion],
            f: &self.f[i * self.series..(i + 1) * self.series],
            action: &self.a[i * self.action..(i + 1) * self.action],
            reward: self.r[i],
            next_m: &self.m2[i * self.motion..(i + 1) * self.motion],
            next_f: &self.f2[i * self.series..(i + 1) * self.series],
            done: self.done[i] > 0.5,
        }
    }

    /// Slot index of the oldest stored transition.
    pub fn oldest(&self) -> usize {
        if self.len < self.capacity {
            0
        } else {
            self.head
        }
    }

    pub fn sample_indices(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
        if self.len < n || self.len == 0 {
            return Err(LacError::BufferUnderfull {
                len: self.len,
                requested: n,
            });
        }
        Ok((0..n).map(|_| rng.random_range(0..self.len)).collect())
    }

    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<Batch<f32>> {
        let idx = self.sample_indices(n, rng)?;
        Ok(self.gather(&idx))
    }

    pub fn gather(&self, idx: &[usize]) -> Batch<f32> {
        let mut b = Batch {
            size: idx.len(),
            ..Batch::default()
        };
        for &i in idx {
            let t = self.get(i);
            b.m.extend_from_slice(t.m);
            b.f.extend_from_slice(t.f);
            b.action.extend_from_slice(t.action);
            b.reward.push(t.reward);
            b.next_m.extend_from_slice(t.next_m);
            b.next_f.extend_from_slice(t.next_f);
            b.done.push(if t.done { 1.0 } else { 0.0 });
        }
        b
    }
}
