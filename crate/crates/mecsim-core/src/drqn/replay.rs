//! Training data structures: per-user history windows, joint per-epoch
//! experiences, and the bounded replay ring.
//!
//! Windows are never stored redundantly: the replay ring holds whole epochs
//! in order, so any sample's window is rebuilt from the run of experiences
//! ending at it. Samples whose window would cross the ring's evicted edge
//! are excluded from sampling.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::env::{Action, LocalState};

/// Ring of the N most recent encoded (state, observation) pairs for one
/// user, oldest first, zero-padded until warm-up completes.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryWindow {
    feat_dim: usize,
    n: usize,
    entries: VecDeque<Vec<f64>>,
}

impl HistoryWindow {
    pub fn new(n: usize, feat_dim: usize) -> Self {
        assert!(n >= 1);
        HistoryWindow { feat_dim, n, entries: VecDeque::with_capacity(n) }
    }

    pub fn push(&mut self, encoded: &[f64]) {
        debug_assert_eq!(encoded.len(), self.feat_dim);
        if self.entries.len() == self.n {
            self.entries.pop_front();
        }
        self.entries.push_back(encoded.to_vec());
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Writes the window as one flat `n * feat_dim` buffer, zero-padding the
    /// oldest slots before warm-up.
    pub fn write_flat(&self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n * self.feat_dim);
        let pad = self.n - self.entries.len();
        out[..pad * self.feat_dim].fill(0.0);
        for (i, e) in self.entries.iter().enumerate() {
            out[(pad + i) * self.feat_dim..(pad + i + 1) * self.feat_dim].copy_from_slice(e);
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.feat_dim];
        self.write_flat(&mut out);
        out
    }
}

/// Everything recorded about one epoch, jointly for all users: the
/// (state, observation) pair, the action, the realized utility, and the
/// successor (state, observation) pair of each user.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub states: Vec<(LocalState, f64)>,
    pub actions: Vec<Action>,
    pub utilities: Vec<f64>,
    pub next_states: Vec<(LocalState, f64)>,
}

/// Ring buffer of the most recent `capacity` experiences, indexed by
/// absolute epoch so window contiguity is checkable.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    buf: VecDeque<Experience>,
    /// Absolute epoch (1-based) of the oldest stored experience.
    oldest: u64,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1);
        ReplayMemory { capacity, buf: VecDeque::with_capacity(capacity), oldest: 1 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn oldest_epoch(&self) -> u64 {
        self.oldest
    }

    pub fn newest_epoch(&self) -> u64 {
        self.oldest + self.buf.len() as u64 - 1
    }

    /// Appends the experience of the next epoch, evicting the oldest when
    /// full.
    pub fn push(&mut self, exp: Experience) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
            self.oldest += 1;
        }
        self.buf.push_back(exp);
    }

    pub fn get(&self, abs_epoch: u64) -> &Experience {
        debug_assert!(abs_epoch >= self.oldest && abs_epoch <= self.newest_epoch());
        &self.buf[(abs_epoch - self.oldest) as usize]
    }

    /// Epochs whose N-step window is fully reconstructable: either the run
    /// back to `epoch - n + 1` is still stored, or it reaches past the start
    /// of the simulation (zero padding covers the gap).
    pub fn valid_sample_range(&self, n_window: usize) -> Option<(u64, u64)> {
        if self.buf.is_empty() {
            return None;
        }
        let lo = if self.oldest == 1 {
            1
        } else {
            self.oldest + n_window as u64 - 1
        };
        let hi = self.newest_epoch();
        if lo > hi {
            None
        } else {
            Some((lo, hi))
        }
    }

    /// Uniform sample of `count` distinct epochs whose windows do not cross
    /// the evicted edge. Returns `None` when fewer than `count` epochs
    /// qualify.
    pub fn sample_epochs(
        &self,
        count: usize,
        n_window: usize,
        rng: &mut impl Rng,
    ) -> Option<Vec<u64>> {
        let (lo, hi) = self.valid_sample_range(n_window)?;
        let span = (hi - lo + 1) as usize;
        if span < count {
            return None;
        }
        // Floyd's algorithm for a uniform subset without replacement.
        let mut chosen: Vec<u64> = Vec::with_capacity(count);
        for j in (span - count)..span {
            let t = rng.gen_range(0..=j as u64);
            let cand = lo + t;
            if chosen.contains(&cand) {
                chosen.push(lo + j as u64);
            } else {
                chosen.push(cand);
            }
        }
        Some(chosen)
    }

    /// Rebuilds the encoded window ending at `abs_epoch` for user `mu`.
    /// `encode` maps a stored (state, observation) pair to features;
    /// `next_side` selects the successor window (shifted one epoch, ending
    /// at the sample's next state).
    pub fn write_window(
        &self,
        abs_epoch: u64,
        mu: usize,
        n_window: usize,
        feat_dim: usize,
        next_side: bool,
        mut encode: impl FnMut(&LocalState, f64, &mut [f64]),
        out: &mut [f64],
    ) {
        debug_assert_eq!(out.len(), n_window * feat_dim);
        // Entries run oldest to newest; slot n_window-1 is the sample epoch
        // itself (or its successor on the next side).
        for slot in 0..n_window {
            let back = (n_window - 1 - slot) as u64;
            let dst = &mut out[slot * feat_dim..(slot + 1) * feat_dim];
            let epoch = if next_side {
                // Window ends at the successor pair of `abs_epoch`.
                if back == 0 {
                    let (s, o) = &self.get(abs_epoch).next_states[mu];
                    encode(s, *o, dst);
                    continue;
                }
                (abs_epoch + 1).checked_sub(back)
            } else {
                abs_epoch.checked_sub(back)
            };
            let epoch = match epoch {
                Some(e) if e >= 1 => e,
                _ => {
                    dst.fill(0.0);
                    continue;
                }
            };
            debug_assert!(epoch >= self.oldest, "window crossed the evicted edge");
            let (s, o) = &self.get(epoch).states[mu];
            encode(s, *o, dst);
        }
    }
}
