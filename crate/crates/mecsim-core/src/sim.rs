//! Simulation assembly: deterministic RNG streams, initial conditions, and
//! a single-run driver.
//!
//! Every source of randomness gets its own ChaCha stream derived from one
//! run seed, so adding draws to one entity never perturbs another and
//! identical seeds give bit-identical traces.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::config::SystemConfig;
use crate::env::{
    self, feasible_actions, Action, ActionMask, EpochOutcome, GlobalState, LocalState, StepError,
};
use crate::mobility::{self, MuMobilityState, UavMobilityState};
use crate::radio::{gain_bs, gain_uav, rate};

/// SplitMix64 step; the standard seed-expansion permutation.
pub fn splitmix64(state: &mut u64) {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    *state = z ^ (z >> 31);
}

/// Derives a 64-bit sub-seed from a master seed and a label by chaining
/// SplitMix64 over both words.
pub fn derive_seed(master: u64, label: u64) -> u64 {
    let mut s = master ^ 0xa076_1d64_78bd_642f;
    splitmix64(&mut s);
    s ^= label;
    splitmix64(&mut s);
    s
}

/// Counter labels of the per-entity streams inside one run.
mod stream {
    pub const ARRIVAL: u64 = 1;
    pub const UAV: u64 = 2;
    pub const INIT: u64 = 3;
    pub const POLICY: u64 = 4;
    pub const MU_BASE: u64 = 1000;
}

/// Independent RNG streams for one simulation run.
#[derive(Debug, Clone)]
pub struct EnvRng {
    pub arrival: ChaCha12Rng,
    pub uav: ChaCha12Rng,
    pub mus: Vec<ChaCha12Rng>,
}

impl EnvRng {
    pub fn new(run_seed: u64, num_mus: usize) -> Self {
        EnvRng {
            arrival: ChaCha12Rng::seed_from_u64(derive_seed(run_seed, stream::ARRIVAL)),
            uav: ChaCha12Rng::seed_from_u64(derive_seed(run_seed, stream::UAV)),
            mus: (0..num_mus)
                .map(|k| ChaCha12Rng::seed_from_u64(derive_seed(run_seed, stream::MU_BASE + k as u64)))
                .collect(),
        }
    }
}

/// RNG stream reserved for scheduling decisions (exploration, tie breaks).
pub fn policy_rng(run_seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(run_seed, stream::POLICY))
}

/// Uplink rates from one user's location: one per base station plus the UAV
/// link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkRates {
    pub bs: Vec<f64>,
    pub uav: f64,
}

/// A scheduling environment as seen by a policy or the trainer: per-user
/// local state, the previous-epoch observation, feasibility, and a joint
/// step.
pub trait Environment {
    fn num_mus(&self) -> usize;
    fn num_bs(&self) -> usize;
    fn local_state(&self, k: usize) -> &LocalState;
    /// The user's partial observation at the current epoch.
    fn observation(&self, k: usize) -> f64;
    fn feasible(&self, k: usize) -> ActionMask;
    /// Advances one epoch; returns the per-user utilities.
    fn step(&mut self, actions: &[Action]) -> Result<Vec<f64>, StepError>;
}

/// One full simulation instance: global state plus its RNG streams and the
/// previous epoch's outcomes (the source of partial observations).
#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: SystemConfig,
    global: GlobalState,
    rng: EnvRng,
    prev: Vec<EpochOutcome>,
}

impl Simulation {
    /// Builds the initial state: empty queues, idle pipelines, uniformly
    /// random positions, association with the nearest base station.
    pub fn new(cfg: &SystemConfig, run_seed: u64) -> Self {
        let mut init_rng = ChaCha12Rng::seed_from_u64(derive_seed(run_seed, stream::INIT));
        let uav = UavMobilityState::init(cfg, &mut init_rng);
        let uav_loc = mobility::to_location(uav.position, cfg).expect("uav spawned in area");
        let mut mus = Vec::with_capacity(cfg.num_mus);
        let mut states = Vec::with_capacity(cfg.num_mus);
        for _ in 0..cfg.num_mus {
            let m = MuMobilityState::init(cfg, &mut init_rng);
            let mu_loc = mobility::to_location(m.position, cfg).expect("mu spawned in area");
            let assoc = nearest_bs(m.position, cfg);
            states.push(LocalState {
                mu_loc,
                uav_loc,
                queue_len: 0,
                assoc,
                local_remaining_epochs: 0,
                uav_remaining_bits: 0.0,
                bs_tx_remaining_bits: 0.0,
                uav_tx_remaining_bits: 0.0,
            });
            mus.push(m);
        }
        Simulation {
            cfg: cfg.clone(),
            global: GlobalState { states, uav, mus, epoch: 0 },
            rng: EnvRng::new(run_seed, cfg.num_mus),
            prev: alloc::vec![EpochOutcome::default(); cfg.num_mus],
        }
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn global(&self) -> &GlobalState {
        &self.global
    }

    pub fn global_mut(&mut self) -> &mut GlobalState {
        &mut self.global
    }

    pub fn epoch(&self) -> u64 {
        self.global.epoch
    }

    pub fn last_outcomes(&self) -> &[EpochOutcome] {
        &self.prev
    }

    /// Current uplink rates available to user `k`.
    pub fn link_rates(&self, k: usize) -> LinkRates {
        let s = &self.global.states[k];
        LinkRates {
            bs: self
                .cfg
                .bs_positions
                .iter()
                .map(|&p| rate(gain_bs(s.mu_loc, p, &self.cfg), &self.cfg))
                .collect(),
            uav: rate(gain_uav(s.mu_loc, s.uav_loc, &self.cfg), &self.cfg),
        }
    }

    /// Advances one epoch and keeps the outcomes for the next observation.
    pub fn step_with(&mut self, actions: &[Action]) -> Result<Vec<EpochOutcome>, StepError> {
        let outcomes = env::step(&mut self.global, actions, &self.cfg, &mut self.rng)?;
        self.prev.copy_from_slice(&outcomes);
        Ok(outcomes)
    }
}

impl Environment for Simulation {
    fn num_mus(&self) -> usize {
        self.cfg.num_mus
    }

    fn num_bs(&self) -> usize {
        self.cfg.num_bs
    }

    fn local_state(&self, k: usize) -> &LocalState {
        &self.global.states[k]
    }

    fn observation(&self, k: usize) -> f64 {
        env::observation(Some(&self.prev[k]))
    }

    fn feasible(&self, k: usize) -> ActionMask {
        feasible_actions(&self.global.states[k], self.cfg.num_bs)
    }

    fn step(&mut self, actions: &[Action]) -> Result<Vec<f64>, StepError> {
        let out = self.step_with(actions)?;
        Ok(out.iter().map(|o| o.utility).collect())
    }
}

/// Index (1-based) of the base station closest to a position.
pub fn nearest_bs(position: (f64, f64), cfg: &SystemConfig) -> u16 {
    let mut best = 0usize;
    let mut best_d2 = f64::INFINITY;
    for (i, &(x, y)) in cfg.bs_positions.iter().enumerate() {
        let d2 = (position.0 - x) * (position.0 - x) + (position.1 - y) * (position.1 - y);
        if d2 < best_d2 {
            best_d2 = d2;
            best = i;
        }
    }
    best as u16 + 1
}

/// Draws a uniformly random feasible action; exercises the action mask in
/// tests and random-walk traces.
pub fn random_feasible_action(mask: ActionMask, rng: &mut impl Rng) -> Action {
    let n = mask.len();
    debug_assert!(n > 0);
    let pick = rng.gen_range(0..n);
    mask.iter().nth(pick).expect("mask nonempty")
}
