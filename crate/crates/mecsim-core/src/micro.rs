//! An exactly-enumerable micro instance of the system, used as the
//! correctness oracle for the learning stack.
//!
//! One user moves on a 2x2 grid with a simple stay-or-step location chain;
//! the single base station sits at the grid center so every cell has the
//! same link quality, and the payload, rates, and VM service rate are chosen
//! so that every transfer and processing state quantizes to the levels
//! {0, half, full}. The only randomness is the Bernoulli task arrival and
//! the location move, so the transition kernel is known in closed form and
//! value iteration gives ground truth. Delays, energies, and utilities come
//! from the same per-epoch operations as the full simulator.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::config::SystemConfig;
use crate::env::{
    bs_offload_step, feasible_actions, local_compute, uav_offload_step, utility, Action,
    ActionMask, EpochOutcome, LocalState, StepError,
};
use crate::mobility::LocationId;
use crate::sim::Environment;
use crate::tabular::MicroMdp;

/// Knobs of the micro instance that are not plain system parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicroParams {
    pub arrival_prob: f64,
    pub gamma: f64,
    /// Queue values are capped here; arrivals beyond the cap are dropped so
    /// the state space stays finite.
    pub queue_cap: u32,
    /// Probability the user stays in its cell; otherwise it steps to one of
    /// the two edge neighbors uniformly.
    pub stay_prob: f64,
}

impl Default for MicroParams {
    fn default() -> Self {
        MicroParams { arrival_prob: 0.4, gamma: 0.5, queue_cap: 2, stay_prob: 0.6 }
    }
}

/// System configuration of the micro instance: 2x2 grid, one user, one
/// base station, two-epoch local jobs, two-epoch transfers and processing.
pub fn micro_config(params: &MicroParams) -> SystemConfig {
    let mut cfg = SystemConfig::default();
    cfg.num_bs = 1;
    cfg.bs_positions = vec![(10.0, 10.0)];
    cfg.area_side = 20.0;
    cfg.cell_side = 10.0;
    cfg.num_mus = 1;
    cfg.arrival_prob = params.arrival_prob;
    cfg.discount = params.gamma;
    // Two epochs of local work: mu * theta = 2 * rho * delta exactly.
    cfg.task_bits = 2e5;
    cfg.cycles_per_bit = 200.0;
    // VM drains exactly half a payload per epoch.
    cfg.vm_base_rate_bps = cfg.task_bits / (2.0 * cfg.epoch_seconds);
    // Handover cost would knock transfers off the level grid.
    cfg.handover_seconds = 0.0;
    cfg.queue_clip = params.queue_cap;
    cfg.history_len = 8;
    cfg.minibatch = 32;
    cfg.replay_capacity = 2000;
    cfg.target_update_period = 100;
    cfg.validate().expect("micro config is valid");
    cfg
}

/// Uplink rate towards either target: half a payload per epoch.
pub fn micro_rate_bps(cfg: &SystemConfig) -> f64 {
    cfg.task_bits / (2.0 * cfg.epoch_seconds)
}

/// Integer key of one quantized (state, observation) pair.
type StateKey = (u32, u32, u16, u32, u8, u8, u8, u8);

fn quantize_level(bits: f64, cfg: &SystemConfig) -> u8 {
    let half = cfg.task_bits / 2.0;
    let lvl = (bits / half + 0.5) as u8;
    debug_assert!(
        (bits - lvl as f64 * half).abs() < 1e-3 * cfg.task_bits,
        "bits {bits} off the level grid"
    );
    lvl
}

fn state_key(s: &LocalState, obs: f64, cfg: &SystemConfig) -> StateKey {
    (
        s.mu_loc.0,
        s.queue_len,
        s.assoc,
        s.local_remaining_epochs,
        quantize_level(s.bs_tx_remaining_bits, cfg),
        quantize_level(s.uav_tx_remaining_bits, cfg),
        quantize_level(s.uav_remaining_bits, cfg),
        (obs > cfg.epoch_seconds / 2.0) as u8,
    )
}

/// Snaps float progress states onto the level grid so enumeration and
/// arithmetic agree bit-for-bit.
fn snap(s: &mut LocalState, cfg: &SystemConfig) {
    let half = cfg.task_bits / 2.0;
    s.bs_tx_remaining_bits = quantize_level(s.bs_tx_remaining_bits, cfg) as f64 * half;
    s.uav_tx_remaining_bits = quantize_level(s.uav_tx_remaining_bits, cfg) as f64 * half;
    s.uav_remaining_bits = quantize_level(s.uav_remaining_bits, cfg) as f64 * half;
}

/// The two edge neighbors of a cell on the 2x2 grid.
fn neighbors(loc: u32) -> [u32; 2] {
    let (ix, iy) = (loc % 2, loc / 2);
    [iy * 2 + (ix ^ 1), (iy ^ 1) * 2 + ix]
}

/// Deterministic part of one micro epoch: everything except the arrival and
/// the location move. Returns the outcome and the post-action state with
/// the queue before arrival.
fn micro_epoch(s: &LocalState, obs_next_of: &mut f64, a: Action, cfg: &SystemConfig) -> (EpochOutcome, LocalState) {
    let rate = micro_rate_bps(cfg);
    let mut next = s.clone();
    let mut o = EpochOutcome::default();

    let prev_assoc = next.assoc;
    if a.remote > 0 {
        next.assoc = a.remote;
    }
    o.handover = next.assoc != prev_assoc;

    if a.local {
        next.local_remaining_epochs = crate::config::local_epochs_needed(cfg);
    }
    match a.remote {
        0 => {}
        f if (f as usize) <= cfg.num_bs => next.bs_tx_remaining_bits = cfg.task_bits,
        _ => next.uav_tx_remaining_bits = cfg.task_bits,
    }

    let (d_local, e_local, next_local) = local_compute(next.local_remaining_epochs, cfg);
    o.d_local = d_local;
    o.e_local = e_local;
    next.local_remaining_epochs = next_local;

    if next.bs_tx_remaining_bits > 0.0 {
        let (y, e, t) = bs_offload_step(next.bs_tx_remaining_bits, rate, o.handover, cfg);
        o.y_bs = y;
        o.e_bs = e;
        next.bs_tx_remaining_bits = t;
    }
    if next.uav_tx_remaining_bits > 0.0 || next.uav_remaining_bits > 0.0 {
        let active = (next.uav_remaining_bits > 0.0) as usize;
        let u = uav_offload_step(
            next.uav_tx_remaining_bits,
            next.uav_remaining_bits,
            rate,
            o.handover,
            active,
            cfg,
        );
        o.y_uav = u.y_uav;
        o.e_uav_tx = u.e_uav_tx;
        o.d_uav_proc = u.d_uav_proc;
        next.uav_tx_remaining_bits = u.next_tx_bits;
        next.uav_remaining_bits = u.next_proc_bits;
    }
    snap(&mut next, cfg);

    let departures = a.local as u32 + a.offloads() as u32;
    o.d_queueing = cfg.epoch_seconds * s.queue_len.saturating_sub(departures) as f64;
    next.queue_len = s.queue_len.saturating_sub(departures);
    o.utility = utility(&o, cfg);
    *obs_next_of = o.d_uav_proc;
    (o, next)
}

/// The enumerated micro instance: states, the exact kernel wrapped in a
/// [`MicroMdp`], and the mapping back to simulator states.
#[derive(Debug, Clone)]
pub struct MicroInstance {
    pub cfg: SystemConfig,
    pub params: MicroParams,
    pub mdp: MicroMdp,
    /// Index-aligned (state, observation) pairs.
    pub states: Vec<(LocalState, f64)>,
    index: BTreeMap<StateKey, u32>,
    uav_loc: LocationId,
}

impl MicroInstance {
    /// Enumerates every reachable (state, observation) pair by breadth-first
    /// search from the canonical start state and assembles the exact kernel.
    pub fn build(params: MicroParams) -> Self {
        let cfg = micro_config(&params);
        let uav_loc = LocationId(3);
        let start = LocalState {
            mu_loc: LocationId(0),
            uav_loc,
            queue_len: 0,
            assoc: 1,
            local_remaining_epochs: 0,
            uav_remaining_bits: 0.0,
            bs_tx_remaining_bits: 0.0,
            uav_tx_remaining_bits: 0.0,
        };

        let mut states: Vec<(LocalState, f64)> = Vec::new();
        let mut index: BTreeMap<StateKey, u32> = BTreeMap::new();
        let mut frontier: Vec<u32> = Vec::new();
        fn push_state(
            s: LocalState,
            o: f64,
            states: &mut Vec<(LocalState, f64)>,
            index: &mut BTreeMap<StateKey, u32>,
            frontier: &mut Vec<u32>,
            cfg: &SystemConfig,
        ) -> u32 {
            let key = state_key(&s, o, cfg);
            if let Some(&i) = index.get(&key) {
                return i;
            }
            let i = states.len() as u32;
            states.push((s, o));
            index.insert(key, i);
            frontier.push(i);
            i
        }

        push_state(start, 0.0, &mut states, &mut index, &mut frontier, &cfg);
        let num_actions = cfg.num_actions();
        // kernel and utility grow with the state set; filled as discovered.
        let mut kernel: Vec<Vec<(u32, f64)>> = Vec::new();
        let mut util: Vec<f64> = Vec::new();

        while let Some(si) = frontier.pop() {
            let needed = (si as usize + 1) * num_actions;
            if kernel.len() < needed {
                kernel.resize(needed.max(states.len() * num_actions), Vec::new());
                util.resize(kernel.len(), 0.0);
            }
            let (s, _o) = states[si as usize].clone();
            let mask = feasible_actions(&s, cfg.num_bs);
            for a in mask.iter() {
                let ai = a.index(cfg.num_bs);
                let mut obs_next = 0.0;
                let (outcome, base_next) = micro_epoch(&s, &mut obs_next, a, &cfg);
                util[si as usize * num_actions + ai] = outcome.utility;
                let mut branches: BTreeMap<u32, f64> = BTreeMap::new();
                let arrival_cases = [(false, 1.0 - params.arrival_prob), (true, params.arrival_prob)];
                let nbrs = neighbors(s.mu_loc.0);
                let move_cases = [
                    (s.mu_loc.0, params.stay_prob),
                    (nbrs[0], (1.0 - params.stay_prob) / 2.0),
                    (nbrs[1], (1.0 - params.stay_prob) / 2.0),
                ];
                for (arrived, pa) in arrival_cases {
                    if pa == 0.0 {
                        continue;
                    }
                    for (loc, pl) in move_cases {
                        if pl == 0.0 {
                            continue;
                        }
                        let mut nxt = base_next.clone();
                        nxt.queue_len = (nxt.queue_len + arrived as u32).min(params.queue_cap);
                        nxt.mu_loc = LocationId(loc);
                        let ni = push_state(
                            nxt,
                            obs_next,
                            &mut states,
                            &mut index,
                            &mut frontier,
                            &cfg,
                        );
                        *branches.entry(ni).or_insert(0.0) += pa * pl;
                    }
                }
                let needed = states.len() * num_actions;
                if kernel.len() < needed {
                    kernel.resize(needed, Vec::new());
                    util.resize(needed, 0.0);
                }
                kernel[si as usize * num_actions + ai] = branches.into_iter().collect();
            }
        }

        kernel.resize(states.len() * num_actions, Vec::new());
        util.resize(kernel.len(), 0.0);
        let mdp = MicroMdp::new(states.len(), num_actions, kernel, util, params.gamma)
            .expect("micro kernel is stochastic");
        MicroInstance { cfg, params, mdp, states, index, uav_loc }
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn uav_loc(&self) -> LocationId {
        self.uav_loc
    }

    pub fn state_index(&self, s: &LocalState, obs: f64) -> Option<u32> {
        self.index.get(&state_key(s, obs, &self.cfg)).copied()
    }

    /// Samples one kernel transition.
    pub fn sample_transition(
        &self,
        state: u32,
        action_idx: usize,
        rng: &mut impl Rng,
    ) -> (u32, f64) {
        let u = self.mdp.utility_of(state as usize, action_idx);
        let r: f64 = rng.gen();
        let mut acc = 0.0;
        let row = self.mdp.transitions(state as usize, action_idx);
        let mut next = row[row.len() - 1].0;
        for &(sp, p) in row {
            acc += p;
            if r < acc {
                next = sp;
                break;
            }
        }
        (next, u)
    }
}

/// The micro instance exposed as a steppable single-user environment.
#[derive(Debug, Clone)]
pub struct MicroEnv<'a> {
    inst: &'a MicroInstance,
    cur: u32,
    rng: ChaCha12Rng,
}

impl<'a> MicroEnv<'a> {
    pub fn new(inst: &'a MicroInstance, seed: u64) -> Self {
        MicroEnv { inst, cur: 0, rng: ChaCha12Rng::seed_from_u64(seed) }
    }

    pub fn current_index(&self) -> u32 {
        self.cur
    }

    /// Jumps to an arbitrary enumerated state (exploring starts).
    pub fn teleport(&mut self, state: u32) {
        debug_assert!((state as usize) < self.inst.num_states());
        self.cur = state;
    }
}

impl Environment for MicroEnv<'_> {
    fn num_mus(&self) -> usize {
        1
    }

    fn num_bs(&self) -> usize {
        self.inst.cfg.num_bs
    }

    fn local_state(&self, k: usize) -> &LocalState {
        debug_assert_eq!(k, 0);
        &self.inst.states[self.cur as usize].0
    }

    fn observation(&self, k: usize) -> f64 {
        debug_assert_eq!(k, 0);
        self.inst.states[self.cur as usize].1
    }

    fn feasible(&self, k: usize) -> ActionMask {
        debug_assert_eq!(k, 0);
        feasible_actions(self.local_state(0), self.inst.cfg.num_bs)
    }

    fn step(&mut self, actions: &[Action]) -> Result<Vec<f64>, StepError> {
        debug_assert_eq!(actions.len(), 1);
        let a = actions[0];
        if !self.feasible(0).contains(a) {
            return Err(StepError::Infeasible { mu: 0, local: a.local, remote: a.remote });
        }
        let ai = a.index(self.inst.cfg.num_bs);
        let (next, u) = self.inst.sample_transition(self.cur, ai, &mut self.rng);
        self.cur = next;
        Ok(vec![u])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::value_iteration;

    #[test]
    fn enumeration_is_small_and_rich() {
        let inst = MicroInstance::build(MicroParams::default());
        let n = inst.num_states();
        assert!(n <= 500, "state count {n} exceeds the enumeration budget");
        assert!(n >= 100, "state count {n} suspiciously small");
    }

    #[test]
    fn build_is_deterministic() {
        let a = MicroInstance::build(MicroParams::default());
        let b = MicroInstance::build(MicroParams::default());
        assert_eq!(a.num_states(), b.num_states());
        for i in 0..a.num_states() {
            assert_eq!(a.states[i], b.states[i]);
        }
    }

    #[test]
    fn utilities_are_within_bounds() {
        let inst = MicroInstance::build(MicroParams::default());
        let eta = inst.cfg.utility_weight;
        for s in 0..inst.mdp.num_states() {
            for a in inst.mdp.feasible_of(s) {
                let u = inst.mdp.utility_of(s, a);
                assert!(u > 0.0 && u <= 1.0 + eta, "u = {u}");
            }
        }
    }

    #[test]
    fn observation_levels_are_zero_or_full_epoch() {
        let inst = MicroInstance::build(MicroParams::default());
        for (_, o) in &inst.states {
            assert!(*o == 0.0 || (*o - inst.cfg.epoch_seconds).abs() < 1e-12);
        }
    }

    #[test]
    fn value_iteration_solves_the_micro_mdp() {
        let inst = MicroInstance::build(MicroParams::default());
        let sol = value_iteration(&inst.mdp, 1e-10, 100_000).unwrap();
        for s in 0..inst.mdp.num_states() {
            assert!(sol.v[s] > 0.0 && sol.v[s] <= 4.0 + 1e-9);
        }
        // Idle states with an empty queue should be worth close to 4.
        let idle = sol.v[0];
        assert!(idle > 3.5, "idle value {idle}");
    }

    #[test]
    fn sampled_trajectory_stays_within_the_enumeration() {
        let inst = MicroInstance::build(MicroParams::default());
        let mut env = MicroEnv::new(&inst, 42);
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..5000 {
            let mask = env.feasible(0);
            let n = mask.len();
            let pick = rng.gen_range(0..n);
            let a = mask.iter().nth(pick).unwrap();
            let u = env.step(&[a]).unwrap();
            assert!(u[0] > 0.0 && u[0] <= 4.0);
            assert!((env.current_index() as usize) < inst.num_states());
        }
    }

    #[test]
    fn empirical_frequencies_match_the_kernel() {
        let inst = MicroInstance::build(MicroParams::default());
        // Repeatedly sample one fixed (state, action) and compare branch
        // frequencies with kernel probabilities.
        let s = 0u32;
        let a_idle = Action::IDLE.index(inst.cfg.num_bs);
        let row = inst.mdp.transitions(s as usize, a_idle).to_vec();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let draws = 200_000;
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for _ in 0..draws {
            let (n, _) = inst.sample_transition(s, a_idle, &mut rng);
            *counts.entry(n).or_insert(0) += 1;
        }
        for (sp, p) in row {
            let freq = *counts.get(&sp).unwrap_or(&0) as f64 / draws as f64;
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((freq - p).abs() < 4.0 * se + 1e-4, "branch {sp}: {freq} vs {p}");
        }
    }

    #[test]
    fn infeasible_micro_action_is_rejected() {
        let inst = MicroInstance::build(MicroParams::default());
        let mut env = MicroEnv::new(&inst, 1);
        // State 0 has an empty queue; any schedule is infeasible.
        let err = env.step(&[Action { local: true, remote: 0 }]).unwrap_err();
        assert!(matches!(err, StepError::Infeasible { .. }));
    }
}
