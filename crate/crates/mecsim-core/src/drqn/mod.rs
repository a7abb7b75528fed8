//! The recurrent Q-network agent: state encoding, the LSTM-plus-dense
//! Q-network over history windows, masked epsilon-greedy action selection,
//! and the fast inference paths used during simulation.
//!
//! Training machinery (replay memory, the double-DQN loss, and the offline
//! digital-twin trainer) lives in the submodules.

mod replay;
mod train;

pub use replay::{Experience, HistoryWindow, ReplayMemory};
pub use train::{
    double_dqn_loss, twin_train, twin_train_on, LossBatch, ResumeState, TrainError, TrainLogRow,
    TrainOutput,
};

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::config::SystemConfig;
use crate::env::{Action, ActionMask, LocalState};
use crate::math;
use crate::mobility::cell_center;
use crate::neural::{lstm_step, LstmWeights, NeuralError, ParamSet, Tensor};

/// Feature-vector length: positions (2+2), queue (1), association one-hot
/// (B+1), pipeline progress (4), observation (1).
pub fn encode_dim(num_bs: usize) -> usize {
    2 + 2 + 1 + (num_bs + 1) + 4 + 1
}

/// Encodes one (local state, observation) pair into `out`, all features
/// scaled to [0, 1].
pub fn encode(s: &LocalState, obs: f64, cfg: &SystemConfig, out: &mut [f64]) {
    debug_assert_eq!(out.len(), encode_dim(cfg.num_bs));
    let area = cfg.area_side;
    let (mx, my) = cell_center(s.mu_loc, cfg);
    let (ux, uy) = cell_center(s.uav_loc, cfg);
    out[0] = mx / area;
    out[1] = my / area;
    out[2] = ux / area;
    out[3] = uy / area;
    out[4] = (s.queue_len.min(cfg.queue_clip)) as f64 / cfg.queue_clip as f64;
    let onehot = &mut out[5..5 + cfg.num_bs + 1];
    onehot.fill(0.0);
    debug_assert!(s.assoc >= 1 && (s.assoc as usize) <= cfg.num_bs + 1);
    onehot[s.assoc as usize - 1] = 1.0;
    let tail = 5 + cfg.num_bs + 1;
    let delta_epochs = crate::config::local_epochs_needed(cfg) as f64;
    out[tail] = s.local_remaining_epochs as f64 / delta_epochs;
    out[tail + 1] = s.uav_remaining_bits / cfg.task_bits;
    out[tail + 2] = s.bs_tx_remaining_bits / cfg.task_bits;
    out[tail + 3] = s.uav_tx_remaining_bits / cfg.task_bits;
    out[tail + 4] = (obs / cfg.epoch_seconds).min(1.0);
}

/// Architecture dimensions of the Q-network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DrqnDims {
    pub input: usize,
    pub hidden: usize,
    pub actions: usize,
    pub window: usize,
}

impl DrqnDims {
    pub fn for_config(cfg: &SystemConfig) -> Self {
        DrqnDims {
            input: encode_dim(cfg.num_bs),
            hidden: 32,
            actions: cfg.num_actions(),
            window: cfg.history_len,
        }
    }
}

/// Fixed parameter order of a Q-network; checkpoints and optimizer moments
/// rely on it.
pub const PARAM_NAMES: [&str; 9] = [
    "lstm.wx", "lstm.wh", "lstm.b", "fc1.w", "fc1.b", "fc2.w", "fc2.b", "head.w", "head.b",
];

/// The shared Q-network: one LSTM layer followed by two ReLU dense layers
/// and a linear head over all (local, remote) action pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DrqnNet {
    pub dims: DrqnDims,
    pub params: ParamSet,
}

impl DrqnNet {
    /// Fresh network with uniform Xavier weights, zero biases, and the
    /// forget-gate bias at one.
    pub fn new(dims: DrqnDims, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let h = dims.hidden;
        params.add("lstm.wx", xavier(dims.input, 4 * h, &mut rng));
        params.add("lstm.wh", xavier(h, 4 * h, &mut rng));
        let mut lstm_b = Tensor::zeros(vec![1, 4 * h]);
        lstm_b.data_mut()[h..2 * h].fill(1.0);
        params.add("lstm.b", lstm_b);
        params.add("fc1.w", xavier(h, h, &mut rng));
        params.add("fc1.b", Tensor::zeros(vec![1, h]));
        params.add("fc2.w", xavier(h, h, &mut rng));
        params.add("fc2.b", Tensor::zeros(vec![1, h]));
        params.add("head.w", xavier(h, dims.actions, &mut rng));
        params.add("head.b", Tensor::zeros(vec![1, dims.actions]));
        DrqnNet { dims, params }
    }

    /// Wraps an existing parameter set, checking names and shapes.
    pub fn from_params(dims: DrqnDims, params: ParamSet) -> Result<Self, NeuralError> {
        let h = dims.hidden;
        let expect: [(&str, usize, usize); 9] = [
            ("lstm.wx", dims.input, 4 * h),
            ("lstm.wh", h, 4 * h),
            ("lstm.b", 1, 4 * h),
            ("fc1.w", h, h),
            ("fc1.b", 1, h),
            ("fc2.w", h, h),
            ("fc2.b", 1, h),
            ("head.w", h, dims.actions),
            ("head.b", 1, dims.actions),
        ];
        if params.len() != expect.len() {
            return Err(NeuralError::ShapeMismatch {
                ctx: "DrqnNet::from_params",
                lhs: vec![params.len()],
                rhs: vec![expect.len()],
            });
        }
        for (i, (name, r, c)) in expect.iter().enumerate() {
            if params.name_at(i) != *name
                || params.tensor_at(i).rows() != *r
                || params.tensor_at(i).cols() != *c
            {
                return Err(NeuralError::ShapeMismatch {
                    ctx: "DrqnNet::from_params",
                    lhs: vec![params.tensor_at(i).rows(), params.tensor_at(i).cols()],
                    rhs: vec![*r, *c],
                });
            }
        }
        Ok(DrqnNet { dims, params })
    }

    fn lstm_weights(&self) -> LstmWeights<'_> {
        LstmWeights {
            wx: self.params.get("lstm.wx"),
            wh: self.params.get("lstm.wh"),
            b: self.params.get("lstm.b"),
        }
    }

    /// Dense heads applied to a batch of hidden states (rows x hidden),
    /// producing (rows x actions).
    fn heads(&self, h: &Tensor) -> Vec<f64> {
        use crate::neural::{dense_forward, relu};
        let z1 = relu(&dense_forward(h, self.params.get("fc1.w"), self.params.get("fc1.b")).unwrap());
        let z2 = relu(&dense_forward(&z1, self.params.get("fc2.w"), self.params.get("fc2.b")).unwrap());
        dense_forward(&z2, self.params.get("head.w"), self.params.get("head.b"))
            .unwrap()
            .data()
            .to_vec()
    }
}

/// Q-values of one zero-padded history window (`window.len() == N * input`,
/// oldest entry first), unrolling the LSTM from zero state.
pub fn q_values(net: &DrqnNet, window: &[f64]) -> Vec<f64> {
    q_values_batch(net, window, 1)
}

/// Batched form of [`q_values`]: `windows` concatenates `count` windows.
/// Returns `count * actions` values, row per window.
pub fn q_values_batch(net: &DrqnNet, windows: &[f64], count: usize) -> Vec<f64> {
    let d = net.dims;
    assert_eq!(windows.len(), count * d.window * d.input);
    let weights = net.lstm_weights();
    let mut h = Tensor::zeros(vec![count, d.hidden]);
    let mut c = Tensor::zeros(vec![count, d.hidden]);
    let mut xt = Tensor::zeros(vec![count, d.input]);
    for t in 0..d.window {
        for r in 0..count {
            let src = &windows[r * d.window * d.input + t * d.input..][..d.input];
            xt.data_mut()[r * d.input..(r + 1) * d.input].copy_from_slice(src);
        }
        lstm_step(&xt, &mut h, &mut c, &weights).expect("window shapes are fixed");
    }
    net.heads(&h)
}

/// Recurrent inference state for acting: one hidden/cell row per user,
/// advanced one epoch at a time and reset only at simulation start.
#[derive(Debug, Clone)]
pub struct RecurrentActor {
    h: Tensor,
    c: Tensor,
    x: Tensor,
    rows: usize,
}

impl RecurrentActor {
    pub fn new(rows: usize, dims: DrqnDims) -> Self {
        RecurrentActor {
            h: Tensor::zeros(vec![rows, dims.hidden]),
            c: Tensor::zeros(vec![rows, dims.hidden]),
            x: Tensor::zeros(vec![rows, dims.input]),
            rows,
        }
    }

    pub fn reset(&mut self) {
        self.h.data_mut().fill(0.0);
        self.c.data_mut().fill(0.0);
    }

    /// Feeds this epoch's encoded states (one row per user) through the
    /// LSTM, advancing the persistent state, and returns the per-user
    /// Q-values (rows x actions).
    pub fn q_step(&mut self, net: &DrqnNet, encoded: &[f64]) -> Vec<f64> {
        assert_eq!(encoded.len(), self.rows * net.dims.input);
        self.x.data_mut().copy_from_slice(encoded);
        lstm_step(&self.x, &mut self.h, &mut self.c, &net.lstm_weights())
            .expect("actor shapes are fixed");
        net.heads(&self.h)
    }
}

/// Epsilon-greedy selection restricted to the feasible set: uniform over the
/// mask with probability epsilon, otherwise the highest-value feasible
/// action with ties broken by lowest index.
pub fn act_masked(q: &[f64], mask: ActionMask, epsilon: f64, rng: &mut impl Rng) -> Action {
    assert!(!mask.is_empty(), "action mask must not be empty");
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        let pick = rng.gen_range(0..mask.len());
        return mask.iter().nth(pick).expect("mask nonempty");
    }
    let mut best: Option<Action> = None;
    let mut best_q = f64::NEG_INFINITY;
    for a in mask.iter() {
        let v = q[a.index(mask_num_bs(&mask))];
        if v > best_q {
            best_q = v;
            best = Some(a);
        }
    }
    best.expect("mask nonempty")
}

fn mask_num_bs(mask: &ActionMask) -> usize {
    mask.num_actions() / 2 - 2
}

/// Full window-based acting: epsilon-greedy over the masked Q-values of a
/// history window.
pub fn act(
    net: &DrqnNet,
    window: &[f64],
    epsilon: f64,
    mask: ActionMask,
    rng: &mut impl Rng,
) -> Action {
    let q = q_values(net, window);
    act_masked(&q, mask, epsilon, rng)
}

/// Linear epsilon anneal from `epsilon_start` to `epsilon_end` over the
/// first `epsilon_decay_frac` of training, flat afterwards.
pub fn epsilon_at(epoch: u64, cfg: &SystemConfig) -> f64 {
    let horizon = (cfg.train_epochs as f64 * cfg.epsilon_decay_frac).max(1.0);
    let frac = (epoch as f64 / horizon).min(1.0);
    cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac
}

fn xavier(fan_in: usize, fan_out: usize, rng: &mut ChaCha12Rng) -> Tensor {
    let limit = math::sqrt(6.0 / (fan_in + fan_out) as f64);
    let data: Vec<f64> = (0..fan_in * fan_out)
        .map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * limit)
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("finite init")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::feasible_actions;
    use crate::mobility::LocationId;

    fn cfg() -> SystemConfig {
        SystemConfig::default()
    }

    fn idle_state(_cfg: &SystemConfig) -> LocalState {
        LocalState {
            mu_loc: LocationId(0),
            uav_loc: LocationId(0),
            queue_len: 0,
            assoc: 1,
            local_remaining_epochs: 0,
            uav_remaining_bits: 0.0,
            bs_tx_remaining_bits: 0.0,
            uav_tx_remaining_bits: 0.0,
        }
    }

    #[test]
    fn encode_dimension_matches_formula() {
        assert_eq!(encode_dim(4), 15);
        assert_eq!(encode_dim(1), 12);
    }

    #[test]
    fn idle_state_at_origin_encodes_to_mostly_zeros() {
        let cfg = cfg();
        let s = idle_state(&cfg);
        let mut out = vec![0.0; encode_dim(cfg.num_bs)];
        encode(&s, 0.0, &cfg, &mut out);
        // Positions are the first cell's center, association one-hot is 1.
        assert!((out[0] - 5.0 / 400.0).abs() < 1e-15);
        assert_eq!(out[5], 1.0);
        for v in &out[6..] {
            assert_eq!(*v, 0.0);
        }
        assert_eq!(out[4], 0.0);
    }

    #[test]
    fn queue_feature_clips_at_the_cap() {
        let cfg = cfg();
        let mut s = idle_state(&cfg);
        s.queue_len = cfg.queue_clip + 5;
        let mut out = vec![0.0; encode_dim(cfg.num_bs)];
        encode(&s, 0.0, &cfg, &mut out);
        assert_eq!(out[4], 1.0);
    }

    #[test]
    fn encode_is_injective_over_a_micro_grid() {
        // Distinct (location, association) pairs on a 2x2 grid map to
        // distinct feature vectors.
        let mut cfg = cfg();
        cfg.area_side = 20.0;
        cfg.cell_side = 10.0;
        cfg.num_bs = 1;
        cfg.bs_positions = vec![(10.0, 10.0)];
        let mut seen = alloc::collections::BTreeSet::new();
        for loc in 0..4u32 {
            for assoc in 1..=2u16 {
                let mut s = idle_state(&cfg);
                s.mu_loc = LocationId(loc);
                s.assoc = assoc;
                let mut out = vec![0.0; encode_dim(cfg.num_bs)];
                encode(&s, 0.0, &cfg, &mut out);
                let key: Vec<u64> = out.iter().map(|v| v.to_bits()).collect();
                assert!(seen.insert(key), "collision at loc {loc} assoc {assoc}");
            }
        }
        assert_eq!(seen.len(), 8);
    }

    #[test]
    fn q_values_output_dimension() {
        let cfg = cfg();
        let dims = DrqnDims::for_config(&cfg);
        assert_eq!(dims.actions, 12);
        let net = DrqnNet::new(dims, 1);
        let window = vec![0.1; dims.window * dims.input];
        assert_eq!(q_values(&net, &window).len(), 12);
    }

    #[test]
    fn q_values_is_a_pure_function_of_window_and_params() {
        let cfg = cfg();
        let dims = DrqnDims::for_config(&cfg);
        let net = DrqnNet::new(dims, 2);
        let window = vec![0.25; dims.window * dims.input];
        assert_eq!(q_values(&net, &window), q_values(&net, &window));
    }

    #[test]
    fn oldest_window_entry_still_affects_the_output() {
        let cfg = cfg();
        let dims = DrqnDims::for_config(&cfg);
        let net = DrqnNet::new(dims, 3);
        let mut window = vec![0.3; dims.window * dims.input];
        let base = q_values(&net, &window);
        window[0] = 0.9; // perturb only the oldest entry
        let changed = q_values(&net, &window);
        let diff: f64 = base.iter().zip(&changed).map(|(a, b)| (a - b).abs()).sum();
        assert!(diff > 1e-12, "LSTM must carry state across the window");
    }

    #[test]
    fn batched_q_values_match_single_windows() {
        let cfg = cfg();
        let dims = DrqnDims::for_config(&cfg);
        let net = DrqnNet::new(dims, 4);
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let w1: Vec<f64> = (0..dims.window * dims.input).map(|_| rng.gen()).collect();
        let w2: Vec<f64> = (0..dims.window * dims.input).map(|_| rng.gen()).collect();
        let mut both = w1.clone();
        both.extend_from_slice(&w2);
        let batched = q_values_batch(&net, &both, 2);
        let s1 = q_values(&net, &w1);
        let s2 = q_values(&net, &w2);
        for a in 0..dims.actions {
            assert!((batched[a] - s1[a]).abs() < 1e-12);
            assert!((batched[dims.actions + a] - s2[a]).abs() < 1e-12);
        }
    }

    #[test]
    fn act_epsilon_one_is_uniform_over_the_mask() {
        let cfg = cfg();
        let mut s = idle_state(&cfg);
        s.queue_len = 2;
        let mask = feasible_actions(&s, cfg.num_bs);
        let n = mask.len();
        assert_eq!(n, 12);
        let q = vec![0.0; 12];
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let draws = 120_000usize;
        let mut counts = vec![0usize; 12];
        for _ in 0..draws {
            let a = act_masked(&q, mask, 1.0, &mut rng);
            counts[a.index(cfg.num_bs)] += 1;
        }
        // Chi-square against uniform with 11 dof; 99.9% quantile ~ 31.3.
        let expect = draws as f64 / n as f64;
        let chi2: f64 = counts.iter().map(|&c| {
            let d = c as f64 - expect;
            d * d / expect
        }).sum();
        assert!(chi2 < 31.3, "chi2 {chi2}, counts {counts:?}");
    }

    #[test]
    fn act_epsilon_zero_single_action_ignores_q() {
        let cfg = cfg();
        let s = idle_state(&cfg);
        let mask = feasible_actions(&s, cfg.num_bs);
        assert_eq!(mask.len(), 1);
        let q = vec![100.0; 12];
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        assert_eq!(act_masked(&q, mask, 0.0, &mut rng), Action::IDLE);
    }

    #[test]
    fn infeasible_argmax_is_never_returned() {
        let cfg = cfg();
        let mut s = idle_state(&cfg);
        s.queue_len = 1;
        s.local_remaining_epochs = 3; // local actions masked out
        let mask = feasible_actions(&s, cfg.num_bs);
        let mut q = vec![0.0; 12];
        // Make an infeasible action the global argmax.
        q[Action { local: true, remote: 0 }.index(cfg.num_bs)] = 1e9;
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        for _ in 0..200 {
            let a = act_masked(&q, mask, 0.3, &mut rng);
            assert!(mask.contains(a));
        }
    }

    #[test]
    fn epsilon_schedule_anneals_linearly_then_flattens() {
        let mut cfg = cfg();
        cfg.train_epochs = 1000;
        cfg.epsilon_start = 1.0;
        cfg.epsilon_end = 0.1;
        cfg.epsilon_decay_frac = 0.5;
        assert_eq!(epsilon_at(0, &cfg), 1.0);
        assert!((epsilon_at(250, &cfg) - 0.55).abs() < 1e-12);
        assert!((epsilon_at(500, &cfg) - 0.1).abs() < 1e-12);
        assert!((epsilon_at(900, &cfg) - 0.1).abs() < 1e-12);
    }
}
