//! Double-DQN loss over sampled experience mini-batches and the offline
//! digital-twin training loop.
//!
//! The twin drives a full simulation with every user acting epsilon-greedily
//! on one shared network, appends one joint experience per epoch, and takes
//! one Adam step per epoch once the replay memory can fill a mini-batch.
//! Action selection for the bootstrap target uses the online network; the
//! value of that action comes from the lagged target network.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::config::{LossVariant, SystemConfig};
use crate::drqn::{
    act_masked, encode, encode_dim, epsilon_at, q_values_batch, DrqnDims, DrqnNet, Experience,
    HistoryWindow, RecurrentActor, ReplayMemory,
};
use crate::env::{feasible_actions, Action, ActionMask, StepError};
use crate::neural::{Adam, AdamHyper, Graph, NeuralError, NodeId, ParamSet};
use crate::sim::{derive_seed, Environment, Simulation};

/// One assembled mini-batch, rows ordered sample-major then user.
#[derive(Debug, Clone)]
pub struct LossBatch {
    pub num_samples: usize,
    pub num_mus: usize,
    /// Flattened current windows, `rows * window * input`.
    pub windows_cur: Vec<f64>,
    /// Flattened successor windows, same layout.
    pub windows_next: Vec<f64>,
    /// Canonical index of the action taken, per row.
    pub actions: Vec<usize>,
    pub utilities: Vec<f64>,
    /// Feasible actions at the successor state, per row.
    pub next_masks: Vec<ActionMask>,
}

impl LossBatch {
    pub fn rows(&self) -> usize {
        self.num_samples * self.num_mus
    }
}

/// Builds the mini-batch for the given sampled epochs by rebuilding each
/// user's window from the replay ring.
pub fn assemble_batch(
    replay: &ReplayMemory,
    epochs: &[u64],
    cfg: &SystemConfig,
    dims: DrqnDims,
) -> LossBatch {
    let k = cfg.num_mus;
    let rows = epochs.len() * k;
    let wlen = dims.window * dims.input;
    let mut batch = LossBatch {
        num_samples: epochs.len(),
        num_mus: k,
        windows_cur: vec![0.0; rows * wlen],
        windows_next: vec![0.0; rows * wlen],
        actions: Vec::with_capacity(rows),
        utilities: Vec::with_capacity(rows),
        next_masks: Vec::with_capacity(rows),
    };
    for (i, &e) in epochs.iter().enumerate() {
        let exp = replay.get(e);
        for mu in 0..k {
            let row = i * k + mu;
            let enc = |s: &crate::env::LocalState, o: f64, out: &mut [f64]| encode(s, o, cfg, out);
            replay.write_window(
                e,
                mu,
                dims.window,
                dims.input,
                false,
                enc,
                &mut batch.windows_cur[row * wlen..(row + 1) * wlen],
            );
            replay.write_window(
                e,
                mu,
                dims.window,
                dims.input,
                true,
                enc,
                &mut batch.windows_next[row * wlen..(row + 1) * wlen],
            );
            batch.actions.push(exp.actions[mu].index(cfg.num_bs));
            batch.utilities.push(exp.utilities[mu]);
            batch.next_masks.push(feasible_actions(&exp.next_states[mu].0, cfg.num_bs));
        }
    }
    batch
}

/// Double-DQN loss and gradients for one mini-batch.
///
/// Per row, the bootstrap target is
/// `(1-gamma)*u + gamma * Q_target(n', argmax_feasible Q_online(n', .))`;
/// gradients flow only through `Q_online(n, a)`. With the square-of-sum
/// variant, per-user TD errors of one sample are summed before squaring;
/// the sum-of-squares variant squares them individually. Gradients are
/// written into the online network's gradient buffers (overwriting them);
/// the scalar loss is returned.
pub fn double_dqn_loss(
    batch: &LossBatch,
    online: &mut DrqnNet,
    target: &DrqnNet,
    gamma: f64,
    variant: LossVariant,
) -> Result<f64, NeuralError> {
    let dims = online.dims;
    let rows = batch.rows();
    let a_dim = dims.actions;

    // Bootstrap targets, no gradients anywhere in this block.
    let q_next_online = q_values_batch(online, &batch.windows_next, rows);
    let q_next_target = q_values_batch(target, &batch.windows_next, rows);
    let mut y = vec![0.0; rows];
    for r in 0..rows {
        let qrow = &q_next_online[r * a_dim..(r + 1) * a_dim];
        let mut best = usize::MAX;
        let mut best_q = f64::NEG_INFINITY;
        for i in 0..a_dim {
            if batch.next_masks[r].contains_index(i) && qrow[i] > best_q {
                best_q = qrow[i];
                best = i;
            }
        }
        debug_assert!(best != usize::MAX, "empty feasible set in batch row {r}");
        y[r] = (1.0 - gamma) * batch.utilities[r] + gamma * q_next_target[r * a_dim + best];
    }

    // Online pass on the tape.
    let mut g = Graph::new();
    let p = &online.params;
    let pn: Vec<NodeId> = (0..p.len()).map(|i| g.param(p.tensor_at(i))).collect::<Result<_, _>>()?;
    let (wx, wh, b) = (pn[0], pn[1], pn[2]);
    let zeros_h = vec![0.0; rows * dims.hidden];
    let mut h = g.input(rows, dims.hidden, &zeros_h)?;
    let mut c = g.input(rows, dims.hidden, &zeros_h)?;
    let wlen = dims.window * dims.input;
    let mut xt = vec![0.0; rows * dims.input];
    for t in 0..dims.window {
        for r in 0..rows {
            xt[r * dims.input..(r + 1) * dims.input]
                .copy_from_slice(&batch.windows_cur[r * wlen + t * dims.input..][..dims.input]);
        }
        let x = g.input(rows, dims.input, &xt)?;
        let gates = g.affine2(x, wx, h, wh, b)?;
        let packed = g.lstm_cell(gates, c)?;
        h = g.slice_cols(packed, 0, dims.hidden)?;
        c = g.slice_cols(packed, dims.hidden, dims.hidden)?;
    }
    let z1 = g.affine(h, pn[3], pn[4])?;
    let z1 = g.relu(z1)?;
    let z2 = g.affine(z1, pn[5], pn[6])?;
    let z2 = g.relu(z2)?;
    let q = g.affine(z2, pn[7], pn[8])?;

    let mut onehot = vec![0.0; rows * a_dim];
    for r in 0..rows {
        onehot[r * a_dim + batch.actions[r]] = 1.0;
    }
    let sel = g.input(rows, a_dim, &onehot)?;
    let picked = g.mul(q, sel)?;
    let q_sa = g.row_sum(picked)?;
    let y_node = g.input(rows, 1, &y)?;
    let err = g.sub(q_sa, y_node)?;
    let loss = match variant {
        LossVariant::SquareOfSum => {
            let grouped = g.reshape(err, batch.num_samples, batch.num_mus)?;
            let summed = g.row_sum(grouped)?;
            let squared = g.mul(summed, summed)?;
            g.mean_all(squared)?
        }
        LossVariant::SumOfSquares => {
            let squared = g.mul(err, err)?;
            let grouped = g.reshape(squared, batch.num_samples, batch.num_mus)?;
            let summed = g.row_sum(grouped)?;
            g.mean_all(summed)?
        }
    };
    g.backward(loss)?;
    let loss_value = g.scalar(loss);
    for (i, &node) in pn.iter().enumerate() {
        online
            .params
            .grad_at_mut(i)
            .data_mut()
            .copy_from_slice(g.grad_of(node));
    }
    Ok(loss_value)
}

/// One line of the training log, emitted per optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogRow {
    pub step: u64,
    pub loss: f64,
    pub epsilon: f64,
    /// Mean per-user utility over the trailing window of epochs.
    pub avg_utility: f64,
}

/// Everything a finished (or resumed-then-finished) training run produces.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub net: DrqnNet,
    pub target: ParamSet,
    pub adam_m: Vec<Vec<f64>>,
    pub adam_v: Vec<Vec<f64>>,
    pub adam_steps: u64,
    pub epochs_trained: u64,
    pub opt_steps: u64,
    pub final_loss: f64,
    pub log: Vec<TrainLogRow>,
}

/// State needed to continue a previous training run.
#[derive(Debug, Clone)]
pub struct ResumeState {
    pub params: ParamSet,
    pub target: ParamSet,
    pub adam_m: Vec<Vec<f64>>,
    pub adam_v: Vec<Vec<f64>>,
    pub adam_steps: u64,
    pub epochs_trained: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    /// The loss left the finite range; the boxed output carries the last
    /// consistent parameters for a diagnostic checkpoint.
    #[error("training diverged at optimizer step {step}")]
    Diverged { step: u64, diagnostic: Box<TrainOutput> },
    #[error("environment step failed: {0}")]
    Step(#[from] StepError),
    #[error("network error: {0}")]
    Neural(NeuralError),
}

mod label {
    pub const NET_INIT: u64 = 20;
    pub const ACT: u64 = 21;
    pub const SAMPLE: u64 = 22;
    pub const TWIN_ENV: u64 = 23;
}

/// Offline training on the digital twin of the configured system.
pub fn twin_train(
    cfg: &SystemConfig,
    resume: Option<ResumeState>,
    progress: Option<&mut dyn FnMut(&TrainLogRow)>,
) -> Result<TrainOutput, TrainError> {
    let mut env = Simulation::new(cfg, derive_seed(cfg.rng_seed, label::TWIN_ENV));
    twin_train_on(cfg, &mut env, resume, progress)
}

/// Training loop over any environment (the full simulator or a micro
/// instance). One experience is appended per epoch; one optimizer step runs
/// per epoch once the memory holds a mini-batch; the target network is
/// refreshed every `target_update_period` optimizer steps.
pub fn twin_train_on(
    cfg: &SystemConfig,
    env: &mut dyn Environment,
    resume: Option<ResumeState>,
    mut progress: Option<&mut dyn FnMut(&TrainLogRow)>,
) -> Result<TrainOutput, TrainError> {
    let dims = DrqnDims::for_config(cfg);
    debug_assert_eq!(dims.input, encode_dim(env.num_bs()));
    let k = env.num_mus();

    let (mut net, target_params, mut adam, start_epoch, mut opt_steps) = match resume {
        Some(r) => {
            let net = DrqnNet::from_params(dims, r.params).map_err(TrainError::Neural)?;
            let mut adam = Adam::new(&net.params, AdamHyper::with_lr(cfg.learning_rate));
            adam.restore(r.adam_m, r.adam_v, r.adam_steps);
            (net, r.target, adam, r.epochs_trained, r.adam_steps)
        }
        None => {
            let net = DrqnNet::new(dims, derive_seed(cfg.rng_seed, label::NET_INIT));
            let target = net.params.clone();
            let adam = Adam::new(&net.params, AdamHyper::with_lr(cfg.learning_rate));
            (net, target, adam, 0, 0)
        }
    };
    let mut target = DrqnNet::from_params(dims, target_params).map_err(TrainError::Neural)?;

    // Fresh exploration and sampling streams; a resumed run gets streams
    // keyed by its starting epoch so it does not replay old draws.
    let mut rng_act = ChaCha12Rng::seed_from_u64(derive_seed(
        derive_seed(cfg.rng_seed, label::ACT),
        start_epoch,
    ));
    let mut rng_sample = ChaCha12Rng::seed_from_u64(derive_seed(
        derive_seed(cfg.rng_seed, label::SAMPLE),
        start_epoch,
    ));

    let mut replay = ReplayMemory::new(cfg.replay_capacity);
    let mut pool: Vec<HistoryWindow> = (0..k)
        .map(|_| HistoryWindow::new(cfg.history_len, dims.input))
        .collect();
    let mut actor = RecurrentActor::new(k, dims);
    let mut log: Vec<TrainLogRow> = Vec::new();
    let mut final_loss = f64::NAN;

    // Trailing window of epoch-mean utilities for the log.
    const UTIL_WINDOW: usize = 200;
    let mut util_ring: Vec<f64> = Vec::with_capacity(UTIL_WINDOW);
    let mut util_pos = 0usize;

    let mut encoded = vec![0.0; k * dims.input];
    let mut actions: Vec<Action> = vec![Action::IDLE; k];

    let snapshot = |net: &DrqnNet, target: &DrqnNet, adam: &Adam, epochs, steps, loss, log: &[TrainLogRow]| {
        let (m, v) = adam.moments();
        TrainOutput {
            net: net.clone(),
            target: target.params.clone(),
            adam_m: m.to_vec(),
            adam_v: v.to_vec(),
            adam_steps: adam.steps_taken(),
            epochs_trained: epochs,
            opt_steps: steps,
            final_loss: loss,
            log: log.to_vec(),
        }
    };

    for epoch in start_epoch..cfg.train_epochs as u64 {
        let eps = epsilon_at(epoch, cfg);

        // Observe, remember, and act for every user on the shared network.
        let mut states = Vec::with_capacity(k);
        for mu in 0..k {
            let s = env.local_state(mu).clone();
            let o = env.observation(mu);
            encode(&s, o, cfg, &mut encoded[mu * dims.input..(mu + 1) * dims.input]);
            states.push((s, o));
        }
        for mu in 0..k {
            pool[mu].push(&encoded[mu * dims.input..(mu + 1) * dims.input]);
        }
        let q = actor.q_step(&net, &encoded);
        for mu in 0..k {
            let mask = env.feasible(mu);
            actions[mu] = act_masked(&q[mu * dims.actions..(mu + 1) * dims.actions], mask, eps, &mut rng_act);
        }

        let utilities = env.step(&actions)?;
        let mean_util = utilities.iter().sum::<f64>() / k as f64;
        if util_ring.len() < UTIL_WINDOW {
            util_ring.push(mean_util);
        } else {
            util_ring[util_pos] = mean_util;
            util_pos = (util_pos + 1) % UTIL_WINDOW;
        }

        let next_states: Vec<_> = (0..k)
            .map(|mu| (env.local_state(mu).clone(), env.observation(mu)))
            .collect();
        replay.push(Experience {
            states,
            actions: actions.clone(),
            utilities: utilities.clone(),
            next_states,
        });

        // One optimizer step per epoch once a mini-batch is available.
        if replay.len() >= cfg.minibatch {
            if let Some(epochs) = replay.sample_epochs(cfg.minibatch, cfg.history_len, &mut rng_sample)
            {
                let batch = assemble_batch(&replay, &epochs, cfg, dims);
                let loss = match double_dqn_loss(&batch, &mut net, &target, cfg.discount, cfg.loss_variant)
                {
                    Ok(l) if l.is_finite() => l,
                    Ok(_) | Err(NeuralError::NonFinite { .. }) => {
                        return Err(TrainError::Diverged {
                            step: opt_steps,
                            diagnostic: Box::new(snapshot(
                                &net, &target, &adam, epoch, opt_steps, final_loss, &log,
                            )),
                        });
                    }
                    Err(e) => return Err(TrainError::Neural(e)),
                };
                adam.step(&mut net.params);
                opt_steps += 1;
                final_loss = loss;
                if opt_steps % cfg.target_update_period as u64 == 0 {
                    target.params = net.params.clone();
                }
                let row = TrainLogRow {
                    step: opt_steps,
                    loss,
                    epsilon: eps,
                    avg_utility: util_ring.iter().sum::<f64>() / util_ring.len() as f64,
                };
                if let Some(cb) = progress.as_deref_mut() {
                    cb(&row);
                }
                log.push(row);
            }
        }
    }

    Ok(snapshot(&net, &target, &adam, cfg.train_epochs as u64, opt_steps, final_loss, &log))
}
