//! The four baseline scheduling policies. All are stationary, memoryless
//! functions of the user's own state (plus current link rates where the
//! scheme compares channels), and always emit feasible actions.

use crate::config::SystemConfig;
use crate::env::{feasible_actions, Action, LocalState};
use crate::radio::LinkGain;
use crate::sim::LinkRates;

/// Scheme selector matching the CLI `--scheme` flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Local,
    Cloud,
    Uav,
    Greedy,
    Drqn,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Local => "local",
            Scheme::Cloud => "cloud",
            Scheme::Uav => "uav",
            Scheme::Greedy => "greedy",
            Scheme::Drqn => "drqn",
        }
    }

    pub fn parse(s: &str) -> Option<Scheme> {
        match s {
            "local" => Some(Scheme::Local),
            "cloud" => Some(Scheme::Cloud),
            "uav" => Some(Scheme::Uav),
            "greedy" => Some(Scheme::Greedy),
            "drqn" => Some(Scheme::Drqn),
            _ => None,
        }
    }
}

/// Local computation: every queued task runs on the local CPU as soon as it
/// is free.
pub fn local_policy(s: &LocalState) -> Action {
    if s.queue_len > 0 && s.local_remaining_epochs == 0 {
        Action { local: true, remote: 0 }
    } else {
        Action::IDLE
    }
}

/// Cloud execution: every queued task is offloaded via the base station with
/// the best channel gain; ties break to the lowest index.
pub fn cloud_policy(s: &LocalState, bs_gains: &[LinkGain]) -> Action {
    if s.queue_len > 0 && s.remote_idle() {
        let mut best = 0usize;
        for (i, g) in bs_gains.iter().enumerate() {
            if g.0 > bs_gains[best].0 {
                best = i;
            }
        }
        Action { local: false, remote: best as u16 + 1 }
    } else {
        Action::IDLE
    }
}

/// UAV execution: every queued task goes to the UAV's virtual machines.
pub fn uav_policy(s: &LocalState, num_bs: usize) -> Action {
    if s.queue_len > 0 && s.remote_idle() {
        Action { local: false, remote: num_bs as u16 + 1 }
    } else {
        Action::IDLE
    }
}

/// Greedy processing: engages every free resource each epoch, up to the
/// queue length. The local CPU comes first; the remote target minimizes the
/// transfer time of one task including the handover penalty for any target
/// other than the incumbent association, so a marginally faster link never
/// forces a handover. Ties prefer the incumbent, then the UAV, then the
/// lowest base-station index.
pub fn greedy_policy(s: &LocalState, rates: &LinkRates, cfg: &SystemConfig) -> Action {
    let mut remaining = s.queue_len;
    let local = remaining > 0 && s.local_remaining_epochs == 0;
    if local {
        remaining -= 1;
    }
    let mut remote = 0u16;
    if remaining > 0 && s.remote_idle() {
        let uav_target = cfg.num_bs as u16 + 1;
        let score = |target: u16, r: f64| -> f64 {
            let handover = if target != s.assoc { cfg.handover_seconds } else { 0.0 };
            cfg.task_bits / r + handover
        };
        let mut best_target = uav_target;
        let mut best_score = score(uav_target, rates.uav);
        for (i, &r) in rates.bs.iter().enumerate() {
            let target = i as u16 + 1;
            let c = score(target, r);
            // Strict improvement required, except the incumbent wins ties.
            if c < best_score || (c == best_score && target == s.assoc && best_target != s.assoc) {
                best_score = c;
                best_target = target;
            }
        }
        remote = best_target;
    }
    Action { local, remote }
}

/// Dispatches one of the four baselines.
pub fn baseline_action(
    scheme: Scheme,
    s: &LocalState,
    rates: &LinkRates,
    bs_gains: &[LinkGain],
    cfg: &SystemConfig,
) -> Action {
    let a = match scheme {
        Scheme::Local => local_policy(s),
        Scheme::Cloud => cloud_policy(s, bs_gains),
        Scheme::Uav => uav_policy(s, cfg.num_bs),
        Scheme::Greedy => greedy_policy(s, rates, cfg),
        Scheme::Drqn => panic!("drqn is not a baseline"),
    };
    debug_assert!(feasible_actions(s, cfg.num_bs).contains(a));
    a
}
