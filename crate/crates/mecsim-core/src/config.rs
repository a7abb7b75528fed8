//! System configuration: experiment parameters, design-decision knobs, and
//! the spatial grid, with validation and a flat `key = value` text format.
//!
//! Every output file of the companion CLI embeds the resolved configuration
//! produced by [`SystemConfig::to_text`], and [`SystemConfig::from_text`]
//! accepts that same text, so configs round-trip exactly.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::math;

/// How the squared sum over users in the training loss is formed.
///
/// `SquareOfSum` squares the sum of per-user TD errors; `SumOfSquares` sums
/// the squared per-user TD errors. The former is the default, the latter is
/// the conventional ablation variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossVariant {
    SquareOfSum,
    SumOfSquares,
}

impl LossVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossVariant::SquareOfSum => "square_of_sum",
            LossVariant::SumOfSquares => "sum_of_squares",
        }
    }
}

/// Complete parameter set for one simulated system.
///
/// Immutable after construction; safe to share read-only across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    // Topology and geometry.
    pub num_bs: usize,
    pub bs_positions: Vec<(f64, f64)>,
    pub area_side: f64,
    pub cell_side: f64,
    pub uav_altitude_m: f64,
    pub epoch_seconds: f64,

    // Users and tasks.
    pub num_mus: usize,
    pub arrival_prob: f64,
    pub task_bits: f64,
    pub cycles_per_bit: f64,
    pub local_cpu_hz: f64,
    pub switched_capacitance: f64,

    // Radio.
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub tx_power_w: f64,
    pub handover_seconds: f64,
    pub terr_ref_gain: f64,
    pub terr_pathloss_exp: f64,
    pub los_ref_gain: f64,

    // UAV computing.
    pub vm_base_rate_bps: f64,
    pub vm_degradation: f64,

    // Objective.
    pub utility_weight: f64,
    pub discount: f64,

    // Learning data structures.
    pub history_len: usize,
    pub replay_capacity: usize,
    pub minibatch: usize,

    // Mobility.
    pub mu_mean_speed_mps: f64,
    pub gauss_markov_memory: f64,
    pub velocity_noise_std_mps: f64,
    pub uav_speed_mps: f64,
    pub uav_turn_accel_std: f64,
    pub uav_turn_dwell_mean_s: f64,

    // Training schedule.
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_frac: f64,
    pub target_update_period: usize,
    pub train_epochs: usize,
    pub loss_variant: LossVariant,
    pub eval_epsilon: f64,
    pub queue_clip: u32,

    pub rng_seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            num_bs: 4,
            // Four base stations at the centers of the four quadrants of the
            // 400 m square.
            bs_positions: alloc::vec![(100.0, 100.0), (300.0, 100.0), (100.0, 300.0), (300.0, 300.0)],
            area_side: 400.0,
            cell_side: 10.0,
            uav_altitude_m: 100.0,
            epoch_seconds: 1e-2,
            num_mus: 12,
            arrival_prob: 0.5,
            task_bits: 5e5,
            cycles_per_bit: 1300.0,
            local_cpu_hz: 2e9,
            switched_capacitance: 2.5e-28,
            bandwidth_hz: 1e6,
            noise_psd_dbm_hz: -174.0,
            tx_power_w: 3.0,
            handover_seconds: 1e-3,
            terr_ref_gain: 1e-6,
            terr_pathloss_exp: 3.5,
            los_ref_gain: 1e-2,
            vm_base_rate_bps: 2e7,
            vm_degradation: 0.1,
            utility_weight: 3.0,
            discount: 0.99,
            history_len: 50,
            replay_capacity: 5000,
            minibatch: 200,
            mu_mean_speed_mps: 1.5,
            gauss_markov_memory: 0.85,
            velocity_noise_std_mps: 0.5,
            uav_speed_mps: 10.0,
            uav_turn_accel_std: 2.0,
            uav_turn_dwell_mean_s: 5.0,
            learning_rate: 1e-3,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_frac: 0.5,
            target_update_period: 100,
            train_epochs: 5000,
            loss_variant: LossVariant::SquareOfSum,
            eval_epsilon: 0.01,
            queue_clip: 50,
            rng_seed: 0x5eed,
        }
    }
}

/// Configuration loading or validation failure.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("config validation error: {0}")]
    Invalid(String),
}

impl SystemConfig {
    /// Number of grid cells per side.
    pub fn cells_per_side(&self) -> u32 {
        math::round(self.area_side / self.cell_side) as u32
    }

    /// Total number of grid locations |L|.
    pub fn num_locations(&self) -> u32 {
        let n = self.cells_per_side();
        n * n
    }

    /// Noise power spectral density in W/Hz.
    pub fn noise_psd_w_hz(&self) -> f64 {
        math::powf(10.0, (self.noise_psd_dbm_hz - 30.0) / 10.0)
    }

    /// Number of distinct scheduling actions, 2 * (B + 2).
    pub fn num_actions(&self) -> usize {
        2 * (self.num_bs + 2)
    }

    /// Checks every invariant, returning the first violated one.
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn err(msg: String) -> Result<(), ConfigError> {
            Err(ConfigError::Invalid(msg))
        }
        if !(self.epoch_seconds > 0.0) {
            return err("epoch_seconds must be > 0".into());
        }
        if !(self.task_bits > 0.0) {
            return err("task_bits must be > 0".into());
        }
        if !(self.cycles_per_bit >= 1.0) {
            return err("cycles_per_bit must be >= 1".into());
        }
        if !(self.local_cpu_hz > 0.0) {
            return err("local_cpu_hz must be > 0".into());
        }
        if !(0.0..=1.0).contains(&self.arrival_prob) {
            return err("arrival_prob out of [0,1]".into());
        }
        if !(0.0..1.0).contains(&self.discount) {
            return err("discount out of [0,1)".into());
        }
        if !(self.vm_degradation >= 0.0) {
            return err("vm_degradation must be >= 0".into());
        }
        if self.history_len < 1 {
            return err("history_len must be >= 1".into());
        }
        if self.minibatch > self.replay_capacity {
            return err("minibatch must be <= replay_capacity".into());
        }
        if self.minibatch == 0 {
            return err("minibatch must be >= 1".into());
        }
        if self.num_bs == 0 || self.num_bs != self.bs_positions.len() {
            return err(format!(
                "num_bs ({}) must be >= 1 and match bs_positions ({} entries)",
                self.num_bs,
                self.bs_positions.len()
            ));
        }
        if !(self.area_side > 0.0) || !(self.cell_side > 0.0) {
            return err("area_side and cell_side must be > 0".into());
        }
        // The grid must tile the area exactly.
        let ratio = self.area_side / self.cell_side;
        if (ratio - math::round(ratio)).abs() > 1e-9 || ratio < 1.0 {
            return err(format!(
                "area_side ({}) must be an integer multiple of cell_side ({})",
                self.area_side, self.cell_side
            ));
        }
        for (i, &(x, y)) in self.bs_positions.iter().enumerate() {
            if !(0.0..=self.area_side).contains(&x) || !(0.0..=self.area_side).contains(&y) {
                return err(format!("bs_positions[{i}] = ({x}, {y}) outside the area square"));
            }
        }
        for (name, v) in [
            ("uav_altitude_m", self.uav_altitude_m),
            ("bandwidth_hz", self.bandwidth_hz),
            ("tx_power_w", self.tx_power_w),
            ("vm_base_rate_bps", self.vm_base_rate_bps),
            ("terr_ref_gain", self.terr_ref_gain),
            ("los_ref_gain", self.los_ref_gain),
            ("switched_capacitance", self.switched_capacitance),
        ] {
            if !(v > 0.0) {
                return err(format!("{name} must be > 0"));
            }
        }
        for (name, v) in [
            ("handover_seconds", self.handover_seconds),
            ("utility_weight", self.utility_weight),
            ("mu_mean_speed_mps", self.mu_mean_speed_mps),
            ("velocity_noise_std_mps", self.velocity_noise_std_mps),
            ("uav_turn_accel_std", self.uav_turn_accel_std),
            ("learning_rate", self.learning_rate),
        ] {
            if !(v >= 0.0) {
                return err(format!("{name} must be >= 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.gauss_markov_memory) {
            return err("gauss_markov_memory out of [0,1]".into());
        }
        if !(self.uav_speed_mps > 0.0) || !(self.uav_turn_dwell_mean_s > 0.0) {
            return err("uav_speed_mps and uav_turn_dwell_mean_s must be > 0".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon_start)
            || !(0.0..=1.0).contains(&self.epsilon_end)
            || !(0.0..=1.0).contains(&self.epsilon_decay_frac)
            || !(0.0..=1.0).contains(&self.eval_epsilon)
        {
            return err("epsilon parameters out of [0,1]".into());
        }
        if self.num_mus == 0 {
            return err("num_mus must be >= 1".into());
        }
        if self.target_update_period == 0 {
            return err("target_update_period must be >= 1".into());
        }
        if self.queue_clip == 0 {
            return err("queue_clip must be >= 1".into());
        }
        Ok(())
    }

    /// Parses the flat `key = value` format and applies defaults for any
    /// omitted key. The result is validated.
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = SystemConfig::default();
        let mut saw_num_bs = false;
        let mut saw_positions = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: line_no,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let perr = |msg: String| ConfigError::Parse { line: line_no, msg };
            macro_rules! set {
                ($field:ident, $ty:ty) => {
                    cfg.$field = value
                        .parse::<$ty>()
                        .map_err(|e| perr(format!("bad value for {}: {e}", key)))?
                };
            }
            match key {
                "num_bs" => {
                    set!(num_bs, usize);
                    saw_num_bs = true;
                }
                "bs_positions" => {
                    cfg.bs_positions = parse_positions(value)
                        .map_err(|msg| perr(format!("bad bs_positions: {msg}")))?;
                    saw_positions = true;
                }
                "area_side" => set!(area_side, f64),
                "cell_side" => set!(cell_side, f64),
                "uav_altitude_m" => set!(uav_altitude_m, f64),
                "epoch_seconds" => set!(epoch_seconds, f64),
                "num_mus" => set!(num_mus, usize),
                "arrival_prob" => set!(arrival_prob, f64),
                "task_bits" => set!(task_bits, f64),
                "cycles_per_bit" => set!(cycles_per_bit, f64),
                "local_cpu_hz" => set!(local_cpu_hz, f64),
                "switched_capacitance" => set!(switched_capacitance, f64),
                "bandwidth_hz" => set!(bandwidth_hz, f64),
                "noise_psd_dbm_hz" => set!(noise_psd_dbm_hz, f64),
                "tx_power_w" => set!(tx_power_w, f64),
                "handover_seconds" => set!(handover_seconds, f64),
                "terr_ref_gain" => set!(terr_ref_gain, f64),
                "terr_pathloss_exp" => set!(terr_pathloss_exp, f64),
                "los_ref_gain" => set!(los_ref_gain, f64),
                "vm_base_rate_bps" => set!(vm_base_rate_bps, f64),
                "vm_degradation" => set!(vm_degradation, f64),
                "utility_weight" => set!(utility_weight, f64),
                "discount" => set!(discount, f64),
                "history_len" => set!(history_len, usize),
                "replay_capacity" => set!(replay_capacity, usize),
                "minibatch" => set!(minibatch, usize),
                "mu_mean_speed_mps" => set!(mu_mean_speed_mps, f64),
                "gauss_markov_memory" => set!(gauss_markov_memory, f64),
                "velocity_noise_std_mps" => set!(velocity_noise_std_mps, f64),
                "uav_speed_mps" => set!(uav_speed_mps, f64),
                "uav_turn_accel_std" => set!(uav_turn_accel_std, f64),
                "uav_turn_dwell_mean_s" => set!(uav_turn_dwell_mean_s, f64),
                "learning_rate" => set!(learning_rate, f64),
                "epsilon_start" => set!(epsilon_start, f64),
                "epsilon_end" => set!(epsilon_end, f64),
                "epsilon_decay_frac" => set!(epsilon_decay_frac, f64),
                "target_update_period" => set!(target_update_period, usize),
                "train_epochs" => set!(train_epochs, usize),
                "loss_variant" => {
                    cfg.loss_variant = match value {
                        "square_of_sum" => LossVariant::SquareOfSum,
                        "sum_of_squares" => LossVariant::SumOfSquares,
                        other => {
                            return Err(perr(format!(
                                "loss_variant must be square_of_sum or sum_of_squares, got `{other}`"
                            )))
                        }
                    }
                }
                "eval_epsilon" => set!(eval_epsilon, f64),
                "queue_clip" => set!(queue_clip, u32),
                "rng_seed" => set!(rng_seed, u64),
                other => {
                    return Err(perr(format!("unknown key `{other}`")));
                }
            }
        }
        // A custom BS count without explicit coordinates gets an evenly
        // spaced default layout.
        if saw_num_bs && !saw_positions && cfg.num_bs != cfg.bs_positions.len() {
            cfg.bs_positions = default_bs_layout(cfg.num_bs, cfg.area_side);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text form: one `key = value` per line in a fixed order.
    ///
    /// `from_text(to_text(cfg)) == cfg` for every valid config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("num_bs", self.num_bs.to_string());
        kv("bs_positions", format_positions(&self.bs_positions));
        kv("area_side", self.area_side.to_string());
        kv("cell_side", self.cell_side.to_string());
        kv("uav_altitude_m", self.uav_altitude_m.to_string());
        kv("epoch_seconds", self.epoch_seconds.to_string());
        kv("num_mus", self.num_mus.to_string());
        kv("arrival_prob", self.arrival_prob.to_string());
        kv("task_bits", self.task_bits.to_string());
        kv("cycles_per_bit", self.cycles_per_bit.to_string());
        kv("local_cpu_hz", self.local_cpu_hz.to_string());
        kv("switched_capacitance", self.switched_capacitance.to_string());
        kv("bandwidth_hz", self.bandwidth_hz.to_string());
        kv("noise_psd_dbm_hz", self.noise_psd_dbm_hz.to_string());
        kv("tx_power_w", self.tx_power_w.to_string());
        kv("handover_seconds", self.handover_seconds.to_string());
        kv("terr_ref_gain", self.terr_ref_gain.to_string());
        kv("terr_pathloss_exp", self.terr_pathloss_exp.to_string());
        kv("los_ref_gain", self.los_ref_gain.to_string());
        kv("vm_base_rate_bps", self.vm_base_rate_bps.to_string());
        kv("vm_degradation", self.vm_degradation.to_string());
        kv("utility_weight", self.utility_weight.to_string());
        kv("discount", self.discount.to_string());
        kv("history_len", self.history_len.to_string());
        kv("replay_capacity", self.replay_capacity.to_string());
        kv("minibatch", self.minibatch.to_string());
        kv("mu_mean_speed_mps", self.mu_mean_speed_mps.to_string());
        kv("gauss_markov_memory", self.gauss_markov_memory.to_string());
        kv("velocity_noise_std_mps", self.velocity_noise_std_mps.to_string());
        kv("uav_speed_mps", self.uav_speed_mps.to_string());
        kv("uav_turn_accel_std", self.uav_turn_accel_std.to_string());
        kv("uav_turn_dwell_mean_s", self.uav_turn_dwell_mean_s.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv("epsilon_start", self.epsilon_start.to_string());
        kv("epsilon_end", self.epsilon_end.to_string());
        kv("epsilon_decay_frac", self.epsilon_decay_frac.to_string());
        kv("target_update_period", self.target_update_period.to_string());
        kv("train_epochs", self.train_epochs.to_string());
        kv("loss_variant", self.loss_variant.as_str().to_string());
        kv("eval_epsilon", self.eval_epsilon.to_string());
        kv("queue_clip", self.queue_clip.to_string());
        kv("rng_seed", self.rng_seed.to_string());
        out
    }
}

/// Number of epochs a local task occupies the CPU:
/// ceil(task_bits * cycles_per_bit / (local_cpu_hz * epoch_seconds)).
pub fn local_epochs_needed(cfg: &SystemConfig) -> u32 {
    let cycles = cfg.task_bits * cfg.cycles_per_bit;
    let per_epoch = cfg.local_cpu_hz * cfg.epoch_seconds;
    math::ceil(cycles / per_epoch) as u32
}

/// Evenly spread `n` base stations over the area on a near-square lattice.
fn default_bs_layout(n: usize, area: f64) -> Vec<(f64, f64)> {
    let cols = math::ceil(math::sqrt(n as f64)) as usize;
    let rows = n.div_ceil(cols);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let r = i / cols;
        let c = i % cols;
        let x = area * (c as f64 + 0.5) / cols as f64;
        let y = area * (r as f64 + 0.5) / rows as f64;
        out.push((x, y));
    }
    out
}

/// Positions are `x,y` pairs separated by semicolons:
/// `100,100; 300,100; 100,300; 300,300`.
fn parse_positions(value: &str) -> Result<Vec<(f64, f64)>, String> {
    let mut out = Vec::new();
    for part in value.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (x, y) = part
            .split_once(',')
            .ok_or_else(|| format!("expected `x,y`, got `{part}`"))?;
        let x: f64 = x.trim().parse().map_err(|e| format!("bad x `{x}`: {e}"))?;
        let y: f64 = y.trim().parse().map_err(|e| format!("bad y `{y}`: {e}"))?;
        out.push((x, y));
    }
    if out.is_empty() {
        return Err("no positions given".into());
    }
    Ok(out)
}

fn format_positions(ps: &[(f64, f64)]) -> String {
    let mut s = String::new();
    for (i, (x, y)) in ps.iter().enumerate() {
        if i > 0 {
            s.push_str("; ");
        }
        s.push_str(&format!("{x},{y}"));
    }
    s
}
