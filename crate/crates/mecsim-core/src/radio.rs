//! Channel power gains for user-to-BS and user-to-UAV links and the
//! achievable uplink data rates.
//!
//! Gains are epoch-average values determined purely by distance: a power-law
//! model for terrestrial links and a free-space line-of-sight model for the
//! air link. Distances are measured between cell centers so every location
//! has uniform radio conditions.

use crate::config::SystemConfig;
use crate::math;
use crate::mobility::{cell_center, LocationId};

/// Linear channel power gain; always finite and positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGain(pub f64);

/// Terrestrial gain `g0 * d^(-alpha)` from the user's cell center to the BS,
/// with the distance clamped below by one cell side to avoid the
/// power-law singularity.
pub fn gain_bs(mu_loc: LocationId, bs_pos: (f64, f64), cfg: &SystemConfig) -> LinkGain {
    let (x, y) = cell_center(mu_loc, cfg);
    let d = math::hypot(x - bs_pos.0, y - bs_pos.1).max(cfg.cell_side);
    LinkGain(cfg.terr_ref_gain * math::powf(d, -cfg.terr_pathloss_exp))
}

/// Line-of-sight gain `beta0 / (H^2 + d_h^2)` where `d_h` is the horizontal
/// distance between the user's and the UAV's cell centers.
pub fn gain_uav(mu_loc: LocationId, uav_loc: LocationId, cfg: &SystemConfig) -> LinkGain {
    let (mx, my) = cell_center(mu_loc, cfg);
    let (ux, uy) = cell_center(uav_loc, cfg);
    let dh2 = (mx - ux) * (mx - ux) + (my - uy) * (my - uy);
    let h2 = cfg.uav_altitude_m * cfg.uav_altitude_m;
    LinkGain(cfg.los_ref_gain / (h2 + dh2))
}

/// Shannon uplink rate `W * log2(1 + g*P / (W*sigma^2))` in bits/s.
pub fn rate(g: LinkGain, cfg: &SystemConfig) -> f64 {
    let snr = g.0 * cfg.tx_power_w / (cfg.bandwidth_hz * cfg.noise_psd_w_hz());
    cfg.bandwidth_hz * math::log2(1.0 + snr)
}
