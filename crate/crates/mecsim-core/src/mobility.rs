//! Mobility models: smooth-turn motion for the UAV, Gauss-Markov motion for
//! the mobile users, and the mapping from continuous positions to the
//! discrete location grid.
//!
//! Both models advance once per decision epoch and keep positions inside the
//! square service area by elastic reflection.

use rand::Rng;

use crate::config::SystemConfig;
use crate::math;

/// Index of one grid cell, row-major from the origin corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocationId(pub u32);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MobilityError {
    #[error("position ({x}, {y}) outside the {side} m service area")]
    OutOfArea { x: f64, y: f64, side: f64 },
}

/// Maps a position to the cell containing it. Cells are half-open
/// `[x, x + cell_side)` on each axis; the far boundary of the area belongs
/// to the last cell so the closed square is fully covered.
pub fn to_location(position: (f64, f64), cfg: &SystemConfig) -> Result<LocationId, MobilityError> {
    let (x, y) = position;
    let side = cfg.area_side;
    if !(0.0..=side).contains(&x) || !(0.0..=side).contains(&y) {
        return Err(MobilityError::OutOfArea { x, y, side });
    }
    let n = cfg.cells_per_side();
    let ix = (math::floor(x / cfg.cell_side) as u32).min(n - 1);
    let iy = (math::floor(y / cfg.cell_side) as u32).min(n - 1);
    Ok(LocationId(iy * n + ix))
}

/// Center point of a grid cell.
pub fn cell_center(loc: LocationId, cfg: &SystemConfig) -> (f64, f64) {
    let n = cfg.cells_per_side();
    let ix = loc.0 % n;
    let iy = loc.0 / n;
    (
        (ix as f64 + 0.5) * cfg.cell_side,
        (iy as f64 + 0.5) * cfg.cell_side,
    )
}

/// UAV state under the smooth-turn model: constant forward speed, randomly
/// resampled centripetal acceleration, reflecting boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct UavMobilityState {
    /// Terrestrial point directly under the UAV, meters.
    pub position: (f64, f64),
    /// Direction of travel, radians.
    pub heading: f64,
    /// Forward speed, m/s; constant for the whole trajectory.
    pub speed: f64,
    /// Current centripetal acceleration, m/s^2.
    pub centripetal_accel: f64,
    /// Seconds until the acceleration is resampled.
    pub dwell_remaining: f64,
}

impl UavMobilityState {
    pub fn init(cfg: &SystemConfig, rng: &mut impl Rng) -> Self {
        let x = rng.gen::<f64>() * cfg.area_side;
        let y = rng.gen::<f64>() * cfg.area_side;
        let heading = rng.gen::<f64>() * core::f64::consts::TAU;
        let mut s = UavMobilityState {
            position: (x, y),
            heading,
            speed: cfg.uav_speed_mps,
            centripetal_accel: 0.0,
            dwell_remaining: 0.0,
        };
        s.resample_turn(cfg, rng);
        s
    }

    fn resample_turn(&mut self, cfg: &SystemConfig, rng: &mut impl Rng) {
        self.centripetal_accel = cfg.uav_turn_accel_std * sample_standard_normal(rng);
        self.dwell_remaining = sample_exponential(rng, cfg.uav_turn_dwell_mean_s);
    }
}

/// Advances the UAV one epoch: turn by `(accel / speed) * delta`, move
/// `speed * delta` along the new heading, reflect at the boundary, and
/// resample the turn once the dwell timer expires.
pub fn step_uav(s: &UavMobilityState, cfg: &SystemConfig, rng: &mut impl Rng) -> UavMobilityState {
    let mut next = s.clone();
    let delta = cfg.epoch_seconds;
    next.heading += (next.centripetal_accel / next.speed) * delta;
    let step = next.speed * delta;
    let mut x = next.position.0 + step * math::cos(next.heading);
    let mut y = next.position.1 + step * math::sin(next.heading);

    let side = cfg.area_side;
    let (mut dx, mut dy) = (math::cos(next.heading), math::sin(next.heading));
    loop {
        if x < 0.0 {
            x = -x;
            dx = -dx;
        } else if x > side {
            x = 2.0 * side - x;
            dx = -dx;
        } else if y < 0.0 {
            y = -y;
            dy = -dy;
        } else if y > side {
            y = 2.0 * side - y;
            dy = -dy;
        } else {
            break;
        }
    }
    next.position = (x, y);
    next.heading = atan2(dy, dx);

    next.dwell_remaining -= delta;
    if next.dwell_remaining <= 0.0 {
        next.resample_turn(cfg, rng);
    }
    next
}

/// Mobile-user state under the Gauss-Markov model.
///
/// `mean_velocity` is the per-user long-run mean, drawn once at
/// initialization with magnitude `mu_mean_speed_mps` and a uniformly random
/// direction; reflections mirror it together with the velocity so users do
/// not pile up against a wall.
#[derive(Debug, Clone, PartialEq)]
pub struct MuMobilityState {
    pub position: (f64, f64),
    pub velocity: (f64, f64),
    pub mean_velocity: (f64, f64),
}

impl MuMobilityState {
    pub fn init(cfg: &SystemConfig, rng: &mut impl Rng) -> Self {
        let x = rng.gen::<f64>() * cfg.area_side;
        let y = rng.gen::<f64>() * cfg.area_side;
        let dir = rng.gen::<f64>() * core::f64::consts::TAU;
        let mean = (
            cfg.mu_mean_speed_mps * math::cos(dir),
            cfg.mu_mean_speed_mps * math::sin(dir),
        );
        // Start at the stationary distribution around the mean.
        let velocity = (
            mean.0 + cfg.velocity_noise_std_mps * sample_standard_normal(rng),
            mean.1 + cfg.velocity_noise_std_mps * sample_standard_normal(rng),
        );
        MuMobilityState {
            position: (x, y),
            velocity,
            mean_velocity: mean,
        }
    }
}

/// Advances a mobile user one epoch with the first-order Gauss-Markov
/// velocity update `v' = k*v + (1-k)*mean + sqrt(1-k^2)*noise`.
pub fn step_mu(s: &MuMobilityState, cfg: &SystemConfig, rng: &mut impl Rng) -> MuMobilityState {
    let k = cfg.gauss_markov_memory;
    let noise_scale = math::sqrt(1.0 - k * k) * cfg.velocity_noise_std_mps;
    let mut vx = k * s.velocity.0 + (1.0 - k) * s.mean_velocity.0 + noise_scale * sample_standard_normal(rng);
    let mut vy = k * s.velocity.1 + (1.0 - k) * s.mean_velocity.1 + noise_scale * sample_standard_normal(rng);

    let delta = cfg.epoch_seconds;
    let mut x = s.position.0 + vx * delta;
    let mut y = s.position.1 + vy * delta;
    let (mut mx, mut my) = s.mean_velocity;

    let side = cfg.area_side;
    loop {
        if x < 0.0 {
            x = -x;
            vx = -vx;
            mx = -mx;
        } else if x > side {
            x = 2.0 * side - x;
            vx = -vx;
            mx = -mx;
        } else if y < 0.0 {
            y = -y;
            vy = -vy;
            my = -my;
        } else if y > side {
            y = 2.0 * side - y;
            vy = -vy;
            my = -my;
        } else {
            break;
        }
    }

    MuMobilityState {
        position: (x, y),
        velocity: (vx, vy),
        mean_velocity: (mx, my),
    }
}

/// Standard normal draw via Box-Muller; two uniforms per sample keeps the
/// stream layout independent of any caching.
pub(crate) fn sample_standard_normal(rng: &mut impl Rng) -> f64 {
    // Open interval avoids ln(0).
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    math::sqrt(-2.0 * math::ln(u1)) * math::cos(core::f64::consts::TAU * u2)
}

/// Exponential draw with the given mean by inverse CDF.
pub(crate) fn sample_exponential(rng: &mut impl Rng, mean: f64) -> f64 {
    let u: f64 = 1.0 - rng.gen::<f64>();
    -mean * math::ln(u)
}

fn atan2(y: f64, x: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        y.atan2(x)
    }
    #[cfg(not(feature = "std"))]
    {
        libm::atan2(y, x)
    }
}
