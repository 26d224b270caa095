//! Domain types and scenario construction.
//!
//! Positions are kilometres on a flat square `[0, side] × [0, side]`.
//! Frequencies are in cycles/s, data in bits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tolerance for the split constraint α + Σ π β = 1.
pub const SPLIT_TOLERANCE: f64 = 1e-9;

/// Half-width of the interval f̃/f is drawn from around the configured mean.
const DT_RATIO_SPREAD: f64 = 0.1;
const DT_RATIO_MAX: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point<T>) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeServer<T> {
    pub id: usize,
    pub position: Point<T>,
    pub cpu_freq_hz: T,
    /// DT deviation f̃_i. The twin believes the server runs at f_i − f̃_i.
    pub dt_freq_dev_hz: T,
    pub coverage_radius_km: T,
    pub noise_power_w: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobileUser<T> {
    pub id: usize,
    pub position: Point<T>,
    pub speed_kmh: T,
    pub cpu_freq_hz: T,
    pub dt_freq_dev_hz: T,
    pub tx_power_w: T,
    pub budget: T,
    /// (λ_w, λ_s)
    pub qoe_weights: (T, T),
    pub associated_server: Option<usize>,
}

/// One offloadable unit of work. `beta` has one entry per server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task<T> {
    pub owner: usize,
    pub data_bits: T,
    pub cpu_cycles: T,
    pub alpha: T,
    pub beta: Vec<T>,
    pub migration_flag: bool,
    pub cached_at: Option<usize>,
}

impl<T: Scalar> Task<T> {
    /// A task executed entirely on the device.
    pub fn local(owner: usize, data_bits: T, cpu_cycles: T, server_count: usize) -> Self {
        Self {
            owner,
            data_bits,
            cpu_cycles,
            alpha: T::one(),
            beta: vec![T::zero(); server_count],
            migration_flag: false,
            cached_at: None,
        }
    }

    /// Splits the task: `beta` of it goes to `server`, the rest stays local.
    pub fn split(
        owner: usize,
        data_bits: T,
        cpu_cycles: T,
        server_count: usize,
        server: usize,
        beta: T,
    ) -> Self {
        let mut t = Self::local(owner, data_bits, cpu_cycles, server_count);
        t.beta[server] = beta;
        t.alpha = T::one() - beta;
        t
    }

    pub fn meets_minimum(&self, min_task_bits: T) -> bool {
        self.data_bits >= min_task_bits
    }
}

/// DT-side task attributes. The twin mirrors the physical values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskMirror<T> {
    pub dt_data_bits: T,
    pub dt_cpu_cycles: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitalTwinView<T> {
    /// f̂_i = f_i − f̃_i
    pub est_server_freq_hz: Vec<T>,
    /// f̂_j = f_j − f̃_j
    pub est_user_freq_hz: Vec<T>,
    /// C_f + C̃_f
    pub dt_migration_cost: T,
}

impl<T: Scalar> DigitalTwinView<T> {
    pub fn mirror(&self, task: &Task<T>) -> TaskMirror<T> {
        TaskMirror {
            dt_data_bits: task.data_bits,
            dt_cpu_cycles: task.cpu_cycles,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario<T> {
    pub config: ScenarioConfig,
    pub servers: Vec<EdgeServer<T>>,
    pub users: Vec<MobileUser<T>>,
    pub dt: DigitalTwinView<T>,
}

impl<T: Scalar> Scenario<T> {
    pub fn side_km(&self) -> T {
        T::lit(self.config.area_side_km)
    }

    pub fn contains(&self, p: &Point<T>) -> bool {
        let side = self.side_km();
        p.x >= T::zero() && p.x <= side && p.y >= T::zero() && p.y <= side
    }

    /// Index of the closest server, ties to the lower id.
    pub fn nearest_server(&self, p: &Point<T>) -> Option<usize> {
        nearest_to_point(&self.servers, p, 1).first().copied()
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn dt_ratio(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    let lo = (mean - DT_RATIO_SPREAD).max(0.0);
    let hi = (mean + DT_RATIO_SPREAD).min(DT_RATIO_MAX);
    uniform(rng, lo, hi)
}

/// Grid with spacing `side/√n`, centred in the square, filled row-major.
pub fn grid_positions(side_km: f64, count: usize) -> Vec<(f64, f64)> {
    if count == 0 {
        return Vec::new();
    }
    let spacing = side_km / (count as f64).sqrt();
    let mut cols = 1usize;
    while cols * cols < count {
        cols += 1;
    }
    let rows = count.div_ceil(cols);
    let centre = side_km / 2.0;
    let x0 = centre - spacing * (cols as f64 - 1.0) / 2.0;
    let y0 = centre - spacing * (rows as f64 - 1.0) / 2.0;
    (0..count)
        .map(|k| {
            let (r, c) = (k / cols, k % cols);
            (x0 + spacing * c as f64, y0 + spacing * r as f64)
        })
        .collect()
}

/// Builds the world for `config`. Servers sit on a seed-independent grid;
/// users, powers, budgets and DT deviations are drawn from `seed`.
pub fn build_scenario<T: Scalar>(config: &ScenarioConfig, seed: u64) -> Result<Scenario<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = config.area_side_km;

    let servers: Vec<EdgeServer<T>> = grid_positions(side, config.server_count())
        .into_iter()
        .enumerate()
        .map(|(id, (x, y))| {
            let f = config.server_cpu_freq_hz;
            EdgeServer {
                id,
                position: Point::new(T::lit(x), T::lit(y)),
                cpu_freq_hz: T::lit(f),
                dt_freq_dev_hz: T::lit(f * dt_ratio(&mut rng, config.dt_error_mean)),
                coverage_radius_km: T::lit(config.server_radius_km),
                noise_power_w: T::lit(config.noise_power_w),
            }
        })
        .collect();

    let mut users = Vec::with_capacity(config.user_count);
    for id in 0..config.user_count {
        let position = Point::new(
            T::lit(uniform(&mut rng, 0.0, side)),
            T::lit(uniform(&mut rng, 0.0, side)),
        );
        let tx = uniform(
            &mut rng,
            config.tx_power_range_w.lo(),
            config.tx_power_range_w.hi(),
        );
        let f = config.user_cpu_freq_hz;
        let dev = f * dt_ratio(&mut rng, config.dt_error_mean);
        let budget = uniform(&mut rng, config.budget_range.lo(), config.budget_range.hi());
        let associated_server = nearest_to_point(&servers, &position, 1).first().copied();
        users.push(MobileUser {
            id,
            position,
            speed_kmh: T::lit(config.mobility.speed_kmh),
            cpu_freq_hz: T::lit(f),
            dt_freq_dev_hz: T::lit(dev),
            tx_power_w: T::lit(tx),
            budget: T::lit(budget),
            qoe_weights: (T::lit(config.qoe_weights.0), T::lit(config.qoe_weights.1)),
            associated_server,
        });
    }

    for s in &servers {
        if s.cpu_freq_hz <= s.dt_freq_dev_hz {
            return Err(Error::Domain(format!("server {} has f <= f~", s.id)));
        }
    }
    for u in &users {
        if u.cpu_freq_hz <= u.dt_freq_dev_hz {
            return Err(Error::Domain(format!("user {} has f <= f~", u.id)));
        }
    }

    let dt = DigitalTwinView {
        est_server_freq_hz: servers.iter().map(|s| s.cpu_freq_hz - s.dt_freq_dev_hz).collect(),
        est_user_freq_hz: users.iter().map(|u| u.cpu_freq_hz - u.dt_freq_dev_hz).collect(),
        dt_migration_cost: T::lit(config.migration_fixed_cost + config.dt_migration_discrepancy),
    };

    Ok(Scenario {
        config: config.clone(),
        servers,
        users,
        dt,
    })
}

/// True iff α ∈ [0,1], each β ∈ [0,1] and α + Σ π β = 1 within 1e-9.
///
/// `association[i]` is π_ij for this task's owner.
pub fn validate_split<T: Scalar>(task: &Task<T>, association: &[bool]) -> bool {
    let unit = |v: T| v >= T::zero() && v <= T::one();
    if !unit(task.alpha) || !task.beta.iter().all(|&b| unit(b)) {
        return false;
    }
    if association.len() != task.beta.len() {
        return false;
    }
    let offloaded: T = task
        .beta
        .iter()
        .zip(association)
        .filter(|(_, &pi)| pi)
        .map(|(&b, _)| b)
        .sum();
    (task.alpha + offloaded - T::one()).abs() <= T::lit(SPLIT_TOLERANCE)
}

fn nearest_to_point<T: Scalar>(servers: &[EdgeServer<T>], p: &Point<T>, k: usize) -> Vec<usize> {
    let mut ranked: Vec<(T, usize)> = servers
        .iter()
        .map(|s| (s.position.distance(p), s.id))
        .collect();
    ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    ranked.into_iter().take(k).map(|(_, id)| id).collect()
}

/// The `k` closest servers to `user`, nearest first, ties to the lower id.
pub fn nearest_servers<T: Scalar>(user: &MobileUser<T>, scenario: &Scenario<T>, k: usize) -> Vec<usize> {
    nearest_to_point(&scenario.servers, &user.position, k)
}

/// Nearest servers to an arbitrary point.
pub fn nearest_servers_at<T: Scalar>(p: &Point<T>, scenario: &Scenario<T>, k: usize) -> Vec<usize> {
    nearest_to_point(&scenario.servers, p, k)
}
