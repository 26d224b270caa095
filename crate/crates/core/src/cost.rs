//! Closed-form cost and utility formulas: offload split, migration, caching
//! feasibility, latency and energy with DT gap terms, the discrepancy
//! factor, satisfaction, QoE and the weighted objective.

use serde::{Deserialize, Serialize};

use crate::config::{ScenarioConfig, WeightsConfig};
use crate::error::{Error, Result};
use crate::model::{EdgeServer, MobileUser, Task};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyBreakdown<T> {
    pub local_s: T,
    pub local_gap_s: T,
    pub edge_s: T,
    pub edge_gap_s: T,
    pub queue_s: T,
    pub total_s: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown<T> {
    pub edge_compute_j: T,
    pub comm_j: T,
    pub local_compute_j: T,
    pub updown_j: T,
    pub dt_overhead_j: T,
    pub total_j: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QoeScore<T> {
    pub satisfaction: T,
    pub savings: T,
    pub value: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights<T> {
    pub w1: T,
    pub w2: T,
    pub w3: T,
}

impl<T: Scalar> Weights<T> {
    pub fn new(w1: T, w2: T, w3: T) -> Result<Self> {
        for (name, w) in [("w1", w1), ("w2", w2), ("w3", w3)] {
            if !w.is_finite() || w < T::zero() {
                return Err(Error::config(format!("weights.{name}"), "must be finite and >= 0"));
            }
        }
        Ok(Self { w1, w2, w3 })
    }

    pub fn from_config(w: &WeightsConfig) -> Result<Self> {
        Self::new(T::lit(w.w1), T::lit(w.w2), T::lit(w.w3))
    }
}

/// Everything a single decision cost, physical and DT-side.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown<T> {
    pub latency: LatencyBreakdown<T>,
    pub energy: EnergyBreakdown<T>,
    pub qoe: QoeScore<T>,
    /// h·T·C_f
    pub migration_cost: T,
    /// h·T·(C_f + C̃_f)
    pub dt_migration_cost: T,
    /// Cost charged against the user's budget.
    pub incurred_cost: T,
    /// Discrepancy factor G for the offloaded share.
    pub discrepancy: T,
    pub latency_norm: T,
    pub energy_norm: T,
    pub objective: T,
}

fn unit<T: Scalar>(v: T) -> bool {
    v >= T::zero() && v <= T::one()
}

fn offloaded_share<T: Scalar>(task: &Task<T>, server: usize, associated: bool) -> Result<T> {
    let beta = *task
        .beta
        .get(server)
        .ok_or_else(|| Error::Consistency(format!("server index {server} out of range")))?;
    if !associated {
        if beta > T::zero() {
            return Err(Error::Consistency(format!(
                "beta = {beta} on unassociated server {server}"
            )));
        }
        return Ok(T::zero());
    }
    Ok(beta)
}

/// T_ij = π_ij β_ij D_j.
pub fn offloaded_volume<T: Scalar>(task: &Task<T>, server: usize, associated: bool) -> Result<T> {
    Ok(offloaded_share(task, server, associated)? * task.data_bits)
}

/// π_ij β_ij C_et_j, the cycles executed at `server`.
pub fn offloaded_cycles<T: Scalar>(task: &Task<T>, server: usize, associated: bool) -> Result<T> {
    Ok(offloaded_share(task, server, associated)? * task.cpu_cycles)
}

/// Sum of T_ij over all servers.
pub fn total_offloaded_volume<T: Scalar>(task: &Task<T>, association: &[bool]) -> Result<T> {
    if association.len() != task.beta.len() {
        return Err(Error::Shape(format!(
            "association has {} entries, task has {}",
            association.len(),
            task.beta.len()
        )));
    }
    let mut total = T::zero();
    for (i, &pi) in association.iter().enumerate() {
        total = total + offloaded_volume(task, i, pi)?;
    }
    Ok(total)
}

/// h_j · T_ij · C_f, with C_f + C̃_f on the twin side.
pub fn migration_cost<T: Scalar>(
    task: &Task<T>,
    association: &[bool],
    fixed_cost: T,
    dt_discrepancy: T,
    use_dt: bool,
) -> Result<T> {
    if !task.migration_flag {
        return Ok(T::zero());
    }
    let per_bit = if use_dt {
        fixed_cost + dt_discrepancy
    } else {
        fixed_cost
    };
    Ok(total_offloaded_volume(task, association)? * per_bit)
}

/// Caching rule D ≤ M_mig on normalized quantities (inclusive).
pub fn caching_feasible<T: Scalar>(data_norm: T, migration_norm: T) -> bool {
    data_norm <= migration_norm
}

/// Normalizes bits by `data_ref` and cost by `cost_ref` for [`caching_feasible`].
pub fn caching_normalize<T: Scalar>(data_bits: T, migration_cost: T, data_ref: T, cost_ref: T) -> (T, T) {
    (data_bits / data_ref, migration_cost / cost_ref)
}

/// How the edge term is evaluated and whether the DT gaps are charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LatencyOptions {
    /// `T/R + βC/f_i` instead of `βC/(R f_i)`.
    pub decomposed: bool,
    /// Charge ΔL^l and ΔL_ij.
    pub dt_gaps: bool,
}

impl LatencyOptions {
    pub const LITERAL_WITH_GAPS: Self = Self {
        decomposed: false,
        dt_gaps: true,
    };
}

fn check_freqs<T: Scalar>(what: &str, f: T, dev: T) -> Result<()> {
    if !(f > T::zero()) || dev < T::zero() || !(f > dev) {
        return Err(Error::Domain(format!("{what}: need f > f~ >= 0, got f={f}, f~={dev}")));
    }
    Ok(())
}

/// Latency of one task: local part, edge part on `server`, DT gaps and the
/// router queue (charged once when anything is offloaded).
pub fn latency_breakdown<T: Scalar>(
    task: &Task<T>,
    user: &MobileUser<T>,
    server: Option<(&EdgeServer<T>, bool)>,
    rate_bps: T,
    queue_s: T,
    opts: LatencyOptions,
) -> Result<LatencyBreakdown<T>> {
    let fj = user.cpu_freq_hz;
    let dev_j = user.dt_freq_dev_hz;
    check_freqs("user", fj, dev_j)?;
    let local_cycles = task.alpha * task.cpu_cycles;
    let local_s = local_cycles / fj;
    let local_gap_s = if opts.dt_gaps {
        local_cycles * dev_j / (fj * (fj - dev_j))
    } else {
        T::zero()
    };

    let (mut edge_s, mut edge_gap_s, mut queue) = (T::zero(), T::zero(), T::zero());
    if let Some((srv, associated)) = server {
        let fi = srv.cpu_freq_hz;
        let dev_i = srv.dt_freq_dev_hz;
        check_freqs("server", fi, dev_i)?;
        let share = offloaded_share(task, srv.id, associated)?;
        let cycles = share * task.cpu_cycles;
        if cycles > T::zero() || share > T::zero() {
            if !(rate_bps > T::zero()) {
                return Err(Error::InfeasibleLink(format!(
                    "rate {rate_bps} with offloaded share {share}"
                )));
            }
            if opts.decomposed {
                edge_s = share * task.data_bits / rate_bps + cycles / fi;
                if opts.dt_gaps {
                    edge_gap_s = cycles * dev_i / (fi * (fi - dev_i));
                }
            } else {
                edge_s = cycles / (rate_bps * fi);
                if opts.dt_gaps {
                    edge_gap_s = cycles * dev_i / (rate_bps * fi * (fi - dev_i));
                }
            }
            queue = queue_s;
        }
    }
    Ok(LatencyBreakdown {
        local_s,
        local_gap_s,
        edge_s,
        edge_gap_s,
        queue_s: queue,
        total_s: local_s + local_gap_s + edge_s + edge_gap_s + queue,
    })
}

/// Constants of the energy model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams<T> {
    pub energy_per_cycle: T,
    pub comm_energy_per_bit: T,
    pub download_power_w: T,
    pub result_fraction: T,
    pub dt_energy_per_prediction: T,
}

impl<T: Scalar> EnergyParams<T> {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self {
            energy_per_cycle: T::lit(cfg.energy_per_cycle_j),
            comm_energy_per_bit: T::lit(cfg.comm_energy_per_bit_j),
            download_power_w: T::lit(cfg.download_power_w),
            result_fraction: T::lit(cfg.result_fraction),
            dt_energy_per_prediction: T::lit(cfg.dt_energy_per_prediction_j),
        }
    }
}

/// Energy of one task across all servers. `association[i]` is π_ij and
/// `rates[i]` the uplink rate to server i (ignored where nothing is sent).
pub fn energy_breakdown<T: Scalar>(
    task: &Task<T>,
    user: &MobileUser<T>,
    servers: &[EdgeServer<T>],
    association: &[bool],
    rates: &[T],
    params: &EnergyParams<T>,
    dt_predictions: usize,
) -> Result<EnergyBreakdown<T>> {
    if association.len() != servers.len() || rates.len() != servers.len() {
        return Err(Error::Shape(format!(
            "{} servers, {} association entries, {} rates",
            servers.len(),
            association.len(),
            rates.len()
        )));
    }
    let user_eff = user.cpu_freq_hz + user.dt_freq_dev_hz;
    if !(user_eff > T::zero()) {
        return Err(Error::Domain("user f + f~ must be > 0".into()));
    }
    let local_compute_j = params.energy_per_cycle * task.alpha * task.cpu_cycles / user_eff;

    let (mut edge, mut comm, mut updown) = (T::zero(), T::zero(), T::zero());
    for (i, srv) in servers.iter().enumerate() {
        let bits = offloaded_volume(task, i, association[i])?;
        let cycles = offloaded_cycles(task, i, association[i])?;
        if bits <= T::zero() && cycles <= T::zero() {
            continue;
        }
        let eff = srv.cpu_freq_hz + srv.dt_freq_dev_hz;
        if !(eff > T::zero()) {
            return Err(Error::Domain(format!("server {i}: f + f~ must be > 0")));
        }
        edge = edge + cycles * params.energy_per_cycle / eff;
        comm = comm + params.comm_energy_per_bit * bits;
        if bits > T::zero() {
            let r = rates[i];
            if !(r > T::zero()) {
                return Err(Error::InfeasibleLink(format!("zero rate to server {i}")));
            }
            let up = user.tx_power_w * bits / r;
            let down = params.download_power_w * params.result_fraction * bits / r;
            updown = updown + up + down;
        }
    }
    let dt = params.dt_energy_per_prediction * T::lit(dt_predictions as f64);
    Ok(EnergyBreakdown {
        edge_compute_j: edge,
        comm_j: comm,
        local_compute_j,
        updown_j: updown,
        dt_overhead_j: dt,
        total_j: edge + comm + local_compute_j + updown + dt,
    })
}

/// G = −λ(f̂ − f) / (f(f + f̂)).
pub fn discrepancy_factor<T: Scalar>(workload_cycles: T, actual_freq_hz: T, est_freq_hz: T) -> Result<T> {
    if !(actual_freq_hz > T::zero()) || !(est_freq_hz > T::zero()) {
        return Err(Error::Domain(format!(
            "frequencies must be > 0, got f={actual_freq_hz}, f^={est_freq_hz}"
        )));
    }
    Ok(-workload_cycles * (est_freq_hz - actual_freq_hz)
        / (actual_freq_hz * (actual_freq_hz + est_freq_hz)))
}

/// Piecewise latency-to-MOS mapping.
pub fn satisfaction<T: Scalar>(latency_s: T, l_min: T, l_max: T, baseline: T) -> T {
    if latency_s <= l_min {
        T::one()
    } else if latency_s <= l_max {
        (l_max - latency_s) / (l_max - l_min)
    } else {
        baseline
    }
}

pub fn qoe<T: Scalar>(w: T, budget: T, cost_incurred: T, lambda_w: T, lambda_s: T) -> Result<QoeScore<T>> {
    if !(budget > T::zero()) {
        return Err(Error::Domain(format!("budget must be > 0, got {budget}")));
    }
    let savings = (budget - cost_incurred) / budget;
    Ok(QoeScore {
        satisfaction: w,
        savings,
        value: lambda_w * w + lambda_s * savings,
    })
}

/// J = w1·L̄ + w2·Ē − w3·ΣU(QoE), on normalized inputs.
pub fn objective_value<T: Scalar>(latency_norm: T, energy_norm: T, qoe_sum: T, w: &Weights<T>) -> T {
    w.w1 * latency_norm + w.w2 * energy_norm - w.w3 * qoe_sum
}

/// The reward is the negated objective.
pub fn reward<T: Scalar>(latency_norm: T, energy_norm: T, qoe_sum: T, w: &Weights<T>) -> T {
    -objective_value(latency_norm, energy_norm, qoe_sum, w)
}

/// Checks the split and component ranges a breakdown relies on.
pub fn split_in_range<T: Scalar>(task: &Task<T>) -> bool {
    unit(task.alpha) && task.beta.iter().all(|&b| unit(b))
}
