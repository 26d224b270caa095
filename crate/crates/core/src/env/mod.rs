//! The offloading MDP: one decision per user per slot, users served
//! round-robin.

pub mod action;
pub mod mobility;
pub mod state;
pub mod tdrive;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};

pub use action::{MdpAction, Target, BETA_LEVELS};
pub use mobility::{synthetic_mobility, MobilitySource, RandomWaypoint};
pub use state::{dt_feature_indices, state_len, MdpState};
pub use tdrive::{load_tdrive, parse_tdrive, TdriveData, Trajectory, TrajectorySample};

use crate::channel::{path_loss, ChannelModel, ChannelState};
use crate::cost::{
    caching_feasible, caching_normalize, discrepancy_factor, energy_breakdown, latency_breakdown,
    migration_cost, objective_value, offloaded_cycles, offloaded_volume, qoe, satisfaction,
    CostBreakdown, EnergyParams, LatencyOptions, Weights,
};
use crate::error::{Error, Result};
use crate::model::{nearest_servers_at, MobileUser, Point, Scenario, Task};
use crate::scalar::Scalar;
use state::idx;

/// Upper end of the spectral-efficiency feature, bit/s/Hz.
const SPECTRAL_REF: f64 = 32.0;
/// Upper end of the speed feature, km/h.
const SPEED_REF_KMH: f64 = 120.0;
const DT_RATIO_MAX: f64 = 0.9;

/// What happened in one step besides the reward.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepInfo<T> {
    pub user: usize,
    pub action: usize,
    pub latency_s: T,
    pub energy_j: T,
    pub qoe: T,
    pub migrated: bool,
    pub cache_hit: bool,
    pub offloaded: bool,
    pub dt_used: bool,
    /// Cache requested but the placement rule rejected it.
    pub cache_rejected: bool,
    /// Task below the minimum size.
    pub min_task_violation: bool,
    /// Slot pointed past the available candidates; ran locally.
    pub invalid_target: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome<T> {
    pub next_state: MdpState<T>,
    /// Always `-cost.objective`.
    pub reward: T,
    pub cost: CostBreakdown<T>,
    pub done: bool,
    pub info: StepInfo<T>,
}

/// Anything the trainer can drive with flat action indices.
pub trait Environment<T: Scalar> {
    fn state_dim(&self) -> usize;
    fn action_count(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Result<MdpState<T>>;
    fn step(&mut self, action: usize) -> Result<StepOutcome<T>>;
}

#[derive(Debug, Clone, Copy)]
struct Pending<T> {
    data_bits: T,
    cpu_cycles: T,
}

#[derive(Debug, Clone)]
struct Rngs {
    task: ChaCha8Rng,
    mobility: ChaCha8Rng,
    fading: ChaCha8Rng,
    twin: ChaCha8Rng,
}

impl Rngs {
    fn new(seed: u64) -> Self {
        let stream = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k);
            r
        };
        Self {
            task: stream(1),
            mobility: stream(2),
            fading: stream(3),
            twin: stream(4),
        }
    }
}

#[derive(Debug, Clone)]
struct Episode<T> {
    rngs: Rngs,
    users: Vec<MobileUser<T>>,
    waypoints: Vec<Point<T>>,
    /// Replay cursor per user.
    cursor: Vec<usize>,
    tasks: Vec<Pending<T>>,
    /// Agent-visible f̃/f estimates, refreshed on demand and drifting otherwise.
    est_server_ratio: Vec<T>,
    est_user_ratio: Vec<T>,
    last_migration: Vec<T>,
    last_offloaded: Vec<T>,
    cache: Vec<Option<usize>>,
    candidates: Vec<usize>,
    current: usize,
    steps: usize,
}

/// The simulated network as an MDP.
#[derive(Debug, Clone)]
pub struct MecEnv<T> {
    scenario: Scenario<T>,
    mobility: MobilitySource<T>,
    waypoint_model: RandomWaypoint<T>,
    channel: ChannelModel<T>,
    energy: EnergyParams<T>,
    weights: Weights<T>,
    latency_opts: LatencyOptions,
    k: usize,
    speed_override: Option<T>,
    episode: Option<Episode<T>>,
}

impl<T: Scalar> MecEnv<T> {
    pub fn new(scenario: Scenario<T>, mobility: MobilitySource<T>) -> Result<Self> {
        if let MobilitySource::Replay(paths) = &mobility {
            if paths.is_empty() || paths.iter().any(|p| p.is_empty()) {
                return Err(Error::Data("trajectory source is empty".into()));
            }
        }
        let cfg = &scenario.config;
        Ok(Self {
            waypoint_model: RandomWaypoint::new(T::lit(cfg.area_side_km), T::lit(cfg.mobility.slot_s)),
            channel: ChannelModel::from_config(&cfg.channel),
            energy: EnergyParams::from_config(cfg),
            weights: Weights::from_config(&cfg.weights)?,
            latency_opts: LatencyOptions {
                decomposed: cfg.latency.decomposed,
                dt_gaps: false,
            },
            k: cfg.candidate_servers,
            speed_override: None,
            episode: None,
            scenario,
            mobility,
        })
    }

    /// Forces every user to move at `speed_kmh` from the next reset on.
    pub fn with_speed(mut self, speed_kmh: T) -> Self {
        self.speed_override = Some(speed_kmh);
        self
    }

    pub fn scenario(&self) -> &Scenario<T> {
        &self.scenario
    }

    pub fn candidates(&self) -> usize {
        self.k
    }

    /// Current user positions, if reset.
    pub fn positions(&self) -> Option<Vec<Point<T>>> {
        self.episode
            .as_ref()
            .map(|e| e.users.iter().map(|u| u.position).collect())
    }

    /// Current associations, if reset.
    pub fn associations(&self) -> Option<Vec<Option<usize>>> {
        self.episode
            .as_ref()
            .map(|e| e.users.iter().map(|u| u.associated_server).collect())
    }

    /// The user who decides next and its candidate servers, nearest first.
    pub fn current_user(&self) -> Option<(usize, &[usize])> {
        self.episode.as_ref().map(|e| (e.current, e.candidates.as_slice()))
    }

    /// Overwrites the true DT deviation of a server. Used to probe what the
    /// agent can and cannot observe.
    pub fn perturb_server_dev(&mut self, server: usize, dev_hz: T) -> Result<()> {
        let s = self
            .scenario
            .servers
            .get_mut(server)
            .ok_or_else(|| Error::Shape(format!("no server {server}")))?;
        if !(dev_hz >= T::zero() && dev_hz < s.cpu_freq_hz) {
            return Err(Error::Domain(format!("deviation {dev_hz} out of range")));
        }
        s.dt_freq_dev_hz = dev_hz;
        Ok(())
    }

    pub fn reset(&mut self, seed: u64) -> Result<MdpState<T>> {
        let mut rngs = Rngs::new(seed);
        let mut users = self.scenario.users.clone();
        let n = users.len();
        if let Some(v) = self.speed_override {
            if v < T::zero() {
                return Err(Error::Domain(format!("speed {v} < 0")));
            }
            users.iter_mut().for_each(|u| u.speed_kmh = v);
        }
        if let MobilitySource::Replay(paths) = &self.mobility {
            for (j, u) in users.iter_mut().enumerate() {
                u.position = paths[j % paths.len()][0];
            }
        }
        for u in users.iter_mut() {
            u.associated_server = self.scenario.nearest_server(&u.position);
        }
        let waypoints = (0..n)
            .map(|_| self.waypoint_model.sample_waypoint(&mut rngs.mobility))
            .collect();
        let tasks = (0..n).map(|_| self.sample_task(&mut rngs.task)).collect();
        let est_server_ratio = self
            .scenario
            .servers
            .iter()
            .map(|s| s.dt_freq_dev_hz / s.cpu_freq_hz)
            .collect();
        let est_user_ratio = users.iter().map(|u| u.dt_freq_dev_hz / u.cpu_freq_hz).collect();
        self.episode = Some(Episode {
            rngs,
            users,
            waypoints,
            cursor: vec![0; n],
            tasks,
            est_server_ratio,
            est_user_ratio,
            last_migration: vec![T::zero(); n],
            last_offloaded: vec![T::zero(); n],
            cache: vec![None; n],
            candidates: Vec::new(),
            current: 0,
            steps: 0,
        });
        if n == 0 {
            return Err(Error::Domain("scenario has no users".into()));
        }
        Ok(self.observe())
    }

    fn sample_task(&self, rng: &mut ChaCha8Rng) -> Pending<T> {
        let cfg = &self.scenario.config;
        let d = cfg.data_size_range_bits;
        let c = cfg.cycles_per_bit_range;
        let bits = d.lo() + (d.hi() - d.lo()) * rng.random::<f64>();
        let cpb = c.lo() + (c.hi() - c.lo()) * rng.random::<f64>();
        Pending {
            data_bits: T::lit(bits),
            cpu_cycles: T::lit(bits * cpb),
        }
    }

    fn next_position(&self, ep: &Episode<T>, j: usize) -> Point<T> {
        let u = &ep.users[j];
        match &self.mobility {
            MobilitySource::Synthetic => self.waypoint_model.peek(&u.position, &ep.waypoints[j], u.speed_kmh),
            MobilitySource::Replay(paths) => {
                let p = &paths[j % paths.len()];
                p[(ep.cursor[j] + 1).min(p.len() - 1)]
            }
        }
    }

    fn user_speed(&self, ep: &Episode<T>, j: usize) -> T {
        match &self.mobility {
            MobilitySource::Synthetic => ep.users[j].speed_kmh,
            MobilitySource::Replay(_) => {
                let km = ep.users[j].position.distance(&self.next_position(ep, j));
                km * T::lit(3600.0) / T::lit(self.scenario.config.mobility.slot_s)
            }
        }
    }

    fn mean_rate(&self, user: &MobileUser<T>, server: usize) -> Result<T> {
        let srv = &self.scenario.servers[server];
        let d_m = user.position.distance(&srv.position) * T::lit(1000.0);
        let ch = self.channel.mean_channel(d_m)?;
        self.channel.rate(
            user.tx_power_w,
            &ch,
            srv.noise_power_w,
            T::lit(self.scenario.config.bandwidth_hz),
            true,
        )
    }

    /// Encodes the current user's view and fixes its candidate list.
    fn observe(&mut self) -> MdpState<T> {
        let ep = self.episode.as_ref().expect("observe after reset");
        let cfg = &self.scenario.config;
        let j = ep.current;
        let user = &ep.users[j];
        let task = ep.tasks[j];
        let candidates = nearest_servers_at(&user.position, &self.scenario, self.k);

        let data_ref = T::lit(cfg.data_size_range_bits.hi());
        let cycles_ref = T::lit(cfg.max_task_cycles());
        let cost_ref = T::lit(cfg.cost_ref());
        let l_max = T::lit(cfg.latency_max_s);
        let f_ref = T::lit(cfg.server_cpu_freq_hz);
        let fj = user.cpu_freq_hz;
        let est_dev_j = ep.est_user_ratio[j] * fj;

        let mut s = MdpState::zeros(self.k);
        s.set(idx::DATA, task.data_bits / data_ref);
        s.set(idx::DT_DATA, task.data_bits / data_ref);
        s.set(idx::CYCLES, task.cpu_cycles / cycles_ref);
        s.set(idx::DT_CYCLES, task.cpu_cycles / cycles_ref);
        s.set(idx::LATENCY, task.cpu_cycles / fj / l_max);
        s.set(idx::DT_LATENCY, task.cpu_cycles / (fj - est_dev_j) / l_max);
        s.set(idx::MIGRATION, ep.last_migration[j] / cost_ref);
        let predicted_handover = user.associated_server.is_some()
            && self.scenario.nearest_server(&self.next_position(ep, j)) != user.associated_server;
        if predicted_handover {
            s.set(idx::DT_MIGRATION, self.scenario.dt.dt_migration_cost * task.data_bits / cost_ref);
        }
        s.set(idx::USER_FREQ, fj / f_ref);
        s.set(idx::USER_DEV, ep.est_user_ratio[j]);
        s.set(idx::OFFLOADED, ep.last_offloaded[j] / data_ref);
        s.set(idx::SPEED, self.user_speed(ep, j) / T::lit(SPEED_REF_KMH));

        let diag = T::lit(cfg.area_side_km * std::f64::consts::SQRT_2);
        let bw = T::lit(cfg.bandwidth_hz);
        for (k, &i) in candidates.iter().enumerate() {
            let base = state::server_base(k);
            let srv = &self.scenario.servers[i];
            s.set(base + idx::S_DISTANCE, user.position.distance(&srv.position) / diag);
            s.set(base + idx::S_FREQ, srv.cpu_freq_hz / f_ref);
            s.set(base + idx::S_DEV, ep.est_server_ratio[i]);
            if ep.cache[j] == Some(i) {
                s.set(base + idx::S_CACHED, T::one());
            }
            if let Ok(rate) = self.mean_rate(user, i) {
                s.set(base + idx::S_SPECTRAL, rate / bw / T::lit(SPECTRAL_REF));
            }
        }
        self.episode.as_mut().expect("reset").candidates = candidates;
        s
    }

    /// Applies `action` for the current user.
    pub fn step_action(&mut self, action: MdpAction) -> Result<StepOutcome<T>> {
        let action_index = action.encode(self.k)?;
        let mut ep = self
            .episode
            .take()
            .ok_or_else(|| Error::Lifecycle("step before reset".into()))?;
        let result = self.apply(&mut ep, action, action_index);
        self.episode = Some(ep);
        let (cost, info) = result?;

        let ep = self.episode.as_mut().expect("reset");
        ep.current = (ep.current + 1) % ep.users.len();
        ep.steps += 1;
        let next_state = self.observe();
        Ok(StepOutcome {
            next_state,
            reward: -cost.objective,
            cost,
            done: false,
            info,
        })
    }

    fn apply(
        &self,
        ep: &mut Episode<T>,
        action: MdpAction,
        action_index: usize,
    ) -> Result<(CostBreakdown<T>, StepInfo<T>)> {
        let cfg = &self.scenario.config;
        let servers = &self.scenario.servers;
        let n_servers = servers.len();
        let j = ep.current;
        let pending = ep.tasks[j];
        let mut info = StepInfo {
            user: j,
            action: action_index,
            ..Default::default()
        };

        // Fresh twin prediction for this user and every server.
        if action.dt_adjust {
            for (i, s) in servers.iter().enumerate() {
                ep.est_server_ratio[i] = s.dt_freq_dev_hz / s.cpu_freq_hz;
            }
            let u = &ep.users[j];
            ep.est_user_ratio[j] = u.dt_freq_dev_hz / u.cpu_freq_hz;
            info.dt_used = true;
        }

        let target = match action.target {
            Target::Local => None,
            Target::Slot(k) => match ep.candidates.get(k) {
                Some(&i) => Some(i),
                None => {
                    info.invalid_target = true;
                    None
                }
            },
        };
        let mut task = match target {
            Some(i) => Task::split(
                j,
                pending.data_bits,
                pending.cpu_cycles,
                n_servers,
                i,
                T::lit(action.beta()),
            ),
            None => Task::local(j, pending.data_bits, pending.cpu_cycles, n_servers),
        };
        let association: Vec<bool> = (0..n_servers).map(|i| Some(i) == target).collect();
        info.min_task_violation = !task.meets_minimum(T::lit(cfg.min_task_bits()));

        // Move, then re-associate.
        let previous = ep.users[j].associated_server;
        let next = match &self.mobility {
            MobilitySource::Synthetic => {
                let u = &ep.users[j];
                self.waypoint_model.advance(
                    &u.position,
                    &mut ep.waypoints[j],
                    u.speed_kmh,
                    &mut ep.rngs.mobility,
                )
            }
            MobilitySource::Replay(paths) => {
                let p = &paths[j % paths.len()];
                ep.cursor[j] = (ep.cursor[j] + 1).min(p.len() - 1);
                p[ep.cursor[j]]
            }
        };
        ep.users[j].position = next;
        let now = self.scenario.nearest_server(&next);
        ep.users[j].associated_server = now;
        task.migration_flag = previous.is_some() && now != previous;
        info.migrated = task.migration_flag;

        let fading: f64 = Exp1.sample(&mut ep.rngs.fading);
        let volume = match target {
            Some(i) => offloaded_volume(&task, i, true)?,
            None => T::zero(),
        };
        let cycles_out = match target {
            Some(i) => offloaded_cycles(&task, i, true)?,
            None => T::zero(),
        };
        info.offloaded = volume > T::zero();

        let data_ref = T::lit(cfg.data_size_range_bits.hi());
        let cost_ref = T::lit(cfg.cost_ref());
        let c_f = T::lit(cfg.migration_fixed_cost);
        let c_dt = T::lit(cfg.dt_migration_discrepancy);

        info.cache_hit = info.offloaded && target.is_some() && ep.cache[j] == target;
        if action.cache {
            let (dn, mn) = caching_normalize(task.data_bits, c_f * volume, data_ref, cost_ref);
            if target.is_some() && caching_feasible(dn, mn) {
                ep.cache[j] = target;
                task.cached_at = target;
            } else {
                info.cache_rejected = true;
            }
        }

        let user = ep.users[j].clone();
        let mut rates = vec![T::zero(); n_servers];
        if let Some(i) = target {
            let srv = &servers[i];
            let d_m = (next.distance(&srv.position) * T::lit(1000.0)).max(self.channel.reference_m);
            let ch = ChannelState::new(
                d_m,
                path_loss(d_m, self.channel.reference_m, self.channel.exponent)?,
                T::lit(fading),
            )?;
            rates[i] = self
                .channel
                .rate(user.tx_power_w, &ch, srv.noise_power_w, T::lit(cfg.bandwidth_hz), true)?;
            if info.offloaded && !(rates[i] > T::zero()) {
                return Err(Error::InfeasibleLink(format!("user {j} to server {i}: zero rate")));
            }
        }

        let opts = LatencyOptions {
            dt_gaps: info.dt_used,
            ..self.latency_opts
        };
        let latency = latency_breakdown(
            &task,
            &user,
            target.map(|i| (&servers[i], true)),
            target.map(|i| rates[i]).unwrap_or_else(T::zero),
            T::lit(cfg.queue_latency_s),
            opts,
        )?;
        let energy = energy_breakdown(
            &task,
            &user,
            servers,
            &association,
            &rates,
            &self.energy,
            info.dt_used as usize,
        )?;

        let mut migration = migration_cost(&task, &association, c_f, c_dt, false)?;
        let dt_migration = migration_cost(&task, &association, c_f, c_dt, true)?;
        if info.cache_hit {
            migration = T::zero();
        }
        let incurred = migration + T::lit(cfg.cost_per_cycle) * cycles_out;
        let w = satisfaction(
            latency.total_s,
            T::lit(cfg.latency_min_s),
            T::lit(cfg.latency_max_s),
            T::lit(cfg.baseline_satisfaction),
        );
        let score = qoe(w, user.budget, incurred, user.qoe_weights.0, user.qoe_weights.1)?;
        let discrepancy = match target {
            Some(i) if cycles_out > T::zero() => {
                let s = &servers[i];
                discrepancy_factor(cycles_out, s.cpu_freq_hz, s.cpu_freq_hz - s.dt_freq_dev_hz)?
            }
            _ => T::zero(),
        };
        let latency_norm = latency.total_s / T::lit(cfg.latency_max_s);
        let energy_norm = energy.total_j / T::lit(cfg.energy_ref());
        let objective = objective_value(latency_norm, energy_norm, score.value, &self.weights);
        if !objective.is_finite() {
            return Err(Error::Numeric(format!("objective {objective} at user {j}")));
        }

        info.latency_s = latency.total_s;
        info.energy_j = energy.total_j;
        info.qoe = score.value;

        ep.last_migration[j] = migration;
        ep.last_offloaded[j] = volume;
        ep.tasks[j] = self.sample_task(&mut ep.rngs.task);
        self.drift(ep);

        Ok((
            CostBreakdown {
                latency,
                energy,
                qoe: score,
                migration_cost: migration,
                dt_migration_cost: dt_migration,
                incurred_cost: incurred,
                discrepancy,
                latency_norm,
                energy_norm,
                objective,
            },
            info,
        ))
    }

    /// Random walk of the agent-visible estimates.
    fn drift(&self, ep: &mut Episode<T>) {
        let sd = self.scenario.config.dt_drift;
        let Ok(normal) = Normal::new(0.0, sd) else {
            return;
        };
        if sd <= 0.0 {
            return;
        }
        let clamp = |v: f64| T::lit(v.clamp(0.0, DT_RATIO_MAX));
        for r in ep.est_server_ratio.iter_mut().chain(ep.est_user_ratio.iter_mut()) {
            *r = clamp(r.as_f64() + normal.sample(&mut ep.rngs.twin));
        }
    }
}

impl<T: Scalar> Environment<T> for MecEnv<T> {
    fn state_dim(&self) -> usize {
        state_len(self.k)
    }

    fn action_count(&self) -> usize {
        MdpAction::space_size(self.k)
    }

    fn reset(&mut self, seed: u64) -> Result<MdpState<T>> {
        MecEnv::reset(self, seed)
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome<T>> {
        if self.episode.is_none() {
            return Err(Error::Lifecycle("step before reset".into()));
        }
        let a = MdpAction::decode(action, self.k)?;
        self.step_action(a)
    }
}

/// Per-step CSV log.
pub struct StepLog<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> StepLog<W> {
    pub const HEADER: [&'static str; 9] = [
        "episode", "step", "user", "action", "reward", "latency_s", "energy_j", "qoe", "migrated",
    ];

    pub fn new(inner: W) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(inner);
        writer.write_record(Self::HEADER)?;
        Ok(Self { writer })
    }

    pub fn record<T: Scalar>(&mut self, episode: usize, step: usize, outcome: &StepOutcome<T>) -> Result<()> {
        let i = &outcome.info;
        self.writer.write_record([
            episode.to_string(),
            step.to_string(),
            i.user.to_string(),
            i.action.to_string(),
            outcome.reward.as_f64().to_string(),
            i.latency_s.as_f64().to_string(),
            i.energy_j.as_f64().to_string(),
            i.qoe.as_f64().to_string(),
            (i.migrated as u8).to_string(),
        ])?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}
