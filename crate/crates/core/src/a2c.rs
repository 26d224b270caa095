//! Advantage actor-critic: one update per environment step, softmax policy
//! over flat action indices, scalar state-value critic.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Environment, MdpAction, MdpState, StepInfo, StepLog, StepOutcome};
use crate::error::{Error, Result};
use crate::nn::{softmax_policy, Direction, Network};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub actor_rate: f64,
    pub critic_rate: f64,
    pub episodes: usize,
    pub max_steps: usize,
    pub discount: f64,
    pub entropy_bonus: f64,
    /// Episodes between progress log lines; 0 disables them.
    pub eval_interval: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    /// Rewards are clamped to ±this before entering the update. Recorded
    /// rewards are never clipped. `None` disables it.
    pub reward_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            actor_rate: 3e-2,
            critic_rate: 1e-2,
            episodes: 100,
            max_steps: 50,
            discount: 0.99,
            entropy_bonus: 0.01,
            eval_interval: 10,
            seed: 42,
            hidden: vec![128, 128, 128],
            reward_clip: Some(2.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let rate = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(name, format!("must be > 0, got {v}")))
            }
        };
        rate("actor_rate", self.actor_rate)?;
        rate("critic_rate", self.critic_rate)?;
        if self.max_steps == 0 {
            return Err(Error::config("max_steps", "must be >= 1"));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::config("discount", format!("must lie in (0, 1], got {}", self.discount)));
        }
        if !(self.entropy_bonus >= 0.0) {
            return Err(Error::config("entropy_bonus", "must be >= 0"));
        }
        if let Some(c) = self.reward_clip {
            if !(c > 0.0) {
                return Err(Error::config("reward_clip", format!("must be > 0, got {c}")));
            }
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::config("hidden", "widths must be >= 1"));
        }
        Ok(())
    }

    /// Seed of the environment reset for `episode`.
    pub fn episode_seed(&self, episode: usize) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(episode as u64 + 1)
    }
}

/// Aggregates of one episode.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub total_reward: f64,
    pub scaled_reward: f64,
    /// Sum over the episode.
    pub energy_j: f64,
    /// Mean per step.
    pub latency_s: f64,
    /// Mean per step.
    pub qoe: f64,
    pub migrations: usize,
    pub cache_hits: usize,
}

impl EpisodeRecord {
    pub const HEADER: [&'static str; 8] = [
        "episode",
        "total_reward",
        "scaled_reward",
        "energy_j",
        "latency_s",
        "qoe",
        "migrations",
        "cache_hits",
    ];
}

#[derive(Debug, Default)]
struct Accum {
    reward: f64,
    energy: f64,
    latency: f64,
    qoe: f64,
    migrations: usize,
    cache_hits: usize,
    steps: usize,
}

impl Accum {
    fn add<T: Scalar>(&mut self, reward: T, info: &StepInfo<T>) {
        self.reward += reward.as_f64();
        self.energy += info.energy_j.as_f64();
        self.latency += info.latency_s.as_f64();
        self.qoe += info.qoe.as_f64();
        self.migrations += info.migrated as usize;
        self.cache_hits += info.cache_hit as usize;
        self.steps += 1;
    }

    fn finish(self, episode: usize) -> EpisodeRecord {
        let n = self.steps.max(1) as f64;
        EpisodeRecord {
            episode,
            total_reward: self.reward,
            scaled_reward: 0.0,
            energy_j: self.energy,
            latency_s: self.latency / n,
            qoe: self.qoe / n,
            migrations: self.migrations,
            cache_hits: self.cache_hits,
        }
    }
}

/// Maps episode totals affinely onto [−1, 1]; a flat run maps to 0.
pub fn scale_rewards(records: &mut [EpisodeRecord]) {
    let lo = records.iter().map(|r| r.total_reward).fold(f64::INFINITY, f64::min);
    let hi = records.iter().map(|r| r.total_reward).fold(f64::NEG_INFINITY, f64::max);
    for r in records.iter_mut() {
        r.scaled_reward = if hi > lo {
            2.0 * (r.total_reward - lo) / (hi - lo) - 1.0
        } else {
            0.0
        };
    }
}

pub fn write_records<W: Write>(records: &[EpisodeRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EpisodeRecord::HEADER)?;
    for r in records {
        w.write_record([
            r.episode.to_string(),
            r.total_reward.to_string(),
            r.scaled_reward.to_string(),
            r.energy_j.to_string(),
            r.latency_s.to_string(),
            r.qoe.to_string(),
            r.migrations.to_string(),
            r.cache_hits.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainReport<T> {
    pub records: Vec<EpisodeRecord>,
    pub actor: Network<T>,
    pub critic: Network<T>,
}

impl<T> TrainReport<T> {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_records(&self.records, out)
    }

    /// Mean of `f` over the last `n` records.
    pub fn tail_mean(&self, n: usize, f: impl Fn(&EpisodeRecord) -> f64) -> f64 {
        tail_mean(&self.records, n, f)
    }
}

pub fn tail_mean(records: &[EpisodeRecord], n: usize, f: impl Fn(&EpisodeRecord) -> f64) -> f64 {
    let tail = &records[records.len().saturating_sub(n)..];
    if tail.is_empty() {
        return f64::NAN;
    }
    tail.iter().map(f).sum::<f64>() / tail.len() as f64
}

/// Actor and critic with widths `state → hidden… → actions` and `state → hidden… → 1`.
pub fn build_networks<T: Scalar>(
    state_dim: usize,
    action_count: usize,
    hidden: &[usize],
    seed: u64,
) -> Result<(Network<T>, Network<T>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(11);
    let dims = |out: usize| {
        let mut d = vec![state_dim];
        d.extend_from_slice(hidden);
        d.push(out);
        d
    };
    let actor = Network::new(&dims(action_count), &mut rng)?;
    let critic = Network::new(&dims(1), &mut rng)?;
    Ok((actor, critic))
}

fn sample_index<T: Scalar, R: Rng + ?Sized>(probs: &[T], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p.as_f64();
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Flat action index from the actor: a softmax sample, or the argmax
/// (lowest index on ties) when `greedy`.
pub fn select_action<T: Scalar, R: Rng + ?Sized>(
    actor: &Network<T>,
    state: &[T],
    action_count: usize,
    rng: &mut R,
    greedy: bool,
) -> Result<usize> {
    if actor.output_width() != action_count {
        return Err(Error::Shape(format!(
            "actor has {} outputs, action space has {action_count}",
            actor.output_width()
        )));
    }
    let logits = actor.forward(state)?;
    if greedy {
        Ok(argmax(&logits))
    } else {
        Ok(sample_index(&softmax_policy(&logits), rng))
    }
}

/// [`select_action`] decoded for an environment with `candidates` slots.
pub fn select_mdp_action<T: Scalar, R: Rng + ?Sized>(
    actor: &Network<T>,
    state: &MdpState<T>,
    candidates: usize,
    rng: &mut R,
    greedy: bool,
) -> Result<MdpAction> {
    let n = MdpAction::space_size(candidates);
    MdpAction::decode(select_action(actor, state.as_slice(), n, rng, greedy)?, candidates)
}

/// Â = r + γ·V(s')·(1 − terminal) − V(s). Also the TD error δ.
pub fn advantage_estimate<T: Scalar>(r_next: T, v_next: T, v_now: T, discount: T, terminal: bool) -> T {
    let bootstrap = if terminal { T::zero() } else { discount * v_next };
    r_next + bootstrap - v_now
}

/// TD error used by online fine-tuning; same function as the advantage.
pub fn td_error<T: Scalar>(r_next: T, v_next: T, v_now: T, discount: T, terminal: bool) -> T {
    advantage_estimate(r_next, v_next, v_now, discount, terminal)
}

/// Gradient of Â·log π(a) + β·H(π) with respect to the logits.
pub fn actor_logit_gradient<T: Scalar>(probs: &[T], action: usize, advantage: T, entropy_bonus: T) -> Vec<T> {
    let entropy: T = -probs
        .iter()
        .filter(|&&p| p > T::zero())
        .map(|&p| p * p.ln())
        .sum::<T>();
    probs
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let onehot = if k == action { T::one() } else { T::zero() };
            let log_p = if p > T::zero() { p.ln() } else { T::zero() };
            advantage * (onehot - p) - entropy_bonus * p * (log_p + entropy)
        })
        .collect()
}

/// Reward as seen by the learner.
pub fn learning_reward<T: Scalar>(reward: T, clip: Option<f64>) -> T {
    match clip {
        Some(c) => reward.max(T::lit(-c)).min(T::lit(c)),
        None => reward,
    }
}

/// One actor-critic update from a single transition.
#[allow(clippy::too_many_arguments)]
pub fn a2c_update<T: Scalar>(
    actor: &mut Network<T>,
    critic: &mut Network<T>,
    state: &[T],
    action: usize,
    reward: T,
    next_state: &[T],
    terminal: bool,
    discount: T,
    entropy_bonus: T,
    actor_rate: T,
    critic_rate: T,
) -> Result<T> {
    let critic_trace = critic.trace(state)?;
    let v_now = critic_trace.output()[0];
    let v_next = if terminal {
        T::zero()
    } else {
        critic.forward(next_state)?[0]
    };
    let adv = advantage_estimate(reward, v_next, v_now, discount, terminal);
    if !adv.is_finite() {
        return Err(Error::Numeric(format!(
            "advantage {adv} (reward {reward}, v {v_now} -> {v_next})"
        )));
    }

    let actor_trace = actor.trace(state)?;
    let probs = softmax_policy(actor_trace.output());
    let g_actor = actor.backward_trace(&actor_trace, &actor_logit_gradient(&probs, action, adv, entropy_bonus))?;

    // d(Â²)/dθ = −2Â ∇V, so descent on Â² is ascent along 2Â∇V.
    let g_critic = critic
        .backward_trace(&critic_trace, &[T::one()])?
        .scaled(T::two() * adv);

    actor.apply_update_mut(&g_actor, actor_rate, Direction::Ascent)?;
    critic.apply_update_mut(&g_critic, critic_rate, Direction::Ascent)?;
    Ok(adv)
}

fn check_dims<T: Scalar, E: Environment<T>>(env: &E, actor: &Network<T>, critic: &Network<T>) -> Result<()> {
    if actor.input_width() != env.state_dim() || critic.input_width() != env.state_dim() {
        return Err(Error::Shape(format!(
            "state has {} features, actor takes {}, critic takes {}",
            env.state_dim(),
            actor.input_width(),
            critic.input_width()
        )));
    }
    if actor.output_width() != env.action_count() {
        return Err(Error::Shape(format!(
            "actor has {} outputs, action space has {}",
            actor.output_width(),
            env.action_count()
        )));
    }
    if critic.output_width() != 1 {
        return Err(Error::Shape("critic must have one output".into()));
    }
    Ok(())
}

pub fn train<T: Scalar, E: Environment<T>>(
    env: &mut E,
    actor: Network<T>,
    critic: Network<T>,
    cfg: &TrainConfig,
) -> Result<TrainReport<T>> {
    train_logged::<T, E, std::io::Sink>(env, actor, critic, cfg, None)
}

/// [`train`] with an optional per-step log.
pub fn train_logged<T: Scalar, E: Environment<T>, W: Write>(
    env: &mut E,
    mut actor: Network<T>,
    mut critic: Network<T>,
    cfg: &TrainConfig,
    mut log: Option<&mut StepLog<W>>,
) -> Result<TrainReport<T>> {
    cfg.validate()?;
    check_dims(env, &actor, &critic)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(7);
    let discount = T::lit(cfg.discount);
    let entropy = T::lit(cfg.entropy_bonus);
    let (ra, rc) = (T::lit(cfg.actor_rate), T::lit(cfg.critic_rate));
    let n_actions = env.action_count();

    let mut records = Vec::with_capacity(cfg.episodes);
    for ep in 0..cfg.episodes {
        let mut state = env.reset(cfg.episode_seed(ep))?;
        let mut acc = Accum::default();
        for t in 0..cfg.max_steps {
            let a = select_action(&actor, state.as_slice(), n_actions, &mut rng, false)?;
            let out: StepOutcome<T> = env.step(a)?;
            if let Some(l) = log.as_deref_mut() {
                l.record(ep, t, &out)?;
            }
            a2c_update(
                &mut actor,
                &mut critic,
                state.as_slice(),
                a,
                learning_reward(out.reward, cfg.reward_clip),
                out.next_state.as_slice(),
                out.done,
                discount,
                entropy,
                ra,
                rc,
            )
            .map_err(|e| match e {
                Error::Numeric(m) => Error::Numeric(format!("episode {ep} step {t} action {a}: {m}")),
                other => other,
            })?;
            acc.add(out.reward, &out.info);
            let done = out.done;
            state = out.next_state;
            if done {
                break;
            }
        }
        let rec = acc.finish(ep);
        if cfg.eval_interval > 0 && (ep + 1) % cfg.eval_interval == 0 {
            log::info!(
                "episode {}: reward {:.4}, energy {:.4} J, qoe {:.4}",
                ep,
                rec.total_reward,
                rec.energy_j,
                rec.qoe
            );
        }
        records.push(rec);
    }
    scale_rewards(&mut records);
    if let Some(l) = log {
        l.flush()?;
    }
    Ok(TrainReport { records, actor, critic })
}

/// Early-exit rule: block means over non-overlapping windows, stable when
/// the relative change between consecutive blocks is below the tolerance.
#[derive(Debug, Clone)]
pub struct ConvergenceMonitor {
    pub window: usize,
    pub tolerance: f64,
    pub required: usize,
    block_sum: f64,
    block_len: usize,
    previous: Option<f64>,
    stable: usize,
}

impl Default for ConvergenceMonitor {
    fn default() -> Self {
        Self::new(20, 0.01, 3)
    }
}

impl ConvergenceMonitor {
    pub fn new(window: usize, tolerance: f64, required: usize) -> Self {
        Self {
            window: window.max(1),
            tolerance,
            required,
            block_sum: 0.0,
            block_len: 0,
            previous: None,
            stable: 0,
        }
    }

    /// Feeds one episode reward; true once converged.
    pub fn push(&mut self, reward: f64) -> bool {
        self.block_sum += reward;
        self.block_len += 1;
        if self.block_len < self.window {
            return false;
        }
        let mean = self.block_sum / self.window as f64;
        self.block_sum = 0.0;
        self.block_len = 0;
        if let Some(prev) = self.previous {
            let change = (mean - prev).abs() / prev.abs().max(1e-12);
            if (mean - prev).abs() == 0.0 || change < self.tolerance {
                self.stable += 1;
            } else {
                self.stable = 0;
            }
        }
        self.previous = Some(mean);
        self.stable >= self.required
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferConfig {
    pub episodes: usize,
    pub max_steps: usize,
    /// No parameter updates.
    pub frozen: bool,
    /// Argmax instead of sampling.
    pub greedy: bool,
    /// Stop early once [`ConvergenceMonitor`] fires.
    pub early_exit: bool,
    pub seed: u64,
    pub discount: f64,
    pub entropy_bonus: f64,
    pub actor_rate: f64,
    pub critic_rate: f64,
    pub reward_clip: Option<f64>,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            episodes: 20,
            max_steps: 50,
            frozen: true,
            greedy: true,
            early_exit: false,
            seed: 7,
            discount: 0.99,
            entropy_bonus: 0.0,
            actor_rate: 1e-4,
            critic_rate: 1e-4,
            reward_clip: Some(2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferReport {
    pub records: Vec<EpisodeRecord>,
    /// Episode index at which the early-exit rule fired.
    pub converged_at: Option<usize>,
}

/// Rollouts with trained networks, frozen or with online TD updates.
pub fn infer_offloading<T: Scalar, E: Environment<T>>(
    env: &mut E,
    actor: &mut Network<T>,
    critic: &mut Network<T>,
    cfg: &InferConfig,
) -> Result<InferReport> {
    check_dims(env, actor, critic)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(9);
    let n_actions = env.action_count();
    let mut monitor = ConvergenceMonitor::default();
    let mut records = Vec::with_capacity(cfg.episodes);
    let mut converged_at = None;
    let seeds = TrainConfig {
        seed: cfg.seed,
        ..TrainConfig::default()
    };
    for ep in 0..cfg.episodes {
        let mut state = env.reset(seeds.episode_seed(ep))?;
        let mut acc = Accum::default();
        for _ in 0..cfg.max_steps {
            let a = select_action(actor, state.as_slice(), n_actions, &mut rng, cfg.greedy)?;
            let out = env.step(a)?;
            if !cfg.frozen {
                a2c_update(
                    actor,
                    critic,
                    state.as_slice(),
                    a,
                    learning_reward(out.reward, cfg.reward_clip),
                    out.next_state.as_slice(),
                    out.done,
                    T::lit(cfg.discount),
                    T::lit(cfg.entropy_bonus),
                    T::lit(cfg.actor_rate),
                    T::lit(cfg.critic_rate),
                )?;
            }
            acc.add(out.reward, &out.info);
            let done = out.done;
            state = out.next_state;
            if done {
                break;
            }
        }
        let rec = acc.finish(ep);
        records.push(rec);
        if monitor.push(rec.total_reward) && converged_at.is_none() {
            converged_at = Some(ep + 1);
            if cfg.early_exit {
                break;
            }
        }
    }
    scale_rewards(&mut records);
    Ok(InferReport { records, converged_at })
}

/// Single-state bandit: every step is terminal and pays `rewards[action]`.
#[derive(Debug, Clone)]
pub struct BanditEnv {
    pub rewards: Vec<f64>,
}

impl<T: Scalar> Environment<T> for BanditEnv {
    fn state_dim(&self) -> usize {
        1
    }

    fn action_count(&self) -> usize {
        self.rewards.len()
    }

    fn reset(&mut self, _seed: u64) -> Result<MdpState<T>> {
        Ok(MdpState { features: vec![T::one()] })
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome<T>> {
        let r = *self
            .rewards
            .get(action)
            .ok_or_else(|| Error::Shape(format!("action {action}")))?;
        Ok(StepOutcome {
            next_state: MdpState { features: vec![T::one()] },
            reward: T::lit(r),
            cost: Default::default(),
            done: true,
            info: StepInfo {
                action,
                ..Default::default()
            },
        })
    }
}

/// Single-state, never-terminating env paying a constant reward.
#[derive(Debug, Clone)]
pub struct ConstantEnv {
    pub reward: f64,
    pub actions: usize,
}

impl<T: Scalar> Environment<T> for ConstantEnv {
    fn state_dim(&self) -> usize {
        1
    }

    fn action_count(&self) -> usize {
        self.actions
    }

    fn reset(&mut self, _seed: u64) -> Result<MdpState<T>> {
        Ok(MdpState { features: vec![T::one()] })
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome<T>> {
        Ok(StepOutcome {
            next_state: MdpState { features: vec![T::one()] },
            reward: T::lit(self.reward),
            cost: Default::default(),
            done: false,
            info: StepInfo {
                action,
                ..Default::default()
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn advantage_examples() {
        assert_eq!(advantage_estimate(0.0, 3.0, 3.0, 1.0, false), 0.0);
        assert!((advantage_estimate(1.0, 2.0, 1.5, 0.99, false) - 1.48_f64).abs() < 1e-12);
        assert_eq!(advantage_estimate(1.0, 123.0, 0.25, 0.99, true), 0.75);
    }

    #[test]
    fn td_error_is_advantage() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let (r, a, b, g): (f64, f64, f64, f64) = (rng.random(), rng.random(), rng.random(), rng.random());
            let t = rng.random::<bool>();
            assert_eq!(advantage_estimate(r, a, b, g, t), td_error(r, a, b, g, t));
        }
    }

    #[test]
    fn constant_stream_converges_at_80() {
        let mut m = ConvergenceMonitor::default();
        let hit = (1..=200).find(|_| m.push(-3.5));
        assert_eq!(hit, Some(80));
    }

    #[test]
    fn drifting_stream_never_converges() {
        let mut m = ConvergenceMonitor::default();
        assert!(!(0..200).any(|i| m.push(-(i as f64) * 0.5 - 1.0)));
    }

    #[test]
    fn one_action_space() {
        let actor = Network::<f64>::new(&[1, 4, 1], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(select_action(&actor, &[1.0], 1, &mut rng, false).unwrap(), 0);
        }
    }

    #[test]
    fn width_mismatch_is_shape_error() {
        let actor = Network::<f64>::new(&[1, 4, 3], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(select_action(&actor, &[1.0], 4, &mut rng, false), Err(Error::Shape(_))));
    }

    #[test]
    fn scaled_rewards_span_unit_interval() {
        let mut recs: Vec<EpisodeRecord> = [3.0, -1.0, 1.0]
            .iter()
            .enumerate()
            .map(|(i, &r)| EpisodeRecord {
                episode: i,
                total_reward: r,
                ..Default::default()
            })
            .collect();
        scale_rewards(&mut recs);
        let s: Vec<f64> = recs.iter().map(|r| r.scaled_reward).collect();
        assert_eq!(s, vec![1.0, -1.0, 0.0]);
    }

    #[test]
    fn entropy_gradient_matches_finite_difference() {
        let logits = [0.3_f64, -1.2, 0.7, 0.1];
        let h = |z: &[f64]| -> f64 {
            softmax_policy(z).iter().map(|p| -p * p.ln()).sum()
        };
        let p = softmax_policy(&logits);
        let g = actor_logit_gradient(&p, 0, 0.0, 1.0);
        for k in 0..4 {
            let mut up = logits;
            let mut dn = logits;
            up[k] += 1e-6;
            dn[k] -= 1e-6;
            let fd = (h(&up) - h(&dn)) / 2e-6;
            assert!((g[k] - fd).abs() < 1e-7, "{k}: {} vs {fd}", g[k]);
        }
    }
}
