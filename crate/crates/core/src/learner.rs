//! Clipped-surrogate policy-gradient training and greedy generation.
//!
//! The policy and the value function are separate fully connected
//! networks with hidden widths 128/256/128. Rollouts of 1250 steps feed
//! several epochs of minibatch updates on the clipped surrogate objective
//! with an entropy bonus and a squared-error value loss.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::env::{Env, EnvSpec, Observation, TerminationCause};
use crate::error::{Error, Result};
use crate::graph::{GraphConfig, GraphState};
use crate::nn::{Adam, Mlp, Real};

pub const HIDDEN: [usize; 3] = [128, 256, 128];
pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"GRPHPCG\0";

/// Separate policy and value networks.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel<T = f32> {
    /// Feature extractor (three hidden layers) plus the logits head.
    pub policy: Mlp<T>,
    /// Same hidden shape, scalar output.
    pub value: Mlp<T>,
}

impl<T: Real> PolicyModel<T> {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, action_count: usize, rng: &mut R) -> Self {
        let sqrt2 = std::f64::consts::SQRT_2;
        let policy_sizes = [obs_dim, HIDDEN[0], HIDDEN[1], HIDDEN[2], action_count];
        let value_sizes = [obs_dim, HIDDEN[0], HIDDEN[1], HIDDEN[2], 1];
        Self {
            policy: Mlp::new(&policy_sizes, &[sqrt2, sqrt2, sqrt2, 0.01], rng),
            value: Mlp::new(&value_sizes, &[sqrt2, sqrt2, sqrt2, 1.0], rng),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.input_dim()
    }

    pub fn action_count(&self) -> usize {
        self.policy.output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.policy.params().len() + self.value.params().len()
    }

    pub fn cast<U: Real>(&self) -> PolicyModel<U> {
        PolicyModel {
            policy: self.policy.cast(),
            value: self.value.cast(),
        }
    }
}

/// Categorical distribution over a flattened action space.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    pub log_probs: Vec<f32>,
}

impl Categorical {
    pub fn from_logits(logits: &[f32]) -> Self {
        Self {
            log_probs: log_softmax(logits),
        }
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn probs(&self) -> Vec<f32> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    pub fn entropy(&self) -> f32 {
        -self.log_probs.iter().map(|&l| l.exp() * l).sum::<f32>()
    }

    /// First index of the largest probability.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &l) in self.log_probs.iter().enumerate() {
            if l > self.log_probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f32 = rng.random();
        let mut acc = 0.0;
        for (i, &l) in self.log_probs.iter().enumerate() {
            acc += l.exp();
            if u < acc {
                return i;
            }
        }
        // rounding left a sliver above the cumulative sum
        self.log_probs
            .iter()
            .rposition(|l| l.is_finite())
            .unwrap_or(self.log_probs.len() - 1)
    }
}

fn log_softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|&z| (z - max).exp()).fold(T::zero(), |a, b| a + b).ln() + max;
    logits.iter().map(|&z| z - lse).collect()
}

/// Action distribution and value estimate for one observation.
pub fn policy_forward(model: &PolicyModel, obs: &Observation) -> Result<(Categorical, f32)> {
    check_obs(model, obs)?;
    let logits = model.policy.forward(&obs.data);
    let value = model.value.forward(&obs.data)[0];
    Ok((Categorical::from_logits(&logits), value))
}

fn check_obs(model: &PolicyModel, obs: &Observation) -> Result<()> {
    if obs.len() != model.obs_dim() {
        return Err(Error::Contract(format!(
            "observation of {} values does not fit a model expecting {}",
            obs.len(),
            model.obs_dim()
        )));
    }
    Ok(())
}

/// Hyperparameters of the update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub learning_rate: f32,
    pub gamma: f32,
    pub gae_lambda: f32,
    pub clip_range: f32,
    pub ent_coef: f32,
    pub vf_coef: f32,
    pub epochs: usize,
    pub minibatch: usize,
    pub max_grad_norm: f32,
    /// Decay the learning rate linearly to zero over training.
    #[serde(default)]
    pub anneal_lr: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_range: 0.2,
            ent_coef: 0.01,
            vf_coef: 0.5,
            epochs: 4,
            minibatch: 50,
            max_grad_norm: 0.5,
            anneal_lr: false,
        }
    }
}

pub const DEFAULT_ROLLOUT_LEN: usize = 1250;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub env: EnvSpec,
    pub total_steps: usize,
    pub rollout_len: usize,
    #[serde(flatten)]
    pub ppo: PpoConfig,
    pub seed: u64,
}

impl TrainSpec {
    pub fn new(env: EnvSpec, total_steps: usize, seed: u64) -> Self {
        Self {
            env,
            total_steps,
            rollout_len: DEFAULT_ROLLOUT_LEN,
            ppo: PpoConfig::default(),
            seed,
        }
    }

    pub fn updates(&self) -> usize {
        self.total_steps / self.rollout_len
    }

    pub fn validate(&self) -> Result<()> {
        if self.rollout_len == 0 || self.total_steps == 0 {
            return Err(Error::Config("total steps and rollout length must be positive".into()));
        }
        if self.total_steps % self.rollout_len != 0 {
            return Err(Error::Config(format!(
                "total steps {} are not a multiple of the rollout length {}; \
                 every update consumes one full rollout",
                self.total_steps, self.rollout_len
            )));
        }
        let p = &self.ppo;
        if p.minibatch == 0 || p.epochs == 0 {
            return Err(Error::Config("epochs and minibatch size must be positive".into()));
        }
        if !(p.learning_rate > 0.0 && p.clip_range > 0.0 && p.max_grad_norm > 0.0) {
            return Err(Error::Config("learning rate, clip range and gradient clip must be positive".into()));
        }
        if !((0.0..=1.0).contains(&p.gamma) && (0.0..=1.0).contains(&p.gae_lambda)) {
            return Err(Error::Config("gamma and lambda must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Fixed-length on-policy transitions.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub obs_dim: usize,
    pub obs: Vec<f32>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f32>,
    pub rewards: Vec<f32>,
    pub values: Vec<f32>,
    /// `dones[t]`: transition `t` ended its episode.
    pub dones: Vec<bool>,
    /// Value of the observation following the last transition.
    pub last_value: f32,
    pub advantages: Vec<f32>,
    pub returns: Vec<f32>,
    /// Finished episodes in this rollout: (return, valid).
    pub episodes: Vec<(f32, bool)>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Generalized advantage estimation with episode-boundary resets.
/// Returns unnormalized `(advantages, returns)`.
pub fn gae(
    rewards: &[f32],
    values: &[f32],
    dones: &[bool],
    last_value: f32,
    gamma: f32,
    lambda: f32,
) -> (Vec<f32>, Vec<f32>) {
    let len = rewards.len();
    let mut adv = vec![0.0f32; len];
    let mut running = 0.0f32;
    for t in (0..len).rev() {
        let next_value = if t + 1 < len { values[t + 1] } else { last_value };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Fills `advantages` (normalized to zero mean, unit variance) and `returns`.
pub fn compute_advantages(buffer: &mut RolloutBuffer, gamma: f32, lambda: f32) {
    let (mut adv, returns) = gae(
        &buffer.rewards,
        &buffer.values,
        &buffer.dones,
        buffer.last_value,
        gamma,
        lambda,
    );
    normalize(&mut adv);
    buffer.advantages = adv;
    buffer.returns = returns;
}

fn normalize(x: &mut [f32]) {
    if x.is_empty() {
        return;
    }
    let n = x.len() as f64;
    let mean = x.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = x.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    for v in x {
        *v = ((*v as f64 - mean) / std) as f32;
    }
}

/// Steps environments with the current policy; episodes continue across rollouts.
#[derive(Debug, Clone)]
pub struct RolloutCollector {
    env: Env,
    rng: ChaCha8Rng,
    obs: Observation,
    episode_return: f32,
}

impl RolloutCollector {
    pub fn new(mut env: Env, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs = env.reset(None, rng.random())?;
        Ok(Self {
            env,
            rng,
            obs,
            episode_return: 0.0,
        })
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    /// Collects exactly `length` transitions, resetting with freshly
    /// sampled configurations whenever an episode ends.
    pub fn collect(&mut self, model: &PolicyModel, length: usize) -> Result<RolloutBuffer> {
        check_obs(model, &self.obs)?;
        let obs_dim = model.obs_dim();
        let mut buf = RolloutBuffer {
            obs_dim,
            obs: Vec::with_capacity(length * obs_dim),
            actions: Vec::with_capacity(length),
            log_probs: Vec::with_capacity(length),
            rewards: Vec::with_capacity(length),
            values: Vec::with_capacity(length),
            dones: Vec::with_capacity(length),
            ..Default::default()
        };
        for _ in 0..length {
            let (dist, value) = policy_forward(model, &self.obs)?;
            let action = dist.sample(&mut self.rng);
            let out = self.env.step(action)?;
            buf.obs.extend_from_slice(&self.obs.data);
            buf.actions.push(action);
            buf.log_probs.push(dist.log_probs[action]);
            buf.rewards.push(out.reward);
            buf.values.push(value);
            buf.dones.push(out.done);
            self.episode_return += out.reward;
            if out.done {
                buf.episodes.push((self.episode_return, out.info.valid));
                self.episode_return = 0.0;
                self.obs = self.env.reset(None, self.rng.random())?;
            } else {
                self.obs = out.observation;
            }
        }
        buf.last_value = model.value.forward(&self.obs.data)[0];
        Ok(buf)
    }
}

/// A minibatch view in the network's float type.
pub struct Minibatch<'a, T> {
    pub obs: &'a [T],
    pub actions: &'a [usize],
    pub old_log_probs: &'a [T],
    pub advantages: &'a [T],
    pub returns: &'a [T],
}

impl<T> Minibatch<'_, T> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossStats {
    pub total: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Loss `-surrogate + vf_coef * value_mse - ent_coef * entropy`, averaged
/// over the minibatch. Gradients are accumulated into `grads` when given
/// (policy parameters first, value parameters second).
pub fn ppo_loss<T: Real>(
    model: &PolicyModel<T>,
    mb: &Minibatch<'_, T>,
    cfg: &PpoConfig,
    grads: Option<(&mut [T], &mut [T])>,
) -> LossStats {
    let b = mb.len();
    let a_dim = model.action_count();
    let bt = T::from_f64(b as f64);
    let clip = T::from_f64(cfg.clip_range as f64);
    let ent_coef = T::from_f64(cfg.ent_coef as f64);
    let vf_coef = T::from_f64(cfg.vf_coef as f64);
    let (lo, hi) = (T::one() - clip, T::one() + clip);

    let (logits, pcache) = model.policy.forward_batch(mb.obs, b);
    let (values, vcache) = model.value.forward_batch(mb.obs, b);

    let mut d_logits = vec![T::zero(); b * a_dim];
    let mut d_values = vec![T::zero(); b];
    let (mut pl, mut vl, mut ent, mut clipped) = (T::zero(), T::zero(), T::zero(), 0usize);
    for i in 0..b {
        let lp = log_softmax(&logits[i * a_dim..(i + 1) * a_dim]);
        let a = mb.actions[i];
        let adv = mb.advantages[i];
        let ratio = (lp[a] - mb.old_log_probs[i]).exp();
        let unclipped = ratio * adv;
        let clipped_obj = ratio.max(lo).min(hi) * adv;
        if ratio < lo || ratio > hi {
            clipped += 1;
        }
        pl -= unclipped.min(clipped_obj);
        let h = lp.iter().fold(T::zero(), |acc, &l| acc - l.exp() * l);
        ent += h;
        let err = values[i] - mb.returns[i];
        vl += err * err;

        // d(-min(...))/d logp_a: the unclipped branch carries the gradient
        // whenever it is the smaller one; otherwise the clipped branch is flat.
        let d_logp_a = if unclipped <= clipped_obj { -adv * ratio } else { T::zero() };
        let row = &mut d_logits[i * a_dim..(i + 1) * a_dim];
        for (j, d) in row.iter_mut().enumerate() {
            let p = lp[j].exp();
            let onehot = if j == a { T::one() } else { T::zero() };
            // policy term through log-softmax, entropy term -c * H
            *d = (d_logp_a * (onehot - p) + ent_coef * p * (lp[j] + h)) / bt;
        }
        d_values[i] = vf_coef * T::from_f64(2.0) * err / bt;
    }

    if let Some((gp, gv)) = grads {
        model.policy.backward_batch(&pcache, &d_logits, gp);
        model.value.backward_batch(&vcache, &d_values, gv);
    }

    let to = |v: T| v.to_f64().unwrap_or(f64::NAN);
    let policy_loss = to(pl / bt);
    let value_loss = to(vl / bt);
    let entropy = to(ent / bt);
    LossStats {
        total: policy_loss + cfg.vf_coef as f64 * value_loss - cfg.ent_coef as f64 * entropy,
        policy_loss,
        value_loss,
        entropy,
        clip_fraction: clipped as f64 / b.max(1) as f64,
    }
}

/// Optimizer state for both networks.
#[derive(Debug, Clone)]
pub struct Optimizer {
    policy: Adam,
    value: Adam,
}

impl Optimizer {
    pub fn new(model: &PolicyModel, lr: f32) -> Self {
        Self {
            policy: Adam::new(model.policy.params().len(), lr),
            value: Adam::new(model.value.params().len(), lr),
        }
    }
}

impl Optimizer {
    pub fn set_learning_rate(&mut self, lr: f32) {
        self.policy.lr = lr;
        self.value.lr = lr;
    }
}

/// Epochs of shuffled minibatch descent on [`ppo_loss`] with global
/// gradient-norm clipping. Returns statistics averaged over minibatches.
pub fn ppo_update<R: Rng + ?Sized>(
    model: &mut PolicyModel,
    opt: &mut Optimizer,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<LossStats> {
    if buffer.advantages.len() != buffer.len() || buffer.returns.len() != buffer.len() {
        return Err(Error::Contract("advantages must be computed before the update".into()));
    }
    let d = buffer.obs_dim;
    let mut order: Vec<usize> = (0..buffer.len()).collect();
    let mut sum = LossStats::default();
    let mut batches = 0usize;
    let mut gp = vec![0.0f32; model.policy.params().len()];
    let mut gv = vec![0.0f32; model.value.params().len()];
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch) {
            let mut obs = Vec::with_capacity(chunk.len() * d);
            for &i in chunk {
                obs.extend_from_slice(&buffer.obs[i * d..(i + 1) * d]);
            }
            let pick = |v: &[f32]| chunk.iter().map(|&i| v[i]).collect::<Vec<_>>();
            let actions: Vec<usize> = chunk.iter().map(|&i| buffer.actions[i]).collect();
            let (old, adv, ret) = (pick(&buffer.log_probs), pick(&buffer.advantages), pick(&buffer.returns));
            let mb = Minibatch {
                obs: &obs,
                actions: &actions,
                old_log_probs: &old,
                advantages: &adv,
                returns: &ret,
            };
            gp.fill(0.0);
            gv.fill(0.0);
            let stats = ppo_loss(model, &mb, cfg, Some((&mut gp, &mut gv)));
            if !stats.total.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss (policy {}, value {}, entropy {})",
                    stats.policy_loss, stats.value_loss, stats.entropy
                )));
            }
            let norm = gp.iter().chain(&gv).map(|&g| (g as f64) * (g as f64)).sum::<f64>().sqrt();
            if !norm.is_finite() {
                return Err(Error::Training("non-finite gradient".into()));
            }
            if norm > cfg.max_grad_norm as f64 {
                let scale = (cfg.max_grad_norm as f64 / (norm + 1e-6)) as f32;
                gp.iter_mut().chain(gv.iter_mut()).for_each(|g| *g *= scale);
            }
            opt.policy.step(model.policy.params_mut(), &gp);
            opt.value.step(model.value.params_mut(), &gv);
            sum.total += stats.total;
            sum.policy_loss += stats.policy_loss;
            sum.value_loss += stats.value_loss;
            sum.entropy += stats.entropy;
            sum.clip_fraction += stats.clip_fraction;
            batches += 1;
        }
    }
    let k = batches.max(1) as f64;
    Ok(LossStats {
        total: sum.total / k,
        policy_loss: sum.policy_loss / k,
        value_loss: sum.value_loss / k,
        entropy: sum.entropy / k,
        clip_fraction: sum.clip_fraction / k,
    })
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub update: usize,
    pub steps: usize,
    pub mean_reward: f64,
    pub validity_rate: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub steps_trained: usize,
    pub updates: usize,
    pub spec_hash: String,
    pub seed: u64,
}

/// A trained model with everything needed to reproduce or reuse it.
#[derive(Debug, Clone)]
pub struct ModelArtifact {
    pub model: PolicyModel,
    pub train_spec: TrainSpec,
    pub constraints: ConstraintSet,
    pub metadata: ModelMetadata,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    train_spec: TrainSpec,
    constraints: String,
    metadata: ModelMetadata,
    policy_sizes: Vec<usize>,
    value_sizes: Vec<usize>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Stable hash of the environment spec and constraint text.
pub fn spec_hash(spec: &EnvSpec, cs: &ConstraintSet) -> String {
    let mut bytes = serde_json::to_vec(spec).expect("spec serializes");
    bytes.extend_from_slice(cs.source().as_bytes());
    format!("{:016x}", fnv1a(&bytes))
}

impl ModelArtifact {
    pub fn env_spec(&self) -> &EnvSpec {
        &self.train_spec.env
    }

    pub fn max_size(&self) -> usize {
        self.train_spec.env.max_size
    }

    pub fn make_env(&self) -> Result<Env> {
        Env::new(self.train_spec.env.clone(), self.constraints.clone())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format_version: FORMAT_VERSION,
            train_spec: self.train_spec.clone(),
            constraints: self.constraints.source().to_string(),
            metadata: self.metadata.clone(),
            policy_sizes: self.model.policy.sizes().to_vec(),
            value_sizes: self.model.value.sizes().to_vec(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + 4 * self.model.num_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for p in self.model.policy.params().iter().chain(self.model.value.params()) {
            out.extend_from_slice(&p.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a model artifact"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        let floats: Vec<f32> = bytes[16 + hlen..]
            .chunks(4)
            .map(|c| c.try_into().map(f32::from_le_bytes))
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("parameter block is not a whole number of floats"))?;
        let np: usize = header.policy_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if floats.len() < np {
            return Err(bad("parameter block too short"));
        }
        let policy = Mlp::from_params(&header.policy_sizes, floats[..np].to_vec())
            .ok_or_else(|| bad("policy parameter count mismatch"))?;
        let value = Mlp::from_params(&header.value_sizes, floats[np..].to_vec())
            .ok_or_else(|| bad("value parameter count mismatch"))?;
        let constraints = ConstraintSet::parse(&header.constraints)?;
        let artifact = Self {
            model: PolicyModel { policy, value },
            train_spec: header.train_spec,
            constraints,
            metadata: header.metadata,
        };
        let env = artifact.make_env()?;
        let shape = env.observation_shape();
        if artifact.model.obs_dim() != shape.iter().product::<usize>()
            || artifact.model.action_count() != env.spec().action_count()
        {
            return Err(bad("network shape does not match the embedded environment"));
        }
        Ok(artifact)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub artifact: ModelArtifact,
    pub log: Vec<TrainLogRow>,
}

/// Alternates rollout collection and updates until `total_steps`.
pub fn train(spec: &TrainSpec, cs: &ConstraintSet) -> Result<TrainOutcome> {
    train_with(spec, cs, |_| {})
}

/// As [`train`], calling `on_update` after every update.
pub fn train_with(
    spec: &TrainSpec,
    cs: &ConstraintSet,
    mut on_update: impl FnMut(&TrainLogRow),
) -> Result<TrainOutcome> {
    spec.validate()?;
    let env = Env::new(spec.env.clone(), cs.clone())?;
    let obs_dim: usize = env.observation_shape().iter().product();
    let action_count = env.spec().action_count();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut model = PolicyModel::<f32>::new(obs_dim, action_count, &mut rng);
    let mut opt = Optimizer::new(&model, spec.ppo.learning_rate);
    let mut collector = RolloutCollector::new(env, rng.random())?;

    let mut log = Vec::with_capacity(spec.updates());
    let mut last_reward = 0.0;
    let mut last_validity = 0.0;
    for update in 1..=spec.updates() {
        if spec.ppo.anneal_lr {
            let frac = 1.0 - (update - 1) as f32 / spec.updates() as f32;
            opt.set_learning_rate(spec.ppo.learning_rate * frac);
        }
        let mut buffer = collector.collect(&model, spec.rollout_len)?;
        compute_advantages(&mut buffer, spec.ppo.gamma, spec.ppo.gae_lambda);
        let stats = ppo_update(&mut model, &mut opt, &buffer, &spec.ppo, &mut rng)?;
        if !buffer.episodes.is_empty() {
            let k = buffer.episodes.len() as f64;
            last_reward = buffer.episodes.iter().map(|e| e.0 as f64).sum::<f64>() / k;
            last_validity = buffer.episodes.iter().filter(|e| e.1).count() as f64 / k;
        }
        let row = TrainLogRow {
            update,
            steps: update * spec.rollout_len,
            mean_reward: last_reward,
            validity_rate: last_validity,
            entropy: stats.entropy,
        };
        on_update(&row);
        log.push(row);
    }

    let metadata = ModelMetadata {
        steps_trained: spec.updates() * spec.rollout_len,
        updates: spec.updates(),
        spec_hash: spec_hash(&spec.env, cs),
        seed: spec.seed,
    };
    Ok(TrainOutcome {
        artifact: ModelArtifact {
            model,
            train_spec: spec.clone(),
            constraints: cs.clone(),
            metadata,
        },
        log,
    })
}

/// Writes the training log as CSV.
pub fn write_train_log(path: impl AsRef<Path>, rows: &[TrainLogRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub observation: Option<Observation>,
    pub action: usize,
    pub reward: f32,
    pub changed: bool,
}

/// Record of one generation episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub steps: Vec<TraceStep>,
    /// `None` when the initial graph was already valid.
    pub termination: Option<TerminationCause>,
    pub valid: bool,
    pub iterations: usize,
    pub changes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GenerateOptions {
    /// Sample actions instead of taking the most likely one.
    pub stochastic: bool,
    /// Keep each step's observation in the trace.
    pub record_observations: bool,
}

/// Runs one episode from a random start for `config`.
pub fn generate(
    artifact: &ModelArtifact,
    config: &GraphConfig,
    seed: u64,
) -> Result<(GraphState, EpisodeTrace)> {
    let mut env = artifact.make_env()?;
    generate_in(&mut env, &artifact.model, config, seed, GenerateOptions::default())
}

/// Episode loop on a caller-owned environment (reused across runs by benchmarks).
pub fn generate_in(
    env: &mut Env,
    model: &PolicyModel,
    config: &GraphConfig,
    seed: u64,
    opts: GenerateOptions,
) -> Result<(GraphState, EpisodeTrace)> {
    if config.size() > env.spec().max_size {
        return Err(Error::Config(format!(
            "configuration size {} exceeds the model's maximum size {}",
            config.size(),
            env.spec().max_size
        )));
    }
    let mut obs = env.reset(Some(config), seed)?;
    check_obs(model, &obs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut steps = Vec::new();
    let mut termination = None;
    if !env.is_valid() {
        loop {
            let logits = model.policy.forward(&obs.data);
            let dist = Categorical::from_logits(&logits);
            let action = if opts.stochastic { dist.sample(&mut rng) } else { dist.argmax() };
            let out = env.step(action)?;
            steps.push(TraceStep {
                observation: opts.record_observations.then(|| obs.clone()),
                action,
                reward: out.reward,
                changed: out.info.changed,
            });
            obs = out.observation;
            if out.done {
                termination = out.info.termination;
                break;
            }
        }
    }
    let trace = EpisodeTrace {
        steps,
        termination,
        valid: env.is_valid(),
        iterations: env.iterations(),
        changes: env.changes(),
    };
    Ok((env.state().clone(), trace))
}
