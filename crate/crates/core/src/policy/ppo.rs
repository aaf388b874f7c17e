//! Masked categorical distributions, advantage estimation and the clipped
//! PPO objective with its gradient.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::net::{Adam, Observation, PolicyNet};
use crate::env::ActionMask;
use crate::error::{Error, Result};

/// Categorical distribution restricted to the valid actions of a mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedCategorical {
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
}

impl MaskedCategorical {
    /// Log-softmax over `logits`, which belong to `actions` in order.
    pub fn from_valid_logits(actions: Vec<usize>, logits: &[f64]) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::NoValidAction);
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        let log_probs: Vec<f64> = logits.iter().map(|z| z - lse).collect();
        if log_probs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("masked log-probabilities".into()));
        }
        Ok(Self { actions, log_probs })
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    /// Probability of a flat action index; zero outside the mask.
    pub fn prob(&self, action: usize) -> f64 {
        self.position(action).map_or(0.0, |k| self.log_probs[k].exp())
    }

    pub fn position(&self, action: usize) -> Option<usize> {
        self.actions.binary_search(&action).ok()
    }

    pub fn entropy(&self) -> f64 {
        -self.log_probs.iter().map(|l| l.exp() * l).sum::<f64>()
    }

    /// Position (into `actions`) of a draw by inverse CDF.
    pub fn sample_position(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (k, l) in self.log_probs.iter().enumerate() {
            acc += l.exp();
            if u < acc {
                return k;
            }
        }
        self.actions.len() - 1
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        self.actions[self.sample_position(rng)]
    }

    /// Most probable action, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for k in 1..self.log_probs.len() {
            if self.log_probs[k] > self.log_probs[best] {
                best = k;
            }
        }
        self.actions[best]
    }
}

/// Masks full-length logits; invalid entries act as negative infinity.
pub fn masked_distribution(logits: &[f64], mask: &ActionMask) -> Result<MaskedCategorical> {
    let actions = mask.valid_indices();
    let valid: Vec<f64> = actions.iter().map(|&a| logits[a]).collect();
    MaskedCategorical::from_valid_logits(actions, &valid)
}

/// `A_t = sum_k (gamma*lambda)^k delta_{t+k}`, with `values` one longer than
/// `rewards` (the bootstrap value last). Returns `(advantages, returns)`.
pub fn gae_advantages(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(values.len(), rewards.len() + 1, "values carry a bootstrap entry");
    assert_eq!(dones.len(), rewards.len());
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    pub learning_rate: f64,
    pub rollout_horizon: usize,
    pub minibatch_size: usize,
    pub epochs_per_update: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub total_env_steps: u64,
    pub seed: u64,
    pub hidden: Vec<usize>,
    /// Global gradient-norm clip; 0 disables it.
    pub max_grad_norm: f64,
    /// Multiplier applied to environment rewards before advantage estimation.
    pub reward_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            learning_rate: 3e-4,
            rollout_horizon: 512,
            minibatch_size: 128,
            epochs_per_update: 4,
            entropy_coef: 0.01,
            value_coef: 0.5,
            total_env_steps: 50_000,
            seed: 0,
            hidden: vec![256, 256],
            max_grad_norm: 0.5,
            reward_scale: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::Config(format!("{field}: {msg}")));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma", "must be in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda", "must be in [0, 1]");
        }
        if !(self.clip_epsilon > 0.0) {
            return bad("clip_epsilon", "must be > 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive");
        }
        if self.rollout_horizon == 0 {
            return bad("rollout_horizon", "must be >= 1");
        }
        if self.minibatch_size == 0 {
            return bad("minibatch_size", "must be >= 1");
        }
        if self.epochs_per_update == 0 {
            return bad("epochs_per_update", "must be >= 1");
        }
        if !(self.entropy_coef >= 0.0) || !(self.value_coef >= 0.0) {
            return bad("entropy_coef/value_coef", "must be >= 0");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden", "needs at least one positive width");
        }
        if !(self.max_grad_norm >= 0.0) {
            return bad("max_grad_norm", "must be >= 0");
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return bad("reward_scale", "must be positive");
        }
        Ok(())
    }
}

/// One stored transition. The valid set is kept so updates renormalize over
/// exactly the actions that were available.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub obs: Observation,
    pub valid: Vec<usize>,
    /// Position of the taken action inside `valid`.
    pub choice: usize,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Clipped surrogate `min(r A, clip(r, 1-eps, 1+eps) A)` and its derivative in `r`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * advantage;
    if unclipped <= clipped {
        (unclipped, advantage)
    } else {
        (clipped, 0.0)
    }
}

const CHUNK: usize = 16;

/// Mean loss over `batch` and its gradient. The loss minimized is
/// `-surrogate + value_coef * (V - R)^2 - entropy_coef * H`, with advantages
/// taken as given.
pub fn loss_and_grad(net: &PolicyNet, batch: &[&Sample], cfg: &TrainConfig) -> (LossReport, Vec<f64>) {
    let n = batch.len() as f64;
    // Fixed chunking and in-order reduction keep results independent of the
    // thread count.
    let parts: Vec<(LossReport, Vec<f64>)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = vec![0.0; net.param_count()];
            let mut rep = LossReport::default();
            for s in chunk {
                let acts = net.forward(&s.obs);
                let logits = net.logits_for(&acts, &s.valid);
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
                let logp: Vec<f64> = logits.iter().map(|z| z - lse).collect();
                let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
                let entropy = -p.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
                let ratio = (logp[s.choice] - s.old_log_prob).exp();
                let (surr, dsurr) = clipped_surrogate(ratio, s.advantage, cfg.clip_epsilon);
                let v = net.value(&acts);

                rep.policy_loss -= surr;
                rep.value_loss += (v - s.ret).powi(2);
                rep.entropy += entropy;
                if (ratio - 1.0).abs() > cfg.clip_epsilon {
                    rep.clip_fraction += 1.0;
                }
                rep.approx_kl += s.old_log_prob - logp[s.choice];

                // d(-surr)/dz_j = -dsurr * r * (1[j = a] - p_j)
                // d(-c H)/dz_j = c * p_j (log p_j + H)
                let dlogits: Vec<f64> = (0..p.len())
                    .map(|j| {
                        let onehot = if j == s.choice { 1.0 } else { 0.0 };
                        let policy = -dsurr * ratio * (onehot - p[j]);
                        let ent = cfg.entropy_coef * p[j] * (logp[j] + entropy);
                        (policy + ent) / n
                    })
                    .collect();
                let dvalue = cfg.value_coef * 2.0 * (v - s.ret) / n;
                net.backward(&s.obs, &acts, &s.valid, &dlogits, dvalue, &mut grad);
            }
            (rep, grad)
        })
        .collect();
    let mut rep = LossReport::default();
    let mut grad = vec![0.0; net.param_count()];
    for (r, g) in parts {
        rep.policy_loss += r.policy_loss;
        rep.value_loss += r.value_loss;
        rep.entropy += r.entropy;
        rep.clip_fraction += r.clip_fraction;
        rep.approx_kl += r.approx_kl;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    rep.policy_loss /= n;
    rep.value_loss /= n;
    rep.entropy /= n;
    rep.clip_fraction /= n;
    rep.approx_kl /= n;
    (rep, grad)
}

/// Scalar loss for `batch`, as minimized by `loss_and_grad`.
pub fn total_loss(rep: &LossReport, cfg: &TrainConfig) -> f64 {
    rep.policy_loss + cfg.value_coef * rep.value_loss - cfg.entropy_coef * rep.entropy
}

/// Normalizes advantages to zero mean and unit variance. When the spread is
/// below 1e-8 (including single-sample batches) they are left as they are.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std < 1e-8 {
        return;
    }
    for a in adv.iter_mut() {
        *a = (*a - mean) / std;
    }
}

/// One gradient step on a minibatch whose advantages are already normalized.
pub fn ppo_step(net: &mut PolicyNet, opt: &mut Adam, batch: &[&Sample], cfg: &TrainConfig) -> Result<LossReport> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("PPO batch is empty"));
    }
    let (rep, mut grad) = loss_and_grad(net, batch, cfg);
    let loss = total_loss(&rep, cfg);
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!(
            "PPO loss {loss} (policy {}, value {}, entropy {})",
            rep.policy_loss, rep.value_loss, rep.entropy
        )));
    }
    if cfg.max_grad_norm > 0.0 {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > cfg.max_grad_norm {
            let s = cfg.max_grad_norm / norm;
            grad.iter_mut().for_each(|g| *g *= s);
        }
    }
    opt.step(net.params_mut(), &grad);
    if !net.is_finite() {
        return Err(Error::NonFinite("network parameters after update".into()));
    }
    Ok(rep)
}

/// Full PPO update: normalizes advantages over the batch, then runs
/// `epochs_per_update` passes of shuffled minibatches. Returns the mean report.
pub fn ppo_update(
    net: &mut PolicyNet,
    opt: &mut Adam,
    samples: &mut [Sample],
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<LossReport> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("PPO batch is empty"));
    }
    let mut adv: Vec<f64> = samples.iter().map(|s| s.advantage).collect();
    normalize_advantages(&mut adv);
    for (s, a) in samples.iter_mut().zip(adv) {
        s.advantage = a;
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut mean = LossReport::default();
    let mut count = 0.0;
    for _ in 0..cfg.epochs_per_update {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
        for mb in order.chunks(cfg.minibatch_size) {
            let batch: Vec<&Sample> = mb.iter().map(|&i| &samples[i]).collect();
            let r = ppo_step(net, opt, &batch, cfg)?;
            mean.policy_loss += r.policy_loss;
            mean.value_loss += r.value_loss;
            mean.entropy += r.entropy;
            mean.clip_fraction += r.clip_fraction;
            mean.approx_kl += r.approx_kl;
            count += 1.0;
        }
    }
    mean.policy_loss /= count;
    mean.value_loss /= count;
    mean.entropy /= count;
    mean.clip_fraction /= count;
    mean.approx_kl /= count;
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn masked_distribution_examples() {
        let mut mask = ActionMask::empty(100);
        for i in [3, 10, 50, 99] {
            mask.bits[i] = true;
            mask.valid_count += 1;
        }
        let d = masked_distribution(&[0.0; 100], &mask).unwrap();
        for i in [3, 10, 50, 99] {
            assert!((d.prob(i) - 0.25).abs() < 1e-15);
        }
        assert_eq!(d.prob(4), 0.0);

        let one = ActionMask::from_valid(10, [7]);
        let logits: Vec<f64> = (0..10).map(|i| i as f64 * 100.0).collect();
        assert_eq!(masked_distribution(&logits, &one).unwrap().prob(7), 1.0);

        assert!(matches!(
            masked_distribution(&[0.0; 10], &ActionMask::empty(10)),
            Err(Error::NoValidAction)
        ));
    }

    #[test]
    fn masked_sampling_never_picks_invalid() {
        let mask = ActionMask::from_valid(50, [1, 2, 40]);
        let logits: Vec<f64> = (0..50).map(|i| if i == 0 { 50.0 } else { (i % 3) as f64 }).collect();
        let d = masked_distribution(&logits, &mask).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut counts = [0usize; 50];
        for _ in 0..100_000 {
            counts[d.sample(&mut rng)] += 1;
        }
        let invalid: usize = (0..50).filter(|i| !mask.is_valid(*i)).map(|i| counts[i]).sum();
        assert_eq!(invalid, 0);
        let mut rng2 = ChaCha8Rng::seed_from_u64(0);
        let again: Vec<usize> = (0..20).map(|_| d.sample(&mut rng2)).collect();
        let mut rng3 = ChaCha8Rng::seed_from_u64(0);
        let third: Vec<usize> = (0..20).map(|_| d.sample(&mut rng3)).collect();
        assert_eq!(again, third);
    }

    #[test]
    fn gae_examples() {
        let (adv, ret) = gae_advantages(&[1.0, 1.0], &[0.0, 0.0, 0.0], &[false, false], 1.0, 1.0);
        assert_eq!(adv, vec![2.0, 1.0]);
        assert_eq!(ret, vec![2.0, 1.0]);

        let rewards = [0.5, -1.0, 2.0];
        let values = [0.1, 0.2, -0.3, 0.4];
        let dones = [false, true, false];
        let (adv, _) = gae_advantages(&rewards, &values, &dones, 0.9, 0.0);
        for t in 0..3 {
            let live = if dones[t] { 0.0 } else { 1.0 };
            let delta = rewards[t] + 0.9 * values[t + 1] * live - values[t];
            assert_eq!(adv[t], delta);
        }

        let (adv, _) = gae_advantages(&[0.0; 4], &[0.0; 5], &[false; 4], 0.99, 0.95);
        assert!(adv.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn clip_examples() {
        let (v, d) = clipped_surrogate(1.5, 1.0, 0.2);
        assert_eq!(v, 1.2);
        assert_eq!(d, 0.0);
        let (v, d) = clipped_surrogate(1.0, -2.0, 0.2);
        assert_eq!((v, d), (-2.0, -2.0));
        // Negative advantage with a small ratio is clipped from below.
        let (v, _) = clipped_surrogate(0.5, -1.0, 0.2);
        assert_eq!(v, -0.8);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let c = TrainConfig {
            gamma: 1.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("gamma"));
        let c = TrainConfig {
            clip_epsilon: 0.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("clip_epsilon"));
    }

    #[test]
    fn advantage_normalization_guard() {
        let mut a = vec![3.0];
        normalize_advantages(&mut a);
        assert_eq!(a, vec![3.0]);
        let mut b = vec![1.0, 3.0];
        normalize_advantages(&mut b);
        assert_eq!(b, vec![-1.0, 1.0]);
    }
}
