//! Action selection: the masked PPO actor-critic, the greedy baseline and
//! uniform random-valid play, plus rollouts, training and evaluation.

mod checkpoint;
mod net;
mod ppo;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{
    curve_csv_rows, load_checkpoint, save_checkpoint, write_curve_csv, Checkpoint, TrainProgress, CURVE_HEADER,
};
pub use net::{Activations, Adam, Observation, PolicyNet};
pub use ppo::{
    clipped_surrogate, gae_advantages, loss_and_grad, masked_distribution, normalize_advantages,
    ppo_step, ppo_update, total_loss, LossReport, MaskedCategorical, Sample, TrainConfig,
};

use crate::env::{Action, ActionMask, DoneReason, EnvState};
use crate::error::{Error, Result};

/// Network input size for an environment: both grids plus one inventory
/// fraction per brick type.
pub fn observation_size(state: &EnvState) -> usize {
    2 * state.current().volume() + state.assembly().catalog().len()
}

/// Flattened `v_cur`, flattened `v_tar`, then each type's remaining count
/// over its initial count (0 for types that started empty).
pub fn encode_observation(state: &EnvState) -> Observation {
    let v = state.current().volume();
    let mut entries = Vec::new();
    for (i, &b) in state.current().as_slice().iter().enumerate() {
        if b {
            entries.push((i as u32, 1.0));
        }
    }
    for (i, &b) in state.target().as_slice().iter().enumerate() {
        if b {
            entries.push(((v + i) as u32, 1.0));
        }
    }
    for t in 0..state.assembly().catalog().len() {
        let init = state.initial_inventory().count(t);
        if init > 0 {
            let f = state.inventory().count(t) as f64 / init as f64;
            if f != 0.0 {
                entries.push(((2 * v + t) as u32, f));
            }
        }
    }
    Observation { entries }
}

/// Valid action with the largest immediate reward; lowest index on ties.
pub fn greedy_action(state: &EnvState) -> Result<usize> {
    let reward = &state.config().reward;
    let mut best: Option<(usize, f64)> = None;
    for v in state.valid_actions() {
        let r = reward.reward(v.overlap, v.s_com);
        if best.is_none_or(|(_, b)| r > b) {
            best = Some((v.index, r));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::NoValidAction)
}

/// How a rollout chooses actions.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    Greedy,
    /// Uniform over the valid actions.
    RandomValid,
    /// Most probable valid action under the network.
    NetArgmax(&'a PolicyNet),
    /// Sampled from the masked network distribution.
    NetSample(&'a PolicyNet),
}

impl Policy<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Greedy => "greedy",
            Policy::RandomValid => "random-valid",
            Policy::NetArgmax(_) => "ppo-argmax",
            Policy::NetSample(_) => "ppo-sample",
        }
    }

    fn choose(&self, state: &EnvState, mask: &ActionMask, rng: &mut impl Rng) -> Result<usize> {
        match self {
            Policy::Greedy => greedy_action(state),
            Policy::RandomValid => mask
                .valid_indices()
                .choose(rng)
                .copied()
                .ok_or(Error::NoValidAction),
            Policy::NetArgmax(net) | Policy::NetSample(net) => {
                let dist = net_distribution(net, state, mask)?;
                Ok(match self {
                    Policy::NetArgmax(_) => dist.argmax(),
                    _ => dist.sample(rng),
                })
            }
        }
    }
}

fn check_net(net: &PolicyNet, state: &EnvState) -> Result<()> {
    if net.input_size() != observation_size(state) || net.action_count() != state.action_space().size() {
        return Err(Error::Config(format!(
            "network expects {} inputs and {} actions, environment has {} and {}",
            net.input_size(),
            net.action_count(),
            observation_size(state),
            state.action_space().size()
        )));
    }
    Ok(())
}

fn net_distribution(net: &PolicyNet, state: &EnvState, mask: &ActionMask) -> Result<MaskedCategorical> {
    check_net(net, state)?;
    let acts = net.forward(&encode_observation(state));
    let valid = mask.valid_indices();
    let logits = net.logits_for(&acts, &valid);
    MaskedCategorical::from_valid_logits(valid, &logits)
}

/// One line of an episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub action: Action,
    pub reward: f64,
    pub s_com: f64,
    pub overlap: usize,
    /// Valid actions available when this one was chosen.
    pub valid_count: usize,
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub initial_s_com: f64,
    pub final_s_com: f64,
    pub steps: usize,
    pub trace: Vec<StepRecord>,
    pub final_state: EnvState,
    pub done_reason: Option<DoneReason>,
    pub grounded: bool,
    pub seconds: f64,
}

/// Plays one masked episode from `initial` until no valid action remains or
/// the step budget is spent.
pub fn rollout(initial: &EnvState, policy: Policy, rng: &mut impl Rng) -> Result<Episode> {
    let start = Instant::now();
    let mut state = initial.clone();
    let mut mask = state.compute_mask();
    let mut trace = Vec::new();
    let mut done_reason = None;
    if mask.valid_count == 0 {
        done_reason = Some(DoneReason::NoValidActions);
    } else if state.step_count() >= state.max_steps() {
        done_reason = Some(DoneReason::MaxSteps);
    }
    while done_reason.is_none() {
        let index = policy.choose(&state, &mask, rng)?;
        let action = state.action_space().decode(index)?;
        let r = state
            .step(index)
            .map_err(|e| Error::Config(format!("step {} failed: {e}", state.step_count())))?;
        trace.push(StepRecord {
            step: state.step_count(),
            action,
            reward: r.reward,
            s_com: r.next_state.s_com(),
            overlap: r.next_state.overlap(),
            valid_count: mask.valid_count,
        });
        state = r.next_state;
        mask = r.mask;
        done_reason = r.done_reason;
    }
    Ok(Episode {
        initial_s_com: initial.s_com(),
        final_s_com: state.s_com(),
        steps: trace.len(),
        trace,
        grounded: state.is_grounded(),
        final_state: state,
        done_reason,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub initial_s_com: f64,
    pub final_s_com: f64,
    pub steps: usize,
    pub seconds: f64,
    pub grounded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    pub episodes: Vec<EpisodeSummary>,
    pub mean_initial_s_com: f64,
    pub mean_final_s_com: f64,
    pub mean_steps: f64,
    pub wall_seconds: f64,
    pub all_grounded: bool,
}

/// Runs `episodes` rollouts from `initial`, seeding episode `k` with `seed + k`.
pub fn evaluate(policy: Policy, initial: &EnvState, episodes: usize, seed: u64) -> Result<EvalReport> {
    let start = Instant::now();
    let mut out = Vec::with_capacity(episodes);
    for k in 0..episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        let e = rollout(initial, policy, &mut rng)?;
        out.push(EpisodeSummary {
            initial_s_com: e.initial_s_com,
            final_s_com: e.final_s_com,
            steps: e.steps,
            seconds: e.seconds,
            grounded: e.grounded,
        });
    }
    let n = out.len().max(1) as f64;
    Ok(EvalReport {
        policy: policy.name().to_string(),
        mean_initial_s_com: out.iter().map(|e| e.initial_s_com).sum::<f64>() / n,
        mean_final_s_com: out.iter().map(|e| e.final_s_com).sum::<f64>() / n,
        mean_steps: out.iter().map(|e| e.steps as f64).sum::<f64>() / n,
        all_grounded: out.iter().all(|e| e.grounded),
        episodes: out,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// One learning-curve row, written after every update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub update: u64,
    pub env_steps: u64,
    /// Mean final similarity of episodes finished during this rollout; NaN if none finished.
    pub mean_final_scom: f64,
    /// Mean unscaled reward per environment step.
    pub mean_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Trainer state that survives checkpoints.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub net: PolicyNet,
    pub opt: Adam,
    pub progress: TrainProgress,
    rng: ChaCha8Rng,
}

impl Trainer {
    /// Fresh network sized for `env`, initialized from `config.seed`.
    pub fn new(config: TrainConfig, env: &EnvState) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let net = PolicyNet::new(observation_size(env), &config.hidden, env.action_space().size(), &mut rng)?;
        let opt = Adam::new(net.param_count(), config.learning_rate);
        Ok(Self {
            config,
            net,
            opt,
            progress: TrainProgress::default(),
            rng,
        })
    }

    pub fn from_checkpoint(ck: Checkpoint, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if ck.config_hash != checkpoint::config_hash(&config) {
            return Err(Error::Checkpoint(
                "checkpoint was written with a different training configuration".into(),
            ));
        }
        let mut rng = ChaCha8Rng::from_seed(ck.rng_seed);
        rng.set_stream(ck.rng_stream);
        rng.set_word_pos(ck.rng_word_pos);
        Ok(Self {
            config,
            net: ck.net,
            opt: ck.opt,
            progress: ck.progress,
            rng,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            net: self.net.clone(),
            opt: self.opt.clone(),
            progress: self.progress.clone(),
            config_hash: checkpoint::config_hash(&self.config),
            rng_seed: self.rng.get_seed(),
            rng_stream: self.rng.get_stream(),
            rng_word_pos: self.rng.get_word_pos(),
        }
    }

    /// Trains until `config.total_env_steps` environment steps have been
    /// taken in total, calling `on_update` after each PPO update. Episodes
    /// start from `factory`, which receives the trainer's RNG.
    pub fn train<F, C>(&mut self, mut factory: F, mut on_update: C) -> Result<Vec<CurvePoint>>
    where
        F: FnMut(&mut ChaCha8Rng) -> Result<EnvState>,
        C: FnMut(&Trainer, &CurvePoint) -> Result<()>,
    {
        let mut curve = Vec::new();
        let cfg = self.config.clone();
        let mut state: Option<(EnvState, ActionMask)> = None;
        while self.progress.env_steps < cfg.total_env_steps {
            let mut obs = Vec::new();
            let mut valids = Vec::new();
            let mut choices = Vec::new();
            let mut logps = Vec::new();
            let mut values = Vec::new();
            let mut rewards = Vec::new();
            let mut dones = Vec::new();
            let mut finals = Vec::new();
            let mut raw_reward = 0.0;
            while obs.len() < cfg.rollout_horizon && self.progress.env_steps < cfg.total_env_steps {
                let (s, mask) = match state.take() {
                    Some(sm) => sm,
                    None => self.fresh_episode(&mut factory, &mut finals)?,
                };
                check_net(&self.net, &s)?;
                let o = encode_observation(&s);
                let acts = self.net.forward(&o);
                let valid = mask.valid_indices();
                let logits = self.net.logits_for(&acts, &valid);
                let dist = MaskedCategorical::from_valid_logits(valid, &logits)?;
                let k = dist.sample_position(&mut self.rng);
                let index = dist.actions[k];
                let r = s.step(index).map_err(|e| {
                    Error::Config(format!("training step {} failed: {e}", self.progress.env_steps))
                })?;
                values.push(self.net.value(&acts));
                logps.push(dist.log_probs[k]);
                choices.push(k);
                obs.push(o);
                valids.push(dist.actions);
                rewards.push(r.reward * cfg.reward_scale);
                dones.push(r.done);
                raw_reward += r.reward;
                self.progress.env_steps += 1;
                if r.done {
                    finals.push(r.next_state.s_com());
                } else {
                    state = Some((r.next_state, r.mask));
                }
            }
            let bootstrap = match &state {
                Some((s, _)) => self.net.value(&self.net.forward(&encode_observation(s))),
                None => 0.0,
            };
            values.push(bootstrap);
            let (adv, ret) = gae_advantages(&rewards, &values, &dones, cfg.gamma, cfg.gae_lambda);
            let steps = obs.len();
            let mut samples: Vec<Sample> = obs
                .into_iter()
                .zip(valids)
                .enumerate()
                .map(|(t, (obs, valid))| Sample {
                    obs,
                    valid,
                    choice: choices[t],
                    old_log_prob: logps[t],
                    advantage: adv[t],
                    ret: ret[t],
                })
                .collect();
            let rep = ppo_update(&mut self.net, &mut self.opt, &mut samples, &cfg, &mut self.rng)?;
            self.progress.updates += 1;
            let point = CurvePoint {
                update: self.progress.updates,
                env_steps: self.progress.env_steps,
                mean_final_scom: if finals.is_empty() {
                    f64::NAN
                } else {
                    finals.iter().sum::<f64>() / finals.len() as f64
                },
                mean_reward: raw_reward / steps as f64,
                policy_loss: rep.policy_loss,
                value_loss: rep.value_loss,
                entropy: rep.entropy,
                clip_fraction: rep.clip_fraction,
            };
            log::info!(
                "update {} steps {} final_scom {:.4} reward {:.3} entropy {:.3}",
                point.update,
                point.env_steps,
                point.mean_final_scom,
                point.mean_reward,
                point.entropy
            );
            on_update(self, &point)?;
            curve.push(point);
        }
        Ok(curve)
    }

    /// Draws episodes until one has a valid first action; episodes with
    /// none count as finished at their initial similarity.
    fn fresh_episode<F>(&mut self, factory: &mut F, finals: &mut Vec<f64>) -> Result<(EnvState, ActionMask)>
    where
        F: FnMut(&mut ChaCha8Rng) -> Result<EnvState>,
    {
        for _ in 0..100 {
            let s = factory(&mut self.rng)?;
            let mask = s.compute_mask();
            if mask.valid_count > 0 && s.step_count() < s.max_steps() {
                return Ok((s, mask));
            }
            finals.push(s.s_com());
        }
        Err(Error::NoValidAction)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use crate::voxel::{Assembly, BrickCatalog, BrickInstance, Inventory, VoxelGrid};

    fn line_state() -> EnvState {
        let cat = BrickCatalog::from_footprints(&[(1, 1), (1, 2), (1, 4)]).unwrap();
        let target: Vec<[usize; 3]> = (0..4).map(|y| [1, y, 0]).collect();
        EnvState::new(
            Assembly::new([4, 4, 3], cat),
            VoxelGrid::from_cells([4, 4, 3], &target).unwrap(),
            Inventory::with_counts([(0, 4), (1, 2), (2, 1)]),
            EnvConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn observation_layout() {
        let s = line_state();
        let o = encode_observation(&s);
        assert_eq!(observation_size(&s), 2 * 48 + 3);
        // Four target cells and three full inventory fractions.
        assert_eq!(o.entries.len(), 4 + 3);
        assert!(o.entries.iter().all(|&(i, _)| (i as usize) < observation_size(&s)));
    }

    #[test]
    fn greedy_prefers_most_coverage() {
        let mut s = line_state();
        let mut cfg = *s.config();
        cfg.reward.d = 0.0;
        s = EnvState::new(s.assembly().clone(), s.target().clone(), s.inventory().clone(), cfg).unwrap();
        let a = s.action_space().decode(greedy_action(&s).unwrap()).unwrap();
        assert_eq!(a.type_id, 2);
        assert_eq!(a.position, [1, 0, 0]);
        assert_eq!(greedy_action(&s).unwrap(), greedy_action(&s).unwrap());
    }

    #[test]
    fn greedy_rollout_completes_line() {
        let s = line_state();
        let e = rollout(&s, Policy::Greedy, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(e.final_s_com, 1.0);
        assert!(e.grounded);
        assert_eq!(e.steps, e.trace.len());
        for w in e.trace.windows(2) {
            assert!(w[1].s_com > w[0].s_com);
        }
    }

    #[test]
    fn complete_state_takes_no_steps() {
        let s = line_state();
        let done = EnvState::new(
            Assembly::from_bricks(s.dims(), s.assembly().catalog().clone(), [BrickInstance::new(2, [1, 0, 0], 0)]).unwrap(),
            s.target().clone(),
            s.inventory().clone(),
            *s.config(),
        )
        .unwrap();
        let r = evaluate(Policy::Greedy, &done, 1, 0).unwrap();
        assert_eq!(r.episodes[0].steps, 0);
        assert_eq!(r.mean_final_s_com, 1.0);
        assert_eq!(r.mean_initial_s_com, 1.0);
    }

    #[test]
    fn zero_step_training_keeps_net() {
        let s = line_state();
        let cfg = TrainConfig {
            total_env_steps: 0,
            hidden: vec![8, 8],
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(cfg, &s).unwrap();
        let before = t.net.clone();
        let curve = t.train(|_| Ok(s.clone()), |_, _| Ok(())).unwrap();
        assert!(curve.is_empty());
        assert_eq!(t.net, before);
    }
}
