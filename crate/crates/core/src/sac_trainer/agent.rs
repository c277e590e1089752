use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::ReplayBuffer;
use super::losses::{
    critic_target, policy_loss_and_grad, soft_state_value, target_entropy, temperature_grad,
};
use crate::explore_env::Transition;
use crate::neural::{
    Adam, AdamConfig, Checkpoint, CheckpointError, Gradients, GraphBatch, HeadKind, Matrix,
    NetConfig, Network, ParamSet, Tape,
};
use crate::roadmap::AugmentedGraph;

/// Optimisation hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SacConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// No updates happen before the buffer holds this many transitions.
    pub min_buffer: usize,
    pub lr_policy: f64,
    pub lr_critic: f64,
    pub lr_alpha: f64,
    /// `H̄ = target_entropy_scale · ln k`.
    pub target_entropy_scale: f64,
    /// Target critics are hard-copied every this many updates.
    pub target_update_period: u64,
    pub init_log_alpha: f64,
    pub clip_norm: Option<f64>,
    /// Gradient updates per collected episode.
    pub updates_per_episode: usize,
}

impl SacConfig {
    pub fn full() -> Self {
        Self {
            gamma: 1.0,
            batch_size: 256,
            buffer_capacity: 10_000,
            min_buffer: 2_000,
            lr_policy: 1e-5,
            lr_critic: 1e-5,
            lr_alpha: 1e-5,
            target_entropy_scale: 0.01,
            target_update_period: 256,
            init_log_alpha: 0.0,
            clip_norm: None,
            updates_per_episode: 1,
        }
    }

    /// Larger steps and more updates per episode for a short single-machine run.
    pub fn desk() -> Self {
        Self {
            gamma: 0.99,
            batch_size: 64,
            lr_policy: 1e-4,
            lr_critic: 3e-4,
            lr_alpha: 1e-4,
            init_log_alpha: -2.0,
            clip_norm: Some(10.0),
            updates_per_episode: 4,
            ..Self::full()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.target_update_period == 0 {
            return Err("batch size, buffer capacity and target period must be positive".into());
        }
        if self.min_buffer > self.buffer_capacity {
            return Err("minimum fill exceeds the buffer capacity".into());
        }
        if [self.lr_policy, self.lr_critic, self.lr_alpha]
            .iter()
            .any(|lr| !(*lr >= 0.0))
        {
            return Err("learning rates must be non-negative".into());
        }
        Ok(())
    }
}

/// Losses and diagnostics of one update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    /// Sum over both critics of the mean squared-error loss.
    pub critic_loss: f64,
    pub policy_loss: f64,
    pub alpha_loss: f64,
    /// Temperature used in this update (before its own step).
    pub alpha: f64,
    /// Mean policy entropy on the batch.
    pub entropy: f64,
    /// Mean Q of the taken actions (first critic).
    pub q_mean: f64,
}

/// Policy, twin critics, their targets, optimizers and the temperature.
#[derive(Clone, Debug)]
pub struct SacAgent {
    pub cfg: SacConfig,
    pub policy_net: Network,
    pub critic_net: Network,
    pub policy: ParamSet<f32>,
    pub critics: [ParamSet<f32>; 2],
    pub targets: [ParamSet<f32>; 2],
    policy_opt: Adam<f32>,
    critic_opt: [Adam<f32>; 2],
    pub log_alpha: f64,
    alpha_opt: Adam<f64>,
    alpha_param: ParamSet<f64>,
    pub target_entropy: f64,
    /// Completed gradient updates.
    pub updates: u64,
}

fn adam_cfg(lr: f64, clip: Option<f64>) -> AdamConfig {
    AdamConfig {
        clip_norm: clip,
        ..AdamConfig::with_lr(lr)
    }
}

impl SacAgent {
    /// Fresh agent for an environment whose graphs have `k` neighbours per node.
    pub fn new(net: &NetConfig, cfg: &SacConfig, k: usize, seed: u64) -> Self {
        let (policy_net, policy) = Network::init::<f32>(net, HeadKind::Policy, seed);
        let (critic_net, q1) = Network::init::<f32>(net, HeadKind::Critic, seed.wrapping_add(1));
        let (_, q2) = Network::init::<f32>(net, HeadKind::Critic, seed.wrapping_add(2));
        let mut alpha_param = ParamSet::new();
        alpha_param.add("log_alpha", Matrix::filled(1, 1, cfg.init_log_alpha));
        Self {
            policy_opt: Adam::new(adam_cfg(cfg.lr_policy, cfg.clip_norm), &policy),
            critic_opt: [
                Adam::new(adam_cfg(cfg.lr_critic, cfg.clip_norm), &q1),
                Adam::new(adam_cfg(cfg.lr_critic, cfg.clip_norm), &q2),
            ],
            alpha_opt: Adam::new(AdamConfig::with_lr(cfg.lr_alpha), &alpha_param),
            alpha_param,
            log_alpha: cfg.init_log_alpha,
            target_entropy: target_entropy(cfg.target_entropy_scale, k),
            targets: [q1.clone(), q2.clone()],
            critics: [q1, q2],
            policy,
            policy_net,
            critic_net,
            cfg: cfg.clone(),
            updates: 0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    /// Samples a batch and updates; `None` while the buffer is underfilled.
    pub fn train_step<R: Rng>(
        &mut self,
        buffer: &ReplayBuffer<Transition>,
        rng: &mut R,
    ) -> Option<Result<TrainMetrics, String>> {
        if buffer.len() < self.cfg.min_buffer.max(1) {
            return None;
        }
        let batch = buffer.sample(self.cfg.batch_size, rng);
        Some(self.update(&batch))
    }

    /// One update of both critics, the policy and the temperature on `batch`.
    pub fn update(&mut self, batch: &[&Transition]) -> Result<TrainMetrics, String> {
        let n = batch.len();
        if n == 0 {
            return Err("empty batch".into());
        }
        let obs: Vec<&AugmentedGraph> = batch.iter().map(|t| &t.obs.graph).collect();
        let next: Vec<&AugmentedGraph> = batch.iter().map(|t| &t.next_obs.graph).collect();
        for (t, g) in batch.iter().zip(&obs) {
            let count = g.current_neighbors().len();
            if t.action >= count {
                return Err(format!(
                    "action {} out of range for {count} actions",
                    t.action
                ));
            }
        }
        let alpha = self.alpha();
        let inv_n = 1.0 / n as f64;

        // soft targets from the target critics and the current policy
        let next_batch = GraphBatch::<f32>::new(&next)?;
        let (next_logp, (t1, t2)) = rayon::join(
            || self.forward_values(&self.policy_net, &self.policy, &next_batch),
            || {
                rayon::join(
                    || self.forward_values(&self.critic_net, &self.targets[0], &next_batch),
                    || self.forward_values(&self.critic_net, &self.targets[1], &next_batch),
                )
            },
        );
        let mut y = Vec::with_capacity(n);
        for (b, t) in batch.iter().enumerate() {
            let q: Vec<f64> = t1[b].iter().zip(&t2[b]).map(|(a, c)| a.min(*c)).collect();
            let p: Vec<f64> = next_logp[b].iter().map(|l| l.exp()).collect();
            let v = soft_state_value(&q, &p, alpha).map_err(|e| e.to_string())?;
            y.push(critic_target(t.reward, t.done, self.cfg.gamma, v));
        }

        // critics
        let obs_batch = GraphBatch::<f32>::new(&obs)?;
        let critic_net = &self.critic_net;
        let [c1, c2] = &mut self.critics;
        let [o1, o2] = &mut self.critic_opt;
        let ((l1, q1), (l2, q2)) = rayon::join(
            || critic_update(critic_net, c1, o1, &obs_batch, batch, &y, inv_n),
            || critic_update(critic_net, c2, o2, &obs_batch, batch, &y, inv_n),
        );

        // policy against the (pre-update) minimum of the two critics
        let mut tape = Tape::new(&self.policy);
        let out = self.policy_net.forward(&mut tape, &obs_batch);
        let logp = Network::split_values(&tape, &out, &obs_batch);
        let mut seed = Matrix::<f32>::zeros(obs_batch.action_count(), 1);
        let mut policy_loss = 0.0;
        let mut entropy = 0.0;
        for b in 0..n {
            let q: Vec<f64> = q1[b].iter().zip(&q2[b]).map(|(a, c)| a.min(*c)).collect();
            let (loss, g) = policy_loss_and_grad(&logp[b], &q, alpha);
            policy_loss += loss * inv_n;
            entropy -= logp[b].iter().map(|l| l.exp() * l).sum::<f64>() * inv_n;
            for (row, gv) in obs_batch.actions(b).zip(g) {
                seed.set(row, 0, (gv * inv_n) as f32);
            }
        }
        let grads = tape.backward(out.values, seed).params;
        drop(tape);
        check_finite(&grads, "policy")?;
        self.policy_opt.step(&mut self.policy, &grads);

        // temperature
        let (alpha_loss, g) = temperature_grad(alpha, entropy, self.target_entropy);
        let grads = Gradients {
            grads: vec![Matrix::filled(1, 1, g)],
        };
        self.alpha_opt.step(&mut self.alpha_param, &grads);
        self.log_alpha = self.alpha_param.values()[0].get(0, 0);

        self.updates += 1;
        if self.updates % self.cfg.target_update_period == 0 {
            self.sync_targets();
        }
        let q_mean = batch
            .iter()
            .enumerate()
            .map(|(b, t)| q1[b][t.action])
            .sum::<f64>()
            * inv_n;
        Ok(TrainMetrics {
            critic_loss: l1? + l2?,
            policy_loss,
            alpha_loss,
            alpha,
            entropy,
            q_mean,
        })
    }

    /// Hard copy of the online critics into the targets.
    pub fn sync_targets(&mut self) {
        for (t, c) in self.targets.iter_mut().zip(&self.critics) {
            t.copy_from(c);
        }
    }

    fn forward_values(
        &self,
        net: &Network,
        params: &ParamSet<f32>,
        batch: &GraphBatch<f32>,
    ) -> Vec<Vec<f64>> {
        let mut tape = Tape::new(params);
        let out = net.forward(&mut tape, batch);
        Network::split_values(&tape, &out, batch)
    }

    /// Serializes networks, targets, optimizer state and the temperature.
    /// `extra` is merged into the metadata.
    pub fn to_checkpoint(&self, extra: serde_json::Value) -> Checkpoint {
        let mut meta = serde_json::json!({
            "kind": "sac-agent",
            "net": self.policy_net.cfg,
            "sac": self.cfg,
            "target_entropy": self.target_entropy,
            "updates": self.updates,
            "log_alpha": self.log_alpha,
            "alpha_adam": [self.alpha_opt.t, self.alpha_opt.m[0].get(0, 0), self.alpha_opt.v[0].get(0, 0)],
            "adam_steps": [self.policy_opt.t, self.critic_opt[0].t, self.critic_opt[1].t],
        });
        if let (Some(m), serde_json::Value::Object(e)) = (meta.as_object_mut(), extra) {
            m.extend(e);
        }
        let mut c = Checkpoint::new(meta);
        c.push_params("policy", &self.policy);
        c.push_aligned("policy.adam_m", &self.policy, &self.policy_opt.m);
        c.push_aligned("policy.adam_v", &self.policy, &self.policy_opt.v);
        for i in 0..2 {
            c.push_params(&format!("q{}", i + 1), &self.critics[i]);
            c.push_params(&format!("q{}_target", i + 1), &self.targets[i]);
            c.push_aligned(
                &format!("q{}.adam_m", i + 1),
                &self.critics[i],
                &self.critic_opt[i].m,
            );
            c.push_aligned(
                &format!("q{}.adam_v", i + 1),
                &self.critics[i],
                &self.critic_opt[i].v,
            );
        }
        c
    }

    /// Restores an agent saved by [`SacAgent::to_checkpoint`].
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, CheckpointError> {
        let meta = &ckpt.meta;
        let field = |k: &str| {
            meta.get(k)
                .ok_or_else(|| CheckpointError::Manifest(format!("missing meta field {k}")))
        };
        let parse = |e: serde_json::Error| CheckpointError::Manifest(e.to_string());
        let net: NetConfig = serde_json::from_value(field("net")?.clone()).map_err(parse)?;
        net.validate().map_err(CheckpointError::Manifest)?;
        let cfg: SacConfig = serde_json::from_value(field("sac")?.clone()).map_err(parse)?;
        let mut agent = Self::new(&net, &cfg, 2, 0);
        agent.target_entropy =
            serde_json::from_value(field("target_entropy")?.clone()).map_err(parse)?;
        agent.updates = serde_json::from_value(field("updates")?.clone()).map_err(parse)?;
        agent.log_alpha = serde_json::from_value(field("log_alpha")?.clone()).map_err(parse)?;
        agent.alpha_param.values_mut()[0].set(0, 0, agent.log_alpha);
        let (t, m, v): (u64, f64, f64) =
            serde_json::from_value(field("alpha_adam")?.clone()).map_err(parse)?;
        agent.alpha_opt.t = t;
        agent.alpha_opt.m[0].set(0, 0, m);
        agent.alpha_opt.v[0].set(0, 0, v);
        let steps: [u64; 3] =
            serde_json::from_value(field("adam_steps")?.clone()).map_err(parse)?;

        ckpt.load_params("policy", &mut agent.policy)?;
        ckpt.load_aligned("policy.adam_m", &agent.policy, &mut agent.policy_opt.m)?;
        ckpt.load_aligned("policy.adam_v", &agent.policy, &mut agent.policy_opt.v)?;
        agent.policy_opt.t = steps[0];
        for i in 0..2 {
            ckpt.load_params(&format!("q{}", i + 1), &mut agent.critics[i])?;
            ckpt.load_params(&format!("q{}_target", i + 1), &mut agent.targets[i])?;
            ckpt.load_aligned(
                &format!("q{}.adam_m", i + 1),
                &agent.critics[i],
                &mut agent.critic_opt[i].m,
            )?;
            ckpt.load_aligned(
                &format!("q{}.adam_v", i + 1),
                &agent.critics[i],
                &mut agent.critic_opt[i].v,
            )?;
            agent.critic_opt[i].t = steps[i + 1];
        }
        Ok(agent)
    }

    /// Loads only the policy of a checkpoint (for evaluation).
    pub fn policy_from_checkpoint(
        ckpt: &Checkpoint,
    ) -> Result<(Network, ParamSet<f32>), CheckpointError> {
        let net: NetConfig = ckpt
            .meta
            .get("net")
            .cloned()
            .ok_or_else(|| CheckpointError::Manifest("missing meta field net".into()))
            .and_then(|v| {
                serde_json::from_value(v).map_err(|e| CheckpointError::Manifest(e.to_string()))
            })?;
        net.validate().map_err(CheckpointError::Manifest)?;
        let (policy_net, mut params) = Network::init::<f32>(&net, HeadKind::Policy, 0);
        ckpt.load_params("policy", &mut params)?;
        Ok((policy_net, params))
    }
}

fn check_finite(g: &Gradients<f32>, what: &str) -> Result<(), String> {
    if g.is_finite() {
        Ok(())
    } else {
        Err(format!("non-finite {what} gradient"))
    }
}

/// Regresses one critic on the targets `y`; returns its loss and the
/// pre-update Q-values of every action.
fn critic_update(
    net: &Network,
    params: &mut ParamSet<f32>,
    opt: &mut Adam<f32>,
    batch: &GraphBatch<f32>,
    transitions: &[&Transition],
    y: &[f64],
    inv_n: f64,
) -> (Result<f64, String>, Vec<Vec<f64>>) {
    let mut tape = Tape::new(params);
    let out = net.forward(&mut tape, batch);
    let q = Network::split_values(&tape, &out, batch);
    let mut seed = Matrix::<f32>::zeros(batch.action_count(), 1);
    let mut loss = 0.0;
    for (b, t) in transitions.iter().enumerate() {
        let err = q[b][t.action] - y[b];
        loss += 0.5 * err * err * inv_n;
        seed.set(batch.actions(b).start + t.action, 0, (err * inv_n) as f32);
    }
    let grads = tape.backward(out.values, seed).params;
    drop(tape);
    if let Err(e) = check_finite(&grads, "critic") {
        return (Err(e), q);
    }
    opt.step(params, &grads);
    (Ok(loss), q)
}
