use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{Matrix, Real};
use super::params::{ParamId, ParamSet};
use super::tape::{AttnPlan, Tape, Var};
use crate::roadmap::AugmentedGraph;

/// Network dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_dim: usize,
    pub d: usize,
    pub heads: usize,
    pub ffn: usize,
    pub layers: usize,
    /// Pointer logits are squashed to `clip * tanh(logit)`.
    pub logit_clip: f64,
}

impl NetConfig {
    /// d = 128, 8 heads, FFN 512, 6 encoder layers.
    pub fn full() -> Self {
        Self {
            input_dim: 4,
            d: 128,
            heads: 8,
            ffn: 512,
            layers: 6,
            logit_clip: 10.0,
        }
    }

    /// d = 32, 4 heads, FFN 64, 6 encoder layers.
    pub fn desk() -> Self {
        Self {
            d: 32,
            heads: 4,
            ffn: 64,
            ..Self::full()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.input_dim == 0 || self.d == 0 || self.ffn == 0 || self.layers == 0 {
            return Err("network dimensions must be positive".into());
        }
        if self.heads == 0 || self.d % self.heads != 0 {
            return Err(format!(
                "d = {} is not divisible by {} heads",
                self.d, self.heads
            ));
        }
        if !(self.logit_clip > 0.0) {
            return Err("logit clip must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Policy,
    Critic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    fn new<T: Real>(
        p: &mut ParamSet<T>,
        name: &str,
        fan_in: usize,
        out: usize,
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = p.add_uniform(format!("{name}.w"), fan_in, out, fan_in, rng);
        let b = bias.then(|| p.add_uniform(format!("{name}.b"), 1, out, fan_in, rng));
        Self { w, b }
    }

    pub fn forward<T: Real>(&self, t: &mut Tape<'_, T>, x: Var) -> Var {
        t.linear(x, self.w, self.b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Norm {
    g: ParamId,
    b: ParamId,
}

impl Norm {
    fn new<T: Real>(p: &mut ParamSet<T>, name: &str, d: usize) -> Self {
        Self {
            g: p.add(format!("{name}.g"), Matrix::filled(1, d, T::one())),
            b: p.add(format!("{name}.b"), Matrix::zeros(1, d)),
        }
    }

    fn forward<T: Real>(&self, t: &mut Tape<'_, T>, x: Var) -> Var {
        t.layer_norm(x, self.g, self.b)
    }
}

/// Pre-normalized multi-head attention block with a feed-forward sublayer,
/// both with residual connections.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionLayer {
    norm_q: Norm,
    norm_kv: Option<Norm>,
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wo: Linear,
    norm_ff: Norm,
    ff1: Linear,
    ff2: Linear,
    heads: usize,
}

impl AttentionLayer {
    fn new<T: Real>(
        p: &mut ParamSet<T>,
        name: &str,
        cfg: &NetConfig,
        cross: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let d = cfg.d;
        Self {
            norm_q: Norm::new(p, &format!("{name}.norm_q"), d),
            norm_kv: cross.then(|| Norm::new(p, &format!("{name}.norm_kv"), d)),
            wq: Linear::new(p, &format!("{name}.wq"), d, d, false, rng),
            wk: Linear::new(p, &format!("{name}.wk"), d, d, false, rng),
            wv: Linear::new(p, &format!("{name}.wv"), d, d, false, rng),
            wo: Linear::new(p, &format!("{name}.wo"), d, d, true, rng),
            norm_ff: Norm::new(p, &format!("{name}.norm_ff"), d),
            ff1: Linear::new(p, &format!("{name}.ff1"), d, cfg.ffn, true, rng),
            ff2: Linear::new(p, &format!("{name}.ff2"), cfg.ffn, d, true, rng),
            heads: cfg.heads,
        }
    }

    /// `q` attends over `kv` (or itself when `kv` is `None`) under `plan`.
    pub fn forward<T: Real>(
        &self,
        t: &mut Tape<'_, T>,
        q: Var,
        kv: Option<Var>,
        plan: &Arc<AttnPlan>,
    ) -> Var {
        let hq = self.norm_q.forward(t, q);
        let hkv = match (kv, &self.norm_kv) {
            (Some(kv), Some(n)) => n.forward(t, kv),
            (None, _) => hq,
            (Some(_), None) => panic!("self-attention layer used for cross-attention"),
        };
        let qq = self.wq.forward(t, hq);
        let kk = self.wk.forward(t, hkv);
        let vv = self.wv.forward(t, hkv);
        let a = t.attention(qq, kk, vv, plan.clone(), self.heads);
        let a = self.wo.forward(t, a);
        let h = t.add(q, a);
        let f = self.norm_ff.forward(t, h);
        let f = self.ff1.forward(t, f);
        let f = t.relu(f);
        let f = self.ff2.forward(t, f);
        t.add(h, f)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Head {
    Pointer { wq: Linear, wk: Linear },
    Critic { out: Linear },
}

/// Several observation graphs packed into one node matrix. Attention
/// patterns are sparse, so no padding is needed: each sample's nodes only
/// ever see nodes of the same sample.
#[derive(Clone, Debug)]
pub struct GraphBatch<T> {
    pub features: Matrix<T>,
    /// Each node attends to itself and its graph neighbours.
    pub self_plan: Arc<AttnPlan>,
    /// Each sample's current node attends to all nodes of its sample.
    pub cross_plan: Arc<AttnPlan>,
    /// Packed row of each sample's current node.
    pub current_rows: Arc<[u32]>,
    /// Packed rows of all candidate actions, sample by sample.
    pub action_rows: Arc<[u32]>,
    /// Sample index of each action row.
    pub action_sample: Arc<[u32]>,
    /// Action segment boundaries per sample.
    pub action_offsets: Arc<[u32]>,
    /// Sample `b` scores the action rows of its own segment.
    pub pointer_plan: Arc<AttnPlan>,
    /// Node segment boundaries per sample.
    pub node_offsets: Vec<u32>,
}

impl<T: Real> GraphBatch<T> {
    pub fn new(graphs: &[&AugmentedGraph]) -> Result<Self, String> {
        if graphs.is_empty() {
            return Err("empty batch".into());
        }
        let mut feats = Vec::new();
        let mut self_off = vec![0u32];
        let mut self_keys = Vec::new();
        let mut cross_off = vec![0u32];
        let mut cross_keys = Vec::new();
        let mut current = Vec::with_capacity(graphs.len());
        let mut actions = Vec::new();
        let mut action_sample = Vec::new();
        let mut action_off = vec![0u32];
        let mut node_off = vec![0u32];
        let mut base = 0u32;
        for (s, g) in graphs.iter().enumerate() {
            let n = g.len() as u32;
            if n == 0 {
                return Err(format!("sample {s} has no nodes"));
            }
            for f in &g.features {
                feats.extend(f.iter().map(|&v| T::of(v as f64)));
            }
            for i in 0..g.len() {
                // self-attention is always allowed; neighbours are sorted and
                // never include the node itself
                self_keys.push(base + i as u32);
                self_keys.extend(g.neighbors(i).iter().map(|&j| base + j));
                self_off.push(self_keys.len() as u32);
            }
            cross_keys.extend(base..base + n);
            cross_off.push(cross_keys.len() as u32);
            current.push(base + g.current);
            let nb = g.current_neighbors();
            if nb.is_empty() {
                return Err(format!("sample {s} has no actions"));
            }
            actions.extend(nb.iter().map(|&j| base + j));
            action_sample.extend(std::iter::repeat(s as u32).take(nb.len()));
            action_off.push(actions.len() as u32);
            base += n;
            node_off.push(base);
        }
        let pointer_keys = (0..actions.len() as u32).collect();
        Ok(Self {
            features: Matrix::from_vec(base as usize, 4, feats),
            self_plan: Arc::new(AttnPlan::new(self_off, self_keys)?),
            cross_plan: Arc::new(AttnPlan::new(cross_off, cross_keys)?),
            current_rows: current.into(),
            pointer_plan: Arc::new(AttnPlan::new(action_off.clone(), pointer_keys)?),
            action_rows: actions.into(),
            action_sample: action_sample.into(),
            action_offsets: action_off.into(),
            node_offsets: node_off,
        })
    }

    pub fn samples(&self) -> usize {
        self.current_rows.len()
    }

    pub fn actions(&self, sample: usize) -> std::ops::Range<usize> {
        self.action_offsets[sample] as usize..self.action_offsets[sample + 1] as usize
    }

    pub fn action_count(&self) -> usize {
        self.action_rows.len()
    }
}

/// The recorded outputs of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct NetOutput {
    /// Enhanced node features, `(nodes, d)`.
    pub encoded: Var,
    /// Enhanced current-node features, `(samples, d)`.
    pub context: Var,
    /// Per-action column: log-probabilities (policy) or Q-values (critic).
    pub values: Var,
}

/// Policy probabilities of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyDistribution {
    pub probs: Vec<f64>,
}

impl PolicyDistribution {
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }

    /// Inverse-CDF sample from a uniform draw `u` in `[0, 1)`.
    pub fn sample(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }
}

/// Encoder + decoder + head. Holds parameter ids only; values live in a
/// [`ParamSet`], so the same architecture serves `f32` and `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub cfg: NetConfig,
    pub kind: HeadKind,
    embed: Linear,
    layers: Vec<AttentionLayer>,
    cross: AttentionLayer,
    proj: Linear,
    head: Head,
}

impl Network {
    /// Builds the architecture and deterministic initial parameters.
    pub fn init<T: Real>(cfg: &NetConfig, kind: HeadKind, seed: u64) -> (Self, ParamSet<T>) {
        cfg.validate().expect("valid network config");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        let d = cfg.d;
        let embed = Linear::new(&mut p, "embed", cfg.input_dim, d, true, &mut rng);
        let layers = (0..cfg.layers)
            .map(|l| AttentionLayer::new(&mut p, &format!("enc{l}"), cfg, false, &mut rng))
            .collect();
        let cross = AttentionLayer::new(&mut p, "dec.cross", cfg, true, &mut rng);
        let proj = Linear::new(&mut p, "dec.proj", 2 * d, d, true, &mut rng);
        let head = match kind {
            HeadKind::Policy => Head::Pointer {
                wq: Linear::new(&mut p, "pointer.wq", d, d, false, &mut rng),
                wk: Linear::new(&mut p, "pointer.wk", d, d, false, &mut rng),
            },
            HeadKind::Critic => Head::Critic {
                out: Linear::new(&mut p, "critic.out", 2 * d, 1, true, &mut rng),
            },
        };
        let net = Self {
            cfg: cfg.clone(),
            kind,
            embed,
            layers,
            cross,
            proj,
            head,
        };
        (net, p)
    }

    /// Linear embedding followed by the masked self-attention stack.
    pub fn encode<T: Real>(&self, t: &mut Tape<'_, T>, x: Var, plan: &Arc<AttnPlan>) -> Var {
        let mut h = self.embed.forward(t, x);
        for layer in &self.layers {
            h = layer.forward(t, h, None, plan);
        }
        h
    }

    /// Enhanced current-node features: cross-attention from the current
    /// node over its whole graph, concatenated with the current node
    /// features and projected back to `d`.
    pub fn decode_context<T: Real>(
        &self,
        t: &mut Tape<'_, T>,
        encoded: Var,
        batch: &GraphBatch<T>,
    ) -> Var {
        let hc = t.gather(encoded, batch.current_rows.clone());
        let att = self.cross.forward(t, hc, Some(encoded), &batch.cross_plan);
        let cat = t.concat(att, hc);
        self.proj.forward(t, cat)
    }

    pub fn forward<T: Real>(&self, t: &mut Tape<'_, T>, batch: &GraphBatch<T>) -> NetOutput {
        let x = t.input(batch.features.clone());
        self.forward_from(t, x, batch)
    }

    /// Same as [`Network::forward`] with caller-provided node features.
    pub fn forward_from<T: Real>(
        &self,
        t: &mut Tape<'_, T>,
        x: Var,
        batch: &GraphBatch<T>,
    ) -> NetOutput {
        let encoded = self.encode(t, x, &batch.self_plan);
        let context = self.decode_context(t, encoded, batch);
        let hnb = t.gather(encoded, batch.action_rows.clone());
        let values = match &self.head {
            Head::Pointer { wq, wk } => {
                let q = wq.forward(t, context);
                let k = wk.forward(t, hnb);
                let scale = T::one() / T::of(self.cfg.d as f64).sqrt();
                let u = t.scores(q, k, batch.pointer_plan.clone(), scale);
                let u = t.scaled_tanh(u, T::of(self.cfg.logit_clip));
                t.log_softmax(u, batch.action_offsets.clone())
            }
            Head::Critic { out } => {
                let rep = t.gather(context, batch.action_sample.clone());
                let cat = t.concat(rep, hnb);
                out.forward(t, cat)
            }
        };
        NetOutput {
            encoded,
            context,
            values,
        }
    }

    /// Per-sample action values as `f64` (log-probabilities or Q-values).
    pub fn split_values<T: Real>(
        t: &Tape<'_, T>,
        out: &NetOutput,
        batch: &GraphBatch<T>,
    ) -> Vec<Vec<f64>> {
        let v = t.value(out.values).data();
        (0..batch.samples())
            .map(|s| {
                v[batch.actions(s)]
                    .iter()
                    .map(|x| x.to_f64().unwrap())
                    .collect()
            })
            .collect()
    }

    /// Policy distributions for a batch (policy networks only).
    pub fn policy<T: Real>(
        &self,
        params: &ParamSet<T>,
        graphs: &[&AugmentedGraph],
    ) -> Result<Vec<PolicyDistribution>, String> {
        if self.kind != HeadKind::Policy {
            return Err("not a policy network".into());
        }
        let batch = GraphBatch::<T>::new(graphs)?;
        let mut t = Tape::new(params);
        let out = self.forward(&mut t, &batch);
        Ok(Self::split_values(&t, &out, &batch)
            .into_iter()
            .map(|lp| PolicyDistribution {
                probs: lp.iter().map(|l| l.exp()).collect(),
            })
            .collect())
    }

    /// Q-values per action for a batch (critic networks only).
    pub fn q_values<T: Real>(
        &self,
        params: &ParamSet<T>,
        graphs: &[&AugmentedGraph],
    ) -> Result<Vec<Vec<f64>>, String> {
        if self.kind != HeadKind::Critic {
            return Err("not a critic network".into());
        }
        let batch = GraphBatch::<T>::new(graphs)?;
        let mut t = Tape::new(params);
        let out = self.forward(&mut t, &batch);
        Ok(Self::split_values(&t, &out, &batch))
    }
}
