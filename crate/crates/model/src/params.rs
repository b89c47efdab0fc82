//! Named parameter storage, the index layout the model uses to find each
//! tensor, and initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::config::{InitMode, ModelConfig};
use crate::error::{ModelError, Result};
use crate::tensor::Tensor;

pub type ParamId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Backbone,
    Moe,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
    pub group: ParamGroup,
    pub trainable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FfnIds {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl FfnIds {
    pub fn all(&self) -> [ParamId; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MoeIds {
    pub router: ParamId,
    pub experts: Vec<FfnIds>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerIds {
    pub ln1_g: ParamId,
    pub ln1_b: ParamId,
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub bk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
    pub ln2_g: ParamId,
    pub ln2_b: ParamId,
    pub ffn: FfnIds,
    pub moe: Option<MoeIds>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub tok_emb: ParamId,
    pub pos_emb: ParamId,
    pub layers: Vec<LayerIds>,
    pub lnf_g: ParamId,
    pub lnf_b: ParamId,
    pub head_w: ParamId,
    pub head_b: ParamId,
}

/// Which parameters receive gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainScope {
    /// Router and expert tensors only; the backbone is frozen.
    #[default]
    Moe,
    /// Every tensor.
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub config: ModelConfig,
    pub params: Vec<Param>,
    pub layout: Layout,
}

struct Builder {
    params: Vec<Param>,
}

impl Builder {
    fn add(&mut self, name: String, shape: &[usize], group: ParamGroup, fill: f64) -> ParamId {
        self.params.push(Param {
            name,
            tensor: Tensor::filled(shape, fill),
            group,
            trainable: group == ParamGroup::Moe,
        });
        self.params.len() - 1
    }

    fn ffn(&mut self, prefix: &str, d: usize, f: usize, group: ParamGroup) -> FfnIds {
        FfnIds {
            w1: self.add(format!("{prefix}.w1"), &[d, f], group, 0.0),
            b1: self.add(format!("{prefix}.b1"), &[f], group, 0.0),
            w2: self.add(format!("{prefix}.w2"), &[f, d], group, 0.0),
            b2: self.add(format!("{prefix}.b2"), &[d], group, 0.0),
        }
    }
}

/// Tensors of the given config, all zero except LayerNorm gains (one).
fn allocate(cfg: &ModelConfig) -> (Vec<Param>, Layout) {
    let (d, f, v) = (cfg.hidden, cfg.ffn_inner, cfg.vocab_size);
    let bb = ParamGroup::Backbone;
    let mut b = Builder { params: Vec::new() };
    let tok_emb = b.add("tok_emb".into(), &[v, d], bb, 0.0);
    let pos_emb = b.add("pos_emb".into(), &[cfg.context, d], bb, 0.0);
    let mut layers = Vec::with_capacity(cfg.layers);
    for l in 0..cfg.layers {
        let p = format!("layers.{l}");
        let ln1_g = b.add(format!("{p}.ln1.gamma"), &[d], bb, 1.0);
        let ln1_b = b.add(format!("{p}.ln1.beta"), &[d], bb, 0.0);
        let wq = b.add(format!("{p}.attn.wq"), &[d, d], bb, 0.0);
        let bq = b.add(format!("{p}.attn.bq"), &[d], bb, 0.0);
        let wk = b.add(format!("{p}.attn.wk"), &[d, d], bb, 0.0);
        let bk = b.add(format!("{p}.attn.bk"), &[d], bb, 0.0);
        let wv = b.add(format!("{p}.attn.wv"), &[d, d], bb, 0.0);
        let bv = b.add(format!("{p}.attn.bv"), &[d], bb, 0.0);
        let wo = b.add(format!("{p}.attn.wo"), &[d, d], bb, 0.0);
        let bo = b.add(format!("{p}.attn.bo"), &[d], bb, 0.0);
        let ln2_g = b.add(format!("{p}.ln2.gamma"), &[d], bb, 1.0);
        let ln2_b = b.add(format!("{p}.ln2.beta"), &[d], bb, 0.0);
        let ffn = b.ffn(&format!("{p}.ffn"), d, f, bb);
        let moe = cfg.is_moe_layer(l).then(|| MoeIds {
            router: b.add(format!("{p}.moe.router"), &[d, cfg.moe_expert_count], ParamGroup::Moe, 0.0),
            experts: (0..cfg.moe_expert_count)
                .map(|e| b.ffn(&format!("{p}.moe.experts.{e}"), d, f, ParamGroup::Moe))
                .collect(),
        });
        layers.push(LayerIds {
            ln1_g,
            ln1_b,
            wq,
            bq,
            wk,
            bk,
            wv,
            bv,
            wo,
            bo,
            ln2_g,
            ln2_b,
            ffn,
            moe,
        });
    }
    let lnf_g = b.add("final_ln.gamma".into(), &[d], bb, 1.0);
    let lnf_b = b.add("final_ln.beta".into(), &[d], bb, 0.0);
    let head_w = b.add("head.w".into(), &[d, v], bb, 0.0);
    let head_b = b.add("head.b".into(), &[v], bb, 0.0);
    let layout = Layout {
        tok_emb,
        pos_emb,
        layers,
        lnf_g,
        lnf_b,
        head_w,
        head_b,
    };
    (b.params, layout)
}

fn fill_normal(t: &mut Tensor, rng: &mut ChaCha8Rng, std: f64) {
    let normal = Normal::new(0.0, std).expect("positive std");
    for v in t.data.iter_mut() {
        *v = normal.sample(rng);
    }
}

/// Separate streams so the backbone does not depend on how the experts
/// are initialized.
fn backbone_rng(seed: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(1);
    r
}

fn moe_rng(seed: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(2);
    r
}

impl ParameterSet {
    /// Fresh model: scaled-normal backbone weights, zero biases, unit
    /// LayerNorm gains, then MoE layers per `init_mode`.
    pub fn init(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let (mut params, layout) = allocate(cfg);
        let mut rng = backbone_rng(cfg.seed);
        let mut weights = vec![layout.tok_emb, layout.pos_emb];
        for l in &layout.layers {
            weights.extend([l.wq, l.wk, l.wv, l.wo, l.ffn.w1, l.ffn.w2]);
        }
        weights.push(layout.head_w);
        for id in weights {
            fill_normal(&mut params[id].tensor, &mut rng, cfg.init_std);
        }
        let mut set = Self {
            config: cfg.clone(),
            params,
            layout,
        };
        set.init_moe();
        Ok(set)
    }

    /// Layout of `cfg` with zero tensors (unit LayerNorm gains), for loading.
    pub(crate) fn allocated(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let (params, layout) = allocate(cfg);
        Ok(Self {
            config: cfg.clone(),
            params,
            layout,
        })
    }

    /// Re-draws every router and expert according to the config's
    /// `init_mode`, copying from each layer's current dense FFN.
    pub fn init_moe(&mut self) {
        let cfg = &self.config;
        let mut rng = moe_rng(cfg.seed);
        let reused = match cfg.init_mode {
            InitMode::Random => 0,
            InitMode::Reuse => cfg.moe_expert_count,
            InitMode::Mixed => cfg.reuse_count,
        };
        for layer in self.layout.layers.clone() {
            let Some(moe) = &layer.moe else { continue };
            fill_normal(&mut self.params[moe.router].tensor, &mut rng, cfg.init_std);
            for (e, expert) in moe.experts.iter().enumerate() {
                for (dst, src) in expert.all().into_iter().zip(layer.ffn.all()) {
                    if e < reused {
                        self.params[dst].tensor = self.params[src].tensor.clone();
                    } else if dst == expert.w1 || dst == expert.w2 {
                        fill_normal(&mut self.params[dst].tensor, &mut rng, cfg.init_std);
                    } else {
                        self.params[dst].tensor.data.fill(0.0);
                    }
                }
            }
        }
    }

    pub fn set_scope(&mut self, scope: TrainScope) {
        for p in &mut self.params {
            p.trainable = match scope {
                TrainScope::All => true,
                TrainScope::Moe => p.group == ParamGroup::Moe,
            };
        }
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.params[id].tensor.data
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        (0..self.params.len()).filter(|&i| self.params[i].trainable).collect()
    }

    pub fn frozen_ids(&self) -> Vec<ParamId> {
        (0..self.params.len()).filter(|&i| !self.params[i].trainable).collect()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    /// Checksum over names and bytes of the frozen tensors.
    pub fn frozen_checksum(&self) -> String {
        self.checksum_of(&self.frozen_ids())
    }

    pub fn checksum_of(&self, ids: &[ParamId]) -> String {
        let mut h = Sha256::new();
        for &i in ids {
            let p = &self.params[i];
            h.update(p.name.as_bytes());
            h.update([0]);
            h.update(p.tensor.checksum().as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Lowest layer that owns a trainable tensor, or `None` when only
    /// tensors above the stack (final norm, head) or none are trainable.
    /// Embeddings count as layer 0.
    pub(crate) fn lowest_trainable_layer(&self) -> Option<usize> {
        let l = &self.layout;
        if self.params[l.tok_emb].trainable || self.params[l.pos_emb].trainable {
            return Some(0);
        }
        l.layers.iter().position(|layer| {
            let mut ids = vec![
                layer.ln1_g, layer.ln1_b, layer.wq, layer.bq, layer.wk, layer.bk, layer.wv, layer.bv, layer.wo,
                layer.bo, layer.ln2_g, layer.ln2_b,
            ];
            ids.extend(layer.ffn.all());
            if let Some(m) = &layer.moe {
                ids.push(m.router);
                ids.extend(m.experts.iter().flat_map(|e| e.all()));
            }
            ids.iter().any(|&i| self.params[i].trainable)
        })
    }

    /// Replaces tensors by name from `other`, which must have the same
    /// layout. Used to carry a backbone from one stage to the next.
    pub fn copy_from(&mut self, other: &ParameterSet, group: Option<ParamGroup>) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(ModelError::Config("parameter layouts differ".into()));
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            if dst.name != src.name || dst.tensor.shape != src.tensor.shape {
                return Err(ModelError::Config(format!("tensor {} does not match {}", dst.name, src.name)));
            }
            if group.is_none_or(|g| g == dst.group) {
                dst.tensor = src.tensor.clone();
            }
        }
        Ok(())
    }
}
