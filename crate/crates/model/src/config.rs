use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoePlacement {
    /// The experts take the place of the dense FFN.
    ReplaceFfn,
    /// The expert mixture feeds the frozen dense FFN.
    #[default]
    BeforeFfn,
}

impl MoePlacement {
    pub fn as_str(&self) -> &'static str {
        match self {
            MoePlacement::ReplaceFfn => "replace_ffn",
            MoePlacement::BeforeFfn => "before_ffn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    Random,
    Reuse,
    #[default]
    Mixed,
}

impl InitMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            InitMode::Random => "random",
            InitMode::Reuse => "reuse",
            InitMode::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub ffn_inner: usize,
    pub heads: usize,
    pub layers: usize,
    pub context: usize,
    pub sparse_step: usize,
    pub moe_expert_count: usize,
    pub top_k: usize,
    pub moe_placement: MoePlacement,
    pub init_mode: InitMode,
    /// Experts copied from the dense FFN under `mixed` init.
    pub reuse_count: usize,
    pub seed: u64,
    /// Standard deviation of freshly drawn weights.
    pub init_std: f64,
    /// Reserved: an auxiliary load-balancing loss. Not implemented, must stay off.
    pub load_balance_loss: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// Desk-scale default over the byte vocabulary.
    pub fn desk() -> Self {
        Self {
            vocab_size: 260,
            hidden: 64,
            ffn_inner: 256,
            heads: 4,
            layers: 8,
            context: 128,
            sparse_step: 4,
            moe_expert_count: 8,
            top_k: 1,
            moe_placement: MoePlacement::BeforeFfn,
            init_mode: InitMode::Mixed,
            reuse_count: 4,
            seed: 0,
            init_std: 0.02,
            load_balance_loss: false,
        }
    }

    /// The full-scale shape (constructible, far too large to train here).
    pub fn full_scale() -> Self {
        Self {
            vocab_size: 250_752,
            hidden: 4096,
            ffn_inner: 16_384,
            heads: 32,
            layers: 30,
            context: 4096,
            sparse_step: 8,
            ..Self::desk()
        }
    }

    /// Smallest config used for finite-difference checks.
    pub fn tiny() -> Self {
        Self {
            vocab_size: 11,
            hidden: 8,
            ffn_inner: 12,
            heads: 2,
            layers: 2,
            context: 8,
            sparse_step: 1,
            moe_expert_count: 3,
            top_k: 2,
            reuse_count: 1,
            init_std: 0.5,
            ..Self::desk()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.vocab_size < 4 || self.hidden == 0 || self.heads == 0 || self.layers == 0 || self.context == 0 {
            return bad("vocab_size >= 4 and positive hidden, heads, layers, context required".into());
        }
        if self.hidden % self.heads != 0 {
            return bad(format!("hidden {} not divisible by heads {}", self.hidden, self.heads));
        }
        if self.ffn_inner < self.hidden {
            return bad(format!("ffn_inner {} < hidden {}", self.ffn_inner, self.hidden));
        }
        if self.top_k == 0 || self.top_k > self.moe_expert_count {
            return bad(format!(
                "need 1 <= top_k <= moe_expert_count, got {} and {}",
                self.top_k, self.moe_expert_count
            ));
        }
        if self.reuse_count > self.moe_expert_count {
            return bad(format!(
                "reuse_count {} > moe_expert_count {}",
                self.reuse_count, self.moe_expert_count
            ));
        }
        if self.sparse_step == 0 || self.sparse_step > self.layers {
            return bad(format!("need 1 <= sparse_step <= layers, got {}", self.sparse_step));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return bad(format!("init_std must be positive, got {}", self.init_std));
        }
        if self.load_balance_loss {
            return bad("load_balance_loss is reserved and not implemented".into());
        }
        Ok(())
    }

    /// Equal up to the fields that only affect initialization.
    pub fn same_architecture(&self, other: &ModelConfig) -> bool {
        let strip = |c: &ModelConfig| ModelConfig {
            init_mode: InitMode::default(),
            reuse_count: 0,
            seed: 0,
            init_std: 1.0,
            ..c.clone()
        };
        strip(self) == strip(other)
    }

    /// Whether the 0-based layer `i` hosts an MoE block: layers 4 and 8
    /// (1-based) for 8 layers at sparse_step 4.
    pub fn is_moe_layer(&self, i: usize) -> bool {
        (i + 1) % self.sparse_step == 0
    }

    /// 0-based indices of the MoE layers.
    pub fn moe_layers(&self) -> Vec<usize> {
        (0..self.layers).filter(|&i| self.is_moe_layer(i)).collect()
    }

    /// Number of scalar parameters, computed without allocating.
    pub fn parameter_count(&self) -> u128 {
        let (v, d, f, c) = (
            self.vocab_size as u128,
            self.hidden as u128,
            self.ffn_inner as u128,
            self.context as u128,
        );
        let ffn = d * f + f + f * d + d;
        let layer = 4 * d + 4 * (d * d + d) + ffn;
        let moe = d * self.moe_expert_count as u128 + self.moe_expert_count as u128 * ffn;
        v * d + c * d + self.layers as u128 * layer + self.moe_layers().len() as u128 * moe + 2 * d + d * v + v
    }
}
