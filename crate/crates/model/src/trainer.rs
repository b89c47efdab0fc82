//! Two-stage training: causal LM on Chinese text, then curriculum-weighted
//! instruction tuning on parallel data.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mtkit_core::augment::{augment, PairFilter, Translator};
use mtkit_core::curriculum::{mixture_at, sample_indices, total_loss, CurriculumMode, CurriculumSchedule};
use mtkit_core::templates::{pick_template, render, InstructionTemplate};
use mtkit_core::{LanguagePair, ParallelRecord, Registry, ResourceTier, TokenizerSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::{InitMode, ModelConfig};
use crate::data::{decode_until_eos, encode_example, encode_mono, encode_prompt, Encoded};
use crate::error::{ModelError, Result};
use crate::model::{backward, forward, generate, weighted_nll, Gradients};
use crate::optim::{adamw_step, clip_global_norm, AdamState, OptimizerConfig};
use crate::params::{ParameterSet, TrainScope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStage {
    #[default]
    Pretrain,
    Finetune,
}

impl RunStage {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStage::Pretrain => "pretrain",
            RunStage::Finetune => "finetune",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    Full,
    /// All experts drawn fresh.
    RandomInit,
    /// All experts copied from the dense FFN.
    ReuseInit,
    /// Every pair mixed uniformly from the first step.
    RandomTrain,
    /// Tiers switched on in order with equal weights and no ramp.
    OrderTrain,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::Full,
        Ablation::RandomInit,
        Ablation::ReuseInit,
        Ablation::RandomTrain,
        Ablation::OrderTrain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::RandomInit => "random_init",
            Ablation::ReuseInit => "reuse_init",
            Ablation::RandomTrain => "random_train",
            Ablation::OrderTrain => "order_train",
        }
    }

    /// Init variants touch only `init_mode`; train variants only the
    /// schedule mode.
    pub fn apply(self, model: &mut ModelConfig, schedule: &mut CurriculumSchedule) {
        match self {
            Ablation::Full => {}
            Ablation::RandomInit => model.init_mode = InitMode::Random,
            Ablation::ReuseInit => model.init_mode = InitMode::Reuse,
            Ablation::RandomTrain => schedule.mode = CurriculumMode::Uniform,
            Ablation::OrderTrain => schedule.mode = CurriculumMode::Ordered,
        }
    }
}

/// Back-translation applied to the parallel data before stage 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSettings {
    pub enabled: bool,
    /// `identity`, `word_reverse` or `dictionary`.
    pub translator: String,
    /// Word list for the dictionary translator (target → source direction).
    pub dictionary: Option<PathBuf>,
    pub tiers: Vec<ResourceTier>,
}

impl Default for AugmentSettings {
    fn default() -> Self {
        Self {
            enabled: false,
            translator: "identity".into(),
            dictionary: None,
            tiers: vec![ResourceTier::Low, ResourceTier::VeryLow],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataPaths {
    /// Cleaned monolingual text, one sentence per line (stage 1).
    pub mono: Option<PathBuf>,
    /// Parallel TSV files (stage 2).
    pub parallel: Vec<PathBuf>,
    /// Template file; the built-in set when absent.
    pub templates: Option<PathBuf>,
    /// Stage-1 checkpoint that stage 2 starts from; fresh init when absent.
    pub init_checkpoint: Option<PathBuf>,
    pub augment: AugmentSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub stage: RunStage,
    /// Seeds initialization and batch sampling; copied into the model config.
    pub seed: u64,
    pub ablation: Ablation,
    /// Which tensors train. The backbone stays frozen by default.
    pub scope: TrainScope,
    /// Exclude prompt tokens from the stage-2 loss.
    pub mask_prompt: bool,
    /// Redraw the MoE tensors of a loaded stage-1 checkpoint with this run's
    /// `init_mode` before stage 2.
    pub reinit_moe: bool,
    /// Write a checkpoint every this many steps (0: only at the end).
    pub checkpoint_every: u64,
    /// Stop after this many completed steps without changing the schedule.
    pub stop_after: Option<u64>,
    /// Greedy decoding budget used by evaluation.
    pub max_new_tokens: usize,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    /// Stage 2 only. `total_steps` must equal the optimizer's.
    pub schedule: CurriculumSchedule,
    pub data: DataPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            stage: RunStage::Pretrain,
            seed: 0,
            ablation: Ablation::Full,
            scope: TrainScope::Moe,
            mask_prompt: true,
            reinit_moe: false,
            checkpoint_every: 0,
            stop_after: None,
            max_new_tokens: 64,
            model: ModelConfig::default(),
            optimizer: OptimizerConfig::default(),
            schedule: CurriculumSchedule::with_steps(OptimizerConfig::default().total_steps),
            data: DataPaths::default(),
        }
    }
}

impl RunConfig {
    /// The configuration actually trained: seed copied into the model and
    /// the ablation applied. Validates everything.
    pub fn resolved(&self) -> Result<RunConfig> {
        let mut r = self.clone();
        r.model.seed = r.seed;
        r.ablation.apply(&mut r.model, &mut r.schedule);
        r.model.validate()?;
        r.optimizer.validate()?;
        if r.stage == RunStage::Finetune {
            r.schedule.validate()?;
            if r.schedule.total_steps != r.optimizer.total_steps {
                return Err(ModelError::Config(format!(
                    "schedule.total_steps {} differs from optimizer.total_steps {}",
                    r.schedule.total_steps, r.optimizer.total_steps
                )));
            }
        }
        Ok(r)
    }

    /// Last step (exclusive) this run executes.
    pub fn end_step(&self) -> u64 {
        self.stop_after
            .map_or(self.optimizer.total_steps, |s| s.min(self.optimizer.total_steps))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    pub active_pairs: Vec<String>,
    pub active_tiers: Vec<ResourceTier>,
    /// Label tokens seen up to and including this step.
    pub tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub frozen_checksum: String,
    pub records: Vec<StepRecord>,
}

pub const LOG_HEADER: &str = "step\tlr\tloss\tactive_pairs\tactive_tiers\ttokens";

impl TrainLog {
    /// Values are printed in shortest round-trip form, so equal logs mean
    /// bit-equal losses.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("# frozen_checksum\t{}\n{LOG_HEADER}\n", self.frozen_checksum);
        for r in &self.records {
            let tiers: Vec<String> = r.active_tiers.iter().map(|t| t.to_string()).collect();
            let _ = writeln!(
                out,
                "{}\t{:?}\t{:?}\t{}\t{}\t{}",
                r.step,
                r.lr,
                r.loss,
                r.active_pairs.join(","),
                tiers.join(","),
                r.tokens
            );
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, m: &str| ModelError::Checkpoint(format!("train log line {line}: {m}"));
        let mut log = TrainLog::default();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if let Some(rest) = line.strip_prefix("# frozen_checksum\t") {
                log.frozen_checksum = rest.to_string();
                continue;
            }
            if line == LOG_HEADER || line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 6 {
                return Err(bad(n, "expected 6 fields"));
            }
            let split = |s: &str| -> Vec<String> {
                s.split(',').filter(|x| !x.is_empty()).map(str::to_string).collect()
            };
            log.records.push(StepRecord {
                step: f[0].parse().map_err(|_| bad(n, "bad step"))?,
                lr: f[1].parse().map_err(|_| bad(n, "bad lr"))?,
                loss: f[2].parse().map_err(|_| bad(n, "bad loss"))?,
                active_pairs: split(f[3]),
                active_tiers: split(f[4])
                    .iter()
                    .map(|t| t.parse())
                    .collect::<std::result::Result<_, _>>()?,
                tokens: f[5].parse().map_err(|_| bad(n, "bad tokens"))?,
            });
        }
        Ok(log)
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }
}

/// Where a run starts.
#[derive(Debug, Clone)]
pub enum Start {
    /// Fresh initialization from the model config.
    Fresh,
    /// Parameters of an earlier stage; optimizer state starts empty.
    From(Box<Checkpoint>),
    /// Continue an interrupted run of the same stage.
    Resume(Box<Checkpoint>),
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParameterSet,
    pub optimizer: AdamState,
    /// Completed steps.
    pub step: u64,
    pub log: TrainLog,
}

impl TrainOutcome {
    pub fn checkpoint(&self, cfg: &RunConfig) -> Checkpoint {
        let mut c = Checkpoint::new(self.params.clone(), Some(self.optimizer.clone()), self.step);
        c.meta = run_meta(cfg, &self.params);
        c
    }
}

fn run_meta(cfg: &RunConfig, params: &ParameterSet) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("stage".to_string(), cfg.stage.as_str().to_string()),
        ("seed".to_string(), cfg.seed.to_string()),
        ("ablation".to_string(), cfg.ablation.as_str().to_string()),
        ("frozen_checksum".to_string(), params.frozen_checksum()),
    ])
}

/// One step's worth of encoded sequences with per-label loss coefficients.
struct Batch {
    seqs: Vec<(Encoded, Vec<f64>)>,
    active_pairs: Vec<String>,
    active_tiers: Vec<ResourceTier>,
}

fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(step);
    r
}

fn initial_state(cfg: &RunConfig, start: Start) -> Result<(ParameterSet, AdamState, u64)> {
    let check_arch = |c: &Checkpoint| {
        if c.params.config.same_architecture(&cfg.model) {
            Ok(())
        } else {
            Err(ModelError::Checkpoint("checkpoint architecture differs from the run config".into()))
        }
    };
    match start {
        Start::Fresh => {
            let mut p = ParameterSet::init(&cfg.model)?;
            p.set_scope(cfg.scope);
            let s = AdamState::new(&p);
            Ok((p, s, 0))
        }
        Start::From(c) => {
            check_arch(&c)?;
            let mut p = c.params;
            if cfg.reinit_moe {
                p.config.init_mode = cfg.model.init_mode;
                p.config.reuse_count = cfg.model.reuse_count;
                p.config.seed = cfg.model.seed;
                p.init_moe();
            }
            p.set_scope(cfg.scope);
            let s = AdamState::new(&p);
            Ok((p, s, 0))
        }
        Start::Resume(c) => {
            check_arch(&c)?;
            if c.meta.get("stage").map(String::as_str) != Some(cfg.stage.as_str()) {
                return Err(ModelError::Checkpoint(format!(
                    "cannot resume a {} run from a {:?} checkpoint",
                    cfg.stage.as_str(),
                    c.meta.get("stage")
                )));
            }
            let s = c
                .optimizer
                .ok_or_else(|| ModelError::Checkpoint("resume needs optimizer state".into()))?;
            let mut probe = c.params.clone();
            probe.set_scope(cfg.scope);
            if !s.matches(&probe) {
                return Err(ModelError::Checkpoint("checkpoint trainable set differs from the run scope".into()));
            }
            Ok((probe, s, c.step))
        }
    }
}

pub const LOG_FILE: &str = "train_log.tsv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

pub fn step_checkpoint_name(step: u64) -> String {
    format!("step-{step:06}.ckpt")
}

/// Shared loop: builds each batch, averages gradients in sequence order,
/// clips, applies AdamW with `lr_at(step)`, logs and checkpoints.
fn run_loop(
    cfg: &RunConfig,
    start: Start,
    out_dir: Option<&Path>,
    make_batch: &(dyn Fn(u64) -> Result<Batch> + Sync),
) -> Result<TrainOutcome> {
    let resuming = matches!(start, Start::Resume(_));
    let (mut params, mut opt_state, first) = initial_state(cfg, start)?;
    let frozen_checksum = params.frozen_checksum();
    let mut log = TrainLog {
        frozen_checksum: frozen_checksum.clone(),
        records: Vec::new(),
    };
    if let (true, Some(dir)) = (resuming, out_dir) {
        let path = dir.join(LOG_FILE);
        if path.exists() {
            let text = fs::read_to_string(&path).map_err(|e| ModelError::io(&path, e))?;
            let old = TrainLog::parse(&text)?;
            if old.frozen_checksum != frozen_checksum {
                return Err(ModelError::Checkpoint("frozen checksum differs from the interrupted run".into()));
            }
            log.records = old.records.into_iter().filter(|r| r.step < first).collect();
        }
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| ModelError::io(dir, e))?;
    }
    let mut tokens = log.records.last().map_or(0, |r| r.tokens);
    let vocab = params.config.vocab_size;

    let save = |params: &ParameterSet, opt: &AdamState, step: u64, log: &TrainLog, name: &str| -> Result<()> {
        let Some(dir) = out_dir else { return Ok(()) };
        let mut c = Checkpoint::new(params.clone(), Some(opt.clone()), step);
        c.meta = run_meta(cfg, params);
        c.save(&dir.join(name))?;
        let path = dir.join(LOG_FILE);
        fs::write(&path, log.to_tsv()).map_err(|e| ModelError::io(&path, e))
    };

    for step in first..cfg.end_step() {
        let batch = make_batch(step)?;
        let results: Vec<Result<(f64, Gradients)>> = batch
            .seqs
            .par_iter()
            .map(|(enc, coef)| {
                let cache = forward(&params, &enc.ids)?;
                let (loss, dl) = weighted_nll(&cache.logits, vocab, &enc.ids, coef);
                let mut g = Gradients::zeros(&params);
                backward(&params, &cache, &dl, &mut g)?;
                Ok((loss, g))
            })
            .collect();
        let mut grads = Gradients::zeros(&params);
        let mut loss = 0.0;
        for r in results {
            let (l, g) = r?;
            loss += l;
            grads.accumulate(&g);
        }
        if cfg.optimizer.clip_gradients {
            clip_global_norm(&mut grads, cfg.optimizer.grad_clip_norm);
        }
        let lr = cfg.optimizer.lr_at(step);
        adamw_step(&mut params, &grads, &mut opt_state, &cfg.optimizer, lr)?;
        tokens += batch.seqs.iter().map(|(e, _)| e.label_count() as u64).sum::<u64>();
        log.records.push(StepRecord {
            step,
            lr,
            loss,
            active_pairs: batch.active_pairs,
            active_tiers: batch.active_tiers,
            tokens,
        });
        let done = step + 1;
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 {
            save(&params, &opt_state, done, &log, &step_checkpoint_name(done))?;
        }
    }
    if params.frozen_checksum() != frozen_checksum {
        return Err(ModelError::Checkpoint("frozen tensors changed during training".into()));
    }
    let step = log.records.last().map_or(first, |r| r.step + 1).max(first);
    save(&params, &opt_state, step, &log, FINAL_CHECKPOINT)?;
    Ok(TrainOutcome {
        params,
        optimizer: opt_state,
        step,
        log,
    })
}

/// Causal LM over `corpus`. Each step draws `batch_size` sentences
/// uniformly with replacement; the loss is the mean over all predicted
/// tokens of the batch.
pub fn train_stage1(cfg: &RunConfig, corpus: &[String], start: Start, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    if cfg.stage != RunStage::Pretrain {
        return Err(ModelError::Config("train_stage1 needs stage = \"pretrain\"".into()));
    }
    if corpus.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let tok = TokenizerSpec::byte_level();
    let context = cfg.model.context;
    let encoded: Vec<Encoded> = corpus.iter().map(|s| encode_mono(&tok, s, context)).collect::<Result<_>>()?;
    let make_batch = |step: u64| -> Result<Batch> {
        let mut rng = step_rng(cfg.seed, step);
        let picks: Vec<&Encoded> = (0..cfg.optimizer.batch_size)
            .map(|_| &encoded[rng.random_range(0..encoded.len())])
            .collect();
        let labels: usize = picks.iter().map(|e| e.label_count()).sum();
        let c = if labels == 0 { 0.0 } else { 1.0 / labels as f64 };
        Ok(Batch {
            seqs: picks.into_iter().map(|e| (e.clone(), vec![c; e.labels.len()])).collect(),
            active_pairs: vec!["zh".into()],
            active_tiers: Vec::new(),
        })
    };
    run_loop(cfg, start, out_dir, &make_batch)
}

/// Parallel data grouped by pair, plus the templates to render it with.
#[derive(Debug, Clone)]
pub struct Stage2Data {
    pub datasets: BTreeMap<LanguagePair, Vec<ParallelRecord>>,
    pub templates: Vec<InstructionTemplate>,
    /// Synthetic records added by back-translation.
    pub synthetic: usize,
}

impl Stage2Data {
    /// Groups `records` by pair, after optional back-translation of the
    /// pairs accepted by `filter`.
    pub fn prepare(
        records: Vec<ParallelRecord>,
        templates: Vec<InstructionTemplate>,
        augmenter: Option<(&dyn Translator, &PairFilter)>,
        registry: &Registry,
    ) -> Self {
        let (records, synthetic) = match augmenter {
            Some((t, filter)) => {
                let aug = augment(&records, t, filter, registry);
                let n = aug.count(mtkit_core::augment::Origin::Synthetic);
                (aug.records, n)
            }
            None => (records, 0),
        };
        let mut datasets: BTreeMap<LanguagePair, Vec<ParallelRecord>> = BTreeMap::new();
        for r in records {
            datasets.entry(r.pair()).or_default().push(r);
        }
        Self {
            datasets,
            templates,
            synthetic,
        }
    }

    pub fn len(&self) -> usize {
        self.datasets.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Instruction tuning. Per step: sample pairs from the curriculum mixture,
/// render each record with a random template, and weight each sequence's
/// mean label loss by its pair's curriculum weight (normalized over the
/// pairs present, unless the schedule turns that off).
pub fn train_stage2(
    cfg: &RunConfig,
    data: &Stage2Data,
    registry: &Registry,
    start: Start,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    if cfg.stage != RunStage::Finetune {
        return Err(ModelError::Config("train_stage2 needs stage = \"finetune\"".into()));
    }
    if data.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    if data.templates.is_empty() {
        return Err(mtkit_core::Error::NoTemplates.into());
    }
    let tok = TokenizerSpec::byte_level();
    let pairs: Vec<LanguagePair> = data.datasets.keys().copied().collect();
    let schedule = &cfg.schedule;
    let make_batch = |step: u64| -> Result<Batch> {
        let mut rng = step_rng(cfg.seed, step);
        let mixture = mixture_at(step, &pairs, schedule, registry)?;
        let mut active_tiers = BTreeSet::new();
        let mut active_pairs = Vec::new();
        for (pair, p) in &mixture.probabilities {
            if *p > 0.0 {
                active_pairs.push(pair.to_string());
                active_tiers.insert(registry.pair_tier(*pair)?);
            }
        }
        let picks = sample_indices(step, &mut rng, &data.datasets, schedule, registry, cfg.optimizer.batch_size)?;
        let mut encoded = Vec::with_capacity(picks.len());
        for (pair, i) in &picks {
            let template = pick_template(&mut rng, &data.templates)?;
            let ex = render(template, &data.datasets[pair][*i], registry)?;
            encoded.push((*pair, encode_example(&tok, &ex.prompt, &ex.target, cfg.model.context, cfg.mask_prompt)?));
        }
        let mut per_pair: BTreeMap<LanguagePair, usize> = BTreeMap::new();
        for (pair, _) in &encoded {
            *per_pair.entry(*pair).or_default() += 1;
        }
        let mut weights = BTreeMap::new();
        for &pair in per_pair.keys() {
            weights.insert(pair, schedule.weight_at(step, pair, registry)?);
        }
        let wsum: f64 = weights.values().sum();
        let seqs = encoded
            .into_iter()
            .map(|(pair, e)| {
                let n = e.label_count().max(1) as f64;
                let norm = if schedule.normalize_loss { wsum } else { 1.0 };
                let c = weights[&pair] / (norm * per_pair[&pair] as f64 * n);
                let coef = e.labels.iter().map(|&l| if l { c } else { 0.0 }).collect();
                (e, coef)
            })
            .collect();
        Ok(Batch {
            seqs,
            active_pairs,
            active_tiers: active_tiers.into_iter().collect(),
        })
    };
    run_loop(cfg, start, out_dir, &make_batch)
}

/// Mean label loss of each pair in a batch combined with the curriculum
/// aggregator; equals the stage-2 training objective for that batch.
pub fn aggregate_batch_loss(
    per_sequence: &[(LanguagePair, f64)],
    step: u64,
    schedule: &CurriculumSchedule,
    registry: &Registry,
) -> Result<f64> {
    let mut sums: BTreeMap<LanguagePair, (f64, usize)> = BTreeMap::new();
    for (pair, l) in per_sequence {
        let e = sums.entry(*pair).or_default();
        e.0 += l;
        e.1 += 1;
    }
    let means = sums.into_iter().map(|(p, (s, n))| (p, s / n as f64)).collect();
    Ok(total_loss(&means, step, schedule, registry)?)
}

/// Greedy translation of an instruction prompt: decodes until `</s>` or
/// the budget runs out.
pub fn translate(params: &ParameterSet, prompt: &str, max_new: usize) -> Result<String> {
    let tok = TokenizerSpec::byte_level();
    let mut ids = encode_prompt(&tok, prompt)?;
    let context = params.config.context;
    if ids.len() >= context {
        ids.drain(..ids.len() + 1 - context);
    }
    let n = ids.len();
    let out = generate(params, &ids, max_new, Some(tok.reserved().eos))?;
    decode_until_eos(&tok, &out[n..])
}
