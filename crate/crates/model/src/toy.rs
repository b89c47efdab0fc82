//! Synthetic word-for-word translation task used by the trainer tests and
//! the CLI examples. Each source language has five number words that map
//! one-to-one onto the Chinese numerals 一 to 五.

use mtkit_core::registry::lang;
use mtkit_core::templates::InstructionTemplate;
use mtkit_core::{LanguageCode, ParallelRecord};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mtkit_core::curriculum::CurriculumSchedule;

use crate::config::ModelConfig;
use crate::optim::OptimizerConfig;
use crate::trainer::{RunConfig, RunStage};

pub const TARGET_WORDS: [&str; 5] = ["一", "二", "三", "四", "五"];

/// (language, its five words), one language per resource tier.
pub const SOURCE_LANGUAGES: [(&str, [&str; 5]); 4] = [
    ("en", ["one", "two", "three", "four", "five"]),
    ("id", ["satu", "dua", "tiga", "empat", "lima"]),
    ("az", ["bir", "iki", "uc", "dord", "bes"]),
    ("mi", ["tahi", "rua", "toru", "wha", "rima"]),
];

/// Short prompt used for toy runs so sequences stay small.
pub const TOY_TEMPLATE: &str = "{src_text} to {tgt_lang}:";

pub fn toy_templates() -> Vec<InstructionTemplate> {
    vec![InstructionTemplate::new(0, TOY_TEMPLATE).expect("valid toy template")]
}

/// `n` distinct word-index sequences of 2 to 3 words, drawn from `seed`.
fn distinct_sentences(n: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut all: Vec<Vec<usize>> = Vec::new();
    for len in 2..=3u32 {
        for code in 0..5usize.pow(len) {
            all.push((0..len).map(|i| code / 5usize.pow(i) % 5).collect());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    all.shuffle(&mut rng);
    assert!(n <= all.len(), "at most {} distinct toy sentences", all.len());
    all.truncate(n);
    all
}

fn target_text(words: &[usize]) -> String {
    words.iter().map(|&w| TARGET_WORDS[w]).collect()
}

/// Chinese-only sentences for the first stage.
pub fn mono_corpus(n: usize, seed: u64) -> Vec<String> {
    distinct_sentences(n, seed).iter().map(|s| target_text(s)).collect()
}

/// Parallel records from the language at `SOURCE_LANGUAGES[which]` into
/// Chinese.
pub fn parallel_corpus(which: usize, n: usize, seed: u64) -> Vec<ParallelRecord> {
    let (code, words) = SOURCE_LANGUAGES[which];
    distinct_sentences(n, seed)
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let src: Vec<&str> = s.iter().map(|&w| words[w]).collect();
            ParallelRecord::new(lang(code), lang("zh"), src.join(" "), target_text(s), format!("toy-{code}-{i}"))
        })
        .collect()
}

/// The source languages, in tier order.
pub fn source_languages() -> Vec<LanguageCode> {
    SOURCE_LANGUAGES.iter().map(|(c, _)| lang(c)).collect()
}

/// Parallel records of every source language, `n` per pair.
pub fn tiered_corpus(n: usize, seed: u64) -> Vec<ParallelRecord> {
    (0..SOURCE_LANGUAGES.len())
        .flat_map(|i| parallel_corpus(i, n, seed + i as u64))
        .collect()
}

/// The desk layout with a context that fits the toy sequences. The backbone
/// here is random rather than pretrained, and the frozen output head only
/// spans a useful logit range at a larger init scale than the desk default.
pub fn toy_model_config() -> ModelConfig {
    ModelConfig {
        context: 48,
        init_std: 0.1,
        ..ModelConfig::desk()
    }
}

/// Stage 1 on [`mono_corpus`]: 300 steps, backbone frozen.
pub fn stage1_run_config() -> RunConfig {
    RunConfig {
        stage: RunStage::Pretrain,
        model: toy_model_config(),
        optimizer: OptimizerConfig {
            peak_lr: 3e-3,
            warmup_steps: 30,
            total_steps: 300,
            ..OptimizerConfig::default()
        },
        ..RunConfig::default()
    }
}

/// Stage 2 on [`parallel_corpus`] with [`toy_templates`], continuing from a
/// stage-1 checkpoint.
pub fn stage2_run_config(total_steps: u64) -> RunConfig {
    RunConfig {
        stage: RunStage::Finetune,
        model: toy_model_config(),
        optimizer: OptimizerConfig {
            peak_lr: 3e-3,
            warmup_steps: total_steps / 8,
            total_steps,
            ..OptimizerConfig::default()
        },
        schedule: CurriculumSchedule::with_steps(total_steps),
        max_new_tokens: 16,
        ..RunConfig::default()
    }
}
