//! Corpus records, filter verdicts and pipeline reports.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::registry::{LanguageCode, LanguagePair};

/// One extracted monolingual sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonoRecord {
    pub text: String,
    pub source_id: String,
}

/// One aligned sentence pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParallelRecord {
    pub src_lang: LanguageCode,
    pub tgt_lang: LanguageCode,
    pub src_text: String,
    pub tgt_text: String,
    pub source_id: String,
}

impl ParallelRecord {
    pub fn new(
        src_lang: LanguageCode,
        tgt_lang: LanguageCode,
        src_text: impl Into<String>,
        tgt_text: impl Into<String>,
        source_id: impl Into<String>,
    ) -> Self {
        Self {
            src_lang,
            tgt_lang,
            src_text: src_text.into(),
            tgt_text: tgt_text.into(),
            source_id: source_id.into(),
        }
    }

    pub fn pair(&self) -> LanguagePair {
        LanguagePair::new(self.src_lang, self.tgt_lang)
    }

    /// Equality key ignoring provenance.
    pub fn content_key(&self) -> (LanguagePair, &str, &str) {
        (self.pair(), &self.src_text, &self.tgt_text)
    }

    pub fn sides(&self) -> [(LanguageCode, &str); 2] {
        [(self.src_lang, &self.src_text), (self.tgt_lang, &self.tgt_text)]
    }

    /// `src_lang \t tgt_lang \t src_text \t tgt_text \t source_id`
    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.src_lang,
            self.tgt_lang,
            sanitize_field(&self.src_text),
            sanitize_field(&self.tgt_text),
            sanitize_field(&self.source_id)
        )
    }
}

fn sanitize_field(s: &str) -> std::borrow::Cow<'_, str> {
    if s.contains(['\t', '\n', '\r']) {
        s.replace(['\t', '\n', '\r'], " ").into()
    } else {
        s.into()
    }
}

/// Stages of the monolingual and parallel pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Accepted,
    Ingest,
    Normalize,
    HasChinese,
    Length,
    PunctRatio,
    Rules,
    ScriptRatio,
    Lengths,
    Sensitive,
    Dedup,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Accepted => "accepted",
            Stage::Ingest => "ingest",
            Stage::Normalize => "normalize",
            Stage::HasChinese => "has_chinese",
            Stage::Length => "length",
            Stage::PunctRatio => "punct_ratio",
            Stage::Rules => "rules",
            Stage::ScriptRatio => "script_ratio",
            Stage::Lengths => "lengths",
            Stage::Sensitive => "sensitive",
            Stage::Dedup => "dedup",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Keep/reject decision of one filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FilterVerdict {
    pub kept: bool,
    pub stage: Stage,
    pub reason: &'static str,
    pub measured: Option<f64>,
}

impl FilterVerdict {
    pub const ACCEPTED: &'static str = "accepted";

    pub fn keep() -> Self {
        Self {
            kept: true,
            stage: Stage::Accepted,
            reason: Self::ACCEPTED,
            measured: None,
        }
    }

    pub fn reject(stage: Stage, reason: &'static str, measured: Option<f64>) -> Self {
        debug_assert_ne!(stage, Stage::Accepted);
        Self {
            kept: false,
            stage,
            reason,
            measured,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StageCounts {
    pub inputs: u64,
    pub outputs: u64,
    pub rejected: BTreeMap<Stage, u64>,
}

impl StageCounts {
    fn merge(&mut self, other: &StageCounts) {
        self.inputs += other.inputs;
        self.outputs += other.outputs;
        for (stage, n) in &other.rejected {
            *self.rejected.entry(*stage).or_default() += n;
        }
    }

    pub fn total_rejected(&self) -> u64 {
        self.rejected.values().sum()
    }
}

/// Counters of a pipeline run. Merging is associative and commutative, so
/// partial reports from any number of workers add up to the same totals.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PipelineReport {
    pub totals: StageCounts,
    pub reasons: BTreeMap<(Stage, String), u64>,
    pub per_pair: BTreeMap<LanguagePair, StageCounts>,
    /// Auxiliary counters such as paragraphs read.
    pub extra: BTreeMap<String, u64>,
    /// Stages listed in the rendered report even when nothing was rejected.
    pub stages: Vec<Stage>,
}

impl PipelineReport {
    pub fn new(stages: &[Stage]) -> Self {
        Self {
            stages: stages.to_vec(),
            ..Self::default()
        }
    }

    pub fn record_input(&mut self, pair: Option<LanguagePair>) {
        self.totals.inputs += 1;
        if let Some(p) = pair {
            self.per_pair.entry(p).or_default().inputs += 1;
        }
    }

    pub fn record_output(&mut self, pair: Option<LanguagePair>) {
        self.totals.outputs += 1;
        if let Some(p) = pair {
            self.per_pair.entry(p).or_default().outputs += 1;
        }
    }

    pub fn record_rejection(&mut self, pair: Option<LanguagePair>, verdict: &FilterVerdict) {
        *self.totals.rejected.entry(verdict.stage).or_default() += 1;
        *self
            .reasons
            .entry((verdict.stage, verdict.reason.to_string()))
            .or_default() += 1;
        if let Some(p) = pair {
            *self
                .per_pair
                .entry(p)
                .or_default()
                .rejected
                .entry(verdict.stage)
                .or_default() += 1;
        }
    }

    pub fn bump(&mut self, key: &str, n: u64) {
        *self.extra.entry(key.to_string()).or_default() += n;
    }

    pub fn merge(&mut self, other: &PipelineReport) {
        self.totals.merge(&other.totals);
        for (k, n) in &other.reasons {
            *self.reasons.entry(k.clone()).or_default() += n;
        }
        for (p, c) in &other.per_pair {
            self.per_pair.entry(*p).or_default().merge(c);
        }
        for (k, n) in &other.extra {
            *self.extra.entry(k.clone()).or_default() += n;
        }
        for s in &other.stages {
            if !self.stages.contains(s) {
                self.stages.push(*s);
            }
        }
    }

    pub fn inputs(&self) -> u64 {
        self.totals.inputs
    }

    pub fn outputs(&self) -> u64 {
        self.totals.outputs
    }

    pub fn rejected(&self, stage: Stage) -> u64 {
        self.totals.rejected.get(&stage).copied().unwrap_or(0)
    }

    pub fn total_rejected(&self) -> u64 {
        self.totals.total_rejected()
    }

    /// Inputs equal outputs plus rejections, overall and per pair.
    pub fn is_balanced(&self) -> bool {
        self.totals.inputs == self.totals.outputs + self.totals.total_rejected()
            && self
                .per_pair
                .values()
                .all(|c| c.inputs == c.outputs + c.total_rejected())
    }

    /// Tab-separated `key value` lines in a fixed order.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: u64| {
            let _ = writeln!(out, "{k}\t{v}");
        };
        kv("inputs", self.totals.inputs);
        kv("outputs", self.totals.outputs);
        kv("rejected", self.totals.total_rejected());
        for (k, v) in &self.extra {
            kv(k, *v);
        }
        for stage in &self.stages {
            kv(&format!("stage.{stage}"), self.rejected(*stage));
        }
        for ((stage, reason), n) in &self.reasons {
            kv(&format!("reason.{stage}.{reason}"), *n);
        }
        for (pair, c) in &self.per_pair {
            kv(&format!("pair.{pair}.inputs"), c.inputs);
            kv(&format!("pair.{pair}.outputs"), c.outputs);
            for stage in &self.stages {
                let n = c.rejected.get(stage).copied().unwrap_or(0);
                kv(&format!("pair.{pair}.stage.{stage}"), n);
            }
        }
        out
    }
}
