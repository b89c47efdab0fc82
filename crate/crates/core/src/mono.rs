//! Monolingual Chinese cleaning: sentence extraction, charset normalization,
//! Chinese-character gating and a length window.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{FilterVerdict, MonoRecord, PipelineReport, Stage};
use crate::script::{classify, ScriptClass};

pub const DEFAULT_TERMINATORS: &str = "。！？；!?;.";
pub const DEFAULT_PUNCTUATION: &str = "。，、！？；：“”‘’（）《》—…·.,!?;:'\"()[]-%";
const CLOSING_QUOTES: &str = "”’\"'」』）)》】";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonoPipelineConfig {
    pub min_chars: usize,
    pub max_chars: usize,
    /// Punctuation kept by normalization, in addition to CJK ideographs,
    /// ASCII letters, ASCII digits and the space.
    pub allowed_punctuation: String,
    pub sentence_terminators: String,
}

impl Default for MonoPipelineConfig {
    fn default() -> Self {
        Self {
            min_chars: 50,
            max_chars: 250,
            allowed_punctuation: DEFAULT_PUNCTUATION.to_string(),
            sentence_terminators: DEFAULT_TERMINATORS.to_string(),
        }
    }
}

impl MonoPipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_chars == 0 || self.min_chars > self.max_chars {
            return Err(Error::Parse {
                path: "mono".into(),
                line: 0,
                message: format!(
                    "need 0 < min_chars <= max_chars, got {} and {}",
                    self.min_chars, self.max_chars
                ),
            });
        }
        Ok(())
    }
}

pub const MONO_STAGES: [Stage; 2] = [Stage::HasChinese, Stage::Length];

/// Whitelist lookups precomputed from a config.
#[derive(Debug, Clone)]
pub struct MonoPipeline {
    cfg: MonoPipelineConfig,
    punctuation: BTreeSet<char>,
    terminators: BTreeSet<char>,
}

impl MonoPipeline {
    pub fn new(cfg: MonoPipelineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            punctuation: cfg.allowed_punctuation.chars().collect(),
            terminators: cfg.sentence_terminators.chars().collect(),
            cfg,
        })
    }

    pub fn config(&self) -> &MonoPipelineConfig {
        &self.cfg
    }

    fn is_allowed(&self, c: char) -> bool {
        c == ' '
            || c.is_ascii_alphanumeric()
            || classify(c) == ScriptClass::Cjk
            || self.punctuation.contains(&c)
    }

    /// Splits a paragraph after every run of terminators, attaching closing
    /// quotes that follow the run. Line breaks always end a sentence.
    pub fn extract_sentences(&self, paragraph: &str, source_id: &str) -> Vec<MonoRecord> {
        let mut out = Vec::new();
        let mut push = |segment: &str| {
            let trimmed = segment.trim();
            if !trimmed.is_empty() {
                out.push(MonoRecord {
                    text: trimmed.to_string(),
                    source_id: source_id.to_string(),
                });
            }
        };
        let chars: Vec<(usize, char)> = paragraph.char_indices().collect();
        let mut start = 0;
        let mut i = 0;
        while i < chars.len() {
            let (pos, c) = chars[i];
            if c == '\n' || c == '\r' {
                push(&paragraph[start..pos]);
                start = pos + c.len_utf8();
                i += 1;
                continue;
            }
            if self.terminators.contains(&c) {
                let mut j = i + 1;
                while j < chars.len() && self.terminators.contains(&chars[j].1) {
                    j += 1;
                }
                while j < chars.len() && CLOSING_QUOTES.contains(chars[j].1) {
                    j += 1;
                }
                let end = chars.get(j).map_or(paragraph.len(), |&(p, _)| p);
                push(&paragraph[start..end]);
                start = end;
                i = j;
                continue;
            }
            i += 1;
        }
        push(&paragraph[start..]);
        out
    }

    /// Deletes characters outside the whitelist, turns other whitespace into
    /// spaces, collapses space runs and trims.
    pub fn normalize_charset(&self, text: &str) -> String {
        let mut out = String::with_capacity(text.len());
        let mut pending_space = false;
        for c in text.chars() {
            let c = if c.is_whitespace() { ' ' } else { c };
            if c == ' ' {
                pending_space = !out.is_empty();
                continue;
            }
            if !self.is_allowed(c) {
                continue;
            }
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(c);
        }
        out
    }

    pub fn check_length(&self, text: &str) -> FilterVerdict {
        let n = text.chars().count();
        if n < self.cfg.min_chars {
            FilterVerdict::reject(Stage::Length, "too_short", Some(n as f64))
        } else if n > self.cfg.max_chars {
            FilterVerdict::reject(Stage::Length, "too_long", Some(n as f64))
        } else {
            FilterVerdict::keep()
        }
    }

    /// Normalize, then gate on Chinese characters, then on length.
    pub fn clean_sentence(&self, record: MonoRecord) -> std::result::Result<MonoRecord, FilterVerdict> {
        let text = self.normalize_charset(&record.text);
        let verdict = check_has_chinese(&text);
        if !verdict.kept {
            return Err(verdict);
        }
        let verdict = self.check_length(&text);
        if !verdict.kept {
            return Err(verdict);
        }
        Ok(MonoRecord {
            text,
            source_id: record.source_id,
        })
    }

    /// Cleans a batch of paragraphs; output order follows input order.
    pub fn process(&self, paragraphs: &[(String, String)]) -> (Vec<MonoRecord>, PipelineReport) {
        let per_paragraph: Vec<(Vec<MonoRecord>, PipelineReport)> = paragraphs
            .par_iter()
            .map(|(text, source_id)| {
                let mut report = PipelineReport::new(&MONO_STAGES);
                report.bump("paragraphs", 1);
                let mut kept = Vec::new();
                for sentence in self.extract_sentences(text, source_id) {
                    report.record_input(None);
                    match self.clean_sentence(sentence) {
                        Ok(r) => {
                            report.record_output(None);
                            kept.push(r);
                        }
                        Err(v) => report.record_rejection(None, &v),
                    }
                }
                (kept, report)
            })
            .collect();
        let mut report = PipelineReport::new(&MONO_STAGES);
        let mut records = Vec::new();
        for (kept, r) in per_paragraph {
            records.extend(kept);
            report.merge(&r);
        }
        (records, report)
    }
}

pub fn check_has_chinese(text: &str) -> FilterVerdict {
    if text.chars().any(|c| classify(c) == ScriptClass::Cjk) {
        FilterVerdict::keep()
    } else {
        FilterVerdict::reject(Stage::HasChinese, "no_chinese", Some(0.0))
    }
}

/// Streams paragraphs (one per line) from `input` to sentences (one per
/// line) on `output`, `chunk` lines at a time.
pub fn run_mono_pipeline<R: BufRead, W: Write>(
    pipeline: &MonoPipeline,
    input: R,
    mut output: W,
    source: &str,
    chunk: usize,
) -> Result<PipelineReport> {
    let mut report = PipelineReport::new(&MONO_STAGES);
    let mut batch = Vec::with_capacity(chunk);
    let mut line_no = 0usize;
    let mut flush = |batch: &mut Vec<(String, String)>, report: &mut PipelineReport, line: usize| -> Result<()> {
        let (records, r) = pipeline.process(batch);
        for rec in records {
            writeln!(output, "{}", rec.text).map_err(|e| Error::Stream { line, source: e })?;
        }
        report.merge(&r);
        batch.clear();
        Ok(())
    };
    let mut buf = Vec::new();
    let mut input = input;
    loop {
        buf.clear();
        let n = input
            .read_until(b'\n', &mut buf)
            .map_err(|e| Error::Stream { line: line_no + 1, source: e })?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let text = String::from_utf8_lossy(&buf);
        let text = text.trim_end_matches(['\n', '\r']);
        batch.push((text.to_string(), format!("{source}:{line_no}")));
        if batch.len() >= chunk.max(1) {
            flush(&mut batch, &mut report, line_no)?;
        }
    }
    flush(&mut batch, &mut report, line_no)?;
    Ok(report)
}
