//! Parallel-corpus cleaning. Every filter looks at both sides and any
//! rejection drops the whole pair.
//!
//! Stage order: normalize, punctuation ratio, rule-based checks, script
//! ratio, length controls, sensitive words, deduplication. The first six
//! are per-record and run in parallel; deduplication is a sequential
//! first-wins pass over the ordered stream, so output does not depend on
//! the worker count.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{FilterVerdict, ParallelRecord, PipelineReport, Stage};
use crate::registry::{is_script_exempt, primary_script_ratio, LanguageCode, LanguagePair, Registry};
use crate::script::{classify, ScriptClass};
use crate::tokenizer::{TokenizerMode, TokenizerSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParaPipelineConfig {
    pub punct_ratio_max: f64,
    pub nonprintable_ratio_max: f64,
    pub max_token_chars: usize,
    pub script_ratio_min: f64,
    pub length_ratio_max: f64,
    pub min_avg_tokens: f64,
    pub max_chars: usize,
    pub sensitive_freq_max: f64,
    /// Path of the sensitive lexicon; `None` disables the stage.
    pub sensitive_words: Option<PathBuf>,
}

impl Default for ParaPipelineConfig {
    fn default() -> Self {
        Self {
            punct_ratio_max: 0.5,
            nonprintable_ratio_max: 0.1,
            max_token_chars: 100,
            script_ratio_min: 0.5,
            length_ratio_max: 3.0,
            min_avg_tokens: 10.0,
            max_chars: 250,
            sensitive_freq_max: 0.5,
            sensitive_words: None,
        }
    }
}

impl ParaPipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let fractions = [
            ("punct_ratio_max", self.punct_ratio_max),
            ("nonprintable_ratio_max", self.nonprintable_ratio_max),
            ("script_ratio_min", self.script_ratio_min),
            ("sensitive_freq_max", self.sensitive_freq_max),
        ];
        for (name, v) in fractions {
            if !(0.0..=1.0).contains(&v) {
                return Err(config_error(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if !(self.length_ratio_max > 1.0) {
            return Err(config_error(format!(
                "length_ratio_max must exceed 1, got {}",
                self.length_ratio_max
            )));
        }
        Ok(())
    }
}

fn config_error(message: String) -> Error {
    Error::Parse {
        path: "para".into(),
        line: 0,
        message,
    }
}

/// Lowercased sensitive words, global or per language.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SensitiveLexicon {
    global: BTreeSet<String>,
    per_language: BTreeMap<LanguageCode, BTreeSet<String>>,
}

impl SensitiveLexicon {
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            global: words.into_iter().map(|w| w.as_ref().to_lowercase()).collect(),
            per_language: BTreeMap::new(),
        }
    }

    /// One word per line, `#` comments, optional `[lang]` section headers.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lex = Self::default();
        let mut section: Option<LanguageCode> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(code) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(LanguageCode::new(code.trim()).map_err(|_| Error::Parse {
                    path: origin.to_string(),
                    line: idx + 1,
                    message: format!("bad section header {line:?}"),
                })?);
                continue;
            }
            let word = line.to_lowercase();
            match section {
                Some(l) => {
                    lex.per_language.entry(l).or_default().insert(word);
                }
                None => {
                    lex.global.insert(word);
                }
            }
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn is_empty(&self) -> bool {
        self.global.is_empty() && self.per_language.values().all(BTreeSet::is_empty)
    }

    fn words_for(&self, lang: LanguageCode) -> impl Iterator<Item = &String> {
        self.global
            .iter()
            .chain(self.per_language.get(&lang).into_iter().flatten())
    }

    fn contains(&self, lang: LanguageCode, word: &str) -> bool {
        self.global.contains(word) || self.per_language.get(&lang).is_some_and(|s| s.contains(word))
    }
}

pub const PARA_STAGES: [Stage; 7] = [
    Stage::Ingest,
    Stage::PunctRatio,
    Stage::Rules,
    Stage::ScriptRatio,
    Stage::Lengths,
    Stage::Sensitive,
    Stage::Dedup,
];

const QUOTE_MAP: &[(char, char)] = &[
    ('\u{201C}', '"'),
    ('\u{201D}', '"'),
    ('\u{201E}', '"'),
    ('\u{201F}', '"'),
    ('\u{00AB}', '"'),
    ('\u{00BB}', '"'),
    ('\u{2033}', '"'),
    ('\u{2018}', '\''),
    ('\u{2019}', '\''),
    ('\u{201A}', '\''),
    ('\u{201B}', '\''),
    ('\u{2032}', '\''),
];

/// Maps quote variants to ASCII, fullwidth digits to ASCII digits, collapses
/// whitespace runs to one space and trims. CJK punctuation is untouched.
pub fn normalize_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        let c = match c {
            '\u{FF10}'..='\u{FF19}' => char::from(b'0' + (c as u32 - 0xFF10) as u8),
            _ => QUOTE_MAP
                .iter()
                .find(|(from, _)| *from == c)
                .map_or(c, |&(_, to)| to),
        };
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.push(c);
    }
    out
}

pub fn normalize_pair(record: &ParallelRecord) -> ParallelRecord {
    ParallelRecord {
        src_text: normalize_text(&record.src_text),
        tgt_text: normalize_text(&record.tgt_text),
        ..record.clone()
    }
}

pub fn check_punct_ratio(record: &ParallelRecord, cfg: &ParaPipelineConfig) -> FilterVerdict {
    for (_, text) in record.sides() {
        let mut total = 0usize;
        let mut punct = 0usize;
        for c in text.chars() {
            match classify(c) {
                ScriptClass::Whitespace => {}
                ScriptClass::Punctuation => {
                    total += 1;
                    punct += 1;
                }
                _ => total += 1,
            }
        }
        if total == 0 {
            return FilterVerdict::reject(Stage::PunctRatio, "empty", None);
        }
        let ratio = punct as f64 / total as f64;
        if ratio > cfg.punct_ratio_max {
            return FilterVerdict::reject(Stage::PunctRatio, "punct_ratio", Some(ratio));
        }
    }
    FilterVerdict::keep()
}

pub fn check_rules(record: &ParallelRecord, cfg: &ParaPipelineConfig) -> FilterVerdict {
    for (_, text) in record.sides() {
        if text.chars().all(char::is_whitespace) {
            return FilterVerdict::reject(Stage::Rules, "whitespace_only", None);
        }
        let total = text.chars().count();
        let nonprintable = text
            .chars()
            .filter(|&c| classify(c) == ScriptClass::Nonprintable)
            .count();
        let ratio = nonprintable as f64 / total as f64;
        if ratio > cfg.nonprintable_ratio_max {
            return FilterVerdict::reject(Stage::Rules, "nonprintable", Some(ratio));
        }
        if let Some(longest) = text.split_whitespace().map(|t| t.chars().count()).max() {
            if longest > cfg.max_token_chars {
                return FilterVerdict::reject(Stage::Rules, "long_token", Some(longest as f64));
            }
        }
    }
    FilterVerdict::keep()
}

pub fn check_script_ratio(record: &ParallelRecord, cfg: &ParaPipelineConfig, registry: &Registry) -> FilterVerdict {
    for (lang, text) in record.sides() {
        if is_script_exempt(lang) {
            continue;
        }
        let ratio = match primary_script_ratio(text, lang, registry) {
            Ok(r) => r,
            Err(_) => return FilterVerdict::reject(Stage::ScriptRatio, "unknown_language", None),
        };
        if ratio < cfg.script_ratio_min {
            return FilterVerdict::reject(Stage::ScriptRatio, "script_ratio", Some(ratio));
        }
    }
    FilterVerdict::keep()
}

pub fn check_lengths(record: &ParallelRecord, cfg: &ParaPipelineConfig, tokenizer: &TokenizerSpec) -> FilterVerdict {
    let src_n = tokenizer.token_count(&record.src_text, record.src_lang);
    let tgt_n = tokenizer.token_count(&record.tgt_text, record.tgt_lang);
    if src_n == 0 || tgt_n == 0 {
        return FilterVerdict::reject(Stage::Lengths, "empty", None);
    }
    let ratio = src_n.max(tgt_n) as f64 / src_n.min(tgt_n) as f64;
    if ratio > cfg.length_ratio_max {
        return FilterVerdict::reject(Stage::Lengths, "length_ratio", Some(ratio));
    }
    let avg = (src_n + tgt_n) as f64 / 2.0;
    if avg < cfg.min_avg_tokens {
        return FilterVerdict::reject(Stage::Lengths, "too_short", Some(avg));
    }
    for (_, text) in record.sides() {
        let n = text.chars().count();
        if n > cfg.max_chars {
            return FilterVerdict::reject(Stage::Lengths, "too_long", Some(n as f64));
        }
    }
    FilterVerdict::keep()
}

/// Fraction of a side's tokens that are sensitive. Whitespace-mode languages
/// match whole tokens case-insensitively; character-mode languages count the
/// characters covered by substring matches.
pub fn sensitive_frequency(
    text: &str,
    lang: LanguageCode,
    lexicon: &SensitiveLexicon,
    tokenizer: &TokenizerSpec,
) -> f64 {
    match tokenizer.mode(lang) {
        TokenizerMode::Whitespace => {
            let tokens: Vec<&str> = text.split_whitespace().collect();
            if tokens.is_empty() {
                return 0.0;
            }
            let hits = tokens
                .iter()
                .filter(|t| lexicon.contains(lang, &t.to_lowercase()))
                .count();
            hits as f64 / tokens.len() as f64
        }
        TokenizerMode::Character | TokenizerMode::Byte => {
            let lowered: Vec<char> = text.to_lowercase().chars().collect();
            if lowered.is_empty() {
                return 0.0;
            }
            let mut covered = vec![false; lowered.len()];
            for word in lexicon.words_for(lang) {
                let w: Vec<char> = word.chars().collect();
                if w.is_empty() || w.len() > lowered.len() {
                    continue;
                }
                for start in 0..=lowered.len() - w.len() {
                    if lowered[start..start + w.len()] == w[..] {
                        covered[start..start + w.len()].iter_mut().for_each(|c| *c = true);
                    }
                }
            }
            covered.iter().filter(|&&c| c).count() as f64 / lowered.len() as f64
        }
    }
}

pub fn check_sensitive(
    record: &ParallelRecord,
    cfg: &ParaPipelineConfig,
    lexicon: &SensitiveLexicon,
    tokenizer: &TokenizerSpec,
) -> FilterVerdict {
    if lexicon.is_empty() {
        return FilterVerdict::keep();
    }
    for (lang, text) in record.sides() {
        let freq = sensitive_frequency(text, lang, lexicon, tokenizer);
        if freq > cfg.sensitive_freq_max {
            return FilterVerdict::reject(Stage::Sensitive, "sensitive", Some(freq));
        }
    }
    FilterVerdict::keep()
}

/// First-wins deduplication on (pair, src_text, tgt_text).
#[derive(Debug, Default)]
pub struct Deduplicator {
    seen: HashSet<(LanguagePair, String, String)>,
}

impl Deduplicator {
    pub fn new() -> Self {
        Self::default()
    }

    /// True when the record has not been seen before.
    pub fn admit(&mut self, record: &ParallelRecord) -> bool {
        self.seen
            .insert((record.pair(), record.src_text.clone(), record.tgt_text.clone()))
    }
}

pub fn dedup(records: Vec<ParallelRecord>) -> Vec<ParallelRecord> {
    let mut d = Deduplicator::new();
    records.into_iter().filter(|r| d.admit(r)).collect()
}

/// A line that could not become a record, with its rejection reason.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestReject {
    pub line: usize,
    pub reason: &'static str,
    pub pair: Option<LanguagePair>,
}

/// Result of reading one input line.
pub type Ingested = std::result::Result<ParallelRecord, IngestReject>;

/// Parses one TSV record line (`src_lang tgt_lang src_text tgt_text source_id`).
pub fn parse_tsv_line(bytes: &[u8], line: usize, origin: &str, registry: &Registry) -> Ingested {
    let reject = |reason, pair| IngestReject { line, reason, pair };
    let text = match std::str::from_utf8(bytes) {
        Ok(t) => t.trim_end_matches(['\n', '\r']),
        Err(_) => return Err(reject("invalid_utf8", None)),
    };
    let fields: Vec<&str> = text.split('\t').collect();
    if fields.len() < 4 || fields.len() > 6 {
        return Err(reject("malformed", None));
    }
    let (Ok(src), Ok(tgt)) = (LanguageCode::new(fields[0]), LanguageCode::new(fields[1])) else {
        return Err(reject("malformed", None));
    };
    let pair = Some(LanguagePair::new(src, tgt));
    if !registry.contains(src) || !registry.contains(tgt) {
        return Err(reject("unknown_language", pair));
    }
    if src == tgt {
        return Err(reject("same_language", pair));
    }
    let source_id = fields
        .get(4)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("{origin}:{line}"));
    Ok(ParallelRecord::new(src, tgt, fields[2], fields[3], source_id))
}

/// Configured pipeline with its lexicon and tokenizer.
#[derive(Debug, Clone)]
pub struct ParaPipeline {
    cfg: ParaPipelineConfig,
    lexicon: SensitiveLexicon,
    tokenizer: TokenizerSpec,
    registry: Registry,
}

impl ParaPipeline {
    pub fn new(cfg: ParaPipelineConfig, lexicon: SensitiveLexicon, tokenizer: TokenizerSpec, registry: Registry) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            lexicon,
            tokenizer,
            registry,
        })
    }

    /// Loads the lexicon named in the config (if any) and uses the default
    /// segmenter and the shipped registry.
    pub fn from_config(cfg: ParaPipelineConfig) -> Result<Self> {
        let lexicon = match &cfg.sensitive_words {
            Some(p) => SensitiveLexicon::load(p)?,
            None => SensitiveLexicon::default(),
        };
        Self::new(cfg, lexicon, TokenizerSpec::segmenter(), Registry::builtin().clone())
    }

    pub fn config(&self) -> &ParaPipelineConfig {
        &self.cfg
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    /// Normalization and the five per-record filters.
    pub fn clean_record(&self, record: &ParallelRecord) -> std::result::Result<ParallelRecord, FilterVerdict> {
        let record = normalize_pair(record);
        let checks = [
            check_punct_ratio(&record, &self.cfg),
            check_rules(&record, &self.cfg),
            check_script_ratio(&record, &self.cfg, &self.registry),
            check_lengths(&record, &self.cfg, &self.tokenizer),
            check_sensitive(&record, &self.cfg, &self.lexicon, &self.tokenizer),
        ];
        // evaluated in order; the first rejection wins
        match checks.into_iter().find(|v| !v.kept) {
            Some(v) => Err(v),
            None => Ok(record),
        }
    }

    /// Runs a batch through every stage, continuing deduplication state in
    /// `dedup`. Output preserves input order.
    pub fn process(
        &self,
        batch: Vec<Ingested>,
        dedup: &mut Deduplicator,
        report: &mut PipelineReport,
    ) -> Vec<ParallelRecord> {
        let cleaned: Vec<std::result::Result<ParallelRecord, (Option<LanguagePair>, FilterVerdict)>> = batch
            .into_par_iter()
            .map(|item| match item {
                Ok(rec) => self.clean_record(&rec).map_err(|v| (Some(rec.pair()), v)),
                Err(rej) => Err((rej.pair, FilterVerdict::reject(Stage::Ingest, rej.reason, None))),
            })
            .collect();
        let mut out = Vec::new();
        for item in cleaned {
            match item {
                Ok(rec) => {
                    let pair = Some(rec.pair());
                    report.record_input(pair);
                    if dedup.admit(&rec) {
                        report.record_output(pair);
                        out.push(rec);
                    } else {
                        report.record_rejection(pair, &FilterVerdict::reject(Stage::Dedup, "duplicate", None));
                    }
                }
                Err((pair, verdict)) => {
                    report.record_input(pair);
                    report.record_rejection(pair, &verdict);
                }
            }
        }
        out
    }

    /// Convenience wrapper over in-memory records.
    pub fn run(&self, records: Vec<ParallelRecord>) -> (Vec<ParallelRecord>, PipelineReport) {
        let mut report = PipelineReport::new(&PARA_STAGES);
        let mut dedup = Deduplicator::new();
        let out = self.process(records.into_iter().map(Ok).collect(), &mut dedup, &mut report);
        (out, report)
    }
}

/// Streams TSV records from `input` to `output`, `chunk` lines at a time.
pub fn run_para_pipeline<R: BufRead, W: Write>(
    pipeline: &ParaPipeline,
    mut input: R,
    mut output: W,
    origin: &str,
    chunk: usize,
) -> Result<PipelineReport> {
    let mut report = PipelineReport::new(&PARA_STAGES);
    let mut dedup = Deduplicator::new();
    let mut batch = Vec::with_capacity(chunk);
    let mut line = 0usize;
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = input
            .read_until(b'\n', &mut buf)
            .map_err(|e| Error::Stream { line: line + 1, source: e })?;
        if n > 0 {
            line += 1;
            batch.push(parse_tsv_line(&buf, line, origin, &pipeline.registry));
        }
        if (n == 0 && !batch.is_empty()) || batch.len() >= chunk.max(1) {
            for rec in pipeline.process(std::mem::take(&mut batch), &mut dedup, &mut report) {
                writeln!(output, "{}", rec.to_tsv()).map_err(|e| Error::Stream { line, source: e })?;
            }
        }
        if n == 0 {
            break;
        }
    }
    Ok(report)
}

/// Aligned `<stem>.<src>` / `<stem>.<tgt>` files in a directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilePair {
    pub stem: String,
    pub src: PathBuf,
    pub tgt: PathBuf,
}

fn count_lines(path: &Path) -> Result<usize> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let newlines = bytes.iter().filter(|&&b| b == b'\n').count();
    Ok(newlines + usize::from(!bytes.is_empty() && !bytes.ends_with(b"\n")))
}

/// Files are paired by stem; stems without both suffixes are ignored.
pub fn pair_files(dir: &Path, src: LanguageCode, tgt: LanguageCode) -> Result<Vec<FilePair>> {
    let mut by_stem: BTreeMap<String, (Option<PathBuf>, Option<PathBuf>)> = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some((stem, suffix)) = name.rsplit_once('.') else {
            continue;
        };
        let slot = by_stem.entry(stem.to_string()).or_default();
        if suffix == src.as_str() {
            slot.0 = Some(path);
        } else if suffix == tgt.as_str() {
            slot.1 = Some(path);
        }
    }
    let mut pairs = Vec::new();
    for (stem, slot) in by_stem {
        if let (Some(s), Some(t)) = slot {
            let (src_lines, tgt_lines) = (count_lines(&s)?, count_lines(&t)?);
            if src_lines != tgt_lines {
                return Err(Error::Alignment {
                    stem,
                    src_lines,
                    tgt_lines,
                });
            }
            pairs.push(FilePair { stem, src: s, tgt: t });
        }
    }
    Ok(pairs)
}

/// Reads aligned plain-text files into (possibly rejected) records.
pub fn read_file_pair(pair: &FilePair, src: LanguageCode, tgt: LanguageCode) -> Result<Vec<Ingested>> {
    let read = |p: &Path| fs::read(p).map_err(|e| Error::io(p, e));
    let (s, t) = (read(&pair.src)?, read(&pair.tgt)?);
    let split = |b: &[u8]| -> Vec<Vec<u8>> {
        let mut lines: Vec<Vec<u8>> = b.split(|&c| c == b'\n').map(<[u8]>::to_vec).collect();
        if b.ends_with(b"\n") || b.is_empty() {
            lines.pop();
        }
        lines
    };
    let pair_id = Some(LanguagePair::new(src, tgt));
    Ok(split(&s)
        .into_iter()
        .zip(split(&t))
        .enumerate()
        .map(|(i, (a, b))| {
            let line = i + 1;
            match (String::from_utf8(a), String::from_utf8(b)) {
                (Ok(a), Ok(b)) => Ok(ParallelRecord::new(
                    src,
                    tgt,
                    a.trim_end_matches('\r'),
                    b.trim_end_matches('\r'),
                    format!("{}:{line}", pair.stem),
                )),
                _ => Err(IngestReject {
                    line,
                    reason: "invalid_utf8",
                    pair: pair_id,
                }),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::lang;

    fn rec(src: &str, tgt: &str) -> ParallelRecord {
        ParallelRecord::new(lang("en"), lang("zh"), src, tgt, "t")
    }

    fn cfg() -> ParaPipelineConfig {
        ParaPipelineConfig::default()
    }

    #[test]
    fn punct_ratio() {
        let v = check_punct_ratio(&rec("!!!", "你好"), &cfg());
        assert_eq!((v.kept, v.reason, v.measured), (false, "punct_ratio", Some(1.0)));
        assert!(check_punct_ratio(&rec("hi.", "你好。"), &cfg()).kept);
        assert_eq!(check_punct_ratio(&rec("  ", "你好"), &cfg()).reason, "empty");
    }

    #[test]
    fn rules() {
        assert_eq!(check_rules(&rec("   ", "你好"), &cfg()).reason, "whitespace_only");
        let long = "a".repeat(150);
        let v = check_rules(&rec(&format!("x {long}"), "你好"), &cfg());
        assert_eq!((v.reason, v.measured), ("long_token", Some(150.0)));
        assert!(check_rules(&rec("a normal sentence", "一个正常的句子"), &cfg()).kept);
        let v = check_rules(&rec("ab\u{0}\u{0}", "你好"), &cfg());
        assert_eq!(v.reason, "nonprintable");
    }

    #[test]
    fn script_ratio() {
        let r = Registry::builtin();
        assert_eq!(check_script_ratio(&rec("hello", "hello there friend"), &cfg(), r).measured, Some(0.0));
        assert!(check_script_ratio(&rec("hello", "你好世界"), &cfg(), r).kept);
        assert!(check_script_ratio(&rec("hello", "你好ok"), &cfg(), r).kept);
        // Greek has no dedicated class and is exempt
        let greek = ParallelRecord::new(lang("el"), lang("zh"), "hello", "你好", "t");
        assert!(check_script_ratio(&greek, &cfg(), r).kept);
    }

    #[test]
    fn lengths() {
        let tok = TokenizerSpec::segmenter();
        let words = |n: usize| vec!["w"; n].join(" ");
        let v = check_lengths(&rec(&words(10), &"字".repeat(31)), &cfg(), &tok);
        assert_eq!(v.reason, "length_ratio");
        assert!((v.measured.unwrap() - 3.1).abs() < 1e-12);
        assert!(check_lengths(&rec(&words(12), &"字".repeat(12)), &cfg(), &tok).kept);
        // ratio exactly 3 is kept
        assert!(check_lengths(&rec(&words(10), &"字".repeat(30)), &cfg(), &tok).kept);
        let v = check_lengths(&rec(&words(9), &"字".repeat(9)), &cfg(), &tok);
        assert_eq!((v.reason, v.measured), ("too_short", Some(9.0)));
        let v = check_lengths(&rec(&words(12), &"字".repeat(251)), &ParaPipelineConfig { length_ratio_max: 30.0, ..cfg() }, &tok);
        assert_eq!(v.reason, "too_long");
        assert_eq!(check_lengths(&rec("", "字"), &cfg(), &tok).reason, "empty");
    }

    #[test]
    fn sensitive() {
        let tok = TokenizerSpec::segmenter();
        let lex = SensitiveLexicon::from_words(["bad"]);
        let v = check_sensitive(&rec("bad BAD ok", "好"), &cfg(), &lex, &tok);
        assert_eq!(v.reason, "sensitive");
        assert!((v.measured.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(check_sensitive(&rec("bad ok ok", "好"), &cfg(), &lex, &tok).kept);
        assert!(check_sensitive(&rec("bad bad bad", "好"), &cfg(), &SensitiveLexicon::default(), &tok).kept);
        let zh = SensitiveLexicon::parse("# comment\n[zh]\n坏蛋\n", "x").unwrap();
        assert!((sensitive_frequency("坏蛋坏蛋好", lang("zh"), &zh, &tok) - 0.8).abs() < 1e-12);
        assert_eq!(sensitive_frequency("bad", lang("en"), &zh, &tok), 0.0);
    }

    #[test]
    fn dedup_first_wins() {
        let a = rec("a", "甲");
        let b = rec("b", "乙");
        assert_eq!(dedup(vec![a.clone(), a.clone()]), vec![a.clone()]);
        assert_eq!(dedup(vec![a.clone(), b.clone(), a.clone()]), vec![a, b]);
        assert!(dedup(vec![]).is_empty());
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_text("\u{201C}hi\u{201D}"), "\"hi\"");
        assert_eq!(normalize_text("１２３"), "123");
        assert_eq!(normalize_text("  a \t b  "), "a b");
        assert_eq!(normalize_text("«x» ‚y‘ 「z」。"), "\"x\" 'y' 「z」。");
        let once = normalize_text("  “a”  １ ");
        assert_eq!(normalize_text(&once), once);
    }

    #[test]
    fn ingest_rejections() {
        let r = Registry::builtin();
        assert_eq!(parse_tsv_line(b"en\tzh\ta\xff\tb\tid", 1, "f", r).unwrap_err().reason, "invalid_utf8");
        assert_eq!(parse_tsv_line(b"en\tzh\tonly", 2, "f", r).unwrap_err().reason, "malformed");
        assert_eq!(parse_tsv_line(b"en\ten\ta\tb", 3, "f", r).unwrap_err().reason, "same_language");
        assert_eq!(parse_tsv_line(b"xx\tzh\ta\tb", 3, "f", r).unwrap_err().reason, "unknown_language");
        let ok = parse_tsv_line(b"en\tzh\ta\tb\n", 4, "f", r).unwrap();
        assert_eq!(ok.source_id, "f:4");
    }

    #[test]
    fn file_pairing() {
        let dir = tempfile::tempdir().unwrap();
        assert!(pair_files(dir.path(), lang("en"), lang("zh")).unwrap().is_empty());
        fs::write(dir.path().join("a.en"), "x\ny\n").unwrap();
        fs::write(dir.path().join("a.zh"), "甲\n乙\n").unwrap();
        fs::write(dir.path().join("b.en"), "z\n").unwrap();
        let pairs = pair_files(dir.path(), lang("en"), lang("zh")).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].stem, "a");
        let recs = read_file_pair(&pairs[0], lang("en"), lang("zh")).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].as_ref().unwrap().tgt_text, "乙");

        fs::write(dir.path().join("c.en"), "1\n2\n3\n").unwrap();
        fs::write(dir.path().join("c.zh"), "1\n2\n").unwrap();
        match pair_files(dir.path(), lang("en"), lang("zh")) {
            Err(Error::Alignment { stem, .. }) => assert_eq!(stem, "c"),
            other => panic!("expected alignment error, got {other:?}"),
        }
    }
}
