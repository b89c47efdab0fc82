//! Back-translation augmentation: each selected pair contributes a synthetic
//! record whose source is the target sentence translated back into the
//! source language, with the authentic target kept as the target.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::ParallelRecord;
use crate::registry::{LanguageCode, LanguagePair, Registry, ResourceTier};

pub trait Translator: Send + Sync {
    fn name(&self) -> &str;
    fn translate(&self, text: &str, from: LanguageCode, to: LanguageCode) -> Result<String>;
}

/// Returns its input.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Translator for Identity {
    fn name(&self) -> &str {
        "identity"
    }

    fn translate(&self, text: &str, _: LanguageCode, _: LanguageCode) -> Result<String> {
        Ok(text.to_string())
    }
}

/// Reverses the order of whitespace-delimited words.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordReverse;

impl Translator for WordReverse {
    fn name(&self) -> &str {
        "word-reverse"
    }

    fn translate(&self, text: &str, _: LanguageCode, _: LanguageCode) -> Result<String> {
        Ok(text.split_whitespace().rev().collect::<Vec<_>>().join(" "))
    }
}

/// Word-by-word table lookup, one table per direction. Unmapped words pass
/// through unchanged.
#[derive(Debug, Clone, Default)]
pub struct Dictionary {
    tables: BTreeMap<(LanguageCode, LanguageCode), HashMap<String, String>>,
}

impl Dictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_direction<I, K, V>(&mut self, from: LanguageCode, to: LanguageCode, entries: I)
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        self.tables
            .entry((from, to))
            .or_default()
            .extend(entries.into_iter().map(|(k, v)| (k.into(), v.into())));
    }

    /// Parses `from_word<TAB>to_word` lines; blank lines and `#` comments
    /// are skipped.
    pub fn parse_direction(&mut self, from: LanguageCode, to: LanguageCode, text: &str, origin: &str) -> Result<()> {
        let mut entries = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('\t').ok_or_else(|| Error::Parse {
                path: origin.to_string(),
                line: idx + 1,
                message: "expected from_word<TAB>to_word".into(),
            })?;
            entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        self.insert_direction(from, to, entries);
        Ok(())
    }

    pub fn load_direction(&mut self, from: LanguageCode, to: LanguageCode, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.parse_direction(from, to, &text, &path.display().to_string())
    }

    pub fn supports(&self, from: LanguageCode, to: LanguageCode) -> bool {
        self.tables.contains_key(&(from, to))
    }
}

impl Translator for Dictionary {
    fn name(&self) -> &str {
        "dictionary"
    }

    fn translate(&self, text: &str, from: LanguageCode, to: LanguageCode) -> Result<String> {
        let table = self.tables.get(&(from, to)).ok_or_else(|| Error::UnsupportedDirection {
            translator: self.name().to_string(),
            from: from.to_string(),
            to: to.to_string(),
        })?;
        Ok(text
            .split_whitespace()
            .map(|w| table.get(w).map_or(w, String::as_str))
            .collect::<Vec<_>>()
            .join(" "))
    }
}

/// The translators that need no configuration, plus an empty dictionary.
pub fn builtin_translators() -> Vec<Box<dyn Translator>> {
    vec![Box::new(Identity), Box::new(WordReverse), Box::new(Dictionary::new())]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Original,
    Synthetic,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Original => "original",
            Origin::Synthetic => "synthetic",
        })
    }
}

impl std::str::FromStr for Origin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(Origin::Original),
            "synthetic" => Ok(Origin::Synthetic),
            other => Err(Error::Parse {
                path: "origin".into(),
                line: 0,
                message: format!("unknown origin {other:?}"),
            }),
        }
    }
}

/// Selects the pairs that are back-translated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairFilter {
    pub tiers: BTreeSet<ResourceTier>,
}

impl Default for PairFilter {
    fn default() -> Self {
        Self {
            tiers: [ResourceTier::Low, ResourceTier::VeryLow].into_iter().collect(),
        }
    }
}

impl PairFilter {
    pub fn all() -> Self {
        Self {
            tiers: ResourceTier::ALL.into_iter().collect(),
        }
    }

    pub fn accepts(&self, pair: LanguagePair, registry: &Registry) -> bool {
        registry.pair_tier(pair).is_ok_and(|t| self.tiers.contains(&t))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AugmentedDataset {
    pub records: Vec<ParallelRecord>,
    pub origins: Vec<Origin>,
    /// Synthetic records not added because they duplicated an existing one.
    pub duplicates: usize,
    /// Records skipped because the translator failed.
    pub failures: usize,
}

impl AugmentedDataset {
    pub fn from_originals(records: Vec<ParallelRecord>) -> Self {
        let origins = vec![Origin::Original; records.len()];
        Self {
            records,
            origins,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParallelRecord, Origin)> {
        self.records.iter().zip(self.origins.iter().copied())
    }

    pub fn count(&self, origin: Origin) -> usize {
        self.origins.iter().filter(|&&o| o == origin).count()
    }
}

pub fn augment(
    records: &[ParallelRecord],
    translator: &dyn Translator,
    filter: &PairFilter,
    registry: &Registry,
) -> AugmentedDataset {
    augment_dataset(&AugmentedDataset::from_originals(records.to_vec()), translator, filter, registry)
}

/// Appends back-translations of the original records selected by `filter`.
/// Existing records are kept as they are; synthetic records that repeat an
/// existing record are dropped.
pub fn augment_dataset(
    dataset: &AugmentedDataset,
    translator: &dyn Translator,
    filter: &PairFilter,
    registry: &Registry,
) -> AugmentedDataset {
    let translated: Vec<Option<Result<ParallelRecord>>> = dataset
        .records
        .par_iter()
        .zip(dataset.origins.par_iter())
        .map(|(rec, origin)| {
            if *origin != Origin::Original || !filter.accepts(rec.pair(), registry) {
                return None;
            }
            Some(
                translator
                    .translate(&rec.tgt_text, rec.tgt_lang, rec.src_lang)
                    .map(|src| {
                        ParallelRecord::new(
                            rec.src_lang,
                            rec.tgt_lang,
                            src,
                            rec.tgt_text.clone(),
                            format!("{}#bt", rec.source_id),
                        )
                    }),
            )
        })
        .collect();

    let mut out = dataset.clone();
    let mut seen: HashSet<(LanguagePair, String, String)> = dataset
        .records
        .iter()
        .map(|r| (r.pair(), r.src_text.clone(), r.tgt_text.clone()))
        .collect();
    for item in translated.into_iter().flatten() {
        match item {
            Ok(rec) => {
                if seen.insert((rec.pair(), rec.src_text.clone(), rec.tgt_text.clone())) {
                    out.records.push(rec);
                    out.origins.push(Origin::Synthetic);
                } else {
                    out.duplicates += 1;
                }
            }
            Err(_) => out.failures += 1,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::lang;
    use proptest::prelude::*;

    fn rec(src: &str, tgt: &str) -> ParallelRecord {
        // am is Low
        ParallelRecord::new(lang("am"), lang("zh"), src, tgt, "s")
    }

    fn run(d: &[ParallelRecord], t: &dyn Translator) -> AugmentedDataset {
        augment(d, t, &PairFilter::default(), Registry::builtin())
    }

    #[test]
    fn identity_back_translation() {
        assert!(run(&[], &Identity).is_empty());
        let out = run(&[rec("selam", "你好")], &Identity);
        assert_eq!(out.len(), 2);
        assert_eq!(out.records[1].src_text, "你好");
        assert_eq!(out.records[1].tgt_text, "你好");
        assert_eq!(out.origins, vec![Origin::Original, Origin::Synthetic]);

        let out = run(&[rec("同", "同")], &Identity);
        assert_eq!((out.len(), out.duplicates), (1, 1));
    }

    #[test]
    fn pair_filter() {
        let high = ParallelRecord::new(lang("en"), lang("zh"), "hi", "你好", "s");
        assert_eq!(run(&[high.clone()], &Identity).len(), 1);
        assert_eq!(augment(&[high], &Identity, &PairFilter::all(), Registry::builtin()).len(), 2);
    }

    #[test]
    fn translators() {
        let (en, es) = (lang("en"), lang("es"));
        assert_eq!(WordReverse.translate("a b c", en, es).unwrap(), "c b a");
        let mut d = Dictionary::new();
        d.parse_direction(es, en, "# es-en\nhola\thello\n", "t").unwrap();
        assert_eq!(d.translate("hola", es, en).unwrap(), "hello");
        assert_eq!(d.translate("hola mundo", es, en).unwrap(), "hello mundo");
        assert!(d.translate("hola", en, es).is_err());
        assert!(d.load_direction(es, en, Path::new("/nonexistent/dict.tsv")).is_err());
        assert_eq!(builtin_translators().len(), 3);
    }

    #[test]
    fn failures_are_counted() {
        let out = run(&[rec("a", "b")], &Dictionary::new());
        assert_eq!((out.len(), out.failures), (1, 1));
    }

    #[test]
    fn reaugment_adds_nothing() {
        let d = [rec("a b", "甲 乙"), rec("c", "丙")];
        let once = run(&d, &WordReverse);
        let twice = augment_dataset(&once, &WordReverse, &PairFilter::default(), Registry::builtin());
        assert_eq!(once.records, twice.records);
        assert_eq!(twice.duplicates, 2);
    }

    proptest! {
        #[test]
        fn size_bounds(texts in proptest::collection::vec(("[a-c]{0,3}", "[a-c]{0,3}"), 0..12)) {
            let d: Vec<_> = texts.iter().map(|(s, t)| rec(s, t)).collect();
            let out = run(&d, &Identity);
            prop_assert!(out.len() <= 2 * d.len());
            prop_assert_eq!(&out.records[..d.len()], &d[..]);
            prop_assert_eq!(out.len() + out.duplicates, 2 * d.len());
            let originals: HashSet<&str> = d.iter().map(|r| r.tgt_text.as_str()).collect();
            for (r, o) in out.iter() {
                if o == Origin::Synthetic {
                    prop_assert!(originals.contains(r.tgt_text.as_str()));
                }
            }
        }
    }
}
