//! Language registry: codes, names, families, resource tiers and the script
//! classes each language is expected to be written in.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::script::{ScriptClass, ScriptHistogram};

const LANGUAGES_TSV: &str = include_str!("../data/languages.tsv");

/// Lowercase ISO-639 style tag of 2 to 4 ASCII letters.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LanguageCode {
    bytes: [u8; 4],
    len: u8,
}

impl LanguageCode {
    pub fn new(code: &str) -> Result<Self> {
        let len = code.len();
        if !(2..=4).contains(&len) || !code.bytes().all(|b| b.is_ascii_lowercase()) {
            return Err(Error::InvalidLanguageCode(code.to_string()));
        }
        let mut bytes = [0u8; 4];
        bytes[..len].copy_from_slice(code.as_bytes());
        Ok(Self {
            bytes,
            len: len as u8,
        })
    }

    pub fn as_str(&self) -> &str {
        // constructed only from ASCII
        std::str::from_utf8(&self.bytes[..self.len as usize]).unwrap()
    }

    pub fn is_chinese(&self) -> bool {
        self.as_str() == "zh"
    }
}

/// Shorthand for literals in tests and fixtures; panics on a malformed code.
pub fn lang(code: &str) -> LanguageCode {
    LanguageCode::new(code).expect("malformed language code literal")
}

impl fmt::Debug for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_str())
    }
}

impl fmt::Display for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LanguageCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LanguageCode::new(s)
    }
}

impl Serialize for LanguageCode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for LanguageCode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        LanguageCode::new(&s).map_err(serde::de::Error::custom)
    }
}

/// A translation direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LanguagePair {
    pub src: LanguageCode,
    pub tgt: LanguageCode,
}

impl LanguagePair {
    pub fn new(src: LanguageCode, tgt: LanguageCode) -> Self {
        Self { src, tgt }
    }

    pub fn targets_chinese(&self) -> bool {
        self.tgt.is_chinese()
    }
}

impl fmt::Display for LanguagePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.src, self.tgt)
    }
}

impl FromStr for LanguagePair {
    type Err = Error;

    /// Parses `src-tgt`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once('-')
            .ok_or_else(|| Error::InvalidLanguageCode(s.to_string()))?;
        Ok(Self::new(a.parse()?, b.parse()?))
    }
}

/// Resource tiers, ordered from most to least parallel data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceTier {
    High,
    Medium,
    Low,
    VeryLow,
}

impl ResourceTier {
    pub const ALL: [ResourceTier; 4] = [
        ResourceTier::High,
        ResourceTier::Medium,
        ResourceTier::Low,
        ResourceTier::VeryLow,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            ResourceTier::High => "High Resource",
            ResourceTier::Medium => "Medium Resource",
            ResourceTier::Low => "Low Resource",
            ResourceTier::VeryLow => "Very Low Resource",
        }
    }
}

impl FromStr for ResourceTier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', '-', ' '], "").as_str() {
            "high" => Ok(ResourceTier::High),
            "medium" => Ok(ResourceTier::Medium),
            "low" => Ok(ResourceTier::Low),
            "verylow" => Ok(ResourceTier::VeryLow),
            _ => Err(Error::Parse {
                path: "<tier>".into(),
                line: 0,
                message: format!("unknown resource tier {s:?}"),
            }),
        }
    }
}

impl fmt::Display for ResourceTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResourceTier::High => "high",
            ResourceTier::Medium => "medium",
            ResourceTier::Low => "low",
            ResourceTier::VeryLow => "very_low",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguageInfo {
    pub code: LanguageCode,
    pub name: String,
    pub family: String,
    pub tier: ResourceTier,
}

#[derive(Debug, Clone)]
pub struct Registry {
    languages: BTreeMap<LanguageCode, LanguageInfo>,
}

impl Registry {
    /// The shipped 64-language table.
    pub fn builtin() -> &'static Registry {
        static REGISTRY: OnceLock<Registry> = OnceLock::new();
        REGISTRY.get_or_init(|| {
            Registry::parse_tsv(LANGUAGES_TSV, "languages.tsv").expect("shipped languages.tsv is valid")
        })
    }

    pub fn parse_tsv(text: &str, origin: &str) -> Result<Registry> {
        let mut languages = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: origin.to_string(),
                line: idx + 1,
                message,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(parse_err(format!("expected 4 fields, found {}", fields.len())));
            }
            let code = LanguageCode::new(fields[0])?;
            let tier = fields[3].parse()?;
            let info = LanguageInfo {
                code,
                name: fields[1].to_string(),
                family: fields[2].to_string(),
                tier,
            };
            if languages.insert(code, info).is_some() {
                return Err(parse_err(format!("duplicate language {code}")));
            }
        }
        Ok(Registry { languages })
    }

    /// Adds (or overrides) a language outside the shipped table.
    pub fn with_extension(mut self, info: LanguageInfo) -> Registry {
        self.languages.insert(info.code, info);
        self
    }

    pub fn len(&self) -> usize {
        self.languages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.languages.is_empty()
    }

    pub fn contains(&self, code: LanguageCode) -> bool {
        self.languages.contains_key(&code)
    }

    pub fn info(&self, code: LanguageCode) -> Result<&LanguageInfo> {
        self.languages
            .get(&code)
            .ok_or_else(|| Error::UnknownLanguage(code.to_string()))
    }

    pub fn lookup(&self, code: &str) -> Result<LanguageCode> {
        let code = LanguageCode::new(code)?;
        self.info(code).map(|i| i.code)
    }

    pub fn languages(&self) -> impl Iterator<Item = &LanguageInfo> {
        self.languages.values()
    }

    pub fn classify_tier(&self, code: LanguageCode) -> Result<ResourceTier> {
        self.info(code).map(|i| i.tier)
    }

    pub fn name(&self, code: LanguageCode) -> Result<&str> {
        self.info(code).map(|i| i.name.as_str())
    }

    /// Tier of a direction: the non-Chinese side of a Chinese-centric pair,
    /// otherwise the lower-resourced of the two sides.
    pub fn pair_tier(&self, pair: LanguagePair) -> Result<ResourceTier> {
        let src = self.classify_tier(pair.src)?;
        let tgt = self.classify_tier(pair.tgt)?;
        Ok(if pair.tgt.is_chinese() {
            src
        } else if pair.src.is_chinese() {
            tgt
        } else {
            src.max(tgt)
        })
    }
}

pub fn classify_tier(code: LanguageCode) -> Result<ResourceTier> {
    Registry::builtin().classify_tier(code)
}

/// Script classes a language is expected to be written in.
///
/// Languages whose script has no dedicated class map to `OtherLetter` and are
/// exempt from script-ratio filtering. Unregistered languages are rejected by
/// callers before this is consulted; the fallback here is `OtherLetter`.
pub fn expected_scripts(code: LanguageCode) -> &'static [ScriptClass] {
    use ScriptClass::*;
    match code.as_str() {
        "zh" => &[Cjk],
        "en" | "es" | "fr" | "de" | "pt" | "it" | "pl" | "cs" | "hu" | "ro" | "sk" | "tr" | "sl"
        | "lt" | "et" | "id" | "lv" | "vi" | "hr" | "sq" | "ms" | "bs" | "sw" | "so" | "ha"
        | "rw" | "mi" | "mg" | "tk" | "az" | "pis" => &[Latin],
        "ru" | "bg" | "uk" | "mk" | "be" | "kk" | "ky" | "mn" => &[Cyrillic],
        "sr" => &[Cyrillic, Latin],
        "ar" | "fa" | "ur" | "ps" | "prs" | "ug" => &[Arabic],
        "hi" | "ne" => &[Devanagari],
        _ => &[OtherLetter],
    }
}

pub fn is_script_exempt(code: LanguageCode) -> bool {
    expected_scripts(code).contains(&ScriptClass::OtherLetter)
}

/// Fraction of letter-like scalars that belong to the language's expected
/// scripts. Whitespace, punctuation and digits are ignored; an input with no
/// letter-like scalars scores 1.0.
pub fn primary_script_ratio(text: &str, code: LanguageCode, registry: &Registry) -> Result<f64> {
    registry.info(code)?;
    let hist = ScriptHistogram::of(text);
    let denominator = hist.letter_like();
    if denominator == 0 {
        return Ok(1.0);
    }
    let numerator: u64 = expected_scripts(code).iter().map(|&c| hist.get(c)).sum();
    Ok(numerator as f64 / denominator as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn tiers_from_table() {
        let r = Registry::builtin();
        assert_eq!(r.classify_tier(lang("en")).unwrap(), ResourceTier::High);
        assert_eq!(r.classify_tier(lang("sw")).unwrap(), ResourceTier::Medium);
        assert_eq!(r.classify_tier(lang("bo")).unwrap(), ResourceTier::VeryLow);
        assert_eq!(r.classify_tier(lang("zh")).unwrap(), ResourceTier::Medium);
        assert_eq!(r.classify_tier(lang("pis")).unwrap(), ResourceTier::VeryLow);
    }

    #[test]
    fn unknown_language() {
        assert!(matches!(
            classify_tier(lang("xx")),
            Err(Error::UnknownLanguage(_))
        ));
    }

    #[test]
    fn code_syntax() {
        assert!(LanguageCode::new("prs").is_ok());
        assert!(LanguageCode::new("abcd").is_ok());
        assert!(LanguageCode::new("e").is_err());
        assert!(LanguageCode::new("EN").is_err());
        assert!(LanguageCode::new("abcde").is_err());
        assert!(LanguageCode::new("").is_err());
    }

    #[test]
    fn shipped_table_partitions_into_tiers() {
        let r = Registry::builtin();
        // 65 table rows, "ro" listed twice (Romanian, Moldovan)
        assert_eq!(r.len(), 64);
        let mut by_tier: BTreeMap<ResourceTier, BTreeSet<LanguageCode>> = BTreeMap::new();
        for info in r.languages() {
            by_tier.entry(info.tier).or_default().insert(info.code);
        }
        let sizes: Vec<usize> = ResourceTier::ALL.iter().map(|t| by_tier[t].len()).collect();
        assert_eq!(sizes, vec![15, 22, 16, 11]);
        let union: BTreeSet<_> = by_tier.values().flatten().collect();
        assert_eq!(union.len(), 64);
    }

    #[test]
    fn extension_languages() {
        let r = Registry::builtin().clone().with_extension(LanguageInfo {
            code: lang("tlh"),
            name: "Klingon".into(),
            family: "Constructed".into(),
            tier: ResourceTier::VeryLow,
        });
        assert_eq!(r.classify_tier(lang("tlh")).unwrap(), ResourceTier::VeryLow);
        assert!(is_script_exempt(lang("tlh")));
    }

    #[test]
    fn pair_tiers() {
        let r = Registry::builtin();
        let p = |s: &str| s.parse::<LanguagePair>().unwrap();
        assert_eq!(r.pair_tier(p("bo-zh")).unwrap(), ResourceTier::VeryLow);
        assert_eq!(r.pair_tier(p("zh-en")).unwrap(), ResourceTier::High);
        assert_eq!(r.pair_tier(p("en-sw")).unwrap(), ResourceTier::Medium);
    }

    #[test]
    fn ratios() {
        let r = Registry::builtin();
        assert_eq!(primary_script_ratio("你好", lang("zh"), r).unwrap(), 1.0);
        assert_eq!(primary_script_ratio("hello", lang("zh"), r).unwrap(), 0.0);
        assert_eq!(primary_script_ratio("你好ok", lang("zh"), r).unwrap(), 0.5);
        assert_eq!(primary_script_ratio("123 ...", lang("en"), r).unwrap(), 1.0);
        assert!(primary_script_ratio("x", lang("qq"), r).is_err());
    }

    proptest! {
        #[test]
        fn ratio_ignores_neutral_suffix(s in "\\PC{1,30}", suffix in "[ 0-9.,!?。，、]{0,10}") {
            let r = Registry::builtin();
            let base = primary_script_ratio(&s, lang("zh"), r).unwrap();
            let extended = primary_script_ratio(&format!("{s}{suffix}"), lang("zh"), r).unwrap();
            prop_assert_eq!(base, extended);
            prop_assert!((0.0..=1.0).contains(&base));
        }
    }
}
