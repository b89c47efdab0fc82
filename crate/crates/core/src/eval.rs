//! Corpus BLEU, chrF and tier-grouped score reports.
//!
//! BLEU: orders 1 to 4 over segmenter units (characters for Chinese and the
//! other unspaced scripts, words elsewhere), clipped counts summed over the
//! corpus, `(m + 1) / (t + 1)` for any order with no matches, brevity
//! penalty `exp(1 - r / c)` when `c < r`.
//!
//! chrF: character n-grams of orders 1 to 6 with whitespace removed. Per
//! sentence, precision and recall are averaged over the orders both sides
//! have n-grams for, then combined with beta = 2. The corpus score is the
//! mean of sentence scores.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::BufRead;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::registry::{LanguageCode, LanguagePair, Registry, ResourceTier};
use crate::tokenizer::TokenizerSpec;

pub const BLEU_ORDER: usize = 4;
pub const CHRF_ORDER: usize = 6;
pub const CHRF_BETA: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EvalPair {
    pub pair: LanguagePair,
    pub hypothesis: String,
    pub reference: String,
}

impl EvalPair {
    pub fn new(pair: LanguagePair, hypothesis: impl Into<String>, reference: impl Into<String>) -> Self {
        Self {
            pair,
            hypothesis: hypothesis.into(),
            reference: reference.into(),
        }
    }
}

fn ngram_counts<T: Eq + std::hash::Hash + Clone>(units: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if units.len() >= n {
        for w in units.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn clipped_matches<T: Eq + std::hash::Hash + Clone>(hyp: &[T], reference: &[T], n: usize) -> usize {
    let r = ngram_counts(reference, n);
    ngram_counts(hyp, n)
        .into_iter()
        .map(|(g, c)| c.min(r.get(g).copied().unwrap_or(0)))
        .sum()
}

/// Sufficient statistics of BLEU for one segment or a whole corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [usize; BLEU_ORDER],
    pub totals: [usize; BLEU_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn of_units(hyp: &[&str], reference: &[&str]) -> Self {
        let mut s = Self {
            hyp_len: hyp.len(),
            ref_len: reference.len(),
            ..Self::default()
        };
        for n in 1..=BLEU_ORDER {
            s.matches[n - 1] = clipped_matches(hyp, reference, n);
            s.totals[n - 1] = hyp.len().saturating_sub(n - 1);
        }
        s
    }

    pub fn add(mut self, other: &Self) -> Self {
        for n in 0..BLEU_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
        self
    }

    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 {
            return 0.0;
        }
        let log_p: f64 = (0..BLEU_ORDER)
            .map(|n| {
                let (m, t) = (self.matches[n], self.totals[n]);
                if m == 0 {
                    ((m + 1) as f64 / (t + 1) as f64).ln()
                } else {
                    (m as f64 / t as f64).ln()
                }
            })
            .sum::<f64>()
            / BLEU_ORDER as f64;
        let bp = if self.hyp_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        } else {
            1.0
        };
        100.0 * bp * log_p.exp()
    }
}

/// Scoring units of a text in a language: segmenter units without whitespace.
pub fn units<'a>(text: &'a str, lang: LanguageCode, tokenizer: &TokenizerSpec) -> Vec<&'a str> {
    tokenizer
        .segments(text, lang)
        .into_iter()
        .filter(|s| !s.chars().all(char::is_whitespace))
        .collect()
}

pub fn bleu_stats(corpus: &[EvalPair], tokenizer: &TokenizerSpec) -> BleuStats {
    corpus
        .par_iter()
        .map(|p| {
            let lang = p.pair.tgt;
            BleuStats::of_units(&units(&p.hypothesis, lang, tokenizer), &units(&p.reference, lang, tokenizer))
        })
        .collect::<Vec<_>>()
        .iter()
        .fold(BleuStats::default(), |acc, s| acc.add(s))
}

pub fn bleu(corpus: &[EvalPair], tokenizer: &TokenizerSpec) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::Metric("empty corpus".into()));
    }
    Ok(bleu_stats(corpus, tokenizer).score())
}

/// Sentence-level chrF in [0, 100].
pub fn chrf_sentence(hypothesis: &str, reference: &str) -> f64 {
    let h: Vec<char> = hypothesis.chars().filter(|c| !c.is_whitespace()).collect();
    let r: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    let (mut p_sum, mut r_sum, mut orders) = (0.0, 0.0, 0usize);
    for n in 1..=CHRF_ORDER {
        let (ht, rt) = (h.len().saturating_sub(n - 1), r.len().saturating_sub(n - 1));
        if h.len() < n || r.len() < n {
            continue;
        }
        let m = clipped_matches(&h, &r, n) as f64;
        p_sum += m / ht as f64;
        r_sum += m / rt as f64;
        orders += 1;
    }
    if orders == 0 {
        return if h == r { 100.0 } else { 0.0 };
    }
    let (p, rec) = (p_sum / orders as f64, r_sum / orders as f64);
    if p == 0.0 && rec == 0.0 {
        return 0.0;
    }
    let b2 = CHRF_BETA * CHRF_BETA;
    100.0 * (1.0 + b2) * p * rec / (b2 * p + rec)
}

pub fn chrf(corpus: &[EvalPair]) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::Metric("empty corpus".into()));
    }
    let scores: Vec<f64> = corpus
        .par_iter()
        .map(|p| chrf_sentence(&p.hypothesis, &p.reference))
        .collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairScore {
    pub bleu: f64,
    pub chrf: f64,
    pub segments: usize,
}

/// Groups a corpus by pair and scores each group.
pub fn score_by_pair(corpus: &[EvalPair], tokenizer: &TokenizerSpec) -> Result<BTreeMap<LanguagePair, PairScore>> {
    let mut groups: BTreeMap<LanguagePair, Vec<EvalPair>> = BTreeMap::new();
    for p in corpus {
        groups.entry(p.pair).or_default().push(p.clone());
    }
    groups
        .into_iter()
        .map(|(pair, g)| {
            Ok((
                pair,
                PairScore {
                    bleu: bleu(&g, tokenizer)?,
                    chrf: chrf(&g)?,
                    segments: g.len(),
                },
            ))
        })
        .collect()
}

/// Reads `src_lang tgt_lang hypothesis reference` lines.
pub fn read_eval_tsv<R: BufRead>(input: R, origin: &str) -> Result<Vec<EvalPair>> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::Stream { line: idx + 1, source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: origin.to_string(),
            line: idx + 1,
            message,
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(parse_err(format!("expected 4 tab-separated fields, got {}", f.len())));
        }
        let src = LanguageCode::new(f[0]).map_err(|e| parse_err(e.to_string()))?;
        let tgt = LanguageCode::new(f[1]).map_err(|e| parse_err(e.to_string()))?;
        if f[3].trim().is_empty() {
            return Err(parse_err("empty reference".into()));
        }
        out.push(EvalPair::new(LanguagePair::new(src, tgt), f[2], f[3]));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TierMean {
    pub bleu: f64,
    pub chrf: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub per_pair: BTreeMap<LanguagePair, (ResourceTier, PairScore)>,
    pub tiers: BTreeMap<ResourceTier, TierMean>,
    pub overall: Option<TierMean>,
}

fn mean_of<'a>(scores: impl Iterator<Item = &'a PairScore>) -> Option<TierMean> {
    let (mut b, mut c, mut n) = (0.0, 0.0, 0usize);
    for s in scores {
        b += s.bleu;
        c += s.chrf;
        n += 1;
    }
    (n > 0).then(|| TierMean {
        bleu: b / n as f64,
        chrf: c / n as f64,
        pairs: n,
    })
}

pub fn build_report(scores: &BTreeMap<LanguagePair, PairScore>, registry: &Registry) -> Result<EvalReport> {
    let mut per_pair = BTreeMap::new();
    for (&pair, &s) in scores {
        per_pair.insert(pair, (registry.pair_tier(pair)?, s));
    }
    let tiers = ResourceTier::ALL
        .iter()
        .filter_map(|&t| {
            mean_of(per_pair.values().filter(|(pt, _)| *pt == t).map(|(_, s)| s)).map(|m| (t, m))
        })
        .collect();
    let overall = mean_of(per_pair.values().map(|(_, s)| s));
    Ok(EvalReport {
        per_pair,
        tiers,
        overall,
    })
}

impl EvalReport {
    /// Tier row for one metric: four columns in tier order, 4 decimals,
    /// `-` for tiers without pairs.
    pub fn tier_row(&self, metric: Metric) -> String {
        ResourceTier::ALL
            .iter()
            .map(|t| match self.tiers.get(t) {
                Some(m) => format!("{:.4}", metric.of_mean(m)),
                None => "-".to_string(),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Tier table followed by the per-pair long table.
    pub fn render(&self, model: &str) -> String {
        let mut out = String::new();
        let header: Vec<&str> = ResourceTier::ALL.iter().map(|t| t.label()).collect();
        let _ = writeln!(out, "Model\tMetric\t{}", header.join("\t"));
        for metric in [Metric::Bleu, Metric::Chrf] {
            let _ = writeln!(out, "{model}\t{}\t{}", metric.name(), self.tier_row(metric).replace(' ', "\t"));
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "Pair\tTier\tBLEU\tchrF\tSegments");
        for (pair, (tier, s)) in &self.per_pair {
            let _ = writeln!(out, "{pair}\t{}\t{:.4}\t{:.4}\t{}", tier.label(), s.bleu, s.chrf, s.segments);
        }
        out
    }

    /// Machine-readable `kind key bleu chrf` rows.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("kind\tkey\tbleu\tchrf\tcount\n");
        for (pair, (_, s)) in &self.per_pair {
            let _ = writeln!(out, "pair\t{pair}\t{:.6}\t{:.6}\t{}", s.bleu, s.chrf, s.segments);
        }
        for (tier, m) in &self.tiers {
            let _ = writeln!(out, "tier\t{tier}\t{:.6}\t{:.6}\t{}", m.bleu, m.chrf, m.pairs);
        }
        if let Some(m) = &self.overall {
            let _ = writeln!(out, "overall\tall\t{:.6}\t{:.6}\t{}", m.bleu, m.chrf, m.pairs);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Bleu,
    Chrf,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Bleu => "BLEU",
            Metric::Chrf => "chrF",
        }
    }

    fn of_mean(self, m: &TierMean) -> f64 {
        match self {
            Metric::Bleu => m.bleu,
            Metric::Chrf => m.chrf,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> LanguagePair {
        s.parse().unwrap()
    }

    fn one(pair: &str, h: &str, r: &str) -> Vec<EvalPair> {
        vec![EvalPair::new(p(pair), h, r)]
    }

    #[test]
    fn bleu_cases() {
        let tok = TokenizerSpec::segmenter();
        let b = bleu(&one("zh-en", "a b c d", "a b c e"), &tok).unwrap();
        assert!((b - 100.0 * 0.125f64.powf(0.25)).abs() < 1e-9);
        assert!((b - 59.46).abs() < 0.01);
        assert_eq!(bleu(&one("en-zh", "今天天气好", "今天天气好"), &tok).unwrap(), 100.0);
        // spaces inside Chinese text do not count as units
        assert_eq!(bleu(&one("en-zh", "今天 天气好", "今天天气好"), &tok).unwrap(), 100.0);
        let disjoint = bleu(&one("zh-en", "x y", "a b"), &tok).unwrap();
        // unigram 1/3, bigram 1/2, orders 3 and 4 have no n-grams: (0+1)/(0+1)
        assert!((disjoint - 100.0 * (1.0f64 / 6.0).powf(0.25)).abs() < 1e-9);
        assert!(bleu(&[], &tok).is_err());
    }

    #[test]
    fn brevity_penalty() {
        let tok = TokenizerSpec::segmenter();
        let b = bleu(&one("zh-en", "a b c d", "a b c d e f g h"), &tok).unwrap();
        assert!((b - 100.0 * (1.0f64 - 2.0).exp()).abs() < 1e-9);
    }

    #[test]
    fn chrf_cases() {
        assert_eq!(chrf(&one("zh-en", "hello world", "hello world")).unwrap(), 100.0);
        assert_eq!(chrf(&one("zh-en", "abc", "xyz")).unwrap(), 0.0);
        // orders 1..4 effective: P = R = (3/4 + 2/3 + 1/2 + 0) / 4
        let c = chrf_sentence("abcd", "abce");
        let pr = (0.75 + 2.0 / 3.0 + 0.5) / 4.0;
        assert!((c - 100.0 * pr).abs() < 1e-12);
        assert_eq!(chrf_sentence("a b", "ab"), 100.0);
    }

    #[test]
    fn report() {
        let r = Registry::builtin();
        let s = |b: f64| PairScore { bleu: b, chrf: b / 2.0, segments: 1 };
        let scores: BTreeMap<_, _> = [(p("fr-zh"), s(20.0)), (p("de-zh"), s(30.0))].into_iter().collect();
        let rep = build_report(&scores, r).unwrap();
        assert_eq!(rep.tiers[&ResourceTier::High].bleu, 25.0);
        assert_eq!(rep.tier_row(Metric::Bleu), "25.0000 - - -");

        let single: BTreeMap<_, _> = [(p("bo-zh"), s(5.0))].into_iter().collect();
        let rep = build_report(&single, r).unwrap();
        assert_eq!(rep.tier_row(Metric::Bleu), "- - - 5.0000");
        assert!(rep.render("toy").contains("bo-zh\tVery Low Resource"));
        assert!(build_report(&[(p("xx-zh"), s(1.0))].into_iter().collect(), r).is_err());
    }

    #[test]
    fn eval_tsv() {
        let data = "en\tzh\t你好\t你好\n\nfr\tzh\ta\tb\n";
        let c = read_eval_tsv(data.as_bytes(), "t").unwrap();
        assert_eq!(c.len(), 2);
        assert!(read_eval_tsv("en\tzh\tx\n".as_bytes(), "t").is_err());
        assert!(read_eval_tsv("en\tzh\tx\t \n".as_bytes(), "t").is_err());
    }

    proptest! {
        #[test]
        fn self_scores_are_perfect(h in "[a-e]{1,8}( [a-e]{1,8}){0,6}") {
            let tok = TokenizerSpec::segmenter();
            let c = one("zh-en", &h, &h);
            prop_assert_eq!(bleu(&c, &tok).unwrap(), 100.0);
            prop_assert_eq!(chrf(&c).unwrap(), 100.0);
        }

        #[test]
        fn permutation_invariant(pairs in proptest::collection::vec(("[a-c ]{1,10}", "[a-c]{1,10}"), 1..8), rot in 0usize..8) {
            let tok = TokenizerSpec::segmenter();
            let c: Vec<_> = pairs.iter().map(|(h, r)| EvalPair::new(p("zh-en"), h.clone(), r.clone())).collect();
            let mut d = c.clone();
            d.rotate_left(rot % c.len());
            prop_assert_eq!(bleu(&c, &tok).unwrap(), bleu(&d, &tok).unwrap());
            prop_assert!((chrf(&c).unwrap() - chrf(&d).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn exact_match_append_is_monotone(pairs in proptest::collection::vec(("[a-c]( [a-c]){0,5}", "[a-c]( [a-c]){0,5}"), 1..6), extra in "[a-c]( [a-c]){3,6}") {
            let tok = TokenizerSpec::segmenter();
            let c: Vec<_> = pairs.iter().map(|(h, r)| EvalPair::new(p("zh-en"), h.clone(), r.clone())).collect();
            let stats = bleu_stats(&c, &tok);
            prop_assume!(stats.hyp_len >= stats.ref_len);
            let mut d = c.clone();
            d.push(EvalPair::new(p("zh-en"), extra.clone(), extra));
            prop_assert!(bleu(&d, &tok).unwrap() >= bleu(&c, &tok).unwrap() - 1e-9);
        }
    }
}
