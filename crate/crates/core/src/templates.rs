//! Instruction templates that turn a translation pair into a prompt and a
//! target.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::record::ParallelRecord;
use crate::registry::{LanguageCode, Registry};

/// The template set shipped with the toolkit.
pub const BUILTIN_TEMPLATES: &str = include_str!("../data/templates.txt");

const PLACEHOLDERS: [&str; 3] = ["src_lang", "tgt_lang", "src_text"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InstructionTemplate {
    pub id: usize,
    pub pattern: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InstructionExample {
    pub prompt: String,
    pub target: String,
    pub src_lang: LanguageCode,
    pub tgt_lang: LanguageCode,
    pub template_id: usize,
}

enum Piece<'a> {
    Literal(&'a str),
    Slot(&'a str),
}

/// Splits a pattern into literals and `{name}` slots. A `{` without a
/// matching `}` is an error; text between braces must be a placeholder name.
fn pieces(pattern: &str) -> std::result::Result<Vec<Piece<'_>>, String> {
    let mut out = Vec::new();
    let mut rest = pattern;
    while let Some(open) = rest.find('{') {
        if open > 0 {
            out.push(Piece::Literal(&rest[..open]));
        }
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| format!("unclosed brace in {pattern:?}"))?;
        let name = &after[..close];
        if !PLACEHOLDERS.contains(&name) {
            return Err(format!("unknown placeholder {{{name}}}"));
        }
        out.push(Piece::Slot(name));
        rest = &after[close + 1..];
    }
    if !rest.is_empty() {
        out.push(Piece::Literal(rest));
    }
    Ok(out)
}

impl InstructionTemplate {
    /// Validates the placeholders: `{src_text}` exactly once, no unknown names.
    pub fn new(id: usize, pattern: impl Into<String>) -> std::result::Result<Self, String> {
        let pattern = pattern.into();
        let n = pieces(&pattern)?
            .iter()
            .filter(|p| matches!(p, Piece::Slot("src_text")))
            .count();
        if n != 1 {
            return Err(format!("{{src_text}} must appear exactly once, found {n}"));
        }
        Ok(Self { id, pattern })
    }

    /// Single-pass substitution: text inserted for a slot is never rescanned.
    pub fn fill(&self, src_name: &str, tgt_name: &str, src_text: &str) -> String {
        let mut out = String::with_capacity(self.pattern.len() + src_text.len() + 16);
        for piece in pieces(&self.pattern).expect("validated at construction") {
            out.push_str(match piece {
                Piece::Literal(s) => s,
                Piece::Slot("src_lang") => src_name,
                Piece::Slot("tgt_lang") => tgt_name,
                Piece::Slot(_) => src_text,
            });
        }
        out
    }
}

/// One template per line; blank lines and `#` comments are skipped. Ids
/// count templates from 0 in file order.
pub fn parse_templates(text: &str) -> Result<Vec<InstructionTemplate>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let t = InstructionTemplate::new(out.len(), line).map_err(|message| Error::Template {
            line: idx + 1,
            message,
        })?;
        out.push(t);
    }
    Ok(out)
}

pub fn load_templates(path: &Path) -> Result<Vec<InstructionTemplate>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_templates(&text)
}

pub fn builtin_templates() -> Vec<InstructionTemplate> {
    parse_templates(BUILTIN_TEMPLATES).expect("shipped templates are valid")
}

/// Fills a template with the registry's English names for the pair.
pub fn render(template: &InstructionTemplate, record: &ParallelRecord, registry: &Registry) -> Result<InstructionExample> {
    let prompt = template.fill(
        registry.name(record.src_lang)?,
        registry.name(record.tgt_lang)?,
        &record.src_text,
    );
    Ok(InstructionExample {
        prompt,
        target: record.tgt_text.clone(),
        src_lang: record.src_lang,
        tgt_lang: record.tgt_lang,
        template_id: template.id,
    })
}

pub fn pick_template<'a, R: Rng + ?Sized>(rng: &mut R, templates: &'a [InstructionTemplate]) -> Result<&'a InstructionTemplate> {
    if templates.is_empty() {
        return Err(Error::NoTemplates);
    }
    Ok(&templates[rng.random_range(0..templates.len())])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::lang;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn record(src: &str) -> ParallelRecord {
        ParallelRecord::new(lang("en"), lang("zh"), src, "你好", "t")
    }

    #[test]
    fn shipped_set() {
        let t = builtin_templates();
        assert_eq!(t.len(), 39);
        assert_eq!(t[0].pattern, "How do you say {src_text} in {tgt_lang}?");
        assert!(t.iter().enumerate().all(|(i, t)| t.id == i));
    }

    #[test]
    fn loader_errors() {
        match parse_templates("# c\nok {src_text}\nbad {src_txt}\n") {
            Err(Error::Template { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(parse_templates("no text slot").is_err());
        assert!(parse_templates("{src_text} {src_text}").is_err());
        assert!(parse_templates("{src_text} {").is_err());
        assert!(parse_templates("").unwrap().is_empty());
    }

    #[test]
    fn rendering() {
        let r = Registry::builtin();
        let t = InstructionTemplate::new(0, "Translate from {src_lang} to {tgt_lang}: {src_text}").unwrap();
        let ex = render(&t, &record("Hello"), r).unwrap();
        assert_eq!(ex.prompt, "Translate from English to Chinese: Hello");
        assert_eq!(ex.target, "你好");

        let t = InstructionTemplate::new(1, "{src_text} in {tgt_lang}?").unwrap();
        assert_eq!(render(&t, &record("x"), r).unwrap().prompt, "x in Chinese?");

        let t = InstructionTemplate::new(2, "{src_lang}: {src_text}").unwrap();
        assert_eq!(render(&t, &record("{tgt_lang} {x}"), r).unwrap().prompt, "English: {tgt_lang} {x}");
    }

    #[test]
    fn picking() {
        let one = vec![InstructionTemplate::new(0, "{src_text}").unwrap()];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(pick_template(&mut rng, &one).unwrap().id, 0);
        assert!(matches!(pick_template(&mut rng, &[]), Err(Error::NoTemplates)));

        let all: Vec<_> = (0..40).map(|i| InstructionTemplate::new(i, "{src_text}").unwrap()).collect();
        let draws = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..1000).map(|_| pick_template(&mut rng, &all).unwrap().id).collect::<Vec<_>>()
        };
        let a = draws(7);
        assert_eq!(a, draws(7));
        let mut counts = [0usize; 40];
        a.iter().for_each(|&i| counts[i] += 1);
        assert!(counts.iter().all(|&c| (c as f64 / 1000.0 - 0.025).abs() <= 0.05));
    }

    proptest! {
        #[test]
        fn prompt_embeds_source(src in "\\PC{0,40}", a in "\\PC{0,20}", b in "\\PC{0,20}") {
            let r = Registry::builtin();
            for t in builtin_templates() {
                let p = render(&t, &record(&src), r).unwrap().prompt;
                prop_assert!(p.contains(&src));
                if a != b {
                    prop_assert_ne!(
                        render(&t, &record(&a), r).unwrap().prompt,
                        render(&t, &record(&b), r).unwrap().prompt
                    );
                }
            }
        }
    }
}
