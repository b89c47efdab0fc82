//! Deterministic per-language tokenization.
//!
//! Three modes cover every consumer: whitespace splitting for space-delimited
//! scripts, one token per scalar value for scripts written without spaces,
//! and UTF-8 bytes for the closed vocabulary of the toy model.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::LanguageCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerMode {
    Whitespace,
    Character,
    Byte,
}

impl TokenizerMode {
    fn name(self) -> &'static str {
        match self {
            TokenizerMode::Whitespace => "whitespace",
            TokenizerMode::Character => "character",
            TokenizerMode::Byte => "byte",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "whitespace" => Ok(TokenizerMode::Whitespace),
            "character" => Ok(TokenizerMode::Character),
            "byte" => Ok(TokenizerMode::Byte),
            _ => Err(Error::TokenizerSpec(format!("unknown mode {s:?}"))),
        }
    }
}

/// Languages written without word-separating spaces.
pub const CHARACTER_MODE_LANGUAGES: &[&str] = &["zh", "ja", "th", "lo", "my", "km", "bo"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReservedIds {
    pub pad: u32,
    pub unk: u32,
    pub bos: u32,
    pub eos: u32,
}

impl Default for ReservedIds {
    fn default() -> Self {
        Self {
            pad: 0,
            unk: 1,
            bos: 2,
            eos: 3,
        }
    }
}

impl ReservedIds {
    fn all(&self) -> [u32; 4] {
        [self.pad, self.unk, self.bos, self.eos]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<u32>,
    pub lang: LanguageCode,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct TokenizerSpec {
    modes: BTreeMap<LanguageCode, TokenizerMode>,
    default_mode: TokenizerMode,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    byte_ids: Option<Box<[u32; 256]>>,
    reserved: ReservedIds,
    unk_marker: String,
}

fn byte_token(b: u8) -> String {
    format!("<0x{b:02X}>")
}

const RESERVED_SURFACES: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

impl TokenizerSpec {
    pub fn new(
        modes: BTreeMap<LanguageCode, TokenizerMode>,
        default_mode: TokenizerMode,
        vocab: Vec<String>,
        reserved: ReservedIds,
        unk_marker: impl Into<String>,
    ) -> Result<Self> {
        let ids = reserved.all();
        for (i, a) in ids.iter().enumerate() {
            if *a as usize >= vocab.len() {
                return Err(Error::TokenizerSpec(format!(
                    "reserved id {a} outside vocabulary of {}",
                    vocab.len()
                )));
            }
            if ids[i + 1..].contains(a) {
                return Err(Error::TokenizerSpec(format!("reserved id {a} used twice")));
            }
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (id, surface) in vocab.iter().enumerate() {
            if index.insert(surface.clone(), id as u32).is_some() {
                return Err(Error::TokenizerSpec(format!("duplicate vocabulary entry {surface:?}")));
            }
        }
        let uses_bytes =
            default_mode == TokenizerMode::Byte || modes.values().any(|m| *m == TokenizerMode::Byte);
        let byte_ids = if uses_bytes {
            let mut table = Box::new([0u32; 256]);
            for b in 0..=255u8 {
                table[b as usize] = *index.get(&byte_token(b)).ok_or_else(|| {
                    Error::TokenizerSpec(format!("byte mode needs vocabulary entry {}", byte_token(b)))
                })?;
            }
            Some(table)
        } else {
            None
        };
        Ok(Self {
            modes,
            default_mode,
            vocab,
            index,
            byte_ids,
            reserved,
            unk_marker: unk_marker.into(),
        })
    }

    /// Byte-level tokenizer of the toy model: 4 reserved ids then 256 bytes.
    pub fn byte_level() -> Self {
        let mut vocab: Vec<String> = RESERVED_SURFACES.iter().map(|s| s.to_string()).collect();
        vocab.extend((0..=255u8).map(byte_token));
        Self::new(
            BTreeMap::new(),
            TokenizerMode::Byte,
            vocab,
            ReservedIds::default(),
            "<unk>",
        )
        .expect("byte-level spec is valid")
    }

    /// Segmentation-only spec used by length filters and metrics: character
    /// mode for unspaced scripts, whitespace elsewhere, no vocabulary.
    pub fn segmenter() -> Self {
        let modes = CHARACTER_MODE_LANGUAGES
            .iter()
            .map(|c| (LanguageCode::new(c).unwrap(), TokenizerMode::Character))
            .collect();
        Self::new(
            modes,
            TokenizerMode::Whitespace,
            RESERVED_SURFACES.iter().map(|s| s.to_string()).collect(),
            ReservedIds::default(),
            "<unk>",
        )
        .expect("segmenter spec is valid")
    }

    /// Extends the vocabulary with the given surfaces (skipping known ones).
    pub fn with_tokens<I, S>(mut self, surfaces: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        for s in surfaces {
            let s = s.into();
            if !self.index.contains_key(&s) {
                self.vocab.push(s);
                let id = self.vocab.len() as u32 - 1;
                self.index.insert(self.vocab[id as usize].clone(), id);
            }
        }
        Self::new(
            self.modes,
            self.default_mode,
            self.vocab,
            self.reserved,
            self.unk_marker,
        )
    }

    pub fn mode(&self, lang: LanguageCode) -> TokenizerMode {
        self.modes.get(&lang).copied().unwrap_or(self.default_mode)
    }

    pub fn set_mode(&mut self, lang: LanguageCode, mode: TokenizerMode) -> Result<()> {
        if mode == TokenizerMode::Byte && self.byte_ids.is_none() {
            return Err(Error::TokenizerSpec("vocabulary has no byte tokens".into()));
        }
        self.modes.insert(lang, mode);
        Ok(())
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn reserved(&self) -> ReservedIds {
        self.reserved
    }

    pub fn surface(&self, id: u32) -> Option<&str> {
        self.vocab.get(id as usize).map(String::as_str)
    }

    pub fn id_of(&self, surface: &str) -> Option<u32> {
        self.index.get(surface).copied()
    }

    pub fn tokenize(&self, text: &str, lang: LanguageCode) -> TokenSequence {
        let unk = self.reserved.unk;
        let tokens = match self.mode(lang) {
            TokenizerMode::Whitespace => text
                .split_whitespace()
                .map(|w| self.index.get(w).copied().unwrap_or(unk))
                .collect(),
            TokenizerMode::Character => {
                let mut buf = [0u8; 4];
                text.chars()
                    .map(|c| {
                        let s: &str = c.encode_utf8(&mut buf);
                        self.index.get(s).copied().unwrap_or(unk)
                    })
                    .collect()
            }
            TokenizerMode::Byte => {
                let table = self.byte_ids.as_ref().expect("byte table present in byte mode");
                text.bytes().map(|b| table[b as usize]).collect()
            }
        };
        TokenSequence { tokens, lang }
    }

    pub fn token_count(&self, text: &str, lang: LanguageCode) -> usize {
        match self.mode(lang) {
            TokenizerMode::Whitespace => text.split_whitespace().count(),
            TokenizerMode::Character => text.chars().count(),
            TokenizerMode::Byte => text.len(),
        }
    }

    /// Surface units as slices of the input: words in whitespace mode,
    /// scalar values in character and byte mode.
    pub fn segments<'a>(&self, text: &'a str, lang: LanguageCode) -> Vec<&'a str> {
        match self.mode(lang) {
            TokenizerMode::Whitespace => text.split_whitespace().collect(),
            TokenizerMode::Character | TokenizerMode::Byte => text
                .char_indices()
                .map(|(i, c)| &text[i..i + c.len_utf8()])
                .collect(),
        }
    }

    pub fn detokenize(&self, seq: &TokenSequence) -> Result<String> {
        let vocab_size = self.vocab.len();
        for &id in &seq.tokens {
            if id as usize >= vocab_size {
                return Err(Error::InvalidToken { id, vocab_size });
            }
        }
        let r = self.reserved;
        let silent = |id: u32| id == r.pad || id == r.bos || id == r.eos;
        let surface = |id: u32| -> &str {
            if id == r.unk {
                &self.unk_marker
            } else {
                &self.vocab[id as usize]
            }
        };
        Ok(match self.mode(seq.lang) {
            TokenizerMode::Whitespace => seq
                .tokens
                .iter()
                .filter(|&&id| !silent(id))
                .map(|&id| surface(id))
                .collect::<Vec<_>>()
                .join(" "),
            TokenizerMode::Character => seq
                .tokens
                .iter()
                .filter(|&&id| !silent(id))
                .map(|&id| surface(id))
                .collect(),
            TokenizerMode::Byte => {
                let mut bytes = Vec::with_capacity(seq.tokens.len());
                let table = self.byte_ids.as_ref().expect("byte table present in byte mode");
                for &id in &seq.tokens {
                    if silent(id) {
                        continue;
                    }
                    match table.iter().position(|&t| t == id) {
                        Some(b) => bytes.push(b as u8),
                        None => bytes.extend_from_slice(surface(id).as_bytes()),
                    }
                }
                String::from_utf8_lossy(&bytes).into_owned()
            }
        })
    }

    /// Line-oriented serialization: header records, then one vocabulary
    /// entry per line with `\\`, `\t`, `\n`, `\r` escaped.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# mtkit tokenizer v1\n");
        let r = self.reserved;
        for (name, id) in [("pad", r.pad), ("unk", r.unk), ("bos", r.bos), ("eos", r.eos)] {
            let _ = writeln!(out, "reserved\t{name}\t{id}");
        }
        let _ = writeln!(out, "unk_marker\t{}", escape(&self.unk_marker));
        let _ = writeln!(out, "mode\t*\t{}", self.default_mode.name());
        for (lang, mode) in &self.modes {
            let _ = writeln!(out, "mode\t{lang}\t{}", mode.name());
        }
        let _ = writeln!(out, "vocab\t{}", self.vocab.len());
        for v in &self.vocab {
            out.push_str(&escape(v));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut reserved = ReservedIds::default();
        let mut unk_marker = "<unk>".to_string();
        let mut default_mode = TokenizerMode::Whitespace;
        let mut modes = BTreeMap::new();
        let mut lines = text.lines();
        let bad = |msg: String| Error::TokenizerSpec(msg);
        let vocab_len = loop {
            let line = lines.next().ok_or_else(|| bad("missing vocab header".into()))?;
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                ["reserved", name, id] => {
                    let id: u32 = id.parse().map_err(|_| bad(format!("bad reserved id {id:?}")))?;
                    match *name {
                        "pad" => reserved.pad = id,
                        "unk" => reserved.unk = id,
                        "bos" => reserved.bos = id,
                        "eos" => reserved.eos = id,
                        _ => return Err(bad(format!("unknown reserved name {name:?}"))),
                    }
                }
                ["unk_marker", m] => unk_marker = unescape(m),
                ["mode", "*", m] => default_mode = TokenizerMode::parse(m)?,
                ["mode", lang, m] => {
                    modes.insert(LanguageCode::new(lang)?, TokenizerMode::parse(m)?);
                }
                ["vocab", n] => break n.parse::<usize>().map_err(|_| bad(format!("bad vocab size {n:?}")))?,
                _ => return Err(bad(format!("unrecognized header line {line:?}"))),
            }
        };
        let vocab: Vec<String> = lines.by_ref().take(vocab_len).map(unescape).collect();
        if vocab.len() != vocab_len {
            return Err(bad(format!("expected {vocab_len} vocabulary lines, found {}", vocab.len())));
        }
        Self::new(modes, default_mode, vocab, reserved, unk_marker)
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            _ => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}
