//! Turning text into training sequences for the byte-level model.
//!
//! Monolingual: `<s> text </s>`, every next-token prediction counts.
//! Instruction: `<s> prompt \n target </s>`; with prompt masking only the
//! predictions of target bytes and `</s>` count.

use mtkit_core::registry::lang;
use mtkit_core::TokenizerSpec;

use crate::error::{ModelError, Result};

/// Byte placed between prompt and target.
pub const PROMPT_SEPARATOR: &str = "\n";

#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub ids: Vec<u32>,
    /// `labels[t]` says whether predicting `ids[t + 1]` contributes to the
    /// loss; one shorter than `ids`.
    pub labels: Vec<bool>,
}

impl Encoded {
    pub fn label_count(&self) -> usize {
        self.labels.iter().filter(|&&b| b).count()
    }
}

fn bytes(tok: &TokenizerSpec, text: &str) -> Vec<u32> {
    // byte mode ignores the language
    tok.tokenize(text, lang("zh")).tokens
}

fn check_byte_mode(tok: &TokenizerSpec) -> Result<()> {
    if tok.mode(lang("zh")) != mtkit_core::TokenizerMode::Byte {
        return Err(ModelError::Config("training needs a byte-level tokenizer".into()));
    }
    Ok(())
}

/// Monolingual sentence, cut to the first `context` tokens.
pub fn encode_mono(tok: &TokenizerSpec, text: &str, context: usize) -> Result<Encoded> {
    check_byte_mode(tok)?;
    let r = tok.reserved();
    let mut ids = vec![r.bos];
    ids.extend(bytes(tok, text));
    ids.push(r.eos);
    ids.truncate(context);
    let labels = vec![true; ids.len().saturating_sub(1)];
    Ok(Encoded { ids, labels })
}

/// Decoder input for an instruction prompt: `<s> prompt \n`.
pub fn encode_prompt(tok: &TokenizerSpec, prompt: &str) -> Result<Vec<u32>> {
    check_byte_mode(tok)?;
    let mut ids = vec![tok.reserved().bos];
    ids.extend(bytes(tok, prompt));
    ids.extend(bytes(tok, PROMPT_SEPARATOR));
    Ok(ids)
}

/// Prompt plus target. Sequences longer than `context` lose tokens from the
/// left so the target survives.
pub fn encode_example(
    tok: &TokenizerSpec,
    prompt: &str,
    target: &str,
    context: usize,
    mask_prompt: bool,
) -> Result<Encoded> {
    let mut ids = encode_prompt(tok, prompt)?;
    let target_start = ids.len();
    ids.extend(bytes(tok, target));
    ids.push(tok.reserved().eos);
    let mut labels: Vec<bool> = (1..ids.len()).map(|i| !mask_prompt || i >= target_start).collect();
    if ids.len() > context {
        let cut = ids.len() - context;
        ids.drain(..cut);
        labels.drain(..cut);
    }
    Ok(Encoded { ids, labels })
}

/// Decoded bytes up to (not including) the first `</s>`.
pub fn decode_until_eos(tok: &TokenizerSpec, ids: &[u32]) -> Result<String> {
    let eos = tok.reserved().eos;
    let end = ids.iter().position(|&i| i == eos).unwrap_or(ids.len());
    Ok(tok.detokenize(&mtkit_core::TokenSequence {
        tokens: ids[..end].to_vec(),
        lang: lang("zh"),
    })?)
}
