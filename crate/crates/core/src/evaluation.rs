//! Attachment and tagging scores.
//!
//! Every token counts, punctuation included, and relations are compared on
//! the full label. Percentages are rounded half-up to two decimals.

use serde::{Deserialize, Serialize};

use crate::conllu::{Sentence, Treebank, EMPTY};
use crate::error::{Error, Result};

/// `100·num/den`, rounded half-up to two decimals. Zero when `den` is zero.
pub fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        return 0.0;
    }
    let (num, den) = (num as u128, den as u128);
    let hundredths = (num * 20_000 + den) / (2 * den);
    hundredths as f64 / 100.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceScore {
    pub tokens: usize,
    pub heads: usize,
    pub labeled: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub uas: f64,
    pub las: f64,
    /// Present when every token on both sides carries a UPOS tag.
    pub upos: Option<f64>,
    pub tokens: usize,
    pub correct_heads: usize,
    pub correct_labeled: usize,
    pub correct_upos: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_sentence: Option<Vec<SentenceScore>>,
}

impl EvalReport {
    /// The compact public form: `{"uas", "las", "upos", "tokens"}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "uas": self.uas,
            "las": self.las,
            "upos": self.upos,
            "tokens": self.tokens,
        })
    }
}

fn tagged(s: &Sentence) -> bool {
    s.tokens.iter().all(|t| !t.upos.is_empty() && t.upos != EMPTY)
}

pub fn evaluate(system: &Treebank, gold: &Treebank) -> Result<EvalReport> {
    evaluate_sentences(&system.sentences, &gold.sentences, false)
}

/// Like [`evaluate`], optionally with per-sentence counts.
pub fn evaluate_sentences(system: &[Sentence], gold: &[Sentence], per_sentence: bool) -> Result<EvalReport> {
    for (i, (s, g)) in system.iter().zip(gold).enumerate() {
        if s.len() != g.len() {
            return Err(Error::Alignment {
                sentence: i + 1,
                message: format!("{} system tokens vs {} gold tokens", s.len(), g.len()),
            });
        }
    }
    if system.len() != gold.len() {
        return Err(Error::Alignment {
            sentence: system.len().min(gold.len()) + 1,
            message: format!("{} system sentences vs {} gold sentences", system.len(), gold.len()),
        });
    }

    let mut tokens = 0;
    let mut heads = 0;
    let mut labeled = 0;
    let mut upos = 0;
    let mut has_upos = true;
    let mut breakdown = Vec::new();
    for (s, g) in system.iter().zip(gold) {
        has_upos &= tagged(s) && tagged(g);
        let mut score = SentenceScore {
            tokens: s.len(),
            heads: 0,
            labeled: 0,
        };
        for (a, b) in s.tokens.iter().zip(&g.tokens) {
            if a.head == b.head {
                score.heads += 1;
                if a.deprel == b.deprel {
                    score.labeled += 1;
                }
            }
            if a.upos == b.upos {
                upos += 1;
            }
        }
        tokens += score.tokens;
        heads += score.heads;
        labeled += score.labeled;
        if per_sentence {
            breakdown.push(score);
        }
    }
    Ok(EvalReport {
        uas: percent(heads, tokens),
        las: percent(labeled, tokens),
        upos: has_upos.then(|| percent(upos, tokens)),
        tokens,
        correct_heads: heads,
        correct_labeled: labeled,
        correct_upos: has_upos.then_some(upos),
        per_sentence: per_sentence.then_some(breakdown),
    })
}
