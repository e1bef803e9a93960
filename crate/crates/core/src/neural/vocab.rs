use std::collections::HashMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::conllu::{Sentence, Treebank};
use crate::error::{Error, Result};
use crate::treebank_ops::Rng;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const ROOT: usize = 2;

const SPECIALS: [&str; 3] = ["<pad>", "<unk>", "<root>"];

/// A dense string ↔ index map.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Index {
    items: Vec<String>,
    map: HashMap<String, usize>,
}

impl From<Vec<String>> for Index {
    fn from(items: Vec<String>) -> Self {
        let map = items
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Index { items, map }
    }
}

impl From<Index> for Vec<String> {
    fn from(index: Index) -> Self {
        index.items
    }
}

impl Index {
    fn with_specials() -> Self {
        Index::from(SPECIALS.iter().map(|s| s.to_string()).collect::<Vec<_>>())
    }

    pub fn insert(&mut self, item: &str) -> usize {
        if let Some(&i) = self.map.get(item) {
            return i;
        }
        self.items.push(item.to_owned());
        self.map.insert(item.to_owned(), self.items.len() - 1);
        self.items.len() - 1
    }

    pub fn get(&self, item: &str) -> Option<usize> {
        self.map.get(item).copied()
    }

    pub fn item(&self, i: usize) -> &str {
        &self.items[i]
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }
}

/// Vocabularies for model inputs and outputs.
///
/// Word, character and input-UPOS maps start with `<pad>`, `<unk>` and
/// `<root>`; the output label maps (UPOS tags, relations) hold only labels
/// seen in training.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub words: Index,
    pub word_counts: Vec<usize>,
    pub chars: Index,
    pub upos_inputs: Index,
    pub upos_labels: Index,
    pub deprels: Index,
    pub min_freq: usize,
}

/// Where UPOS input features come from.
#[derive(Clone, Copy, Debug)]
pub enum UposSource<'a> {
    /// The sentence's UPOS column (gold, or rewritten by a tagger).
    Column,
    /// Tags supplied alongside the sentence.
    Tags(&'a [String]),
    Absent,
}

/// A sentence mapped to vocabulary indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexedSentence {
    pub words: Vec<usize>,
    pub chars: Vec<Vec<usize>>,
    pub upos: Option<Vec<usize>>,
    /// Gold UPOS label indices, for tagging objectives (unknown tags → None).
    pub upos_targets: Vec<Option<usize>>,
    pub heads: Vec<usize>,
    pub deprels: Vec<Option<usize>>,
    /// Whether position 0 is the artificial root.
    pub has_root: bool,
}

impl IndexedSentence {
    /// Number of real words.
    pub fn len(&self) -> usize {
        self.words.len() - usize::from(self.has_root)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Vocab {
    pub fn build(train: &Treebank, min_freq: usize) -> Result<Self> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut order: Vec<&str> = Vec::new();
        let mut chars = Index::with_specials();
        let mut upos_inputs = Index::with_specials();
        let mut upos_labels = Index::default();
        let mut deprels = Index::default();
        for s in &train.sentences {
            for t in &s.tokens {
                let c = counts.entry(t.form.as_str()).or_insert_with(|| {
                    order.push(t.form.as_str());
                    0
                });
                *c += 1;
                for ch in t.form.chars() {
                    chars.insert(ch.encode_utf8(&mut [0; 4]));
                }
                upos_inputs.insert(&t.upos);
                upos_labels.insert(&t.upos);
                deprels.insert(&t.deprel);
            }
        }
        if upos_labels.is_empty() {
            return Err(Error::invalid("training data contains no tokens"));
        }
        let mut words = Index::with_specials();
        let mut word_counts = vec![0; SPECIALS.len()];
        for w in order {
            let c = counts[w];
            if c >= min_freq.max(1) {
                words.insert(w);
                word_counts.push(c);
            }
        }
        Ok(Vocab {
            words,
            word_counts,
            chars,
            upos_inputs,
            upos_labels,
            deprels,
            min_freq,
        })
    }

    pub fn word_index(&self, form: &str) -> usize {
        self.words.get(form).unwrap_or(UNK)
    }

    pub fn char_indices(&self, form: &str) -> Vec<usize> {
        let v: Vec<usize> = form
            .chars()
            .map(|c| self.chars.get(c.encode_utf8(&mut [0; 4])).unwrap_or(UNK))
            .collect();
        if v.is_empty() {
            vec![UNK]
        } else {
            v
        }
    }

    pub fn index(
        &self,
        s: &Sentence,
        with_root: bool,
        upos: UposSource<'_>,
    ) -> Result<IndexedSentence> {
        let extra = usize::from(with_root);
        let n = s.len() + extra;
        let mut words = Vec::with_capacity(n);
        let mut chars = Vec::with_capacity(n);
        if with_root {
            words.push(ROOT);
            chars.push(vec![ROOT]);
        }
        for t in &s.tokens {
            words.push(self.word_index(&t.form));
            chars.push(self.char_indices(&t.form));
        }
        let upos = match upos {
            UposSource::Absent => None,
            UposSource::Column => Some(self.upos_input_indices(s.tokens.iter().map(|t| t.upos.as_str()), with_root)),
            UposSource::Tags(tags) => {
                if tags.len() != s.len() {
                    return Err(Error::invalid(format!(
                        "{} tags for a sentence of {} words",
                        tags.len(),
                        s.len()
                    )));
                }
                Some(self.upos_input_indices(tags.iter().map(String::as_str), with_root))
            }
        };
        Ok(IndexedSentence {
            words,
            chars,
            upos,
            upos_targets: s.tokens.iter().map(|t| self.upos_labels.get(&t.upos)).collect(),
            heads: s.tokens.iter().map(|t| t.head).collect(),
            deprels: s.tokens.iter().map(|t| self.deprels.get(&t.deprel)).collect(),
            has_root: with_root,
        })
    }

    fn upos_input_indices<'a>(&self, tags: impl Iterator<Item = &'a str>, with_root: bool) -> Vec<usize> {
        let mut out = Vec::new();
        if with_root {
            out.push(ROOT);
        }
        out.extend(tags.map(|t| self.upos_inputs.get(t).unwrap_or(UNK)));
        out
    }

    /// Replace singleton words by `<unk>` with probability `p`.
    pub fn word_dropout(&self, words: &[usize], p: f64, rng: &mut Rng) -> Vec<usize> {
        if p <= 0.0 {
            return words.to_vec();
        }
        words
            .iter()
            .map(|&w| {
                if w >= SPECIALS.len() && self.word_counts[w] == 1 && rng.random::<f64>() < p {
                    UNK
                } else {
                    w
                }
            })
            .collect()
    }
}
