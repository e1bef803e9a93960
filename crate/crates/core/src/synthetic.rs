//! Synthetic treebanks from a small seeded toy grammar.
//!
//! Sentences follow `subject VERB [object] [oblique] [adverb] .` where noun
//! phrases take an optional determiner, adjectives and a prepositional
//! modifier. Word forms come from a random lexicon; a share of verb forms
//! double as nouns so that tagging needs context. All trees are projective.

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::conllu::{Features, Sentence, Token, Treebank};
use crate::treebank_ops::{seeded_rng, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Distinct stems per open word class.
    pub stems_per_class: usize,
    /// Fraction of verb stems that are also noun stems.
    pub ambiguity: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            stems_per_class: 30,
            ambiguity: 0.3,
        }
    }
}

/// A seeded toy language.
#[derive(Clone, Debug)]
pub struct Grammar {
    nouns: Vec<String>,
    propns: Vec<String>,
    verbs: Vec<String>,
    adjs: Vec<String>,
    advs: Vec<String>,
    dets: Vec<(String, &'static str)>,
    adps: Vec<String>,
}

const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const NUCLEI: [&str; 5] = ["a", "e", "i", "o", "u"];
const CODAS: [&str; 4] = ["", "", "n", "r"];

fn word(rng: &mut Rng, syllables: usize) -> String {
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS.choose(rng).unwrap());
        w.push_str(NUCLEI.choose(rng).unwrap());
        w.push_str(CODAS.choose(rng).unwrap());
    }
    w
}

fn lexicon(rng: &mut Rng, n: usize, syllables: std::ops::RangeInclusive<usize>, taken: &mut Vec<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let k = rng.random_range(syllables.clone());
        let w = word(rng, k);
        if !taken.contains(&w) {
            taken.push(w.clone());
            out.push(w);
        }
    }
    out
}

impl Grammar {
    pub fn new(seed: u64, cfg: &SynthConfig) -> Self {
        let mut rng = seeded_rng(seed);
        let n = cfg.stems_per_class.max(1);
        let mut taken = Vec::new();
        let nouns = lexicon(&mut rng, n, 2..=3, &mut taken);
        let mut verbs = lexicon(&mut rng, n, 2..=3, &mut taken);
        let shared = ((n as f64) * cfg.ambiguity.clamp(0.0, 1.0)).round() as usize;
        for (i, v) in verbs.iter_mut().take(shared).enumerate() {
            *v = nouns[(i * 7) % n].clone();
        }
        let propns = lexicon(&mut rng, n.div_ceil(2), 2..=2, &mut taken)
            .into_iter()
            .map(|w| {
                let mut c = w.chars();
                let first = c.next().unwrap().to_ascii_uppercase();
                std::iter::once(first).chain(c).collect()
            })
            .collect();
        let adjs = lexicon(&mut rng, n, 2..=2, &mut taken);
        let advs = lexicon(&mut rng, n.div_ceil(3), 3..=3, &mut taken);
        let dets = lexicon(&mut rng, 4, 1..=1, &mut taken)
            .into_iter()
            .zip(["Def", "Def", "Ind", "Ind"])
            .collect();
        let adps = lexicon(&mut rng, 5, 1..=1, &mut taken);
        Grammar {
            nouns,
            propns,
            verbs,
            adjs,
            advs,
            dets,
            adps,
        }
    }

    /// One sentence drawn from the grammar.
    pub fn sentence(&self, rng: &mut Rng) -> Sentence {
        let mut b = Builder::default();
        let subj = self.noun_phrase(&mut b, rng, 1);
        let plural = b.tokens[subj - 1].feats.get("Number") == Some("Plur");
        let past = rng.random_bool(0.5);
        let stem = self.verbs.choose(rng).unwrap();
        let form = format!("{}{}{}", stem, if past { "ta" } else { "" }, if plural { "n" } else { "" });
        let verb = b.push(
            form,
            "VERB",
            &[
                ("Number", if plural { "Plur" } else { "Sing" }),
                ("Tense", if past { "Past" } else { "Pres" }),
            ],
        );
        b.attach(subj, verb, "nsubj");
        b.attach(verb, 0, "root");
        if rng.random_bool(0.6) {
            let obj = self.noun_phrase(&mut b, rng, 1);
            b.attach(obj, verb, "obj");
        }
        if rng.random_bool(0.5) {
            let case = b.push(self.adps.choose(rng).unwrap().clone(), "ADP", &[]);
            let obl = self.noun_phrase(&mut b, rng, 0);
            b.attach(case, obl, "case");
            b.attach(obl, verb, "obl");
        }
        if rng.random_bool(0.3) {
            let adv = b.push(self.advs.choose(rng).unwrap().clone(), "ADV", &[]);
            b.attach(adv, verb, "advmod");
        }
        let p = b.push(".".into(), "PUNCT", &[]);
        b.attach(p, verb, "punct");
        b.finish()
    }

    /// Returns the id of the phrase head.
    fn noun_phrase(&self, b: &mut Builder, rng: &mut Rng, depth: usize) -> usize {
        if rng.random_bool(0.15) {
            return b.push(self.propns.choose(rng).unwrap().clone(), "PROPN", &[("Number", "Sing")]);
        }
        let mut deps = Vec::new();
        if rng.random_bool(0.7) {
            let (d, def) = self.dets.choose(rng).unwrap();
            deps.push((b.push(d.clone(), "DET", &[("Definite", def)]), "det"));
        }
        for _ in 0..rng.random_range(0..=2usize) {
            if rng.random_bool(0.5) {
                deps.push((b.push(self.adjs.choose(rng).unwrap().clone(), "ADJ", &[("Degree", "Pos")]), "amod"));
            }
        }
        let plural = rng.random_bool(0.35);
        let stem = self.nouns.choose(rng).unwrap();
        let form = if plural { format!("{}i", stem) } else { stem.clone() };
        let head = b.push(form, "NOUN", &[("Number", if plural { "Plur" } else { "Sing" })]);
        for (d, rel) in deps {
            b.attach(d, head, rel);
        }
        if depth > 0 && rng.random_bool(0.25) {
            let case = b.push(self.adps.choose(rng).unwrap().clone(), "ADP", &[]);
            let nmod = self.noun_phrase(b, rng, depth - 1);
            b.attach(case, nmod, "case");
            b.attach(nmod, head, "nmod");
        }
        head
    }

    pub fn treebank(&self, name: &str, n: usize, seed: u64) -> Treebank {
        let mut rng = seeded_rng(seed);
        let sentences = (0..n)
            .map(|i| {
                let mut s = self.sentence(&mut rng);
                let text = s.forms().join(" ");
                s.comments = vec![format!("# sent_id = {}-{}", name, i + 1), format!("# text = {}", text)];
                s
            })
            .collect();
        Treebank::new(name, sentences)
    }
}

#[derive(Default)]
struct Builder {
    tokens: Vec<Token>,
}

impl Builder {
    fn push(&mut self, form: String, upos: &str, feats: &[(&str, &str)]) -> usize {
        let id = self.tokens.len() + 1;
        let mut t = Token::new(id, &form).with_upos(upos);
        t.lemma = form.to_lowercase();
        if !feats.is_empty() {
            t = t.with_feats(Features::from_pairs(feats.iter().map(|(k, v)| (k.to_string(), v.to_string()))));
        }
        self.tokens.push(t);
        id
    }

    fn attach(&mut self, dep: usize, head: usize, rel: &str) {
        let t = &mut self.tokens[dep - 1];
        t.head = head;
        t.deprel = rel.to_owned();
    }

    fn finish(self) -> Sentence {
        Sentence::new(self.tokens)
    }
}

/// A treebank of `n` sentences from the grammar seeded by `language_seed`.
pub fn synthetic_treebank(name: &str, language_seed: u64, n: usize, seed: u64) -> Treebank {
    Grammar::new(language_seed, &SynthConfig::default()).treebank(name, n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::{parse_document, serialize_document, validate_tree};

    #[test]
    fn sentences_are_valid_trees() {
        let tb = synthetic_treebank("toy", 1, 200, 2);
        assert_eq!(tb.len(), 200);
        for s in &tb.sentences {
            assert!(validate_tree(s).is_ok(), "{:?}", s.forms());
            assert!(s.tokens.iter().all(|t| !t.deprel.is_empty() && t.deprel != "_"));
        }
        assert!(tb.validate().is_ok());
    }

    #[test]
    fn round_trips_through_text() {
        let tb = synthetic_treebank("toy", 3, 20, 4);
        let text = serialize_document(&tb);
        let back = parse_document(&text).unwrap();
        assert_eq!(serialize_document(&back), text);
    }

    #[test]
    fn seeded() {
        let a = synthetic_treebank("toy", 1, 10, 2);
        let b = synthetic_treebank("toy", 1, 10, 2);
        let c = synthetic_treebank("toy", 1, 10, 3);
        assert_eq!(serialize_document(&a), serialize_document(&b));
        assert_ne!(serialize_document(&a), serialize_document(&c));
    }
}
