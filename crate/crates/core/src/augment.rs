//! Subtree-swapping data augmentation.
//!
//! A subtree qualifies for swapping when its yield is a contiguous span,
//! its root is a NOUN, VERB, ADJ or PROPN, and its root relation belongs to
//! [`AllowedRelations`]. Two subtrees are exchangeable when their roots agree
//! on UPOS, relation and FEATS and their surface strings differ. A host tree
//! receives one subtree from a second tree, then optionally a second subtree
//! from the third tree of the triplet, never touching the first insertion.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conllu::{base_relation, validate_tree, Sentence, Token, Treebank, EMPTY};
use crate::error::{Error, Result};
use crate::treebank_ops::seeded_rng;

/// UPOS tags allowed at the root of a swappable subtree.
pub const ROOT_UPOS: [&str; 4] = ["NOUN", "VERB", "ADJ", "PROPN"];

/// Core arguments, nominal dependents and non-core dependents minus
/// `discourse`, `expl` and `dislocated`.
pub const DEFAULT_RELATIONS: [&str; 21] = [
    // core arguments
    "nsubj", "obj", "iobj", "csubj", "ccomp", "xcomp",
    // nominal dependents
    "nmod", "appos", "nummod", "acl", "amod", "det", "clf", "case",
    // non-core dependents
    "obl", "vocative", "advcl", "advmod", "aux", "cop", "mark",
];

/// Base relation labels a subtree root may carry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllowedRelations(BTreeSet<String>);

impl Default for AllowedRelations {
    fn default() -> Self {
        AllowedRelations(DEFAULT_RELATIONS.iter().map(|r| r.to_string()).collect())
    }
}

impl AllowedRelations {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(labels: I) -> Self {
        AllowedRelations(
            labels
                .into_iter()
                .map(|l| base_relation(&l.into()).to_owned())
                .collect(),
        )
    }

    /// One base relation per line; blank lines and `#` comments are skipped.
    pub fn from_lines(text: &str) -> Self {
        AllowedRelations::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    /// Membership is decided on the base label.
    pub fn contains(&self, deprel: &str) -> bool {
        self.0.contains(base_relation(deprel))
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

/// A contiguous subtree of one sentence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubtreeRef {
    pub sentence_id: usize,
    pub root: usize,
    /// Inclusive word-id interval covered by the subtree.
    pub span: (usize, usize),
    pub root_upos: String,
    pub root_deprel: String,
    pub root_feats: String,
    pub surface: String,
}

impl SubtreeRef {
    pub fn len(&self) -> usize {
        self.span.1 - self.span.0 + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, span: (usize, usize)) -> bool {
        self.span.0 <= span.1 && span.0 <= self.span.1
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapRecord {
    pub host_sentence: usize,
    pub donor_sentence: usize,
    pub replaced: SubtreeRef,
    /// The donor subtree, in the donor sentence's numbering.
    pub donor: SubtreeRef,
    pub inserted: SubtreeRef,
    pub round: u8,
}

/// A generated tree with the swaps that produced it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratedTree {
    pub sentence: Sentence,
    pub swaps: Vec<SwapRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct AugmentConfig {
    pub relations: AllowedRelations,
    /// Let the second swap draw from either other tree, not just the third.
    pub any_donor: bool,
    /// Compare root relations on base labels instead of full labels.
    pub base_label_match: bool,
    /// Maximum number of triplets to enumerate. `None` enumerates all
    /// triplets for treebanks of up to 30 sentences and samples as many
    /// triplets as 30 sentences would give for larger ones.
    pub triplet_budget: Option<usize>,
}


/// Words covered by each node's subtree, as sorted id lists (index 0 unused).
fn yields(s: &Sentence) -> Vec<Vec<usize>> {
    let n = s.len();
    let mut children = vec![Vec::new(); n + 1];
    for t in &s.tokens {
        children[t.head].push(t.id);
    }
    let mut out = vec![Vec::new(); n + 1];
    // Post-order without recursion; the input is a validated tree.
    let mut stack = vec![(0usize, false)];
    while let Some((v, expanded)) = stack.pop() {
        if expanded {
            let mut y: Vec<usize> = if v == 0 { Vec::new() } else { vec![v] };
            for &c in &children[v] {
                y.extend_from_slice(&out[c]);
            }
            y.sort_unstable();
            out[v] = y;
        } else {
            stack.push((v, true));
            for &c in &children[v] {
                stack.push((c, false));
            }
        }
    }
    out
}

fn surface(s: &Sentence, span: (usize, usize)) -> String {
    s.tokens[span.0 - 1..span.1]
        .iter()
        .map(|t| t.form.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

fn subtree_ref(s: &Sentence, sentence_id: usize, root: usize, span: (usize, usize)) -> SubtreeRef {
    let t = &s.tokens[root - 1];
    SubtreeRef {
        sentence_id,
        root,
        span,
        root_upos: t.upos.clone(),
        root_deprel: t.deprel.clone(),
        root_feats: t.feats.to_string(),
        surface: surface(s, span),
    }
}

fn ensure_valid(s: &Sentence) -> Result<()> {
    let v = validate_tree(s);
    if v.is_ok() {
        Ok(())
    } else {
        Err(Error::InvalidTree {
            sentence: 0,
            violations: v.violations,
        })
    }
}

/// Exact compatibility: equal root UPOS, relation and FEATS, different surface.
pub fn compatible(a: &SubtreeRef, b: &SubtreeRef) -> bool {
    a.root_upos == b.root_upos
        && a.root_deprel == b.root_deprel
        && a.root_feats == b.root_feats
        && a.surface != b.surface
}

/// Replace `target`'s span in `host` with a copy of `donor`'s span.
///
/// Heads inside the donor span are re-indexed, the inserted root inherits the
/// target root's head, and words right of the span shift by the length
/// difference. Returns the new sentence and a reference to the inserted
/// subtree (in the new sentence's numbering). Comments and sidecar lines of
/// the host are dropped because their indices no longer apply.
pub fn swap(
    host: &Sentence,
    target: &SubtreeRef,
    donor_sentence: &Sentence,
    donor: &SubtreeRef,
) -> Result<(Sentence, SubtreeRef)> {
    check_subtree(host, target)?;
    check_subtree(donor_sentence, donor)?;
    if target.root_upos != donor.root_upos
        || base_relation(&target.root_deprel) != base_relation(&donor.root_deprel)
        || target.root_feats != donor.root_feats
        || target.surface == donor.surface
    {
        return Err(Error::invalid("subtrees are not compatible"));
    }

    let (lo, hi) = target.span;
    let (dlo, dhi) = donor.span;
    let dlen = dhi - dlo + 1;
    let tlen = hi - lo + 1;
    let shift = |h: usize| -> usize {
        if h > hi {
            h + dlen - tlen
        } else {
            h
        }
    };
    let target_head = host.tokens[target.root - 1].head;

    let mut tokens: Vec<Token> = Vec::with_capacity(host.len() + dlen - tlen);
    for t in &host.tokens[..lo - 1] {
        let mut t = t.clone();
        t.head = shift(t.head);
        t.deps = EMPTY.to_owned();
        tokens.push(t);
    }
    for t in &donor_sentence.tokens[dlo - 1..dhi] {
        let mut t = t.clone();
        t.id = t.id - dlo + lo;
        t.head = if t.id == donor.root - dlo + lo {
            shift(target_head)
        } else {
            t.head - dlo + lo
        };
        t.deps = EMPTY.to_owned();
        tokens.push(t);
    }
    for t in &host.tokens[hi..] {
        let mut t = t.clone();
        t.id = shift(t.id);
        t.head = shift(t.head);
        t.deps = EMPTY.to_owned();
        tokens.push(t);
    }

    let out = Sentence::new(tokens);
    let new_root = donor.root - dlo + lo;
    ensure_valid(&out)?;

    let inserted = subtree_ref(&out, target.sentence_id, new_root, (lo, lo + dlen - 1));
    Ok((out, inserted))
}

fn check_subtree(s: &Sentence, r: &SubtreeRef) -> Result<()> {
    ensure_valid(s)?;
    let (lo, hi) = r.span;
    if r.root < lo || r.root > hi || hi > s.len() || lo == 0 {
        return Err(Error::invalid(format!(
            "subtree root {} / span {:?} out of range",
            r.root, r.span
        )));
    }
    let y = &yields(s)[r.root];
    if y.len() != hi - lo + 1 || y[0] != lo || y[y.len() - 1] != hi {
        return Err(Error::invalid(format!(
            "span {:?} is not the yield of word {}",
            r.span, r.root
        )));
    }
    Ok(())
}

/// Canonical identity of a tree for deduplication: forms, UPOS, FEATS,
/// heads and relations. Comments are ignored.
pub fn dedup_key(s: &Sentence) -> String {
    let mut key = String::new();
    for t in &s.tokens {
        let _ = writeln!(
            key,
            "{}\t{}\t{}\t{}\t{}",
            t.form, t.upos, t.feats, t.head, t.deprel
        );
    }
    key
}

pub struct Augmenter {
    config: AugmentConfig,
}

/// Outcome of [`Augmenter::augment_treebank`].
#[derive(Clone, Debug)]
pub struct Augmentation {
    pub treebank: Treebank,
    pub pool_size: usize,
    pub triplets: usize,
    pub warnings: Vec<String>,
}

impl Default for Augmenter {
    fn default() -> Self {
        Augmenter::new(AugmentConfig::default())
    }
}

impl Augmenter {
    pub fn new(config: AugmentConfig) -> Self {
        Augmenter { config }
    }

    pub fn config(&self) -> &AugmentConfig {
        &self.config
    }

    /// All qualifying contiguous subtrees of `s`, ordered by root id.
    pub fn extract_subtrees(&self, s: &Sentence, sentence_id: usize) -> Result<Vec<SubtreeRef>> {
        ensure_valid(s)?;
        let ys = yields(s);
        let mut out = Vec::new();
        for t in &s.tokens {
            if !ROOT_UPOS.contains(&t.upos.as_str()) || !self.config.relations.contains(&t.deprel) {
                continue;
            }
            let y = &ys[t.id];
            let (lo, hi) = (y[0], y[y.len() - 1]);
            if hi - lo + 1 != y.len() {
                continue;
            }
            out.push(subtree_ref(s, sentence_id, t.id, (lo, hi)));
        }
        Ok(out)
    }

    pub fn compatible(&self, a: &SubtreeRef, b: &SubtreeRef) -> bool {
        if self.config.base_label_match {
            a.root_upos == b.root_upos
                && base_relation(&a.root_deprel) == base_relation(&b.root_deprel)
                && a.root_feats == b.root_feats
                && a.surface != b.surface
        } else {
            compatible(a, b)
        }
    }

    /// Every tree obtainable from the triplet by one swap, or by a second
    /// swap that leaves the first insertion untouched. Results are
    /// deduplicated and exclude the three originals; order is deterministic.
    pub fn generate_from_triplet(&self, trees: [(usize, &Sentence); 3]) -> Result<Vec<GeneratedTree>> {
        let mut subtrees = Vec::with_capacity(3);
        for (id, s) in trees {
            subtrees.push(self.extract_subtrees(s, id)?);
        }
        let mut seen: HashSet<String> = trees.iter().map(|(_, s)| dedup_key(s)).collect();
        let mut out = Vec::new();
        let mut emit = |g: GeneratedTree, out: &mut Vec<GeneratedTree>| {
            if seen.insert(dedup_key(&g.sentence)) {
                out.push(g);
            }
        };

        for h in 0..3 {
            let (host_id, host) = trees[h];
            for first in (0..3).filter(|&d| d != h) {
                let third = 3 - h - first;
                let second_sources: &[usize] = if self.config.any_donor {
                    &[first, third]
                } else {
                    std::slice::from_ref(&third)
                };
                for target in &subtrees[h] {
                    for donor in &subtrees[first] {
                        if !self.compatible(target, donor) {
                            continue;
                        }
                        let (round1, inserted) = swap(host, target, trees[first].1, donor)?;
                        let record1 = SwapRecord {
                            host_sentence: host_id,
                            donor_sentence: trees[first].0,
                            replaced: target.clone(),
                            donor: donor.clone(),
                            inserted: inserted.clone(),
                            round: 1,
                        };

                        for target2 in self.extract_subtrees(&round1, host_id)? {
                            if target2.overlaps(inserted.span) {
                                continue;
                            }
                            for &src in second_sources {
                                for donor2 in &subtrees[src] {
                                    if !self.compatible(&target2, donor2) {
                                        continue;
                                    }
                                    let (round2, inserted2) =
                                        swap(&round1, &target2, trees[src].1, donor2)?;
                                    emit(
                                        GeneratedTree {
                                            sentence: round2,
                                            swaps: vec![
                                                record1.clone(),
                                                SwapRecord {
                                                    host_sentence: host_id,
                                                    donor_sentence: trees[src].0,
                                                    replaced: target2.clone(),
                                                    donor: donor2.clone(),
                                                    inserted: inserted2,
                                                    round: 2,
                                                },
                                            ],
                                        },
                                        &mut out,
                                    );
                                }
                            }
                        }
                        emit(
                            GeneratedTree {
                                sentence: round1,
                                swaps: vec![record1],
                            },
                            &mut out,
                        );
                    }
                }
            }
        }
        Ok(out)
    }

    fn triplets(&self, m: usize, seed: u64) -> Vec<[usize; 3]> {
        if m < 3 {
            return Vec::new();
        }
        let all = m * (m - 1) * (m - 2) / 6;
        let budget = self
            .config
            .triplet_budget
            .unwrap_or(if m <= 30 { all } else { 30 * 29 * 28 / 6 });
        let enumerate = || {
            let mut v = Vec::with_capacity(all);
            for i in 0..m {
                for j in i + 1..m {
                    for k in j + 1..m {
                        v.push([i, j, k]);
                    }
                }
            }
            v
        };
        if budget >= all {
            return enumerate();
        }
        // Sample distinct triplets by rank; ranks are decoded lexicographically.
        let mut rng = seeded_rng(seed ^ 0x7472_6970_6c65_7473);
        let mut ranks = index::sample(&mut rng, all, budget).into_vec();
        ranks.sort_unstable();
        if all <= 5_000_000 {
            let v = enumerate();
            return ranks.into_iter().map(|r| v[r]).collect();
        }
        ranks.into_iter().map(|r| unrank_triplet(r, m)).collect()
    }

    /// Pool the products of every triplet, deduplicate them, and draw a
    /// seeded uniform sample of `min(n, pool)` trees.
    pub fn augment_treebank(&self, tb: &Treebank, n: usize, seed: u64) -> Result<Augmentation> {
        for (i, s) in tb.sentences.iter().enumerate() {
            let v = validate_tree(s);
            if !v.is_ok() {
                return Err(Error::InvalidTree {
                    sentence: i + 1,
                    violations: v.violations,
                });
            }
        }
        let triplets = self.triplets(tb.len(), seed);
        let mut warnings = Vec::new();
        if n == 0 {
            return Ok(Augmentation {
                treebank: Treebank::new(format!("{}-aug", tb.name), Vec::new()),
                pool_size: 0,
                triplets: 0,
                warnings,
            });
        }

        // First pass keeps only keys so large pools stay cheap; the selected
        // trees are regenerated afterwards. Results merge in triplet order, so
        // parallel and serial runs agree.
        let per_triplet: Vec<Vec<String>> = triplets
            .par_iter()
            .map(|&t| {
                self.generate_from_triplet(self.triplet_refs(tb, t))
                    .map(|gs| gs.iter().map(|g| dedup_key(&g.sentence)).collect())
            })
            .collect::<Result<_>>()?;
        let mut seen = HashSet::new();
        let mut pool: Vec<(usize, usize)> = Vec::new();
        for (ti, keys) in per_triplet.into_iter().enumerate() {
            for (gi, key) in keys.into_iter().enumerate() {
                if seen.insert(key) {
                    pool.push((ti, gi));
                }
            }
        }
        drop(seen);

        let take = n.min(pool.len());
        if pool.len() < n {
            let msg = format!(
                "augmentation pool for {} holds {} tree(s), fewer than the {} requested",
                tb.name,
                pool.len(),
                n
            );
            log::warn!("{}", msg);
            warnings.push(msg);
        }
        let mut picks = index::sample(&mut seeded_rng(seed), pool.len(), take).into_vec();
        picks.sort_unstable();

        let mut sentences = Vec::with_capacity(take);
        let mut cache: Option<(usize, Vec<GeneratedTree>)> = None;
        for (k, p) in picks.into_iter().enumerate() {
            let (ti, gi) = pool[p];
            if cache.as_ref().map(|c| c.0) != Some(ti) {
                cache = Some((ti, self.generate_from_triplet(self.triplet_refs(tb, triplets[ti]))?));
            }
            let g = &cache.as_ref().unwrap().1[gi];
            sentences.push(annotate(tb, g, k + 1));
        }

        Ok(Augmentation {
            treebank: Treebank::new(format!("{}-aug", tb.name), sentences),
            pool_size: pool.len(),
            triplets: triplets.len(),
            warnings,
        })
    }

    fn triplet_refs<'a>(&self, tb: &'a Treebank, t: [usize; 3]) -> [(usize, &'a Sentence); 3] {
        [
            (t[0], &tb.sentences[t[0]]),
            (t[1], &tb.sentences[t[1]]),
            (t[2], &tb.sentences[t[2]]),
        ]
    }
}

fn unrank_triplet(mut r: usize, m: usize) -> [usize; 3] {
    let mut out = [0; 3];
    let mut start = 0;
    for (slot, remaining) in [(0usize, 2usize), (1, 1), (2, 0)] {
        let mut i = start;
        loop {
            let rest = m - i - 1;
            let block = match remaining {
                2 => rest * rest.saturating_sub(1) / 2,
                1 => rest,
                _ => 1,
            };
            if r < block {
                break;
            }
            r -= block;
            i += 1;
        }
        out[slot] = i;
        start = i + 1;
    }
    out
}

fn sentence_label(tb: &Treebank, i: usize) -> String {
    tb.sentences[i]
        .comment_value("sent_id")
        .map(str::to_owned)
        .unwrap_or_else(|| format!("#{}", i + 1))
}

fn annotate(tb: &Treebank, g: &GeneratedTree, ordinal: usize) -> Sentence {
    let mut s = g.sentence.clone();
    let host = g.swaps[0].host_sentence;
    let donors: Vec<String> = g
        .swaps
        .iter()
        .map(|r| {
            format!(
                "round{}={}[{}-{}]->[{}-{}]",
                r.round,
                sentence_label(tb, r.donor_sentence),
                r.donor.span.0,
                r.donor.span.1,
                r.replaced.span.0,
                r.replaced.span.1
            )
        })
        .collect();
    s.comments = vec![
        format!("# sent_id = {}-aug-{}", tb.name, ordinal),
        format!(
            "# augmentation = host={} swaps={} {}",
            sentence_label(tb, host),
            g.swaps.len(),
            donors.join(" ")
        ),
        format!(
            "# text = {}",
            s.tokens
                .iter()
                .map(|t| t.form.as_str())
                .collect::<Vec<_>>()
                .join(" ")
        ),
    ];
    s
}
