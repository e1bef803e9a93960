//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use lowres_core::augment::GeneratedTree;
use lowres_core::conllu::{validate_tree, Sentence, Token};
use ndarray::Array2;
use rand::seq::IndexedRandom;
use rand::Rng;

pub mod gradients;

// ---------------------------------------------------------------- augment

const ROOTS: [&str; 4] = ["NOUN", "VERB", "ADJ", "PROPN"];

/// Words dominated by `r` (including `r`), found by walking up from every word.
pub fn descendants(s: &Sentence, r: usize) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for t in &s.tokens {
        let mut v = t.id;
        let mut steps = 0;
        while v != 0 && steps <= s.len() {
            if v == r {
                out.insert(t.id);
                break;
            }
            v = s.tokens[v - 1].head;
            steps += 1;
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct Candidate {
    pub root: usize,
    pub lo: usize,
    pub hi: usize,
}

pub fn candidates(s: &Sentence, allowed: &[&str]) -> Vec<Candidate> {
    let mut out = Vec::new();
    for t in &s.tokens {
        let base = t.deprel.split(':').next().unwrap();
        if !ROOTS.contains(&t.upos.as_str()) || !allowed.contains(&base) {
            continue;
        }
        let d = descendants(s, t.id);
        let lo = *d.iter().next().unwrap();
        let hi = *d.iter().last().unwrap();
        if hi - lo + 1 == d.len() {
            out.push(Candidate { root: t.id, lo, hi });
        }
    }
    out
}

fn words(s: &Sentence, c: &Candidate) -> String {
    (c.lo..=c.hi)
        .map(|i| s.tokens[i - 1].form.clone())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn exchangeable(a: &Sentence, ca: &Candidate, b: &Sentence, cb: &Candidate) -> bool {
    let (ra, rb) = (&a.tokens[ca.root - 1], &b.tokens[cb.root - 1]);
    ra.upos == rb.upos
        && ra.deprel == rb.deprel
        && ra.feats.to_string() == rb.feats.to_string()
        && words(a, ca) != words(b, cb)
}

/// Rebuild the host with the donor span spliced in, resolving heads through
/// the origin of every word.
pub fn splice(host: &Sentence, t: &Candidate, donor: &Sentence, d: &Candidate) -> Sentence {
    #[derive(Clone, Copy, PartialEq, Eq, Hash)]
    enum From {
        Host(usize),
        Donor(usize),
    }
    let mut order = Vec::new();
    order.extend((1..t.lo).map(From::Host));
    order.extend((d.lo..=d.hi).map(From::Donor));
    order.extend((t.hi + 1..=host.len()).map(From::Host));
    let position: HashMap<From, usize> = order.iter().enumerate().map(|(i, &f)| (f, i + 1)).collect();
    let resolve = |f: From| -> usize {
        match f {
            From::Host(0) | From::Donor(0) => 0,
            f => position[&f],
        }
    };
    let tokens = order
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let (src, head) = match f {
                From::Host(j) => (&host.tokens[j - 1], resolve(From::Host(host.tokens[j - 1].head))),
                From::Donor(j) if j == d.root => {
                    (&donor.tokens[j - 1], resolve(From::Host(host.tokens[t.root - 1].head)))
                }
                From::Donor(j) => (&donor.tokens[j - 1], resolve(From::Donor(donor.tokens[j - 1].head))),
            };
            let mut tok = Token::new(i + 1, src.form.clone()).with_upos(src.upos.clone());
            tok.feats = src.feats.clone();
            tok.head = head;
            tok.deprel = src.deprel.clone();
            tok
        })
        .collect();
    Sentence::new(tokens)
}

pub fn tree_key(s: &Sentence) -> String {
    s.tokens
        .iter()
        .map(|t| format!("{}|{}|{}|{}|{}", t.form, t.upos, t.feats, t.head, t.deprel))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Every one- and two-swap product of a triplet, minus the originals.
pub fn triplet_closure(trees: [&Sentence; 3], allowed: &[&str], any_donor: bool) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for h in 0..3 {
        for d1 in (0..3).filter(|&d| d != h) {
            let third = 3 - h - d1;
            let seconds: Vec<usize> = if any_donor { vec![d1, third] } else { vec![third] };
            for t in candidates(trees[h], allowed) {
                for u in candidates(trees[d1], allowed) {
                    if !exchangeable(trees[h], &t, trees[d1], &u) {
                        continue;
                    }
                    let r1 = splice(trees[h], &t, trees[d1], &u);
                    let (ilo, ihi) = (t.lo, t.lo + u.hi - u.lo);
                    out.insert(tree_key(&r1));
                    for t2 in candidates(&r1, allowed) {
                        if t2.lo <= ihi && ilo <= t2.hi {
                            continue;
                        }
                        for &d2 in &seconds {
                            for u2 in candidates(trees[d2], allowed) {
                                if exchangeable(&r1, &t2, trees[d2], &u2) {
                                    out.insert(tree_key(&splice(&r1, &t2, trees[d2], &u2)));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    for t in trees {
        out.remove(&tree_key(t));
    }
    out
}

fn upos_feats(tokens: &[Token]) -> Vec<String> {
    let mut v: Vec<String> = tokens.iter().map(|t| format!("{}/{}", t.upos, t.feats)).collect();
    v.sort();
    v
}

/// host − replaced + donor, applied swap by swap, compared as a multiset.
pub fn conserved(trees: &[Sentence], g: &GeneratedTree) -> bool {
    let host = &trees[g.swaps[0].host_sentence];
    let mut current: Vec<Token> = host.tokens.clone();
    for rec in &g.swaps {
        let (lo, hi) = rec.replaced.span;
        let donor = &trees[rec.donor_sentence];
        let (dlo, dhi) = rec.donor.span;
        let mut next = current[..lo - 1].to_vec();
        next.extend_from_slice(&donor.tokens[dlo - 1..dhi]);
        next.extend_from_slice(&current[hi..]);
        current = next;
    }
    upos_feats(&current) == upos_feats(&g.sentence.tokens)
}

/// Checks one generated tree against the swap constraints. `trees` is indexed
/// by the sentence ids recorded in the swaps.
pub fn check_product(trees: &[Sentence], g: &GeneratedTree, any_donor: bool) -> Result<(), String> {
    let fail = |what: &str| Err(format!("{}: {}", what, tree_key(&g.sentence)));
    if !validate_tree(&g.sentence).is_ok() {
        return fail("invalid tree");
    }
    if g.swaps.is_empty() || g.swaps.len() > 2 {
        return fail("swap count");
    }
    if !conserved(trees, g) {
        return fail("words not conserved");
    }
    let host = &trees[g.swaps[0].host_sentence];
    if g.sentence.forms() == host.forms() {
        return fail("identical to host");
    }
    for rec in &g.swaps {
        let r = &rec.replaced;
        let d = &rec.donor;
        if r.root_upos != d.root_upos || r.root_deprel != d.root_deprel || r.root_feats != d.root_feats {
            return fail("incompatible roots");
        }
        if r.surface == d.surface {
            return fail("lexically identical subtrees");
        }
        if rec.inserted.len() != d.len() {
            return fail("inserted length");
        }
        if !any_donor && rec.donor_sentence == rec.host_sentence {
            return fail("self donation");
        }
        let donor = &trees[rec.donor_sentence];
        let yield_ = descendants(donor, d.root);
        if yield_.len() != d.span.1 - d.span.0 + 1
            || yield_.iter().next() != Some(&d.span.0)
            || yield_.iter().last() != Some(&d.span.1)
        {
            return fail("discontinuous donor span");
        }
    }
    let last = &g.swaps[g.swaps.len() - 1].inserted;
    let yield_ = descendants(&g.sentence, last.root);
    if yield_.len() != last.len() || yield_.iter().next() != Some(&last.span.0) {
        return fail("discontinuous inserted span");
    }
    if let [r1, r2] = g.swaps.as_slice() {
        if r1.inserted.overlaps(r2.replaced.span) {
            return fail("second swap edits the first insertion");
        }
        if !any_donor && r1.donor_sentence == r2.donor_sentence {
            return fail("donor reused");
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- conllu

const FORM_CHARS: &[char] = &['a', 'e', 'k', 'm', 'r', 's', 'ä', 'ö', 'ž', 'ы', 'ج', '-', '\'', '.', '1'];
const FEAT_KEYS: &[&str] = &["Case", "Gender", "Number", "Person", "PronType", "Tense", "VerbForm", "Mood", "Abbr", "NumType"];
const FEAT_VALUES: &[&str] = &["Nom", "Acc", "Masc", "Sing", "Plur", "1", "3", "Prs", "Past", "Fin", "Yes", "Card"];
const DEPRELS: &[&str] = &["nsubj", "obj", "obl", "obl:tmod", "nmod", "nmod:poss", "amod", "det", "case", "advmod", "conj", "cc", "punct", "aux:pass"];
const XPOS: &[&str] = &["_", "NN", "VBZ", "Ncmsn", "JJ"];

fn random_word<R: Rng>(rng: &mut R) -> String {
    let n = rng.random_range(1..8);
    (0..n).map(|_| *FORM_CHARS.choose(rng).unwrap()).collect()
}

fn random_feats<R: Rng>(rng: &mut R) -> String {
    let k = rng.random_range(0..4);
    if k == 0 {
        return "_".to_owned();
    }
    let mut keys: Vec<&str> = FEAT_KEYS.choose_multiple(rng, k).copied().collect();
    keys.sort_by_key(|k| (k.to_lowercase(), k.to_string()));
    keys.iter()
        .map(|k| format!("{}={}", k, FEAT_VALUES.choose(rng).unwrap()))
        .collect::<Vec<_>>()
        .join("|")
}

/// Random head vector forming a single-rooted tree, `heads[0]` unused.
pub fn random_tree<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (1..=n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut heads = vec![0; n + 1];
    for (k, &d) in order.iter().enumerate().skip(1) {
        heads[d] = order[rng.random_range(0..k)];
    }
    heads
}

/// One canonical CoNLL-U sentence block, including the trailing blank line.
/// Covers comments, multiword ranges, empty nodes, sorted features, subtyped
/// relations, enhanced dependencies and MISC.
pub fn random_conllu_block<R: Rng>(rng: &mut R, index: usize) -> String {
    let n = rng.random_range(1..15);
    let heads = random_tree(rng, n);
    let forms: Vec<String> = (0..n).map(|_| random_word(rng)).collect();
    let mut out = format!("# sent_id = s{}\n# text = {}\n", index, forms.join(" "));
    if rng.random_bool(0.3) {
        out.push_str("# newpar\n");
    }
    if rng.random_bool(0.2) {
        out.push_str("# translit = ok ~ x=1\n");
    }
    let range_start = if n >= 2 && rng.random_bool(0.3) { rng.random_range(1..n) } else { 0 };
    let empty_after = if rng.random_bool(0.2) { rng.random_range(0..=n) } else { usize::MAX };
    let empty = |out: &mut String, i: usize| {
        out.push_str(&format!("{}.1\t{}\t_\t_\t_\t_\t_\t_\t{}:conj\t_\n", i, "e", i.max(1)));
    };
    if empty_after == 0 {
        empty(&mut out, 0);
    }
    for i in 1..=n {
        if i == range_start {
            out.push_str(&format!("{}-{}\t{}{}\t_\t_\t_\t_\t_\t_\t_\t_\n", i, i + 1, forms[i - 1], forms[i]));
        }
        let deprel = if heads[i] == 0 { "root" } else { DEPRELS.choose(rng).unwrap() };
        let lemma = if rng.random_bool(0.8) { forms[i - 1].to_lowercase() } else { "_".to_owned() };
        let upos = lowres_core::conllu::UPOS_TAGS.choose(rng).unwrap();
        let deps = match rng.random_range(0..3) {
            0 => "_".to_owned(),
            1 => format!("{}:{}", heads[i], deprel),
            _ => format!("{}:{}|{}:ref", heads[i], deprel, rng.random_range(0..=n)),
        };
        let misc = *["_", "SpaceAfter=No", "Gloss=x|SpaceAfter=No", "Translit=ab"].choose(rng).unwrap();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            i,
            forms[i - 1],
            lemma,
            upos,
            XPOS.choose(rng).unwrap(),
            random_feats(rng),
            heads[i],
            deprel,
            deps,
            misc
        ));
        if i == empty_after {
            empty(&mut out, i);
        }
    }
    out.push('\n');
    out
}

/// Random labeled, tagged sentence of `n` words.
pub fn random_sentence<R: Rng>(rng: &mut R, n: usize, labels: &[&str], tags: &[&str]) -> Sentence {
    let heads = random_tree(rng, n);
    let tokens = (1..=n)
        .map(|i| {
            Token::new(i, format!("w{}", i))
                .with_upos(*tags.choose(rng).unwrap())
                .with_head(heads[i], *labels.choose(rng).unwrap())
        })
        .collect();
    Sentence::new(tokens)
}

// ---------------------------------------------------------------- decoding

/// Best total score over all single-rooted trees, by enumeration.
pub fn exhaustive_tree_score(scores: &Array2<f64>) -> f64 {
    let n = scores.nrows() - 1;
    let mut heads = vec![0usize; n + 1];
    let mut best = f64::NEG_INFINITY;
    loop {
        if is_single_rooted_tree(&heads) {
            best = best.max((1..=n).map(|d| scores[[d, heads[d]]]).sum());
        }
        let mut k = 1;
        loop {
            if k > n {
                return best;
            }
            heads[k] += 1;
            if heads[k] <= n {
                break;
            }
            heads[k] = 0;
            k += 1;
        }
    }
}

/// `heads[0]` is ignored.
pub fn is_single_rooted_tree(heads: &[usize]) -> bool {
    let n = heads.len() - 1;
    if (1..=n).filter(|&d| heads[d] == 0).count() != 1 {
        return false;
    }
    (1..=n).all(|d| {
        let mut v = d;
        for _ in 0..=n {
            if v == 0 {
                return true;
            }
            v = heads[v];
        }
        false
    })
}

// ---------------------------------------------------------------- metrics

/// (tokens, head matches, head+label matches, upos matches), counted one
/// token at a time; punctuation included, labels compared on the full string.
pub fn count_matches(system: &[Sentence], gold: &[Sentence]) -> (usize, usize, usize, usize) {
    let (mut n, mut uh, mut lh, mut up) = (0, 0, 0, 0);
    for (s, g) in system.iter().zip(gold) {
        for (a, b) in s.tokens.iter().zip(&g.tokens) {
            n += 1;
            if a.head == b.head {
                uh += 1;
                if a.deprel == b.deprel {
                    lh += 1;
                }
            }
            if a.upos == b.upos {
                up += 1;
            }
        }
    }
    (n, uh, lh, up)
}

/// Percentage rounded half-up to two decimals, computed in decimal.
pub fn percent_2dp(num: usize, den: usize) -> f64 {
    if den == 0 {
        return 0.0;
    }
    // 100·num/den in units of 1/1000, then round the last digit.
    let thousandths = num as u128 * 100_000 / den as u128;
    let hundredths = (thousandths + 5) / 10;
    format!("{}.{:02}", hundredths / 100, hundredths % 100).parse().unwrap()
}
