//! Combining, splitting, sampling and counting treebanks.
//!
//! All randomness comes from [`seeded_rng`], a ChaCha8 stream seeded with a
//! `u64`, so every split and sample is reproducible across platforms.

use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conllu::Treebank;
use crate::error::{Error, Result};

/// The generator behind every random choice in this crate.
pub type Rng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// An exact fraction in (0, 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fraction {
    num: u64,
    den: u64,
}

impl Fraction {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 || num == 0 || num >= den {
            return Err(Error::invalid(format!(
                "fraction {}/{} is not strictly between 0 and 1",
                num, den
            )));
        }
        Ok(Fraction { num, den })
    }

    /// `floor(self · n)`, computed exactly.
    pub fn floor_of(&self, n: usize) -> usize {
        ((self.num as u128 * n as u128) / self.den as u128) as usize
    }
}

impl Default for Fraction {
    fn default() -> Self {
        Fraction { num: 4, den: 5 }
    }
}

impl FromStr for Fraction {
    type Err = Error;

    /// Parses decimals (`0.8`) and ratios (`4/5`) without rounding.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("cannot parse fraction `{}`", s));
        if let Some((n, d)) = s.split_once('/') {
            return Fraction::new(
                n.trim().parse().map_err(|_| bad())?,
                d.trim().parse().map_err(|_| bad())?,
            );
        }
        let s = s.trim();
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 18 || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let int: u64 = if int.is_empty() {
            0
        } else {
            int.parse().map_err(|_| bad())?
        };
        let den = 10u64.pow(frac.len() as u32);
        let frac_val: u64 = if frac.is_empty() {
            0
        } else {
            frac.parse().map_err(|_| bad())?
        };
        let num = int
            .checked_mul(den)
            .and_then(|v| v.checked_add(frac_val))
            .ok_or_else(bad)?;
        Fraction::new(num, den)
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: Fraction,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: Fraction::default(),
            seed: 0,
            shuffle: true,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreebankStats {
    pub sentence_count: usize,
    pub token_count: usize,
}

/// Concatenate `train` and `dev` (when given) and split the result so that
/// the train side receives `floor(fraction · N)` sentences.
///
/// With shuffling, sentences are assigned by a seeded permutation; each side
/// keeps the original document order.
pub fn combine_and_split(
    train: &Treebank,
    dev: Option<&Treebank>,
    spec: &SplitSpec,
) -> Result<(Treebank, Treebank)> {
    let combined: Vec<_> = train
        .sentences
        .iter()
        .chain(dev.into_iter().flat_map(|d| d.sentences.iter()))
        .collect();
    let n = combined.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 sentences to split, got {}",
            n
        )));
    }
    let k = spec.train_fraction.floor_of(n);

    let mut order: Vec<usize> = (0..n).collect();
    if spec.shuffle {
        order.shuffle(&mut seeded_rng(spec.seed));
    }
    let mut train_idx = order[..k].to_vec();
    let mut dev_idx = order[k..].to_vec();
    train_idx.sort_unstable();
    dev_idx.sort_unstable();

    let pick = |idx: &[usize]| idx.iter().map(|&i| combined[i].clone()).collect();
    Ok((
        Treebank::new(format!("{}-train", train.name), pick(&train_idx)),
        Treebank::new(format!("{}-dev", train.name), pick(&dev_idx)),
    ))
}

/// Uniform sample of `n` sentences without replacement, in original order.
pub fn sample_subset(tb: &Treebank, n: usize, seed: u64) -> Result<Treebank> {
    if n > tb.len() {
        return Err(Error::invalid(format!(
            "cannot sample {} sentences from a treebank of {}",
            n,
            tb.len()
        )));
    }
    let mut idx = index::sample(&mut seeded_rng(seed), tb.len(), n).into_vec();
    idx.sort_unstable();
    Ok(Treebank::new(
        tb.name.clone(),
        idx.into_iter().map(|i| tb.sentences[i].clone()).collect(),
    ))
}

pub fn compute_stats(tb: &Treebank) -> TreebankStats {
    TreebankStats {
        sentence_count: tb.len(),
        token_count: tb.token_count(),
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::conllu::{Sentence, Token};

    fn numbered(n: usize) -> Treebank {
        Treebank::new(
            "t",
            (0..n)
                .map(|i| {
                    let mut s = Sentence::new(vec![Token::new(1, format!("s{}", i))]);
                    s.comments.push(format!("# sent_id = {}", i));
                    s
                })
                .collect(),
        )
    }

    fn ids(tb: &Treebank) -> Vec<String> {
        tb.sentences
            .iter()
            .map(|s| s.comment_value("sent_id").unwrap().to_owned())
            .collect()
    }

    #[test]
    fn fraction_parsing() {
        assert_eq!("0.8".parse::<Fraction>().unwrap(), Fraction::new(8, 10).unwrap());
        assert_eq!("4/5".parse::<Fraction>().unwrap().floor_of(31), 24);
        assert_eq!(".5".parse::<Fraction>().unwrap().floor_of(3), 1);
        assert!("1.0".parse::<Fraction>().is_err());
        assert!("0".parse::<Fraction>().is_err());
        assert!("abc".parse::<Fraction>().is_err());
    }

    #[test]
    fn split_sizes() {
        let spec = SplitSpec::default();
        let (a, b) = combine_and_split(&numbered(10), None, &spec).unwrap();
        assert_eq!((a.len(), b.len()), (8, 2));
        let (a, b) = combine_and_split(&numbered(15), Some(&numbered(4)), &spec).unwrap();
        assert_eq!((a.len(), b.len()), (15, 4));
        assert!(combine_and_split(&numbered(1), None, &spec).is_err());
    }

    #[test]
    fn unshuffled_split_keeps_prefix() {
        let spec = SplitSpec {
            shuffle: false,
            ..Default::default()
        };
        let (a, b) = combine_and_split(&numbered(10), None, &spec).unwrap();
        assert_eq!(ids(&a), (0..8).map(|i| i.to_string()).collect::<Vec<_>>());
        assert_eq!(ids(&b), vec!["8", "9"]);
    }

    #[test]
    fn sampling_edge_cases() {
        let tb = numbered(20);
        assert_eq!(sample_subset(&tb, 20, 3).unwrap().sentences, tb.sentences);
        assert!(sample_subset(&tb, 0, 3).unwrap().is_empty());
        assert!(sample_subset(&tb, 21, 3).is_err());
    }

    #[test]
    fn different_seeds_give_different_samples() {
        let tb = numbered(4000);
        let a = ids(&sample_subset(&tb, 100, 1).unwrap());
        let b = ids(&sample_subset(&tb, 100, 2).unwrap());
        assert_ne!(a, b);
        assert_eq!(a, ids(&sample_subset(&tb, 100, 1).unwrap()));
    }

    #[test]
    fn stats() {
        assert_eq!(compute_stats(&Treebank::default()), TreebankStats::default());
        let s3 = Sentence::new((1..=3).map(|i| Token::new(i, "x")).collect());
        let s4 = Sentence::new((1..=4).map(|i| Token::new(i, "y")).collect());
        let st = compute_stats(&Treebank::new("t", vec![s3, s4]));
        assert_eq!((st.sentence_count, st.token_count), (2, 7));
    }

    proptest! {
        #[test]
        fn split_partitions_exactly(n in 2usize..300, seed in any::<u64>(), shuffle in any::<bool>()) {
            let tb = numbered(n);
            let spec = SplitSpec { seed, shuffle, ..Default::default() };
            let (a, b) = combine_and_split(&tb, None, &spec).unwrap();
            prop_assert_eq!(a.len() + b.len(), n);
            prop_assert_eq!(a.len(), 4 * n / 5);
            let mut all: Vec<usize> = ids(&a).iter().chain(ids(&b).iter())
                .map(|s| s.parse().unwrap()).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let (a2, _) = combine_and_split(&tb, None, &spec).unwrap();
            prop_assert_eq!(a, a2);
        }

        #[test]
        fn samples_have_no_duplicates(n in 0usize..50, seed in any::<u64>()) {
            let tb = numbered(50);
            let s = sample_subset(&tb, n, seed).unwrap();
            let got: Vec<usize> = ids(&s).iter().map(|x| x.parse().unwrap()).collect();
            prop_assert_eq!(got.len(), n);
            prop_assert!(got.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
