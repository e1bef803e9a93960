//! CoNLL-U data model, reader, writer and tree validation.
//!
//! Only syntactic words take part in any downstream algorithm. Multiword
//! range lines (`3-4`) and empty nodes (`3.1`) are kept as verbatim sidecar
//! lines so that a canonical file survives a read/write cycle byte for byte.

use std::cmp::Ordering;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 17 universal part-of-speech tags.
pub const UPOS_TAGS: [&str; 17] = [
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART", "PRON", "PROPN",
    "PUNCT", "SCONJ", "SYM", "VERB", "X",
];

/// Placeholder for an empty column.
pub const EMPTY: &str = "_";

/// Morphological features: a set of `Key=Value` pairs in canonical order.
///
/// Keys are ordered case-insensitively (the UD convention), with a
/// case-sensitive comparison breaking ties so that the order is total.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Features(Vec<(String, String)>);

fn feature_order(a: &(String, String), b: &(String, String)) -> Ordering {
    a.0.to_lowercase()
        .cmp(&b.0.to_lowercase())
        .then_with(|| a.0.cmp(&b.0))
        .then_with(|| a.1.cmp(&b.1))
}

impl Features {
    pub fn new() -> Self {
        Features(Vec::new())
    }

    pub fn from_pairs<I, K, V>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let mut pairs: Vec<(String, String)> = pairs
            .into_iter()
            .map(|(k, v)| (k.into(), v.into()))
            .collect();
        pairs.sort_by(feature_order);
        pairs.dedup();
        Features(pairs)
    }

    /// Parse a FEATS column. `_` is the empty set.
    pub fn parse(column: &str) -> std::result::Result<Self, String> {
        if column == EMPTY {
            return Ok(Features::new());
        }
        let mut pairs = Vec::new();
        for pair in column.split('|') {
            match pair.split_once('=') {
                Some((k, v)) if !k.is_empty() && !v.is_empty() => {
                    pairs.push((k.to_owned(), v.to_owned()))
                }
                _ => return Err(format!("malformed feature `{}`", pair)),
            }
        }
        Ok(Features::from_pairs(pairs))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

impl fmt::Display for Features {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str(EMPTY);
        }
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "{}={}", k, v)?;
        }
        Ok(())
    }
}

/// One syntactic word.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub id: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: String,
    pub feats: Features,
    /// Head word id, `0` for the artificial root.
    pub head: usize,
    pub deprel: String,
    pub deps: String,
    pub misc: String,
}

impl Token {
    /// A token with every optional column set to `_`.
    pub fn new(id: usize, form: impl Into<String>) -> Self {
        Token {
            id,
            form: form.into(),
            lemma: EMPTY.to_owned(),
            upos: EMPTY.to_owned(),
            xpos: EMPTY.to_owned(),
            feats: Features::new(),
            head: 0,
            deprel: EMPTY.to_owned(),
            deps: EMPTY.to_owned(),
            misc: EMPTY.to_owned(),
        }
    }

    pub fn with_upos(mut self, upos: impl Into<String>) -> Self {
        self.upos = upos.into();
        self
    }

    pub fn with_feats(mut self, feats: Features) -> Self {
        self.feats = feats;
        self
    }

    pub fn with_head(mut self, head: usize, deprel: impl Into<String>) -> Self {
        self.head = head;
        self.deprel = deprel.into();
        self
    }

    /// The relation label without its subtype (`nmod:poss` → `nmod`).
    pub fn base_deprel(&self) -> &str {
        base_relation(&self.deprel)
    }
}

pub fn base_relation(deprel: &str) -> &str {
    deprel.split(':').next().unwrap_or(deprel)
}

/// A multiword-token range line such as `2-3 du _ ...` (tab separated).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiwordRange {
    pub start: usize,
    pub end: usize,
    pub form: String,
    /// The original line, emitted verbatim.
    pub line: String,
}

/// An empty-node line such as `3.1 ...`, anchored after word `after`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmptyNode {
    pub after: usize,
    pub line: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sentence {
    /// Comment lines including their leading `#`.
    pub comments: Vec<String>,
    pub tokens: Vec<Token>,
    pub multiword_ranges: Vec<MultiwordRange>,
    pub empty_nodes: Vec<EmptyNode>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Self {
        Sentence {
            tokens,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn heads(&self) -> Vec<usize> {
        self.tokens.iter().map(|t| t.head).collect()
    }

    pub fn forms(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.form.as_str()).collect()
    }

    pub fn upos(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.upos.as_str()).collect()
    }

    /// Token with the given 1-based id.
    pub fn token(&self, id: usize) -> Option<&Token> {
        id.checked_sub(1).and_then(|i| self.tokens.get(i))
    }

    /// Value of a `# key = value` comment.
    pub fn comment_value(&self, key: &str) -> Option<&str> {
        self.comments.iter().find_map(|c| {
            let body = c.strip_prefix('#')?.trim_start();
            let (k, v) = body.split_once('=')?;
            (k.trim() == key).then(|| v.trim())
        })
    }

    pub fn validate(&self) -> ValidationResult {
        validate_tree(self)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Treebank {
    pub name: String,
    pub sentences: Vec<Sentence>,
}

impl Treebank {
    pub fn new(name: impl Into<String>, sentences: Vec<Sentence>) -> Self {
        Treebank {
            name: name.into(),
            sentences,
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    /// Validate every sentence, failing on the first malformed tree.
    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.sentences.iter().enumerate() {
            let result = validate_tree(s);
            if !result.is_ok() {
                return Err(Error::InvalidTree {
                    sentence: i + 1,
                    violations: result.violations,
                });
            }
        }
        Ok(())
    }
}

/// A structural defect found by [`validate_tree`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Violation {
    /// Token at `position` (0-based) carries `found` instead of `expected`.
    GappedIds {
        position: usize,
        expected: usize,
        found: usize,
    },
    NoRoot,
    MultipleRoots(Vec<usize>),
    /// Ids of the tokens on a cycle, starting from the smallest.
    Cycle(Vec<usize>),
    HeadOutOfRange { token: usize, head: usize },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationResult {
    pub violations: Vec<Violation>,
}

impl ValidationResult {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check that the head column encodes a tree rooted at 0 with exactly one
/// 0-headed word. Violations are returned as data.
pub fn validate_tree(s: &Sentence) -> ValidationResult {
    let mut violations = Vec::new();
    let n = s.tokens.len();

    for (position, token) in s.tokens.iter().enumerate() {
        if token.id != position + 1 {
            violations.push(Violation::GappedIds {
                position,
                expected: position + 1,
                found: token.id,
            });
            break;
        }
    }

    let roots: Vec<usize> = s
        .tokens
        .iter()
        .filter(|t| t.head == 0)
        .map(|t| t.id)
        .collect();
    match roots.len() {
        0 => violations.push(Violation::NoRoot),
        1 => (),
        _ => violations.push(Violation::MultipleRoots(roots)),
    }

    for t in &s.tokens {
        if t.head > n {
            violations.push(Violation::HeadOutOfRange {
                token: t.id,
                head: t.head,
            });
        }
    }

    // Walk head chains by position; 0 = unvisited, 1 = on current path, 2 = done.
    let heads: Vec<usize> = s.tokens.iter().map(|t| t.head).collect();
    let mut state = vec![0u8; n + 1];
    for start in 1..=n {
        if state[start] != 0 {
            continue;
        }
        let mut path = Vec::new();
        let mut v = start;
        loop {
            if v == 0 || v > n || state[v] == 2 {
                break;
            }
            if state[v] == 1 {
                let pos = path.iter().position(|&u| u == v).unwrap();
                let mut cycle = path[pos..].to_vec();
                let min_pos = cycle
                    .iter()
                    .enumerate()
                    .min_by_key(|(_, &u)| u)
                    .map(|(i, _)| i)
                    .unwrap();
                cycle.rotate_left(min_pos);
                violations.push(Violation::Cycle(cycle));
                break;
            }
            state[v] = 1;
            path.push(v);
            v = heads[v - 1];
        }
        for u in path {
            state[u] = 2;
        }
    }

    ValidationResult { violations }
}

/// How [`read_treebank`] and [`parse_document_with`] treat bad input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReadOptions {
    /// Drop unparseable or invalid sentences instead of failing.
    pub lenient: bool,
    /// Also run [`validate_tree`] on every sentence.
    pub validate_trees: bool,
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions {
            lenient: false,
            validate_trees: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReadReport {
    pub dropped: usize,
}

/// Parse a CoNLL-U document in strict mode, checking line syntax and
/// word-id structure.
pub fn parse_document(text: &str) -> Result<Treebank> {
    parse_document_with(
        text,
        &ReadOptions {
            lenient: false,
            validate_trees: false,
        },
    )
    .map(|(tb, _)| tb)
}

enum Line<'a> {
    Word(Token),
    Range(MultiwordRange),
    Empty(EmptyNode),
    Comment(&'a str),
}

fn parse_line(line: &str, tokens_so_far: usize) -> std::result::Result<Line<'_>, String> {
    if line.starts_with('#') {
        return Ok(Line::Comment(line));
    }
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 10 {
        return Err(format!("expected 10 tab-separated columns, found {}", cols.len()));
    }
    let id = cols[0];
    if let Some((a, b)) = id.split_once('-') {
        let start = a
            .parse()
            .map_err(|_| format!("malformed range id `{}`", id))?;
        let end = b
            .parse()
            .map_err(|_| format!("malformed range id `{}`", id))?;
        return Ok(Line::Range(MultiwordRange {
            start,
            end,
            form: cols[1].to_owned(),
            line: line.to_owned(),
        }));
    }
    if let Some((a, b)) = id.split_once('.') {
        let after: usize = a
            .parse()
            .map_err(|_| format!("malformed empty-node id `{}`", id))?;
        b.parse::<usize>()
            .map_err(|_| format!("malformed empty-node id `{}`", id))?;
        if after > tokens_so_far {
            return Err(format!("empty node `{}` precedes word {}", id, after));
        }
        return Ok(Line::Empty(EmptyNode {
            after,
            line: line.to_owned(),
        }));
    }
    let id: usize = id
        .parse()
        .map_err(|_| format!("non-integer id `{}`", cols[0]))?;
    let head: usize = cols[6]
        .parse()
        .map_err(|_| format!("non-integer head `{}`", cols[6]))?;
    let feats = Features::parse(cols[5])?;
    Ok(Line::Word(Token {
        id,
        form: cols[1].to_owned(),
        lemma: cols[2].to_owned(),
        upos: cols[3].to_owned(),
        xpos: cols[4].to_owned(),
        feats,
        head,
        deprel: cols[7].to_owned(),
        deps: cols[8].to_owned(),
        misc: cols[9].to_owned(),
    }))
}

#[derive(Default)]
struct Pending {
    sentence: Sentence,
    first_line: usize,
    error: Option<Error>,
}

/// Parse a document with explicit strictness settings.
pub fn parse_document_with(text: &str, opts: &ReadOptions) -> Result<(Treebank, ReadReport)> {
    let mut sentences = Vec::new();
    let mut report = ReadReport::default();
    let mut pending: Option<Pending> = None;

    let finish = |pending: Pending,
                      sentences: &mut Vec<Sentence>,
                      report: &mut ReadReport|
     -> Result<()> {
        let index = sentences.len() + report.dropped + 1;
        let mut error = pending.error;
        if error.is_none() && pending.sentence.tokens.is_empty() {
            error = Some(Error::Structure {
                sentence: index,
                message: format!("no word lines (starting at line {})", pending.first_line),
            });
        }
        if error.is_none() {
            error = check_ids(&pending.sentence, index).err();
        }
        if error.is_none() && opts.validate_trees {
            let result = validate_tree(&pending.sentence);
            if !result.is_ok() {
                error = Some(Error::InvalidTree {
                    sentence: index,
                    violations: result.violations,
                });
            }
        }
        match error {
            None => sentences.push(pending.sentence),
            Some(e) if opts.lenient => {
                log::warn!("dropping sentence {}: {}", index, e);
                report.dropped += 1;
            }
            Some(e) => return Err(e),
        }
        Ok(())
    };

    for (i, raw) in text.split('\n').enumerate() {
        let lineno = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            if let Some(p) = pending.take() {
                finish(p, &mut sentences, &mut report)?;
            }
            continue;
        }
        let p = pending.get_or_insert_with(|| Pending {
            first_line: lineno,
            ..Default::default()
        });
        if p.error.is_some() {
            continue;
        }
        let n = p.sentence.tokens.len();
        match parse_line(line, n) {
            Ok(Line::Comment(c)) => {
                if n > 0 || !p.sentence.multiword_ranges.is_empty() {
                    p.error = Some(Error::Parse {
                        line: lineno,
                        message: "comment inside a sentence".to_owned(),
                    });
                } else {
                    p.sentence.comments.push(c.to_owned());
                }
            }
            Ok(Line::Word(t)) => p.sentence.tokens.push(t),
            Ok(Line::Range(r)) => p.sentence.multiword_ranges.push(r),
            Ok(Line::Empty(e)) => p.sentence.empty_nodes.push(e),
            Err(message) => {
                let e = Error::Parse {
                    line: lineno,
                    message,
                };
                if !opts.lenient {
                    return Err(e);
                }
                p.error = Some(e);
            }
        }
    }
    if let Some(p) = pending.take() {
        finish(p, &mut sentences, &mut report)?;
    }

    Ok((Treebank::new(String::new(), sentences), report))
}

fn check_ids(s: &Sentence, index: usize) -> Result<()> {
    for (position, t) in s.tokens.iter().enumerate() {
        if t.id != position + 1 {
            let kind = if s.tokens[..position].iter().any(|u| u.id == t.id) {
                "duplicate"
            } else {
                "gapped"
            };
            return Err(Error::Structure {
                sentence: index,
                message: format!(
                    "{} word id: expected {}, found {}",
                    kind,
                    position + 1,
                    t.id
                ),
            });
        }
    }
    Ok(())
}

fn write_token(out: &mut String, t: &Token) {
    use std::fmt::Write;
    let _ = writeln!(
        out,
        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
        t.id, t.form, t.lemma, t.upos, t.xpos, t.feats, t.head, t.deprel, t.deps, t.misc
    );
}

/// Serialize a single sentence including its trailing blank line.
pub fn serialize_sentence(s: &Sentence, out: &mut String) {
    for c in &s.comments {
        out.push_str(c);
        out.push('\n');
    }
    let n = s.tokens.len();
    let emit_sidecar = |out: &mut String, before_word: usize| {
        for e in s.empty_nodes.iter().filter(|e| e.after + 1 == before_word) {
            out.push_str(&e.line);
            out.push('\n');
        }
        for r in s.multiword_ranges.iter().filter(|r| r.start == before_word) {
            out.push_str(&r.line);
            out.push('\n');
        }
    };
    for t in &s.tokens {
        emit_sidecar(out, t.id);
        write_token(out, t);
    }
    // Trailing empty nodes, and any range lines anchored past the last word.
    for e in s.empty_nodes.iter().filter(|e| e.after >= n) {
        out.push_str(&e.line);
        out.push('\n');
    }
    for r in s.multiword_ranges.iter().filter(|r| r.start > n) {
        out.push_str(&r.line);
        out.push('\n');
    }
    out.push('\n');
}

/// Emit canonical CoNLL-U.
pub fn serialize_document(tb: &Treebank) -> String {
    let mut out = String::new();
    for s in &tb.sentences {
        serialize_sentence(s, &mut out);
    }
    out
}

/// Read a treebank from disk; the treebank is named after the file stem.
pub fn read_treebank(path: impl AsRef<Path>, opts: &ReadOptions) -> Result<Treebank> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let (mut tb, report) = parse_document_with(&text, opts)?;
    if report.dropped > 0 {
        log::warn!(
            "{}: dropped {} invalid sentence(s)",
            path.display(),
            report.dropped
        );
    }
    tb.name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(tb)
}

pub fn write_treebank(path: impl AsRef<Path>, tb: &Treebank) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, serialize_document(tb)).map_err(|e| Error::file(path, e))
}
