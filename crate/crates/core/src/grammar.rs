//! Symbol inventories and tabular rule parameters of the lexicalized PCFG.
//!
//! Symbols are numbered in one space: nonterminals occupy `0..N` and
//! preterminals `N..N+P`. Four families of conditional distributions are
//! stored as logits and normalized with a log-softmax over their last axis:
//!
//! * `root[A]`: `S -> A[α]`
//! * `head[A][w][dir][B]`: headedness direction and head-inheriting child
//!   given the parent and its head word
//! * `dep[dir][A][B][C]`: the non-inheriting child given direction, parent and
//!   inheriting child
//! * `emit[T][w]`: `T[w] -> w`
//!
//! Memory is dominated by the head table, which holds
//! `N * |V| * 2 * (N + P)` 64-bit reals.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
pub const GRAMMAR_FORMAT_VERSION: &str = "lexinduce-grammar/1";
const INIT_SCALE: f64 = 0.1;

/// Which child of a binary rule inherits the parent's head word.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    /// `A[α] -> B[α] C[β]`
    Left,
    /// `A[α] -> B[β] C[α]`
    Right,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Left, Direction::Right];

    pub fn index(self) -> usize {
        match self {
            Direction::Left => 0,
            Direction::Right => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
    unk_id: usize,
}

impl Vocabulary {
    /// Builds a vocabulary from an ordered word list. The unknown-word token
    /// is prepended when absent.
    pub fn new(words: Vec<String>) -> Result<Self> {
        let mut list = Vec::with_capacity(words.len() + 1);
        if !words.iter().any(|w| w == UNK) {
            list.push(UNK.to_string());
        }
        list.extend(words);
        let mut index = HashMap::with_capacity(list.len());
        for (i, w) in list.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Input(format!("duplicate vocabulary entry {w:?}")));
            }
        }
        let unk_id = index[UNK];
        Ok(Vocabulary {
            words: list,
            index,
            unk_id,
        })
    }

    /// Words seen at least `min_count` times are kept, in first-occurrence
    /// order; everything else maps to UNK.
    pub fn from_tokens<'a, I>(tokens: I, min_count: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut order = Vec::new();
        for t in tokens {
            let c = counts.entry(t).or_insert(0);
            if *c == 0 {
                order.push(t);
            }
            *c += 1;
        }
        let kept = order
            .into_iter()
            .filter(|t| counts[t] >= min_count && *t != UNK)
            .map(str::to_string)
            .collect();
        Vocabulary::new(kept)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn unk_id(&self) -> usize {
        self.unk_id
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    /// Id of `word`, falling back to UNK.
    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(self.unk_id)
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrammarConfig {
    pub num_nonterminals: usize,
    pub num_preterminals: usize,
    pub seed: u64,
    /// Strength of the pull of each emission row towards its mean logit
    /// during training. Zero disables it.
    pub emission_smoothing: f64,
}

impl Default for GrammarConfig {
    fn default() -> Self {
        GrammarConfig {
            num_nonterminals: 15,
            num_preterminals: 20,
            seed: 0,
            emission_smoothing: 0.0,
        }
    }
}

impl GrammarConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_nonterminals == 0 || self.num_preterminals == 0 {
            return Err(Error::Config(format!(
                "symbol inventories must be non-empty (nonterminals={}, preterminals={})",
                self.num_nonterminals, self.num_preterminals
            )));
        }
        if !(self.emission_smoothing >= 0.0) {
            return Err(Error::Config("emission_smoothing must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Dense parameter tables. Used both for logits, their normalized
/// log-probabilities and gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct Tables {
    pub num_nt: usize,
    pub num_pt: usize,
    pub vocab_size: usize,
    pub root: Vec<f64>,
    pub head: Vec<f64>,
    pub dep: Vec<f64>,
    pub emit: Vec<f64>,
}

impl Tables {
    pub fn zeros(num_nt: usize, num_pt: usize, vocab_size: usize) -> Self {
        let s = num_nt + num_pt;
        Tables {
            num_nt,
            num_pt,
            vocab_size,
            root: vec![0.0; num_nt],
            head: vec![0.0; num_nt * vocab_size * 2 * s],
            dep: vec![0.0; 2 * num_nt * s * s],
            emit: vec![0.0; num_pt * vocab_size],
        }
    }

    pub fn zeros_like(other: &Tables) -> Self {
        Tables::zeros(other.num_nt, other.num_pt, other.vocab_size)
    }

    pub fn num_symbols(&self) -> usize {
        self.num_nt + self.num_pt
    }

    #[inline]
    pub fn head_index(&self, parent: usize, word: usize, dir: Direction, child: usize) -> usize {
        let s = self.num_symbols();
        ((parent * self.vocab_size + word) * 2 + dir.index()) * s + child
    }

    #[inline]
    pub fn dep_index(&self, dir: Direction, parent: usize, inheriting: usize, dependent: usize) -> usize {
        let s = self.num_symbols();
        ((dir.index() * self.num_nt + parent) * s + inheriting) * s + dependent
    }

    #[inline]
    pub fn emit_index(&self, preterminal: usize, word: usize) -> usize {
        preterminal * self.vocab_size + word
    }

    /// Length of one conditional distribution in each table.
    pub(crate) fn row_lengths(&self) -> [usize; 4] {
        let s = self.num_symbols();
        [self.num_nt, 2 * s, s, self.vocab_size]
    }

    pub(crate) fn parts(&self) -> [&Vec<f64>; 4] {
        [&self.root, &self.head, &self.dep, &self.emit]
    }

    pub(crate) fn parts_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.root, &mut self.head, &mut self.dep, &mut self.emit]
    }

    pub fn len(&self) -> usize {
        self.parts().iter().map(|p| p.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat view over all entries, table by table.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.root
            .iter()
            .chain(self.head.iter())
            .chain(self.dep.iter())
            .chain(self.emit.iter())
    }

    pub fn get_flat(&self, mut k: usize) -> f64 {
        for part in self.parts() {
            if k < part.len() {
                return part[k];
            }
            k -= part.len();
        }
        panic!("flat index out of range");
    }

    pub fn set_flat(&mut self, mut k: usize, value: f64) {
        for part in self.parts_mut() {
            if k < part.len() {
                part[k] = value;
                return;
            }
            k -= part.len();
        }
        panic!("flat index out of range");
    }

    pub fn add_assign(&mut self, other: &Tables) {
        self.axpy(1.0, other);
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Tables) {
        assert_eq!(self.len(), other.len(), "table shapes differ");
        for (dst, src) in self.parts_mut().into_iter().zip(other.parts()) {
            for (d, s) in dst.iter_mut().zip(src.iter()) {
                *d += alpha * s;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&self) -> Tables {
        let mut out = self.clone();
        let lens = self.row_lengths();
        for (part, len) in out.parts_mut().into_iter().zip(lens) {
            for row in part.chunks_mut(len) {
                log_softmax_in_place(row);
            }
        }
        out
    }
}

pub(crate) fn log_softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
    let lse = max + sum.ln();
    for v in row.iter_mut() {
        *v -= lse;
    }
}

/// A single lexicalized rule, addressed by symbol and word ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rule {
    Root {
        nonterminal: usize,
    },
    /// `inheriting` and `dependent` are ids in the shared symbol space.
    Binary {
        parent: usize,
        head_word: usize,
        direction: Direction,
        inheriting: usize,
        dependent: usize,
    },
    Emission {
        preterminal: usize,
        word: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LexGrammar {
    vocab: Vocabulary,
    logits: Tables,
    logp: Tables,
}

impl LexGrammar {
    pub fn new_random(config: &GrammarConfig, vocab: Vocabulary) -> Result<Self> {
        config.validate()?;
        if vocab.is_empty() {
            return Err(Error::Input("vocabulary is empty".into()));
        }
        let mut logits = Tables::zeros(config.num_nonterminals, config.num_preterminals, vocab.len());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, INIT_SCALE).expect("valid normal");
        for part in logits.parts_mut() {
            for v in part.iter_mut() {
                *v = normal.sample(&mut rng);
            }
        }
        Self::from_logits(vocab, logits)
    }

    pub fn from_logits(vocab: Vocabulary, logits: Tables) -> Result<Self> {
        if logits.vocab_size != vocab.len() {
            return Err(Error::Config(format!(
                "tables sized for {} words but vocabulary has {}",
                logits.vocab_size,
                vocab.len()
            )));
        }
        if logits.num_nt == 0 || logits.num_pt == 0 {
            return Err(Error::Config("symbol inventories must be non-empty".into()));
        }
        if !logits.all_finite() {
            return Err(Error::Numeric("non-finite logit".into()));
        }
        let logp = logits.log_softmax();
        Ok(LexGrammar { vocab, logits, logp })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn logits(&self) -> &Tables {
        &self.logits
    }

    pub fn log_probs(&self) -> &Tables {
        &self.logp
    }

    pub fn num_nonterminals(&self) -> usize {
        self.logits.num_nt
    }

    pub fn num_preterminals(&self) -> usize {
        self.logits.num_pt
    }

    pub fn num_symbols(&self) -> usize {
        self.logits.num_symbols()
    }

    pub fn is_nonterminal(&self, symbol: usize) -> bool {
        symbol < self.num_nonterminals()
    }

    /// Replaces the logits with `f(logits)` and renormalizes.
    pub fn update<F: FnOnce(&mut Tables)>(&mut self, f: F) -> Result<()> {
        let mut logits = self.logits.clone();
        f(&mut logits);
        if !logits.all_finite() {
            return Err(Error::Numeric("update produced a non-finite logit".into()));
        }
        self.logp = logits.log_softmax();
        self.logits = logits;
        Ok(())
    }

    #[inline]
    pub fn log_root(&self, a: usize) -> f64 {
        self.logp.root[a]
    }

    #[inline]
    pub fn log_head(&self, a: usize, word: usize, dir: Direction, b: usize) -> f64 {
        self.logp.head[self.logp.head_index(a, word, dir, b)]
    }

    #[inline]
    pub fn log_dep(&self, dir: Direction, a: usize, b: usize, c: usize) -> f64 {
        self.logp.dep[self.logp.dep_index(dir, a, b, c)]
    }

    #[inline]
    pub fn log_emit(&self, t: usize, word: usize) -> f64 {
        self.logp.emit[self.logp.emit_index(t, word)]
    }

    /// Log-probability of one rule; binary rules return the sum of the
    /// head-rule and dependent-rule components.
    pub fn rule_logprob(&self, rule: &Rule) -> Result<f64> {
        let n = self.num_nonterminals();
        let p = self.num_preterminals();
        let s = n + p;
        let v = self.vocab.len();
        let check = |what: &str, id: usize, bound: usize| {
            if id >= bound {
                Err(Error::Index(format!("{what} {id} not below {bound}")))
            } else {
                Ok(())
            }
        };
        match *rule {
            Rule::Root { nonterminal } => {
                check("nonterminal", nonterminal, n)?;
                Ok(self.log_root(nonterminal))
            }
            Rule::Binary {
                parent,
                head_word,
                direction,
                inheriting,
                dependent,
            } => {
                check("parent nonterminal", parent, n)?;
                check("word", head_word, v)?;
                check("inheriting symbol", inheriting, s)?;
                check("dependent symbol", dependent, s)?;
                Ok(self.log_head(parent, head_word, direction, inheriting)
                    + self.log_dep(direction, parent, inheriting, dependent))
            }
            Rule::Emission { preterminal, word } => {
                check("preterminal", preterminal, p)?;
                check("word", word, v)?;
                Ok(self.log_emit(preterminal, word))
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&GrammarFile::from_grammar(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GrammarFile =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("grammar file: {e}")))?;
        file.into_grammar()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct GrammarFile {
    version: String,
    num_nonterminals: usize,
    num_preterminals: usize,
    vocabulary: VocabFile,
    tables: TableFile,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    words: Vec<String>,
    unk_id: usize,
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    root: Vec<f64>,
    head: Vec<Vec<Vec<Vec<f64>>>>,
    dep: Vec<Vec<Vec<Vec<f64>>>>,
    emit: Vec<Vec<f64>>,
}

impl GrammarFile {
    fn from_grammar(g: &LexGrammar) -> Self {
        let t = &g.logits;
        let (n, p, v) = (t.num_nt, t.num_pt, t.vocab_size);
        let s = n + p;
        let head = (0..n)
            .map(|a| {
                (0..v)
                    .map(|w| {
                        Direction::BOTH
                            .iter()
                            .map(|&d| {
                                let start = t.head_index(a, w, d, 0);
                                t.head[start..start + s].to_vec()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let dep = Direction::BOTH
            .iter()
            .map(|&d| {
                (0..n)
                    .map(|a| {
                        (0..s)
                            .map(|b| {
                                let start = t.dep_index(d, a, b, 0);
                                t.dep[start..start + s].to_vec()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let emit = t.emit.chunks(v).map(<[f64]>::to_vec).collect();
        GrammarFile {
            version: GRAMMAR_FORMAT_VERSION.to_string(),
            num_nonterminals: n,
            num_preterminals: p,
            vocabulary: VocabFile {
                words: g.vocab.words.clone(),
                unk_id: g.vocab.unk_id,
            },
            tables: TableFile {
                root: t.root.clone(),
                head,
                dep,
                emit,
            },
        }
    }

    fn into_grammar(self) -> Result<LexGrammar> {
        if self.version != GRAMMAR_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported grammar version {:?} (expected {:?})",
                self.version, GRAMMAR_FORMAT_VERSION
            )));
        }
        let (n, p) = (self.num_nonterminals, self.num_preterminals);
        let vocab = Vocabulary::new(self.vocabulary.words)
            .map_err(|e| Error::Format(format!("vocabulary: {e}")))?;
        if vocab.unk_id != self.vocabulary.unk_id {
            return Err(Error::Format("vocabulary unk_id does not match the word list".into()));
        }
        let v = vocab.len();
        let s = n + p;
        let shape_err = |what: &str| Error::Format(format!("{what} table does not match header sizes"));

        let t = self.tables;
        if t.root.len() != n {
            return Err(shape_err("root"));
        }
        let mut logits = Tables::zeros(n, p, v);
        logits.root = t.root;

        if t.head.len() != n {
            return Err(shape_err("head"));
        }
        logits.head.clear();
        for per_word in t.head {
            if per_word.len() != v {
                return Err(shape_err("head"));
            }
            for per_dir in per_word {
                if per_dir.len() != 2 {
                    return Err(shape_err("head"));
                }
                for row in per_dir {
                    if row.len() != s {
                        return Err(shape_err("head"));
                    }
                    logits.head.extend(row);
                }
            }
        }

        if t.dep.len() != 2 {
            return Err(shape_err("dep"));
        }
        logits.dep.clear();
        for per_parent in t.dep {
            if per_parent.len() != n {
                return Err(shape_err("dep"));
            }
            for per_child in per_parent {
                if per_child.len() != s {
                    return Err(shape_err("dep"));
                }
                for row in per_child {
                    if row.len() != s {
                        return Err(shape_err("dep"));
                    }
                    logits.dep.extend(row);
                }
            }
        }

        if t.emit.len() != p || t.emit.iter().any(|row| row.len() != v) {
            return Err(shape_err("emission"));
        }
        logits.emit = t.emit.into_iter().flatten().collect();

        LexGrammar::from_logits(vocab, logits).map_err(|e| Error::Format(e.to_string()))
    }
}
