//! Concreteness priors: the root-word potential and the rewarded-span
//! potential added to a tree's score.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::error::{Error, Result};

/// How raw 1–5 ratings are mapped into `[0, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    /// `raw / 5`
    #[default]
    DivideBy5,
    /// `(raw - 1) / 4`
    Affine1To5,
}

impl Normalization {
    pub fn apply(self, raw: f64) -> f64 {
        match self {
            Normalization::DivideBy5 => raw / 5.0,
            Normalization::Affine1To5 => (raw - 1.0) / 4.0,
        }
    }
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "divide_by_5" => Ok(Normalization::DivideBy5),
            "affine_1_5" => Ok(Normalization::Affine1To5),
            other => Err(Error::Config(format!("unknown normalization {other:?}"))),
        }
    }
}

/// Lemma → normalized concreteness. Absent lemmas score exactly 0.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConcretenessLexicon {
    scores: HashMap<String, f64>,
    mode: Normalization,
}

impl ConcretenessLexicon {
    /// Parses `lemma<TAB>raw` rows. Blank lines and lines starting with `#`
    /// are ignored; a repeated lemma keeps its last score.
    pub fn parse(text: &str, path: &str, mode: Normalization) -> Result<Self> {
        let mut scores = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let (Some(lemma), Some(raw), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(Error::parse(path, lineno, "expected lemma<TAB>score"));
            };
            let lemma = lemma.trim();
            if lemma.is_empty() {
                return Err(Error::parse(path, lineno, "empty lemma"));
            }
            let raw: f64 = raw
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("score {raw:?} is not a number")))?;
            if !(1.0..=5.0).contains(&raw) {
                return Err(Error::parse(path, lineno, format!("score {raw} outside [1, 5]")));
            }
            scores.insert(lemma.to_lowercase(), mode.apply(raw));
        }
        Ok(ConcretenessLexicon { scores, mode })
    }

    pub fn load(path: impl AsRef<Path>, mode: Normalization) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string(), mode)
    }

    pub fn from_scores<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: AsRef<str>,
    {
        let mut scores = HashMap::new();
        for (lemma, score) in pairs {
            if !(0.0..=1.0).contains(&score) {
                return Err(Error::Input(format!("normalized score {score} outside [0, 1]")));
            }
            scores.insert(lemma.as_ref().to_lowercase(), score);
        }
        Ok(ConcretenessLexicon {
            scores,
            mode: Normalization::default(),
        })
    }

    pub fn lookup(&self, lemma: &str) -> f64 {
        self.scores.get(&lemma.to_lowercase()).copied().unwrap_or(0.0)
    }

    pub fn mode(&self) -> Normalization {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// A rewarded constituent: inclusive token bounds plus the required head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RewardedSpan {
    pub start: usize,
    pub end: usize,
    pub head: usize,
}

impl RewardedSpan {
    pub fn new(start: usize, end: usize, head: usize) -> Result<Self> {
        if start >= end || (head != start && head != end) {
            return Err(Error::Input(format!(
                "rewarded span ({start},{end},{head}) must have start < end and head at an endpoint"
            )));
        }
        Ok(RewardedSpan { start, end, head })
    }

    pub fn triple(self) -> (usize, usize, usize) {
        (self.start, self.end, self.head)
    }
}

#[derive(Serialize, Deserialize)]
struct SpanLine {
    sentence_id: String,
    spans: Vec<[usize; 3]>,
}

/// Rewarded spans per sentence id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RewardedSpanSet {
    by_sentence: BTreeMap<String, BTreeSet<RewardedSpan>>,
}

impl RewardedSpanSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, sentence_id: &str, span: RewardedSpan) {
        self.by_sentence
            .entry(sentence_id.to_string())
            .or_default()
            .insert(span);
    }

    /// Registers a sentence with no spans, so it still appears on output.
    pub fn touch(&mut self, sentence_id: &str) {
        self.by_sentence.entry(sentence_id.to_string()).or_default();
    }

    pub fn get(&self, sentence_id: &str) -> Option<&BTreeSet<RewardedSpan>> {
        self.by_sentence.get(sentence_id)
    }

    pub fn contains(&self, sentence_id: &str, start: usize, end: usize, head: usize) -> bool {
        self.get(sentence_id)
            .is_some_and(|set| set.contains(&RewardedSpan { start, end, head }))
    }

    pub fn sentence_ids(&self) -> impl Iterator<Item = &str> {
        self.by_sentence.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.by_sentence.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn parse_jsonl(text: &str, path: &str) -> Result<Self> {
        let mut set = RewardedSpanSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: SpanLine =
                serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            if set.by_sentence.contains_key(&rec.sentence_id) {
                return Err(Error::parse(path, i + 1, format!("duplicate sentence id {:?}", rec.sentence_id)));
            }
            set.touch(&rec.sentence_id);
            for [s, e, h] in rec.spans {
                let span = RewardedSpan::new(s, e, h).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
                set.insert(&rec.sentence_id, span);
            }
        }
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::parse_jsonl(&text, &path.display().to_string())
    }

    /// JSON lines in the given sentence order; ids without an entry are
    /// written with an empty span list.
    pub fn to_jsonl<'a, I: IntoIterator<Item = &'a str>>(&self, order: I) -> Result<String> {
        let mut out = String::new();
        for id in order {
            let spans = self
                .get(id)
                .map(|s| s.iter().map(|sp| [sp.start, sp.end, sp.head]).collect())
                .unwrap_or_default();
            out.push_str(&serde_json::to_string(&SpanLine {
                sentence_id: id.to_string(),
                spans,
            })?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Where the span potential is applied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Placement {
    /// Only at the whole-sentence constituent.
    Root,
    /// At every constituent matching a rewarded triple.
    #[default]
    NonRoot,
}

impl std::str::FromStr for Placement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "root" => Ok(Placement::Root),
            "non_root" => Ok(Placement::NonRoot),
            other => Err(Error::Config(format!("unknown placement {other:?}"))),
        }
    }
}

/// Whether potentials are being built for training or for decoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Train,
    Inference,
}

pub const LAMBDA_C_DEFAULT: f64 = 1.0;
pub const LAMBDA_V_DEFAULT: f64 = 1.0;
pub const LAMBDA_COMBINED_DEFAULT: f64 = 0.25;

#[derive(Clone, Debug, PartialEq)]
pub struct PriorBundle {
    lambda_c: f64,
    lambda_v: f64,
    lexicon: Option<ConcretenessLexicon>,
    spans: Option<RewardedSpanSet>,
    pub placement: Placement,
    pub inference_priors_enabled: bool,
}

impl Default for PriorBundle {
    fn default() -> Self {
        PriorBundle::none()
    }
}

impl PriorBundle {
    /// Both weights must be nonnegative and finite. A weight whose resource
    /// is absent is forced to zero.
    pub fn new(
        lambda_c: f64,
        lambda_v: f64,
        lexicon: Option<ConcretenessLexicon>,
        spans: Option<RewardedSpanSet>,
    ) -> Result<Self> {
        for (name, v) in [("lambda_c", lambda_c), ("lambda_v", lambda_v)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a nonnegative finite number, got {v}")));
            }
        }
        Ok(PriorBundle {
            lambda_c: if lexicon.is_some() { lambda_c } else { 0.0 },
            lambda_v: if spans.is_some() { lambda_v } else { 0.0 },
            lexicon,
            spans,
            placement: Placement::default(),
            inference_priors_enabled: true,
        })
    }

    pub fn none() -> Self {
        PriorBundle::new(0.0, 0.0, None, None).expect("zero weights are valid")
    }

    pub fn with_placement(mut self, placement: Placement) -> Self {
        self.placement = placement;
        self
    }

    pub fn with_inference_priors(mut self, enabled: bool) -> Self {
        self.inference_priors_enabled = enabled;
        self
    }

    pub fn lambda_c(&self) -> f64 {
        self.lambda_c
    }

    pub fn lambda_v(&self) -> f64 {
        self.lambda_v
    }

    pub fn lexicon(&self) -> Option<&ConcretenessLexicon> {
        self.lexicon.as_ref()
    }

    pub fn spans(&self) -> Option<&RewardedSpanSet> {
        self.spans.as_ref()
    }

    /// `λ_c · conc(lemma at head_position)`.
    pub fn root_potential(&self, sentence: &Sentence, head_position: usize) -> f64 {
        match &self.lexicon {
            Some(lex) if self.lambda_c != 0.0 => {
                self.lambda_c * lex.lookup(&sentence.lemmas[head_position])
            }
            _ => 0.0,
        }
    }

    /// `λ_v` when the triple is rewarded for this sentence, else 0.
    pub fn span_potential(&self, sentence_id: &str, start: usize, end: usize, head: usize) -> f64 {
        match &self.spans {
            Some(spans) if spans.contains(sentence_id, start, end, head) => self.lambda_v,
            _ => 0.0,
        }
    }

    /// Resolves the bundle against one sentence. At inference time with
    /// priors disabled, every potential is zero.
    pub fn potentials(&self, sentence: &Sentence, phase: Phase) -> SentencePotentials {
        let n = sentence.len();
        if phase == Phase::Inference && !self.inference_priors_enabled {
            return SentencePotentials::zeros(n);
        }
        let root = (0..n).map(|h| self.root_potential(sentence, h)).collect();
        let mut spans = HashMap::new();
        if self.lambda_v != 0.0 {
            if let Some(set) = self.spans.as_ref().and_then(|s| s.get(&sentence.id)) {
                for sp in set {
                    if sp.end >= n {
                        continue;
                    }
                    if self.placement == Placement::Root && !(sp.start == 0 && sp.end + 1 == n) {
                        continue;
                    }
                    spans.insert(sp.triple(), self.lambda_v);
                }
            }
        }
        SentencePotentials { root, spans }
    }
}

/// Potentials resolved for one sentence: `root[h]` is added when `h` heads
/// the sentence, `spans[(i, j, h)]` when that constituent is built.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SentencePotentials {
    pub root: Vec<f64>,
    pub spans: HashMap<(usize, usize, usize), f64>,
}

impl SentencePotentials {
    pub fn zeros(n: usize) -> Self {
        SentencePotentials {
            root: vec![0.0; n],
            spans: HashMap::new(),
        }
    }

    #[inline]
    pub fn span(&self, start: usize, end: usize, head: usize) -> f64 {
        if self.spans.is_empty() {
            return 0.0;
        }
        self.spans.get(&(start, end, head)).copied().unwrap_or(0.0)
    }

    #[inline]
    pub fn root(&self, head: usize) -> f64 {
        self.root[head]
    }

    pub fn is_rewarded(&self, start: usize, end: usize, head: usize) -> bool {
        self.spans.contains_key(&(start, end, head))
    }
}
