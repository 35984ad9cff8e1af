//! Caption ↔ semantic-role-label alignment and rewarded-span generation.
//!
//! Captions are stripped of stop words (original positions are kept),
//! labels are flattened to `[activity, participants...]`, and the two are
//! aligned with Dice scores over corpus-level co-occurrence followed by
//! greedy competitive linking. The predicate (the activity) is then coupled
//! with each aligned argument to form rewarded spans headed by the
//! predicate.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusRecord;
use crate::error::{Error, Result};
use crate::priors::{RewardedSpan, RewardedSpanSet};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StopWords(HashSet<String>);

impl StopWords {
    pub fn new<I: IntoIterator<Item = S>, S: AsRef<str>>(words: I) -> Self {
        StopWords(words.into_iter().map(|w| w.as_ref().to_lowercase()).collect())
    }

    /// One word per line; blank lines and `#` comments ignored.
    pub fn parse(text: &str) -> Self {
        StopWords::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::parse(&fs::read_to_string(path)?))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CaptionRecord {
    pub sentence_id: String,
    pub original_tokens: Vec<String>,
    /// Lowercased lemmas of the non-stop-word tokens.
    pub content_tokens: Vec<String>,
    /// `position_map[k]` is the original index of `content_tokens[k]`.
    pub position_map: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub sentence_id: String,
    pub activity: String,
    pub participants: Vec<String>,
}

impl LabelRecord {
    /// Lowercases every field, strips `role:` / `role=` prefixes and drops
    /// empty participants.
    pub fn normalized(&self) -> Result<LabelRecord> {
        fn strip(s: &str) -> String {
            let s = s.trim();
            let value = s.rsplit([':', '=']).next().unwrap_or(s);
            value.trim().to_lowercase()
        }
        let activity = strip(&self.activity);
        if activity.is_empty() {
            return Err(Error::Input(format!("labels for {:?} have no activity", self.sentence_id)));
        }
        Ok(LabelRecord {
            sentence_id: self.sentence_id.clone(),
            activity,
            participants: self
                .participants
                .iter()
                .map(|p| strip(p))
                .filter(|p| !p.is_empty())
                .collect(),
        })
    }

    /// Activity first, then participants in input order.
    pub fn sequence(&self) -> Vec<&str> {
        std::iter::once(self.activity.as_str())
            .chain(self.participants.iter().map(String::as_str))
            .collect()
    }
}

pub fn parse_labels(text: &str, path: &str) -> Result<Vec<LabelRecord>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: LabelRecord = serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        if !seen.insert(rec.sentence_id.clone()) {
            return Err(Error::parse(path, i + 1, format!("duplicate sentence id {:?}", rec.sentence_id)));
        }
        out.push(rec.normalized().map_err(|e| Error::parse(path, i + 1, e.to_string()))?);
    }
    Ok(out)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<LabelRecord>> {
    let path = path.as_ref();
    parse_labels(&fs::read_to_string(path)?, &path.display().to_string())
}

/// Removes stop words (matched on the lowercased surface token) and keeps
/// the lowercased lemma of each remaining token. `None` when nothing is
/// left.
pub fn preprocess(caption: &CorpusRecord, labels: &LabelRecord, stopwords: &StopWords) -> Result<Option<(CaptionRecord, LabelRecord)>> {
    let labels = labels.normalized()?;
    let mut content_tokens = Vec::new();
    let mut position_map = Vec::new();
    for (pos, (tok, lemma)) in caption.tokens.iter().zip(&caption.lemmas).enumerate() {
        if stopwords.contains(tok) {
            continue;
        }
        content_tokens.push(lemma.to_lowercase());
        position_map.push(pos);
    }
    if content_tokens.is_empty() {
        log::warn!("caption {:?} has no content words after stop-word removal; skipped", caption.id);
        return Ok(None);
    }
    Ok(Some((
        CaptionRecord {
            sentence_id: caption.id.clone(),
            original_tokens: caption.tokens.clone(),
            content_tokens,
            position_map,
        },
        labels,
    )))
}

/// Presence-based co-occurrence counts: each type counts once per record.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CoocTable {
    caption_counts: HashMap<String, usize>,
    label_counts: HashMap<String, usize>,
    joint: HashMap<(String, String), usize>,
    records: usize,
}

impl CoocTable {
    pub fn caption_count(&self, s: &str) -> usize {
        self.caption_counts.get(s).copied().unwrap_or(0)
    }

    pub fn label_count(&self, t: &str) -> usize {
        self.label_counts.get(t).copied().unwrap_or(0)
    }

    pub fn cooc(&self, s: &str, t: &str) -> usize {
        self.joint.get(&(s.to_string(), t.to_string())).copied().unwrap_or(0)
    }

    pub fn records(&self) -> usize {
        self.records
    }

    /// `2 · cooc(s, t) / (count(s) + count(t))`
    pub fn dice(&self, s: &str, t: &str) -> f64 {
        let c = self.cooc(s, t);
        if c == 0 {
            return 0.0;
        }
        2.0 * c as f64 / (self.caption_count(s) + self.label_count(t)) as f64
    }
}

pub fn build_cooc<'a, I>(corpus: I) -> CoocTable
where
    I: IntoIterator<Item = (&'a CaptionRecord, &'a LabelRecord)>,
{
    let mut table = CoocTable::default();
    for (cap, lab) in corpus {
        table.records += 1;
        let cap_types: BTreeSet<&str> = cap.content_tokens.iter().map(String::as_str).collect();
        let lab_types: BTreeSet<&str> = lab.sequence().into_iter().collect();
        for s in &cap_types {
            *table.caption_counts.entry(s.to_string()).or_default() += 1;
        }
        for t in &lab_types {
            *table.label_counts.entry(t.to_string()).or_default() += 1;
        }
        for s in &cap_types {
            for t in &lab_types {
                *table.joint.entry((s.to_string(), t.to_string())).or_default() += 1;
            }
        }
    }
    table
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentPair {
    #[serde(rename = "caption")]
    pub caption_token: String,
    #[serde(rename = "label")]
    pub label_token: String,
    #[serde(rename = "score")]
    pub dice_score: f64,
    /// Index into the original (un-filtered) caption.
    #[serde(rename = "caption_pos")]
    pub caption_position: usize,
    /// Index into the activity-first label sequence.
    #[serde(rename = "label_idx")]
    pub label_position: usize,
}

/// Greedy competitive linking: repeatedly take the best-scoring pair whose
/// caption position and label slot are both still free. Ties go to the
/// lower caption position, then the lower label index.
pub fn competitive_link(caption: &CaptionRecord, labels: &LabelRecord, cooc: &CoocTable) -> Vec<AlignmentPair> {
    let seq = labels.sequence();
    let mut candidates = Vec::new();
    for (k, s) in caption.content_tokens.iter().enumerate() {
        for (li, t) in seq.iter().enumerate() {
            let score = cooc.dice(s, t);
            if score > 0.0 {
                candidates.push((score, caption.position_map[k], li, k));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut used_caption = HashSet::new();
    let mut used_label = HashSet::new();
    let mut out = Vec::new();
    for (score, pos, li, k) in candidates {
        if used_caption.contains(&pos) || used_label.contains(&li) {
            continue;
        }
        used_caption.insert(pos);
        used_label.insert(li);
        out.push(AlignmentPair {
            caption_token: caption.content_tokens[k].clone(),
            label_token: seq[li].to_string(),
            dice_score: score,
            caption_position: pos,
            label_position: li,
        });
    }
    out
}

/// How records whose predicate is unaligned are treated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpanMode {
    /// The predicate position falls back to 0, the initial value of the
    /// position table.
    #[default]
    Coupling,
    /// Records with an unaligned predicate produce no spans.
    Combined,
}

impl std::str::FromStr for SpanMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coupling" => Ok(SpanMode::Coupling),
            "combined" => Ok(SpanMode::Combined),
            other => Err(Error::Config(format!("unknown span mode {other:?}"))),
        }
    }
}

/// Couples the predicate with every aligned argument. Each span runs from
/// the earlier to the later of the two positions and is headed by the
/// predicate; arguments are visited in ascending signed distance from it.
pub fn generate_rewarded_spans(labels: &LabelRecord, aligns: &[AlignmentPair], mode: SpanMode) -> Vec<RewardedSpan> {
    let slots = labels.sequence().len();
    let mut position: Vec<Option<usize>> = vec![None; slots];
    for a in aligns {
        if a.label_position < slots {
            position[a.label_position] = Some(a.caption_position);
        }
    }
    let predicate = match (position[0], mode) {
        (Some(p), _) => p,
        (None, SpanMode::Coupling) => 0,
        (None, SpanMode::Combined) => return Vec::new(),
    };
    let mut args: Vec<(isize, usize, usize)> = position
        .iter()
        .enumerate()
        .skip(1)
        .filter_map(|(i, p)| p.map(|p| (p as isize - predicate as isize, i, p)))
        .filter(|(d, _, _)| *d != 0)
        .collect();
    args.sort();
    let mut out: Vec<RewardedSpan> = Vec::new();
    for (d, _, arg) in args {
        let span = if d < 0 {
            RewardedSpan {
                start: arg,
                end: predicate,
                head: predicate,
            }
        } else {
            RewardedSpan {
                start: predicate,
                end: arg,
                head: predicate,
            }
        };
        if !out.contains(&span) {
            out.push(span);
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct AlignmentLine {
    sentence_id: String,
    pairs: Vec<AlignmentPair>,
}

/// Alignments for a whole corpus, keyed by sentence id in caption order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorpusAlignment {
    pub records: Vec<(String, Vec<AlignmentPair>)>,
}

impl CorpusAlignment {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for (id, pairs) in &self.records {
            out.push_str(&serde_json::to_string(&AlignmentLine {
                sentence_id: id.clone(),
                pairs: pairs.clone(),
            })?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn parse_jsonl(text: &str, path: &str) -> Result<Self> {
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: AlignmentLine =
                serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            if !seen.insert(rec.sentence_id.clone()) {
                return Err(Error::parse(path, i + 1, format!("duplicate sentence id {:?}", rec.sentence_id)));
            }
            records.push((rec.sentence_id, rec.pairs));
        }
        Ok(CorpusAlignment { records })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse_jsonl(&fs::read_to_string(path)?, &path.display().to_string())
    }
}

fn join_labels<'a>(captions: &[CorpusRecord], labels: &'a [LabelRecord]) -> Result<HashMap<&'a str, &'a LabelRecord>> {
    let by_id: HashMap<&str, &LabelRecord> = labels.iter().map(|l| (l.sentence_id.as_str(), l)).collect();
    let caption_ids: HashSet<&str> = captions.iter().map(|c| c.id.as_str()).collect();
    if let Some(l) = labels.iter().find(|l| !caption_ids.contains(l.sentence_id.as_str())) {
        return Err(Error::Input(format!("labels reference unknown sentence id {:?}", l.sentence_id)));
    }
    if let Some(c) = captions.iter().find(|c| !by_id.contains_key(c.id.as_str())) {
        return Err(Error::Input(format!("caption {:?} has no label record", c.id)));
    }
    Ok(by_id)
}

/// Preprocesses, counts co-occurrences over the corpus and links each
/// record. Records emptied by stop-word removal are omitted.
pub fn align_corpus(captions: &[CorpusRecord], labels: &[LabelRecord], stopwords: &StopWords) -> Result<CorpusAlignment> {
    let by_id = join_labels(captions, labels)?;
    let mut prepared = Vec::new();
    for cap in captions {
        if let Some(pair) = preprocess(cap, by_id[cap.id.as_str()], stopwords)? {
            prepared.push(pair);
        }
    }
    let cooc = build_cooc(prepared.iter().map(|(c, l)| (c, l)));
    let records = prepared
        .iter()
        .map(|(c, l)| (c.sentence_id.clone(), competitive_link(c, l, &cooc)))
        .collect();
    Ok(CorpusAlignment { records })
}

/// Rewarded spans for every aligned record. Every id must resolve to a
/// caption and a label record; captions without alignments get no spans.
pub fn spans_for_corpus(
    captions: &[CorpusRecord],
    labels: &[LabelRecord],
    alignment: &CorpusAlignment,
    mode: SpanMode,
) -> Result<RewardedSpanSet> {
    let by_id = join_labels(captions, labels)?;
    let lengths: BTreeMap<&str, usize> = captions.iter().map(|c| (c.id.as_str(), c.len())).collect();
    let mut set = RewardedSpanSet::new();
    for (id, pairs) in &alignment.records {
        let Some(&n) = lengths.get(id.as_str()) else {
            return Err(Error::Input(format!("alignment references unknown sentence id {id:?}")));
        };
        let lab = by_id[id.as_str()];
        let slots = lab.sequence().len();
        for p in pairs {
            if p.caption_position >= n || p.label_position >= slots {
                return Err(Error::Input(format!(
                    "alignment for {id:?} points outside the caption or label sequence"
                )));
            }
        }
        set.touch(id);
        for span in generate_rewarded_spans(lab, pairs, mode) {
            set.insert(id, span);
        }
    }
    let aligned: HashSet<&str> = alignment.records.iter().map(|(id, _)| id.as_str()).collect();
    for c in captions {
        if !aligned.contains(c.id.as_str()) {
            log::info!("caption {:?} has no alignment record; no rewarded spans", c.id);
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn caption(id: &str, text: &str) -> CorpusRecord {
        let tokens: Vec<String> = text.split(' ').map(str::to_string).collect();
        CorpusRecord {
            id: id.into(),
            lemmas: tokens.clone(),
            tokens,
        }
    }

    fn labels(id: &str, activity: &str, participants: &[&str]) -> LabelRecord {
        LabelRecord {
            sentence_id: id.into(),
            activity: activity.into(),
            participants: participants.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn stop() -> StopWords {
        StopWords::new(["a", "with", "and", "the", "of", "in"])
    }

    #[test]
    fn stop_words_removed_positions_kept() {
        let cap = caption("k", "a kitchen with a stove oven and refrigerator");
        let lab = labels("k", "overflowing", &["refrigerator", "kitchen", "water"]);
        let (c, l) = preprocess(&cap, &lab, &stop()).unwrap().unwrap();
        assert_eq!(c.content_tokens, vec!["kitchen", "stove", "oven", "refrigerator"]);
        assert_eq!(c.position_map, vec![1, 4, 5, 7]);
        assert_eq!(l.sequence(), vec!["overflowing", "refrigerator", "kitchen", "water"]);
    }

    #[test]
    fn empty_stopword_list_is_identity() {
        let cap = caption("k", "a dog");
        let (c, _) = preprocess(&cap, &labels("k", "run", &[]), &StopWords::default()).unwrap().unwrap();
        assert_eq!(c.content_tokens, vec!["a", "dog"]);
        assert_eq!(c.position_map, vec![0, 1]);
    }

    #[test]
    fn all_stop_words_skips_record() {
        let cap = caption("k", "a the");
        assert!(preprocess(&cap, &labels("k", "run", &[]), &stop()).unwrap().is_none());
    }

    #[test]
    fn role_names_are_stripped() {
        let lab = labels("x", "Eat", &["agent:girl", "food=cake", ""]).normalized().unwrap();
        assert_eq!(lab.sequence(), vec!["eat", "girl", "cake"]);
    }

    fn prepared(pairs: &[(CorpusRecord, LabelRecord)]) -> Vec<(CaptionRecord, LabelRecord)> {
        pairs
            .iter()
            .map(|(c, l)| preprocess(c, l, &StopWords::default()).unwrap().unwrap())
            .collect()
    }

    #[test]
    fn dice_examples() {
        let p = prepared(&[(caption("1", "dog"), labels("1", "dog", &[]))]);
        let t = build_cooc(p.iter().map(|(c, l)| (c, l)));
        assert_eq!(t.dice("dog", "dog"), 1.0);

        let p = prepared(&[
            (caption("1", "dog"), labels("1", "dog", &[])),
            (caption("2", "dog dog"), labels("2", "cat", &[])),
        ]);
        let t = build_cooc(p.iter().map(|(c, l)| (c, l)));
        assert_eq!(t.caption_count("dog"), 2);
        assert!((t.dice("dog", "dog") - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(t.dice("cat", "dog"), 0.0);
        assert!(t.cooc("dog", "cat") <= t.caption_count("dog").min(t.label_count("cat")));
    }

    #[test]
    fn disjoint_vocabularies_link_nothing() {
        let p = prepared(&[
            (caption("1", "dog"), labels("1", "run", &[])),
            (caption("2", "cat"), labels("2", "sit", &[])),
        ]);
        let t = build_cooc(p.iter().map(|(c, l)| (c, l)));
        let p2 = prepared(&[(caption("3", "fish"), labels("3", "swim", &[]))]);
        assert!(competitive_link(&p2[0].0, &p2[0].1, &t).is_empty());
    }

    #[test]
    fn ties_prefer_lower_caption_position_then_label_index() {
        // "x y" against labels [x, y]: all four pairs score 1.0
        let p = prepared(&[(caption("1", "x y"), labels("1", "x", &["y"]))]);
        let t = build_cooc(p.iter().map(|(c, l)| (c, l)));
        let links = competitive_link(&p[0].0, &p[0].1, &t);
        let got: Vec<(usize, usize)> = links.iter().map(|a| (a.caption_position, a.label_position)).collect();
        assert_eq!(got, vec![(0, 0), (1, 1)]);
        let again = competitive_link(&p[0].0, &p[0].1, &t);
        assert_eq!(links, again);
    }

    #[test]
    fn algorithm_hand_trace() {
        // a girl eating cake; labels [eat, girl, cake]
        let lab = labels("g", "eat", &["girl", "cake"]);
        let aligns = vec![
            AlignmentPair {
                caption_token: "eat".into(),
                label_token: "eat".into(),
                dice_score: 1.0,
                caption_position: 2,
                label_position: 0,
            },
            AlignmentPair {
                caption_token: "girl".into(),
                label_token: "girl".into(),
                dice_score: 1.0,
                caption_position: 1,
                label_position: 1,
            },
            AlignmentPair {
                caption_token: "cake".into(),
                label_token: "cake".into(),
                dice_score: 1.0,
                caption_position: 3,
                label_position: 2,
            },
        ];
        let spans = generate_rewarded_spans(&lab, &aligns, SpanMode::Coupling);
        let triples: Vec<_> = spans.iter().map(|s| s.triple()).collect();
        assert_eq!(triples, vec![(1, 2, 2), (2, 3, 2)]);

        // predicate unaligned
        let args_only = &aligns[1..];
        assert!(generate_rewarded_spans(&lab, args_only, SpanMode::Combined).is_empty());
        let fallback: Vec<_> = generate_rewarded_spans(&lab, args_only, SpanMode::Coupling)
            .iter()
            .map(|s| s.triple())
            .collect();
        assert_eq!(fallback, vec![(0, 1, 0), (0, 3, 0)]);

        // no arguments aligned
        assert!(generate_rewarded_spans(&lab, &aligns[..1], SpanMode::Coupling).is_empty());
    }

    #[test]
    fn argument_on_predicate_position_is_skipped() {
        let lab = labels("g", "eat", &["girl"]);
        let aligns = vec![
            AlignmentPair {
                caption_token: "eat".into(),
                label_token: "eat".into(),
                dice_score: 1.0,
                caption_position: 0,
                label_position: 0,
            },
            AlignmentPair {
                caption_token: "girl".into(),
                label_token: "girl".into(),
                dice_score: 1.0,
                caption_position: 0,
                label_position: 1,
            },
        ];
        assert!(generate_rewarded_spans(&lab, &aligns, SpanMode::Coupling).is_empty());
    }

    #[test]
    fn dangling_ids_are_errors() {
        let caps = vec![caption("1", "dog runs")];
        let labs = vec![labels("2", "run", &["dog"])];
        assert!(align_corpus(&caps, &labs, &stop()).is_err());
        let labs = vec![labels("1", "run", &["dog"]), labels("3", "x", &[])];
        assert!(align_corpus(&caps, &labs, &stop()).is_err());
    }
}
