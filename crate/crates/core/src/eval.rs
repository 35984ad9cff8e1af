//! Unlabeled bracketing F1 (micro and macro), directed and undirected
//! attachment scores, and the distribution of predicted roots over
//! reference part-of-speech tags.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{Bracketed, DependencyParse};

pub type SpanSet = BTreeSet<(usize, usize)>;

/// Micro-level bracket counts; merging two corpora adds the counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SpanCounts {
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl SpanCounts {
    pub fn of(gold: &SpanSet, pred: &SpanSet) -> Self {
        SpanCounts {
            matched: gold.intersection(pred).count(),
            predicted: pred.len(),
            gold: gold.len(),
        }
    }

    pub fn merge(self, other: SpanCounts) -> SpanCounts {
        SpanCounts {
            matched: self.matched + other.matched,
            predicted: self.predicted + other.predicted,
            gold: self.gold + other.gold,
        }
    }

    pub fn f1(&self) -> f64 {
        if self.predicted == 0 && self.gold == 0 {
            return 1.0;
        }
        if self.matched == 0 {
            return 0.0;
        }
        let p = self.matched as f64 / self.predicted as f64;
        let r = self.matched as f64 / self.gold as f64;
        2.0 * p * r / (p + r)
    }
}

fn check_lengths<A, B>(gold: &[A], pred: &[B]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::Input(format!(
            "{} gold sentences but {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::Input("cannot evaluate an empty corpus".into()));
    }
    Ok(())
}

pub fn span_counts(gold: &[SpanSet], pred: &[SpanSet]) -> Result<SpanCounts> {
    check_lengths(gold, pred)?;
    Ok(gold
        .iter()
        .zip(pred)
        .map(|(g, p)| SpanCounts::of(g, p))
        .fold(SpanCounts::default(), SpanCounts::merge))
}

/// Precision and recall pooled over the corpus before the harmonic mean.
pub fn corpus_f1(gold: &[SpanSet], pred: &[SpanSet]) -> Result<f64> {
    Ok(span_counts(gold, pred)?.f1())
}

/// Mean of per-sentence F1; a sentence with no gold and no predicted spans
/// scores 1.
pub fn sentence_f1(gold: &[SpanSet], pred: &[SpanSet]) -> Result<f64> {
    check_lengths(gold, pred)?;
    let total: f64 = gold.iter().zip(pred).map(|(g, p)| SpanCounts::of(g, p).f1()).sum();
    Ok(total / gold.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AttachmentCounts {
    pub directed: usize,
    pub undirected: usize,
    pub tokens: usize,
}

impl AttachmentCounts {
    pub fn of(gold: &DependencyParse, pred: &DependencyParse) -> Result<Self> {
        if gold.len() != pred.len() {
            return Err(Error::Input(format!(
                "gold parse has {} tokens, prediction has {}",
                gold.len(),
                pred.len()
            )));
        }
        let edges: HashSet<(usize, usize)> = gold
            .head_of
            .iter()
            .enumerate()
            .filter_map(|(d, h)| h.map(|h| (d.min(h), d.max(h))))
            .collect();
        let mut c = AttachmentCounts {
            tokens: gold.len(),
            ..Default::default()
        };
        for (d, (g, p)) in gold.head_of.iter().zip(&pred.head_of).enumerate() {
            if g == p {
                c.directed += 1;
            }
            let hit = match p {
                None => g.is_none(),
                Some(h) => edges.contains(&(d.min(*h), d.max(*h))),
            };
            if hit {
                c.undirected += 1;
            }
        }
        Ok(c)
    }

    pub fn merge(self, other: AttachmentCounts) -> AttachmentCounts {
        AttachmentCounts {
            directed: self.directed + other.directed,
            undirected: self.undirected + other.undirected,
            tokens: self.tokens + other.tokens,
        }
    }

    pub fn das(&self) -> f64 {
        self.directed as f64 / self.tokens as f64
    }

    pub fn uas(&self) -> f64 {
        self.undirected as f64 / self.tokens as f64
    }
}

pub fn attachment_counts(gold: &[DependencyParse], pred: &[DependencyParse]) -> Result<AttachmentCounts> {
    check_lengths(gold, pred)?;
    let mut total = AttachmentCounts::default();
    for (g, p) in gold.iter().zip(pred) {
        total = total.merge(AttachmentCounts::of(g, p)?);
    }
    if total.tokens == 0 {
        return Err(Error::Input("cannot evaluate an empty corpus".into()));
    }
    Ok(total)
}

/// Fraction of tokens whose predicted governor (or ROOT) matches gold.
pub fn das(gold: &[DependencyParse], pred: &[DependencyParse]) -> Result<f64> {
    Ok(attachment_counts(gold, pred)?.das())
}

/// Fraction of tokens whose predicted edge appears in gold with either
/// orientation. ROOT attachments only count when gold agrees.
pub fn uas(gold: &[DependencyParse], pred: &[DependencyParse]) -> Result<f64> {
    Ok(attachment_counts(gold, pred)?.uas())
}

/// Normalized tally of predicted roots by reference POS tag.
pub fn root_pos_distribution(pred: &[DependencyParse], tags: &[Vec<String>]) -> Result<BTreeMap<String, f64>> {
    check_lengths(tags, pred)?;
    let mut tally: BTreeMap<String, usize> = BTreeMap::new();
    for (i, (p, t)) in pred.iter().zip(tags).enumerate() {
        if p.len() != t.len() {
            return Err(Error::Input(format!(
                "sentence {i}: {} POS tags for {} tokens",
                t.len(),
                p.len()
            )));
        }
        let root = p
            .root()
            .ok_or_else(|| Error::Structure(format!("sentence {i} has no root")))?;
        *tally.entry(t[root].clone()).or_default() += 1;
    }
    let n = pred.len() as f64;
    Ok(tally.into_iter().map(|(k, v)| (k, v as f64 / n)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub corpus_f1: f64,
    pub sentence_f1: f64,
    pub das: f64,
    pub uas: f64,
    pub n_sentences: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_pos_distribution: Option<BTreeMap<String, f64>>,
}

impl EvalReport {
    pub fn compute(
        gold_spans: &[SpanSet],
        pred_spans: &[SpanSet],
        gold_deps: &[DependencyParse],
        pred_deps: &[DependencyParse],
        pos: Option<&[Vec<String>]>,
    ) -> Result<Self> {
        let att = attachment_counts(gold_deps, pred_deps)?;
        check_lengths(gold_spans, gold_deps)?;
        Ok(EvalReport {
            corpus_f1: corpus_f1(gold_spans, pred_spans)?,
            sentence_f1: sentence_f1(gold_spans, pred_spans)?,
            das: att.das(),
            uas: att.uas(),
            n_sentences: gold_spans.len(),
            root_pos_distribution: pos.map(|t| root_pos_distribution(pred_deps, t)).transpose()?,
        })
    }

    pub fn to_table(&self) -> String {
        let mut rows = vec![
            ("corpus_f1".to_string(), format!("{:.4}", self.corpus_f1)),
            ("sentence_f1".to_string(), format!("{:.4}", self.sentence_f1)),
            ("das".to_string(), format!("{:.4}", self.das)),
            ("uas".to_string(), format!("{:.4}", self.uas)),
            ("n_sentences".to_string(), self.n_sentences.to_string()),
        ];
        if let Some(dist) = &self.root_pos_distribution {
            for (tag, frac) in dist {
                rows.push((format!("root[{tag}]"), format!("{:.4}", frac)));
            }
        }
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v:>8}");
        }
        out
    }
}

/// Gold trees, one per line. A line may be prefixed with `id<TAB>`.
pub fn parse_gold_trees(text: &str, path: &str, exclude_trivial: bool) -> Result<Vec<(Option<String>, SpanSet)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, tree) = match line.split_once('\t') {
            Some((id, tree)) => (Some(id.trim().to_string()), tree),
            None => (None, line),
        };
        let tree = Bracketed::parse(tree).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        out.push((id, tree.spans(exclude_trivial)));
    }
    Ok(out)
}

fn blocks(text: &str) -> Vec<(usize, Option<String>, Vec<(usize, &str)>)> {
    let mut out = Vec::new();
    let mut id = None;
    let mut lines: Vec<(usize, &str)> = Vec::new();
    let mut first = 0;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim_end();
        if t.trim().is_empty() {
            if !lines.is_empty() {
                out.push((first, id.take(), std::mem::take(&mut lines)));
            }
            id = None;
            continue;
        }
        if let Some(c) = t.strip_prefix('#') {
            if let Some(v) = c.trim().strip_prefix("sent_id") {
                id = Some(v.trim_start_matches([' ', '=', ':']).trim().to_string());
            }
            continue;
        }
        if lines.is_empty() {
            first = i + 1;
        }
        lines.push((i + 1, t));
    }
    if !lines.is_empty() {
        out.push((first, id, lines));
    }
    out
}

/// Blank-line separated blocks of `index<TAB>token<TAB>head`, heads
/// 1-based with 0 for ROOT. `# sent_id = X` names a block.
pub fn parse_gold_deps(text: &str, path: &str) -> Result<Vec<(Option<String>, DependencyParse)>> {
    let mut out = Vec::new();
    for (first, id, lines) in blocks(text) {
        let mut heads = Vec::new();
        for (ln, line) in lines {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 3 {
                return Err(Error::parse(path, ln, "expected index<TAB>token<TAB>head"));
            }
            let idx: usize = cols[0]
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, ln, format!("bad index {:?}", cols[0])))?;
            if idx != heads.len() + 1 {
                return Err(Error::parse(path, ln, format!("expected index {}, found {idx}", heads.len() + 1)));
            }
            let head: usize = cols[2]
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, ln, format!("bad head {:?}", cols[2])))?;
            heads.push(head);
        }
        if heads.iter().any(|&h| h > heads.len()) {
            return Err(Error::parse(path, first, "head index out of range"));
        }
        let parse = DependencyParse::from_conll(&heads).map_err(|e| Error::parse(path, first, e.to_string()))?;
        out.push((id, parse));
    }
    Ok(out)
}

/// Blank-line separated blocks of `token<TAB>tag`.
pub fn parse_pos(text: &str, path: &str) -> Result<Vec<(Option<String>, Vec<String>)>> {
    let mut out = Vec::new();
    for (_, id, lines) in blocks(text) {
        let mut tags = Vec::new();
        for (ln, line) in lines {
            match line.split_once('\t') {
                Some((_, tag)) if !tag.trim().is_empty() => tags.push(tag.trim().to_string()),
                _ => return Err(Error::parse(path, ln, "expected token<TAB>tag")),
            }
        }
        out.push((id, tags));
    }
    Ok(out)
}

/// Reorders id-tagged gold items to follow `ids`. Untagged items are taken
/// positionally. Any mismatch is an error.
pub fn align_to_ids<T: Clone>(what: &str, items: Vec<(Option<String>, T)>, ids: &[String]) -> Result<Vec<T>> {
    if items.len() != ids.len() {
        return Err(Error::Input(format!(
            "{what}: {} entries for {} predictions",
            items.len(),
            ids.len()
        )));
    }
    if items.iter().all(|(id, _)| id.is_none()) {
        return Ok(items.into_iter().map(|(_, t)| t).collect());
    }
    let mut by_id: HashMap<String, T> = HashMap::new();
    for (id, t) in items {
        let id = id.ok_or_else(|| Error::Input(format!("{what}: some entries lack ids")))?;
        if by_id.insert(id.clone(), t).is_some() {
            return Err(Error::Input(format!("{what}: duplicate id {id:?}")));
        }
    }
    ids.iter()
        .map(|id| {
            by_id
                .remove(id)
                .ok_or_else(|| Error::Input(format!("{what}: no entry for sentence {id:?}")))
        })
        .collect()
}

pub fn read_gold_trees(path: impl AsRef<Path>, exclude_trivial: bool) -> Result<Vec<(Option<String>, SpanSet)>> {
    let path = path.as_ref();
    parse_gold_trees(&fs::read_to_string(path)?, &path.display().to_string(), exclude_trivial)
}

pub fn read_gold_deps(path: impl AsRef<Path>) -> Result<Vec<(Option<String>, DependencyParse)>> {
    let path = path.as_ref();
    parse_gold_deps(&fs::read_to_string(path)?, &path.display().to_string())
}

pub fn read_pos(path: impl AsRef<Path>) -> Result<Vec<(Option<String>, Vec<String>)>> {
    let path = path.as_ref();
    parse_pos(&fs::read_to_string(path)?, &path.display().to_string())
}
