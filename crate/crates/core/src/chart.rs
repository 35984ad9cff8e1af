//! Exact dynamic programs over head-annotated spans.
//!
//! Cells are indexed by span `(i, j)` (inclusive), head position `h` in
//! `i..=j` and a label. Width-1 cells carry preterminal labels, wider cells
//! nonterminal labels. A binary cell combines a head-inheriting cell with
//! the head-marginalized cell of its dependent sibling, so each cell costs
//! `O(width · N · S)` after the dependent factor `R[A][B]` is shared across
//! head positions. Everything is in log space.

use std::collections::HashSet;

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::grammar::{Direction, LexGrammar, Tables};
use crate::priors::SentencePotentials;
use crate::tree::{LexTree, Node};

const NEG_INF: f64 = f64::NEG_INFINITY;

/// Streaming log-sum-exp.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LogAcc {
    max: f64,
    sum: f64,
}

impl LogAcc {
    pub(crate) const EMPTY: LogAcc = LogAcc { max: NEG_INF, sum: 0.0 };

    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        if x == NEG_INF {
            return;
        }
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        if self.sum == 0.0 {
            NEG_INF
        } else {
            self.max + self.sum.ln()
        }
    }
}

pub fn logsumexp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = LogAcc::EMPTY;
    for v in values {
        acc.add(v);
    }
    acc.value()
}

#[derive(Clone, Copy, Debug)]
struct Dims {
    n: usize,
    nt: usize,
    pt: usize,
}

impl Dims {
    #[inline]
    fn labels(&self, width: usize) -> usize {
        if width == 1 {
            self.pt
        } else {
            self.nt
        }
    }

    #[inline]
    fn symbol(&self, width: usize, label: usize) -> usize {
        if width == 1 {
            self.nt + label
        } else {
            label
        }
    }

    #[inline]
    fn span(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }
}

fn check_inputs(sentence: &Sentence, grammar: &LexGrammar, pots: &SentencePotentials) -> Result<Dims> {
    let n = sentence.len();
    if n < 2 {
        return Err(Error::Input(format!("sentence {:?} has {n} tokens; at least 2 required", sentence.id)));
    }
    let v = grammar.vocab().len();
    if let Some(&bad) = sentence.token_ids.iter().find(|&&t| t >= v) {
        return Err(Error::Index(format!("word id {bad} not in vocabulary of size {v}")));
    }
    if pots.root.len() != n {
        return Err(Error::Input(format!(
            "root potentials cover {} positions, sentence has {n}",
            pots.root.len()
        )));
    }
    Ok(Dims {
        n,
        nt: grammar.num_nonterminals(),
        pt: grammar.num_preterminals(),
    })
}

/// Inside scores for one sentence.
#[derive(Clone, Debug)]
pub struct Chart {
    dims: Dims,
    /// Per span: `[(h - i) * labels + label]`, span potential included.
    inside: Vec<Vec<f64>>,
    /// Per span: `[label]`, log-sum over head positions.
    marginal: Vec<Vec<f64>>,
    /// `[h * N + A]`: root rule + root cell + root potential.
    root_scores: Vec<f64>,
    log_marginal: f64,
}

impl Chart {
    pub fn len(&self) -> usize {
        self.dims.n
    }

    pub fn is_empty(&self) -> bool {
        self.dims.n == 0
    }

    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    /// Inside score of cell `(i, j, h)` for a symbol in the shared space;
    /// `-inf` for symbols that cannot label a span of that width.
    pub fn inside(&self, i: usize, j: usize, h: usize, symbol: usize) -> f64 {
        let d = &self.dims;
        assert!(i <= h && h <= j && j < d.n, "cell out of range");
        let width = j - i + 1;
        let Some(label) = label_of(d, width, symbol) else {
            return NEG_INF;
        };
        self.inside[d.span(i, j)][(h - i) * d.labels(width) + label]
    }

    /// `logsumexp` over head positions of [`Chart::inside`].
    pub fn head_marginal(&self, i: usize, j: usize, symbol: usize) -> f64 {
        let d = &self.dims;
        let width = j - i + 1;
        match label_of(d, width, symbol) {
            Some(label) => self.marginal[d.span(i, j)][label],
            None => NEG_INF,
        }
    }

    /// Posterior probability of each position heading the sentence.
    pub fn root_head_posterior(&self) -> Vec<f64> {
        let nt = self.dims.nt;
        self.root_scores
            .chunks(nt)
            .map(|row| row.iter().map(|s| (s - self.log_marginal).exp()).sum())
            .collect()
    }
}

fn label_of(d: &Dims, width: usize, symbol: usize) -> Option<usize> {
    if width == 1 {
        (symbol >= d.nt && symbol < d.nt + d.pt).then(|| symbol - d.nt)
    } else {
        (symbol < d.nt).then_some(symbol)
    }
}

/// `R[A * lb + b] = logsumexp_c dep(dir, A, B_b, C_c) + dep_marg[c]`.
fn dependent_factor(
    g: &LexGrammar,
    d: &Dims,
    dir: Direction,
    inh_width: usize,
    dep_width: usize,
    dep_marg: &[f64],
    out: &mut Vec<f64>,
) {
    let lb = d.labels(inh_width);
    let lc = d.labels(dep_width);
    out.clear();
    out.resize(d.nt * lb, NEG_INF);
    for a in 0..d.nt {
        for b in 0..lb {
            let sb = d.symbol(inh_width, b);
            let mut acc = LogAcc::EMPTY;
            for (c, &m) in dep_marg.iter().enumerate().take(lc) {
                acc.add(g.log_dep(dir, a, sb, d.symbol(dep_width, c)) + m);
            }
            out[a * lb + b] = acc.value();
        }
    }
}

fn run_inside(
    sentence: &Sentence,
    grammar: &LexGrammar,
    pots: &SentencePotentials,
    mask: Option<&HashSet<(usize, usize, usize)>>,
) -> Result<Chart> {
    let d = check_inputs(sentence, grammar, pots)?;
    let n = d.n;
    let x = &sentence.token_ids;
    let mut inside = vec![Vec::new(); n * n];
    let mut marginal = vec![Vec::new(); n * n];

    for i in 0..n {
        let cell: Vec<f64> = (0..d.pt).map(|t| grammar.log_emit(t, x[i])).collect();
        marginal[d.span(i, i)] = cell.clone();
        inside[d.span(i, i)] = cell;
    }

    let mut r = Vec::new();
    for width in 2..=n {
        for i in 0..=n - width {
            let j = i + width - 1;
            let mut acc = vec![LogAcc::EMPTY; width * d.nt];
            for k in i..j {
                let lw = k - i + 1;
                let rw = j - k;
                for dir in Direction::BOTH {
                    let (inh_span, inh_w, dep_span, dep_w, heads) = match dir {
                        Direction::Left => (d.span(i, k), lw, d.span(k + 1, j), rw, i..=k),
                        Direction::Right => (d.span(k + 1, j), rw, d.span(i, k), lw, k + 1..=j),
                    };
                    dependent_factor(grammar, &d, dir, inh_w, dep_w, &marginal[dep_span], &mut r);
                    let lb = d.labels(inh_w);
                    let inh_start = if dir == Direction::Left { i } else { k + 1 };
                    let inh = &inside[inh_span];
                    for h in heads {
                        let w = x[h];
                        let inh_row = &inh[(h - inh_start) * lb..(h - inh_start + 1) * lb];
                        for a in 0..d.nt {
                            let cell = &mut acc[(h - i) * d.nt + a];
                            for b in 0..lb {
                                let v = grammar.log_head(a, w, dir, d.symbol(inh_w, b)) + inh_row[b] + r[a * lb + b];
                                cell.add(v);
                            }
                        }
                    }
                }
            }
            let mut cells = vec![NEG_INF; width * d.nt];
            let mut marg = vec![LogAcc::EMPTY; d.nt];
            for h in i..=j {
                if mask.is_some_and(|m| m.contains(&(i, j, h))) {
                    continue;
                }
                let pot = pots.span(i, j, h);
                for a in 0..d.nt {
                    let v = acc[(h - i) * d.nt + a].value() + pot;
                    cells[(h - i) * d.nt + a] = v;
                    marg[a].add(v);
                }
            }
            inside[d.span(i, j)] = cells;
            marginal[d.span(i, j)] = marg.iter().map(LogAcc::value).collect();
        }
    }

    let top = &inside[d.span(0, n - 1)];
    let mut root_scores = vec![NEG_INF; n * d.nt];
    let mut total = LogAcc::EMPTY;
    for h in 0..n {
        for a in 0..d.nt {
            let v = grammar.log_root(a) + top[h * d.nt + a] + pots.root(h);
            root_scores[h * d.nt + a] = v;
            total.add(v);
        }
    }
    let log_marginal = total.value();
    if log_marginal.is_nan() || log_marginal == f64::INFINITY {
        return Err(Error::Numeric(format!("log marginal of {:?} is {log_marginal}", sentence.id)));
    }
    if log_marginal == NEG_INF && mask.is_none() {
        return Err(Error::Numeric(format!("sentence {:?} has zero total score", sentence.id)));
    }
    Ok(Chart {
        dims: d,
        inside,
        marginal,
        root_scores,
        log_marginal,
    })
}

/// Log of the summed exponentiated scores of all trees over the sentence.
pub fn inside(sentence: &Sentence, grammar: &LexGrammar, pots: &SentencePotentials) -> Result<(f64, Chart)> {
    let chart = run_inside(sentence, grammar, pots, None)?;
    Ok((chart.log_marginal, chart))
}

/// Posterior probability that at least one rewarded constituent appears in
/// the tree.
pub fn rewarded_span_probability(sentence: &Sentence, grammar: &LexGrammar, pots: &SentencePotentials) -> Result<f64> {
    if pots.spans.is_empty() {
        return Ok(0.0);
    }
    let full = run_inside(sentence, grammar, pots, None)?;
    let mask: HashSet<_> = pots.spans.keys().copied().collect();
    let without = run_inside(sentence, grammar, pots, Some(&mask))?;
    Ok(1.0 - (without.log_marginal - full.log_marginal).exp())
}

#[derive(Clone, Copy, Debug)]
struct Back {
    split: usize,
    dir: Direction,
    inh_label: usize,
    dep_label: usize,
    dep_head: usize,
}

/// Highest-scoring tree and its score. Ties prefer the lower split point,
/// then the left-headed rule, then lower symbol ids.
pub fn viterbi(sentence: &Sentence, grammar: &LexGrammar, pots: &SentencePotentials) -> Result<(LexTree, f64)> {
    let d = check_inputs(sentence, grammar, pots)?;
    let n = d.n;
    let x = &sentence.token_ids;
    let mut best = vec![Vec::new(); n * n];
    let mut back: Vec<Vec<Option<Back>>> = vec![Vec::new(); n * n];
    // per span: [label] -> (max over heads, argmax head)
    let mut marg: Vec<Vec<(f64, usize)>> = vec![Vec::new(); n * n];

    for i in 0..n {
        let cell: Vec<f64> = (0..d.pt).map(|t| grammar.log_emit(t, x[i])).collect();
        marg[d.span(i, i)] = cell.iter().map(|&v| (v, i)).collect();
        best[d.span(i, i)] = cell;
    }

    let mut r: Vec<(f64, usize)> = Vec::new();
    for width in 2..=n {
        for i in 0..=n - width {
            let j = i + width - 1;
            let mut cells = vec![NEG_INF; width * d.nt];
            let mut bps: Vec<Option<Back>> = vec![None; width * d.nt];
            for k in i..j {
                let lw = k - i + 1;
                let rw = j - k;
                for dir in Direction::BOTH {
                    let (inh_span, inh_w, inh_start, dep_span, dep_w, heads) = match dir {
                        Direction::Left => (d.span(i, k), lw, i, d.span(k + 1, j), rw, i..=k),
                        Direction::Right => (d.span(k + 1, j), rw, k + 1, d.span(i, k), lw, k + 1..=j),
                    };
                    let lb = d.labels(inh_w);
                    let lc = d.labels(dep_w);
                    let dep_marg = &marg[dep_span];
                    r.clear();
                    for a in 0..d.nt {
                        for b in 0..lb {
                            let sb = d.symbol(inh_w, b);
                            let mut top = (NEG_INF, usize::MAX);
                            for c in 0..lc {
                                let v = grammar.log_dep(dir, a, sb, d.symbol(dep_w, c)) + dep_marg[c].0;
                                if v > top.0 {
                                    top = (v, c);
                                }
                            }
                            r.push(top);
                        }
                    }
                    let inh = &best[inh_span];
                    for h in heads {
                        let w = x[h];
                        for a in 0..d.nt {
                            let slot = (h - i) * d.nt + a;
                            for b in 0..lb {
                                let (rv, c) = r[a * lb + b];
                                let v = grammar.log_head(a, w, dir, d.symbol(inh_w, b))
                                    + inh[(h - inh_start) * lb + b]
                                    + rv;
                                if v > cells[slot] {
                                    cells[slot] = v;
                                    bps[slot] = Some(Back {
                                        split: k,
                                        dir,
                                        inh_label: b,
                                        dep_label: c,
                                        dep_head: dep_marg[c].1,
                                    });
                                }
                            }
                        }
                    }
                }
            }
            let mut m = vec![(NEG_INF, usize::MAX); d.nt];
            for h in i..=j {
                let pot = pots.span(i, j, h);
                for a in 0..d.nt {
                    let slot = (h - i) * d.nt + a;
                    cells[slot] += pot;
                    if cells[slot] > m[a].0 {
                        m[a] = (cells[slot], h);
                    }
                }
            }
            best[d.span(i, j)] = cells;
            back[d.span(i, j)] = bps;
            marg[d.span(i, j)] = m;
        }
    }

    let top = &best[d.span(0, n - 1)];
    let mut root = (NEG_INF, 0, 0);
    for a in 0..d.nt {
        for h in 0..n {
            let v = grammar.log_root(a) + top[h * d.nt + a] + pots.root(h);
            if v > root.0 {
                root = (v, a, h);
            }
        }
    }
    if !root.0.is_finite() {
        return Err(Error::Numeric(format!("no finite-scoring tree for {:?}", sentence.id)));
    }

    fn build(d: &Dims, back: &[Vec<Option<Back>>], i: usize, j: usize, h: usize, label: usize) -> Node {
        if i == j {
            return Node::leaf(i, label);
        }
        let bp = back[d.span(i, j)][(h - i) * d.nt + label].expect("backpointer for finite cell");
        let k = bp.split;
        let (inh, dep) = match bp.dir {
            Direction::Left => (
                build(d, back, i, k, h, bp.inh_label),
                build(d, back, k + 1, j, bp.dep_head, bp.dep_label),
            ),
            Direction::Right => (
                build(d, back, k + 1, j, h, bp.inh_label),
                build(d, back, i, k, bp.dep_head, bp.dep_label),
            ),
        };
        Node::Binary {
            nonterminal: label,
            direction: bp.dir,
            inheriting: Box::new(inh),
            dependent: Box::new(dep),
        }
    }

    let tree = LexTree::new(build(&d, &back, 0, n - 1, root.2, root.1))?;
    Ok((tree, root.0))
}

/// Posterior rule counts and the exact gradient of the log marginal with
/// respect to every logit.
#[derive(Clone, Debug)]
pub struct ExpectedCounts {
    pub log_marginal: f64,
    pub counts: Tables,
    pub gradient: Tables,
}

pub fn expected_counts(sentence: &Sentence, grammar: &LexGrammar, pots: &SentencePotentials) -> Result<ExpectedCounts> {
    let chart = run_inside(sentence, grammar, pots, None)?;
    let d = chart.dims;
    let n = d.n;
    let x = &sentence.token_ids;
    let z = chart.log_marginal;
    let mut counts = Tables::zeros_like(grammar.logits());

    let mut outside: Vec<Vec<LogAcc>> = (0..n * n)
        .map(|s| {
            let (i, j) = (s / n, s % n);
            if i > j {
                Vec::new()
            } else {
                let width = j - i + 1;
                vec![LogAcc::EMPTY; width * d.labels(width)]
            }
        })
        .collect();
    let mut outside_marg: Vec<Vec<LogAcc>> = (0..n * n)
        .map(|s| {
            let (i, j) = (s / n, s % n);
            if i > j {
                Vec::new()
            } else {
                vec![LogAcc::EMPTY; d.labels(j - i + 1)]
            }
        })
        .collect();

    for h in 0..n {
        for a in 0..d.nt {
            counts.root[a] += (chart.root_scores[h * d.nt + a] - z).exp();
            outside[d.span(0, n - 1)][h * d.nt + a].add(grammar.log_root(a) + pots.root(h));
        }
    }

    let mut r = Vec::new();
    let mut ao = Vec::new();
    for width in (2..=n).rev() {
        for i in 0..=n - width {
            let j = i + width - 1;
            let span = d.span(i, j);
            // Outside of each cell, with the cell's own span potential folded
            // in so children see the full context.
            ao.clear();
            for h in i..=j {
                let pot = pots.span(i, j, h);
                for a in 0..d.nt {
                    let slot = (h - i) * d.nt + a;
                    let mut acc = outside[span][slot];
                    acc.add(outside_marg[span][a].value());
                    let v = if chart.inside[span][slot] == NEG_INF {
                        NEG_INF
                    } else {
                        acc.value() + pot
                    };
                    ao.push(v);
                }
            }
            for k in i..j {
                let lw = k - i + 1;
                let rw = j - k;
                for dir in Direction::BOTH {
                    let (inh_span, inh_w, inh_start, dep_span, dep_w, heads) = match dir {
                        Direction::Left => (d.span(i, k), lw, i, d.span(k + 1, j), rw, i..=k),
                        Direction::Right => (d.span(k + 1, j), rw, k + 1, d.span(i, k), lw, k + 1..=j),
                    };
                    dependent_factor(grammar, &d, dir, inh_w, dep_w, &chart.marginal[dep_span], &mut r);
                    let lb = d.labels(inh_w);
                    let lc = d.labels(dep_w);
                    let mut s_acc = vec![LogAcc::EMPTY; d.nt * lb];
                    for h in heads {
                        let w = x[h];
                        for a in 0..d.nt {
                            let o = ao[(h - i) * d.nt + a];
                            if o == NEG_INF {
                                continue;
                            }
                            for b in 0..lb {
                                let sb = d.symbol(inh_w, b);
                                let base = o + grammar.log_head(a, w, dir, sb);
                                let inh_slot = (h - inh_start) * lb + b;
                                let inh_val = chart.inside[inh_span][inh_slot];
                                outside[inh_span][inh_slot].add(base + r[a * lb + b]);
                                let idx = counts.head_index(a, w, dir, sb);
                                counts.head[idx] += (base + inh_val + r[a * lb + b] - z).exp();
                                s_acc[a * lb + b].add(base + inh_val);
                            }
                        }
                    }
                    for a in 0..d.nt {
                        for b in 0..lb {
                            let sv = s_acc[a * lb + b].value();
                            if sv == NEG_INF {
                                continue;
                            }
                            let sb = d.symbol(inh_w, b);
                            for c in 0..lc {
                                let sc = d.symbol(dep_w, c);
                                let t = sv + grammar.log_dep(dir, a, sb, sc);
                                outside_marg[dep_span][c].add(t);
                                let idx = counts.dep_index(dir, a, sb, sc);
                                counts.dep[idx] += (t + chart.marginal[dep_span][c] - z).exp();
                            }
                        }
                    }
                }
            }
        }
    }

    for i in 0..n {
        let span = d.span(i, i);
        for t in 0..d.pt {
            let mut acc = outside[span][t];
            acc.add(outside_marg[span][t].value());
            let idx = counts.emit_index(t, x[i]);
            counts.emit[idx] += (acc.value() + chart.inside[span][t] - z).exp();
        }
    }

    let gradient = counts_to_gradient(&counts, grammar.log_probs());
    Ok(ExpectedCounts {
        log_marginal: z,
        counts,
        gradient,
    })
}

/// `∂/∂θ Σ_e count_e · log softmax(θ)_e = count − (Σ_row count) · p`.
pub(crate) fn counts_to_gradient(counts: &Tables, log_probs: &Tables) -> Tables {
    let mut grad = counts.clone();
    let lens = counts.row_lengths();
    for ((g, lp), len) in grad.parts_mut().into_iter().zip(log_probs.parts()).zip(lens) {
        for (grow, prow) in g.chunks_mut(len).zip(lp.chunks(len)) {
            let total: f64 = grow.iter().sum();
            if total == 0.0 {
                continue;
            }
            for (gv, pv) in grow.iter_mut().zip(prow) {
                *gv -= total * pv.exp();
            }
        }
    }
    grad
}

/// Score of one tree: rule log-probabilities plus the root and span
/// potentials it collects.
pub fn tree_score(tree: &LexTree, sentence: &Sentence, grammar: &LexGrammar, pots: &SentencePotentials) -> Result<f64> {
    let d = check_inputs(sentence, grammar, pots)?;
    if tree.len() != d.n {
        return Err(Error::Structure(format!(
            "tree covers {} tokens, sentence has {}",
            tree.len(),
            d.n
        )));
    }
    let mut score = grammar.rule_logprob(&crate::grammar::Rule::Root {
        nonterminal: tree.root_label(),
    })?;
    score += pots.root(tree.head());
    for node in tree.nodes() {
        match node {
            Node::Leaf { position, preterminal } => {
                score += grammar.rule_logprob(&crate::grammar::Rule::Emission {
                    preterminal: *preterminal,
                    word: sentence.token_ids[*position],
                })?;
            }
            Node::Binary {
                nonterminal,
                direction,
                inheriting,
                dependent,
            } => {
                let head = node.head();
                score += grammar.rule_logprob(&crate::grammar::Rule::Binary {
                    parent: *nonterminal,
                    head_word: sentence.token_ids[head],
                    direction: *direction,
                    inheriting: inheriting.symbol(d.nt),
                    dependent: dependent.symbol(d.nt),
                })?;
                score += pots.span(node.start(), node.end(), head);
            }
        }
    }
    Ok(score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{GrammarConfig, Vocabulary};

    fn setup(n_nt: usize, n_pt: usize, seed: u64) -> (LexGrammar, Sentence) {
        let vocab = Vocabulary::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let g = LexGrammar::new_random(
            &GrammarConfig {
                num_nonterminals: n_nt,
                num_preterminals: n_pt,
                seed,
                emission_smoothing: 0.0,
            },
            vocab.clone(),
        )
        .unwrap();
        let s = Sentence::from_words("s", &["a", "b", "c", "a"], &vocab).unwrap();
        (g, s)
    }

    #[test]
    fn log_acc_matches_direct_sum() {
        let xs = [-1.0, 3.0, -700.0, 2.5, NEG_INF];
        let direct = xs.iter().map(|v: &f64| v.exp()).sum::<f64>().ln();
        assert!((logsumexp(xs) - direct).abs() < 1e-12);
        assert_eq!(logsumexp([]), NEG_INF);
    }

    #[test]
    fn uniform_two_token_sentence() {
        let vocab = Vocabulary::new(vec!["a".into()]).unwrap();
        let g = LexGrammar::from_logits(vocab.clone(), Tables::zeros(1, 1, vocab.len())).unwrap();
        let s = Sentence::from_words("s", &["a", "a"], &vocab).unwrap();
        let (z, chart) = inside(&s, &g, &SentencePotentials::zeros(2)).unwrap();
        // each tree: root 1 * head 1/4 * dep 1/2 * emit (1/2)^2; two head choices
        let tree = 0.25 * 0.5 * 0.25;
        assert!((z - (2.0 * tree as f64).ln()).abs() < 1e-12);
        let post = chart.root_head_posterior();
        assert!((post[0] - 0.5).abs() < 1e-12 && (post[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn head_marginal_is_logsumexp_of_heads() {
        let (g, s) = setup(2, 3, 5);
        let (_, chart) = inside(&s, &g, &SentencePotentials::zeros(4)).unwrap();
        for i in 0..4 {
            for j in i..4 {
                for sym in 0..5 {
                    let direct = logsumexp((i..=j).map(|h| chart.inside(i, j, h, sym)));
                    let m = chart.head_marginal(i, j, sym);
                    if direct == NEG_INF {
                        assert_eq!(m, NEG_INF);
                    } else {
                        assert!((direct - m).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn probability_bound_without_priors() {
        for seed in 0..5 {
            let (g, s) = setup(2, 2, seed);
            let (z, _) = inside(&s, &g, &SentencePotentials::zeros(4)).unwrap();
            assert!(z <= 0.0);
        }
    }

    #[test]
    fn viterbi_score_equals_tree_score() {
        let (g, s) = setup(3, 2, 9);
        let mut pots = SentencePotentials::zeros(4);
        pots.root = vec![0.1, 0.7, 0.0, 0.3];
        pots.spans.insert((1, 2, 2), 1.0);
        let (tree, score) = viterbi(&s, &g, &pots).unwrap();
        let rescored = tree_score(&tree, &s, &g, &pots).unwrap();
        assert!((score - rescored).abs() < 1e-9);
    }

    #[test]
    fn counts_are_consistent() {
        let (g, s) = setup(2, 2, 1);
        let ec = expected_counts(&s, &g, &SentencePotentials::zeros(4)).unwrap();
        let root: f64 = ec.counts.root.iter().sum();
        let emit: f64 = ec.counts.emit.iter().sum();
        let head: f64 = ec.counts.head.iter().sum();
        let dep: f64 = ec.counts.dep.iter().sum();
        assert!((root - 1.0).abs() < 1e-10);
        assert!((emit - 4.0).abs() < 1e-10);
        assert!((head - 3.0).abs() < 1e-10);
        assert!((dep - 3.0).abs() < 1e-10);
    }

    #[test]
    fn symmetric_sentence_gives_symmetric_root_posterior() {
        let vocab = Vocabulary::new(vec!["a".into()]).unwrap();
        let g = LexGrammar::from_logits(vocab.clone(), Tables::zeros(2, 2, vocab.len())).unwrap();
        let s = Sentence::from_words("s", &["a", "a"], &vocab).unwrap();
        let ec = expected_counts(&s, &g, &SentencePotentials::zeros(2)).unwrap();
        let t = &ec.gradient;
        for a in 0..2 {
            for b in 0..4 {
                let l = t.head[t.head_index(a, 1, Direction::Left, b)];
                let r = t.head[t.head_index(a, 1, Direction::Right, b)];
                assert!((l - r).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn short_and_bad_inputs_are_rejected() {
        let (g, s) = setup(1, 1, 0);
        assert!(matches!(
            inside(&s, &g, &SentencePotentials::zeros(3)),
            Err(Error::Input(_))
        ));
        let mut bad = s.clone();
        bad.token_ids[0] = 99;
        assert!(matches!(
            inside(&bad, &g, &SentencePotentials::zeros(4)),
            Err(Error::Index(_))
        ));
    }

    #[test]
    fn malformed_tree_for_sentence() {
        let (g, s) = setup(1, 1, 0);
        let tree = LexTree::new(Node::binary(0, Direction::Left, Node::leaf(0, 0), Node::leaf(1, 0))).unwrap();
        assert!(matches!(
            tree_score(&tree, &s, &g, &SentencePotentials::zeros(4)),
            Err(Error::Structure(_))
        ));
        let bad_label = LexTree::new(Node::binary(3, Direction::Left, Node::leaf(0, 0), Node::leaf(1, 0))).unwrap();
        let s2 = Sentence::from_ids("t", vec![1, 2], g.vocab()).unwrap();
        assert!(tree_score(&bad_label, &s2, &g, &SentencePotentials::zeros(2)).is_err());
    }
}
