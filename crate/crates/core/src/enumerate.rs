//! Brute-force enumeration of every binary head-annotated labeled tree.
//! Exponential; only meant as a test oracle for the chart algorithms.

use crate::chart::tree_score;
use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::grammar::{Direction, LexGrammar};
use crate::priors::SentencePotentials;
use crate::tree::{LexTree, Node};

pub const ENUMERATION_LIMIT: usize = 8;

/// Every bracketing of `i..=j` with every head direction; labels all zero.
fn structures(i: usize, j: usize) -> Vec<Node> {
    if i == j {
        return vec![Node::leaf(i, 0)];
    }
    let mut out = Vec::new();
    for k in i..j {
        let lefts = structures(i, k);
        let rights = structures(k + 1, j);
        for l in &lefts {
            for r in &rights {
                for dir in Direction::BOTH {
                    out.push(Node::binary(0, dir, l.clone(), r.clone()));
                }
            }
        }
    }
    out
}

fn relabel(node: &mut Node, nt_labels: &[usize], next_nt: &mut usize, pt_labels: &[usize]) {
    match node {
        Node::Leaf { position, preterminal } => *preterminal = pt_labels[*position],
        Node::Binary {
            nonterminal,
            inheriting,
            dependent,
            ..
        } => {
            *nonterminal = nt_labels[*next_nt];
            *next_nt += 1;
            relabel(inheriting, nt_labels, next_nt, pt_labels);
            relabel(dependent, nt_labels, next_nt, pt_labels);
        }
    }
}

/// Advances a mixed-radix counter; false once it wraps around.
fn bump(digits: &mut [usize], radix: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < radix {
            return true;
        }
        *d = 0;
    }
    false
}

/// Calls `f` once for every tree over `n` tokens.
pub fn for_each_tree<F: FnMut(&LexTree)>(n: usize, num_nt: usize, num_pt: usize, mut f: F) -> Result<()> {
    if n > ENUMERATION_LIMIT {
        return Err(Error::TooLong {
            len: n,
            limit: ENUMERATION_LIMIT,
        });
    }
    if n < 2 {
        return Err(Error::Input("enumeration needs at least 2 tokens".into()));
    }
    for shape in structures(0, n - 1) {
        let mut nts = vec![0; n - 1];
        loop {
            let mut pts = vec![0; n];
            loop {
                let mut node = shape.clone();
                let mut next = 0;
                relabel(&mut node, &nts, &mut next, &pts);
                f(&LexTree::new(node)?);
                if !bump(&mut pts, num_pt) {
                    break;
                }
            }
            if !bump(&mut nts, num_nt) {
                break;
            }
        }
    }
    Ok(())
}

/// All trees over the sentence with their scores.
pub fn enumerate_trees(
    sentence: &Sentence,
    grammar: &LexGrammar,
    pots: &SentencePotentials,
) -> Result<Vec<(LexTree, f64)>> {
    let mut out = Vec::new();
    let mut err = None;
    for_each_tree(
        sentence.len(),
        grammar.num_nonterminals(),
        grammar.num_preterminals(),
        |t| match tree_score(t, sentence, grammar, pots) {
            Ok(s) => out.push((t.clone(), s)),
            Err(e) => {
                err.get_or_insert(e);
            }
        },
    )?;
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}
