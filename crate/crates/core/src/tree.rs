use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grammar::Direction;

/// A node of a binary, head-annotated parse tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Node {
    Leaf {
        position: usize,
        /// Preterminal index in `0..P`.
        preterminal: usize,
    },
    Binary {
        /// Nonterminal index in `0..N`.
        nonterminal: usize,
        direction: Direction,
        inheriting: Box<Node>,
        dependent: Box<Node>,
    },
}

impl Node {
    pub fn leaf(position: usize, preterminal: usize) -> Node {
        Node::Leaf { position, preterminal }
    }

    /// Builds a binary node from its children in surface order.
    pub fn binary(nonterminal: usize, direction: Direction, left: Node, right: Node) -> Node {
        let (inheriting, dependent) = match direction {
            Direction::Left => (left, right),
            Direction::Right => (right, left),
        };
        Node::Binary {
            nonterminal,
            direction,
            inheriting: Box::new(inheriting),
            dependent: Box::new(dependent),
        }
    }

    /// Children in surface order.
    pub fn children(&self) -> Option<(&Node, &Node)> {
        match self {
            Node::Leaf { .. } => None,
            Node::Binary {
                direction,
                inheriting,
                dependent,
                ..
            } => Some(match direction {
                Direction::Left => (inheriting, dependent),
                Direction::Right => (dependent, inheriting),
            }),
        }
    }

    pub fn head(&self) -> usize {
        match self {
            Node::Leaf { position, .. } => *position,
            Node::Binary { inheriting, .. } => inheriting.head(),
        }
    }

    pub fn start(&self) -> usize {
        match self.children() {
            None => self.head(),
            Some((left, _)) => left.start(),
        }
    }

    pub fn end(&self) -> usize {
        match self.children() {
            None => self.head(),
            Some((_, right)) => right.end(),
        }
    }

    pub fn span(&self) -> (usize, usize) {
        (self.start(), self.end())
    }

    /// Id in the shared symbol space, given `N`.
    pub fn symbol(&self, num_nonterminals: usize) -> usize {
        match self {
            Node::Leaf { preterminal, .. } => num_nonterminals + preterminal,
            Node::Binary { nonterminal, .. } => *nonterminal,
        }
    }

    fn check(&self) -> Result<(usize, usize)> {
        match self.children() {
            None => Ok((self.head(), self.head())),
            Some((left, right)) => {
                let (ls, le) = left.check()?;
                let (rs, re) = right.check()?;
                if le + 1 != rs {
                    return Err(Error::Structure(format!(
                        "children ({ls},{le}) and ({rs},{re}) are not adjacent"
                    )));
                }
                Ok((ls, re))
            }
        }
    }

    fn visit<'a>(&'a self, out: &mut Vec<&'a Node>) {
        out.push(self);
        if let Some((l, r)) = self.children() {
            l.visit(out);
            r.visit(out);
        }
    }
}

/// A binary head-annotated tree covering a whole sentence. The root is
/// always a binary node; its label is the nonterminal chosen by `S -> A[α]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LexTree {
    root: Node,
    len: usize,
}

impl LexTree {
    pub fn new(root: Node) -> Result<Self> {
        if matches!(root, Node::Leaf { .. }) {
            return Err(Error::Structure("root must be a binary node".into()));
        }
        let (start, end) = root.check()?;
        if start != 0 {
            return Err(Error::Structure(format!("tree starts at token {start}, not 0")));
        }
        Ok(LexTree { root, len: end + 1 })
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn root_label(&self) -> usize {
        match self.root {
            Node::Binary { nonterminal, .. } => nonterminal,
            Node::Leaf { .. } => unreachable!("validated in LexTree::new"),
        }
    }

    /// Number of tokens covered.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn head(&self) -> usize {
        self.root.head()
    }

    /// All nodes in pre-order.
    pub fn nodes(&self) -> Vec<&Node> {
        let mut out = Vec::with_capacity(2 * self.len);
        self.root.visit(&mut out);
        out
    }

    /// `(start, end, head)` of every binary constituent, pre-order.
    pub fn constituents(&self) -> Vec<(usize, usize, usize)> {
        self.nodes()
            .into_iter()
            .filter(|n| matches!(n, Node::Binary { .. }))
            .map(|n| (n.start(), n.end(), n.head()))
            .collect()
    }

    /// Unlabeled constituent spans. With `exclude_trivial`, width-1 spans and
    /// the whole-sentence span are dropped.
    pub fn spans(&self, exclude_trivial: bool) -> BTreeSet<(usize, usize)> {
        let mut out = BTreeSet::new();
        for node in self.nodes() {
            let (s, e) = node.span();
            if exclude_trivial && (s == e || (s == 0 && e + 1 == self.len)) {
                continue;
            }
            out.insert((s, e));
        }
        out
    }

    pub fn dependencies(&self) -> DependencyParse {
        let mut head_of = vec![None; self.len];
        for node in self.nodes() {
            if let Node::Binary {
                inheriting, dependent, ..
            } = node
            {
                head_of[dependent.head()] = Some(inheriting.head());
            }
        }
        DependencyParse { head_of }
    }

    /// Bracketed rendering: `(N<label>@<head> ...)` for binary nodes and
    /// `(P<label>@<pos> word)` for leaves.
    pub fn to_bracketed<S: AsRef<str>>(&self, words: &[S]) -> String {
        fn go<S: AsRef<str>>(node: &Node, words: &[S], out: &mut String) {
            match node {
                Node::Leaf { position, preterminal } => {
                    let w = words.get(*position).map(|w| w.as_ref()).unwrap_or("?");
                    let _ = write!(out, "(P{preterminal}@{position} {w})");
                }
                Node::Binary { nonterminal, .. } => {
                    let (l, r) = node.children().expect("binary");
                    let _ = write!(out, "(N{nonterminal}@{} ", node.head());
                    go(l, words, out);
                    out.push(' ');
                    go(r, words, out);
                    out.push(')');
                }
            }
        }
        let mut out = String::new();
        go(&self.root, words, &mut out);
        out
    }
}

/// Constituent spans of a tree, excluding width-1 and whole-sentence spans.
pub fn extract_spans(tree: &LexTree) -> BTreeSet<(usize, usize)> {
    tree.spans(true)
}

pub fn extract_dependencies(tree: &LexTree) -> DependencyParse {
    tree.dependencies()
}

/// `head_of[d]` is the governor of token `d`, `None` for the sentence head.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyParse {
    pub head_of: Vec<Option<usize>>,
}

impl DependencyParse {
    pub fn new(head_of: Vec<Option<usize>>) -> Result<Self> {
        let parse = DependencyParse { head_of };
        parse.validate()?;
        Ok(parse)
    }

    /// From CoNLL-style heads: 1-based governors, 0 for ROOT.
    pub fn from_conll(heads: &[usize]) -> Result<Self> {
        let head_of = heads
            .iter()
            .map(|&h| if h == 0 { None } else { Some(h - 1) })
            .collect();
        Self::new(head_of)
    }

    pub fn to_conll(&self) -> Vec<usize> {
        self.head_of.iter().map(|h| h.map_or(0, |g| g + 1)).collect()
    }

    pub fn len(&self) -> usize {
        self.head_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.head_of.is_empty()
    }

    pub fn root(&self) -> Option<usize> {
        self.head_of.iter().position(Option::is_none)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.head_of.len();
        let roots = self.head_of.iter().filter(|h| h.is_none()).count();
        if roots != 1 {
            return Err(Error::Structure(format!("expected exactly one root, found {roots}")));
        }
        for (d, h) in self.head_of.iter().enumerate() {
            if let Some(h) = h {
                if *h >= n || *h == d {
                    return Err(Error::Structure(format!("token {d} has invalid head {h}")));
                }
            }
        }
        for start in 0..n {
            let mut cur = start;
            let mut steps = 0;
            while let Some(h) = self.head_of[cur] {
                cur = h;
                steps += 1;
                if steps > n {
                    return Err(Error::Structure(format!("cycle through token {start}")));
                }
            }
        }
        Ok(())
    }
}

/// A generic bracketed tree as found in gold treebank files; labels are
/// kept as strings and nodes may have any arity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Bracketed {
    Word(String),
    Node { label: String, children: Vec<Bracketed> },
}

impl Bracketed {
    pub fn parse(text: &str) -> Result<Bracketed> {
        let tokens = tokenize_brackets(text);
        let mut pos = 0;
        let tree = parse_node(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(Error::Format(format!("trailing input after tree: {text:?}")));
        }
        Ok(tree)
    }

    pub fn words(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_words(&mut out);
        out
    }

    fn collect_words<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Bracketed::Word(w) => out.push(w),
            Bracketed::Node { children, .. } => children.iter().for_each(|c| c.collect_words(out)),
        }
    }

    /// Spans of every node, inclusive indices, de-duplicated.
    pub fn spans(&self, exclude_trivial: bool) -> BTreeSet<(usize, usize)> {
        let mut out = BTreeSet::new();
        let mut next = 0;
        self.collect_spans(&mut next, &mut out);
        let n = next;
        if exclude_trivial {
            out.retain(|&(s, e)| s != e && !(s == 0 && e + 1 == n));
        }
        out
    }

    fn collect_spans(&self, next: &mut usize, out: &mut BTreeSet<(usize, usize)>) -> Option<(usize, usize)> {
        match self {
            Bracketed::Word(_) => {
                let p = *next;
                *next += 1;
                Some((p, p))
            }
            Bracketed::Node { children, .. } => {
                let mut span: Option<(usize, usize)> = None;
                for c in children {
                    if let Some((s, e)) = c.collect_spans(next, out) {
                        span = Some(match span {
                            None => (s, e),
                            Some((s0, _)) => (s0, e),
                        });
                    }
                }
                if let Some(sp) = span {
                    out.insert(sp);
                }
                span
            }
        }
    }
}

fn tokenize_brackets(text: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        match ch {
            '(' | ')' => {
                if let Some(s) = start.take() {
                    tokens.push(&text[s..i]);
                }
                tokens.push(&text[i..i + 1]);
            }
            c if c.is_whitespace() => {
                if let Some(s) = start.take() {
                    tokens.push(&text[s..i]);
                }
            }
            _ => {
                if start.is_none() {
                    start = Some(i);
                }
            }
        }
    }
    if let Some(s) = start {
        tokens.push(&text[s..]);
    }
    tokens
}

fn parse_node(tokens: &[&str], pos: &mut usize) -> Result<Bracketed> {
    match tokens.get(*pos) {
        None => Err(Error::Format("unexpected end of bracketed tree".into())),
        Some(&")") => Err(Error::Format("unexpected ')'".into())),
        Some(&"(") => {
            *pos += 1;
            let label = match tokens.get(*pos) {
                Some(&t) if t != "(" && t != ")" => {
                    *pos += 1;
                    t.to_string()
                }
                _ => String::new(),
            };
            let mut children = Vec::new();
            loop {
                match tokens.get(*pos) {
                    None => return Err(Error::Format("unbalanced brackets".into())),
                    Some(&")") => {
                        *pos += 1;
                        break;
                    }
                    _ => children.push(parse_node(tokens, pos)?),
                }
            }
            Ok(Bracketed::Node { label, children })
        }
        Some(&w) => {
            *pos += 1;
            Ok(Bracketed::Word(w.to_string()))
        }
    }
}
