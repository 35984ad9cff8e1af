//! Unsupervised induction of a head-lexicalized PCFG with two concreteness
//! priors: a word-level root potential and a rewarded-span potential
//! derived from image semantic-role labels.

pub mod align;
pub mod chart;
pub mod corpus;
pub mod enumerate;
pub mod error;
pub mod eval;
pub mod grammar;
pub mod kmeans;
pub mod planted;
pub mod priors;
pub mod train;
pub mod tree;

pub use chart::{expected_counts, inside, rewarded_span_probability, tree_score, viterbi, Chart, ExpectedCounts};
pub use corpus::{CorpusRecord, Sentence};
pub use enumerate::enumerate_trees;
pub use error::{Error, Result};
pub use grammar::{Direction, GrammarConfig, LexGrammar, Rule, Tables, Vocabulary};
pub use priors::{ConcretenessLexicon, Normalization, Phase, Placement, PriorBundle, RewardedSpan, RewardedSpanSet, SentencePotentials};
pub use tree::{extract_dependencies, extract_spans, DependencyParse, LexTree, Node};
