//! Synthetic captions with known structure. Every sentence is headed by a
//! concrete subject noun, so the root prior has something to find. Used for
//! the with/without-prior comparison and to generate fixture corpora.

use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_vocabulary, CorpusRecord, Sentence};
use crate::error::{Error, Result};
use crate::grammar::{Direction, GrammarConfig, LexGrammar};
use crate::priors::{ConcretenessLexicon, Normalization, Placement};
use crate::train::{train, CheckpointMeta, TrainConfig, ValidationSet};
use crate::tree::{LexTree, Node};

pub const CATEGORIES: [&str; 5] = ["S", "NP", "NBAR", "VP", "PP"];
pub const TAGS: [&str; 6] = ["DET", "ADJ", "NOUN", "VERB", "ADP", "ADV"];

const S: usize = 0;
const NP: usize = 1;
const NBAR: usize = 2;
const VP: usize = 3;
const PP: usize = 4;

const DET: usize = 0;
const ADJ: usize = 1;
const NOUN: usize = 2;
const VERB: usize = 3;
const ADP: usize = 4;
const ADV: usize = 5;

// (surface, lemma, raw rating on the 1..5 scale)
const DETS: &[(&str, &str, f64)] = &[("a", "a", 1.46), ("the", "the", 1.43)];
const ADJS: &[(&str, &str, f64)] = &[
    ("small", "small", 2.8),
    ("red", "red", 3.0),
    ("big", "big", 2.7),
    ("white", "white", 3.1),
    ("young", "young", 2.5),
];
const SUBJECTS: &[(&str, &str, f64)] = &[
    ("dog", "dog", 4.85),
    ("cat", "cat", 4.86),
    ("girl", "girl", 4.80),
    ("man", "man", 4.79),
    ("horse", "horse", 4.93),
    ("bird", "bird", 4.88),
];
const OBJECTS: &[(&str, &str, f64)] = &[
    ("ball", "ball", 4.2),
    ("cake", "cake", 4.1),
    ("bench", "bench", 4.0),
    ("grass", "grass", 4.1),
    ("table", "table", 4.0),
];
const PREPS: &[(&str, &str, f64)] = &[("on", "on", 2.0), ("near", "near", 1.9), ("with", "with", 1.6)];
const ADVS: &[(&str, &str, f64)] = &[("quickly", "quickly", 1.8), ("together", "together", 1.7)];

#[derive(Clone, Copy)]
enum Frame {
    Intransitive,
    Transitive,
    Prepositional,
}

const VERBS: &[(&str, &str, f64, Frame)] = &[
    ("running", "run", 3.2, Frame::Intransitive),
    ("sleeping", "sleep", 3.1, Frame::Intransitive),
    ("eating", "eat", 3.5, Frame::Transitive),
    ("chasing", "chase", 3.0, Frame::Transitive),
    ("holding", "hold", 3.3, Frame::Transitive),
    ("sitting", "sit", 3.4, Frame::Prepositional),
    ("standing", "stand", 3.3, Frame::Prepositional),
];
// activities assigned to captions without a verb
const SCENE_ACTIVITIES: &[&str] = &["rest", "pose"];
const HYPERNYMS: &[&str] = &["animal", "person"];

/// Ratings for every word the generator can produce, `lemma<TAB>raw`.
pub fn lexicon_tsv() -> String {
    let mut out = String::from("# synthetic ratings for the planted corpus\n");
    let mut rows: Vec<(&str, f64)> = Vec::new();
    for list in [DETS, ADJS, SUBJECTS, OBJECTS, PREPS, ADVS] {
        rows.extend(list.iter().map(|(_, l, r)| (*l, *r)));
    }
    rows.extend(VERBS.iter().map(|(_, l, r, _)| (*l, *r)));
    for (l, r) in rows {
        let _ = writeln!(out, "{l}\t{r}");
    }
    out
}

pub fn planted_lexicon() -> ConcretenessLexicon {
    ConcretenessLexicon::parse(&lexicon_tsv(), "<planted>", Normalization::DivideBy5).expect("built-in ratings are valid")
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedSentence {
    pub id: String,
    pub tokens: Vec<String>,
    pub lemmas: Vec<String>,
    pub tags: Vec<String>,
    /// Gold tree; nonterminal and preterminal indices refer to
    /// [`CATEGORIES`] and [`TAGS`].
    pub tree: LexTree,
    pub activity: String,
    pub participants: Vec<String>,
}

impl PlantedSentence {
    pub fn record(&self) -> CorpusRecord {
        CorpusRecord {
            id: self.id.clone(),
            tokens: self.tokens.clone(),
            lemmas: self.lemmas.clone(),
        }
    }

    /// Gold tree with category names, e.g. `(S (NP (DET a) (NOUN dog)) ...)`.
    pub fn bracketed(&self) -> String {
        fn go(node: &Node, words: &[String], out: &mut String) {
            match node {
                Node::Leaf { position, preterminal } => {
                    let _ = write!(out, "({} {})", TAGS[*preterminal], words[*position]);
                }
                Node::Binary { nonterminal, .. } => {
                    let (l, r) = node.children().expect("binary");
                    let _ = write!(out, "({} ", CATEGORIES[*nonterminal]);
                    go(l, words, out);
                    out.push(' ');
                    go(r, words, out);
                    out.push(')');
                }
            }
        }
        let mut out = String::new();
        go(self.tree.root(), &self.tokens, &mut out);
        out
    }
}

struct Builder {
    tokens: Vec<String>,
    lemmas: Vec<String>,
    tags: Vec<String>,
}

impl Builder {
    fn word(&mut self, (surface, lemma, _): (&str, &str, f64), tag: usize) -> Node {
        self.tokens.push(surface.to_string());
        self.lemmas.push(lemma.to_string());
        self.tags.push(TAGS[tag].to_string());
        Node::leaf(self.tokens.len() - 1, tag)
    }

    fn noun_phrase(&mut self, rng: &mut ChaCha8Rng, nouns: &[(&'static str, &'static str, f64)]) -> (Node, &'static str) {
        let det = self.word(*DETS.choose(rng).unwrap(), DET);
        let noun_entry = *nouns.choose(rng).unwrap();
        let core = if rng.random_bool(0.4) {
            let adj = self.word(*ADJS.choose(rng).unwrap(), ADJ);
            let n = self.word(noun_entry, NOUN);
            Node::binary(NBAR, Direction::Right, adj, n)
        } else {
            self.word(noun_entry, NOUN)
        };
        (Node::binary(NP, Direction::Right, det, core), noun_entry.1)
    }
}

/// One caption headed by its subject noun.
pub fn sample_sentence(rng: &mut ChaCha8Rng, id: &str) -> PlantedSentence {
    let mut b = Builder {
        tokens: Vec::new(),
        lemmas: Vec::new(),
        tags: Vec::new(),
    };
    let (subject, subj_lemma) = b.noun_phrase(rng, SUBJECTS);
    let mut participants = vec![if rng.random_bool(0.1) {
        HYPERNYMS.choose(rng).unwrap().to_string()
    } else {
        subj_lemma.to_string()
    }];
    let (predicate, activity) = if rng.random_bool(0.2) {
        // verbless caption: "a dog on the bench"
        let p = b.word(*PREPS.choose(rng).unwrap(), ADP);
        let (obj, obj_lemma) = b.noun_phrase(rng, OBJECTS);
        participants.push(obj_lemma.to_string());
        (Node::binary(PP, Direction::Left, p, obj), SCENE_ACTIVITIES.choose(rng).unwrap().to_string())
    } else {
        let &(surface, lemma, raw, frame) = VERBS.choose(rng).unwrap();
        let v = b.word((surface, lemma, raw), VERB);
        let vp = match frame {
            Frame::Intransitive if rng.random_bool(0.5) => {
                let adv = b.word(*ADVS.choose(rng).unwrap(), ADV);
                Node::binary(VP, Direction::Left, v, adv)
            }
            Frame::Intransitive => v,
            Frame::Transitive => {
                let (obj, obj_lemma) = b.noun_phrase(rng, OBJECTS);
                participants.push(obj_lemma.to_string());
                Node::binary(VP, Direction::Left, v, obj)
            }
            Frame::Prepositional => {
                let p = b.word(*PREPS.choose(rng).unwrap(), ADP);
                let (obj, obj_lemma) = b.noun_phrase(rng, OBJECTS);
                participants.push(obj_lemma.to_string());
                let pp = Node::binary(PP, Direction::Left, p, obj);
                Node::binary(VP, Direction::Left, v, pp)
            }
        };
        (vp, lemma.to_string())
    };
    let root = Node::binary(S, Direction::Left, subject, predicate);
    PlantedSentence {
        id: id.to_string(),
        tokens: b.tokens,
        lemmas: b.lemmas,
        tags: b.tags,
        tree: LexTree::new(root).expect("generator builds well-formed trees"),
        activity,
        participants,
    }
}

pub fn sample_corpus(n: usize, seed: u64, prefix: &str) -> Vec<PlantedSentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| sample_sentence(&mut rng, &format!("{prefix}{i:04}"))).collect()
}

/// Files of a fixture corpus: captions, labels, gold trees, gold
/// dependencies, POS tags and the concreteness ratings.
pub fn fixture_files(corpus: &[PlantedSentence]) -> Result<Vec<(&'static str, String)>> {
    let records: Vec<CorpusRecord> = corpus.iter().map(PlantedSentence::record).collect();
    let mut labels = String::new();
    let mut trees = String::new();
    let mut deps = String::new();
    let mut pos = String::new();
    for s in corpus {
        labels.push_str(&serde_json::to_string(&crate::align::LabelRecord {
            sentence_id: s.id.clone(),
            activity: s.activity.clone(),
            participants: s.participants.clone(),
        })?);
        labels.push('\n');
        let _ = writeln!(trees, "{}\t{}", s.id, s.bracketed());
        let _ = writeln!(deps, "# sent_id = {}", s.id);
        for (i, (tok, head)) in s.tokens.iter().zip(s.tree.dependencies().to_conll()).enumerate() {
            let _ = writeln!(deps, "{}\t{}\t{}", i + 1, tok, head);
        }
        deps.push('\n');
        let _ = writeln!(pos, "# sent_id = {}", s.id);
        for (tok, tag) in s.tokens.iter().zip(&s.tags) {
            let _ = writeln!(pos, "{tok}\t{tag}");
        }
        pos.push('\n');
    }
    Ok(vec![
        ("captions.tsv", crate::corpus::write_corpus(&records)),
        ("labels.jsonl", labels),
        ("gold_trees.txt", trees),
        ("gold_deps.conll", deps),
        ("pos.txt", pos),
        ("concreteness.tsv", lexicon_tsv()),
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub seeds: Vec<u64>,
    pub train_size: usize,
    pub valid_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda_c: f64,
    pub num_nonterminals: usize,
    pub num_preterminals: usize,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            seeds: (0..5).collect(),
            train_size: 200,
            valid_size: 50,
            epochs: 6,
            batch_size: 20,
            learning_rate: 0.1,
            lambda_c: 1.3,
            num_nonterminals: 5,
            num_preterminals: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedRun {
    pub condition: String,
    pub lambda_c: f64,
    pub seed: u64,
    pub initial_objective: f64,
    #[serde(flatten)]
    pub last: CheckpointMeta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedRow {
    pub condition: String,
    pub lambda_c: f64,
    #[serde(flatten)]
    pub mean: CheckpointMeta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedReport {
    pub config: PlantedConfig,
    pub runs: Vec<PlantedRun>,
    pub summary: Vec<PlantedRow>,
}

impl PlantedReport {
    /// Every run ended with a higher objective than it started with.
    pub fn objective_improved_everywhere(&self) -> bool {
        self.runs.iter().all(|r| r.last.objective > r.initial_objective)
    }

    pub fn mean_das(&self, condition: &str) -> Option<f64> {
        self.summary.iter().find(|r| r.condition == condition).and_then(|r| r.mean.das)
    }

    pub fn to_table(&self) -> String {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        let mut out = format!(
            "{:<12} {:>8} {:>10} {:>11} {:>8} {:>8}\n",
            "condition", "lambda_c", "corpus_f1", "sentence_f1", "das", "uas"
        );
        for r in &self.summary {
            let _ = writeln!(
                out,
                "{:<12} {:>8.2} {:>10} {:>11} {:>8} {:>8}",
                r.condition,
                r.lambda_c,
                f(r.mean.corpus_f1),
                f(r.mean.sentence_f1),
                f(r.mean.das),
                f(r.mean.uas)
            );
        }
        out
    }
}

pub const BASELINE: &str = "baseline";
pub const CONCRETE: &str = "concrete";

fn mean(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.collect::<Option<Vec<f64>>>()?;
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Trains with `λ_c = 0` and with the configured `λ_c` on the same sampled
/// corpus and initialization for each seed, scoring the final grammar
/// against the planted trees of a held-out sample.
pub fn planted_grammar_experiment(config: &PlantedConfig) -> Result<PlantedReport> {
    if config.seeds.is_empty() {
        return Err(Error::Config("planted experiment needs at least one seed".into()));
    }
    let lexicon = planted_lexicon();
    let mut runs = Vec::new();
    for &seed in &config.seeds {
        let train_set = sample_corpus(config.train_size, seed, "train");
        let valid_set = sample_corpus(config.valid_size, seed ^ 0x9e37_79b9_7f4a_7c15, "valid");
        let records: Vec<CorpusRecord> = train_set.iter().map(PlantedSentence::record).collect();
        let vocab = build_vocabulary(&records, 1)?;
        let to_sentences = |c: &[PlantedSentence]| -> Result<Vec<Sentence>> {
            c.iter().map(|s| Sentence::from_record(&s.record(), &vocab)).collect()
        };
        let corpus = to_sentences(&train_set)?;
        let valid = ValidationSet {
            sentences: to_sentences(&valid_set)?,
            gold_spans: valid_set.iter().map(|s| s.tree.spans(true)).collect(),
            gold_deps: Some(valid_set.iter().map(|s| s.tree.dependencies()).collect()),
        };
        let init = LexGrammar::new_random(
            &GrammarConfig {
                num_nonterminals: config.num_nonterminals,
                num_preterminals: config.num_preterminals,
                seed,
                emission_smoothing: 0.0,
            },
            vocab.clone(),
        )?;
        for (condition, lambda_c) in [(BASELINE, 0.0), (CONCRETE, config.lambda_c)] {
            let tc = TrainConfig {
                epochs: config.epochs,
                batch_size: config.batch_size,
                learning_rate: config.learning_rate,
                lambda_c,
                lambda_v: 0.0,
                placement: Placement::NonRoot,
                inference_priors: true,
                seed,
                max_sentence_length: 20,
                checkpoint_dir: None,
                eval_every: None,
            };
            let priors = tc.priors(Some(lexicon.clone()), None)?;
            let out = train(&corpus, init.clone(), &priors, &tc, Some(&valid))?;
            let last = out.history.last().expect("history is never empty").clone();
            log::info!(
                "seed {seed} {condition}: J {:.3} -> {:.3}, DAS {:.4}",
                out.history[0].objective,
                last.objective,
                last.das.unwrap_or(f64::NAN)
            );
            runs.push(PlantedRun {
                condition: condition.to_string(),
                lambda_c,
                seed,
                initial_objective: out.history[0].objective,
                last,
            });
        }
    }
    let summary = [(BASELINE, 0.0), (CONCRETE, config.lambda_c)]
        .iter()
        .map(|&(condition, lambda_c)| {
            let rs: Vec<&PlantedRun> = runs.iter().filter(|r| r.condition == condition).collect();
            PlantedRow {
                condition: condition.to_string(),
                lambda_c,
                mean: CheckpointMeta {
                    epoch: config.epochs,
                    batch: rs[0].last.batch,
                    objective: rs.iter().map(|r| r.last.objective).sum::<f64>() / rs.len() as f64,
                    corpus_f1: mean(rs.iter().map(|r| r.last.corpus_f1)),
                    sentence_f1: mean(rs.iter().map(|r| r.last.sentence_f1)),
                    das: mean(rs.iter().map(|r| r.last.das)),
                    uas: mean(rs.iter().map(|r| r.last.uas)),
                    path: None,
                },
            }
        })
        .collect();
    Ok(PlantedReport {
        config: config.clone(),
        runs,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_trees_are_headed_by_the_subject_noun() {
        let corpus = sample_corpus(50, 3, "t");
        for s in &corpus {
            let root = s.tree.head();
            assert_eq!(s.tags[root], "NOUN");
            assert!(root <= 2);
            assert_eq!(s.tokens.len(), s.tree.len());
            let parsed = crate::tree::Bracketed::parse(&s.bracketed()).unwrap();
            assert_eq!(parsed.spans(true), s.tree.spans(true));
            assert_eq!(parsed.words(), s.tokens.iter().map(String::as_str).collect::<Vec<_>>());
        }
    }

    #[test]
    fn root_is_the_most_concrete_word() {
        let lex = planted_lexicon();
        for s in sample_corpus(50, 4, "t") {
            let best = (0..s.lemmas.len())
                .max_by(|&a, &b| lex.lookup(&s.lemmas[a]).total_cmp(&lex.lookup(&s.lemmas[b])))
                .unwrap();
            assert_eq!(best, s.tree.head());
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        assert_eq!(sample_corpus(20, 9, "x"), sample_corpus(20, 9, "x"));
    }

    #[test]
    fn fixture_files_parse_back() {
        let corpus = sample_corpus(10, 1, "f");
        let files = fixture_files(&corpus).unwrap();
        let get = |n: &str| files.iter().find(|(k, _)| *k == n).unwrap().1.clone();
        let caps = crate::corpus::parse_corpus(&get("captions.tsv"), "c").unwrap();
        assert_eq!(caps.len(), 10);
        let labels = crate::align::parse_labels(&get("labels.jsonl"), "l").unwrap();
        assert_eq!(labels.len(), 10);
        let deps = crate::eval::parse_gold_deps(&get("gold_deps.conll"), "d").unwrap();
        assert_eq!(deps[3].1, corpus[3].tree.dependencies());
        let pos = crate::eval::parse_pos(&get("pos.txt"), "p").unwrap();
        assert_eq!(pos[0].1, corpus[0].tags);
        let trees = crate::eval::parse_gold_trees(&get("gold_trees.txt"), "t", true).unwrap();
        assert_eq!(trees[5].0.as_deref(), Some(corpus[5].id.as_str()));
    }

    #[test]
    fn report_rows_carry_checkpoint_fields() {
        let config = PlantedConfig {
            seeds: vec![0],
            train_size: 20,
            valid_size: 5,
            epochs: 1,
            ..Default::default()
        };
        let report = planted_grammar_experiment(&config).unwrap();
        assert_eq!(report.summary.len(), 2);
        let row = serde_json::to_value(&report.summary[0]).unwrap();
        let mut keys: Vec<&str> = row.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(
            keys,
            vec!["batch", "condition", "corpus_f1", "das", "epoch", "lambda_c", "objective", "path", "sentence_f1", "uas"]
        );
        assert_eq!(report.to_table().lines().count(), 3);
    }

    #[test]
    fn unambiguous_corpus_is_recovered() {
        // every sentence is "the dog": only the direction is ambiguous, and
        // the root prior settles it
        let vocab = crate::grammar::Vocabulary::new(vec!["the".into(), "dog".into()]).unwrap();
        let corpus: Vec<Sentence> = (0..10)
            .map(|i| Sentence::from_words(format!("d{i}"), &["the", "dog"], &vocab).unwrap())
            .collect();
        let g = LexGrammar::new_random(
            &GrammarConfig {
                num_nonterminals: 1,
                num_preterminals: 2,
                seed: 0,
                emission_smoothing: 0.0,
            },
            vocab,
        )
        .unwrap();
        let gold = crate::tree::DependencyParse::new(vec![Some(1), None]).unwrap();
        let valid = ValidationSet {
            sentences: corpus.clone(),
            gold_spans: vec![Default::default(); corpus.len()],
            gold_deps: Some(vec![gold; corpus.len()]),
        };
        let tc = TrainConfig {
            epochs: 3,
            batch_size: 5,
            lambda_c: 1.3,
            ..Default::default()
        };
        let priors = tc.priors(Some(planted_lexicon()), None).unwrap();
        let out = train(&corpus, g, &priors, &tc, Some(&valid)).unwrap();
        assert_eq!(out.history.last().unwrap().das, Some(1.0));
    }
}
