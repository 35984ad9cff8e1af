//! Mini-batch gradient ascent on the grammar logits, with checkpoints
//! selected by validation F1.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chart::{expected_counts, inside, viterbi};
use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::eval::{attachment_counts, corpus_f1, sentence_f1, SpanSet};
use crate::grammar::{LexGrammar, Tables};
use crate::priors::{ConcretenessLexicon, Phase, Placement, PriorBundle, RewardedSpanSet};
use crate::tree::{DependencyParse, LexTree};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda_c: f64,
    pub lambda_v: f64,
    pub placement: Placement,
    pub inference_priors: bool,
    pub seed: u64,
    pub max_sentence_length: usize,
    pub checkpoint_dir: Option<PathBuf>,
    /// Evaluate every this many batches; `None` evaluates once per epoch.
    pub eval_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 16,
            learning_rate: 0.05,
            lambda_c: 0.0,
            lambda_v: 0.0,
            placement: Placement::NonRoot,
            inference_priors: true,
            seed: 0,
            max_sentence_length: 20,
            checkpoint_dir: None,
            eval_every: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        // lr = 0 is accepted so a run can be used as a fixed-grammar baseline
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        for (name, v) in [("lambda_c", self.lambda_c), ("lambda_v", self.lambda_v)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if self.max_sentence_length < 2 {
            return Err(Error::Config("max sentence length must be at least 2".into()));
        }
        if self.eval_every == Some(0) {
            return Err(Error::Config("eval_every must be positive".into()));
        }
        Ok(())
    }

    /// The prior bundle this configuration describes.
    pub fn priors(&self, lexicon: Option<ConcretenessLexicon>, spans: Option<RewardedSpanSet>) -> Result<PriorBundle> {
        Ok(PriorBundle::new(self.lambda_c, self.lambda_v, lexicon, spans)?
            .with_placement(self.placement)
            .with_inference_priors(self.inference_priors))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub batch: usize,
    pub objective: f64,
    pub corpus_f1: Option<f64>,
    pub sentence_f1: Option<f64>,
    pub das: Option<f64>,
    pub uas: Option<f64>,
    pub path: Option<String>,
}

/// Held-out sentences with gold brackets (trivial spans already removed)
/// and optionally gold dependencies.
#[derive(Clone, Debug, Default)]
pub struct ValidationSet {
    pub sentences: Vec<Sentence>,
    pub gold_spans: Vec<SpanSet>,
    pub gold_deps: Option<Vec<DependencyParse>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Metrics {
    pub corpus_f1: f64,
    pub sentence_f1: f64,
    pub das: Option<f64>,
    pub uas: Option<f64>,
}

pub struct TrainOutcome {
    pub best: LexGrammar,
    pub best_index: usize,
    pub history: Vec<CheckpointMeta>,
}

/// Viterbi trees for each sentence, in order.
pub fn parse_all(sentences: &[Sentence], grammar: &LexGrammar, priors: &PriorBundle) -> Result<Vec<(LexTree, f64)>> {
    sentences
        .par_iter()
        .map(|s| viterbi(s, grammar, &priors.potentials(s, Phase::Inference)))
        .collect()
}

pub fn evaluate(grammar: &LexGrammar, priors: &PriorBundle, valid: &ValidationSet) -> Result<Metrics> {
    let trees = parse_all(&valid.sentences, grammar, priors)?;
    let pred: Vec<SpanSet> = trees.iter().map(|(t, _)| t.spans(true)).collect();
    let mut m = Metrics {
        corpus_f1: corpus_f1(&valid.gold_spans, &pred)?,
        sentence_f1: sentence_f1(&valid.gold_spans, &pred)?,
        das: None,
        uas: None,
    };
    if let Some(gold) = &valid.gold_deps {
        let deps: Vec<DependencyParse> = trees.iter().map(|(t, _)| t.dependencies()).collect();
        let att = attachment_counts(gold, &deps)?;
        m.das = Some(att.das());
        m.uas = Some(att.uas());
    }
    Ok(m)
}

/// `J = Σ log Σ_t exp G(t)` over the corpus with training-time potentials.
pub fn objective(corpus: &[Sentence], grammar: &LexGrammar, priors: &PriorBundle) -> Result<f64> {
    let parts: Vec<f64> = corpus
        .par_iter()
        .map(|s| inside(s, grammar, &priors.potentials(s, Phase::Train)).map(|(z, _)| z))
        .collect::<Result<_>>()?;
    let j: f64 = parts.iter().sum();
    if !j.is_finite() {
        return Err(Error::Numeric(format!("objective is {j}; the learning rate is probably too high")));
    }
    Ok(j)
}

/// Summed log marginal and gradient over a batch. Sentences are reduced in
/// ascending id order so the result does not depend on scheduling.
pub fn batch_gradient(batch: &[&Sentence], grammar: &LexGrammar, priors: &PriorBundle) -> Result<(f64, Tables)> {
    let mut ordered: Vec<&Sentence> = batch.to_vec();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    let mut total = Tables::zeros_like(grammar.logits());
    let mut j = 0.0;
    let width = rayon::current_num_threads().max(1);
    for chunk in ordered.chunks(width) {
        let results: Vec<_> = chunk
            .par_iter()
            .map(|s| expected_counts(s, grammar, &priors.potentials(s, Phase::Train)))
            .collect::<Result<_>>()?;
        for ec in results {
            j += ec.log_marginal;
            total.add_assign(&ec.gradient);
        }
    }
    if !j.is_finite() || !total.all_finite() {
        return Err(Error::Numeric(format!(
            "non-finite objective or gradient (J = {j}); the learning rate is probably too high"
        )));
    }
    Ok((j, total))
}

struct Checkpointer<'a> {
    dir: Option<&'a Path>,
    log: String,
}

impl Checkpointer<'_> {
    fn record(&mut self, grammar: &LexGrammar, meta: &mut CheckpointMeta) -> Result<()> {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        let _ = writeln!(
            self.log,
            "{},{},{},{},{},{},{}",
            meta.epoch,
            meta.batch,
            meta.objective,
            fmt(meta.corpus_f1),
            fmt(meta.sentence_f1),
            fmt(meta.das),
            fmt(meta.uas)
        );
        if let Some(dir) = self.dir {
            let name = format!("checkpoint_e{:03}_b{:06}.json", meta.epoch, meta.batch);
            grammar.save(dir.join(&name))?;
            meta.path = Some(name.clone());
            fs::write(
                dir.join(name.replace(".json", ".meta.json")),
                serde_json::to_string_pretty(meta)? + "\n",
            )?;
            fs::write(dir.join("train_log.csv"), &self.log)?;
        }
        Ok(())
    }
}

/// Gradient ascent on `J`. Sentences longer than the configured maximum
/// are left out of training. Returns the checkpoint with the best
/// validation corpus F1 (ties to the earliest), or the best objective when
/// there is no validation set.
pub fn train(
    corpus: &[Sentence],
    grammar: LexGrammar,
    priors: &PriorBundle,
    config: &TrainConfig,
    valid: Option<&ValidationSet>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let kept: Vec<&Sentence> = corpus
        .iter()
        .filter(|s| s.len() <= config.max_sentence_length)
        .collect();
    if kept.is_empty() {
        return Err(Error::Input(format!(
            "no training sentences of length <= {}",
            config.max_sentence_length
        )));
    }
    if kept.len() < corpus.len() {
        log::info!("{} of {} sentences exceed the length limit and are not trained on", corpus.len() - kept.len(), corpus.len());
    }
    let kept_owned: Vec<Sentence> = kept.iter().map(|s| (*s).clone()).collect();
    if let Some(dir) = &config.checkpoint_dir {
        fs::create_dir_all(dir)?;
    }
    let mut ckpt = Checkpointer {
        dir: config.checkpoint_dir.as_deref(),
        log: "epoch,batch,objective,corpus_f1,sentence_f1,das,uas\n".to_string(),
    };

    let mut grammar = grammar;
    let mut history: Vec<CheckpointMeta> = Vec::new();
    let mut best: Option<(usize, LexGrammar)> = None;

    let mut checkpoint = |grammar: &LexGrammar, epoch: usize, batch: usize, history: &mut Vec<CheckpointMeta>, best: &mut Option<(usize, LexGrammar)>| -> Result<()> {
        let objective = objective(&kept_owned, grammar, priors)?;
        let metrics = valid.map(|v| evaluate(grammar, priors, v)).transpose()?;
        let mut meta = CheckpointMeta {
            epoch,
            batch,
            objective,
            corpus_f1: metrics.map(|m| m.corpus_f1),
            sentence_f1: metrics.map(|m| m.sentence_f1),
            das: metrics.and_then(|m| m.das),
            uas: metrics.and_then(|m| m.uas),
            path: None,
        };
        ckpt.record(grammar, &mut meta)?;
        log::info!(
            "epoch {epoch} batch {batch}: J = {objective:.4}{}",
            meta.corpus_f1.map(|f| format!(", F1 = {f:.4}")).unwrap_or_default()
        );
        let key = |m: &CheckpointMeta| m.corpus_f1.unwrap_or(m.objective);
        let better = match best {
            None => true,
            Some((i, _)) => key(&meta) > key(&history[*i]),
        };
        history.push(meta);
        if better {
            *best = Some((history.len() - 1, grammar.clone()));
        }
        Ok(())
    };

    checkpoint(&grammar, 0, 0, &mut history, &mut best)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..kept.len()).collect();
    let mut step = 0;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(config.batch_size) {
            let batch: Vec<&Sentence> = idx.iter().map(|&i| kept[i]).collect();
            let (_, grad) = batch_gradient(&batch, &grammar, priors)?;
            grammar.update(|t| t.axpy(config.learning_rate, &grad))?;
            step += 1;
            if config.eval_every.is_some_and(|k| step % k == 0) {
                checkpoint(&grammar, epoch, step, &mut history, &mut best)?;
            }
        }
        if config.eval_every.is_none_or(|k| step % k != 0) {
            checkpoint(&grammar, epoch, step, &mut history, &mut best)?;
        }
    }
    let (best_index, best) = best.expect("at least the initial checkpoint exists");
    if let Some(dir) = &config.checkpoint_dir {
        best.save(dir.join("best.json"))?;
    }
    Ok(TrainOutcome {
        best,
        best_index,
        history,
    })
}
