use std::collections::HashSet;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use lexinduce::align::{self, CorpusAlignment, SpanMode, StopWords};
use lexinduce::corpus::{build_vocabulary, read_corpus, CorpusRecord};
use lexinduce::eval::{self, EvalReport, SpanSet};
use lexinduce::kmeans::{init_emissions_from_clusters, WordVectors};
use lexinduce::planted::{self, PlantedConfig};
use lexinduce::train::{self, TrainConfig, ValidationSet};
use lexinduce::{
    inside, viterbi, ConcretenessLexicon, DependencyParse, GrammarConfig, LexGrammar, Normalization, Phase, Placement,
    PriorBundle, RewardedSpanSet, Sentence,
};

use crate::{
    AlignArgs, Command, EvalArgs, FixtureArgs, LexiconMode, OnOff, ParseArgs, PlacementArg, PriorArgs, SpanModeArg,
    SpansArgs, SynthArgs, TrainArgs,
};

pub fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Align(a) => align_cmd(a),
        Command::Spans(a) => spans_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Parse(a) => parse_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Synth(a) => synth_cmd(a),
        Command::Fixture(a) => fixture_cmd(a),
        Command::Replay(_) => unreachable!("handled by the caller"),
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn align_cmd(a: &AlignArgs) -> Result<()> {
    let captions = read_corpus(&a.captions)?;
    let labels = align::read_labels(&a.labels)?;
    let stopwords = match &a.stopwords {
        Some(p) => StopWords::load(p)?,
        None => StopWords::default(),
    };
    let alignment = align::align_corpus(&captions, &labels, &stopwords)?;
    write(&a.out, &alignment.to_jsonl()?)
}

fn spans_cmd(a: &SpansArgs) -> Result<()> {
    let captions = read_corpus(&a.captions)?;
    let labels = align::read_labels(&a.labels)?;
    let alignment = CorpusAlignment::load(&a.alignments)?;
    let mode = match a.mode {
        SpanModeArg::Coupling => SpanMode::Coupling,
        SpanModeArg::Combined => SpanMode::Combined,
    };
    let spans = align::spans_for_corpus(&captions, &labels, &alignment, mode)?;
    let order = alignment.records.iter().map(|(id, _)| id.as_str());
    write(&a.out, &spans.to_jsonl(order)?)
}

fn load_priors(p: &PriorArgs, known_ids: &HashSet<&str>) -> Result<PriorBundle> {
    let mode = match p.lexicon_mode {
        LexiconMode::DivideBy5 => Normalization::DivideBy5,
        LexiconMode::Affine1To5 => Normalization::Affine1To5,
    };
    let lexicon = p.lexicon.as_ref().map(|l| ConcretenessLexicon::load(l, mode)).transpose()?;
    let spans = p.spans.as_ref().map(RewardedSpanSet::load).transpose()?;
    if let Some(set) = &spans {
        if let Some(id) = set.sentence_ids().find(|id| !known_ids.contains(id)) {
            bail!("spans reference unknown sentence id {id:?}");
        }
    }
    if lexicon.is_none() && p.lambda_c > 0.0 {
        log::info!("no --lexicon given; the concreteness prior is off");
    }
    if spans.is_none() && p.lambda_v > 0.0 {
        log::info!("no --spans given; the span prior is off");
    }
    Ok(PriorBundle::new(p.lambda_c, p.lambda_v, lexicon, spans)?
        .with_placement(placement(p.placement))
        .with_inference_priors(p.inference_priors == OnOff::On))
}

fn placement(p: PlacementArg) -> Placement {
    match p {
        PlacementArg::Root => Placement::Root,
        PlacementArg::NonRoot => Placement::NonRoot,
    }
}

fn sentences(records: &[CorpusRecord], grammar: &LexGrammar) -> Result<Vec<Sentence>> {
    records
        .iter()
        .map(|r| Sentence::from_record(r, grammar.vocab()).with_context(|| format!("sentence {:?}", r.id)))
        .collect()
}

fn ids(records: &[CorpusRecord]) -> Vec<String> {
    records.iter().map(|r| r.id.clone()).collect()
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let records = read_corpus(&a.captions)?;
    let valid_records = a.valid_captions.as_ref().map(read_corpus).transpose()?;
    let mut known: HashSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    if let Some(v) = &valid_records {
        known.extend(v.iter().map(|r| r.id.as_str()));
    }
    let priors = load_priors(&a.priors, &known)?;
    let config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        lambda_c: priors.lambda_c(),
        lambda_v: priors.lambda_v(),
        placement: priors.placement,
        inference_priors: priors.inference_priors_enabled,
        seed: a.seed,
        max_sentence_length: a.max_len,
        checkpoint_dir: Some(a.out.clone()),
        eval_every: a.eval_every,
    };
    config.validate()?;

    let vocab = build_vocabulary(&records, a.min_count)?;
    let mut grammar = LexGrammar::new_random(
        &GrammarConfig {
            num_nonterminals: a.nonterminals,
            num_preterminals: a.preterminals,
            seed: a.seed,
            emission_smoothing: 0.0,
        },
        vocab,
    )?;
    if let Some(path) = &a.vectors {
        let vectors = WordVectors::load(path)?;
        grammar = init_emissions_from_clusters(&grammar, &vectors, a.preterminals, a.cluster_bonus, a.seed)?.0;
    }
    let corpus = sentences(&records, &grammar)?;

    let valid = match (&valid_records, &a.valid_trees) {
        (Some(v), Some(trees)) => {
            let order = ids(v);
            let gold_spans = eval::align_to_ids("gold trees", eval::read_gold_trees(trees, true)?, &order)?;
            let gold_deps = a
                .valid_deps
                .as_ref()
                .map(|p| -> Result<Vec<DependencyParse>> {
                    Ok(eval::align_to_ids("gold dependencies", eval::read_gold_deps(p)?, &order)?)
                })
                .transpose()?;
            Some(ValidationSet {
                sentences: sentences(v, &grammar)?,
                gold_spans,
                gold_deps,
            })
        }
        _ => None,
    };

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let outcome = train::train(&corpus, grammar, &priors, &config, valid.as_ref())?;
    write(&a.out.join("history.json"), &(serde_json::to_string_pretty(&outcome.history)? + "\n"))?;
    let best = &outcome.history[outcome.best_index];
    println!(
        "best checkpoint: epoch {} batch {} (J = {:.4}{})",
        best.epoch,
        best.batch,
        best.objective,
        best.corpus_f1.map(|f| format!(", F1 = {f:.4}")).unwrap_or_default()
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ParseLine {
    id: String,
    tree: String,
    heads: Vec<usize>,
    log_marginal: f64,
    viterbi_score: f64,
}

fn parse_cmd(a: &ParseArgs) -> Result<()> {
    let grammar = LexGrammar::load(&a.grammar)?;
    let records = read_corpus(&a.captions)?;
    let known: HashSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    let priors = load_priors(&a.priors, &known)?;
    let corpus = sentences(&records, &grammar)?;
    let lines: Vec<String> = corpus
        .par_iter()
        .map(|s| -> Result<String> {
            let pots = priors.potentials(s, Phase::Inference);
            let (tree, score) = viterbi(s, &grammar, &pots)?;
            let (z, _) = inside(s, &grammar, &pots)?;
            Ok(serde_json::to_string(&ParseLine {
                id: s.id.clone(),
                tree: tree.to_bracketed(&s.surface),
                heads: tree.dependencies().to_conll(),
                log_marginal: z,
                viterbi_score: score,
            })?)
        })
        .collect::<Result<_>>()?;
    let mut out = lines.join("\n");
    out.push('\n');
    write(&a.out, &out)
}

fn eval_cmd(a: &EvalArgs) -> Result<()> {
    let path = a.pred.display().to_string();
    let text = fs::read_to_string(&a.pred).with_context(|| format!("reading {path}"))?;
    let mut order = Vec::new();
    let mut pred_spans: Vec<SpanSet> = Vec::new();
    let mut pred_deps = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ParseLine = serde_json::from_str(line).with_context(|| format!("{path}:{}", i + 1))?;
        let tree = lexinduce::tree::Bracketed::parse(&rec.tree).with_context(|| format!("{path}:{}", i + 1))?;
        let deps = DependencyParse::from_conll(&rec.heads).with_context(|| format!("{path}:{}", i + 1))?;
        if tree.words().len() != deps.len() {
            bail!("{path}:{}: tree and heads disagree on sentence length", i + 1);
        }
        pred_spans.push(tree.spans(!a.keep_trivial));
        pred_deps.push(deps);
        order.push(rec.id);
    }
    let gold_spans = eval::align_to_ids("gold trees", eval::read_gold_trees(&a.gold_trees, !a.keep_trivial)?, &order)?;
    let gold_deps = eval::align_to_ids("gold dependencies", eval::read_gold_deps(&a.gold_deps)?, &order)?;
    let pos = a
        .pos
        .as_ref()
        .map(|p| -> Result<Vec<Vec<String>>> { Ok(eval::align_to_ids("POS tags", eval::read_pos(p)?, &order)?) })
        .transpose()?;
    let report = EvalReport::compute(&gold_spans, &pred_spans, &gold_deps, &pred_deps, pos.as_deref())?;
    write(&a.out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    let table = report.to_table();
    write(&a.out.with_extension("txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn synth_cmd(a: &SynthArgs) -> Result<()> {
    let config = PlantedConfig {
        seeds: (0..a.seeds).collect(),
        train_size: a.train_size,
        valid_size: a.valid_size,
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        lambda_c: a.lambda_c,
        num_nonterminals: a.nonterminals,
        num_preterminals: a.preterminals,
    };
    let report = planted::planted_grammar_experiment(&config)?;
    write(&a.out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    print!("{}", report.to_table());
    Ok(())
}

fn fixture_cmd(a: &FixtureArgs) -> Result<()> {
    let corpus = planted::sample_corpus(a.size, a.seed, "cap");
    for (name, contents) in planted::fixture_files(&corpus)? {
        write(&a.out.join(name), &contents)?;
    }
    Ok(())
}
