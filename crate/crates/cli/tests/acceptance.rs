//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use lexinduce::align::{generate_rewarded_spans, AlignmentPair, LabelRecord, SpanMode};
use lexinduce::chart::logsumexp;
use lexinduce::enumerate::for_each_tree;
use lexinduce::eval::{corpus_f1, das, root_pos_distribution, sentence_f1, uas, EvalReport, SpanSet};
use lexinduce::planted::{planted_grammar_experiment, PlantedConfig, BASELINE, CONCRETE};
use lexinduce::{
    expected_counts, inside, rewarded_span_probability, tree_score, viterbi, ConcretenessLexicon, DependencyParse,
    GrammarConfig, LexGrammar, Normalization, Phase, PriorBundle, RewardedSpan, RewardedSpanSet, Sentence, Vocabulary,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

const WORDS: [&str; 4] = ["a", "dog", "runs", "fast"];

struct Instance {
    grammar: LexGrammar,
    sentence: Sentence,
    priors: PriorBundle,
}

/// A random grammar over a 5-word vocabulary (4 words plus UNK), a random
/// sentence, a random concreteness lexicon and random rewarded spans.
fn instance(seed: u64, n: usize, nt: usize, pt: usize, lambda_c: f64, lambda_v: f64, spans: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = Vocabulary::new(WORDS.iter().map(|w| w.to_string()).collect()).unwrap();
    let mut grammar = LexGrammar::new_random(
        &GrammarConfig {
            num_nonterminals: nt,
            num_preterminals: pt,
            seed,
            emission_smoothing: 0.0,
        },
        vocab.clone(),
    )
    .unwrap();
    grammar
        .update(|t| {
            for k in 0..t.len() {
                let v = t.get_flat(k);
                t.set_flat(k, 10.0 * v);
            }
        })
        .unwrap();
    let words: Vec<&str> = (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
    let sentence = Sentence::from_words(format!("s{seed}"), &words, &vocab).unwrap();
    let lexicon = ConcretenessLexicon::from_scores(WORDS.iter().map(|w| (*w, rng.random::<f64>()))).unwrap();
    let mut set = RewardedSpanSet::new();
    for _ in 0..spans {
        let start = rng.random_range(0..n - 1);
        let end = rng.random_range(start + 1..n);
        let head = if rng.random_bool(0.5) { start } else { end };
        set.insert(&sentence.id, RewardedSpan::new(start, end, head).unwrap());
    }
    let priors = PriorBundle::new(lambda_c, lambda_v, Some(lexicon), Some(set)).unwrap();
    Instance {
        grammar,
        sentence,
        priors,
    }
}

fn tree_count(n: usize, nt: usize, pt: usize) -> usize {
    let catalan = (0..n - 1).fold(1usize, |c, k| c * 2 * (2 * k + 1) / (k + 2));
    catalan * (1 << (n - 1)) * nt.pow(n as u32 - 1) * pt.pow(n as u32)
}

// sizes are redrawn when the enumeration would exceed this many trees
const MAX_TREES: usize = 600_000;

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_z, mut worst_v) = (0.0f64, 0.0f64);
    let mut largest = 0;
    for i in 0..50u64 {
        let n = 2 + (i as usize % 4);
        let (nt, pt) = loop {
            let (a, b) = (rng.random_range(1..=3), rng.random_range(1..=3));
            if tree_count(n, a, b) <= MAX_TREES {
                break (a, b);
            }
        };
        largest = largest.max(tree_count(n, nt, pt));
        let lc = rng.random_range(0.0..=2.0);
        let lv = rng.random_range(0.0..=2.0);
        let spans = rng.random_range(0..=2);
        let inst = instance(i, n, nt, pt, lc, lv, spans);
        let pots = inst.priors.potentials(&inst.sentence, Phase::Train);
        let mut scores = Vec::with_capacity(tree_count(n, nt, pt));
        for_each_tree(n, nt, pt, |t| {
            scores.push(tree_score(t, &inst.sentence, &inst.grammar, &pots).unwrap())
        })
        .map_err(|e| e.to_string())?;
        let (z, _) = inside(&inst.sentence, &inst.grammar, &pots).map_err(|e| e.to_string())?;
        let (_, best) = viterbi(&inst.sentence, &inst.grammar, &pots).map_err(|e| e.to_string())?;
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        worst_z = worst_z.max((z - logsumexp(scores.iter().copied())).abs());
        worst_v = worst_v.max((best - max).abs());
    }
    let elapsed = start.elapsed();
    check(worst_z <= 1e-9, format!("inside differs from enumeration by {worst_z:e}"))?;
    check(worst_v <= 1e-9, format!("Viterbi differs from enumerated max by {worst_v:e}"))?;
    check(elapsed < Duration::from_secs(30), format!("took {elapsed:?}"))?;
    Ok(format!(
        "50 instances, max |Z - lse| = {worst_z:.1e}, max |viterbi - max| = {worst_v:.1e}, largest enumeration {largest} trees, {:.1} s",
        elapsed.as_secs_f64()
    ))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let eps = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for seed in 0..10u64 {
        let n = 3 + seed as usize % 2;
        let inst = instance(100 + seed, n, 2, 2, 1.0, 1.0, 1);
        let pots = inst.priors.potentials(&inst.sentence, Phase::Train);
        let ec = expected_counts(&inst.sentence, &inst.grammar, &pots).map_err(|e| e.to_string())?;
        for k in 0..inst.grammar.logits().len() {
            let z = |delta: f64| {
                let mut g = inst.grammar.clone();
                g.update(|t| {
                    let v = t.get_flat(k);
                    t.set_flat(k, v + delta)
                })
                .unwrap();
                inside(&inst.sentence, &g, &pots).unwrap().0
            };
            let fd = (z(eps) - z(-eps)) / (2.0 * eps);
            let an = ec.gradient.get_flat(k);
            checked += 1;
            // both numerically zero: logits of rows the sentence never touches
            if an.abs() < 1e-7 && fd.abs() < 1e-7 {
                continue;
            }
            let rel = (an - fd).abs() / an.abs().max(fd.abs());
            worst = worst.max(rel);
        }
    }
    let elapsed = start.elapsed();
    check(worst < 1e-4, format!("max relative error {worst:e}"))?;
    check(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!(
        "10 instances, {checked} logits, max relative error {worst:.1e}, {:.1} s",
        elapsed.as_secs_f64()
    ))
}

const LAMBDAS: [f64; 5] = [0.0, 1.0, 2.0, 4.0, 8.0];

fn criterion_3() -> Outcome {
    let mut min_root: f64 = 1.0;
    let mut min_span: f64 = 1.0;
    for seed in 0..10u64 {
        let n = 3 + seed as usize % 3;
        let base = instance(300 + seed, n, 2, 2, 0.0, 0.0, 0);
        let s = &base.sentence;
        let g = &base.grammar;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        // concreteness with a clear winner among the words present
        let mut levels = [0.9, 0.6, 0.35, 0.1];
        for i in (1..levels.len()).rev() {
            levels.swap(i, rng.random_range(0..=i));
        }
        let lexicon = ConcretenessLexicon::from_scores(WORDS.iter().copied().zip(levels)).unwrap();
        let conc: Vec<f64> = s.lemmas.iter().map(|l| lexicon.lookup(l)).collect();
        let top = conc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let root_prob = |lambda: f64| -> f64 {
            let priors = PriorBundle::new(lambda, 0.0, Some(lexicon.clone()), None).unwrap();
            let (_, chart) = inside(s, g, &priors.potentials(s, Phase::Train)).unwrap();
            chart
                .root_head_posterior()
                .iter()
                .zip(&conc)
                .filter(|(_, c)| **c == top)
                .map(|(p, _)| p)
                .sum()
        };
        let probs: Vec<f64> = LAMBDAS.iter().map(|&l| root_prob(l)).collect();
        for w in probs.windows(2) {
            check(w[1] >= w[0] - 1e-12, format!("seed {seed}: root posterior decreased {probs:?}"))?;
        }
        let p50 = root_prob(50.0);
        check(p50 > 0.99, format!("seed {seed}: root posterior {p50} at lambda_c = 50"))?;
        min_root = min_root.min(p50);

        let start = rng.random_range(0..n - 1);
        let end = rng.random_range(start + 1..n);
        let head = if rng.random_bool(0.5) { start } else { end };
        let mut set = RewardedSpanSet::new();
        set.insert(&s.id, RewardedSpan::new(start, end, head).unwrap());
        let span_prob = |lambda: f64| -> f64 {
            let priors = PriorBundle::new(0.0, lambda, None, Some(set.clone())).unwrap();
            rewarded_span_probability(s, g, &priors.potentials(s, Phase::Train)).unwrap()
        };
        let probs: Vec<f64> = LAMBDAS.iter().map(|&l| span_prob(l)).collect();
        for w in probs.windows(2) {
            check(w[1] >= w[0] - 1e-12, format!("seed {seed}: span probability decreased {probs:?}"))?;
        }
        let p50 = span_prob(50.0);
        check(p50 > 0.99, format!("seed {seed}: span probability {p50} at lambda_v = 50"))?;
        min_span = min_span.min(p50);
    }
    Ok(format!(
        "10 instances, both posteriors non-decreasing; at lambda = 50 min P(root) = {min_root:.6}, min P(span) = {min_span:.6}"
    ))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_lexinduce"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "lexinduce {} exited with {}: {}",
            args.first().unwrap_or(&""),
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(())
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

fn criterion_4() -> Outcome {
    // the hand trace: a girl eating cake, F = [2, 1, 3]
    let labels = LabelRecord {
        sentence_id: "g".into(),
        activity: "eat".into(),
        participants: vec!["girl".into(), "cake".into()],
    };
    let aligns: Vec<AlignmentPair> = [(2, 0), (1, 1), (3, 2)]
        .iter()
        .map(|&(pos, idx)| AlignmentPair {
            caption_token: String::new(),
            label_token: String::new(),
            dice_score: 1.0,
            caption_position: pos,
            label_position: idx,
        })
        .collect();
    let spans: Vec<_> = generate_rewarded_spans(&labels, &aligns, SpanMode::Coupling)
        .iter()
        .map(|s| s.triple())
        .collect();
    check(spans == vec![(1, 2, 2), (2, 3, 2)], format!("hand trace gave {spans:?}"))?;

    let fig3 = root().join("data/fig3");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = |name: &str| tmp.path().join(name);
    run_cli(&[
        "align",
        "--captions",
        p(&fig3.join("captions.tsv")),
        "--labels",
        p(&fig3.join("labels.jsonl")),
        "--stopwords",
        p(&root().join("data/stopwords_en.txt")),
        "--out",
        p(&out("alignments.jsonl")),
    ])?;
    for mode in ["coupling", "combined"] {
        run_cli(&[
            "spans",
            "--captions",
            p(&fig3.join("captions.tsv")),
            "--labels",
            p(&fig3.join("labels.jsonl")),
            "--alignments",
            p(&out("alignments.jsonl")),
            "--mode",
            mode,
            "--out",
            p(&out(&format!("spans_{mode}.jsonl"))),
        ])?;
    }
    for name in ["alignments.jsonl", "spans_coupling.jsonl", "spans_combined.jsonl"] {
        let got = fs::read(out(name)).map_err(|e| e.to_string())?;
        let want = fs::read(fig3.join(name)).map_err(|e| e.to_string())?;
        check(got == want, format!("{name} differs from the golden file"))?;
    }
    let golden = fs::read_to_string(fig3.join("spans_coupling.jsonl")).map_err(|e| e.to_string())?;
    check(
        golden.contains(r#"{"sentence_id":"g1","spans":[[1,2,2],[2,3,2]]}"#),
        "golden file lacks the hand-traced record",
    )?;
    // k2's predicate is left unaligned
    let combined = fs::read_to_string(fig3.join("spans_combined.jsonl")).map_err(|e| e.to_string())?;
    check(
        combined.contains(r#"{"sentence_id":"k2","spans":[]}"#) && golden.contains(r#"{"sentence_id":"k2","spans":[[0,1,0]]}"#),
        "combined mode kept spans for an unaligned predicate",
    )?;
    Ok("hand trace {(1,2,2),(2,3,2)}; alignments and both span files match goldens byte-for-byte; unaligned predicate yields no combined spans".into())
}

fn set(spans: &[(usize, usize)]) -> SpanSet {
    spans.iter().copied().collect()
}

fn deps(heads: &[usize]) -> DependencyParse {
    DependencyParse::from_conll(heads).unwrap()
}

fn close(a: f64, b: f64, what: &str) -> Result<(), String> {
    check((a - b).abs() <= 1e-12, format!("{what}: {a} != {b}"))
}

fn criterion_5() -> Outcome {
    let gold = vec![set(&[(0, 1), (2, 3)])];
    let pred = vec![set(&[(0, 1), (1, 3)])];
    close(corpus_f1(&gold, &pred).unwrap(), 0.5, "corpus F1")?;
    close(corpus_f1(&gold, &gold).unwrap(), 1.0, "identical F1")?;
    close(corpus_f1(&gold, &[set(&[])]).unwrap(), 0.0, "empty prediction F1")?;
    let g2 = vec![set(&[(0, 1)]), gold[0].clone()];
    let p2 = vec![set(&[(0, 1)]), pred[0].clone()];
    close(sentence_f1(&g2, &p2).unwrap(), 0.75, "sentence F1")?;
    close(sentence_f1(&[set(&[])], &[set(&[])]).unwrap(), 1.0, "both-empty sentence F1")?;

    close(das(&[deps(&[2, 0, 2, 3])], &[deps(&[2, 0, 1, 1])]).unwrap(), 0.5, "DAS")?;
    let chain_g = [deps(&[0, 1, 2])];
    let chain_p = [deps(&[2, 3, 0])];
    close(das(&chain_g, &chain_p).unwrap(), 0.0, "reversed chain DAS")?;
    close(uas(&chain_g, &chain_p).unwrap(), 2.0 / 3.0, "reversed chain UAS")?;
    check(das(&[], &[]).is_err(), "empty corpus accepted")?;

    let roots: Vec<DependencyParse> = (0..10).map(|_| deps(&[0, 1])).collect();
    let tags: Vec<Vec<String>> = (0..10)
        .map(|i| vec![if i < 6 { "NOUN" } else { "VERB" }.to_string(), "DET".to_string()])
        .collect();
    let dist = root_pos_distribution(&roots, &tags).unwrap();
    close(dist["NOUN"], 0.6, "noun roots")?;
    close(dist["VERB"], 0.4, "verb roots")?;

    let lex = ConcretenessLexicon::load(root().join("data/concreteness_excerpt.tsv"), Normalization::DivideBy5)
        .map_err(|e| e.to_string())?;
    for (w, v) in [("fans", 0.942), ("basketball", 0.994), ("game", 0.9), ("in", 0.6)] {
        close(lex.lookup(w), v, w)?;
    }
    close(lex.lookup("unlisted"), 0.0, "absent lemma")?;
    Ok("F1 0.5 / macro 0.75, DAS 0.5, chain UAS 2/3, roots 0.6/0.4, fans 0.942 basketball 0.994 game 0.9 in 0.6".into())
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let report = planted_grammar_experiment(&PlantedConfig::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let base = report.mean_das(BASELINE).ok_or("no baseline row")?;
    let conc = report.mean_das(CONCRETE).ok_or("no concrete row")?;
    check(report.config.seeds.len() >= 5, "fewer than 5 seeds")?;
    check(conc > base, format!("mean DAS with prior {conc:.4} <= without {base:.4}"))?;
    check(report.objective_improved_everywhere(), "some run ended below its initial objective")?;
    check(elapsed < Duration::from_secs(600), format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} seeds, mean DAS {conc:.4} (lambda_c = {}) vs {base:.4} (lambda_c = 0), objective improved in all {} runs, {:.1} s",
        report.config.seeds.len(),
        report.config.lambda_c,
        report.runs.len(),
        elapsed.as_secs_f64()
    ))
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.clone(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let fx = root().join("data/fixture");
    let f = |name: &str| fx.join(name).to_str().unwrap().to_string();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let t = |name: &str| tmp.path().join(name).to_str().unwrap().to_string();
    let stop = root().join("data/stopwords_en.txt");

    run_cli(&["align", "--captions", &f("captions.tsv"), "--labels", &f("labels.jsonl"), "--stopwords", p(&stop), "--out", &t("align.jsonl")])?;
    run_cli(&["spans", "--captions", &f("captions.tsv"), "--labels", &f("labels.jsonl"), "--alignments", &t("align.jsonl"), "--out", &t("spans.jsonl")])?;
    run_cli(&[
        "train", "--captions", &f("captions.tsv"), "--lexicon", &f("concreteness.tsv"), "--spans", &t("spans.jsonl"),
        "--valid-captions", &f("captions.tsv"), "--valid-trees", &f("gold_trees.txt"), "--valid-deps", &f("gold_deps.conll"),
        "--nonterminals", "5", "--preterminals", "6", "--min-count", "1", "--lambda-c", "1.0", "--lambda-v", "1.0",
        "--placement", "non_root", "--inference-priors", "on", "--epochs", "2", "--batch-size", "20", "--lr", "0.1",
        "--seed", "0", "--max-len", "20", "--out", &t("run"),
    ])?;
    run_cli(&[
        "parse", "--grammar", &t("run/best.json"), "--captions", &f("captions.tsv"), "--lexicon", &f("concreteness.tsv"),
        "--spans", &t("spans.jsonl"), "--out", &t("parses.jsonl"),
    ])?;
    run_cli(&[
        "eval", "--pred", &t("parses.jsonl"), "--gold-trees", &f("gold_trees.txt"), "--gold-deps", &f("gold_deps.conll"),
        "--pos", &f("pos.txt"), "--out", &t("report.json"),
    ])?;

    let text = fs::read_to_string(t("report.json")).map_err(|e| e.to_string())?;
    let report: EvalReport = serde_json::from_str(&text).map_err(|e| format!("report.json: {e}"))?;
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["corpus_f1", "sentence_f1", "das", "uas", "n_sentences", "root_pos_distribution"] {
        check(value.get(key).is_some(), format!("report lacks {key}"))?;
    }
    for (name, v) in [("corpus_f1", report.corpus_f1), ("sentence_f1", report.sentence_f1), ("das", report.das), ("uas", report.uas)] {
        check((0.0..=1.0).contains(&v), format!("{name} = {v} outside [0, 1]"))?;
    }
    check(report.das <= report.uas, "DAS exceeds UAS")?;
    check(report.n_sentences == 200, format!("{} sentences evaluated", report.n_sentences))?;
    let dist_sum: f64 = report.root_pos_distribution.as_ref().ok_or("no root distribution")?.values().sum();
    check((dist_sum - 1.0).abs() < 1e-9, format!("root distribution sums to {dist_sum}"))?;

    let before = snapshot(tmp.path());
    for manifest in ["align.jsonl.manifest.json", "spans.jsonl.manifest.json", "run/manifest.json", "parses.jsonl.manifest.json", "report.json.manifest.json"] {
        run_cli(&["replay", "--manifest", &t(manifest)])?;
    }
    let after = snapshot(tmp.path());
    check(before.len() == after.len(), "replay changed the set of output files")?;
    for (path, bytes) in &before {
        check(after.get(path) == Some(bytes), format!("{} changed on replay", path.display()))?;
    }
    Ok(format!(
        "align -> spans -> train (2 epochs, 200 captions) -> parse -> eval exit 0; F1 {:.4} DAS {:.4} UAS {:.4}; {} files byte-identical after replay; {:.1} s",
        report.corpus_f1,
        report.das,
        report.uas,
        before.len(),
        start.elapsed().as_secs_f64()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("oracle equivalence", criterion_1),
        ("gradient correctness", criterion_2),
        ("prior monotonicity", criterion_3),
        ("alignment/span fixtures", criterion_4),
        ("metric fixtures", criterion_5),
        ("planted-grammar surrogate", criterion_6),
        ("end-to-end pipeline", criterion_7),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("criterion {} ({name}): PASS  {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL  {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
