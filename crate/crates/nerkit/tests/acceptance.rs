//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Criterion 7 needs real data and runs only when these are set:
//! `NERKIT_CONLL_TRAIN`, `NERKIT_CONLL_DEV`, `NERKIT_CONLL_TEST` (IOB1 CoNLL
//! English files) and `NERKIT_EMBEDDINGS` (100-dimensional vectors).
//! `NERKIT_ABLATION=1` adds the ablation runs.

use std::path::PathBuf;
use std::time::Instant;

use nerkit::archive::{to_bytes, Model};
use nerkit::config::{ModelKind, RunConfig};
use nerkit::run::train_model;
use nerkit::synth::generate_corpus;
use nerkit_core::chunker::{Action, TransitionState, TransitionSystem};
use nerkit_core::corpus::{
    build_vocab, chunks_to_tags, convert_scheme, tags_to_chunks, write_conll, LabeledChunk, TagScheme,
};
use nerkit_core::crf::{log_partition, viterbi_decode};
use nerkit_core::mathcore::{check_gradients, Selection, Tensor};
use nerkit_core::training::{evaluate_model, train};
use nerkit_core::wordrep::Mode;
use nerkit_core::Rng;
use rand::{Rng as _, SeedableRng};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn random_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-4.0..4.0)).collect()).unwrap()
}

/// Path score from the definition: the transition sum (start, pairs, end)
/// plus the emission sum.
fn brute_score(p: &Tensor, a: &Tensor, y: &[usize]) -> f64 {
    let k = p.cols();
    let mut trans = a.get(k, y[0]);
    for w in y.windows(2) {
        trans += a.get(w[0], w[1]);
    }
    trans += a.get(y[y.len() - 1], k + 1);
    let mut emit = 0.0;
    for (i, &t) in y.iter().enumerate() {
        emit += p.get(i, t);
    }
    trans + emit
}

fn all_scores(p: &Tensor, a: &Tensor) -> Vec<f64> {
    let (n, k) = (p.rows(), p.cols());
    (0..k.pow(n as u32))
        .map(|mut code| {
            let y: Vec<usize> = (0..n)
                .map(|_| {
                    let t = code % k;
                    code /= k;
                    t
                })
                .collect();
            brute_score(p, a, &y)
        })
        .collect()
}

fn crf_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::seed_from_u64(101);
    let (mut worst_z, mut score_mismatch, instances) = (0.0f64, 0, 1500);
    for _ in 0..instances {
        let n = rng.random_range(1..=6);
        let k = rng.random_range(1..=5);
        let p = random_matrix(&mut rng, n, k);
        let a = random_matrix(&mut rng, k + 2, k + 2);
        let scores = all_scores(&p, &a);
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        worst_z = worst_z.max((log_partition(&p, &a).unwrap() - z).abs());
        let (path, score) = viterbi_decode(&p, &a).unwrap();
        if score != max || brute_score(&p, &a, &path) != max {
            score_mismatch += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst_z <= 1e-10 && score_mismatch == 0 && secs < 30.0,
        format!(
            "{instances} instances, max |logZ error| {worst_z:.2e}, viterbi mismatches {score_mismatch}, {secs:.1}s"
        ),
    )
}

fn tiny_config(kind: ModelKind) -> RunConfig {
    RunConfig::from_text(&format!(
        "model = {kind}\nword_dim = 4\nchar_dim = 3\nchar_hidden = 2\nhidden_dim = 3\nprojection_dim = 3\n\
         stack_hidden = 3\naction_dim = 2\ncompose_hidden = 2\ncompose_dim = 3\nstate_hidden = 4\n"
    ))
    .unwrap()
}

fn gradient_integrity() -> Outcome {
    let start = Instant::now();
    let seeds = 20;
    let mut worst = [0.0f64; 2];
    let mut checked = [0usize; 2];
    let mut kinks = [0usize; 2];
    for (slot, kind) in [ModelKind::LstmCrf, ModelKind::StackLstm].into_iter().enumerate() {
        for seed in 0..seeds {
            let sentences = generate_corpus(4, 1000 + seed, TagScheme::Iobes);
            let vocab = build_vocab(&sentences, 1).unwrap();
            let mut model = Model::new(&tiny_config(kind), vocab, seed).unwrap();
            if let Model::Crf(m) = &mut model {
                let mut rng = Rng::seed_from_u64(seed);
                m.store.get_mut(m.transitions).values_mut().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            }
            let sentence = &sentences[seed as usize % sentences.len()];
            let mut store = model.as_model().store().clone();
            let selection = Selection::Sample { per_param: 4, seed };
            let report = check_gradients(&mut store, 1e-5, selection, |s, tape| {
                let mut m = model.clone();
                *m.as_model_mut().store_mut() = s.clone();
                m.as_model().loss(tape, sentence, Mode::Eval, &mut Rng::seed_from_u64(0))
            })
            .unwrap();
            worst[slot] = worst[slot].max(report.max_rel_error);
            checked[slot] += report.checked;
            kinks[slot] += report.kinks.len();
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst.iter().all(|w| *w < 1e-4) && (0..2).all(|i| kinks[i] * 100 <= checked[i]) && secs < 120.0,
        format!(
            "{seeds} seeds each; lstm-crf {} coords max rel {:.2e} ({} at kinks); \
             stack-lstm {} coords max rel {:.2e} ({} at kinks); {secs:.1}s",
            checked[0], worst[0], kinks[0], checked[1], worst[1], kinks[1]
        ),
    )
}

const LABELS: [&str; 3] = ["PER", "LOC", "ORG"];

fn random_chunks(rng: &mut Rng, n: usize) -> Vec<LabeledChunk> {
    let mut chunks = Vec::new();
    let mut i = 0;
    while i < n {
        if rng.random_bool(0.5) {
            let len = rng.random_range(1..=(n - i).min(4));
            chunks.push(LabeledChunk::new(i, i + len - 1, LABELS[rng.random_range(0..LABELS.len())]));
            i += len;
        } else {
            i += 1;
        }
    }
    chunks
}

fn transition_properties() -> Outcome {
    let start = Instant::now();
    let system = TransitionSystem::new(LABELS.iter().map(|s| s.to_string()).collect());
    let mut rng = Rng::seed_from_u64(202);
    let pairs = 12_000;
    let mut failures = 0;
    for _ in 0..pairs {
        let n = rng.random_range(1..=12);
        let gold = random_chunks(&mut rng, n);
        let actions = system.oracle_actions(n, &gold).unwrap();
        let mut ok = (n..=2 * n).contains(&actions.len());
        let mut state = TransitionState::new(n);
        for a in &actions {
            system.apply(&mut state, *a).unwrap();
            ok &= state.output_words() + state.stack().len() + state.buffer().len() == n;
        }
        ok &= state.is_terminal() && state.emitted() == gold.as_slice();
        failures += usize::from(!ok);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(failures == 0 && secs < 60.0, format!("{pairs} pairs, {failures} failures, {secs:.1}s"))
}

fn figure_two() -> Outcome {
    let system = TransitionSystem::new(vec!["PER".into(), "LOC".into()]);
    let per = system.label_index("PER").unwrap();
    let loc = system.label_index("LOC").unwrap();
    let gold = [LabeledChunk::new(0, 1, "PER"), LabeledChunk::new(3, 3, "LOC")];
    let actions = system.oracle_actions(4, &gold).unwrap();
    let expected = [Action::Shift, Action::Shift, Action::Reduce(per), Action::Out, Action::Shift, Action::Reduce(loc)];
    let shown: Vec<String> = actions.iter().map(|a| system.display(*a).to_string()).collect();
    verdict(actions == expected, shown.join(" "))
}

fn scheme_round_trips() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::seed_from_u64(303);
    let sequences = 12_000;
    let mut failures = 0;
    for _ in 0..sequences {
        let n = rng.random_range(1..=15);
        let chunks = random_chunks(&mut rng, n);
        let iob2 = chunks_to_tags(&chunks, n, TagScheme::Iob2).unwrap();
        let iobes = chunks_to_tags(&chunks, n, TagScheme::Iobes).unwrap();
        let ok = convert_scheme(&iob2, TagScheme::Iob2, TagScheme::Iobes).unwrap() == iobes
            && convert_scheme(&iobes, TagScheme::Iobes, TagScheme::Iob2).unwrap() == iob2
            && tags_to_chunks(&iob2, TagScheme::Iob2).unwrap() == chunks
            && tags_to_chunks(&iobes, TagScheme::Iobes).unwrap() == chunks;
        failures += usize::from(!ok);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(failures == 0 && secs < 30.0, format!("{sequences} sequences, {failures} failures, {secs:.1}s"))
}

/// Settings for the overfit run. The chunker trains faster and with more
/// dropout than its defaults.
fn overfit_config(kind: ModelKind) -> RunConfig {
    let (learning_rate, dropout) = match kind {
        ModelKind::LstmCrf => (0.01, None),
        ModelKind::StackLstm => (0.03, Some(0.5)),
    };
    RunConfig { model: kind, epochs: 50, learning_rate, dropout, seed: 1, ..RunConfig::default() }
}

fn overfit() -> Outcome {
    let train_set = generate_corpus(200, 1, TagScheme::Iobes);
    let held_out = generate_corpus(50, 2, TagScheme::Iobes);
    let dev = generate_corpus(50, 3, TagScheme::Iobes);
    let vocab = build_vocab(&train_set, 1).unwrap();
    let mut ok = (250..=350).contains(&vocab.num_words());
    let mut details = vec![format!("vocab {}", vocab.num_words())];
    let start = Instant::now();
    for kind in [ModelKind::LstmCrf, ModelKind::StackLstm] {
        let t = Instant::now();
        let config = overfit_config(kind);
        let mut model = Model::new(&config, vocab.clone(), config.seed).unwrap();
        let report = train(model.as_model_mut(), &train_set, &dev, &config.sgd_config(), |_| {}).unwrap();
        let train_f1 = evaluate_model(model.as_model(), &train_set).unwrap().f1();
        let held_f1 = evaluate_model(model.as_model(), &held_out).unwrap().f1();
        ok &= train_f1 == 100.0 && held_f1 >= 95.0;
        details.push(format!(
            "{kind} lr {} dropout {} epoch {}: train {train_f1:.2} held-out {held_f1:.2} ({:.0}s)",
            config.learning_rate,
            config.dropout(),
            report.best_epoch,
            t.elapsed().as_secs_f64()
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 900.0;
    details.push(format!("{secs:.0}s total"));
    verdict(ok, details.join("; "))
}

fn env_path(key: &str) -> Option<PathBuf> {
    std::env::var_os(key).map(PathBuf::from)
}

fn real_data() -> Outcome {
    let (Some(train_p), Some(dev_p), Some(test_p), Some(emb)) = (
        env_path("NERKIT_CONLL_TRAIN"),
        env_path("NERKIT_CONLL_DEV"),
        env_path("NERKIT_CONLL_TEST"),
        env_path("NERKIT_EMBEDDINGS"),
    ) else {
        return Outcome::Skip("optional; set NERKIT_CONLL_TRAIN/DEV/TEST and NERKIT_EMBEDDINGS to run".into());
    };
    let base = |kind: ModelKind| RunConfig {
        model: kind,
        input_scheme: Some(TagScheme::Iob1),
        pretrained: Some(emb.clone()),
        train: Some(train_p.clone()),
        dev: Some(dev_p.clone()),
        test: Some(test_p.clone()),
        ..RunConfig::default()
    };
    let test_f1 = |config: &RunConfig| -> f64 {
        let outcome = train_model(config, |line| eprintln!("{line}")).unwrap();
        let test = nerkit::io::read_tagged(&test_p, config.normalize_digits, TagScheme::Iob1, config.scheme).unwrap();
        evaluate_model(outcome.model.as_model(), &test).unwrap().f1()
    };
    let crf = test_f1(&base(ModelKind::LstmCrf));
    let chunker = test_f1(&base(ModelKind::StackLstm));
    let mut ok = (89.0..=91.5).contains(&crf) && (88.5..=91.0).contains(&chunker);
    let mut detail = format!("lstm-crf {crf:.2}, stack-lstm {chunker:.2}");
    if std::env::var("NERKIT_ABLATION").as_deref() == Ok("1") {
        let no_pretrain = test_f1(&RunConfig { pretrained: None, ..base(ModelKind::LstmCrf) });
        let no_dropout = test_f1(&RunConfig { dropout: Some(0.0), ..base(ModelKind::LstmCrf) });
        let no_char = test_f1(&RunConfig { use_char: false, ..base(ModelKind::LstmCrf) });
        ok &= crf > no_pretrain && crf > no_dropout && crf > no_char;
        detail.push_str(&format!("; ablation -pretrain {no_pretrain:.2} -dropout {no_dropout:.2} -char {no_char:.2}"));
    }
    verdict(ok, detail)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let train_path = dir.path().join("train.conll");
    let dev_path = dir.path().join("dev.conll");
    std::fs::write(&train_path, write_conll(&generate_corpus(20, 1, TagScheme::Iobes))).unwrap();
    std::fs::write(&dev_path, write_conll(&generate_corpus(10, 3, TagScheme::Iobes))).unwrap();
    let mut details = Vec::new();
    let mut ok = true;
    for kind in [ModelKind::LstmCrf, ModelKind::StackLstm] {
        let config = RunConfig {
            model: kind,
            epochs: 3,
            seed: 11,
            train: Some(train_path.clone()),
            dev: Some(dev_path.clone()),
            ..RunConfig::default()
        };
        let a = train_model(&config, |_| {}).unwrap();
        let b = train_model(&config, |_| {}).unwrap();
        let same = a.archive == b.archive && a.text == b.text && a.report == b.report;
        let rewritten = to_bytes(&a.model, &config).unwrap() == a.archive;
        ok &= same && rewritten;
        details.push(format!("{kind}: archives {} bytes identical={same}", a.archive.len()));
    }
    verdict(ok, details.join("; "))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("CRF oracle equivalence", crf_oracle),
        ("gradient integrity", gradient_integrity),
        ("transition-system properties", transition_properties),
        ("Mark Watney example", figure_two),
        ("scheme round-trips", scheme_round_trips),
        ("overfit on synthetic corpus", overfit),
        ("real-data results", real_data),
        ("determinism", determinism),
    ];
    let only: Option<usize> = std::env::var("NERKIT_CRITERION").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let number = i + 1;
        if only.is_some_and(|o| o != number) {
            continue;
        }
        let (status, detail) = match run() {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{status} criterion {number} ({name}): {detail}");
    }
    if failed > 0 {
        eprintln!("{failed} criteria failed");
        std::process::exit(1);
    }
}
