//! The train, tag and eval workflows behind the command-line tool.

use std::collections::BTreeSet;
use std::path::Path;

use nerkit_core::corpus::{build_vocab, parse_conll, ConllOptions, Sentence};
use nerkit_core::eval::{evaluate_tags, EvalReport};
use nerkit_core::training::{evaluate_model, train, TrainReport};
use nerkit_core::wordrep::{load_pretrained, lookup_keys, PretrainedReport};

use crate::archive::{to_bytes, Model};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{read_embeddings, read_raw_tagged, read_tagged};

pub struct TrainOutcome {
    pub model: Model,
    pub archive: Vec<u8>,
    pub report: TrainReport,
    /// Training report followed by the test table when a test set is given.
    pub text: String,
    pub pretrained: Option<PretrainedReport>,
}

fn required<'a>(path: &'a Option<std::path::PathBuf>, key: &str) -> Result<&'a Path> {
    path.as_deref().ok_or_else(|| Error::Usage(format!("missing required setting {key}")))
}

/// Trains a model as described by `config`. Epoch lines go to `on_line` as
/// they are produced.
pub fn train_model(config: &RunConfig, mut on_line: impl FnMut(&str)) -> Result<TrainOutcome> {
    let read = |p: &Path| read_tagged(p, config.normalize_digits, config.input_scheme(), config.scheme);
    let train_set = read(required(&config.train, "train")?)?;
    let dev_set = match &config.dev {
        Some(p) => read(p)?,
        None => Vec::new(),
    };
    let test_set = match &config.test {
        Some(p) => read(p)?,
        None => Vec::new(),
    };
    let mut vocab = build_vocab(&train_set, config.min_word_freq)?;
    let embeddings = match &config.pretrained {
        Some(path) => {
            let extra: BTreeSet<String> = dev_set
                .iter()
                .chain(&test_set)
                .flat_map(|s| s.tokens().iter().map(|t| t.normalized.clone()))
                .filter(|w| !vocab.contains_word(w))
                .collect();
            let mut keys = lookup_keys(&vocab);
            keys.extend(extra.iter().flat_map(|w| [w.clone(), w.to_lowercase()]));
            let file = read_embeddings(path, config.word_dim, &keys)?;
            let covered = extra
                .into_iter()
                .filter(|w| file.vectors.contains_key(w) || file.vectors.contains_key(&w.to_lowercase()));
            vocab.extend_words(covered);
            Some(file)
        }
        None => None,
    };

    let mut model = Model::new(config, vocab, config.seed)?;
    let pretrained = match &embeddings {
        Some(file) => Some(match &mut model {
            Model::Crf(m) => load_pretrained(&m.wordrep.words, &mut m.store, &m.vocab, file)?,
            Model::Chunker(m) => load_pretrained(&m.wordrep.words, &mut m.store, &m.vocab, file)?,
        }),
        None => None,
    };
    let report = train(model.as_model_mut(), &train_set, &dev_set, &config.sgd_config(), |e| on_line(&e.to_line()))?;
    let mut text = report.to_lines();
    if !test_set.is_empty() {
        let r = evaluate_model(model.as_model(), &test_set)?;
        text.push_str("test\n");
        text.push_str(&r.to_table());
    }
    let archive = to_bytes(&model, config)?;
    Ok(TrainOutcome { model, archive, report, text, pretrained })
}

/// Token and predicted tag per line, sentences separated by blank lines.
pub fn tag_text(model: &Model, normalize_digits: bool, input: &str) -> Result<String> {
    let options = ConllOptions { tag_column: None, normalize_digits, ..ConllOptions::default() };
    let sentences = parse_conll(input, &options)?;
    let mut out = String::new();
    for s in &sentences {
        for (t, tag) in s.tokens().iter().zip(model.predict_tags(s)?) {
            out.push_str(&t.surface);
            out.push(' ');
            out.push_str(&tag);
            out.push('\n');
        }
        out.push('\n');
    }
    Ok(out)
}

/// Checks that `pred` and `gold` hold the same tokens sentence by sentence.
pub fn check_alignment(pred: &[Sentence], gold: &[Sentence]) -> Result<()> {
    for (i, (p, g)) in pred.iter().zip(gold).enumerate() {
        let same = p.len() == g.len() && p.tokens().iter().zip(g.tokens()).all(|(a, b)| a.surface == b.surface);
        if !same {
            return Err(Error::Alignment {
                sentence: i + 1,
                message: format!("{} predicted tokens, {} gold", p.len(), g.len()),
            });
        }
    }
    if pred.len() != gold.len() {
        let first = pred.len().min(gold.len()) + 1;
        return Err(Error::Alignment {
            sentence: first,
            message: format!("{} predicted sentences, {} gold", pred.len(), gold.len()),
        });
    }
    Ok(())
}

/// Entity scores of a predicted file against a gold file.
pub fn eval_files(pred: &Path, gold: &Path, scheme: nerkit_core::corpus::TagScheme) -> Result<EvalReport> {
    let pred_s = read_raw_tagged(pred)?;
    let gold_s = read_raw_tagged(gold)?;
    check_alignment(&pred_s, &gold_s)?;
    let tags = |ss: &[Sentence]| -> Vec<Vec<String>> {
        ss.iter().map(|s| s.gold_tags().expect("tagged").into_iter().map(str::to_string).collect()).collect()
    };
    evaluate_tags(&tags(&pred_s), &tags(&gold_s), scheme).map_err(|source| match source {
        nerkit_core::Error::Validation { .. } => Error::Input { path: pred.to_path_buf(), source },
        other => other.into(),
    })
}
