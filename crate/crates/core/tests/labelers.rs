use nerkit_core::chunker::{ChunkerConfig, StackLstmChunker};
use nerkit_core::corpus::{build_vocab, parse_conll, validate, ConllOptions, TagScheme};
use nerkit_core::crf::{CrfTagger, CrfTaggerConfig};
use nerkit_core::training::{evaluate_model, train, SequenceModel, SgdConfig};
use nerkit_core::wordrep::WordRepConfig;
use nerkit_core::Rng;
use proptest::prelude::*;
use rand::SeedableRng;

const CORPUS: &str = "\
Mark B-PER
Watney E-PER
visited O
Mars S-LOC

Lena S-PER
joined O
Acme B-ORG
Robotics E-ORG

the O
rover O
left O
Mars S-LOC
";

fn word() -> WordRepConfig {
    WordRepConfig { word_dim: 8, char_dim: 4, char_hidden: 4, dropout: 0.0, singleton_unk: 0.0, ..Default::default() }
}

fn check_fits(model: &mut dyn SequenceModel, epochs: usize) {
    let sentences = parse_conll(CORPUS, &ConllOptions::default()).unwrap();
    let config = SgdConfig { learning_rate: 0.1, epochs, ..SgdConfig::default() };
    let report = train(model, &sentences, &sentences, &config, |_| {}).unwrap();
    assert_eq!(report.best_dev_f1, Some(100.0));
    assert_eq!(evaluate_model(model, &sentences).unwrap().f1(), 100.0);
}

#[test]
fn crf_tagger_fits_a_tiny_corpus() {
    let sentences = parse_conll(CORPUS, &ConllOptions::default()).unwrap();
    let vocab = build_vocab(&sentences, 1).unwrap();
    let config = CrfTaggerConfig { word: word(), hidden_dim: 6, projection_dim: 6, ..Default::default() };
    let mut tagger = CrfTagger::new(config, vocab, &mut Rng::seed_from_u64(3)).unwrap();
    check_fits(&mut tagger, 60);
}

#[test]
fn chunker_fits_a_tiny_corpus() {
    let sentences = parse_conll(CORPUS, &ConllOptions::default()).unwrap();
    let vocab = build_vocab(&sentences, 1).unwrap();
    let config = ChunkerConfig {
        word: word(),
        stack_hidden: 8,
        action_dim: 4,
        compose_hidden: 4,
        compose_dim: 6,
        state_hidden: 16,
        ..Default::default()
    };
    let mut chunker = StackLstmChunker::new(config, vocab, &mut Rng::seed_from_u64(3)).unwrap();
    check_fits(&mut chunker, 150);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn untrained_predictions_are_valid(words in prop::collection::vec("[A-Za-z0-9]{1,6}", 1..10), seed in 0u64..1000) {
        let sentences = parse_conll(CORPUS, &ConllOptions::default()).unwrap();
        let vocab = build_vocab(&sentences, 1).unwrap();
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        let s = nerkit_core::corpus::Sentence::from_words(&refs, true).unwrap();
        let crf = CrfTagger::new(
            CrfTaggerConfig { word: word(), hidden_dim: 4, projection_dim: 4, constrained_decoding: true, ..Default::default() },
            vocab.clone(),
            &mut Rng::seed_from_u64(seed),
        )
        .unwrap();
        let chunker = StackLstmChunker::new(
            ChunkerConfig { word: word(), stack_hidden: 4, action_dim: 2, compose_hidden: 2, compose_dim: 3, state_hidden: 4, ..Default::default() },
            vocab,
            &mut Rng::seed_from_u64(seed),
        )
        .unwrap();
        validate(&crf.predict_tags(&s).unwrap(), TagScheme::Iobes).unwrap();
        validate(&chunker.predict_tags(&s).unwrap(), TagScheme::Iobes).unwrap();
    }
}
