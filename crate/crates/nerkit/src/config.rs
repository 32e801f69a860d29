//! Run configuration: a line-oriented `key = value` file overridden by flags.
//!
//! ```text
//! # comments and blank lines are ignored
//! model = stack-lstm
//! scheme = iobes
//! word_dim = 100
//! dropout = 0.2
//! ```

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use nerkit_core::chunker::ChunkerConfig;
use nerkit_core::corpus::TagScheme;
use nerkit_core::crf::CrfTaggerConfig;
use nerkit_core::rnn::{LstmOptions, Peephole};
use nerkit_core::training::SgdConfig;
use nerkit_core::wordrep::WordRepConfig;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    LstmCrf,
    StackLstm,
}

impl ModelKind {
    pub fn default_dropout(self) -> f64 {
        match self {
            ModelKind::LstmCrf => 0.5,
            ModelKind::StackLstm => 0.2,
        }
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "lstm-crf" => Ok(ModelKind::LstmCrf),
            "stack-lstm" => Ok(ModelKind::StackLstm),
            _ => Err(format!("unknown model {s:?}, expected lstm-crf or stack-lstm")),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::LstmCrf => "lstm-crf",
            ModelKind::StackLstm => "stack-lstm",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    /// Scheme the model reads and writes.
    pub scheme: TagScheme,
    /// Scheme of the input files when it differs from `scheme`.
    pub input_scheme: Option<TagScheme>,
    pub word_dim: usize,
    pub char_dim: usize,
    pub char_hidden: usize,
    pub use_char: bool,
    /// `None` takes the model's default.
    pub dropout: Option<f64>,
    pub singleton_unk: f64,
    pub peephole: Peephole,
    pub hidden_dim: usize,
    pub projection_dim: usize,
    pub constrained_decoding: bool,
    pub stack_hidden: usize,
    pub stack_layers: usize,
    pub action_dim: usize,
    pub compose_hidden: usize,
    pub compose_dim: usize,
    pub state_hidden: usize,
    pub normalize_digits: bool,
    pub min_word_freq: usize,
    pub pretrained: Option<PathBuf>,
    pub learning_rate: f64,
    pub clip: f64,
    pub epochs: usize,
    pub patience: Option<usize>,
    pub seed: u64,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelKind::LstmCrf,
            scheme: TagScheme::Iobes,
            input_scheme: None,
            word_dim: 100,
            char_dim: 25,
            char_hidden: 25,
            use_char: true,
            dropout: None,
            singleton_unk: 0.5,
            peephole: Peephole::Diagonal,
            hidden_dim: 100,
            projection_dim: 100,
            constrained_decoding: false,
            stack_hidden: 100,
            stack_layers: 2,
            action_dim: 16,
            compose_hidden: 20,
            compose_dim: 20,
            state_hidden: 100,
            normalize_digits: true,
            min_word_freq: 1,
            pretrained: None,
            learning_rate: 0.01,
            clip: 5.0,
            epochs: 100,
            patience: None,
            seed: 1,
            train: None,
            dev: None,
            test: None,
            out: None,
            report: None,
        }
    }
}

/// Keys stored in a model archive; everything needed to rebuild the network.
pub const MODEL_KEYS: &[&str] = &[
    "model",
    "scheme",
    "word_dim",
    "char_dim",
    "char_hidden",
    "use_char",
    "dropout",
    "singleton_unk",
    "peephole",
    "hidden_dim",
    "projection_dim",
    "constrained_decoding",
    "stack_hidden",
    "stack_layers",
    "action_dim",
    "compose_hidden",
    "compose_dim",
    "state_hidden",
    "normalize_digits",
];

pub const ALL_KEYS: &[&str] = &[
    "model",
    "scheme",
    "input_scheme",
    "word_dim",
    "char_dim",
    "char_hidden",
    "use_char",
    "dropout",
    "singleton_unk",
    "peephole",
    "hidden_dim",
    "projection_dim",
    "constrained_decoding",
    "stack_hidden",
    "stack_layers",
    "action_dim",
    "compose_hidden",
    "compose_dim",
    "state_hidden",
    "normalize_digits",
    "min_word_freq",
    "pretrained",
    "learning_rate",
    "clip",
    "epochs",
    "patience",
    "seed",
    "train",
    "dev",
    "test",
    "out",
    "report",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| Error::Usage(format!("invalid value {value:?} for {key}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Usage(format!("invalid value {value:?} for {key}: expected true or false"))),
    }
}

fn parse_peephole(key: &str, value: &str) -> Result<Peephole> {
    match value {
        "diagonal" => Ok(Peephole::Diagonal),
        "full" => Ok(Peephole::Full),
        _ => Err(Error::Usage(format!("invalid value {value:?} for {key}: expected diagonal or full"))),
    }
}

fn positive(key: &str, value: &str) -> Result<usize> {
    let n: usize = parse(key, value)?;
    if n == 0 {
        return Err(Error::Usage(format!("{key} must be positive")));
    }
    Ok(n)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "model" => self.model = parse(key, v)?,
            "scheme" => self.scheme = parse(key, v)?,
            "input_scheme" => self.input_scheme = Some(parse(key, v)?),
            "word_dim" => self.word_dim = positive(key, v)?,
            "char_dim" => self.char_dim = positive(key, v)?,
            "char_hidden" => self.char_hidden = positive(key, v)?,
            "use_char" => self.use_char = parse_bool(key, v)?,
            "dropout" => {
                let d: f64 = parse(key, v)?;
                if !(0.0..1.0).contains(&d) {
                    return Err(Error::Usage(format!("dropout must be in [0, 1), got {d}")));
                }
                self.dropout = Some(d);
            }
            "singleton_unk" => {
                let p: f64 = parse(key, v)?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Usage(format!("singleton_unk must be in [0, 1], got {p}")));
                }
                self.singleton_unk = p;
            }
            "peephole" => self.peephole = parse_peephole(key, v)?,
            "hidden_dim" => self.hidden_dim = positive(key, v)?,
            "projection_dim" => self.projection_dim = positive(key, v)?,
            "constrained_decoding" => self.constrained_decoding = parse_bool(key, v)?,
            "stack_hidden" => self.stack_hidden = positive(key, v)?,
            "stack_layers" => self.stack_layers = positive(key, v)?,
            "action_dim" => self.action_dim = positive(key, v)?,
            "compose_hidden" => self.compose_hidden = positive(key, v)?,
            "compose_dim" => self.compose_dim = positive(key, v)?,
            "state_hidden" => self.state_hidden = positive(key, v)?,
            "normalize_digits" => self.normalize_digits = parse_bool(key, v)?,
            "min_word_freq" => self.min_word_freq = positive(key, v)?,
            "pretrained" => self.pretrained = Some(v.into()),
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "clip" => self.clip = parse(key, v)?,
            "epochs" => self.epochs = positive(key, v)?,
            "patience" => self.patience = Some(positive(key, v)?),
            "seed" => self.seed = parse(key, v)?,
            "train" => self.train = Some(v.into()),
            "dev" => self.dev = Some(v.into()),
            "test" => self.test = Some(v.into()),
            "out" => self.out = Some(v.into()),
            "report" => self.report = Some(v.into()),
            _ => return Err(Error::Usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment line.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("config line {}: expected key = value", i + 1)))?;
            self.set(key.trim(), value).map_err(|e| Error::Usage(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        Some(match key {
            "model" => self.model.to_string(),
            "scheme" => self.scheme.to_string(),
            "input_scheme" => return self.input_scheme.map(|s| s.to_string()),
            "word_dim" => self.word_dim.to_string(),
            "char_dim" => self.char_dim.to_string(),
            "char_hidden" => self.char_hidden.to_string(),
            "use_char" => self.use_char.to_string(),
            "dropout" => self.dropout().to_string(),
            "singleton_unk" => self.singleton_unk.to_string(),
            "peephole" => match self.peephole {
                Peephole::Diagonal => "diagonal".into(),
                Peephole::Full => "full".into(),
            },
            "hidden_dim" => self.hidden_dim.to_string(),
            "projection_dim" => self.projection_dim.to_string(),
            "constrained_decoding" => self.constrained_decoding.to_string(),
            "stack_hidden" => self.stack_hidden.to_string(),
            "stack_layers" => self.stack_layers.to_string(),
            "action_dim" => self.action_dim.to_string(),
            "compose_hidden" => self.compose_hidden.to_string(),
            "compose_dim" => self.compose_dim.to_string(),
            "state_hidden" => self.state_hidden.to_string(),
            "normalize_digits" => self.normalize_digits.to_string(),
            "min_word_freq" => self.min_word_freq.to_string(),
            "pretrained" => return path(&self.pretrained),
            "learning_rate" => self.learning_rate.to_string(),
            "clip" => self.clip.to_string(),
            "epochs" => self.epochs.to_string(),
            "patience" => return self.patience.map(|p| p.to_string()),
            "seed" => self.seed.to_string(),
            "train" => return path(&self.train),
            "dev" => return path(&self.dev),
            "test" => return path(&self.test),
            "out" => return path(&self.out),
            "report" => return path(&self.report),
            _ => return None,
        })
    }

    /// `key = value` lines for `keys`, skipping unset ones.
    pub fn to_text(&self, keys: &[&str]) -> String {
        keys.iter().filter_map(|k| self.get(k).map(|v| format!("{k} = {v}\n"))).collect()
    }

    pub fn dropout(&self) -> f64 {
        self.dropout.unwrap_or(self.model.default_dropout())
    }

    pub fn input_scheme(&self) -> TagScheme {
        self.input_scheme.unwrap_or(self.scheme)
    }

    pub fn word_config(&self) -> WordRepConfig {
        WordRepConfig {
            word_dim: self.word_dim,
            char_dim: self.char_dim,
            char_hidden: self.char_hidden,
            use_char: self.use_char,
            dropout: self.dropout(),
            singleton_unk: self.singleton_unk,
            lstm: LstmOptions { peephole: self.peephole, random_bias: false },
        }
    }

    pub fn crf_config(&self) -> CrfTaggerConfig {
        CrfTaggerConfig {
            word: self.word_config(),
            hidden_dim: self.hidden_dim,
            projection_dim: self.projection_dim,
            scheme: self.scheme,
            constrained_decoding: self.constrained_decoding,
        }
    }

    pub fn chunker_config(&self) -> ChunkerConfig {
        ChunkerConfig {
            word: self.word_config(),
            stack_hidden: self.stack_hidden,
            stack_layers: self.stack_layers,
            action_dim: self.action_dim,
            compose_hidden: self.compose_hidden,
            compose_dim: self.compose_dim,
            state_hidden: self.state_hidden,
            scheme: self.scheme,
        }
    }

    pub fn sgd_config(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.learning_rate,
            clip_threshold: self.clip,
            epochs: self.epochs,
            seed: self.seed.wrapping_add(1),
            patience: self.patience,
        }
    }
}
