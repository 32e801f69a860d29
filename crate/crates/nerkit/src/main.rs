use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{value_parser, Arg, ArgMatches, Command};
use nerkit::archive::from_bytes;
use nerkit::config::{RunConfig, ALL_KEYS};
use nerkit::io::{read_text, write_bytes};
use nerkit::run::{eval_files, tag_text, train_model};
use nerkit::synth::generate_corpus;
use nerkit::{Error, Result};
use nerkit_core::corpus::{write_conll, TagScheme};

fn flag(key: &str) -> String {
    key.replace('_', "-")
}

fn cli() -> Command {
    let mut train = Command::new("train")
        .about("Train a model and write its archive")
        .arg(Arg::new("config").long("config").value_name("FILE").help("key = value settings; flags override them"));
    for key in ALL_KEYS {
        train = train.arg(Arg::new(*key).long(flag(key)).value_name("VALUE"));
    }
    Command::new("nerkit")
        .about("Neural named entity recognition")
        .subcommand_required(true)
        .subcommand(train)
        .subcommand(
            Command::new("tag")
                .about("Tag tokens (first column of the input) with a trained model")
                .arg(Arg::new("archive").long("archive").required(true).value_name("FILE"))
                .arg(Arg::new("input").long("input").value_name("FILE").help("defaults to standard input"))
                .arg(Arg::new("output").long("output").value_name("FILE").help("defaults to standard output")),
        )
        .subcommand(
            Command::new("eval")
                .about("Entity-level precision, recall and F1 of predicted tags")
                .arg(Arg::new("pred").long("pred").required(true).value_name("FILE"))
                .arg(Arg::new("gold").long("gold").required(true).value_name("FILE"))
                .arg(Arg::new("scheme").long("scheme").default_value("iobes"))
                .arg(Arg::new("format").long("format").value_parser(["table", "kv"]).default_value("table"))
                .arg(Arg::new("report").long("report").value_name("FILE")),
        )
        .subcommand(
            Command::new("synth")
                .about("Write a synthetic tagged corpus")
                .arg(Arg::new("sentences").long("sentences").value_parser(value_parser!(usize)).default_value("200"))
                .arg(Arg::new("seed").long("seed").value_parser(value_parser!(u64)).default_value("1"))
                .arg(Arg::new("scheme").long("scheme").default_value("iobes"))
                .arg(Arg::new("out").long("out").value_name("FILE")),
        )
}

fn path(m: &ArgMatches, id: &str) -> Option<PathBuf> {
    m.get_one::<String>(id).map(PathBuf::from)
}

fn scheme(m: &ArgMatches) -> Result<TagScheme> {
    let s = m.get_one::<String>("scheme").expect("has default");
    s.parse().map_err(|_| Error::Usage(format!("invalid value {s:?} for scheme")))
}

fn emit(text: &str, out: Option<PathBuf>) -> Result<()> {
    match out {
        Some(p) => write_bytes(&p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_train(m: &ArgMatches) -> Result<()> {
    let mut config = RunConfig::default();
    if let Some(p) = path(m, "config") {
        config.apply_text(&read_text(&p)?).map_err(|e| Error::Usage(format!("{}: {e}", p.display())))?;
    }
    for key in ALL_KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            config.set(key, v)?;
        }
    }
    let out = config.out.clone().ok_or_else(|| Error::Usage("missing required setting out".into()))?;
    let outcome = train_model(&config, |line| eprintln!("{line}"))?;
    if let Some(p) = &outcome.pretrained {
        eprintln!("pretrained: {} exact, {} lowercased, {} random", p.exact, p.lowercased, p.random.len());
    }
    write_bytes(&out, &outcome.archive)?;
    print!("{}", outcome.text);
    if let Some(p) = &config.report {
        write_bytes(p, outcome.text.as_bytes())?;
    }
    Ok(())
}

fn cmd_tag(m: &ArgMatches) -> Result<()> {
    let archive = path(m, "archive").expect("required");
    let bytes = std::fs::read(&archive).map_err(|source| Error::Read { path: archive.clone(), source })?;
    let (config, model) = from_bytes(&bytes)?;
    let input = match path(m, "input") {
        Some(p) => read_text(&p)?,
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s).map_err(|source| Error::Read { path: "<stdin>".into(), source })?;
            s
        }
    };
    let text = tag_text(&model, config.normalize_digits, &input)?;
    emit(&text, path(m, "output"))
}

fn cmd_eval(m: &ArgMatches) -> Result<()> {
    let report = eval_files(&path(m, "pred").expect("required"), &path(m, "gold").expect("required"), scheme(m)?)?;
    let text = match m.get_one::<String>("format").map(String::as_str) {
        Some("kv") => report.to_key_values(),
        _ => report.to_table(),
    };
    print!("{text}");
    if let Some(p) = path(m, "report") {
        write_bytes(&p, text.as_bytes())?;
    }
    Ok(())
}

fn cmd_synth(m: &ArgMatches) -> Result<()> {
    let n = *m.get_one::<usize>("sentences").expect("has default");
    let seed = *m.get_one::<u64>("seed").expect("has default");
    let corpus = generate_corpus(n, seed, scheme(m)?);
    emit(&write_conll(&corpus), path(m, "out"))
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let result = match matches.subcommand() {
        Some(("train", m)) => cmd_train(m),
        Some(("tag", m)) => cmd_tag(m),
        Some(("eval", m)) => cmd_eval(m),
        Some(("synth", m)) => cmd_synth(m),
        _ => unreachable!("subcommand required"),
    };
    let _ = std::io::stdout().flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
