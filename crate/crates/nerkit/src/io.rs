//! Reading corpora and embedding files from disk.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use nerkit_core::corpus::{convert_scheme, parse_conll, Column, ConllOptions, Sentence, TagScheme};
use nerkit_core::wordrep::{parse_embeddings, EmbeddingFile};

use crate::error::{Error, Result};

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Read { path: path.to_path_buf(), source })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| Error::Write { path: path.to_path_buf(), source })
}

/// Tagged CoNLL file, tags converted from `from` to `to`.
pub fn read_tagged(path: &Path, normalize_digits: bool, from: TagScheme, to: TagScheme) -> Result<Vec<Sentence>> {
    let text = read_text(path)?;
    let options = ConllOptions { normalize_digits, ..ConllOptions::default() };
    let input = |source| Error::Input { path: path.to_path_buf(), source };
    let sentences = parse_conll(&text, &options).map_err(input)?;
    if from == to {
        for (i, s) in sentences.iter().enumerate() {
            let tags = s.gold_tags().expect("tagged input");
            nerkit_core::corpus::validate(&tags, to).map_err(|e| input(in_sentence(i, e)))?;
        }
        return Ok(sentences);
    }
    sentences
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let tags = convert_scheme(&s.gold_tags().expect("tagged input"), from, to)
                .map_err(|e| input(in_sentence(i, e)))?;
            s.with_tags(tags).map_err(input)
        })
        .collect()
}

/// Token column only; any other columns are ignored.
pub fn read_untagged(path: &Path, normalize_digits: bool) -> Result<Vec<Sentence>> {
    let text = read_text(path)?;
    let options = ConllOptions { normalize_digits, tag_column: None, ..ConllOptions::default() };
    parse_conll(&text, &options).map_err(|source| Error::Input { path: path.to_path_buf(), source })
}

/// Tagged file read without scheme checks.
pub fn read_raw_tagged(path: &Path) -> Result<Vec<Sentence>> {
    let text = read_text(path)?;
    let options = ConllOptions { tag_column: Some(Column::Last), normalize_digits: false, ..ConllOptions::default() };
    parse_conll(&text, &options).map_err(|source| Error::Input { path: path.to_path_buf(), source })
}

fn in_sentence(index: usize, e: nerkit_core::Error) -> nerkit_core::Error {
    match e {
        nerkit_core::Error::Validation { index: token, message } => {
            nerkit_core::Error::Validation { index: token, message: format!("sentence {}: {message}", index + 1) }
        }
        other => other,
    }
}

/// Streams an embedding file, keeping only vectors for `keys`.
pub fn read_embeddings(path: &Path, dim: usize, keys: &BTreeSet<String>) -> Result<EmbeddingFile> {
    let file = File::open(path).map_err(|source| Error::Read { path: path.to_path_buf(), source })?;
    let mut lines = Vec::new();
    let mut parsed = EmbeddingFile { dim, vectors: Default::default() };
    // Parse in blocks so memory stays bounded by the kept vectors.
    let mut first = true;
    let mut offset = 0;
    for line in BufReader::new(file).lines() {
        lines.push(line.map_err(|source| Error::Read { path: path.to_path_buf(), source })?);
        if lines.len() == 4096 {
            flush(&mut parsed, &mut lines, &mut first, &mut offset, keys, path)?;
        }
    }
    flush(&mut parsed, &mut lines, &mut first, &mut offset, keys, path)?;
    Ok(parsed)
}

fn flush(
    parsed: &mut EmbeddingFile,
    lines: &mut Vec<String>,
    first: &mut bool,
    offset: &mut usize,
    keys: &BTreeSet<String>,
    path: &Path,
) -> Result<()> {
    if lines.is_empty() {
        return Ok(());
    }
    // A header only counts on the very first line of the file.
    let skip_header_check = !*first;
    let block = if skip_header_check {
        let mut with_pad = Vec::with_capacity(lines.len() + 1);
        with_pad.push(String::new());
        with_pad.append(lines);
        with_pad
    } else {
        std::mem::take(lines)
    };
    let pad = usize::from(skip_header_check);
    let part = parse_embeddings(&block, parsed.dim, |w| keys.contains(w)).map_err(|e| {
        let e = match e {
            nerkit_core::Error::Parse { line, message } => {
                nerkit_core::Error::Parse { line: line - pad + *offset, message }
            }
            other => other,
        };
        Error::Input { path: path.to_path_buf(), source: e }
    })?;
    for (w, v) in part.vectors {
        parsed.vectors.entry(w).or_insert(v);
    }
    *offset += block.len() - pad;
    *first = false;
    lines.clear();
    Ok(())
}
