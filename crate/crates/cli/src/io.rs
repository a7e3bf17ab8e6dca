//! Plain-text and JSON file formats.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use paradox_core::corpus::LexiconTagger;
use paradox_core::tokenizer::{MergeTable, Tokenizer, Vocab};
use serde::de::DeserializeOwned;
use serde::Serialize;

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    let f = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let f = fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// One JSON object per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.with_context(|| format!("cannot read {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: malformed record", path.display(), i + 1))?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush().with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush().with_context(|| format!("cannot write {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).with_context(|| format!("malformed JSON in {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush().with_context(|| format!("cannot write {}", path.display()))
}

/// One word per line; blank lines are skipped.
pub fn read_word_list(path: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for line in open(path)?.lines() {
        let line = line.with_context(|| format!("cannot read {}", path.display()))?;
        let w = line.trim();
        if !w.is_empty() {
            out.push(w.to_string());
        }
    }
    Ok(out)
}

pub fn read_tagger(hindi: &Path, english: &Path, verbs: &Path) -> Result<LexiconTagger> {
    Ok(LexiconTagger::new(
        read_word_list(hindi)?,
        read_word_list(english)?,
        read_word_list(verbs)?,
    ))
}

/// Vocabulary: one token per line, line number is the id. Merges: one
/// space-separated pair per line, in rank order.
pub fn save_tokenizer(tok: &Tokenizer, vocab: &Path, merges: &Path) -> Result<()> {
    let mut v = String::new();
    for t in tok.vocab.tokens() {
        v.push_str(t);
        v.push('\n');
    }
    write_text(vocab, &v)?;
    let mut m = String::new();
    for (a, b) in tok.merges.rules() {
        m.push_str(a);
        m.push(' ');
        m.push_str(b);
        m.push('\n');
    }
    write_text(merges, &m)
}

pub fn load_tokenizer(vocab: &Path, merges: &Path) -> Result<Tokenizer> {
    let mut tokens = Vec::new();
    for line in open(vocab)?.lines() {
        tokens.push(line.with_context(|| format!("cannot read {}", vocab.display()))?);
    }
    let vocab_table =
        Vocab::from_tokens(tokens).with_context(|| format!("invalid vocabulary {}", vocab.display()))?;
    let mut pairs = Vec::new();
    for (i, line) in open(merges)?.lines().enumerate() {
        let line = line.with_context(|| format!("cannot read {}", merges.display()))?;
        if line.is_empty() {
            continue;
        }
        let (a, b) = line
            .split_once(' ')
            .with_context(|| format!("{}:{}: expected two symbols", merges.display(), i + 1))?;
        pairs.push((a.to_string(), b.to_string()));
    }
    let merge_table =
        MergeTable::from_pairs(pairs).with_context(|| format!("invalid merges {}", merges.display()))?;
    Ok(Tokenizer {
        vocab: vocab_table,
        merges: merge_table,
    })
}
