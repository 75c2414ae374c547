//! File plumbing shared by the subcommands: line-oriented corpora,
//! vocabularies, BPE models, checkpoints, alignment models, lexicons.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use shortlex_core::aligner::{AlignModel, TranslationLexicon};
use shortlex_core::corpus::{BpeModel, SentencePair, Vocabulary, EOS_ID};
use shortlex_core::nmt::{load_checkpoint, ModelParams};
use shortlex_core::{Error, Result};

// ── basic line io ────────────────────────────────────────────────────────

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let mut lines = Vec::new();
    for line in open(path)?.lines() {
        lines.push(line?);
    }
    Ok(lines)
}

pub fn write_lines<S: AsRef<str>>(path: &Path, lines: impl IntoIterator<Item = S>) -> Result<()> {
    let mut w = create(path)?;
    for line in lines {
        writeln!(w, "{}", line.as_ref())?;
    }
    w.flush()?;
    Ok(())
}

// ── artifact loading ─────────────────────────────────────────────────────

pub fn load_vocab(path: &Path) -> Result<Vocabulary> {
    Vocabulary::load(open(path)?)
}

pub fn load_bpe(path: &Path) -> Result<BpeModel> {
    BpeModel::load(open(path)?)
}

pub fn load_model(path: &Path) -> Result<ModelParams<f32>> {
    load_checkpoint(open(path)?)
}

pub fn load_align_model(path: &Path) -> Result<AlignModel> {
    AlignModel::load(open(path)?)
}

pub fn load_lexicon(
    path: &Path,
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
) -> Result<TranslationLexicon> {
    TranslationLexicon::load_tsv(src_vocab, tgt_vocab, open(path)?)
}

// ── corpus encoding ──────────────────────────────────────────────────────

/// Splits a pre-segmented line on whitespace and maps tokens to ids,
/// falling back to UNK for unknown tokens.
pub fn encode_line(vocab: &Vocabulary, line: &str) -> Vec<u32> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    vocab.encode(&tokens)
}

/// Reads a line-aligned parallel corpus into id pairs, appending EOS to
/// every target sentence.
pub fn read_pairs(
    src_path: &Path,
    tgt_path: &Path,
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
) -> Result<Vec<SentencePair>> {
    let src_lines = read_lines(src_path)?;
    let tgt_lines = read_lines(tgt_path)?;
    if src_lines.len() != tgt_lines.len() {
        return Err(Error::InvalidInput(format!(
            "{} has {} lines but {} has {}",
            src_path.display(),
            src_lines.len(),
            tgt_path.display(),
            tgt_lines.len()
        )));
    }
    let mut pairs = Vec::with_capacity(src_lines.len());
    for (n, (s, t)) in src_lines.iter().zip(&tgt_lines).enumerate() {
        let src = encode_line(src_vocab, s);
        let mut tgt = encode_line(tgt_vocab, t);
        if src.is_empty() || tgt.is_empty() {
            return Err(Error::InvalidInput(format!(
                "line {}: empty sentence on one side",
                n + 1
            )));
        }
        tgt.push(EOS_ID);
        pairs.push(SentencePair::new(src, tgt));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_corpus_round_trip_appends_eos() {
        let dir = tempfile::tempdir().unwrap();
        let sp = dir.path().join("s.txt");
        let tp = dir.path().join("t.txt");
        write_lines(&sp, ["a b", "b"]).unwrap();
        write_lines(&tp, ["x", "y x"]).unwrap();
        let vocab =
            Vocabulary::from_ordered_tokens(["a", "b", "x", "y"].map(String::from)).unwrap();
        let pairs = read_pairs(&sp, &tp, &vocab, &vocab).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].target.last(), Some(&EOS_ID));
        assert_eq!(pairs[1].source, vec![vocab.lookup("b")]);
    }

    #[test]
    fn line_count_mismatch_is_an_input_error() {
        let dir = tempfile::tempdir().unwrap();
        let sp = dir.path().join("s.txt");
        let tp = dir.path().join("t.txt");
        write_lines(&sp, ["a", "b"]).unwrap();
        write_lines(&tp, ["x"]).unwrap();
        let vocab = Vocabulary::from_ordered_tokens(["a", "b", "x"].map(String::from)).unwrap();
        assert!(read_pairs(&sp, &tp, &vocab, &vocab).is_err());
    }

    #[test]
    fn missing_file_reports_the_path() {
        let err = read_lines(Path::new("/nonexistent/corpus.txt")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/corpus.txt"));
    }
}
