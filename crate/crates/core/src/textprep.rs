//! Item-document preprocessing: tokenisation, a frequency-capped vocabulary
//! and fixed-length token-id sequences.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const UNKNOWN_ID: usize = 1;
const PAD_TOKEN: &str = "<pad>";
const UNKNOWN_TOKEN: &str = "<unk>";

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    /// Indexed by id; the first two entries are the specials.
    tokens: Vec<String>,
    max_size: usize,
}

impl Vocabulary {
    fn from_tokens(words: impl IntoIterator<Item = String>, max_size: usize) -> Self {
        let mut tokens = vec![PAD_TOKEN.to_string(), UNKNOWN_TOKEN.to_string()];
        tokens.extend(words);
        let token_to_id = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            token_to_id,
            tokens,
            max_size,
        }
    }

    /// Number of ids including the two specials.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// True when only the specials are present.
    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Writes `token<TAB>id` lines, specials included.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let res: std::io::Result<()> = (|| {
            for (id, token) in self.tokens.iter().enumerate() {
                writeln!(w, "{token}\t{id}")?;
            }
            w.flush()
        })();
        res.map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut words = Vec::new();
        let mut seen = 0;
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let bad = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message,
            };
            let (token, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| bad("expected token<TAB>id".into()))?;
            let id: usize = id.trim().parse().map_err(|_| bad(format!("bad id {id:?}")))?;
            if id != idx {
                return Err(bad(format!("ids must be contiguous, expected {idx} got {id}")));
            }
            if idx >= 2 {
                words.push(token.to_string());
            }
            seen += 1;
        }
        if seen < 2 {
            return Err(Error::InvalidData(format!(
                "{} lacks the two special tokens",
                path.display()
            )));
        }
        let max_size = words.len();
        Ok(Self::from_tokens(words, max_size))
    }
}

/// Keeps the `max_size` most frequent tokens; equal counts are ordered
/// lexicographically. Ids are assigned in that order after the specials.
pub fn build_vocabulary<S: AsRef<str>>(documents: &[S], max_size: usize) -> Result<Vocabulary> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for doc in documents {
        for token in tokenize(doc.as_ref()) {
            *counts.entry(token).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::InvalidData("every document is empty".into()));
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size);
    Ok(Vocabulary::from_tokens(
        ranked.into_iter().map(|(t, _)| t),
        max_size,
    ))
}

/// Maps a document to exactly `length` ids: unknown tokens become
/// [`UNKNOWN_ID`], the prefix is kept, and short documents are right-padded
/// with [`PAD_ID`].
pub fn encode(document: &str, vocab: &Vocabulary, length: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = tokenize(document)
        .take(length)
        .map(|t| vocab.id(&t).unwrap_or(UNKNOWN_ID))
        .collect();
    ids.resize(length, PAD_ID);
    ids
}

/// Fixed-length token-id sequences, one row per item.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    sequences: Vec<Vec<usize>>,
    length: usize,
    vocab_size: usize,
}

impl Corpus {
    pub fn from_documents<S: AsRef<str>>(
        documents: &[S],
        vocab: &Vocabulary,
        length: usize,
    ) -> Result<Self> {
        if length == 0 {
            return Err(Error::InvalidArgument("sequence length must be >= 1".into()));
        }
        let sequences = documents
            .iter()
            .map(|d| encode(d.as_ref(), vocab, length))
            .collect();
        Ok(Corpus {
            sequences,
            length,
            vocab_size: vocab.len(),
        })
    }

    /// Wraps pre-encoded sequences; checks lengths and id range.
    pub fn from_sequences(sequences: Vec<Vec<usize>>, vocab_size: usize) -> Result<Self> {
        let length = sequences.first().map(Vec::len).unwrap_or(0);
        if length == 0 {
            return Err(Error::InvalidArgument("corpus needs non-empty sequences".into()));
        }
        for (j, s) in sequences.iter().enumerate() {
            if s.len() != length {
                return Err(Error::Shape {
                    expected: format!("sequence length {length}"),
                    actual: format!("{} at item {j}", s.len()),
                });
            }
            if let Some(&bad) = s.iter().find(|&&id| id >= vocab_size) {
                return Err(Error::InvalidData(format!(
                    "token id {bad} at item {j} outside vocabulary of {vocab_size}"
                )));
            }
        }
        Ok(Corpus {
            sequences,
            length,
            vocab_size,
        })
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.length
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn sequence(&self, item: usize) -> &[usize] {
        &self.sequences[item]
    }

    pub fn sequences(&self) -> &[Vec<usize>] {
        &self.sequences
    }
}

/// Reads `raw_item_id<TAB>text` lines.
pub fn read_documents(path: &Path) -> Result<HashMap<u64, String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = HashMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: "expected raw_item_id<TAB>text".into(),
        })?;
        let id = id.trim().parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: format!("bad item id {id:?}"),
        })?;
        docs.insert(id, text.to_string());
    }
    Ok(docs)
}

/// Orders documents by the dataset's item labels. Items without a document
/// get an empty one; the second value counts them.
pub fn align_documents(item_labels: &[u64], docs: &HashMap<u64, String>) -> (Vec<String>, usize) {
    let mut missing = 0;
    let aligned = item_labels
        .iter()
        .map(|id| {
            docs.get(id).cloned().unwrap_or_else(|| {
                missing += 1;
                String::new()
            })
        })
        .collect();
    (aligned, missing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenizer_lowercases_and_splits() {
        let t: Vec<String> = tokenize("Hello, World!  it's 2x-fast").collect();
        assert_eq!(t, ["hello", "world", "it", "s", "2x", "fast"]);
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = build_vocabulary(&["a a b", "b c"], 2).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v.id("a"), Some(2));
        assert_eq!(v.id("b"), Some(3));
        assert_eq!(v.id("c"), None);
    }

    #[test]
    fn zero_max_size_keeps_specials_only() {
        let v = build_vocabulary(&["x y z"], 0).unwrap();
        assert_eq!(v.len(), 2);
        assert!(v.is_empty());
    }

    #[test]
    fn all_empty_documents_rejected() {
        assert!(build_vocabulary(&["", " ,; "], 10).is_err());
        assert!(build_vocabulary::<&str>(&[], 10).is_err());
    }

    #[test]
    fn size_cap_counts_distinct_tokens() {
        let docs: Vec<String> = (0..50).map(|i| format!("w{i} w{i} shared")).collect();
        assert_eq!(build_vocabulary(&docs, 20).unwrap().len(), 22);
        // fewer distinct tokens than the cap: all 51 kept
        assert_eq!(build_vocabulary(&docs, 100).unwrap().len(), 53);
    }

    #[test]
    fn encode_pads_truncates_and_marks_unknowns() {
        let v = build_vocabulary(&["a b"], 10).unwrap();
        assert_eq!(encode("", &v, 5), vec![0; 5]);
        assert_eq!(encode("x y", &v, 3), vec![1, 1, 0]);
        let long: String = (0..600).map(|_| "a ").collect();
        let ids = encode(&long, &v, 500);
        assert_eq!(ids.len(), 500);
        assert!(ids.iter().all(|&id| id == v.id("a").unwrap()));
    }

    #[test]
    fn vocabulary_file_round_trip() {
        let v = build_vocabulary(&["the cat sat on the mat"], 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.tsv");
        v.save(&path).unwrap();
        let back = Vocabulary::load(&path).unwrap();
        assert_eq!(back.len(), v.len());
        for id in 0..v.len() {
            assert_eq!(back.token(id), v.token(id));
        }
    }

    #[test]
    fn corpus_rejects_ragged_or_out_of_range() {
        assert!(Corpus::from_sequences(vec![vec![0, 1], vec![0]], 5).is_err());
        assert!(Corpus::from_sequences(vec![vec![0, 7]], 5).is_err());
        assert!(Corpus::from_sequences(vec![vec![0, 4]], 5).is_ok());
    }

    #[test]
    fn documents_align_to_labels() {
        let docs: HashMap<u64, String> = [(5, "five".to_string())].into_iter().collect();
        let (aligned, missing) = align_documents(&[5, 6], &docs);
        assert_eq!(aligned, vec!["five".to_string(), String::new()]);
        assert_eq!(missing, 1);
    }

    proptest! {
        #[test]
        fn encode_always_has_requested_length(doc in ".{0,200}", len in 1usize..64) {
            let v = build_vocabulary(&["alpha beta gamma"], 2).unwrap();
            prop_assert_eq!(encode(&doc, &v, len).len(), len);
        }

        #[test]
        fn in_vocabulary_prefix_survives(words in proptest::collection::vec(0usize..4, 0..30), len in 1usize..40) {
            let lexicon = ["alpha", "beta", "gamma", "delta"];
            let v = build_vocabulary(&[lexicon.join(" ")], 10).unwrap();
            let doc: Vec<&str> = words.iter().map(|&w| lexicon[w]).collect();
            let ids = encode(&doc.join(" "), &v, len);
            for (k, w) in doc.iter().take(len).enumerate() {
                prop_assert_eq!(ids[k], v.id(w).unwrap());
            }
        }
    }
}
