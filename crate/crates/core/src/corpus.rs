//! Tokenized, lemmatized caption corpora.
//!
//! One record per line: `sentence_id<TAB>tokens<TAB>lemmas`, tokens and
//! lemmas space-separated and equal in number.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grammar::Vocabulary;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusRecord {
    pub id: String,
    pub tokens: Vec<String>,
    pub lemmas: Vec<String>,
}

impl CorpusRecord {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub fn parse_corpus(text: &str, path: &str) -> Result<Vec<CorpusRecord>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(path, lineno, format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let id = fields[0].trim().to_string();
        if id.is_empty() {
            return Err(Error::parse(path, lineno, "empty sentence id"));
        }
        let tokens: Vec<String> = fields[1].split_whitespace().map(str::to_string).collect();
        let lemmas: Vec<String> = fields[2].split_whitespace().map(str::to_string).collect();
        if tokens.is_empty() {
            return Err(Error::parse(path, lineno, "no tokens"));
        }
        if tokens.len() != lemmas.len() {
            return Err(Error::parse(
                path,
                lineno,
                format!("{} tokens but {} lemmas", tokens.len(), lemmas.len()),
            ));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::parse(path, lineno, format!("duplicate sentence id {id:?}")));
        }
        out.push(CorpusRecord { id, tokens, lemmas });
    }
    Ok(out)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<CorpusRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_corpus(&text, &path.display().to_string())
}

pub fn write_corpus(records: &[CorpusRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.id);
        out.push('\t');
        out.push_str(&r.tokens.join(" "));
        out.push('\t');
        out.push_str(&r.lemmas.join(" "));
        out.push('\n');
    }
    out
}

/// Grammar-side key of a token: lowercased surface form.
pub fn word_key(token: &str) -> String {
    token.to_lowercase()
}

pub fn build_vocabulary(records: &[CorpusRecord], min_count: usize) -> Result<Vocabulary> {
    let keys: Vec<String> = records
        .iter()
        .flat_map(|r| r.tokens.iter().map(|t| word_key(t)))
        .collect();
    Vocabulary::from_tokens(keys.iter().map(String::as_str), min_count)
}

/// A sentence ready for parsing. Out-of-vocabulary tokens map to UNK.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub id: String,
    pub token_ids: Vec<usize>,
    pub surface: Vec<String>,
    pub lemmas: Vec<String>,
}

impl Sentence {
    pub fn new(id: impl Into<String>, surface: Vec<String>, lemmas: Vec<String>, vocab: &Vocabulary) -> Result<Self> {
        if surface.len() < 2 {
            return Err(Error::Input(format!(
                "sentences need at least 2 tokens, got {}",
                surface.len()
            )));
        }
        if surface.len() != lemmas.len() {
            return Err(Error::Input("token and lemma counts differ".into()));
        }
        let token_ids = surface.iter().map(|t| vocab.id(&word_key(t))).collect();
        Ok(Sentence {
            id: id.into(),
            token_ids,
            surface,
            lemmas,
        })
    }

    pub fn from_record(record: &CorpusRecord, vocab: &Vocabulary) -> Result<Self> {
        Self::new(record.id.clone(), record.tokens.clone(), record.lemmas.clone(), vocab)
    }

    /// Convenience for tests and synthetic data: lemmas equal the tokens.
    pub fn from_words(id: impl Into<String>, words: &[&str], vocab: &Vocabulary) -> Result<Self> {
        let surface: Vec<String> = words.iter().map(|w| w.to_string()).collect();
        Self::new(id, surface.clone(), surface, vocab)
    }

    /// Builds a sentence directly from ids; surface forms are looked up in
    /// the vocabulary.
    pub fn from_ids(id: impl Into<String>, token_ids: Vec<usize>, vocab: &Vocabulary) -> Result<Self> {
        if token_ids.len() < 2 {
            return Err(Error::Input("sentences need at least 2 tokens".into()));
        }
        let mut surface = Vec::with_capacity(token_ids.len());
        for &t in &token_ids {
            let w = vocab
                .word(t)
                .ok_or_else(|| Error::Index(format!("word id {t} not in vocabulary")))?;
            surface.push(w.to_string());
        }
        Ok(Sentence {
            id: id.into(),
            token_ids,
            lemmas: surface.clone(),
            surface,
        })
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_three_columns() {
        let text = "s1\tA dog runs\ta dog run\n\ns2\tcats sleep\tcat sleep\n";
        let recs = parse_corpus(text, "c.tsv").unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].lemmas, vec!["a", "dog", "run"]);
        assert_eq!(write_corpus(&recs), text.replace("\n\n", "\n"));
    }

    #[test]
    fn reports_line_numbers() {
        let err = parse_corpus("s1\ta b\ta b\ns2\ta b\ta\n", "c.tsv").unwrap_err();
        assert_eq!(err.to_string(), "c.tsv:2: 2 tokens but 1 lemmas");
        let err = parse_corpus("s1\ta b\ta b\ns1\ta b\ta b\n", "c.tsv").unwrap_err();
        assert!(err.to_string().starts_with("c.tsv:2: duplicate"));
        assert!(parse_corpus("s1 a b\n", "c.tsv").is_err());
    }

    #[test]
    fn oov_maps_to_unk() {
        let recs = parse_corpus("s1\tA dog\ta dog\ns2\ta dog\ta dog\ns3\ta cat\ta cat\n", "c").unwrap();
        let vocab = build_vocabulary(&recs, 2).unwrap();
        let s = Sentence::from_record(&recs[2], &vocab).unwrap();
        assert_eq!(s.token_ids[0], vocab.id("a"));
        assert_eq!(s.token_ids[1], vocab.unk_id());
        assert!(Sentence::from_words("x", &["one"], &vocab).is_err());
    }
}
