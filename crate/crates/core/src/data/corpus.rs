//! Word co-occurrence graphs from daily document collections.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::graph::{DynamicGraphSample, SparseAdjacency};

pub const DEFAULT_WINDOW: usize = 5;

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorpusDay {
    pub date: String,
    /// Tokenized documents.
    pub documents: Vec<Vec<String>>,
}

impl CorpusDay {
    pub fn from_texts(date: impl Into<String>, texts: &[impl AsRef<str>]) -> Self {
        Self {
            date: date.into(),
            documents: texts.iter().map(|t| tokenize(t.as_ref())).collect(),
        }
    }
}

/// Dense token ↔ index bijection.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fails on duplicates or empty tokens.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Self::new();
        for t in tokens {
            let t = t.into();
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("invalid vocabulary token {t:?}")));
            }
            if v.index.contains_key(&t) {
                return Err(Error::Config(format!("duplicate vocabulary token {t:?}")));
            }
            v.insert(t);
        }
        Ok(v)
    }

    /// Index of `token`, adding it if absent.
    pub fn insert(&mut self, token: String) -> usize {
        if let Some(&i) = self.index.get(&token) {
            return i;
        }
        let i = self.tokens.len();
        self.index.insert(token.clone(), i);
        self.tokens.push(token);
        i
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, i: usize) -> Option<&str> {
        self.tokens.get(i).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum UnknownTokens {
    /// Drop tokens missing from the vocabulary before windowing.
    #[default]
    Skip,
    Error,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IngestOptions {
    pub window: usize,
    /// Store co-occurrence counts as edge weights.
    pub weighted: bool,
    pub stopwords: HashSet<String>,
    /// Tokens seen fewer times than this are left out of a built vocabulary.
    pub min_count: usize,
    pub unknown: UnknownTokens,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            weighted: false,
            stopwords: HashSet::new(),
            min_count: 1,
            unknown: UnknownTokens::Skip,
        }
    }
}

/// Vocabulary over every token of every day, sorted lexicographically, minus
/// stopwords and rare tokens.
pub fn build_vocabulary<'a>(
    corpora: impl IntoIterator<Item = &'a [CorpusDay]>,
    options: &IngestOptions,
) -> Vocabulary {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for days in corpora {
        for tok in days.iter().flat_map(|d| &d.documents).flatten() {
            *counts.entry(tok.as_str()).or_default() += 1;
        }
    }
    let mut v = Vocabulary::new();
    for (tok, c) in counts {
        if c >= options.min_count.max(1) && !options.stopwords.contains(tok) {
            v.insert(tok.to_string());
        }
    }
    v
}

/// Unordered pairs of distinct tokens at distance `< window` in `doc`, with counts.
pub fn window_pairs<T: Ord + Clone>(doc: &[T], window: usize) -> BTreeMap<(T, T), usize> {
    let mut pairs = BTreeMap::new();
    for i in 0..doc.len() {
        for j in i + 1..doc.len().min(i + window) {
            let (a, b) = (&doc[i], &doc[j]);
            if a == b {
                continue;
            }
            let key = if a < b {
                (a.clone(), b.clone())
            } else {
                (b.clone(), a.clone())
            };
            *pairs.entry(key).or_default() += 1;
        }
    }
    pairs
}

/// One unlabeled dynamic graph: one snapshot per day, nodes ordered by vocabulary index.
#[derive(Clone, Debug, PartialEq)]
pub struct IngestedGraph {
    pub snapshots: Vec<SparseAdjacency>,
    pub node_vocab_ids: Vec<usize>,
}

impl IngestedGraph {
    pub fn labeled(self, sample_id: impl Into<String>, label: u8) -> DynamicGraphSample {
        DynamicGraphSample {
            sample_id: sample_id.into(),
            num_nodes: self.node_vocab_ids.len(),
            snapshots: self.snapshots,
            node_vocab_ids: self.node_vocab_ids,
            label,
        }
    }
}

pub fn ingest_corpus(
    days: &[CorpusDay],
    vocab: &Vocabulary,
    options: &IngestOptions,
) -> Result<IngestedGraph> {
    if options.window < 2 {
        return Err(Error::Config(format!(
            "window {} must be at least 2",
            options.window
        )));
    }
    if days.is_empty() {
        return Err(Error::Config("corpus has no days".into()));
    }
    // Map every document to vocabulary ids.
    let mut id_docs: Vec<Vec<Vec<usize>>> = Vec::with_capacity(days.len());
    for day in days {
        let mut docs = Vec::with_capacity(day.documents.len());
        for doc in &day.documents {
            let mut ids = Vec::with_capacity(doc.len());
            for tok in doc {
                if options.stopwords.contains(tok) {
                    continue;
                }
                match (vocab.get(tok), options.unknown) {
                    (Some(i), _) => ids.push(i),
                    (None, UnknownTokens::Skip) => {}
                    (None, UnknownTokens::Error) => {
                        return Err(Error::Config(format!(
                            "token {tok:?} on day {} is not in the vocabulary",
                            day.date
                        )))
                    }
                }
            }
            docs.push(ids);
        }
        id_docs.push(docs);
    }

    let nodes: BTreeSet<usize> = id_docs.iter().flatten().flatten().copied().collect();
    let node_vocab_ids: Vec<usize> = nodes.into_iter().collect();
    let local: HashMap<usize, usize> = node_vocab_ids
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, i))
        .collect();
    let n = node_vocab_ids.len();

    let mut snapshots = Vec::with_capacity(days.len());
    for docs in &id_docs {
        let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for doc in docs {
            let mapped: Vec<usize> = doc.iter().map(|v| local[v]).collect();
            for (pair, c) in window_pairs(&mapped, options.window) {
                *counts.entry(pair).or_default() += c;
            }
        }
        let snap = if options.weighted {
            SparseAdjacency::with_weights(
                n,
                counts.into_iter().map(|((u, v), c)| (u, v, c as f64)),
            )?
        } else {
            SparseAdjacency::new(n, counts.into_keys())?
        };
        snapshots.push(snap);
    }
    Ok(IngestedGraph {
        snapshots,
        node_vocab_ids,
    })
}
