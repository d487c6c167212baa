//! Plain-text word vectors: one `token v1 … vd` line per word.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::corpus::Vocabulary;
use super::write_atomic;
use crate::autodiff::Matrix;
use crate::error::{Error, Result};

/// Fill range for words without a stored vector.
pub const RANDOM_INIT_BOUND: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub vocab: Vocabulary,
    /// `V × d`, row `i` belongs to `vocab.token(i)`.
    pub matrix: Matrix,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }
}

pub fn parse_embeddings(text: &str, dim: usize) -> Result<EmbeddingTable> {
    let mut tokens = Vec::new();
    let mut data = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().unwrap_or_default();
        let values = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("invalid number {f:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != dim {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {dim} values, found {}", values.len()),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("non-finite value {v}"),
            });
        }
        tokens.push(token.to_string());
        data.extend(values);
    }
    let rows = tokens.len();
    let vocab = Vocabulary::from_tokens(tokens).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    Ok(EmbeddingTable {
        vocab,
        matrix: Matrix::from_vec(rows, dim, data)?,
    })
}

pub fn load_embeddings(path: &Path, dim: usize) -> Result<EmbeddingTable> {
    parse_embeddings(&std::fs::read_to_string(path)?, dim)
}

pub fn format_embeddings(table: &EmbeddingTable) -> String {
    let mut out = String::new();
    for (i, tok) in table.vocab.tokens().iter().enumerate() {
        out.push_str(tok);
        for v in table.matrix.row(i) {
            out.push(' ');
            out.push_str(&format!("{v:.16e}"));
        }
        out.push('\n');
    }
    out
}

pub fn write_embeddings(table: &EmbeddingTable, path: &Path) -> Result<()> {
    write_atomic(path, format_embeddings(table).as_bytes())
}

/// Seeded `U(-0.1, 0.1)` table.
pub fn random_matrix(rows: usize, dim: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * dim)
        .map(|_| rng.gen_range(-RANDOM_INIT_BOUND..RANDOM_INIT_BOUND))
        .collect();
    Matrix::from_vec(rows, dim, data).expect("length matches shape")
}

/// A `|vocab| × dim` table aligned with `vocab`: rows come from `source` where
/// the token exists there, otherwise from a seeded uniform fill. With no source
/// the whole table is random.
pub fn embeddings_for_vocabulary(
    vocab: &Vocabulary,
    source: Option<&EmbeddingTable>,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    if let Some(src) = source {
        if src.dim() != dim {
            return Err(Error::Config(format!(
                "embedding file has dimension {}, expected {dim}",
                src.dim()
            )));
        }
    }
    let mut matrix = random_matrix(vocab.len(), dim, seed);
    if let Some(src) = source {
        for (i, tok) in vocab.tokens().iter().enumerate() {
            if let Some(j) = src.vocab.get(tok) {
                matrix.row_mut(i).copy_from_slice(src.matrix.row(j));
            }
        }
    }
    Ok(EmbeddingTable {
        vocab: vocab.clone(),
        matrix,
    })
}
