//! One-hot character encoding of normalized names.
//!
//! Every name becomes a fixed 20 x 28 matrix: one row per character
//! position, one column per vocabulary symbol. Positions past the end of the
//! name carry the padding symbol, so every row has exactly one set bit.

use std::fmt;

use crate::error::{Error, Result};

/// Number of character positions kept per name.
pub const MAX_LEN: usize = 20;
/// Number of vocabulary symbols, padding included.
pub const VOCAB_SIZE: usize = 28;
/// Column of the padding symbol.
pub const PAD: usize = 27;
/// Length of a flattened encoding.
pub const FLAT_LEN: usize = MAX_LEN * VOCAB_SIZE;

/// Version tag of the symbol ordering, stored in model files.
pub const VOCAB_VERSION: &str = "az-cedilla-pad/1";

const PAD_CHAR: char = '#';

/// Ordered symbol table: `A`..`Z` at 0..25, `Ç` at 26, padding at 27.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: [char; VOCAB_SIZE],
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::standard()
    }
}

impl Vocabulary {
    pub fn standard() -> Self {
        let mut symbols = [PAD_CHAR; VOCAB_SIZE];
        for (i, c) in ('A'..='Z').enumerate() {
            symbols[i] = c;
        }
        symbols[26] = 'Ç';
        symbols[PAD] = PAD_CHAR;
        Vocabulary { symbols }
    }

    /// Index of a non-padding symbol.
    pub fn index_of(&self, c: char) -> Option<usize> {
        match c {
            'A'..='Z' => Some(c as usize - 'A' as usize),
            'Ç' => Some(26),
            _ => None,
        }
    }

    pub fn symbol(&self, index: usize) -> Option<char> {
        self.symbols.get(index).copied()
    }

    pub fn symbols(&self) -> &[char; VOCAB_SIZE] {
        &self.symbols
    }

    /// The symbol table as a string, padding written as `#`.
    pub fn as_string(&self) -> String {
        self.symbols.iter().collect()
    }
}

/// A name as a 20 x 28 one-hot matrix, stored as one column index per row.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct EncodedName {
    indices: [u8; MAX_LEN],
}

impl fmt::Debug for EncodedName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let vocab = Vocabulary::standard();
        let s: String = self
            .indices
            .iter()
            .map(|&i| vocab.symbol(i as usize).unwrap_or('?'))
            .collect();
        write!(f, "EncodedName({s})")
    }
}

impl EncodedName {
    /// Builds an encoding from per-row column indices.
    pub fn from_indices(indices: [u8; MAX_LEN]) -> Result<Self> {
        for (row, &i) in indices.iter().enumerate() {
            if i as usize >= VOCAB_SIZE {
                return Err(Error::MalformedMatrix { row });
            }
        }
        Ok(EncodedName { indices })
    }

    /// Builds an encoding from a dense 20 x 28 matrix of zeros and ones.
    pub fn from_matrix(matrix: &[[u8; VOCAB_SIZE]; MAX_LEN]) -> Result<Self> {
        let mut indices = [0u8; MAX_LEN];
        for (row, cells) in matrix.iter().enumerate() {
            let mut hot = None;
            for (col, &v) in cells.iter().enumerate() {
                match v {
                    0 => {}
                    1 if hot.is_none() => hot = Some(col),
                    _ => return Err(Error::MalformedMatrix { row }),
                }
            }
            indices[row] = hot.ok_or(Error::MalformedMatrix { row })? as u8;
        }
        Ok(EncodedName { indices })
    }

    pub fn indices(&self) -> &[u8; MAX_LEN] {
        &self.indices
    }

    /// Column index of the one-hot bit in `row`.
    pub fn symbol_at(&self, row: usize) -> usize {
        self.indices[row] as usize
    }

    pub fn matrix(&self) -> [[u8; VOCAB_SIZE]; MAX_LEN] {
        let mut m = [[0u8; VOCAB_SIZE]; MAX_LEN];
        for (row, &i) in self.indices.iter().enumerate() {
            m[row][i as usize] = 1;
        }
        m
    }

    /// Positions of the set bits in the flattened vector, ascending.
    pub fn active_features(&self) -> [u32; MAX_LEN] {
        let mut out = [0u32; MAX_LEN];
        for (row, &i) in self.indices.iter().enumerate() {
            out[row] = (row * VOCAB_SIZE + i as usize) as u32;
        }
        out
    }

    /// Number of positions holding a real character.
    pub fn len(&self) -> usize {
        self.indices.iter().filter(|&&i| i as usize != PAD).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the row-major one-hot values into `out` (length 560).
    pub fn write_dense(&self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), FLAT_LEN);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (row, &i) in self.indices.iter().enumerate() {
            out[row * VOCAB_SIZE + i as usize] = 1.0;
        }
    }
}

/// One-hot encodes a normalized name, truncating after 20 characters.
pub fn encode(name: &str, vocab: &Vocabulary) -> Result<EncodedName> {
    if name.is_empty() {
        return Err(Error::EmptyName {
            input: name.to_string(),
        });
    }
    let mut indices = [PAD as u8; MAX_LEN];
    for (pos, c) in name.chars().enumerate() {
        let idx = vocab
            .index_of(c)
            .ok_or_else(|| Error::UnmappableCharacter {
                ch: c,
                input: name.to_string(),
            })?;
        if pos < MAX_LEN {
            indices[pos] = idx as u8;
        }
    }
    Ok(EncodedName { indices })
}

/// Row-major concatenation of the one-hot rows.
pub fn flatten(enc: &EncodedName) -> Vec<u8> {
    let mut v = vec![0u8; FLAT_LEN];
    for (row, &i) in enc.indices.iter().enumerate() {
        v[row * VOCAB_SIZE + i as usize] = 1;
    }
    v
}

/// Inverse of [`flatten`].
pub fn unflatten(flat: &[u8]) -> Result<EncodedName> {
    if flat.len() != FLAT_LEN {
        return Err(Error::LengthMismatch {
            expected: FLAT_LEN,
            found: flat.len(),
        });
    }
    let mut m = [[0u8; VOCAB_SIZE]; MAX_LEN];
    for (row, chunk) in flat.chunks_exact(VOCAB_SIZE).enumerate() {
        m[row].copy_from_slice(chunk);
    }
    EncodedName::from_matrix(&m)
}

/// Recovers the name, dropping padding rows.
pub fn decode(enc: &EncodedName, vocab: &Vocabulary) -> Result<String> {
    let mut s = String::new();
    for (row, &i) in enc.indices.iter().enumerate() {
        let i = i as usize;
        if i == PAD {
            continue;
        }
        s.push(vocab.symbol(i).ok_or(Error::MalformedMatrix { row })?);
    }
    if s.is_empty() {
        return Err(Error::EmptyName { input: s });
    }
    Ok(s)
}
