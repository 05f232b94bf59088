use std::collections::BTreeSet;

use super::{AminoAcid, ALPHABET_SIZE};
use crate::numcore::{Array, Scalar};
use crate::{Error, Result};

/// `P x 20` one-hot matrix. Masked positions are all-zero rows.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSequence<T = f64> {
    matrix: Array<T>,
    masked: BTreeSet<usize>,
}

impl<T: Scalar> EncodedSequence<T> {
    pub fn matrix(&self) -> &Array<T> {
        &self.matrix
    }

    pub fn masked(&self) -> &BTreeSet<usize> {
        &self.masked
    }

    /// Sequence length `P`.
    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.rows() == 0
    }

    /// Recovers residues from unmasked rows; masked rows give `None`.
    pub fn decode(&self) -> Vec<Option<AminoAcid>> {
        (0..self.len())
            .map(|r| {
                self.matrix
                    .row(r)
                    .iter()
                    .position(|&x| x == T::one())
                    .and_then(AminoAcid::from_index)
            })
            .collect()
    }
}

pub fn one_hot_encode<T: Scalar>(seq: &[AminoAcid]) -> EncodedSequence<T> {
    let mut matrix = Array::zeros(seq.len(), ALPHABET_SIZE);
    for (r, aa) in seq.iter().enumerate() {
        matrix[(r, aa.index())] = T::one();
    }
    EncodedSequence {
        matrix,
        masked: BTreeSet::new(),
    }
}

/// Zeroes the rows at `positions`. Idempotent.
pub fn mask_residues<T: Scalar>(
    enc: &EncodedSequence<T>,
    positions: impl IntoIterator<Item = usize>,
) -> Result<EncodedSequence<T>> {
    let mut out = enc.clone();
    let len = out.len();
    for position in positions {
        if position >= len {
            return Err(Error::PositionOutOfRange { position, len });
        }
        out.matrix.row_mut(position).fill(T::zero());
        out.masked.insert(position);
    }
    Ok(out)
}
