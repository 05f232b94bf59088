use std::fmt;

use crate::{Error, Result};

/// Number of canonical amino acids, the width of a one-hot row.
pub const ALPHABET_SIZE: usize = 20;

/// Canonical residue letters in index order.
pub const ALPHABET: &[u8; ALPHABET_SIZE] = b"ACDEFGHIKLMNPQRSTVWY";

const fn build_lookup() -> [u8; 256] {
    let mut table = [u8::MAX; 256];
    let mut i = 0;
    while i < ALPHABET_SIZE {
        let upper = ALPHABET[i];
        table[upper as usize] = i as u8;
        table[upper.to_ascii_lowercase() as usize] = i as u8;
        i += 1;
    }
    table
}

static LOOKUP: [u8; 256] = build_lookup();

/// One of the 20 canonical amino acids, stored as its alphabet index.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AminoAcid(u8);

impl AminoAcid {
    pub fn from_index(index: usize) -> Option<Self> {
        (index < ALPHABET_SIZE).then_some(Self(index as u8))
    }

    /// Case-insensitive letter lookup.
    pub fn from_letter(letter: char) -> Option<Self> {
        if !letter.is_ascii() {
            return None;
        }
        match LOOKUP[letter as usize] {
            u8::MAX => None,
            i => Some(Self(i)),
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn letter(self) -> char {
        ALPHABET[self.0 as usize] as char
    }

    pub fn all() -> impl Iterator<Item = AminoAcid> {
        (0..ALPHABET_SIZE as u8).map(AminoAcid)
    }
}

impl fmt::Debug for AminoAcid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl fmt::Display for AminoAcid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Parses residue letters, ignoring whitespace and case.
///
/// Positions in errors count non-whitespace characters from 0.
pub fn parse_sequence(text: &str) -> Result<Vec<AminoAcid>> {
    let mut out = Vec::with_capacity(text.len());
    for (position, symbol) in text.chars().filter(|c| !c.is_whitespace()).enumerate() {
        let aa = AminoAcid::from_letter(symbol).ok_or(Error::InvalidResidue { symbol, position })?;
        out.push(aa);
    }
    if out.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(out)
}

pub fn sequence_to_string(seq: &[AminoAcid]) -> String {
    seq.iter().map(|aa| aa.letter()).collect()
}
