use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AminoAcid, ALPHABET_SIZE};
use crate::{Error, Result};

/// Number of residues to perturb for a fractional amount: `max(1, floor(ratio * P))`,
/// capped at `P`.
///
/// A tolerance of 1e-9 absorbs representation error so that e.g. `0.29 * 100`
/// gives 29.
pub fn ratio_to_count(ratio: f64, len: usize) -> usize {
    let k = (ratio * len as f64 + 1e-9).floor() as usize;
    k.max(1).min(len)
}

/// Replaces each listed residue by one drawn uniformly from the other 19.
///
/// Positions are visited in ascending order so the output depends only on
/// the position set and the seed.
pub fn mutate_residues(
    seq: &[AminoAcid],
    positions: impl IntoIterator<Item = usize>,
    rng_seed: u64,
) -> Result<Vec<AminoAcid>> {
    let mut sorted: Vec<usize> = positions.into_iter().collect();
    sorted.sort_unstable();
    sorted.dedup();
    if let Some(&position) = sorted.iter().find(|&&p| p >= seq.len()) {
        return Err(Error::PositionOutOfRange {
            position,
            len: seq.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = seq.to_vec();
    for p in sorted {
        let orig = out[p].index();
        let draw = rng.random_range(0..ALPHABET_SIZE - 1);
        let replacement = if draw >= orig { draw + 1 } else { draw };
        out[p] = AminoAcid::from_index(replacement).expect("index < 20");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqdata::parse_sequence;
    use proptest::prelude::*;

    #[test]
    fn empty_positions_keep_sequence() {
        let seq = parse_sequence("ACD").unwrap();
        assert_eq!(mutate_residues(&seq, [], 1).unwrap(), seq);
    }

    #[test]
    fn deterministic_per_seed() {
        let seq = parse_sequence("ACDEFGHIK").unwrap();
        let a = mutate_residues(&seq, [0, 4], 9).unwrap();
        let b = mutate_residues(&seq, [4, 0], 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn first_residue_changes() {
        let seq = parse_sequence("ACD").unwrap();
        let out = mutate_residues(&seq, [0], 3).unwrap();
        assert_ne!(out[0], seq[0]);
        assert_eq!(&out[1..], &seq[1..]);
    }

    #[test]
    fn out_of_range() {
        let seq = parse_sequence("ACD").unwrap();
        assert!(matches!(
            mutate_residues(&seq, [5], 0),
            Err(Error::PositionOutOfRange { position: 5, len: 3 })
        ));
    }

    #[test]
    fn ratio_floor_rule() {
        assert_eq!(ratio_to_count(0.10, 30), 3);
        assert_eq!(ratio_to_count(0.02, 30), 1);
        assert_eq!(ratio_to_count(0.29, 100), 29);
        assert_eq!(ratio_to_count(0.001, 5), 1);
        assert_eq!(ratio_to_count(1.0, 7), 7);
    }

    #[test]
    fn replacement_is_uniform_over_other_nineteen() {
        let seq = parse_sequence("G").unwrap();
        let mut counts = [0usize; 20];
        for seed in 0..19_000 {
            counts[mutate_residues(&seq, [0], seed).unwrap()[0].index()] += 1;
        }
        let g = seq[0].index();
        assert_eq!(counts[g], 0);
        for (i, &c) in counts.iter().enumerate().filter(|(i, _)| *i != g) {
            assert!((800..1200).contains(&c), "residue {i}: {c}");
        }
    }

    proptest! {
        #[test]
        fn changes_exactly_listed_positions(
            idx in proptest::collection::vec(0usize..20, 1..60),
            picks in proptest::collection::btree_set(0usize..60, 0..20),
            seed in any::<u64>(),
        ) {
            let seq: Vec<AminoAcid> = idx.iter().map(|&i| AminoAcid::from_index(i).unwrap()).collect();
            let picks: Vec<usize> = picks.into_iter().filter(|&p| p < seq.len()).collect();
            let out = mutate_residues(&seq, picks.iter().copied(), seed).unwrap();
            let changed: Vec<usize> = (0..seq.len()).filter(|&i| out[i] != seq[i]).collect();
            prop_assert_eq!(changed, picks);
        }
    }
}
