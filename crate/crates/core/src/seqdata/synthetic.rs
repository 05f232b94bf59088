use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AminoAcid, Dataset, MotifSite, ProteinRecord, Split, ALPHABET_SIZE};
use crate::{Error, Result};

/// Planted-motif benchmark parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub motif_length: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub n_per_class: usize,
    pub rng_seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_classes: 6,
            motif_length: 5,
            min_len: 80,
            max_len: 120,
            n_per_class: 600,
            rng_seed: 0,
        }
    }
}

/// Generated benchmark: the class motifs and the records.
#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub motifs: Vec<Vec<AminoAcid>>,
    pub dataset: Dataset,
}

/// Uniform background with the class motif planted at a uniform offset.
///
/// Records are grouped by class, `n_per_class` each, class-major.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    let SyntheticSpec {
        num_classes,
        motif_length,
        min_len,
        max_len,
        n_per_class,
        rng_seed,
    } = *spec;
    if num_classes == 0 || motif_length == 0 || n_per_class == 0 {
        return Err(Error::Invalid("classes, motif length and count must be positive".into()));
    }
    if min_len < motif_length || min_len > max_len {
        return Err(Error::Invalid(format!(
            "length range [{min_len}, {max_len}] cannot hold a motif of length {motif_length}"
        )));
    }
    let distinct = (ALPHABET_SIZE as f64).powi(motif_length as i32);
    if (num_classes as f64) > distinct {
        return Err(Error::Invalid(format!(
            "{num_classes} distinct motifs of length {motif_length} do not exist"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let random_residue = |rng: &mut ChaCha8Rng| AminoAcid::from_index(rng.random_range(0..ALPHABET_SIZE)).unwrap();

    let mut seen = BTreeSet::new();
    let mut motifs = Vec::with_capacity(num_classes);
    while motifs.len() < num_classes {
        let m: Vec<AminoAcid> = (0..motif_length).map(|_| random_residue(&mut rng)).collect();
        if seen.insert(m.clone()) {
            motifs.push(m);
        }
    }

    let mut records = Vec::with_capacity(num_classes * n_per_class);
    for (label, motif) in motifs.iter().enumerate() {
        for i in 0..n_per_class {
            let len = rng.random_range(min_len..=max_len);
            let mut sequence: Vec<AminoAcid> = (0..len).map(|_| random_residue(&mut rng)).collect();
            let start = rng.random_range(0..=len - motif_length);
            sequence[start..start + motif_length].copy_from_slice(motif);
            records.push(ProteinRecord {
                id: format!("syn-{label}-{i:05}"),
                sequence,
                residue_start: 1,
                label,
                motif: Some(MotifSite {
                    start,
                    len: motif_length,
                }),
            });
        }
    }
    let class_names = (0..num_classes).map(|c| format!("motif{c}")).collect();
    Ok(SyntheticData {
        motifs,
        dataset: Dataset::new(records, class_names, Split::Train)?,
    })
}

/// Splits each class into its first `n_first` records and the rest.
pub fn split_per_class(ds: &Dataset, n_first: usize) -> Result<(Dataset, Dataset)> {
    let mut seen = vec![0usize; ds.num_classes()];
    let (mut first, mut rest) = (Vec::new(), Vec::new());
    for r in &ds.records {
        if seen[r.label] < n_first {
            first.push(r.clone());
        } else {
            rest.push(r.clone());
        }
        seen[r.label] += 1;
    }
    Ok((
        Dataset::new(first, ds.class_names.clone(), Split::Train)?,
        Dataset::new(rest, ds.class_names.clone(), Split::Test)?,
    ))
}
