//! Amino-acid alphabet, one-hot encodings, dataset files, perturbations and
//! the planted-motif synthetic benchmark.

mod alphabet;
mod dataset;
mod encoding;
mod perturb;
mod synthetic;

pub use alphabet::{parse_sequence, sequence_to_string, AminoAcid, ALPHABET, ALPHABET_SIZE};
pub use dataset::{
    class_histogram, load_dataset, read_manifest, write_fasta, write_jsonl, write_manifest, Dataset,
    DatasetFormat, MotifSite, ProteinRecord, Split,
};
pub use encoding::{mask_residues, one_hot_encode, EncodedSequence};
pub use perturb::{mutate_residues, ratio_to_count};
pub use synthetic::{generate_synthetic, split_per_class, SyntheticData, SyntheticSpec};
