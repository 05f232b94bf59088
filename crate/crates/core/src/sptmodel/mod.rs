//! Transformer classifier over one-hot residue encodings: configuration,
//! parameters, forward pass and checkpoints.

mod checkpoint;
mod config;
mod model;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_as, save_checkpoint, FORMAT_VERSION,
    MAGIC,
};
pub use config::{ModelConfig, Preset};
pub use model::{argmax, Bound, DropPath, ParamGroup, ParamSpec, SptModel};
