//! Teacher and student encoder/decoder networks built from declarative layer
//! graphs, their forward passes, and the `CSIK` checkpoint format.

mod bundle;
mod checkpoint;
mod network;
mod spec;

pub use bundle::{checkpoint_path, load_autoencoder, load_model, save_autoencoder, save_model};
pub use checkpoint::{Checkpoint, CheckpointMeta, NamedArray, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use network::{decode, encode, Autoencoder, AutoencoderForward, Forward, Mode, Model, RunningStats, INFER_CHUNK};
pub use spec::{
    build_decoder, build_student_encoder, build_teacher_encoder, codeword_len, LayerSpec, ModelSpec, NodeSpec, Role,
    TEACHER_BRANCH_WIDTH,
};

/// Which encoder architecture a network uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    /// Multi-resolution CRNet-style encoder.
    Teacher,
    /// Single-convolution CRNet-SE-style encoder.
    Student,
}

impl EncoderKind {
    pub fn build(self, n_t: usize, n_c: usize, n_s: usize) -> crate::Result<ModelSpec> {
        match self {
            EncoderKind::Teacher => build_teacher_encoder(n_t, n_c, n_s),
            EncoderKind::Student => build_student_encoder(n_t, n_c, n_s),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Teacher => "teacher",
            EncoderKind::Student => "student",
        }
    }
}
