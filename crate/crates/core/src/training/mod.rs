//! Vanilla, autoencoder-distillation, encoder-distillation and
//! pair-exchange training regimes, with the schedule, early stopping,
//! pair-file format and per-run reports they share.

mod config;
mod fit;
mod pairs;
mod regimes;
mod report;

pub use config::{EarlyStopping, KdConfig, StopReason, TrainConfig, REFERENCE_EPOCHS};
pub use pairs::{
    generate_codeword_pairs, pairs_from_flat, CodewordPairDataset, PairExchange, Producer, PAIRS_MAGIC,
    PAIRS_VERSION,
};
pub use regimes::{
    distill_autoencoder, distill_encoder, evaluate_nmse, fine_tune_decoder_only, fine_tune_end_to_end, flat_split,
    kd_batch_loss, phase, run_encoder_kd, run_sequential_training, run_variant_encoder_kd,
    sequential_from_pretrained, train_encoder_on_pairs, train_vanilla, variant_export_teacher_pairs,
    variant_fine_tune_decoder, variant_train_student, STUDENT_PAIRS, TEACHER_PAIRS,
};
pub use report::{EpochRecord, PhaseReport, TrainReport};

#[cfg(test)]
mod tests;
