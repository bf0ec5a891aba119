use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{Tape, Tensor};
use crate::channel::{build_dataset, CsiDataset, ScenarioConfig, Split, SplitCounts};
use crate::models::{build_decoder, build_student_encoder, build_teacher_encoder, encode, Autoencoder, CheckpointMeta, Mode, Model};

fn small_dataset(n: usize, counts: SplitCounts, seed: u64) -> CsiDataset {
    let mut sc = ScenarioConfig::umi_los(seed);
    sc.n_tx_antennas = n;
    sc.n_subcarriers = n;
    build_dataset(&sc, counts).unwrap()
}

fn student_ae(n: usize, n_s: usize, seed: u64) -> Autoencoder {
    Autoencoder::combine(
        Model::new(build_student_encoder(n, n, n_s).unwrap(), seed).unwrap(),
        Model::new(build_decoder(n, n, n_s, 8).unwrap(), seed + 1000).unwrap(),
    )
    .unwrap()
}

fn teacher_ae(n: usize, n_s: usize, seed: u64) -> Autoencoder {
    Autoencoder::combine(
        Model::new(build_teacher_encoder(n, n, n_s).unwrap(), seed).unwrap(),
        Model::new(build_decoder(n, n, n_s, 8).unwrap(), seed + 1000).unwrap(),
    )
    .unwrap()
}

fn config(epochs: usize, batch: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: batch,
        ..TrainConfig::desk(epochs, 4000, seed)
    }
}

fn checkpoint_bytes(ae: &Autoencoder) -> Vec<u8> {
    ae.to_checkpoint(CheckpointMeta {
        epoch: 0,
        val_loss: 0.0,
        seed: 0,
    })
    .to_bytes()
}

#[test]
fn alpha_one_kd_loss_equals_vanilla_bitwise() {
    let data = small_dataset(8, SplitCounts::new(40, 10, 10), 3);
    let teacher = teacher_ae(8, 8, 1);
    let student = student_ae(8, 8, 2);
    let x = flat_split(&data, Split::Train);
    let t_out = teacher.reconstruct(&x, 16).unwrap();
    let kd = KdConfig {
        alpha: 1.0,
        temperature: 5.0,
    };
    for b in 0..4 {
        let rows = x[b * 10 * 128..(b + 1) * 10 * 128].to_vec();
        let trows = t_out[b * 10 * 128..(b + 1) * 10 * 128].to_vec();
        let mut tape = Tape::new();
        let xv = tape.constant(Tensor::new(vec![10, 2, 8, 8], rows.clone()).unwrap());
        let f = student.forward(&mut tape, xv, Mode::Train, true, true).unwrap();
        let vanilla = tape.mse_loss(f.output, xv).unwrap();
        let tv = tape.constant(Tensor::new(vec![10, 2, 8, 8], trows).unwrap());
        let kd_loss = kd_batch_loss(&mut tape, f.output, xv, tv, &kd).unwrap();
        assert_eq!(tape.value(kd_loss)[0].to_bits(), tape.value(vanilla)[0].to_bits());
    }

    // whole runs agree too: same losses every epoch and the same weights
    let cfg = config(3, 10, 5);
    let mut a = student.clone();
    let mut b = student.clone();
    let ra = train_vanilla(&mut a, &data, &cfg).unwrap();
    let rb = distill_autoencoder(&teacher, &mut b, &data, &cfg, &kd).unwrap();
    let bits = |r: &TrainReport| -> Vec<(u64, u64)> {
        r.phases[0].epochs.iter().map(|e| (e.train_loss.to_bits(), e.val_loss.to_bits())).collect()
    };
    assert_eq!(bits(&ra), bits(&rb));
    assert_eq!(checkpoint_bytes(&a), checkpoint_bytes(&b));
}

#[test]
fn alpha_zero_trains_on_soft_targets_only() {
    let data = small_dataset(8, SplitCounts::new(40, 10, 10), 3);
    let teacher = teacher_ae(8, 8, 1);
    let mut student = student_ae(8, 8, 2);
    let kd = KdConfig {
        alpha: 0.0,
        temperature: 5.0,
    };
    let r = distill_autoencoder(&teacher, &mut student, &data, &config(2, 10, 1), &kd).unwrap();
    assert_eq!(r.phases[0].epochs.len(), 2);
    assert!(r.final_nmse_db.unwrap().is_finite());
}

#[test]
fn overfits_a_single_batch() {
    let data = small_dataset(8, SplitCounts::new(64, 8, 8), 11);
    let x = flat_split(&data, Split::Train);
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let variance = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / x.len() as f64;
    let mut ae = student_ae(8, 32, 4);
    let mut cfg = config(2000, 64, 4);
    cfg.lr_drop_epoch = 2000;
    cfg.patience = 2000;
    let r = train_vanilla(&mut ae, &data, &cfg).unwrap();
    let epochs = &r.phases[0].epochs;
    let first = epochs.iter().position(|e| e.train_loss < 1e-3);
    assert!(first.is_some(), "train MSE never below 1e-3");
    // well past the predict-the-mean plateau
    let last = epochs.last().unwrap().train_loss;
    assert!(last < 0.25 * variance, "final train MSE {last:e}, variance {variance:e}");
}

#[test]
fn vanilla_training_is_deterministic_and_improves() {
    let data = small_dataset(8, SplitCounts::new(200, 50, 50), 7);
    let cfg = config(30, 16, 9);
    let mut a = student_ae(8, 8, 5);
    let before = evaluate_nmse(&a, &data, Split::Test).unwrap().linear;
    let mut b = a.clone();
    let ra = train_vanilla(&mut a, &data, &cfg).unwrap();
    let rb = train_vanilla(&mut b, &data, &cfg).unwrap();
    assert_eq!(checkpoint_bytes(&a), checkpoint_bytes(&b));
    assert_eq!(ra.epochs_table().to_csv().unwrap(), rb.epochs_table().to_csv().unwrap());
    let after = evaluate_nmse(&a, &data, Split::Test).unwrap();
    assert!(after.linear < before, "{} -> {}", before, after.linear);
    let p = &ra.phases[0];
    let min = p.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(p.best_val_loss, min);
}

#[test]
fn encoder_distillation_matches_training_on_pairs() {
    let data = small_dataset(8, SplitCounts::new(60, 20, 20), 2);
    let teacher = teacher_ae(8, 8, 1);
    let cfg = config(3, 16, 3);
    let mut a = Model::new(build_student_encoder(8, 8, 8).unwrap(), 8).unwrap();
    let mut b = a.clone();
    distill_encoder(&teacher.encoder, &mut a, &data, &cfg).unwrap();
    let train = generate_codeword_pairs(&teacher.encoder, data.split(Split::Train), Producer::TeacherEncoder).unwrap();
    let val = generate_codeword_pairs(&teacher.encoder, data.split(Split::Val), Producer::TeacherEncoder).unwrap();
    train_encoder_on_pairs(&mut b, &train, &val, &cfg).unwrap();
    assert_eq!(a, b);

    // a student identical to the teacher starts at zero loss
    let copy = teacher.encoder.clone();
    assert_eq!(encode(&copy, &val.csi).unwrap(), val.codewords);

    // mismatched codeword lengths are refused
    let mut short = Model::new(build_student_encoder(8, 8, 4).unwrap(), 8).unwrap();
    assert!(distill_encoder(&teacher.encoder, &mut short, &data, &cfg).is_err());
    assert!(train_encoder_on_pairs(&mut short, &train, &val, &cfg).is_err());
}

#[test]
fn zero_budgets_leave_models_unchanged() {
    let data = small_dataset(8, SplitCounts::new(20, 10, 10), 2);
    let cfg = config(3, 10, 3);
    let mut ae = student_ae(8, 8, 1);
    let before = checkpoint_bytes(&ae);
    let r = fine_tune_end_to_end(&mut ae, &data, &cfg, 0).unwrap();
    assert_eq!(checkpoint_bytes(&ae), before);
    assert_eq!(r.phases[0].stop_reason, StopReason::NoBudget);

    let pairs = generate_codeword_pairs(&ae.encoder, data.split(Split::Train), Producer::StudentEncoder).unwrap();
    let mut dec = ae.decoder.clone();
    fine_tune_decoder_only(&mut dec, &pairs, &pairs, &cfg, 0).unwrap();
    assert_eq!(dec.params(), ae.decoder.params());
}

#[test]
fn fine_tune_never_worsens_validation() {
    let data = small_dataset(8, SplitCounts::new(60, 20, 20), 4);
    let teacher = teacher_ae(8, 8, 1);
    let mut ae = Autoencoder::combine(
        Model::new(build_student_encoder(8, 8, 8).unwrap(), 3).unwrap(),
        teacher.decoder.clone(),
    )
    .unwrap();
    let r = fine_tune_end_to_end(&mut ae, &data, &config(10, 100, 3), 3).unwrap();
    let p = &r.phases[0];
    assert_eq!(p.epochs[0].epoch, 0);
    assert!(p.best_val_loss <= p.epochs[0].val_loss);
    assert!(p.epochs[1..].iter().all(|e| e.lr == 1e-4));
}

#[test]
fn variant_protocol_exchanges_only_pair_files() {
    let data = small_dataset(8, SplitCounts::new(40, 10, 10), 5);
    let teacher = teacher_ae(8, 8, 1);
    let student = Model::new(build_student_encoder(8, 8, 8).unwrap(), 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(2, 10, 1);
    let (ae, report) = run_variant_encoder_kd(&teacher, student, &data, &cfg, 1, dir.path()).unwrap();
    let mut files: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(
        files,
        [
            "student_pairs.train.csip",
            "student_pairs.val.csip",
            "teacher_pairs.train.csip",
            "teacher_pairs.val.csip"
        ]
    );
    let names: Vec<&str> = report.phases.iter().map(|p| p.name.as_str()).collect();
    assert_eq!(names, [phase::ENCODER_KD, phase::DECODER_FINE_TUNE]);
    assert!(report.final_nmse_db.is_some());

    // the deployed encoder is exactly what produced the student pairs
    let ex = PairExchange::load(dir.path(), STUDENT_PAIRS).unwrap();
    assert_eq!(encode(&ae.encoder, &ex.train.csi).unwrap(), ex.train.codewords);

    // step 3 refuses teacher pairs
    let mut dec = teacher.decoder.clone();
    std::fs::copy(dir.path().join("teacher_pairs.train.csip"), dir.path().join("student_pairs.train.csip")).unwrap();
    std::fs::copy(dir.path().join("teacher_pairs.val.csip"), dir.path().join("student_pairs.val.csip")).unwrap();
    assert!(variant_fine_tune_decoder(&mut dec, dir.path(), &cfg, 1).is_err());
}

#[test]
fn sequential_training_emits_one_exchange() {
    let data = small_dataset(8, SplitCounts::new(40, 10, 10), 6);
    let mut bs = student_ae(8, 8, 1);
    let deploy = Model::new(build_student_encoder(8, 8, 8).unwrap(), 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (ae, report) = run_sequential_training(&mut bs, deploy, &data, &config(2, 10, 1), dir.path()).unwrap();
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
    assert_eq!(report.phases.len(), 2);
    assert_eq!(ae.decoder, bs.decoder);
}

#[test]
fn encoder_epochs_are_cheaper_than_autoencoder_epochs() {
    let data = small_dataset(16, SplitCounts::new(100, 20, 20), 8);
    let teacher = teacher_ae(16, 32, 1);
    let cfg = config(2, 20, 1);
    let mut s_ae = student_ae(16, 32, 2);
    let ae_kd = distill_autoencoder(&teacher, &mut s_ae, &data, &cfg, &KdConfig::default()).unwrap();
    let mut s_enc = Model::new(build_student_encoder(16, 16, 32).unwrap(), 2).unwrap();
    let enc_kd = distill_encoder(&teacher.encoder, &mut s_enc, &data, &cfg).unwrap();
    let per_epoch = |r: &TrainReport| r.wall_clock_s() / r.phases[0].epochs.len() as f64;
    assert!(per_epoch(&enc_kd) < per_epoch(&ae_kd));
}

#[test]
fn desk_defaults_fit_random_rng_use() {
    // shuffling draws from the config seed only
    let mut a = ChaCha8Rng::seed_from_u64(3);
    let mut b = ChaCha8Rng::seed_from_u64(3);
    assert_eq!(
        super::fit::epoch_batches(&mut a, 11, 4),
        super::fit::epoch_batches(&mut b, 11, 4)
    );
}

#[test]
fn reports_survive_json_with_non_finite_losses() {
    let data = small_dataset(8, SplitCounts::new(20, 10, 10), 2);
    let mut ae = student_ae(8, 8, 1);
    let mut r = fine_tune_end_to_end(&mut ae, &data, &config(2, 10, 3), 1).unwrap();
    assert!(r.phases[0].epochs[0].train_loss.is_nan());
    r.phases[0].best_val_loss = f64::NEG_INFINITY;
    let back: TrainReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert!(back.phases[0].epochs[0].train_loss.is_nan());
    assert_eq!(back.phases[0].best_val_loss, f64::NEG_INFINITY);
    assert_eq!(back.phases[0].epochs[1..], r.phases[0].epochs[1..]);
}
