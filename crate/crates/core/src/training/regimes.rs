use std::path::Path;

use super::config::{KdConfig, TrainConfig};
use super::fit::{fit, gather, PhasePlan};
use super::pairs::{pairs_from_flat, CodewordPairDataset, PairExchange, Producer};
use super::report::TrainReport;
use crate::analysis::{nmse, NmseResult};
use crate::autodiff::{Adam, Tape, Tensor, Var};
use crate::channel::{CsiDataset, Split};
use crate::error::{Error, Result};
use crate::models::{encode, Autoencoder, AutoencoderForward, Mode, Model, INFER_CHUNK};

/// Phase names used in reports.
pub mod phase {
    pub const PRETRAINING: &str = "pretraining";
    pub const AUTOENCODER_KD: &str = "autoencoder-distillation";
    pub const ENCODER_KD: &str = "encoder-distillation";
    pub const FINE_TUNE: &str = "fine-tune";
    pub const DECODER_FINE_TUNE: &str = "decoder-fine-tune";
}

/// File stems of the two pair exchanges.
pub const TEACHER_PAIRS: &str = "teacher_pairs";
pub const STUDENT_PAIRS: &str = "student_pairs";

/// Row-major copy of one split's normalized samples.
pub fn flat_split(data: &CsiDataset, split: Split) -> Vec<f64> {
    let samples = data.split(split);
    let mut out = Vec::with_capacity(samples.len() * data.sample_len());
    for s in samples {
        out.extend_from_slice(&s.values);
    }
    out
}

fn batch_tensor(rows: Vec<f64>, row_shape: &[usize]) -> Result<Tensor> {
    let len: usize = row_shape.iter().product();
    let mut shape = vec![rows.len() / len];
    shape.extend_from_slice(row_shape);
    Tensor::new(shape, rows)
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Test-split NMSE of an autoencoder in physical units.
pub fn evaluate_nmse(ae: &Autoencoder, data: &CsiDataset, split: Split) -> Result<NmseResult> {
    let x = flat_split(data, split);
    let y = ae.reconstruct(&x, INFER_CHUNK)?;
    nmse(&x, &y, data.sample_len(), &data.meta)
}

fn check_fits(ae: &Autoencoder, data: &CsiDataset) -> Result<()> {
    let want = [2, data.n_t(), data.n_c()];
    if ae.encoder.spec().input_shape != want {
        return Err(Error::ShapeMismatch(format!(
            "autoencoder input {:?} does not fit {}x{} dataset",
            ae.encoder.spec().input_shape,
            data.n_t(),
            data.n_c()
        )));
    }
    Ok(())
}

fn update(model: &mut Model, tape: &Tape, f: &crate::models::Forward, lr: f64) -> Result<()> {
    let params = model.params_mut();
    params.zero_grad();
    params.accumulate(tape, &f.bindings);
    Adam::default().step(params, lr)?;
    model.apply_batch_stats(&f.batch_stats);
    Ok(())
}

/// Train-mode forward of a batch, a loss built on top of it, backward and
/// one Adam step on both halves. Returns the batch loss.
fn autoencoder_step(
    ae: &mut Autoencoder,
    rows: Vec<f64>,
    lr: f64,
    loss: impl FnOnce(&mut Tape, &AutoencoderForward, Var) -> Result<Var>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let x = tape.constant(batch_tensor(rows, &ae.encoder.spec().input_shape)?);
    let f = ae.forward(&mut tape, x, Mode::Train, true, true)?;
    let l = loss(&mut tape, &f, x)?;
    let value = tape.value(l)[0];
    tape.backward(l)?;
    update(&mut ae.encoder, &tape, &f.encoder, lr)?;
    update(&mut ae.decoder, &tape, &f.decoder, lr)?;
    Ok(value)
}

/// Regresses `model(input)` onto `target` with MSE for one batch.
fn regression_step(model: &mut Model, input: Vec<f64>, target: Vec<f64>, lr: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let x = tape.constant(batch_tensor(input, &model.spec().input_shape)?);
    let t = tape.constant(batch_tensor(target, &model.spec().output_shape)?);
    let f = model.forward(&mut tape, x, Mode::Train, true)?;
    let l = tape.mse_loss(f.output, t)?;
    let value = tape.value(l)[0];
    tape.backward(l)?;
    update(model, &tape, &f, lr)?;
    Ok(value)
}

/// Loss of one autoencoder-distillation batch:
/// `alpha * MSE(x, z_s) + (1 - alpha) * H(softmax_t(z_t), softmax_t(z_s))`.
pub fn kd_batch_loss(tape: &mut Tape, student_out: Var, input: Var, teacher_out: Var, kd: &KdConfig) -> Result<Var> {
    let hard = tape.mse_loss(student_out, input)?;
    let p = tape.softmax_t(teacher_out, kd.temperature)?;
    let q = tape.softmax_t(student_out, kd.temperature)?;
    let soft = tape.soft_cross_entropy(p, q)?;
    let a = tape.scale(hard, kd.alpha);
    let b = tape.scale(soft, 1.0 - kd.alpha);
    tape.add(a, b)
}

fn reconstruction_fit(
    ae: &mut Autoencoder,
    data: &CsiDataset,
    config: &TrainConfig,
    plan: &PhasePlan,
    teacher_out: Option<(&[f64], &KdConfig)>,
) -> Result<super::report::PhaseReport> {
    check_fits(ae, data)?;
    let train = flat_split(data, Split::Train);
    let val = flat_split(data, Split::Val);
    let len = data.sample_len();
    fit(
        ae,
        config,
        plan,
        train.len() / len,
        |ae, idx, lr| {
            let rows = gather(&train, len, idx);
            match teacher_out {
                None => autoencoder_step(ae, rows, lr, |tape, f, x| tape.mse_loss(f.output, x)),
                Some((t_out, kd)) => {
                    let t_rows = batch_tensor(gather(t_out, len, idx), &ae.decoder.spec().output_shape)?;
                    autoencoder_step(ae, rows, lr, |tape, f, x| {
                        let t = tape.constant(t_rows);
                        kd_batch_loss(tape, f.output, x, t, kd)
                    })
                }
            }
        },
        |ae| Ok(mse(&ae.reconstruct(&val, INFER_CHUNK)?, &val)),
    )
}

/// Trains an autoencoder from scratch on reconstruction MSE.
pub fn train_vanilla(ae: &mut Autoencoder, data: &CsiDataset, config: &TrainConfig) -> Result<TrainReport> {
    let plan = PhasePlan::scheduled(phase::PRETRAINING, config);
    let mut report = TrainReport::new("vanilla");
    report.phases.push(reconstruction_fit(ae, data, config, &plan, None)?);
    report.final_nmse_db = Some(evaluate_nmse(ae, data, Split::Test)?.db);
    Ok(report)
}

/// Trains `student` against the ground truth and the softened reconstructions
/// of a frozen, eval-mode `teacher`.
pub fn distill_autoencoder(
    teacher: &Autoencoder,
    student: &mut Autoencoder,
    data: &CsiDataset,
    config: &TrainConfig,
    kd: &KdConfig,
) -> Result<TrainReport> {
    kd.validate()?;
    check_fits(teacher, data)?;
    // the teacher is frozen, so its outputs are fixed for the whole run
    let teacher_out = teacher.reconstruct(&flat_split(data, Split::Train), INFER_CHUNK)?;
    let plan = PhasePlan::scheduled(phase::AUTOENCODER_KD, config);
    let mut report = TrainReport::new("autoencoder-kd");
    report
        .phases
        .push(reconstruction_fit(student, data, config, &plan, Some((&teacher_out, kd)))?);
    report.final_nmse_db = Some(evaluate_nmse(student, data, Split::Test)?.db);
    Ok(report)
}

/// Short fixed-LR MSE training of a combined autoencoder. The untouched model
/// competes in checkpoint selection, so validation loss cannot get worse.
pub fn fine_tune_end_to_end(
    ae: &mut Autoencoder,
    data: &CsiDataset,
    config: &TrainConfig,
    epochs_budget: usize,
) -> Result<TrainReport> {
    ae.encoder.reset_optimizer();
    ae.decoder.reset_optimizer();
    let plan = PhasePlan::fine_tune(phase::FINE_TUNE, config, epochs_budget);
    let mut report = TrainReport::new("fine-tune");
    report.phases.push(reconstruction_fit(ae, data, config, &plan, None)?);
    report.final_nmse_db = Some(evaluate_nmse(ae, data, Split::Test)?.db);
    Ok(report)
}

fn check_pairs_fit_encoder(encoder: &Model, pairs: &CodewordPairDataset) -> Result<()> {
    let spec = encoder.spec();
    if spec.output_len() != pairs.n_s || spec.input_shape != [2, pairs.n_t, pairs.n_c] {
        return Err(Error::ShapeMismatch(format!(
            "{} maps {:?} to {}, pairs hold {}x{} CSI with n_s={}",
            spec.name,
            spec.input_shape,
            spec.output_len(),
            pairs.n_t,
            pairs.n_c,
            pairs.n_s
        )));
    }
    Ok(())
}

/// Regresses the student encoder onto the paired codewords. Only the pair
/// datasets and the student are visible here.
pub fn train_encoder_on_pairs(
    student: &mut Model,
    train: &CodewordPairDataset,
    val: &CodewordPairDataset,
    config: &TrainConfig,
) -> Result<TrainReport> {
    check_pairs_fit_encoder(student, train)?;
    check_pairs_fit_encoder(student, val)?;
    let plan = PhasePlan::scheduled(phase::ENCODER_KD, config);
    let (l, n_s) = (train.sample_len(), train.n_s);
    let phase = fit(
        student,
        config,
        &plan,
        train.len(),
        |m, idx, lr| regression_step(m, gather(&train.csi, l, idx), gather(&train.codewords, n_s, idx), lr),
        |m| Ok(mse(&encode(m, &val.csi)?, &val.codewords)),
    )?;
    let mut report = TrainReport::new("encoder-on-pairs");
    report.phases.push(phase);
    Ok(report)
}

/// Trains `student` to reproduce the frozen teacher encoder's codewords.
pub fn distill_encoder(
    teacher_encoder: &Model,
    student: &mut Model,
    data: &CsiDataset,
    config: &TrainConfig,
) -> Result<TrainReport> {
    if teacher_encoder.spec().output_len() != student.spec().output_len() {
        return Err(Error::ShapeMismatch(format!(
            "teacher codewords have length {}, student emits {}",
            teacher_encoder.spec().output_len(),
            student.spec().output_len()
        )));
    }
    let train = pairs_from_flat(teacher_encoder, flat_split(data, Split::Train), Producer::TeacherEncoder)?;
    let val = pairs_from_flat(teacher_encoder, flat_split(data, Split::Val), Producer::TeacherEncoder)?;
    let mut report = train_encoder_on_pairs(student, &train, &val, config)?;
    report.regime = "encoder-distillation".into();
    Ok(report)
}

/// Encoder distillation followed by end-to-end fine-tuning of the student
/// encoder joined with a copy of the teacher decoder.
pub fn run_encoder_kd(
    teacher: &Autoencoder,
    mut student_encoder: Model,
    data: &CsiDataset,
    config: &TrainConfig,
    fine_tune_epochs: usize,
) -> Result<(Autoencoder, TrainReport)> {
    let mut report = TrainReport::new("encoder-kd");
    report.extend(distill_encoder(&teacher.encoder, &mut student_encoder, data, config)?);
    let mut ae = Autoencoder::combine(student_encoder, teacher.decoder.clone())?;
    let ft = fine_tune_end_to_end(&mut ae, data, config, fine_tune_epochs)?;
    report.final_nmse_db = ft.final_nmse_db;
    report.extend(ft);
    Ok((ae, report))
}

/// Trains the decoder to reconstruct paired CSI from the student's
/// codewords. The encoder that produced them is never visible.
pub fn fine_tune_decoder_only(
    decoder: &mut Model,
    train: &CodewordPairDataset,
    val: &CodewordPairDataset,
    config: &TrainConfig,
    epochs_budget: usize,
) -> Result<TrainReport> {
    for p in [train, val] {
        if decoder.spec().input_len() != p.n_s || decoder.spec().output_shape != [2, p.n_t, p.n_c] {
            return Err(Error::ShapeMismatch(format!(
                "decoder maps {} to {:?}, pairs hold n_s={} for {}x{}",
                decoder.spec().input_len(),
                decoder.spec().output_shape,
                p.n_s,
                p.n_t,
                p.n_c
            )));
        }
    }
    decoder.reset_optimizer();
    let plan = PhasePlan::fine_tune(phase::DECODER_FINE_TUNE, config, epochs_budget);
    let (l, n_s) = (train.sample_len(), train.n_s);
    let phase = fit(
        decoder,
        config,
        &plan,
        train.len(),
        |m, idx, lr| regression_step(m, gather(&train.codewords, n_s, idx), gather(&train.csi, l, idx), lr),
        |m| Ok(mse(&m.infer(&val.codewords, INFER_CHUNK)?, &val.csi)),
    )?;
    let mut report = TrainReport::new("decoder-fine-tune");
    report.phases.push(phase);
    Ok(report)
}

fn expect_producer(ex: &PairExchange, want: Producer) -> Result<()> {
    if ex.train.producer != want {
        return Err(Error::InvalidConfig(format!(
            "expected pairs from {want:?}, found {:?}",
            ex.train.producer
        )));
    }
    Ok(())
}

/// Variant step 1 (base-station side): writes teacher-encoder pairs for the
/// training and validation splits into `dir`.
pub fn variant_export_teacher_pairs(teacher_encoder: &Model, data: &CsiDataset, dir: &Path) -> Result<()> {
    let ex = PairExchange {
        train: pairs_from_flat(teacher_encoder, flat_split(data, Split::Train), Producer::TeacherEncoder)?,
        val: pairs_from_flat(teacher_encoder, flat_split(data, Split::Val), Producer::TeacherEncoder)?,
    };
    ex.save(dir, TEACHER_PAIRS)
}

/// Variant step 2 (user-equipment side): trains the student encoder on the
/// teacher pairs found in `dir`, then writes its own codewords for the same
/// CSI back into `dir`.
pub fn variant_train_student(student: &mut Model, dir: &Path, config: &TrainConfig) -> Result<TrainReport> {
    let teacher = PairExchange::load(dir, TEACHER_PAIRS)?;
    expect_producer(&teacher, Producer::TeacherEncoder)?;
    let report = train_encoder_on_pairs(student, &teacher.train, &teacher.val, config)?;
    let ex = PairExchange {
        train: pairs_from_flat(student, teacher.train.csi, Producer::StudentEncoder)?,
        val: pairs_from_flat(student, teacher.val.csi, Producer::StudentEncoder)?,
    };
    ex.save(dir, STUDENT_PAIRS)?;
    Ok(report)
}

/// Variant step 3 (base-station side): fine-tunes the teacher decoder on the
/// student pairs found in `dir`.
pub fn variant_fine_tune_decoder(
    decoder: &mut Model,
    dir: &Path,
    config: &TrainConfig,
    epochs_budget: usize,
) -> Result<TrainReport> {
    let student = PairExchange::load(dir, STUDENT_PAIRS)?;
    expect_producer(&student, Producer::StudentEncoder)?;
    fine_tune_decoder_only(decoder, &student.train, &student.val, config, epochs_budget)
}

/// The three variant steps in one process, exchanging pairs through `dir`.
pub fn run_variant_encoder_kd(
    teacher: &Autoencoder,
    mut student_encoder: Model,
    data: &CsiDataset,
    config: &TrainConfig,
    fine_tune_epochs: usize,
    dir: &Path,
) -> Result<(Autoencoder, TrainReport)> {
    variant_export_teacher_pairs(&teacher.encoder, data, dir)?;
    let mut report = TrainReport::new("variant-encoder-kd");
    report.extend(variant_train_student(&mut student_encoder, dir, config)?);
    let mut decoder = teacher.decoder.clone();
    report.extend(variant_fine_tune_decoder(&mut decoder, dir, config, fine_tune_epochs)?);
    let ae = Autoencoder::combine(student_encoder, decoder)?;
    report.final_nmse_db = Some(evaluate_nmse(&ae, data, Split::Test)?.db);
    Ok((ae, report))
}

/// Sequential training from an already trained base-station autoencoder:
/// its codewords supervise the deployed encoder, whose output then feeds the
/// base-station decoder unchanged.
pub fn sequential_from_pretrained(
    bs: &Autoencoder,
    mut deploy_encoder: Model,
    data: &CsiDataset,
    config: &TrainConfig,
    dir: &Path,
) -> Result<(Autoencoder, TrainReport)> {
    let ex = PairExchange {
        train: pairs_from_flat(&bs.encoder, flat_split(data, Split::Train), Producer::TeacherEncoder)?,
        val: pairs_from_flat(&bs.encoder, flat_split(data, Split::Val), Producer::TeacherEncoder)?,
    };
    ex.save(dir, TEACHER_PAIRS)?;
    let ex = PairExchange::load(dir, TEACHER_PAIRS)?;
    let mut report = TrainReport::new("sequential");
    report.extend(train_encoder_on_pairs(&mut deploy_encoder, &ex.train, &ex.val, config)?);
    let ae = Autoencoder::combine(deploy_encoder, bs.decoder.clone())?;
    report.final_nmse_db = Some(evaluate_nmse(&ae, data, Split::Test)?.db);
    Ok((ae, report))
}

/// Base-station-first sequential training: train `bs` from scratch, then
/// [`sequential_from_pretrained`].
pub fn run_sequential_training(
    bs: &mut Autoencoder,
    deploy_encoder: Model,
    data: &CsiDataset,
    config: &TrainConfig,
    dir: &Path,
) -> Result<(Autoencoder, TrainReport)> {
    let pre = train_vanilla(bs, data, config)?;
    let (ae, mut report) = sequential_from_pretrained(bs, deploy_encoder, data, config, dir)?;
    let mut phases = pre.phases;
    phases.append(&mut report.phases);
    report.phases = phases;
    Ok((ae, report))
}
