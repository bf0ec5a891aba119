use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{EarlyStopping, StopReason, TrainConfig};
use super::report::{EpochRecord, PhaseReport};
use crate::error::{Error, Result};

/// How one phase schedules its epochs.
#[derive(Debug, Clone)]
pub(crate) struct PhasePlan {
    pub name: String,
    pub max_epochs: usize,
    /// Fixed learning rate instead of the config schedule.
    pub fixed_lr: Option<f64>,
    /// Early stopping on; fixed-budget phases run every epoch.
    pub early_stopping: bool,
    /// Evaluate before training and let the untouched model win selection.
    pub include_initial: bool,
}

impl PhasePlan {
    pub fn scheduled(name: &str, config: &TrainConfig) -> Self {
        Self {
            name: name.into(),
            max_epochs: config.max_epochs,
            fixed_lr: None,
            early_stopping: true,
            include_initial: false,
        }
    }

    pub fn fine_tune(name: &str, config: &TrainConfig, budget: usize) -> Self {
        Self {
            name: name.into(),
            max_epochs: budget,
            fixed_lr: Some(config.dropped_lr),
            early_stopping: false,
            include_initial: true,
        }
    }
}

/// Shuffled mini-batches of `0..n`. A trailing singleton joins the previous
/// batch because train-mode batch normalization needs two samples.
pub(crate) fn epoch_batches(rng: &mut ChaCha8Rng, n: usize, batch_size: usize) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut batches: Vec<Vec<usize>> = idx.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() < 2) {
        let last = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(last);
    }
    batches
}

/// Gathers rows `idx` of a flat row-major array.
pub(crate) fn gather(flat: &[f64], row_len: usize, idx: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(idx.len() * row_len);
    for &i in idx {
        out.extend_from_slice(&flat[i * row_len..(i + 1) * row_len]);
    }
    out
}

/// Runs one phase: `step` trains on a batch and returns its mean loss,
/// `validate` scores the current model. The best-validated model is left in
/// `model` on return.
pub(crate) fn fit<M: Clone>(
    model: &mut M,
    config: &TrainConfig,
    plan: &PhasePlan,
    n_train: usize,
    mut step: impl FnMut(&mut M, &[usize], f64) -> Result<f64>,
    mut validate: impl FnMut(&M) -> Result<f64>,
) -> Result<PhaseReport> {
    config.validate()?;
    let start = Instant::now();
    if n_train < 2 {
        return Err(Error::InvalidConfig(format!(
            "{} needs at least two training samples, got {n_train}",
            plan.name
        )));
    }
    let mut epochs = Vec::new();
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = None;
    if plan.include_initial {
        let v = validate(model)?;
        stopper.observe(0, v);
        epochs.push(EpochRecord {
            epoch: 0,
            lr: 0.0,
            train_loss: f64::NAN,
            val_loss: v,
        });
        best = Some(model.clone());
    }
    let mut stop_reason = if plan.max_epochs == 0 {
        StopReason::NoBudget
    } else {
        StopReason::MaxEpochs
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for epoch in 1..=plan.max_epochs {
        let lr = plan.fixed_lr.unwrap_or_else(|| config.lr_at(epoch));
        let mut total = 0.0;
        for batch in epoch_batches(&mut rng, n_train, config.batch_size) {
            let loss = step(model, &batch, lr)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            total += loss * batch.len() as f64;
        }
        let train_loss = total / n_train as f64;
        let val_loss = validate(model)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch, loss: val_loss });
        }
        epochs.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            val_loss,
        });
        let (improved, stop) = stopper.observe(epoch, val_loss);
        if improved {
            best = Some(model.clone());
        }
        log::debug!(
            "{} epoch {epoch}: lr {lr:e} train {train_loss:.6e} val {val_loss:.6e}",
            plan.name
        );
        if plan.early_stopping && stop {
            stop_reason = StopReason::EarlyStopping;
            break;
        }
    }
    if let Some(b) = best {
        *model = b;
    }
    let wall_clock_s = start.elapsed().as_secs_f64();
    log::info!(
        "{}: best epoch {} val {:.6e} ({:?}, {:.1}s)",
        plan.name,
        stopper.best_epoch,
        stopper.best_loss,
        stop_reason,
        wall_clock_s
    );
    Ok(PhaseReport {
        name: plan.name.clone(),
        epochs,
        best_epoch: stopper.best_epoch,
        best_val_loss: stopper.best_loss,
        stop_reason,
        wall_clock_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_cover_every_index_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (n, b) in [(10, 3), (9, 4), (7, 7), (2, 200)] {
            let batches = epoch_batches(&mut rng, n, b);
            let mut all: Vec<usize> = batches.iter().flatten().copied().collect();
            all.sort();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
            assert!(batches.iter().all(|x| x.len() >= 2));
        }
    }

    #[test]
    fn constant_val_loss_stops_after_patience() {
        let mut config = TrainConfig::paper(500, 0);
        config.patience = 7;
        let plan = PhasePlan::scheduled("const", &config);
        let mut model = 0u32;
        let r = fit(&mut model, &config, &plan, 4, |m, _, _| {
            *m += 1;
            Ok(1.0)
        }, |_| Ok(0.5))
        .unwrap();
        assert_eq!(r.best_epoch, 1);
        assert_eq!(r.epochs.len(), 8);
        assert_eq!(r.stop_reason, StopReason::EarlyStopping);
        // the epoch-1 snapshot is restored
        assert_eq!(model, 1);
    }

    #[test]
    fn zero_budget_leaves_model_unchanged() {
        let config = TrainConfig::paper(10, 0);
        let plan = PhasePlan::fine_tune("ft", &config, 0);
        let mut model = 5u32;
        let r = fit(&mut model, &config, &plan, 4, |m, _, _| {
            *m += 1;
            Ok(1.0)
        }, |_| Ok(0.5))
        .unwrap();
        assert_eq!(model, 5);
        assert_eq!(r.stop_reason, StopReason::NoBudget);
    }

    #[test]
    fn nan_loss_reports_epoch() {
        let config = TrainConfig::paper(10, 0);
        let plan = PhasePlan::scheduled("nan", &config);
        let mut model = 0u32;
        let mut calls = 0;
        let err = fit(&mut model, &config, &plan, 4, |_, _, _| {
            calls += 1;
            Ok(if calls > 2 { f64::NAN } else { 1.0 })
        }, |_| Ok(0.5))
        .unwrap_err();
        assert!(matches!(err, Error::Diverged { epoch: 3, .. }), "{err}");
    }

    #[test]
    fn best_val_is_min_over_epochs() {
        let config = TrainConfig::paper(6, 0);
        let plan = PhasePlan::scheduled("v", &config);
        let vals = [0.5, 0.3, 0.4, 0.2, 0.6, 0.25];
        let mut model = 0usize;
        let r = fit(&mut model, &config, &plan, 4, |m, _, _| {
            *m += 1;
            Ok(1.0)
        }, |m| Ok(vals[*m - 1]))
        .unwrap();
        let min = r.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(r.best_val_loss, min);
        assert_eq!(r.best_epoch, 4);
    }
}
