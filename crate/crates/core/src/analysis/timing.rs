use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Model;

/// Batch-1 inference latency over `repetitions` timed runs that follow
/// `warmups` discarded runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub component: String,
    pub batch_size: usize,
    pub repetitions: usize,
    pub warmups: usize,
    pub median_s: f64,
    pub mean_s: f64,
    pub p95_s: f64,
    /// Timed runs in execution order, seconds.
    pub samples_s: Vec<f64>,
    pub host: String,
}

/// (median, mean, nearest-rank p95) of non-empty `samples`.
pub fn timing_stats(samples: &[f64]) -> Result<(f64, f64, f64)> {
    if samples.is_empty() {
        return Err(Error::InvalidConfig("no timing samples".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let median = if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) };
    let mean = s.iter().sum::<f64>() / n as f64;
    let rank = (0.95 * n as f64).ceil() as usize;
    Ok((median, mean, s[rank.max(1) - 1]))
}

/// OS, architecture, logical CPU count and CPU model where available.
pub fn host_descriptor() -> String {
    let cpus = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let model = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    format!(
        "{}-{} {} ({} logical cpus)",
        std::env::consts::OS,
        std::env::consts::ARCH,
        model,
        cpus
    )
}

/// Times `f` after discarding `warmups` calls.
pub fn time_repeated<F: FnMut() -> Result<()>>(
    component: &str,
    repetitions: usize,
    warmups: usize,
    mut f: F,
) -> Result<TimingReport> {
    if repetitions == 0 {
        return Err(Error::InvalidConfig("benchmark needs at least one repetition".into()));
    }
    for _ in 0..warmups {
        f()?;
    }
    let mut samples = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let t = Instant::now();
        f()?;
        samples.push(t.elapsed().as_secs_f64());
    }
    let (median_s, mean_s, p95_s) = timing_stats(&samples)?;
    Ok(TimingReport {
        component: component.into(),
        batch_size: 1,
        repetitions,
        warmups,
        median_s,
        mean_s,
        p95_s,
        samples_s: samples,
        host: host_descriptor(),
    })
}

/// Eval-mode batch-1 latency of `model` on a fixed pseudo-random input.
pub fn inference_benchmark(model: &Model, repetitions: usize, warmups: usize) -> Result<TimingReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let input: Vec<f64> = (0..model.spec().input_len()).map(|_| rng.random::<f64>()).collect();
    time_repeated(&model.spec().name, repetitions, warmups, || {
        std::hint::black_box(model.infer(std::hint::black_box(&input), 1)?);
        Ok(())
    })
}

/// Epoch counts and per-sample costs of the two training pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingCostInputs {
    /// Epochs of autoencoder distillation.
    pub n_au: f64,
    /// Epochs of encoder distillation.
    pub n_en: f64,
    /// Epochs of end-to-end fine-tuning after encoder distillation.
    pub n_ft: f64,
    pub c_en_student: f64,
    pub c_de_student: f64,
    pub c_de_teacher: f64,
}

/// Predicted speedup of encoder distillation over autoencoder distillation:
/// `n_au (c_en,s + c_de,s) / (n_en c_en,s + n_ft (c_en,s + c_de,t))`.
pub fn training_time_model(x: &TrainingCostInputs) -> Result<f64> {
    let all = [x.n_au, x.n_en, x.n_ft, x.c_en_student, x.c_de_student, x.c_de_teacher];
    if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidConfig(format!("training cost inputs must be finite and non-negative: {x:?}")));
    }
    let num = x.n_au * (x.c_en_student + x.c_de_student);
    let den = x.n_en * x.c_en_student + x.n_ft * (x.c_en_student + x.c_de_teacher);
    if num <= 0.0 || den <= 0.0 {
        return Err(Error::InvalidConfig("training cost model has a zero term".into()));
    }
    Ok(num / den)
}
