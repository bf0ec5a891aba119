use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{derive_seed, SuiteConfig};
use crate::analysis::{
    emit_report, flops_ratio, model_flops, training_time_model, Cell, NmseResult, Table, TrainingCostInputs,
};
use crate::binio::write_file;
use crate::channel::{generate_raw, save_dataset, CsiDataset, Split};
use crate::error::{Error, Result};
use crate::models::{
    build_decoder, build_student_encoder, build_teacher_encoder, save_autoencoder, Autoencoder, CheckpointMeta,
    EncoderKind, Model,
};
use crate::training::{
    distill_autoencoder, evaluate_nmse, phase, run_encoder_kd, sequential_from_pretrained, train_vanilla,
    variant_export_teacher_pairs, variant_fine_tune_decoder, variant_train_student, TrainConfig, TrainReport,
};

/// Directory names under `<outdir>/`, one per trained network.
pub mod regime {
    pub const TEACHER: &str = "teacher";
    pub const VANILLA: &str = "vanilla";
    pub const AUTOENCODER_KD: &str = "autoencoder-kd";
    pub const ENCODER_KD: &str = "encoder-kd";
    pub const VARIANT_KD: &str = "variant-kd";
    pub const SEQUENTIAL: &str = "sequential";
    pub const MIXED_TEACHER: &str = "mixed-teacher";
    pub const GENERALIZATION: &str = "generalization";
}

/// Dataset labels in NMSE tables.
pub const PRIMARY: &str = "primary";
pub const SHIFTED: &str = "shifted";

pub const MANIFEST: &str = "manifest.json";
pub const LOGS: &str = "logs";
pub const TABLES: &str = "tables";

/// Steps 2 and 3 of the variant protocol. The base-station export (step 1)
/// always runs in the calling process.
pub trait VariantSteps: Sync {
    /// Trains a copy of `student` on the teacher pairs in `dir` and leaves
    /// the student pairs there.
    fn train_student(&self, student: &Model, dir: &Path, config: &TrainConfig) -> Result<(Model, TrainReport)>;

    /// Fine-tunes a copy of `decoder` on the student pairs in `dir`.
    fn fine_tune_decoder(
        &self,
        decoder: &Model,
        dir: &Path,
        config: &TrainConfig,
        epochs: usize,
    ) -> Result<(Model, TrainReport)>;
}

/// Runs both steps as plain function calls.
pub struct InProcess;

impl VariantSteps for InProcess {
    fn train_student(&self, student: &Model, dir: &Path, config: &TrainConfig) -> Result<(Model, TrainReport)> {
        let mut m = student.clone();
        let r = variant_train_student(&mut m, dir, config)?;
        Ok((m, r))
    }

    fn fine_tune_decoder(
        &self,
        decoder: &Model,
        dir: &Path,
        config: &TrainConfig,
        epochs: usize,
    ) -> Result<(Model, TrainReport)> {
        let mut m = decoder.clone();
        let r = variant_fine_tune_decoder(&mut m, dir, config, epochs)?;
        Ok((m, r))
    }
}

/// Both datasets normalized with one set of constants, fitted on the
/// training split of their union, plus that union.
pub struct SuiteData {
    pub primary: CsiDataset,
    pub shifted: CsiDataset,
    pub mixed: CsiDataset,
}

pub fn build_suite_data(cfg: &SuiteConfig) -> Result<SuiteData> {
    let a = generate_raw(&cfg.primary, cfg.counts)?;
    let b = generate_raw(&cfg.shifted, cfg.counts)?;
    let mixed = a.concat(&b)?;
    let meta = mixed.fit_meta()?;
    Ok(SuiteData {
        primary: a.normalize(meta).0,
        shifted: b.normalize(meta).0,
        mixed: mixed.normalize(meta).0,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RegimeOutcome {
    pub regime: String,
    /// Test-split NMSE per dataset label.
    pub nmse: Vec<(String, NmseResult)>,
    pub wall_clock_s: f64,
    pub report: TrainReport,
}

impl RegimeOutcome {
    pub fn db(&self, dataset: &str) -> Option<f64> {
        self.nmse.iter().find(|(d, _)| d == dataset).map(|(_, r)| r.db)
    }
}

/// Inputs and output of the training-time model next to the measurement.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrainingCost {
    pub inputs: TrainingCostInputs,
    pub predicted_ratio: f64,
    pub autoencoder_kd_s: f64,
    pub encoder_kd_s: f64,
}

impl TrainingCost {
    pub fn measured_ratio(&self) -> f64 {
        self.autoencoder_kd_s / self.encoder_kd_s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub regimes: Vec<RegimeOutcome>,
    pub cost: TrainingCost,
}

impl SeedOutcome {
    pub fn regime(&self, name: &str) -> Option<&RegimeOutcome> {
        self.regimes.iter().find(|r| r.regime == name)
    }
}

pub fn regime_dir(out: &Path, regime: &str, seed: u64) -> PathBuf {
    out.join(regime).join(seed.to_string())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let t = Instant::now();
    let v = f()?;
    Ok((v, t.elapsed().as_secs_f64()))
}

fn trained_epochs(report: &TrainReport, phase_name: &str) -> usize {
    report
        .phase(phase_name)
        .map_or(0, |p| p.epochs.iter().filter(|e| e.epoch > 0).count())
}

fn nmse_table(rows: &[(String, NmseResult)]) -> Table {
    let mut t = Table::new(
        "nmse",
        "Test-split NMSE",
        &["dataset", "samples", "degenerate", "nmse_linear", "nmse_db"],
    );
    for (d, r) in rows {
        t.push(vec![
            Cell::Text(d.clone()),
            Cell::Int(r.samples as u64),
            Cell::Int(r.degenerate as u64),
            Cell::Float(r.linear),
            Cell::Db(r.db),
        ]);
    }
    t
}

fn write_table(t: &Table, path: &Path) -> Result<()> {
    write_file(path, t.to_csv()?.as_bytes())
}

struct SeedRun<'a> {
    cfg: &'a SuiteConfig,
    data: &'a SuiteData,
    out: &'a Path,
    seed: u64,
    train: TrainConfig,
}

impl SeedRun<'_> {
    /// Saves the network, its loss curves and its test NMSE on `datasets`.
    fn finish(
        &self,
        name: &str,
        ae: &Autoencoder,
        report: TrainReport,
        secs: f64,
        datasets: &[(&str, &CsiDataset)],
    ) -> Result<RegimeOutcome> {
        let dir = regime_dir(self.out, name, self.seed);
        create_dir(&dir)?;
        let last = report.phases.last();
        let meta = CheckpointMeta {
            epoch: last.map_or(0, |p| p.best_epoch as u64),
            val_loss: last.map_or(f64::NAN, |p| p.best_val_loss),
            seed: self.seed,
        };
        save_autoencoder(ae, meta, &dir.join("model"))?;
        write_table(&report.epochs_table(), &dir.join("epochs.csv"))?;
        let mut nmse = Vec::new();
        for (label, d) in datasets {
            nmse.push((label.to_string(), evaluate_nmse(ae, d, Split::Test)?));
        }
        write_table(&nmse_table(&nmse), &dir.join("nmse.csv"))?;
        log::info!(
            "seed {} {name}: {} dB on {PRIMARY} ({secs:.1} s)",
            self.seed,
            nmse.first().map_or(f64::NAN, |(_, r)| r.db)
        );
        Ok(RegimeOutcome {
            regime: name.into(),
            nmse,
            wall_clock_s: secs,
            report,
        })
    }

    /// Base-station export here, then the two pair-only steps through `steps`.
    fn variant(
        &self,
        name: &str,
        teacher: &Autoencoder,
        student: &Model,
        steps: &dyn VariantSteps,
    ) -> Result<(Autoencoder, TrainReport)> {
        let dir = regime_dir(self.out, name, self.seed);
        create_dir(&dir)?;
        variant_export_teacher_pairs(&teacher.encoder, &self.data.primary, &dir)?;
        let (encoder, ue) = steps.train_student(student, &dir, &self.train)?;
        let (decoder, bs) = steps.fine_tune_decoder(&teacher.decoder, &dir, &self.train, self.cfg.fine_tune_epochs)?;
        let mut report = TrainReport::new(name);
        report.extend(ue);
        report.extend(bs);
        let ae = Autoencoder::combine(encoder, decoder)?;
        report.final_nmse_db = Some(evaluate_nmse(&ae, &self.data.primary, Split::Test)?.db);
        Ok((ae, report))
    }

    fn run(&self, steps: &dyn VariantSteps) -> Result<SeedOutcome> {
        use regime::*;
        let (m, d, seed) = (&self.cfg.model, self.data, self.seed);
        let primary = [(PRIMARY, &d.primary)];
        let both = [(PRIMARY, &d.primary), (SHIFTED, &d.shifted)];
        let mut out = Vec::new();

        let mut teacher = m.autoencoder(EncoderKind::Teacher, derive_seed(seed, TEACHER))?;
        let (r, s) = timed(|| train_vanilla(&mut teacher, &d.primary, &self.train))?;
        out.push(self.finish(TEACHER, &teacher, r, s, &primary)?);

        // every student regime starts from the same weights
        let student = m.autoencoder(EncoderKind::Student, derive_seed(seed, "student"))?;

        let mut vanilla = student.clone();
        let (r, s) = timed(|| train_vanilla(&mut vanilla, &d.primary, &self.train))?;
        out.push(self.finish(VANILLA, &vanilla, r, s, &both)?);

        let mut akd = student.clone();
        let (r, ae_s) = timed(|| distill_autoencoder(&teacher, &mut akd, &d.primary, &self.train, &self.cfg.kd))?;
        let n_au = trained_epochs(&r, phase::AUTOENCODER_KD);
        out.push(self.finish(AUTOENCODER_KD, &akd, r, ae_s, &primary)?);

        let ((ekd, r), en_s) = timed(|| {
            run_encoder_kd(
                &teacher,
                student.encoder.clone(),
                &d.primary,
                &self.train,
                self.cfg.fine_tune_epochs,
            )
        })?;
        let (n_en, n_ft) = (trained_epochs(&r, phase::ENCODER_KD), trained_epochs(&r, phase::FINE_TUNE));
        out.push(self.finish(ENCODER_KD, &ekd, r, en_s, &primary)?);

        let ((v, r), s) = timed(|| self.variant(VARIANT_KD, &teacher, &student.encoder, steps))?;
        out.push(self.finish(VARIANT_KD, &v, r, s, &primary)?);

        let seq_dir = regime_dir(self.out, SEQUENTIAL, seed);
        create_dir(&seq_dir)?;
        let ((sq, r), s) = timed(|| {
            sequential_from_pretrained(&vanilla, student.encoder.clone(), &d.primary, &self.train, &seq_dir)
        })?;
        out.push(self.finish(SEQUENTIAL, &sq, r, s, &primary)?);

        let mut mixed = m.autoencoder(EncoderKind::Teacher, derive_seed(seed, MIXED_TEACHER))?;
        let (r, s) = timed(|| train_vanilla(&mut mixed, &d.mixed, &self.train))?;
        out.push(self.finish(MIXED_TEACHER, &mixed, r, s, &both)?);

        let ((g, r), s) = timed(|| self.variant(GENERALIZATION, &mixed, &student.encoder, steps))?;
        out.push(self.finish(GENERALIZATION, &g, r, s, &both)?);

        let c_en = model_flops(student.encoder.spec())?.total as f64;
        let inputs = TrainingCostInputs {
            n_au: n_au as f64,
            n_en: n_en as f64,
            n_ft: n_ft as f64,
            c_en_student: c_en,
            c_de_student: model_flops(student.decoder.spec())?.total as f64,
            c_de_teacher: model_flops(teacher.decoder.spec())?.total as f64,
        };
        let cost = TrainingCost {
            predicted_ratio: training_time_model(&inputs)?,
            inputs,
            autoencoder_kd_s: ae_s,
            encoder_kd_s: en_s,
        };
        Ok(SeedOutcome {
            seed,
            regimes: out,
            cost,
        })
    }
}

/// Trains every regime for one seed and writes `<out>/<regime>/<seed>/`.
pub fn run_seed(
    cfg: &SuiteConfig,
    data: &SuiteData,
    seed: u64,
    out: &Path,
    steps: &dyn VariantSteps,
) -> Result<SeedOutcome> {
    let run = SeedRun {
        cfg,
        data,
        out,
        seed,
        train: TrainConfig {
            seed: derive_seed(seed, "batches"),
            ..cfg.train
        },
    };
    run.run(steps)
}

/// Median; the mean of the middle pair for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One directional claim checked on per-seed medians.
#[derive(Debug, Clone, Serialize)]
pub struct OrderingCheck {
    pub claim: String,
    pub lower: f64,
    pub higher: f64,
    pub holds: bool,
}

/// Regime/dataset pairs compared in the ordering table; the first entry of
/// each should have the lower (better) NMSE.
pub const ORDERINGS: [(&str, (&str, &str), (&str, &str)); 5] = [
    (
        "teacher < encoder-kd",
        (regime::TEACHER, PRIMARY),
        (regime::ENCODER_KD, PRIMARY),
    ),
    (
        "encoder-kd < vanilla",
        (regime::ENCODER_KD, PRIMARY),
        (regime::VANILLA, PRIMARY),
    ),
    (
        "autoencoder-kd < vanilla",
        (regime::AUTOENCODER_KD, PRIMARY),
        (regime::VANILLA, PRIMARY),
    ),
    (
        "variant-kd < sequential",
        (regime::VARIANT_KD, PRIMARY),
        (regime::SEQUENTIAL, PRIMARY),
    ),
    (
        "generalization < vanilla on shifted",
        (regime::GENERALIZATION, SHIFTED),
        (regime::VANILLA, SHIFTED),
    ),
];

fn median_db(outcomes: &[SeedOutcome], regime: &str, dataset: &str) -> f64 {
    let v: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| o.regime(regime).and_then(|r| r.db(dataset)))
        .collect();
    median(&v)
}

pub fn ordering_checks(outcomes: &[SeedOutcome]) -> Vec<OrderingCheck> {
    ORDERINGS
        .iter()
        .map(|(claim, (ra, da), (rb, db))| {
            let lower = median_db(outcomes, ra, da);
            let higher = median_db(outcomes, rb, db);
            OrderingCheck {
                claim: claim.to_string(),
                lower,
                higher,
                holds: lower < higher,
            }
        })
        .collect()
}

fn nmse_summary(outcomes: &[SeedOutcome]) -> Table {
    let mut cols: Vec<String> = vec!["regime".into(), "encoder".into(), "decoder".into(), "dataset".into()];
    cols.extend(outcomes.iter().map(|o| format!("seed_{}", o.seed)));
    cols.push("median_db".into());
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut t = Table::new("nmse", "Test NMSE (dB) by regime", &col_refs);
    use regime::*;
    let rows = [
        (TEACHER, "teacher", "teacher", PRIMARY),
        (VANILLA, "student", "student", PRIMARY),
        (AUTOENCODER_KD, "student", "student", PRIMARY),
        (ENCODER_KD, "student", "teacher", PRIMARY),
        (VARIANT_KD, "student", "teacher", PRIMARY),
        (SEQUENTIAL, "student", "student", PRIMARY),
        (MIXED_TEACHER, "teacher", "teacher", PRIMARY),
        (MIXED_TEACHER, "teacher", "teacher", SHIFTED),
        (VANILLA, "student", "student", SHIFTED),
        (GENERALIZATION, "student", "teacher", PRIMARY),
        (GENERALIZATION, "student", "teacher", SHIFTED),
    ];
    for (r, enc, dec, ds) in rows {
        let mut row = vec![
            Cell::Text(r.into()),
            Cell::Text(enc.into()),
            Cell::Text(dec.into()),
            Cell::Text(ds.into()),
        ];
        let vals: Vec<f64> = outcomes
            .iter()
            .map(|o| o.regime(r).and_then(|x| x.db(ds)).unwrap_or(f64::NAN))
            .collect();
        row.extend(vals.iter().map(|&v| Cell::Db(v)));
        row.push(Cell::Db(median(&vals)));
        t.push(row);
    }
    t
}

fn orderings_table(checks: &[OrderingCheck]) -> Table {
    let mut t = Table::new(
        "orderings",
        "Directional NMSE checks on seed medians",
        &["claim", "lower_db", "higher_db", "holds"],
    );
    for c in checks {
        t.push(vec![
            Cell::Text(c.claim.clone()),
            Cell::Db(c.lower),
            Cell::Db(c.higher),
            Cell::Text(c.holds.to_string()),
        ]);
    }
    t
}

/// Encoder/decoder FLOPs at the reference 32x32 geometry for both published
/// ratios, and at the suite geometry.
pub fn flops_table(cfg: &SuiteConfig) -> Result<Table> {
    let mut t = Table::new(
        "flops",
        "Inference FLOPs per network",
        &["geometry", "gamma", "network", "flops", "ratio_to_teacher_encoder"],
    );
    let mut cases = vec![(32, 32, 16), (32, 32, 32)];
    let (n_t, n_c) = (cfg.model.n_t, cfg.model.n_c);
    if (n_t, n_c) != (32, 32) && cfg.model.gamma.numerator == 1 {
        cases.push((n_t, n_c, cfg.model.gamma.denominator));
    }
    for (n_t, n_c, den) in cases {
        let n_s = super::config::Gamma::new(1, den)?.codeword_len(n_t, n_c)?;
        let teacher = model_flops(&build_teacher_encoder(n_t, n_c, n_s)?)?.total;
        let student = model_flops(&build_student_encoder(n_t, n_c, n_s)?)?.total;
        let decoder = model_flops(&build_decoder(n_t, n_c, n_s, cfg.model.decoder_width)?)?.total;
        for (name, f) in [("student encoder", student), ("teacher encoder", teacher), ("decoder", decoder)] {
            t.push(vec![
                Cell::Text(format!("{n_t}x{n_c}")),
                Cell::Text(format!("1/{den}")),
                Cell::Text(name.into()),
                Cell::Int(f),
                Cell::Float(flops_ratio(f, teacher)?),
            ]);
        }
    }
    Ok(t)
}

fn cost_table(outcomes: &[SeedOutcome]) -> Table {
    let mut t = Table::new(
        "training_cost",
        "Predicted training-time ratio, autoencoder KD over encoder KD",
        &["seed", "n_au", "n_en", "n_ft", "c_en_student", "c_de_student", "c_de_teacher", "predicted_ratio"],
    );
    for o in outcomes {
        let x = &o.cost.inputs;
        t.push(vec![
            Cell::Int(o.seed),
            Cell::Int(x.n_au as u64),
            Cell::Int(x.n_en as u64),
            Cell::Int(x.n_ft as u64),
            Cell::Int(x.c_en_student as u64),
            Cell::Int(x.c_de_student as u64),
            Cell::Int(x.c_de_teacher as u64),
            Cell::Float(o.cost.predicted_ratio),
        ]);
    }
    t
}

fn timing_logs(outcomes: &[SeedOutcome]) -> (Table, Table) {
    let mut wall = Table::new("timing", "Wall-clock per regime", &["seed", "regime", "wall_clock_s"]);
    let mut cost = Table::new(
        "training_time",
        "Measured against predicted training-time ratio",
        &[
            "seed",
            "autoencoder_kd_s",
            "encoder_kd_s",
            "measured_ratio",
            "predicted_ratio",
            "predicted_over_measured",
        ],
    );
    for o in outcomes {
        for r in &o.regimes {
            wall.push(vec![Cell::Int(o.seed), Cell::Text(r.regime.clone()), Cell::Float(r.wall_clock_s)]);
        }
        let c = &o.cost;
        cost.push(vec![
            Cell::Int(o.seed),
            Cell::Float(c.autoencoder_kd_s),
            Cell::Float(c.encoder_kd_s),
            Cell::Float(c.measured_ratio()),
            Cell::Float(c.predicted_ratio),
            Cell::Float(c.predicted_ratio / c.measured_ratio()),
        ]);
    }
    (wall, cost)
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub config: serde_json::Value,
    pub files: Vec<ManifestEntry>,
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for e in entries {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.is_dir() {
            if dir == root && p.file_name().is_some_and(|n| n == LOGS) {
                continue;
            }
            collect_files(root, &p, out)?;
        } else if !(dir == root && p.file_name().is_some_and(|n| n == MANIFEST)) {
            out.push(p);
        }
    }
    Ok(())
}

/// Hashes every artifact under `out` except `logs/` and the manifest itself.
pub fn build_manifest(config: &impl Serialize, out: &Path) -> Result<Manifest> {
    let mut paths = Vec::new();
    collect_files(out, out, &mut paths)?;
    let mut files = Vec::new();
    for p in paths {
        let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
        let rel = p.strip_prefix(out).expect("walked under out");
        let path = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        files.push(ManifestEntry {
            path,
            bytes: bytes.len() as u64,
            sha256: Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect(),
        });
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(Manifest {
        config: serde_json::to_value(config)?,
        files,
    })
}

pub fn write_manifest(config: &impl Serialize, out: &Path) -> Result<()> {
    let manifest = build_manifest(config, out)?;
    write_file(&out.join(MANIFEST), serde_json::to_string_pretty(&manifest)?.as_bytes())
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteSummary {
    pub seeds: Vec<SeedOutcome>,
    pub orderings: Vec<OrderingCheck>,
}

/// Full suite: datasets, every regime for every seed (up to `workers` seeds
/// at a time), summary tables, logs and manifest.
pub fn run_suite(cfg: &SuiteConfig, out: &Path, steps: &dyn VariantSteps, workers: usize) -> Result<SuiteSummary> {
    cfg.validate()?;
    create_dir(out)?;
    let data = build_suite_data(cfg)?;
    let data_dir = out.join("data");
    create_dir(&data_dir)?;
    save_dataset(&data.primary, &data_dir.join("primary.csid"))?;
    save_dataset(&data.shifted, &data_dir.join("shifted.csid"))?;
    write_file(&out.join("suite.json"), serde_json::to_string_pretty(cfg)?.as_bytes())?;

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<SeedOutcome>>>> = Mutex::new(cfg.seeds.iter().map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, cfg.seeds.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&seed) = cfg.seeds.get(i) else { break };
                let r = run_seed(cfg, &data, seed, out, steps);
                results.lock().expect("no worker panics while holding the lock")[i] = Some(r);
            });
        }
    });
    let outcomes = results
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|r| r.expect("every seed was claimed"))
        .collect::<Result<Vec<_>>>()?;

    let orderings = ordering_checks(&outcomes);
    let tables = [
        nmse_summary(&outcomes),
        orderings_table(&orderings),
        flops_table(cfg)?,
        cost_table(&outcomes),
    ];
    emit_report(&tables, &out.join(TABLES))?;
    let (wall, cost) = timing_logs(&outcomes);
    let logs = out.join(LOGS);
    create_dir(&logs)?;
    write_table(&wall, &logs.join("timing.csv"))?;
    write_table(&cost, &logs.join("training_time.csv"))?;

    write_manifest(cfg, out)?;
    Ok(SuiteSummary {
        seeds: outcomes,
        orderings,
    })
}
