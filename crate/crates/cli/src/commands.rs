use std::path::{Path, PathBuf};
use std::time::Instant;

use csikd::analysis::{inference_benchmark, model_flops, Cell, Table};
use csikd::channel::{load_dataset, save_dataset, CsiDataset, Split};
use csikd::experiments::{
    derive_seed, regime, regime_dir, run_suite, write_manifest, ExperimentConfig, Gamma, InProcess, Regime,
    SuiteConfig, LOGS, TABLES,
};
use csikd::models::{
    build_decoder, build_student_encoder, build_teacher_encoder, load_autoencoder, load_model, save_autoencoder,
    save_model, Autoencoder, CheckpointMeta, EncoderKind, ModelSpec,
};
use csikd::training::{
    distill_autoencoder, evaluate_nmse, run_encoder_kd, sequential_from_pretrained, train_vanilla,
    variant_export_teacher_pairs, variant_fine_tune_decoder, variant_train_student, TrainConfig, TrainReport,
};
use sha2::{Digest, Sha256};

use crate::exit::{code, CliError, CliResult};
use crate::subprocess::Subprocess;
use crate::{Cli, Command, EncoderArg, NetworkArg, NetworkArgs, SplitArg, VariantStep};

/// Seed workers for `reproduce`.
pub const THREADS_ENV: &str = "CSIKD_THREADS";

fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

struct Ctx {
    workdir: PathBuf,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        self.workdir.join(p)
    }

    fn read(&self, p: &Path) -> CliResult<String> {
        let full = self.path(p);
        std::fs::read_to_string(&full).map_err(|e| {
            let c = if e.kind() == std::io::ErrorKind::NotFound {
                code::MISSING_ARTIFACT
            } else {
                code::FAILURE
            };
            CliError::new(c, format!("cannot read {}: {e}", full.display()))
        })
    }

    fn experiment(&self, p: &Path) -> CliResult<ExperimentConfig> {
        Ok(ExperimentConfig::from_json(&self.read(p)?)?)
    }

    fn train_config(&self, p: &Path) -> CliResult<TrainConfig> {
        let c: TrainConfig = serde_json::from_str(&self.read(p)?).map_err(csikd::Error::from)?;
        c.validate()?;
        Ok(c)
    }

    fn dataset(&self, cfg: &ExperimentConfig, data: Option<&Path>) -> CliResult<CsiDataset> {
        let d = match data {
            Some(p) => load_dataset(&self.path(p))?,
            None => cfg.build_dataset()?,
        };
        if (d.n_t(), d.n_c()) != (cfg.model.n_t, cfg.model.n_c) {
            return Err(CliError::new(
                code::INVALID_CONFIG,
                format!(
                    "dataset is {}x{} but the config expects {}x{}",
                    d.n_t(),
                    d.n_c(),
                    cfg.model.n_t,
                    cfg.model.n_c
                ),
            ));
        }
        Ok(d)
    }
}

fn create_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::new(code::FAILURE, format!("cannot create {}: {e}", dir.display())))
}

fn write(path: &Path, bytes: &[u8]) -> CliResult {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::new(code::FAILURE, format!("cannot write {}: {e}", path.display())))
}

fn meta_of(report: &TrainReport, seed: u64) -> CheckpointMeta {
    let last = report.phases.last();
    CheckpointMeta {
        epoch: last.map_or(0, |p| p.best_epoch as u64),
        val_loss: last.map_or(f64::NAN, |p| p.best_val_loss),
        seed,
    }
}

/// Writes `<output>/<name>/<seed>/` (model, curves, NMSE, manifest) and the
/// wall-clock report under `<output>/logs/`.
fn finish_run(
    ctx: &Ctx,
    cfg: &ExperimentConfig,
    name: &str,
    ae: &Autoencoder,
    report: &TrainReport,
    data: &CsiDataset,
) -> CliResult {
    let out = ctx.path(&cfg.output);
    let dir = regime_dir(&out, name, cfg.seed);
    create_dir(&dir)?;
    save_autoencoder(ae, meta_of(report, cfg.seed), &dir.join("model"))?;
    write(&dir.join("epochs.csv"), report.epochs_table().to_csv()?.as_bytes())?;
    let r = evaluate_nmse(ae, data, Split::Test)?;
    let mut t = Table::new("nmse", "Test-split NMSE", &["samples", "degenerate", "nmse_linear", "nmse_db"]);
    t.push(vec![
        Cell::Int(r.samples as u64),
        Cell::Int(r.degenerate as u64),
        Cell::Float(r.linear),
        Cell::Db(r.db),
    ]);
    write(&dir.join("nmse.csv"), t.to_csv()?.as_bytes())?;
    write(&dir.join("config.json"), serde_json::to_string_pretty(cfg).map_err(csikd::Error::from)?.as_bytes())?;
    write_manifest(cfg, &dir)?;
    let log = out.join(LOGS).join(format!("{name}-{}.json", cfg.seed));
    write(&log, serde_json::to_string_pretty(report).map_err(csikd::Error::from)?.as_bytes())?;
    println!("{name} seed {}: test NMSE {} dB -> {}", cfg.seed, csikd::analysis::format_db(r.db), dir.display());
    Ok(())
}

fn encoder_kind(e: EncoderArg) -> EncoderKind {
    match e {
        EncoderArg::Student => EncoderKind::Student,
        EncoderArg::Teacher => EncoderKind::Teacher,
    }
}

fn network_spec(net: &NetworkArgs) -> CliResult<ModelSpec> {
    let gamma: Gamma = net.gamma.parse()?;
    let n_s = gamma.codeword_len(net.nt, net.nc)?;
    Ok(match net.model {
        NetworkArg::StudentEncoder => build_student_encoder(net.nt, net.nc, n_s)?,
        NetworkArg::TeacherEncoder => build_teacher_encoder(net.nt, net.nc, n_s)?,
        NetworkArg::Decoder => build_decoder(net.nt, net.nc, n_s, net.width)?,
    })
}

fn threads() -> CliResult<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::new(
                code::INVALID_CONFIG,
                format!("{THREADS_ENV} must be a positive integer, got `{v}`"),
            )),
        },
    }
}

fn write_report(ctx: &Ctx, path: Option<&Path>, report: &TrainReport) -> CliResult {
    if let Some(p) = path {
        write(&ctx.path(p), serde_json::to_string_pretty(report).map_err(csikd::Error::from)?.as_bytes())?;
    }
    Ok(())
}

pub fn dispatch(cli: Cli) -> CliResult {
    let ctx = Ctx { workdir: cli.workdir };
    match cli.command {
        Command::GenData { config, out } => {
            let cfg = ctx.experiment(&config)?;
            let d = cfg.build_dataset()?;
            let path = ctx.path(&out.unwrap_or_else(|| cfg.output.join("data.csid")));
            if let Some(parent) = path.parent() {
                create_dir(parent)?;
            }
            save_dataset(&d, &path)?;
            let bytes = std::fs::read(&path)
                .map_err(|e| CliError::new(code::FAILURE, format!("cannot read back {}: {e}", path.display())))?;
            println!("{}  {}", hex_sha256(&bytes), path.display());
        }
        Command::Train { run, encoder } => {
            let cfg = ctx.experiment(&run.config)?;
            cfg.check_regime(Regime::Vanilla)?;
            let data = ctx.dataset(&cfg, run.data.as_deref())?;
            let kind = encoder_kind(encoder);
            let mut ae = cfg.model.autoencoder(kind, derive_seed(cfg.seed, kind.name()))?;
            let report = train_vanilla(&mut ae, &data, &cfg.train_config())?;
            let name = match kind {
                EncoderKind::Teacher => regime::TEACHER,
                EncoderKind::Student => regime::VANILLA,
            };
            finish_run(&ctx, &cfg, name, &ae, &report, &data)?;
        }
        Command::Distill { run, teacher } => {
            let cfg = ctx.experiment(&run.config)?;
            cfg.check_regime(Regime::AutoencoderKd)?;
            let data = ctx.dataset(&cfg, run.data.as_deref())?;
            let teacher = load_autoencoder(&ctx.path(&teacher))?;
            let mut ae = cfg.model.autoencoder(EncoderKind::Student, derive_seed(cfg.seed, "student"))?;
            let report = distill_autoencoder(&teacher, &mut ae, &data, &cfg.train_config(), &cfg.kd)?;
            finish_run(&ctx, &cfg, regime::AUTOENCODER_KD, &ae, &report, &data)?;
        }
        Command::EncoderDistill { run, teacher } => {
            let cfg = ctx.experiment(&run.config)?;
            cfg.check_regime(Regime::EncoderKd)?;
            let data = ctx.dataset(&cfg, run.data.as_deref())?;
            let teacher = load_autoencoder(&ctx.path(&teacher))?;
            let student = cfg.model.autoencoder(EncoderKind::Student, derive_seed(cfg.seed, "student"))?;
            let (ae, report) =
                run_encoder_kd(&teacher, student.encoder, &data, &cfg.train_config(), cfg.fine_tune_budget())?;
            finish_run(&ctx, &cfg, regime::ENCODER_KD, &ae, &report, &data)?;
        }
        Command::SeqTrain { run, bs } => {
            let cfg = ctx.experiment(&run.config)?;
            cfg.check_regime(Regime::Sequential)?;
            let data = ctx.dataset(&cfg, run.data.as_deref())?;
            let train = cfg.train_config();
            let bs = match bs {
                Some(stem) => load_autoencoder(&ctx.path(&stem))?,
                None => {
                    let mut ae = cfg.model.autoencoder(EncoderKind::Student, derive_seed(cfg.seed, "bs"))?;
                    train_vanilla(&mut ae, &data, &train)?;
                    ae
                }
            };
            let deploy = cfg.model.autoencoder(EncoderKind::Student, derive_seed(cfg.seed, "student"))?;
            let dir = regime_dir(&ctx.path(&cfg.output), regime::SEQUENTIAL, cfg.seed);
            create_dir(&dir)?;
            let (ae, report) = sequential_from_pretrained(&bs, deploy.encoder, &data, &train, &dir)?;
            finish_run(&ctx, &cfg, regime::SEQUENTIAL, &ae, &report, &data)?;
        }
        Command::VariantDistill { step } => variant_step(&ctx, step)?,
        Command::Eval { model, data, split } => {
            let ae = load_autoencoder(&ctx.path(&model))?;
            let d = load_dataset(&ctx.path(&data))?;
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Val => Split::Val,
                SplitArg::Test => Split::Test,
            };
            let x = csikd::training::flat_split(&d, split);
            let y = ae.reconstruct(&x, csikd::models::INFER_CHUNK)?;
            let r = csikd::analysis::nmse(&x, &y, d.sample_len(), &d.meta)?;
            println!("{}", serde_json::to_string_pretty(&r).map_err(csikd::Error::from)?);
        }
        Command::Flops { net, layers } => {
            let report = model_flops(&network_spec(&net)?)?;
            if layers {
                for l in &report.layers {
                    println!("{:<24} {}", l.name, l.flops);
                }
                println!("{:<24} {}", "total", report.total);
            } else {
                println!("{}", report.total);
            }
        }
        Command::Bench {
            net,
            repetitions,
            warmups,
            seed,
        } => {
            let model = csikd::models::Model::new(network_spec(&net)?, seed)?;
            let r = inference_benchmark(&model, repetitions, warmups)?;
            println!("{}", serde_json::to_string_pretty(&r).map_err(csikd::Error::from)?);
        }
        Command::Reproduce {
            scale,
            seeds,
            config,
            out,
            in_process,
        } => {
            let mut cfg = match config {
                Some(p) => serde_json::from_str::<SuiteConfig>(&ctx.read(&p)?).map_err(csikd::Error::from)?,
                None => SuiteConfig::by_scale(&scale)?,
            };
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            cfg.validate()?;
            let workers = threads()?;
            let out = ctx.path(&out);
            let t = Instant::now();
            let summary = if in_process {
                run_suite(&cfg, &out, &InProcess, workers)?
            } else {
                run_suite(&cfg, &out, &Subprocess::current()?, workers)?
            };
            for c in &summary.orderings {
                println!(
                    "{:<40} {:>8} vs {:>8}  {}",
                    c.claim,
                    csikd::analysis::format_db(c.lower),
                    csikd::analysis::format_db(c.higher),
                    if c.holds { "holds" } else { "does not hold" }
                );
            }
            log::info!("suite finished in {:.0} s", t.elapsed().as_secs_f64());
            println!("report: {}", out.join(TABLES).join("summary.md").display());
        }
    }
    Ok(())
}

fn variant_step(ctx: &Ctx, step: VariantStep) -> CliResult {
    match step {
        VariantStep::BsExport { teacher, data, pairs } => {
            let teacher = load_autoencoder(&ctx.path(&teacher))?;
            let d = load_dataset(&ctx.path(&data))?;
            let dir = ctx.path(&pairs);
            create_dir(&dir)?;
            variant_export_teacher_pairs(&teacher.encoder, &d, &dir)?;
            println!("teacher pairs written to {}", dir.display());
        }
        VariantStep::UeTrain {
            student,
            pairs,
            train_config,
            out,
            report,
        } => {
            let mut m = load_model(&ctx.path(&student))?;
            let train = ctx.train_config(&train_config)?;
            let r = variant_train_student(&mut m, &ctx.path(&pairs), &train)?;
            let out = ctx.path(&out);
            if let Some(parent) = out.parent() {
                create_dir(parent)?;
            }
            save_model(&m, meta_of(&r, train.seed), &out)?;
            write_report(ctx, report.as_deref(), &r)?;
            println!("student encoder written to {}", out.display());
        }
        VariantStep::BsFinetune {
            decoder,
            teacher,
            pairs,
            train_config,
            epochs,
            out,
            report,
        } => {
            let mut m = match (decoder, teacher) {
                (Some(d), _) => load_model(&ctx.path(&d))?,
                (None, Some(t)) => load_autoencoder(&ctx.path(&t))?.decoder,
                (None, None) => unreachable!("clap requires one of --decoder/--teacher"),
            };
            let train = ctx.train_config(&train_config)?;
            let r = variant_fine_tune_decoder(&mut m, &ctx.path(&pairs), &train, epochs)?;
            let out = ctx.path(&out);
            if let Some(parent) = out.parent() {
                create_dir(parent)?;
            }
            save_model(&m, meta_of(&r, train.seed), &out)?;
            write_report(ctx, report.as_deref(), &r)?;
            println!("decoder written to {}", out.display());
        }
        VariantStep::Combine { encoder, decoder, out } => {
            let ae = Autoencoder::combine(load_model(&ctx.path(&encoder))?, load_model(&ctx.path(&decoder))?)?;
            let out = ctx.path(&out);
            if let Some(parent) = out.parent() {
                create_dir(parent)?;
            }
            save_autoencoder(
                &ae,
                CheckpointMeta {
                    epoch: 0,
                    val_loss: f64::NAN,
                    seed: 0,
                },
                &out,
            )?;
            println!("autoencoder written to {}", out.display());
        }
    }
    Ok(())
}
