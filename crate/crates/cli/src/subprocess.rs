//! Variant steps 2 and 3 run as child `csikd` processes. Each child gets its
//! own model bundle and the exchange directory, nothing else.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};

use csikd::experiments::VariantSteps;
use csikd::models::{load_model, save_model, CheckpointMeta, Model};
use csikd::training::{TrainConfig, TrainReport};
use csikd::{Error, Result};

pub struct Subprocess {
    exe: PathBuf,
}

static REPORTS: AtomicU64 = AtomicU64::new(0);

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

impl Subprocess {
    /// Children run the currently executing binary.
    pub fn current() -> Result<Self> {
        let exe = std::env::current_exe().map_err(|e| io_err(Path::new("csikd"), e))?;
        Ok(Self { exe })
    }

    fn run(&self, args: &[&std::ffi::OsStr]) -> Result<TrainReport> {
        // wall-clock lives in the report, so it stays out of the artifact tree
        let report = std::env::temp_dir().join(format!(
            "csikd-report-{}-{}.json",
            std::process::id(),
            REPORTS.fetch_add(1, Ordering::SeqCst)
        ));
        let status = Command::new(&self.exe)
            .args(args)
            .arg("--report")
            .arg(&report)
            .stdout(std::process::Stdio::null())
            .status()
            .map_err(|e| io_err(&self.exe, e))?;
        if !status.success() {
            return Err(io_err(
                &self.exe,
                std::io::Error::other(format!("variant step {:?} failed with {status}", args.first())),
            ));
        }
        let text = std::fs::read_to_string(&report).map_err(|e| io_err(&report, e))?;
        let _ = std::fs::remove_file(&report);
        Ok(serde_json::from_str(&text)?)
    }
}

fn stage(side: &Path, model: &Model, config: &TrainConfig) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(side).map_err(|e| io_err(side, e))?;
    let init = side.join("init");
    save_model(
        model,
        CheckpointMeta {
            epoch: 0,
            val_loss: f64::NAN,
            seed: config.seed,
        },
        &init,
    )?;
    let cfg = side.join("train.json");
    std::fs::write(&cfg, serde_json::to_string_pretty(config)?).map_err(|e| io_err(&cfg, e))?;
    Ok((init, cfg))
}

impl VariantSteps for Subprocess {
    fn train_student(&self, student: &Model, dir: &Path, config: &TrainConfig) -> Result<(Model, TrainReport)> {
        let side = dir.join("ue");
        let (init, cfg) = stage(&side, student, config)?;
        let out = side.join("trained");
        let report = self.run(&[
            "variant-distill".as_ref(),
            "ue-train".as_ref(),
            "--student".as_ref(),
            init.as_os_str(),
            "--pairs".as_ref(),
            dir.as_os_str(),
            "--train-config".as_ref(),
            cfg.as_os_str(),
            "--out".as_ref(),
            out.as_os_str(),
        ])?;
        Ok((load_model(&out)?, report))
    }

    fn fine_tune_decoder(
        &self,
        decoder: &Model,
        dir: &Path,
        config: &TrainConfig,
        epochs: usize,
    ) -> Result<(Model, TrainReport)> {
        let side = dir.join("bs");
        let (init, cfg) = stage(&side, decoder, config)?;
        let out = side.join("trained");
        let epochs = epochs.to_string();
        let report = self.run(&[
            "variant-distill".as_ref(),
            "bs-finetune".as_ref(),
            "--decoder".as_ref(),
            init.as_os_str(),
            "--pairs".as_ref(),
            dir.as_os_str(),
            "--train-config".as_ref(),
            cfg.as_os_str(),
            "--epochs".as_ref(),
            epochs.as_ref(),
            "--out".as_ref(),
            out.as_os_str(),
        ])?;
        Ok((load_model(&out)?, report))
    }
}
