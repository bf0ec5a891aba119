use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{generate_raw, CsiDataset, ScenarioConfig, SplitCounts};
use crate::error::{Error, Result};
use crate::models::{build_decoder, Autoencoder, EncoderKind, Model, ModelSpec};
use crate::training::{KdConfig, TrainConfig};

/// Compression ratio written as a fraction, `"1/16"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Gamma {
    pub numerator: usize,
    pub denominator: usize,
}

impl Gamma {
    pub fn new(numerator: usize, denominator: usize) -> Result<Self> {
        if numerator == 0 || denominator == 0 || numerator > denominator {
            return Err(Error::InvalidConfig(format!(
                "compression ratio {numerator}/{denominator} must lie in (0, 1]"
            )));
        }
        Ok(Self {
            numerator,
            denominator,
        })
    }

    /// `gamma * 2 * n_t * n_c`, which must be a whole number.
    pub fn codeword_len(&self, n_t: usize, n_c: usize) -> Result<usize> {
        let total = 2 * n_t * n_c * self.numerator;
        if total % self.denominator != 0 {
            return Err(Error::InvalidConfig(format!(
                "compression ratio {self} does not give an integer codeword for {n_t}x{n_c} CSI"
            )));
        }
        Ok(total / self.denominator)
    }
}

impl fmt::Display for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

impl FromStr for Gamma {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("compression ratio `{s}` is not of the form a/b"));
        let (a, b) = s.trim().split_once('/').ok_or_else(bad)?;
        let a = a.trim().parse().map_err(|_| bad())?;
        let b = b.trim().parse().map_err(|_| bad())?;
        Gamma::new(a, b)
    }
}

impl TryFrom<String> for Gamma {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Gamma> for String {
    fn from(g: Gamma) -> String {
        g.to_string()
    }
}

/// Geometry and width shared by every network of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub n_t: usize,
    pub n_c: usize,
    pub gamma: Gamma,
    /// Channel width inside each CRBlock.
    pub decoder_width: usize,
}

impl ModelParams {
    pub fn codeword_len(&self) -> Result<usize> {
        self.gamma.codeword_len(self.n_t, self.n_c)
    }

    pub fn encoder_spec(&self, kind: EncoderKind) -> Result<ModelSpec> {
        kind.build(self.n_t, self.n_c, self.codeword_len()?)
    }

    pub fn decoder_spec(&self) -> Result<ModelSpec> {
        build_decoder(self.n_t, self.n_c, self.codeword_len()?, self.decoder_width)
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder_spec(EncoderKind::Teacher)?;
        self.decoder_spec()?;
        Ok(())
    }

    /// Freshly initialized autoencoder; encoder and decoder draw from
    /// separate streams derived from `seed`.
    pub fn autoencoder(&self, kind: EncoderKind, seed: u64) -> Result<Autoencoder> {
        Autoencoder::combine(
            Model::new(self.encoder_spec(kind)?, derive_seed(seed, "encoder"))?,
            Model::new(self.decoder_spec()?, derive_seed(seed, "decoder"))?,
        )
    }
}

/// Stable 64-bit seed for a named purpose under a master seed.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Vanilla,
    AutoencoderKd,
    EncoderKd,
    VariantKd,
    Sequential,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Vanilla => "vanilla",
            Regime::AutoencoderKd => "autoencoder-kd",
            Regime::EncoderKd => "encoder-kd",
            Regime::VariantKd => "variant-kd",
            Regime::Sequential => "sequential",
        }
    }
}

/// One training run as described by a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Several scenarios are mixed split by split into one dataset.
    pub scenarios: Vec<ScenarioConfig>,
    pub counts: SplitCounts,
    pub model: ModelParams,
    pub train: TrainConfig,
    /// Defaults to 15% of `train.max_epochs`.
    #[serde(default)]
    pub fine_tune_epochs: Option<usize>,
    #[serde(default)]
    pub kd: KdConfig,
    /// When set, only the matching subcommand accepts this file.
    #[serde(default)]
    pub regime: Option<Regime>,
    pub output: PathBuf,
    /// Master seed; model initialization and batch order derive from it and
    /// it replaces `train.seed`.
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::InvalidConfig("at least one scenario is required".into()));
        }
        for s in &self.scenarios {
            s.validate()?;
            if (s.n_tx_antennas, s.n_subcarriers) != (self.model.n_t, self.model.n_c) {
                return Err(Error::InvalidConfig(format!(
                    "scenario is {}x{} but the model expects {}x{}",
                    s.n_tx_antennas, s.n_subcarriers, self.model.n_t, self.model.n_c
                )));
            }
        }
        if self.counts.train == 0 || self.counts.val == 0 || self.counts.test == 0 {
            return Err(Error::InvalidConfig("every split needs at least one sample".into()));
        }
        self.model.validate()?;
        self.train_config().validate()?;
        self.kd.validate()
    }

    /// Generates every scenario and mixes them split by split; normalization
    /// is fitted on the combined training split.
    pub fn build_dataset(&self) -> Result<CsiDataset> {
        let mut raw = generate_raw(&self.scenarios[0], self.counts)?;
        for s in &self.scenarios[1..] {
            raw = raw.concat(&generate_raw(s, self.counts)?)?;
        }
        let meta = raw.fit_meta()?;
        Ok(raw.normalize(meta).0)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: derive_seed(self.seed, "batches"),
            ..self.train
        }
    }

    pub fn fine_tune_budget(&self) -> usize {
        self.fine_tune_epochs.unwrap_or_else(|| self.train.fine_tune_budget())
    }

    /// Refuses a config pinned to a different regime.
    pub fn check_regime(&self, wanted: Regime) -> Result<()> {
        match self.regime {
            Some(r) if r != wanted => Err(Error::InvalidConfig(format!(
                "config is for `{}`, not `{}`",
                r.name(),
                wanted.name()
            ))),
            _ => Ok(()),
        }
    }
}

/// Everything `reproduce` needs: two datasets differing in the LOS flag,
/// one model geometry and one training schedule, repeated over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub scale: String,
    /// Dataset 1, the deployment scenario.
    pub primary: ScenarioConfig,
    /// Dataset 2, only seen by the mixed-data teacher.
    pub shifted: ScenarioConfig,
    pub counts: SplitCounts,
    pub model: ModelParams,
    pub train: TrainConfig,
    pub fine_tune_epochs: usize,
    pub kd: KdConfig,
    pub seeds: Vec<u64>,
}

impl SuiteConfig {
    /// 16x16 CSI, 4k/1k/1k samples per dataset, gamma 1/16, batch 32,
    /// 60 epochs with the LR drop after 30.
    pub fn desk() -> Self {
        let (n, epochs) = (16, 60);
        let mut primary = ScenarioConfig::umi_los(1);
        primary.n_tx_antennas = n;
        primary.n_subcarriers = n;
        let shifted = ScenarioConfig {
            los: false,
            seed: 2,
            ..primary.clone()
        };
        let mut train = TrainConfig::desk(epochs, 4000, 0);
        train.batch_size = 32;
        Self {
            scale: "desk".into(),
            primary,
            shifted,
            counts: SplitCounts::desk(),
            model: ModelParams {
                n_t: n,
                n_c: n,
                gamma: Gamma::new(1, 16).expect("valid ratio"),
                decoder_width: 8,
            },
            fine_tune_epochs: train.fine_tune_budget(),
            train,
            kd: KdConfig::default(),
            seeds: vec![0, 1, 2],
        }
    }

    /// Tiny everything; exercises every code path in seconds.
    pub fn smoke() -> Self {
        let mut c = Self::desk();
        c.scale = "smoke".into();
        for s in [&mut c.primary, &mut c.shifted] {
            s.n_tx_antennas = 8;
            s.n_subcarriers = 8;
        }
        c.model.n_t = 8;
        c.model.n_c = 8;
        c.counts = SplitCounts::new(96, 32, 32);
        c.train = TrainConfig {
            batch_size: 16,
            ..TrainConfig::desk(4, 96, 0)
        };
        c.fine_tune_epochs = 1;
        c.seeds = vec![0];
        c
    }

    pub fn by_scale(scale: &str) -> Result<Self> {
        match scale {
            "desk" => Ok(Self::desk()),
            "smoke" => Ok(Self::smoke()),
            other => Err(Error::InvalidConfig(format!(
                "unknown scale `{other}` (expected desk or smoke)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for s in [&self.primary, &self.shifted] {
            s.validate()?;
            if (s.n_tx_antennas, s.n_subcarriers) != (self.model.n_t, self.model.n_c) {
                return Err(Error::InvalidConfig(format!(
                    "scenario is {}x{} but the model expects {}x{}",
                    s.n_tx_antennas, s.n_subcarriers, self.model.n_t, self.model.n_c
                )));
            }
        }
        if self.primary.los == self.shifted.los {
            return Err(Error::InvalidConfig(
                "the two datasets must differ in the LOS flag".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(Error::InvalidConfig("seeds must be distinct".into()));
        }
        if self.counts.train == 0 || self.counts.val == 0 || self.counts.test == 0 {
            return Err(Error::InvalidConfig("every split needs at least one sample".into()));
        }
        self.model.validate()?;
        self.train.validate()?;
        self.kd.validate()
    }
}
