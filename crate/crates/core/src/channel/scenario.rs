use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry and propagation parameters of one synthetic deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_tx_antennas: usize,
    pub n_subcarriers: usize,
    pub n_clusters: usize,
    pub n_subpaths_per_cluster: usize,
    /// Hz.
    pub center_frequency: f64,
    /// Hz.
    pub bandwidth: f64,
    pub antenna_spacing_over_wavelength: f64,
    pub los: bool,
    /// Ratio of LOS power to total scattered power, in dB. Ignored without LOS.
    pub rician_k_factor_db: f64,
    /// Laplacian scale of subpath departure angles around their cluster center, radians.
    pub angle_spread: f64,
    /// Seconds.
    pub max_delay: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Urban-micro line-of-sight-like defaults: 32-element half-wavelength ULA,
    /// 32 subcarriers over 70 MHz at 2.655 GHz.
    pub fn umi_los(seed: u64) -> Self {
        Self {
            n_tx_antennas: 32,
            n_subcarriers: 32,
            n_clusters: 4,
            n_subpaths_per_cluster: 10,
            center_frequency: 2.655e9,
            bandwidth: 70e6,
            antenna_spacing_over_wavelength: 0.5,
            los: true,
            rician_k_factor_db: 6.0,
            angle_spread: 0.05,
            max_delay: 60e-9,
            seed,
        }
    }

    /// The non-line-of-sight counterpart of [`ScenarioConfig::umi_los`].
    pub fn umi_nlos(seed: u64) -> Self {
        Self {
            los: false,
            n_clusters: 6,
            angle_spread: 0.08,
            ..Self::umi_los(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("scenario: {m}")));
        if self.n_tx_antennas == 0 || self.n_subcarriers == 0 {
            return bad("antenna and subcarrier counts must be at least 1");
        }
        if self.n_clusters == 0 || self.n_subpaths_per_cluster == 0 {
            return bad("cluster and subpath counts must be at least 1");
        }
        if !(self.bandwidth > 0.0) {
            return bad("bandwidth must be positive");
        }
        if !(self.max_delay >= 0.0) {
            return bad("max_delay must be non-negative");
        }
        if !(self.antenna_spacing_over_wavelength > 0.0) {
            return bad("antenna spacing must be positive");
        }
        if !(self.angle_spread >= 0.0) || !self.rician_k_factor_db.is_finite() {
            return bad("angle spread and K-factor must be finite and non-negative");
        }
        Ok(())
    }

    /// Spacing between adjacent baseband subcarriers, Hz.
    pub fn subcarrier_spacing(&self) -> f64 {
        self.bandwidth / self.n_subcarriers as f64
    }

    /// Baseband frequency of subcarrier `n`, counted from the band edge.
    pub fn subcarrier_frequency(&self, n: usize) -> f64 {
        n as f64 * self.subcarrier_spacing()
    }

    /// Real values per sample: two planes of `n_tx_antennas x n_subcarriers`.
    pub fn sample_len(&self) -> usize {
        2 * self.n_tx_antennas * self.n_subcarriers
    }
}
