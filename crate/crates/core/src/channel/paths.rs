//! Cluster multipath model: steering vectors, random path sets, and the
//! per-subcarrier channel they induce.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::sample::{CsiSample, Domain};
use super::scenario::ScenarioConfig;

/// Response of a uniform linear array towards departure angle `theta`.
pub fn steering_vector(theta: f64, n_antennas: usize, d_over_lambda: f64) -> Vec<Complex64> {
    let phase = 2.0 * PI * d_over_lambda * theta.sin();
    (0..n_antennas)
        .map(|k| {
            if k == 0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::from_polar(1.0, phase * k as f64)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComponent {
    pub complex_gain: Complex64,
    /// Radians, within [-pi/2, pi/2].
    pub departure_angle: f64,
    /// Seconds.
    pub delay: f64,
}

impl PathComponent {
    pub fn power(&self) -> f64 {
        self.complex_gain.norm_sqr()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    /// `n_clusters * n_subpaths_per_cluster` scattered paths, cluster-major.
    pub scattered: Vec<PathComponent>,
    pub los: Option<PathComponent>,
}

impl PathSet {
    pub fn iter(&self) -> impl Iterator<Item = &PathComponent> {
        self.los.iter().chain(self.scattered.iter())
    }

    pub fn scattered_power(&self) -> f64 {
        self.scattered.iter().map(PathComponent::power).sum()
    }
}

/// RNG stream for sample `index` of a dataset seeded with `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn laplace<R: Rng>(rng: &mut R, scale: f64) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

fn circular_gaussian<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws one realization of the cluster model. Total path power is 1; with
/// LOS the direct path carries `K/(1+K)` of it.
pub fn sample_path_set<R: Rng>(scenario: &ScenarioConfig, rng: &mut R) -> PathSet {
    let k_linear = if scenario.los {
        10f64.powf(scenario.rician_k_factor_db / 10.0)
    } else {
        0.0
    };
    let scattered_total = 1.0 / (1.0 + k_linear);
    let cluster_power = scattered_total / scenario.n_clusters as f64;

    let mut scattered =
        Vec::with_capacity(scenario.n_clusters * scenario.n_subpaths_per_cluster);
    for _ in 0..scenario.n_clusters {
        let center = rng.random_range(-FRAC_PI_3..=FRAC_PI_3);
        let start = scattered.len();
        for _ in 0..scenario.n_subpaths_per_cluster {
            let angle = (center + laplace(rng, scenario.angle_spread)).clamp(-FRAC_PI_2, FRAC_PI_2);
            let delay = rng.random::<f64>() * scenario.max_delay;
            scattered.push(PathComponent {
                complex_gain: circular_gaussian(rng),
                departure_angle: angle,
                delay,
            });
        }
        let cluster = &mut scattered[start..];
        let realized: f64 = cluster.iter().map(PathComponent::power).sum();
        let scale = if realized > 0.0 {
            (cluster_power / realized).sqrt()
        } else {
            0.0
        };
        for p in cluster {
            p.complex_gain *= scale;
        }
    }

    let los = scenario.los.then(|| {
        let angle = rng.random_range(-FRAC_PI_3..=FRAC_PI_3);
        let phase = rng.random_range(0.0..2.0 * PI);
        PathComponent {
            complex_gain: Complex64::from_polar((k_linear * scattered_total).sqrt(), phase),
            departure_angle: angle,
            delay: 0.0,
        }
    });

    PathSet { scattered, los }
}

/// Spatial-frequency channel: column `n` is the sum over paths of
/// `gain * exp(-j 2 pi f_n tau) * a(theta)`.
pub fn generate_csi(paths: &PathSet, scenario: &ScenarioConfig) -> CsiSample {
    let n_t = scenario.n_tx_antennas;
    let n_c = scenario.n_subcarriers;
    let mut h = vec![Complex64::new(0.0, 0.0); n_t * n_c];
    for path in paths.iter() {
        let a = steering_vector(
            path.departure_angle,
            n_t,
            scenario.antenna_spacing_over_wavelength,
        );
        for n in 0..n_c {
            let f = scenario.subcarrier_frequency(n);
            let g = path.complex_gain * Complex64::from_polar(1.0, -2.0 * PI * f * path.delay);
            for (ant, a_k) in a.iter().enumerate() {
                h[ant * n_c + n] += g * a_k;
            }
        }
    }
    CsiSample::from_complex(&h, n_t, n_c, Domain::SpatialFrequency)
}
