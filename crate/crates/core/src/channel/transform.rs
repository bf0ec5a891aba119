//! Unitary 2-D DFT between the spatial-frequency and angular-delay domains:
//! `H = F_a * H_sf * F_d`, each DFT matrix scaled by `1/sqrt(N)`.

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use super::sample::{CsiSample, Domain};
use crate::error::{Error, Result};

fn dft2(h: &mut [Complex64], n_t: usize, n_c: usize, direction: FftDirection) {
    let mut planner = FftPlanner::<f64>::new();

    // along subcarriers (right multiplication by F_d)
    let row_fft = planner.plan_fft(n_c, direction);
    row_fft.process(h);

    // along antennas (left multiplication by F_a)
    let col_fft = planner.plan_fft(n_t, direction);
    let mut column = vec![Complex64::new(0.0, 0.0); n_t];
    for c in 0..n_c {
        for (a, slot) in column.iter_mut().enumerate() {
            *slot = h[a * n_c + c];
        }
        col_fft.process(&mut column);
        for (a, v) in column.iter().enumerate() {
            h[a * n_c + c] = *v;
        }
    }

    let scale = 1.0 / ((n_t * n_c) as f64).sqrt();
    for v in h.iter_mut() {
        *v *= scale;
    }
}

fn expect(sample: &CsiSample, domain: Domain) -> Result<()> {
    if sample.domain != domain {
        return Err(Error::DomainMismatch {
            expected: domain.name(),
            actual: sample.domain.name(),
        });
    }
    Ok(())
}

pub fn to_angular_delay(sample: &CsiSample) -> Result<CsiSample> {
    expect(sample, Domain::SpatialFrequency)?;
    let mut h = sample.to_complex();
    dft2(&mut h, sample.n_t, sample.n_c, FftDirection::Forward);
    Ok(CsiSample::from_complex(
        &h,
        sample.n_t,
        sample.n_c,
        Domain::AngularDelay,
    ))
}

pub fn inverse_transform(sample: &CsiSample) -> Result<CsiSample> {
    expect(sample, Domain::AngularDelay)?;
    let mut h = sample.to_complex();
    dft2(&mut h, sample.n_t, sample.n_c, FftDirection::Inverse);
    Ok(CsiSample::from_complex(
        &h,
        sample.n_t,
        sample.n_c,
        Domain::SpatialFrequency,
    ))
}
