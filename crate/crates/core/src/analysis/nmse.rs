use serde::{Deserialize, Serialize};

use crate::channel::{inverse_transform, CsiSample, Domain, NormalizationMeta};
use crate::error::{Error, Result};

/// References with less energy than this are skipped.
pub const DEGENERATE_ENERGY: f64 = 1e-30;

/// Mean per-sample normalized squared error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmseResult {
    pub linear: f64,
    /// `10 log10(linear)`; negative infinity for a perfect reconstruction.
    pub db: f64,
    pub samples: usize,
    pub degenerate: usize,
    pub domain: Domain,
}

/// NMSE of flat batches that are already in physical units.
pub fn nmse_raw(reference: &[f64], reconstruction: &[f64], sample_len: usize, domain: Domain) -> Result<NmseResult> {
    if sample_len == 0 || reference.len() != reconstruction.len() || reference.len() % sample_len != 0 {
        return Err(Error::ShapeMismatch(format!(
            "nmse of {} vs {} values with sample length {sample_len}",
            reference.len(),
            reconstruction.len()
        )));
    }
    let mut sum = 0.0;
    let mut used = 0;
    let mut degenerate = 0;
    for (h, hh) in reference.chunks(sample_len).zip(reconstruction.chunks(sample_len)) {
        let energy: f64 = h.iter().map(|v| v * v).sum();
        if energy < DEGENERATE_ENERGY {
            degenerate += 1;
            continue;
        }
        let err: f64 = h.iter().zip(hh).map(|(a, b)| (a - b) * (a - b)).sum();
        sum += err / energy;
        used += 1;
    }
    if used == 0 {
        return Err(Error::DegenerateReference(degenerate));
    }
    let linear = sum / used as f64;
    Ok(NmseResult {
        linear,
        db: 10.0 * linear.log10(),
        samples: used,
        degenerate,
        domain,
    })
}

/// NMSE of normalized angular-delay batches, measured after inverting the
/// min-max normalization.
pub fn nmse(reference: &[f64], reconstruction: &[f64], sample_len: usize, meta: &NormalizationMeta) -> Result<NmseResult> {
    nmse_raw(
        &meta.denormalize_all(reference),
        &meta.denormalize_all(reconstruction),
        sample_len,
        Domain::AngularDelay,
    )
}

/// Same as [`nmse`] but measured after transforming both batches back to the
/// spatial-frequency domain.
pub fn nmse_spatial_frequency(
    reference: &[f64],
    reconstruction: &[f64],
    n_t: usize,
    n_c: usize,
    meta: &NormalizationMeta,
) -> Result<NmseResult> {
    let len = 2 * n_t * n_c;
    if reference.len() != reconstruction.len() || len == 0 || reference.len() % len != 0 {
        return Err(Error::ShapeMismatch(format!(
            "nmse of {} vs {} values for {n_t}x{n_c} samples",
            reference.len(),
            reconstruction.len()
        )));
    }
    let to_sf = |batch: &[f64]| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(batch.len());
        for chunk in meta.denormalize_all(batch).chunks(len) {
            let s = CsiSample {
                values: chunk.to_vec(),
                n_t,
                n_c,
                domain: Domain::AngularDelay,
                normalized: false,
            };
            out.extend(inverse_transform(&s)?.values);
        }
        Ok(out)
    };
    nmse_raw(&to_sf(reference)?, &to_sf(reconstruction)?, len, Domain::SpatialFrequency)
}

/// dB value as printed in reports: two decimals, `-inf` for perfect.
pub fn format_db(db: f64) -> String {
    if db == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{db:.2}")
    }
}
