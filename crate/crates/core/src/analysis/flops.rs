use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{LayerSpec, ModelSpec, Role};

fn positive(dims: &[usize], what: &str) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::InvalidConfig(format!("{what} dimensions must be positive, got {dims:?}")));
    }
    Ok(())
}

/// `2 H_out W_out (C_in K_H K_W + 1) C_out`, bias included.
pub fn flops_conv2d(h_out: usize, w_out: usize, c_in: usize, c_out: usize, kh: usize, kw: usize) -> Result<u64> {
    positive(&[h_out, w_out, c_in, c_out, kh, kw], "conv2d")?;
    let [h, w, ci, co, kh, kw] = [h_out, w_out, c_in, c_out, kh, kw].map(|d| d as u64);
    Ok(2 * h * w * (ci * kh * kw + 1) * co)
}

/// `(2 L_in - 1) L_out`.
pub fn flops_dense(l_in: usize, l_out: usize) -> Result<u64> {
    positive(&[l_in, l_out], "dense")?;
    Ok((2 * l_in as u64 - 1) * l_out as u64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerFlops {
    pub name: String,
    pub flops: u64,
}

/// Per-layer and total FLOPs of one network. Only convolution and dense
/// layers count; normalization, activations and reshapes are free.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopsReport {
    pub model: String,
    pub role: Role,
    pub layers: Vec<LayerFlops>,
    pub total: u64,
}

pub fn model_flops(spec: &ModelSpec) -> Result<FlopsReport> {
    let shapes = spec.propagate()?;
    let mut layers = Vec::new();
    for (i, node) in spec.nodes.iter().enumerate() {
        let out = &shapes[i + 1];
        let flops = match node.layer {
            LayerSpec::Conv2d { c_in, c_out, kh, kw } => flops_conv2d(out[1], out[2], c_in, c_out, kh, kw)?,
            LayerSpec::Dense { l_in, l_out } => flops_dense(l_in, l_out)?,
            _ => continue,
        };
        layers.push(LayerFlops {
            name: node.name.clone(),
            flops,
        });
    }
    let total = layers.iter().map(|l| l.flops).sum();
    Ok(FlopsReport {
        model: spec.name.clone(),
        role: spec.role,
        layers,
        total,
    })
}

/// Student cost as a fraction of teacher cost.
pub fn flops_ratio(student: u64, teacher: u64) -> Result<f64> {
    if teacher == 0 {
        return Err(Error::InvalidConfig("teacher FLOPs are zero".into()));
    }
    Ok(student as f64 / teacher as f64)
}
