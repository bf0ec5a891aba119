//! Declarative layer graphs for the CRNet-style teacher and CRNet-SE-style
//! student networks.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::LEAKY_SLOPE;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        c_in: usize,
        c_out: usize,
        kh: usize,
        kw: usize,
    },
    Dense {
        l_in: usize,
        l_out: usize,
    },
    BatchNorm {
        channels: usize,
    },
    LeakyRelu {
        slope: f64,
    },
    Sigmoid,
    Concat,
    Add,
    ScaleGate,
    Flatten,
    Reshape {
        shape: Vec<usize>,
    },
}

impl LayerSpec {
    fn arity(&self) -> usize {
        match self {
            LayerSpec::Concat | LayerSpec::Add => 2,
            _ => 1,
        }
    }
}

/// One layer application. `inputs` index earlier values: 0 is the model
/// input, `k` is the output of node `k - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub layer: LayerSpec,
    pub inputs: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Encoder,
    Decoder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub role: Role,
    /// Per-sample input shape (no batch axis).
    pub input_shape: Vec<usize>,
    /// Per-sample output shape; the last node produces it.
    pub output_shape: Vec<usize>,
    pub nodes: Vec<NodeSpec>,
}

impl ModelSpec {
    /// Per-sample shape of every value: index 0 is the input, `k` the output
    /// of node `k - 1`.
    pub fn propagate(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.clone()];
        for node in &self.nodes {
            let fail = |m: String| Error::ShapeMismatch(format!("{}: {}", node.name, m));
            if node.inputs.len() != node.layer.arity() {
                return Err(fail(format!("expects {} inputs", node.layer.arity())));
            }
            if node.inputs.iter().any(|&i| i >= shapes.len()) {
                return Err(fail("refers to a later node".into()));
            }
            let a = &shapes[node.inputs[0]];
            let out = match &node.layer {
                LayerSpec::Conv2d { c_in, c_out, kh, kw } => {
                    if [*c_in, *c_out, *kh, *kw].contains(&0) {
                        return Err(fail("zero-sized convolution".into()));
                    }
                    if a.len() != 3 || a[0] != *c_in {
                        return Err(fail(format!("conv expects [{c_in}, H, W], got {a:?}")));
                    }
                    vec![*c_out, a[1], a[2]]
                }
                LayerSpec::Dense { l_in, l_out } => {
                    if *l_in == 0 || *l_out == 0 {
                        return Err(fail("zero-sized dense layer".into()));
                    }
                    if a != &[*l_in] {
                        return Err(fail(format!("dense expects [{l_in}], got {a:?}")));
                    }
                    vec![*l_out]
                }
                LayerSpec::BatchNorm { channels } => {
                    if a.is_empty() || a[0] != *channels {
                        return Err(fail(format!("batch norm over {channels} channels, got {a:?}")));
                    }
                    a.clone()
                }
                LayerSpec::LeakyRelu { slope } => {
                    if !slope.is_finite() {
                        return Err(fail("non-finite slope".into()));
                    }
                    a.clone()
                }
                LayerSpec::Sigmoid | LayerSpec::ScaleGate => a.clone(),
                LayerSpec::Flatten => vec![a.iter().product()],
                LayerSpec::Reshape { shape } => {
                    if shape.iter().product::<usize>() != a.iter().product::<usize>() {
                        return Err(fail(format!("cannot reshape {a:?} to {shape:?}")));
                    }
                    shape.clone()
                }
                LayerSpec::Add => {
                    let b = &shapes[node.inputs[1]];
                    if a != b {
                        return Err(fail(format!("add of {a:?} and {b:?}")));
                    }
                    a.clone()
                }
                LayerSpec::Concat => {
                    let b = &shapes[node.inputs[1]];
                    if a.len() != b.len() || a.is_empty() || a[1..] != b[1..] {
                        return Err(fail(format!("concat of {a:?} and {b:?}")));
                    }
                    let mut s = a.clone();
                    s[0] += b[0];
                    s
                }
            };
            shapes.push(out);
        }
        if shapes.last() != Some(&self.output_shape) {
            return Err(Error::ShapeMismatch(format!(
                "{}: graph produces {:?}, declared {:?}",
                self.name,
                shapes.last().unwrap(),
                self.output_shape
            )));
        }
        Ok(shapes)
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn output_len(&self) -> usize {
        self.output_shape.iter().product()
    }

    /// Codeword length over the real-valued CSI size.
    pub fn compression_ratio(&self) -> f64 {
        match self.role {
            Role::Encoder => self.output_len() as f64 / self.input_len() as f64,
            Role::Decoder => self.input_len() as f64 / self.output_len() as f64,
        }
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("model specs always serialize");
        Sha256::digest(&json).into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model specs always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(s)?;
        spec.propagate()?;
        Ok(spec)
    }
}

struct GraphBuilder {
    nodes: Vec<NodeSpec>,
}

impl GraphBuilder {
    fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn add(&mut self, name: impl Into<String>, layer: LayerSpec, inputs: Vec<usize>) -> usize {
        self.nodes.push(NodeSpec {
            name: name.into(),
            layer,
            inputs,
        });
        self.nodes.len()
    }

    fn conv(&mut self, name: &str, input: usize, c_in: usize, c_out: usize, kh: usize, kw: usize) -> usize {
        self.add(name, LayerSpec::Conv2d { c_in, c_out, kh, kw }, vec![input])
    }

    /// Convolution followed by batch normalization and LeakyReLU.
    fn conv_bn_act(&mut self, name: &str, input: usize, c_in: usize, c_out: usize, kh: usize, kw: usize) -> usize {
        let c = self.conv(name, input, c_in, c_out, kh, kw);
        let n = self.add(format!("{name}_bn"), LayerSpec::BatchNorm { channels: c_out }, vec![c]);
        self.add(
            format!("{name}_act"),
            LayerSpec::LeakyRelu { slope: LEAKY_SLOPE },
            vec![n],
        )
    }

    fn finish(self, name: &str, role: Role, input_shape: Vec<usize>, output_shape: Vec<usize>) -> Result<ModelSpec> {
        let spec = ModelSpec {
            name: name.into(),
            role,
            input_shape,
            output_shape,
            nodes: self.nodes,
        };
        spec.propagate()?;
        Ok(spec)
    }
}

fn check_dims(n_t: usize, n_c: usize, n_s: usize) -> Result<()> {
    if n_t == 0 || n_c == 0 || n_s == 0 {
        return Err(Error::InvalidConfig(format!(
            "network dimensions must be positive (n_t={n_t}, n_c={n_c}, n_s={n_s})"
        )));
    }
    if n_s > 2 * n_t * n_c {
        return Err(Error::InvalidConfig(format!(
            "codeword length {n_s} exceeds CSI size {}",
            2 * n_t * n_c
        )));
    }
    Ok(())
}

/// Codeword length for a compression ratio `1/denominator`.
pub fn codeword_len(n_t: usize, n_c: usize, denominator: usize) -> Result<usize> {
    let total = 2 * n_t * n_c;
    if denominator == 0 || total % denominator != 0 {
        return Err(Error::InvalidConfig(format!(
            "compression ratio 1/{denominator} does not give an integer codeword for {total} values"
        )));
    }
    Ok(total / denominator)
}

/// Lightweight encoder: one 3x3 convolution for feature extraction and one
/// dense layer for compression.
pub fn build_student_encoder(n_t: usize, n_c: usize, n_s: usize) -> Result<ModelSpec> {
    check_dims(n_t, n_c, n_s)?;
    let mut g = GraphBuilder::new();
    let x = g.conv_bn_act("enc_conv", 0, 2, 2, 3, 3);
    let f = g.add("enc_flatten", LayerSpec::Flatten, vec![x]);
    g.add(
        "enc_dense",
        LayerSpec::Dense {
            l_in: 2 * n_t * n_c,
            l_out: n_s,
        },
        vec![f],
    );
    g.finish("student_encoder", Role::Encoder, vec![2, n_t, n_c], vec![n_s])
}

/// Channel width of each teacher-encoder branch.
pub const TEACHER_BRANCH_WIDTH: usize = 16;

/// Multi-resolution encoder: a 3x3 branch and a 1x9 -> 9x1 branch,
/// concatenated and merged back to two channels before compression.
pub fn build_teacher_encoder(n_t: usize, n_c: usize, n_s: usize) -> Result<ModelSpec> {
    check_dims(n_t, n_c, n_s)?;
    let w = TEACHER_BRANCH_WIDTH;
    let mut g = GraphBuilder::new();
    let a = g.conv_bn_act("enc_a_3x3", 0, 2, w, 3, 3);
    let b1 = g.conv_bn_act("enc_b_1x9", 0, 2, w, 1, 9);
    let b2 = g.conv_bn_act("enc_b_9x1", b1, w, w, 9, 1);
    let cat = g.add("enc_concat", LayerSpec::Concat, vec![a, b2]);
    let m = g.conv_bn_act("enc_merge", cat, 2 * w, 2, 1, 1);
    let f = g.add("enc_flatten", LayerSpec::Flatten, vec![m]);
    g.add(
        "enc_dense",
        LayerSpec::Dense {
            l_in: 2 * n_t * n_c,
            l_out: n_s,
        },
        vec![f],
    );
    g.finish("teacher_encoder", Role::Encoder, vec![2, n_t, n_c], vec![n_s])
}

fn crblock(g: &mut GraphBuilder, prefix: &str, input: usize, width: usize) -> usize {
    let a1 = g.conv_bn_act(&format!("{prefix}_a_3x3_1"), input, 2, width, 3, 3);
    let a2 = g.conv_bn_act(&format!("{prefix}_a_3x3_2"), a1, width, width, 3, 3);
    let b1 = g.conv_bn_act(&format!("{prefix}_b_1x9"), input, 2, width, 1, 9);
    let b2 = g.conv_bn_act(&format!("{prefix}_b_9x1"), b1, width, width, 9, 1);
    let cat = g.add(format!("{prefix}_concat"), LayerSpec::Concat, vec![a2, b2]);
    // the merge convolution has no normalization or activation
    let merge = g.conv(&format!("{prefix}_merge"), cat, 2 * width, 2, 1, 1);
    let gate = g.add(format!("{prefix}_rezero"), LayerSpec::ScaleGate, vec![merge]);
    g.add(format!("{prefix}_skip"), LayerSpec::Add, vec![gate, input])
}

/// Shared decoder: dense expansion, 5x5 head convolution, two CRBlocks with
/// ReZero-gated residual branches, and a final sigmoid.
pub fn build_decoder(n_t: usize, n_c: usize, n_s: usize, crblock_width: usize) -> Result<ModelSpec> {
    check_dims(n_t, n_c, n_s)?;
    if crblock_width < 2 {
        return Err(Error::InvalidConfig(format!(
            "CRBlock width must be at least 2, got {crblock_width}"
        )));
    }
    let mut g = GraphBuilder::new();
    let d = g.add(
        "dec_dense",
        LayerSpec::Dense {
            l_in: n_s,
            l_out: 2 * n_t * n_c,
        },
        vec![0],
    );
    let r = g.add(
        "dec_reshape",
        LayerSpec::Reshape {
            shape: vec![2, n_t, n_c],
        },
        vec![d],
    );
    let h = g.conv_bn_act("dec_head_5x5", r, 2, 2, 5, 5);
    let b1 = crblock(&mut g, "crblock1", h, crblock_width);
    let b2 = crblock(&mut g, "crblock2", b1, crblock_width);
    g.add("dec_sigmoid", LayerSpec::Sigmoid, vec![b2]);
    g.finish("decoder", Role::Decoder, vec![n_s], vec![2, n_t, n_c])
}
