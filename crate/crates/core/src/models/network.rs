use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::checkpoint::{Checkpoint, CheckpointMeta, NamedArray};
use super::spec::{LayerSpec, ModelSpec};
use crate::autodiff::{
    glorot_uniform, BatchStats, Bindings, ParamId, ParamStore, Parameter, Tape, Tensor, Var, BN_EPS,
    BN_MOMENTUM,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics for normalization; running stats reported back.
    Train,
    /// Running statistics for normalization.
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Result of recording one model's forward pass on a tape.
#[derive(Debug)]
pub struct Forward {
    pub output: Var,
    pub bindings: Bindings,
    /// (node index, batch statistics) for every batch-norm node in train mode.
    pub batch_stats: Vec<(usize, BatchStats)>,
}

/// Parameters and normalization state for one [`ModelSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    params: ParamStore,
    node_params: Vec<Vec<ParamId>>,
    running: Vec<Option<RunningStats>>,
}

impl Model {
    /// Glorot-uniform weights, zero biases, unit BN scale, zero ReZero gates.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.propagate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut node_params = Vec::with_capacity(spec.nodes.len());
        let mut running = Vec::with_capacity(spec.nodes.len());
        for node in &spec.nodes {
            let name = |suffix: &str| format!("{}.{suffix}", node.name);
            let mut ids = Vec::new();
            let mut stats = None;
            match node.layer {
                LayerSpec::Conv2d { c_in, c_out, kh, kw } => {
                    let n = c_out * c_in * kh * kw;
                    let w = glorot_uniform(&mut rng, n, c_in * kh * kw, c_out * kh * kw);
                    ids.push(params.push(Parameter::new(name("kernel"), vec![c_out, c_in, kh, kw], w)));
                    ids.push(params.push(Parameter::new(name("bias"), vec![c_out], vec![0.0; c_out])));
                }
                LayerSpec::Dense { l_in, l_out } => {
                    let w = glorot_uniform(&mut rng, l_in * l_out, l_in, l_out);
                    ids.push(params.push(Parameter::new(name("weight"), vec![l_out, l_in], w)));
                    ids.push(params.push(Parameter::new(name("bias"), vec![l_out], vec![0.0; l_out])));
                }
                LayerSpec::BatchNorm { channels } => {
                    ids.push(params.push(Parameter::new(name("gamma"), vec![channels], vec![1.0; channels])));
                    ids.push(params.push(Parameter::new(name("beta"), vec![channels], vec![0.0; channels])));
                    stats = Some(RunningStats {
                        mean: vec![0.0; channels],
                        var: vec![1.0; channels],
                    });
                }
                LayerSpec::ScaleGate => {
                    ids.push(params.push(Parameter::new(name("alpha"), vec![1], vec![0.0])));
                }
                _ => {}
            }
            node_params.push(ids);
            running.push(stats);
        }
        Ok(Self {
            spec,
            params,
            node_params,
            running,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.total_values()
    }

    /// Running statistics of the batch-norm node called `node`.
    pub fn running_stats(&self, node: &str) -> Option<&RunningStats> {
        let i = self.spec.nodes.iter().position(|n| n.name == node)?;
        self.running[i].as_ref()
    }

    /// Records the forward pass for `x: [B, ...input_shape]`.
    pub fn forward(&self, tape: &mut Tape, x: Var, mode: Mode, trainable: bool) -> Result<Forward> {
        let xs = tape.shape(x);
        if xs.len() != self.spec.input_shape.len() + 1 || xs[1..] != self.spec.input_shape[..] {
            return Err(Error::ShapeMismatch(format!(
                "{} expects [B, {:?}], got {xs:?}",
                self.spec.name, self.spec.input_shape
            )));
        }
        let batch = xs[0];
        let mut bindings = Bindings::new();
        let mut batch_stats = Vec::new();
        let mut values = Vec::with_capacity(self.spec.nodes.len() + 1);
        values.push(x);
        for (i, node) in self.spec.nodes.iter().enumerate() {
            let ids = &self.node_params[i];
            let mut bind = |k: usize, tape: &mut Tape| self.params.bind(tape, ids[k], trainable, &mut bindings);
            let a = values[node.inputs[0]];
            let out = match &node.layer {
                LayerSpec::Conv2d { .. } => {
                    let k = bind(0, tape);
                    let b = bind(1, tape);
                    tape.conv2d(a, k, b)?
                }
                LayerSpec::Dense { .. } => {
                    let w = bind(0, tape);
                    let b = bind(1, tape);
                    tape.dense(a, w, b)?
                }
                LayerSpec::BatchNorm { .. } => {
                    let g = bind(0, tape);
                    let b = bind(1, tape);
                    match mode {
                        Mode::Train => {
                            let (y, stats) = tape.batch_norm_train(a, g, b, BN_EPS)?;
                            batch_stats.push((i, stats));
                            y
                        }
                        Mode::Eval => {
                            let rs = self.running[i].as_ref().expect("batch-norm nodes carry stats");
                            tape.batch_norm_eval(a, g, b, &rs.mean, &rs.var, BN_EPS)?
                        }
                    }
                }
                LayerSpec::LeakyRelu { slope } => tape.leaky_relu(a, *slope),
                LayerSpec::Sigmoid => tape.sigmoid(a),
                LayerSpec::Concat => tape.concat_channels(a, values[node.inputs[1]])?,
                LayerSpec::Add => tape.add(a, values[node.inputs[1]])?,
                LayerSpec::ScaleGate => {
                    let alpha = bind(0, tape);
                    tape.scale_gate(a, alpha)?
                }
                LayerSpec::Flatten => tape.flatten(a)?,
                LayerSpec::Reshape { shape } => {
                    let mut s = vec![batch];
                    s.extend_from_slice(shape);
                    tape.reshape(a, s)?
                }
            };
            values.push(out);
        }
        Ok(Forward {
            output: *values.last().unwrap(),
            bindings,
            batch_stats,
        })
    }

    /// Blends train-mode batch statistics into the running statistics.
    pub fn apply_batch_stats(&mut self, stats: &[(usize, BatchStats)]) {
        for (i, s) in stats {
            let rs = self.running[*i].as_mut().expect("batch-norm nodes carry stats");
            for (r, b) in rs.mean.iter_mut().zip(&s.mean) {
                *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
            }
            for (r, b) in rs.var.iter_mut().zip(&s.var) {
                *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
            }
        }
    }

    /// Eval-mode inference over a flat batch of `input_len`-sized rows,
    /// processed `chunk` rows at a time.
    pub fn infer(&self, inputs: &[f64], chunk: usize) -> Result<Vec<f64>> {
        let in_len = self.spec.input_len();
        if in_len == 0 || inputs.len() % in_len != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} input length {} is not a multiple of {in_len}",
                self.spec.name,
                inputs.len()
            )));
        }
        let chunk = chunk.max(1);
        let mut out = Vec::with_capacity(inputs.len() / in_len * self.spec.output_len());
        for rows in inputs.chunks(chunk * in_len) {
            let mut shape = vec![rows.len() / in_len];
            shape.extend_from_slice(&self.spec.input_shape);
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::new(shape, rows.to_vec())?);
            let f = self.forward(&mut tape, x, Mode::Eval, false)?;
            out.extend_from_slice(tape.value(f.output));
        }
        Ok(out)
    }

    pub(crate) fn named_arrays(&self, prefix: &str) -> Vec<NamedArray> {
        let mut arrays: Vec<NamedArray> = self
            .params
            .iter()
            .map(|p| NamedArray {
                name: format!("{prefix}{}", p.name),
                shape: p.shape.clone(),
                data: p.value.clone(),
            })
            .collect();
        for (node, rs) in self.spec.nodes.iter().zip(&self.running) {
            if let Some(rs) = rs {
                for (suffix, data) in [("running_mean", &rs.mean), ("running_var", &rs.var)] {
                    arrays.push(NamedArray {
                        name: format!("{prefix}{}.{suffix}", node.name),
                        shape: vec![data.len()],
                        data: data.clone(),
                    });
                }
            }
        }
        arrays
    }

    /// Overwrites every parameter and running statistic from `arrays`, which
    /// must hold exactly one matching array for each (after `prefix`).
    pub(crate) fn load_arrays(&mut self, arrays: &[&NamedArray], prefix: &str) -> Result<()> {
        let expected = self.named_arrays(prefix);
        if arrays.len() != expected.len() {
            return Err(Error::ShapeMismatch(format!(
                "{}: checkpoint holds {} arrays, model needs {}",
                self.spec.name,
                arrays.len(),
                expected.len()
            )));
        }
        let lookup = |name: &str, shape: &[usize]| -> Result<Vec<f64>> {
            let mut found = arrays.iter().filter(|a| a.name == name);
            let a = found
                .next()
                .ok_or_else(|| Error::ShapeMismatch(format!("checkpoint lacks array {name}")))?;
            if found.next().is_some() {
                return Err(Error::ShapeMismatch(format!("checkpoint repeats array {name}")));
            }
            if a.shape != shape {
                return Err(Error::ShapeMismatch(format!(
                    "array {name} has shape {:?}, model needs {shape:?}",
                    a.shape
                )));
            }
            Ok(a.data.clone())
        };
        let mut new_values = Vec::new();
        for p in self.params.iter() {
            new_values.push(lookup(&format!("{prefix}{}", p.name), &p.shape)?);
        }
        let mut new_running = Vec::new();
        for (node, rs) in self.spec.nodes.iter().zip(&self.running) {
            new_running.push(match rs {
                Some(rs) => {
                    let base = format!("{prefix}{}", node.name);
                    Some(RunningStats {
                        mean: lookup(&format!("{base}.running_mean"), &[rs.mean.len()])?,
                        var: lookup(&format!("{base}.running_var"), &[rs.var.len()])?,
                    })
                }
                None => None,
            });
        }
        for (p, v) in self.params.iter_mut().zip(new_values) {
            p.value = v;
        }
        self.running = new_running;
        Ok(())
    }

    pub fn to_checkpoint(&self, meta: CheckpointMeta) -> Checkpoint {
        Checkpoint {
            spec_hash: self.spec.hash(),
            meta,
            arrays: self.named_arrays(""),
        }
    }

    pub fn from_checkpoint(spec: ModelSpec, ckpt: &Checkpoint) -> Result<Self> {
        let hash = spec.hash();
        if hash != ckpt.spec_hash {
            return Err(Error::SpecHashMismatch(format!(
                "{} spec hash {} differs from checkpoint {}",
                spec.name,
                hex(&hash),
                hex(&ckpt.spec_hash)
            )));
        }
        let mut m = Model::new(spec, 0)?;
        m.load_arrays(&ckpt.arrays.iter().collect::<Vec<_>>(), "")?;
        Ok(m)
    }

    /// Fresh Adam state and cleared gradients, parameters untouched.
    pub fn reset_optimizer(&mut self) {
        for p in self.params.iter_mut() {
            p.first_moment.fill(0.0);
            p.second_moment.fill(0.0);
            p.step = 0;
            p.grad.fill(0.0);
            p.has_grad = false;
        }
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Encoder and decoder joined at the codeword.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    pub encoder: Model,
    pub decoder: Model,
}

/// Forward pass of both halves.
#[derive(Debug)]
pub struct AutoencoderForward {
    pub codeword: Var,
    pub output: Var,
    pub encoder: Forward,
    pub decoder: Forward,
}

const ENCODER_PREFIX: &str = "encoder/";
const DECODER_PREFIX: &str = "decoder/";

impl Autoencoder {
    /// Joins an encoder and a decoder whose codeword lengths agree.
    pub fn combine(encoder: Model, decoder: Model) -> Result<Self> {
        let e = encoder.spec();
        let d = decoder.spec();
        if e.output_len() != d.input_len() {
            return Err(Error::ShapeMismatch(format!(
                "encoder emits codewords of length {}, decoder expects {}",
                e.output_len(),
                d.input_len()
            )));
        }
        if e.input_shape != d.output_shape {
            return Err(Error::ShapeMismatch(format!(
                "encoder input {:?} differs from decoder output {:?}",
                e.input_shape, d.output_shape
            )));
        }
        Ok(Self { encoder, decoder })
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        x: Var,
        mode: Mode,
        train_encoder: bool,
        train_decoder: bool,
    ) -> Result<AutoencoderForward> {
        let encoder = self.encoder.forward(tape, x, mode, train_encoder)?;
        let decoder = self.decoder.forward(tape, encoder.output, mode, train_decoder)?;
        Ok(AutoencoderForward {
            codeword: encoder.output,
            output: decoder.output,
            encoder,
            decoder,
        })
    }

    /// Eval-mode reconstruction of a flat batch.
    pub fn reconstruct(&self, inputs: &[f64], chunk: usize) -> Result<Vec<f64>> {
        let code = self.encoder.infer(inputs, chunk)?;
        self.decoder.infer(&code, chunk)
    }

    pub fn spec_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.encoder.spec().hash());
        h.update(self.decoder.spec().hash());
        h.finalize().into()
    }

    pub fn to_checkpoint(&self, meta: CheckpointMeta) -> Checkpoint {
        let mut arrays = self.encoder.named_arrays(ENCODER_PREFIX);
        arrays.extend(self.decoder.named_arrays(DECODER_PREFIX));
        Checkpoint {
            spec_hash: self.spec_hash(),
            meta,
            arrays,
        }
    }

    pub fn from_checkpoint(encoder: ModelSpec, decoder: ModelSpec, ckpt: &Checkpoint) -> Result<Self> {
        let mut ae = Self::combine(Model::new(encoder, 0)?, Model::new(decoder, 0)?)?;
        ae.load_checkpoint(ckpt)?;
        Ok(ae)
    }

    /// Replaces all weights from an autoencoder checkpoint of the same specs.
    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<()> {
        let hash = self.spec_hash();
        if hash != ckpt.spec_hash {
            return Err(Error::SpecHashMismatch(format!(
                "autoencoder spec hash {} differs from checkpoint {}",
                hex(&hash),
                hex(&ckpt.spec_hash)
            )));
        }
        let part = |prefix: &str| -> Vec<&NamedArray> {
            ckpt.arrays.iter().filter(|a| a.name.starts_with(prefix)).collect()
        };
        let enc = part(ENCODER_PREFIX);
        let dec = part(DECODER_PREFIX);
        if enc.len() + dec.len() != ckpt.arrays.len() {
            return Err(Error::ShapeMismatch(
                "autoencoder checkpoint holds arrays outside encoder/ and decoder/".into(),
            ));
        }
        self.encoder.load_arrays(&enc, ENCODER_PREFIX)?;
        self.decoder.load_arrays(&dec, DECODER_PREFIX)
    }

    /// Splits an autoencoder checkpoint into its encoder and decoder halves.
    pub fn split_checkpoint(&self, meta: CheckpointMeta) -> (Checkpoint, Checkpoint) {
        (self.encoder.to_checkpoint(meta), self.decoder.to_checkpoint(meta))
    }
}

/// Batched eval-mode encoding: `B x input_len` values in, `B x n_s` out.
pub fn encode(encoder: &Model, samples: &[f64]) -> Result<Vec<f64>> {
    encoder.infer(samples, INFER_CHUNK)
}

/// Batched eval-mode decoding: `B x n_s` values in, `B x 2 N_t N_c` out.
pub fn decode(decoder: &Model, codewords: &[f64]) -> Result<Vec<f64>> {
    decoder.infer(codewords, INFER_CHUNK)
}

/// Rows per tape during inference.
pub const INFER_CHUNK: usize = 250;
