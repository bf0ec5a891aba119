use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::binio::{read_file, write_file, Reader, Writer};
use crate::channel::CsiSample;
use crate::error::{Error, Result};
use crate::models::{encode, Model, Role};

pub const PAIRS_MAGIC: &[u8; 4] = b"CSIP";
pub const PAIRS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Producer {
    TeacherEncoder,
    StudentEncoder,
}

impl Producer {
    fn tag(self) -> u8 {
        match self {
            Producer::TeacherEncoder => 0,
            Producer::StudentEncoder => 1,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(Producer::TeacherEncoder),
            1 => Some(Producer::StudentEncoder),
            _ => None,
        }
    }
}

/// Normalized CSI samples with the codewords some encoder produced for them.
/// Row `i` of `csi` pairs with row `i` of `codewords`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodewordPairDataset {
    pub n_t: usize,
    pub n_c: usize,
    pub n_s: usize,
    pub producer: Producer,
    pub csi: Vec<f64>,
    pub codewords: Vec<f64>,
}

impl CodewordPairDataset {
    pub fn new(n_t: usize, n_c: usize, n_s: usize, producer: Producer, csi: Vec<f64>, codewords: Vec<f64>) -> Result<Self> {
        let l = 2 * n_t * n_c;
        if l == 0 || n_s == 0 || csi.len() % l != 0 || codewords.len() != csi.len() / l * n_s {
            return Err(Error::ShapeMismatch(format!(
                "{} CSI values and {} codeword values do not pair up for {n_t}x{n_c}, n_s={n_s}",
                csi.len(),
                codewords.len()
            )));
        }
        Ok(Self {
            n_t,
            n_c,
            n_s,
            producer,
            csi,
            codewords,
        })
    }

    pub fn sample_len(&self) -> usize {
        2 * self.n_t * self.n_c
    }

    pub fn len(&self) -> usize {
        self.csi.len() / self.sample_len()
    }

    pub fn is_empty(&self) -> bool {
        self.csi.is_empty()
    }

    pub fn csi_row(&self, i: usize) -> &[f64] {
        let l = self.sample_len();
        &self.csi[i * l..(i + 1) * l]
    }

    pub fn codeword(&self, i: usize) -> &[f64] {
        &self.codewords[i * self.n_s..(i + 1) * self.n_s]
    }

    /// Layout: magic, version u32, n_s u32, producer u8, count u64, N_t u32,
    /// N_c u32, then per pair the CSI planes followed by the codeword.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(PAIRS_MAGIC);
        w.u32(PAIRS_VERSION);
        w.u32(self.n_s as u32);
        w.u8(self.producer.tag());
        w.u64(self.len() as u64);
        w.u32(self.n_t as u32);
        w.u32(self.n_c as u32);
        for i in 0..self.len() {
            w.f64s(self.csi_row(i));
            w.f64s(self.codeword(i));
        }
        w.finish()
    }

    pub fn from_bytes(data: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader::new(data, path);
        r.expect_magic(PAIRS_MAGIC)?;
        r.expect_version(PAIRS_VERSION)?;
        let n_s = r.u32()? as usize;
        let tag = r.u8()?;
        let producer = Producer::from_tag(tag).ok_or_else(|| r.err(format!("unknown producer tag {tag}")))?;
        let count = r.u64()? as usize;
        let n_t = r.u32()? as usize;
        let n_c = r.u32()? as usize;
        let l = 2 * n_t * n_c;
        if l == 0 || n_s == 0 {
            return Err(r.err("zero-sized pair layout"));
        }
        let mut csi = Vec::with_capacity(count.min(1 << 20) * l);
        let mut codewords = Vec::with_capacity(count.min(1 << 20) * n_s);
        for _ in 0..count {
            csi.extend(r.f64s(l)?);
            codewords.extend(r.f64s(n_s)?);
        }
        r.finish()?;
        Self::new(n_t, n_c, n_s, producer, csi, codewords)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?, path)
    }
}

/// Codewords of `encoder` for every sample, in eval mode.
pub fn generate_codeword_pairs(encoder: &Model, samples: &[CsiSample], producer: Producer) -> Result<CodewordPairDataset> {
    let spec = encoder.spec();
    if spec.role != Role::Encoder {
        return Err(Error::InvalidConfig(format!("{} is not an encoder", spec.name)));
    }
    let (n_t, n_c) = (spec.input_shape[1], spec.input_shape[2]);
    let mut csi = Vec::with_capacity(samples.len() * 2 * n_t * n_c);
    for s in samples {
        if s.shape() != [2, n_t, n_c] {
            return Err(Error::ShapeMismatch(format!(
                "sample shape {:?} does not fit encoder input {:?}",
                s.shape(),
                spec.input_shape
            )));
        }
        csi.extend_from_slice(&s.values);
    }
    pairs_from_flat(encoder, csi, producer)
}

/// Codewords of `encoder` for a flat batch of normalized CSI.
pub fn pairs_from_flat(encoder: &Model, csi: Vec<f64>, producer: Producer) -> Result<CodewordPairDataset> {
    let spec = encoder.spec();
    let (n_t, n_c) = (spec.input_shape[1], spec.input_shape[2]);
    let codewords = encode(encoder, &csi)?;
    CodewordPairDataset::new(n_t, n_c, spec.output_len(), producer, csi, codewords)
}

/// Train and validation pair files exchanged in one protocol step.
#[derive(Debug, Clone, PartialEq)]
pub struct PairExchange {
    pub train: CodewordPairDataset,
    pub val: CodewordPairDataset,
}

impl PairExchange {
    pub fn paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
        (dir.join(format!("{stem}.train.csip")), dir.join(format!("{stem}.val.csip")))
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (t, v) = Self::paths(dir, stem);
        self.train.save(&t)?;
        self.val.save(&v)
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let (t, v) = Self::paths(dir, stem);
        let train = CodewordPairDataset::load(&t)?;
        let val = CodewordPairDataset::load(&v)?;
        if (train.n_t, train.n_c, train.n_s, train.producer) != (val.n_t, val.n_c, val.n_s, val.producer) {
            return Err(Error::format(&v, "validation pairs disagree with training pairs"));
        }
        Ok(Self { train, val })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Domain;
    use crate::models::build_student_encoder;

    fn samples(n: usize) -> Vec<CsiSample> {
        (0..n)
            .map(|i| {
                let mut s = CsiSample::zeros(4, 4, Domain::AngularDelay);
                for (k, v) in s.values.iter_mut().enumerate() {
                    *v = ((i * 31 + k * 7) % 19) as f64 / 19.0;
                }
                s.normalized = true;
                s
            })
            .collect()
    }

    #[test]
    fn pairs_reencode_bitwise_and_round_trip() {
        let enc = Model::new(build_student_encoder(4, 4, 4).unwrap(), 3).unwrap();
        let data = samples(7);
        let pairs = generate_codeword_pairs(&enc, &data, Producer::StudentEncoder).unwrap();
        assert_eq!(pairs.len(), 7);
        for i in 0..7 {
            let again = encode(&enc, pairs.csi_row(i)).unwrap();
            assert_eq!(again.as_slice(), pairs.codeword(i));
        }
        let bytes = pairs.to_bytes();
        let p = Path::new("mem.csip");
        let back = CodewordPairDataset::from_bytes(&bytes, p).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back, pairs);
        assert!(CodewordPairDataset::from_bytes(&bytes[..bytes.len() - 8], p).is_err());
        let mut bad = bytes.clone();
        bad[12] = 9;
        assert!(CodewordPairDataset::from_bytes(&bad, p).is_err());
    }

    #[test]
    fn exchange_round_trips_on_disk() {
        let enc = Model::new(build_student_encoder(4, 4, 4).unwrap(), 3).unwrap();
        let d = samples(5);
        let ex = PairExchange {
            train: generate_codeword_pairs(&enc, &d[..3], Producer::TeacherEncoder).unwrap(),
            val: generate_codeword_pairs(&enc, &d[3..], Producer::TeacherEncoder).unwrap(),
        };
        let dir = tempfile::tempdir().unwrap();
        ex.save(dir.path(), "teacher").unwrap();
        assert_eq!(PairExchange::load(dir.path(), "teacher").unwrap(), ex);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        assert!(CodewordPairDataset::new(4, 4, 4, Producer::StudentEncoder, vec![0.0; 32], vec![0.0; 3]).is_err());
    }
}
