//! Self-describing model files: a spec JSON next to a `CSIK` checkpoint,
//! enough for another process to rebuild the network without any config.

use std::path::{Path, PathBuf};

use super::checkpoint::{Checkpoint, CheckpointMeta};
use super::network::{Autoencoder, Model};
use super::spec::ModelSpec;
use crate::binio::{read_file, write_file};
use crate::error::Result;

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn checkpoint_path(stem: &Path) -> PathBuf {
    with_suffix(stem, ".ckpt")
}

fn read_spec(path: &Path) -> Result<ModelSpec> {
    let text = String::from_utf8_lossy(&read_file(path)?).into_owned();
    ModelSpec::from_json(&text)
}

/// Writes `<stem>.spec.json` and `<stem>.ckpt`.
pub fn save_model(model: &Model, meta: CheckpointMeta, stem: &Path) -> Result<()> {
    write_file(&with_suffix(stem, ".spec.json"), model.spec().to_json().as_bytes())?;
    model.to_checkpoint(meta).save(&checkpoint_path(stem))
}

pub fn load_model(stem: &Path) -> Result<Model> {
    let spec = read_spec(&with_suffix(stem, ".spec.json"))?;
    Model::from_checkpoint(spec, &Checkpoint::load(&checkpoint_path(stem))?)
}

/// Writes `<stem>.encoder.json`, `<stem>.decoder.json` and `<stem>.ckpt`.
pub fn save_autoencoder(ae: &Autoencoder, meta: CheckpointMeta, stem: &Path) -> Result<()> {
    write_file(&with_suffix(stem, ".encoder.json"), ae.encoder.spec().to_json().as_bytes())?;
    write_file(&with_suffix(stem, ".decoder.json"), ae.decoder.spec().to_json().as_bytes())?;
    ae.to_checkpoint(meta).save(&checkpoint_path(stem))
}

pub fn load_autoencoder(stem: &Path) -> Result<Autoencoder> {
    let enc = read_spec(&with_suffix(stem, ".encoder.json"))?;
    let dec = read_spec(&with_suffix(stem, ".decoder.json"))?;
    Autoencoder::from_checkpoint(enc, dec, &Checkpoint::load(&checkpoint_path(stem))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_decoder, build_student_encoder};

    #[test]
    fn bundles_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let meta = CheckpointMeta {
            epoch: 3,
            val_loss: 0.5,
            seed: 9,
        };
        let enc = Model::new(build_student_encoder(8, 8, 8).unwrap(), 1).unwrap();
        let dec = Model::new(build_decoder(8, 8, 8, 4).unwrap(), 2).unwrap();
        let stem = dir.path().join("enc");
        save_model(&enc, meta, &stem).unwrap();
        assert_eq!(load_model(&stem).unwrap(), enc);

        let ae = Autoencoder::combine(enc, dec).unwrap();
        let stem = dir.path().join("ae");
        save_autoencoder(&ae, meta, &stem).unwrap();
        let back = load_autoencoder(&stem).unwrap();
        assert_eq!(back.encoder, ae.encoder);
        assert_eq!(back.decoder, ae.decoder);

        // a model bundle is not an autoencoder bundle
        assert!(load_autoencoder(&dir.path().join("enc")).is_err());
    }
}
