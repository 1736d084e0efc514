//! FSNT checkpoint files: a JSON header describing the architecture and
//! parameter shapes, followed by the raw little-endian f32 parameters in
//! header order. Round-trips are bit-exact.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_model, Arch, Model, ModelSpec};
use crate::nn::Layer;

const MAGIC: &[u8; 4] = b"FSNT";
const VERSION: u16 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayerShape {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointHeader {
    arch: Arch,
    layers: Vec<LayerShape>,
    schema_hash: Option<String>,
    train_seed: u64,
    epochs_done: u32,
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let params = model.named_params();
    let header = CheckpointHeader {
        arch: model.arch,
        layers: params
            .iter()
            .map(|(name, value, _)| LayerShape {
                name: name.clone(),
                shape: value.shape().to_vec(),
            })
            .collect(),
        schema_hash: model.schema_hash.clone(),
        train_seed: model.train_seed,
        epochs_done: model.epochs_done,
    };
    let header_bytes = serde_json::to_vec(&header).expect("header serializes");

    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let write = |w: &mut dyn Write, bytes: &[u8]| -> Result<()> {
        w.write_all(bytes).map_err(|e| Error::io(path, e))
    };
    write(&mut w, MAGIC)?;
    write(&mut w, &VERSION.to_le_bytes())?;
    write(&mut w, &(header_bytes.len() as u32).to_le_bytes())?;
    write(&mut w, &header_bytes)?;
    for (_, value, _) in &params {
        for v in value.data() {
            write(&mut w, &v.to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 10 || &bytes[0..4] != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{}: not an FSNT checkpoint",
            path.display()
        )));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let header_len = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
    if bytes.len() < 10 + header_len {
        return Err(Error::Checkpoint(format!(
            "{}: truncated header ({} of {header_len} bytes)",
            path.display(),
            bytes.len().saturating_sub(10)
        )));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[10..10 + header_len])
        .map_err(|e| Error::Checkpoint(format!("{}: bad header: {e}", path.display())))?;

    let expected_params: u64 = header
        .layers
        .iter()
        .map(|l| l.shape.iter().product::<usize>() as u64)
        .sum();
    let expected_bytes = expected_params * 4;
    let actual_bytes = (bytes.len() - 10 - header_len) as u64;
    if actual_bytes != expected_bytes {
        return Err(Error::CheckpointTruncated {
            expected: expected_bytes,
            actual: actual_bytes,
        });
    }

    let mut model = build_model(&ModelSpec::new(header.arch, header.train_seed));
    model.schema_hash = header.schema_hash.clone();
    model.train_seed = header.train_seed;
    model.epochs_done = header.epochs_done;

    // the architecture must produce exactly the header's parameter list
    {
        let params = model.named_params();
        if params.len() != header.layers.len() {
            return Err(Error::Checkpoint(format!(
                "{}: header lists {} parameters, arch {} has {}",
                path.display(),
                header.layers.len(),
                header.arch.token(),
                params.len()
            )));
        }
        for ((name, value, _), ls) in params.iter().zip(&header.layers) {
            if *name != ls.name || value.shape() != ls.shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "{}: parameter {name} {:?} does not match header {} {:?}",
                    path.display(),
                    value.shape(),
                    ls.name,
                    ls.shape
                )));
            }
        }
    }

    let mut cursor = &bytes[10 + header_len..];
    for named in &mut model.layers {
        for p in named.layer.params_mut() {
            for v in p.value.data_mut() {
                let (chunk, rest) = cursor.split_at(4);
                *v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
                cursor = rest;
            }
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Arch, ModelSpec};

    #[test]
    fn roundtrip_is_bit_exact_and_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let path_a = dir.path().join("a.fsnt");
        let path_b = dir.path().join("b.fsnt");

        let mut model = build_model(&ModelSpec::new(Arch::Resnest, 21));
        model.schema_hash = Some("cd".repeat(32));
        model.epochs_done = 17;
        save_checkpoint(&model, &path_a).unwrap();
        let loaded = load_checkpoint(&path_a).unwrap();
        assert_eq!(loaded.epochs_done, 17);
        assert_eq!(loaded.schema_hash, model.schema_hash);
        for ((na, va, _), (nb, vb, _)) in model.named_params().iter().zip(loaded.named_params()) {
            assert_eq!(na, &nb);
            assert_eq!(va.data(), vb.data());
        }
        save_checkpoint(&loaded, &path_b).unwrap();
        assert_eq!(
            std::fs::read(&path_a).unwrap(),
            std::fs::read(&path_b).unwrap()
        );
    }

    #[test]
    fn truncated_payload_names_expected_and_actual() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.fsnt");
        let model = build_model(&ModelSpec::new(Arch::Dnn, 3));
        save_checkpoint(&model, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        std::fs::write(&path, &bytes).unwrap();
        match load_checkpoint(&path).unwrap_err() {
            Error::CheckpointTruncated { expected, actual } => {
                assert_eq!(expected, actual + 4);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn wrong_magic_and_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.fsnt");
        std::fs::write(&path, b"XXXX\x01\x00\x00\x00\x00\x00").unwrap();
        assert!(load_checkpoint(&path).is_err());

        let model = build_model(&ModelSpec::new(Arch::Dnn, 3));
        save_checkpoint(&model, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 9;
        std::fs::write(&path, &bytes).unwrap();
        assert!(load_checkpoint(&path)
            .unwrap_err()
            .to_string()
            .contains("version"));
    }
}
