//! The FSDS encoded-dataset file: a little-endian binary holding the
//! 130-dim f32 vectors and their byte labels, plus a JSON sidecar
//! (`<file>.meta.json`) that ties the dataset to its schema hash.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encode::{EncodedSample, ENCODED_DIM};
use crate::error::{Error, Result};
use crate::packet::Label;

const MAGIC: &[u8; 4] = b"FSDS";
const VERSION: u16 = 1;

/// In-memory encoded dataset: one flat f32 buffer (`len = samples * 130`)
/// plus one label byte per sample (0 normal, 1 anomalous).
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub data: Vec<f32>,
    pub labels: Vec<u8>,
    pub schema_hash: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetMeta {
    schema_hash: String,
    samples: u32,
    normal: u32,
    anomalous: u32,
}

impl EncodedDataset {
    pub fn new(schema_hash: Option<String>) -> EncodedDataset {
        EncodedDataset {
            data: Vec::new(),
            labels: Vec::new(),
            schema_hash,
        }
    }

    pub fn from_samples(samples: &[EncodedSample], schema_hash: String) -> EncodedDataset {
        let mut ds = EncodedDataset::new(Some(schema_hash));
        for s in samples {
            ds.push(&s.vec, s.label);
        }
        ds
    }

    pub fn push(&mut self, vec: &[f32], label: Label) {
        assert_eq!(vec.len(), ENCODED_DIM, "sample must have {ENCODED_DIM} dims");
        self.data.extend_from_slice(vec);
        self.labels.push(match label {
            Label::Normal => 0,
            Label::Anomalous => 1,
        });
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn vector(&self, idx: usize) -> &[f32] {
        &self.data[idx * ENCODED_DIM..(idx + 1) * ENCODED_DIM]
    }

    pub fn label(&self, idx: usize) -> u8 {
        self.labels[idx]
    }

    pub fn counts(&self) -> (usize, usize) {
        let anomalous = self.labels.iter().filter(|&&l| l == 1).count();
        (self.labels.len() - anomalous, anomalous)
    }

    /// Subset by index list, keeping the given order.
    pub fn select(&self, indices: &[usize]) -> EncodedDataset {
        let mut out = EncodedDataset::new(self.schema_hash.clone());
        for &i in indices {
            out.data.extend_from_slice(self.vector(i));
            out.labels.push(self.labels[i]);
        }
        out
    }
}

fn meta_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".meta.json");
    PathBuf::from(os)
}

pub fn write_dataset(path: &Path, ds: &EncodedDataset) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::Dataset("refusing to write an empty dataset".into()));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let write = |w: &mut dyn Write, bytes: &[u8]| -> Result<()> {
        w.write_all(bytes).map_err(|e| Error::io(path, e))
    };
    write(&mut w, MAGIC)?;
    write(&mut w, &VERSION.to_le_bytes())?;
    write(&mut w, &(ds.len() as u32).to_le_bytes())?;
    write(&mut w, &(ENCODED_DIM as u16).to_le_bytes())?;
    for i in 0..ds.len() {
        for v in ds.vector(i) {
            write(&mut w, &v.to_le_bytes())?;
        }
        write(&mut w, &[ds.labels[i]])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    if let Some(hash) = &ds.schema_hash {
        let (normal, anomalous) = ds.counts();
        let meta = DatasetMeta {
            schema_hash: hash.clone(),
            samples: ds.len() as u32,
            normal: normal as u32,
            anomalous: anomalous as u32,
        };
        let mp = meta_path(path);
        std::fs::write(&mp, serde_json::to_string_pretty(&meta).expect("meta serializes"))
            .map_err(|e| Error::io(&mp, e))?;
    }
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<EncodedDataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 {
        return Err(Error::Dataset(format!(
            "{}: too short for an FSDS header ({} bytes)",
            path.display(),
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Dataset(format!("{}: bad magic, not an FSDS file", path.display())));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Dataset(format!(
            "{}: unsupported FSDS version {version}",
            path.display()
        )));
    }
    let count = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
    let vec_len = u16::from_le_bytes([bytes[10], bytes[11]]) as usize;
    if vec_len != ENCODED_DIM {
        return Err(Error::Dataset(format!(
            "{}: vector length {vec_len}, expected {ENCODED_DIM}",
            path.display()
        )));
    }
    let expected = 12 + count * (ENCODED_DIM * 4 + 1);
    if bytes.len() != expected {
        return Err(Error::Dataset(format!(
            "{}: payload length mismatch: expected {expected} bytes, found {}",
            path.display(),
            bytes.len()
        )));
    }

    let mut ds = EncodedDataset::new(None);
    ds.data.reserve(count * ENCODED_DIM);
    let mut cursor = &bytes[12..];
    let mut buf4 = [0u8; 4];
    for _ in 0..count {
        for _ in 0..ENCODED_DIM {
            cursor.read_exact(&mut buf4).expect("length checked");
            ds.data.push(f32::from_le_bytes(buf4));
        }
        let mut lb = [0u8; 1];
        cursor.read_exact(&mut lb).expect("length checked");
        if lb[0] > 1 {
            return Err(Error::Dataset(format!(
                "{}: label byte {} is neither 0 nor 1",
                path.display(),
                lb[0]
            )));
        }
        ds.labels.push(lb[0]);
    }

    let mp = meta_path(path);
    if mp.exists() {
        let text = std::fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
        let meta: DatasetMeta =
            serde_json::from_str(&text).map_err(|e| Error::parse(&mp, e.to_string()))?;
        ds.schema_hash = Some(meta.schema_hash);
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_ds() -> EncodedDataset {
        let mut ds = EncodedDataset::new(Some("ab".repeat(32)));
        let mut v = vec![0.25f32; ENCODED_DIM];
        ds.push(&v, Label::Normal);
        v[3] = 0.9;
        ds.push(&v, Label::Anomalous);
        ds
    }

    #[test]
    fn roundtrip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.fsds");
        let ds = sample_ds();
        write_dataset(&path, &ds).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back, ds);

        // rewriting produces byte-identical files
        let first = std::fs::read(&path).unwrap();
        write_dataset(&path, &back).unwrap();
        let second = std::fs::read(&path).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn truncated_file_rejected_with_lengths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.fsds");
        write_dataset(&path, &sample_ds()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        std::fs::write(&path, bytes).unwrap();
        let err = read_dataset(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("expected") && msg.contains("found"), "{msg}");
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.fsds");
        std::fs::write(&path, b"NOPE00000000000000").unwrap();
        assert!(read_dataset(&path).unwrap_err().to_string().contains("magic"));
    }

    #[test]
    fn empty_dataset_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.fsds");
        assert!(write_dataset(&path, &EncodedDataset::new(None)).is_err());
    }
}
