//! Feature encoding: min-max normalization of the 36 numeric attributes,
//! one-hot maps for the 3 symbolic attributes, the resulting 130-dim vector,
//! and its 12x12 grayscale image form.

pub mod dataset;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flow::features::{FeatureVector39, NUMERIC_COUNT, NUMERIC_NAMES};
use crate::flow::service::SERVICE_TOKENS;
use crate::flow::StateFlag;
use crate::packet::Label;

/// Encoded vector length: 36 numeric + 4 protocol + 79 service + 11 flag.
pub const ENCODED_DIM: usize = 130;
/// Grayscale image side; 144 is the smallest square holding 130 values.
pub const IMAGE_SIDE: usize = 12;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

pub const SCHEMA_VERSION: u32 = 1;

/// The versioned encoding schema. Token order is part of the schema:
/// reordering changes every encoded dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSchema {
    pub version: u32,
    pub numeric: Vec<String>,
    pub protocol: Vec<String>,
    pub service: Vec<String>,
    pub flag: Vec<String>,
}

impl FeatureSchema {
    /// The schema this toolkit ships with.
    pub fn bundled() -> FeatureSchema {
        FeatureSchema {
            version: SCHEMA_VERSION,
            numeric: NUMERIC_NAMES.iter().map(|s| s.to_string()).collect(),
            protocol: vec!["tcp".into(), "udp".into(), "icmp".into(), "other".into()],
            service: SERVICE_TOKENS.iter().map(|s| s.to_string()).collect(),
            flag: StateFlag::ALL.iter().map(|f| f.token().to_string()).collect(),
        }
    }

    pub fn total_dims(&self) -> usize {
        self.numeric.len() + self.protocol.len() + self.service.len() + self.flag.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unknown schema version {} (expected {SCHEMA_VERSION})",
                self.version
            )));
        }
        if self.numeric.len() != NUMERIC_COUNT {
            return Err(Error::Schema(format!(
                "expected {NUMERIC_COUNT} numeric features, found {}",
                self.numeric.len()
            )));
        }
        let total = self.total_dims();
        if total != ENCODED_DIM {
            return Err(Error::Schema(format!(
                "vocabulary sizes {}+{}+{}+{} total {total}, expected {ENCODED_DIM}",
                self.numeric.len(),
                self.protocol.len(),
                self.service.len(),
                self.flag.len()
            )));
        }
        for (kind, list) in [
            ("numeric", &self.numeric),
            ("protocol", &self.protocol),
            ("service", &self.service),
            ("flag", &self.flag),
        ] {
            let mut seen = std::collections::HashSet::new();
            for tok in list {
                if !seen.insert(tok.as_str()) {
                    return Err(Error::Schema(format!("duplicate {kind} token `{tok}`")));
                }
            }
        }
        for (kind, list, other) in [
            ("protocol", &self.protocol, "other"),
            ("service", &self.service, "other"),
            ("flag", &self.flag, "oth"),
        ] {
            if !list.iter().any(|t| t == other) {
                return Err(Error::Schema(format!(
                    "{kind} vocabulary lacks its designated `{other}` token"
                )));
            }
        }
        Ok(())
    }

    /// Stable content hash (64 hex chars) used to tie datasets, calibration,
    /// and checkpoints to one schema.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.version.to_le_bytes());
        for list in [&self.numeric, &self.protocol, &self.service, &self.flag] {
            hasher.update((list.len() as u32).to_le_bytes());
            for tok in list {
                hasher.update(tok.as_bytes());
                hasher.update([0u8]);
            }
        }
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn load_schema(path: &Path) -> Result<FeatureSchema> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let schema: FeatureSchema =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    schema.validate()?;
    Ok(schema)
}

pub fn save_schema(path: &Path, schema: &FeatureSchema) -> Result<()> {
    schema.validate()?;
    let text = serde_json::to_string_pretty(schema).expect("schema serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Per-numeric-feature min/max bounds fitted on training data only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub schema_hash: String,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Calibration {
    pub fn load(path: &Path) -> Result<Calibration> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let calib: Calibration =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        if calib.min.len() != NUMERIC_COUNT || calib.max.len() != NUMERIC_COUNT {
            return Err(Error::parse(path, "calibration must cover 36 numeric features"));
        }
        Ok(calib)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("calibration serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Fits min/max bounds over the training vectors. A constant feature gets
/// max = min + 1 so it encodes to 0 instead of dividing by zero.
pub fn fit_normalizer(vectors: &[FeatureVector39], schema: &FeatureSchema) -> Result<Calibration> {
    if vectors.is_empty() {
        return Err(Error::Encode("cannot fit calibration on an empty set".into()));
    }
    let mut min = vec![f64::INFINITY; NUMERIC_COUNT];
    let mut max = vec![f64::NEG_INFINITY; NUMERIC_COUNT];
    for fv in vectors {
        for (i, &v) in fv.numeric.iter().enumerate() {
            min[i] = min[i].min(v);
            max[i] = max[i].max(v);
        }
    }
    for i in 0..NUMERIC_COUNT {
        if max[i] <= min[i] {
            max[i] = min[i] + 1.0;
        }
    }
    Ok(Calibration {
        schema_hash: schema.digest(),
        min,
        max,
    })
}

/// Counters for out-of-vocabulary symbolic tokens mapped to the designated
/// `other` slot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EncodeWarnings {
    pub unknown_protocol: usize,
    pub unknown_service: usize,
    pub unknown_flag: usize,
}

impl EncodeWarnings {
    pub fn total(&self) -> usize {
        self.unknown_protocol + self.unknown_service + self.unknown_flag
    }
}

fn one_hot(
    block: &mut [f32],
    vocab: &[String],
    token: &str,
    fallback: &str,
    miss_counter: &mut usize,
) {
    let idx = match vocab.iter().position(|t| t == token) {
        Some(idx) => idx,
        None => {
            *miss_counter += 1;
            vocab
                .iter()
                .position(|t| t == fallback)
                .expect("validated schema carries its designated other token")
        }
    };
    block[idx] = 1.0;
}

/// Encodes one feature vector to the 130-dim layout:
/// normalized numerics, then one-hot protocol, service, and state flag.
pub fn encode_vector(
    fv: &FeatureVector39,
    schema: &FeatureSchema,
    calib: &Calibration,
    warnings: &mut EncodeWarnings,
) -> Vec<f32> {
    let mut out = vec![0.0f32; ENCODED_DIM];
    for i in 0..NUMERIC_COUNT {
        let span = calib.max[i] - calib.min[i];
        let norm = ((fv.numeric[i] - calib.min[i]) / span).clamp(0.0, 1.0);
        out[i] = norm as f32;
    }
    let mut offset = NUMERIC_COUNT;
    one_hot(
        &mut out[offset..offset + schema.protocol.len()],
        &schema.protocol,
        &fv.protocol,
        "other",
        &mut warnings.unknown_protocol,
    );
    offset += schema.protocol.len();
    one_hot(
        &mut out[offset..offset + schema.service.len()],
        &schema.service,
        &fv.service,
        "other",
        &mut warnings.unknown_service,
    );
    offset += schema.service.len();
    one_hot(
        &mut out[offset..offset + schema.flag.len()],
        &schema.flag,
        &fv.state_flag,
        "oth",
        &mut warnings.unknown_flag,
    );
    out
}

/// Zero-pads a 130-dim vector to 144 values and reshapes it row-major into
/// a 12x12 grid.
pub fn to_image(vec: &[f32]) -> Result<Vec<f32>> {
    if vec.len() != ENCODED_DIM {
        return Err(Error::Shape(format!(
            "to_image expects {ENCODED_DIM} values, got {}",
            vec.len()
        )));
    }
    let mut image = vec![0.0f32; IMAGE_PIXELS];
    image[..ENCODED_DIM].copy_from_slice(vec);
    Ok(image)
}

/// Inverse of [`to_image`]: flatten row-major and truncate the padding.
pub fn from_image(image: &[f32]) -> Result<Vec<f32>> {
    if image.len() != IMAGE_PIXELS {
        return Err(Error::Shape(format!(
            "from_image expects {IMAGE_PIXELS} values, got {}",
            image.len()
        )));
    }
    Ok(image[..ENCODED_DIM].to_vec())
}

/// One encoded sample: the 130-dim vector, its image form, and the label.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSample {
    pub vec: Vec<f32>,
    pub image: Vec<f32>,
    pub label: Label,
}

impl EncodedSample {
    pub fn from_features(
        fv: &FeatureVector39,
        schema: &FeatureSchema,
        calib: &Calibration,
        warnings: &mut EncodeWarnings,
    ) -> EncodedSample {
        let vec = encode_vector(fv, schema, calib, warnings);
        let image = to_image(&vec).expect("encode_vector emits 130 dims");
        EncodedSample {
            vec,
            image,
            label: fv.label,
        }
    }
}

/// 8-bit PNG export of one encoded sample, for eyeballing only; training
/// always reads the f32 values.
pub fn export_png(vec: &[f32], path: &Path) -> Result<()> {
    let image = to_image(vec)?;
    let pixels: Vec<u8> = image
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img = image::GrayImage::from_raw(IMAGE_SIDE as u32, IMAGE_SIDE as u32, pixels)
        .expect("pixel buffer matches dimensions");
    img.save(path)
        .map_err(|e| Error::parse(path, format!("png export failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_vector() -> FeatureVector39 {
        let mut numeric = [0.0; NUMERIC_COUNT];
        numeric[0] = 5.0;
        FeatureVector39 {
            numeric,
            protocol: "tcp".into(),
            service: "http".into(),
            state_flag: "sf".into(),
            label: Label::Normal,
        }
    }

    fn flat_calib(schema: &FeatureSchema, min: f64, max: f64) -> Calibration {
        Calibration {
            schema_hash: schema.digest(),
            min: vec![min; NUMERIC_COUNT],
            max: vec![max; NUMERIC_COUNT],
        }
    }

    #[test]
    fn bundled_schema_is_130_dims() {
        let schema = FeatureSchema::bundled();
        schema.validate().unwrap();
        assert_eq!(schema.total_dims(), ENCODED_DIM);
        assert_eq!(schema.digest().len(), 64);
    }

    #[test]
    fn short_service_list_rejected() {
        let mut schema = FeatureSchema::bundled();
        schema.service.pop();
        let err = schema.validate().unwrap_err();
        assert!(err.to_string().contains("129"), "{err}");
    }

    #[test]
    fn duplicate_token_rejected() {
        let mut schema = FeatureSchema::bundled();
        schema.service[0] = "http".into();
        assert!(schema.validate().is_err());
    }

    #[test]
    fn unknown_version_rejected() {
        let mut schema = FeatureSchema::bundled();
        schema.version = 99;
        assert!(schema.validate().is_err());
    }

    #[test]
    fn single_vector_calibration_normalizes_to_zero() {
        let schema = FeatureSchema::bundled();
        let fv = test_vector();
        let calib = fit_normalizer(&[fv.clone()], &schema).unwrap();
        let mut warnings = EncodeWarnings::default();
        let enc = encode_vector(&fv, &schema, &calib, &mut warnings);
        assert!(enc[..NUMERIC_COUNT].iter().all(|&v| v == 0.0));
        assert_eq!(warnings.total(), 0);
    }

    #[test]
    fn min_max_fit() {
        let schema = FeatureSchema::bundled();
        let mut a = test_vector();
        let mut b = test_vector();
        a.numeric[0] = 0.0;
        b.numeric[0] = 10.0;
        let calib = fit_normalizer(&[a, b], &schema).unwrap();
        assert_eq!(calib.min[0], 0.0);
        assert_eq!(calib.max[0], 10.0);
    }

    #[test]
    fn empty_fit_is_error() {
        assert!(fit_normalizer(&[], &FeatureSchema::bundled()).is_err());
    }

    #[test]
    fn midpoint_and_clamp() {
        let schema = FeatureSchema::bundled();
        let calib = flat_calib(&schema, 0.0, 10.0);
        let mut warnings = EncodeWarnings::default();

        let mut fv = test_vector();
        fv.numeric[0] = 5.0;
        let enc = encode_vector(&fv, &schema, &calib, &mut warnings);
        assert_eq!(enc[0], 0.5);

        fv.numeric[0] = 15.0;
        let enc = encode_vector(&fv, &schema, &calib, &mut warnings);
        assert_eq!(enc[0], 1.0);

        fv.numeric[0] = -3.0;
        let enc = encode_vector(&fv, &schema, &calib, &mut warnings);
        assert_eq!(enc[0], 0.0);
    }

    #[test]
    fn tcp_one_hot_block() {
        let schema = FeatureSchema::bundled();
        let calib = flat_calib(&schema, 0.0, 1.0);
        let mut warnings = EncodeWarnings::default();
        let enc = encode_vector(&test_vector(), &schema, &calib, &mut warnings);
        assert_eq!(&enc[NUMERIC_COUNT..NUMERIC_COUNT + 4], &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(enc.len(), ENCODED_DIM);
    }

    #[test]
    fn every_symbolic_block_has_exactly_one_hot() {
        let schema = FeatureSchema::bundled();
        let calib = flat_calib(&schema, 0.0, 1.0);
        let mut warnings = EncodeWarnings::default();
        let enc = encode_vector(&test_vector(), &schema, &calib, &mut warnings);
        let proto: f32 = enc[36..40].iter().sum();
        let service: f32 = enc[40..119].iter().sum();
        let flag: f32 = enc[119..130].iter().sum();
        assert_eq!((proto, service, flag), (1.0, 1.0, 1.0));
    }

    #[test]
    fn unknown_token_maps_to_other_with_warning() {
        let schema = FeatureSchema::bundled();
        let calib = flat_calib(&schema, 0.0, 1.0);
        let mut warnings = EncodeWarnings::default();
        let mut fv = test_vector();
        fv.service = "notaservice".into();
        let enc = encode_vector(&fv, &schema, &calib, &mut warnings);
        assert_eq!(warnings.unknown_service, 1);
        let other_idx = schema.service.iter().position(|t| t == "other").unwrap();
        assert_eq!(enc[NUMERIC_COUNT + 4 + other_idx], 1.0);
    }

    #[test]
    fn image_layout() {
        let zeros = vec![0.0f32; ENCODED_DIM];
        let img = to_image(&zeros).unwrap();
        assert!(img.iter().all(|&v| v == 0.0));

        let mut v = vec![0.0f32; ENCODED_DIM];
        v[0] = 1.0;
        let img = to_image(&v).unwrap();
        assert_eq!(img[0], 1.0);
        assert!(img[ENCODED_DIM..].iter().all(|&p| p == 0.0));

        assert!(to_image(&vec![0.0; 129]).is_err());
    }

    #[test]
    fn image_roundtrip_inverts_encoding() {
        let schema = FeatureSchema::bundled();
        let calib = flat_calib(&schema, 0.0, 10.0);
        let mut warnings = EncodeWarnings::default();
        let mut fv = test_vector();
        fv.numeric[7] = 3.7;
        let enc = encode_vector(&fv, &schema, &calib, &mut warnings);
        let back = from_image(&to_image(&enc).unwrap()).unwrap();
        assert_eq!(back, enc);
    }

    #[test]
    fn schema_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("schema.json");
        let schema = FeatureSchema::bundled();
        save_schema(&path, &schema).unwrap();
        let back = load_schema(&path).unwrap();
        assert_eq!(back, schema);
        assert_eq!(back.digest(), schema.digest());
    }
}
