//! Glue shared by the CLI and the bundled benchmark: packet log to flows,
//! flows to feature vectors, feature vectors to an encoded dataset.

use crate::encode::dataset::EncodedDataset;
use crate::encode::{Calibration, EncodeWarnings, EncodedSample, FeatureSchema};
use crate::error::Result;
use crate::flow::features::{extract_all, FeatureVector39};
use crate::flow::{assemble_flows, FlowRecord, IDLE_TIMEOUT_SECS, MAX_DURATION_SECS};
use crate::packet::PacketRecord;

/// Assembles flows with the standard timeout parameters and extracts one
/// feature vector per flow.
pub fn features_from_packets(
    packets: &[PacketRecord],
) -> Result<(Vec<FlowRecord>, Vec<FeatureVector39>)> {
    let flows = assemble_flows(packets, IDLE_TIMEOUT_SECS, MAX_DURATION_SECS)?;
    let vectors = extract_all(&flows);
    Ok((flows, vectors))
}

/// Encodes feature vectors into a dataset stamped with the schema hash.
pub fn encode_features(
    vectors: &[FeatureVector39],
    schema: &FeatureSchema,
    calib: &Calibration,
) -> (EncodedDataset, EncodeWarnings) {
    let mut warnings = EncodeWarnings::default();
    let samples: Vec<EncodedSample> = vectors
        .iter()
        .map(|fv| EncodedSample::from_features(fv, schema, calib, &mut warnings))
        .collect();
    (
        EncodedDataset::from_samples(&samples, schema.digest()),
        warnings,
    )
}
