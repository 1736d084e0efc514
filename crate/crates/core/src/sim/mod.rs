//! Synthetic corpus generation: normal AGC telemetry and internet-style
//! background traffic plus injected attacks, written as JSONL packet logs
//! with a manifest tying everything to one seed and config hash.

pub mod agc;
pub mod attack;
pub mod internet;
pub mod telemetry;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::packet::{write_jsonl, AttackKind, Label, PacketRecord};
use agc::AgcConfig;
use attack::{inject_attack, AttackSpec};
use internet::InternetProfile;
use telemetry::NetProfile;

/// Derives a stage seed from the run seed and a stage name (first eight
/// bytes of sha256), so one top-level seed pins the whole pipeline.
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(stage.as_bytes());
    let out = hasher.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("sha256 is long enough"))
}

/// A batch of same-kind attack windows to scatter over a log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackPlanEntry {
    pub kind: AttackKind,
    pub windows: u32,
    pub intensity: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    pub horizon: f64,
    pub profile: InternetProfile,
    pub attacks: Vec<AttackPlanEntry>,
}

impl Default for SourceConfig {
    fn default() -> SourceConfig {
        SourceConfig {
            horizon: 600.0,
            profile: InternetProfile::default(),
            attacks: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetConfig {
    pub horizon: f64,
    pub sim_dt: f64,
    pub agc: AgcConfig,
    pub net: NetProfile,
    pub attacks: Vec<AttackPlanEntry>,
}

impl Default for TargetConfig {
    fn default() -> TargetConfig {
        TargetConfig {
            horizon: 600.0,
            sim_dt: 0.01,
            agc: AgcConfig::default(),
            net: NetProfile::default(),
            attacks: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub seed: u64,
    pub source: SourceConfig,
    pub target: TargetConfig,
}

impl Default for DatasetConfig {
    fn default() -> DatasetConfig {
        DatasetConfig {
            seed: 1,
            source: SourceConfig::default(),
            target: TargetConfig::default(),
        }
    }
}

impl DatasetConfig {
    /// Content hash of the fully resolved config (64 hex chars).
    pub fn config_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let out = Sha256::digest(&bytes);
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub normal: u64,
    pub anomalous: u64,
    pub per_attack_kind: BTreeMap<String, u64>,
}

impl LabelCounts {
    pub fn tally(packets: &[PacketRecord]) -> LabelCounts {
        let mut counts = LabelCounts {
            normal: 0,
            anomalous: 0,
            per_attack_kind: BTreeMap::new(),
        };
        for kind in [
            AttackKind::DosFlood,
            AttackKind::Fdia,
            AttackKind::Scan,
            AttackKind::SpoofMitm,
        ] {
            counts.per_attack_kind.insert(kind.token().to_string(), 0);
        }
        for pkt in packets {
            match pkt.label {
                Label::Normal => counts.normal += 1,
                Label::Anomalous => {
                    counts.anomalous += 1;
                    *counts
                        .per_attack_kind
                        .entry(pkt.attack_kind.token().to_string())
                        .or_default() += 1;
                }
            }
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub counts: LabelCounts,
    pub config_hash: String,
    pub schema_version: u32,
}

/// Paths produced by [`build_dataset`].
#[derive(Debug, Clone)]
pub struct DatasetPaths {
    pub source_log: PathBuf,
    pub target_log: PathBuf,
    pub manifest: PathBuf,
}

/// Expands attack plans into concrete windows, one per equally sized bin so
/// windows never overlap; the seed jitters each window within its bin.
fn plan_windows(
    attacks: &[AttackPlanEntry],
    horizon: f64,
    seed: u64,
) -> Result<Vec<AttackSpec>> {
    use rand::Rng;
    use rand::SeedableRng;

    let margin = (horizon * 0.02).min(5.0);
    let usable = horizon - 2.0 * margin;
    let total_windows: u32 = attacks.iter().map(|a| a.windows).sum();
    if total_windows == 0 {
        return Ok(Vec::new());
    }
    let total_duration: f64 = attacks
        .iter()
        .map(|a| a.windows as f64 * a.duration)
        .sum();
    if total_duration > usable {
        return Err(Error::InvalidConfig(format!(
            "attack windows need {total_duration:.1} s but only {usable:.1} s are usable"
        )));
    }

    // round-robin over kinds so windows of one kind spread across the log
    let mut queue: Vec<(AttackKind, f64, f64)> = Vec::new();
    let mut remaining: Vec<(usize, u32)> = attacks
        .iter()
        .enumerate()
        .map(|(i, a)| (i, a.windows))
        .collect();
    while remaining.iter().any(|(_, n)| *n > 0) {
        for (idx, left) in remaining.iter_mut() {
            if *left > 0 {
                let a = &attacks[*idx];
                queue.push((a.kind, a.intensity, a.duration));
                *left -= 1;
            }
        }
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let bin = usable / total_windows as f64;
    let mut specs = Vec::new();
    for (i, (kind, intensity, duration)) in queue.into_iter().enumerate() {
        let bin_start = margin + i as f64 * bin;
        let slack = (bin - duration).max(0.0);
        let start = bin_start + rng.gen_range(0.0..=1.0) * slack * 0.9;
        let end = (start + duration).min(bin_start + bin);
        specs.push(AttackSpec::new(kind, start, end, intensity, None)?);
    }
    Ok(specs)
}

/// Applies a sequence of attack windows to a log, each with its own derived
/// seed. Returns the final log; windows that miss the log are skipped.
pub fn apply_attacks(
    mut packets: Vec<PacketRecord>,
    specs: &[AttackSpec],
    seed: u64,
) -> Result<Vec<PacketRecord>> {
    for (i, spec) in specs.iter().enumerate() {
        let window_seed = derive_seed(seed, &format!("attack-{i}-{}", spec.kind.token()));
        let injection = inject_attack(&packets, spec, window_seed)?;
        packets = injection.packets;
    }
    Ok(packets)
}

/// Generates the source and target packet logs in memory.
pub fn generate_logs(config: &DatasetConfig) -> Result<(Vec<PacketRecord>, Vec<PacketRecord>)> {
    // target domain: AGC telemetry
    let states = agc::simulate_agc(
        &config.target.agc,
        config.target.horizon,
        config.target.sim_dt,
        derive_seed(config.seed, "target-agc"),
    )?;
    let telemetry = telemetry::emit_telemetry(
        &states,
        &config.target.net,
        derive_seed(config.seed, "target-telemetry"),
    )?;
    let target_specs = plan_windows(
        &config.target.attacks,
        config.target.horizon,
        derive_seed(config.seed, "target-windows"),
    )?;
    let target_log = apply_attacks(telemetry, &target_specs, derive_seed(config.seed, "target"))?;

    // source domain: internet-style traffic
    let background = internet::generate_internet(
        &config.source.profile,
        config.source.horizon,
        derive_seed(config.seed, "source-traffic"),
    )?;
    let source_specs = plan_windows(
        &config.source.attacks,
        config.source.horizon,
        derive_seed(config.seed, "source-windows"),
    )?;
    let source_log = apply_attacks(background, &source_specs, derive_seed(config.seed, "source"))?;

    if source_log.is_empty() || target_log.is_empty() {
        return Err(Error::Dataset("generated an empty packet log".into()));
    }
    Ok((source_log, target_log))
}

/// Generates the source and target logs plus the manifest. Rerunning with
/// the same config writes byte-identical files.
pub fn build_dataset(config: &DatasetConfig, out_dir: &Path) -> Result<DatasetPaths> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (source_log, target_log) = generate_logs(config)?;

    let mut combined = LabelCounts::tally(&source_log);
    let target_counts = LabelCounts::tally(&target_log);
    combined.normal += target_counts.normal;
    combined.anomalous += target_counts.anomalous;
    for (kind, n) in target_counts.per_attack_kind {
        *combined.per_attack_kind.entry(kind).or_default() += n;
    }

    let paths = DatasetPaths {
        source_log: out_dir.join("source.jsonl"),
        target_log: out_dir.join("target.jsonl"),
        manifest: out_dir.join("manifest.json"),
    };
    write_jsonl(&paths.source_log, &source_log)?;
    write_jsonl(&paths.target_log, &target_log)?;

    let manifest = DatasetManifest {
        seed: config.seed,
        counts: combined,
        config_hash: config.config_hash(),
        schema_version: 1,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&paths.manifest, text).map_err(|e| Error::io(&paths.manifest, e))?;
    Ok(paths)
}
