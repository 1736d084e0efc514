//! The 39-attribute feature vector: intrinsic flow attributes (f1..f13),
//! wavelet frequency features of the byte-rate series (f14..f24), and
//! sliding-window traffic statistics (f25..f39).

use std::collections::HashSet;
use std::net::Ipv4Addr;
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::{FlowRecord, StateFlag, MIN_RATE_SPAN_SECS, STAT_WINDOW_SECS};
use crate::packet::Label;
use crate::wavelet;

/// Count of numeric features (everything except protocol, service, flag).
pub const NUMERIC_COUNT: usize = 36;
/// Total attribute count including the three symbolic features.
pub const FEATURE_COUNT: usize = 39;

/// Names of the 36 numeric features in schedule order (f1, f5..f39).
pub const NUMERIC_NAMES: [&str; NUMERIC_COUNT] = [
    "duration",
    "up_bytes",
    "down_bytes",
    "up_pkts",
    "down_pkts",
    "land",
    "urgent",
    "mean_pkt_size",
    "up_size_var",
    "down_size_var",
    "band_ratio_0",
    "band_ratio_1",
    "band_ratio_2",
    "band_ratio_3",
    "band_ratio_4",
    "band_ratio_5",
    "band_ratio_6",
    "band_ratio_7",
    "log_energy",
    "spectral_entropy",
    "high_band_ratio",
    "host_count",
    "host_srv_count",
    "host_serror_rate",
    "host_rerror_rate",
    "host_same_srv_rate",
    "host_diff_srv_rate",
    "srv_count",
    "srv_serror_rate",
    "srv_rerror_rate",
    "srv_diff_host_rate",
    "distinct_hosts",
    "distinct_host_srv_pairs",
    "same_srv_rate",
    "serror_rate",
    "rerror_rate",
];

/// One flow's 39 attributes plus its ground-truth label. Symbolic features
/// stay as plain tokens so externally produced CSVs (with out-of-vocabulary
/// tokens) survive until the encoder's designated-other handling.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector39 {
    /// f1 then f5..f39 in schedule order; see [`NUMERIC_NAMES`].
    pub numeric: [f64; NUMERIC_COUNT],
    /// f2
    pub protocol: String,
    /// f3
    pub service: String,
    /// f4
    pub state_flag: String,
    pub label: Label,
}

impl FeatureVector39 {
    pub fn is_finite(&self) -> bool {
        self.numeric.iter().all(|v| v.is_finite())
    }
}

/// Bytes-per-slot series over the flow's active span, zero-padded. The span
/// is at least [`MIN_RATE_SPAN_SECS`] so slots keep a usable width; the
/// samples always sum to the flow's total byte count.
pub fn compute_rate_series(
    events: &[(f64, u32)],
    first_ts: f64,
    last_ts: f64,
    n_slots: usize,
) -> Vec<f64> {
    let mut series = vec![0.0; n_slots];
    if events.is_empty() {
        return series;
    }
    let span = (last_ts - first_ts).max(MIN_RATE_SPAN_SECS);
    let width = span / n_slots as f64;
    for &(ts, bytes) in events {
        let idx = (((ts - first_ts) / width) as usize).min(n_slots - 1);
        series[idx] += bytes as f64;
    }
    series
}

fn population_variance(sizes: &[u32]) -> f64 {
    if sizes.len() <= 1 {
        return 0.0;
    }
    let n = sizes.len() as f64;
    let mean = sizes.iter().map(|&s| s as f64).sum::<f64>() / n;
    sizes
        .iter()
        .map(|&s| {
            let d = s as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n
}

/// The intrinsic attributes f1..f13.
#[derive(Debug, Clone, PartialEq)]
pub struct IntrinsicFeatures {
    pub duration: f64,
    pub protocol: String,
    pub service: String,
    pub state_flag: String,
    pub up_bytes: f64,
    pub down_bytes: f64,
    pub up_pkts: f64,
    pub down_pkts: f64,
    pub land: f64,
    pub urgent: f64,
    pub mean_pkt_size: f64,
    pub up_size_var: f64,
    pub down_size_var: f64,
}

pub fn intrinsic_features(flow: &FlowRecord) -> IntrinsicFeatures {
    let total_pkts = (flow.up_pkts + flow.down_pkts) as f64;
    let total_bytes = (flow.up_bytes + flow.down_bytes) as f64;
    IntrinsicFeatures {
        duration: flow.duration(),
        protocol: flow.key.proto.token().to_string(),
        service: flow.service.clone(),
        state_flag: flow.state_flag.token().to_string(),
        up_bytes: flow.up_bytes as f64,
        down_bytes: flow.down_bytes as f64,
        up_pkts: flow.up_pkts as f64,
        down_pkts: flow.down_pkts as f64,
        land: if flow.is_land() { 1.0 } else { 0.0 },
        urgent: flow.flag_counts.urg as f64,
        mean_pkt_size: total_bytes / total_pkts,
        up_size_var: population_variance(&flow.up_sizes),
        down_size_var: population_variance(&flow.down_sizes),
    }
}

/// What the statistics window needs to remember about a closed flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowDigest {
    pub last_ts: f64,
    pub host: Ipv4Addr,
    pub service: String,
    pub state_flag: StateFlag,
}

impl From<&FlowRecord> for FlowDigest {
    fn from(flow: &FlowRecord) -> FlowDigest {
        FlowDigest {
            last_ts: flow.last_ts,
            host: flow.responder_ip(),
            service: flow.service.clone(),
            state_flag: flow.state_flag,
        }
    }
}

/// Recently closed flows, ordered by `last_ts`, queried with a sliding
/// two-slot window. The snapshot handed to feature extraction is immutable.
#[derive(Debug, Clone, Default)]
pub struct FlowHistory {
    digests: Vec<FlowDigest>,
}

impl FlowHistory {
    pub fn new() -> FlowHistory {
        FlowHistory::default()
    }

    /// Digests must arrive in non-decreasing `last_ts` order.
    pub fn push(&mut self, digest: FlowDigest) {
        if let Some(last) = self.digests.last() {
            assert!(
                digest.last_ts >= last.last_ts,
                "flow history must be pushed in last_ts order"
            );
        }
        self.digests.push(digest);
    }

    pub fn len(&self) -> usize {
        self.digests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digests.is_empty()
    }

    /// Flows whose last_ts falls in [t - window, t).
    fn window_before(&self, t: f64) -> &[FlowDigest] {
        let lo = self
            .digests
            .partition_point(|d| d.last_ts < t - STAT_WINDOW_SECS);
        let hi = self.digests.partition_point(|d| d.last_ts < t);
        &self.digests[lo..hi]
    }
}

fn is_syn_error(flag: StateFlag) -> bool {
    flag == StateFlag::S0
}

fn is_rej_error(flag: StateFlag) -> bool {
    flag == StateFlag::Rej
}

fn rate(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// The window statistics f25..f39 for `flow`, computed over the two time
/// slots preceding its `last_ts`.
pub fn statistic_features(flow: &FlowRecord, history: &FlowHistory) -> [f64; 15] {
    let window = history.window_before(flow.last_ts);
    let host = flow.responder_ip();
    let service = &flow.service;

    let same_host: Vec<&FlowDigest> = window.iter().filter(|d| d.host == host).collect();
    let same_srv: Vec<&FlowDigest> = window.iter().filter(|d| &d.service == service).collect();

    let host_count = same_host.len();
    let host_srv_count = same_host.iter().filter(|d| &d.service == service).count();
    let host_serror = same_host.iter().filter(|d| is_syn_error(d.state_flag)).count();
    let host_rerror = same_host.iter().filter(|d| is_rej_error(d.state_flag)).count();

    let srv_count = same_srv.len();
    let srv_serror = same_srv.iter().filter(|d| is_syn_error(d.state_flag)).count();
    let srv_rerror = same_srv.iter().filter(|d| is_rej_error(d.state_flag)).count();
    let srv_hosts: HashSet<Ipv4Addr> = same_srv.iter().map(|d| d.host).collect();

    let hosts: HashSet<Ipv4Addr> = window.iter().map(|d| d.host).collect();
    let host_srv_pairs: HashSet<(Ipv4Addr, &str)> = window
        .iter()
        .map(|d| (d.host, d.service.as_str()))
        .collect();

    let serror = window.iter().filter(|d| is_syn_error(d.state_flag)).count();
    let rerror = window.iter().filter(|d| is_rej_error(d.state_flag)).count();

    [
        host_count as f64,                              // f25
        host_srv_count as f64,                          // f26
        rate(host_serror, host_count),                  // f27
        rate(host_rerror, host_count),                  // f28
        rate(host_srv_count, host_count),               // f29
        rate(host_count - host_srv_count, host_count),  // f30
        srv_count as f64,                               // f31
        rate(srv_serror, srv_count),                    // f32
        rate(srv_rerror, srv_count),                    // f33
        rate(srv_hosts.len(), srv_count),               // f34
        hosts.len() as f64,                             // f35
        host_srv_pairs.len() as f64,                    // f36
        rate(srv_count, window.len()),                  // f37
        rate(serror, window.len()),                     // f38
        rate(rerror, window.len()),                     // f39
    ]
}

/// Concatenates intrinsic, frequency, and statistical attributes into the
/// full 39-feature vector; the label is the flow's majority label.
pub fn extract_features(flow: &FlowRecord, history: &FlowHistory) -> FeatureVector39 {
    let intr = intrinsic_features(flow);
    let freq = wavelet::frequency_features(&flow.rate_series)
        .expect("rate series always has 64 samples");
    let stats = statistic_features(flow, history);

    let mut numeric = [0.0; NUMERIC_COUNT];
    numeric[0] = intr.duration;
    numeric[1] = intr.up_bytes;
    numeric[2] = intr.down_bytes;
    numeric[3] = intr.up_pkts;
    numeric[4] = intr.down_pkts;
    numeric[5] = intr.land;
    numeric[6] = intr.urgent;
    numeric[7] = intr.mean_pkt_size;
    numeric[8] = intr.up_size_var;
    numeric[9] = intr.down_size_var;
    numeric[10..21].copy_from_slice(&freq);
    numeric[21..36].copy_from_slice(&stats);

    FeatureVector39 {
        numeric,
        protocol: intr.protocol,
        service: intr.service,
        state_flag: intr.state_flag,
        label: flow.label,
    }
}

/// Extracts features for every flow, feeding each one the history of flows
/// that closed in the two slots before it. Output keeps the input order.
pub fn extract_all(flows: &[FlowRecord]) -> Vec<FeatureVector39> {
    let mut order: Vec<usize> = (0..flows.len()).collect();
    order.sort_by(|&a, &b| flows[a].last_ts.total_cmp(&flows[b].last_ts));

    let mut history = FlowHistory::new();
    let mut out: Vec<Option<FeatureVector39>> = vec![None; flows.len()];
    for &idx in &order {
        let flow = &flows[idx];
        out[idx] = Some(extract_features(flow, &history));
        history.push(FlowDigest::from(flow));
    }
    out.into_iter().map(|v| v.unwrap()).collect()
}

// ---------------------------------------------------------------------------
// CSV interchange (fixed 40-column layout: f1..f39, label)
// ---------------------------------------------------------------------------

/// Formats a numeric feature as a decimal with at most 9 significant digits
/// (f32 shortest round-trip).
fn fmt_numeric(v: f64) -> String {
    format!("{}", v as f32)
}

pub fn csv_header() -> Vec<String> {
    let mut header: Vec<String> = (1..=FEATURE_COUNT).map(|i| format!("f{i}")).collect();
    header.push("label".to_string());
    header
}

fn to_csv_row(fv: &FeatureVector39) -> Vec<String> {
    let mut row = Vec::with_capacity(FEATURE_COUNT + 1);
    row.push(fmt_numeric(fv.numeric[0]));
    row.push(fv.protocol.clone());
    row.push(fv.service.clone());
    row.push(fv.state_flag.clone());
    for v in &fv.numeric[1..] {
        row.push(fmt_numeric(*v));
    }
    row.push(
        match fv.label {
            Label::Normal => "normal",
            Label::Anomalous => "anomalous",
        }
        .to_string(),
    );
    row
}

fn from_csv_row(path: &Path, lineno: usize, row: &csv::StringRecord) -> Result<FeatureVector39> {
    if row.len() != FEATURE_COUNT + 1 {
        return Err(Error::parse(
            path,
            format!("line {lineno}: expected {} columns, found {}", FEATURE_COUNT + 1, row.len()),
        ));
    }
    let num = |i: usize| -> Result<f64> {
        row[i].trim().parse::<f64>().map_err(|e| {
            Error::parse(path, format!("line {lineno}, column f{}: {e}", i + 1))
        })
    };
    let mut numeric = [0.0; NUMERIC_COUNT];
    numeric[0] = num(0)?;
    for (slot, col) in (4..FEATURE_COUNT).enumerate() {
        numeric[slot + 1] = num(col)?;
    }
    let label = match row[FEATURE_COUNT].trim() {
        "normal" => Label::Normal,
        "anomalous" => Label::Anomalous,
        other => {
            return Err(Error::parse(
                path,
                format!("line {lineno}: unknown label `{other}`"),
            ))
        }
    };
    Ok(FeatureVector39 {
        numeric,
        protocol: row[1].trim().to_lowercase(),
        service: row[2].trim().to_lowercase(),
        state_flag: row[3].trim().to_lowercase(),
        label,
    })
}

pub fn write_features_csv(path: &Path, vectors: &[FeatureVector39]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    writer
        .write_record(csv_header())
        .map_err(|e| Error::parse(path, e.to_string()))?;
    for fv in vectors {
        writer
            .write_record(to_csv_row(fv))
            .map_err(|e| Error::parse(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_features_csv(path: &Path) -> Result<Vec<FeatureVector39>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let expected = csv_header();
    if header.len() != expected.len() || header.iter().zip(&expected).any(|(a, b)| a != b) {
        return Err(Error::parse(
            path,
            format!("bad header: expected {} columns f1..f39,label", expected.len()),
        ));
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        out.push(from_csv_row(path, i + 2, &record)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{assemble_flows, FlagCounts, FlowKey, Initiator, RATE_SLOTS};
    use crate::packet::{AttackKind, PacketRecord, PayloadClass, Proto, TcpFlags};

    fn udp_pkt(ts: f64, src: [u8; 4], sp: u16, dst: [u8; 4], dp: u16, len: u32) -> PacketRecord {
        PacketRecord {
            ts,
            src_ip: Ipv4Addr::from(src),
            dst_ip: Ipv4Addr::from(dst),
            src_port: sp,
            dst_port: dp,
            proto: Proto::Udp,
            length: len,
            tcp_flags: TcpFlags::empty(),
            payload_class: PayloadClass::Other,
            label: Label::Normal,
            attack_kind: AttackKind::None,
        }
    }

    fn flow_of(packets: &[PacketRecord]) -> FlowRecord {
        assemble_flows(packets, 2.0, 64.0).unwrap().remove(0)
    }

    fn digest(last_ts: f64, host: [u8; 4], service: &str, flag: StateFlag) -> FlowDigest {
        FlowDigest {
            last_ts,
            host: Ipv4Addr::from(host),
            service: service.to_string(),
            state_flag: flag,
        }
    }

    #[test]
    fn singleton_intrinsics() {
        let flow = flow_of(&[udp_pkt(5.0, [10, 0, 0, 2], 5000, [10, 0, 0, 1], 6100, 100)]);
        let intr = intrinsic_features(&flow);
        assert_eq!(intr.up_bytes, 100.0);
        assert_eq!(intr.down_bytes, 0.0);
        assert_eq!(intr.up_pkts, 1.0);
        assert_eq!(intr.down_pkts, 0.0);
        assert_eq!(intr.up_size_var, 0.0);
        assert_eq!(intr.down_size_var, 0.0);
        assert_eq!(intr.mean_pkt_size, 100.0);
        assert_eq!(intr.land, 0.0);
    }

    #[test]
    fn upstream_size_variance_hand_value() {
        let flow = flow_of(&[
            udp_pkt(0.0, [10, 0, 0, 2], 5000, [10, 0, 0, 1], 6100, 100),
            udp_pkt(0.1, [10, 0, 0, 2], 5000, [10, 0, 0, 1], 6100, 200),
        ]);
        let intr = intrinsic_features(&flow);
        assert_eq!(intr.up_size_var, 2500.0);
    }

    #[test]
    fn land_flow_detected() {
        let flow = flow_of(&[udp_pkt(0.0, [10, 0, 0, 1], 7000, [10, 0, 0, 1], 7000, 60)]);
        let intr = intrinsic_features(&flow);
        assert_eq!(intr.land, 1.0);
    }

    #[test]
    fn rate_series_point_mass() {
        let series = compute_rate_series(&[(0.0, 100)], 0.0, 0.0, RATE_SLOTS);
        assert_eq!(series[0], 100.0);
        assert!(series[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rate_series_uniform_fill() {
        let span = 6.4;
        let width = span / 64.0;
        let events: Vec<(f64, u32)> = (0..64).map(|i| (i as f64 * width, 10)).collect();
        let series = compute_rate_series(&events, 0.0, span - width * 0.5, 64);
        // last event lands inside the final slot because the span clamps
        assert!(series.iter().all(|&v| v == 10.0), "{series:?}");
    }

    #[test]
    fn rate_series_sum_equals_total_bytes() {
        let events = vec![(0.0, 120), (0.33, 60), (1.7, 999), (1.7, 1)];
        let series = compute_rate_series(&events, 0.0, 1.7, 64);
        assert_eq!(series.iter().sum::<f64>(), 1180.0);
    }

    #[test]
    fn empty_history_zeroes_statistics() {
        let flow = flow_of(&[udp_pkt(10.0, [10, 0, 0, 2], 5000, [10, 0, 0, 1], 6100, 100)]);
        let stats = statistic_features(&flow, &FlowHistory::new());
        assert!(stats.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn host_counts_and_serror_rate_hand_example() {
        let flow = flow_of(&[udp_pkt(10.0, [10, 0, 0, 2], 5000, [10, 0, 0, 1], 6100, 100)]);
        let host = [10, 0, 0, 1];
        let mut history = FlowHistory::new();
        history.push(digest(7.0, host, "other", StateFlag::S0));
        history.push(digest(7.5, host, "other", StateFlag::Sf));
        history.push(digest(8.0, host, "other", StateFlag::S0));
        history.push(digest(9.0, host, "other", StateFlag::Sf));
        let stats = statistic_features(&flow, &history);
        assert_eq!(stats[0], 4.0); // f25
        assert_eq!(stats[2], 0.5); // f27
    }

    #[test]
    fn all_same_service_history() {
        let flow = flow_of(&[udp_pkt(10.0, [10, 0, 0, 2], 5000, [10, 0, 0, 1], 6100, 100)]);
        let svc = flow.service.clone();
        let mut history = FlowHistory::new();
        for i in 0..3 {
            history.push(digest(8.0 + i as f64 * 0.2, [10, 0, 0, 1], &svc, StateFlag::Sf));
        }
        let stats = statistic_features(&flow, &history);
        assert_eq!(stats[4], 1.0); // f29 same-service rate
        assert_eq!(stats[5], 0.0); // f30 different-service rate
        assert_eq!(stats[12], 1.0); // f37 window-wide same-service rate
    }

    #[test]
    fn window_excludes_old_and_simultaneous_flows() {
        let flow = flow_of(&[udp_pkt(10.0, [10, 0, 0, 2], 5000, [10, 0, 0, 1], 6100, 100)]);
        let mut history = FlowHistory::new();
        history.push(digest(5.9, [10, 0, 0, 1], "other", StateFlag::Sf)); // too old
        history.push(digest(6.0, [10, 0, 0, 1], "other", StateFlag::Sf)); // t-4 inclusive
        history.push(digest(10.0, [10, 0, 0, 1], "other", StateFlag::Sf)); // == t, excluded
        let stats = statistic_features(&flow, &history);
        assert_eq!(stats[0], 1.0);
    }

    #[test]
    fn vector_has_39_attributes_and_no_nan() {
        let flow = flow_of(&[
            udp_pkt(0.0, [10, 0, 0, 2], 5000, [10, 0, 0, 1], 6100, 100),
            udp_pkt(0.5, [10, 0, 0, 1], 6100, [10, 0, 0, 2], 5000, 300),
        ]);
        let fv = extract_features(&flow, &FlowHistory::new());
        assert!(fv.is_finite());
        let row = to_csv_row(&fv);
        assert_eq!(row.len(), FEATURE_COUNT + 1);
    }

    #[test]
    fn identical_flows_identical_vectors() {
        let mk = || FlowRecord {
            key: FlowKey {
                ip_lo: Ipv4Addr::new(10, 0, 0, 1),
                port_lo: 80,
                ip_hi: Ipv4Addr::new(10, 0, 0, 2),
                port_hi: 40000,
                proto: Proto::Tcp,
            },
            first_ts: 0.0,
            last_ts: 1.0,
            close_ts: 1.0,
            initiator: Initiator::Hi,
            up_bytes: 500,
            down_bytes: 900,
            up_pkts: 4,
            down_pkts: 3,
            up_sizes: vec![100, 100, 200, 100],
            down_sizes: vec![300, 300, 300],
            flag_counts: FlagCounts::default(),
            service: "http".to_string(),
            state_flag: StateFlag::Sf,
            rate_series: compute_rate_series(&[(0.0, 700), (0.9, 700)], 0.0, 1.0, RATE_SLOTS),
            label: Label::Normal,
        };
        let history = FlowHistory::new();
        assert_eq!(
            extract_features(&mk(), &history),
            extract_features(&mk(), &history)
        );
    }

    #[test]
    fn csv_roundtrip() {
        let flow = flow_of(&[
            udp_pkt(0.0, [10, 0, 0, 2], 5000, [10, 0, 0, 1], 6100, 100),
            udp_pkt(0.25, [10, 0, 0, 2], 5000, [10, 0, 0, 1], 6100, 141),
        ]);
        let vectors = vec![extract_features(&flow, &FlowHistory::new())];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        write_features_csv(&path, &vectors).unwrap();
        let back = read_features_csv(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].protocol, "udp");
        assert_eq!(back[0].label, Label::Normal);
        for (a, b) in back[0].numeric.iter().zip(vectors[0].numeric) {
            assert!((a - b).abs() <= (b.abs() * 1e-6).max(1e-6), "{a} vs {b}");
        }
    }
}
