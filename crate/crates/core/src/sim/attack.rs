//! Attack injectors. Each one adds or modifies packets inside a time
//! window and labels exactly those packets anomalous, so ground truth is
//! precise by construction.

use std::collections::HashMap;
use std::net::Ipv4Addr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::packet::{
    sort_by_ts, AttackKind, PacketRecord, PayloadClass, Proto, TcpFlags,
};

/// Optional 5-tuple filter; a packet matches when every set field matches.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowSelector {
    pub src_ip: Option<Ipv4Addr>,
    pub dst_ip: Option<Ipv4Addr>,
    pub src_port: Option<u16>,
    pub dst_port: Option<u16>,
    pub proto: Option<Proto>,
}

impl FlowSelector {
    pub fn matches(&self, pkt: &PacketRecord) -> bool {
        self.src_ip.map_or(true, |v| v == pkt.src_ip)
            && self.dst_ip.map_or(true, |v| v == pkt.dst_ip)
            && self.src_port.map_or(true, |v| v == pkt.src_port)
            && self.dst_port.map_or(true, |v| v == pkt.dst_port)
            && self.proto.map_or(true, |v| v == pkt.proto)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub start: f64,
    pub end: f64,
    pub intensity: f64,
    pub target_flow: Option<FlowSelector>,
}

impl AttackSpec {
    pub fn new(
        kind: AttackKind,
        start: f64,
        end: f64,
        intensity: f64,
        target_flow: Option<FlowSelector>,
    ) -> Result<AttackSpec> {
        if kind == AttackKind::None {
            return Err(Error::InvalidConfig("attack kind `none` cannot be injected".into()));
        }
        if !(start < end) {
            return Err(Error::InvalidConfig(format!(
                "attack window must satisfy start < end, got [{start}, {end}]"
            )));
        }
        if !(intensity > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "attack intensity must be positive, got {intensity}"
            )));
        }
        Ok(AttackSpec {
            kind,
            start,
            end,
            intensity,
            target_flow,
        })
    }
}

/// Result of one injection pass.
#[derive(Debug, Clone)]
pub struct Injection {
    pub packets: Vec<PacketRecord>,
    pub added: usize,
    pub modified: usize,
    /// False when the window missed the log entirely (a warning, not an
    /// error: the output then equals the input).
    pub window_hit: bool,
}

/// The busiest (dst_ip, dst_port, proto) among window packets; ties break
/// deterministically toward the smaller triple.
fn busiest_destination(
    packets: &[PacketRecord],
    start: f64,
    end: f64,
) -> Option<(Ipv4Addr, u16, Proto)> {
    let mut counts: HashMap<(Ipv4Addr, u16, Proto), usize> = HashMap::new();
    for p in packets.iter().filter(|p| p.ts >= start && p.ts <= end) {
        *counts.entry((p.dst_ip, p.dst_port, p.proto)).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
        .map(|(k, _)| k)
}

/// The 5-tuple with the most packets in the window (normal packets only).
fn busiest_flow(packets: &[PacketRecord], start: f64, end: f64) -> Option<FlowSelector> {
    let mut counts: HashMap<(Ipv4Addr, Ipv4Addr, u16, u16, Proto), usize> = HashMap::new();
    for p in packets
        .iter()
        .filter(|p| p.ts >= start && p.ts <= end && p.attack_kind == AttackKind::None)
    {
        *counts
            .entry((p.src_ip, p.dst_ip, p.src_port, p.dst_port, p.proto))
            .or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
        .map(|((src_ip, dst_ip, src_port, dst_port, proto), _)| FlowSelector {
            src_ip: Some(src_ip),
            dst_ip: Some(dst_ip),
            src_port: Some(src_port),
            dst_port: Some(dst_port),
            proto: Some(proto),
        })
}

fn dos_flood(
    out: &mut Vec<PacketRecord>,
    spec: &AttackSpec,
    rng: &mut ChaCha8Rng,
    added: &mut usize,
) {
    let (victim_ip, victim_port, proto) = match spec
        .target_flow
        .as_ref()
        .and_then(|sel| match (sel.dst_ip, sel.dst_port) {
            (Some(ip), Some(port)) => Some((ip, port, sel.proto.unwrap_or(Proto::Udp))),
            _ => None,
        })
        .or_else(|| busiest_destination(out, spec.start, spec.end))
    {
        Some(v) => v,
        None => return,
    };
    let attacker = Ipv4Addr::new(203, 0, 113, rng.gen_range(2..250));
    let src_port = rng.gen_range(20000..60000u16);

    // square-wave bursts reshape the rate spectrum toward high bands
    let burst_period = 0.25;
    let duty = 0.5;
    let rate = 400.0 * spec.intensity; // packets/s while bursting
    let gap = 1.0 / rate;
    let mut t = spec.start;
    while t < spec.end {
        let phase = ((t - spec.start) / burst_period).fract();
        if phase < duty {
            out.push(PacketRecord {
                ts: t + rng.gen_range(-0.2..0.2) * gap,
                src_ip: attacker,
                dst_ip: victim_ip,
                src_port,
                dst_port: victim_port,
                proto,
                length: 900 + rng.gen_range(0..600),
                tcp_flags: if proto == Proto::Tcp {
                    TcpFlags::SYN
                } else {
                    TcpFlags::empty()
                },
                payload_class: PayloadClass::Other,
                label: crate::packet::Label::Anomalous,
                attack_kind: AttackKind::DosFlood,
            });
            *added += 1;
        }
        t += gap;
    }
}

fn fdia(
    out: &mut [PacketRecord],
    spec: &AttackSpec,
    rng: &mut ChaCha8Rng,
    modified: &mut usize,
) {
    // default target: every measurement report in the window
    let selector = spec.target_flow.clone().unwrap_or_default();
    for pkt in out.iter_mut().filter(|p| {
        p.ts >= spec.start
            && p.ts <= spec.end
            && p.payload_class == PayloadClass::Measurement
            && selector.matches(p)
    }) {
        // replace the physically derived size pattern with injected values
        // and wobble the report timing
        let swing = (spec.intensity * 8.0).round() as i64;
        let forged = pkt.length as i64 + rng.gen_range(-swing..=swing);
        pkt.length = forged.clamp(40, 512) as u32;
        pkt.ts += rng.gen_range(-0.01..0.01) * spec.intensity;
        pkt.ts = pkt.ts.max(0.0);
        pkt.mark_attack(AttackKind::Fdia);
        *modified += 1;
    }
}

fn scan(
    out: &mut Vec<PacketRecord>,
    spec: &AttackSpec,
    rng: &mut ChaCha8Rng,
    added: &mut usize,
) {
    let victim_ip = spec
        .target_flow
        .as_ref()
        .and_then(|sel| sel.dst_ip)
        .or_else(|| busiest_destination(out, spec.start, spec.end).map(|(ip, _, _)| ip));
    let victim_ip = match victim_ip {
        Some(ip) => ip,
        None => return,
    };
    let attacker = Ipv4Addr::new(198, 51, 100, rng.gen_range(2..250));
    let count = (spec.intensity * (spec.end - spec.start)).ceil() as usize;
    let base_port: u16 = rng.gen_range(1024..20000);
    let gap = (spec.end - spec.start) / count as f64;
    for i in 0..count {
        out.push(PacketRecord {
            ts: spec.start + i as f64 * gap + rng.gen_range(0.0..gap * 0.5),
            src_ip: attacker,
            dst_ip: victim_ip,
            src_port: 40000 + (i % 20000) as u16,
            dst_port: base_port.wrapping_add(i as u16),
            proto: Proto::Tcp,
            length: 44,
            tcp_flags: TcpFlags::SYN,
            payload_class: PayloadClass::Probe,
            label: crate::packet::Label::Anomalous,
            attack_kind: AttackKind::Scan,
        });
        *added += 1;
    }
}

fn spoof_mitm(
    out: &mut Vec<PacketRecord>,
    spec: &AttackSpec,
    rng: &mut ChaCha8Rng,
    added: &mut usize,
) {
    let selector = match spec
        .target_flow
        .clone()
        .or_else(|| busiest_flow(out, spec.start, spec.end))
    {
        Some(sel) => sel,
        None => return,
    };
    let latency = 0.04 + rng.gen_range(0.0..0.03);
    let mut clones = Vec::new();
    for pkt in out
        .iter()
        .filter(|p| p.ts >= spec.start && p.ts <= spec.end && selector.matches(p))
    {
        let mut dup = pkt.clone();
        // shifted source: the duplicate stream appears from a nearby host
        let octets = dup.src_ip.octets();
        dup.src_ip = Ipv4Addr::new(octets[0], octets[1], octets[2], octets[3].wrapping_add(100));
        dup.ts += latency + rng.gen_range(0.0..0.01) * spec.intensity;
        dup.mark_attack(AttackKind::SpoofMitm);
        clones.push(dup);
    }
    *added += clones.len();
    out.extend(clones);
}

/// Applies one attack spec to a time-sorted log. The output is re-sorted;
/// packets added or modified by the attack carry its kind and the
/// anomalous label.
pub fn inject_attack(
    packets: &[PacketRecord],
    spec: &AttackSpec,
    seed: u64,
) -> Result<Injection> {
    // revalidate: specs can arrive from config files
    let spec = AttackSpec::new(
        spec.kind,
        spec.start,
        spec.end,
        spec.intensity,
        spec.target_flow.clone(),
    )?;
    crate::packet::check_sorted(packets)?;

    let in_range = packets
        .first()
        .zip(packets.last())
        .map(|(first, last)| spec.end >= first.ts && spec.start <= last.ts)
        .unwrap_or(false);
    if !in_range {
        return Ok(Injection {
            packets: packets.to_vec(),
            added: 0,
            modified: 0,
            window_hit: false,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = packets.to_vec();
    let mut added = 0;
    let mut modified = 0;
    match spec.kind {
        AttackKind::DosFlood => dos_flood(&mut out, &spec, &mut rng, &mut added),
        AttackKind::Fdia => fdia(&mut out, &spec, &mut rng, &mut modified),
        AttackKind::Scan => scan(&mut out, &spec, &mut rng, &mut added),
        AttackKind::SpoofMitm => spoof_mitm(&mut out, &spec, &mut rng, &mut added),
        AttackKind::None => unreachable!("validated above"),
    }
    sort_by_ts(&mut out);
    Ok(Injection {
        packets: out,
        added,
        modified,
        window_hit: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::Label;
    use crate::sim::agc::{simulate_agc, AgcConfig};
    use crate::sim::telemetry::{emit_telemetry, NetProfile};

    fn telemetry_log(horizon: f64) -> Vec<PacketRecord> {
        let states = simulate_agc(&AgcConfig::default(), horizon, 0.01, 5).unwrap();
        emit_telemetry(&states, &NetProfile::default(), 6).unwrap()
    }

    #[test]
    fn zero_intensity_rejected_by_invariant() {
        let err = AttackSpec::new(AttackKind::Scan, 0.0, 1.0, 0.0, None).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
        assert!(AttackSpec::new(AttackKind::Scan, 2.0, 1.0, 1.0, None).is_err());
    }

    #[test]
    fn scan_adds_syn_probes_to_distinct_ports() {
        let log = telemetry_log(10.0);
        let spec = AttackSpec::new(AttackKind::Scan, 3.0, 4.0, 50.0, None).unwrap();
        let injection = inject_attack(&log, &spec, 11).unwrap();
        let probes: Vec<_> = injection
            .packets
            .iter()
            .filter(|p| p.attack_kind == AttackKind::Scan)
            .collect();
        assert!(probes.len() >= 50, "got {}", probes.len());
        assert!(probes.iter().all(|p| p.tcp_flags == TcpFlags::SYN));
        assert!(probes.iter().all(|p| p.label == Label::Anomalous));
        let ports: std::collections::HashSet<u16> = probes.iter().map(|p| p.dst_port).collect();
        assert!(ports.len() >= 50, "distinct ports {}", ports.len());
    }

    #[test]
    fn window_outside_log_is_a_warning_not_failure() {
        let log = telemetry_log(5.0);
        let spec = AttackSpec::new(AttackKind::DosFlood, 100.0, 110.0, 2.0, None).unwrap();
        let injection = inject_attack(&log, &spec, 11).unwrap();
        assert!(!injection.window_hit);
        assert_eq!(injection.added, 0);
        assert_eq!(injection.packets, log);
    }

    #[test]
    fn dos_flood_rate_scales_with_intensity() {
        let log = telemetry_log(20.0);
        let lo = inject_attack(
            &log,
            &AttackSpec::new(AttackKind::DosFlood, 5.0, 10.0, 1.0, None).unwrap(),
            11,
        )
        .unwrap();
        let hi = inject_attack(
            &log,
            &AttackSpec::new(AttackKind::DosFlood, 5.0, 10.0, 3.0, None).unwrap(),
            11,
        )
        .unwrap();
        assert!(hi.added > 2 * lo.added);
        crate::packet::check_sorted(&hi.packets).unwrap();
    }

    #[test]
    fn fdia_modifies_measurement_pattern_in_window() {
        let log = telemetry_log(20.0);
        let spec = AttackSpec::new(AttackKind::Fdia, 5.0, 15.0, 1.0, None).unwrap();
        let injection = inject_attack(&log, &spec, 11).unwrap();
        assert_eq!(injection.added, 0);
        assert!(injection.modified > 0);
        assert_eq!(injection.packets.len(), log.len());
        let touched = injection
            .packets
            .iter()
            .filter(|p| p.attack_kind == AttackKind::Fdia)
            .count();
        assert_eq!(touched, injection.modified);
    }

    #[test]
    fn spoof_duplicates_a_flow_with_shifted_source() {
        let log = telemetry_log(20.0);
        let spec = AttackSpec::new(AttackKind::SpoofMitm, 2.0, 10.0, 1.0, None).unwrap();
        let injection = inject_attack(&log, &spec, 11).unwrap();
        assert!(injection.added > 0);
        let dup: Vec<_> = injection
            .packets
            .iter()
            .filter(|p| p.attack_kind == AttackKind::SpoofMitm)
            .collect();
        // duplicates come from one shifted source talking to a real host
        let srcs: std::collections::HashSet<Ipv4Addr> = dup.iter().map(|p| p.src_ip).collect();
        assert_eq!(srcs.len(), 1);
        assert!(log.iter().all(|p| p.src_ip != *srcs.iter().next().unwrap()));
    }

    #[test]
    fn same_seed_same_injection() {
        let log = telemetry_log(10.0);
        let spec = AttackSpec::new(AttackKind::Scan, 2.0, 6.0, 20.0, None).unwrap();
        let a = inject_attack(&log, &spec, 99).unwrap();
        let b = inject_attack(&log, &spec, 99).unwrap();
        assert_eq!(a.packets, b.packets);
    }
}
