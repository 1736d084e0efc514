//! Turns an AGC state trajectory into telemetry traffic: periodic UDP
//! measurement streams from each area RTU to the control center, and a
//! short TCP setpoint session toward each RTU every dispatch cycle.
//!
//! Measurement packet sizes encode the quantized frequency deviation
//! (length = base +/- N with N from |df|), so attacks that tamper with the
//! physical readings also disturb the traffic's size pattern.

use std::net::Ipv4Addr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::packet::{
    sort_by_ts, AttackKind, Label, PacketRecord, PayloadClass, Proto, TcpFlags,
};
use crate::sim::agc::AgcState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetProfile {
    /// Period of RTU measurement reports, s.
    pub measurement_period: f64,
    /// AGC dispatch cycle driving setpoint sessions, s.
    pub setpoint_period: f64,
    /// Std-dev of timestamp jitter, s.
    pub jitter_std: f64,
    pub control_center: Ipv4Addr,
    pub rtus: Vec<Ipv4Addr>,
    /// UDP port the control center listens on for measurements.
    pub measurement_port: u16,
    /// TCP port the RTUs accept setpoint sessions on.
    pub setpoint_port: u16,
    /// Nominal measurement packet length, bytes.
    pub measurement_len: u32,
    /// Nominal setpoint payload length, bytes.
    pub setpoint_len: u32,
    /// Period of bulk archive pulls from the RTUs (0 disables them).
    pub archive_period: f64,
    /// Every n-th setpoint session is preceded by a failed connect attempt
    /// (0 disables). Real control networks see these constantly; they keep
    /// a lone failed handshake from being an attack signature.
    pub connect_failure_every: u32,
}

impl Default for NetProfile {
    fn default() -> NetProfile {
        NetProfile {
            measurement_period: 0.1,
            setpoint_period: 4.0,
            jitter_std: 0.002,
            control_center: Ipv4Addr::new(10, 0, 0, 1),
            rtus: vec![Ipv4Addr::new(10, 0, 1, 1), Ipv4Addr::new(10, 0, 2, 1)],
            measurement_port: 2404,
            setpoint_port: 102,
            measurement_len: 120,
            setpoint_len: 96,
            archive_period: 300.0,
            connect_failure_every: 11,
        }
    }
}

impl NetProfile {
    fn validate(&self) -> Result<()> {
        if !(self.measurement_period > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "measurement_period must be positive, got {}",
                self.measurement_period
            )));
        }
        if !(self.setpoint_period > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "setpoint_period must be positive, got {}",
                self.setpoint_period
            )));
        }
        if self.jitter_std < 0.0 {
            return Err(Error::InvalidConfig("jitter_std must be >= 0".into()));
        }
        if self.archive_period < 0.0 {
            return Err(Error::InvalidConfig("archive_period must be >= 0".into()));
        }
        if self.rtus.is_empty() || self.rtus.len() > 2 {
            return Err(Error::InvalidConfig(
                "profile needs one or two RTUs (one per area)".into(),
            ));
        }
        Ok(())
    }
}

/// Quantizer tying packet length to a physical magnitude: N in [0, 63].
fn quantize(value: f64, step: f64) -> i64 {
    ((value.abs() / step) as i64).min(63)
}

fn normal_packet(
    ts: f64,
    src_ip: Ipv4Addr,
    src_port: u16,
    dst_ip: Ipv4Addr,
    dst_port: u16,
    proto: Proto,
    length: u32,
    tcp_flags: TcpFlags,
    payload_class: PayloadClass,
) -> PacketRecord {
    PacketRecord {
        ts: ts.max(0.0),
        src_ip,
        dst_ip,
        src_port,
        dst_port,
        proto,
        length,
        tcp_flags,
        payload_class,
        label: Label::Normal,
        attack_kind: AttackKind::None,
    }
}

/// Emits the telemetry log for one AGC trajectory. Everything is labeled
/// normal; determinism comes from the seed.
pub fn emit_telemetry(
    states: &[AgcState],
    net: &NetProfile,
    seed: u64,
) -> Result<Vec<PacketRecord>> {
    if states.is_empty() {
        return Err(Error::InvalidConfig("no states to emit telemetry for".into()));
    }
    net.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let jitter = |rng: &mut ChaCha8Rng| -> f64 {
        if net.jitter_std > 0.0 {
            net.jitter_std * unit.sample(rng)
        } else {
            0.0
        }
    };

    let horizon = states.last().expect("non-empty").t;
    let dt = if states.len() > 1 {
        states[1].t - states[0].t
    } else {
        1.0
    };
    let state_at = |t: f64| -> &AgcState {
        let idx = ((t / dt).round() as usize).min(states.len() - 1);
        &states[idx]
    };

    let mut packets = Vec::new();

    // periodic measurement reports, one UDP stream per area
    let n_meas = (horizon / net.measurement_period + 1e-9).floor() as usize;
    for (area, rtu) in net.rtus.iter().enumerate() {
        let src_port = 34561 + area as u16;
        for k in 0..n_meas {
            let t = k as f64 * net.measurement_period;
            let df = state_at(t).df(area);
            let n = quantize(df, 0.0005);
            let length = (net.measurement_len as i64 + n * df.signum() as i64).max(40) as u32;
            packets.push(normal_packet(
                t + jitter(&mut rng),
                *rtu,
                src_port,
                net.control_center,
                net.measurement_port,
                Proto::Udp,
                length,
                TcpFlags::empty(),
                PayloadClass::Measurement,
            ));
        }
    }

    // one short TCP setpoint session per area per dispatch cycle
    let n_cycles = (horizon / net.setpoint_period + 1e-9).floor() as usize;
    for cycle in 1..=n_cycles {
        let t0 = cycle as f64 * net.setpoint_period;
        for (area, rtu) in net.rtus.iter().enumerate() {
            let cc = net.control_center;

            // sporadic failed connect before the real session: a stale
            // socket retry that either times out (lone SYN) or is refused
            if net.connect_failure_every > 0
                && (cycle + area) % net.connect_failure_every as usize == 3
            {
                let fail_port = rng.gen_range(49152..65535u16);
                let tf = t0 - rng.gen_range(0.3..0.9);
                packets.push(normal_packet(tf, cc, fail_port, *rtu, net.setpoint_port, Proto::Tcp, 60, TcpFlags::SYN, PayloadClass::Other));
                if cycle % 2 == 0 {
                    packets.push(normal_packet(tf + rng.gen_range(0.001..0.01), *rtu, net.setpoint_port, cc, fail_port, Proto::Tcp, 40, TcpFlags::RST | TcpFlags::ACK, PayloadClass::Other));
                }
            }

            let src_port = rng.gen_range(49152..65535u16);
            let ace = state_at(t0).ace(area);
            let data_len = net.setpoint_len + quantize(ace, 0.002) as u32;
            let mut t = t0 + jitter(&mut rng).abs();
            let step = |rng: &mut ChaCha8Rng, t: &mut f64| {
                *t += rng.gen_range(0.0004..0.0012);
                *t
            };
            let sp = net.setpoint_port;
            packets.push(normal_packet(t, cc, src_port, *rtu, sp, Proto::Tcp, 60, TcpFlags::SYN, PayloadClass::Setpoint));
            packets.push(normal_packet(step(&mut rng, &mut t), *rtu, sp, cc, src_port, Proto::Tcp, 60, TcpFlags::SYN | TcpFlags::ACK, PayloadClass::Setpoint));
            packets.push(normal_packet(step(&mut rng, &mut t), cc, src_port, *rtu, sp, Proto::Tcp, 52, TcpFlags::ACK, PayloadClass::Setpoint));
            packets.push(normal_packet(step(&mut rng, &mut t), cc, src_port, *rtu, sp, Proto::Tcp, data_len, TcpFlags::PSH | TcpFlags::ACK, PayloadClass::Setpoint));
            packets.push(normal_packet(step(&mut rng, &mut t), *rtu, sp, cc, src_port, Proto::Tcp, 52 + quantize(ace, 0.004) as u32, TcpFlags::PSH | TcpFlags::ACK, PayloadClass::Setpoint));
            packets.push(normal_packet(step(&mut rng, &mut t), cc, src_port, *rtu, sp, Proto::Tcp, 52, TcpFlags::FIN | TcpFlags::ACK, PayloadClass::Setpoint));
            packets.push(normal_packet(step(&mut rng, &mut t), *rtu, sp, cc, src_port, Proto::Tcp, 52, TcpFlags::FIN | TcpFlags::ACK, PayloadClass::Setpoint));
            packets.push(normal_packet(step(&mut rng, &mut t), cc, src_port, *rtu, sp, Proto::Tcp, 52, TcpFlags::ACK, PayloadClass::Setpoint));
        }
    }

    // periodic archive pull: a smooth bulk transfer, so high-volume flows
    // exist in the benign baseline too
    if net.archive_period > 0.0 {
        let n_pulls = (horizon / net.archive_period + 1e-9).floor() as usize;
        for k in 1..=n_pulls {
            let t0 = k as f64 * net.archive_period;
            let rtu = net.rtus[k % net.rtus.len()];
            let cc = net.control_center;
            let cc_port = rng.gen_range(49152..65535u16);
            let mut t = t0;
            let step = |rng: &mut ChaCha8Rng, t: &mut f64| {
                *t += rng.gen_range(0.0004..0.0012);
                *t
            };
            let ap = 20u16; // bulk data port
            packets.push(normal_packet(t, cc, cc_port, rtu, ap, Proto::Tcp, 60, TcpFlags::SYN, PayloadClass::Bulk));
            packets.push(normal_packet(step(&mut rng, &mut t), rtu, ap, cc, cc_port, Proto::Tcp, 60, TcpFlags::SYN | TcpFlags::ACK, PayloadClass::Bulk));
            packets.push(normal_packet(step(&mut rng, &mut t), cc, cc_port, rtu, ap, Proto::Tcp, 52, TcpFlags::ACK, PayloadClass::Bulk));
            packets.push(normal_packet(step(&mut rng, &mut t), cc, cc_port, rtu, ap, Proto::Tcp, 96, TcpFlags::PSH | TcpFlags::ACK, PayloadClass::Bulk));
            let n_data = rng.gen_range(280..420);
            for _ in 0..n_data {
                t += rng.gen_range(0.006..0.010);
                packets.push(normal_packet(t, rtu, ap, cc, cc_port, Proto::Tcp, 1400 + rng.gen_range(0..60), TcpFlags::PSH | TcpFlags::ACK, PayloadClass::Bulk));
            }
            packets.push(normal_packet(step(&mut rng, &mut t), cc, cc_port, rtu, ap, Proto::Tcp, 52, TcpFlags::ACK, PayloadClass::Bulk));
            packets.push(normal_packet(step(&mut rng, &mut t), cc, cc_port, rtu, ap, Proto::Tcp, 52, TcpFlags::FIN | TcpFlags::ACK, PayloadClass::Bulk));
            packets.push(normal_packet(step(&mut rng, &mut t), rtu, ap, cc, cc_port, Proto::Tcp, 52, TcpFlags::FIN | TcpFlags::ACK, PayloadClass::Bulk));
            packets.push(normal_packet(step(&mut rng, &mut t), cc, cc_port, rtu, ap, Proto::Tcp, 52, TcpFlags::ACK, PayloadClass::Bulk));
        }
    }

    sort_by_ts(&mut packets);
    Ok(packets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::agc::{simulate_agc, AgcConfig};

    fn states_for(horizon: f64) -> Vec<AgcState> {
        let config = AgcConfig {
            load_noise_std: 0.0,
            ..AgcConfig::default()
        };
        simulate_agc(&config, horizon, 0.01, 1).unwrap()
    }

    #[test]
    fn measurement_count_matches_schedule() {
        let net = NetProfile {
            jitter_std: 0.0,
            ..NetProfile::default()
        };
        let packets = emit_telemetry(&states_for(10.0), &net, 9).unwrap();
        let measurements: Vec<_> = packets
            .iter()
            .filter(|p| p.payload_class == PayloadClass::Measurement)
            .collect();
        assert_eq!(measurements.len(), 200); // horizon/period per area, 2 areas
    }

    #[test]
    fn setpoint_sessions_at_each_cycle() {
        let net = NetProfile {
            jitter_std: 0.0,
            ..NetProfile::default()
        };
        let packets = emit_telemetry(&states_for(10.0), &net, 9).unwrap();
        let mut session_starts: Vec<f64> = packets
            .iter()
            .filter(|p| {
                p.payload_class == PayloadClass::Setpoint && p.tcp_flags == TcpFlags::SYN
            })
            .map(|p| p.ts)
            .collect();
        session_starts.sort_by(f64::total_cmp);
        assert_eq!(session_starts.len(), 4); // t = 4 and 8, two areas
        assert!((session_starts[0] - 4.0).abs() < 1e-9);
        assert!((session_starts[1] - 4.0).abs() < 1e-9);
        assert!((session_starts[2] - 8.0).abs() < 1e-9);
        assert!((session_starts[3] - 8.0).abs() < 1e-9);
    }

    #[test]
    fn zero_jitter_gives_exact_periods() {
        let net = NetProfile {
            jitter_std: 0.0,
            ..NetProfile::default()
        };
        let packets = emit_telemetry(&states_for(5.0), &net, 9).unwrap();
        let area1: Vec<f64> = packets
            .iter()
            .filter(|p| p.payload_class == PayloadClass::Measurement && p.src_port == 34561)
            .map(|p| p.ts)
            .collect();
        for pair in area1.windows(2) {
            assert!(
                (pair[1] - pair[0] - net.measurement_period).abs() < 1e-9,
                "inter-arrival {} != period",
                pair[1] - pair[0]
            );
        }
    }

    #[test]
    fn all_packets_normal_and_sorted() {
        let packets = emit_telemetry(&states_for(20.0), &NetProfile::default(), 3).unwrap();
        assert!(packets.iter().all(|p| p.label == Label::Normal));
        crate::packet::check_sorted(&packets).unwrap();
    }

    #[test]
    fn invalid_profile_rejected() {
        let net = NetProfile {
            measurement_period: 0.0,
            ..NetProfile::default()
        };
        assert!(emit_telemetry(&states_for(5.0), &net, 1).is_err());
    }
}
