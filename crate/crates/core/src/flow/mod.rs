//! Bidirectional flow assembly: canonical 5-tuple keys, a TCP state-flag
//! machine, and timeout/duration-bounded flow records carrying everything
//! the feature extractor needs.

pub mod features;
pub mod service;

use std::collections::HashMap;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::packet::{check_sorted, Label, PacketRecord, Proto, TcpFlags};

/// Inactivity gap that closes a flow.
pub const IDLE_TIMEOUT_SECS: f64 = 2.0;
/// Hard cap on flow duration: long-lived streams are chunked.
pub const MAX_DURATION_SECS: f64 = 64.0;
/// Number of byte-rate samples kept per flow.
pub const RATE_SLOTS: usize = 64;
/// Minimum span the rate series covers, so slots stay at least 10 ms wide.
pub const MIN_RATE_SPAN_SECS: f64 = 0.64;
/// One statistics time slot; the history window is two of these.
pub const SLOT_SECS: f64 = 2.0;
/// Sliding history window for the f25..f39 statistics.
pub const STAT_WINDOW_SECS: f64 = 2.0 * SLOT_SECS;

/// Direction-independent 5-tuple: endpoints ordered by (ip, port).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowKey {
    pub ip_lo: Ipv4Addr,
    pub port_lo: u16,
    pub ip_hi: Ipv4Addr,
    pub port_hi: u16,
    pub proto: Proto,
}

impl FlowKey {
    pub fn from_packet(pkt: &PacketRecord) -> FlowKey {
        let a = (pkt.src_ip, pkt.src_port);
        let b = (pkt.dst_ip, pkt.dst_port);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        FlowKey {
            ip_lo: lo.0,
            port_lo: lo.1,
            ip_hi: hi.0,
            port_hi: hi.1,
            proto: pkt.proto,
        }
    }
}

/// Which canonical endpoint sent the first packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Initiator {
    Lo,
    Hi,
}

/// Connection outcome flag, modeled on the classic intrusion-detection
/// state vocabulary. Non-TCP flows are always `Sf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateFlag {
    Sf,
    S0,
    S1,
    S2,
    S3,
    Rej,
    Rsto,
    Rstr,
    Sh,
    Shr,
    Oth,
}

impl StateFlag {
    pub fn token(&self) -> &'static str {
        match self {
            StateFlag::Sf => "sf",
            StateFlag::S0 => "s0",
            StateFlag::S1 => "s1",
            StateFlag::S2 => "s2",
            StateFlag::S3 => "s3",
            StateFlag::Rej => "rej",
            StateFlag::Rsto => "rsto",
            StateFlag::Rstr => "rstr",
            StateFlag::Sh => "sh",
            StateFlag::Shr => "shr",
            StateFlag::Oth => "oth",
        }
    }

    pub const ALL: [StateFlag; 11] = [
        StateFlag::Sf,
        StateFlag::S0,
        StateFlag::S1,
        StateFlag::S2,
        StateFlag::S3,
        StateFlag::Rej,
        StateFlag::Rsto,
        StateFlag::Rstr,
        StateFlag::Sh,
        StateFlag::Shr,
        StateFlag::Oth,
    ];
}

/// Per-flow counts of each TCP flag, both directions combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagCounts {
    pub fin: u32,
    pub syn: u32,
    pub rst: u32,
    pub psh: u32,
    pub ack: u32,
    pub urg: u32,
}

/// One assembled bidirectional flow. "Up" is the initiator-to-responder
/// direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub key: FlowKey,
    pub first_ts: f64,
    pub last_ts: f64,
    pub close_ts: f64,
    pub initiator: Initiator,
    pub up_bytes: u64,
    pub down_bytes: u64,
    pub up_pkts: u32,
    pub down_pkts: u32,
    pub up_sizes: Vec<u32>,
    pub down_sizes: Vec<u32>,
    pub flag_counts: FlagCounts,
    pub service: String,
    pub state_flag: StateFlag,
    pub rate_series: Vec<f64>,
    pub label: Label,
}

impl FlowRecord {
    pub fn duration(&self) -> f64 {
        self.last_ts - self.first_ts
    }

    /// IP of the endpoint that answered (the "destination host" of the
    /// window statistics).
    pub fn responder_ip(&self) -> Ipv4Addr {
        match self.initiator {
            Initiator::Lo => self.key.ip_hi,
            Initiator::Hi => self.key.ip_lo,
        }
    }

    /// True if both endpoints are the same ip:port pair.
    pub fn is_land(&self) -> bool {
        self.key.ip_lo == self.key.ip_hi && self.key.port_lo == self.key.port_hi
    }
}

struct OpenFlow {
    key: FlowKey,
    first_ts: f64,
    last_ts: f64,
    initiator: Initiator,
    up_bytes: u64,
    down_bytes: u64,
    up_sizes: Vec<u32>,
    down_sizes: Vec<u32>,
    flag_counts: FlagCounts,
    events: Vec<(f64, u32)>,
    anomalous_pkts: u32,
    // TCP state tracking
    syn_up: bool,
    synack_down: bool,
    ack_up_after_synack: bool,
    fin_up: bool,
    fin_down: bool,
    rst_up: bool,
    rst_down: bool,
    responder_pkts: u32,
}

impl OpenFlow {
    fn start(pkt: &PacketRecord) -> OpenFlow {
        let key = FlowKey::from_packet(pkt);
        let initiator = if (pkt.src_ip, pkt.src_port) == (key.ip_lo, key.port_lo) {
            Initiator::Lo
        } else {
            Initiator::Hi
        };
        let mut flow = OpenFlow {
            key,
            first_ts: pkt.ts,
            last_ts: pkt.ts,
            initiator,
            up_bytes: 0,
            down_bytes: 0,
            up_sizes: Vec::new(),
            down_sizes: Vec::new(),
            flag_counts: FlagCounts::default(),
            events: Vec::new(),
            anomalous_pkts: 0,
            syn_up: false,
            synack_down: false,
            ack_up_after_synack: false,
            fin_up: false,
            fin_down: false,
            rst_up: false,
            rst_down: false,
            responder_pkts: 0,
        };
        flow.add(pkt);
        flow
    }

    fn is_up(&self, pkt: &PacketRecord) -> bool {
        let src_is_lo = (pkt.src_ip, pkt.src_port) == (self.key.ip_lo, self.key.port_lo);
        match self.initiator {
            Initiator::Lo => src_is_lo,
            // land flows (identical endpoints) always count as up
            Initiator::Hi => !src_is_lo || self.key.ip_lo == self.key.ip_hi && self.key.port_lo == self.key.port_hi,
        }
    }

    fn add(&mut self, pkt: &PacketRecord) {
        let up = self.is_up(pkt);
        self.last_ts = pkt.ts;
        self.events.push((pkt.ts, pkt.length));
        if pkt.label == Label::Anomalous {
            self.anomalous_pkts += 1;
        }
        if up {
            self.up_bytes += pkt.length as u64;
            self.up_sizes.push(pkt.length);
        } else {
            self.down_bytes += pkt.length as u64;
            self.down_sizes.push(pkt.length);
            self.responder_pkts += 1;
        }

        if pkt.proto == Proto::Tcp {
            let f = pkt.tcp_flags;
            if f.contains(TcpFlags::FIN) {
                self.flag_counts.fin += 1;
                if up {
                    self.fin_up = true;
                } else {
                    self.fin_down = true;
                }
            }
            if f.contains(TcpFlags::SYN) {
                self.flag_counts.syn += 1;
                if up && !f.contains(TcpFlags::ACK) {
                    self.syn_up = true;
                } else if !up && f.contains(TcpFlags::ACK) {
                    self.synack_down = true;
                }
            }
            if f.contains(TcpFlags::RST) {
                self.flag_counts.rst += 1;
                if up {
                    self.rst_up = true;
                } else {
                    self.rst_down = true;
                }
            }
            if f.contains(TcpFlags::PSH) {
                self.flag_counts.psh += 1;
            }
            if f.contains(TcpFlags::ACK) {
                self.flag_counts.ack += 1;
                if up && self.synack_down && !f.contains(TcpFlags::SYN) {
                    self.ack_up_after_synack = true;
                }
            }
            if f.contains(TcpFlags::URG) {
                self.flag_counts.urg += 1;
            }
        }
    }

    fn handshake_complete(&self) -> bool {
        self.syn_up && self.synack_down && self.ack_up_after_synack
    }

    fn fins_done(&self) -> bool {
        self.fin_up && self.fin_down
    }

    fn rst_seen(&self) -> bool {
        self.rst_up || self.rst_down
    }

    fn state_flag(&self) -> StateFlag {
        if self.key.proto != Proto::Tcp {
            return StateFlag::Sf;
        }
        let hs = self.handshake_complete();
        if !self.syn_up {
            if self.synack_down && self.fin_down {
                return StateFlag::Shr;
            }
            return StateFlag::Oth;
        }
        if self.responder_pkts == 0 {
            if self.rst_up {
                return StateFlag::Oth;
            }
            if self.fin_up {
                return StateFlag::Sh;
            }
            return StateFlag::S0;
        }
        if self.rst_down && !hs {
            return StateFlag::Rej;
        }
        if self.rst_up {
            return StateFlag::Rsto;
        }
        if self.rst_down {
            return StateFlag::Rstr;
        }
        if hs && self.fin_up && self.fin_down {
            return StateFlag::Sf;
        }
        if hs && self.fin_up {
            return StateFlag::S2;
        }
        if hs && self.fin_down {
            return StateFlag::S3;
        }
        if hs {
            return StateFlag::S1;
        }
        StateFlag::Oth
    }

    fn close(self, close_ts: f64) -> FlowRecord {
        let total_pkts = self.up_sizes.len() + self.down_sizes.len();
        let label = if 2 * self.anomalous_pkts as usize > total_pkts {
            Label::Anomalous
        } else {
            Label::Normal
        };
        let state_flag = self.state_flag();
        let rate_series =
            features::compute_rate_series(&self.events, self.first_ts, self.last_ts, RATE_SLOTS);
        FlowRecord {
            service: service::service_for_flow(self.key.proto, self.key.port_lo, self.key.port_hi)
                .to_string(),
            key: self.key,
            first_ts: self.first_ts,
            last_ts: self.last_ts,
            close_ts,
            initiator: self.initiator,
            up_bytes: self.up_bytes,
            down_bytes: self.down_bytes,
            up_pkts: self.up_sizes.len() as u32,
            down_pkts: self.down_sizes.len() as u32,
            up_sizes: self.up_sizes,
            down_sizes: self.down_sizes,
            flag_counts: self.flag_counts,
            state_flag,
            rate_series,
            label,
        }
    }
}

/// Folds a time-sorted packet log into flows. A flow closes on orderly
/// FIN completion or RST, on `idle_timeout` of inactivity, or when a packet
/// would stretch it past `max_duration`; remaining flows flush at end of
/// input. Output is ordered by close time.
pub fn assemble_flows(
    packets: &[PacketRecord],
    idle_timeout: f64,
    max_duration: f64,
) -> Result<Vec<FlowRecord>> {
    check_sorted(packets)?;

    let mut open: HashMap<FlowKey, OpenFlow> = HashMap::new();
    let mut done: Vec<FlowRecord> = Vec::new();

    for pkt in packets {
        let key = FlowKey::from_packet(pkt);
        if let Some(flow) = open.get_mut(&key) {
            let idle_expired = pkt.ts - flow.last_ts > idle_timeout;
            let over_duration = pkt.ts - flow.first_ts > max_duration;
            // after an orderly FIN exchange only the closing ACK still
            // belongs to this flow; anything else starts a fresh one
            let reuse_after_close = flow.fins_done()
                && !(pkt.proto == Proto::Tcp
                    && pkt.tcp_flags.contains(TcpFlags::ACK)
                    && !pkt.tcp_flags.contains(TcpFlags::SYN)
                    && !pkt.tcp_flags.contains(TcpFlags::FIN)
                    && !pkt.tcp_flags.contains(TcpFlags::RST));
            if idle_expired || over_duration || reuse_after_close {
                let flow = open.remove(&key).unwrap();
                let close_ts = if idle_expired {
                    flow.last_ts + idle_timeout
                } else {
                    pkt.ts
                };
                done.push(flow.close(close_ts));
                open.insert(key, OpenFlow::start(pkt));
                continue;
            }

            flow.add(pkt);
            // orderly completion: both FINs seen and the closing ACK absorbed;
            // a flow whose final ACK never arrives falls back to the timeout
            let finished = flow.rst_seen()
                || (flow.fins_done()
                    && pkt.tcp_flags.contains(TcpFlags::ACK)
                    && !pkt.tcp_flags.contains(TcpFlags::FIN));
            if finished {
                let flow = open.remove(&key).unwrap();
                done.push(flow.close(pkt.ts));
            }
        } else {
            open.insert(key, OpenFlow::start(pkt));
        }
    }

    for (_, flow) in open.drain() {
        let close_ts = flow.last_ts + idle_timeout;
        done.push(flow.close(close_ts));
    }

    done.sort_by(|a, b| {
        a.close_ts
            .total_cmp(&b.close_ts)
            .then_with(|| a.first_ts.total_cmp(&b.first_ts))
            .then_with(|| a.key.cmp(&b.key))
    });
    Ok(done)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{AttackKind, PayloadClass};

    fn pkt(ts: f64, src: [u8; 4], sp: u16, dst: [u8; 4], dp: u16, proto: Proto, len: u32, flags: TcpFlags) -> PacketRecord {
        PacketRecord {
            ts,
            src_ip: Ipv4Addr::from(src),
            dst_ip: Ipv4Addr::from(dst),
            src_port: sp,
            dst_port: dp,
            proto,
            length: len,
            tcp_flags: flags,
            payload_class: PayloadClass::Other,
            label: Label::Normal,
            attack_kind: AttackKind::None,
        }
    }

    #[test]
    fn singleton_udp_flow() {
        let packets = vec![pkt(10.0, [10, 0, 0, 2], 5000, [10, 0, 0, 1], 53, Proto::Udp, 100, TcpFlags::empty())];
        let flows = assemble_flows(&packets, IDLE_TIMEOUT_SECS, MAX_DURATION_SECS).unwrap();
        assert_eq!(flows.len(), 1);
        let f = &flows[0];
        assert_eq!(f.up_pkts, 1);
        assert_eq!(f.down_pkts, 0);
        assert_eq!(f.duration(), 0.0);
        assert_eq!(f.state_flag, StateFlag::Sf);
        assert_eq!(f.service, "domain_u");
    }

    #[test]
    fn idle_timeout_splits_flows() {
        let packets = vec![
            pkt(0.0, [10, 0, 0, 2], 5000, [10, 0, 0, 1], 53, Proto::Udp, 80, TcpFlags::empty()),
            pkt(3.5, [10, 0, 0, 2], 5000, [10, 0, 0, 1], 53, Proto::Udp, 80, TcpFlags::empty()),
        ];
        let flows = assemble_flows(&packets, 2.0, 64.0).unwrap();
        assert_eq!(flows.len(), 2);
        // a gap of exactly the timeout keeps the flow together
        let packets = vec![
            pkt(0.0, [10, 0, 0, 2], 5000, [10, 0, 0, 1], 53, Proto::Udp, 80, TcpFlags::empty()),
            pkt(2.0, [10, 0, 0, 2], 5000, [10, 0, 0, 1], 53, Proto::Udp, 80, TcpFlags::empty()),
        ];
        let flows = assemble_flows(&packets, 2.0, 64.0).unwrap();
        assert_eq!(flows.len(), 1);
    }

    #[test]
    fn max_duration_chunks_streams() {
        let packets: Vec<PacketRecord> = (0..100)
            .map(|i| pkt(i as f64, [10, 0, 0, 2], 5000, [10, 0, 0, 1], 2404, Proto::Udp, 120, TcpFlags::empty()))
            .collect();
        let flows = assemble_flows(&packets, 2.0, 64.0).unwrap();
        assert_eq!(flows.len(), 2);
        assert!(flows.iter().all(|f| f.duration() <= 64.0));
        let pkts: u32 = flows.iter().map(|f| f.up_pkts + f.down_pkts).sum();
        assert_eq!(pkts, 100);
    }

    #[test]
    fn orderly_tcp_close_is_sf() {
        let client = ([192, 168, 0, 5], 40000u16);
        let server = ([10, 0, 0, 1], 80u16);
        let packets = vec![
            pkt(0.00, client.0, client.1, server.0, server.1, Proto::Tcp, 60, TcpFlags::SYN),
            pkt(0.01, server.0, server.1, client.0, client.1, Proto::Tcp, 60, TcpFlags::SYN | TcpFlags::ACK),
            pkt(0.02, client.0, client.1, server.0, server.1, Proto::Tcp, 52, TcpFlags::ACK),
            pkt(0.03, client.0, client.1, server.0, server.1, Proto::Tcp, 400, TcpFlags::PSH | TcpFlags::ACK),
            pkt(0.04, server.0, server.1, client.0, client.1, Proto::Tcp, 1200, TcpFlags::PSH | TcpFlags::ACK),
            pkt(0.05, client.0, client.1, server.0, server.1, Proto::Tcp, 52, TcpFlags::FIN | TcpFlags::ACK),
            pkt(0.06, server.0, server.1, client.0, client.1, Proto::Tcp, 52, TcpFlags::FIN | TcpFlags::ACK),
            pkt(0.07, client.0, client.1, server.0, server.1, Proto::Tcp, 52, TcpFlags::ACK),
        ];
        let flows = assemble_flows(&packets, 2.0, 64.0).unwrap();
        assert_eq!(flows.len(), 1);
        let f = &flows[0];
        assert_eq!(f.state_flag, StateFlag::Sf);
        assert_eq!(f.up_pkts, 5);
        assert_eq!(f.down_pkts, 3);
        assert_eq!(f.service, "http");
        assert_eq!(f.close_ts, 0.07);
    }

    #[test]
    fn lone_syn_is_s0_and_syn_rst_is_rej() {
        let packets = vec![pkt(0.0, [1, 1, 1, 1], 40000, [10, 0, 0, 1], 23, Proto::Tcp, 44, TcpFlags::SYN)];
        let flows = assemble_flows(&packets, 2.0, 64.0).unwrap();
        assert_eq!(flows[0].state_flag, StateFlag::S0);

        let packets = vec![
            pkt(0.0, [1, 1, 1, 1], 40000, [10, 0, 0, 1], 23, Proto::Tcp, 44, TcpFlags::SYN),
            pkt(0.01, [10, 0, 0, 1], 23, [1, 1, 1, 1], 40000, Proto::Tcp, 40, TcpFlags::RST | TcpFlags::ACK),
        ];
        let flows = assemble_flows(&packets, 2.0, 64.0).unwrap();
        assert_eq!(flows[0].state_flag, StateFlag::Rej);
    }

    #[test]
    fn every_packet_lands_in_exactly_one_flow() {
        // interleaved flows over shared hosts
        let mut packets = Vec::new();
        for i in 0..50 {
            let t = i as f64 * 0.1;
            packets.push(pkt(t, [10, 0, 0, 2], 5000 + (i % 3) as u16, [10, 0, 0, 1], 80, Proto::Tcp, 100 + i, TcpFlags::ACK));
            packets.push(pkt(t + 0.01, [10, 0, 0, 3], 6000, [10, 0, 0, 1], 53, Proto::Udp, 70, TcpFlags::empty()));
        }
        let total_bytes: u64 = packets.iter().map(|p| p.length as u64).sum();
        let flows = assemble_flows(&packets, 2.0, 64.0).unwrap();
        let flow_bytes: u64 = flows.iter().map(|f| f.up_bytes + f.down_bytes).sum();
        let flow_pkts: u32 = flows.iter().map(|f| f.up_pkts + f.down_pkts).sum();
        assert_eq!(flow_bytes, total_bytes);
        assert_eq!(flow_pkts, 100);
    }

    #[test]
    fn unsorted_input_is_an_error() {
        let packets = vec![
            pkt(1.0, [10, 0, 0, 2], 5000, [10, 0, 0, 1], 53, Proto::Udp, 80, TcpFlags::empty()),
            pkt(0.5, [10, 0, 0, 2], 5000, [10, 0, 0, 1], 53, Proto::Udp, 80, TcpFlags::empty()),
        ];
        assert!(assemble_flows(&packets, 2.0, 64.0).is_err());
    }

    #[test]
    fn majority_label_rules_flow() {
        let mut packets: Vec<PacketRecord> = (0..4)
            .map(|i| pkt(i as f64 * 0.1, [10, 0, 0, 2], 5000, [10, 0, 0, 1], 53, Proto::Udp, 80, TcpFlags::empty()))
            .collect();
        packets[1].mark_attack(AttackKind::Fdia);
        packets[2].mark_attack(AttackKind::Fdia);
        packets[3].mark_attack(AttackKind::Fdia);
        let flows = assemble_flows(&packets, 2.0, 64.0).unwrap();
        assert_eq!(flows[0].label, Label::Anomalous);
    }
}
