//! Internet-style background traffic for the transfer-learning source
//! domain: web, mail, name-service, shell, and bulk-transfer flows with
//! Poisson arrivals over a small server pool.

use std::net::Ipv4Addr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::packet::{
    sort_by_ts, AttackKind, Label, PacketRecord, PayloadClass, Proto, TcpFlags,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InternetProfile {
    /// Mean flow arrival rate, flows/s.
    pub flows_per_sec: f64,
}

impl Default for InternetProfile {
    fn default() -> InternetProfile {
        InternetProfile { flows_per_sec: 4.0 }
    }
}

struct Session<'a> {
    rng: &'a mut ChaCha8Rng,
    packets: Vec<PacketRecord>,
    t: f64,
}

impl<'a> Session<'a> {
    fn push(
        &mut self,
        src: (Ipv4Addr, u16),
        dst: (Ipv4Addr, u16),
        proto: Proto,
        length: u32,
        flags: TcpFlags,
        class: PayloadClass,
    ) {
        self.packets.push(PacketRecord {
            ts: self.t,
            src_ip: src.0,
            src_port: src.1,
            dst_ip: dst.0,
            dst_port: dst.1,
            proto,
            length,
            tcp_flags: flags,
            payload_class: class,
            label: Label::Normal,
            attack_kind: AttackKind::None,
        });
    }

    fn wait(&mut self, lo: f64, hi: f64) {
        self.t += self.rng.gen_range(lo..hi);
    }
}

/// Full TCP exchange: handshake, request, responses, orderly close.
#[allow(clippy::too_many_arguments)]
fn tcp_session(
    session: &mut Session,
    client: (Ipv4Addr, u16),
    server: (Ipv4Addr, u16),
    request_len: u32,
    response_pkts: usize,
    response_len: (u32, u32),
    pace: (f64, f64),
    class: PayloadClass,
) {
    let p = Proto::Tcp;
    session.push(client, server, p, 60, TcpFlags::SYN, class);
    session.wait(0.0005, 0.003);
    session.push(server, client, p, 60, TcpFlags::SYN | TcpFlags::ACK, class);
    session.wait(0.0005, 0.003);
    session.push(client, server, p, 52, TcpFlags::ACK, class);
    session.wait(0.0005, 0.002);
    session.push(client, server, p, request_len, TcpFlags::PSH | TcpFlags::ACK, class);
    for _ in 0..response_pkts {
        session.wait(pace.0, pace.1);
        let len = session.rng.gen_range(response_len.0..=response_len.1);
        session.push(server, client, p, len, TcpFlags::PSH | TcpFlags::ACK, class);
    }
    session.wait(0.0005, 0.004);
    session.push(client, server, p, 52, TcpFlags::ACK, class);
    session.wait(0.0005, 0.004);
    session.push(client, server, p, 52, TcpFlags::FIN | TcpFlags::ACK, class);
    session.wait(0.0005, 0.003);
    session.push(server, client, p, 52, TcpFlags::FIN | TcpFlags::ACK, class);
    session.wait(0.0005, 0.003);
    session.push(client, server, p, 52, TcpFlags::ACK, class);
}

/// Generates `horizon` seconds of labeled-normal background traffic.
pub fn generate_internet(
    profile: &InternetProfile,
    horizon: f64,
    seed: u64,
) -> Result<Vec<PacketRecord>> {
    if !(profile.flows_per_sec > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "flows_per_sec must be positive, got {}",
            profile.flows_per_sec
        )));
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidConfig(format!("horizon must be positive, got {horizon}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // small pools concentrate traffic so the window statistics see repeats
    let web_servers = [
        Ipv4Addr::new(10, 1, 0, 10),
        Ipv4Addr::new(10, 1, 0, 11),
        Ipv4Addr::new(10, 1, 0, 12),
    ];
    let mail_server = Ipv4Addr::new(10, 1, 1, 20);
    let dns_servers = [Ipv4Addr::new(10, 1, 2, 30), Ipv4Addr::new(10, 1, 2, 31)];
    let file_server = Ipv4Addr::new(10, 1, 3, 40);
    let shell_server = Ipv4Addr::new(10, 1, 3, 41);

    let mut packets = Vec::new();
    let mut t = 0.0f64;
    loop {
        // Poisson arrivals
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        t += -u.ln() / profile.flows_per_sec;
        if t >= horizon {
            break;
        }
        let client = (
            Ipv4Addr::new(192, 168, rng.gen_range(1..6), rng.gen_range(2..250)),
            rng.gen_range(49152..65535u16),
        );
        let mut session = Session {
            rng: &mut rng,
            packets: Vec::new(),
            t,
        };
        let kind: f64 = session.rng.gen();
        if kind < 0.05 {
            // dead host: connect attempt times out, sometimes one retry
            let server = (web_servers[session.rng.gen_range(0..web_servers.len())], 80);
            session.push(client, server, Proto::Tcp, 60, TcpFlags::SYN, PayloadClass::Other);
            if session.rng.gen_bool(0.5) {
                session.wait(0.8, 1.5);
                session.push(client, server, Proto::Tcp, 60, TcpFlags::SYN, PayloadClass::Other);
            }
        } else if kind < 0.09 {
            // closed port: connection refused
            let server = (
                web_servers[session.rng.gen_range(0..web_servers.len())],
                session.rng.gen_range(8000..9000u16),
            );
            session.push(client, server, Proto::Tcp, 60, TcpFlags::SYN, PayloadClass::Other);
            session.wait(0.0005, 0.01);
            session.push(server, client, Proto::Tcp, 40, TcpFlags::RST | TcpFlags::ACK, PayloadClass::Other);
        } else if kind < 0.38 {
            // web browsing
            let server = (web_servers[session.rng.gen_range(0..web_servers.len())], 80);
            let responses = session.rng.gen_range(2..18);
            let req = session.rng.gen_range(200..700);
            tcp_session(&mut session, client, server, req, responses, (400, 1460), (0.001, 0.02), PayloadClass::Other);
        } else if kind < 0.49 {
            // tls web
            let server = (web_servers[session.rng.gen_range(0..web_servers.len())], 443);
            let responses = session.rng.gen_range(3..25);
            tcp_session(&mut session, client, server, 517, responses, (300, 1460), (0.001, 0.015), PayloadClass::Other);
        } else if kind < 0.68 {
            // dns lookup: one question, one answer
            let server = (dns_servers[session.rng.gen_range(0..dns_servers.len())], 53);
            let qlen = session.rng.gen_range(60..95);
            session.push(client, server, Proto::Udp, qlen, TcpFlags::empty(), PayloadClass::Other);
            session.wait(0.001, 0.03);
            let alen = session.rng.gen_range(90..400);
            session.push(server, client, Proto::Udp, alen, TcpFlags::empty(), PayloadClass::Other);
        } else if kind < 0.76 {
            // mail submission
            let responses = session.rng.gen_range(1..4);
            let req = session.rng.gen_range(400..1460);
            tcp_session(&mut session, client, (mail_server, 25), req, responses, (80, 300), (0.002, 0.03), PayloadClass::Other);
        } else if kind < 0.83 {
            // bulk file pull
            let responses = session.rng.gen_range(30..120);
            tcp_session(&mut session, client, (file_server, 20), 96, responses, (1200, 1460), (0.0005, 0.004), PayloadClass::Bulk);
        } else if kind < 0.93 {
            // interactive shell
            let server = (shell_server, 22);
            let keystrokes = session.rng.gen_range(10..60);
            tcp_session(&mut session, client, server, 128, 2, (100, 300), (0.002, 0.02), PayloadClass::Other);
            for _ in 0..keystrokes {
                session.wait(0.05, 0.6);
                let up = session.rng.gen_range(52..120);
                session.push(client, server, Proto::Tcp, up, TcpFlags::PSH | TcpFlags::ACK, PayloadClass::Other);
                session.wait(0.001, 0.02);
                let down = session.rng.gen_range(52..400);
                session.push(server, client, Proto::Tcp, down, TcpFlags::PSH | TcpFlags::ACK, PayloadClass::Other);
            }
        } else {
            // icmp echo pair
            let server = web_servers[session.rng.gen_range(0..web_servers.len())];
            session.push(client, (server, 0), Proto::Icmp, 64, TcpFlags::empty(), PayloadClass::Other);
            session.wait(0.0005, 0.01);
            session.push((server, 0), (client.0, client.1), Proto::Icmp, 64, TcpFlags::empty(), PayloadClass::Other);
        }
        packets.append(&mut session.packets);
    }

    sort_by_ts(&mut packets);
    Ok(packets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generates_sorted_normal_traffic() {
        let packets = generate_internet(&InternetProfile::default(), 30.0, 4).unwrap();
        assert!(packets.len() > 100);
        assert!(packets.iter().all(|p| p.label == Label::Normal));
        crate::packet::check_sorted(&packets).unwrap();
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_internet(&InternetProfile::default(), 20.0, 8).unwrap();
        let b = generate_internet(&InternetProfile::default(), 20.0, 8).unwrap();
        assert_eq!(a, b);
        let c = generate_internet(&InternetProfile::default(), 20.0, 9).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn traffic_spans_multiple_services() {
        let packets = generate_internet(&InternetProfile { flows_per_sec: 8.0 }, 60.0, 4).unwrap();
        let ports: std::collections::HashSet<u16> = packets.iter().map(|p| p.dst_port).collect();
        for port in [80, 53, 25] {
            assert!(ports.contains(&port), "missing traffic to port {port}");
        }
        assert!(packets.iter().any(|p| p.proto == Proto::Icmp));
    }
}
