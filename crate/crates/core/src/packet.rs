//! Packet-metadata records and the JSONL log format.
//!
//! Logs carry no payload bytes: every downstream feature reads only sizes,
//! timing, flags, and the 5-tuple.

use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::Ipv4Addr;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Proto {
    Tcp,
    Udp,
    Icmp,
    Other,
}

impl Proto {
    pub fn token(&self) -> &'static str {
        match self {
            Proto::Tcp => "tcp",
            Proto::Udp => "udp",
            Proto::Icmp => "icmp",
            Proto::Other => "other",
        }
    }
}

/// TCP flag set. Serialized as an array of lowercase tokens in fixed
/// `fin,syn,rst,psh,ack,urg` order so logs are byte-reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TcpFlags(u8);

impl TcpFlags {
    pub const FIN: TcpFlags = TcpFlags(0x01);
    pub const SYN: TcpFlags = TcpFlags(0x02);
    pub const RST: TcpFlags = TcpFlags(0x04);
    pub const PSH: TcpFlags = TcpFlags(0x08);
    pub const ACK: TcpFlags = TcpFlags(0x10);
    pub const URG: TcpFlags = TcpFlags(0x20);

    const ALL: [(TcpFlags, &'static str); 6] = [
        (TcpFlags::FIN, "fin"),
        (TcpFlags::SYN, "syn"),
        (TcpFlags::RST, "rst"),
        (TcpFlags::PSH, "psh"),
        (TcpFlags::ACK, "ack"),
        (TcpFlags::URG, "urg"),
    ];

    pub const fn empty() -> TcpFlags {
        TcpFlags(0)
    }

    pub fn contains(&self, other: TcpFlags) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }
}

impl std::ops::BitOr for TcpFlags {
    type Output = TcpFlags;
    fn bitor(self, rhs: TcpFlags) -> TcpFlags {
        TcpFlags(self.0 | rhs.0)
    }
}

impl fmt::Display for TcpFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (flag, name) in TcpFlags::ALL {
            if self.contains(flag) {
                if !first {
                    write!(f, "|")?;
                }
                write!(f, "{name}")?;
                first = false;
            }
        }
        Ok(())
    }
}

impl Serialize for TcpFlags {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let tokens: Vec<&str> = TcpFlags::ALL
            .iter()
            .filter(|(flag, _)| self.contains(*flag))
            .map(|(_, name)| *name)
            .collect();
        tokens.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TcpFlags {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(deserializer)?;
        let mut flags = TcpFlags::empty();
        for tok in tokens {
            let bit = TcpFlags::ALL
                .iter()
                .find(|(_, name)| *name == tok)
                .map(|(flag, _)| *flag)
                .ok_or_else(|| serde::de::Error::custom(format!("unknown tcp flag `{tok}`")))?;
            flags = flags | bit;
        }
        Ok(flags)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayloadClass {
    Measurement,
    Setpoint,
    Bulk,
    Probe,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Anomalous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    DosFlood,
    Fdia,
    Scan,
    SpoofMitm,
}

impl AttackKind {
    pub fn token(&self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::DosFlood => "dos_flood",
            AttackKind::Fdia => "fdia",
            AttackKind::Scan => "scan",
            AttackKind::SpoofMitm => "spoof_mitm",
        }
    }
}

/// One observed packet's metadata. `label == Anomalous` iff
/// `attack_kind != None`; [`PacketRecord::validate`] checks the tie.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub ts: f64,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub proto: Proto,
    pub length: u32,
    pub tcp_flags: TcpFlags,
    pub payload_class: PayloadClass,
    pub label: Label,
    pub attack_kind: AttackKind,
}

impl PacketRecord {
    pub fn validate(&self) -> Result<()> {
        let anomalous = self.attack_kind != AttackKind::None;
        if anomalous != (self.label == Label::Anomalous) {
            return Err(Error::Dataset(format!(
                "label/attack_kind mismatch: label {:?} with attack_kind {:?}",
                self.label, self.attack_kind
            )));
        }
        if !self.ts.is_finite() {
            return Err(Error::Dataset(format!("non-finite ts {}", self.ts)));
        }
        Ok(())
    }

    pub fn mark_attack(&mut self, kind: AttackKind) {
        self.attack_kind = kind;
        self.label = if kind == AttackKind::None {
            Label::Normal
        } else {
            Label::Anomalous
        };
    }
}

/// Checks the non-decreasing-ts invariant, reporting the first violation.
pub fn check_sorted(packets: &[PacketRecord]) -> Result<()> {
    for (i, win) in packets.windows(2).enumerate() {
        if win[1].ts < win[0].ts {
            return Err(Error::UnsortedPackets {
                index: i + 1,
                ts: win[1].ts,
                prev_ts: win[0].ts,
            });
        }
    }
    Ok(())
}

/// Stable sort by ts. Equal timestamps keep their emission order so logs
/// stay reproducible.
pub fn sort_by_ts(packets: &mut [PacketRecord]) {
    packets.sort_by(|a, b| a.ts.total_cmp(&b.ts));
}

pub fn write_jsonl(path: &Path, packets: &[PacketRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for pkt in packets {
        serde_json::to_writer(&mut w, pkt).map_err(|e| Error::parse(path, e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<PacketRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut packets = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let pkt: PacketRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, format!("line {}: {e}", lineno + 1)))?;
        pkt.validate()?;
        packets.push(pkt);
    }
    check_sorted(&packets)?;
    Ok(packets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PacketRecord {
        PacketRecord {
            ts: 1.25,
            src_ip: Ipv4Addr::new(10, 0, 1, 1),
            dst_ip: Ipv4Addr::new(10, 0, 0, 1),
            src_port: 40001,
            dst_port: 2404,
            proto: Proto::Udp,
            length: 120,
            tcp_flags: TcpFlags::empty(),
            payload_class: PayloadClass::Measurement,
            label: Label::Normal,
            attack_kind: AttackKind::None,
        }
    }

    #[test]
    fn jsonl_field_names_match_type() {
        let json = serde_json::to_value(sample()).unwrap();
        let obj = json.as_object().unwrap();
        for key in [
            "ts",
            "src_ip",
            "dst_ip",
            "src_port",
            "dst_port",
            "proto",
            "length",
            "tcp_flags",
            "payload_class",
            "label",
            "attack_kind",
        ] {
            assert!(obj.contains_key(key), "missing field {key}");
        }
        assert_eq!(obj["src_ip"], "10.0.1.1");
        assert_eq!(obj["proto"], "udp");
        assert_eq!(obj["attack_kind"], "none");
    }

    #[test]
    fn tcp_flags_roundtrip_in_fixed_order() {
        let flags = TcpFlags::ACK | TcpFlags::SYN;
        let json = serde_json::to_string(&flags).unwrap();
        assert_eq!(json, r#"["syn","ack"]"#);
        let back: TcpFlags = serde_json::from_str(&json).unwrap();
        assert_eq!(back, flags);
    }

    #[test]
    fn label_attack_kind_tie_enforced() {
        let mut pkt = sample();
        pkt.attack_kind = AttackKind::Scan;
        assert!(pkt.validate().is_err());
        pkt.mark_attack(AttackKind::Scan);
        assert_eq!(pkt.label, Label::Anomalous);
        pkt.validate().unwrap();
    }

    #[test]
    fn unsorted_log_rejected() {
        let mut a = sample();
        let mut b = sample();
        a.ts = 2.0;
        b.ts = 1.0;
        let err = check_sorted(&[a, b]).unwrap_err();
        match err {
            Error::UnsortedPackets { index, .. } => assert_eq!(index, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
