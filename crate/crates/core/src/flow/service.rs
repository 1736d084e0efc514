//! Service vocabulary (79 tokens) and the port map that derives a flow's
//! service. Resolution checks both canonical endpoints so the result does
//! not depend on flow direction; unknown privileged ports map to `private`,
//! anything else to `other`.

use crate::packet::Proto;

/// The full 79-token service vocabulary: the classic intrusion-detection
/// service names plus the ICS/substation protocols this toolkit models.
/// Order is part of the encoding schema.
pub const SERVICE_TOKENS: [&str; 79] = [
    "aol",
    "auth",
    "bgp",
    "courier",
    "csnet_ns",
    "ctf",
    "daytime",
    "discard",
    "domain",
    "domain_u",
    "echo",
    "eco_i",
    "ecr_i",
    "efs",
    "exec",
    "finger",
    "ftp",
    "ftp_data",
    "gopher",
    "harvest",
    "hostnames",
    "http",
    "http_2784",
    "http_443",
    "http_8001",
    "imap4",
    "irc",
    "iso_tsap",
    "klogin",
    "kshell",
    "ldap",
    "link",
    "login",
    "mtp",
    "name",
    "netbios_dgm",
    "netbios_ns",
    "netbios_ssn",
    "netstat",
    "nnsp",
    "nntp",
    "ntp_u",
    "other",
    "pm_dump",
    "pop_2",
    "pop_3",
    "printer",
    "private",
    "red_i",
    "remote_job",
    "rje",
    "shell",
    "smtp",
    "sql_net",
    "ssh",
    "sunrpc",
    "supdup",
    "systat",
    "telnet",
    "tftp_u",
    "tim_i",
    "time",
    "urh_i",
    "urp_i",
    "uucp",
    "uucp_path",
    "vmnet",
    "whois",
    "x11",
    "z39_50",
    "iec104",
    "dnp3",
    "modbus",
    "mms",
    "goose",
    "opcua",
    "bacnet",
    "synchrophasor",
    "s7",
];

/// Well-known port assignments used by the generators and the feature
/// extractor.
fn lookup(proto: Proto, port: u16) -> Option<&'static str> {
    let svc = match (proto, port) {
        (Proto::Tcp, 7) | (Proto::Udp, 7) => "echo",
        (Proto::Tcp, 9) => "discard",
        (Proto::Tcp, 11) => "systat",
        (Proto::Tcp, 13) => "daytime",
        (Proto::Tcp, 15) => "netstat",
        (Proto::Tcp, 20) => "ftp_data",
        (Proto::Tcp, 21) => "ftp",
        (Proto::Tcp, 22) => "ssh",
        (Proto::Tcp, 23) => "telnet",
        (Proto::Tcp, 25) => "smtp",
        (Proto::Tcp, 37) => "time",
        (Proto::Tcp, 43) => "whois",
        (Proto::Tcp, 53) => "domain",
        (Proto::Udp, 53) => "domain_u",
        (Proto::Tcp, 70) => "gopher",
        (Proto::Udp, 69) => "tftp_u",
        (Proto::Tcp, 79) => "finger",
        (Proto::Tcp, 80) => "http",
        (Proto::Tcp, 84) => "ctf",
        (Proto::Tcp, 102) => "mms",
        (Proto::Tcp, 105) => "csnet_ns",
        (Proto::Tcp, 109) => "pop_2",
        (Proto::Tcp, 110) => "pop_3",
        (Proto::Tcp, 113) => "auth",
        (Proto::Tcp, 117) => "uucp_path",
        (Proto::Tcp, 119) => "nntp",
        (Proto::Udp, 123) => "ntp_u",
        (Proto::Udp, 137) => "netbios_ns",
        (Proto::Udp, 138) => "netbios_dgm",
        (Proto::Tcp, 139) => "netbios_ssn",
        (Proto::Tcp, 143) => "imap4",
        (Proto::Tcp, 179) => "bgp",
        (Proto::Tcp, 210) => "z39_50",
        (Proto::Tcp, 389) => "ldap",
        (Proto::Tcp, 443) => "http_443",
        (Proto::Tcp, 502) => "modbus",
        (Proto::Tcp, 513) => "login",
        (Proto::Tcp, 514) => "shell",
        (Proto::Tcp, 515) => "printer",
        (Proto::Tcp, 530) => "courier",
        (Proto::Tcp, 540) => "uucp",
        (Proto::Tcp, 543) => "klogin",
        (Proto::Tcp, 544) => "kshell",
        (Proto::Tcp, 1521) => "sql_net",
        (Proto::Tcp, 2404) | (Proto::Udp, 2404) => "iec104",
        (Proto::Tcp, 2784) => "http_2784",
        (Proto::Tcp, 4712) | (Proto::Udp, 4712) => "synchrophasor",
        (Proto::Tcp, 4840) => "opcua",
        (Proto::Tcp, 6000) => "x11",
        (Proto::Tcp, 6667) => "irc",
        (Proto::Tcp, 8001) => "http_8001",
        (Proto::Tcp, 20000) | (Proto::Udp, 20000) => "dnp3",
        (Proto::Udp, 47808) => "bacnet",
        (Proto::Icmp, _) => "eco_i",
        _ => return None,
    };
    Some(svc)
}

/// Direction-independent service for a canonicalized flow: whichever
/// endpoint port carries a known service wins (the lower port on a tie),
/// otherwise privileged ports fall back to `private` and the rest to
/// `other`.
pub fn service_for_flow(proto: Proto, port_lo: u16, port_hi: u16) -> &'static str {
    let (a, b) = if port_lo <= port_hi {
        (port_lo, port_hi)
    } else {
        (port_hi, port_lo)
    };
    if let Some(svc) = lookup(proto, a) {
        return svc;
    }
    if let Some(svc) = lookup(proto, b) {
        return svc;
    }
    if a < 1024 {
        "private"
    } else {
        "other"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn vocabulary_has_79_unique_tokens() {
        let set: HashSet<&str> = SERVICE_TOKENS.iter().copied().collect();
        assert_eq!(set.len(), 79);
        assert!(set.contains("other"));
    }

    #[test]
    fn every_mapped_service_is_in_vocabulary() {
        let set: HashSet<&str> = SERVICE_TOKENS.iter().copied().collect();
        for port in 0u16..=65535 {
            for proto in [Proto::Tcp, Proto::Udp, Proto::Icmp] {
                if let Some(svc) = lookup(proto, port) {
                    assert!(set.contains(svc), "{svc} missing from vocabulary");
                }
            }
        }
    }

    #[test]
    fn resolution_is_direction_free() {
        assert_eq!(service_for_flow(Proto::Tcp, 80, 49152), "http");
        assert_eq!(service_for_flow(Proto::Tcp, 49152, 80), "http");
        assert_eq!(service_for_flow(Proto::Udp, 40000, 2404), "iec104");
        assert_eq!(service_for_flow(Proto::Tcp, 999, 5555), "private");
        assert_eq!(service_for_flow(Proto::Tcp, 5555, 9999), "other");
    }
}
