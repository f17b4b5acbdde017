use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::{self, Reader, Record};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Proto {
    Tcp,
    Udp,
    Icmp,
    Other,
}

impl Proto {
    pub const ALL: [Proto; 4] = [Proto::Tcp, Proto::Udp, Proto::Icmp, Proto::Other];

    pub fn parse(s: &str) -> Self {
        match s.trim().to_ascii_lowercase().as_str() {
            "tcp" => Proto::Tcp,
            "udp" => Proto::Udp,
            "icmp" | "ipv6-icmp" | "icmp6" => Proto::Icmp,
            _ => Proto::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Proto::Tcp => "tcp",
            Proto::Udp => "udp",
            Proto::Icmp => "icmp",
            Proto::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Service {
    Dns,
    Http,
    Ssl,
    Smtp,
    Irc,
    Ftp,
    Ssh,
    Mysql,
    Imap,
    Dhcp,
    None,
    Other,
}

impl Service {
    pub const ALL: [Service; 12] = [
        Service::Dns,
        Service::Http,
        Service::Ssl,
        Service::Smtp,
        Service::Irc,
        Service::Ftp,
        Service::Ssh,
        Service::Mysql,
        Service::Imap,
        Service::Dhcp,
        Service::None,
        Service::Other,
    ];

    /// Zeek may list several comma-separated analyzers; the first one wins.
    pub fn parse(s: &str) -> Self {
        let first = s
            .split(',')
            .next()
            .unwrap_or("")
            .trim()
            .to_ascii_lowercase();
        match first.as_str() {
            "" | "-" | "(empty)" | "none" => Service::None,
            "dns" => Service::Dns,
            "http" => Service::Http,
            "ssl" | "tls" => Service::Ssl,
            "smtp" => Service::Smtp,
            "irc" => Service::Irc,
            "ftp" | "ftp-data" => Service::Ftp,
            "ssh" => Service::Ssh,
            "mysql" => Service::Mysql,
            "imap" => Service::Imap,
            "dhcp" => Service::Dhcp,
            _ => Service::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Service::Dns => "dns",
            Service::Http => "http",
            Service::Ssl => "ssl",
            Service::Smtp => "smtp",
            Service::Irc => "irc",
            Service::Ftp => "ftp",
            Service::Ssh => "ssh",
            Service::Mysql => "mysql",
            Service::Imap => "imap",
            Service::Dhcp => "dhcp",
            Service::None => "none",
            Service::Other => "other",
        }
    }
}

/// Zeek connection states. `OTH` doubles as the bucket for unknown strings.
#[allow(clippy::upper_case_acronyms)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConnState {
    S0,
    S1,
    SF,
    REJ,
    S2,
    S3,
    RSTO,
    RSTR,
    RSTOS0,
    RSTRH,
    SH,
    SHR,
    OTH,
}

impl ConnState {
    pub const ALL: [ConnState; 13] = [
        ConnState::S0,
        ConnState::S1,
        ConnState::SF,
        ConnState::REJ,
        ConnState::S2,
        ConnState::S3,
        ConnState::RSTO,
        ConnState::RSTR,
        ConnState::RSTOS0,
        ConnState::RSTRH,
        ConnState::SH,
        ConnState::SHR,
        ConnState::OTH,
    ];

    pub fn parse(s: &str) -> Self {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .unwrap_or(ConnState::OTH)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConnState::S0 => "S0",
            ConnState::S1 => "S1",
            ConnState::SF => "SF",
            ConnState::REJ => "REJ",
            ConnState::S2 => "S2",
            ConnState::S3 => "S3",
            ConnState::RSTO => "RSTO",
            ConnState::RSTR => "RSTR",
            ConnState::RSTOS0 => "RSTOS0",
            ConnState::RSTRH => "RSTRH",
            ConnState::SH => "SH",
            ConnState::SHR => "SHR",
            ConnState::OTH => "OTH",
        }
    }
}

/// One connection log entry.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    /// Seconds since the epoch.
    pub ts: f64,
    pub src_ip: String,
    pub src_port: u16,
    pub dst_ip: String,
    pub dst_port: u16,
    pub proto: Proto,
    pub service: Service,
    pub duration: f64,
    pub orig_bytes: u64,
    pub resp_bytes: u64,
    pub missed_bytes: u64,
    pub orig_pkts: u64,
    pub resp_pkts: u64,
    pub conn_state: ConnState,
}

impl FlowRecord {
    /// A zero-valued TCP record; handy as a struct-update base.
    pub fn new(ts: f64, src_ip: impl Into<String>, dst_ip: impl Into<String>) -> Self {
        Self {
            ts,
            src_ip: src_ip.into(),
            src_port: 0,
            dst_ip: dst_ip.into(),
            dst_port: 0,
            proto: Proto::Tcp,
            service: Service::None,
            duration: 0.0,
            orig_bytes: 0,
            resp_bytes: 0,
            missed_bytes: 0,
            orig_pkts: 0,
            resp_pkts: 0,
            conn_state: ConnState::OTH,
        }
    }
}

fn index_of<T: PartialEq + Copy>(all: &[T], v: T) -> u8 {
    all.iter().position(|&x| x == v).expect("variant listed") as u8
}

fn from_index<T: Copy>(all: &[T], i: u8, what: &str) -> Result<T> {
    all.get(i as usize)
        .copied()
        .ok_or_else(|| Error::Format(format!("bad {what} code {i}")))
}

impl Record for FlowRecord {
    const KIND: [u8; 4] = *b"FLOW";

    fn encode(&self, out: &mut Vec<u8>) {
        codec::put_f64(out, self.ts);
        codec::put_str(out, &self.src_ip);
        codec::put_u16(out, self.src_port);
        codec::put_str(out, &self.dst_ip);
        codec::put_u16(out, self.dst_port);
        codec::put_u8(out, index_of(&Proto::ALL, self.proto));
        codec::put_u8(out, index_of(&Service::ALL, self.service));
        codec::put_f64(out, self.duration);
        codec::put_u64(out, self.orig_bytes);
        codec::put_u64(out, self.resp_bytes);
        codec::put_u64(out, self.missed_bytes);
        codec::put_u64(out, self.orig_pkts);
        codec::put_u64(out, self.resp_pkts);
        codec::put_u8(out, index_of(&ConnState::ALL, self.conn_state));
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        Ok(Self {
            ts: r.f64()?,
            src_ip: r.string()?,
            src_port: r.u16()?,
            dst_ip: r.string()?,
            dst_port: r.u16()?,
            proto: from_index(&Proto::ALL, r.u8()?, "proto")?,
            service: from_index(&Service::ALL, r.u8()?, "service")?,
            duration: r.f64()?,
            orig_bytes: r.u64()?,
            resp_bytes: r.u64()?,
            missed_bytes: r.u64()?,
            orig_pkts: r.u64()?,
            resp_pkts: r.u64()?,
            conn_state: from_index(&ConnState::ALL, r.u8()?, "conn_state")?,
        })
    }
}

/// One `weird.log` entry.
#[derive(Debug, Clone, PartialEq)]
pub struct WeirdEvent {
    pub ts: f64,
    pub src_ip: String,
    pub name: String,
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    #[default]
    Normal,
    Malicious,
}

impl Label {
    pub fn is_malicious(self) -> bool {
        self == Label::Malicious
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Malicious => "malicious",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "normal" => Some(Label::Normal),
            "malicious" => Some(Label::Malicious),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A line the parser could not turn into a record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedLine {
    /// 1-based.
    pub line: usize,
    pub reason: String,
}

/// Parser output: records in input order plus the lines that were skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub skipped: Vec<SkippedLine>,
}

impl<T> Default for Parsed<T> {
    fn default() -> Self {
        Self {
            records: Vec::new(),
            skipped: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_vocabulary_maps_to_other() {
        assert_eq!(Service::parse("gssapi"), Service::Other);
        assert_eq!(Service::parse("-"), Service::None);
        assert_eq!(Service::parse("ssl,http"), Service::Ssl);
        assert_eq!(ConnState::parse("S_RA"), ConnState::OTH);
        assert_eq!(ConnState::parse("RSTOS0"), ConnState::RSTOS0);
        assert_eq!(Proto::parse("sctp"), Proto::Other);
    }
}
