//! CSV flow reader for NetFlow-style exports.

use std::collections::HashMap;
use std::io::Read;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::record::{ConnState, FlowRecord, Parsed, Proto, Service, SkippedLine};
use crate::{Error, Result};

/// Column names for each FlowRecord field. `None` means the column is absent
/// and the field takes its default.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub ts: String,
    pub src_ip: String,
    pub dst_ip: String,
    pub src_port: Option<String>,
    pub dst_port: Option<String>,
    pub proto: Option<String>,
    pub service: Option<String>,
    pub duration: Option<String>,
    pub orig_bytes: Option<String>,
    pub resp_bytes: Option<String>,
    pub missed_bytes: Option<String>,
    pub orig_pkts: Option<String>,
    pub resp_pkts: Option<String>,
    pub conn_state: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        let s = |n: &str| Some(n.to_string());
        Self {
            ts: "ts".into(),
            src_ip: "src_ip".into(),
            dst_ip: "dst_ip".into(),
            src_port: s("src_port"),
            dst_port: s("dst_port"),
            proto: s("proto"),
            service: s("service"),
            duration: s("duration"),
            orig_bytes: s("orig_bytes"),
            resp_bytes: s("resp_bytes"),
            missed_bytes: s("missed_bytes"),
            orig_pkts: s("orig_pkts"),
            resp_pkts: s("resp_pkts"),
            conn_state: s("conn_state"),
        }
    }
}

impl CsvSchema {
    /// Column layout of the CTU-13 `.binetflow` files. Argus reports totals
    /// and source bytes only, so response counters stay at zero.
    pub fn ctu13_binetflow() -> Self {
        let s = |n: &str| Some(n.to_string());
        Self {
            ts: "StartTime".into(),
            src_ip: "SrcAddr".into(),
            dst_ip: "DstAddr".into(),
            src_port: s("Sport"),
            dst_port: s("Dport"),
            proto: s("Proto"),
            service: None,
            duration: s("Dur"),
            orig_bytes: s("SrcBytes"),
            resp_bytes: None,
            missed_bytes: None,
            orig_pkts: s("TotPkts"),
            resp_pkts: None,
            conn_state: s("State"),
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "default" | "canonical" => Some(Self::default()),
            "ctu13_binetflow" | "ctu13" => Some(Self::ctu13_binetflow()),
            _ => None,
        }
    }
}

const DATETIME_FORMATS: &[&str] = &[
    "%Y/%m/%d %H:%M:%S%.f",
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M:%S%.f",
];

/// Epoch seconds from either a number or a naive UTC datetime.
pub fn parse_timestamp(v: &str) -> Option<f64> {
    let v = v.trim();
    if let Ok(t) = v.parse::<f64>() {
        return (t.is_finite() && t > 0.0).then_some(t);
    }
    DATETIME_FORMATS.iter().find_map(|fmt| {
        let dt = NaiveDateTime::parse_from_str(v, fmt).ok()?.and_utc();
        let t = dt.timestamp() as f64 + f64::from(dt.timestamp_subsec_nanos()) * 1e-9;
        (t > 0.0).then_some(t)
    })
}

/// Decimal or `0x`-prefixed hexadecimal port.
pub fn parse_port(v: &str) -> Option<u16> {
    let v = v.trim();
    match v.strip_prefix("0x").or_else(|| v.strip_prefix("0X")) {
        Some(hex) => u16::from_str_radix(hex, 16).ok(),
        None => v.parse().ok(),
    }
}

struct Columns {
    index: HashMap<String, usize>,
}

impl Columns {
    fn pos(&self, name: Option<&String>) -> Option<usize> {
        name.and_then(|n| self.index.get(n).copied())
    }
}

fn cell(row: &csv::StringRecord, pos: Option<usize>) -> Option<&str> {
    let v = row.get(pos?)?.trim();
    (!v.is_empty() && v != "-").then_some(v)
}

fn count(
    row: &csv::StringRecord,
    pos: Option<usize>,
    name: &str,
) -> std::result::Result<u64, String> {
    match cell(row, pos) {
        None => Ok(0),
        Some(v) => v.parse::<u64>().map_err(|_| format!("bad {name} {v:?}")),
    }
}

/// Parses a headed CSV stream. Rows with fewer columns than the header, or
/// with unusable required values, are skipped with their line number.
pub fn parse_flow_csv<R: Read>(input: R, schema: &CsvSchema) -> Result<Parsed<FlowRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let cols = Columns {
        index: headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect(),
    };
    let required = [&schema.ts, &schema.src_ip, &schema.dst_ip];
    if let Some(missing) = required
        .iter()
        .find(|c| !cols.index.contains_key(c.as_str()))
    {
        if headers.is_empty() {
            return Ok(Parsed::default());
        }
        return Err(Error::MalformedHeader(format!(
            "missing required column {missing}"
        )));
    }
    let ts_pos = cols.index[&schema.ts];
    let src_pos = cols.index[&schema.src_ip];
    let dst_pos = cols.index[&schema.dst_ip];
    let pos = |c: &Option<String>| cols.pos(c.as_ref());
    let positions = [
        pos(&schema.src_port),
        pos(&schema.dst_port),
        pos(&schema.proto),
        pos(&schema.service),
        pos(&schema.duration),
        pos(&schema.orig_bytes),
        pos(&schema.resp_bytes),
        pos(&schema.missed_bytes),
        pos(&schema.orig_pkts),
        pos(&schema.resp_pkts),
        pos(&schema.conn_state),
    ];
    let [sport, dport, proto, service, duration, ob, rb, mb, op, rp, state] = positions;

    let mut out = Parsed::default();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() < headers.len() {
            out.skipped.push(SkippedLine {
                line,
                reason: format!("{} columns, expected {}", row.len(), headers.len()),
            });
            continue;
        }
        let build = || -> std::result::Result<FlowRecord, String> {
            let ts_raw = cell(&row, Some(ts_pos)).ok_or("ts is empty")?;
            let ts = parse_timestamp(ts_raw).ok_or_else(|| format!("bad ts {ts_raw:?}"))?;
            let port = |p: Option<usize>, name: &str| match cell(&row, p) {
                None => Ok(0),
                Some(v) => parse_port(v).ok_or_else(|| format!("bad {name} {v:?}")),
            };
            let duration = match cell(&row, duration) {
                None => 0.0,
                Some(v) => v
                    .parse::<f64>()
                    .ok()
                    .filter(|d| d.is_finite() && *d >= 0.0)
                    .ok_or_else(|| format!("bad duration {v:?}"))?,
            };
            Ok(FlowRecord {
                ts,
                src_ip: cell(&row, Some(src_pos))
                    .ok_or("src_ip is empty")?
                    .to_string(),
                src_port: port(sport, "src_port")?,
                dst_ip: cell(&row, Some(dst_pos))
                    .ok_or("dst_ip is empty")?
                    .to_string(),
                dst_port: port(dport, "dst_port")?,
                proto: cell(&row, proto).map_or(Proto::Other, Proto::parse),
                service: cell(&row, service).map_or(Service::None, Service::parse),
                duration,
                orig_bytes: count(&row, ob, "orig_bytes")?,
                resp_bytes: count(&row, rb, "resp_bytes")?,
                missed_bytes: count(&row, mb, "missed_bytes")?,
                orig_pkts: count(&row, op, "orig_pkts")?,
                resp_pkts: count(&row, rp, "resp_pkts")?,
                conn_state: cell(&row, state).map_or(ConnState::OTH, ConnState::parse),
            })
        };
        match build() {
            Ok(r) => out.records.push(r),
            Err(reason) => out.skipped.push(SkippedLine { line, reason }),
        }
    }
    Ok(out)
}
