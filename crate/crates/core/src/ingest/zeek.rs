//! Zeek TSV log reader and writer.
//!
//! Framing follows Zeek's ASCII writer: `#`-prefixed directives, tab-separated
//! data lines, `-` for unset fields and `(empty)` for empty containers.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use super::record::{ConnState, FlowRecord, Parsed, Proto, Service, SkippedLine, WeirdEvent};
use crate::{Error, Result};

/// Ordered column names for a Zeek log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSpec {
    names: Vec<String>,
}

pub const CONN_FIELDS: &[&str] = &[
    "ts",
    "uid",
    "id.orig_h",
    "id.orig_p",
    "id.resp_h",
    "id.resp_p",
    "proto",
    "service",
    "duration",
    "orig_bytes",
    "resp_bytes",
    "missed_bytes",
    "conn_state",
    "local_orig",
    "orig_pkts",
    "orig_ip_bytes",
    "resp_pkts",
    "resp_ip_bytes",
];

pub const WEIRD_FIELDS: &[&str] = &[
    "ts",
    "uid",
    "id.orig_h",
    "id.orig_p",
    "id.resp_h",
    "id.resp_p",
    "name",
    "addl",
    "notice",
    "peer",
];

const CONN_REQUIRED: &[&str] = &[
    "ts",
    "id.orig_h",
    "id.orig_p",
    "id.resp_h",
    "id.resp_p",
    "proto",
];
const WEIRD_REQUIRED: &[&str] = &["ts", "id.orig_h", "name"];

impl FieldSpec {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::MalformedHeader("empty field list".into()));
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() {
                return Err(Error::MalformedHeader(format!(
                    "field {} has no name",
                    i + 1
                )));
            }
            if names[..i].contains(n) {
                return Err(Error::MalformedHeader(format!("duplicate field {n}")));
            }
        }
        Ok(Self { names })
    }

    pub fn conn() -> Self {
        Self::new(CONN_FIELDS.iter().copied()).expect("static field list")
    }

    pub fn weird() -> Self {
        Self::new(WEIRD_FIELDS.iter().copied()).expect("static field list")
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    fn index(&self) -> HashMap<&str, usize> {
        self.names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect()
    }
}

fn unescape_separator(raw: &str) -> Result<String> {
    let mut out = String::new();
    let mut rest = raw;
    while !rest.is_empty() {
        if let Some(hex) = rest.strip_prefix("\\x") {
            let code = hex
                .get(..2)
                .and_then(|h| u8::from_str_radix(h, 16).ok())
                .ok_or_else(|| Error::MalformedHeader(format!("bad separator escape {raw:?}")))?;
            out.push(code as char);
            rest = &hex[2..];
        } else {
            let c = rest.chars().next().expect("non-empty");
            out.push(c);
            rest = &rest[c.len_utf8()..];
        }
    }
    if out.is_empty() {
        return Err(Error::MalformedHeader("empty separator".into()));
    }
    Ok(out)
}

/// Shared line framing for every Zeek log type.
struct Framing {
    separator: String,
    unset: String,
    empty: String,
    fields: Option<FieldSpec>,
    fixed: bool,
}

impl Framing {
    fn new(spec: Option<&FieldSpec>) -> Self {
        Self {
            separator: "\t".into(),
            unset: "-".into(),
            empty: "(empty)".into(),
            fields: spec.cloned(),
            fixed: spec.is_some(),
        }
    }

    fn directive(&mut self, line: &str) -> Result<()> {
        // `#separator` is itself separated by a space; the rest use the separator.
        if let Some(rest) = line.strip_prefix("#separator") {
            let raw = rest.trim();
            if raw.is_empty() {
                return Err(Error::MalformedHeader("#separator without value".into()));
            }
            self.separator = unescape_separator(raw)?;
            return Ok(());
        }
        let mut parts = line.split(self.separator.as_str());
        let key = parts.next().unwrap_or("");
        let values: Vec<&str> = parts.collect();
        match key {
            "#fields" => {
                if self.fixed {
                    return Ok(());
                }
                self.fields = Some(FieldSpec::new(values.iter().map(|v| v.trim().to_string()))?);
            }
            "#unset_field" => {
                self.unset = values
                    .first()
                    .ok_or_else(|| Error::MalformedHeader("#unset_field without value".into()))?
                    .to_string();
            }
            "#empty_field" => {
                self.empty = values
                    .first()
                    .ok_or_else(|| Error::MalformedHeader("#empty_field without value".into()))?
                    .to_string();
            }
            _ => {}
        }
        Ok(())
    }

    /// Drives `build` over every data line. `build` returns `Err(reason)` to skip.
    fn run<T, R: BufRead>(
        mut self,
        input: R,
        required: &[&str],
        mut build: impl FnMut(&Row<'_>) -> std::result::Result<T, String>,
    ) -> Result<Parsed<T>> {
        let mut out = Parsed::default();
        let mut lookup: Option<HashMap<String, usize>> = None;
        for (i, line) in input.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.trim().is_empty() {
                continue;
            }
            if line.starts_with('#') {
                self.directive(line)?;
                lookup = None;
                continue;
            }
            let fields = self.fields.as_ref().ok_or(Error::MissingHeader(line_no))?;
            if lookup.is_none() {
                let index = fields.index();
                if let Some(missing) = required.iter().find(|r| !index.contains_key(*r)) {
                    return Err(Error::MalformedHeader(format!(
                        "missing required field {missing}"
                    )));
                }
                lookup = Some(index.into_iter().map(|(k, v)| (k.to_string(), v)).collect());
            }
            let cols: Vec<&str> = line.split(self.separator.as_str()).collect();
            if cols.len() < fields.len() {
                out.skipped.push(SkippedLine {
                    line: line_no,
                    reason: format!("{} columns, expected {}", cols.len(), fields.len()),
                });
                continue;
            }
            let row = Row {
                cols: &cols,
                index: lookup.as_ref().expect("set above"),
                unset: &self.unset,
                empty: &self.empty,
            };
            match build(&row) {
                Ok(rec) => out.records.push(rec),
                Err(reason) => out.skipped.push(SkippedLine {
                    line: line_no,
                    reason,
                }),
            }
        }
        Ok(out)
    }
}

struct Row<'a> {
    cols: &'a [&'a str],
    index: &'a HashMap<String, usize>,
    unset: &'a str,
    empty: &'a str,
}

impl Row<'_> {
    /// `None` when the column is missing from the spec or holds an absent marker.
    fn get(&self, name: &str) -> Option<&str> {
        let v = self.cols[*self.index.get(name)?].trim();
        if v.is_empty() || v == self.unset || v == self.empty {
            None
        } else {
            Some(v)
        }
    }

    fn required(&self, name: &str) -> std::result::Result<&str, String> {
        self.get(name).ok_or_else(|| format!("{name} is unset"))
    }

    fn f64_or_zero(&self, name: &str) -> std::result::Result<f64, String> {
        match self.get(name) {
            None => Ok(0.0),
            Some(v) => match v.parse::<f64>() {
                Ok(x) if x.is_finite() && x >= 0.0 => Ok(x),
                _ => Err(format!("bad {name} {v:?}")),
            },
        }
    }

    fn u64_or_zero(&self, name: &str) -> std::result::Result<u64, String> {
        match self.get(name) {
            None => Ok(0),
            Some(v) => v.parse::<u64>().map_err(|_| format!("bad {name} {v:?}")),
        }
    }

    fn ts(&self) -> std::result::Result<f64, String> {
        let v = self.required("ts")?;
        match v.parse::<f64>() {
            Ok(t) if t.is_finite() && t > 0.0 => Ok(t),
            _ => Err(format!("bad ts {v:?}")),
        }
    }

    fn port(&self, name: &str) -> std::result::Result<u16, String> {
        match self.get(name) {
            None => Ok(0),
            Some(v) => v.parse::<u16>().map_err(|_| format!("bad {name} {v:?}")),
        }
    }
}

fn conn_record(row: &Row<'_>) -> std::result::Result<FlowRecord, String> {
    Ok(FlowRecord {
        ts: row.ts()?,
        src_ip: row.required("id.orig_h")?.to_string(),
        src_port: row.port("id.orig_p")?,
        dst_ip: row.required("id.resp_h")?.to_string(),
        dst_port: row.port("id.resp_p")?,
        proto: row.get("proto").map_or(Proto::Other, Proto::parse),
        service: row.get("service").map_or(Service::None, Service::parse),
        duration: row.f64_or_zero("duration")?,
        orig_bytes: row.u64_or_zero("orig_bytes")?,
        resp_bytes: row.u64_or_zero("resp_bytes")?,
        missed_bytes: row.u64_or_zero("missed_bytes")?,
        orig_pkts: row.u64_or_zero("orig_pkts")?,
        resp_pkts: row.u64_or_zero("resp_pkts")?,
        conn_state: row
            .get("conn_state")
            .map_or(ConnState::OTH, ConnState::parse),
    })
}

/// Parses a Zeek `conn.log`. A supplied `spec` overrides any `#fields` line.
pub fn parse_conn_log<R: BufRead>(
    input: R,
    spec: Option<&FieldSpec>,
) -> Result<Parsed<FlowRecord>> {
    Framing::new(spec).run(input, CONN_REQUIRED, conn_record)
}

/// Parses a Zeek `weird.log`.
pub fn parse_weird_log<R: BufRead>(
    input: R,
    spec: Option<&FieldSpec>,
) -> Result<Parsed<WeirdEvent>> {
    Framing::new(spec).run(input, WEIRD_REQUIRED, |row| {
        Ok(WeirdEvent {
            ts: row.ts()?,
            src_ip: row.required("id.orig_h")?.to_string(),
            name: row.required("name")?.to_string(),
        })
    })
}

fn header(w: &mut impl Write, path: &str, fields: &[&str], types: &[&str]) -> Result<()> {
    writeln!(w, "#separator \\x09")?;
    writeln!(w, "#set_separator\t,")?;
    writeln!(w, "#empty_field\t(empty)")?;
    writeln!(w, "#unset_field\t-")?;
    writeln!(w, "#path\t{path}")?;
    writeln!(w, "#fields\t{}", fields.join("\t"))?;
    writeln!(w, "#types\t{}", types.join("\t"))?;
    Ok(())
}

/// Writes records in Zeek's conn.log layout. Fields the record does not carry
/// are written as unset; `uid` is a line counter.
pub fn write_conn_log(w: &mut impl Write, records: &[FlowRecord]) -> Result<()> {
    header(
        w,
        "conn",
        CONN_FIELDS,
        &[
            "time", "string", "addr", "port", "addr", "port", "enum", "string", "interval",
            "count", "count", "count", "string", "bool", "count", "count", "count", "count",
        ],
    )?;
    for (i, r) in records.iter().enumerate() {
        let service = match r.service {
            Service::None => "-",
            s => s.as_str(),
        };
        writeln!(
            w,
            "{:.6}\tC{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{}\t{}\t{}\t{}\t-\t{}\t-\t{}\t-",
            r.ts,
            i,
            r.src_ip,
            r.src_port,
            r.dst_ip,
            r.dst_port,
            r.proto.as_str(),
            service,
            r.duration,
            r.orig_bytes,
            r.resp_bytes,
            r.missed_bytes,
            r.conn_state.as_str(),
            r.orig_pkts,
            r.resp_pkts,
        )?;
    }
    Ok(())
}

pub fn write_weird_log(w: &mut impl Write, events: &[WeirdEvent]) -> Result<()> {
    header(
        w,
        "weird",
        WEIRD_FIELDS,
        &[
            "time", "string", "addr", "port", "addr", "port", "string", "string", "bool", "string",
        ],
    )?;
    for (i, e) in events.iter().enumerate() {
        writeln!(
            w,
            "{:.6}\tW{}\t{}\t-\t-\t-\t{}\t-\tF\tzeek",
            e.ts, i, e.src_ip, e.name
        )?;
    }
    Ok(())
}
