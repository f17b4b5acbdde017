use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::schema::FeatureSchema;
use crate::codec::{self, Reader, Record};
use crate::ingest::{FlowRecord, HostLabelSet, Label};
use crate::{Error, Result};

/// Window and sequence geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    /// Window length T in seconds.
    pub duration_s: f64,
    /// Windows per sequence block, N.
    pub windows_per_sequence: usize,
    /// Longest emitted sequence, L.
    pub max_sequence_len: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            duration_s: 60.0,
            windows_per_sequence: 3,
            max_sequence_len: 128,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "window duration {} must be > 0",
                self.duration_s
            )));
        }
        if self.windows_per_sequence == 0 {
            return Err(Error::InvalidConfig(
                "windows_per_sequence must be >= 1".into(),
            ));
        }
        if self.max_sequence_len == 0 {
            return Err(Error::InvalidConfig("max_sequence_len must be >= 1".into()));
        }
        Ok(())
    }

    /// Epoch-aligned tumbling window containing `ts`.
    pub fn window_of(&self, ts: f64) -> i64 {
        (ts / self.duration_s).floor() as i64
    }
}

/// Per-(window, source host) aggregate. Features are raw counts until a
/// normalizer is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct AggFlow {
    pub window_index: i64,
    pub src_ip: String,
    pub group_first_ts: f64,
    pub features: Vec<f64>,
    pub label: Label,
    pub scenario: Option<u32>,
}

/// Aggregates the flows of one window, one AggFlow per source host, ordered
/// by (first timestamp, source IP). Labels start as normal.
pub fn aggregate_window(
    flows: &[FlowRecord],
    window_index: i64,
    schema: &FeatureSchema,
) -> Vec<AggFlow> {
    let mut groups: BTreeMap<&str, Vec<&FlowRecord>> = BTreeMap::new();
    for f in flows {
        groups.entry(f.src_ip.as_str()).or_default().push(f);
    }
    let width = schema.width();
    let mut out: Vec<AggFlow> = groups
        .into_iter()
        .map(|(src, group)| {
            let mut x = vec![0.0; width];
            let dst_ips: HashSet<&str> = group.iter().map(|f| f.dst_ip.as_str()).collect();
            let dst_ports: HashSet<u16> = group.iter().map(|f| f.dst_port).collect();
            let src_ports: HashSet<u16> = group.iter().map(|f| f.src_port).collect();
            let n = group.len() as f64;
            x[0] = n;
            x[1] = dst_ips.len() as f64;
            x[2] = dst_ports.len() as f64;
            x[3] = src_ports.len() as f64;
            for f in &group {
                x[4] += f.duration;
                x[6] += f.orig_bytes as f64;
                x[7] += f.resp_bytes as f64;
                x[8] += f.missed_bytes as f64;
                x[9] += f.orig_pkts as f64;
                x[10] += f.resp_pkts as f64;
                for col in schema.category_columns(f) {
                    x[col] += 1.0;
                }
            }
            x[5] = x[4] / n;
            AggFlow {
                window_index,
                src_ip: src.to_string(),
                group_first_ts: group.iter().map(|f| f.ts).fold(f64::INFINITY, f64::min),
                features: x,
                label: Label::Normal,
                scenario: None,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        a.group_first_ts
            .total_cmp(&b.group_first_ts)
            .then_with(|| a.src_ip.cmp(&b.src_ip))
    });
    out
}

/// Buckets flows into windows and aggregates each one. Output is ordered by
/// (window, first timestamp, source IP); labels come from `labels`.
pub fn aggregate_flows(
    flows: &[FlowRecord],
    cfg: &WindowConfig,
    schema: &FeatureSchema,
    labels: &HostLabelSet,
    scenario: Option<u32>,
) -> Result<Vec<AggFlow>> {
    cfg.validate()?;
    schema.validate()?;
    let mut windows: BTreeMap<i64, Vec<FlowRecord>> = BTreeMap::new();
    for f in flows {
        windows
            .entry(cfg.window_of(f.ts))
            .or_default()
            .push(f.clone());
    }
    let mut out = Vec::new();
    for (w, group) in windows {
        for mut a in aggregate_window(&group, w, schema) {
            a.label = labels.get(&a.src_ip);
            a.scenario = scenario;
            out.push(a);
        }
    }
    Ok(out)
}

impl Record for AggFlow {
    const KIND: [u8; 4] = *b"AGGF";

    fn encode(&self, out: &mut Vec<u8>) {
        codec::put_i64(out, self.window_index);
        codec::put_str(out, &self.src_ip);
        codec::put_f64(out, self.group_first_ts);
        codec::put_u8(out, self.label.is_malicious() as u8);
        match self.scenario {
            Some(s) => {
                codec::put_u8(out, 1);
                codec::put_u32(out, s);
            }
            None => codec::put_u8(out, 0),
        }
        codec::put_u32(out, self.features.len() as u32);
        for &v in &self.features {
            codec::put_f64(out, v);
        }
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let window_index = r.i64()?;
        let src_ip = r.string()?;
        let group_first_ts = r.f64()?;
        let label = match r.u8()? {
            0 => Label::Normal,
            1 => Label::Malicious,
            x => return Err(Error::Format(format!("bad label code {x}"))),
        };
        let scenario = match r.u8()? {
            0 => None,
            1 => Some(r.u32()?),
            x => return Err(Error::Format(format!("bad scenario flag {x}"))),
        };
        let n = r.u32()? as usize;
        let features = (0..n).map(|_| r.f64()).collect::<Result<_>>()?;
        Ok(Self {
            window_index,
            src_ip,
            group_first_ts,
            features,
            label,
            scenario,
        })
    }
}
