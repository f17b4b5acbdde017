use serde::{Deserialize, Serialize};

use crate::ingest::{ConnState, FlowRecord, Proto, Service};
use crate::{Error, Result};

/// Names of the scalar features that precede the categorical counts.
pub const BASE_FEATURES: [&str; 11] = [
    "n_connections",
    "n_unique_dst_ip",
    "n_unique_dst_port",
    "n_unique_src_port",
    "sum_duration",
    "mean_duration",
    "sum_orig_bytes",
    "sum_resp_bytes",
    "sum_missed_bytes",
    "sum_orig_pkts",
    "sum_resp_pkts",
];

/// Categorical vocabularies that fix the feature width.
///
/// Values outside a vocabulary fall into its catch-all bucket, so each
/// vocabulary must contain one: `other` for protocols and services, `OTH` for
/// connection states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSchema {
    pub protos: Vec<Proto>,
    pub conn_states: Vec<ConnState>,
    pub services: Vec<Service>,
}

impl Default for FeatureSchema {
    fn default() -> Self {
        Self {
            protos: Proto::ALL.to_vec(),
            conn_states: ConnState::ALL.to_vec(),
            services: Service::ALL.to_vec(),
        }
    }
}

fn check_vocab<T: PartialEq + Copy + std::fmt::Debug>(
    name: &str,
    v: &[T],
    catch_all: T,
) -> Result<()> {
    if !v.contains(&catch_all) {
        return Err(Error::InvalidConfig(format!(
            "{name} vocabulary must contain {catch_all:?}"
        )));
    }
    for (i, x) in v.iter().enumerate() {
        if v[..i].contains(x) {
            return Err(Error::InvalidConfig(format!(
                "{name} vocabulary lists {x:?} twice"
            )));
        }
    }
    Ok(())
}

impl FeatureSchema {
    pub fn validate(&self) -> Result<()> {
        check_vocab("proto", &self.protos, Proto::Other)?;
        check_vocab("conn_state", &self.conn_states, ConnState::OTH)?;
        check_vocab("service", &self.services, Service::Other)
    }

    pub fn width(&self) -> usize {
        BASE_FEATURES.len() + self.protos.len() + self.conn_states.len() + self.services.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = BASE_FEATURES.iter().map(|s| s.to_string()).collect();
        names.extend(self.protos.iter().map(|p| format!("proto_{}", p.as_str())));
        names.extend(
            self.conn_states
                .iter()
                .map(|c| format!("state_{}", c.as_str())),
        );
        names.extend(
            self.services
                .iter()
                .map(|s| format!("service_{}", s.as_str())),
        );
        names
    }

    /// Column offsets of the three count groups.
    pub fn proto_offset(&self) -> usize {
        BASE_FEATURES.len()
    }

    pub fn state_offset(&self) -> usize {
        self.proto_offset() + self.protos.len()
    }

    pub fn service_offset(&self) -> usize {
        self.state_offset() + self.conn_states.len()
    }

    pub(crate) fn category_columns(&self, r: &FlowRecord) -> [usize; 3] {
        let slot = |pos: Option<usize>, fallback: usize| pos.unwrap_or(fallback);
        let p = slot(
            self.protos.iter().position(|&x| x == r.proto),
            self.protos
                .iter()
                .position(|&x| x == Proto::Other)
                .expect("validated"),
        );
        let c = slot(
            self.conn_states.iter().position(|&x| x == r.conn_state),
            self.conn_states
                .iter()
                .position(|&x| x == ConnState::OTH)
                .expect("validated"),
        );
        let s = slot(
            self.services.iter().position(|&x| x == r.service),
            self.services
                .iter()
                .position(|&x| x == Service::Other)
                .expect("validated"),
        );
        [
            self.proto_offset() + p,
            self.state_offset() + c,
            self.service_offset() + s,
        ]
    }
}
