//! Flow log ingestion: Zeek TSV, CSV, and weird-log host labels.

mod csv;
mod labels;
mod record;
mod zeek;

use std::io::{Read, Write};

pub use self::csv::{parse_flow_csv, parse_port, parse_timestamp, CsvSchema};
pub use self::labels::{default_indicators, derive_labels, HostLabelSet, DEFAULT_INDICATORS};
pub use self::record::{
    ConnState, FlowRecord, Label, Parsed, Proto, Service, SkippedLine, WeirdEvent,
};
pub use self::zeek::{
    parse_conn_log, parse_weird_log, write_conn_log, write_weird_log, FieldSpec, CONN_FIELDS,
    WEIRD_FIELDS,
};

use crate::codec::{self, ConfigHash};
use crate::Result;

pub fn write_flow_cache(
    w: &mut impl Write,
    config_hash: &ConfigHash,
    records: &[FlowRecord],
) -> Result<()> {
    codec::write_cache(w, config_hash, records)
}

pub fn read_flow_cache(r: &mut impl Read) -> Result<(ConfigHash, Vec<FlowRecord>)> {
    let (header, records) = codec::read_cache(r)?;
    Ok((header.config_hash, records))
}
