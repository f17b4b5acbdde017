//! Windowed per-host aggregation, normalization, and sequence assembly.

mod aggregate;
mod normalize;
mod schema;
mod sequence;

use std::io::{Read, Write};

pub use aggregate::{aggregate_flows, aggregate_window, AggFlow, WindowConfig};
pub use normalize::{apply_normalizer, fit_normalizer, NormalizerState};
pub use schema::{FeatureSchema, BASE_FEATURES};
pub use sequence::{block_of, build_sequences, FlowSequence};

use crate::codec::{self, ConfigHash};
use crate::Result;

pub fn write_agg_cache(
    w: &mut impl Write,
    config_hash: &ConfigHash,
    flows: &[AggFlow],
) -> Result<()> {
    codec::write_cache(w, config_hash, flows)
}

pub fn read_agg_cache(r: &mut impl Read) -> Result<(ConfigHash, Vec<AggFlow>)> {
    let (header, flows) = codec::read_cache(r)?;
    Ok((header.config_hash, flows))
}

/// Feature matrix as CSV: identifying columns, then one column per feature.
pub fn write_feature_csv(w: impl Write, schema: &FeatureSchema, flows: &[AggFlow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["window_index".to_string(), "src_ip".into(), "label".into()];
    header.extend(schema.feature_names());
    out.write_record(&header)?;
    for f in flows {
        let mut row = vec![
            f.window_index.to_string(),
            f.src_ip.clone(),
            f.label.to_string(),
        ];
        row.extend(f.features.iter().map(|v| v.to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}
