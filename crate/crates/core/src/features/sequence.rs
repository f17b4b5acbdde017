use std::collections::BTreeMap;

use super::aggregate::{AggFlow, WindowConfig};

/// Time-ordered AggFlows from one block of N consecutive windows.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSequence {
    pub agg_flows: Vec<AggFlow>,
    /// Validity bit per position, padded to the configured maximum length.
    pub mask: Vec<bool>,
    /// First and last window index of the block the sequence came from.
    pub window_span: (i64, i64),
}

impl FlowSequence {
    pub fn len(&self) -> usize {
        self.agg_flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agg_flows.is_empty()
    }

    /// Wraps already ordered flows with a full mask; used for synthetic data.
    pub fn from_flows(agg_flows: Vec<AggFlow>) -> Self {
        let span = match (agg_flows.first(), agg_flows.last()) {
            (Some(a), Some(b)) => (a.window_index, b.window_index),
            _ => (0, 0),
        };
        Self {
            mask: vec![true; agg_flows.len()],
            agg_flows,
            window_span: span,
        }
    }
}

/// Block number of a window: blocks tile the window axis in runs of N.
pub fn block_of(window: i64, n: usize) -> i64 {
    window.div_euclid(n as i64)
}

/// Groups AggFlows into non-overlapping blocks of N windows, sorts each
/// block, and splits it into chunks of at most L. Flows from different
/// scenarios never share a sequence.
pub fn build_sequences(flows: &[AggFlow], cfg: &WindowConfig) -> Vec<FlowSequence> {
    let n = cfg.windows_per_sequence.max(1);
    let l = cfg.max_sequence_len.max(1);
    let mut blocks: BTreeMap<(Option<u32>, i64), Vec<&AggFlow>> = BTreeMap::new();
    for f in flows {
        blocks
            .entry((f.scenario, block_of(f.window_index, n)))
            .or_default()
            .push(f);
    }
    let mut out = Vec::new();
    for ((_, block), mut members) in blocks {
        members.sort_by(|a, b| {
            a.window_index
                .cmp(&b.window_index)
                .then(a.group_first_ts.total_cmp(&b.group_first_ts))
                .then_with(|| a.src_ip.cmp(&b.src_ip))
        });
        let span = (block * n as i64, block * n as i64 + n as i64 - 1);
        for chunk in members.chunks(l) {
            let mut mask = vec![false; l];
            mask[..chunk.len()].fill(true);
            out.push(FlowSequence {
                agg_flows: chunk.iter().map(|f| (*f).clone()).collect(),
                mask,
                window_span: span,
            });
        }
    }
    out
}
