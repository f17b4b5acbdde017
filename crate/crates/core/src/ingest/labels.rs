use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use super::record::{Label, WeirdEvent};
use crate::{Error, Result};

/// Weird-log indicator names that mark a host as infected by default.
pub const DEFAULT_INDICATORS: &[&str] = &["irc_line_too_short", "irc_invalid_line"];

pub fn default_indicators() -> BTreeSet<String> {
    DEFAULT_INDICATORS.iter().map(|s| s.to_string()).collect()
}

/// Per-host labels for a whole capture. Hosts not listed are normal.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HostLabelSet {
    labels: BTreeMap<String, Label>,
}

impl HostLabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, ip: impl Into<String>, label: Label) {
        self.labels.insert(ip.into(), label);
    }

    pub fn get(&self, ip: &str) -> Label {
        self.labels.get(ip).copied().unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Label)> {
        self.labels.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn malicious(&self) -> impl Iterator<Item = &str> {
        self.iter()
            .filter(|(_, l)| l.is_malicious())
            .map(|(ip, _)| ip)
    }

    /// Tab-separated `ip<TAB>label` lines, sorted by IP.
    pub fn write_tsv(&self, w: &mut impl Write) -> Result<()> {
        for (ip, label) in self.iter() {
            writeln!(w, "{ip}\t{label}")?;
        }
        Ok(())
    }

    pub fn read_tsv(r: impl BufRead) -> Result<Self> {
        let mut out = Self::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (ip, label) = line.split_once('\t').ok_or_else(|| {
                Error::InvalidInput(format!("label line {}: expected ip<TAB>label", i + 1))
            })?;
            let label = Label::parse(label).ok_or_else(|| {
                Error::InvalidInput(format!("label line {}: unknown label {label:?}", i + 1))
            })?;
            if out.labels.insert(ip.trim().to_string(), label).is_some() {
                return Err(Error::InvalidInput(format!(
                    "label line {}: duplicate host {ip}",
                    i + 1
                )));
            }
        }
        Ok(out)
    }
}

/// Marks every source IP with at least one indicator event as malicious.
pub fn derive_labels(events: &[WeirdEvent], indicators: &BTreeSet<String>) -> Result<HostLabelSet> {
    if indicators.is_empty() {
        return Err(Error::InvalidConfig("indicator set is empty".into()));
    }
    let mut out = HostLabelSet::new();
    for e in events.iter().filter(|e| indicators.contains(&e.name)) {
        out.insert(e.src_ip.clone(), Label::Malicious);
    }
    Ok(out)
}
