//! Provenance metadata stamped onto every written artifact.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub config_hash: String,
    pub seed: u64,
}

impl ArtifactMeta {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        Self { config_hash: config_hash.into(), seed }
    }

    /// Metadata used when nothing upstream supplies a config.
    pub fn detached(seed: u64) -> Self {
        Self::new("none", seed)
    }

    /// Writes the `#`-prefixed header line that precedes CSV content.
    pub fn write_csv_header<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# aedsip config_hash={} seed={}", self.config_hash, self.seed)?;
        Ok(())
    }
}

/// CSV reader that skips `#` metadata lines.
pub fn csv_reader<R: std::io::Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).flexible(true).from_reader(r)
}

/// CSV writer that stamps the metadata header first.
pub fn csv_writer<W: Write>(mut w: W, meta: &ArtifactMeta) -> Result<csv::Writer<W>> {
    meta.write_csv_header(&mut w)?;
    Ok(csv::Writer::from_writer(w))
}

/// Serializes `value` as pretty JSON wrapped with a `meta` block.
pub fn to_json_with_meta<T: Serialize>(meta: &ArtifactMeta, value: &T) -> Result<String> {
    let doc = serde_json::json!({ "meta": meta, "data": value });
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}
