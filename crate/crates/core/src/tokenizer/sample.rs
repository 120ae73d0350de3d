//! Deterministic stratified corpus sampling for tokenizer training.

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::Error;
use crate::hash::{hash64, hash64_str};
use crate::Result;

/// Sampling spec: per-stratum inclusion probability and seed. Strata are
/// (lang, category) pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleSpec {
    pub fraction: f64,
    pub seed: u64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            fraction: 0.01,
            seed: 0,
        }
    }
}

/// Hash-of-id Bernoulli sample: a document is included iff the seeded hash
/// of its id falls below fraction * 2^64, with the seed salted by the
/// document's stratum. Deterministic under a fixed seed; fraction 1.0 is
/// the identity.
pub fn sample_corpus(docs: &[Document], spec: &SampleSpec) -> Result<Vec<Document>> {
    if !(spec.fraction > 0.0 && spec.fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "sample fraction {} outside (0, 1]",
            spec.fraction
        )));
    }
    if spec.fraction >= 1.0 {
        return Ok(docs.to_vec());
    }
    let threshold = (spec.fraction * 2f64.powi(64)) as u128;
    Ok(docs
        .iter()
        .filter(|d| {
            let stratum = format!("{}/{}", d.lang, d.category);
            let seed = spec.seed ^ hash64_str(&stratum);
            (hash64(d.id.as_bytes(), seed) as u128) < threshold
        })
        .cloned()
        .collect())
}
