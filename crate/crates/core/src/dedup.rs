//! Exact deduplication by content hash and fuzzy deduplication via
//! MinHash LSH.
//!
//! Fuzzy dedup follows the classic banding scheme: word shingles are
//! MinHash-signed with a seeded hash family, signatures are bucketed in
//! b bands of r rows, and bucket collisions become candidate pairs. Every
//! candidate pair is verified against the true shingle-set Jaccard before
//! linking, so no removal happens on estimator noise. Connected components
//! of verified links form clusters; the minimum ordinal in each cluster is
//! kept.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Document;
use crate::error::Error;
use crate::hash::{family_hash, hash64};
use crate::Result;

/// 128-bit content digest (truncated SHA-256), stable across platforms.
pub type ContentDigest = [u8; 16];

/// Stable 128-bit digest of a text. Equal texts always collide; distinct
/// texts collide with negligible probability at 128 bits.
pub fn content_hash(text: &str) -> ContentDigest {
    let full = Sha256::digest(text.as_bytes());
    let mut out = [0u8; 16];
    out.copy_from_slice(&full[..16]);
    out
}

/// Drop exact duplicates, keeping the minimum ordinal per digest.
/// Idempotent; input order is preserved.
pub fn exact_dedup(docs: Vec<Document>) -> (Vec<Document>, usize) {
    let mut first_by_digest: HashMap<ContentDigest, u64> = HashMap::new();
    for doc in &docs {
        let digest = content_hash(&doc.text);
        first_by_digest
            .entry(digest)
            .and_modify(|o| *o = (*o).min(doc.ordinal))
            .or_insert(doc.ordinal);
    }
    let before = docs.len();
    let kept: Vec<Document> = docs
        .into_iter()
        .filter(|d| first_by_digest[&content_hash(&d.text)] == d.ordinal)
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

/// MinHash LSH parameters. k = b × r must hold.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LshParams {
    /// Number of hash permutations / signature slots.
    pub k: usize,
    /// Number of bands.
    pub b: usize,
    /// Rows per band.
    pub r: usize,
    /// Words per shingle.
    pub shingle_size: usize,
    /// Verified-link threshold on true Jaccard similarity.
    pub jaccard_threshold: f64,
    pub seed: u64,
}

impl Default for LshParams {
    fn default() -> Self {
        Self {
            k: 128,
            b: 16,
            r: 8,
            shingle_size: 5,
            jaccard_threshold: 0.8,
            seed: 0x6e70_6c6b,
        }
    }
}

impl LshParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.b == 0 || self.r == 0 {
            return Err(Error::InvalidConfig("k, b, r must all be >= 1".into()));
        }
        if self.k != self.b * self.r {
            return Err(Error::InvalidConfig(format!(
                "k = b x r violated: {} != {} x {}",
                self.k, self.b, self.r
            )));
        }
        if self.shingle_size == 0 {
            return Err(Error::InvalidConfig("shingle_size must be >= 1".into()));
        }
        if !(self.jaccard_threshold > 0.0 && self.jaccard_threshold <= 1.0) {
            return Err(Error::InvalidConfig(
                "jaccard_threshold must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Lowercased word n-gram set of a text. Documents with fewer words than
/// the shingle size yield a single shingle of all their words; empty text
/// yields the empty set.
pub fn shingle(text: &str, shingle_size: usize) -> HashSet<String> {
    let lowered = text.to_lowercase();
    let words: Vec<&str> = lowered.split_whitespace().collect();
    let mut out = HashSet::new();
    if words.is_empty() {
        return out;
    }
    if words.len() < shingle_size {
        out.insert(words.join(" "));
        return out;
    }
    for window in words.windows(shingle_size) {
        out.insert(window.join(" "));
    }
    out
}

/// k-slot MinHash signature. `empty` marks documents whose shingle set was
/// empty; their slots are sentinel maxima and they bypass fuzzy dedup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinHashSignature {
    pub slots: Vec<u64>,
    pub ordinal: u64,
    pub empty: bool,
}

/// Signature over a shingle set: slot i is the minimum of the i-th seeded
/// hash over all shingles, so P[slot_i(A) = slot_i(B)] = Jaccard(A, B) up
/// to hashing bias.
pub fn minhash_signature(
    shingles: &HashSet<String>,
    params: &LshParams,
    ordinal: u64,
) -> MinHashSignature {
    if shingles.is_empty() {
        return MinHashSignature {
            slots: vec![u64::MAX; params.k],
            ordinal,
            empty: true,
        };
    }
    let bases: Vec<u64> = shingles
        .iter()
        .map(|s| hash64(s.as_bytes(), params.seed))
        .collect();
    let slots = (0..params.k as u64)
        .map(|i| {
            bases
                .iter()
                .map(|&base| family_hash(base, params.seed, i))
                .min()
                .expect("nonempty shingle set")
        })
        .collect();
    MinHashSignature {
        slots,
        ordinal,
        empty: false,
    }
}

/// Fraction of equal slots; errors when the signatures differ in length.
pub fn jaccard_estimate(a: &MinHashSignature, b: &MinHashSignature) -> Result<f64> {
    if a.slots.len() != b.slots.len() {
        return Err(Error::SignatureLengthMismatch {
            left: a.slots.len(),
            right: b.slots.len(),
        });
    }
    let matches = a
        .slots
        .iter()
        .zip(&b.slots)
        .filter(|(x, y)| x == y)
        .count();
    Ok(matches as f64 / a.slots.len() as f64)
}

/// True Jaccard similarity of two sets.
pub fn true_jaccard(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Probability that a pair with Jaccard s collides in at least one of b
/// bands of r rows: 1 - (1 - s^r)^b.
pub fn candidate_probability(s: f64, b: usize, r: usize) -> f64 {
    1.0 - (1.0 - s.powi(r as i32)).powi(b as i32)
}

/// One verified near-duplicate link.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifiedLink {
    pub a: u64,
    pub b: u64,
    pub jaccard: f64,
}

/// A duplicate cluster: the kept (minimum) ordinal, all member ordinals,
/// and the verified links that formed it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DuplicateCluster {
    pub keep: u64,
    pub members: Vec<u64>,
    pub links: Vec<VerifiedLink>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DuplicateClusters {
    pub clusters: Vec<DuplicateCluster>,
}

impl DuplicateClusters {
    pub fn dropped_ordinals(&self) -> HashSet<u64> {
        self.clusters
            .iter()
            .flat_map(|c| c.members.iter().copied().filter(|&m| m != c.keep))
            .collect()
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // root at the smaller index so cluster roots are deterministic
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}

/// Fuzzy deduplication over a document stream.
///
/// Result is independent of processing order: clustering happens after all
/// band inserts, and the keep choice is the cluster minimum ordinal.
pub fn fuzzy_dedup(docs: Vec<Document>, params: &LshParams) -> Result<(Vec<Document>, DuplicateClusters)> {
    params.validate()?;

    let shingle_sets: Vec<HashSet<String>> = docs
        .par_iter()
        .map(|d| shingle(&d.text, params.shingle_size))
        .collect();
    let signatures: Vec<MinHashSignature> = docs
        .par_iter()
        .zip(&shingle_sets)
        .map(|(d, set)| minhash_signature(set, params, d.ordinal))
        .collect();

    // Band index: bucket key is the hash of a band's slot slice.
    let mut candidates: HashSet<(usize, usize)> = HashSet::new();
    for band in 0..params.b {
        let start = band * params.r;
        let end = start + params.r;
        let mut buckets: HashMap<u64, Vec<usize>> = HashMap::new();
        for (idx, sig) in signatures.iter().enumerate() {
            if sig.empty {
                continue;
            }
            let mut bytes = Vec::with_capacity(params.r * 8);
            for &slot in &sig.slots[start..end] {
                bytes.extend_from_slice(&slot.to_le_bytes());
            }
            let key = hash64(&bytes, params.seed ^ band as u64);
            buckets.entry(key).or_default().push(idx);
        }
        for members in buckets.values() {
            for i in 0..members.len() {
                for j in (i + 1)..members.len() {
                    let (lo, hi) = (members[i].min(members[j]), members[i].max(members[j]));
                    candidates.insert((lo, hi));
                }
            }
        }
    }

    // Verify candidates against true shingle-set Jaccard.
    let mut candidate_list: Vec<(usize, usize)> = candidates.into_iter().collect();
    candidate_list.sort_unstable();
    let verified: Vec<(usize, usize, f64)> = candidate_list
        .par_iter()
        .filter_map(|&(i, j)| {
            let jac = true_jaccard(&shingle_sets[i], &shingle_sets[j]);
            (jac >= params.jaccard_threshold).then_some((i, j, jac))
        })
        .collect();

    let mut dsu = UnionFind::new(docs.len());
    for &(i, j, _) in &verified {
        dsu.union(i, j);
    }

    let mut component_members: HashMap<usize, Vec<usize>> = HashMap::new();
    for idx in 0..docs.len() {
        let root = dsu.find(idx);
        component_members.entry(root).or_default().push(idx);
    }

    let mut links_by_root: HashMap<usize, Vec<VerifiedLink>> = HashMap::new();
    for &(i, j, jac) in &verified {
        let root = dsu.find(i);
        links_by_root.entry(root).or_default().push(VerifiedLink {
            a: docs[i].ordinal,
            b: docs[j].ordinal,
            jaccard: jac,
        });
    }

    let mut clusters: Vec<DuplicateCluster> = component_members
        .into_iter()
        .filter(|(_, members)| members.len() > 1)
        .map(|(root, members)| {
            let ordinals: Vec<u64> = members.iter().map(|&i| docs[i].ordinal).collect();
            DuplicateCluster {
                keep: *ordinals.iter().min().expect("nonempty cluster"),
                members: {
                    let mut m = ordinals;
                    m.sort_unstable();
                    m
                },
                links: links_by_root.remove(&root).unwrap_or_default(),
            }
        })
        .collect();
    clusters.sort_by_key(|c| c.keep);

    let clusters = DuplicateClusters { clusters };
    let dropped = clusters.dropped_ordinals();
    let kept: Vec<Document> = docs
        .into_iter()
        .filter(|d| !dropped.contains(&d.ordinal))
        .collect();
    Ok((kept, clusters))
}
