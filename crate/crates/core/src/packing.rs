//! Sequence packing: encoded documents are concatenated with end-of-text
//! delimiters and sliced into fixed-length training samples, stored in a
//! bit-exact binary format.
//!
//! The concatenated stream is d1·EOT·d2·EOT·...·dn·EOT cut into
//! consecutive seq_len windows; the final partial window is dropped and
//! reported. Documents may span window boundaries; no attention masking is
//! modeled here.
//!
//! On-disk layout ("NPK1", all little-endian):
//!
//! ```text
//! header (32 bytes):
//!   magic "NPK1"        4
//!   version u32         4
//!   dtype code u8       1   (1 = u16 little-endian)
//!   pad [u8; 3]         3
//!   seq_len u32         4
//!   sequence count u64  8
//!   dropped_tail u32    4
//!   eot_id u32          4
//! body: sequence count x seq_len tokens, u16 LE
//! footer: u64 count, then that many u64 end-of-text offsets
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::Error;
use crate::Result;

pub const MAGIC: [u8; 4] = *b"NPK1";
pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE_U16_LE: u8 = 1;
pub const HEADER_LEN: usize = 32;

/// Default training sequence length.
pub const DEFAULT_SEQ_LEN: u32 = 2048;

/// A packed dataset: `sequences() * seq_len` tokens plus the offsets of
/// every end-of-text delimiter in the kept stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedDataset {
    pub seq_len: u32,
    pub tokens: Vec<u16>,
    /// Global token-stream offsets of end-of-text delimiters.
    pub eot_offsets: Vec<u64>,
    /// Token count of the dropped partial window.
    pub dropped_tail: u32,
    pub eot_id: u16,
}

impl PackedDataset {
    pub fn sequences(&self) -> u64 {
        if self.seq_len == 0 {
            0
        } else {
            (self.tokens.len() as u64) / self.seq_len as u64
        }
    }

    /// Boundary offsets that fall inside a given sequence, relative to the
    /// sequence start.
    pub fn boundaries_in_sequence(&self, seq_index: u64) -> Vec<u32> {
        let start = seq_index * self.seq_len as u64;
        let end = start + self.seq_len as u64;
        self.eot_offsets
            .iter()
            .filter(|&&o| o >= start && o < end)
            .map(|&o| (o - start) as u32)
            .collect()
    }
}

/// Pack encoded documents into fixed-length sequences.
///
/// Errors when a document contains the delimiter id in its body; after
/// concatenation the stream is checked to carry exactly one delimiter per
/// document before slicing.
pub fn pack_documents(
    docs: impl IntoIterator<Item = Vec<u16>>,
    seq_len: u32,
    eot_id: u16,
) -> Result<PackedDataset> {
    if seq_len == 0 {
        return Err(Error::InvalidConfig("seq_len must be positive".into()));
    }
    let mut tokens: Vec<u16> = Vec::new();
    let mut eot_offsets: Vec<u64> = Vec::new();
    let mut doc_count = 0usize;
    for (doc_index, doc) in docs.into_iter().enumerate() {
        if doc.contains(&eot_id) {
            return Err(Error::EotInDocument { doc_index, eot_id });
        }
        tokens.extend_from_slice(&doc);
        eot_offsets.push(tokens.len() as u64);
        tokens.push(eot_id);
        doc_count += 1;
    }

    // guard against the delimiter-omission failure mode
    let eot_count = tokens.iter().filter(|&&t| t == eot_id).count();
    if eot_count != doc_count {
        return Err(Error::MissingDelimiters {
            expected: doc_count,
            found: eot_count,
        });
    }

    let kept = (tokens.len() as u64 / seq_len as u64) * seq_len as u64;
    let dropped_tail = (tokens.len() as u64 - kept) as u32;
    tokens.truncate(kept as usize);
    eot_offsets.retain(|&o| o < kept);

    Ok(PackedDataset {
        seq_len,
        tokens,
        eot_offsets,
        dropped_tail,
        eot_id,
    })
}

/// Split a packed stream back into documents. Returns the fully delimited
/// documents in order plus any trailing partial document cut by the
/// window boundary.
pub fn unpack(ds: &PackedDataset) -> (Vec<Vec<u16>>, Vec<u16>) {
    let mut docs = Vec::with_capacity(ds.eot_offsets.len());
    let mut start = 0usize;
    for &offset in &ds.eot_offsets {
        let offset = offset as usize;
        docs.push(ds.tokens[start..offset].to_vec());
        start = offset + 1;
    }
    (docs, ds.tokens[start..].to_vec())
}

pub fn write_packed(ds: &PackedDataset, path: &Path) -> Result<u64> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    let mut written = 0u64;

    w.write_all(&MAGIC).map_err(io_err)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&[DTYPE_U16_LE, 0, 0, 0]).map_err(io_err)?;
    w.write_all(&ds.seq_len.to_le_bytes()).map_err(io_err)?;
    w.write_all(&ds.sequences().to_le_bytes()).map_err(io_err)?;
    w.write_all(&ds.dropped_tail.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(ds.eot_id as u32).to_le_bytes()).map_err(io_err)?;
    written += HEADER_LEN as u64;

    for &t in &ds.tokens {
        w.write_all(&t.to_le_bytes()).map_err(io_err)?;
    }
    written += 2 * ds.tokens.len() as u64;

    w.write_all(&(ds.eot_offsets.len() as u64).to_le_bytes())
        .map_err(io_err)?;
    for &o in &ds.eot_offsets {
        w.write_all(&o.to_le_bytes()).map_err(io_err)?;
    }
    written += 8 * (1 + ds.eot_offsets.len() as u64);

    w.flush().map_err(io_err)?;
    Ok(written)
}

pub fn read_packed(path: &Path) -> Result<PackedDataset> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut r = BufReader::new(file);
    let trunc = |detail: &str| Error::Truncated {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    };

    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header).map_err(|_| trunc("header"))?;
    if header[0..4] != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::BadVersion {
            path: path.to_path_buf(),
            version,
        });
    }
    let dtype = header[8];
    if dtype != DTYPE_U16_LE {
        return Err(Error::DtypeMismatch {
            path: path.to_path_buf(),
            code: dtype,
        });
    }
    let seq_len = u32::from_le_bytes(header[12..16].try_into().unwrap());
    let sequences = u64::from_le_bytes(header[16..24].try_into().unwrap());
    let dropped_tail = u32::from_le_bytes(header[24..28].try_into().unwrap());
    let eot_id = u32::from_le_bytes(header[28..32].try_into().unwrap());
    if eot_id > u16::MAX as u32 {
        return Err(Error::DtypeMismatch {
            path: path.to_path_buf(),
            code: dtype,
        });
    }

    let token_count = sequences
        .checked_mul(seq_len as u64)
        .ok_or_else(|| trunc("token count overflow"))? as usize;
    let mut body = vec![0u8; token_count * 2];
    r.read_exact(&mut body).map_err(|_| trunc("token body"))?;
    let tokens: Vec<u16> = body
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();

    let mut count_buf = [0u8; 8];
    r.read_exact(&mut count_buf)
        .map_err(|_| trunc("boundary-index count"))?;
    let offset_count = u64::from_le_bytes(count_buf) as usize;
    let mut eot_offsets = Vec::with_capacity(offset_count);
    let mut off_buf = [0u8; 8];
    for _ in 0..offset_count {
        r.read_exact(&mut off_buf)
            .map_err(|_| trunc("boundary index"))?;
        eot_offsets.push(u64::from_le_bytes(off_buf));
    }

    Ok(PackedDataset {
        seq_len,
        tokens,
        eot_offsets,
        dropped_tail,
        eot_id: eot_id as u16,
    })
}

/// Consistency checks on a packed dataset: the boundary index must list
/// exactly the delimiter positions, and a nonempty dataset must contain at
/// least one delimiter (a stream of full windows with none is precisely
/// the delimiter-omission bug this guards).
pub fn verify_packed(ds: &PackedDataset) -> Result<()> {
    let fail = |msg: String| Err(Error::VerifyFailed(msg));
    if ds.seq_len == 0 {
        return fail("seq_len is zero".into());
    }
    if !(ds.tokens.len() as u64).is_multiple_of(ds.seq_len as u64) {
        return fail(format!(
            "token count {} is not a multiple of seq_len {}",
            ds.tokens.len(),
            ds.seq_len
        ));
    }
    if ds.dropped_tail >= ds.seq_len {
        return fail(format!(
            "dropped tail {} not smaller than seq_len {}",
            ds.dropped_tail, ds.seq_len
        ));
    }
    let mut prev: Option<u64> = None;
    for &o in &ds.eot_offsets {
        if let Some(p) = prev {
            if o <= p {
                return fail(format!("boundary offsets not strictly increasing at {o}"));
            }
        }
        prev = Some(o);
        if o >= ds.tokens.len() as u64 {
            return fail(format!("boundary offset {o} beyond token stream"));
        }
        if ds.tokens[o as usize] != ds.eot_id {
            return fail(format!("offset {o} does not hold the end-of-text id"));
        }
    }
    let actual = ds.tokens.iter().filter(|&&t| t == ds.eot_id).count();
    if actual != ds.eot_offsets.len() {
        return fail(format!(
            "{} end-of-text tokens in stream but {} indexed",
            actual,
            ds.eot_offsets.len()
        ));
    }
    if !ds.tokens.is_empty() && ds.eot_offsets.is_empty() {
        return fail("packed stream contains no document delimiters".into());
    }
    Ok(())
}
