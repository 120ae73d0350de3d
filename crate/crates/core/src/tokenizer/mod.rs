//! BPE tokenizer with byte fallback, digit splitting, a dummy-prefix word
//! marker, repeated-whitespace tokens, and special code tags.
//!
//! Text is marker-transformed before tokenization: a word-boundary marker
//! (U+2581) is prepended and substituted for every space. Runs of two or
//! more markers are covered greedily by whitespace-run tokens. Digits are
//! always single tokens, merges never cross them. Any character without a
//! vocabulary piece decomposes into reserved single-byte tokens, so
//! encoding is total and decoding is lossless.
//!
//! The id layout is fixed: end-of-text is 0, the turn delimiter is 1, the
//! 256 byte tokens follow, then code tags and whitespace-run tokens, then
//! learned character and merge pieces.

mod codec;
mod sample;
mod train;

pub use codec::{whitespace_cover, Decoded};
pub use sample::{sample_corpus, SampleSpec};
pub use train::{train_bpe, TrainReport};

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Word-boundary marker substituted for spaces (and prepended as the
/// dummy prefix) before tokenization.
pub const MARKER: char = '\u{2581}';

/// Opening bracket of every special-token spelling. Literal occurrences in
/// input text are always byte-fallback encoded, so no sequence of pieces
/// can ever assemble a special spelling.
pub const SPECIAL_OPEN: char = '\u{27E8}';

pub const EOT_PIECE: &str = "\u{27E8}|endoftext|\u{27E9}";
pub const BOS_PIECE: &str = "\u{27E8}|bos|\u{27E9}";

pub const DEFAULT_CODE_TAGS: [&str; 4] = [
    "\u{27E8}|python|\u{27E9}",
    "\u{27E8}|javascript|\u{27E9}",
    "\u{27E8}|sql|\u{27E9}",
    "\u{27E8}|shell|\u{27E9}",
];

/// Production vocabulary size.
pub const DEFAULT_VOCAB_SIZE: usize = 64_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PieceKind {
    EndOfText,
    BosTurn,
    Byte(u8),
    CodeTag,
    WhitespaceRun(u32),
    Char,
    Merged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Piece {
    pub text: String,
    pub kind: PieceKind,
}

/// Special-token configuration for training.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SpecialsConfig {
    pub code_tags: Vec<String>,
    /// Space-run lengths that get dedicated tokens.
    pub ws_run_lengths: Vec<usize>,
}

impl Default for SpecialsConfig {
    fn default() -> Self {
        Self {
            code_tags: DEFAULT_CODE_TAGS.iter().map(|s| s.to_string()).collect(),
            ws_run_lengths: (2..=24).collect(),
        }
    }
}

impl SpecialsConfig {
    pub fn validate(&self) -> Result<()> {
        for tag in &self.code_tags {
            if !tag.starts_with(SPECIAL_OPEN) {
                return Err(Error::InvalidConfig(format!(
                    "code tag {tag:?} must start with {SPECIAL_OPEN:?} so plain text cannot forge it"
                )));
            }
        }
        let mut sorted = self.ws_run_lengths.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted != self.ws_run_lengths {
            return Err(Error::InvalidConfig(
                "ws_run_lengths must be sorted and unique".into(),
            ));
        }
        if self.ws_run_lengths.iter().any(|&n| n < 2) {
            return Err(Error::InvalidConfig(
                "ws_run_lengths must all be >= 2".into(),
            ));
        }
        Ok(())
    }

    /// Smallest vocabulary that fits the fixed tokens: EOT, BOS, 256 bytes,
    /// code tags, whitespace runs.
    pub fn vocab_floor(&self) -> usize {
        2 + 256 + self.code_tags.len() + self.ws_run_lengths.len()
    }
}

/// Special-token ids of a trained model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokens {
    pub eot_id: u32,
    pub bos_id: u32,
    pub byte_base: u32,
    pub code_ids: BTreeMap<String, u32>,
    /// run length -> token id
    pub ws_run_ids: BTreeMap<u32, u32>,
}

/// A trained tokenizer: the piece table (index = id) and the ranked merge
/// list. Immutable after training; encode/decode are pure.
#[derive(Debug, Clone)]
pub struct TokenizerModel {
    pieces: Vec<Piece>,
    merges: Vec<(u32, u32)>,
    specials: SpecialTokens,
    // derived lookups
    merge_map: HashMap<(u32, u32), (u32, u32)>, // pair -> (rank, merged id)
    char_ids: HashMap<char, u32>,
    ws_lengths_desc: Vec<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    pieces: Vec<Piece>,
    merges: Vec<(u32, u32)>,
    specials: SpecialTokens,
}

const MODEL_VERSION: u32 = 1;

impl TokenizerModel {
    pub(crate) fn from_parts(
        pieces: Vec<Piece>,
        merges: Vec<(u32, u32)>,
        specials: SpecialTokens,
    ) -> Result<Self> {
        let mut model = Self {
            pieces,
            merges,
            specials,
            merge_map: HashMap::new(),
            char_ids: HashMap::new(),
            ws_lengths_desc: Vec::new(),
        };
        model.rebuild_lookups();
        model.validate()?;
        Ok(model)
    }

    fn rebuild_lookups(&mut self) {
        let merged_base = self.pieces.len() - self.merges.len();
        self.merge_map = self
            .merges
            .iter()
            .enumerate()
            .map(|(rank, &(l, r))| ((l, r), (rank as u32, (merged_base + rank) as u32)))
            .collect();
        self.char_ids = self
            .pieces
            .iter()
            .enumerate()
            .filter(|(_, p)| p.kind == PieceKind::Char)
            .filter_map(|(id, p)| {
                let mut chars = p.text.chars();
                let c = chars.next()?;
                chars.next().is_none().then_some((c, id as u32))
            })
            .collect();
        self.ws_lengths_desc = self.specials.ws_run_ids.keys().rev().copied().collect();
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self
            .pieces
            .get(self.specials.eot_id as usize)
            .map(|p| &p.kind)
            != Some(&PieceKind::EndOfText)
        {
            return bad("end-of-text piece missing at its declared id".into());
        }
        if self
            .pieces
            .get(self.specials.bos_id as usize)
            .map(|p| &p.kind)
            != Some(&PieceKind::BosTurn)
        {
            return bad("bos-turn piece missing at its declared id".into());
        }
        for b in 0u16..=255 {
            let id = self.specials.byte_base as usize + b as usize;
            match self.pieces.get(id).map(|p| &p.kind) {
                Some(PieceKind::Byte(v)) if *v as u16 == b => {}
                _ => return bad(format!("byte token {b:#04x} missing at id {id}")),
            }
        }
        if self.merges.len() > self.pieces.len() {
            return bad("more merges than pieces".into());
        }
        let merged_base = self.pieces.len() - self.merges.len();
        let mergeable = |p: &Piece| match p.kind {
            PieceKind::Merged => true,
            PieceKind::Char => !matches!(p.text.chars().next(), Some(c) if c.is_ascii_digit()),
            _ => false,
        };
        for (rank, &(l, r)) in self.merges.iter().enumerate() {
            let id = merged_base + rank;
            let (lp, rp) = match (self.pieces.get(l as usize), self.pieces.get(r as usize)) {
                (Some(lp), Some(rp)) => (lp, rp),
                _ => return bad(format!("merge {rank} references unknown pieces")),
            };
            if !mergeable(lp) || !mergeable(rp) {
                return bad(format!(
                    "merge {rank} touches a special, byte, or digit piece"
                ));
            }
            let merged = &self.pieces[id];
            if merged.kind != PieceKind::Merged || merged.text != format!("{}{}", lp.text, rp.text)
            {
                return bad(format!("merge {rank} does not match its merged piece"));
            }
        }
        Ok(())
    }

    pub fn vocab_size(&self) -> usize {
        self.pieces.len()
    }

    pub fn piece(&self, id: u32) -> Option<&Piece> {
        self.pieces.get(id as usize)
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn specials(&self) -> &SpecialTokens {
        &self.specials
    }

    pub fn eot_id(&self) -> u32 {
        self.specials.eot_id
    }

    pub fn bos_id(&self) -> u32 {
        self.specials.bos_id
    }

    /// Token-string -> id view of the vocabulary.
    pub fn vocab(&self) -> impl Iterator<Item = (&str, u32)> {
        self.pieces
            .iter()
            .enumerate()
            .map(|(id, p)| (p.text.as_str(), id as u32))
    }

    pub(crate) fn byte_id(&self, byte: u8) -> u32 {
        self.specials.byte_base + byte as u32
    }

    pub(crate) fn char_id(&self, c: char) -> Option<u32> {
        self.char_ids.get(&c).copied()
    }

    pub(crate) fn merge_lookup(&self, pair: (u32, u32)) -> Option<(u32, u32)> {
        self.merge_map.get(&pair).copied()
    }

    pub(crate) fn ws_lengths_desc(&self) -> &[u32] {
        &self.ws_lengths_desc
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            version: MODEL_VERSION,
            pieces: self.pieces.clone(),
            merges: self.merges.clone(),
            specials: self.specials.clone(),
        };
        let json = serde_json::to_string(&file).expect("model serialization is infallible");
        fs::write(path, json).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let data = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let file: ModelFile = serde_json::from_str(&data).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: 0,
            message: format!("invalid model file: {e}"),
        })?;
        if file.version != MODEL_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported model version {}",
                file.version
            )));
        }
        Self::from_parts(file.pieces, file.merges, file.specials)
    }
}
