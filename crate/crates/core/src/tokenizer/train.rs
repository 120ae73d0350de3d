//! BPE trainer.
//!
//! Training counts adjacent-pair frequencies over word units (the same
//! marker-split units the encoder uses) and iteratively merges the most
//! frequent pair, ties broken by lexicographic order of the pair's piece
//! strings. Specials, byte tokens, and digit pieces never participate in
//! merges, so digits stay single tokens and whitespace-run tokens are
//! never extended.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use super::codec::{prepare, Item, UnitAtom};
use super::{
    Piece, PieceKind, SpecialTokens, SpecialsConfig, TokenizerModel, BOS_PIECE, EOT_PIECE, MARKER,
};
use crate::error::Error;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainReport {
    pub target_vocab: usize,
    pub achieved_vocab: usize,
    pub char_pieces: usize,
    pub merge_count: usize,
    /// True when the corpus ran out of pairs with frequency >= 2 before
    /// the target vocabulary was reached.
    pub stopped_early: bool,
}

struct Unit {
    atoms: Vec<u32>,
    count: i64,
}

#[derive(PartialEq, Eq)]
struct PairCandidate {
    count: i64,
    left_text: String,
    right_text: String,
    pair: (u32, u32),
}

impl Ord for PairCandidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap: highest count first, then lexicographically smallest
        // pair, then smallest ids
        self.count
            .cmp(&other.count)
            .then_with(|| other.left_text.cmp(&self.left_text))
            .then_with(|| other.right_text.cmp(&self.right_text))
            .then_with(|| other.pair.cmp(&self.pair))
    }
}

impl PartialOrd for PairCandidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Train a BPE tokenizer over a text stream.
///
/// The target must be at least the fixed floor (bytes plus specials). At
/// exactly the floor the result is a byte-level tokenizer with no character
/// pieces and no merges. A corpus too small to reach the target stops early
/// and reports the achieved size.
pub fn train_bpe<'a>(
    texts: impl IntoIterator<Item = &'a str>,
    target_vocab: usize,
    specials: &SpecialsConfig,
) -> Result<(TokenizerModel, TrainReport)> {
    specials.validate()?;
    let floor = specials.vocab_floor();
    if target_vocab < floor {
        return Err(Error::VocabTooSmall {
            target: target_vocab,
            floor,
        });
    }

    let ws_desc: Vec<u32> = specials
        .ws_run_lengths
        .iter()
        .rev()
        .map(|&n| n as u32)
        .collect();

    // Pass over the corpus: character frequencies and word-unit counts.
    let mut char_freq: HashMap<char, u64> = HashMap::new();
    let mut unit_counts: HashMap<Vec<UnitAtom>, i64> = HashMap::new();
    for text in texts {
        for item in prepare(text, &ws_desc) {
            if let Item::Unit(atoms) = item {
                for atom in &atoms {
                    match *atom {
                        UnitAtom::Marker => *char_freq.entry(MARKER).or_default() += 1,
                        UnitAtom::Char(c) => *char_freq.entry(c).or_default() += 1,
                        UnitAtom::Escaped(_) => {}
                    }
                }
                *unit_counts.entry(atoms).or_default() += 1;
            }
        }
    }

    // Fixed pieces: EOT, BOS, bytes, code tags, whitespace runs.
    let mut pieces: Vec<Piece> = Vec::with_capacity(target_vocab);
    pieces.push(Piece {
        text: EOT_PIECE.to_string(),
        kind: PieceKind::EndOfText,
    });
    pieces.push(Piece {
        text: BOS_PIECE.to_string(),
        kind: PieceKind::BosTurn,
    });
    let byte_base = pieces.len() as u32;
    for b in 0u16..=255 {
        pieces.push(Piece {
            text: format!("<0x{b:02X}>"),
            kind: PieceKind::Byte(b as u8),
        });
    }
    let mut code_ids = std::collections::BTreeMap::new();
    for tag in &specials.code_tags {
        code_ids.insert(tag.clone(), pieces.len() as u32);
        pieces.push(Piece {
            text: tag.clone(),
            kind: PieceKind::CodeTag,
        });
    }
    let mut ws_run_ids = std::collections::BTreeMap::new();
    for &n in &specials.ws_run_lengths {
        ws_run_ids.insert(n as u32, pieces.len() as u32);
        pieces.push(Piece {
            text: MARKER.to_string().repeat(n),
            kind: PieceKind::WhitespaceRun(n as u32),
        });
    }
    let specials_ids = SpecialTokens {
        eot_id: 0,
        bos_id: 1,
        byte_base,
        code_ids,
        ws_run_ids,
    };

    // Character pieces: the marker and digits are always eligible, then
    // corpus characters by descending frequency, all within budget.
    let mut guaranteed: Vec<char> = vec![MARKER];
    guaranteed.extend('0'..='9');
    let mut rest: Vec<(char, u64)> = char_freq
        .iter()
        .filter(|(c, _)| !guaranteed.contains(c))
        .map(|(&c, &f)| (c, f))
        .collect();
    rest.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    let budget = target_vocab - pieces.len();
    let mut char_ids: HashMap<char, u32> = HashMap::new();
    for c in guaranteed
        .into_iter()
        .chain(rest.into_iter().map(|(c, _)| c))
        .take(budget)
    {
        char_ids.insert(c, pieces.len() as u32);
        pieces.push(Piece {
            text: c.to_string(),
            kind: PieceKind::Char,
        });
    }
    let char_piece_count = char_ids.len();

    // Map unit atoms to ids; out-of-budget characters fall back to bytes.
    let mut id_units: HashMap<Vec<u32>, i64> = HashMap::new();
    for (atoms, count) in unit_counts {
        let mut ids = Vec::with_capacity(atoms.len());
        for atom in atoms {
            let (c, fallback) = match atom {
                UnitAtom::Marker => (MARKER, ' '),
                UnitAtom::Char(c) => (c, c),
                UnitAtom::Escaped(c) => {
                    push_bytes(c, byte_base, &mut ids);
                    continue;
                }
            };
            match char_ids.get(&c) {
                Some(&id) => ids.push(id),
                None => push_bytes(fallback, byte_base, &mut ids),
            }
        }
        *id_units.entry(ids).or_default() += count;
    }
    let mut units: Vec<Unit> = {
        let mut v: Vec<(Vec<u32>, i64)> = id_units.into_iter().collect();
        v.sort_unstable();
        v.into_iter()
            .map(|(atoms, count)| Unit { atoms, count })
            .collect()
    };

    let mut mergeable: Vec<bool> = pieces.iter().map(is_mergeable).collect();

    // Initial pair counts.
    let mut pair_counts: HashMap<(u32, u32), i64> = HashMap::new();
    let mut pair_units: HashMap<(u32, u32), HashSet<usize>> = HashMap::new();
    for (idx, unit) in units.iter().enumerate() {
        for w in unit.atoms.windows(2) {
            let pair = (w[0], w[1]);
            if mergeable[pair.0 as usize] && mergeable[pair.1 as usize] {
                *pair_counts.entry(pair).or_default() += unit.count;
                pair_units.entry(pair).or_default().insert(idx);
            }
        }
    }

    let mut heap: BinaryHeap<PairCandidate> = pair_counts
        .iter()
        .filter(|&(_, &count)| count >= 2)
        .map(|(&pair, &count)| PairCandidate {
            count,
            left_text: pieces[pair.0 as usize].text.clone(),
            right_text: pieces[pair.1 as usize].text.clone(),
            pair,
        })
        .collect();

    let mut merges: Vec<(u32, u32)> = Vec::new();
    while pieces.len() < target_vocab {
        // pop until a live candidate surfaces
        let (pair, count) = loop {
            match heap.pop() {
                None => break ((u32::MAX, u32::MAX), 0),
                Some(cand) => {
                    let current = pair_counts.get(&cand.pair).copied().unwrap_or(0);
                    if current == cand.count {
                        break (cand.pair, current);
                    }
                }
            }
        };
        if count < 2 {
            break;
        }

        let new_id = pieces.len() as u32;
        let text = format!(
            "{}{}",
            pieces[pair.0 as usize].text, pieces[pair.1 as usize].text
        );
        pieces.push(Piece {
            text,
            kind: PieceKind::Merged,
        });
        mergeable.push(true);
        merges.push(pair);

        let affected = pair_units.remove(&pair).unwrap_or_default();
        let mut touched: HashSet<(u32, u32)> = HashSet::new();
        for idx in affected {
            let unit = &mut units[idx];
            if !contains_pair(&unit.atoms, pair) {
                continue;
            }
            for w in unit.atoms.windows(2) {
                let p = (w[0], w[1]);
                if mergeable[p.0 as usize] && mergeable[p.1 as usize] {
                    *pair_counts.entry(p).or_default() -= unit.count;
                    touched.insert(p);
                }
            }
            unit.atoms = merge_in_unit(&unit.atoms, pair, new_id);
            for w in unit.atoms.windows(2) {
                let p = (w[0], w[1]);
                if mergeable[p.0 as usize] && mergeable[p.1 as usize] {
                    *pair_counts.entry(p).or_default() += unit.count;
                    touched.insert(p);
                    pair_units.entry(p).or_default().insert(idx);
                }
            }
        }
        for p in touched {
            let count = pair_counts.get(&p).copied().unwrap_or(0);
            if count >= 2 && p != pair {
                heap.push(PairCandidate {
                    count,
                    left_text: pieces[p.0 as usize].text.clone(),
                    right_text: pieces[p.1 as usize].text.clone(),
                    pair: p,
                });
            }
        }
    }

    let achieved = pieces.len();
    let stopped_early = achieved < target_vocab;
    let report = TrainReport {
        target_vocab,
        achieved_vocab: achieved,
        char_pieces: char_piece_count,
        merge_count: merges.len(),
        stopped_early,
    };
    let model = TokenizerModel::from_parts(pieces, merges, specials_ids)?;
    Ok((model, report))
}

fn push_bytes(c: char, byte_base: u32, ids: &mut Vec<u32>) {
    let mut buf = [0u8; 4];
    for &b in c.encode_utf8(&mut buf).as_bytes() {
        ids.push(byte_base + b as u32);
    }
}

fn is_mergeable(piece: &Piece) -> bool {
    match piece.kind {
        PieceKind::Merged => true,
        PieceKind::Char => !matches!(piece.text.chars().next(), Some(c) if c.is_ascii_digit()),
        _ => false,
    }
}

fn contains_pair(atoms: &[u32], pair: (u32, u32)) -> bool {
    atoms.windows(2).any(|w| (w[0], w[1]) == pair)
}

fn merge_in_unit(atoms: &[u32], pair: (u32, u32), new_id: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(atoms.len());
    let mut i = 0;
    while i < atoms.len() {
        if i + 1 < atoms.len() && atoms[i] == pair.0 && atoms[i + 1] == pair.1 {
            out.push(new_id);
            i += 2;
        } else {
            out.push(atoms[i]);
            i += 1;
        }
    }
    out
}
