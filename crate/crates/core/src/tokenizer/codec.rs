//! Marker transform, whitespace-run covering, and the encoder/decoder.

use super::{PieceKind, TokenizerModel, MARKER, SPECIAL_OPEN};
use crate::error::Error;
use crate::Result;

/// One character of marker-transformed text.
///
/// `Escaped` carries characters that must never become vocabulary pieces:
/// a literal marker would alias the space substitution, and the special
/// opening bracket would let plain text forge control tokens. Both always
/// go through byte fallback, which decodes verbatim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum UnitAtom {
    Marker,
    Char(char),
    Escaped(char),
}

/// A covered, unit-split stretch of transformed text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Item {
    WsRun(u32),
    Unit(Vec<UnitAtom>),
}

/// Greedy cover of a marker run: repeatedly the longest available run
/// token that fits, single markers for the remainder. Elements are either
/// an available length or 1.
pub fn whitespace_cover(run_len: u32, available_desc: &[u32]) -> Vec<u32> {
    let mut out = Vec::new();
    let mut rem = run_len;
    while rem > 0 {
        match available_desc.iter().find(|&&len| len <= rem) {
            Some(&len) => {
                out.push(len);
                rem -= len;
            }
            None => {
                out.push(1);
                rem -= 1;
            }
        }
    }
    out
}

/// Marker-transform a text (dummy prefix + space substitution), cover
/// marker runs with whitespace tokens, and split into word units. Units
/// break before each marker; a run's trailing single marker heads the
/// following unit.
pub(crate) fn prepare(text: &str, ws_lengths_desc: &[u32]) -> Vec<Item> {
    let mut atoms: Vec<UnitAtom> = Vec::with_capacity(text.len() + 1);
    atoms.push(UnitAtom::Marker);
    for c in text.chars() {
        atoms.push(match c {
            ' ' => UnitAtom::Marker,
            MARKER | SPECIAL_OPEN => UnitAtom::Escaped(c),
            c => UnitAtom::Char(c),
        });
    }
    // A dummy prefix directly before a digit can never merge (digits are
    // atomic), so it is not emitted; digit-initial text stays one token
    // per digit and the round trip is unaffected.
    if let [UnitAtom::Marker, UnitAtom::Char(c), ..] = atoms[..] {
        if c.is_ascii_digit() {
            atoms.remove(0);
        }
    }

    let mut items = Vec::new();
    let mut unit: Vec<UnitAtom> = Vec::new();
    let mut i = 0;
    while i < atoms.len() {
        match atoms[i] {
            UnitAtom::Marker => {
                let start = i;
                while i < atoms.len() && atoms[i] == UnitAtom::Marker {
                    i += 1;
                }
                let run = (i - start) as u32;
                if !unit.is_empty() {
                    items.push(Item::Unit(std::mem::take(&mut unit)));
                }
                if run == 1 {
                    unit.push(UnitAtom::Marker);
                } else {
                    let cover = whitespace_cover(run, ws_lengths_desc);
                    for (idx, &len) in cover.iter().enumerate() {
                        if len >= 2 {
                            items.push(Item::WsRun(len));
                        } else if idx == cover.len() - 1 {
                            unit.push(UnitAtom::Marker);
                        } else {
                            items.push(Item::Unit(vec![UnitAtom::Marker]));
                        }
                    }
                }
            }
            atom => {
                unit.push(atom);
                i += 1;
            }
        }
    }
    if !unit.is_empty() {
        items.push(Item::Unit(unit));
    }
    items
}

/// Decoder output. `invalid_utf8_runs` counts byte-token runs that did not
/// form valid UTF-8 and were replaced with U+FFFD.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub text: String,
    pub invalid_utf8_runs: usize,
}

impl TokenizerModel {
    /// Encode text to token ids. Total: any character without a piece
    /// falls back to byte tokens. Plain text never produces EOT, BOS, or
    /// code-tag ids.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for item in prepare(text, self.ws_lengths_desc()) {
            match item {
                Item::WsRun(n) => out.push(self.specials().ws_run_ids[&n]),
                Item::Unit(unit) => {
                    let ids = self.unit_to_ids(&unit);
                    out.extend(self.apply_merges(ids));
                }
            }
        }
        out
    }

    fn unit_to_ids(&self, unit: &[UnitAtom]) -> Vec<u32> {
        let mut ids = Vec::with_capacity(unit.len());
        for atom in unit {
            match *atom {
                // without a marker piece the marker falls back to a plain
                // space byte, which is what it stands for
                UnitAtom::Marker => match self.char_id(MARKER) {
                    Some(id) => ids.push(id),
                    None => self.push_char_bytes(' ', &mut ids),
                },
                UnitAtom::Char(c) => match self.char_id(c) {
                    Some(id) => ids.push(id),
                    None => self.push_char_bytes(c, &mut ids),
                },
                UnitAtom::Escaped(c) => self.push_char_bytes(c, &mut ids),
            }
        }
        ids
    }

    fn push_char_bytes(&self, c: char, ids: &mut Vec<u32>) {
        let mut buf = [0u8; 4];
        for &b in c.encode_utf8(&mut buf).as_bytes() {
            ids.push(self.byte_id(b));
        }
    }

    /// Apply merges in rank order: repeatedly merge every occurrence of
    /// the lowest-ranked applicable pair.
    fn apply_merges(&self, mut ids: Vec<u32>) -> Vec<u32> {
        loop {
            let mut best: Option<(u32, (u32, u32), u32)> = None;
            for w in ids.windows(2) {
                if let Some((rank, merged)) = self.merge_lookup((w[0], w[1])) {
                    if best.is_none_or(|(r, _, _)| rank < r) {
                        best = Some((rank, (w[0], w[1]), merged));
                    }
                }
            }
            let Some((_, (l, r), merged)) = best else {
                return ids;
            };
            let mut next = Vec::with_capacity(ids.len());
            let mut i = 0;
            while i < ids.len() {
                if i + 1 < ids.len() && ids[i] == l && ids[i + 1] == r {
                    next.push(merged);
                    i += 2;
                } else {
                    next.push(ids[i]);
                    i += 1;
                }
            }
            ids = next;
        }
    }

    /// Decode token ids back to text. Control specials (EOT, BOS, code
    /// tags) render as nothing unless `render_specials` is set.
    pub fn decode(&self, ids: &[u32]) -> Result<Decoded> {
        self.decode_opts(ids, false)
    }

    pub fn decode_opts(&self, ids: &[u32], render_specials: bool) -> Result<Decoded> {
        let mut text = String::new();
        let mut byte_buf: Vec<u8> = Vec::new();
        let mut invalid_runs = 0;

        let flush =
            |buf: &mut Vec<u8>, text: &mut String, invalid: &mut usize| {
                if buf.is_empty() {
                    return;
                }
                match std::str::from_utf8(buf) {
                    Ok(s) => text.push_str(s),
                    Err(_) => {
                        text.push_str(&String::from_utf8_lossy(buf));
                        *invalid += 1;
                    }
                }
                buf.clear();
            };

        for &id in ids {
            let piece = self.piece(id).ok_or(Error::TokenOutOfRange {
                id,
                vocab: self.vocab_size(),
            })?;
            match piece.kind {
                PieceKind::Byte(b) => byte_buf.push(b),
                PieceKind::EndOfText | PieceKind::BosTurn | PieceKind::CodeTag => {
                    flush(&mut byte_buf, &mut text, &mut invalid_runs);
                    if render_specials {
                        text.push_str(&piece.text);
                    }
                }
                PieceKind::WhitespaceRun(_) | PieceKind::Char | PieceKind::Merged => {
                    flush(&mut byte_buf, &mut text, &mut invalid_runs);
                    for c in piece.text.chars() {
                        text.push(if c == MARKER { ' ' } else { c });
                    }
                }
            }
        }
        flush(&mut byte_buf, &mut text, &mut invalid_runs);

        // strip the single dummy prefix
        let text = match text.strip_prefix(' ') {
            Some(rest) => rest.to_string(),
            None => text,
        };
        Ok(Decoded {
            text,
            invalid_utf8_runs: invalid_runs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cover_prefers_longest_runs() {
        let avail: Vec<u32> = (2..=24).rev().collect();
        assert_eq!(whitespace_cover(8, &avail), vec![8]);
        assert_eq!(whitespace_cover(30, &avail), vec![24, 6]);
        assert_eq!(whitespace_cover(25, &avail), vec![24, 1]);
        assert_eq!(whitespace_cover(1, &avail), vec![1]);
    }

    #[test]
    fn cover_handles_gapped_configs() {
        let avail = vec![8u32, 4];
        assert_eq!(whitespace_cover(3, &avail), vec![1, 1, 1]);
        assert_eq!(whitespace_cover(13, &avail), vec![8, 4, 1]);
    }

    /// Minimum token count for a marker run, by dynamic programming over
    /// the available run lengths plus single markers.
    fn dp_min_tokens(run: u32, lengths: &[u32]) -> u32 {
        let run = run as usize;
        let mut best = vec![u32::MAX; run + 1];
        best[0] = 0;
        for i in 1..=run {
            best[i] = best[i - 1] + 1; // single marker
            for &len in lengths {
                let len = len as usize;
                if len <= i && best[i - len] != u32::MAX {
                    best[i] = best[i].min(best[i - len] + 1);
                }
            }
        }
        best[run]
    }

    #[test]
    fn greedy_cover_matches_dp_oracle_up_to_100() {
        let avail: Vec<u32> = (2..=24).rev().collect();
        for run in 1..=100u32 {
            let greedy = whitespace_cover(run, &avail).len() as u32;
            let optimal = dp_min_tokens(run, &avail);
            assert_eq!(greedy, optimal, "run length {run}");
        }
    }

    #[test]
    fn prepare_splits_units_before_markers() {
        let avail: Vec<u32> = (2..=24).rev().collect();
        let items = prepare("ab cd", &avail);
        assert_eq!(
            items,
            vec![
                Item::Unit(vec![
                    UnitAtom::Marker,
                    UnitAtom::Char('a'),
                    UnitAtom::Char('b')
                ]),
                Item::Unit(vec![
                    UnitAtom::Marker,
                    UnitAtom::Char('c'),
                    UnitAtom::Char('d')
                ]),
            ]
        );
    }

    #[test]
    fn prepare_covers_marker_runs() {
        let avail: Vec<u32> = (2..=24).rev().collect();
        // "a" + 8 spaces + "b": prefix marker heads the first unit,
        // the 8-space run becomes one token
        let items = prepare("a        b", &avail);
        assert_eq!(
            items,
            vec![
                Item::Unit(vec![UnitAtom::Marker, UnitAtom::Char('a')]),
                Item::WsRun(8),
                Item::Unit(vec![UnitAtom::Char('b')]),
            ]
        );
    }

    #[test]
    fn prepare_attaches_trailing_single_marker_to_next_unit() {
        let avail = vec![24u32, 2];
        // run of 3 = 2 + 1; the single heads the "x" unit
        let items = prepare("  x", &avail);
        assert_eq!(
            items,
            vec![
                Item::WsRun(2),
                Item::Unit(vec![UnitAtom::Marker, UnitAtom::Char('x')]),
            ]
        );
    }

    #[test]
    fn prepare_escapes_marker_and_special_open() {
        let avail: Vec<u32> = (2..=24).rev().collect();
        let items = prepare("\u{2581}\u{27E8}", &avail);
        assert_eq!(
            items,
            vec![Item::Unit(vec![
                UnitAtom::Marker,
                UnitAtom::Escaped('\u{2581}'),
                UnitAtom::Escaped('\u{27E8}'),
            ])]
        );
    }
}
