//! Text canonicalization: non-printing removal, newline and whitespace
//! normalization, Unicode NFC.
//!
//! Intra-line space runs survive normalization by default: the tokenizer's
//! repeated-whitespace tokens assume code indentation reaches it intact.

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

/// Only NFC is supported; the enum exists so configs are explicit about it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum UnicodeForm {
    #[default]
    Nfc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizeConfig {
    pub unicode_form: UnicodeForm,
    pub preserve_intraline_whitespace: bool,
    pub max_consecutive_blank_lines: u32,
}

impl Default for NormalizeConfig {
    fn default() -> Self {
        Self {
            unicode_form: UnicodeForm::Nfc,
            preserve_intraline_whitespace: true,
            max_consecutive_blank_lines: 2,
        }
    }
}

/// Zero-width characters treated as non-printing crawl noise.
fn is_zero_width(c: char) -> bool {
    matches!(c, '\u{200B}'..='\u{200D}' | '\u{FEFF}')
}

/// Canonicalize a document text. Total on valid UTF-8 and idempotent.
///
/// The output contains no C0/C1 control characters other than `\n` and
/// `\t`, no `\r`, no trailing horizontal whitespace on any line, and no
/// blank-line run longer than the configured cap.
pub fn normalize_text(text: &str, cfg: &NormalizeConfig) -> String {
    let canon = canonicalize_newlines_and_controls(text);
    let nfc: String = canon.nfc().collect();
    let stripped = strip_line_whitespace(&nfc, cfg.preserve_intraline_whitespace);
    cap_blank_lines(&stripped, cfg.max_consecutive_blank_lines)
}

fn canonicalize_newlines_and_controls(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\r' => {
                if chars.peek() == Some(&'\n') {
                    chars.next();
                }
                out.push('\n');
            }
            '\n' | '\t' => out.push(c),
            c if c.is_control() || is_zero_width(c) => {}
            c => out.push(c),
        }
    }
    out
}

fn strip_line_whitespace(text: &str, preserve_intraline: bool) -> String {
    let mut out = String::with_capacity(text.len());
    let mut first = true;
    for line in text.split('\n') {
        if !first {
            out.push('\n');
        }
        first = false;
        let trimmed = line.trim_end_matches(|c: char| c.is_whitespace() && c != '\n');
        if preserve_intraline {
            out.push_str(trimmed);
        } else {
            collapse_intraline(trimmed, &mut out);
        }
    }
    out
}

fn collapse_intraline(line: &str, out: &mut String) {
    let mut in_run = false;
    for c in line.chars() {
        if c == ' ' || c == '\t' {
            if !in_run {
                out.push(' ');
            }
            in_run = true;
        } else {
            in_run = false;
            out.push(c);
        }
    }
}

/// A run of n consecutive newlines contains n-1 blank lines, so runs are
/// capped at max_blank + 1 newlines.
fn cap_blank_lines(text: &str, max_blank: u32) -> String {
    let cap = max_blank as usize + 1;
    let mut out = String::with_capacity(text.len());
    let mut run = 0usize;
    for c in text.chars() {
        if c == '\n' {
            run += 1;
            if run <= cap {
                out.push('\n');
            }
        } else {
            run = 0;
            out.push(c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn norm(text: &str) -> String {
        normalize_text(text, &NormalizeConfig::default())
    }

    #[test]
    fn removes_non_printing_characters() {
        assert_eq!(norm("a\u{0000}b"), "ab");
        assert_eq!(norm("a\u{0007}\u{009C}b"), "ab");
        assert_eq!(norm("a\u{200B}b\u{FEFF}c"), "abc");
    }

    #[test]
    fn canonicalizes_newlines() {
        assert_eq!(norm("a\r\nb"), "a\nb");
        assert_eq!(norm("a\rb"), "a\nb");
        assert_eq!(norm("a\r\r\nb"), "a\n\nb");
    }

    #[test]
    fn composes_to_nfc() {
        // e + combining acute becomes a single code point
        assert_eq!(norm("e\u{0301}"), "é");
        assert_eq!(norm("é"), "é");
    }

    #[test]
    fn preserves_code_indentation() {
        let code = "def f():\n    pass";
        assert_eq!(norm(code), code);
    }

    #[test]
    fn strips_trailing_horizontal_whitespace() {
        assert_eq!(norm("a  \nb\t\nc"), "a\nb\nc");
        assert_eq!(norm("a \u{00A0}\nb"), "a\nb");
    }

    #[test]
    fn caps_blank_line_runs() {
        assert_eq!(norm("a\n\n\n\n\nb"), "a\n\n\nb");
        let cfg = NormalizeConfig {
            max_consecutive_blank_lines: 0,
            ..NormalizeConfig::default()
        };
        assert_eq!(normalize_text("a\n\n\nb", &cfg), "a\nb");
    }

    #[test]
    fn whitespace_only_lines_become_blank_then_capped() {
        assert_eq!(norm("a\n  \n \n\t\n  \nb"), "a\n\n\nb");
    }

    #[test]
    fn collapses_intraline_runs_when_configured() {
        let cfg = NormalizeConfig {
            preserve_intraline_whitespace: false,
            ..NormalizeConfig::default()
        };
        assert_eq!(normalize_text("a   b\tc", &cfg), "a b c");
    }

    #[test]
    fn identity_on_clean_text() {
        let clean = "Det här är ren text.\n\nMed ett stycke till.";
        assert_eq!(norm(clean), clean);
    }

    #[test]
    fn tab_survives_normalization() {
        assert_eq!(norm("a\tb"), "a\tb");
    }

    proptest! {
        #[test]
        fn idempotent(text in "\\PC{0,200}") {
            let once = norm(&text);
            let twice = norm(&once);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn idempotent_with_newlines(text in "[a-zé\u{0301}\r\n\t \u{0000}\u{200B}]{0,120}") {
            let once = norm(&text);
            let twice = norm(&once);
            prop_assert_eq!(&once, &twice);
        }

        #[test]
        fn no_carriage_returns_or_controls(text in "\\PC{0,200}") {
            let out = norm(&text);
            prop_assert!(!out.contains('\r'));
            prop_assert!(out.chars().all(|c| !c.is_control() || c == '\n' || c == '\t'));
        }

        #[test]
        fn blank_runs_never_exceed_cap(text in "[ab \n]{0,120}") {
            let out = norm(&text);
            prop_assert!(!out.contains("\n\n\n\n"));
        }
    }
}
