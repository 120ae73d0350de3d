//! Instruction-finetuning conversation formats and stochastic merging.
//!
//! Conversations render either unrolled (turn texts joined by blank lines,
//! no role labels) or in an explicit chat format where an end-of-text
//! marker opens the datapoint and every turn starts with a turn marker and
//! a role label. Independent conversations are merged into single
//! datapoints by drawing a count from a geometric distribution and
//! concatenating that many conversations, which trains context switching.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

impl Role {
    fn label(self) -> &'static str {
        match self {
            Role::User => "User",
            Role::Assistant => "Assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

/// A turn-based conversation: nonempty, first turn from the user, roles
/// strictly alternating.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub turns: Vec<Turn>,
    #[serde(default)]
    pub source: String,
}

impl Conversation {
    pub fn validate(&self) -> Result<()> {
        if self.turns.is_empty() {
            return Err(Error::InvalidConversation("conversation is empty".into()));
        }
        if self.turns[0].role != Role::User {
            return Err(Error::InvalidConversation(
                "first turn must be from the user".into(),
            ));
        }
        for pair in self.turns.windows(2) {
            if pair[0].role == pair[1].role {
                return Err(Error::InvalidConversation(
                    "roles must strictly alternate".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Insert a space between consecutive newlines so the blank-line delimiter
/// of the unrolled format stays unambiguous.
fn escape_double_newlines(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut prev_newline = false;
    for c in text.chars() {
        if c == '\n' && prev_newline {
            out.push(' ');
        }
        prev_newline = c == '\n';
        out.push(c);
    }
    out
}

/// Unrolled format: turn texts joined by exactly one blank line, no role
/// labels, no trailing delimiter.
pub fn format_unrolled(conv: &Conversation) -> Result<String> {
    conv.validate()?;
    Ok(conv
        .turns
        .iter()
        .map(|t| escape_double_newlines(&t.text))
        .collect::<Vec<_>>()
        .join("\n\n"))
}

/// Chat format: the end-of-text marker opens the datapoint, each turn is a
/// marker-prefixed "Role: text" line.
pub fn format_chatml(conv: &Conversation, eot_marker: &str, bos_marker: &str) -> Result<String> {
    conv.validate()?;
    let mut out = String::new();
    out.push_str(eot_marker);
    for turn in &conv.turns {
        out.push_str(bos_marker);
        out.push_str(turn.role.label());
        out.push_str(": ");
        out.push_str(&turn.text);
        out.push('\n');
    }
    Ok(out)
}

/// Rendering style for merged datapoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "style")]
pub enum ConversationStyle {
    Unrolled,
    Chatml { eot: String, bos: String },
}

impl ConversationStyle {
    pub fn chatml_default() -> Self {
        ConversationStyle::Chatml {
            eot: "<eos>".to_string(),
            bos: "<bos>".to_string(),
        }
    }

    fn format(&self, conv: &Conversation) -> Result<String> {
        match self {
            ConversationStyle::Unrolled => format_unrolled(conv),
            ConversationStyle::Chatml { eot, bos } => format_chatml(conv, eot, bos),
        }
    }

    /// Joiner between conversations inside one merged datapoint. The chat
    /// format needs none: every conversation opens with the eot marker.
    fn joiner(&self) -> &'static str {
        match self {
            ConversationStyle::Unrolled => "\n\n",
            ConversationStyle::Chatml { .. } => "",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MergePolicy {
    /// Geometric parameter; the merged-conversation count N has
    /// P(N = n) = p (1-p)^(n-1) on {1, 2, ...}.
    pub p: f64,
    pub seed: u64,
}

impl Default for MergePolicy {
    fn default() -> Self {
        Self { p: 0.5, seed: 0 }
    }
}

/// Inverse-CDF draw from Geometric(p) on {1, 2, ...}.
pub fn sample_geometric<R: Rng>(rng: &mut R, p: f64) -> Result<u64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "geometric parameter {p} outside (0, 1]"
        )));
    }
    if p >= 1.0 {
        return Ok(1);
    }
    let u: f64 = rng.gen(); // [0, 1)
    let n = ((1.0 - u).ln() / (1.0 - p).ln()).ceil();
    Ok((n as u64).max(1))
}

/// Merge conversations into datapoints: draw N ~ Geometric(p), take N
/// conversations uniformly without replacement from the remaining pool
/// (truncated to the pool size), and emit their concatenation. Repeats
/// until the pool is exhausted, so every conversation appears exactly
/// once across the output.
pub fn merge_conversations(
    dataset: Vec<Conversation>,
    policy: &MergePolicy,
    style: &ConversationStyle,
) -> Result<Vec<String>> {
    for conv in &dataset {
        conv.validate()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let mut pool = dataset;
    let mut out = Vec::new();
    while !pool.is_empty() {
        let n = (sample_geometric(&mut rng, policy.p)? as usize).min(pool.len());
        let mut parts = Vec::with_capacity(n);
        for _ in 0..n {
            let idx = rng.gen_range(0..pool.len());
            parts.push(style.format(&pool.swap_remove(idx))?);
        }
        out.push(parts.join(style.joiner()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(texts: &[&str]) -> Conversation {
        Conversation {
            turns: texts
                .iter()
                .enumerate()
                .map(|(i, t)| Turn {
                    role: if i % 2 == 0 { Role::User } else { Role::Assistant },
                    text: t.to_string(),
                })
                .collect(),
            source: "test".to_string(),
        }
    }

    #[test]
    fn unrolled_joins_turns_with_blank_lines() {
        assert_eq!(format_unrolled(&conv(&["Q", "A"])).unwrap(), "Q\n\nA");
        assert_eq!(format_unrolled(&conv(&["Q"])).unwrap(), "Q");
    }

    #[test]
    fn unrolled_escapes_delimiter_collisions() {
        let c = conv(&["line one\n\nline two", "A"]);
        let out = format_unrolled(&c).unwrap();
        assert_eq!(out, "line one\n \nline two\n\nA");
        // the only blank-line delimiter is the turn separator
        assert_eq!(out.matches("\n\n").count(), 1);
        let c = conv(&["a\n\n\nb"]);
        assert_eq!(format_unrolled(&c).unwrap(), "a\n \n \nb");
    }

    #[test]
    fn chatml_matches_documented_listing() {
        let out = format_chatml(&conv(&["Hej", "Hej!"]), "<eos>", "<bos>").unwrap();
        assert_eq!(out, "<eos><bos>User: Hej\n<bos>Assistant: Hej!\n");
    }

    #[test]
    fn chatml_three_turns_have_three_marker_lines() {
        let out = format_chatml(&conv(&["a", "b", "c"]), "<eos>", "<bos>").unwrap();
        assert_eq!(out.matches("<bos>").count(), 3);
        assert_eq!(
            out,
            "<eos><bos>User: a\n<bos>Assistant: b\n<bos>User: c\n"
        );
    }

    #[test]
    fn invalid_conversations_are_rejected() {
        let empty = Conversation {
            turns: vec![],
            source: String::new(),
        };
        assert!(format_unrolled(&empty).is_err());

        let mut first_assistant = conv(&["a", "b"]);
        first_assistant.turns[0].role = Role::Assistant;
        first_assistant.turns[1].role = Role::User;
        assert!(format_chatml(&first_assistant, "<eos>", "<bos>").is_err());

        let mut repeated = conv(&["a", "b"]);
        repeated.turns[1].role = Role::User;
        assert!(format_unrolled(&repeated).is_err());
    }

    #[test]
    fn degenerate_geometric_emits_each_conversation_alone() {
        let dataset: Vec<Conversation> = (0..6).map(|i| conv(&[&format!("q{i}")])).collect();
        let policy = MergePolicy { p: 1.0, seed: 9 };
        let out = merge_conversations(dataset, &policy, &ConversationStyle::Unrolled).unwrap();
        assert_eq!(out.len(), 6);
        let mut sorted = out.clone();
        sorted.sort();
        assert_eq!(sorted, vec!["q0", "q1", "q2", "q3", "q4", "q5"]);
    }

    #[test]
    fn merge_is_deterministic_under_seed() {
        let dataset: Vec<Conversation> =
            (0..20).map(|i| conv(&[&format!("q{i}"), &format!("a{i}")])).collect();
        let policy = MergePolicy { p: 0.5, seed: 42 };
        let style = ConversationStyle::chatml_default();
        let a = merge_conversations(dataset.clone(), &policy, &style).unwrap();
        let b = merge_conversations(dataset, &policy, &style).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn merged_datapoints_conserve_turn_texts() {
        let dataset: Vec<Conversation> =
            (0..50).map(|i| conv(&[&format!("q{i}"), &format!("a{i}")])).collect();
        let policy = MergePolicy { p: 0.4, seed: 7 };
        let out =
            merge_conversations(dataset.clone(), &policy, &ConversationStyle::chatml_default())
                .unwrap();

        let mut expected: Vec<String> = dataset
            .iter()
            .flat_map(|c| c.turns.iter().map(|t| t.text.clone()))
            .collect();
        expected.sort();

        let mut got: Vec<String> = out
            .iter()
            .flat_map(|dp| dp.split("<eos>"))
            .filter(|s| !s.is_empty())
            .flat_map(|c| c.split("<bos>"))
            .filter(|s| !s.is_empty())
            .map(|line| {
                let line = line.strip_suffix('\n').unwrap_or(line);
                let (_, text) = line.split_once(": ").unwrap();
                text.to_string()
            })
            .collect();
        got.sort();
        assert_eq!(got, expected);
    }

    #[test]
    fn eot_markers_count_merged_conversations() {
        let dataset: Vec<Conversation> =
            (0..30).map(|i| conv(&[&format!("q{i}"), &format!("a{i}")])).collect();
        let total = dataset.len();
        let policy = MergePolicy { p: 0.5, seed: 3 };
        let out =
            merge_conversations(dataset, &policy, &ConversationStyle::chatml_default()).unwrap();
        let eots: usize = out.iter().map(|dp| dp.matches("<eos>").count()).sum();
        assert_eq!(eots, total);
        assert!(out.len() < total, "merging should produce fewer datapoints");
    }

    #[test]
    fn geometric_sampler_mean_approaches_inverse_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 10_000;
        let sum: u64 = (0..n).map(|_| sample_geometric(&mut rng, 0.5).unwrap()).sum();
        let mean = sum as f64 / n as f64;
        // E[N] = 2, sigma = sqrt(2)/100
        assert!((mean - 2.0).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn geometric_rejects_bad_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_geometric(&mut rng, 0.0).is_err());
        assert!(sample_geometric(&mut rng, 1.5).is_err());
    }

    #[test]
    fn chatml_parses_back_injectively() {
        let convs = vec![
            conv(&["fråga ett", "svar ett", "följdfråga"]),
            conv(&["fråga två", "svar två"]),
        ];
        for original in convs {
            let rendered = format_chatml(&original, "<eos>", "<bos>").unwrap();
            let body = rendered.strip_prefix("<eos>").unwrap();
            let turns: Vec<Turn> = body
                .split("<bos>")
                .filter(|s| !s.is_empty())
                .map(|line| {
                    let line = line.strip_suffix('\n').unwrap();
                    let (role, text) = line.split_once(": ").unwrap();
                    Turn {
                        role: if role == "User" { Role::User } else { Role::Assistant },
                        text: text.to_string(),
                    }
                })
                .collect();
            assert_eq!(turns, original.turns);
        }
    }
}
