//! Learning-rate schedules, model hyperparameter presets, and FLOP /
//! utilization accounting.
//!
//! The pretraining schedule is token-based: linear warmup to the maximum
//! learning rate over 0.5B tokens, cosine decay to a tenth of the maximum
//! over 319.8B tokens, then a constant tail up to 372.2B tokens. The shape
//! is shared by every model size; only the maximum differs.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Token-based pretraining schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub max_lr: f64,
    /// Minimum learning rate as a fraction of the maximum.
    pub min_ratio: f64,
    pub warmup_tokens: f64,
    pub decay_tokens: f64,
    pub total_tokens: f64,
}

pub const WARMUP_TOKENS: f64 = 0.5e9;
pub const DECAY_TOKENS: f64 = 319.8e9;
pub const TOTAL_TOKENS: f64 = 372.2e9;

impl ScheduleSpec {
    /// The pretraining schedule for a given maximum learning rate.
    pub fn pretraining(max_lr: f64) -> Self {
        Self {
            max_lr,
            min_ratio: 0.1,
            warmup_tokens: WARMUP_TOKENS,
            decay_tokens: DECAY_TOKENS,
            total_tokens: TOTAL_TOKENS,
        }
    }

    pub fn min_lr(&self) -> f64 {
        self.max_lr * self.min_ratio
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_ratio > 0.0 && self.min_ratio <= 1.0) {
            return Err(Error::InvalidSchedule("min_ratio outside (0, 1]".into()));
        }
        if self.warmup_tokens <= 0.0 || self.decay_tokens <= 0.0 || self.total_tokens <= 0.0 {
            return Err(Error::InvalidSchedule("all spans must be positive".into()));
        }
        if self.warmup_tokens + self.decay_tokens > self.total_tokens {
            return Err(Error::InvalidSchedule(
                "warmup + decay exceeds total tokens".into(),
            ));
        }
        Ok(())
    }
}

/// Cosine interpolation weight in [0, 1]: 1 at progress 0, 0 at progress 1.
/// Written so both endpoints are exact in floating point.
fn cosine_weight(progress: f64) -> f64 {
    (1.0 + (std::f64::consts::PI * progress).cos()) / 2.0
}

/// Learning rate after `tokens_seen` tokens.
///
/// Piecewise: linear on [0, W), cosine from max to min on [W, W+D),
/// constant min on [W+D, T]. Continuous at both joints; positions beyond
/// the schedule error.
pub fn lr_at(tokens_seen: f64, spec: &ScheduleSpec) -> Result<f64> {
    spec.validate()?;
    if !(0.0..=spec.total_tokens).contains(&tokens_seen) {
        return Err(Error::BeyondSchedule {
            position: tokens_seen,
            span: spec.total_tokens,
        });
    }
    let w = spec.warmup_tokens;
    let d = spec.decay_tokens;
    Ok(if tokens_seen < w {
        spec.max_lr * (tokens_seen / w)
    } else if tokens_seen < w + d {
        let weight = cosine_weight((tokens_seen - w) / d);
        spec.max_lr * weight + spec.min_lr() * (1.0 - weight)
    } else {
        spec.min_lr()
    })
}

/// Step-based finetuning schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepScheduleSpec {
    pub max_lr: f64,
    pub min_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl StepScheduleSpec {
    /// The instruction-finetuning schedule: 2e-5 to 2e-6 over 2,069 global
    /// steps with 360 warmup steps.
    pub fn finetuning() -> Self {
        Self {
            max_lr: 2e-5,
            min_lr: 2e-6,
            warmup_steps: 360,
            total_steps: 2069,
        }
    }
}

/// Learning rate at a global step: linear warmup on [0, warmup), cosine
/// decay from max to min on [warmup, total].
pub fn lr_at_step(step: u64, spec: &StepScheduleSpec) -> Result<f64> {
    if step > spec.total_steps {
        return Err(Error::BeyondSchedule {
            position: step as f64,
            span: spec.total_steps as f64,
        });
    }
    if spec.warmup_steps >= spec.total_steps {
        return Err(Error::InvalidSchedule(
            "warmup_steps must be below total_steps".into(),
        ));
    }
    Ok(if step < spec.warmup_steps {
        spec.max_lr * (step as f64 / spec.warmup_steps as f64)
    } else {
        let span = (spec.total_steps - spec.warmup_steps) as f64;
        let weight = cosine_weight((step - spec.warmup_steps) as f64 / span);
        spec.max_lr * weight + spec.min_lr * (1.0 - weight)
    })
}

/// Hyperparameters of one model size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub label: &'static str,
    pub max_lr: f64,
    pub global_batch: u64,
    pub attention_heads: u64,
    pub depth: u64,
    pub embedding_dim: u64,
    pub vocab_size: u64,
    pub seq_len: u64,
}

impl ModelConfig {
    /// Feed-forward dimension, always four times the embedding dimension.
    pub fn feed_forward_dim(&self) -> u64 {
        4 * self.embedding_dim
    }
}

pub const PRESET_LABELS: [&str; 6] = ["126M", "356M", "1.3B", "6.7B", "20B", "40B"];

/// (label, max lr, batch, heads, depth, embedding dim)
const PRESETS: [(&str, f64, u64, u64, u64, u64); 6] = [
    ("126M", 3e-6, 256, 12, 12, 768),
    ("356M", 3e-6, 256, 16, 24, 1024),
    ("1.3B", 2e-6, 512, 32, 24, 2048),
    ("6.7B", 1.2e-6, 1000, 32, 32, 4096),
    ("20B", 1.4e-6, 1920, 48, 44, 6144),
    ("40B", 1.1e-6, 1920, 64, 48, 8192),
];

/// Hyperparameter preset for a model size label.
pub fn preset(label: &str) -> Result<ModelConfig> {
    PRESETS
        .iter()
        .find(|p| p.0 == label)
        .map(|&(label, max_lr, global_batch, attention_heads, depth, embedding_dim)| ModelConfig {
            label,
            max_lr,
            global_batch,
            attention_heads,
            depth,
            embedding_dim,
            vocab_size: 64_000,
            seq_len: 2048,
        })
        .ok_or_else(|| Error::UnknownPreset {
            label: label.to_string(),
            valid: PRESET_LABELS.join(", "),
        })
}

pub fn all_presets() -> Vec<ModelConfig> {
    PRESET_LABELS
        .iter()
        .map(|l| preset(l).expect("static labels are valid"))
        .collect()
}

/// Model FLOPs for one training iteration:
/// F = 96 B s l h^2 (1 + s/(6h) + V/(16 l h)).
pub fn flops_per_iteration(cfg: &ModelConfig) -> f64 {
    let b = cfg.global_batch as f64;
    let s = cfg.seq_len as f64;
    let l = cfg.depth as f64;
    let h = cfg.embedding_dim as f64;
    let v = cfg.vocab_size as f64;
    96.0 * b * s * l * h * h * (1.0 + s / (6.0 * h) + v / (16.0 * l * h))
}

/// Rough parameter count: transformer blocks plus token and position
/// embeddings. Used as a sanity floor for the FLOP formula.
pub fn approx_parameter_count(cfg: &ModelConfig) -> f64 {
    let l = cfg.depth as f64;
    let h = cfg.embedding_dim as f64;
    12.0 * l * h * h + (cfg.vocab_size + cfg.seq_len) as f64 * h
}

/// Peak dense bf16 throughput of one A100 GPU.
pub const DEFAULT_PEAK_FLOPS_PER_GPU: f64 = 312e12;

/// Achieved model FLOP/s as a fraction of aggregate theoretical peak.
pub fn utilization(achieved_flops_per_s: f64, gpu_count: u64, peak_per_gpu: f64) -> Result<f64> {
    if achieved_flops_per_s <= 0.0 || gpu_count == 0 || peak_per_gpu <= 0.0 {
        return Err(Error::InvalidSchedule(
            "utilization arguments must be positive".into(),
        ));
    }
    Ok(achieved_flops_per_s / (gpu_count as f64 * peak_per_gpu))
}

/// One reported throughput measurement.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ThroughputRow {
    pub label: &'static str,
    pub gpus: u64,
    pub achieved_flops_per_s: f64,
    pub reported_utilization_pct: f64,
}

/// Achieved model FLOP/s and utilization per model size, single job.
pub const REPORTED_THROUGHPUT: [ThroughputRow; 6] = [
    ThroughputRow {
        label: "126M",
        gpus: 64,
        achieved_flops_per_s: 1.71e15,
        reported_utilization_pct: 8.58,
    },
    ThroughputRow {
        label: "356M",
        gpus: 32,
        achieved_flops_per_s: 1.57e15,
        reported_utilization_pct: 15.69,
    },
    ThroughputRow {
        label: "1.3B",
        gpus: 128,
        achieved_flops_per_s: 5.21e15,
        reported_utilization_pct: 13.06,
    },
    ThroughputRow {
        label: "6.7B",
        gpus: 160,
        achieved_flops_per_s: 8.63e15,
        reported_utilization_pct: 17.28,
    },
    ThroughputRow {
        label: "20B",
        gpus: 160,
        achieved_flops_per_s: 1.89e16,
        reported_utilization_pct: 37.91,
    },
    ThroughputRow {
        label: "40B",
        gpus: 160,
        achieved_flops_per_s: 1.96e16,
        reported_utilization_pct: 39.23,
    },
];

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ScheduleSpec {
        ScheduleSpec::pretraining(1.1e-6)
    }

    #[test]
    fn warmup_starts_at_zero_and_reaches_max() {
        let s = spec();
        assert_eq!(lr_at(0.0, &s).unwrap(), 0.0);
        assert_eq!(lr_at(0.5e9, &s).unwrap(), s.max_lr);
    }

    #[test]
    fn constant_tail_is_exactly_min() {
        let s = spec();
        let tail_start = 0.5e9 + 319.8e9;
        assert_eq!(lr_at(tail_start, &s).unwrap(), s.min_lr());
        assert_eq!(lr_at(s.total_tokens, &s).unwrap(), s.min_lr());
    }

    #[test]
    fn cosine_midpoint_is_55_percent_of_max() {
        let s = spec();
        let mid = 0.5e9 + 319.8e9 / 2.0;
        let lr = lr_at(mid, &s).unwrap();
        assert!((lr - 0.55 * s.max_lr).abs() <= 1e-12 * s.max_lr, "lr {lr}");
    }

    #[test]
    fn non_increasing_after_warmup_and_bounded_below() {
        let s = spec();
        let mut prev = f64::INFINITY;
        let mut t = s.warmup_tokens;
        while t <= s.total_tokens {
            let lr = lr_at(t, &s).unwrap();
            assert!(lr <= prev + 1e-18);
            assert!(lr >= s.min_lr() - 1e-18);
            prev = lr;
            t += 1e9;
        }
    }

    #[test]
    fn beyond_total_errors() {
        let s = spec();
        assert!(lr_at(s.total_tokens + 1.0, &s).is_err());
        assert!(lr_at(-1.0, &s).is_err());
    }

    #[test]
    fn step_schedule_hits_documented_boundaries() {
        let s = StepScheduleSpec::finetuning();
        assert_eq!(lr_at_step(0, &s).unwrap(), 0.0);
        assert_eq!(lr_at_step(360, &s).unwrap(), 2e-5);
        assert_eq!(lr_at_step(2069, &s).unwrap(), 2e-6);
        assert!(lr_at_step(2070, &s).is_err());
    }

    #[test]
    fn step_schedule_midpoint() {
        let s = StepScheduleSpec::finetuning();
        // halfway through the cosine span the lr is the arithmetic mean
        let mid = 360 + (2069 - 360) / 2;
        let lr = lr_at_step(mid, &s).unwrap();
        let expected = (2e-5 + 2e-6) / 2.0;
        // one-step discretization slack: the span is odd
        assert!((lr - expected).abs() < 2e-8, "lr {lr} vs {expected}");
    }

    #[test]
    fn presets_match_reported_hyperparameters() {
        let p = preset("40B").unwrap();
        assert_eq!(
            (p.max_lr, p.global_batch, p.attention_heads, p.depth, p.embedding_dim),
            (1.1e-6, 1920, 64, 48, 8192)
        );
        let p = preset("126M").unwrap();
        assert_eq!(
            (p.max_lr, p.global_batch, p.attention_heads, p.depth, p.embedding_dim),
            (3e-6, 256, 12, 12, 768)
        );
    }

    #[test]
    fn every_preset_has_ff_dim_four_times_embedding() {
        for p in all_presets() {
            assert_eq!(p.feed_forward_dim(), 4 * p.embedding_dim);
            assert_eq!(p.vocab_size, 64_000);
            assert_eq!(p.seq_len, 2048);
            assert_eq!(p.embedding_dim % p.attention_heads, 0);
        }
    }

    #[test]
    fn unknown_preset_lists_valid_labels() {
        let err = preset("7B").unwrap_err().to_string();
        assert!(err.contains("126M") && err.contains("40B"));
    }

    #[test]
    fn flops_scale_linearly_in_batch() {
        let mut cfg = preset("126M").unwrap();
        let f1 = flops_per_iteration(&cfg);
        cfg.global_batch *= 2;
        let f2 = flops_per_iteration(&cfg);
        assert!((f2 / f1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn flops_against_independent_recomputation() {
        // spreadsheet-style recomputation for the smallest preset
        let f = flops_per_iteration(&preset("126M").unwrap());
        let (b, s, l, h, v) = (256.0, 2048.0, 12.0, 768.0, 64000.0);
        let expected = 96.0 * b * s * l * h * h
            + 96.0 * b * s * l * h * h * s / (6.0 * h)
            + 96.0 * b * s * l * h * h * v / (16.0 * l * h);
        assert!((f - expected).abs() <= 1e-6 * expected);
    }

    #[test]
    fn flops_per_token_dominate_six_times_parameters() {
        for p in all_presets() {
            let per_token = flops_per_iteration(&p) / (p.global_batch as f64 * p.seq_len as f64);
            let six_p = 6.0 * approx_parameter_count(&p);
            assert!(per_token >= six_p, "{}: {per_token} < {six_p}", p.label);
        }
    }

    #[test]
    fn utilization_basic_cases() {
        assert_eq!(utilization(312e12, 1, 312e12).unwrap(), 1.0);
        assert!(utilization(1.0, 0, 312e12).is_err());
        assert!(utilization(0.0, 1, 312e12).is_err());
    }

    #[test]
    fn utilization_reconstructs_reported_table() {
        for row in REPORTED_THROUGHPUT {
            let u = utilization(row.achieved_flops_per_s, row.gpus, DEFAULT_PEAK_FLOPS_PER_GPU)
                .unwrap();
            let diff_pp = (u * 100.0 - row.reported_utilization_pct).abs();
            assert!(
                diff_pp <= 0.1,
                "{}: recomputed {:.2}% vs reported {:.2}%",
                row.label,
                u * 100.0,
                row.reported_utilization_pct
            );
        }
    }

    #[test]
    fn normalized_curve_is_size_independent() {
        let reference = ScheduleSpec::pretraining(1.0);
        for p in all_presets() {
            let s = ScheduleSpec::pretraining(p.max_lr);
            for step in 0..=100 {
                let t = s.total_tokens * step as f64 / 100.0;
                let normalized = lr_at(t, &s).unwrap() / s.max_lr;
                let expected = lr_at(t, &reference).unwrap();
                assert!(
                    (normalized - expected).abs() <= 1e-12,
                    "{} at {t}: {normalized} vs {expected}",
                    p.label
                );
            }
        }
    }
}
