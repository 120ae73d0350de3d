//! `nordpile`: corpus preparation and training-configuration CLI.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use nordpile_cli::pipeline::{
    self, cluster_records, format_conversations, run_pipeline, EncodedRecord, PipelineError,
    PipelineManifest,
};
use nordpile_core::corpus::{write_jsonl, write_jsonl_records};
use nordpile_core::dedup::{exact_dedup, fuzzy_dedup, LshParams};
use nordpile_core::filter::{filter_stream, FilterConfig};
use nordpile_core::instruct::{ConversationStyle, MergePolicy};
use nordpile_core::normalize::{normalize_text, NormalizeConfig};
use nordpile_core::packing::{
    pack_documents, read_packed, unpack, verify_packed, write_packed, DEFAULT_SEQ_LEN,
};
use nordpile_core::schedule::{
    all_presets, lr_at, lr_at_step, utilization, ScheduleSpec, StepScheduleSpec,
    DEFAULT_PEAK_FLOPS_PER_GPU, REPORTED_THROUGHPUT,
};
use nordpile_core::tokenizer::{
    sample_corpus, train_bpe, SampleSpec, SpecialsConfig, TokenizerModel, DEFAULT_VOCAB_SIZE,
};

#[derive(Parser)]
#[command(name = "nordpile", version, about = "LLM pretraining corpus toolkit")]
struct Cli {
    /// Global seed for stochastic stages.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for document-parallel stages (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-language/category size report for a corpus.
    Stats {
        #[arg(long)]
        input: PathBuf,
        /// Write the machine-readable report here.
        #[arg(long)]
        json_out: Option<PathBuf>,
    },
    /// Canonicalize document text.
    Normalize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// JSON config file overriding the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Abort on the first malformed input line.
        #[arg(long)]
        strict: bool,
    },
    /// Quality-filter documents; rejects go to a sidecar with verdicts.
    Filter {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        rejected: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Drop exact duplicates by content hash, keeping the first.
    DedupExact {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Drop near-duplicates via MinHash LSH with true-Jaccard verification.
    DedupFuzzy {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Cluster sidecar (JSONL of keep_id / dropped_ids / jaccard).
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train a BPE tokenizer.
    TokTrain {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_VOCAB_SIZE)]
        vocab_size: usize,
        /// Train on a stratified sample of the corpus.
        #[arg(long)]
        sample_fraction: Option<f64>,
    },
    /// Encode a corpus to token ids.
    TokEncode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Decode token ids back to text.
    TokDecode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Render control specials as their spellings.
        #[arg(long)]
        render_specials: bool,
    },
    /// Pack encoded documents into fixed-length sequences.
    Pack {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SEQ_LEN)]
        seq_len: u32,
        #[arg(long, default_value_t = 0)]
        eot_id: u16,
    },
    /// Split a packed file back into encoded documents.
    Unpack {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Check the delimiter and conservation invariants of a packed file.
    PackVerify {
        #[arg(long)]
        input: PathBuf,
    },
    /// Emit a learning-rate curve as CSV (token_count or step, lr).
    Schedule {
        /// Maximum learning rate for the token-based pretraining curve.
        #[arg(long, default_value_t = 1.0)]
        max_lr: f64,
        #[arg(long, default_value_t = 1000)]
        points: u64,
        /// Emit the step-based finetuning curve instead.
        #[arg(long)]
        finetune: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Reconstruct the throughput/utilization table.
    Throughput {
        #[arg(long, default_value_t = DEFAULT_PEAK_FLOPS_PER_GPU)]
        peak: f64,
    },
    /// Format instruction conversations with stochastic merging.
    InstructFormat {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_parser = ["unrolled", "chatml"])]
        style: String,
        /// Geometric parameter for the merged-conversation count.
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value = "<eos>")]
        eot_marker: String,
        #[arg(long, default_value = "<bos>")]
        bos_marker: String,
    },
    /// Run a full pipeline from a JSON manifest.
    Run {
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global();
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<PipelineError>().map_or(1, |pe| match pe {
                PipelineError::Validation(_) => 2,
                PipelineError::Stage { .. } => 1,
            });
            ExitCode::from(code)
        }
    }
}

/// Write to stdout, swallowing broken pipes so `nordpile ... | head` works.
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn load_config<T: serde::de::DeserializeOwned + Default>(
    path: &Option<PathBuf>,
) -> anyhow::Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let data =
                fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&data).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Stats { input, json_out } => {
            let docs = pipeline::load_corpus(&input)?;
            let (table, report) = pipeline::stats_outputs(&docs);
            emit(&table);
            if let Some(path) = json_out {
                pipeline::write_json(&path, &report)?;
            }
            Ok(())
        }
        Command::Normalize {
            input,
            output,
            config,
            strict,
        } => {
            let cfg: NormalizeConfig = load_config(&config)?;
            let mut docs = if strict {
                nordpile_core::corpus::read_jsonl_strict(&input)?
            } else {
                pipeline::load_corpus(&input)?
            };
            for doc in &mut docs {
                doc.text = normalize_text(&doc.text, &cfg);
            }
            let n = write_jsonl(&docs, &output)?;
            eprintln!("normalized {n} documents");
            Ok(())
        }
        Command::Filter {
            input,
            output,
            rejected,
            config,
        } => {
            let cfg: FilterConfig = load_config(&config)?;
            let docs = pipeline::load_corpus(&input)?;
            let (accepted, dropped) = filter_stream(docs, &cfg);
            write_jsonl(&accepted, &output)?;
            #[derive(serde::Serialize)]
            struct Rejected<'a> {
                id: &'a str,
                reasons: &'a [String],
                measurements: &'a BTreeMap<String, f64>,
                text: &'a str,
            }
            let records: Vec<Rejected> = dropped
                .iter()
                .map(|(d, v)| Rejected {
                    id: &d.id,
                    reasons: &v.reasons,
                    measurements: &v.measurements,
                    text: &d.text,
                })
                .collect();
            write_jsonl_records(&records, &rejected)?;
            eprintln!("accepted {}, rejected {}", accepted.len(), records.len());
            Ok(())
        }
        Command::DedupExact { input, output } => {
            let docs = pipeline::load_corpus(&input)?;
            let (kept, dropped) = exact_dedup(docs);
            write_jsonl(&kept, &output)?;
            eprintln!("kept {}, dropped {dropped} exact duplicates", kept.len());
            Ok(())
        }
        Command::DedupFuzzy {
            input,
            output,
            clusters,
            config,
        } => {
            let mut cfg: LshParams = load_config(&config)?;
            if config.is_none() {
                cfg.seed = cli.seed;
            }
            let docs = pipeline::load_corpus(&input)?;
            let ids_by_ordinal: BTreeMap<u64, String> =
                docs.iter().map(|d| (d.ordinal, d.id.clone())).collect();
            let (kept, found) = fuzzy_dedup(docs, &cfg)?;
            let records = cluster_records(&found, &ids_by_ordinal);
            write_jsonl(&kept, &output)?;
            write_jsonl_records(&records, &clusters)?;
            eprintln!(
                "kept {}, removed {} near-duplicates in {} clusters",
                kept.len(),
                found.dropped_ordinals().len(),
                found.clusters.len()
            );
            Ok(())
        }
        Command::TokTrain {
            input,
            model,
            vocab_size,
            sample_fraction,
        } => {
            let docs = pipeline::load_corpus(&input)?;
            let training = match sample_fraction {
                Some(fraction) => sample_corpus(
                    &docs,
                    &SampleSpec {
                        fraction,
                        seed: cli.seed,
                    },
                )?,
                None => docs,
            };
            let specials = SpecialsConfig::default();
            let (model_out, report) = train_bpe(
                training.iter().map(|d| d.text.as_str()),
                vocab_size,
                &specials,
            )?;
            model_out.save(&model)?;
            eprintln!(
                "vocab {} of {} ({} merges){}",
                report.achieved_vocab,
                report.target_vocab,
                report.merge_count,
                if report.stopped_early {
                    ": stopped early, corpus exhausted"
                } else {
                    ""
                }
            );
            Ok(())
        }
        Command::TokEncode {
            model,
            input,
            output,
        } => {
            let model = TokenizerModel::load(&model)?;
            let docs = pipeline::load_corpus(&input)?;
            let records: Vec<EncodedRecord> = docs
                .iter()
                .map(|d| EncodedRecord {
                    id: d.id.clone(),
                    ids: model.encode(&d.text),
                })
                .collect();
            write_jsonl_records(&records, &output)?;
            eprintln!("encoded {} documents", records.len());
            Ok(())
        }
        Command::TokDecode {
            model,
            input,
            output,
            render_specials,
        } => {
            let model = TokenizerModel::load(&model)?;
            let data = fs::read_to_string(&input)?;
            #[derive(serde::Serialize)]
            struct DecodedRecord {
                id: String,
                text: String,
            }
            let mut records = Vec::new();
            for (no, line) in data.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let rec: EncodedRecord =
                    serde_json::from_str(line).with_context(|| format!("line {}", no + 1))?;
                let decoded = model.decode_opts(&rec.ids, render_specials)?;
                if decoded.invalid_utf8_runs > 0 {
                    eprintln!(
                        "warning: {} invalid byte runs in {}",
                        decoded.invalid_utf8_runs, rec.id
                    );
                }
                records.push(DecodedRecord {
                    id: rec.id,
                    text: decoded.text,
                });
            }
            write_jsonl_records(&records, &output)?;
            Ok(())
        }
        Command::Pack {
            input,
            output,
            seq_len,
            eot_id,
        } => {
            let data = fs::read_to_string(&input)?;
            let mut docs: Vec<Vec<u16>> = Vec::new();
            for (no, line) in data.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let rec: EncodedRecord =
                    serde_json::from_str(line).with_context(|| format!("line {}", no + 1))?;
                let mut doc = Vec::with_capacity(rec.ids.len());
                for t in rec.ids {
                    if t > u16::MAX as u32 {
                        bail!("document {} has token id {t} beyond the u16 dtype", rec.id);
                    }
                    doc.push(t as u16);
                }
                docs.push(doc);
            }
            let ds = pack_documents(docs, seq_len, eot_id)?;
            let bytes = write_packed(&ds, &output)?;
            eprintln!(
                "{} sequences of {}, dropped tail {}, {bytes} bytes",
                ds.sequences(),
                ds.seq_len,
                ds.dropped_tail
            );
            Ok(())
        }
        Command::Unpack { input, output } => {
            let ds = read_packed(&input)?;
            let (docs, partial) = unpack(&ds);
            #[derive(serde::Serialize)]
            struct UnpackedRecord {
                index: usize,
                ids: Vec<u16>,
                partial: bool,
            }
            let mut records: Vec<UnpackedRecord> = docs
                .into_iter()
                .enumerate()
                .map(|(index, ids)| UnpackedRecord {
                    index,
                    ids,
                    partial: false,
                })
                .collect();
            if !partial.is_empty() {
                records.push(UnpackedRecord {
                    index: records.len(),
                    ids: partial,
                    partial: true,
                });
            }
            write_jsonl_records(&records, &output)?;
            Ok(())
        }
        Command::PackVerify { input } => {
            let ds = read_packed(&input)?;
            verify_packed(&ds)?;
            emit(&format!(
                "ok: {} sequences of {}, {} delimiters, dropped tail {}\n",
                ds.sequences(),
                ds.seq_len,
                ds.eot_offsets.len(),
                ds.dropped_tail
            ));
            Ok(())
        }
        Command::Schedule {
            max_lr,
            points,
            finetune,
            output,
        } => {
            let mut csv = String::new();
            if finetune {
                let spec = StepScheduleSpec::finetuning();
                csv.push_str("step,lr\n");
                for step in 0..=spec.total_steps {
                    csv.push_str(&format!("{},{:e}\n", step, lr_at_step(step, &spec)?));
                }
            } else {
                let spec = ScheduleSpec::pretraining(max_lr);
                csv.push_str("token_count,lr\n");
                for i in 0..=points {
                    let t = spec.total_tokens * i as f64 / points as f64;
                    csv.push_str(&format!("{},{:e}\n", t, lr_at(t, &spec)?));
                }
            }
            match output {
                Some(path) => fs::write(path, csv)?,
                None => emit(&csv),
            }
            Ok(())
        }
        Command::Throughput { peak } => {
            emit(&format!(
                "{:>6} {:>6} {:>12} {:>10} {:>12}\n",
                "size", "gpus", "flop/s", "reported", "recomputed"
            ));
            for row in REPORTED_THROUGHPUT {
                let u = utilization(row.achieved_flops_per_s, row.gpus, peak)?;
                emit(&format!(
                    "{:>6} {:>6} {:>12.3e} {:>9.2}% {:>11.2}%\n",
                    row.label,
                    row.gpus,
                    row.achieved_flops_per_s,
                    row.reported_utilization_pct,
                    u * 100.0
                ));
            }
            for preset in all_presets() {
                let f = nordpile_core::schedule::flops_per_iteration(&preset);
                emit(&format!(
                    "model {:>5}: {:.3e} model FLOPs per iteration\n",
                    preset.label, f
                ));
            }
            Ok(())
        }
        Command::InstructFormat {
            input,
            output,
            style,
            p,
            eot_marker,
            bos_marker,
        } => {
            let style = match style.as_str() {
                "unrolled" => ConversationStyle::Unrolled,
                _ => ConversationStyle::Chatml {
                    eot: eot_marker,
                    bos: bos_marker,
                },
            };
            let policy = MergePolicy { p, seed: cli.seed };
            let (read, written) = format_conversations(&input, &style, &policy, &output)?;
            eprintln!("{read} conversations merged into {written} datapoints");
            Ok(())
        }
        Command::Run { manifest } => {
            let mut manifest = PipelineManifest::load(&manifest)?;
            if cli.seed != 0 {
                manifest.seed = cli.seed;
            }
            let report = run_pipeline(&manifest)?;
            for stage in &report.stages {
                let drops: u64 = stage.drop_reasons.values().sum();
                eprintln!(
                    "{:<16} in {:>7} out {:>7} drops {:>6} ({} ms)",
                    stage.step, stage.input_count, stage.output_count, drops, stage.wall_ms
                );
            }
            Ok(())
        }
    }
}
