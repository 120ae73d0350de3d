//! Manifest-driven pipeline execution.
//!
//! A manifest names the input sources, an ordered list of steps, a global
//! seed, and an output directory. Every stage materializes its outputs
//! under `NN_<step>/` plus a JSON stage report, so a failed run keeps all
//! prior stage outputs and any stage output can be audited afterwards.
//! Stochastic stages derive their seed from the global seed XOR a hash of
//! the stage name, so streams are independent but reproducible.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use nordpile_core::corpus::{
    read_jsonl, stats_report, write_jsonl, write_jsonl_records, Category, CorpusStats, Document,
    IngestDefaults, IngestError, JsonlReader, Lang, StatsReport,
};
use nordpile_core::dedup::{exact_dedup, fuzzy_dedup, DuplicateClusters, LshParams};
use nordpile_core::filter::{filter_stream, FilterConfig};
use nordpile_core::hash::hash64_str;
use nordpile_core::instruct::{merge_conversations, Conversation, ConversationStyle, MergePolicy};
use nordpile_core::normalize::{normalize_text, NormalizeConfig};
use nordpile_core::packing::{pack_documents, verify_packed, write_packed, DEFAULT_SEQ_LEN};
use nordpile_core::tokenizer::{
    sample_corpus, train_bpe, SampleSpec, SpecialsConfig, TokenizerModel, DEFAULT_VOCAB_SIZE,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Manifest violated a constraint; maps to exit code 2.
    #[error("manifest validation failed: {0}")]
    Validation(String),

    /// A stage failed at runtime; maps to exit code 1.
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: anyhow::Error,
    },
}

type PipelineResult<T> = Result<T, PipelineError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceSpec {
    pub path: PathBuf,
    pub lang: Option<Lang>,
    pub category: Option<Category>,
    pub source: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepName {
    Normalize,
    Filter,
    DedupExact,
    DedupFuzzy,
    TokTrain,
    Encode,
    Pack,
    InstructFormat,
}

impl StepName {
    pub fn as_str(self) -> &'static str {
        match self {
            StepName::Normalize => "normalize",
            StepName::Filter => "filter",
            StepName::DedupExact => "dedup-exact",
            StepName::DedupFuzzy => "dedup-fuzzy",
            StepName::TokTrain => "tok-train",
            StepName::Encode => "encode",
            StepName::Pack => "pack",
            StepName::InstructFormat => "instruct-format",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepSpec {
    pub name: StepName,
    #[serde(default)]
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub sources: Vec<SourceSpec>,
    pub steps: Vec<StepSpec>,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl PipelineManifest {
    pub fn load(path: &Path) -> PipelineResult<Self> {
        let data = fs::read_to_string(path)
            .map_err(|e| PipelineError::Validation(format!("cannot read manifest: {e}")))?;
        serde_json::from_str(&data)
            .map_err(|e| PipelineError::Validation(format!("cannot parse manifest: {e}")))
    }

    /// Check step dependency order and source paths.
    pub fn validate(&self) -> PipelineResult<()> {
        let fail = |msg: String| Err(PipelineError::Validation(msg));
        if self.sources.is_empty() {
            return fail("no sources listed".into());
        }
        for s in &self.sources {
            if !s.path.exists() {
                return fail(format!("source path does not exist: {}", s.path.display()));
            }
        }
        let mut seen: Vec<StepName> = Vec::new();
        for step in &self.steps {
            match step.name {
                StepName::Encode => {
                    let has_model = step.config.get("model").is_some();
                    if !seen.contains(&StepName::TokTrain) && !has_model {
                        return fail(
                            "encode requires a tok-train step earlier or an explicit model path"
                                .into(),
                        );
                    }
                }
                StepName::Pack => {
                    if !seen.contains(&StepName::Encode) {
                        return fail("pack requires an encode step earlier".into());
                    }
                }
                StepName::InstructFormat if step.config.get("input").is_none() => {
                    return fail("instruct-format requires config.input".into());
                }
                _ => {}
            }
            seen.push(step.name);
        }
        Ok(())
    }

    /// Per-stage derived seed: global seed XOR stage-name hash.
    pub fn stage_seed(&self, name: StepName) -> u64 {
        self.seed ^ hash64_str(name.as_str())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageReport {
    pub step: String,
    pub input_count: u64,
    pub output_count: u64,
    pub input_bytes: u64,
    pub output_bytes: u64,
    #[serde(default)]
    pub drop_reasons: BTreeMap<String, u64>,
    pub wall_ms: u64,
    pub outputs: Vec<PathBuf>,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub stages: Vec<StageReport>,
    pub stats_before: StatsReport,
    pub stats_after: StatsReport,
}

struct StageContext {
    dir: PathBuf,
    seed: u64,
}

/// Execute a validated manifest. Data outputs are byte-deterministic under
/// a fixed seed; stage reports carry wall times and are not.
pub fn run_pipeline(manifest: &PipelineManifest) -> PipelineResult<RunReport> {
    manifest.validate()?;
    fs::create_dir_all(&manifest.output_dir)
        .map_err(|e| PipelineError::Validation(format!("cannot create output dir: {e}")))?;

    let ingest_dir = manifest.output_dir.join("00_ingest");
    let (mut corpus, ingest_report) = ingest(manifest, &ingest_dir)?;
    let stats_before = stats_report(&corpus).to_report();

    let mut stages = vec![ingest_report];
    let mut model_path: Option<PathBuf> = None;
    let mut encoded: Option<EncodedDocs> = None;

    for (idx, step) in manifest.steps.iter().enumerate() {
        let dir = manifest
            .output_dir
            .join(format!("{:02}_{}", idx + 1, step.name.as_str()));
        fs::create_dir_all(&dir).map_err(|e| stage_err(step.name, e))?;
        let ctx = StageContext {
            dir,
            seed: manifest.stage_seed(step.name),
        };
        let started = Instant::now();
        let mut report = match step.name {
            StepName::Normalize => run_normalize(&mut corpus, &step.config, &ctx)?,
            StepName::Filter => run_filter(&mut corpus, &step.config, &ctx)?,
            StepName::DedupExact => run_dedup_exact(&mut corpus, &ctx)?,
            StepName::DedupFuzzy => run_dedup_fuzzy(&mut corpus, &step.config, &ctx)?,
            StepName::TokTrain => {
                let (r, path) = run_tok_train(&corpus, &step.config, &ctx)?;
                model_path = Some(path);
                r
            }
            StepName::Encode => {
                let (r, enc) = run_encode(&corpus, &step.config, model_path.as_deref(), &ctx)?;
                encoded = Some(enc);
                r
            }
            StepName::Pack => {
                let enc = encoded.as_ref().ok_or_else(|| {
                    PipelineError::Validation("pack requires an encode step earlier".into())
                })?;
                run_pack(enc, &step.config, &ctx)?
            }
            StepName::InstructFormat => run_instruct_format(&step.config, &ctx)?,
        };
        report.wall_ms = started.elapsed().as_millis() as u64;
        write_json(&ctx.dir.join("report.json"), &report)
            .map_err(|e| stage_err(step.name, e))?;
        stages.push(report);
    }

    let stats_after = stats_report(&corpus).to_report();
    let run_report = RunReport {
        seed: manifest.seed,
        stages,
        stats_before,
        stats_after,
    };
    write_json(&manifest.output_dir.join("run_report.json"), &run_report)
        .map_err(|e| PipelineError::Validation(format!("cannot write run report: {e}")))?;
    Ok(run_report)
}

fn stage_err(name: StepName, err: impl Into<anyhow::Error>) -> PipelineError {
    PipelineError::Stage {
        stage: name.as_str().to_string(),
        source: err.into(),
    }
}

fn parse_config<T: serde::de::DeserializeOwned + Default>(
    name: StepName,
    value: &serde_json::Value,
) -> PipelineResult<T> {
    if value.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(value.clone()).map_err(|e| {
        PipelineError::Validation(format!("bad {} config: {e}", name.as_str()))
    })
}

fn corpus_bytes(docs: &[Document]) -> u64 {
    docs.iter().map(|d| d.text.len() as u64).sum()
}

fn ingest(manifest: &PipelineManifest, dir: &Path) -> PipelineResult<(Vec<Document>, StageReport)> {
    let started = Instant::now();
    let ingest_err = |e: nordpile_core::Error| PipelineError::Stage {
        stage: "ingest".to_string(),
        source: e.into(),
    };
    fs::create_dir_all(dir).map_err(|e| PipelineError::Stage {
        stage: "ingest".to_string(),
        source: e.into(),
    })?;
    let mut docs: Vec<Document> = Vec::new();
    let mut errors: Vec<IngestError> = Vec::new();
    for source in &manifest.sources {
        let defaults = IngestDefaults {
            lang: source.lang,
            category: source.category,
            source: source.source.clone(),
        };
        let reader = JsonlReader::open_with_defaults(&source.path, defaults)
            .map_err(ingest_err)?
            .with_start_ordinal(docs.len() as u64);
        for item in reader {
            match item {
                Ok(d) => docs.push(d),
                Err(e) => errors.push(e),
            }
        }
    }
    let out_path = dir.join("corpus.jsonl");
    write_jsonl(&docs, &out_path).map_err(ingest_err)?;
    let err_path = dir.join("errors.jsonl");
    write_jsonl_records(&errors, &err_path).map_err(ingest_err)?;
    let mut drop_reasons = BTreeMap::new();
    if !errors.is_empty() {
        drop_reasons.insert("malformed_record".to_string(), errors.len() as u64);
    }
    let report = StageReport {
        step: "ingest".to_string(),
        input_count: docs.len() as u64 + errors.len() as u64,
        output_count: docs.len() as u64,
        input_bytes: corpus_bytes(&docs),
        output_bytes: corpus_bytes(&docs),
        drop_reasons,
        wall_ms: started.elapsed().as_millis() as u64,
        outputs: vec![out_path, err_path],
        notes: Vec::new(),
    };
    Ok((docs, report))
}

fn run_normalize(
    corpus: &mut [Document],
    config: &serde_json::Value,
    ctx: &StageContext,
) -> PipelineResult<StageReport> {
    let cfg: NormalizeConfig = parse_config(StepName::Normalize, config)?;
    let input_count = corpus.len() as u64;
    let input_bytes = corpus_bytes(corpus);
    for doc in corpus.iter_mut() {
        doc.text = normalize_text(&doc.text, &cfg);
    }
    let out = ctx.dir.join("corpus.jsonl");
    write_jsonl(corpus.iter(), &out).map_err(|e| stage_err(StepName::Normalize, e))?;
    Ok(StageReport {
        step: "normalize".to_string(),
        input_count,
        output_count: corpus.len() as u64,
        input_bytes,
        output_bytes: corpus_bytes(corpus),
        drop_reasons: BTreeMap::new(),
        wall_ms: 0,
        outputs: vec![out],
        notes: Vec::new(),
    })
}

fn run_filter(
    corpus: &mut Vec<Document>,
    config: &serde_json::Value,
    ctx: &StageContext,
) -> PipelineResult<StageReport> {
    let cfg: FilterConfig = parse_config(StepName::Filter, config)?;
    let input_count = corpus.len() as u64;
    let input_bytes = corpus_bytes(corpus);
    let (accepted, rejected) = filter_stream(std::mem::take(corpus), &cfg);
    *corpus = accepted;

    let mut drop_reasons: BTreeMap<String, u64> = BTreeMap::new();
    for (_, verdict) in &rejected {
        for reason in &verdict.reasons {
            *drop_reasons.entry(reason.clone()).or_default() += 1;
        }
    }

    #[derive(Serialize)]
    struct RejectedRecord<'a> {
        id: &'a str,
        reasons: &'a [String],
        measurements: &'a BTreeMap<String, f64>,
        text: &'a str,
    }
    let records: Vec<RejectedRecord> = rejected
        .iter()
        .map(|(d, v)| RejectedRecord {
            id: &d.id,
            reasons: &v.reasons,
            measurements: &v.measurements,
            text: &d.text,
        })
        .collect();
    let out = ctx.dir.join("corpus.jsonl");
    let rejected_path = ctx.dir.join("rejected.jsonl");
    write_jsonl(corpus.iter(), &out).map_err(|e| stage_err(StepName::Filter, e))?;
    write_jsonl_records(&records, &rejected_path).map_err(|e| stage_err(StepName::Filter, e))?;
    Ok(StageReport {
        step: "filter".to_string(),
        input_count,
        output_count: corpus.len() as u64,
        input_bytes,
        output_bytes: corpus_bytes(corpus),
        drop_reasons,
        wall_ms: 0,
        outputs: vec![out, rejected_path],
        notes: Vec::new(),
    })
}

fn run_dedup_exact(corpus: &mut Vec<Document>, ctx: &StageContext) -> PipelineResult<StageReport> {
    let input_count = corpus.len() as u64;
    let input_bytes = corpus_bytes(corpus);
    let (kept, dropped) = exact_dedup(std::mem::take(corpus));
    *corpus = kept;
    let out = ctx.dir.join("corpus.jsonl");
    write_jsonl(corpus.iter(), &out).map_err(|e| stage_err(StepName::DedupExact, e))?;
    let mut drop_reasons = BTreeMap::new();
    if dropped > 0 {
        drop_reasons.insert("exact_duplicate".to_string(), dropped as u64);
    }
    Ok(StageReport {
        step: "dedup-exact".to_string(),
        input_count,
        output_count: corpus.len() as u64,
        input_bytes,
        output_bytes: corpus_bytes(corpus),
        drop_reasons,
        wall_ms: 0,
        outputs: vec![out],
        notes: Vec::new(),
    })
}

/// Cluster record for the clusters sidecar.
#[derive(Debug, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub keep_id: String,
    pub dropped_ids: Vec<String>,
    pub pairwise_jaccard: Vec<(String, String, f64)>,
}

pub fn cluster_records(
    clusters: &DuplicateClusters,
    ids_by_ordinal: &BTreeMap<u64, String>,
) -> Vec<ClusterRecord> {
    let id_of = |ordinal: u64| {
        ids_by_ordinal
            .get(&ordinal)
            .cloned()
            .unwrap_or_else(|| format!("ordinal:{ordinal}"))
    };
    clusters
        .clusters
        .iter()
        .map(|c| ClusterRecord {
            keep_id: id_of(c.keep),
            dropped_ids: c
                .members
                .iter()
                .filter(|&&m| m != c.keep)
                .map(|&m| id_of(m))
                .collect(),
            pairwise_jaccard: c
                .links
                .iter()
                .map(|l| (id_of(l.a), id_of(l.b), l.jaccard))
                .collect(),
        })
        .collect()
}

fn run_dedup_fuzzy(
    corpus: &mut Vec<Document>,
    config: &serde_json::Value,
    ctx: &StageContext,
) -> PipelineResult<StageReport> {
    let mut cfg: LshParams = parse_config(StepName::DedupFuzzy, config)?;
    if config.get("seed").is_none() {
        cfg.seed = ctx.seed;
    }
    let input_count = corpus.len() as u64;
    let input_bytes = corpus_bytes(corpus);
    let input_docs = std::mem::take(corpus);
    let ids_by_ordinal: BTreeMap<u64, String> = input_docs
        .iter()
        .map(|d| (d.ordinal, d.id.clone()))
        .collect();
    let (kept, clusters) =
        fuzzy_dedup(input_docs, &cfg).map_err(|e| stage_err(StepName::DedupFuzzy, e))?;
    let records = cluster_records(&clusters, &ids_by_ordinal);
    let dropped = clusters.dropped_ordinals().len() as u64;
    *corpus = kept;

    let out = ctx.dir.join("corpus.jsonl");
    let clusters_path = ctx.dir.join("clusters.jsonl");
    write_jsonl(corpus.iter(), &out).map_err(|e| stage_err(StepName::DedupFuzzy, e))?;
    write_jsonl_records(&records, &clusters_path)
        .map_err(|e| stage_err(StepName::DedupFuzzy, e))?;
    let mut drop_reasons = BTreeMap::new();
    if dropped > 0 {
        drop_reasons.insert("near_duplicate".to_string(), dropped);
    }
    Ok(StageReport {
        step: "dedup-fuzzy".to_string(),
        input_count,
        output_count: corpus.len() as u64,
        input_bytes,
        output_bytes: corpus_bytes(corpus),
        drop_reasons,
        wall_ms: 0,
        outputs: vec![out, clusters_path],
        notes: Vec::new(),
    })
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct TokTrainConfig {
    target_vocab: usize,
    sample_fraction: Option<f64>,
    specials: SpecialsConfig,
}

impl Default for TokTrainConfig {
    fn default() -> Self {
        Self {
            target_vocab: DEFAULT_VOCAB_SIZE,
            sample_fraction: None,
            specials: SpecialsConfig::default(),
        }
    }
}

fn run_tok_train(
    corpus: &[Document],
    config: &serde_json::Value,
    ctx: &StageContext,
) -> PipelineResult<(StageReport, PathBuf)> {
    let cfg: TokTrainConfig = parse_config(StepName::TokTrain, config)?;
    let training_docs: Vec<Document> = match cfg.sample_fraction {
        Some(fraction) => {
            let spec = SampleSpec {
                fraction,
                seed: ctx.seed,
            };
            sample_corpus(corpus, &spec).map_err(|e| stage_err(StepName::TokTrain, e))?
        }
        None => corpus.to_vec(),
    };
    let (model, train_report) = train_bpe(
        training_docs.iter().map(|d| d.text.as_str()),
        cfg.target_vocab,
        &cfg.specials,
    )
    .map_err(|e| stage_err(StepName::TokTrain, e))?;
    let model_path = ctx.dir.join("model.json");
    model
        .save(&model_path)
        .map_err(|e| stage_err(StepName::TokTrain, e))?;
    let mut notes = vec![format!(
        "vocab {} of {} ({} merges, {} char pieces)",
        train_report.achieved_vocab,
        train_report.target_vocab,
        train_report.merge_count,
        train_report.char_pieces
    )];
    if train_report.stopped_early {
        notes.push("stopped early: corpus exhausted pair frequencies".to_string());
    }
    let report = StageReport {
        step: "tok-train".to_string(),
        input_count: corpus.len() as u64,
        output_count: training_docs.len() as u64,
        input_bytes: corpus_bytes(corpus),
        output_bytes: corpus_bytes(&training_docs),
        drop_reasons: BTreeMap::new(),
        wall_ms: 0,
        outputs: vec![model_path.clone()],
        notes,
    };
    Ok((report, model_path))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct EncodeConfig {
    model: Option<PathBuf>,
}

/// Documents encoded to token ids, keyed by document id.
pub type EncodedDocs = Vec<(String, Vec<u32>)>;

/// Encoded-document line: the id plus its token ids.
#[derive(Debug, Serialize, Deserialize)]
pub struct EncodedRecord {
    pub id: String,
    pub ids: Vec<u32>,
}

fn run_encode(
    corpus: &[Document],
    config: &serde_json::Value,
    model_path: Option<&Path>,
    ctx: &StageContext,
) -> PipelineResult<(StageReport, EncodedDocs)> {
    let cfg: EncodeConfig = parse_config(StepName::Encode, config)?;
    let path = cfg
        .model
        .as_deref()
        .or(model_path)
        .ok_or_else(|| PipelineError::Validation("encode has no model available".into()))?;
    let model = TokenizerModel::load(path).map_err(|e| stage_err(StepName::Encode, e))?;
    let encoded: EncodedDocs = corpus
        .iter()
        .map(|d| (d.id.clone(), model.encode(&d.text)))
        .collect();
    let records: Vec<EncodedRecord> = encoded
        .iter()
        .map(|(id, ids)| EncodedRecord {
            id: id.clone(),
            ids: ids.clone(),
        })
        .collect();
    let out = ctx.dir.join("encoded.jsonl");
    write_jsonl_records(&records, &out).map_err(|e| stage_err(StepName::Encode, e))?;
    let total_tokens: u64 = encoded.iter().map(|(_, ids)| ids.len() as u64).sum();
    let report = StageReport {
        step: "encode".to_string(),
        input_count: corpus.len() as u64,
        output_count: encoded.len() as u64,
        input_bytes: corpus_bytes(corpus),
        output_bytes: total_tokens * 2,
        drop_reasons: BTreeMap::new(),
        wall_ms: 0,
        outputs: vec![out],
        notes: vec![format!("{total_tokens} tokens")],
    };
    Ok((report, encoded))
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct PackConfig {
    seq_len: u32,
    eot_id: u16,
}

impl Default for PackConfig {
    fn default() -> Self {
        Self {
            seq_len: DEFAULT_SEQ_LEN,
            eot_id: 0,
        }
    }
}

fn run_pack(
    encoded: &[(String, Vec<u32>)],
    config: &serde_json::Value,
    ctx: &StageContext,
) -> PipelineResult<StageReport> {
    let cfg: PackConfig = parse_config(StepName::Pack, config)?;
    let mut docs: Vec<Vec<u16>> = Vec::with_capacity(encoded.len());
    for (id, ids) in encoded {
        let mut doc = Vec::with_capacity(ids.len());
        for &t in ids {
            if t > u16::MAX as u32 {
                return Err(PipelineError::Validation(format!(
                    "document {id} has token id {t} beyond the u16 dtype"
                )));
            }
            doc.push(t as u16);
        }
        docs.push(doc);
    }
    let input_count = docs.len() as u64;
    let input_bytes: u64 = docs.iter().map(|d| d.len() as u64 * 2).sum();
    let ds = pack_documents(docs, cfg.seq_len, cfg.eot_id)
        .map_err(|e| stage_err(StepName::Pack, e))?;
    verify_packed(&ds).map_err(|e| stage_err(StepName::Pack, e))?;
    let out = ctx.dir.join("packed.npk");
    let bytes = write_packed(&ds, &out).map_err(|e| stage_err(StepName::Pack, e))?;
    let mut drop_reasons = BTreeMap::new();
    if ds.dropped_tail > 0 {
        drop_reasons.insert("dropped_tail_tokens".to_string(), ds.dropped_tail as u64);
    }
    Ok(StageReport {
        step: "pack".to_string(),
        input_count,
        output_count: ds.sequences(),
        input_bytes,
        output_bytes: bytes,
        drop_reasons,
        wall_ms: 0,
        outputs: vec![out],
        notes: vec![format!(
            "{} sequences of {}, dropped tail {}",
            ds.sequences(),
            ds.seq_len,
            ds.dropped_tail
        )],
    })
}

#[derive(Debug, Deserialize)]
struct InstructConfig {
    input: PathBuf,
    #[serde(default = "default_style")]
    style: String,
    #[serde(default = "default_p")]
    p: f64,
    #[serde(default = "default_eot")]
    eot: String,
    #[serde(default = "default_bos")]
    bos: String,
}

fn default_style() -> String {
    "unrolled".to_string()
}
fn default_p() -> f64 {
    0.5
}
fn default_eot() -> String {
    "<eos>".to_string()
}
fn default_bos() -> String {
    "<bos>".to_string()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DatapointRecord {
    pub text: String,
}

/// Read conversations, format them, merge stochastically, write datapoints.
pub fn format_conversations(
    input: &Path,
    style: &ConversationStyle,
    policy: &MergePolicy,
    output: &Path,
) -> anyhow::Result<(u64, u64)> {
    let data = fs::read_to_string(input)?;
    let mut conversations = Vec::new();
    for (no, line) in data.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let conv: Conversation = serde_json::from_str(line)
            .map_err(|e| anyhow::anyhow!("line {}: {e}", no + 1))?;
        conversations.push(conv);
    }
    let input_count = conversations.len() as u64;
    let datapoints = merge_conversations(conversations, policy, style)?;
    let records: Vec<DatapointRecord> = datapoints
        .into_iter()
        .map(|text| DatapointRecord { text })
        .collect();
    write_jsonl_records(&records, output)?;
    Ok((input_count, records.len() as u64))
}

fn run_instruct_format(
    config: &serde_json::Value,
    ctx: &StageContext,
) -> PipelineResult<StageReport> {
    let cfg: InstructConfig = serde_json::from_value(config.clone())
        .map_err(|e| PipelineError::Validation(format!("bad instruct-format config: {e}")))?;
    let style = match cfg.style.as_str() {
        "unrolled" => ConversationStyle::Unrolled,
        "chatml" => ConversationStyle::Chatml {
            eot: cfg.eot.clone(),
            bos: cfg.bos.clone(),
        },
        other => {
            return Err(PipelineError::Validation(format!(
                "unknown instruct style {other:?} (expected unrolled or chatml)"
            )))
        }
    };
    let policy = MergePolicy {
        p: cfg.p,
        seed: ctx.seed,
    };
    let out = ctx.dir.join("formatted.jsonl");
    let (input_count, output_count) = format_conversations(&cfg.input, &style, &policy, &out)
        .map_err(|e| stage_err(StepName::InstructFormat, e))?;
    Ok(StageReport {
        step: "instruct-format".to_string(),
        input_count,
        output_count,
        input_bytes: 0,
        output_bytes: fs::metadata(&out).map(|m| m.len()).unwrap_or(0),
        drop_reasons: BTreeMap::new(),
        wall_ms: 0,
        outputs: vec![out],
        notes: Vec::new(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let json = serde_json::to_string_pretty(value).expect("report serialization is infallible");
    fs::write(path, json)
}

/// Load a corpus JSONL leniently, as pipeline stages and subcommands do.
pub fn load_corpus(path: &Path) -> anyhow::Result<Vec<Document>> {
    let (docs, errors) = read_jsonl(path)?;
    if !errors.is_empty() {
        eprintln!("warning: {} malformed lines skipped in {}", errors.len(), path.display());
    }
    Ok(docs)
}

/// Render corpus stats both ways, as the stats subcommand and run report do.
pub fn stats_outputs(docs: &[Document]) -> (String, StatsReport) {
    let stats: CorpusStats = stats_report(docs);
    (stats.render_table(), stats.to_report())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_rejects_pack_before_encode() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("in.jsonl");
        fs::write(&src, "{\"text\":\"hello\"}\n").unwrap();
        let manifest = PipelineManifest {
            sources: vec![SourceSpec {
                path: src,
                lang: None,
                category: None,
                source: None,
            }],
            steps: vec![StepSpec {
                name: StepName::Pack,
                config: serde_json::Value::Null,
            }],
            seed: 0,
            output_dir: dir.path().join("out"),
        };
        let err = manifest.validate().unwrap_err();
        assert!(matches!(err, PipelineError::Validation(_)));
        assert!(err.to_string().contains("encode"));
    }

    #[test]
    fn manifest_rejects_missing_source() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = PipelineManifest {
            sources: vec![SourceSpec {
                path: dir.path().join("absent.jsonl"),
                lang: None,
                category: None,
                source: None,
            }],
            steps: vec![],
            seed: 0,
            output_dir: dir.path().join("out"),
        };
        assert!(manifest.validate().is_err());
    }

    #[test]
    fn encode_allows_explicit_model_path() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("in.jsonl");
        fs::write(&src, "{\"text\":\"hello\"}\n").unwrap();
        let manifest = PipelineManifest {
            sources: vec![SourceSpec {
                path: src,
                lang: None,
                category: None,
                source: None,
            }],
            steps: vec![StepSpec {
                name: StepName::Encode,
                config: serde_json::json!({"model": "somewhere/model.json"}),
            }],
            seed: 0,
            output_dir: dir.path().join("out"),
        };
        manifest.validate().unwrap();
    }

    #[test]
    fn stage_seeds_differ_by_stage_but_not_run() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("in.jsonl");
        fs::write(&src, "{\"text\":\"hello\"}\n").unwrap();
        let manifest = PipelineManifest {
            sources: vec![SourceSpec {
                path: src,
                lang: None,
                category: None,
                source: None,
            }],
            steps: vec![],
            seed: 99,
            output_dir: dir.path().join("out"),
        };
        assert_ne!(
            manifest.stage_seed(StepName::DedupFuzzy),
            manifest.stage_seed(StepName::TokTrain)
        );
        assert_eq!(
            manifest.stage_seed(StepName::DedupFuzzy),
            manifest.stage_seed(StepName::DedupFuzzy)
        );
    }
}
