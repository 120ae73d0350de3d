//! Document data model, JSONL persistence, and corpus size reporting.
//!
//! Documents flow between pipeline stages as JSONL: one UTF-8 JSON object
//! per line with the fields `id`, `lang`, `category`, `source`, `text` in
//! that order. Ordinals are assigned at ingestion (0, 1, 2, ... in file
//! order) and define "first" for every keep-first policy downstream.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Natural language of a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    Da,
    En,
    Is,
    No,
    Sv,
    Other,
}

impl Lang {
    pub const ALL: [Lang; 6] = [Lang::Da, Lang::En, Lang::Is, Lang::No, Lang::Sv, Lang::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Lang::Da => "da",
            Lang::En => "en",
            Lang::Is => "is",
            Lang::No => "no",
            Lang::Sv => "sv",
            Lang::Other => "other",
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Content category of a document. `Code` is language-agnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Articles,
    Books,
    Conversational,
    Math,
    Miscellaneous,
    WebCc,
    WebSources,
    Wikipedia,
    Code,
}

impl Category {
    pub const ALL: [Category; 9] = [
        Category::Articles,
        Category::Books,
        Category::Conversational,
        Category::Math,
        Category::Miscellaneous,
        Category::WebCc,
        Category::WebSources,
        Category::Wikipedia,
        Category::Code,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Articles => "articles",
            Category::Books => "books",
            Category::Conversational => "conversational",
            Category::Math => "math",
            Category::Miscellaneous => "miscellaneous",
            Category::WebCc => "web_cc",
            Category::WebSources => "web_sources",
            Category::Wikipedia => "wikipedia",
            Category::Code => "code",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One corpus record. The ordinal is the document's stable input position;
/// it is assigned at ingestion and never serialized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Document {
    pub id: String,
    pub lang: Lang,
    pub category: Category,
    pub source: String,
    pub text: String,
    #[serde(skip)]
    pub ordinal: u64,
}

/// Wire form of a document line; all metadata fields optional on input.
#[derive(Debug, Deserialize)]
struct DocumentRecord {
    id: Option<String>,
    lang: Option<Lang>,
    category: Option<Category>,
    source: Option<String>,
    text: String,
}

/// Defaults applied to records that lack metadata fields.
#[derive(Debug, Clone, Default)]
pub struct IngestDefaults {
    pub lang: Option<Lang>,
    pub category: Option<Category>,
    pub source: Option<String>,
}

/// A skipped input line, written to the error sidecar in lenient mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestError {
    pub path: String,
    /// 1-based line number in the input file.
    pub line: u64,
    pub message: String,
}

/// Streaming JSONL reader. Yields documents in file order with ordinals
/// 0, 1, 2, ...; malformed or non-UTF-8 lines surface as `IngestError`s.
pub struct JsonlReader<R> {
    reader: R,
    path: PathBuf,
    filename: String,
    defaults: IngestDefaults,
    line_no: u64,
    next_ordinal: u64,
}

impl JsonlReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_reader(BufReader::new(file), path))
    }

    pub fn open_with_defaults(path: &Path, defaults: IngestDefaults) -> Result<Self> {
        let mut r = Self::open(path)?;
        r.defaults = defaults;
        Ok(r)
    }
}

impl<R: BufRead> JsonlReader<R> {
    pub fn from_reader(reader: R, path: &Path) -> Self {
        let filename = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Self {
            reader,
            path: path.to_path_buf(),
            filename,
            defaults: IngestDefaults::default(),
            line_no: 0,
            next_ordinal: 0,
        }
    }

    /// Continue ordinals from an earlier reader, for multi-file ingestion.
    pub fn with_start_ordinal(mut self, ordinal: u64) -> Self {
        self.next_ordinal = ordinal;
        self
    }

    fn parse_line(&mut self, bytes: &[u8]) -> std::result::Result<Document, IngestError> {
        let err = |message: String| IngestError {
            path: self.path.display().to_string(),
            line: self.line_no,
            message,
        };
        let line = std::str::from_utf8(bytes).map_err(|e| err(format!("invalid UTF-8: {e}")))?;
        let record: DocumentRecord =
            serde_json::from_str(line).map_err(|e| err(format!("invalid JSON: {e}")))?;
        let ordinal = self.next_ordinal;
        self.next_ordinal += 1;
        Ok(Document {
            id: record
                .id
                .unwrap_or_else(|| format!("{}:{}", self.filename, self.line_no)),
            lang: record.lang.or(self.defaults.lang).unwrap_or(Lang::Other),
            category: record
                .category
                .or(self.defaults.category)
                .unwrap_or(Category::Miscellaneous),
            source: record
                .source
                .or_else(|| self.defaults.source.clone())
                .unwrap_or_default(),
            text: record.text,
            ordinal,
        })
    }
}

impl<R: BufRead> Iterator for JsonlReader<R> {
    type Item = std::result::Result<Document, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let mut buf = Vec::new();
            match self.reader.read_until(b'\n', &mut buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    self.line_no += 1;
                    return Some(Err(IngestError {
                        path: self.path.display().to_string(),
                        line: self.line_no,
                        message: format!("read error: {e}"),
                    }));
                }
            }
            self.line_no += 1;
            if buf.last() == Some(&b'\n') {
                buf.pop();
            }
            if buf.last() == Some(&b'\r') {
                buf.pop();
            }
            if self.line_no == 1 && buf.starts_with(&[0xEF, 0xBB, 0xBF]) {
                buf.drain(..3); // byte-order mark
            }
            if buf.is_empty() {
                continue; // blank line, not a record
            }
            return Some(self.parse_line(&buf));
        }
    }
}

/// Read a whole JSONL file leniently: malformed lines become error records.
pub fn read_jsonl(path: &Path) -> Result<(Vec<Document>, Vec<IngestError>)> {
    let mut docs = Vec::new();
    let mut errors = Vec::new();
    for item in JsonlReader::open(path)? {
        match item {
            Ok(d) => docs.push(d),
            Err(e) => errors.push(e),
        }
    }
    Ok((docs, errors))
}

/// Strict variant: the first malformed line aborts the read.
pub fn read_jsonl_strict(path: &Path) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for item in JsonlReader::open(path)? {
        match item {
            Ok(d) => docs.push(d),
            Err(e) => {
                return Err(Error::MalformedRecord {
                    path: PathBuf::from(e.path),
                    line: e.line,
                    message: e.message,
                })
            }
        }
    }
    Ok(docs)
}

/// Write documents as JSONL, one object per line, fields in fixed order
/// (id, lang, category, source, text). Returns the number of lines written.
pub fn write_jsonl<'a>(
    docs: impl IntoIterator<Item = &'a Document>,
    path: &Path,
) -> Result<usize> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    let mut count = 0;
    for doc in docs {
        let line = serde_json::to_string(doc).expect("document serialization is infallible");
        w.write_all(line.as_bytes()).map_err(io_err)?;
        w.write_all(b"\n").map_err(io_err)?;
        count += 1;
    }
    w.flush().map_err(io_err)?;
    Ok(count)
}

/// Serialize any record stream as JSONL (sidecars, reports, clusters).
pub fn write_jsonl_records<T: Serialize>(records: &[T], path: &Path) -> Result<usize> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    for rec in records {
        let line = serde_json::to_string(rec).expect("record serialization is infallible");
        w.write_all(line.as_bytes()).map_err(io_err)?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(records.len())
}

/// Byte and document counts for one (lang, category) cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellStat {
    pub bytes: u64,
    pub docs: u64,
}

impl CellStat {
    fn add(&mut self, other: CellStat) {
        self.bytes += other.bytes;
        self.docs += other.docs;
    }
}

/// Corpus sizes keyed by (lang, category). Aggregation is cell-wise
/// addition, so shards computed in parallel merge exactly.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub cells: BTreeMap<(Lang, Category), CellStat>,
}

/// Rendered column axis: the six languages, the language-agnostic code
/// column, and the row total.
const COLUMNS: [&str; 8] = ["da", "en", "is", "no", "sv", "other", "code", "total"];

impl CorpusStats {
    pub fn add_document(&mut self, doc: &Document) {
        self.cells
            .entry((doc.lang, doc.category))
            .or_default()
            .add(CellStat {
                bytes: doc.text.len() as u64,
                docs: 1,
            });
    }

    pub fn merge(&mut self, other: &CorpusStats) {
        for (key, stat) in &other.cells {
            self.cells.entry(*key).or_default().add(*stat);
        }
    }

    /// Cell as rendered: code-category bytes live in the code column
    /// regardless of the document's language.
    fn rendered_cell(&self, lang: Lang, category: Category) -> CellStat {
        if category == Category::Code {
            return CellStat::default();
        }
        self.cells.get(&(lang, category)).copied().unwrap_or_default()
    }

    fn code_column_cell(&self, category: Category) -> CellStat {
        if category != Category::Code {
            return CellStat::default();
        }
        let mut total = CellStat::default();
        for lang in Lang::ALL {
            if let Some(stat) = self.cells.get(&(lang, Category::Code)) {
                total.add(*stat);
            }
        }
        total
    }

    pub fn row_total(&self, category: Category) -> CellStat {
        let mut total = CellStat::default();
        for lang in Lang::ALL {
            if let Some(stat) = self.cells.get(&(lang, category)) {
                total.add(*stat);
            }
        }
        total
    }

    /// Column total for a language; excludes code-category documents,
    /// which render in the code column.
    pub fn lang_total(&self, lang: Lang) -> CellStat {
        let mut total = CellStat::default();
        for category in Category::ALL {
            if category != Category::Code {
                if let Some(stat) = self.cells.get(&(lang, category)) {
                    total.add(*stat);
                }
            }
        }
        total
    }

    pub fn grand_total(&self) -> CellStat {
        let mut total = CellStat::default();
        for stat in self.cells.values() {
            total.add(*stat);
        }
        total
    }

    /// Aligned plain-text byte table: one row per category plus a totals
    /// row; columns are the six languages, code, and the row total.
    pub fn render_table(&self) -> String {
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["category".to_string()];
        header.extend(COLUMNS.iter().map(|c| c.to_string()));
        rows.push(header);

        for category in Category::ALL {
            let mut row = vec![category.to_string()];
            for lang in Lang::ALL {
                let cell = self.rendered_cell(lang, category);
                row.push(render_bytes(cell.bytes, category != Category::Code));
            }
            let code = self.code_column_cell(category);
            row.push(render_bytes(code.bytes, category == Category::Code));
            row.push(self.row_total(category).bytes.to_string());
            rows.push(row);
        }

        let mut total_row = vec!["total".to_string()];
        for lang in Lang::ALL {
            total_row.push(self.lang_total(lang).bytes.to_string());
        }
        total_row.push(self.row_total(Category::Code).bytes.to_string());
        total_row.push(self.grand_total().bytes.to_string());
        rows.push(total_row);

        render_aligned(&rows)
    }

    /// Machine-readable form: explicit cells plus all totals.
    pub fn to_report(&self) -> StatsReport {
        StatsReport {
            cells: self
                .cells
                .iter()
                .map(|(&(lang, category), &stat)| StatsCell {
                    lang,
                    category,
                    bytes: stat.bytes,
                    docs: stat.docs,
                })
                .collect(),
            category_totals: Category::ALL
                .iter()
                .map(|&c| (c.to_string(), self.row_total(c)))
                .collect(),
            lang_totals: Lang::ALL
                .iter()
                .map(|&l| (l.to_string(), self.lang_total(l)))
                .collect(),
            code_total: self.row_total(Category::Code),
            grand_total: self.grand_total(),
        }
    }
}

fn render_bytes(bytes: u64, show_zero: bool) -> String {
    if bytes == 0 && !show_zero {
        String::new()
    } else {
        bytes.to_string()
    }
}

fn render_aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let mut widths = vec![0usize; cols];
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            if i == 0 {
                out.push_str(&format!("{:<width$}", cell, width = widths[i]));
            } else {
                out.push_str(&format!("  {:>width$}", cell, width = widths[i]));
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsCell {
    pub lang: Lang,
    pub category: Category,
    pub bytes: u64,
    pub docs: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsReport {
    pub cells: Vec<StatsCell>,
    pub category_totals: BTreeMap<String, CellStat>,
    pub lang_totals: BTreeMap<String, CellStat>,
    pub code_total: CellStat,
    pub grand_total: CellStat,
}

/// Aggregate stats over a document stream.
pub fn stats_report<'a>(docs: impl IntoIterator<Item = &'a Document>) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for doc in docs {
        stats.add_document(doc);
    }
    stats
}
