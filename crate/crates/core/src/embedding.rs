//! Word-embedding tables and the cosine kernel.
//!
//! Two plain-text formats are understood: GloVe (`token v1 ... vN` per line, no
//! header) and word2vec text (the same body preceded by a `count dim` line).

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: not valid UTF-8")]
    InvalidUtf8 { line: usize },
    #[error("embedding file is empty")]
    EmptyFile,
    #[error("line {line}: expected {expected} numeric fields, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: duplicate token {token:?}")]
    DuplicateToken { line: usize, token: String },
    #[error("line {line}: field {field} is not a finite number")]
    NonFiniteValue { line: usize, field: usize },
    #[error("line {line}: field {field} ({text:?}) is not a number")]
    InvalidNumber { line: usize, field: usize, text: String },
    #[error("line {line}: a token must be followed by at least one numeric field")]
    MissingValues { line: usize },
    #[error("word2vec header mismatch: {0}")]
    HeaderMismatch(String),
    #[error("token {0:?} cannot be written: it contains whitespace")]
    TokenUnencodable(String),
    #[error("refusing to save an empty table")]
    EmptyTable,
    #[error("vector dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("cosine undefined for a zero-norm vector")]
    ZeroVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OnDuplicate {
    #[default]
    Error,
    KeepFirst,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub lowercase: bool,
    pub on_duplicate: OnDuplicate,
    /// Keep only rows whose (normalized) token is in this set. Every other
    /// line is still parsed and validated; the number skipped is recorded.
    pub restrict_to: Option<HashSet<String>>,
}

impl LoadOptions {
    pub fn lowercase() -> Self {
        LoadOptions {
            lowercase: true,
            ..Default::default()
        }
    }
}

/// Counts reported by a load, so that nothing is dropped silently.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadAudit {
    pub lines_read: usize,
    pub duplicates_dropped: usize,
    pub rows_restricted: usize,
}

/// Immutable vocabulary-indexed matrix of word vectors.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dimension: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
    lowercased: bool,
    source_meta: String,
    audit: LoadAudit,
}

impl EmbeddingTable {
    /// Builds a table from in-memory rows, validating every invariant a load would.
    pub fn from_rows<I, S>(rows: I) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut builder = Builder::new(LoadOptions::default());
        for (i, (token, vector)) in rows.into_iter().enumerate() {
            builder.push(i + 1, token.into(), vector)?;
        }
        builder.finish("in-memory".to_string())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn source_meta(&self) -> &str {
        &self.source_meta
    }

    pub fn audit(&self) -> &LoadAudit {
        &self.audit
    }

    pub fn is_lowercased(&self) -> bool {
        self.lowercased
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.data[index * self.dimension..(index + 1) * self.dimension]
    }

    pub fn contains(&self, token: &str) -> bool {
        self.lookup(token).is_some()
    }

    /// Returns the vector for `token` after applying the table's case
    /// normalization, or `None` when the token is out of vocabulary.
    pub fn lookup(&self, token: &str) -> Option<&[f64]> {
        let idx = if self.lowercased {
            self.index.get(token.to_lowercase().as_str())
        } else {
            self.index.get(token)
        };
        idx.map(|&i| self.row(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), self.row(i)))
    }
}

struct Builder {
    options: LoadOptions,
    dimension: Option<usize>,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    seen_restricted: HashSet<String>,
    data: Vec<f64>,
    audit: LoadAudit,
}

impl Builder {
    fn new(options: LoadOptions) -> Self {
        Builder {
            options,
            dimension: None,
            tokens: Vec::new(),
            index: HashMap::new(),
            seen_restricted: HashSet::new(),
            data: Vec::new(),
            audit: LoadAudit::default(),
        }
    }

    fn check_dimension(&mut self, line: usize, found: usize) -> Result<(), EmbeddingError> {
        if found == 0 {
            return Err(EmbeddingError::MissingValues { line });
        }
        match self.dimension {
            None => {
                self.dimension = Some(found);
                Ok(())
            }
            Some(expected) if expected != found => Err(EmbeddingError::RaggedRow {
                line,
                expected,
                found,
            }),
            Some(_) => Ok(()),
        }
    }

    fn push(&mut self, line: usize, token: String, vector: Vec<f64>) -> Result<(), EmbeddingError> {
        self.check_dimension(line, vector.len())?;
        if let Some(field) = vector.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFiniteValue {
                line,
                field: field + 2,
            });
        }
        self.insert(line, token, |data| data.extend_from_slice(&vector))
    }

    fn insert(
        &mut self,
        line: usize,
        token: String,
        write: impl FnOnce(&mut Vec<f64>),
    ) -> Result<(), EmbeddingError> {
        self.audit.lines_read += 1;
        let token = if self.options.lowercase {
            token.to_lowercase()
        } else {
            token
        };
        let keep = self
            .options
            .restrict_to
            .as_ref()
            .is_none_or(|keep| keep.contains(&token));
        let duplicate =
            self.index.contains_key(&token) || (!keep && !self.seen_restricted.insert(token.clone()));
        if duplicate {
            return match self.options.on_duplicate {
                OnDuplicate::Error => Err(EmbeddingError::DuplicateToken { line, token }),
                OnDuplicate::KeepFirst => {
                    self.audit.duplicates_dropped += 1;
                    Ok(())
                }
            };
        }
        if !keep {
            self.audit.rows_restricted += 1;
            return Ok(());
        }
        self.index.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        write(&mut self.data);
        Ok(())
    }

    /// Parses one `token v1 ... vN` record directly into the matrix buffer.
    fn push_line(&mut self, line_no: usize, line: &str) -> Result<(), EmbeddingError> {
        let mut fields = line.split(' ');
        let token = fields.next().unwrap_or_default().to_string();
        let start = self.data.len();
        let mut count = 0usize;
        for (i, text) in fields.enumerate() {
            // a single trailing space is tolerated; interior empty fields are not
            if text.is_empty() {
                continue;
            }
            let value: f64 = text.parse().map_err(|_| EmbeddingError::InvalidNumber {
                line: line_no,
                field: i + 2,
                text: text.to_string(),
            })?;
            if !value.is_finite() {
                self.data.truncate(start);
                return Err(EmbeddingError::NonFiniteValue {
                    line: line_no,
                    field: i + 2,
                });
            }
            self.data.push(value);
            count += 1;
        }
        let mut staged = self.data.split_off(start);
        self.check_dimension(line_no, count)?;
        self.insert(line_no, token, |data| data.append(&mut staged))
    }

    fn finish(self, source_meta: String) -> Result<EmbeddingTable, EmbeddingError> {
        let dimension = self.dimension.ok_or(EmbeddingError::EmptyFile)?;
        Ok(EmbeddingTable {
            dimension,
            tokens: self.tokens,
            index: self.index,
            data: self.data,
            lowercased: self.options.lowercase,
            source_meta,
            audit: self.audit,
        })
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> EmbeddingError + '_ {
    move |source| EmbeddingError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn describe(path: &Path, format: &str, options: &LoadOptions, audit: &LoadAudit) -> String {
    let mut meta = format!(
        "path={} format={} lowercase={} on_duplicate={:?}",
        path.display(),
        format,
        options.lowercase,
        options.on_duplicate
    );
    if audit.duplicates_dropped > 0 {
        let _ = write!(meta, " duplicates_dropped={}", audit.duplicates_dropped);
    }
    if let Some(keep) = &options.restrict_to {
        let _ = write!(
            meta,
            " restricted_to={} rows_restricted={}",
            keep.len(),
            audit.rows_restricted
        );
    }
    meta
}

/// Iterates non-empty lines with 1-based line numbers, stripping `\r\n`.
fn for_each_line(
    path: &Path,
    mut f: impl FnMut(usize, &str) -> Result<(), EmbeddingError>,
) -> Result<(), EmbeddingError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = BufReader::with_capacity(1 << 20, file);
    let mut buf = Vec::new();
    let mut line_no = 0usize;
    loop {
        buf.clear();
        let read = reader.read_until(b'\n', &mut buf).map_err(io_err(path))?;
        if read == 0 {
            return Ok(());
        }
        line_no += 1;
        let line = std::str::from_utf8(&buf)
            .map_err(|_| EmbeddingError::InvalidUtf8 { line: line_no })?
            .trim_end_matches(['\n', '\r']);
        if line.is_empty() {
            continue;
        }
        f(line_no, line)?;
    }
}

pub fn load_glove_text(
    path: impl AsRef<Path>,
    options: &LoadOptions,
) -> Result<EmbeddingTable, EmbeddingError> {
    let path = path.as_ref();
    let mut builder = Builder::new(options.clone());
    for_each_line(path, |n, line| builder.push_line(n, line))?;
    let meta = describe(path, "glove", options, &builder.audit);
    builder.finish(meta)
}

pub fn load_word2vec_text(
    path: impl AsRef<Path>,
    options: &LoadOptions,
) -> Result<EmbeddingTable, EmbeddingError> {
    let path = path.as_ref();
    let mut builder = Builder::new(options.clone());
    let mut header: Option<(usize, usize)> = None;
    for_each_line(path, |n, line| {
        if header.is_none() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let parsed = match parts.as_slice() {
                [count, dim] => count.parse().ok().zip(dim.parse().ok()),
                _ => None,
            };
            let (count, dim) = parsed.ok_or_else(|| {
                EmbeddingError::HeaderMismatch(format!("line {n}: expected `count dim`, got {line:?}"))
            })?;
            if dim == 0 {
                return Err(EmbeddingError::HeaderMismatch("dimension 0".into()));
            }
            builder.dimension = Some(dim);
            header = Some((count, dim));
            return Ok(());
        }
        builder.push_line(n, line)
    })?;
    let (count, _) = header.ok_or(EmbeddingError::EmptyFile)?;
    if builder.audit.lines_read != count {
        return Err(EmbeddingError::HeaderMismatch(format!(
            "header declares {count} rows, body has {}",
            builder.audit.lines_read
        )));
    }
    if count == 0 {
        return Err(EmbeddingError::EmptyFile);
    }
    let meta = describe(path, "word2vec", options, &builder.audit);
    builder.finish(meta)
}

/// Writes GloVe text. `f64` is printed in its shortest round-trip form.
pub fn save_glove_text(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<(), EmbeddingError> {
    let path = path.as_ref();
    if table.is_empty() {
        return Err(EmbeddingError::EmptyTable);
    }
    if let Some(bad) = table
        .tokens
        .iter()
        .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
    {
        return Err(EmbeddingError::TokenUnencodable(bad.clone()));
    }
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    let mut line = String::new();
    for (token, row) in table.iter() {
        line.clear();
        line.push_str(token);
        for v in row {
            let _ = write!(line, " {v}");
        }
        line.push('\n');
        out.write_all(line.as_bytes()).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, EmbeddingError> {
    if u.len() != v.len() {
        return Err(EmbeddingError::DimensionMismatch(u.len(), v.len()));
    }
    let denom = norm(u) * norm(v);
    if denom == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok((dot(u, v) / denom).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn fixture(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_three_line_fixture() {
        let f = fixture("a 1.0 0.0\nb 0.0 1.0\nc 1.0 1.0\n");
        let t = load_glove_text(f.path(), &LoadOptions::default()).unwrap();
        assert_eq!(t.dimension(), 2);
        assert_eq!(t.len(), 3);
        assert_eq!(t.lookup("a"), Some(&[1.0, 0.0][..]));
        assert_eq!(t.lookup("zzz"), None);
    }

    #[test]
    fn ragged_row_names_line() {
        let f = fixture("a 1.0 0.0\nb 0.0 1.0 2.0\n");
        match load_glove_text(f.path(), &LoadOptions::default()) {
            Err(EmbeddingError::RaggedRow {
                line,
                expected,
                found,
            }) => {
                assert_eq!((line, expected, found), (2, 2, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = fixture("\n\n");
        assert!(matches!(
            load_glove_text(f.path(), &LoadOptions::default()),
            Err(EmbeddingError::EmptyFile)
        ));
    }

    #[test]
    fn non_finite_and_garbage_values() {
        let f = fixture("a 1.0 NaN\n");
        assert!(matches!(
            load_glove_text(f.path(), &LoadOptions::default()),
            Err(EmbeddingError::NonFiniteValue { line: 1, field: 3 })
        ));
        let f = fixture("a 1.0 inf\n");
        assert!(matches!(
            load_glove_text(f.path(), &LoadOptions::default()),
            Err(EmbeddingError::NonFiniteValue { .. })
        ));
        let f = fixture("a 1.0 x\n");
        assert!(matches!(
            load_glove_text(f.path(), &LoadOptions::default()),
            Err(EmbeddingError::InvalidNumber {
                line: 1,
                field: 3,
                ..
            })
        ));
        let f = fixture("lonely\n");
        assert!(matches!(
            load_glove_text(f.path(), &LoadOptions::default()),
            Err(EmbeddingError::MissingValues { line: 1 })
        ));
    }

    #[test]
    fn duplicates_error_or_keep_first() {
        let f = fixture("Moscow 1 0\nmoscow 0 1\n");
        let t = load_glove_text(f.path(), &LoadOptions::default()).unwrap();
        assert_eq!(t.len(), 2);

        match load_glove_text(f.path(), &LoadOptions::lowercase()) {
            Err(EmbeddingError::DuplicateToken { line: 2, token }) => assert_eq!(token, "moscow"),
            other => panic!("unexpected {other:?}"),
        }

        let opts = LoadOptions {
            lowercase: true,
            on_duplicate: OnDuplicate::KeepFirst,
            ..Default::default()
        };
        let t = load_glove_text(f.path(), &opts).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.audit().duplicates_dropped, 1);
        assert_eq!(t.lookup("moscow"), Some(&[1.0, 0.0][..]));
        assert!(t.source_meta().contains("duplicates_dropped=1"));
    }

    #[test]
    fn lowercase_lookup_normalizes_query() {
        let f = fixture("Moscow 1 2\n");
        let t = load_glove_text(f.path(), &LoadOptions::lowercase()).unwrap();
        assert_eq!(t.tokens(), &["moscow".to_string()]);
        assert_eq!(t.lookup("Moscow"), Some(&[1.0, 2.0][..]));
        assert!(t.source_meta().contains("lowercase=true"));

        let raw = load_glove_text(f.path(), &LoadOptions::default()).unwrap();
        assert_eq!(raw.lookup("moscow"), None);
    }

    #[test]
    fn restricted_load_keeps_requested_rows_only() {
        let f = fixture("a 1 0\nb 0 1\nc 1 1\n");
        let opts = LoadOptions {
            restrict_to: Some(["b".to_string(), "q".to_string()].into_iter().collect()),
            ..Default::default()
        };
        let t = load_glove_text(f.path(), &opts).unwrap();
        assert_eq!(t.tokens(), &["b".to_string()]);
        assert_eq!(t.audit().rows_restricted, 2);
        assert_eq!(t.audit().lines_read, 3);
        // restricted rows are still validated
        let f = fixture("a 1 0\nb 0 1 4\n");
        assert!(matches!(
            load_glove_text(f.path(), &opts),
            Err(EmbeddingError::RaggedRow { line: 2, .. })
        ));
    }

    #[test]
    fn word2vec_header_checks() {
        let f = fixture("2 3\na 1 2 3\nb 4 5 6\n");
        let t = load_word2vec_text(f.path(), &LoadOptions::default()).unwrap();
        assert_eq!((t.len(), t.dimension()), (2, 3));

        let f = fixture("5 3\na 1 2 3\nb 4 5 6\n");
        assert!(matches!(
            load_word2vec_text(f.path(), &LoadOptions::default()),
            Err(EmbeddingError::HeaderMismatch(_))
        ));

        let f = fixture("2 3\na 1 2 3\nb 4 5 6 7\n");
        assert!(matches!(
            load_word2vec_text(f.path(), &LoadOptions::default()),
            Err(EmbeddingError::RaggedRow {
                line: 3,
                expected: 3,
                found: 4
            })
        ));

        let f = fixture("2 3\na 1 2\nb 4 5\n");
        assert!(matches!(
            load_word2vec_text(f.path(), &LoadOptions::default()),
            Err(EmbeddingError::RaggedRow { line: 2, .. })
        ));
    }

    #[test]
    fn save_rejects_unencodable_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let t = EmbeddingTable::from_rows([("new york", vec![1.0])]).unwrap();
        assert!(matches!(
            save_glove_text(&t, dir.path().join("x.txt")),
            Err(EmbeddingError::TokenUnencodable(_))
        ));
        let empty = EmbeddingTable {
            dimension: 1,
            tokens: vec![],
            index: HashMap::new(),
            data: vec![],
            lowercased: false,
            source_meta: String::new(),
            audit: LoadAudit::default(),
        };
        assert!(matches!(
            save_glove_text(&empty, dir.path().join("y.txt")),
            Err(EmbeddingError::EmptyTable)
        ));
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(matches!(
            cosine(&[0.0, 0.0], &[1.0, 0.0]),
            Err(EmbeddingError::ZeroVector)
        ));
        assert!(matches!(
            cosine(&[1.0], &[1.0, 0.0]),
            Err(EmbeddingError::DimensionMismatch(1, 2))
        ));
    }

    fn nonzero_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, dim).prop_filter("nonzero", |v| norm(v) > 1e-3)
    }

    proptest! {
        #[test]
        fn cosine_self_and_negation(u in nonzero_vec(7)) {
            let neg: Vec<f64> = u.iter().map(|x| -x).collect();
            prop_assert!((cosine(&u, &u).unwrap() - 1.0).abs() < 1e-12);
            prop_assert!((cosine(&u, &neg).unwrap() + 1.0).abs() < 1e-12);
        }

        #[test]
        fn cosine_scale_invariant(u in nonzero_vec(5), v in nonzero_vec(5),
                                  alpha in 1e-3f64..1e3, beta in 1e-3f64..1e3) {
            let su: Vec<f64> = u.iter().map(|x| alpha * x).collect();
            let sv: Vec<f64> = v.iter().map(|x| beta * x).collect();
            let c = cosine(&u, &v).unwrap();
            prop_assert!((cosine(&su, &sv).unwrap() - c).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&c));
        }

        #[test]
        fn save_load_roundtrip(rows in prop::collection::vec(
            prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 4), 1..20)) {
            let table = EmbeddingTable::from_rows(
                rows.iter().enumerate().map(|(i, r)| (format!("w{i}"), r.clone()))).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("t.txt");
            save_glove_text(&table, &path).unwrap();
            let back = load_glove_text(&path, &LoadOptions::default()).unwrap();
            prop_assert_eq!(back.tokens(), table.tokens());
            prop_assert_eq!(back.dimension(), table.dimension());
            for (i, _) in table.tokens().iter().enumerate() {
                prop_assert_eq!(back.row(i), table.row(i));
            }
            // one row per non-empty line
            prop_assert_eq!(back.audit().lines_read, rows.len());
        }
    }
}
