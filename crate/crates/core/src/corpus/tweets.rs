use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Serialize;

use super::CorpusError;

/// Hashtags used to collect the anti-Chinese COVID-19 tweet set.
pub const ANTI_CHINESE_14: [&str; 14] = [
    "#chinavirus",
    "#wuhan",
    "#wuhanvirus",
    "#chinavirusoutbreak",
    "#wuhancoronavirus",
    "#wuhaninfluenza",
    "#wuhansars",
    "#chinacoronavirus",
    "#wuhan2020",
    "#chinaflu",
    "#wuhanquarantine",
    "#chinesepneumonia",
    "#coronachina",
    "#wohan",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Rules {
    pub lowercase: bool,
    pub strip_urls: bool,
    /// Keep `#tag` as one token; otherwise the `#` is stripped.
    pub keep_hashtags: bool,
    /// Keep `@user` as one token; otherwise the `@` is stripped.
    pub keep_mentions: bool,
    /// Drop records whose raw text is byte-identical to an earlier one.
    pub dedupe_exact: bool,
}

impl Default for Rules {
    fn default() -> Self {
        Rules {
            lowercase: true,
            strip_urls: true,
            keep_hashtags: true,
            keep_mentions: true,
            dedupe_exact: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputFormat {
    #[default]
    Auto,
    JsonLines,
    PlainText,
}

#[derive(Debug, Clone, Default)]
pub struct PreprocessOptions {
    pub rules: Rules,
    pub format: InputFormat,
    /// JSON field holding the tweet text; `full_text` then `text` when unset.
    pub text_field: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FilterMeta {
    pub hashtags: usize,
    pub documents_before: usize,
    pub documents_kept: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RulesMeta {
    pub rules: Rules,
    pub records_read: usize,
    pub empty_dropped: usize,
    pub duplicates_dropped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterMeta>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedCorpus {
    pub documents: Vec<Vec<String>>,
    pub rules_meta: RulesMeta,
    pub warnings: Vec<String>,
}

impl TokenizedCorpus {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.documents.iter().map(Vec::len).sum()
    }
}

fn is_url(raw: &str) -> bool {
    let lower = raw.to_ascii_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Splits on whitespace, then trims surrounding punctuation while keeping a
/// leading `#` or `@`.
pub fn tokenize(text: &str, rules: &Rules) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        if rules.strip_urls && is_url(raw) {
            continue;
        }
        let mut token = raw
            .trim_start_matches(|c: char| !(is_word_char(c) || c == '#' || c == '@'))
            .trim_end_matches(|c: char| !is_word_char(c));
        if token.starts_with('#') && !rules.keep_hashtags {
            token = token.trim_start_matches('#');
        }
        if token.starts_with('@') && !rules.keep_mentions {
            token = token.trim_start_matches('@');
        }
        if !token.chars().any(is_word_char) {
            continue;
        }
        out.push(if rules.lowercase {
            token.to_lowercase()
        } else {
            token.to_string()
        });
    }
    out
}

/// Tokenizes in-memory texts, dropping empty documents (and exact duplicates
/// when asked).
pub fn preprocess_texts<I, S>(texts: I, rules: &Rules) -> Result<TokenizedCorpus, CorpusError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut seen = HashSet::new();
    let mut meta = RulesMeta {
        rules: *rules,
        records_read: 0,
        empty_dropped: 0,
        duplicates_dropped: 0,
        filter: None,
    };
    let mut documents = Vec::new();
    for text in texts {
        let text = text.as_ref();
        meta.records_read += 1;
        if rules.dedupe_exact && !seen.insert(text.to_string()) {
            meta.duplicates_dropped += 1;
            continue;
        }
        let doc = tokenize(text, rules);
        if doc.is_empty() {
            meta.empty_dropped += 1;
        } else {
            documents.push(doc);
        }
    }
    if documents.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(TokenizedCorpus {
        documents,
        rules_meta: meta,
        warnings: Vec::new(),
    })
}

fn extract_text(line_no: usize, line: &str, field: Option<&str>) -> Result<String, CorpusError> {
    let malformed = |reason: String| CorpusError::MalformedRecord {
        line: line_no,
        reason,
    };
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| malformed(format!("invalid JSON: {e}")))?;
    let fields: Vec<&str> = match field {
        Some(f) => vec![f],
        None => vec!["full_text", "text"],
    };
    fields
        .iter()
        .find_map(|f| value.get(*f).and_then(|v| v.as_str()))
        .map(str::to_string)
        .ok_or_else(|| malformed(format!("no string field {}", fields.join(" or "))))
}

/// Reads JSON-lines (one tweet object per line) or plain text (one tweet per line).
pub fn preprocess_tweets(
    path: impl AsRef<Path>,
    options: &PreprocessOptions,
) -> Result<TokenizedCorpus, CorpusError> {
    let path = path.as_ref();
    let io = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut format = options.format;
    let mut texts = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if format == InputFormat::Auto {
            format = if line.trim_start().starts_with('{') {
                InputFormat::JsonLines
            } else {
                InputFormat::PlainText
            };
        }
        texts.push(match format {
            InputFormat::JsonLines => extract_text(i + 1, line, options.text_field.as_deref())?,
            _ => line.to_string(),
        });
    }
    preprocess_texts(texts, &options.rules)
}

/// Keeps the documents containing at least one of `hashtags` (compared
/// case-insensitively).
pub fn filter_by_hashtags<S: AsRef<str>>(corpus: &TokenizedCorpus, hashtags: &[S]) -> TokenizedCorpus {
    let wanted: HashSet<String> = hashtags.iter().map(|h| h.as_ref().to_lowercase()).collect();
    let documents: Vec<Vec<String>> = corpus
        .documents
        .iter()
        .filter(|doc| doc.iter().any(|t| wanted.contains(&t.to_lowercase())))
        .cloned()
        .collect();
    let mut warnings = corpus.warnings.clone();
    if documents.is_empty() {
        warnings.push(format!(
            "hashtag filter over {} tags kept no documents",
            wanted.len()
        ));
    }
    let mut rules_meta = corpus.rules_meta.clone();
    rules_meta.filter = Some(FilterMeta {
        hashtags: wanted.len(),
        documents_before: corpus.len(),
        documents_kept: documents.len(),
    });
    TokenizedCorpus {
        documents,
        rules_meta,
        warnings,
    }
}
