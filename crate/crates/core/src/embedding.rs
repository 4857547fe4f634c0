//! Pretrained word-embedding tables and corpus token frequencies.
//!
//! Tables are read from the plain-text format shared by GloVe and word2vec
//! text dumps: one `token v1 ... vd` entry per line, optionally preceded by a
//! `vocab_size dim` header line.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Text layout of an embedding file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingFormat {
    /// word2vec text style: first line is `vocab_size dim`.
    TextWithHeader,
    /// GloVe style: data lines only.
    TextHeaderless,
}

impl std::str::FromStr for EmbeddingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text-with-header" => Ok(EmbeddingFormat::TextWithHeader),
            "text-headerless" => Ok(EmbeddingFormat::TextHeaderless),
            other => Err(Error::InvalidParameter(format!(
                "unknown embedding format `{other}`"
            ))),
        }
    }
}

/// Token to dense vector map with a fixed dimensionality.
///
/// Immutable once built. Lookups are case-sensitive, with an optional
/// lowercase fallback (on by default) for tables that mix casing conventions.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    name: String,
    dim: usize,
    vocab: HashMap<String, usize>,
    tokens: Vec<String>,
    matrix: Vec<f64>,
    lowercase_fallback: bool,
}

/// Side information gathered while parsing an embedding file.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub rows: usize,
    pub duplicates_skipped: usize,
    pub header_vocab_size: Option<usize>,
}

impl EmbeddingTable {
    /// Builds a table from `(token, vector)` rows. Duplicate tokens keep the
    /// first occurrence; the number dropped is returned alongside the table.
    pub fn from_rows<I, S>(name: impl Into<String>, rows: I) -> Result<(Self, usize)>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut builder = Builder::default();
        for (i, (token, values)) in rows.into_iter().enumerate() {
            builder.push(i + 1, token.into(), values)?;
        }
        let duplicates = builder.duplicates;
        let table = builder.finish(name.into())?;
        Ok((table, duplicates))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn lowercase_fallback(&self) -> bool {
        self.lowercase_fallback
    }

    pub fn set_lowercase_fallback(&mut self, enabled: bool) {
        self.lowercase_fallback = enabled;
    }

    /// Tokens in row order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.matrix[index * self.dim..(index + 1) * self.dim]
    }

    /// Exact-match lookup.
    pub fn get_exact(&self, token: &str) -> Option<&[f64]> {
        self.vocab.get(token).map(|&i| self.row(i))
    }

    /// Exact lookup, then the lowercased token when the fallback is enabled.
    pub fn lookup(&self, token: &str) -> Option<&[f64]> {
        if let Some(v) = self.get_exact(token) {
            return Some(v);
        }
        if self.lowercase_fallback {
            let lower = token.to_lowercase();
            if lower != token {
                return self.get_exact(&lower);
            }
        }
        None
    }

    pub fn load(path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<(Self, LoadReport)> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::read(BufReader::new(file), format, name).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    /// Parses a table from any buffered reader.
    pub fn read<R: BufRead>(
        reader: R,
        format: EmbeddingFormat,
        name: impl Into<String>,
    ) -> Result<(Self, LoadReport)> {
        let mut builder = Builder::default();
        let mut report = LoadReport::default();
        let mut expect_header = format == EmbeddingFormat::TextWithHeader;

        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::io("<reader>", e))?;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.trim().is_empty() {
                continue;
            }
            if expect_header {
                expect_header = false;
                let (vocab_size, dim) = parse_header(trimmed, lineno)?;
                builder.dim = Some(dim);
                report.header_vocab_size = Some(vocab_size);
                continue;
            }
            let mut fields = trimmed.split_whitespace();
            let token = fields.next().ok_or_else(|| Error::Malformed {
                line: lineno,
                msg: "missing token".into(),
            })?;
            let values = fields
                .map(|f| {
                    f.parse::<f64>().map_err(|_| Error::Malformed {
                        line: lineno,
                        msg: format!("cannot parse `{f}` as a number"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            builder.push(lineno, token.to_owned(), values)?;
        }

        if expect_header {
            return Err(Error::Empty("embedding file has no header".into()));
        }
        report.duplicates_skipped = builder.duplicates;
        let table = builder.finish(name.into())?;
        report.rows = table.len();
        if report.duplicates_skipped > 0 {
            log::warn!(
                "embedding table `{}`: skipped {} duplicate tokens",
                table.name,
                report.duplicates_skipped
            );
        }
        if let Some(n) = report.header_vocab_size {
            if n != table.len() + report.duplicates_skipped {
                log::warn!(
                    "embedding header announces {n} rows, file contains {}",
                    table.len() + report.duplicates_skipped
                );
            }
        }
        Ok((table, report))
    }

    /// Writes the table in the text format. Values use the shortest decimal
    /// representation that parses back to the same `f64`.
    pub fn write<W: Write>(&self, mut w: W, format: EmbeddingFormat) -> std::io::Result<()> {
        if format == EmbeddingFormat::TextWithHeader {
            writeln!(w, "{} {}", self.len(), self.dim)?;
        }
        for (i, token) in self.tokens.iter().enumerate() {
            w.write_all(token.as_bytes())?;
            for v in self.row(i) {
                write!(w, " {}", format_value(*v))?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write(&mut w, format)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

fn format_value(v: f64) -> String {
    // `{:?}` is the shortest round-trip form and always carries a decimal
    // point or exponent, so integers stay recognizable as reals.
    format!("{v:?}")
}

fn parse_header(line: &str, lineno: usize) -> Result<(usize, usize)> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    let bad = || Error::Malformed {
        line: lineno,
        msg: format!("expected header `vocab_size dim`, found `{line}`"),
    };
    if fields.len() != 2 {
        return Err(bad());
    }
    let vocab_size = fields[0].parse::<usize>().map_err(|_| bad())?;
    let dim = fields[1].parse::<usize>().map_err(|_| bad())?;
    if dim == 0 {
        return Err(Error::Malformed {
            line: lineno,
            msg: "header dimension must be positive".into(),
        });
    }
    Ok((vocab_size, dim))
}

#[derive(Default)]
struct Builder {
    dim: Option<usize>,
    vocab: HashMap<String, usize>,
    tokens: Vec<String>,
    matrix: Vec<f64>,
    duplicates: usize,
}

impl Builder {
    fn push(&mut self, lineno: usize, token: String, values: Vec<f64>) -> Result<()> {
        if values.is_empty() {
            return Err(Error::Malformed {
                line: lineno,
                msg: format!("token `{token}` has no values"),
            });
        }
        match self.dim {
            None => self.dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::LineDimension {
                    line: lineno,
                    expected: d,
                    found: values.len(),
                })
            }
            Some(_) => {}
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Malformed {
                line: lineno,
                msg: format!("token `{token}` has a non-finite value"),
            });
        }
        if self.vocab.contains_key(&token) {
            self.duplicates += 1;
            return Ok(());
        }
        self.vocab.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        self.matrix.extend_from_slice(&values);
        Ok(())
    }

    fn finish(self, name: String) -> Result<EmbeddingTable> {
        if self.tokens.is_empty() {
            return Err(Error::Empty("embedding table has no entries".into()));
        }
        Ok(EmbeddingTable {
            name,
            dim: self.dim.expect("dimension set by first row"),
            vocab: self.vocab,
            tokens: self.tokens,
            matrix: self.matrix,
            lowercase_fallback: true,
        })
    }
}

/// Relative token frequencies `p(w)` observed in a corpus.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TokenFrequency {
    probs: HashMap<String, f64>,
    total_count: u64,
}

const TOTAL_KEY: &str = "__total__";

impl TokenFrequency {
    /// Counts every token occurrence across the corpus.
    pub fn estimate<D, T>(corpus: &[D]) -> Result<Self>
    where
        D: AsRef<[T]>,
        T: AsRef<str>,
    {
        let mut counts: HashMap<String, u64> = HashMap::new();
        let mut total = 0u64;
        for doc in corpus {
            for token in doc.as_ref() {
                *counts.entry(token.as_ref().to_owned()).or_insert(0) += 1;
                total += 1;
            }
        }
        if total == 0 {
            return Err(Error::Empty("corpus contains no tokens".into()));
        }
        let probs = counts
            .into_iter()
            .map(|(t, c)| (t, c as f64 / total as f64))
            .collect();
        Ok(TokenFrequency {
            probs,
            total_count: total,
        })
    }

    /// Builds a table from explicit probabilities.
    pub fn from_probs(probs: HashMap<String, f64>, total_count: u64) -> Result<Self> {
        let mut sum = 0.0;
        for (t, &p) in &probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!(
                    "probability of `{t}` is {p}, outside [0, 1]"
                )));
            }
            sum += p;
        }
        if sum > 1.0 + 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "probabilities sum to {sum}, above 1"
            )));
        }
        Ok(TokenFrequency { probs, total_count })
    }

    /// Probability of `token`; unseen tokens have probability 0.
    pub fn prob(&self, token: &str) -> f64 {
        self.probs.get(token).copied().unwrap_or(0.0)
    }

    pub fn total_count(&self) -> u64 {
        self.total_count
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.probs.iter().map(|(t, &p)| (t.as_str(), p))
    }

    /// JSON object `{token: probability, "__total__": count}` with sorted keys.
    pub fn to_json(&self) -> serde_json::Value {
        let mut map: BTreeMap<String, serde_json::Value> = self
            .probs
            .iter()
            .map(|(t, &p)| (t.clone(), serde_json::Value::from(p)))
            .collect();
        map.insert(
            TOTAL_KEY.to_owned(),
            serde_json::Value::from(self.total_count),
        );
        serde_json::Value::Object(map.into_iter().collect())
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let obj = value.as_object().ok_or_else(|| {
            Error::InvalidParameter("frequency table must be a JSON object".into())
        })?;
        let mut probs = HashMap::with_capacity(obj.len());
        let mut total = None;
        for (k, v) in obj {
            if k == TOTAL_KEY {
                total = v.as_u64();
                continue;
            }
            let p = v.as_f64().ok_or_else(|| {
                Error::InvalidParameter(format!("frequency of `{k}` is not a number"))
            })?;
            probs.insert(k.clone(), p);
        }
        let total = total.ok_or_else(|| {
            Error::InvalidParameter(format!("frequency table lacks `{TOTAL_KEY}` count"))
        })?;
        Self::from_probs(probs, total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str, format: EmbeddingFormat) -> Result<(EmbeddingTable, LoadReport)> {
        EmbeddingTable::read(text.as_bytes(), format, "t")
    }

    #[test]
    fn headerless_two_rows() {
        let (t, _) = read("a 1.0 2.0\nb 3.0 4.0\n", EmbeddingFormat::TextHeaderless).unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.len(), 2);
        assert_eq!(t.lookup("b").unwrap(), &[3.0, 4.0]);
    }

    #[test]
    fn header_sets_dim() {
        let (t, r) = read("2 3\na 1 2 3\nb 4 5 6\n", EmbeddingFormat::TextWithHeader).unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(r.header_vocab_size, Some(2));
    }

    #[test]
    fn header_dim_disagrees_with_row() {
        let err = read("1 3\na 1 2\n", EmbeddingFormat::TextWithHeader).unwrap_err();
        assert!(matches!(
            err,
            Error::LineDimension {
                line: 2,
                expected: 3,
                found: 2
            }
        ));
    }

    #[test]
    fn dimension_mismatch_reports_line() {
        let err = read("a 1.0 2.0\nb 3.0\n", EmbeddingFormat::TextHeaderless).unwrap_err();
        assert!(matches!(err, Error::LineDimension { line: 2, .. }), "{err}");
    }

    #[test]
    fn malformed_value_reports_line() {
        let err = read("a 1.0 2.0\nb 3.0 x\n", EmbeddingFormat::TextHeaderless).unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 2, .. }), "{err}");
        let err = read("a 1.0 nan\n", EmbeddingFormat::TextHeaderless).unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 1, .. }), "{err}");
        let err = read("lonely\n", EmbeddingFormat::TextHeaderless).unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 1, .. }), "{err}");
    }

    #[test]
    fn empty_file() {
        assert!(matches!(
            read("", EmbeddingFormat::TextHeaderless),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            read("\n\n", EmbeddingFormat::TextWithHeader),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            read("0 5\n", EmbeddingFormat::TextWithHeader),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn duplicates_keep_first() {
        let (t, r) = read("a 1 1\nb 2 2\na 3 3\n", EmbeddingFormat::TextHeaderless).unwrap();
        assert_eq!(r.duplicates_skipped, 1);
        assert_eq!(t.len(), 2);
        assert_eq!(t.lookup("a").unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn lowercase_fallback() {
        let (mut t, _) = read(
            "paris 1 0\nParis 0 1\nlyon 2 2\n",
            EmbeddingFormat::TextHeaderless,
        )
        .unwrap();
        assert_eq!(t.lookup("Paris").unwrap(), &[0.0, 1.0]);
        assert_eq!(t.lookup("LYON").unwrap(), &[2.0, 2.0]);
        t.set_lowercase_fallback(false);
        assert!(t.lookup("LYON").is_none());
    }

    #[test]
    fn frequencies_count() {
        let f = TokenFrequency::estimate(&[vec!["a", "b", "a"]]).unwrap();
        assert_eq!(f.total_count(), 3);
        assert_eq!(f.prob("a"), 2.0 / 3.0);
        assert_eq!(f.prob("b"), 1.0 / 3.0);
        assert_eq!(f.prob("zzz"), 0.0);

        let f = TokenFrequency::estimate(&[vec!["a"], vec!["a"]]).unwrap();
        assert_eq!(f.prob("a"), 1.0);
    }

    #[test]
    fn frequencies_reject_empty_corpus() {
        let empty: Vec<Vec<String>> = vec![vec![], vec![]];
        assert!(matches!(
            TokenFrequency::estimate(&empty),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn frequency_json_round_trip() {
        let f = TokenFrequency::estimate(&[vec!["x", "y", "y", "z"]]).unwrap();
        let json = f.to_json();
        assert_eq!(json["__total__"], 4);
        assert_eq!(TokenFrequency::from_json(&json).unwrap(), f);
    }
}
