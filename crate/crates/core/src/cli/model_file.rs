//! Versioned, checksummed text format for fitted models.
//!
//! ```text
//! nomina-model
//! version 1
//! checksum <sha256 of everything after the separator line>
//! ---
//! kind gru
//! seed 7
//! ...
//! param lr 1e-3
//! array layer0.w 28 96
//! <one value per line, 17 significant digits>
//! end
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const MAGIC: &str = "nomina-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub kind: String,
    pub vocabulary: String,
    pub vocabulary_version: String,
    pub seed: u64,
    pub corpus_digest: String,
    pub min_ratio: f64,
    /// Hyperparameters and conventions, in insertion order.
    pub params: Vec<(String, String)>,
    pub arrays: Vec<(String, Matrix)>,
}

fn check_token(s: &str, what: &str) -> Result<()> {
    if s.is_empty() || s.chars().any(char::is_whitespace) {
        return Err(Error::ModelFormat(format!("{what} {s:?} must be a non-empty token")));
    }
    Ok(())
}

impl ModelFile {
    pub fn param(&self, key: &str) -> Result<&str> {
        self.params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::ModelFormat(format!("missing parameter {key}")))
    }

    pub fn parse_param<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.param(key)?;
        raw.parse()
            .map_err(|_| Error::ModelFormat(format!("parameter {key}={raw} is malformed")))
    }

    pub fn array(&self, name: &str) -> Result<&Matrix> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::ModelFormat(format!("missing array {name}")))
    }

    fn body(&self) -> Result<String> {
        use std::fmt::Write;
        for (k, v) in &self.params {
            check_token(k, "parameter name")?;
            check_token(v, "parameter value")?;
        }
        check_token(&self.kind, "kind")?;
        check_token(&self.vocabulary, "vocabulary")?;
        let mut s = String::new();
        let _ = writeln!(s, "kind {}", self.kind);
        let _ = writeln!(s, "vocabulary {}", self.vocabulary);
        let _ = writeln!(s, "vocabulary_version {}", self.vocabulary_version);
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "corpus_digest {}", self.corpus_digest);
        let _ = writeln!(s, "min_ratio {:.16e}", self.min_ratio);
        for (k, v) in &self.params {
            let _ = writeln!(s, "param {k} {v}");
        }
        for (name, m) in &self.arrays {
            check_token(name, "array name")?;
            let _ = writeln!(s, "array {name} {} {}", m.rows(), m.cols());
            for v in m.as_slice() {
                let _ = writeln!(s, "{v:.16e}");
            }
        }
        s.push_str("end\n");
        Ok(s)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let body = self.body()?;
        let digest = hex::encode(Sha256::digest(body.as_bytes()));
        Ok(format!("{MAGIC}\nversion {FORMAT_VERSION}\nchecksum {digest}\n---\n{body}").into_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ModelFile> {
        ModelFile::from_bytes(&std::fs::read(path)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ModelFile> {
        let text = std::str::from_utf8(bytes).map_err(|_| Error::CorruptFile("not UTF-8".into()))?;
        let mut header = text.splitn(5, '\n');
        if header.next() != Some(MAGIC) {
            return Err(Error::ModelFormat("not a nomina model file".into()));
        }
        let version = header
            .next()
            .and_then(|l| l.strip_prefix("version "))
            .ok_or_else(|| Error::CorruptFile("missing version line".into()))?;
        let version: u32 = version
            .parse()
            .map_err(|_| Error::CorruptFile(format!("bad version {version:?}")))?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let checksum = header
            .next()
            .and_then(|l| l.strip_prefix("checksum "))
            .ok_or_else(|| Error::CorruptFile("missing checksum line".into()))?;
        if header.next() != Some("---") {
            return Err(Error::CorruptFile("missing header separator".into()));
        }
        let body = header.next().unwrap_or("");
        if hex::encode(Sha256::digest(body.as_bytes())) != checksum {
            return Err(Error::CorruptFile("checksum does not match contents".into()));
        }
        parse_body(body)
    }
}

fn parse_body(body: &str) -> Result<ModelFile> {
    let bad = |line: &str| Error::ModelFormat(format!("unexpected line {line:?}"));
    let mut lines = body.lines();
    let mut field = |key: &str| -> Result<String> {
        let line = lines.next().unwrap_or("");
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .map(str::to_string)
            .ok_or_else(|| bad(line))
    };
    let kind = field("kind")?;
    let vocabulary = field("vocabulary")?;
    let vocabulary_version = field("vocabulary_version")?;
    let seed_raw = field("seed")?;
    let corpus_digest = field("corpus_digest")?;
    let ratio_raw = field("min_ratio")?;
    let seed = seed_raw.parse().map_err(|_| bad(&seed_raw))?;
    let min_ratio = ratio_raw.parse().map_err(|_| bad(&ratio_raw))?;
    let mut params = Vec::new();
    let mut arrays = Vec::new();
    loop {
        let line = lines.next().ok_or_else(|| Error::CorruptFile("missing end marker".into()))?;
        if line == "end" {
            break;
        }
        let parts: Vec<&str> = line.split(' ').collect();
        match parts.as_slice() {
            ["param", k, v] => params.push((k.to_string(), v.to_string())),
            ["array", name, rows, cols] => {
                let rows: usize = rows.parse().map_err(|_| bad(line))?;
                let cols: usize = cols.parse().map_err(|_| bad(line))?;
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows * cols {
                    let v = lines.next().ok_or_else(|| Error::CorruptFile(format!("array {name} is truncated")))?;
                    data.push(v.parse::<f64>().map_err(|_| bad(v))?);
                }
                arrays.push((name.to_string(), Matrix::from_vec(rows, cols, data)?));
            }
            _ => return Err(bad(line)),
        }
    }
    Ok(ModelFile {
        kind,
        vocabulary,
        vocabulary_version,
        seed,
        corpus_digest,
        min_ratio,
        params,
        arrays,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ModelFile {
        ModelFile {
            kind: "logistic".into(),
            vocabulary: "ABC#".into(),
            vocabulary_version: "v/1".into(),
            seed: 7,
            corpus_digest: "abc123".into(),
            min_ratio: 0.9,
            params: vec![("lambda".into(), "1".into())],
            arrays: vec![(
                "weights".into(),
                Matrix::from_vec(1, 4, vec![0.1, -1.0 / 3.0, f64::MIN_POSITIVE, 1e300]).unwrap(),
            )],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let m = sample();
        let bytes = m.to_bytes().unwrap();
        let back = ModelFile::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.param("lambda").unwrap(), "1");
        assert!(back.param("alpha").is_err());
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = sample().to_bytes().unwrap();
        for cut in [bytes.len() - 1, bytes.len() - 10, 60] {
            assert!(matches!(ModelFile::from_bytes(&bytes[..cut]), Err(Error::CorruptFile(_))), "{cut}");
        }
    }

    #[test]
    fn version_and_magic_checked() {
        let text = String::from_utf8(sample().to_bytes().unwrap()).unwrap();
        let newer = text.replacen("version 1", "version 2", 1);
        assert!(matches!(
            ModelFile::from_bytes(newer.as_bytes()),
            Err(Error::VersionMismatch { found: 2, expected: 1 })
        ));
        assert!(matches!(ModelFile::from_bytes(b"hello\n"), Err(Error::ModelFormat(_))));
        let tampered = text.replacen("seed 7", "seed 8", 1);
        assert!(matches!(ModelFile::from_bytes(tampered.as_bytes()), Err(Error::CorruptFile(_))));
    }
}
