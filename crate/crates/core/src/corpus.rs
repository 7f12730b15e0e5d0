//! Labeled name records: CSV ingestion, normalization, ratio filtering,
//! stratified splitting and a synthetic generator for tests.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub const FEMALE: u8 = 0;
pub const MALE: u8 = 1;

pub const TRAIN_FRACTION: f64 = 0.60;
pub const VALIDATION_FRACTION: f64 = 0.20;
pub const TEST_FRACTION: f64 = 0.20;

/// Smallest corpus [`split`] accepts.
pub const MIN_SPLIT_LEN: usize = 10;

const FULL_HEADER: [&str; 6] = [
    "gender",
    "name",
    "total_freq",
    "group_freq",
    "group_name",
    "ratio",
];
const REDUCED_HEADER: [&str; 3] = ["gender", "name", "ratio"];

#[derive(Debug, Clone, PartialEq)]
pub struct NameRecord {
    /// 0 = female, 1 = male.
    pub gender: u8,
    pub name: String,
    /// Share of the dominant gender among bearers of the name.
    pub ratio: f64,
    pub total_freq: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    records: Vec<NameRecord>,
    source_digest: String,
}

impl Corpus {
    /// Builds a corpus, dropping repeated names after their first occurrence.
    pub fn from_records(records: Vec<NameRecord>, source_digest: impl Into<String>) -> Corpus {
        let mut seen = HashSet::with_capacity(records.len());
        let mut kept = Vec::with_capacity(records.len());
        for r in records {
            if seen.insert(r.name.clone()) {
                kept.push(r);
            } else {
                warn!("duplicate name {} dropped", r.name);
            }
        }
        Corpus {
            records: kept,
            source_digest: source_digest.into(),
        }
    }

    pub fn records(&self) -> &[NameRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Hex SHA-256 of the ingested bytes.
    pub fn source_digest(&self) -> &str {
        &self.source_digest
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.gender).collect()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.name.as_str())
    }

    /// Fraction of records labeled female.
    pub fn female_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let f = self.records.iter().filter(|r| r.gender == FEMALE).count();
        f as f64 / self.records.len() as f64
    }

    /// Keeps records whose ratio is at least `min_ratio`.
    pub fn filter(&self, min_ratio: f64) -> Corpus {
        Corpus {
            records: self
                .records
                .iter()
                .filter(|r| r.ratio >= min_ratio)
                .cloned()
                .collect(),
            source_digest: self.source_digest.clone(),
        }
    }

    /// Serializes in the reduced `gender,name,ratio` schema.
    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut out = String::from("gender,name,ratio\n");
        for r in &self.records {
            let g = if r.gender == FEMALE { 'F' } else { 'M' };
            out.push_str(&format!("{g},{},{}\n", r.name, r.ratio));
        }
        out.into_bytes()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_bytes())?;
        Ok(())
    }
}

/// Uppercases, strips diacritics (keeping `Ç`) and validates against the
/// 27 letter symbols of the vocabulary.
pub fn normalize_name(raw: &str) -> Result<String> {
    let trimmed = raw.trim();
    let mut out = String::with_capacity(trimmed.len());
    for c in trimmed.chars() {
        if c == 'ç' || c == 'Ç' {
            out.push('Ç');
            continue;
        }
        for d in c.nfd().filter(|d| !is_combining_mark(*d)) {
            for u in d.to_uppercase() {
                if u.is_ascii_uppercase() {
                    out.push(u);
                } else {
                    return Err(Error::UnmappableCharacter {
                        ch: c,
                        input: raw.to_string(),
                    });
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyName {
            input: raw.to_string(),
        });
    }
    Ok(out)
}

fn parse_gender(s: &str, row: usize) -> Result<u8> {
    match s.trim() {
        "F" | "f" => Ok(FEMALE),
        "M" | "m" => Ok(MALE),
        other => Err(Error::Parse {
            row,
            reason: format!("gender must be F or M, found {other:?}"),
        }),
    }
}

fn parse_ratio(s: &str, row: usize) -> Result<f64> {
    let ratio: f64 = s.trim().parse().map_err(|_| Error::Parse {
        row,
        reason: format!("ratio {s:?} is not a number"),
    })?;
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Parse {
            row,
            reason: format!("ratio {ratio} outside [0, 1]"),
        });
    }
    Ok(ratio)
}

/// Parses CSV bytes in either accepted schema.
pub fn parse_corpus(bytes: &[u8], min_ratio: f64) -> Result<Corpus> {
    let digest = hex::encode(Sha256::digest(bytes));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let full = header.iter().map(String::as_str).eq(FULL_HEADER.iter().copied());
    let reduced = header
        .iter()
        .map(String::as_str)
        .eq(REDUCED_HEADER.iter().copied());
    if !full && !reduced {
        return Err(Error::Schema(format!(
            "expected header {:?} or {:?}, found {:?}",
            FULL_HEADER.join(","),
            REDUCED_HEADER.join(","),
            header.join(",")
        )));
    }
    let (name_col, ratio_col) = if full { (1, 5) } else { (1, 2) };

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        // data rows are numbered from 1, the header is row 0
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Parse {
            row: row_no,
            reason: e.to_string(),
        })?;
        if row.len() != header.len() {
            return Err(Error::Parse {
                row: row_no,
                reason: format!("expected {} fields, found {}", header.len(), row.len()),
            });
        }
        let gender = parse_gender(&row[0], row_no)?;
        let ratio = parse_ratio(&row[ratio_col], row_no)?;
        let name = normalize_name(&row[name_col]).map_err(|e| e.at_row(row_no))?;
        let total_freq = if full && !row[2].trim().is_empty() {
            Some(row[2].trim().parse().map_err(|_| Error::Parse {
                row: row_no,
                reason: format!("total_freq {:?} is not a count", &row[2]),
            })?)
        } else {
            None
        };
        if ratio < min_ratio {
            continue;
        }
        records.push(NameRecord {
            gender,
            name,
            ratio,
            total_freq,
        });
    }
    let corpus = Corpus::from_records(records, digest);
    info!(
        "loaded {} records ({:.2}% female) with min ratio {}",
        corpus.len(),
        100.0 * corpus.female_fraction(),
        min_ratio
    );
    Ok(corpus)
}

pub fn load_corpus(path: &Path, min_ratio: f64) -> Result<Corpus> {
    let bytes = fs::read(path)?;
    parse_corpus(&bytes, min_ratio)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitCorpus {
    pub train: Corpus,
    pub validation: Corpus,
    pub test: Corpus,
    pub seed: u64,
}

impl SplitCorpus {
    pub fn fractions(&self) -> (f64, f64, f64) {
        (TRAIN_FRACTION, VALIDATION_FRACTION, TEST_FRACTION)
    }
}

/// Splits `total` among classes in proportion to their sizes using
/// largest remainders, ties going to the lower label.
fn apportion(total: usize, class_sizes: &[usize]) -> Vec<usize> {
    let n: usize = class_sizes.iter().sum();
    let mut shares: Vec<usize> = class_sizes.iter().map(|&c| total * c / n).collect();
    let mut rest = total - shares.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..class_sizes.len()).collect();
    // remainder of total*c/n, compared exactly in integers
    order.sort_by_key(|&k| std::cmp::Reverse((total * class_sizes[k]) % n));
    for &k in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        if shares[k] < class_sizes[k] {
            shares[k] += 1;
            rest -= 1;
        }
    }
    shares
}

/// Stratified, seeded 60/20/20 partition. Rounding remainders go to train
/// and each part keeps ingestion order.
pub fn split(corpus: &Corpus, seed: u64) -> Result<SplitCorpus> {
    let n = corpus.len();
    if n < MIN_SPLIT_LEN {
        return Err(Error::CorpusTooSmall {
            len: n,
            min: MIN_SPLIT_LEN,
        });
    }
    let n_val = (n as f64 * VALIDATION_FRACTION).floor() as usize;
    let n_test = (n as f64 * TEST_FRACTION).floor() as usize;

    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, r) in corpus.records.iter().enumerate() {
        by_class[r.gender as usize].push(i);
    }
    let sizes = [by_class[0].len(), by_class[1].len()];
    let val_share = apportion(n_val, &sizes);
    let test_share = apportion(n_test, &sizes);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut part_of = vec![0u8; n];
    for class in 0..2 {
        let idx = &mut by_class[class];
        idx.shuffle(&mut rng);
        let t = test_share[class];
        let v = val_share[class];
        for &i in &idx[..t] {
            part_of[i] = 2;
        }
        for &i in &idx[t..t + v] {
            part_of[i] = 1;
        }
    }
    let take = |part: u8| Corpus {
        records: corpus
            .records
            .iter()
            .zip(&part_of)
            .filter(|(_, &p)| p == part)
            .map(|(r, _)| r.clone())
            .collect(),
        source_digest: corpus.source_digest.clone(),
    };
    Ok(SplitCorpus {
        train: take(0),
        validation: take(1),
        test: take(2),
        seed,
    })
}

const SYNTH_CONSONANTS: &[u8] = b"BCDFGHJKLMNPQRSTVWXYZ";
const SYNTH_VOWELS: &[u8] = b"IOU";
const SYNTH_FEMALE_ENDINGS: &[u8] = b"AE";
const SYNTH_MALE_ENDINGS: &[u8] = b"BCDFGHIJKLMNOPQRSTUVWXYZ";

/// Suffix rule behind [`synth_corpus`]: names ending in `A` or `E` are
/// female, everything else male.
pub fn synth_label(name: &str) -> u8 {
    match name.chars().last() {
        Some('A') | Some('E') => FEMALE,
        _ => MALE,
    }
}

/// Seeded generator of `n` distinct pseudo-names of length 3 to 12.
///
/// The stem alternates consonants with the vowels `I`, `O`, `U`; the final
/// letter is drawn to match a coin-flip label under [`synth_label`].
pub fn synth_corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(n);
    let mut records = Vec::with_capacity(n);
    while records.len() < n {
        let len = rng.gen_range(3..=12usize);
        let gender = rng.gen_range(0..2u8);
        let mut name = String::with_capacity(len);
        for i in 0..len - 1 {
            let pool = if i % 2 == 0 {
                SYNTH_CONSONANTS
            } else {
                SYNTH_VOWELS
            };
            name.push(pool[rng.gen_range(0..pool.len())] as char);
        }
        let endings = if gender == FEMALE {
            SYNTH_FEMALE_ENDINGS
        } else {
            SYNTH_MALE_ENDINGS
        };
        name.push(endings[rng.gen_range(0..endings.len())] as char);
        if seen.insert(name.clone()) {
            records.push(NameRecord {
                gender,
                name,
                ratio: 1.0,
                total_freq: None,
            });
        }
    }
    let mut corpus = Corpus {
        records,
        source_digest: String::new(),
    };
    corpus.source_digest = hex::encode(Sha256::digest(corpus.to_csv_bytes()));
    corpus
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(name: &str, gender: u8, ratio: f64) -> NameRecord {
        NameRecord {
            gender,
            name: name.to_string(),
            ratio,
            total_freq: None,
        }
    }

    #[test]
    fn normalizes_names() {
        assert_eq!(normalize_name("Abadia").unwrap(), "ABADIA");
        assert_eq!(normalize_name("ANA").unwrap(), "ANA");
        assert_eq!(normalize_name("josé").unwrap(), "JOSE");
        assert_eq!(normalize_name("conceição").unwrap(), "CONCEIÇAO");
        assert_eq!(normalize_name("  Ângela ").unwrap(), "ANGELA");
    }

    #[test]
    fn normalize_errors() {
        assert!(matches!(normalize_name(""), Err(Error::EmptyName { .. })));
        assert!(matches!(normalize_name("  "), Err(Error::EmptyName { .. })));
        match normalize_name("ANA-MARIA") {
            Err(Error::UnmappableCharacter { ch, input }) => {
                assert_eq!(ch, '-');
                assert_eq!(input, "ANA-MARIA");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(normalize_name("Ø").is_err());
    }

    #[test]
    fn parses_fixture_and_filters() {
        let csv = "gender,name,total_freq,group_freq,group_name,ratio\n\
                   M,AARAO,281,3526,ARAO,1.0\n\
                   F,ABADIA,7565,7565,ABADIA,0.9832\n\
                   M,ABADIAS,201,201,ABADIAS,0.7761\n";
        let c = parse_corpus(csv.as_bytes(), 0.9).unwrap();
        let names: Vec<&str> = c.names().collect();
        assert_eq!(names, ["AARAO", "ABADIA"]);
        assert_eq!(c.records()[0].total_freq, Some(281));
        let all = parse_corpus(csv.as_bytes(), 0.0).unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(all.source_digest(), c.source_digest());
    }

    #[test]
    fn reduced_schema_accepted() {
        let c = parse_corpus(b"gender,name,ratio\nF,Maria,1\nM,Joao,0.5\n", 0.0).unwrap();
        assert_eq!(c.labels(), vec![FEMALE, MALE]);
        assert_eq!(c.records()[1].name, "JOAO");
    }

    #[test]
    fn schema_and_parse_errors() {
        assert!(matches!(
            parse_corpus(b"gender,name\nF,ANA\n", 0.0),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            parse_corpus(b"gender,name,ratio,extra\nF,ANA,1,2\n", 0.0),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            parse_corpus(b"gender,name,ratio\nF,ANA,1\nX,BOB,1\n", 0.0),
            Err(Error::Parse { row: 2, .. })
        ));
        assert!(matches!(
            parse_corpus(b"gender,name,ratio\nF,ANA,1.5\n", 0.0),
            Err(Error::Parse { row: 1, .. })
        ));
        match parse_corpus(b"gender,name,ratio\nF,ANA,1\nF,A B,1\n", 0.0) {
            Err(Error::AtRow { row: 2, source }) => {
                assert!(matches!(*source, Error::UnmappableCharacter { ch: ' ', .. }))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicates_keep_first() {
        let c = parse_corpus(b"gender,name,ratio\nF,Ana,1\nM,ANA,1\n", 0.0).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.records()[0].gender, FEMALE);
    }

    #[test]
    fn filter_is_idempotent() {
        let c = Corpus::from_records(
            vec![rec("ANA", 0, 1.0), rec("BOB", 1, 0.5), rec("CAIO", 1, 0.95)],
            "",
        );
        assert_eq!(c.filter(0.9).filter(0.9), c.filter(0.9));
        assert_eq!(c.filter(0.9).len(), 2);
    }

    fn hundred() -> Corpus {
        let records = (0..100)
            .map(|i| {
                let name: String = format!("N{i:03}")
                    .chars()
                    .map(|c| if c.is_ascii_digit() { (b'A' + c as u8 - b'0') as char } else { c })
                    .collect();
                rec(&name, if i < 60 { FEMALE } else { MALE }, 1.0)
            })
            .collect();
        Corpus::from_records(records, "")
    }

    #[test]
    fn split_sizes_and_stratification() {
        let c = hundred();
        assert_eq!(c.len(), 100);
        let s = split(&c, 7).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (60, 20, 20));
        for part in [&s.train, &s.validation, &s.test] {
            assert!((part.female_fraction() - 0.6).abs() <= 0.01);
        }
        assert_eq!(split(&c, 7).unwrap(), s);
    }

    #[test]
    fn split_depends_on_seed() {
        let c = hundred();
        let a = split(&c, 1).unwrap();
        let b = split(&c, 2).unwrap();
        assert_ne!(a.test, b.test);
    }

    #[test]
    fn split_rejects_tiny() {
        let c = Corpus::from_records(vec![rec("ANA", 0, 1.0)], "");
        assert!(matches!(split(&c, 0), Err(Error::CorpusTooSmall { len: 1, .. })));
    }

    #[test]
    fn remainder_goes_to_train() {
        let c = synth_corpus(13, 3);
        let s = split(&c, 0).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (9, 2, 2));
    }

    #[test]
    fn synth_rule_holds() {
        let c = synth_corpus(4, 0);
        assert_eq!(c.len(), 4);
        for r in c.records() {
            assert_eq!(r.gender, synth_label(&r.name));
            assert!((3..=12).contains(&r.name.len()));
        }
    }

    #[test]
    fn synth_balance_and_determinism() {
        let a = synth_corpus(10_000, 1);
        let b = synth_corpus(10_000, 1);
        assert_eq!(a.to_csv_bytes(), b.to_csv_bytes());
        let f = a.female_fraction();
        assert!((0.45..=0.55).contains(&f), "female fraction {f}");
        assert_eq!(a.len(), 10_000);
    }
}
