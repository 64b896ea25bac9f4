//! NSL-KDD record parsing, feature schema construction and min-max encoding.
//!
//! A record line carries 41 feature tokens followed by the attack label and
//! a difficulty score. The schema is built from training records only and
//! frozen into a text artifact so that every later stage encodes with the
//! same vocabularies and ranges.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Number of features in every NSL-KDD record.
pub const NUM_FEATURES: usize = 41;

/// Fields per line: 41 features, the attack label and the difficulty score.
pub const FIELDS_PER_LINE: usize = NUM_FEATURES + 2;

/// A normalized feature vector.
pub type FeatureVector = [f64; NUM_FEATURES];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("malformed record: expected {FIELDS_PER_LINE} fields, found {found}")]
    FieldCount { found: usize },
    #[error("malformed record: difficulty `{0}` is not an integer")]
    Difficulty(String),
    #[error("unknown attack name `{0}`")]
    UnknownAttack(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("feature `{feature}`: `{token}` is not a number")]
    InvalidNumber {
        feature: &'static str,
        token: String,
    },
    #[error("feature `{feature}`: token `{token}` is not in the schema vocabulary")]
    UnknownToken {
        feature: &'static str,
        token: String,
    },
    #[error("{path}:{line}: {source}")]
    AtLine {
        path: String,
        line: usize,
        #[source]
        source: Box<DataError>,
    },
    #[error("schema artifact: {0}")]
    SchemaFormat(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

impl DataError {
    pub(crate) fn io(path: &Path, err: std::io::Error) -> Self {
        DataError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttackCategory {
    Normal,
    Probe,
    DoS,
    U2R,
    R2L,
}

impl AttackCategory {
    pub const ALL: [AttackCategory; 5] = [
        AttackCategory::Normal,
        AttackCategory::Probe,
        AttackCategory::DoS,
        AttackCategory::U2R,
        AttackCategory::R2L,
    ];

    pub fn is_attack(self) -> bool {
        self != AttackCategory::Normal
    }

    pub fn name(self) -> &'static str {
        match self {
            AttackCategory::Normal => "Normal",
            AttackCategory::Probe => "Probe",
            AttackCategory::DoS => "DoS",
            AttackCategory::U2R => "U2R",
            AttackCategory::R2L => "R2L",
        }
    }
}

impl fmt::Display for AttackCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Standard NSL-KDD attack taxonomy over the KDDTrain+ and KDDTest+ label sets.
const TAXONOMY: &[(&str, AttackCategory)] = &[
    ("normal", AttackCategory::Normal),
    // DoS
    ("back", AttackCategory::DoS),
    ("land", AttackCategory::DoS),
    ("neptune", AttackCategory::DoS),
    ("pod", AttackCategory::DoS),
    ("smurf", AttackCategory::DoS),
    ("teardrop", AttackCategory::DoS),
    ("apache2", AttackCategory::DoS),
    ("udpstorm", AttackCategory::DoS),
    ("processtable", AttackCategory::DoS),
    ("worm", AttackCategory::DoS),
    ("mailbomb", AttackCategory::DoS),
    // Probe
    ("satan", AttackCategory::Probe),
    ("ipsweep", AttackCategory::Probe),
    ("nmap", AttackCategory::Probe),
    ("portsweep", AttackCategory::Probe),
    ("mscan", AttackCategory::Probe),
    ("saint", AttackCategory::Probe),
    // R2L
    ("guess_passwd", AttackCategory::R2L),
    ("ftp_write", AttackCategory::R2L),
    ("imap", AttackCategory::R2L),
    ("phf", AttackCategory::R2L),
    ("multihop", AttackCategory::R2L),
    ("warezmaster", AttackCategory::R2L),
    ("warezclient", AttackCategory::R2L),
    ("spy", AttackCategory::R2L),
    ("xlock", AttackCategory::R2L),
    ("xsnoop", AttackCategory::R2L),
    ("snmpguess", AttackCategory::R2L),
    ("snmpgetattack", AttackCategory::R2L),
    ("httptunnel", AttackCategory::R2L),
    ("sendmail", AttackCategory::R2L),
    ("named", AttackCategory::R2L),
    // U2R
    ("buffer_overflow", AttackCategory::U2R),
    ("loadmodule", AttackCategory::U2R),
    ("rootkit", AttackCategory::U2R),
    ("perl", AttackCategory::U2R),
    ("sqlattack", AttackCategory::U2R),
    ("xterm", AttackCategory::U2R),
    ("ps", AttackCategory::U2R),
];

/// Names of every attack label in the embedded taxonomy, `normal` included.
pub fn known_attack_names() -> impl Iterator<Item = &'static str> {
    TAXONOMY.iter().map(|(name, _)| *name)
}

/// Maps an NSL-KDD label to its category. Matching ignores case and a
/// trailing `.` (KDD'99-style labels).
pub fn map_attack(attack_name: &str) -> Result<AttackCategory, DataError> {
    let name = attack_name
        .trim()
        .trim_end_matches('.')
        .to_ascii_lowercase();
    TAXONOMY
        .iter()
        .find(|(known, _)| *known == name)
        .map(|(_, category)| *category)
        .ok_or_else(|| DataError::UnknownAttack(attack_name.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Continuous,
    DiscreteMulti,
    DiscreteBinary,
}

impl FeatureKind {
    fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Continuous => "continuous",
            FeatureKind::DiscreteMulti => "discrete_multi",
            FeatureKind::DiscreteBinary => "discrete_binary",
        }
    }
}

impl FromStr for FeatureKind {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "continuous" => Ok(FeatureKind::Continuous),
            "discrete_multi" => Ok(FeatureKind::DiscreteMulti),
            "discrete_binary" => Ok(FeatureKind::DiscreteBinary),
            other => Err(DataError::SchemaFormat(format!("unknown kind `{other}`"))),
        }
    }
}

/// The four feature groups of an NSL-KDD record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    Intrinsic,
    Content,
    TimeBased,
    HostBased,
}

impl FeatureSet {
    fn as_str(self) -> &'static str {
        match self {
            FeatureSet::Intrinsic => "intrinsic",
            FeatureSet::Content => "content",
            FeatureSet::TimeBased => "time_based",
            FeatureSet::HostBased => "host_based",
        }
    }
}

impl FromStr for FeatureSet {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "intrinsic" => Ok(FeatureSet::Intrinsic),
            "content" => Ok(FeatureSet::Content),
            "time_based" => Ok(FeatureSet::TimeBased),
            "host_based" => Ok(FeatureSet::HostBased),
            other => Err(DataError::SchemaFormat(format!(
                "unknown feature set `{other}`"
            ))),
        }
    }
}

use FeatureKind::{Continuous as C, DiscreteBinary as B, DiscreteMulti as M};
use FeatureSet::{Content, HostBased, Intrinsic, TimeBased};

/// Static layout of the 41 features in file order.
pub const FEATURE_LAYOUT: [(&str, FeatureKind, FeatureSet); NUM_FEATURES] = [
    ("duration", C, Intrinsic),
    ("protocol_type", M, Intrinsic),
    ("service", M, Intrinsic),
    ("flag", M, Intrinsic),
    ("src_bytes", C, Intrinsic),
    ("dst_bytes", C, Intrinsic),
    ("land", B, Intrinsic),
    ("wrong_fragment", C, Intrinsic),
    ("urgent", C, Intrinsic),
    ("hot", C, Content),
    ("num_failed_logins", C, Content),
    ("logged_in", B, Content),
    ("num_compromised", C, Content),
    ("root_shell", B, Content),
    ("su_attempted", B, Content),
    ("num_root", C, Content),
    ("num_file_creations", C, Content),
    ("num_shells", C, Content),
    ("num_access_files", C, Content),
    ("num_outbound_cmds", C, Content),
    ("is_host_login", B, Content),
    ("is_guest_login", B, Content),
    ("count", C, TimeBased),
    ("srv_count", C, TimeBased),
    ("serror_rate", C, TimeBased),
    ("srv_serror_rate", C, TimeBased),
    ("rerror_rate", C, TimeBased),
    ("srv_rerror_rate", C, TimeBased),
    ("same_srv_rate", C, TimeBased),
    ("diff_srv_rate", C, TimeBased),
    ("srv_diff_host_rate", C, TimeBased),
    ("dst_host_count", C, HostBased),
    ("dst_host_srv_count", C, HostBased),
    ("dst_host_same_srv_rate", C, HostBased),
    ("dst_host_diff_srv_rate", C, HostBased),
    ("dst_host_same_src_port_rate", C, HostBased),
    ("dst_host_srv_diff_host_rate", C, HostBased),
    ("dst_host_serror_rate", C, HostBased),
    ("dst_host_srv_serror_rate", C, HostBased),
    ("dst_host_rerror_rate", C, HostBased),
    ("dst_host_srv_rerror_rate", C, HostBased),
];

/// Zero-based index of a feature by name.
pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_LAYOUT.iter().position(|(n, _, _)| *n == name)
}

const PROTOCOL_SEED: [&str; 3] = ["tcp", "udp", "icmp"];
const SU_ATTEMPTED: usize = 14;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub features: Vec<String>,
    pub attack_name: String,
    pub difficulty: i64,
}

impl RawRecord {
    pub fn category(&self) -> Result<AttackCategory, DataError> {
        map_attack(&self.attack_name)
    }
}

/// Parses one comma-separated NSL-KDD row.
pub fn parse_record(line: &str) -> Result<RawRecord, DataError> {
    let fields: Vec<&str> = line.trim_end_matches(['\r', '\n']).split(',').collect();
    if fields.len() != FIELDS_PER_LINE {
        return Err(DataError::FieldCount {
            found: fields.len(),
        });
    }
    let difficulty_token = fields[FIELDS_PER_LINE - 1].trim();
    let difficulty = difficulty_token
        .parse::<i64>()
        .map_err(|_| DataError::Difficulty(difficulty_token.to_string()))?;
    Ok(RawRecord {
        features: fields[..NUM_FEATURES]
            .iter()
            .map(|f| f.trim().to_string())
            .collect(),
        attack_name: fields[NUM_FEATURES].trim().to_string(),
        difficulty,
    })
}

/// Parses NSL-KDD text, skipping blank lines. Errors carry the 1-based line
/// number. Every label is checked against the taxonomy.
pub fn parse_records(text: &str, source: &str) -> Result<Vec<RawRecord>, DataError> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at_line = |e: DataError| DataError::AtLine {
            path: source.to_string(),
            line: idx + 1,
            source: Box::new(e),
        };
        let record = parse_record(line).map_err(at_line)?;
        record.category().map_err(at_line)?;
        records.push(record);
    }
    Ok(records)
}

pub fn load_records(path: &Path) -> Result<Vec<RawRecord>, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_records(&text, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub set: FeatureSet,
    pub vocab: Vec<String>,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
    /// When false, unseen categorical tokens are an error instead of clamped.
    pub clamp_unseen: bool,
}

fn parse_number(index: usize, token: &str) -> Result<f64, DataError> {
    token
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| DataError::InvalidNumber {
            feature: FEATURE_LAYOUT[index].0,
            token: token.to_string(),
        })
}

fn binary_value(index: usize, token: &str) -> Result<f64, DataError> {
    let v = parse_number(index, token)?;
    // su_attempted carries a stray value 2 in some rows
    if index == SU_ATTEMPTED && v == 2.0 {
        return Ok(0.0);
    }
    Ok(v)
}

/// Builds vocabularies and ranges from training records.
pub fn build_schema(train_records: &[RawRecord]) -> Result<FeatureSchema, DataError> {
    if train_records.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let mut features: Vec<FeatureSpec> = FEATURE_LAYOUT
        .iter()
        .map(|(name, kind, set)| FeatureSpec {
            name: name.to_string(),
            kind: *kind,
            set: *set,
            vocab: if *name == "protocol_type" {
                PROTOCOL_SEED.iter().map(|s| s.to_string()).collect()
            } else {
                Vec::new()
            },
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        })
        .collect();

    for record in train_records {
        for (i, spec) in features.iter_mut().enumerate() {
            let token = record.features[i].as_str();
            let value = match spec.kind {
                FeatureKind::Continuous => parse_number(i, token)?,
                FeatureKind::DiscreteBinary => {
                    binary_value(i, token)?;
                    continue;
                }
                FeatureKind::DiscreteMulti => {
                    let pos = match spec.vocab.iter().position(|v| v == token) {
                        Some(pos) => pos,
                        None => {
                            spec.vocab.push(token.to_string());
                            spec.vocab.len() - 1
                        }
                    };
                    (pos + 1) as f64
                }
            };
            spec.min = spec.min.min(value);
            spec.max = spec.max.max(value);
        }
    }
    for spec in &mut features {
        if spec.kind == FeatureKind::DiscreteBinary {
            spec.min = 0.0;
            spec.max = 1.0;
        }
    }
    Ok(FeatureSchema {
        features,
        clamp_unseen: true,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedVector {
    pub values: FeatureVector,
    pub category: AttackCategory,
}

impl EncodedVector {
    /// Inverse of the min-max map: `min + x' * (max - min)` per feature.
    pub fn denormalize(&self, schema: &FeatureSchema) -> FeatureVector {
        let mut raw = [0.0; NUM_FEATURES];
        for (i, spec) in schema.features.iter().enumerate() {
            raw[i] = spec.min + self.values[i] * (spec.max - spec.min);
        }
        raw
    }
}

fn min_max(value: f64, min: f64, max: f64) -> f64 {
    if max <= min {
        return 0.0;
    }
    (value.clamp(min, max) - min) / (max - min)
}

impl FeatureSchema {
    pub fn kinds(&self) -> impl Iterator<Item = FeatureKind> + '_ {
        self.features.iter().map(|f| f.kind)
    }

    pub fn binary_indices(&self) -> Vec<usize> {
        self.features
            .iter()
            .enumerate()
            .filter(|(_, f)| f.kind == FeatureKind::DiscreteBinary)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn encode(&self, record: &RawRecord) -> Result<EncodedVector, DataError> {
        let category = record.category()?;
        let mut values = [0.0; NUM_FEATURES];
        for (i, spec) in self.features.iter().enumerate() {
            let token = record.features[i].as_str();
            let raw = match spec.kind {
                FeatureKind::Continuous => parse_number(i, token)?,
                FeatureKind::DiscreteBinary => binary_value(i, token)?,
                FeatureKind::DiscreteMulti => match spec.vocab.iter().position(|v| v == token) {
                    Some(pos) => (pos + 1) as f64,
                    None if self.clamp_unseen => f64::INFINITY,
                    None => {
                        return Err(DataError::UnknownToken {
                            feature: FEATURE_LAYOUT[i].0,
                            token: token.to_string(),
                        })
                    }
                },
            };
            values[i] = min_max(raw, spec.min, spec.max);
        }
        Ok(EncodedVector { values, category })
    }

    pub fn encode_all(&self, records: &[RawRecord]) -> Result<Vec<EncodedVector>, DataError> {
        records.iter().map(|r| self.encode(r)).collect()
    }

    /// One line per feature: `index name kind set min max vocab`, tab separated.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# idsgan feature schema v1\n");
        out.push_str(&format!("clamp_unseen\t{}\n", self.clamp_unseen));
        for (i, f) in self.features.iter().enumerate() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{:?}\t{:?}\t{}\n",
                i + 1,
                f.name,
                f.kind.as_str(),
                f.set.as_str(),
                f.min,
                f.max,
                f.vocab.join(",")
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, DataError> {
        let bad = |msg: String| DataError::SchemaFormat(msg);
        let mut lines = text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        let clamp_line = lines.next().ok_or_else(|| bad("missing header".into()))?;
        let clamp_unseen = match clamp_line.split('\t').collect::<Vec<_>>().as_slice() {
            ["clamp_unseen", v] => v.parse::<bool>().map_err(|e| bad(e.to_string()))?,
            _ => {
                return Err(bad(format!(
                    "expected clamp_unseen line, got `{clamp_line}`"
                )))
            }
        };
        let mut features = Vec::with_capacity(NUM_FEATURES);
        for line in lines {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 7 {
                return Err(bad(format!("expected 7 columns, got {}", cols.len())));
            }
            let parse_f = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
            features.push(FeatureSpec {
                name: cols[1].to_string(),
                kind: cols[2].parse()?,
                set: cols[3].parse()?,
                min: parse_f(cols[4])?,
                max: parse_f(cols[5])?,
                vocab: if cols[6].is_empty() {
                    Vec::new()
                } else {
                    cols[6].split(',').map(str::to_string).collect()
                },
            });
        }
        if features.len() != NUM_FEATURES {
            return Err(bad(format!(
                "expected {NUM_FEATURES} features, got {}",
                features.len()
            )));
        }
        Ok(FeatureSchema {
            features,
            clamp_unseen,
        })
    }

    /// Short stable hash of the schema artifact, recorded in model manifests.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        hex::encode(&digest[..8])
    }
}

/// Stratified, seeded split of training records into an IDS half and a GAN half.
///
/// Indices of each category are shuffled independently, concatenated in
/// category order, then dealt alternately. Every category with at least two
/// records lands in both halves and the halves differ in size by at most one.
/// Returned indices are ascending.
pub fn split_indices(categories: &[AttackCategory], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut dealt = Vec::with_capacity(categories.len());
    for category in AttackCategory::ALL {
        let mut idx: Vec<usize> = categories
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == category)
            .map(|(i, _)| i)
            .collect();
        idx.shuffle(&mut rng);
        dealt.extend(idx);
    }
    let mut ids_half = Vec::with_capacity(dealt.len().div_ceil(2));
    let mut gan_half = Vec::with_capacity(dealt.len() / 2);
    for (pos, i) in dealt.into_iter().enumerate() {
        if pos % 2 == 0 {
            ids_half.push(i);
        } else {
            gan_half.push(i);
        }
    }
    ids_half.sort_unstable();
    gan_half.sort_unstable();
    (ids_half, gan_half)
}

pub fn split_train(
    records: &[RawRecord],
    seed: u64,
) -> Result<(Vec<RawRecord>, Vec<RawRecord>), DataError> {
    let categories = records
        .iter()
        .map(RawRecord::category)
        .collect::<Result<Vec<_>, _>>()?;
    let (ids, gan) = split_indices(&categories, seed);
    Ok((
        ids.into_iter().map(|i| records[i].clone()).collect(),
        gan.into_iter().map(|i| records[i].clone()).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn row(head: &[&str], label: &str, difficulty: &str) -> String {
        let mut fields: Vec<String> = head.iter().map(|s| s.to_string()).collect();
        while fields.len() < NUM_FEATURES {
            fields.push("0".to_string());
        }
        fields.push(label.to_string());
        fields.push(difficulty.to_string());
        fields.join(",")
    }

    const FIRST_KDD_ROW: &str = "0,tcp,http,SF,181,5450,0,0,0,0,0,1,0,0,0,0,0,0,0,0,0,0,8,8,0.00,0.00,0.00,0.00,1.00,0.00,0.00,9,9,1.00,0.00,0.11,0.00,0.00,0.00,0.00,0.00,normal,21";

    #[test]
    fn parses_normal_row() {
        let r = parse_record(FIRST_KDD_ROW).unwrap();
        assert_eq!(r.attack_name, "normal");
        assert_eq!(r.difficulty, 21);
        assert_eq!(r.features.len(), NUM_FEATURES);
        assert_eq!(r.features[1], "tcp");
        assert_eq!(r.features[4], "181");
    }

    #[test]
    fn parses_snmpgetattack_row() {
        let line = row(
            &["0", "udp", "other", "SF", "105", "146"],
            "snmpgetattack",
            "18",
        );
        let r = parse_record(&line).unwrap();
        assert_eq!(r.attack_name, "snmpgetattack");
        assert_eq!(r.difficulty, 18);
        assert_eq!(r.category().unwrap(), AttackCategory::R2L);
    }

    #[test]
    fn rejects_wrong_field_count() {
        let line = row(&["0", "tcp"], "normal", "21");
        let short = line.rsplit_once(',').unwrap().0;
        assert_eq!(
            parse_record(short),
            Err(DataError::FieldCount { found: 42 })
        );
        assert!(matches!(
            parse_record(&format!("{line},extra")),
            Err(DataError::FieldCount { found: 44 })
        ));
    }

    #[test]
    fn rejects_non_integer_difficulty() {
        let line = row(&["0"], "normal", "2.5");
        assert!(matches!(parse_record(&line), Err(DataError::Difficulty(_))));
    }

    #[test]
    fn taxonomy_lookups() {
        assert_eq!(map_attack("normal").unwrap(), AttackCategory::Normal);
        assert_eq!(map_attack("neptune").unwrap(), AttackCategory::DoS);
        assert_eq!(map_attack("buffer_overflow").unwrap(), AttackCategory::U2R);
        assert_eq!(map_attack("Smurf.").unwrap(), AttackCategory::DoS);
        assert_eq!(map_attack("portsweep").unwrap(), AttackCategory::Probe);
        assert!(matches!(
            map_attack("teapot"),
            Err(DataError::UnknownAttack(_))
        ));
    }

    #[test]
    fn taxonomy_is_unambiguous() {
        let mut names: Vec<_> = known_attack_names().collect();
        let n = names.len();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), n);
        // 22 KDDTrain+ attacks plus the 17 that only appear in KDDTest+
        assert_eq!(n, 1 + 39);
    }

    #[test]
    fn layout_partitions_feature_sets() {
        for (i, (_, _, set)) in FEATURE_LAYOUT.iter().enumerate() {
            let expected = match i + 1 {
                1..=9 => FeatureSet::Intrinsic,
                10..=22 => FeatureSet::Content,
                23..=31 => FeatureSet::TimeBased,
                _ => FeatureSet::HostBased,
            };
            assert_eq!(*set, expected, "feature {}", i + 1);
        }
        let multi = FEATURE_LAYOUT
            .iter()
            .filter(|f| f.1 == FeatureKind::DiscreteMulti)
            .count();
        let binary = FEATURE_LAYOUT
            .iter()
            .filter(|f| f.1 == FeatureKind::DiscreteBinary)
            .count();
        assert_eq!((multi, binary), (3, 6));
        for (name, kind, set) in FEATURE_LAYOUT {
            if kind == FeatureKind::DiscreteMulti {
                assert_eq!(set, FeatureSet::Intrinsic, "{name}");
            }
        }
    }

    fn records(lines: &[String]) -> Vec<RawRecord> {
        lines.iter().map(|l| parse_record(l).unwrap()).collect()
    }

    #[test]
    fn protocol_vocab_is_canonical() {
        let recs = records(&[
            row(&["0", "icmp", "ecr_i", "SF"], "smurf", "1"),
            row(&["0", "udp", "private", "SF"], "normal", "1"),
        ]);
        let schema = build_schema(&recs).unwrap();
        assert_eq!(schema.features[1].vocab, vec!["tcp", "udp", "icmp"]);
        assert_eq!(schema.features[2].vocab, vec!["ecr_i", "private"]);
        // icmp -> 3, udp -> 2
        assert_eq!((schema.features[1].min, schema.features[1].max), (2.0, 3.0));
    }

    #[test]
    fn src_bytes_range_matches_scan() {
        let bytes = ["181", "239", "235", "219", "217"];
        let recs = records(
            &bytes
                .iter()
                .map(|b| row(&["0", "tcp", "http", "SF", b], "normal", "21"))
                .collect::<Vec<_>>(),
        );
        let schema = build_schema(&recs).unwrap();
        let values: Vec<f64> = bytes.iter().map(|b| b.parse().unwrap()).collect();
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((schema.features[4].min, schema.features[4].max), (lo, hi));
    }

    #[test]
    fn constant_feature_has_degenerate_range_and_encodes_to_zero() {
        let recs = records(&[
            row(&["7", "tcp", "http", "SF"], "normal", "1"),
            row(&["7", "tcp", "http", "SF"], "normal", "1"),
        ]);
        let schema = build_schema(&recs).unwrap();
        assert_eq!((schema.features[0].min, schema.features[0].max), (7.0, 7.0));
        let v = schema.encode(&recs[0]).unwrap();
        assert_eq!(v.values[0], 0.0);
    }

    #[test]
    fn empty_schema_input() {
        assert_eq!(build_schema(&[]), Err(DataError::EmptyDataset));
    }

    #[test]
    fn min_max_arithmetic() {
        let recs = records(&[
            row(&["0", "tcp", "http", "SF"], "normal", "1"),
            row(&["120", "tcp", "http", "SF"], "normal", "1"),
        ]);
        let schema = build_schema(&recs).unwrap();
        let enc = |d: &str| {
            let r = parse_record(&row(&[d, "tcp", "http", "SF"], "normal", "1")).unwrap();
            schema.encode(&r).unwrap().values[0]
        };
        assert_eq!(enc("0"), 0.0);
        assert_eq!(enc("120"), 1.0);
        assert_eq!(enc("60"), 0.5);
        assert_eq!(enc("30"), 0.25);
        // out-of-range test values clamp
        assert_eq!(enc("500"), 1.0);
    }

    #[test]
    fn unseen_service_clamps_or_errors() {
        let recs = records(&[
            row(&["0", "tcp", "http", "SF"], "normal", "1"),
            row(&["0", "tcp", "ftp", "REJ"], "neptune", "1"),
        ]);
        let mut schema = build_schema(&recs).unwrap();
        let unseen = parse_record(&row(&["0", "tcp", "gopher", "SF"], "normal", "1")).unwrap();
        assert_eq!(schema.encode(&unseen).unwrap().values[2], 1.0);
        schema.clamp_unseen = false;
        assert!(matches!(
            schema.encode(&unseen),
            Err(DataError::UnknownToken { .. })
        ));
    }

    #[test]
    fn su_attempted_two_maps_to_zero() {
        let mut head = vec!["0", "tcp", "http", "SF"];
        head.resize(14, "0");
        head.push("2");
        let r = parse_record(&row(&head, "normal", "1")).unwrap();
        let schema = build_schema(std::slice::from_ref(&r)).unwrap();
        assert_eq!(schema.features[SU_ATTEMPTED].name, "su_attempted");
        assert_eq!(schema.encode(&r).unwrap().values[SU_ATTEMPTED], 0.0);
    }

    #[test]
    fn schema_text_round_trip() {
        let recs = records(&[
            row(&["3", "tcp", "http", "SF", "181", "5450"], "normal", "1"),
            row(&["0", "udp", "private", "S0", "0.1"], "neptune", "1"),
        ]);
        let schema = build_schema(&recs).unwrap();
        let text = schema.to_text();
        let back = FeatureSchema::from_text(&text).unwrap();
        assert_eq!(back, schema);
        assert_eq!(back.to_text(), text);
        assert_eq!(back.fingerprint(), schema.fingerprint());
    }

    #[test]
    fn split_sizes() {
        let cats = |n| vec![AttackCategory::Normal; n];
        let (a, b) = split_indices(&cats(10), 1);
        assert_eq!((a.len(), b.len()), (5, 5));
        let (a, b) = split_indices(&cats(11), 1);
        assert_eq!((a.len(), b.len()), (6, 5));
        assert_eq!(split_indices(&cats(11), 9), split_indices(&cats(11), 9));
    }

    #[test]
    fn split_keeps_every_category_in_both_halves() {
        let mut cats = vec![AttackCategory::Normal; 50];
        cats.extend([AttackCategory::U2R; 2]);
        cats.extend([AttackCategory::R2L; 3]);
        cats.extend([AttackCategory::DoS; 20]);
        for seed in 0..20 {
            let (a, b) = split_indices(&cats, seed);
            for c in [
                AttackCategory::U2R,
                AttackCategory::R2L,
                AttackCategory::DoS,
            ] {
                assert!(a.iter().any(|&i| cats[i] == c));
                assert!(b.iter().any(|&i| cats[i] == c));
            }
            let mut all: Vec<_> = a.iter().chain(&b).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..cats.len()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn parse_records_reports_line_number() {
        let good = row(&["0", "tcp", "http", "SF"], "normal", "21");
        let mut text = String::new();
        for _ in 0..511 {
            text.push_str(&good);
            text.push('\n');
        }
        text.push_str("0,tcp,broken\n");
        let err = parse_records(&text, "KDDTrain+.txt").unwrap_err();
        match &err {
            DataError::AtLine { line, .. } => assert_eq!(*line, 512),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains(":512:"));
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn record_strategy() -> impl Strategy<Value = RawRecord> {
        (
            0u32..5000,
            prop::sample::select(vec!["tcp", "udp", "icmp"]),
            prop::sample::select(vec!["http", "ftp", "private", "ecr_i"]),
            prop::sample::select(vec!["SF", "S0", "REJ"]),
            0.0f64..1e6,
            prop::bool::ANY,
            0.0f64..1.0,
            prop::sample::select(vec!["normal", "neptune", "satan", "rootkit"]),
        )
            .prop_map(|(dur, proto, svc, flag, bytes, logged, rate, label)| {
                let mut features = vec!["0".to_string(); NUM_FEATURES];
                features[0] = dur.to_string();
                features[1] = proto.to_string();
                features[2] = svc.to_string();
                features[3] = flag.to_string();
                features[4] = format!("{bytes}");
                features[11] = if logged { "1" } else { "0" }.to_string();
                features[24] = format!("{rate:.2}");
                RawRecord {
                    features,
                    attack_name: label.to_string(),
                    difficulty: 1,
                }
            })
    }

    proptest! {
        #[test]
        fn encoded_training_values_in_unit_interval(recs in prop::collection::vec(record_strategy(), 1..40)) {
            let schema = build_schema(&recs).unwrap();
            for r in &recs {
                let v = schema.encode(r).unwrap();
                prop_assert!(v.values.iter().all(|x| (0.0..=1.0).contains(x)));
            }
        }

        #[test]
        fn denormalize_recovers_values(recs in prop::collection::vec(record_strategy(), 2..40)) {
            let schema = build_schema(&recs).unwrap();
            for r in &recs {
                let raw = r.features.iter().map(|t| t.parse::<f64>().ok());
                let back = schema.encode(r).unwrap().denormalize(&schema);
                for (i, orig) in raw.enumerate() {
                    let spec = &schema.features[i];
                    if spec.max <= spec.min || spec.kind != FeatureKind::Continuous {
                        continue;
                    }
                    let orig = orig.unwrap();
                    prop_assert!((back[i] - orig).abs() <= 1e-9 * orig.abs().max(1.0));
                }
            }
        }

        #[test]
        fn ranges_are_order_independent(recs in prop::collection::vec(record_strategy(), 1..40), seed in 0u64..1000) {
            let a = build_schema(&recs).unwrap();
            let mut shuffled = recs.clone();
            shuffled.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
            let b = build_schema(&shuffled).unwrap();
            for (fa, fb) in a.features.iter().zip(&b.features) {
                prop_assert_eq!((fa.min, fa.max), (fb.min, fb.max));
            }
        }
    }
}
