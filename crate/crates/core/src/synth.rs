//! Synthetic records in the NSL-KDD line format.
//!
//! Used by tests, examples and the demo pipeline when the real corpus is not
//! on disk. Each category draws from its own rough traffic profile, so the
//! classes are learnable but overlap a little. Figures are not meant to match
//! those of the real dataset.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::nslkdd::{build_schema, parse_records, AttackCategory, DataError, FeatureSchema};
use crate::numcore::{seeded_rng, SeededRng};

/// Category weights in [`AttackCategory::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub records: usize,
    pub seed: u64,
    pub mix: [f64; 5],
    /// Emit a few services the training file never contains.
    pub unseen_services: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            records: 4000,
            seed: 0,
            mix: [0.45, 0.12, 0.25, 0.06, 0.12],
            unseen_services: false,
        }
    }
}

struct Row {
    f: [String; 41],
}

impl Row {
    fn new() -> Self {
        Row {
            f: std::array::from_fn(|_| "0".to_string()),
        }
    }

    fn set<T: ToString>(&mut self, feature: usize, v: T) {
        self.f[feature - 1] = v.to_string();
    }

    fn rate(&mut self, feature: usize, v: f64) {
        self.f[feature - 1] = format!("{:.2}", v.clamp(0.0, 1.0));
    }
}

fn jitter(rng: &mut SeededRng, centre: f64, spread: f64) -> f64 {
    (centre + rng.gen_range(-spread..=spread)).clamp(0.0, 1.0)
}

fn pick<'a>(rng: &mut SeededRng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).expect("non-empty")
}

fn host_block(
    row: &mut Row,
    rng: &mut SeededRng,
    count: (u32, u32),
    srv: (u32, u32),
    same: f64,
    serr: f64,
    rerr: f64,
) {
    row.set(32, rng.gen_range(count.0..=count.1));
    row.set(33, rng.gen_range(srv.0..=srv.1));
    row.rate(34, jitter(rng, same, 0.15));
    row.rate(35, jitter(rng, 1.0 - same, 0.1));
    row.rate(36, jitter(rng, 0.1, 0.1));
    row.rate(37, jitter(rng, 0.02, 0.02));
    row.rate(38, jitter(rng, serr, 0.05));
    row.rate(39, jitter(rng, serr, 0.05));
    row.rate(40, jitter(rng, rerr, 0.05));
    row.rate(41, jitter(rng, rerr, 0.05));
}

fn time_block(
    row: &mut Row,
    rng: &mut SeededRng,
    count: (u32, u32),
    serr: f64,
    rerr: f64,
    same: f64,
) {
    let c = rng.gen_range(count.0..=count.1);
    row.set(23, c);
    row.set(24, rng.gen_range(1..=c.max(1)));
    row.rate(25, jitter(rng, serr, 0.05));
    row.rate(26, jitter(rng, serr, 0.05));
    row.rate(27, jitter(rng, rerr, 0.05));
    row.rate(28, jitter(rng, rerr, 0.05));
    row.rate(29, jitter(rng, same, 0.1));
    row.rate(30, jitter(rng, 1.0 - same, 0.05));
    row.rate(31, jitter(rng, 0.05, 0.05));
}

fn normal(rng: &mut SeededRng, services: &[&str]) -> (Row, &'static str) {
    let mut r = Row::new();
    let proto = if rng.gen_bool(0.85) {
        "tcp"
    } else {
        pick(rng, &["udp", "icmp"])
    };
    r.set(
        1,
        if rng.gen_bool(0.9) {
            0
        } else {
            rng.gen_range(1..3000)
        },
    );
    r.set(2, proto);
    r.set(3, pick(rng, services));
    r.set(
        4,
        if rng.gen_bool(0.95) {
            "SF"
        } else {
            pick(rng, &["REJ", "S1", "RSTO"])
        },
    );
    r.set(5, rng.gen_range(100..3000));
    r.set(6, rng.gen_range(0..12000));
    r.set(10, rng.gen_range(0..3));
    r.set(12, (rng.gen_bool(0.8)) as u8);
    r.set(16, rng.gen_range(0..2));
    r.set(17, rng.gen_range(0..2));
    time_block(&mut r, rng, (1, 25), 0.0, 0.02, 0.95);
    host_block(&mut r, rng, (30, 255), (120, 255), 0.9, 0.01, 0.02);
    (r, "normal")
}

fn dos(rng: &mut SeededRng) -> (Row, &'static str) {
    let mut r = Row::new();
    let name = pick(rng, &["neptune", "smurf", "back", "teardrop", "pod"]);
    match name {
        "smurf" | "pod" => {
            r.set(2, "icmp");
            r.set(3, "ecr_i");
            r.set(4, "SF");
            r.set(5, if name == "smurf" { 1032 } else { 1480 });
            time_block(&mut r, rng, (300, 511), 0.0, 0.0, 1.0);
        }
        "teardrop" => {
            r.set(2, "udp");
            r.set(3, "private");
            r.set(4, "SF");
            r.set(5, 28);
            r.set(8, 1);
            time_block(&mut r, rng, (50, 200), 0.0, 0.0, 0.9);
        }
        "back" => {
            r.set(2, "tcp");
            r.set(3, "http");
            r.set(4, "SF");
            r.set(5, 54540);
            r.set(6, rng.gen_range(7000..9000));
            r.set(10, 2);
            r.set(12, 1);
            time_block(&mut r, rng, (2, 20), 0.0, 0.0, 1.0);
        }
        _ => {
            r.set(2, "tcp");
            r.set(3, pick(rng, &["private", "telnet", "ftp_data", "http"]));
            r.set(4, "S0");
            time_block(&mut r, rng, (100, 500), 1.0, 0.0, 0.05);
        }
    }
    host_block(&mut r, rng, (200, 255), (1, 30), 0.08, 0.9, 0.05);
    (r, name)
}

fn probe(rng: &mut SeededRng) -> (Row, &'static str) {
    let mut r = Row::new();
    let name = pick(rng, &["satan", "ipsweep", "portsweep", "nmap"]);
    let (proto, service) = if name == "ipsweep" {
        ("icmp", "eco_i")
    } else {
        (
            "tcp",
            pick(rng, &["private", "other", "ftp", "http", "domain"]),
        )
    };
    r.set(2, proto);
    r.set(3, service);
    r.set(4, pick(rng, &["REJ", "RSTR", "SF", "RSTOS0"]));
    r.set(5, rng.gen_range(0..20));
    time_block(&mut r, rng, (1, 10), 0.1, 0.8, 0.2);
    host_block(&mut r, rng, (1, 100), (1, 10), 0.1, 0.05, 0.8);
    for f in [35, 36] {
        r.rate(f, jitter(rng, 0.8, 0.15));
    }
    (r, name)
}

fn u2r(rng: &mut SeededRng) -> (Row, &'static str) {
    let mut r = Row::new();
    let name = pick(rng, &["buffer_overflow", "rootkit", "loadmodule", "perl"]);
    r.set(1, rng.gen_range(20..2000));
    r.set(2, "tcp");
    r.set(3, pick(rng, &["telnet", "ftp_data", "login"]));
    r.set(4, "SF");
    r.set(5, rng.gen_range(500..4000));
    r.set(6, rng.gen_range(1000..9000));
    r.set(10, rng.gen_range(1..6));
    r.set(12, 1);
    r.set(13, rng.gen_range(0..3));
    r.set(14, (rng.gen_bool(0.7)) as u8);
    r.set(16, rng.gen_range(0..4));
    r.set(17, rng.gen_range(1..6));
    r.set(18, rng.gen_range(1..4));
    time_block(&mut r, rng, (1, 4), 0.0, 0.0, 1.0);
    host_block(&mut r, rng, (1, 40), (1, 20), 0.5, 0.0, 0.0);
    (r, name)
}

fn r2l(rng: &mut SeededRng) -> (Row, &'static str) {
    let mut r = Row::new();
    let name = pick(
        rng,
        &[
            "guess_passwd",
            "warezclient",
            "ftp_write",
            "imap",
            "warezmaster",
        ],
    );
    r.set(2, "tcp");
    r.set(4, pick(rng, &["SF", "RSTO"]));
    match name {
        "guess_passwd" => {
            r.set(3, pick(rng, &["telnet", "pop_3"]));
            r.set(5, rng.gen_range(100..200));
            r.set(6, rng.gen_range(100..400));
            r.set(11, 1);
        }
        "warezclient" | "warezmaster" => {
            r.set(1, rng.gen_range(100..5000));
            r.set(3, pick(rng, &["ftp_data", "ftp"]));
            r.set(5, rng.gen_range(10000..300000));
            r.set(10, rng.gen_range(10..30));
            r.set(12, 1);
            r.set(22, 1);
        }
        _ => {
            r.set(3, pick(rng, &["ftp", "imap4", "login"]));
            r.set(5, rng.gen_range(200..2000));
            r.set(10, rng.gen_range(1..5));
            r.set(12, (rng.gen_bool(0.5)) as u8);
            r.set(17, rng.gen_range(0..3));
        }
    }
    time_block(&mut r, rng, (1, 5), 0.0, 0.1, 1.0);
    host_block(&mut r, rng, (1, 60), (1, 30), 0.4, 0.0, 0.05);
    (r, name)
}

/// `records` lines in category mix, shuffled. Deterministic in the seed.
pub fn generate_lines(cfg: &SynthConfig) -> Vec<String> {
    let mut rng = seeded_rng(cfg.seed);
    let total: f64 = cfg.mix.iter().sum();
    let mut services = vec![
        "http", "smtp", "ftp_data", "domain_u", "private", "telnet", "ftp",
    ];
    if cfg.unseen_services {
        services.extend(["gopher_x", "tftp_u"]);
    }
    let mut lines = Vec::with_capacity(cfg.records);
    for i in 0..cfg.records {
        // round-robin quotas keep every category present in small corpora
        let target = (i as f64 + 0.5) / cfg.records as f64 * total;
        let mut acc = 0.0;
        let mut cat = AttackCategory::Normal;
        for (c, w) in AttackCategory::ALL.iter().zip(cfg.mix) {
            acc += w;
            if target < acc {
                cat = *c;
                break;
            }
        }
        let (row, name) = match cat {
            AttackCategory::Normal => normal(&mut rng, &services),
            AttackCategory::Probe => probe(&mut rng),
            AttackCategory::DoS => dos(&mut rng),
            AttackCategory::U2R => u2r(&mut rng),
            AttackCategory::R2L => r2l(&mut rng),
        };
        let mut line = row.f.join(",");
        write!(line, ",{name},{}", rng.gen_range(5..22)).expect("string write");
        lines.push(line);
    }
    lines.shuffle(&mut rng);
    lines
}

pub fn generate_text(cfg: &SynthConfig) -> String {
    let mut s = generate_lines(cfg).join("\n");
    s.push('\n');
    s
}

/// Writes `KDDTrain+.txt` and `KDDTest+.txt` into `dir`.
pub fn write_corpus(dir: &Path, train: &SynthConfig, test: &SynthConfig) -> Result<(), DataError> {
    std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    for (name, cfg) in [("KDDTrain+.txt", train), ("KDDTest+.txt", test)] {
        let path = dir.join(name);
        std::fs::write(&path, generate_text(cfg)).map_err(|e| DataError::io(&path, e))?;
    }
    Ok(())
}

/// Schema fitted on a small fixed synthetic corpus.
pub fn toy_schema() -> FeatureSchema {
    let text = generate_text(&SynthConfig {
        records: 300,
        seed: 7,
        ..SynthConfig::default()
    });
    build_schema(&parse_records(&text, "synthetic").expect("synthetic lines parse"))
        .expect("non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nslkdd::{parse_record, FeatureKind};

    #[test]
    fn lines_parse_and_cover_all_categories() {
        let lines = generate_lines(&SynthConfig {
            records: 500,
            ..SynthConfig::default()
        });
        assert_eq!(lines.len(), 500);
        let mut seen = [0usize; 5];
        for l in &lines {
            let r = parse_record(l).unwrap();
            let c = r.category().unwrap();
            seen[AttackCategory::ALL.iter().position(|x| *x == c).unwrap()] += 1;
        }
        assert!(seen.iter().all(|n| *n > 0), "{seen:?}");
    }

    #[test]
    fn generation_is_seeded() {
        let a = SynthConfig::default();
        assert_eq!(generate_lines(&a), generate_lines(&a));
        assert_ne!(
            generate_lines(&a),
            generate_lines(&SynthConfig { seed: 1, ..a })
        );
    }

    #[test]
    fn toy_schema_has_vocabularies_and_ranges() {
        let s = toy_schema();
        assert_eq!(s.features[1].vocab, vec!["tcp", "udp", "icmp"]);
        assert!(s.features[2].vocab.len() > 5);
        assert!(s
            .features
            .iter()
            .filter(|f| f.kind == FeatureKind::Continuous)
            .any(|f| f.max > f.min));
    }
}
