//! Deterministic synthetic flow generator.
//!
//! Each class draws every feature from a stationary AR(1) process
//! `x_t = μ + ρ (x_{t-1} - μ) + σ √(1 - ρ²) ε_t`, so its marginal has mean `μ` and
//! standard deviation `σ` (the profile's `spread`) while consecutive rows of the
//! same class are correlated. Rows are emitted in single-class bursts of random
//! length; each class keeps its own process state across bursts.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DatasetSchema, FeatureKind, FlowRecord, SchemaKind};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("class {0:?} is not part of the schema")]
    UnknownClass(String),
    #[error("no profile for class {0:?}")]
    MissingProfile(String),
    #[error("profile for class {class:?} does not cover feature {feature:?}")]
    MissingFeature { class: String, feature: String },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("cannot parse profile file: {0}")]
    Parse(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureProfile {
    pub mean: f64,
    pub spread: f64,
    /// AR(1) coefficient, `0 <= rho < 1`.
    #[serde(default)]
    pub rho: f64,
    /// Round to a non-negative integer on output (ports, counts, TTLs).
    #[serde(default)]
    pub integer: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub name: String,
    pub features: BTreeMap<String, FeatureProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSet {
    /// Shortest single-class run of consecutive rows.
    pub burst_min: usize,
    pub burst_max: usize,
    #[serde(rename = "class")]
    pub classes: Vec<ClassProfile>,
}

const DEFAULT_BURST: (usize, usize) = (20, 80);

/// `(base, step, integer)` per feature; class means sit at `base + level * step`
/// with spread `step / 8`, so distinct levels are 8 spreads apart.
fn feature_scales(kind: SchemaKind) -> Vec<(f64, f64, bool)> {
    match kind {
        SchemaKind::UnswNb15 => vec![
            (2_938_023_936.0, 160.0, true), // srcip, 175.45.176.0
            (1_000.0, 4_000.0, true),       // sport
            (2_465_925_120.0, 160.0, true), // dstip, 146.251.0.0
            (1_000.0, 4_000.0, true),       // dsport
            (0.01, 0.5, false),             // dur
            (200.0, 1_500.0, true),         // sbytes
            (200.0, 1_500.0, true),         // dbytes
            (30.0, 20.0, true),             // sttl
            (29.0, 20.0, true),             // dttl
            (1e4, 5e5, false),              // sload
            (1e4, 5e5, false),              // dload
            (2.0, 10.0, true),              // spkts
            (2.0, 10.0, true),              // dpkts
        ],
        SchemaKind::BotIot => vec![
            (40.0, 40.0, false),        // rate
            (30.0, 30.0, false),        // srate
            (2.0, 2.0, false),          // drate
            (1.0, 1.0, false),          // min
            (4.0, 4.0, false),          // max
            (2.0, 2.0, false),          // mean
            (0.5, 0.5, false),          // std_dev
            (8.0, 8.0, true),           // state_number
            (8.0, 8.0, true),           // flgs_number
            (10_000.0, 20_000.0, true), // seq
        ],
        SchemaKind::Custom => Vec::new(),
    }
}

impl ProfileSet {
    /// Every class well separated: on every feature, distinct classes sit at least
    /// eight spreads apart.
    pub fn separated(schema: &DatasetSchema) -> Self {
        let scales = Self::scales_for(schema);
        let k = schema.num_classes();
        let classes = schema
            .class_names
            .iter()
            .enumerate()
            .map(|(c, name)| ClassProfile {
                name: name.clone(),
                features: schema
                    .feature_columns
                    .iter()
                    .zip(&scales)
                    .enumerate()
                    .map(|(j, (col, &(base, step, integer)))| {
                        let level = ((c + j) % k) as f64;
                        (
                            col.name.clone(),
                            FeatureProfile {
                                mean: base + level * step,
                                spread: step / 8.0,
                                rho: 0.3 + 0.5 * (c as f64 / k as f64),
                                integer,
                            },
                        )
                    })
                    .collect(),
            })
            .collect();
        Self {
            burst_min: DEFAULT_BURST.0,
            burst_max: DEFAULT_BURST.1,
            classes,
        }
    }

    /// Separated profiles except that the second and third classes (DDoS/DoS on
    /// Bot-IoT, Exploits/Reconnaissance on UNSW-NB15) overlap: the third shares the
    /// second's means shifted by one spread, so some confusion between them is expected.
    pub fn with_overlap(schema: &DatasetSchema) -> Self {
        let mut set = Self::separated(schema);
        if set.classes.len() >= 3 {
            let template = set.classes[1].features.clone();
            set.classes[2].features = template
                .into_iter()
                .map(|(name, mut f)| {
                    f.mean += f.spread;
                    (name, f)
                })
                .collect();
        }
        set
    }

    /// Two classes with identical marginals that differ only in temporal structure:
    /// `smooth` is strongly autocorrelated (ρ = 0.95), `rough` is white noise.
    pub fn temporal_only(schema: &DatasetSchema, smooth: &str, rough: &str) -> Self {
        let scales = Self::scales_for(schema);
        let make = |name: &str, rho: f64| ClassProfile {
            name: name.to_string(),
            features: schema
                .feature_columns
                .iter()
                .zip(&scales)
                .map(|(col, &(base, step, _))| {
                    (
                        col.name.clone(),
                        FeatureProfile {
                            mean: base + 4.0 * step,
                            spread: step,
                            rho,
                            integer: false,
                        },
                    )
                })
                .collect(),
        };
        Self {
            burst_min: DEFAULT_BURST.0,
            burst_max: DEFAULT_BURST.1,
            classes: vec![make(smooth, 0.95), make(rough, 0.0)],
        }
    }

    fn scales_for(schema: &DatasetSchema) -> Vec<(f64, f64, bool)> {
        let builtin = feature_scales(schema.name);
        if builtin.len() == schema.num_features() {
            builtin
        } else {
            vec![(0.0, 1.0, false); schema.num_features()]
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        toml::from_str(text).map_err(|e| SynthError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("profile sets serialize")
    }

    pub fn profile(&self, class: &str) -> Option<&ClassProfile> {
        self.classes.iter().find(|p| p.name.eq_ignore_ascii_case(class))
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.burst_min == 0 || self.burst_max < self.burst_min {
            return Err(SynthError::InvalidProfile(format!(
                "burst range [{}, {}] is empty",
                self.burst_min, self.burst_max
            )));
        }
        for class in &self.classes {
            for (name, f) in &class.features {
                let ok = f.mean.is_finite() && f.spread.is_finite() && f.spread >= 0.0 && (0.0..1.0).contains(&f.rho);
                if !ok {
                    return Err(SynthError::InvalidProfile(format!(
                        "{}/{name}: need finite mean, spread >= 0 and 0 <= rho < 1, got {f:?}",
                        class.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Output of [`generate`]: the records and their CSV rendering.
#[derive(Debug, Clone)]
pub struct Generated {
    pub records: Vec<FlowRecord>,
    pub csv: Vec<u8>,
}

fn format_value(v: f64, kind: FeatureKind, integer: bool) -> String {
    match kind {
        FeatureKind::Ipv4 => Ipv4Addr::from(v.round().clamp(0.0, f64::from(u32::MAX)) as u32).to_string(),
        FeatureKind::Numeric if integer => format!("{}", v.round().max(0.0) as i64),
        FeatureKind::Numeric => format!("{v:.6}"),
    }
}

/// Generates `counts[class]` rows per class. Deterministic per `seed`.
pub fn generate(
    schema: &DatasetSchema,
    profiles: &ProfileSet,
    counts: &[(String, usize)],
    seed: u64,
) -> Result<Generated, SynthError> {
    profiles.validate()?;
    // (class name as in schema, profile features in schema column order, remaining)
    let mut plan = Vec::new();
    for (name, count) in counts {
        let idx = schema
            .encode_label(name)
            .ok_or_else(|| SynthError::UnknownClass(name.clone()))?;
        let canonical = schema.class_names[idx].clone();
        if *count == 0 {
            continue;
        }
        let profile = profiles
            .profile(&canonical)
            .ok_or_else(|| SynthError::MissingProfile(canonical.clone()))?;
        let features = schema
            .feature_columns
            .iter()
            .map(|col| {
                profile
                    .features
                    .get(&col.name)
                    .copied()
                    .ok_or_else(|| SynthError::MissingFeature {
                        class: canonical.clone(),
                        feature: col.name.clone(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        plan.push((canonical, features, *count));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // stationary start
    let mut state: Vec<Vec<f64>> = plan
        .iter()
        .map(|(_, feats, _)| {
            feats
                .iter()
                .map(|f| f.mean + f.spread * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let mut first = vec![true; plan.len()];

    let mut out = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = schema
        .feature_names()
        .into_iter()
        .chain(std::iter::once(schema.label_column.as_str()))
        .collect();
    out.write_record(&header).expect("write to memory");

    let mut records = Vec::new();
    let mut remaining: usize = plan.iter().map(|p| p.2).sum();
    while remaining > 0 {
        // choose a class with probability proportional to what it still owes
        let mut pick = rng.gen_range(0..remaining);
        let c = plan
            .iter()
            .position(|p| {
                if pick < p.2 {
                    true
                } else {
                    pick -= p.2;
                    false
                }
            })
            .expect("remaining > 0");
        let burst = rng.gen_range(profiles.burst_min..=profiles.burst_max).min(plan[c].2);
        for _ in 0..burst {
            let feats = &plan[c].1;
            if !first[c] {
                for (x, f) in state[c].iter_mut().zip(feats) {
                    let eps: f64 = rng.sample(StandardNormal);
                    *x = f.mean + f.rho * (*x - f.mean) + f.spread * (1.0 - f.rho * f.rho).sqrt() * eps;
                }
            }
            first[c] = false;
            let mut raw = BTreeMap::new();
            let mut row = Vec::with_capacity(header.len());
            for ((col, f), &x) in schema.feature_columns.iter().zip(feats).zip(&state[c]) {
                let s = format_value(x, col.kind, f.integer);
                row.push(s.clone());
                raw.insert(col.name.clone(), s);
            }
            row.push(plan[c].0.clone());
            out.write_record(&row).expect("write to memory");
            records.push(FlowRecord {
                raw,
                label: plan[c].0.clone(),
            });
        }
        plan[c].2 -= burst;
        remaining -= burst;
    }
    let csv = out.into_inner().expect("flush to memory");
    Ok(Generated { records, csv })
}

pub fn generate_to_file(
    path: &Path,
    schema: &DatasetSchema,
    profiles: &ProfileSet,
    counts: &[(String, usize)],
    seed: u64,
) -> Result<Generated, SynthError> {
    let generated = generate(schema, profiles, counts, seed)?;
    crate::container::write_atomic(path, &generated.csv).map_err(|source| SynthError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(generated)
}

/// Parses `Normal=1000,DDoS=1000`.
pub fn parse_counts(spec: &str) -> Result<Vec<(String, usize)>, SynthError> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (name, n) = item
                .split_once('=')
                .ok_or_else(|| SynthError::Parse(format!("expected CLASS=COUNT, got {item:?}")))?;
            let n = n
                .trim()
                .parse::<usize>()
                .map_err(|e| SynthError::Parse(format!("count for {name}: {e}")))?;
            Ok((name.trim().to_string(), n))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ingest_reader, numerize};

    fn counts(pairs: &[(&str, usize)]) -> Vec<(String, usize)> {
        pairs.iter().map(|(n, c)| (n.to_string(), *c)).collect()
    }

    #[test]
    fn zero_counts_give_header_only() {
        let schema = DatasetSchema::bot_iot();
        let g = generate(&schema, &ProfileSet::separated(&schema), &counts(&[("Normal", 0), ("DoS", 0)]), 1).unwrap();
        assert!(g.records.is_empty());
        let text = String::from_utf8(g.csv).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("rate,srate,drate"));
        assert!(text.trim_end().ends_with("category"));
    }

    #[test]
    fn same_seed_same_bytes() {
        let schema = DatasetSchema::unsw_nb15();
        let p = ProfileSet::with_overlap(&schema);
        let c = counts(&[("Normal", 300), ("Worms", 50), ("Exploits", 120)]);
        let a = generate(&schema, &p, &c, 7).unwrap();
        let b = generate(&schema, &p, &c, 7).unwrap();
        let d = generate(&schema, &p, &c, 8).unwrap();
        assert_eq!(a.csv, b.csv);
        assert_ne!(a.csv, d.csv);
    }

    #[test]
    fn output_ingests_back_to_identical_records() {
        for schema in [DatasetSchema::unsw_nb15(), DatasetSchema::bot_iot()] {
            let c: Vec<(String, usize)> = schema.class_names.iter().map(|n| (n.clone(), 40)).collect();
            let g = generate(&schema, &ProfileSet::with_overlap(&schema), &c, 3).unwrap();
            let back = ingest_reader(g.csv.as_slice(), &schema).unwrap();
            assert_eq!(back.records, g.records);
            assert!(back.diagnostics.is_empty());
            let num = numerize(&back.records, &schema).unwrap();
            assert_eq!(num.report.dropped(), 0);
            assert_eq!(num.features.rows(), 40 * schema.num_classes());
            for (k, name) in schema.class_names.iter().enumerate() {
                assert_eq!(num.labels.iter().filter(|&&l| l == k).count(), 40, "{name}");
            }
        }
    }

    #[test]
    fn class_means_converge() {
        let schema = DatasetSchema::bot_iot();
        let p = ProfileSet::separated(&schema);
        let n = 4000;
        let g = generate(&schema, &p, &counts(&[("DDoS", n)]), 11).unwrap();
        let prof = p.profile("DDoS").unwrap();
        for col in schema.feature_columns.iter().filter(|c| !prof.features[&c.name].integer) {
            let f = prof.features[&col.name];
            let mean = g.records.iter().map(|r| r.get(&col.name).unwrap().parse::<f64>().unwrap()).sum::<f64>() / n as f64;
            // AR(1) inflates the variance of the sample mean by (1 + rho) / (1 - rho)
            let inflation = ((1.0 + f.rho) / (1.0 - f.rho)).sqrt();
            assert!(
                (mean - f.mean).abs() < 4.0 * inflation * f.spread / (n as f64).sqrt(),
                "{}: {mean} vs {}",
                col.name,
                f.mean
            );
        }
    }

    #[test]
    fn labels_only_from_requested_classes() {
        let schema = DatasetSchema::bot_iot();
        let g = generate(&schema, &ProfileSet::separated(&schema), &counts(&[("Theft", 30), ("Normal", 70)]), 0).unwrap();
        assert!(g.records.iter().all(|r| r.label == "Theft" || r.label == "Normal"));
        assert_eq!(g.records.iter().filter(|r| r.label == "Theft").count(), 30);
    }

    #[test]
    fn unknown_class_is_rejected() {
        let schema = DatasetSchema::bot_iot();
        let err = generate(&schema, &ProfileSet::separated(&schema), &counts(&[("Mirai", 5)]), 0).unwrap_err();
        assert!(matches!(err, SynthError::UnknownClass(c) if c == "Mirai"));
        let p = ProfileSet::temporal_only(&schema, "Normal", "DDoS");
        assert!(matches!(generate(&schema, &p, &counts(&[("Theft", 5)]), 0), Err(SynthError::MissingProfile(_))));
    }

    #[test]
    fn separated_profiles_are_far_apart() {
        for schema in [DatasetSchema::unsw_nb15(), DatasetSchema::bot_iot()] {
            let p = ProfileSet::separated(&schema);
            for a in &p.classes {
                for b in &p.classes {
                    if a.name == b.name {
                        continue;
                    }
                    for (name, fa) in &a.features {
                        let fb = b.features[name];
                        assert!((fa.mean - fb.mean).abs() >= 6.0 * fa.spread.max(fb.spread));
                    }
                }
            }
        }
    }

    #[test]
    fn profile_file_round_trip() {
        let schema = DatasetSchema::bot_iot();
        let p = ProfileSet::with_overlap(&schema);
        assert_eq!(ProfileSet::from_toml(&p.to_toml()).unwrap(), p);
        let mut bad = p.clone();
        bad.classes[0].features.get_mut("rate").unwrap().rho = 1.0;
        assert!(generate(&schema, &bad, &counts(&[("Normal", 1)]), 0).is_err());
    }

    #[test]
    fn counts_parse() {
        assert_eq!(parse_counts("Normal=1000, DDoS=2").unwrap(), counts(&[("Normal", 1000), ("DDoS", 2)]));
        assert!(parse_counts("Normal").is_err());
        assert!(parse_counts("Normal=x").is_err());
    }
}
