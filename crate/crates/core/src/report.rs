//! Result records, tabular rows, fitness traces and run manifests.
//!
//! A result record is a TOML document holding the run manifest (when known)
//! and the registration result. Wall time is kept out of the record; it is
//! written as its own small document so records from identical runs compare
//! byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ga::FitnessTrace;
use crate::pipeline::{RegistrationConfig, RegistrationResult, Timing};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

impl InputFile {
    pub fn hash(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

/// Everything that determines a run's result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool_version: String,
    pub inputs: Vec<InputFile>,
    pub config: RegistrationConfig,
}

impl RunManifest {
    pub fn new(inputs: &[&Path], config: &RegistrationConfig) -> Result<Self> {
        Ok(Self {
            tool_version: TOOL_VERSION.to_string(),
            inputs: inputs.iter().map(|p| InputFile::hash(p)).collect::<Result<_>>()?,
            config: config.clone(),
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    manifest: Option<RunManifest>,
    result: RegistrationResult,
}

#[derive(Serialize)]
struct TimingRef<'a> {
    timing: &'a Timing,
}

#[derive(Deserialize)]
struct TimingDocument {
    timing: Timing,
}

fn record_error(text: &str, err: toml::de::Error) -> Error {
    let (line, column) = match err.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            (line, column)
        }
        None => (0, 0),
    };
    Error::Parse {
        path: "<record>".into(),
        line,
        column,
        message: err.message().to_string(),
    }
}

fn to_toml<T: Serialize>(value: &T) -> String {
    // Every field is a plain number, string or table; serialization cannot fail.
    toml::to_string(value).expect("record types serialize to TOML")
}

/// The deterministic payload: manifest plus result, wall time omitted.
pub fn format_record(result: &RegistrationResult, manifest: Option<&RunManifest>) -> String {
    let mut result = result.clone();
    result.timing = Timing::default();
    to_toml(&RecordDocument {
        manifest: manifest.cloned(),
        result,
    })
}

/// Parses a record; the returned result carries zero timing.
pub fn parse_record(text: &str) -> Result<(RegistrationResult, Option<RunManifest>)> {
    let doc: RecordDocument = toml::from_str(text).map_err(|e| record_error(text, e))?;
    Ok((doc.result, doc.manifest))
}

pub fn format_timing(timing: &Timing) -> String {
    to_toml(&TimingRef { timing })
}

pub fn parse_timing(text: &str) -> Result<Timing> {
    let doc: TimingDocument = toml::from_str(text).map_err(|e| record_error(text, e))?;
    Ok(doc.timing)
}

pub const RESULT_CSV_HEADER: &str =
    "mode,x,y,z,alpha,beta,psi,overlap_percent,fitness,generations,seed";

/// One row in the layout of the paper's per-view result tables.
pub fn result_csv_row(result: &RegistrationResult) -> String {
    let m = &result.motion;
    let t = m.translation;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        result.mode.label(),
        t.x,
        t.y,
        t.z,
        m.rotation.alpha,
        m.rotation.beta,
        m.rotation.psi,
        result.fitness.overlap_percent,
        result.fitness.score,
        result.generations.total,
        result.seed
    )
}

pub const TRACE_CSV_HEADER: &str = "stage,generation,best_fitness,x,y,z,alpha,beta,psi";

/// Per-generation best individual of both stages.
pub fn trace_csv(coarse: &FitnessTrace, fine: &FitnessTrace) -> String {
    let mut out = String::from(TRACE_CSV_HEADER);
    out.push('\n');
    for (stage, trace) in [("coarse", coarse), ("fine", fine)] {
        for e in &trace.entries {
            let g = &e.best.genes;
            let _ = writeln!(
                out,
                "{stage},{},{},{},{},{},{},{},{}",
                e.generation, e.best_fitness, g[0], g[1], g[2], g[3], g[4], g[5]
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitness::FitnessKind;
    use crate::ga::SearchMode;
    use crate::geometry::{EulerAngles, RigidMotion};
    use crate::pipeline::{FitnessSummary, GenerationsUsed};
    use nalgebra::Vector3;

    fn sample() -> RegistrationResult {
        let mut config = RegistrationConfig::default();
        config.overlap_threshold = Some(1.5);
        config.ga.seed = 9;
        RegistrationResult {
            seed: 9,
            mode: SearchMode::ReducedTranslationOnly(EulerAngles::new(0.0, 57.0, 3.0)),
            motion: RigidMotion::new(
                EulerAngles::new(0.1, 57.0, 3.0),
                Vector3::new(1.0 / 3.0, -2.5e-9, 1e7),
            ),
            fitness: FitnessSummary {
                kind: FitnessKind::MedianDistance,
                score: 0.123456789,
                overlap_percent: 48.25,
                overlap_threshold: 1.5,
                points: 2000,
            },
            generations: GenerationsUsed {
                coarse: 250,
                fine: 40,
                total: 290,
            },
            config,
            timing: Timing {
                wall_time_s: 12.5,
                coarse_s: 10.0,
                fine_s: 2.5,
            },
        }
    }

    #[test]
    fn record_round_trip_without_timing() {
        let r = sample();
        let text = format_record(&r, None);
        assert!(!text.contains("wall_time"));
        let (back, manifest) = parse_record(&text).unwrap();
        assert!(manifest.is_none());
        let mut expected = r.clone();
        expected.timing = Timing::default();
        assert_eq!(back, expected);
        assert_eq!(format_record(&back, None), text);
    }

    #[test]
    fn record_with_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.xyz");
        std::fs::write(&path, "abc").unwrap();
        let r = sample();
        let manifest = RunManifest::new(&[&path], &r.config).unwrap();
        assert_eq!(
            manifest.inputs[0].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let (back, m) = parse_record(&format_record(&r, Some(&manifest))).unwrap();
        assert_eq!(m, Some(manifest));
        assert_eq!(back.motion, r.motion);
    }

    #[test]
    fn timing_round_trip() {
        let t = sample().timing;
        assert_eq!(parse_timing(&format_timing(&t)).unwrap(), t);
    }

    #[test]
    fn malformed_record_reports_position() {
        let text = format_record(&sample(), None).replace("seed = 9", "seed = nine");
        match parse_record(&text) {
            Err(Error::Parse { line, column, .. }) => {
                assert!(line > 1);
                assert!(column >= 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_row_matches_header() {
        let row = result_csv_row(&sample());
        assert_eq!(row.split(',').count(), RESULT_CSV_HEADER.split(',').count());
        assert!(row.starts_with("reduced,"));
    }
}
