use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gareg_core::report::parse_record;
use gareg_core::synth::{make_pair, PairSpec, TRIAL_CSV_HEADER};
use gareg_core::{EulerAngles, SearchMode};

fn gareg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gareg"))
        .args(args)
        .output()
        .expect("running gareg")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a small benchmark pair and returns (source, target) paths.
fn small_pair(dir: &Path) -> (PathBuf, PathBuf) {
    let source = dir.join("a.xyz");
    let target = dir.join("b.ply");
    let out = gareg(&["synth", "--seed", "3", "--points", "1200", "--source", s(&source), "--target", s(&target)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (source, target)
}

const QUICK: [&str; 6] = ["--coarse-gens", "15", "--fine-gens", "15", "--downsample", "300"];

#[test]
fn register_twice_gives_identical_records() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = small_pair(dir.path());
    let mut records = Vec::new();
    for (i, threads) in ["1", "3"].iter().enumerate() {
        let out_path = dir.path().join(format!("r{i}.toml"));
        let mut args = vec!["register", s(&a), s(&b), "--seed", "7", "--threads", threads, "-o", s(&out_path)];
        args.extend(QUICK);
        let out = gareg(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        records.push(std::fs::read(&out_path).unwrap());
        let timing = std::fs::read_to_string(dir.path().join(format!("r{i}.toml.timing.toml"))).unwrap();
        assert!(timing.contains("wall_time_s"));
    }
    assert_eq!(records[0], records[1]);
    let (result, manifest) = parse_record(std::str::from_utf8(&records[0]).unwrap()).unwrap();
    assert_eq!(result.seed, 7);
    assert_eq!(manifest.unwrap().inputs.len(), 2);
}

#[test]
fn known_rotation_selects_reduced_mode() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = small_pair(dir.path());
    let trace = dir.path().join("trace.csv");
    let moved = dir.path().join("moved.xyz");
    let mut args = vec![
        "register", s(&a), s(&b), "--known-rotation", "0", "57", "3",
        "--trace", s(&trace), "--transformed", s(&moved),
    ];
    args.extend(QUICK);
    let out = gareg(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (result, _) = parse_record(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(result.mode, SearchMode::ReducedTranslationOnly(EulerAngles::new(0.0, 57.0, 3.0)));
    assert_eq!(result.motion.rotation, EulerAngles::new(0.0, 57.0, 3.0));
    let trace = std::fs::read_to_string(trace).unwrap();
    // Header, then generation 0 and 15 more for each stage.
    assert_eq!(trace.lines().filter(|l| l.starts_with("coarse,")).count(), 16);
    assert!(trace.lines().filter(|l| l.starts_with("fine,")).count() >= 2);
    let source_lines = std::fs::read_to_string(&a).unwrap().lines().count();
    assert_eq!(std::fs::read_to_string(moved).unwrap().lines().count(), source_lines);
}

#[test]
fn csv_row() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = small_pair(dir.path());
    let mut args = vec!["register", s(&a), s(&b), "--csv", "--fitness", "median"];
    args.extend(QUICK);
    let out = gareg(&args);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("mode,x,y,z,alpha,beta,psi,overlap_percent"));
    assert!(lines[1].starts_with("full,"));
}

#[test]
fn missing_input_names_the_path() {
    let out = gareg(&["register", "/nonexistent/a.xyz", "/nonexistent/b.xyz"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("gareg: error[io]: /nonexistent/a.xyz"), "{err}");
}

#[test]
fn usage_errors() {
    assert_eq!(gareg(&[]).status.code(), Some(2));
    assert_eq!(gareg(&["bench"]).status.code(), Some(2), "bench needs --seed");
    assert_eq!(gareg(&["register", "a", "b", "--fitness", "mode"]).status.code(), Some(2));
    let out = gareg(&["register", "a", "b", "--threads", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(gareg(&["--help"]).status.code(), Some(0));
}

#[test]
fn ground_truth_identity_and_synthetic() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = dir.path().join("c.xyz");
    std::fs::write(&cloud, "0 0 0\n10 0 0\n0 10 0\n0 0 10\n5 5 1\n").unwrap();
    let marks = dir.path().join("m.txt");
    std::fs::write(&marks, "0 0 0 0 0 0\n10 0 0 10 0 0\n0 10 0 0 10 0\n").unwrap();
    let out = gareg(&["ground-truth", s(&cloud), s(&cloud), s(&marks)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: toml::Table = String::from_utf8(out.stdout).unwrap().parse().unwrap();
    assert!(doc["rms"].as_float().unwrap() < 1e-9);
    let refined = doc["refined"].as_table().unwrap();
    for key in ["x", "y", "z", "alpha", "beta", "psi"] {
        assert!(refined[key].as_float().unwrap().abs() < 1e-9, "{key}");
    }

    // Noiseless synthetic pair with exact marks.
    let (a, b, truth, corr) = (dir.path().join("s.xyz"), dir.path().join("t.xyz"), dir.path().join("gt.toml"), dir.path().join("corr.txt"));
    let out = gareg(&[
        "synth", "--seed", "4", "--points", "1500", "--noise", "0", "--overlap", "1", "--source", s(&a), "--target", s(&b),
        "--truth", s(&truth), "--correspondences", s(&corr),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let gt_out = dir.path().join("gt_out.toml");
    assert!(gareg(&["ground-truth", s(&a), s(&b), s(&corr), "-o", s(&gt_out)]).status.success());
    let doc: toml::Table = std::fs::read_to_string(gt_out).unwrap().parse().unwrap();
    let mut spec = PairSpec::benchmark(4).unwrap();
    spec.surface.point_count = 1500;
    spec.noise_sigma = 0.0;
    spec.overlap_fraction = 1.0;
    let expected = make_pair(&spec).unwrap().ground_truth;
    let refined = doc["refined"].as_table().unwrap();
    let t = expected.translation;
    let r = expected.rotation;
    for (key, want) in [("x", t.x), ("y", t.y), ("z", t.z), ("alpha", r.alpha), ("beta", r.beta), ("psi", r.psi)] {
        let got = refined[key].as_float().unwrap();
        assert!((got - want).abs() < 1e-6, "{key}: {got} vs {want}");
    }
}

#[test]
fn ground_truth_rejects_two_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = dir.path().join("c.xyz");
    std::fs::write(&cloud, "0 0 0\n1 0 0\n0 1 0\n").unwrap();
    let marks = dir.path().join("m.txt");
    std::fs::write(&marks, "0 0 0 0 0 0\n1 0 0 1 0 0\n").unwrap();
    let out = gareg(&["ground-truth", s(&cloud), s(&cloud), s(&marks)]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("gareg: error[degenerate]: too few"));
}

fn parse_trials(text: &str) -> Vec<(String, [f64; 3])> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(TRIAL_CSV_HEADER));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), [f[2], f[3], f[4]].map(|v| v.parse::<f64>().unwrap()))
        })
        .collect()
}

#[test]
fn bench_summary_matches_trials() {
    let dir = tempfile::tempdir().unwrap();
    let trials = dir.path().join("trials.csv");
    let mut args = vec!["bench", "--seed", "5", "--repeats", "2", "--points", "1000", "--trials", s(&trials)];
    args.extend(QUICK);
    let out = gareg(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    let trials = parse_trials(&std::fs::read_to_string(trials).unwrap());
    assert_eq!(trials.len(), 4);
    for row in rows {
        let f: Vec<&str> = row.split_whitespace().collect();
        let mode = f[0];
        let mine: Vec<_> = trials.iter().filter(|t| t.0 == mode).collect();
        assert_eq!(f[1].parse::<usize>().unwrap(), mine.len());
        for axis in 0..3 {
            let mean = mine.iter().map(|t| t.1[axis].abs()).sum::<f64>() / mine.len() as f64;
            let shown: f64 = f[2 + axis].parse().unwrap();
            assert!((shown - mean).abs() <= 5e-4, "{mode} axis {axis}: {shown} vs {mean}");
        }
    }
}

#[test]
fn bench_single_repeat_has_one_row_per_mode() {
    let dir = tempfile::tempdir().unwrap();
    let trials = dir.path().join("trials.csv");
    let mut args = vec!["bench", "--seed", "1", "--repeats", "1", "--points", "800", "--modes", "reduced", "--trials", s(&trials)];
    args.extend(QUICK);
    assert!(gareg(&args).status.success());
    assert_eq!(parse_trials(&std::fs::read_to_string(trials).unwrap()).len(), 1);
}
