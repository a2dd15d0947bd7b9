//! End-to-end runs of the command-line binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use biodecode_cli::manifest::MANIFEST_FILE;

fn biodecode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biodecode")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = biodecode(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(args: &[&str]) -> i32 {
    biodecode(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file under `dir`, relative, with its bytes.
fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE)).unwrap()).unwrap()
}

const SMALL: &str = "subjects = 1\ntrials = 3\nsessions = MI\ntransitions = sit_to_stand\n";

#[test]
fn synth_is_byte_identical_for_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "synth.cfg", SMALL);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    ok(&["synth", "--config", s(&cfg), "--seed", "5", "--out", s(&a)]);
    ok(&["synth", "--config", s(&cfg), "--seed", "5", "--out", s(&b)]);
    ok(&["synth", "--config", s(&cfg), "--seed", "6", "--out", s(&c)]);
    let ta = tree(&a);
    assert!(ta.iter().any(|(p, _)| p.ends_with("eeg/data.f32")));
    assert!(ta.iter().any(|(p, _)| p.ends_with("truth.json")));
    assert_eq!(ta, tree(&b));
    assert_ne!(ta, tree(&c));
}

#[test]
fn report_on_empty_input_fails_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let out = tmp.path().join("report");
    let result = biodecode(&["report", "--input", s(&empty), "--out", s(&out)]);
    assert!(!result.status.success());
    assert!(String::from_utf8_lossy(&result.stderr).contains("error[empty-input]"));
    assert!(!out.exists() || fs::read_dir(&out).unwrap().next().is_none());
}

#[test]
fn error_categories_have_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "synth.cfg", SMALL);
    let data = tmp.path().join("data");
    ok(&["synth", "--config", s(&cfg), "--seed", "1", "--out", s(&data)]);
    let rec = data.join("S01/MI/sit_to_stand");
    let out = tmp.path().join("out");

    let missing = code(&["preprocess", "--input", s(&tmp.path().join("nowhere")), "--out", s(&out)]);

    let broken = tmp.path().join("broken");
    fs::create_dir_all(broken.join("eeg")).unwrap();
    for f in ["header.json", "data.f32", "events.csv"] {
        fs::copy(rec.join("eeg").join(f), broken.join("eeg").join(f)).unwrap();
    }
    fs::write(broken.join("eeg/data.f32"), [0u8; 16]).unwrap();
    let schema = code(&["preprocess", "--input", s(&broken), "--out", s(&out)]);

    let bad_cfg = write_config(tmp.path(), "bad.cfg", "no_such_key = 1\n");
    let unknown_key = code(&["preprocess", "--config", s(&bad_cfg), "--input", s(&rec), "--out", s(&out)]);
    let config = code(&["preprocess", "--session", "ME", "--input", s(&rec), "--out", s(&out)]);

    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let empty_code = code(&["report", "--input", s(&empty), "--out", s(&out)]);

    let codes = [missing, schema, config, empty_code];
    assert!(codes.iter().all(|&c| c != 0), "{codes:?}");
    for i in 0..codes.len() {
        for j in i + 1..codes.len() {
            assert_ne!(codes[i], codes[j], "{codes:?}");
        }
    }
    assert_eq!(unknown_key, schema);
    assert!(!out.exists() || fs::read_dir(&out).unwrap().next().is_none());
}

#[test]
fn manifest_tracks_inputs_and_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "synth.cfg", SMALL);
    let data = tmp.path().join("data");
    ok(&["synth", "--config", s(&cfg), "--seed", "2", "--out", s(&data)]);
    let rec = data.join("S01/MI/sit_to_stand");

    let pp_cfg = write_config(tmp.path(), "pp.cfg", "notch_q = 30\n");
    let run = |name: &str, cfg: &Path, input: &Path| {
        let out = tmp.path().join(name);
        ok(&["preprocess", "--config", s(cfg), "--input", s(input), "--out", s(&out)]);
        manifest(&out)
    };
    let first = run("p1", &pp_cfg, &rec);
    let again = run("p2", &pp_cfg, &rec);
    assert_eq!(first, again);
    assert_eq!(first["command"], "preprocess");
    assert!(!first["version"].as_str().unwrap().is_empty());
    assert!(first["outputs"].as_array().unwrap().len() >= 3);

    let edited = write_config(tmp.path(), "pp2.cfg", "notch_q = 30\n# edited\n");
    let other_cfg = run("p3", &edited, &rec);
    assert_ne!(first["config_sha256"], other_cfg["config_sha256"]);
    assert_ne!(first["provenance_sha256"], other_cfg["provenance_sha256"]);

    let copy = tmp.path().join("copy");
    for d in ["eeg", "emg"] {
        fs::create_dir_all(copy.join(d)).unwrap();
        for f in ["header.json", "data.f32", "events.csv"] {
            fs::copy(rec.join(d).join(f), copy.join(d).join(f)).unwrap();
        }
    }
    let same_bytes = run("p4", &pp_cfg, &copy);
    assert_eq!(first["provenance_sha256"], same_bytes["provenance_sha256"]);
    let mut payload = fs::read(copy.join("eeg/data.f32")).unwrap();
    payload[100] ^= 1;
    fs::write(copy.join("eeg/data.f32"), payload).unwrap();
    let changed = run("p5", &pp_cfg, &copy);
    assert_eq!(first["config_sha256"], changed["config_sha256"]);
    assert_ne!(first["provenance_sha256"], changed["provenance_sha256"]);
}

#[test]
fn loocv_table_and_stream_raster() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "run.cfg",
        "subjects = 1\ntrials = 15\nsessions = MI\ntransitions = sit_to_stand\nica = false\n",
    );
    let data = tmp.path().join("data");
    ok(&["synth", "--config", s(&cfg), "--seed", "1", "--out", s(&data)]);
    let pp = tmp.path().join("pp");
    ok(&["preprocess", "--config", s(&cfg), "--input", s(&data.join("S01/MI/sit_to_stand")), "--out", s(&pp)]);

    let eval = tmp.path().join("eval");
    let out = biodecode(&["eval-loocv", "--config", s(&cfg), "--task", "ao_mi", "--input", s(&pp), "--out", s(&eval)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("mean = "));
    let folds = fs::read_to_string(eval.join("folds.csv")).unwrap();
    let mut lines = folds.lines();
    assert!(lines.next().unwrap().starts_with("fold,correct,total,accuracy"));
    assert_eq!(lines.count(), 15);

    let stream = tmp.path().join("stream");
    ok(&["stream", "--config", s(&cfg), "--input", s(&pp), "--out", s(&stream)]);
    let raster = fs::read_to_string(stream.join("raster.csv")).unwrap();
    let rows: Vec<&str> = raster.lines().collect();
    assert_eq!(rows.len(), 16);
    for row in &rows {
        assert_eq!(row.split(',').count(), 1 + 56, "{row}");
    }

    let report = tmp.path().join("report");
    ok(&["report", "--input", s(&eval), "--input", s(&stream), "--out", s(&report)]);
    assert!(report.join("table_i.txt").exists());
    assert!(report.join("table_ii.txt").exists());
}
