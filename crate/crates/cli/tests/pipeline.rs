use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn velosurf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_velosurf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = velosurf(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Short synthetic series written, preprocessed and trained in `dir`.
struct Run {
    data: Vec<PathBuf>,
    dataset: PathBuf,
    model: PathBuf,
}

fn pipeline(dir: &Path) -> Run {
    let data_dir = dir.join("data");
    ok(&[
        "synth",
        "--out-dir",
        p(&data_dir),
        "--n-steps",
        "260",
        "--seed",
        "9",
    ]);
    let mut data: Vec<PathBuf> = std::fs::read_dir(&data_dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|q| q.extension().is_some_and(|x| x == "csv"))
        .collect();
    data.sort();
    assert_eq!(data.len(), 5);
    let dataset = dir.join("ds.txt");
    let mut args = vec!["preprocess", "-o", p(&dataset)];
    args.extend(data.iter().map(|d| p(d)));
    ok(&args);
    let model = dir.join("model.txt");
    ok(&[
        "train",
        "-d",
        p(&dataset),
        "-o",
        p(&model),
        "--gamma",
        "0.1",
        "--c",
        "1",
    ]);
    Run {
        data,
        dataset,
        model,
    }
}

#[test]
fn version_names_formats() {
    let out = ok(&["--version"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("velosurf-model v1"));
    assert!(text.contains("velosurf-dataset v1"));
}

#[test]
fn predict_one_query_prints_one_number() {
    let dir = tempfile::tempdir().unwrap();
    let run = pipeline(dir.path());
    let out = ok(&[
        "predict",
        "-m",
        p(&run.model),
        "--time-ns",
        "120",
        "--thickness-in",
        "0.3",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1);
    let v: f64 = lines[0].parse().unwrap();
    assert!(v > 500.0 && v < 2500.0, "{v}");
}

#[test]
fn one_cell_grid_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let run = pipeline(dir.path());
    let table = dir.path().join("table.csv");
    let best = dir.path().join("best.cfg");
    ok(&[
        "gridsearch",
        "-d",
        p(&run.dataset),
        "-o",
        p(&table),
        "--best",
        p(&best),
        "--gammas",
        "0.2",
        "--cs",
        "1",
        "--epsilons",
        "0.01",
        "-k",
        "3",
    ]);
    let text = std::fs::read_to_string(&table).unwrap();
    assert_eq!(text.lines().count(), 2, "{text}");
    assert!(text.lines().nth(1).unwrap().starts_with("0.2,1,0.01,"));
    // the best-cell file feeds straight back into train
    let model = dir.path().join("m.txt");
    ok(&[
        "--config",
        p(&best),
        "train",
        "-d",
        p(&run.dataset),
        "-o",
        p(&model),
    ]);
    assert!(std::fs::read_to_string(&model)
        .unwrap()
        .contains("gamma=2.0000000000000001e-1"));
}

#[test]
fn reruns_are_byte_identical_and_inputs_untouched() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = pipeline(a.path());
    let rb = pipeline(b.path());
    let before: Vec<Vec<u8>> = ra.data.iter().map(|d| std::fs::read(d).unwrap()).collect();
    for (dir, run) in [(a.path(), &ra), (b.path(), &rb)] {
        ok(&[
            "surface",
            "-m",
            p(&run.model),
            "-o",
            p(&dir.join("s.csv")),
            "--thickness",
            "0.25:0.5:0.0625",
        ]);
        let mut args = vec!["outliers", "-m", p(&run.model), "-o"];
        let out = dir.join("o.csv");
        args.push(p(&out));
        args.extend(run.data.iter().map(|d| p(d)));
        ok(&args);
    }
    for name in [
        "ds.txt",
        "model.txt",
        "s.csv",
        "o.csv",
        "data/synth_w0.3750.csv",
    ] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name} differs"
        );
    }
    let after: Vec<Vec<u8>> = ra.data.iter().map(|d| std::fs::read(d).unwrap()).collect();
    assert_eq!(before, after);

    let strip = |path: PathBuf| {
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("timestamp");
        // paths differ between the two temp dirs; hashes must not
        for key in ["inputs", "outputs"] {
            for f in v[key].as_array_mut().unwrap() {
                f.as_object_mut().unwrap().remove("path");
            }
        }
        v
    };
    assert_eq!(
        strip(a.path().join("model.txt.manifest.json")),
        strip(b.path().join("model.txt.manifest.json"))
    );
}

#[test]
fn every_run_writes_one_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let run = pipeline(dir.path());
    for f in [
        "ds.txt.manifest.json",
        "model.txt.manifest.json",
        "data/manifest.json",
    ] {
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(f)).unwrap()).unwrap();
        assert!(
            v["tool_version"].is_string() && v["timestamp"].is_string(),
            "{f}"
        );
        assert!(!v["outputs"].as_array().unwrap().is_empty(), "{f}");
    }
    let m: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("model.txt.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(m["command"], "train");
    assert_eq!(m["parameters"]["c"], 1.0);
    assert_eq!(m["inputs"][0]["path"], p(&run.dataset));
}

fn error_line(out: &Output) -> serde_json::Value {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

#[test]
fn exit_codes_and_machine_readable_errors() {
    let dir = tempfile::tempdir().unwrap();
    let run = pipeline(dir.path());

    let usage = velosurf(&["train", "--no-such-flag"]);
    assert_eq!(usage.status.code(), Some(1));
    assert_eq!(error_line(&usage)["error"], "usage");

    let bad_param = velosurf(&[
        "train",
        "-d",
        p(&run.dataset),
        "-o",
        p(&dir.path().join("x")),
        "--c",
        "-1",
    ]);
    assert_eq!(bad_param.status.code(), Some(1));

    let text = std::fs::read_to_string(&run.model).unwrap();
    let corrupt = dir.path().join("corrupt.txt");
    std::fs::write(&corrupt, text.replacen("bias=", "bias=9", 1)).unwrap();
    let data = velosurf(&[
        "predict",
        "-m",
        p(&corrupt),
        "--time-ns",
        "1",
        "--thickness-in",
        "0.3",
    ]);
    assert_eq!(data.status.code(), Some(2));
    let e = error_line(&data);
    assert_eq!(e["error"], "data");
    assert!(e["message"].as_str().unwrap().contains("checksum"));

    let capped = dir.path().join("capped.txt");
    let numerical = velosurf(&[
        "--strict",
        "train",
        "-d",
        p(&run.dataset),
        "-o",
        p(&capped),
        "--max-iterations",
        "3",
    ]);
    assert_eq!(numerical.status.code(), Some(3));
    assert_eq!(error_line(&numerical)["error"], "numerical");
    assert!(!capped.exists());
    // without --strict the capped model is written with a warning
    ok(&[
        "train",
        "-d",
        p(&run.dataset),
        "-o",
        p(&capped),
        "--max-iterations",
        "3",
    ]);
    assert!(std::fs::read_to_string(&capped)
        .unwrap()
        .contains("converged=false"));

    let clash = velosurf(&[
        "preprocess",
        "-o",
        p(&run.data[0]),
        p(&run.data[0]),
        p(&run.data[1]),
    ]);
    assert_eq!(clash.status.code(), Some(1));

    let budget = velosurf(&[
        "surface",
        "-m",
        p(&run.model),
        "-o",
        p(&dir.path().join("big.csv")),
        "--thickness",
        "0.25:0.5:0.0625",
        "--cell-budget",
        "10",
    ]);
    assert_eq!(budget.status.code(), Some(1));
}

#[test]
fn validate_reports_unreadable_files() {
    let dir = tempfile::tempdir().unwrap();
    let run = pipeline(dir.path());
    let junk = dir.path().join("junk.csv");
    std::fs::write(&junk, "not,a\nseries\n").unwrap();
    let report = dir.path().join("report.csv");
    let out = velosurf(&["validate", "-o", p(&report), p(&run.data[0]), p(&junk)]);
    assert_eq!(out.status.code(), Some(2));
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.lines().any(|l| l.starts_with("error,junk,")), "{text}");
    ok(&[
        "validate",
        "-o",
        p(&report),
        p(&run.data[0]),
        p(&run.data[1]),
    ]);
}

#[test]
fn query_csv_and_xyz_surface() {
    let dir = tempfile::tempdir().unwrap();
    let run = pipeline(dir.path());
    let q = dir.path().join("q.csv");
    std::fs::write(&q, "time_ns,thickness_in\n10,0.25\n20,0.5\n").unwrap();
    let out = ok(&["predict", "-m", p(&run.model), "--query-csv", p(&q)]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 2);

    let s = dir.path().join("s.csv");
    ok(&[
        "surface",
        "-m",
        p(&run.model),
        "-o",
        p(&s),
        "--time",
        "0:10:2",
        "--thickness",
        "0.25:0.5:0.125",
        "--format",
        "xyz",
    ]);
    let text = std::fs::read_to_string(&s).unwrap();
    assert_eq!(text.lines().count(), 1 + 6 * 3);
    assert_eq!(
        text.lines().next().unwrap(),
        "time_ns,thickness_in,velocity_mps"
    );
}

#[test]
fn config_file_fills_missing_flags_only() {
    let dir = tempfile::tempdir().unwrap();
    let run = pipeline(dir.path());
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "gamma=0.3\nepsilon=0.02\nthreshold=0.5\n").unwrap();
    let m = dir.path().join("m.txt");
    ok(&[
        "--config",
        p(&cfg),
        "train",
        "-d",
        p(&run.dataset),
        "-o",
        p(&m),
        "--gamma",
        "0.05",
    ]);
    let text = std::fs::read_to_string(&m).unwrap();
    assert!(text.contains("gamma=5.0000000000000003e-2"), "flag wins");
    assert!(
        text.contains("epsilon=2.0000000000000000e-2"),
        "file fills the gap"
    );

    std::fs::write(&cfg, "gama=0.3\n").unwrap();
    let bad = velosurf(&[
        "--config",
        p(&cfg),
        "train",
        "-d",
        p(&run.dataset),
        "-o",
        p(&m),
    ]);
    assert_eq!(bad.status.code(), Some(1));
}
