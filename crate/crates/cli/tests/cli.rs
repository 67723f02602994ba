use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use vrid::imgops::to_rgb8;
use vrid::Tensor;

fn vrid(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vrid"))
        .current_dir(dir)
        .env("VRID_LOG", "error")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout {}\nstderr {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn xml_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "xml"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn synth_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    for d in ["a", "b"] {
        ok(&vrid(
            tmp.path(),
            &[
                "--dataset",
                d,
                "-o",
                "out",
                "synth",
                "--seed",
                "7",
                "--vehicles",
                "50",
            ],
        ));
    }
    let a = xml_files(&tmp.path().join("a"));
    assert_eq!(a.len(), 10);
    assert_eq!(a, xml_files(&tmp.path().join("b")));
    let manifest: Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("out/synth.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["seeds"]["synth"], 7);
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn eval_all_rounds_writes_five_rows_and_average() {
    let tmp = tempfile::tempdir().unwrap();
    let common = ["--dataset", "d", "-o", "out"];
    let run = |extra: &[&str]| ok(&vrid(tmp.path(), &[&common[..], extra].concat()));
    run(&["synth", "--seed", "3", "--vehicles", "10"]);
    run(&[
        "--set",
        "ocr.train.epochs=1",
        "--set",
        "ocr.train.batch_size=4",
        "train-ocr",
    ]);
    run(&[
        "--set",
        "fusion.train.epochs=1",
        "--set",
        "fusion.train.batch_size=8",
        "--set",
        "pairs.max_frames=1",
        "eval",
        "--rounds",
        "all",
    ]);
    let csv = std::fs::read_to_string(tmp.path().join("out/report.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 7, "{csv}");
    for (i, row) in rows[1..6].iter().enumerate() {
        assert!(row.starts_with(&format!("{},", i + 1)), "{row}");
    }
    assert!(rows[6].starts_with("average,"));
    assert!(tmp.path().join("out/report.json").is_file());
    assert!(tmp.path().join("out/report.png").is_file());
}

#[test]
fn match_prints_the_worked_descriptor() {
    let tmp = tempfile::tempdir().unwrap();
    let img = |name: &str, w: usize, h: usize| {
        let t = Tensor::<f32>::from_vec(
            &[3, h, w],
            (0..3 * w * h).map(|i| (i % 17) as f32 / 17.0).collect(),
        )
        .unwrap();
        to_rgb8(&t).unwrap().save(tmp.path().join(name)).unwrap();
    };
    img("car.png", 64, 64);
    img("plate.png", 92, 28);
    let out = ok(&vrid(
        tmp.path(),
        &[
            "-o",
            "out",
            "match",
            "car.png",
            "car.png",
            "plate.png",
            "plate.png",
            "--reading-a",
            "ATC1189@0.91,0.89,0.92,0.84,0.81,0.89,0.91",
            "--reading-b",
            "ATC1182@0.89,0.89,0.90,0.82,0.85,0.89,0.91",
        ],
    ));
    let v: Value = serde_json::from_str(out.trim()).unwrap();
    let desc: Vec<f64> = v["ocr_descriptor"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    let expected = [
        0.0, 0.91, 0.54, 0.89, 0.06, 0.92, 0.77, 0.84, 0.77, 0.81, 0.97, 0.89, 1.0, 0.91, //
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, //
        0.0, 0.89, 0.54, 0.89, 0.06, 0.90, 0.77, 0.82, 0.77, 0.85, 0.97, 0.89, 0.80, 0.91,
    ];
    assert_eq!(desc.len(), 35);
    for (i, (a, b)) in desc.iter().zip(expected).enumerate() {
        assert!((a - b).abs() <= 0.005, "slot {i}: {a} vs {b}");
    }
    assert!(["match", "non-match"].contains(&v["decision"].as_str().unwrap()));
    let p = v["p_match"].as_f64().unwrap() + v["p_nonmatch"].as_f64().unwrap();
    assert!((p - 1.0).abs() < 1e-6);
}

#[test]
fn failures_emit_one_json_line_and_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let out = vrid(tmp.path(), &["--frobnicate", "ingest"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "usage");

    std::fs::write(
        tmp.path().join("bad.toml"),
        "[fusion.train]\nepochs = \"x\"\n",
    )
    .unwrap();
    let out = vrid(tmp.path(), &["--config", "bad.toml", "ingest"]);
    assert_eq!(out.status.code(), Some(2));

    let out = vrid(tmp.path(), &["--dataset", "missing", "ingest"]);
    assert_eq!(out.status.code(), Some(1));
    let line = String::from_utf8_lossy(&out.stderr);
    let err: Value = serde_json::from_str(line.trim()).unwrap();
    assert!(err["error"]["message"].is_string());
}

#[test]
fn environment_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_vrid"))
        .current_dir(tmp.path())
        .env("VRID_LOG", "error")
        .env("VRID_SYNTH_SEED", "21")
        .args(["--dataset", "d", "-o", "out", "synth", "--vehicles", "5"])
        .output()
        .unwrap();
    ok(&out);
    let m: Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("out/synth.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(m["config"]["synth"]["seed"], 21);
    assert_eq!(m["config"]["synth"]["vehicles_per_camera"], 5);
}
