use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use roughflow::variation::p_variation;
use roughflow_harness::{ExperimentConfig, ExperimentKind};

fn roughflow(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roughflow"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn small_steady() -> ExperimentConfig {
    ExperimentConfig {
        resolution: 16,
        particles: 32,
        meshes: vec![32],
        ..ExperimentConfig::desk(ExperimentKind::SteadyCheck)
    }
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn template_parses_back() {
    let tmp = tempfile::tempdir().unwrap();
    for kind in ExperimentKind::ALL {
        let out = roughflow(&["template", kind.as_str()], tmp.path());
        assert!(out.status.success());
        let config = ExperimentConfig::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
        assert_eq!(config, ExperimentConfig::desk(kind));
    }
}

#[test]
fn run_writes_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let config_path = tmp.path().join("steady.json");
    small_steady().save(&config_path).unwrap();
    let cfg = config_path.to_str().unwrap();
    let a = roughflow(&["steady_check", "--config", cfg, "--out", "a"], tmp.path());
    let b = roughflow(&["steady_check", "--config", cfg, "--out", "b"], tmp.path());
    assert!(
        matches!(a.status.code(), Some(0 | 1)),
        "{}",
        String::from_utf8_lossy(&a.stderr)
    );
    assert_eq!(a.status.code(), b.status.code());
    let (fa, fb) = (
        files(&tmp.path().join("a/steady_check")),
        files(&tmp.path().join("b/steady_check")),
    );
    assert_eq!(fa, fb);
    let names: Vec<&str> = fa.iter().map(|f| f.0.as_str()).collect();
    for want in [
        "meta.json",
        "diagnostics.json",
        "translation.csv",
        "fields_t0000.csv",
        "particles_t0000.csv",
    ] {
        assert!(names.contains(&want), "missing {want} in {names:?}");
    }
    let meta: serde_json::Value =
        serde_json::from_slice(&fa.iter().find(|f| f.0 == "meta.json").unwrap().1).unwrap();
    assert_eq!(meta["config_hash"], small_steady().hash().unwrap());
    assert_eq!(meta["library_version"], roughflow::VERSION);
    assert_eq!(meta["passed"].as_bool(), Some(a.status.code() == Some(0)));
}

#[test]
fn mismatched_config_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config_path = tmp.path().join("steady.json");
    small_steady().save(&config_path).unwrap();
    let out = roughflow(
        &["stability", "--config", config_path.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("steady_check"));
    let out = roughflow(&["stability", "--config", "missing.json"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pvar_matches_library() {
    let tmp = tempfile::tempdir().unwrap();
    let values = [0.0, 0.0, 1.0, 0.5, -0.5, 0.25, 0.75, 1.0, 0.1, -0.2];
    let mut text = String::from("t,x,y\n");
    for (k, pair) in values.chunks(2).enumerate() {
        text.push_str(&format!("{},{},{}\n", k as f64 * 0.25, pair[0], pair[1]));
    }
    fs::write(tmp.path().join("path.csv"), text).unwrap();
    let out = roughflow(&["pvar", "path.csv", "--p", "2.5"], tmp.path());
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let want = p_variation(&values, 2, 2.5).unwrap();
    assert_eq!(json["value"].as_f64().unwrap(), want.value);
    let partition: Vec<usize> = serde_json::from_value(json["argmax_partition"].clone()).unwrap();
    assert_eq!(partition, want.partition);

    let local = roughflow(
        &[
            "pvar",
            "path.csv",
            "--p",
            "2.5",
            "--localize",
            "interval:1",
            "--L",
            "0.3",
        ],
        tmp.path(),
    );
    assert!(local.status.success());
    let json: serde_json::Value = serde_json::from_slice(&local.stdout).unwrap();
    let cells: Vec<usize> = serde_json::from_value(json["argmax_partition"].clone()).unwrap();
    assert!(cells.windows(2).all(|w| w[1] - w[0] == 1));
    assert!(json["value"].as_f64().unwrap() <= want.value);

    let bad = roughflow(
        &[
            "pvar",
            "path.csv",
            "--p",
            "2.5",
            "--localize",
            "box:1",
            "--L",
            "0.3",
        ],
        tmp.path(),
    );
    assert_eq!(bad.status.code(), Some(2));
}
