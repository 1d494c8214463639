use std::process::{Command, Output};

fn hplayer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hplayer")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn help_lists_subcommands() {
    let o = hplayer(&["--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for cmd in ["study", "mesh", "probes"] {
        assert!(text.contains(cmd), "{text}");
    }
}

#[test]
fn mesh_dump_is_json_with_the_expected_kappa() {
    let o = hplayer(&["mesh", "--dump", "--p", "2", "--eps", "1e-3", "--lambda", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let kappa = v["params"]["kappa"].as_f64().unwrap();
    assert!((kappa - 2e-3).abs() < 1e-15, "{kappa}");
    assert!(!v["elements"].as_array().unwrap().is_empty());
}

#[test]
fn mesh_summary_reports_conformity() {
    let o = hplayer(&["mesh", "--p", "3", "--eps", "1e-6"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("conforming=true"), "{}", stdout(&o));
}

#[test]
fn macros_dump_has_twelve_squares() {
    let o = hplayer(&["mesh", "--macros"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["elements"].as_array().unwrap().len(), 12);
}

#[test]
fn zero_load_study_is_exact_and_reproducible() {
    let args = ["study", "--example", "zero", "--pmax", "2", "--eps", "1e-2,1e-4", "--metric", "l2"];
    let a = hplayer(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let text = stdout(&a);
    assert!(text.starts_with("# zero l2"), "{text}");
    // Header plus one row per degree, every entry exactly zero.
    let rows: Vec<&str> = text.lines().skip(2).filter(|l| !l.is_empty()).collect();
    assert_eq!(rows.len(), 2, "{text}");
    for row in rows {
        assert!(row.split(',').skip(1).all(|c| c == "0.00e+00"), "{row}");
    }
    assert_eq!(stdout(&hplayer(&args)), text);
}

#[test]
fn study_writes_output_files() {
    let dir = std::env::temp_dir().join(format!("hplayer-cli-{}", std::process::id()));
    let o = hplayer(&[
        "study", "--example", "zero", "--pmax", "1", "--eps", "1e-2", "--out", dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let names: Vec<String> =
        std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert!(names.iter().any(|n| n.ends_with(".csv")), "{names:?}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn invalid_study_parameters_fail_cleanly() {
    let o = hplayer(&["study", "--pmax", "13"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn probes_without_all_is_a_usage_error() {
    let o = hplayer(&["probes"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--all"));
}
