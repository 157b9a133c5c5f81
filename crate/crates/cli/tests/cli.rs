use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frozen-planet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn summary(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("JSON summary on stdout")
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

#[test]
fn solve_at_free_fall() {
    let cert = scratch("free_fall.json");
    let out = run(&["solve", "--r", "0", "--out", cert.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let s = summary(&out);
    assert_eq!(s["status"], "ok");
    assert!((s["result"]["cert"]["v"].as_f64().unwrap() - 0.5).abs() < 1e-10);
    assert_eq!(s["header"]["flags"]["r"], 0.0);

    let spec = summary(&run(&["spectrum", "--input", cert.to_str().unwrap()]));
    assert_eq!(spec["result"]["symmetric"]["morse_index"], 0);
    assert_eq!(spec["result"]["full"]["nullity"], 1);
    assert!(spec["result"]["kernel_alignment"].as_f64().unwrap() > 0.999);

    let ident = run(&["identity", "--input", cert.to_str().unwrap()]);
    assert_eq!(ident.status.code(), Some(0));

    let orbit = scratch("free_fall_orbit.csv");
    let lc = run(&["lc", "--input", cert.to_str().unwrap(), "--out", orbit.to_str().unwrap()]);
    assert_eq!(lc.status.code(), Some(0), "{}", String::from_utf8_lossy(&lc.stdout));
    let (header, rows) =
        frozen_planet::io::read_csv(std::fs::File::open(&orbit).unwrap()).unwrap();
    assert_eq!(header, ["t", "q", "qdot", "zero_flag"]);
    assert_eq!(rows.len(), frozen_planet::levi_civita::ORBIT_SAMPLES);
    assert_eq!(rows[0][3], 1.0);
}

#[test]
fn reruns_are_byte_identical() {
    let a = run(&["solve", "--r", "0.3", "--modes", "32"]);
    let b = run(&["solve", "--r", "0.3", "--modes", "32"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn domain_and_config_errors_exit_2() {
    for args in [
        &["solve", "--r", "-1"][..],
        &["elliptic", "--grid", "1:2"],
        &["elliptic", "--grid", "0:-1:0.1"],
        &["elliptic", "--grid", "0:1.5:0.5"],
        &["helium", "--mode", "interp"],
        &["helium", "--mode", "interp", "--s", "1.5"],
        &["spectrum", "--input", "/nonexistent/cert.json"],
        &["detline", "--demo", "counterexample", "--modes", "2"],
    ] {
        let out = run(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let s = summary(&out);
        assert_eq!(s["status"], "domain-error");
        assert!(s["error"].as_str().unwrap().len() > 10);
    }
}

#[test]
fn elliptic_grid_table() {
    let out = run(&["elliptic", "--grid", "-5:0.9:0.1"]);
    assert_eq!(out.status.code(), Some(0));
    let (header, rows) = frozen_planet::io::read_csv(out.stdout.as_slice()).unwrap();
    assert_eq!(rows.len(), 60);
    let rec = column(&header, "rec_res");
    for row in &rows {
        // Absent exactly at m = 0, where the recursion divides by m.
        assert!(row[rec].is_nan() || row[rec] < 1e-9, "{row:?}");
    }
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# tool=frozen-planet-cli\n"));
    assert!(text.contains("# grid=-5:0.9:0.1\n"));
}

#[test]
fn determinant_line_demo() {
    let trace = scratch("trace.csv");
    let out = run(&["detline", "--demo", "counterexample", "--out", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(summary(&out)["result"]["sign"], -1);
    let (header, rows) = frozen_planet::io::read_csv(std::fs::File::open(&trace).unwrap()).unwrap();
    assert_eq!(header.len(), 8);
    assert_eq!(rows.first().unwrap()[0], 0.0);
    assert_eq!(rows.last().unwrap()[0], 2.0);
}

#[test]
fn helium_path_and_signed_count() {
    let path = scratch("helium.jsonl");
    let out = run(&[
        "continue", "--family", "helium", "--from", "0", "--to", "1", "--modes", "6", "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(summary(&out)["result"]["completed"], true);

    let euler = run(&["euler", "--path", path.to_str().unwrap()]);
    assert_eq!(euler.status.code(), Some(0));
    let s = summary(&euler);
    let per_step = s["result"]["per_step"].as_array().unwrap();
    assert!(per_step.len() >= 2);
    assert!(per_step.iter().all(|c| *c == s["result"]["euler"]));
    // The pair is a maximum in the outer radius, so each step contributes (−1)¹.
    assert_eq!(s["result"]["euler"], -1);

    let expected = run(&["euler", "--path", path.to_str().unwrap(), "--expect", "1"]);
    assert_eq!(expected.status.code(), Some(1));
    assert_eq!(summary(&expected)["failed"][0], "euler");
}

#[test]
fn helium_modes() {
    let pairs = scratch("pairs.csv");
    let out = run(&["helium", "--mode", "av", "--modes", "6", "--out", pairs.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let s = summary(&out);
    assert_eq!(s["result"]["s"], 0.0);
    let (header, rows) = frozen_planet::io::read_csv(std::fs::File::open(&pairs).unwrap()).unwrap();
    let gap = column(&header, "gap");
    assert!(rows.iter().all(|r| r[gap] > 0.0));

    let out = run(&["helium", "--mode", "interp", "--s", "0.3", "--modes", "6"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(summary(&out)["result"]["cert"]["s"], 0.3);
}

#[test]
fn frozen_path_export() {
    let path = scratch("frozen.jsonl");
    let table = scratch("frozen.csv");
    let out = run(&[
        "continue", "--from", "0", "--to", "0.5", "--modes", "32", "--out",
        path.to_str().unwrap(), "--csv", table.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let lines = std::fs::read_to_string(&path).unwrap();
    let (header, rows) = frozen_planet::io::read_csv(std::fs::File::open(&table).unwrap()).unwrap();
    assert_eq!(rows.len(), lines.lines().count());
    assert_eq!(rows.last().unwrap()[column(&header, "r")], 0.5);
    assert!(rows.iter().all(|r| r[column(&header, "index")] == 0.0));
}
