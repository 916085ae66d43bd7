use std::path::{Path, PathBuf};
use std::process::Command;

use provex::cli::{run, EXIT_EARLY_STOP, EXIT_ERROR, EXIT_INSUFFICIENT, EXIT_OK, EXIT_UNCERTAIN};
use provex::format::save_network;
use provex::instance::{self, load_instance, ImageShape};
use provex::report::{strip_wall_time, Report};
use provex_core::fixtures;

fn s(p: &Path) -> String {
    p.display().to_string()
}

fn provex(args: &[&str]) -> i32 {
    run(std::iter::once("provex").chain(args.iter().copied()))
}

fn running_example(dir: &Path) -> (String, String) {
    assert_eq!(provex(&["fixture", "--kind", "running-example", "--out", &s(dir)]), EXIT_OK);
    (s(&dir.join("network.json")), s(&dir.join("instance_000.csv")))
}

fn read_report(dir: &Path) -> Report {
    serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn explain_running_example() {
    let dir = tempfile::tempdir().unwrap();
    let (net, x) = running_example(dir.path());
    let out = dir.path().join("out");
    assert_eq!(provex(&["explain", "--network", &net, "--input", &x, "--epsilon", "1", "--out", &s(&out)]), EXIT_OK);
    let r = read_report(&out);
    assert_eq!(r.final_set, vec!["3"]);
    assert_eq!(r.status, "MinimalSufficient");
    assert_eq!(std::fs::read_to_string(out.join("mask_final.csv")).unwrap().trim(), "1,1,0");
    assert_eq!(r.trace.snapshots.len(), 10);
}

#[test]
fn explain_with_zero_epsilon_frees_everything() {
    let dir = tempfile::tempdir().unwrap();
    let (net, x) = running_example(dir.path());
    let out = dir.path().join("out");
    let sched = "0.5,1.0";
    assert_eq!(
        provex(&["explain", "--network", &net, "--input", &x, "--epsilon", "0", "--schedule", sched, "--out", &s(&out)]),
        EXIT_OK
    );
    assert!(read_report(&out).final_set.is_empty());
    for name in ["mask_rho_0.500.csv", "mask_rho_1.000.csv", "mask_final.csv"] {
        assert_eq!(std::fs::read_to_string(out.join(name)).unwrap().trim(), "1,1,1", "{name}");
    }
}

#[test]
fn explain_with_zero_timeout_stops_early() {
    let dir = tempfile::tempdir().unwrap();
    let (net, x) = running_example(dir.path());
    let out = dir.path().join("out");
    for algorithm in ["refine", "baseline"] {
        let code = provex(&[
            "explain", "--network", &net, "--input", &x, "--epsilon", "1", "--timeout", "0", "--algorithm", algorithm,
            "--out", &s(&out),
        ]);
        assert_eq!(code, EXIT_EARLY_STOP);
        let r = read_report(&out);
        assert_eq!(r.status, "SufficientEarlyStop");
        assert_eq!(r.final_set, vec!["1", "2", "3"]);
    }
}

#[test]
fn explain_with_oracle_backend() {
    let dir = tempfile::tempdir().unwrap();
    let (net, x) = running_example(dir.path());
    let out = dir.path().join("out");
    let args = ["explain", "--network", &net, "--input", &x, "--epsilon", "1", "--backend", "oracle", "--out", &s(&out)];
    assert_eq!(provex(&args), EXIT_OK);
    let r = read_report(&out);
    assert!(r.final_set.is_empty());
    assert_eq!(r.config.algorithm, "baseline");
    let mut refine = args.to_vec();
    refine.extend(["--algorithm", "refine"]);
    assert_eq!(provex(&refine), EXIT_ERROR);
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (net, x) = running_example(dir.path());
    let verify = |subset: &str, backend: &str| {
        provex(&["verify", "--network", &net, "--input", &x, "--subset", subset, "--epsilon", "1", "--backend", backend])
    };
    assert_eq!(verify("2,3", "enclosure"), EXIT_OK);
    assert_eq!(verify("1,2,3", "enclosure"), EXIT_OK);
    assert_eq!(verify("", "enclosure"), EXIT_UNCERTAIN);
    assert_eq!(verify("", "oracle"), EXIT_OK);
    assert_eq!(verify("4", "enclosure"), EXIT_ERROR);
    assert_eq!(verify("0", "enclosure"), EXIT_ERROR);
}

#[test]
fn verify_prints_a_witness_that_reverifies() {
    let dir = tempfile::tempdir().unwrap();
    // a net where the oracle finds a witness when every feature is free
    let mut found = false;
    for seed in 0..50 {
        let (net, xs) = fixtures::random_network(4, &[8], 3, provex_core::ActivationKind::Relu, seed, 1);
        let net_path = dir.path().join("net.json");
        let x_path = dir.path().join("x.csv");
        save_network(&net, &net_path).unwrap();
        instance::save_csv_row(&x_path, &xs[0]).unwrap();
        let out = Command::new(env!("CARGO_BIN_EXE_provex"))
            .args(["verify", "--network", &s(&net_path), "--input", &s(&x_path), "--epsilon", "0.5", "--backend", "oracle"])
            .output()
            .unwrap();
        if out.status.code() != Some(EXIT_INSUFFICIENT) {
            continue;
        }
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.starts_with("insufficient"));
        let line = text.lines().find_map(|l| l.strip_prefix("witness: ")).unwrap();
        let w: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert_ne!(net.predict(&w).unwrap(), net.predict(&xs[0]).unwrap());
        found = true;
        break;
    }
    assert!(found);
}

#[test]
fn process_exit_codes_and_field_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"input_dim":2,"layers":[{"kind":"dense","activation":"identity","weights":[[1,0]],"bias":[0,0]}]}"#)
        .unwrap();
    let x = dir.path().join("x.csv");
    std::fs::write(&x, "0.5,0.5\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_provex"))
        .args(["verify", "--network", &s(&bad), "--input", &s(&x)])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_ERROR));
    assert!(String::from_utf8_lossy(&out.stderr).contains("layers[0].bias"));
    let out = Command::new(env!("CARGO_BIN_EXE_provex")).args(["explain"]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_ERROR));
    let out = Command::new(env!("CARGO_BIN_EXE_provex")).args(["--help"]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK));
}

#[test]
fn bad_inputs_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (net, x) = running_example(dir.path());
    let out = s(&dir.path().join("out"));
    let base = ["explain", "--network", &net, "--input", &x, "--out", &out];
    for extra in [
        &["--epsilon", "-1"][..],
        &["--schedule", "0.5,0.2,1.0"],
        &["--schedule", "0.5"],
        &["--groups", "rgb"],
        &["--timeout", "-2"],
    ] {
        let mut args = base.to_vec();
        args.extend_from_slice(extra);
        assert_eq!(provex(&args), EXIT_ERROR, "{extra:?}");
    }
    let short = dir.path().join("short.csv");
    std::fs::write(&short, "1,2\n").unwrap();
    assert_eq!(provex(&["explain", "--network", &net, "--input", &s(&short), "--out", &out]), EXIT_ERROR);
}

fn bench_rows(dir: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(dir.join("bench.csv")).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn bench_on_random_instances() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fx");
    assert_eq!(
        provex(&["fixture", "--kind", "random", "--inputs", "6", "--hidden", "12,12", "--instances", "10", "--seed", "3", "--out", &s(&fx)]),
        EXIT_OK
    );
    let mut args: Vec<String> = ["bench", "--network", &s(&fx.join("network.json")), "--epsilon", "0.1", "--workers", "2"]
        .iter()
        .map(|a| a.to_string())
        .collect();
    for i in 0..10 {
        args.push("--input".into());
        args.push(s(&fx.join(format!("instance_{i:03}.csv"))));
    }
    let out = dir.path().join("bench");
    args.extend(["--out".into(), s(&out)]);
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_eq!(provex(&argv), EXIT_OK);
    let rows = bench_rows(&out);
    assert_eq!(rows.len(), 20);
    for pair in rows.chunks(2) {
        assert_eq!(pair[0][0], pair[1][0]);
        assert_eq!((pair[0][1].as_str(), pair[1][1].as_str()), ("baseline", "refine"));
        assert_eq!(pair[0][2], pair[1][2]);
    }
    let ordered: Vec<usize> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(ordered.windows(2).all(|w| w[0] <= w[1]));

    // a single-rate schedule makes the two algorithms query identically
    let mut single = argv.clone();
    single.extend(["--schedule", "1.0"]);
    assert_eq!(provex(&single), EXIT_OK);
    for pair in bench_rows(&out).chunks(2) {
        assert_eq!(pair[0][2..6], pair[1][2..6]);
    }
}

#[test]
fn bench_without_instances_writes_a_header() {
    let dir = tempfile::tempdir().unwrap();
    let (net, _) = running_example(dir.path());
    let out = dir.path().join("bench");
    assert_eq!(provex(&["bench", "--network", &net, "--out", &s(&out)]), EXIT_OK);
    let text = std::fs::read_to_string(out.join("bench.csv")).unwrap();
    assert_eq!(
        text.trim(),
        "instance,algorithm,explanation_size,queries,refinements,neuron_evaluations,wall_time"
    );
}

fn magenta_count(path: &Path) -> usize {
    let inst = load_instance(path).unwrap();
    instance::to_bytes(&inst.values).chunks(3).filter(|c| c == &[255, 0, 255]).count()
}

#[test]
fn render_grid_from_an_image_explanation() {
    let dir = tempfile::tempdir().unwrap();
    // 6x6 grayscale image over a small random network
    let (net, xs) = fixtures::random_network(36, &[16], 3, provex_core::ActivationKind::Relu, 9, 1);
    let net_path = dir.path().join("net.json");
    save_network(&net, &net_path).unwrap();
    let img = dir.path().join("x.pgm");
    let shape = ImageShape { width: 6, height: 6, channels: 1 };
    instance::save_pnm(&img, shape, &instance::to_bytes(&xs[0])).unwrap();
    let out = dir.path().join("out");
    let code = provex(&[
        "explain", "--network", &s(&net_path), "--input", &s(&img), "--epsilon", "0.05", "--schedule", "0.25,0.5,1.0",
        "--abstraction-bounds", "ball", "--out", &s(&out),
    ]);
    assert_eq!(code, EXIT_OK);
    let report = read_report(&out);
    let mask = load_instance(&out.join("mask_final.pgm")).unwrap();
    let kept = mask.values.iter().filter(|&&v| v == 0.0).count();
    assert_eq!(kept, report.final_set.len());

    let rendered = dir.path().join("render");
    assert_eq!(provex(&["render", "--report", &s(&out.join("report.json")), "--out", &s(&rendered)]), EXIT_OK);
    let panels: Vec<PathBuf> = ["panel_00_rho_0.250", "panel_01_rho_0.500", "panel_02_rho_1.000", "panel_final"]
        .iter()
        .map(|p| rendered.join(format!("{p}.ppm")))
        .collect();
    let counts: Vec<usize> = panels.iter().map(|p| magenta_count(p)).collect();
    assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
    assert_eq!(counts[3], 36 - report.final_set.len());
    let grid = load_instance(&rendered.join("grid.ppm")).unwrap();
    assert_eq!(grid.shape.unwrap().width, 4 * 6 + 3 * 2);

    // CSV instances cannot be rendered
    let (_, x) = running_example(dir.path());
    assert_eq!(provex(&["render", "--report", &s(&out.join("report.json")), "--input", &x, "--out", &s(&rendered)]), EXIT_ERROR);
}

#[test]
fn rgb_groups_bundle_channels() {
    let dir = tempfile::tempdir().unwrap();
    let (net, xs) = fixtures::random_network(27, &[12], 3, provex_core::ActivationKind::Relu, 2, 1);
    let net_path = dir.path().join("net.json");
    save_network(&net, &net_path).unwrap();
    let img = dir.path().join("x.ppm");
    instance::save_pnm(&img, ImageShape { width: 3, height: 3, channels: 3 }, &instance::to_bytes(&xs[0])).unwrap();
    let out = dir.path().join("out");
    let code = provex(&["explain", "--network", &s(&net_path), "--input", &s(&img), "--groups", "rgb", "--epsilon", "0.1", "--out", &s(&out)]);
    assert_eq!(code, EXIT_OK);
    let r = read_report(&out);
    assert_eq!(r.trace.groups, 9);
    assert_eq!(r.trace.final_features.len(), 3 * r.final_set.len());
    let rendered = dir.path().join("render");
    assert_eq!(provex(&["render", "--report", &s(&out.join("report.json")), "--out", &s(&rendered)]), EXIT_OK);
    assert_eq!(magenta_count(&rendered.join("panel_final.ppm")), 9 - r.final_set.len());
}

#[test]
fn identical_runs_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fx");
    provex(&["fixture", "--kind", "random", "--inputs", "10", "--hidden", "16,16", "--seed", "8", "--out", &s(&fx)]);
    let net = s(&fx.join("network.json"));
    let x = s(&fx.join("instance_000.csv"));
    let mut reports = Vec::new();
    for run_dir in ["a", "b"] {
        let out = dir.path().join(run_dir);
        let code = provex(&[
            "explain", "--network", &net, "--input", &x, "--epsilon", "0.1", "--order", "random", "--seed", "4",
            "--abstraction-bounds", "ball", "--out", &s(&out),
        ]);
        assert_eq!(code, EXIT_OK);
        let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
        strip_wall_time(&mut v);
        reports.push(serde_json::to_vec(&v).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}
