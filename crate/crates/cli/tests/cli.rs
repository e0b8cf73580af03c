use std::path::Path;
use std::process::{Command, Output};

use projdiff::io::{sgm1_read, sgm1_read_f64};
use projdiff::pacbayes::Certificate;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_projdiff")).args(args).current_dir(dir).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn radon_output_has_detector_by_angle_dims() {
    let t = tempfile::tempdir().unwrap();
    ok(t.path(), &["phantom", "--kind", "disk", "--size", "128", "--out", "d.sgm", "--seed", "1"]);
    ok(t.path(), &["radon", "--in", "d.sgm", "--angles", "180", "--out", "s.sgm", "--seed", "1"]);
    let s = sgm1_read(&t.path().join("s.sgm")).unwrap();
    assert_eq!(s.dims, vec![projdiff::tomo::default_n_det(128), 180]);
}

#[test]
fn augment_with_no_blocks_passes_the_sinogram_through() {
    let t = tempfile::tempdir().unwrap();
    ok(t.path(), &["phantom", "--size", "32", "--out", "p.sgm", "--seed", "1"]);
    ok(t.path(), &["radon", "--in", "p.sgm", "--angles", "20", "--out", "s.sgm", "--seed", "1"]);
    ok(
        t.path(),
        &["augment", "--in", "s.sgm", "--size", "32", "--k", "0", "--out", "a.sgm", "--loss-csv", "l.csv", "--seed", "3"],
    );
    let (_, s) = sgm1_read_f64(&t.path().join("s.sgm")).unwrap();
    let (dims, a) = sgm1_read_f64(&t.path().join("a.sgm")).unwrap();
    let len = s.len();
    assert_eq!(dims[0], 3);
    assert!(a[..len].iter().all(|&v| v == 0.0));
    assert_eq!(&a[len..2 * len], &s[..]);
    assert_eq!(&a[2 * len..], &s[..]);
    let csv = std::fs::read_to_string(t.path().join("l.csv")).unwrap();
    let last = csv.lines().nth(1).unwrap();
    assert!(last.ends_with(",0,0.0"), "{last}");
}

#[test]
fn certify_is_reproducible_and_parses_back() {
    let t = tempfile::tempdir().unwrap();
    let args = ["certify", "--seed", "5", "--n", "100", "--delta", "0.05", "--m", "20"];
    ok(t.path(), &[&args[..], &["--out", "c1.txt"]].concat());
    ok(t.path(), &[&args[..], &["--out", "c2.txt"]].concat());
    let a = std::fs::read_to_string(t.path().join("c1.txt")).unwrap();
    assert_eq!(a, std::fs::read_to_string(t.path().join("c2.txt")).unwrap());
    let c = Certificate::from_record(&a).unwrap();
    assert_eq!(c.n, 100);
    assert!(c.bound_inverted <= c.bound_closed_form.min(1.0));
    let other = ok(t.path(), &["certify", "--seed", "6", "--n", "100", "--m", "20"]);
    assert_ne!(a, other);
}

#[test]
fn exit_codes_separate_usage_from_data_errors() {
    let t = tempfile::tempdir().unwrap();
    let dir = t.path();
    // Missing seed, unknown subcommand, bad enum value.
    assert_eq!(run(dir, &["phantom", "--out", "p.sgm"]).status.code(), Some(1));
    assert_eq!(run(dir, &["frobnicate", "--seed", "1"]).status.code(), Some(1));
    assert_eq!(run(dir, &["phantom", "--kind", "cube", "--out", "p.sgm", "--seed", "1"]).status.code(), Some(1));
    // Unknown config key.
    std::fs::write(dir.join("bad.cfg"), "size = 16\nsizee = 3\n").unwrap();
    let out = run(dir, &["phantom", "--config", "bad.cfg", "--out", "p.sgm", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sizee"));
    // Malformed input file: stage and file are named.
    std::fs::write(dir.join("bad.sgm"), b"SGMX\x01\x00\x01\x01\x00\x00\x00").unwrap();
    let out = run(dir, &["fbp", "--in", "bad.sgm", "--out", "r.sgm", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("fbp") && err.contains("bad.sgm") && err.contains("offset 0"), "{err}");
    assert!(!dir.join("r.sgm").exists());
    // Impossible mask placement is a data error.
    let out = run(dir, &["dmm-masks", "--size", "16", "--k", "5", "--block-w", "8", "--block-h", "8", "--out", "m.sgm", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.join("m.sgm").exists());
}

#[test]
fn flags_override_config_values() {
    let t = tempfile::tempdir().unwrap();
    std::fs::write(t.path().join("run.cfg"), "# demo\nsize = 24\noutput = from_cfg.sgm\n").unwrap();
    ok(t.path(), &["phantom", "--config", "run.cfg", "--seed", "1"]);
    assert_eq!(sgm1_read(&t.path().join("from_cfg.sgm")).unwrap().dims, vec![24, 24]);
    ok(t.path(), &["phantom", "--config", "run.cfg", "--size", "20", "--out", "flag.sgm", "--seed", "1"]);
    assert_eq!(sgm1_read(&t.path().join("flag.sgm")).unwrap().dims, vec![20, 20]);
}

#[test]
fn diffuse_train_and_tma_round_trip() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    ok(d, &["train-denoiser", "--iters", "50", "--dim", "4", "--out", "net.sgm", "--seed", "2"]);
    for sampler in ["ddpm", "ddim"] {
        let a = ["diffuse", "--sampler", sampler, "--denoiser", "mlp:net.sgm", "--count", "3", "--seed", "8"];
        ok(d, &[&a[..], &["--out", "x1.sgm"]].concat());
        ok(d, &[&a[..], &["--out", "x2.sgm"]].concat());
        assert_eq!(std::fs::read(d.join("x1.sgm")).unwrap(), std::fs::read(d.join("x2.sgm")).unwrap());
        assert_eq!(sgm1_read(&d.join("x1.sgm")).unwrap().dims, vec![3, 4]);
    }
    ok(d, &["diffuse", "--sampler", "ddbm", "--in", "x1.sgm", "--dim", "4", "--steps", "20", "--out", "b.sgm", "--seed", "8"]);
    assert_eq!(sgm1_read(&d.join("b.sgm")).unwrap().dims, vec![3, 4]);
    // An eps checkpoint cannot drive the bridge.
    let out = run(d, &["diffuse", "--sampler", "ddbm", "--in", "x1.sgm", "--denoiser", "mlp:net.sgm", "--out", "c.sgm", "--seed", "8"]);
    assert_eq!(out.status.code(), Some(2));

    ok(d, &["phantom", "--kind", "disk", "--size", "64", "--cx", "0.3", "--radius", "0.2", "--out", "p.sgm", "--seed", "1"]);
    ok(d, &["radon", "--in", "p.sgm", "--angles", "60", "--out", "s.sgm", "--seed", "1"]);
    ok(d, &["tma", "--in", "s.sgm", "--size", "64", "--threshold", "0.5", "--out", "g.sgm", "--roi-out", "r.sgm", "--seed", "1"]);
    let (_, s) = sgm1_read_f64(&d.join("s.sgm")).unwrap();
    let (_, g) = sgm1_read_f64(&d.join("g.sgm")).unwrap();
    let (_, r) = sgm1_read_f64(&d.join("r.sgm")).unwrap();
    for i in 0..s.len() {
        assert_eq!(g[i], (r[i] * s[i]) as f32 as f64);
    }
    // Clinician ROI replaces thresholding.
    ok(d, &["tma", "--in", "s.sgm", "--size", "64", "--roi", "p.sgm", "--out", "g2.sgm", "--seed", "1"]);
}
