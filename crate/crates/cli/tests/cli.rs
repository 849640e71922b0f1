use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fragscan_core::io::{decode_pgm, decode_posteriors};

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Runs `fragscan` in `dir` with a whitespace-separated argument line.
fn fragscan(args: &str, dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fragscan"))
        .args(args.split_whitespace())
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(args: &str, dir: &Path) -> Output {
    let out = fragscan(args, dir);
    assert!(out.status.success(), "{args}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// Temp dir holding desk/odd nets, their weights and a `w`x`h` image.
fn fixture(w: usize, h: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::copy(golden("desk.net"), d.join("desk.net")).unwrap();
    fs::copy(golden("odd.net"), d.join("odd.net")).unwrap();
    ok("init-weights --net desk.net --seed 3 --out desk.fsw", d);
    ok("init-weights --net odd.net --seed 5 --out odd.fsw", d);
    ok(&format!("gen-image --width {w} --height {h} --seed 2 --out img.pgm"), d);
    dir
}

const DESK: &str = "--net desk.net --weights desk.fsw --image img.pgm";
const ODD: &str = "--net odd.net --weights odd.fsw --image img.pgm";

fn pgm_size(path: &Path) -> (usize, usize) {
    let p = decode_pgm::<f32>(&fs::read(path).unwrap()).unwrap();
    (p.width(), p.height())
}

#[test]
fn segment_window_sized_image_gives_one_pixel() {
    let dir = fixture(16, 16);
    let d = dir.path();
    ok(&format!("segment {DESK} --out c.pgm"), d);
    assert_eq!(pgm_size(&d.join("c.pgm")), (1, 1));
}

#[test]
fn segment_output_size_law() {
    let dir = fixture(30, 23);
    let d = dir.path();
    ok(&format!("segment {DESK} --out c.pgm"), d);
    assert_eq!(pgm_size(&d.join("c.pgm")), (15, 8));
    ok(&format!("segment {ODD} --pad --out p.pgm"), d);
    assert_eq!(pgm_size(&d.join("p.pgm")), (30, 23));
}

#[test]
fn segment_without_out_writes_pgm_to_stdout() {
    let dir = fixture(20, 20);
    let out = ok(&format!("segment {DESK}"), dir.path());
    let plane = decode_pgm::<f32>(&out.stdout).unwrap();
    assert_eq!((plane.width(), plane.height()), (5, 5));
}

#[test]
fn class_map_uses_spread_gray_levels() {
    let dir = fixture(40, 40);
    let d = dir.path();
    ok(&format!("segment {DESK} --out c.pgm --posteriors p.fsp"), d);
    let bytes = fs::read(d.join("c.pgm")).unwrap();
    let header = b"P5\n25 25\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    let posteriors = decode_posteriors(&fs::read(d.join("p.fsp")).unwrap()).unwrap();
    for (&sample, &class) in bytes[header.len()..].iter().zip(posteriors.classes()) {
        assert_eq!(sample, [0, 128, 255][class]);
    }
}

#[test]
fn bench_does_not_change_outputs() {
    let dir = fixture(36, 36);
    let d = dir.path();
    ok(
        &format!("segment {DESK} --threads 1 --out c.pgm --posteriors seg.fsp"),
        d,
    );
    let out = ok(&format!("bench {DESK} --runs 5 --threads 3 --posteriors bench.fsp"), d);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("median of 5 runs"), "{text}");
    assert!(text.contains("speedup"), "{text}");
    assert_eq!(
        fs::read(d.join("seg.fsp")).unwrap(),
        fs::read(d.join("bench.fsp")).unwrap()
    );
}

#[test]
fn bench_reports_every_size() {
    let dir = fixture(16, 16);
    let out = ok(
        "bench --net desk.net --weights desk.fsw --size 20,24 --runs 5 --skip-naive",
        dir.path(),
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("20x20: fragment"), "{text}");
    assert!(text.contains("24x24: fragment"), "{text}");
}

#[test]
fn bench_needs_five_runs() {
    let dir = fixture(16, 16);
    let out = fragscan("bench --net desk.net --weights desk.fsw --size 20 --runs 4", dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_reports_agreement_in_both_precisions() {
    let dir = fixture(32, 32);
    for extra in ["", "--f64 --tol 1e-12"] {
        let out = fragscan(&format!("verify {DESK} {extra}"), dir.path());
        assert_eq!(out.status.code(), Some(0));
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("max_abs_diff:"), "{text}");
        assert!(text.contains("engines agree"), "{text}");
    }
}

#[test]
fn verify_diff_does_not_depend_on_threads() {
    let dir = fixture(32, 32);
    let diff = |threads: u32| {
        let out = ok(&format!("verify {ODD} --pad --threads {threads}"), dir.path());
        String::from_utf8(out.stdout)
            .unwrap()
            .lines()
            .find(|l| l.starts_with("max_abs_diff"))
            .unwrap()
            .to_string()
    };
    assert_eq!(diff(1), diff(4));
}

#[test]
fn operational_errors_exit_with_two() {
    let dir = fixture(16, 16);
    let d = dir.path();
    fs::write(d.join("bad.net"), "input 1 10\nconv 1 2\nmaxpool 2\nfc 2\n").unwrap();
    let cases = [
        "verify --net desk.net --weights missing.fsw --image img.pgm".to_string(),
        "verify --net bad.net --weights desk.fsw --image img.pgm".to_string(),
        "verify --net odd.net --weights desk.fsw --image img.pgm".to_string(),
        format!("verify {DESK} --tol -1"),
        format!("segment {DESK} --threads 0"),
        "flops --net desk.net --size 64 --pad".to_string(),
    ];
    for args in &cases {
        let out = fragscan(args, d);
        assert_eq!(out.status.code(), Some(2), "{args}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn image_smaller_than_window_is_an_error() {
    let dir = fixture(12, 30);
    let out = fragscan(&format!("segment {DESK}"), dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("12x30"));
}

#[test]
fn flops_csv_file_matches_stdout_csv() {
    let dir = fixture(16, 16);
    let d = dir.path();
    ok("flops --net desk.net --size 80 --mode exact --csv f.csv", d);
    let stdout = ok("flops --net desk.net --size 80 --mode exact --csv -", d).stdout;
    let csv = fs::read_to_string(d.join("f.csv")).unwrap();
    assert!(String::from_utf8(stdout).unwrap().ends_with(&csv));
    assert!(csv.starts_with("layer,s_in,maps_in,maps_out,w_l,k_l,F_l,flops_patch,flops_image,speedup\n"));
}
