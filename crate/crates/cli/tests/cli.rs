use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use eulerci::laminate::read_lam1;
use eulerci::wave::{read_fld1, write_fld1};

fn eulerci(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eulerci")).args(args).output().expect("binary runs")
}

fn eulerci_threads(threads: &str, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eulerci")).env("EULERCI_THREADS", threads).args(args).output().expect("binary runs")
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Defect column of a report TSV, initial row first.
fn defects(tsv: &str) -> Vec<f64> {
    let mut lines = tsv.lines().filter(|l| !l.starts_with('#'));
    let head: Vec<&str> = lines.next().unwrap().split('\t').collect();
    let col = head.iter().position(|h| *h == "defect").unwrap();
    lines.map(|l| l.split('\t').nth(col).unwrap().parse().unwrap()).collect()
}

#[test]
fn hull_report_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = eulerci(&["hull", "--r", "1", "--res", "81", "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let got = std::fs::read_to_string(dir.path().join("report.tsv")).unwrap();
    let want = std::fs::read_to_string(golden("hull_r1_res81.tsv")).unwrap();
    assert_eq!(got, want);
    assert!(got.lines().any(|l| l.starts_with("witness\t0.600000,0.000000,0.000000\tgap=-0.140000000000\tf=1.200000000000\toccupied=false")));
    for f in ["occupancy.fld1", "slices.tsv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn coarse_hull_is_symmetric() {
    let dir = tempfile::tempdir().unwrap();
    let out = eulerci(&["hull", "--r", "1", "--res", "3", "--out", path(dir.path())]);
    assert!(out.status.success());
    let bytes = std::fs::read(dir.path().join("occupancy.fld1")).unwrap();
    let body = &bytes[bytes.windows(5).position(|w| w == b"\nend\n").unwrap() + 5..];
    let occ: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    assert_eq!(occ.len(), 27);
    let at = |i: usize, j: usize, k: usize| occ[(i * 3 + j) * 3 + k];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                assert_eq!(at(i, j, k), at(2 - i, j, k));
                assert_eq!(at(i, j, k), at(i, 2 - j, k));
            }
        }
    }
}

#[test]
fn missing_level_is_a_usage_error() {
    let out = eulerci(&["hull", "--res", "3"]);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(err.contains("--r") && err.contains("Usage"), "{err}");
}

#[test]
fn laminate_examples() {
    let out = eulerci(&["laminate", "--point", "0,0,0", "--r", "1"]);
    assert!(out.status.success());
    let lam = read_lam1(&text(&out.stdout)).unwrap();
    assert_eq!(lam.atoms().len(), 4);
    assert!(lam.atoms().iter().all(|a| a.weight == 0.25));

    let out = eulerci(&["laminate", "--point", "1,0,0.5", "--r", "1"]);
    let lam = read_lam1(&text(&out.stdout)).unwrap();
    assert_eq!(lam.atoms().len(), 1);

    let out = eulerci(&["laminate", "--point", "2,0,0", "--r", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("not in the closed slice region"));
}

#[test]
fn built_field_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let lam = dir.path().join("centre.lam1");
    let fld = dir.path().join("centre.fld1");
    assert!(eulerci(&["laminate", "--point", "0,0,0", "--r", "1", "--out", path(&lam)]).status.success());
    let out = eulerci(&["build", "--laminate", path(&lam), "--eps", "0.1", "--n", "64", "--out", path(&fld)]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let out = eulerci(&["verify", path(&fld)]);
    assert!(out.status.success(), "{}", text(&out.stdout));
}

#[test]
fn shear_run_decreases_and_repeats_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for threads in ["1", "2"] {
        let fld = dir.path().join(format!("shear{threads}.fld1"));
        let out = eulerci_threads(
            threads,
            &["integrate", "--flow", "shear2d", "--profile", "const:0.5+e0", "--stages", "3", "--seed", "7", "--field", path(&fld)],
        );
        assert!(out.status.success(), "{}", text(&out.stderr));
        assert!(text(&out.stderr).contains("approximate solution only"));
        reports.push((out.stdout, std::fs::read(&fld).unwrap()));
    }
    assert_eq!(reports[0], reports[1]);
    let d = defects(&text(&reports[0].0));
    assert_eq!(d.len(), 4);
    assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
    let out = eulerci(&["verify", path(&dir.path().join("shear1.fld1"))]);
    assert!(out.status.success(), "{}", text(&out.stdout));
}

#[test]
fn reference_and_quarter_cell_logs_match_golden() {
    let out = eulerci(&["integrate"]);
    assert!(out.status.success());
    assert_eq!(text(&out.stdout), std::fs::read_to_string(golden("reference_seed1.tsv")).unwrap());
    let out = eulerci(&["integrate", "--stages", "1", "--cells", "4", "--cutoff", "0.12", "--periods", "7", "--levels", "1", "--seed", "3"]);
    assert!(out.status.success());
    assert_eq!(text(&out.stdout), std::fs::read_to_string(golden("quarter_cells_seed3.tsv")).unwrap());
}

#[test]
fn golden_field_verifies_and_corruption_is_named() {
    let gold = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden/zero_n16.fld1");
    let out = eulerci(&["verify", path(&gold)]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stdout));

    // break div v with a compressive bump in v1
    let mut f = read_fld1(&std::fs::read(&gold).unwrap()).unwrap();
    let grid = f.grid();
    for (i, x) in f.components_mut()[0].iter_mut().enumerate() {
        *x += 1e-3 * (std::f64::consts::TAU * grid.point(i)[0]).cos();
    }
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.fld1");
    std::fs::write(&bad, write_fld1(&f)).unwrap();
    let out = eulerci(&["verify", path(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("divergence residual"), "{}", text(&out.stderr));

    // a NaN in the body
    let mut bytes = std::fs::read(&gold).unwrap();
    let n = bytes.len();
    bytes[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
    std::fs::write(&bad, &bytes).unwrap();
    let out = eulerci(&["verify", path(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("finite values"));

    // truncated file
    std::fs::write(&bad, &bytes[..n - 3]).unwrap();
    assert_eq!(eulerci(&["verify", path(&bad)]).status.code(), Some(1));
}

#[test]
fn config_file_feeds_options_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "[integrate]\nflow = \"shear2d\"\nparams = { amp = 0.3 }\nprofile = \"const:0.5+e0\"\nstages = 1\nN = 32\nseed = 4\n",
    )
    .unwrap();
    let out = eulerci(&["integrate", "--config", path(&cfg)]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let s = text(&out.stdout);
    assert!(s.starts_with("# flow=shear2d profile=const:0.5+e0 seed=4"), "{s}");
    assert_eq!(defects(&s).len(), 2);

    let out = eulerci(&["integrate", "--config", path(&cfg), "--seed", "9", "--stages", "2"]);
    let s = text(&out.stdout);
    assert!(s.starts_with("# flow=shear2d profile=const:0.5+e0 seed=9"));
    assert_eq!(defects(&s).len(), 3);

    std::fs::write(&cfg, "[integrate]\nflow = \"zero\"\ncell_size = 4\n").unwrap();
    let out = eulerci(&["integrate", "--config", path(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("cell_size"));

    std::fs::write(&cfg, "[integrate]\nflow = \"vortex\"\n").unwrap();
    assert_eq!(eulerci(&["integrate", "--config", path(&cfg)]).status.code(), Some(2));
}

#[test]
fn bad_schedules_and_thread_settings_are_config_errors() {
    assert_eq!(eulerci(&["integrate", "--cells", "4,2", "--stages", "2"]).status.code(), Some(2));
    assert_eq!(eulerci(&["integrate", "--profile", "linear:1"]).status.code(), Some(2));
    assert_eq!(eulerci_threads("zero", &["laminate", "--point", "0,0,0", "--r", "1"]).status.code(), Some(2));
}

#[test]
fn every_subcommand_has_a_selftest() {
    for sub in ["hull", "laminate", "build", "integrate", "verify", "rigidity"] {
        let out = eulerci(&[sub, "--selftest"]);
        let s = text(&out.stdout);
        assert!(out.status.success(), "{sub}: {s}{}", text(&out.stderr));
        assert!(s.lines().all(|l| l.starts_with("PASS")) && !s.is_empty(), "{s}");
    }
}

#[test]
fn rigidity_report_lists_the_computables() {
    let out = eulerci(&["rigidity", "--samples", "200", "--n", "128", "--frequencies", "4,8,16"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let s = text(&out.stdout);
    let value = |key: &str| s.lines().find_map(|l| l.strip_prefix(&format!("{key}\t"))).unwrap().to_string();
    assert_eq!(value("direction_verdict_mismatches"), "0");
    assert!(value("g_identity_error").parse::<f64>().unwrap() < 1e-12);
    assert_eq!(value("g_strictly_convex"), "true");
    assert_eq!(s.lines().filter(|l| l.starts_with("exact\t")).count(), 3);
    assert_eq!(s.lines().filter(|l| l.starts_with("corrupted\t")).count(), 3);
}
