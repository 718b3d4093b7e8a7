use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mrbc::scenario;
use mrbc::trace::Trace;

fn mrbc(args: &[&str]) -> Output {
    mrbc_env(args, None)
}

fn mrbc_env(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mrbc"));
    cmd.args(args).env_remove("MRBC_SEED");
    if let Some(s) = seed {
        cmd.env("MRBC_SEED", s);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// The clean scenario, shortened, with `edit` applied to its TOML text.
fn write_clean(dir: &Path, file: &str, edit: impl Fn(String) -> String) -> PathBuf {
    let mut cfg = scenario::bundled("clean").unwrap();
    cfg.t_end = 0.5;
    let path = dir.join(file);
    std::fs::write(&path, edit(cfg.to_toml())).unwrap();
    path
}

#[test]
fn run_then_analyze_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_clean(dir.path(), "clean.toml", |s| s);
    let trace = dir.path().join("t.csv");
    let o = mrbc(&["run", "--config", p(&cfg), "--out", p(&trace)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let t = Trace::read_csv(std::fs::File::open(&trace).unwrap()).unwrap();
    assert_eq!((t.n, t.len()), (2, 501));

    let text = dir.path().join("r.txt");
    let o = mrbc(&["analyze", "--trace", p(&trace), "--config", p(&cfg), "--report", p(&text)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = std::fs::read_to_string(&text).unwrap();
    assert!(report.contains("samples = 501"), "{report}");
    assert!(report.contains("violations = 0"));

    let csv = dir.path().join("r.csv");
    let o = mrbc(&["analyze", "--trace", p(&trace), "--config", p(&cfg), "--report", p(&csv)]);
    assert_eq!(code(&o), 0);
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(rows.lines().count(), 2);
    assert!(rows.starts_with("samples,rho_ob,"));

    let svg = dir.path().join("p.svg");
    let o = mrbc(&["plot", "--trace", p(&trace), "--signals", "ebar,u_sat", "--out", p(&svg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    for (signals, out) in [("", "q.svg"), ("nonsense", "q.svg"), ("ebar", "q.png")] {
        let o = mrbc(&["plot", "--trace", p(&trace), "--signals", signals, "--out", p(&dir.path().join(out))]);
        assert_eq!(code(&o), 1, "{signals} {out}");
        assert!(!stderr(&o).is_empty());
    }
}

#[test]
fn run_reports_the_saved_report_and_bundled_names() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.csv");
    let report = dir.path().join("r.txt");
    let o = mrbc(&["run", "--config", "exp2", "--out", p(&trace), "--report", p(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("saturation: t = "));
    assert!(std::fs::read_to_string(&report).unwrap().contains("rho_ob = "));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");

    let tight = write_clean(dir.path(), "tight.toml", |s| {
        s.replace("u_min = -1000.0", "u_min = -0.001").replace("u_max = 1000.0", "u_max = 0.001")
    });
    let o = mrbc(&["run", "--config", p(&tight), "--out", p(&out)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("envelope violation in subsystem"));
    // samples up to the violation are still written
    assert!(!Trace::read_csv(std::fs::File::open(&out).unwrap()).unwrap().is_empty());

    // a huge second-state error overflows the estimator adaptation rate
    let blowup = write_clean(dir.path(), "blowup.toml", |s| {
        s.replace("x0 = [0.0, 0.41]", "x0 = [0.02, 1e160]").replace("xhat0 = [0.0, 0.4]", "xhat0 = \"reference\"")
    });
    let o = mrbc(&["run", "--config", p(&blowup), "--out", p(&out)]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("non-finite"));

    let bad = write_clean(dir.path(), "bad.toml", |s| s.replace("[hae]", "[hae]\nzeta = 1.0"));
    let o = mrbc(&["run", "--config", p(&bad), "--out", p(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("zeta"), "{}", stderr(&o));

    let o = mrbc(&["run", "--config", "no-such-scenario", "--out", p(&out)]);
    assert_eq!(code(&o), 1);
    let o = mrbc(&["run", "--config", p(&tight)]);
    assert_eq!(code(&o), 1);
    let o = mrbc(&["--help"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_clean(dir.path(), "noisy.toml", |s| s.replace("noise_sigma = []", "noise_sigma = [1e-5]"));
    let run = |seed: Option<&str>, file: &str| {
        let out = dir.path().join(file);
        let o = mrbc_env(&["run", "--config", p(&cfg), "--out", p(&out)], seed);
        (code(&o), std::fs::read_to_string(&out).unwrap_or_default(), stderr(&o))
    };
    let (c1, a, _) = run(Some("5"), "a.csv");
    let (c2, b, _) = run(Some("5"), "b.csv");
    let (c3, c, _) = run(Some("6"), "c.csv");
    let (c4, d, _) = run(None, "d.csv");
    assert_eq!((c1, c2, c3, c4), (0, 0, 0, 0));
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_ne!(a, d);

    let (code, _, err) = run(Some("-3"), "e.csv");
    assert_eq!(code, 1);
    assert!(err.contains("MRBC_SEED"), "{err}");
}

#[test]
fn sweep_writes_rows_and_checks_claims() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_clean(dir.path(), "clean.toml", |s| s);
    let grid = |claim: &str| {
        let path = dir.path().join("grid.toml");
        std::fs::write(
            &path,
            format!("[[param]]\npath = \"hae.lambda\"\nvalues = [50, 500]\n\n[[claim]]\nmetric = \"fitted_decay\"\ntrend = \"{claim}\"\n"),
        )
        .unwrap();
        path
    };
    let out = dir.path().join("s.csv");

    let o = mrbc(&["sweep", "--config", p(&cfg), "--grid", p(&grid("increasing")), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS fitted_decay"));
    let table = std::fs::read_to_string(&out).unwrap();
    let mut lines = table.lines();
    assert!(lines.next().unwrap().starts_with("index,hae.lambda,verdict,"));
    assert_eq!(lines.count(), 2);

    let o = mrbc(&["sweep", "--config", p(&cfg), "--grid", p(&grid("decreasing")), "--out", p(&out)]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL fitted_decay"));

    let o = mrbc(&["sweep", "--grid", p(&grid("increasing")), "--out", p(&out)]);
    assert_eq!(code(&o), 1, "a grid without a base needs --config");
}
