use std::path::{Path, PathBuf};
use std::process::Command;

use stark_cli::config::PotentialConfig;
use stark_cli::{parse_config_str, ExperimentConfig};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stark(sub: &str, config: &str, out: &Path, extra: &[&str]) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_stark"))
        .arg(sub)
        .arg("--config")
        .arg(configs().join(config))
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&o.stdout).to_string() + &String::from_utf8_lossy(&o.stderr);
    (o.status.code().unwrap(), text)
}

/// `(parameter, value, pass)` of a summary CSV.
fn summary(path: &Path) -> Vec<(String, f64, bool)> {
    let mut r = csv::Reader::from_path(path).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["experiment", "parameter", "value", "tolerance", "pass"]);
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[1].to_string(), rec[2].parse().unwrap(), &rec[4] == "true")
        })
        .collect()
}

#[test]
fn minimal_config_fills_defaults() {
    let cfg = parse_config_str("[potential]\nA = [0.25]\na = []\n", &[]).unwrap();
    let want = ExperimentConfig::with_potential(PotentialConfig {
        flux: vec![0.25],
        electric: vec![],
    });
    assert_eq!(cfg, want);
    assert_eq!(cfg.grid.m, 1024);
    assert_eq!(cfg.tolerances.spectrum, 1e-10);
}

#[test]
fn non_power_of_two_is_rejected_by_key() {
    let err = parse_config_str("[potential]\nA = [0.25]\n[grid]\nM = 300\n", &[]).unwrap_err();
    assert!(err.to_string().contains("grid.M"), "{err}");
}

#[test]
fn every_violation_is_listed() {
    let text = "[potential]\nA = [0.25]\nb = [1.0]\n[grid]\nM = 300\nQ = \"many\"\n[tolerances]\nkernel = -1.0\n";
    let err = parse_config_str(text, &[]).unwrap_err().to_string();
    for key in ["potential.b: unknown key", "grid.Q: expected integer, found string"] {
        assert!(err.contains(key), "{err}");
    }
    // invariants are checked once keys and types are clean
    let err = parse_config_str("[potential]\nA = [0.25]\n[grid]\nM = 300\nJ = 12\n[tolerances]\nkernel = -1.0\n", &[]).unwrap_err().to_string();
    for key in ["grid.M", "grid.J", "tolerances.kernel"] {
        assert!(err.contains(key), "{err}");
    }
    let err = parse_config_str("[grid]\nM = 512\n", &[]).unwrap_err().to_string();
    assert!(err.contains("potential.A: missing"), "{err}");
}

#[test]
fn cosine_config_round_trips() {
    let text = std::fs::read_to_string(configs().join("cosine.toml")).unwrap();
    let cfg = parse_config_str(&text, &[]).unwrap();
    assert_eq!(cfg.potential.flux, vec![0.3]);
    assert_eq!(cfg.potential.electric, vec![0.0, 2.0, 0.0, 0.0, 1.0]);
    let pot = cfg.potential.to_potential();
    let th = 0.7f64;
    assert!((pot.electric.eval(th) - (2.0 * th.cos() + (2.0 * th).sin())).abs() < 1e-14);
    let again = parse_config_str(&cfg.to_toml(), &[]).unwrap();
    assert_eq!(again, cfg);
    assert_eq!(again.to_toml(), cfg.to_toml());
}

#[test]
fn overrides_are_typed_and_checked() {
    let base = "[potential]\nA = [0.25]\n";
    let cfg = parse_config_str(base, &["grid.M=512".into(), "experiment.heat_t=1".into(), "potential.a=[2, 2]".into()]).unwrap();
    assert_eq!(cfg.grid.m, 512);
    assert_eq!(cfg.experiment.heat_t, 1.0);
    assert_eq!(cfg.potential.electric, vec![2.0, 2.0]);
    let err = parse_config_str(base, &["grid.X=3".into(), "novalue".into()]).unwrap_err().to_string();
    assert!(err.contains("grid.X: unknown key") && err.contains("novalue"), "{err}");
}

#[test]
fn spectrum_of_free_flux() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = stark("spectrum", "free_flux.toml", dir.path(), &[]);
    assert_eq!(code, 0, "{text}");
    let rows = summary(&dir.path().join("spectrum.csv"));
    assert!(rows[0].1 <= 1e-10 && rows[0].2, "{rows:?}");
    let mut r = csv::Reader::from_path(dir.path().join("spectrum_table.csv")).unwrap();
    let mut n = 0;
    for rec in r.records() {
        let rec = rec.unwrap();
        let (j, k, mu_sq): (f64, u8, f64) = (rec[0].parse().unwrap(), rec[1].parse().unwrap(), rec[2].parse().unwrap());
        let want = if k == 1 { (j - 0.25).powi(2) } else { (j + 0.25).powi(2) };
        assert!((mu_sq - want).abs() <= 1e-10 * want, "j={j} k={k}: {mu_sq} vs {want}");
        n += 1;
    }
    assert!(n >= 100);
}

#[test]
fn intertwine_check_without_electric_potential() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = stark("intertwine-check", "intertwine.toml", dir.path(), &["--override", "potential.a=[]", "--override", "grid.M=512"]);
    assert_eq!(code, 0, "{text}");
    let rows = summary(&dir.path().join("intertwine-check.csv"));
    assert_eq!(rows.len(), 5);
    for (p, v, pass) in rows {
        assert!(pass && v <= 1e-10, "{p}: {v:e}");
    }
}

#[test]
fn propagate_reports_the_decay_slope() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = stark("propagate", "shifted_cosine.toml", dir.path(), &[]);
    assert_eq!(code, 0, "{text}");
    let rows = summary(&dir.path().join("propagate.csv"));
    assert!(rows.iter().all(|r| r.2 && r.1 <= 0.1), "{rows:?}");
    let table = std::fs::read_to_string(dir.path().join("decay_table.csv")).unwrap();
    assert!(table.starts_with("t,sup\n") && table.lines().count() == 8);
}

#[test]
fn identical_runs_are_byte_identical() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["--override", "grid.M=512", "--seed", "11"];
    let ca = stark("intertwine-check", "intertwine.toml", a.path(), &args).0;
    let cb = stark("intertwine-check", "intertwine.toml", b.path(), &args).0;
    assert!(ca == cb && ca <= 1, "{ca} {cb}");
    stark("intertwine-check", "intertwine.toml", c.path(), &["--override", "grid.M=512", "--seed", "12"]);
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(a.path(), "intertwine-check.csv"), read(b.path(), "intertwine-check.csv"));
    assert_ne!(read(a.path(), "intertwine-check.csv"), read(c.path(), "intertwine-check.csv"));
    let m: serde_json::Value = serde_json::from_slice(&read(a.path(), "manifest.json")).unwrap();
    assert_eq!(m["seed"], 11);
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    let m2: serde_json::Value = serde_json::from_slice(&read(b.path(), "manifest.json")).unwrap();
    assert_eq!(m["config_sha256"], m2["config_sha256"]);
    // the resolved config reproduces the hash
    let cfg = parse_config_str(&String::from_utf8(read(a.path(), "config.toml")).unwrap(), &[]).unwrap();
    assert_eq!(stark_cli::output::config_hash(&cfg), m["config_sha256"].as_str().unwrap());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = stark("spectrum", "free_flux.toml", dir.path(), &["--override", "grid.M=300"]);
    assert_eq!(code, 2);
    assert!(text.contains("grid.M"), "{text}");
    // a wave reaching the outer edge of the grid is a resolution failure
    let (code, text) = stark(
        "propagate",
        "shifted_cosine.toml",
        dir.path(),
        &["--override", "grid.r_max=40", "--override", "grid.M=1024", "--override", "experiment.times=[8, 64]"],
    );
    assert_eq!(code, 3, "{text}");
    // the form condition fails for a = 2cos θ + sin 2θ
    let (code, text) = stark("intertwine-check", "cosine.toml", dir.path(), &["--override", "grid.M=512", "--override", "grid.Q=32", "--override", "grid.J=8"]);
    assert_eq!(code, 2);
    assert!(text.contains("form condition"), "{text}");
    // a failing check exits with 1 after writing its rows
    let (code, _) = stark("mellin-scan", "cosine.toml", dir.path(), &[]);
    assert_eq!(code, 1);
    assert!(summary(&dir.path().join("mellin-scan.csv")).iter().any(|r| !r.2));
}
