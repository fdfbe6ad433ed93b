use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const D1: &str = r#"[kernel]
jump = [{ offset = "1", p = 0.7 }, { offset = "-1", p = 0.3 }]
"#;

fn config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn d1_config(dir: &Path, rho: f64, extra: &str) -> PathBuf {
    let body = format!(
        "seed = 7\nreplicas = 300\nrho = {rho}\nsigma_samples = 2000\n{extra}\n{D1}\n\
[pattern]\nkind = \"threshold\"\nlevel = 1\n\n[horizons]\ngrid = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]\n"
    );
    config(dir, "d1.toml", &body)
}

fn clanwalk(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_clanwalk"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn run(sub: &str, cfg: &Path, out: &Path) -> Output {
    clanwalk(
        &[
            sub,
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    )
}

fn manifest_value(out: &Path, key: &str) -> String {
    let text = fs::read_to_string(out.join("manifest.txt")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")).map(String::from))
        .unwrap_or_else(|| panic!("manifest has no {key}"))
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let mut rd = csv::Reader::from_path(path).unwrap();
    let j = rd
        .headers()
        .unwrap()
        .iter()
        .position(|h| h == name)
        .unwrap();
    rd.records()
        .map(|r| r.unwrap()[j].parse().unwrap())
        .collect()
}

#[test]
fn validate_reports_d1_fixtures() {
    let tmp = TempDir::new().unwrap();
    let cfg = d1_config(tmp.path(), 0.01, "");
    let out = tmp.path().join("out");
    let o = run("validate", &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let beta: f64 = manifest_value(&out, "tilt.beta").parse().unwrap();
    assert!((beta - (1.0 - 2.0 * 0.21f64.sqrt())).abs() < 1e-9);
    let lo: f64 = manifest_value(&out, "escape.lower").parse().unwrap();
    let hi: f64 = manifest_value(&out, "escape.upper").parse().unwrap();
    assert!(lo <= 0.4 + 1e-9 && hi >= 0.4 - 1e-9 && hi - lo < 1e-6);
    assert_eq!(manifest_value(&out, "status"), "ok");
    assert_eq!(manifest_value(&out, "subcommand"), "validate");
}

#[test]
fn tau_without_particles_survives() {
    let tmp = TempDir::new().unwrap();
    let cfg = d1_config(tmp.path(), 0.0, "");
    let out = tmp.path().join("out");
    let o = run("tau", &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p = column(&out.join("survival.csv"), "p_hat");
    assert_eq!(p.len(), 11);
    assert!(p.iter().all(|&x| x == 1.0));
}

#[test]
fn runs_are_reproducible_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = d1_config(tmp.path(), 0.2, "");
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = tmp.path().join(format!("out{threads}"));
        let o = clanwalk(
            &[
                "tau",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ],
            &[("CLANWALK_THREADS", threads)],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(out);
    }
    for f in ["survival.csv", "plateau.csv", "manifest.txt", "survival.gp"] {
        assert_eq!(
            fs::read(outputs[0].join(f)).unwrap(),
            fs::read(outputs[1].join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn seed_override_changes_the_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = d1_config(tmp.path(), 0.2, "");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run("tau", &cfg, &a).status.success());
    let o = clanwalk(
        &[
            "tau",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            b.to_str().unwrap(),
            "--seed",
            "8",
        ],
        &[],
    );
    assert!(o.status.success());
    assert_eq!(manifest_value(&b, "seed"), "8");
    assert_ne!(
        fs::read(a.join("survival.csv")).unwrap(),
        fs::read(b.join("survival.csv")).unwrap()
    );
}

#[test]
fn bad_configs_exit_2() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cases = [
        // Probabilities sum to 0.9.
        "seed = 1\nreplicas = 10\nrho = 0.1\n[kernel]\njump = [{ offset = \"1\", p = 0.6 }, { offset = \"-1\", p = 0.3 }]\n\
[pattern]\nkind = \"threshold\"\nlevel = 1\n[horizons]\ngrid = [0.0]\n",
        // Unknown key.
        "seed = 1\nreplicas = 10\nrho = 0.1\ncolour = 3\n[kernel]\njump = [{ offset = \"1\", p = 1.0 }]\n\
[pattern]\nkind = \"threshold\"\nlevel = 1\n[horizons]\ngrid = [0.0]\n",
        // Site with the wrong dimension.
        "seed = 1\nreplicas = 10\nrho = 0.1\n[kernel]\njump = [{ offset = \"1\", p = 0.7 }, { offset = \"-1\", p = 0.3 }]\n\
[pattern]\nkind = \"zero\"\nsites = [\"0,0\"]\n[horizons]\ngrid = [0.0]\n",
        "not toml at all [",
    ];
    for (i, body) in cases.iter().enumerate() {
        let cfg = config(tmp.path(), &format!("bad{i}.toml"), body);
        let o = run("tau", &cfg, &out);
        assert_eq!(
            o.status.code(),
            Some(2),
            "case {i}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let missing = tmp.path().join("absent.toml");
    assert_eq!(run("validate", &missing, &out).status.code(), Some(2));
}

#[test]
fn density_above_threshold_exits_3() {
    let tmp = TempDir::new().unwrap();
    let body = format!(
        "seed = 1\nreplicas = 10\nrho = 0.5\nsigma_samples = 2000\n{D1}\n\
[pattern]\nkind = \"threshold\"\nlevel = 1\n[horizons]\ngrid = [0.0, 1.0]\ninfinite = true\n"
    );
    let cfg = config(tmp.path(), "dense.toml", &body);
    let out = tmp.path().join("out");
    let o = run("yaglom", &cfg, &out);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(manifest_value(&out, "status").starts_with("error"));
}

#[test]
fn audit_passes_then_flags_a_tampered_file() {
    let tmp = TempDir::new().unwrap();
    let cfg = d1_config(tmp.path(), 0.3, "box_radius = 3");
    let out = tmp.path().join("out");
    let o = run("audit", &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(manifest_value(&out, "audit.violations"), "0");

    // A zero-pattern particle with no conditioned counterpart.
    let mut text = fs::read_to_string(out.join("slices.csv")).unwrap();
    text.push_str("0,zero,10,40,3\n");
    let tampered = tmp.path().join("tampered.csv");
    fs::write(&tampered, text).unwrap();
    let out2 = tmp.path().join("out2");
    let o = clanwalk(
        &[
            "audit",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out2.to_str().unwrap(),
            "--slices",
            tampered.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(
        o.status.code(),
        Some(5),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let audit = fs::read_to_string(out2.join("audit.csv")).unwrap();
    assert!(audit.contains("0,10,40,zero_above_conditioned"), "{audit}");
}

#[test]
fn plots_need_csv_files() {
    let tmp = TempDir::new().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let o = clanwalk(&["plots", "--out", empty.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(fs::read_dir(&empty).unwrap().count(), 0);

    let cfg = d1_config(tmp.path(), 0.2, "");
    let out = tmp.path().join("out");
    assert!(run("tau", &cfg, &out).status.success());
    let before = fs::read(out.join("survival.gp")).unwrap();
    let o = clanwalk(&["plots", "--out", out.to_str().unwrap()], &[]);
    assert!(o.status.success());
    let listed = String::from_utf8(o.stdout).unwrap();
    assert_eq!(listed.lines().count(), 2);
    assert_eq!(fs::read(out.join("survival.gp")).unwrap(), before);
    assert!(String::from_utf8(before)
        .unwrap()
        .contains("set datafile separator ','"));
}

#[test]
fn remaining_subcommands_write_their_outputs() {
    let tmp = TempDir::new().unwrap();
    let mu_extra = "box_radius = 5\n[mode]\nkind = \"nu_alpha\"\ndefault_ratio = 1.0\n\
alpha = [{ site = \"0\", ratio = 0.5 }]";
    let cases: [(&str, f64, &str, &[&str]); 4] = [
        (
            "oracle",
            0.1,
            "box_radius = 2",
            &["oracle.csv", "oracle_survival.csv"],
        ),
        (
            "clans",
            0.001,
            "",
            &[
                "clan.csv",
                "clan_generations.csv",
                "width_tail.csv",
                "width_tail.gp",
            ],
        ),
        ("mu", 0.3, mu_extra, &["mu.csv"]),
        ("mu", 0.3, "box_radius = 5", &["mu.csv"]),
    ];
    for (i, (sub, rho, extra, files)) in cases.iter().enumerate() {
        let dir = tmp.path().join(format!("case{i}"));
        fs::create_dir(&dir).unwrap();
        let cfg = d1_config(&dir, *rho, extra);
        let out = dir.join("out");
        let o = run(sub, &cfg, &out);
        assert!(
            o.status.success(),
            "{sub}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        for f in *files {
            assert!(out.join(f).is_file(), "{sub} did not write {f}");
        }
    }
    let s = column(&tmp.path().join("case2/out/mu.csv"), "mean");
    assert!(s.iter().all(|x| x.is_finite() && *x >= 0.0));
}
