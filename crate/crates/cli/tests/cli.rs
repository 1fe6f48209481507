use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use aatomo_core::io::{read_metrics, read_sinogram, write_sinogram};

const SMALL: &str = "\
n_b = 128
n_phi = 64
n_mode = 31
m_seq = 15
m_max = 8
k_h = 24
pitch = 0.03125
ray_step = 0.00390625
";

/// Narrow random bumps need more angular modes than `SMALL` carries.
const MID: &str = "n_b = 256\nn_phi = 128\nn_mode = 63\nm_seq = 31\n";

fn aatomo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aatomo")).args(args).env("AATOMO_THREADS", "1").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    fs::write(&path, format!("{SMALL}{extra}")).unwrap();
    path
}

fn run_in(cfg: &Path, out: &Path, verb: &[&str]) -> Output {
    let mut args = vec!["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(verb);
    aatomo(&args)
}

#[test]
fn print_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "attenuation = poly(0,0,1,0.5)\n");
    let first = run_in(&cfg, dir.path(), &["print-config"]);
    assert_eq!(code(&first), 0);
    let again = dir.path().join("again.cfg");
    fs::write(&again, &first.stdout).unwrap();
    let second = run_in(&again, dir.path(), &["print-config"]);
    assert_eq!(stdout(&first), stdout(&second));
    assert!(stdout(&first).contains("n_phi = 64"));
}

#[test]
fn zero_field_gives_zero_sinogram() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    assert_eq!(code(&run_in(&cfg, dir.path(), &["simulate"])), 0);
    let g = read_sinogram(&dir.path().join("sinogram.csv")).unwrap();
    assert_eq!((g.n_b, g.n_phi), (128, 64));
    assert!(g.values.iter().all(|&v| v == 0.0));
    assert!(dir.path().join("config.txt").exists());
}

#[test]
fn range_gate_accepts_simulated_and_rejects_perturbed_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &format!("{MID}scenario = random\nseed = 7\n"));
    assert_eq!(code(&run_in(&cfg, dir.path(), &["simulate"])), 0);
    let data = dir.path().join("sinogram.csv");
    let ok = run_in(&cfg, dir.path(), &["check-range", data.to_str().unwrap()]);
    assert_eq!(code(&ok), 0, "{}", stdout(&ok));
    assert!(stdout(&ok).contains("PASS even"));
    let metrics = read_metrics(&dir.path().join("range.txt")).unwrap();
    assert!(metrics.iter().any(|(k, v)| k == "residual_even" && *v < 1e-3));

    let mut g = read_sinogram(&data).unwrap();
    let eps = 1e-2 * g.sup_norm();
    for j in 0..g.n_b {
        for k in 0..g.n_phi {
            let i = j * g.n_phi + k;
            g.values[i] += 2.0 * eps * (g.beta(j) + 3.0 * g.phi(k)).cos();
        }
    }
    let bad = dir.path().join("perturbed.csv");
    write_sinogram(&bad, &g).unwrap();
    let rejected = run_in(&cfg, dir.path(), &["check-range", bad.to_str().unwrap()]);
    assert_eq!(code(&rejected), 1, "{}", stdout(&rejected));
    assert!(stdout(&rejected).contains("FAIL"));
    let refused = run_in(&cfg, dir.path(), &["reconstruct", bad.to_str().unwrap()]);
    assert_eq!(code(&refused), 1);
}

#[test]
fn reconstruct_writes_field_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &format!("{MID}scenario = random\nseed = 3\n"));
    assert_eq!(code(&run_in(&cfg, dir.path(), &["simulate"])), 0);
    let data = dir.path().join("sinogram.csv");
    let o = run_in(&cfg, dir.path(), &["reconstruct", data.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = read_metrics(&dir.path().join("metrics.txt")).unwrap();
    assert!(metrics.iter().any(|(k, _)| k == "residual_even"));
    let field = fs::read_to_string(dir.path().join("field.csv")).unwrap();
    assert!(field.starts_with("x1,x2,f1,f2\n"));
    assert!(dir.path().join("u0.csv").exists());
}

#[test]
fn h_validation_passes_and_detects_a_flipped_normal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "attenuation = poly(0,0,1,0.5)\n");
    let ok = run_in(&cfg, dir.path(), &["validate-h"]);
    assert_eq!(code(&ok), 0, "{}", stdout(&ok));
    let metrics = read_metrics(&dir.path().join("h_metrics.txt")).unwrap();
    let neg = metrics.iter().find(|(k, _)| k == "negative_mass").unwrap().1;
    assert!(neg < 1e-4);
    assert!(dir.path().join("h_modes.csv").exists());

    let flipped = run_in(&cfg, dir.path(), &["validate-h", "--debug-flip-perp"]);
    assert_eq!(code(&flipped), 1, "{}", stdout(&flipped));
    assert!(stdout(&flipped).contains("FAIL negative_mass"));
}

#[test]
fn confusion_pair_is_indistinguishable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "attenuation = poly(0,0,1,0.5)\npsi = gauss(0.1,-0.1,0.5,1)\n");
    let o = run_in(&cfg, dir.path(), &["confuse"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let m = read_metrics(&dir.path().join("confusion.txt")).unwrap();
    assert!(m[0].1 < 1e-6);
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = config(dir.path(), "n_phi = banana\n");
    assert_eq!(code(&run_in(&bad, dir.path(), &["print-config"])), 2);
    let unknown = config(dir.path(), "colour = blue\n");
    assert_eq!(code(&run_in(&unknown, dir.path(), &["print-config"])), 2);
    let cfg = config(dir.path(), "");
    assert_eq!(code(&run_in(&cfg, dir.path(), &["check-range", "/nonexistent/g.csv"])), 2);
    assert_eq!(code(&run_in(&cfg, dir.path(), &["confuse"])), 2);
    assert_eq!(code(&aatomo(&["frobnicate"])), 2);
    assert_eq!(code(&aatomo(&["--help"])), 0);
}

#[test]
fn simulation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "scenario = random\nseed = 11\nattenuation = poly(0,0,1,0.5)\n");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run_in(&cfg, &a, &["simulate"])), 0);
    assert_eq!(code(&run_in(&cfg, &b, &["simulate"])), 0);
    for name in ["sinogram.csv", "sinogram.meta", "truth_field.csv", "config.txt"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}
