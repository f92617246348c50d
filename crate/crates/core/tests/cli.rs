use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qrflab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qrflab"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

const SWEEP: &str = "
[run]
seed = 11

[data]
dataset = synthetic
train_size = 200
test_size = 60
synthetic_dim = 6

[train]
epochs = 3

[experiment small]
model = qrf
n_qubits = 3, 4
layers = 2
inv_sigma = 1

[experiment rff]
model = rff
rff_features = 16
inv_sigma = 1

[spectral]
sources = bernoulli, permutation
n_qubits = 3
layers = 2
d = 8
trials = 200
";

#[test]
fn sweep_writes_csv_and_is_reproducible() {
    let dir = scratch("cli-sweep");
    std::fs::write(dir.join("exp.cfg"), SWEEP).unwrap();
    for out in ["a.csv", "b.csv"] {
        let o = qrflab(&["sweep", "--config", "exp.cfg", "--output", out, "--threads", "1"], &dir);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read_to_string(dir.join("a.csv")).unwrap();
    let b = std::fs::read_to_string(dir.join("b.csv")).unwrap();
    let mut reader = csv::Reader::from_reader(a.as_bytes());
    let header = reader.headers().unwrap().clone();
    let wall = header.iter().position(|h| h == "wall_time_seconds").unwrap();
    let strip = |text: &str| -> Vec<Vec<String>> {
        csv::Reader::from_reader(text.as_bytes())
            .records()
            .map(|r| r.unwrap().iter().enumerate().filter(|(i, _)| *i != wall).map(|(_, v)| v.to_string()).collect())
            .collect()
    };
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(strip(&a).len(), 3);
    assert!(a.lines().nth(1).unwrap().starts_with("1,small,qrf,3,2,1,1,8,0.75,200,60,11,"));

    let o = qrflab(&["sweep", "--config", "exp.cfg", "--seed", "12"], &dir);
    assert!(o.status.success());
    assert_ne!(strip(&String::from_utf8(o.stdout).unwrap()), strip(&a));
}

#[test]
fn spectral_subcommand() {
    let dir = scratch("cli-spectral");
    std::fs::write(dir.join("exp.cfg"), SWEEP).unwrap();
    let o = qrflab(&["spectral", "-c", "exp.cfg"], &dir);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("schema_version,source,N,L,d,sigma,trials,gamma_empirical"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn selftest_passes() {
    let dir = scratch("cli-selftest");
    let o = qrflab(&["selftest"], &dir);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().skip(1).all(|l| l.contains(",true,")), "{text}");
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = scratch("cli-errors");
    std::fs::write(dir.join("typo.cfg"), "[run]\nsede = 1\n").unwrap();
    let o = qrflab(&["sweep", "-c", "typo.cfg"], &dir);
    assert_eq!(o.status.code(), Some(7));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2") && err.contains("sede"), "{err}");

    let o = qrflab(&["sweep", "-c", "missing.cfg"], &dir);
    assert_eq!(o.status.code(), Some(8));

    std::fs::write(dir.join("noshots.cfg"), "[run]\nseed = 1\n").unwrap();
    let o = qrflab(&["shots", "-c", "noshots.cfg"], &dir);
    assert_eq!(o.status.code(), Some(7));

    std::fs::write(
        dir.join("nodata.cfg"),
        "[data]\ndir = nowhere\n[shots]\nn_qubits = 3\nshots = 16\nseeds = 1\n",
    )
    .unwrap();
    let o = qrflab(&["shots", "-c", "nodata.cfg"], &dir);
    assert_eq!(o.status.code(), Some(8));
    assert!(String::from_utf8_lossy(&o.stderr).contains("train-images-idx3-ubyte"));
}

#[test]
fn failing_experiment_is_recorded_not_fatal() {
    let dir = scratch("cli-partial");
    std::fs::write(
        dir.join("exp.cfg"),
        "[data]\ndataset = synthetic\ntrain_size = 50\ntest_size = 10\nsynthetic_dim = 3\n[train]\nepochs = 1\n\
         [experiment big]\nmodel = qdrf\nn_qubits = 15\nlayers = 1\n\
         [experiment ok]\nmodel = qrf_rff\nn_qubits = 3\n",
    )
    .unwrap();
    let o = qrflab(&["sweep", "-c", "exp.cfg"], &dir);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[1].contains("resource"));
    assert!(lines[2].ends_with(','));
}

#[test]
fn shipped_configs_parse() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "cfg") {
            qrflab::config::ConfigFile::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
