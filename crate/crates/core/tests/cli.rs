use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const WORLDS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/worlds");

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_infobound"));
    c.env_remove("INFOBOUND_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let m: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| {
            let p = e["path"].as_str().unwrap().to_string();
            let bytes = std::fs::read(dir.join(&p)).unwrap();
            let hash = e["sha256"].as_str().unwrap();
            assert_eq!(hash.len(), 64);
            (p, bytes)
        })
        .collect()
}

/// Runs once from `args`, then again from the manifest, and compares every
/// listed output byte for byte.
fn assert_rerun_identical(sub: &str, args: &[&str]) {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let mut first = vec![sub];
    first.extend_from_slice(args);
    first.extend_from_slice(&["--out", s(&a)]);
    let o = run(&first);
    assert_eq!(code(&o), 0, "{sub}: {}", String::from_utf8_lossy(&o.stderr));
    let manifest = a.join("manifest.json");
    let o = run(&[sub, "--config", s(&manifest), "--out", s(&b)]);
    assert_eq!(code(&o), 0, "{sub} rerun: {}", String::from_utf8_lossy(&o.stderr));
    let (x, y) = (outputs(&a), outputs(&b));
    assert!(!x.is_empty());
    assert_eq!(x, y, "{sub}");
}

const NET: &str = r#"
[arch]
input_shape = [4, 1, 1]
num_classes = 2
hidden = [{ kind = "dense", out_dim = 2, activation = "tanh" }]

[data]
generator = "gaussian_blobs"
n = 20
feature_dim = 4
num_classes = 2
noise_level = 1.0

[train]
batch_size = 5
iterations = 20
grad_moment = 1.0
head_schedule = { kind = "inverse_square", c = 0.5 }
"#;

#[test]
fn bounds_example_reports_0_025() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write(
        tmp.path(),
        "inputs.json",
        r#"{"kind": "main", "L": 2, "eta": 0.25, "sigma": 0.5, "n": 50, "mi": 1}"#,
    );
    let out = tmp.path().join("out");
    let o = run(&["bounds", "--input", s(&input), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let report = stdout_json(&o);
    assert!((report["value"].as_f64().unwrap() - 0.025).abs() < 1e-15);
    assert_eq!(report["units"], "nats");
    let file: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(file, report);
}

#[test]
fn bounds_batch_writes_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write(
        tmp.path(),
        "batch.json",
        r#"[{"kind": "main", "L": 2, "eta": 0.25, "sigma": 0.5, "n": 50, "mi": 1},
            {"kind": "binary", "sigma": 0.5, "n": 100, "vc_dim": 5}]"#,
    );
    let out = tmp.path().join("out");
    assert_eq!(code(&run(&["bounds", "--input", s(&input), "--out", s(&out)])), 0);
    let csv = std::fs::read_to_string(out.join("bounds.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("kind,L,eta,sigma,n,mi,value"));
    assert!(lines.next().unwrap().starts_with("main,2,0.25,0.5,50,1,0.025"));
    assert!(lines.next().unwrap().starts_with("binary,"));
}

#[test]
fn bounds_from_toml_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "b.toml",
        "[inputs]\nkind = \"main\"\nL = 2\neta = 0.25\nsigma = 0.5\nn = 50\nmi = 1.0\n",
    );
    let o = run(&["bounds", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(code(&o), 0);
    assert!((stdout_json(&o)["value"].as_f64().unwrap() - 0.025).abs() < 1e-15);
}

#[test]
fn tinyworld_constant_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let world = format!("{WORLDS}/constant.json");
    let o = run(&["tinyworld", "--world", &world, "--out", s(tmp.path())]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["mi"].as_f64(), Some(0.0));
    assert_eq!(v["gap"].as_f64(), Some(0.0));
}

#[test]
fn tinyworld_two_point_golden() {
    let tmp = tempfile::tempdir().unwrap();
    let world = format!("{WORLDS}/two_point_erm.json");
    let o = run(&["tinyworld", "--world", &world, "--out", s(tmp.path())]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert!((v["gap"].as_f64().unwrap() - 0.192).abs() < 1e-15);
    assert!(v["soundness"]["holds"].as_bool().unwrap());
}

#[test]
fn check_shipped_corpus_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["check", "--out", s(tmp.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["violations"], 0);
    assert_eq!(v["worlds"], 6);
    assert!(v["lemma4_slack"]["max"].as_f64().unwrap() > 0.0);
    let csv = std::fs::read_to_string(tmp.path().join("check.csv")).unwrap();
    assert!(csv.starts_with("world,abs_gap,mi_last,lemma4_bound,lemma4_slack,theorem2_bound,theorem2_slack,holds\n"));
}

#[test]
fn check_corpus_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("corpus");
    std::fs::create_dir(&dir).unwrap();
    std::fs::copy(format!("{WORLDS}/identity.json"), dir.join("w.json")).unwrap();
    let o = run(&["check", "--corpus", s(&dir), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout_json(&o)["worlds"], 1);
}

#[test]
fn usage_and_config_errors_exit_1() {
    let o = run(&["bounds", "--bogus"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(code(&run(&["no-such-subcommand"])), 1);
    assert_eq!(code(&run(&[])), 1);

    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    // no seed anywhere
    let cfg = write(tmp.path(), "train.toml", NET);
    assert_eq!(code(&run(&["train", "--config", s(&cfg), "--out", s(&out)])), 1);
    // unknown key
    let bad = write(tmp.path(), "bad.toml", &format!("seed = 1\ntypo = 2\n{NET}"));
    assert_eq!(code(&run(&["train", "--config", s(&bad), "--out", s(&out)])), 1);
    // unparsable file
    let junk = write(tmp.path(), "junk.toml", "[[[");
    assert_eq!(code(&run(&["train", "--config", s(&junk), "--out", s(&out)])), 1);
    // invalid bound input
    let neg = write(
        tmp.path(),
        "neg.json",
        r#"{"kind": "main", "sigma": -1, "n": 5, "mi": 1}"#,
    );
    assert_eq!(code(&run(&["bounds", "--input", s(&neg), "--out", s(&out)])), 1);
    // bad thread count
    let o = bin()
        .env("INFOBOUND_THREADS", "zero")
        .args(["check", "--out", s(&out)])
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn manifest_from_other_subcommand_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    assert_eq!(code(&run(&["check", "--out", s(&a)])), 0);
    let o = run(&[
        "gap",
        "--config",
        s(&a.join("manifest.json")),
        "--out",
        s(&tmp.path().join("b")),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn unwritable_output_is_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let file = write(tmp.path(), "file", "");
    let o = run(&["check", "--out", s(&file.join("sub"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "t.toml", &format!("seed = 1\n{NET}"));
    let run_with = |extra: &[&str], dir: &str| {
        let out = tmp.path().join(dir);
        let mut args = vec!["train", "--config", s(&cfg), "--out", s(&out)];
        args.extend_from_slice(extra);
        assert_eq!(code(&run(&args)), 0);
        let m: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        (
            m["seed"].as_u64().unwrap(),
            std::fs::read(out.join("network.json")).unwrap(),
        )
    };
    let (s1, n1) = run_with(&[], "a");
    let (s2, n2) = run_with(&["--seed", "2"], "b");
    let (s3, n3) = run_with(&["--seed", "1"], "c");
    assert_eq!((s1, s2, s3), (1, 2, 1));
    assert_ne!(n1, n2);
    assert_eq!(n1, n3);
}

#[test]
fn manifest_records_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "t.toml", &format!("seed = 5\n{NET}"));
    let out = tmp.path().join("o");
    assert_eq!(
        code(&run(&[
            "train",
            "--config",
            s(&cfg),
            "--out",
            s(&out),
            "--threads",
            "2"
        ])),
        0
    );
    let m: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["subcommand"], "train");
    assert_eq!(m["config_path"], s(&cfg));
    assert_eq!(m["seed"], 5);
    assert_eq!(m["threads"], 2);
    assert_eq!(m["tool_version"], env!("CARGO_PKG_VERSION"));
    assert!(m["duration_secs"].as_f64().unwrap() >= 0.0);
    assert_eq!(m["config"]["arch"]["num_classes"], 2);
    let names: Vec<_> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["path"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["network.json", "trace.csv", "train_summary.json"]);
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,alpha,sigma,head_grad_sq,budget_increment,budget_total\n"));
    assert_eq!(trace.lines().count(), 21);
}

#[test]
fn every_subcommand_reruns_from_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let net = write(dir, "net.toml", &format!("seed = 3\nreplications = 30\n{NET}"));
    let train = write(dir, "train.toml", &format!("seed = 3\n{NET}"));
    let chain = write(
        dir,
        "chain.toml",
        &format!("seed = 3\nreplicas = 2\nprobe_size = 100\n{NET}"),
    );
    let sweep = write(
        dir,
        "sweep.toml",
        "seed = 3\ndepths = [0, 1, 2]\nreplications = 8\nchain_replicas = 2\nprobe_size = 100\n\
         [data]\ngenerator = \"two_moons_like\"\nn = 20\nfeature_dim = 8\nnum_classes = 2\n\
         [train]\nbatch_size = 5\niterations = 10\nhead_schedule = { kind = \"inverse_square\", c = 0.5 }\n",
    );
    let check = write(dir, "check.json", r#"{"seed": 2, "random_worlds": 20}"#);
    let world = format!("{WORLDS}/gibbs_three_points.json");
    let bounds = write(
        dir,
        "b.json",
        r#"[{"kind": "main", "L": 1, "eta": 0.5, "sigma": 1, "n": 10, "mi": 2}]"#,
    );

    assert_rerun_identical("train", &["--config", s(&train)]);
    assert_rerun_identical("mi-chain", &["--config", s(&chain)]);
    assert_rerun_identical("gap", &["--config", s(&net)]);
    assert_rerun_identical("stability", &["--config", s(&net), "--threads", "3"]);
    assert_rerun_identical(
        "gap",
        &[
            "--world",
            &world,
            "--seed",
            "4",
            "--config",
            s(&write(dir, "r.toml", "replications = 50")),
        ],
    );
    assert_rerun_identical("sweep", &["--config", s(&sweep)]);
    assert_rerun_identical("tinyworld", &["--world", &world]);
    assert_rerun_identical("check", &["--config", s(&check)]);
    assert_rerun_identical("bounds", &["--input", s(&bounds)]);
}

#[test]
fn sweep_plot_data_header() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "sweep.json",
        r#"{"seed": 1, "depths": [0, 2], "replications": 4, "chain_replicas": 2, "probe_size": 100,
            "data": {"generator": "gaussian_blobs", "n": 20, "feature_dim": 8, "num_classes": 2, "noise_level": 1.0},
            "train": {"batch_size": 5, "iterations": 10, "head_schedule": {"kind": "inverse_square", "c": 0.5}}}"#,
    );
    let out = tmp.path().join("o");
    assert_eq!(code(&run(&["sweep", "--config", s(&cfg), "--out", s(&out)])), 0);
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "L,mean_gap,stderr,mi_last,eta_geo,main_bound");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,"));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "g.toml", &format!("seed = 8\nreplications = 40\n{NET}"));
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(code(&run(&["stability", "--config", s(&cfg), "--out", s(&a)])), 0);
    let o = bin()
        .env("INFOBOUND_THREADS", "4")
        .args(["stability", "--config", s(&cfg), "--out", s(&b)])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(outputs(&a), outputs(&b));
}
