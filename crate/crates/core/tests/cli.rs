use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fedpoison"));
    c.env_remove("FEDPOISON_OUTPUT_ROOT");
    c
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

const TINY: &str = r#"
seed = 3
output_dir = "tiny"

[dataset]
kind = "synthetic"
classes = 4
dim = 8
train = 400
test = 100
server_shard = 40

[fl]
clients = 8
per_round = 4
rounds = 10
hidden = [16]

[attack]
kind = "vague_gan"
fraction = 0.25

[gan]
kappa = 0.2
epochs = 40
noise_dim = 8
gen_hidden = [16, 16]
disc_hidden = [16, 16]

[defense]
kind = "mcd"
mcd = { period = 10 }

[report]
tail = 10
"#;

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn help_exits_zero() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("gradcheck"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&bin().arg("frobnicate").output().unwrap()), 1);
    assert_eq!(code(&bin().args(["sweep", "x.toml"]).output().unwrap()), 1);
}

#[test]
fn config_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("absent.toml");
    assert_eq!(code(&bin().arg("run").arg(&missing).output().unwrap()), 1);

    let unknown = write(tmp.path(), "unknown.toml", &format!("{TINY}\nbogus_key = 1\n"));
    let out = bin().arg("run").arg(&unknown).output().unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_key"));

    let invalid = write(tmp.path(), "bad.toml", &TINY.replace("per_round = 4", "per_round = 40"));
    assert_eq!(code(&bin().arg("run").arg(&invalid).output().unwrap()), 1);
}

#[test]
fn gradcheck_tolerance_controls_exit() {
    let ok = bin().args(["gradcheck", "--models", "4", "--seed", "1"]).output().unwrap();
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("max_relative_error="));
    let strict = bin()
        .args(["gradcheck", "--models", "4", "--tolerance", "1e-300"])
        .output()
        .unwrap();
    assert_eq!(code(&strict), 2);
}

#[test]
fn run_honours_output_root_and_detect_reads_its_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "tiny.toml", TINY);
    let root = tmp.path().join("root");
    let out = bin()
        .arg("run")
        .arg(&cfg)
        .env("FEDPOISON_OUTPUT_ROOT", &root)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let bundle = root.join("tiny");
    for f in ["metrics.csv", "metrics_clean.csv", "traces.csv", "detections.json", "manifest.json"] {
        assert!(bundle.join(f).is_file(), "missing {f}");
    }
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary.is_object());

    let mcd = write(tmp.path(), "mcd.toml", "period = 10\n");
    let det = bin().arg("detect").arg(bundle.join("traces.csv")).arg(&mcd).output().unwrap();
    assert_eq!(code(&det), 0, "{}", String::from_utf8_lossy(&det.stderr));
    let reports: serde_json::Value = serde_json::from_slice(&det.stdout).unwrap();
    assert_eq!(reports.as_array().map(Vec::len), Some(1));

    let bad_mcd = write(tmp.path(), "bad_mcd.toml", "period = 0\n");
    let det = bin().arg("detect").arg(bundle.join("traces.csv")).arg(&bad_mcd).output().unwrap();
    assert_eq!(code(&det), 1);

    // rerunning from the manifest reproduces every CSV byte for byte
    let again = tmp.path().join("again");
    let out = bin()
        .arg("run")
        .arg(bundle.join("manifest.json"))
        .arg("--out")
        .arg(&again)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["metrics.csv", "metrics_clean.csv", "points.csv", "traces.csv"] {
        assert_eq!(
            std::fs::read(bundle.join(f)).unwrap(),
            std::fs::read(again.join(f)).unwrap(),
            "{f} differs"
        );
    }
}
