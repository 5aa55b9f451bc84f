use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn wetting(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wetting"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn run_dir(out: &Path) -> std::path::PathBuf {
    let mut dirs: Vec<_> = fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.pop().unwrap()
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn unknown_key_exits_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let o = wetting(tmp.path(), &["--command", "verify", "gamma_typo=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gamma_typo"));
}

#[test]
fn unknown_key_in_config_file_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = tmp.path().join("bad.conf");
    fs::write(&conf, "command = simulate-spde\nn_spaec = 8\n").unwrap();
    let o = wetting(&tmp.path().join("out"), &["--config", conf.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_spaec"));
}

#[test]
fn malformed_value_exits_2_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let o = wetting(tmp.path(), &["--command", "simulate-continuum", "paths=many"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("paths"));
    let o = wetting(tmp.path(), &["--command", "simulate-continuum", "no-equals-sign"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_command_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(wetting(tmp.path(), &[]).status.code(), Some(2));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let runs = [("1", "a"), ("3", "b"), ("1", "c")].map(|(threads, sub)| {
        let out = tmp.path().join(sub);
        let o = wetting(
            &out,
            &["--command", "simulate-spde", "--seed", "11", "--threads", threads, "n_space=16", "replicas=6", "burn_in=0.05", "record_every=0.02", "records=2"],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let dir = run_dir(&out);
        (dir.file_name().unwrap().to_owned(), snapshot(&dir))
    });
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}

#[test]
fn every_artifact_embeds_the_config_digest() {
    let tmp = tempfile::tempdir().unwrap();
    let o = wetting(tmp.path(), &["--command", "simulate-continuum", "--seed", "5", "paths=200", "eta=0.4", "dt=0.01", "dump_paths=2"]);
    assert!(o.status.success());
    let dir = run_dir(tmp.path());
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    let digest = manifest["config_digest"].as_str().unwrap().to_string();
    assert!(dir.file_name().unwrap().to_string_lossy().ends_with(&digest[..12]));
    assert_eq!(manifest["params"]["paths"], "200");
    assert_eq!(manifest["params"]["kernel"], "0.01");
    for (name, bytes) in snapshot(&dir) {
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.contains(&digest), "{name} lacks the digest");
    }
}

#[test]
fn verify_subset_passes_with_report() {
    let tmp = tempfile::tempdir().unwrap();
    let o = wetting(tmp.path(), &["--command", "verify", "--seed", "20240611", "profile=smoke", "criteria=8"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("criterion 8"));
    let dir = run_dir(tmp.path());
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["criteria"][0]["id"], 8);
    assert!(dir.join("verdicts.json").exists());
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for name in ["acceptance.conf", "spde.conf"] {
        let text = fs::read_to_string(root.join(name)).unwrap();
        assert!(!text.is_empty());
    }
    let tmp = tempfile::tempdir().unwrap();
    let conf = root.join("acceptance.conf");
    let o = wetting(tmp.path(), &["--config", conf.to_str().unwrap(), "criteria=77"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("criteria"));
}
