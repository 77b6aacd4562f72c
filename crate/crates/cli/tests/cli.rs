use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BASE: &str = r#"
schema_version = 1
[initial]
family = "deterministic"
coeffs = [0.1, 0.3, -0.2, 0.1]
[time]
horizon = 0.01
"#;

struct Sandbox {
    dir: TempDir,
}

impl Sandbox {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn root(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn config(&self, name: &str, body: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_nlch"))
            .args(args)
            .env("NLCH_OUTPUT_ROOT", self.root())
            .output()
            .unwrap()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("terminated by signal")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn only_subdir(p: &Path) -> PathBuf {
    let mut entries: Vec<_> = fs::read_dir(p).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(entries.len(), 1, "{entries:?}");
    entries.pop().unwrap()
}

#[test]
fn validate_accepts_the_minimal_config() {
    let s = Sandbox::new();
    let c = s.config("a.toml", BASE);
    let o = s.run(&["validate", c.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("verdict: PASS"));
    // Defaulted parameters are echoed.
    assert!(text.contains("noise.master_seed"));
    assert!(!text.contains("initial "));
}

#[test]
fn degenerate_kernel_is_a_validation_failure() {
    let s = Sandbox::new();
    let c = s.config("a.toml", &format!("{BASE}\n[kernel]\nfamily = \"constant\"\nlevel = 1.0\n"));
    let o = s.run(&["validate", c.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("verdict: FAIL"));
}

#[test]
fn parse_errors_exit_five() {
    let s = Sandbox::new();
    let unknown = s.config("u.toml", &format!("{BASE}\n[run]\nbogus = 1\n"));
    assert_eq!(code(&s.run(&["validate", unknown.to_str().unwrap()])), 5);
    let version = s.config("v.toml", &BASE.replace("schema_version = 1", "schema_version = 9"));
    assert_eq!(code(&s.run(&["validate", version.to_str().unwrap()])), 5);
    let broken = s.config("b.toml", "schema_version = ");
    assert_eq!(code(&s.run(&["validate", broken.to_str().unwrap()])), 5);
    assert_eq!(code(&s.run(&["no-such-command"])), 5);
    assert_eq!(code(&s.run(&["--help"])), 0);
}

#[test]
fn blow_up_exits_four() {
    let s = Sandbox::new();
    let c = s.config("a.toml", &format!("{BASE}blowup_threshold = 0.01\n"));
    let o = s.run(&["simulate", c.to_str().unwrap(), "--print", "none"]);
    assert_eq!(code(&o), 4);
    let dir = only_subdir(&s.root().join("simulate"));
    let csv = fs::read_to_string(dir.join("trajectory_0.csv")).unwrap();
    assert!(csv.contains("# status=blow_up:"), "{csv}");
}

#[test]
fn failed_verification_exits_three() {
    // An energy ratio no first-order scheme can reach.
    let s = Sandbox::new();
    let c = s.config("a.toml", &format!("{BASE}\n[verify]\nenergy_ratio = 50.0\nhalvings = 2\n"));
    let o = s.run(&["verify-energy", c.to_str().unwrap(), "--print", "none"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn config_hash_appears_in_every_output() {
    let s = Sandbox::new();
    let c = s.config("a.toml", &format!("{BASE}\n[run]\ngnuplot = true\n"));
    let o = s.run(&["simulate", c.to_str().unwrap(), "--print", "json"]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let hash = report["header"]["config_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 16);
    let dir = only_subdir(&s.root().join("simulate"));
    assert!(dir.ends_with(&hash));
    for e in fs::read_dir(&dir).unwrap() {
        let p = e.unwrap().path();
        let bytes = fs::read(&p).unwrap();
        let found = bytes.windows(hash.len()).any(|w| w == hash.as_bytes());
        assert!(found, "{} lacks the config hash", p.display());
    }
}

#[test]
fn hash_changes_with_content_and_overrides() {
    let s = Sandbox::new();
    let a = s.config("a.toml", BASE);
    let b = s.config("b.toml", &format!("{BASE}\n[noise]\nmaster_seed = 7\n"));
    let hash = |o: Output| -> String {
        let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        v["header"]["config_hash"].as_str().unwrap().to_string()
    };
    let ha = hash(s.run(&["validate", a.to_str().unwrap(), "--print", "json"]));
    let ha2 = hash(s.run(&["validate", a.to_str().unwrap(), "--print", "json"]));
    let hb = hash(s.run(&["validate", b.to_str().unwrap(), "--print", "json"]));
    assert_eq!(ha, ha2);
    assert_ne!(ha, hb);
}

#[test]
fn ensemble_resumes_and_is_idempotent() {
    let s = Sandbox::new();
    let c = s.config("a.toml", &format!("{BASE}\n[run]\npaths = [0, 5]\nshard_size = 2\nformats = [\"csv\"]\n"));
    let cs = c.to_str().unwrap();

    let o = s.run(&["ensemble", cs, "--shard", "1", "--print", "json"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["body"]["shards_run"], serde_json::json!([[2, 4]]));
    assert_eq!(v["body"]["shards_pending"].as_array().unwrap().len(), 2);
    assert!(v["body"]["summary"].is_null());

    let o = s.run(&["ensemble", cs, "--print", "json"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["body"]["shards_resumed"], serde_json::json!([[2, 4]]));
    assert_eq!(v["body"]["completed_paths"], 5);
    let dir = only_subdir(&s.root().join("ensemble"));
    let first = fs::read_to_string(dir.join("summary.csv")).unwrap();

    let o = s.run(&["ensemble", cs, "--print", "json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["body"]["shards_run"].as_array().unwrap().len(), 0);
    assert_eq!(fs::read_to_string(dir.join("summary.csv")).unwrap(), first);

    // A single full run writes the same summary.
    let s2 = Sandbox::new();
    let c2 = s2.config("a.toml", &fs::read_to_string(&c).unwrap());
    assert_eq!(code(&s2.run(&["ensemble", c2.to_str().unwrap(), "--print", "none"])), 0);
    let dir2 = only_subdir(&s2.root().join("ensemble"));
    assert_eq!(fs::read_to_string(dir2.join("summary.csv")).unwrap(), first);
}

#[test]
fn stored_paths_replay_the_same_trajectory() {
    let s = Sandbox::new();
    let c = s.config("a.toml", BASE);
    let cs = c.to_str().unwrap();
    assert_eq!(code(&s.run(&["simulate", cs, "--path-index", "3", "--print", "none"])), 0);
    let dir = only_subdir(&s.root().join("simulate"));
    let original = fs::read(dir.join("trajectory_3.bin")).unwrap();
    for ext in ["csv", "bin"] {
        let path = dir.join(format!("path_3.{ext}"));
        let copy = s.dir.path().join(format!("stored.{ext}"));
        fs::copy(&path, &copy).unwrap();
        let o = s.run(&["simulate", cs, "--path-index", "3", "--path-file", copy.to_str().unwrap(), "--print", "none"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(fs::read(dir.join("trajectory_3.bin")).unwrap(), original, "{ext}");
    }
}

#[test]
fn kernel_table_files_are_imported() {
    let s = Sandbox::new();
    // The default setup has 8 modes on a 16-point grid, so the padded
    // kernel lattice has 33 points at spacing 1/16.
    let mut table = String::from("# dims=1 shape=33\n");
    for i in -16i32..=16 {
        let x = i as f64 / 16.0;
        table.push_str(&format!("{x} {}\n", 2.0 + (-x * x / 0.1).exp()));
    }
    fs::write(s.dir.path().join("kernel.txt"), table).unwrap();
    let c = s.config("a.toml", &format!("{BASE}\n[kernel]\nfamily = \"table_file\"\npath = \"kernel.txt\"\n"));
    let o = s.run(&["validate", c.to_str().unwrap(), "--print", "json"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["config"]["kernel_source"].as_str().unwrap().ends_with("kernel.txt"));
    assert_eq!(v["config"]["solver"]["kernel"]["family"], "table");

    // Duplicate offsets are a parse error; a lattice of the wrong size fails validation.
    fs::write(s.dir.path().join("kernel.txt"), "# dims=1 shape=3\n0 1\n0 2\n1 1\n").unwrap();
    assert_eq!(code(&s.run(&["validate", c.to_str().unwrap()])), 5);
    fs::write(s.dir.path().join("kernel.txt"), "# dims=1 shape=3\n-1 3\n0 3\n1 3\n").unwrap();
    assert_eq!(code(&s.run(&["validate", c.to_str().unwrap()])), 2);
}

#[test]
fn output_root_flag_beats_environment() {
    let s = Sandbox::new();
    let c = s.config("a.toml", BASE);
    let alt = s.dir.path().join("alt");
    let o = s.run(&["validate", c.to_str().unwrap(), "--output-root", alt.to_str().unwrap(), "--print", "none"]);
    assert_eq!(code(&o), 0);
    assert!(alt.join("validate").is_dir());
    assert!(!s.root().exists());
}
