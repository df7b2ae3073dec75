use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use taskbandit::experiment::{
    COMPLETIONS_FILE, COMPLETION_COLUMNS, LOGFIT_FILE, META_FILE, PHASES_FILE, PHASE_COLUMNS, SUMMARY_FILE,
    TRACES_FILE, TRACE_COLUMNS,
};
use taskbandit::metrics::SUMMARY_COLUMNS;

fn taskbandit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taskbandit"))
        .args(args)
        .env_remove("TASKBANDIT_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const SMALL_RUN: &str = r#"
horizon = 3000
trials = 2
master_seed = 7
trace_stride = 10

[instance]
preset = "small-team"

[oracle]
mode = "exact"
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn preset_list_and_show() {
    let out = taskbandit(&["preset", "list"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for name in ["small-team-exact", "small-team-approx", "small-team-long"] {
        assert!(text.contains(name), "{text}");
    }
    let out = taskbandit(&["preset", "show", "small-team-approx"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("mode = \"approximate\""));
    assert_eq!(code(&taskbandit(&["preset", "show", "no-such-preset"])), 1);
}

#[test]
fn run_writes_outputs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL_RUN);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out_dir in [&a, &b] {
        let out = taskbandit(&[
            "run",
            config.to_str().unwrap(),
            "--output-dir",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert!(stdout(&out).contains("wrote"));
    }
    for (file, columns) in [
        (TRACES_FILE, TRACE_COLUMNS.join(",")),
        (SUMMARY_FILE, SUMMARY_COLUMNS.join(",")),
        (PHASES_FILE, PHASE_COLUMNS.join(",")),
        (COMPLETIONS_FILE, COMPLETION_COLUMNS.join(",")),
    ] {
        assert_eq!(header(&a.join(file)), columns, "{file}");
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    assert!(a.join(META_FILE).exists());
    assert!(a.join(LOGFIT_FILE).exists());

    let out = taskbandit(&["fit", a.join(SUMMARY_FILE).to_str().unwrap(), "--from", "500"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("[violation"), "{}", stdout(&out));
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    assert_eq!(code(&taskbandit(&["run", missing.to_str().unwrap()])), 1);

    let stray = write_config(dir.path(), &format!("{SMALL_RUN}bogus = 1\n"));
    let out = taskbandit(&["run", stray.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    let short = write_config(dir.path(), &SMALL_RUN.replace("horizon = 3000", "horizon = 500"));
    let out = taskbandit(&["run", short.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("horizon"));

    let not_summary = dir.path().join("other.csv");
    fs::write(&not_summary, "a,b\n1,2\n").unwrap();
    assert_eq!(code(&taskbandit(&["fit", not_summary.to_str().unwrap()])), 1);
}

#[test]
fn runtime_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL_RUN);
    let blocker = dir.path().join("not-a-directory");
    fs::write(&blocker, "").unwrap();
    let out = taskbandit(&[
        "run",
        config.to_str().unwrap(),
        "--output-dir",
        blocker.join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn readme_documents_output_columns() {
    let readme = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md")).unwrap();
    for columns in [
        TRACE_COLUMNS.join(","),
        SUMMARY_COLUMNS.join(","),
        PHASE_COLUMNS.join(","),
        COMPLETION_COLUMNS.join(","),
    ] {
        assert!(readme.contains(&columns), "README lacks `{columns}`");
    }
}
