//! Golden cases for the `pgv` binary: each case records the exit code and
//! standard output of one invocation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

pub struct Case {
    pub name: String,
    pub args: Vec<String>,
}

pub const CORPUS: [&str; 6] = ["mul", "sum", "woops", "totally_fine", "sched", "unit_end"];

pub fn cases() -> Vec<Case> {
    let mut out = Vec::new();
    for prog in CORPUS {
        for cmd in ["check", "run", "graph"] {
            out.push(Case {
                name: format!("{prog}.{cmd}"),
                args: vec![cmd.into(), format!("../core/corpus/{prog}.pgv")],
            });
        }
    }
    for cmd in ["check", "run", "graph"] {
        out.push(Case {
            name: format!("woops.{cmd}.unchecked"),
            args: vec![cmd.into(), "--no-priority-check".into(), "../core/corpus/woops.pgv".into()],
        });
    }
    out.push(Case {
        name: "malformed.check".into(),
        args: vec!["check".into(), "tests/fixtures/malformed.pgv".into()],
    });
    out.push(Case { name: "missing.run".into(), args: vec!["run".into(), "tests/fixtures/missing.pgv".into()] });
    out
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn golden_path(case: &Case) -> PathBuf {
    manifest_dir().join("tests/golden").join(format!("{}.out", case.name))
}

/// Runs the binary and renders its result in golden-file form.
pub fn observe(case: &Case) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_pgv"))
        .args(&case.args)
        .current_dir(manifest_dir())
        .output()
        .expect("pgv binary runs");
    let code = out.status.code().expect("pgv exits normally");
    format!("# exit {code}\n{}", String::from_utf8(out.stdout).expect("utf-8 stdout"))
}

/// Compares one case against its golden file, or rewrites the file when
/// `UPDATE_GOLDEN` is set.
pub fn verify(case: &Case) -> Result<(), String> {
    let actual = observe(case);
    let path = golden_path(case);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, &actual).map_err(|e| format!("{}: {e}", path.display()))?;
        return Ok(());
    }
    let expected = read(&path)?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!("{}: expected\n{expected}\ngot\n{actual}", case.name))
    }
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}
