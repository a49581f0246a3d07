//! Compiles a small C program against the generated header and, when the
//! static library is present, links and runs it.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "rede.h"

int main(void) {
    double model[9] = {0, 0, 0, 1, 0, 0, 0, 1, 0};
    double scene[9] = {1, 2, 3, 2, 2, 3, 1, 3, 3};
    RedePose pose;
    if (rede_kabsch_solve(model, scene, 3, &pose) != REDE_STATUS_OK) return 1;
    if (pose.t[0] < 0.999 || pose.t[0] > 1.001) return 2;
    if (rede_kabsch_solve(NULL, scene, 3, &pose) != REDE_STATUS_NULL_POINTER) return 3;
    char buf[64];
    if (rede_last_error(buf, sizeof buf) == 0) return 4;
    RedeEstimator *e = NULL;
    if (rede_estimator_new(model, 3, scene, 3, model, 3, -1.0, 0, &e) == REDE_STATUS_OK) return 5;
    rede_estimator_free(e);
    printf("%s\n", rede_version());
    return 0;
}
"#;

fn compiler() -> Option<String> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| {
            Command::new(c)
                .arg("--version")
                .output()
                .is_ok_and(|o| o.status.success())
        })
        .map(String::from)
}

fn staticlib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let profile_dir = exe.parent()?.parent()?;
    let lib = profile_dir.join("librede.a");
    lib.exists().then_some(lib)
}

#[test]
fn header_compiles_and_links() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler; skipped");
        return;
    };
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(include.join("rede.h").exists(), "header missing");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();

    let syntax = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .output()
        .unwrap();
    assert!(syntax.status.success(), "{}", String::from_utf8_lossy(&syntax.stderr));

    let Some(lib) = staticlib() else {
        eprintln!("static library not built; link step skipped");
        return;
    };
    let exe = dir.path().join("main");
    let link = Command::new(&cc)
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(link.status.success(), "{}", String::from_utf8_lossy(&link.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
