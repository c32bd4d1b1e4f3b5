//! Compiles and runs a C program against the generated header and the
//! static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "strength_init.h"

int main(void) {
    SiMatrix *m = NULL, *r = NULL;
    if (si_init(SI_INIT_METHOD_KAIMING_UNIFORM, 128, 64, 1.0, 7, 0, 0, &m) != SI_STATUS_OK) return 10;
    if (si_rewire(m, SI_PASS_MODE_BIDIRECTIONAL, 7, 0, 0, &r) != SI_STATUS_OK) return 11;
    SiStrengthStats before, after;
    if (si_strength_stats(m, SI_SIDE_INPUT, &before) != SI_STATUS_OK) return 12;
    if (si_strength_stats(r, SI_SIDE_INPUT, &after) != SI_STATUS_OK) return 13;
    if (!(after.variance < before.variance)) return 14;
    if (si_init(42, 1, 1, 1.0, 0, 0, 0, &m) != SI_STATUS_INVALID_ARGUMENT) return 15;
    if (si_last_error() == NULL) return 16;
    printf("%zu %zu\n", si_matrix_rows(r), si_matrix_cols(r));
    si_matrix_free(m);
    si_matrix_free(r);
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler found; skipping");
        return;
    }
    let lib = target_dir().join("libstrength_init_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");

    let out = Command::new(&bin).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "C program failed: {out:?}");
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "128 64");
}
