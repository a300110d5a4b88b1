use std::path::{Path, PathBuf};
use std::process::Command;

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/lowertail.h")).unwrap();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
}

#[test]
fn c_program_links_against_static_library() {
    let lib = target_dir().join("liblowertail_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "lowertail.h"

int main(void) {
    lt_graph *k3 = NULL, *k4 = NULL;
    uint64_t count = 0;
    double eta = 0.0;
    char msg[128];
    if (lt_graph_builtin("K3", &k3) != LT_STATUS_OK) return 10;
    if (lt_graph_builtin("K4", &k4) != LT_STATUS_OK) return 11;
    if (lt_count_copies(k3, k4, &count) != LT_STATUS_OK || count != 4) return 12;
    if (lt_eta_threshold(3, &eta) != LT_STATUS_OK || eta < 0.32 || eta > 0.33) return 13;
    if (lt_graph_builtin("Q2", &k3) != LT_STATUS_INVALID_INPUT) return 14;
    if (lt_last_error_message(msg, sizeof msg) == 0) return 15;
    lt_graph_free(k4);
    printf("%.6f\n", eta);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler on PATH");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "0.322639");
}
