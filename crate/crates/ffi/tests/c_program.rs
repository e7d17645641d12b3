//! Compiles a C program against the generated header and the static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "metablox.h"

int main(void) {
    MbxGraph *g = NULL;
    if (mbx_graph_from_edge_list("a b\nb c\nc a\n", true, &g) != MBX_STATUS_OK) return 1;
    uint32_t labels[3] = {0, 0, 0};
    MbxPartition *p = NULL;
    if (mbx_partition_new(labels, 3, &p) != MBX_STATUS_OK) return 2;
    double total = 0.0;
    if (mbx_dl(g, p, MBX_VARIANT_NDC, &total) != MBX_STATUS_OK) return 3;
    if (fabs(total - log(2187.0 / 48.0)) > 1e-9) return 4;
    MbxGraph *bad = NULL;
    if (mbx_graph_from_edge_list("x x\n", true, &bad) != MBX_STATUS_PARSE) return 5;
    if (mbx_last_error()[0] == '\0') return 6;
    mbx_partition_free(p);
    mbx_graph_free(g);
    printf("ok\n");
    return 0;
}
"#;

fn compiler() -> Option<String> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".to_string());
    Command::new(&cc).arg("--version").output().ok().map(|_| cc)
}

#[test]
fn header_compiles_and_links() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap().to_path_buf();
    let lib = profile_dir.join("libmetablox_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let work = tempfile::tempdir().unwrap();
    let src = work.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let bin = work.path().join("main");
    let status = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
