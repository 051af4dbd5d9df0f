use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include "zoomout.h"
#include <stdio.h>
#include <string.h>

int main(void) {
    const double v[] = {0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1};
    const uint32_t t[] = {0, 2, 1, 0, 1, 3, 0, 3, 2, 1, 2, 3};
    ZoMesh *mesh = NULL;
    if (zo_mesh_from_arrays(v, 4, t, 4, &mesh) != ZO_STATUS_OK) return 1;
    if (zo_mesh_vertex_count(mesh) != 4) return 2;
    ZoMesh *bad = NULL;
    if (zo_mesh_load(NULL, &bad) != ZO_STATUS_NULL_POINTER) return 3;
    if (strlen(zo_last_error()) == 0) return 4;
    ZoRefineConfig cfg = zo_refine_config_default();
    if (cfg.kmax_m != 120) return 5;
    zo_mesh_free(mesh);
    printf("%s\n", zo_version());
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // tests run from <target>/<profile>/deps/
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let lib = target_dir().join("libzoomout_ffi.a");
    assert!(include.join("zoomout.h").exists());
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let exe = dir.path().join("main");
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), env!("CARGO_PKG_VERSION"));
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
