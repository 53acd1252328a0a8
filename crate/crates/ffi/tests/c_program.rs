//! Compiles and runs a small C program against the static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "mcsim.h"

int main(void) {
    double rates[4] = {1.0, 2.0, 0.0, 1.0};
    McsimDispenser *d = NULL;
    size_t i = 0;
    double total = 0.0;
    if (mcsim_dispenser_new(rates, 4, &d) != MCSIM_STATUS_OK) return 10;
    if (mcsim_dispenser_total(d, &total) != MCSIM_STATUS_OK || total != 4.0) return 11;
    if (mcsim_dispenser_select(d, 0.5, &i) != MCSIM_STATUS_OK || i != 1) return 12;
    mcsim_dispenser_free(d);

    McsimConfig *cfg = NULL;
    if (mcsim_config_parse("ising", "n = 4\ntemperature = 2.0\nhorizon = 1.0\n", &cfg) != MCSIM_STATUS_OK) return 13;
    McsimRun *run = NULL;
    if (mcsim_run(cfg, &run) != MCSIM_STATUS_OK) return 14;
    char buf[64];
    if (mcsim_run_metric(run, "final_magnetization", buf, sizeof buf, NULL) != MCSIM_STATUS_OK) return 15;
    mcsim_run_free(run);
    mcsim_config_free(cfg);

    if (mcsim_config_parse("ising", "n = 4\n", &cfg) != MCSIM_STATUS_CONFIG) return 16;
    size_t needed = 0;
    mcsim_last_error(NULL, 0, &needed);
    if (needed < 2) return 17;
    printf("ok %s\n", buf);
    return 0;
}
"#;

#[test]
fn c_program_links_and_runs() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler available; skipping");
        return;
    }
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libmcsim_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "compilation failed");
    let output = Command::new(&bin).output().unwrap();
    assert!(output.status.success(), "exit {:?}", output.status.code());
    assert!(String::from_utf8_lossy(&output.stdout).starts_with("ok "));
}
