//! Every cargo example runs to completion. `cargo test` builds the examples
//! next to the test binaries, so they are run from there.

use std::path::PathBuf;
use std::process::Command;

const EXAMPLES: [&str; 9] = [
    "haar_norms",
    "r_estimates",
    "curvature",
    "operator_norms",
    "diagonal_factorization",
    "sign_selection",
    "rep_game",
    "gamma_selection",
    "factorize_pipeline",
];

fn examples_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    // target/<profile>/deps/<test binary>
    exe.parent().unwrap().parent().unwrap().join("examples")
}

#[test]
fn examples_run() {
    let dir = examples_dir();
    for name in EXAMPLES {
        let path = dir.join(format!("{name}{}", std::env::consts::EXE_SUFFIX));
        assert!(path.exists(), "{} was not built", path.display());
        let out = Command::new(&path).output().unwrap();
        assert!(out.status.success(), "{name} failed:\n{}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stdout.is_empty(), "{name} printed nothing");
    }
}
