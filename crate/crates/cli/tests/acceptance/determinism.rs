//! Two full CLI chains with the same seed must write identical reports.

use std::path::Path;
use std::process::Command;

const SEED: &str = "11";
const STAGES: [&str; 4] = ["synth", "build", "train", "eval"];
/// Machine-readable outputs compared byte for byte (the manifest carries timestamps).
const REPORTS: [&str; 4] = ["synth_report.json", "build_report.json", "report.jsonl", "splits.tsv"];

fn chain(dir: &Path) -> Result<(), String> {
    for stage in STAGES {
        let out = Command::new(env!("CARGO_BIN_EXE_safer"))
            .args([stage, "--seed", SEED, "--out"])
            .arg(dir)
            .env("SAFER_LOG", "warn")
            .output()
            .map_err(|e| format!("spawning safer {stage}: {e}"))?;
        if !out.status.success() {
            return Err(format!(
                "safer {stage} exited with {}: {}",
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            ));
        }
    }
    Ok(())
}

pub fn run() -> Result<String, String> {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    chain(a.path())?;
    chain(b.path())?;
    let mut bytes = 0;
    for name in REPORTS {
        let x = std::fs::read(a.path().join(name)).map_err(|e| format!("{name}: {e}"))?;
        let y = std::fs::read(b.path().join(name)).map_err(|e| format!("{name}: {e}"))?;
        if x != y {
            return Err(format!("{name} differs between runs"));
        }
        bytes += x.len();
    }
    Ok(format!(
        "synth -> build -> train -> eval twice with --seed {SEED}: {} files ({bytes} bytes) identical",
        REPORTS.len()
    ))
}
