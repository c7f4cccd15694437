//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p degenwave-cli --test acceptance -- --nocapture`.

use std::process::Command;
use std::time::Instant;

use degenwave_core::verify::{run_criterion, CriterionReport, Workspace, FULL};

fn criterion_cli(core_seconds: f64) -> CriterionReport {
    let start = Instant::now();
    let out = tempdir();
    let status = Command::new(env!("CARGO_BIN_EXE_degenwave"))
        .arg("verify")
        .env("DEGENWAVE_OUT", &out)
        .output();
    let (pass, detail) = match status {
        Ok(o) => {
            let lines = String::from_utf8_lossy(&o.stdout)
                .lines()
                .filter(|l| l.starts_with("criterion"))
                .count();
            let full_minutes = core_seconds / 60.0;
            (
                o.status.success() && lines == 6 && full_minutes < 40.0,
                format!(
                    "`degenwave verify` exit {:?} with {lines} criterion lines (6 expected); full suite {full_minutes:.1} min (< 40)",
                    o.status.code()
                ),
            )
        }
        Err(e) => (false, format!("could not launch degenwave: {e}")),
    };
    let _ = std::fs::remove_dir_all(&out);
    CriterionReport {
        id: 10,
        name: "cli verify",
        pass,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn tempdir() -> std::path::PathBuf {
    let p = std::env::temp_dir().join(format!("degenwave-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&p).unwrap();
    p
}

#[test]
fn acceptance() {
    let ws = Workspace::new();
    let mut reports = Vec::new();
    for id in FULL {
        let r = run_criterion(id, &ws);
        println!("{}", r.line());
        reports.push(r);
    }
    let total: f64 = reports.iter().map(|r| r.seconds).sum();
    let cli = criterion_cli(total);
    println!("{}", cli.line());
    reports.push(cli);
    let failed: Vec<u32> = reports.iter().filter(|r| !r.pass).map(|r| r.id).collect();
    println!(
        "acceptance: {}/{} criteria pass",
        reports.len() - failed.len(),
        reports.len()
    );
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
