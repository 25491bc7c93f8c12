//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use mvfusion::io::{generate_bundle, Preset, PresetName};
use mvfusion::objectives::LossParams;
use mvfusion::pipeline::prepare_frame;
use mvfusion::selfcheck::{self, constant_center_error_term, run_selfcheck, Artifacts, CheckOutcome};

struct Verdict {
    passed: bool,
    note: String,
}

fn from_check(outcome: mvfusion::Result<CheckOutcome>) -> Verdict {
    match outcome {
        Ok(o) if o.passed() => Verdict {
            passed: true,
            note: o.details.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" "),
        },
        Ok(o) => Verdict {
            passed: false,
            note: o.failures.join("; "),
        },
        Err(e) => Verdict {
            passed: false,
            note: format!("error: {e}"),
        },
    }
}

fn check(name: &str) -> Verdict {
    from_check(selfcheck::run_check(name, &mut Artifacts::discard()))
}

fn shapes() -> Verdict {
    let mut slowest = 0.0f64;
    for name in [PresetName::Atg4d, PresetName::Nuscenes] {
        let preset = Preset::get(name);
        let t = Instant::now();
        let frame = generate_bundle(&preset, 1, 0).and_then(|b| prepare_frame(&b, &preset));
        let secs = t.elapsed().as_secs_f64();
        if let Err(e) = frame {
            return Verdict {
                passed: false,
                note: format!("{name}: {e}"),
            };
        }
        slowest = slowest.max(secs);
    }
    let mut v = check("shape_fidelity");
    if slowest >= 5.0 {
        v.passed = false;
        v.note = format!("frame took {slowest:.2} s; {}", v.note);
    } else {
        v.note = format!("slowest_frame_s={slowest:.2} {}", v.note);
    }
    v
}

fn loss_round_trip() -> Verdict {
    let mut v = check("loss_round_trip");
    let stated = 0.90447;
    match constant_center_error_term(0.3, &LossParams::default()) {
        Ok(term) if (term - stated).abs() < 1e-5 => {}
        Ok(term) => {
            v.passed = false;
            v.note = format!(
                "constant 0.3 m center term is {term:.6} (0.045 times the decay sum over h=0..30), stated value {stated} not reproduced; round trip: {}",
                v.note
            );
        }
        Err(e) => {
            v.passed = false;
            v.note = format!("error: {e}");
        }
    }
    v
}

fn dir_bytes(dir: &Path) -> std::io::Result<Vec<(String, Vec<u8>)>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        files.push((entry.file_name().to_string_lossy().into_owned(), fs::read(entry.path())?));
    }
    files.sort();
    Ok(files)
}

fn determinism() -> Verdict {
    let run = || -> mvfusion::Result<(bool, Vec<(String, Vec<u8>)>)> {
        let dir = tempfile::tempdir()?;
        let report = run_selfcheck(dir.path())?;
        Ok((report.passed(), dir_bytes(dir.path())?))
    };
    match (run(), run()) {
        (Ok((_, a)), Ok((_, b))) => {
            let same = a == b;
            Verdict {
                passed: same && !a.is_empty(),
                note: format!(
                    "artifacts={} identical={same} ({})",
                    a.len(),
                    a.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>().join(", ")
                ),
            }
        }
        (Err(e), _) | (_, Err(e)) => Verdict {
            passed: false,
            note: format!("error: {e}"),
        },
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, f64, fn() -> Verdict); 9] = [
        ("shape fidelity", 30.0, shapes),
        ("projection oracle equivalence", 10.0, || check("projection_oracle")),
        ("convolution oracle", 10.0, || check("conv_oracle")),
        ("gradient correctness", 60.0, || check("gradient_oracle")),
        ("loss round-trip", 120.0, loss_round_trip),
        ("rotated IoU", 60.0, || check("rotated_iou")),
        ("metrics protocol", 5.0, || check("metrics_protocol")),
        ("ablation plumbing", 30.0, || check("ablation_plumbing")),
        ("determinism", f64::INFINITY, determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let mut v = run();
        let secs = t.elapsed().as_secs_f64();
        if secs >= *budget {
            v.passed = false;
            v.note = format!("over the {budget} s budget; {}", v.note);
        }
        failed += !v.passed as usize;
        println!(
            "criterion {}: {name}: {} ({secs:.2} s) {}",
            i + 1,
            if v.passed { "PASS" } else { "FAIL" },
            v.note
        );
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
