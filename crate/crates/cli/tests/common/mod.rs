#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_vaporcell");

pub fn vaporcell(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("VAPORCELL_CONFIG")
        .output()
        .expect("spawn vaporcell")
}

/// Runs `args` in `dir` and returns stdout, panicking with stderr on failure.
pub fn ok(dir: &Path, args: &[&str]) -> String {
    let out = vaporcell(dir, args);
    assert!(
        out.status.success(),
        "vaporcell {} exited {:?}\n{}",
        args.join(" "),
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// `key = value` lines of a summary.
pub fn summary(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

pub fn value(text: &str, key: &str) -> f64 {
    summary(text)
        .get(key)
        .unwrap_or_else(|| panic!("no {key} in\n{text}"))
        .parse()
        .unwrap()
}

pub const IV_OHMIC: &str = "V,A\n0,0\n1,0.00198019801980198\n2,0.00396039603960396\n3,0.005940594059405941\n4,0.007920792079207921\n";
pub const RESIDUAL: &str = "mA,nT\n0,0.01\n10,1.35\n20,2.67\n30,4.03\n40,5.35\n";
pub const AGING: &str = "day,GHz\n0,16.38\n5,16.40\n10,16.37\n15,16.39\n20,16.38\n25,16.41\n30,16.38\n";

/// Every golden scenario: a sequence of commands run in one directory.
pub fn golden_cases() -> Vec<(&'static str, Vec<Vec<&'static str>>)> {
    vec![
        (
            "absorption",
            vec![
                vec!["simulate-absorption", "--out", "abs.csv", "--noise", "0.01"],
                vec!["fit-absorption", "--input", "abs.csv", "--out", "abs_fit.csv"],
            ],
        ),
        ("aging", vec![vec!["aging-report", "--input", "aging.csv"]]),
        ("sas", vec![vec!["simulate-sas", "--out", "sas.csv"]]),
        (
            "sns",
            vec![
                vec!["simulate-sns", "--out", "sns.csv", "--duration-s", "0.2"],
                vec!["fit-sns", "--input", "sns.csv", "--out", "sns_fit.csv"],
            ],
        ),
        (
            "hanle",
            vec![
                vec!["simulate-hanle", "--out-in-phase", "in.csv", "--out-quadrature", "quad.csv"],
                vec!["fit-hanle", "--in-phase", "in.csv", "--quadrature", "quad.csv"],
            ],
        ),
        (
            "modulated",
            vec![
                vec!["simulate-modulated", "--out", "mod.csv", "--test-field-nt", "1"],
                vec!["demodulate", "--input", "mod.csv", "--out", "demod.csv"],
            ],
        ),
        (
            "sensitivity",
            vec![
                vec!["simulate-modulated", "--quadrature-noise", "--out", "qn.csv"],
                vec!["calibrate-sensitivity", "--timeseries", "qn.csv", "--out", "sens.csv"],
            ],
        ),
        ("thermal", vec![vec!["simulate-thermal", "--out", "thermal.csv"]]),
        ("iv", vec![vec!["fit-iv", "--input", "iv.csv"]]),
        ("residual", vec![vec!["fit-residual-field", "--input", "residual.csv"]]),
    ]
}

/// Runs one golden scenario in `dir` with `seed`; returns the concatenated stdout.
pub fn run_case(dir: &Path, steps: &[Vec<&str>], seed: &str) -> String {
    fs::write(dir.join("iv.csv"), IV_OHMIC).unwrap();
    fs::write(dir.join("residual.csv"), RESIDUAL).unwrap();
    fs::write(dir.join("aging.csv"), AGING).unwrap();
    let mut stdout = String::new();
    for step in steps {
        let mut args = vec!["--seed", seed];
        args.extend(step.iter().copied());
        stdout.push_str(&ok(dir, &args));
    }
    stdout
}

/// Every file in `dir`, by name.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

/// Names of golden scenarios whose files or stdout differ between two runs.
pub fn nondeterministic_cases(seed: &str) -> Vec<String> {
    let mut bad = Vec::new();
    for (name, steps) in golden_cases() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let out_a = run_case(a.path(), &steps, seed);
        let out_b = run_case(b.path(), &steps, seed);
        let (snap_a, snap_b) = (snapshot(a.path()), snapshot(b.path()));
        if out_a != out_b || snap_a != snap_b {
            bad.push(name.to_string());
        }
    }
    bad
}
