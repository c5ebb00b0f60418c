//! Pinned configurations shared by the golden-file tests and the acceptance run.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use tempered_ot::Variant;
use tempered_ot_cli::{Command, ConfigOverrides, ExperimentConfig};

pub const GOLDEN_SEED: u64 = 20240;

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// (file name, config writing into `dir`). All cells converge and are feasible.
pub fn golden_configs(dir: &Path) -> Vec<(&'static str, ExperimentConfig)> {
    let lambdas = vec![0.1, 0.25, 0.5, 1.0, 2.5, 5.0];
    let make = |command, file: &str, variant, t: Option<Vec<f64>>, lambda: Option<Vec<f64>>| {
        ExperimentConfig::resolve(
            command,
            ConfigOverrides {
                n: Some(16),
                trials: Some(5),
                master_seed: Some(GOLDEN_SEED),
                t_grid: t,
                lambda_grid: lambda,
                variant,
                output_path: Some(dir.join(file)),
                ..Default::default()
            },
        )
        .expect("golden config is valid")
    };
    vec![
        (
            "distance-sweep.csv",
            make(Command::DistanceSweep, "distance-sweep.csv", Some(Variant::Expected), None, Some(lambdas.clone())),
        ),
        (
            "convergence-sweep.csv",
            make(Command::ConvergenceSweep, "convergence-sweep.csv", Some(Variant::Expected), None, Some(lambdas.clone())),
        ),
        (
            "contraction-sweep.csv",
            make(Command::ContractionSweep, "contraction-sweep.csv", None, None, None),
        ),
        (
            "quality.csv",
            make(
                Command::Quality,
                "quality.csv",
                Some(Variant::Expected),
                Some(vec![1.0, 1.25, 1.5]),
                Some(vec![0.1, 0.5, 1.0]),
            ),
        ),
        (
            "sparsity-map.json",
            make(Command::SparsityMap, "sparsity-map.json", Some(Variant::Expected), None, None),
        ),
    ]
}

/// Extra files a command writes next to its main output.
pub fn companions(name: &str) -> Vec<String> {
    match name {
        "distance-sweep.csv" => vec!["distance-sweep.summary.csv".into()],
        "sparsity-map.json" => vec!["sparsity-map.txt".into()],
        _ => vec![],
    }
}
