//! Experiment configuration: command defaults, JSON config files and flag overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tempered_ot::{Temperature, Variant};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    DistanceSweep,
    ConvergenceSweep,
    SparsityMap,
    ContractionSweep,
    Quality,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::DistanceSweep => "distance-sweep",
            Command::ConvergenceSweep => "convergence-sweep",
            Command::SparsityMap => "sparsity-map",
            Command::ContractionSweep => "contraction-sweep",
            Command::Quality => "quality",
        }
    }

    /// Schema tag written at the top of every output file.
    pub fn schema(&self) -> String {
        format!("{}/1", self.as_str())
    }

    fn default_n(&self) -> usize {
        match self {
            Command::SparsityMap => 32,
            _ => 64,
        }
    }

    fn default_trials(&self) -> usize {
        match self {
            Command::DistanceSweep => 20,
            Command::SparsityMap => 1,
            _ => 100,
        }
    }

    fn default_output(&self) -> PathBuf {
        match self {
            Command::SparsityMap => PathBuf::from("sparsity-map.json"),
            c => PathBuf::from(format!("{}.csv", c.as_str())),
        }
    }

    /// Whether the command runs both variants when none is given.
    fn covers_both_variants(&self) -> bool {
        matches!(self, Command::SparsityMap | Command::ContractionSweep | Command::Quality)
    }
}

impl std::fmt::Display for Command {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Temperatures where the measured seed can carry zeros.
pub const MEASURED_SIDE_T: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
/// Temperatures where the expected seed can carry zeros.
pub const EXPECTED_SIDE_T: [f64; 5] = [1.0, 1.25, 1.5, 1.75, 1.9];
/// Roughly log-spaced over `[0.1, 50]`.
pub const DEFAULT_LAMBDAS: [f64; 9] = [0.1, 0.25, 0.5, 1.0, 2.5, 5.0, 10.0, 25.0, 50.0];
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;
pub const SPARSITY_MEASURED_LAMBDA: f64 = 0.25;
/// Expected-variant sparsity maps use `λ = SPARSITY_EXPECTED_SCALE / t*`.
pub const SPARSITY_EXPECTED_SCALE: f64 = 6.0;

/// Optional settings, as read from a JSON file or gathered from flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub command: Option<Command>,
    pub n: Option<usize>,
    pub trials: Option<usize>,
    pub master_seed: Option<u64>,
    pub t_grid: Option<Vec<f64>>,
    pub lambda_grid: Option<Vec<f64>>,
    pub variant: Option<Variant>,
    pub output_path: Option<PathBuf>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

impl ConfigOverrides {
    pub fn from_json_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Fields set in `other` win.
    pub fn merge(self, other: ConfigOverrides) -> ConfigOverrides {
        ConfigOverrides {
            command: other.command.or(self.command),
            n: other.n.or(self.n),
            trials: other.trials.or(self.trials),
            master_seed: other.master_seed.or(self.master_seed),
            t_grid: other.t_grid.or(self.t_grid),
            lambda_grid: other.lambda_grid.or(self.lambda_grid),
            variant: other.variant.or(self.variant),
            output_path: other.output_path.or(self.output_path),
            tol: other.tol.or(self.tol),
            max_iter: other.max_iter.or(self.max_iter),
        }
    }
}

/// A validated experiment. Unset grids fall back to per-command, per-variant defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub n: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub t_grid: Option<Vec<f64>>,
    pub lambda_grid: Option<Vec<f64>>,
    pub variant: Option<Variant>,
    pub output_path: PathBuf,
    pub tol: f64,
    pub max_iter: usize,
}

impl ExperimentConfig {
    pub fn defaults(command: Command) -> Self {
        Self {
            command,
            n: command.default_n(),
            trials: command.default_trials(),
            master_seed: 0,
            t_grid: None,
            lambda_grid: None,
            variant: None,
            output_path: command.default_output(),
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn resolve(command: Command, o: ConfigOverrides) -> Result<Self, CliError> {
        if let Some(c) = o.command {
            if c != command {
                return Err(CliError::Config(format!(
                    "config file is for `{c}` but `{command}` was requested"
                )));
            }
        }
        let d = Self::defaults(command);
        let cfg = Self {
            command,
            n: o.n.unwrap_or(d.n),
            trials: o.trials.unwrap_or(d.trials),
            master_seed: o.master_seed.unwrap_or(d.master_seed),
            t_grid: o.t_grid,
            lambda_grid: o.lambda_grid,
            variant: o.variant,
            output_path: o.output_path.unwrap_or(d.output_path),
            tol: o.tol.unwrap_or(d.tol),
            max_iter: o.max_iter.unwrap_or(d.max_iter),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.n < 2 {
            return bad(format!("n = {}; need n >= 2", self.n));
        }
        if self.trials < 1 {
            return bad("trials must be at least 1".into());
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return bad(format!("need tol > 0 and max-iter >= 1 (got {}, {})", self.tol, self.max_iter));
        }
        if let Some(ts) = &self.t_grid {
            if ts.is_empty() {
                return bad("t grid is empty".into());
            }
            for &t in ts {
                Temperature::new(t).map_err(|e| CliError::Config(e.to_string()))?;
            }
        }
        if let Some(ls) = &self.lambda_grid {
            if ls.is_empty() {
                return bad("lambda grid is empty".into());
            }
            if let Some(l) = ls.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
                return bad(format!("lambda = {l}; need finite lambda >= 0"));
            }
        }
        for v in self.variants() {
            for t in self.t_grid_for(v) {
                self.check_grid_point(v, t)?;
            }
        }
        Ok(())
    }

    fn check_grid_point(&self, variant: Variant, t: f64) -> Result<(), CliError> {
        let bad = |m: &str| {
            Err(CliError::Config(format!("{}: {variant} variant at t = {t}: {m}", self.command)))
        };
        match (self.command, variant) {
            (Command::ContractionSweep, Variant::Expected) if t > 1.0 => {
                bad("the expected seed is only guaranteed positive for t <= 1")
            }
            (Command::ContractionSweep, Variant::Measured) if t < 1.0 => {
                bad("the measured seed is only guaranteed positive for t >= 1")
            }
            (Command::Quality, Variant::Measured) if t > 1.0 => {
                bad("the exact measured solver is defined for t <= 1")
            }
            _ => Ok(()),
        }
    }

    /// Variants the command runs, in output order.
    pub fn variants(&self) -> Vec<Variant> {
        match self.variant {
            Some(v) => vec![v],
            None if self.command.covers_both_variants() => vec![Variant::Expected, Variant::Measured],
            None => vec![Variant::Expected],
        }
    }

    pub fn t_grid_for(&self, variant: Variant) -> Vec<f64> {
        if let Some(ts) = &self.t_grid {
            return ts.clone();
        }
        let sparse_side = match variant {
            Variant::Expected => EXPECTED_SIDE_T,
            Variant::Measured => MEASURED_SIDE_T,
        };
        let positive_side = match variant {
            Variant::Expected => MEASURED_SIDE_T,
            Variant::Measured => EXPECTED_SIDE_T,
        };
        match self.command {
            Command::ContractionSweep => positive_side.to_vec(),
            _ => sparse_side.to_vec(),
        }
    }

    pub fn lambda_grid_for(&self, variant: Variant, temp: Temperature) -> Vec<f64> {
        if let Some(ls) = &self.lambda_grid {
            return ls.clone();
        }
        match (self.command, variant) {
            (Command::SparsityMap, Variant::Expected) => vec![SPARSITY_EXPECTED_SCALE / temp.t_star()],
            (Command::SparsityMap, Variant::Measured) => vec![SPARSITY_MEASURED_LAMBDA],
            _ => DEFAULT_LAMBDAS.to_vec(),
        }
    }

    /// Sibling of the output path with a different suffix, e.g. `out.summary.csv`.
    pub fn sibling_path(&self, suffix: &str) -> PathBuf {
        let stem = self
            .output_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.command.as_str().to_owned());
        self.output_path.with_file_name(format!("{stem}{suffix}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_command() {
        let d = ExperimentConfig::defaults(Command::DistanceSweep);
        assert_eq!((d.n, d.trials), (64, 20));
        let c = ExperimentConfig::defaults(Command::ConvergenceSweep);
        assert_eq!((c.n, c.trials, c.tol), (64, 100, 1e-10));
        assert_eq!(ExperimentConfig::defaults(Command::SparsityMap).n, 32);
    }

    #[test]
    fn grids_by_variant() {
        let c = ExperimentConfig::resolve(Command::ContractionSweep, ConfigOverrides::default()).unwrap();
        assert_eq!(c.variants(), vec![Variant::Expected, Variant::Measured]);
        assert_eq!(c.t_grid_for(Variant::Expected), MEASURED_SIDE_T.to_vec());
        let s = ExperimentConfig::resolve(Command::SparsityMap, ConfigOverrides::default()).unwrap();
        let t = Temperature::new(1.5).unwrap();
        assert_eq!(s.lambda_grid_for(Variant::Expected, t), vec![3.0]);
        assert_eq!(s.lambda_grid_for(Variant::Measured, t), vec![0.25]);
    }

    #[test]
    fn invalid_configs() {
        let o = |f: fn(&mut ConfigOverrides)| {
            let mut x = ConfigOverrides::default();
            f(&mut x);
            x
        };
        for bad in [
            o(|x| x.n = Some(1)),
            o(|x| x.trials = Some(0)),
            o(|x| x.t_grid = Some(vec![])),
            o(|x| x.t_grid = Some(vec![2.0])),
            o(|x| x.lambda_grid = Some(vec![-1.0])),
            o(|x| x.tol = Some(0.0)),
            o(|x| x.command = Some(Command::Quality)),
        ] {
            assert!(ExperimentConfig::resolve(Command::DistanceSweep, bad).is_err());
        }
        let x = ConfigOverrides {
            t_grid: Some(vec![1.5]),
            variant: Some(Variant::Expected),
            ..Default::default()
        };
        assert!(ExperimentConfig::resolve(Command::ContractionSweep, x.clone()).is_err());
        assert!(ExperimentConfig::resolve(Command::DistanceSweep, x).is_ok());
    }

    #[test]
    fn overrides_merge_and_parse() {
        let file: ConfigOverrides =
            serde_json::from_str(r#"{"n": 8, "variant": "measured", "lambda_grid": [1, 2]}"#).unwrap();
        let flags = ConfigOverrides {
            n: Some(16),
            ..Default::default()
        };
        let m = file.merge(flags);
        assert_eq!(m.n, Some(16));
        assert_eq!(m.variant, Some(Variant::Measured));
        assert!(serde_json::from_str::<ConfigOverrides>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn sibling_paths() {
        let mut c = ExperimentConfig::defaults(Command::DistanceSweep);
        c.output_path = PathBuf::from("/tmp/x/run.csv");
        assert_eq!(c.sibling_path(".summary.csv"), PathBuf::from("/tmp/x/run.summary.csv"));
    }
}
