//! Pipeline configuration: one JSON file plus command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tradenet::connectivity::FlowBasis;

use crate::CliError;

fn default_missingness() -> f64 {
    0.30
}

fn default_categorical() -> Vec<String> {
    vec!["landlocked".to_string()]
}

fn default_points() -> usize {
    30
}

fn default_folds() -> usize {
    10
}

fn default_k_grid() -> Vec<usize> {
    (1..=10).collect()
}

fn default_sbm_k_min() -> usize {
    1
}

fn default_sbm_k_max() -> usize {
    12
}

fn default_sbm_restarts() -> usize {
    20
}

/// How to pick the KNN imputation `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Imputation {
    /// `{"k": 5}`
    Fixed { k: usize },
    /// `{"cv": {"grid": [1, 2, 3], "folds": 10}}`
    Cv { cv: CvSettings },
}

impl Default for Imputation {
    fn default() -> Self {
        Imputation::Cv {
            cv: CvSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSettings {
    #[serde(default = "default_k_grid")]
    pub grid: Vec<usize>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Fraction of observed numeric cells masked per fold.
    #[serde(default)]
    pub mask_fraction: Option<f64>,
}

impl Default for CvSettings {
    fn default() -> Self {
        CvSettings {
            grid: default_k_grid(),
            folds: default_folds(),
            mask_fraction: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Bilateral-flow CSV (`reporter_iso3,partner_iso3,year,export_value_kusd`).
    pub flows: PathBuf,
    /// Node-attribute CSV (`iso3,year,<attributes>`).
    pub attributes: PathBuf,
    /// Recognized-country file, one iso3 per line.
    pub universe: PathBuf,
    /// Snapshot years; each gets its own output subdirectory.
    pub years: Vec<i32>,
    /// Columns with a missing fraction at or above this are dropped.
    #[serde(default = "default_missingness")]
    pub missingness_threshold: f64,
    /// Attribute columns treated as categorical.
    #[serde(default = "default_categorical")]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub imputation: Imputation,
    /// ERGM term list (JSON array); required by the `ergm` subcommand.
    #[serde(default)]
    pub ergm_model: Option<PathBuf>,
    /// Goodness-of-fit replicates; 0 skips the diagnostic.
    #[serde(default)]
    pub ergm_gof_replicates: usize,
    /// Sampler steps per replicate; default 20 n (n - 1).
    #[serde(default)]
    pub ergm_gof_steps: Option<usize>,
    /// Log-spaced points of the threshold sweep (plus the zero prefix).
    #[serde(default = "default_points")]
    pub connectivity_points: usize,
    #[serde(default)]
    pub connectivity_basis: FlowBasis,
    #[serde(default = "default_sbm_k_min")]
    pub sbm_k_min: usize,
    #[serde(default = "default_sbm_k_max")]
    pub sbm_k_max: usize,
    #[serde(default = "default_sbm_restarts")]
    pub sbm_restarts: usize,
    /// Output directory; per-year artifacts land in `<output>/<year>/`.
    pub output: PathBuf,
    /// Master seed; every stage derives its own named stream from it.
    pub seed: u64,
}

impl PipelineConfig {
    /// Load, apply overrides, validate. All failures here are config errors.
    pub fn load(
        path: &Path,
        seed_override: Option<u64>,
        out_override: Option<PathBuf>,
    ) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        if let Some(seed) = seed_override {
            config.seed = seed;
        }
        if let Some(out) = out_override {
            config.output = out;
        }
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if self.years.is_empty() {
            return fail("years must be non-empty".into());
        }
        let mut seen = self.years.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.years.len() {
            return fail("years contains duplicates".into());
        }
        if !(0.0..=1.0).contains(&self.missingness_threshold) {
            return fail(format!(
                "missingness_threshold {} outside [0, 1]",
                self.missingness_threshold
            ));
        }
        match &self.imputation {
            Imputation::Fixed { k } if *k == 0 => return fail("imputation k must be >= 1".into()),
            Imputation::Cv { cv } => {
                if cv.grid.is_empty() || cv.grid.contains(&0) {
                    return fail("cv grid must be non-empty and positive".into());
                }
                if cv.folds == 0 {
                    return fail("cv folds must be >= 1".into());
                }
                if let Some(f) = cv.mask_fraction {
                    if !(f > 0.0 && f < 1.0) {
                        return fail(format!("cv mask_fraction {f} outside (0, 1)"));
                    }
                }
            }
            Imputation::Fixed { .. } => {}
        }
        if self.connectivity_points < 2 {
            return fail("connectivity_points must be >= 2".into());
        }
        if self.sbm_k_min == 0 || self.sbm_k_max < self.sbm_k_min {
            return fail(format!(
                "invalid SBM class range [{}, {}]",
                self.sbm_k_min, self.sbm_k_max
            ));
        }
        if self.sbm_restarts == 0 {
            return fail("sbm_restarts must be >= 1".into());
        }
        for (name, p) in [
            ("flows", &self.flows),
            ("attributes", &self.attributes),
            ("universe", &self.universe),
        ] {
            if !p.is_file() {
                return fail(format!("{name} file {} does not exist", p.display()));
            }
        }
        if let Some(model) = &self.ergm_model {
            if !model.is_file() {
                return fail(format!(
                    "ergm_model file {} does not exist",
                    model.display()
                ));
            }
        }
        Ok(())
    }

    /// SHA-256 of the effective configuration (after overrides), hex-encoded.
    pub fn sha256(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn year_dir(&self, year: i32) -> PathBuf {
        self.output.join(year.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn touch(dir: &Path, name: &str) -> PathBuf {
        let p = dir.join(name);
        let mut f = fs::File::create(&p).unwrap();
        writeln!(f, "x").unwrap();
        p
    }

    fn minimal_config(dir: &Path) -> serde_json::Value {
        let flows = touch(dir, "flows.csv");
        let attrs = touch(dir, "attributes.csv");
        let universe = touch(dir, "universe.txt");
        serde_json::json!({
            "flows": flows,
            "attributes": attrs,
            "universe": universe,
            "years": [2018],
            "output": dir.join("out"),
            "seed": 7,
        })
    }

    fn write_config(dir: &Path, value: &serde_json::Value) -> PathBuf {
        let p = dir.join("config.json");
        fs::write(&p, serde_json::to_string(value).unwrap()).unwrap();
        p
    }

    #[test]
    fn minimal_config_loads_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path(), &minimal_config(dir.path()));
        let config = PipelineConfig::load(&path, None, None).unwrap();
        assert_eq!(config.missingness_threshold, 0.30);
        assert_eq!(config.categorical, vec!["landlocked"]);
        assert_eq!(config.sbm_k_min, 1);
        assert_eq!(config.sbm_k_max, 12);
        assert_eq!(config.sbm_restarts, 20);
        assert_eq!(config.connectivity_points, 30);
        assert!(matches!(config.imputation, Imputation::Cv { .. }));
    }

    #[test]
    fn overrides_change_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path(), &minimal_config(dir.path()));
        let a = PipelineConfig::load(&path, None, None).unwrap();
        let b = PipelineConfig::load(&path, Some(99), None).unwrap();
        assert_eq!(b.seed, 99);
        assert_ne!(a.sha256(), b.sha256());
        let a2 = PipelineConfig::load(&path, None, None).unwrap();
        assert_eq!(a.sha256(), a2.sha256());
    }

    #[test]
    fn rejects_missing_input_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut value = minimal_config(dir.path());
        value["flows"] = serde_json::json!(dir.path().join("absent.csv"));
        let path = write_config(dir.path(), &value);
        let err = PipelineConfig::load(&path, None, None).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
    }

    #[test]
    fn rejects_unknown_field_and_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        let mut value = minimal_config(dir.path());
        value["typo_field"] = serde_json::json!(1);
        let path = write_config(dir.path(), &value);
        assert!(PipelineConfig::load(&path, None, None).is_err());

        let mut value = minimal_config(dir.path());
        value["years"] = serde_json::json!([2018, 2018]);
        let path = write_config(dir.path(), &value);
        assert!(PipelineConfig::load(&path, None, None).is_err());

        let mut value = minimal_config(dir.path());
        value["imputation"] = serde_json::json!({"k": 0});
        let path = write_config(dir.path(), &value);
        assert!(PipelineConfig::load(&path, None, None).is_err());

        let mut value = minimal_config(dir.path());
        value["sbm_k_min"] = serde_json::json!(5);
        value["sbm_k_max"] = serde_json::json!(2);
        let path = write_config(dir.path(), &value);
        assert!(PipelineConfig::load(&path, None, None).is_err());
    }

    #[test]
    fn imputation_variants_parse() {
        let fixed: Imputation = serde_json::from_str(r#"{"k": 3}"#).unwrap();
        assert_eq!(fixed, Imputation::Fixed { k: 3 });
        let cv: Imputation =
            serde_json::from_str(r#"{"cv": {"grid": [1, 2], "folds": 4}}"#).unwrap();
        match cv {
            Imputation::Cv { cv } => {
                assert_eq!(cv.grid, vec![1, 2]);
                assert_eq!(cv.folds, 4);
                assert_eq!(cv.mask_fraction, None);
            }
            _ => panic!("expected cv variant"),
        }
    }
}
