//! Stage implementations behind the subcommands.
//!
//! Every stage reads only config inputs and upstream artifacts, writes only
//! into the output directory, and derives its randomness from the master
//! seed through a stage-named stream, so reruns are byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tradenet::artifacts::{self, SbmReport};
use tradenet::connectivity::{self, FlowBasis, ThresholdPoint};
use tradenet::ergm::{self, ErgmFit, ErgmModel, FitOptions, GofReport, TermSpec};
use tradenet::error::Error;
use tradenet::ingest::{self, AttributeTable, CvSelection, FlowSummary};
use tradenet::netstats::{self, StructuralSummary};
use tradenet::sbm::{self, SbmOptions};
use tradenet::{seeding, TradeNetwork};

use crate::config::{Imputation, PipelineConfig};
use crate::CliError;

/// Written once per command invocation, next to the stage artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub years: Vec<i32>,
    pub seed: u64,
    pub config_sha256: String,
    /// Package name -> version for everything in this binary's pipeline.
    pub versions: BTreeMap<String, String>,
}

fn manifest(config: &PipelineConfig, stage: &str) -> RunManifest {
    let mut versions = BTreeMap::new();
    versions.insert("tradenet".to_string(), tradenet::VERSION.to_string());
    versions.insert(
        env!("CARGO_PKG_NAME").to_string(),
        env!("CARGO_PKG_VERSION").to_string(),
    );
    RunManifest {
        stage: stage.to_string(),
        years: config.years.clone(),
        seed: config.seed,
        config_sha256: config.sha256(),
        versions,
    }
}

fn write_manifest(config: &PipelineConfig, stage: &str) -> Result<(), CliError> {
    let path = config.output.join(format!("{stage}.manifest.json"));
    artifacts::write_json(&path, &manifest(config, stage))?;
    Ok(())
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path)
        .map_err(|e| CliError::Core(Error::io(format!("creating {}", path.display()), e)))
}

/// Upstream artifact paths fail fast with the stage that produces them.
fn require(path: PathBuf, producing_stage: &str) -> Result<PathBuf, CliError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::Core(Error::MissingArtifact {
            artifact: path.display().to_string(),
            stage: producing_stage.to_string(),
        }))
    }
}

fn network_paths(config: &PipelineConfig, year: i32) -> (PathBuf, PathBuf) {
    let dir = config.year_dir(year);
    (dir.join("network.csv"), dir.join("network.meta.json"))
}

fn load_network(config: &PipelineConfig, year: i32) -> Result<TradeNetwork, CliError> {
    let (csv, meta) = network_paths(config, year);
    let csv = require(csv, "ingest")?;
    let meta = require(meta, "ingest")?;
    Ok(artifacts::read_network(&csv, &meta)?)
}

fn load_attributes(
    config: &PipelineConfig,
    year: i32,
    net: &TradeNetwork,
) -> Result<AttributeTable, CliError> {
    let path = require(config.year_dir(year).join("attributes.csv"), "ingest")?;
    let table = ingest::read_attributes(&path, year, net.nodes(), &config.categorical)?;
    Ok(table.aligned_to(net)?)
}

fn stage_seed(config: &PipelineConfig, stage: &str, year: i32) -> u64 {
    seeding::derive_master(config.seed, stage, year as u64)
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImputationLog {
    pub method: String,
    pub chosen_k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvSelection>,
}

/// What ingestion dropped and chose, for auditability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestLog {
    pub year: i32,
    pub universe_size: usize,
    pub node_count: usize,
    pub edge_count: usize,
    /// Codes in the flow file but outside the recognized universe.
    pub dropped_codes: Vec<String>,
    pub dropped_flow_rows: usize,
    /// Attribute columns dropped by the missingness rule.
    pub dropped_columns: Vec<String>,
    pub imputation: ImputationLog,
}

pub fn cmd_ingest(config: &PipelineConfig) -> Result<(), CliError> {
    let universe = ingest::read_universe(&config.universe)?;
    for &year in &config.years {
        let dir = config.year_dir(year);
        ensure_dir(&dir)?;

        let flows = ingest::read_flows(&config.flows, year, &universe)?;
        // Nodes are the countries that actually appear in the year's
        // recognized flows; universe members without records stay out.
        let mut nodes: Vec<String> = flows
            .records
            .iter()
            .flat_map(|(r, p, _)| [r.clone(), p.clone()])
            .collect();
        nodes.sort();
        nodes.dedup();
        let net = TradeNetwork::build(&flows.records, &nodes, year)?;

        let raw = ingest::read_attributes(&config.attributes, year, &nodes, &config.categorical)?;
        let aligned = raw.aligned_to(&net)?;
        let outcome = ingest::apply_missingness_rule(&aligned, config.missingness_threshold)?;

        let seed = stage_seed(config, "stage.ingest", year);
        let (imputed, imputation) = match &config.imputation {
            Imputation::Fixed { k } => (
                ingest::knn_impute(&outcome.table, *k)?,
                ImputationLog {
                    method: "fixed".to_string(),
                    chosen_k: *k,
                    cv: None,
                },
            ),
            Imputation::Cv { cv } => {
                let fraction = cv.mask_fraction.unwrap_or(ingest::DEFAULT_CV_MASK_FRACTION);
                let selection =
                    ingest::select_k_by_cv(&outcome.table, &cv.grid, cv.folds, fraction, seed)?;
                let imputed = ingest::knn_impute(&outcome.table, selection.chosen_k)?;
                (
                    imputed,
                    ImputationLog {
                        method: "cv".to_string(),
                        chosen_k: selection.chosen_k,
                        cv: Some(selection),
                    },
                )
            }
        };

        let (net_csv, net_meta) = network_paths(config, year);
        artifacts::write_network(&net, &net_csv, &net_meta)?;
        artifacts::write_attributes(&imputed, year, &dir.join("attributes.csv"))?;
        artifacts::write_json(
            &dir.join("flow_summary.json"),
            &ingest::describe_flows(&net),
        )?;
        artifacts::write_json(
            &dir.join("ingest_log.json"),
            &IngestLog {
                year,
                universe_size: universe.len(),
                node_count: net.node_count(),
                edge_count: net.edge_count(),
                dropped_codes: flows.dropped_codes.clone(),
                dropped_flow_rows: flows.dropped_rows,
                dropped_columns: outcome.dropped_columns.clone(),
                imputation,
            },
        )?;
    }
    write_manifest(config, "ingest")
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

pub fn cmd_stats(config: &PipelineConfig) -> Result<(), CliError> {
    for &year in &config.years {
        let net = load_network(config, year)?;
        let summary = netstats::summarize(&net, Default::default())?;
        let dir = config.year_dir(year);
        artifacts::write_json(&dir.join("summary.json"), &summary)?;
        artifacts::write_summary_csv(&summary, &dir.join("summary.csv"))?;
    }
    write_manifest(config, "stats")
}

// ---------------------------------------------------------------------------
// connectivity
// ---------------------------------------------------------------------------

/// JSON twin of the plot-ready CSV: the profile plus sweep settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConnectivityReport {
    pub year: i32,
    pub basis: FlowBasis,
    pub points: usize,
    /// First threshold where the giant component shrinks below its size at
    /// the first grid point; `None` when it never does.
    pub inflection_threshold: Option<f64>,
    pub profile: Vec<ThresholdPoint>,
}

pub fn cmd_connectivity(config: &PipelineConfig) -> Result<(), CliError> {
    for &year in &config.years {
        let net = load_network(config, year)?;
        let based = connectivity::apply_basis(&net, config.connectivity_basis)?;
        let grid = connectivity::default_grid(&based, config.connectivity_points)?;
        let profile = connectivity::threshold_profile(&net, &grid, config.connectivity_basis)?;
        let report = ConnectivityReport {
            year,
            basis: config.connectivity_basis,
            points: config.connectivity_points,
            inflection_threshold: connectivity::inflection_threshold(&profile),
            profile,
        };
        let dir = config.year_dir(year);
        artifacts::write_connectivity_csv(&report.profile, &dir.join("connectivity.csv"))?;
        artifacts::write_json(&dir.join("connectivity.json"), &report)?;
    }
    write_manifest(config, "connectivity")
}

// ---------------------------------------------------------------------------
// ergm
// ---------------------------------------------------------------------------

/// Full estimation record: the term list echoed next to its fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErgmRecord {
    pub year: i32,
    pub terms: Vec<TermSpec>,
    pub fit: ErgmFit,
}

pub fn cmd_ergm(config: &PipelineConfig) -> Result<(), CliError> {
    let model_path = config.ergm_model.as_ref().ok_or_else(|| {
        CliError::Config("the ergm subcommand needs `ergm_model` in the config".into())
    })?;
    let terms: Vec<TermSpec> = artifacts::read_json(model_path)?;
    let model = ErgmModel::new(terms)?;

    let mut fits: Vec<ErgmFit> = Vec::new();
    for &year in &config.years {
        let net = load_network(config, year)?;
        let attrs = load_attributes(config, year, &net)?;
        let fit = ergm::fit_mple(&model, &net, &attrs, &FitOptions::default())?;

        let dir = config.year_dir(year);
        artifacts::write_ergm_csv(&fit, &dir.join("ergm.csv"))?;
        artifacts::write_json(
            &dir.join("ergm.json"),
            &ErgmRecord {
                year,
                terms: model.terms.clone(),
                fit: fit.clone(),
            },
        )?;

        if config.ergm_gof_replicates > 0 {
            let theta: Vec<f64> = fit.terms.iter().map(|t| t.estimate).collect();
            let gof: GofReport = ergm::goodness_of_fit(
                &model,
                &theta,
                &net,
                &attrs,
                config.ergm_gof_replicates,
                config.ergm_gof_steps,
                stage_seed(config, "stage.ergm", year),
            )?;
            artifacts::write_json(&dir.join("ergm_gof.json"), &gof)?;
        }
        fits.push(fit);
    }

    if config.years.len() > 1 {
        write_significance_table(config, &model, &fits)?;
    }
    write_manifest(config, "ergm")
}

/// Cross-year comparison: estimate and significance per term and year.
fn write_significance_table(
    config: &PipelineConfig,
    model: &ErgmModel,
    fits: &[ErgmFit],
) -> Result<(), CliError> {
    let mut text = String::from("variable");
    for year in &config.years {
        text.push_str(&format!(",estimate_{year},significance_{year}"));
    }
    text.push('\n');
    for (row, name) in model.term_names().iter().enumerate() {
        text.push_str(name);
        for fit in fits {
            let term = &fit.terms[row];
            text.push_str(&format!(",{},{}", term.estimate, term.significance));
        }
        text.push('\n');
    }
    let path = config.output.join("ergm_significance.csv");
    fs::write(&path, text)
        .map_err(|e| CliError::Core(Error::io(format!("writing {}", path.display()), e)))
}

// ---------------------------------------------------------------------------
// sbm
// ---------------------------------------------------------------------------

pub fn cmd_sbm(config: &PipelineConfig) -> Result<(), CliError> {
    let k_range: Vec<usize> = (config.sbm_k_min..=config.sbm_k_max).collect();
    let options = SbmOptions {
        restarts: config.sbm_restarts,
        ..SbmOptions::default()
    };
    for &year in &config.years {
        let net = load_network(config, year)?;
        let selection = sbm::select_classes(
            &net,
            &k_range,
            stage_seed(config, "stage.sbm", year),
            &options,
        )?;
        let fit = selection.recommended();
        let order = sbm::ordered_adjacency(&net, fit)?;

        let dir = config.year_dir(year);
        artifacts::write_json(&dir.join("sbm.json"), &artifacts::sbm_report(&net, fit)?)?;
        artifacts::write_sbm_classes_csv(&net, fit, &dir.join("sbm_classes.csv"))?;
        artifacts::write_icl_curve_csv(&selection.curve(), &dir.join("icl_curve.csv"))?;
        artifacts::write_permutation_csv(&net, fit, &order, &dir.join("adjacency_order.csv"))?;
    }
    write_manifest(config, "sbm")
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

fn read_artifact_text(path: PathBuf, stage: &str) -> Result<String, CliError> {
    let path = require(path, stage)?;
    fs::read_to_string(&path)
        .map_err(|e| CliError::Core(Error::io(format!("reading {}", path.display()), e)))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string())
        .unwrap_or_else(|| "undefined".to_string())
}

fn push_csv_block(out: &mut String, title: &str, csv: &str) {
    out.push_str(&format!("### {title}\n\n```csv\n{csv}```\n\n"));
}

/// Assemble one markdown document from the stage artifacts. Pure function of
/// the artifacts: re-running without recomputing reproduces identical bytes.
pub fn cmd_report(config: &PipelineConfig) -> Result<(), CliError> {
    let mut out = String::from("# Trade network analysis\n\n");
    out.push_str(&format!(
        "Years: {}. Seed: {}. Config: {}.\n\n",
        config
            .years
            .iter()
            .map(|y| y.to_string())
            .collect::<Vec<_>>()
            .join(", "),
        config.seed,
        config.sha256(),
    ));

    for &year in &config.years {
        let dir = config.year_dir(year);
        out.push_str(&format!("## {year}\n\n"));

        let flows: FlowSummary =
            artifacts::read_json(&require(dir.join("flow_summary.json"), "ingest")?)?;
        out.push_str("### Flows\n\n");
        out.push_str(&format!(
            "{} flows; weight mean {}, median {}, sd {}, min {}, max {} (thousands of USD).\n\n",
            flows.count,
            fmt_opt(flows.mean),
            fmt_opt(flows.median),
            fmt_opt(flows.sd),
            fmt_opt(flows.min),
            fmt_opt(flows.max),
        ));

        let summary: StructuralSummary =
            artifacts::read_json(&require(dir.join("summary.json"), "stats")?)?;
        out.push_str("### Structure\n\n");
        out.push_str(&format!(
            "{} nodes, {} edges, {} weak component(s); density {}.\n\n",
            summary.nodes, summary.edges, summary.components, summary.density,
        ));
        push_csv_block(
            &mut out,
            "Structural statistics",
            &read_artifact_text(dir.join("summary.csv"), "stats")?,
        );

        push_csv_block(
            &mut out,
            "Connectivity under weight thresholds",
            &read_artifact_text(dir.join("connectivity.csv"), "connectivity")?,
        );

        push_csv_block(
            &mut out,
            "ERGM coefficients",
            &read_artifact_text(dir.join("ergm.csv"), "ergm")?,
        );

        let blocks: SbmReport = artifacts::read_json(&require(dir.join("sbm.json"), "sbm")?)?;
        out.push_str("### Block model\n\n");
        let sizes: Vec<String> = blocks.classes.iter().map(|c| c.len().to_string()).collect();
        out.push_str(&format!(
            "Recommended class count {} (ICL {}); class sizes: {}.\n\n",
            blocks.k,
            blocks.icl,
            sizes.join(", "),
        ));
        push_csv_block(
            &mut out,
            "ICL by class count",
            &read_artifact_text(dir.join("icl_curve.csv"), "sbm")?,
        );
    }

    if config.years.len() > 1 {
        push_csv_block(
            &mut out,
            "ERGM significance across years",
            &read_artifact_text(config.output.join("ergm_significance.csv"), "ergm")?,
        );
    }

    let path = config.output.join("report.md");
    fs::write(&path, &out)
        .map_err(|e| CliError::Core(Error::io(format!("writing {}", path.display()), e)))?;
    write_manifest(config, "report")
}

// ---------------------------------------------------------------------------
// output lock
// ---------------------------------------------------------------------------

/// Guards an output directory against concurrent invocations. The lock file
/// is removed on drop, including on error paths.
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Core(Error::io(format!("creating {}", dir.display()), e)))?;
        let path = dir.join(".tradenet.lock");
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => Ok(OutputLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(CliError::Config(format!(
                    "output directory {} is locked by another invocation (remove {} if stale)",
                    dir.display(),
                    path.display()
                )))
            }
            Err(e) => Err(CliError::Core(Error::io(
                format!("creating lock {}", path.display()),
                e,
            ))),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
