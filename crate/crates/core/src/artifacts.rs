//! On-disk artifact formats shared between pipeline stages.
//!
//! The canonical network artifact is a sorted edge CSV (same schema as the
//! raw bilateral-flow extract) plus a metadata JSON carrying the node
//! universe, so isolates survive a round trip. Everything here writes
//! deterministic bytes: stable field order, shortest-roundtrip floats, `\n`
//! line endings.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::connectivity::ThresholdPoint;
use crate::ergm::ErgmFit;
use crate::error::{Error, Result};
use crate::graph::TradeNetwork;
use crate::ingest::{AttributeTable, ColumnKind};
use crate::netstats::StructuralSummary;
use crate::sbm::{IclPoint, SbmFit};

/// Companion JSON for the canonical edge CSV; `nodes` fixes both the universe
/// (including isolates) and the node index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkMetadata {
    pub period: i32,
    pub node_count: usize,
    pub edge_count: usize,
    pub nodes: Vec<String>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Serialize any value as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::json(format!("serializing {}", path.display()), e))?;
    text.push('\n');
    write_text(path, text.as_str())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(format!("parsing {}", path.display()), e))
}

/// Write the canonical network pair: edge CSV at `csv_path`, metadata JSON at
/// `meta_path`. Edges are already sorted by (source, target) index.
pub fn write_network(net: &TradeNetwork, csv_path: &Path, meta_path: &Path) -> Result<()> {
    let mut text = String::from("reporter_iso3,partner_iso3,year,export_value_kusd\n");
    let nodes = net.nodes();
    for e in net.edges() {
        text.push_str(&format!(
            "{},{},{},{}\n",
            nodes[e.source],
            nodes[e.target],
            net.period(),
            e.weight
        ));
    }
    write_text(csv_path, &text)?;
    write_json(
        meta_path,
        &NetworkMetadata {
            period: net.period(),
            node_count: net.node_count(),
            edge_count: net.edge_count(),
            nodes: nodes.to_vec(),
        },
    )
}

/// Rebuild a network from its canonical pair. Any disagreement between the
/// CSV and the metadata is treated as corruption, not tolerated input.
pub fn read_network(csv_path: &Path, meta_path: &Path) -> Result<TradeNetwork> {
    let meta: NetworkMetadata = read_json(meta_path)?;
    let malformed = |line: u64, reason: String| Error::MalformedRow {
        path: csv_path.display().to_string(),
        line,
        reason,
    };

    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(csv_path)
        .map_err(|e| malformed(1, e.to_string()))?;
    let headers = reader.headers().map_err(|e| malformed(1, e.to_string()))?;
    let expected = ["reporter_iso3", "partner_iso3", "year", "export_value_kusd"];
    if headers.iter().ne(expected) {
        return Err(malformed(1, format!("expected header {expected:?}")));
    }

    let mut records = Vec::with_capacity(meta.edge_count);
    for row in reader.records() {
        let row = row.map_err(|e| malformed(0, e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 4 {
            return Err(malformed(
                line,
                format!("expected 4 fields, got {}", row.len()),
            ));
        }
        let year: i32 = row[2]
            .parse()
            .map_err(|_| malformed(line, format!("bad year `{}`", &row[2])))?;
        if year != meta.period {
            return Err(malformed(
                line,
                format!("year {year} does not match metadata period {}", meta.period),
            ));
        }
        let weight: f64 = row[3]
            .parse()
            .map_err(|_| malformed(line, format!("bad weight `{}`", &row[3])))?;
        records.push((row[0].to_string(), row[1].to_string(), weight));
    }
    let net = TradeNetwork::build(&records, &meta.nodes, meta.period)?;
    if net.edge_count() != meta.edge_count || net.node_count() != meta.node_count {
        return Err(malformed(
            0,
            format!(
                "metadata promises {} nodes / {} edges, file has {} / {}",
                meta.node_count,
                meta.edge_count,
                net.node_count(),
                net.edge_count()
            ),
        ));
    }
    Ok(net)
}

/// Attribute CSV in the ingest schema (`iso3,year,<attributes>`); missing
/// cells are empty fields, categorical values print as integers.
pub fn write_attributes(table: &AttributeTable, year: i32, path: &Path) -> Result<()> {
    let mut text = String::from("iso3,year");
    for col in &table.columns {
        text.push(',');
        text.push_str(&col.name);
    }
    text.push('\n');
    for (i, iso3) in table.rows.iter().enumerate() {
        text.push_str(&format!("{iso3},{year}"));
        for col in &table.columns {
            text.push(',');
            if let Some(v) = col.values[i] {
                match col.kind {
                    ColumnKind::Categorical => text.push_str(&format!("{}", v as i64)),
                    ColumnKind::Numeric => text.push_str(&v.to_string()),
                }
            }
        }
        text.push('\n');
    }
    write_text(path, &text)
}

/// One-row CSV of the structural summary, keyed by period. Definitional
/// metadata stays in the JSON twin; the CSV carries only the projection tag.
pub fn write_summary_csv(summary: &StructuralSummary, path: &Path) -> Result<()> {
    let header = "period,nodes,edges,components,mean_out_degree,cv_out_degree,mean_in_degree,\
                  cv_in_degree,mean_weight,cv_weight,degree_correlation,density,transitivity,\
                  edge_reciprocity,dyad_reciprocity,assortativity,projection";
    let row = format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        summary.period,
        summary.nodes,
        summary.edges,
        summary.components,
        summary.mean_out_degree,
        fmt_opt(summary.cv_out_degree),
        summary.mean_in_degree,
        fmt_opt(summary.cv_in_degree),
        fmt_opt(summary.mean_weight),
        fmt_opt(summary.cv_weight),
        fmt_opt(summary.degree_correlation),
        summary.density,
        fmt_opt(summary.transitivity),
        fmt_opt(summary.edge_reciprocity),
        fmt_opt(summary.dyad_reciprocity),
        fmt_opt(summary.assortativity),
        summary.metadata.projection,
    );
    write_text(path, &format!("{header}\n{row}\n"))
}

/// Threshold profile as a plot-ready CSV. `log10_threshold` is empty for
/// non-positive thresholds (the grid conventionally starts at zero).
pub fn write_connectivity_csv(profile: &[ThresholdPoint], path: &Path) -> Result<()> {
    let mut text = String::from("threshold,log10_threshold,components,giant_size,giant_fraction\n");
    for p in profile {
        let log10 = if p.threshold > 0.0 {
            p.threshold.log10().to_string()
        } else {
            String::new()
        };
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            p.threshold, log10, p.components, p.giant_size, p.giant_fraction
        ));
    }
    write_text(path, &text)
}

/// Coefficient table with one row per model term.
pub fn write_ergm_csv(fit: &ErgmFit, path: &Path) -> Result<()> {
    let mut text = String::from("variable,estimate,std_error,z_value,significance\n");
    for term in &fit.terms {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            term.name, term.estimate, term.std_error, term.z_value, term.significance
        ));
    }
    write_text(path, &text)
}

/// Block-model fit keyed by country code, built for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmReport {
    pub k: usize,
    pub elbo: f64,
    pub icl: f64,
    pub theta: Vec<f64>,
    pub connectivity: Vec<Vec<f64>>,
    /// iso3 -> class, in code order.
    pub labels: BTreeMap<String, usize>,
    /// Member codes per class, each list in node order.
    pub classes: Vec<Vec<String>>,
    pub elbo_trace: Vec<f64>,
    pub restarts_used: usize,
    pub aborted_restarts: usize,
    pub best_restart: usize,
}

pub fn sbm_report(net: &TradeNetwork, fit: &SbmFit) -> Result<SbmReport> {
    if fit.memberships.hard_labels.len() != net.node_count() {
        return Err(Error::InvalidArgument(
            "fit and network sizes differ".into(),
        ));
    }
    let nodes = net.nodes();
    let mut labels = BTreeMap::new();
    let mut classes = vec![Vec::new(); fit.k];
    for (i, &class) in fit.memberships.hard_labels.iter().enumerate() {
        labels.insert(nodes[i].clone(), class);
        classes[class].push(nodes[i].clone());
    }
    Ok(SbmReport {
        k: fit.k,
        elbo: fit.elbo,
        icl: fit.icl,
        theta: fit.params.theta.clone(),
        connectivity: fit.params.connectivity.clone(),
        labels,
        classes,
        elbo_trace: fit.elbo_trace.clone(),
        restarts_used: fit.restarts_used,
        aborted_restarts: fit.aborted_restarts,
        best_restart: fit.best_restart,
    })
}

/// Class assignment CSV, one row per node in node order.
pub fn write_sbm_classes_csv(net: &TradeNetwork, fit: &SbmFit, path: &Path) -> Result<()> {
    if fit.memberships.hard_labels.len() != net.node_count() {
        return Err(Error::InvalidArgument(
            "fit and network sizes differ".into(),
        ));
    }
    let mut text = String::from("iso3,class\n");
    for (iso3, &class) in net.nodes().iter().zip(&fit.memberships.hard_labels) {
        text.push_str(&format!("{iso3},{class}\n"));
    }
    write_text(path, &text)
}

/// ICL model-selection curve.
pub fn write_icl_curve_csv(curve: &[IclPoint], path: &Path) -> Result<()> {
    let mut text = String::from("k,icl\n");
    for point in curve {
        text.push_str(&format!("{},{}\n", point.k, point.icl));
    }
    write_text(path, &text)
}

/// Node permutation for the block-ordered adjacency view.
pub fn write_permutation_csv(
    net: &TradeNetwork,
    fit: &SbmFit,
    order: &[usize],
    path: &Path,
) -> Result<()> {
    if order.len() != net.node_count() {
        return Err(Error::InvalidArgument(
            "permutation and network sizes differ".into(),
        ));
    }
    let mut text = String::from("position,iso3,class\n");
    for (pos, &node) in order.iter().enumerate() {
        text.push_str(&format!(
            "{pos},{},{}\n",
            net.nodes()[node],
            fit.memberships.hard_labels[node]
        ));
    }
    write_text(path, &text)
}
