//! Exponential random graph models restricted to dyad-independent terms.
//!
//! Every term here depends on node attributes only, never on the rest of the
//! edge set, so the graph likelihood factorizes into independent Bernoulli
//! dyads: maximum pseudo-likelihood is the exact maximum likelihood, and the
//! change statistic of a dyad is a constant vector. Dyad-dependent terms
//! (mutuality, triangles) are out of scope for estimation; the sampler is
//! written against change statistics, so it generalizes if terms are added.

mod fit;
mod sampler;

pub use fit::{fit_mple, significance_code, ErgmFit, FitOptions, TermFit};
pub use sampler::{
    goodness_of_fit, model_statistics, simulate, EdgeToggleSampler, GofReport, GofStatistic,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::TradeNetwork;
use crate::ingest::{AttributeTable, ColumnKind};

/// Term families from the model vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    Edges,
    Nodecov,
    Absdiff,
    Nodematch,
    Nodefactor,
}

/// One model term.
///
/// `attribute` is absent only for `edges`; `tolerance` applies to numeric
/// `nodematch` (categorical matching is exact equality); `level` is the
/// category counted by `nodefactor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermSpec {
    pub kind: TermKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
    #[serde(default)]
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
}

impl TermSpec {
    pub fn edges() -> Self {
        TermSpec {
            kind: TermKind::Edges,
            attribute: None,
            tolerance: 0.0,
            level: None,
        }
    }

    pub fn nodecov(attribute: &str) -> Self {
        TermSpec {
            kind: TermKind::Nodecov,
            attribute: Some(attribute.to_string()),
            tolerance: 0.0,
            level: None,
        }
    }

    pub fn absdiff(attribute: &str) -> Self {
        TermSpec {
            kind: TermKind::Absdiff,
            attribute: Some(attribute.to_string()),
            tolerance: 0.0,
            level: None,
        }
    }

    pub fn nodematch(attribute: &str, tolerance: f64) -> Self {
        TermSpec {
            kind: TermKind::Nodematch,
            attribute: Some(attribute.to_string()),
            tolerance,
            level: None,
        }
    }

    pub fn nodefactor(attribute: &str, level: f64) -> Self {
        TermSpec {
            kind: TermKind::Nodefactor,
            attribute: Some(attribute.to_string()),
            tolerance: 0.0,
            level: Some(level),
        }
    }

    /// Display name, e.g. `nodecov.gdp` or `nodefactor.landlocked.1`.
    pub fn name(&self) -> String {
        match self.kind {
            TermKind::Edges => "edges".to_string(),
            TermKind::Nodecov => format!("nodecov.{}", self.attribute.as_deref().unwrap_or("?")),
            TermKind::Absdiff => format!("absdiff.{}", self.attribute.as_deref().unwrap_or("?")),
            TermKind::Nodematch => {
                format!("nodematch.{}", self.attribute.as_deref().unwrap_or("?"))
            }
            TermKind::Nodefactor => format!(
                "nodefactor.{}.{}",
                self.attribute.as_deref().unwrap_or("?"),
                self.level.unwrap_or(f64::NAN)
            ),
        }
    }
}

/// An ordered, validated list of terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgmModel {
    pub terms: Vec<TermSpec>,
}

impl ErgmModel {
    pub fn new(terms: Vec<TermSpec>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::EmptyModel);
        }
        let mut names: Vec<String> = terms.iter().map(TermSpec::name).collect();
        names.sort();
        for w in names.windows(2) {
            if w[0] == w[1] {
                return Err(Error::DuplicateTerm(w[0].clone()));
            }
        }
        Ok(ErgmModel { terms })
    }

    pub fn term_names(&self) -> Vec<String> {
        self.terms.iter().map(TermSpec::name).collect()
    }

    /// Check every term's attribute against the table.
    pub fn validate_against(&self, attrs: &AttributeTable) -> Result<()> {
        for t in &self.terms {
            let Some(name) = &t.attribute else {
                continue;
            };
            let col = attrs
                .column(name)
                .ok_or_else(|| Error::UnknownAttribute(name.clone()))?;
            if t.kind == TermKind::Nodefactor && col.kind != ColumnKind::Categorical {
                return Err(Error::InvalidArgument(format!(
                    "nodefactor needs a categorical attribute, '{name}' is numeric"
                )));
            }
        }
        Ok(())
    }
}

fn attr_value(attrs: &AttributeTable, column: &str, row: usize) -> Result<f64> {
    let col = attrs
        .column(column)
        .ok_or_else(|| Error::UnknownAttribute(column.to_string()))?;
    col.values[row].ok_or_else(|| Error::MissingAttributeValue {
        column: column.to_string(),
        row: attrs.rows[row].clone(),
    })
}

/// Change statistic of toggling the ordered dyad (i, j) on.
///
/// For dyad-independent terms this is also the dyad's covariate row: the
/// statistic a present edge contributes to g(y).
pub fn change_statistic(
    term: &TermSpec,
    attrs: &AttributeTable,
    i: usize,
    j: usize,
) -> Result<f64> {
    debug_assert_ne!(i, j);
    match term.kind {
        TermKind::Edges => Ok(1.0),
        TermKind::Nodecov => {
            let a = term.attribute.as_deref().ok_or(Error::EmptyModel)?;
            Ok(attr_value(attrs, a, i)? + attr_value(attrs, a, j)?)
        }
        TermKind::Absdiff => {
            let a = term.attribute.as_deref().ok_or(Error::EmptyModel)?;
            Ok((attr_value(attrs, a, i)? - attr_value(attrs, a, j)?).abs())
        }
        TermKind::Nodematch => {
            let a = term.attribute.as_deref().ok_or(Error::EmptyModel)?;
            let (x, y) = (attr_value(attrs, a, i)?, attr_value(attrs, a, j)?);
            let matches = match attrs.column(a).map(|c| c.kind) {
                Some(ColumnKind::Categorical) => x == y,
                _ => (x - y).abs() <= term.tolerance,
            };
            Ok(if matches { 1.0 } else { 0.0 })
        }
        TermKind::Nodefactor => {
            let a = term.attribute.as_deref().ok_or(Error::EmptyModel)?;
            let level = term
                .level
                .ok_or_else(|| Error::InvalidArgument("nodefactor requires a level".into()))?;
            let (x, y) = (attr_value(attrs, a, i)?, attr_value(attrs, a, j)?);
            Ok((x == level) as u8 as f64 + (y == level) as u8 as f64)
        }
    }
}

/// Dyad-level design: one row per ordered dyad in lexicographic (i, j) order.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadTable {
    pub term_names: Vec<String>,
    /// Row-major n(n-1) x p covariate matrix.
    pub x: Vec<Vec<f64>>,
    /// Edge indicators aligned with `x`.
    pub y: Vec<f64>,
    pub dyads: Vec<(usize, usize)>,
}

/// Materialize covariates and responses for every ordered dyad.
///
/// The attribute table is aligned to the network's node order first, so its
/// rows may come in any order as long as every node is present.
pub fn design_matrix(
    model: &ErgmModel,
    net: &TradeNetwork,
    attrs: &AttributeTable,
) -> Result<DyadTable> {
    model.validate_against(attrs)?;
    let attrs = attrs.aligned_to(net)?;
    let n = net.node_count();
    let p = model.terms.len();
    let mut x = Vec::with_capacity(n * (n - 1));
    let mut y = Vec::with_capacity(n * (n - 1));
    let mut dyads = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut row = Vec::with_capacity(p);
            for t in &model.terms {
                row.push(change_statistic(t, &attrs, i, j)?);
            }
            x.push(row);
            y.push(if net.has_edge(i, j) { 1.0 } else { 0.0 });
            dyads.push((i, j));
        }
    }
    Ok(DyadTable {
        term_names: model.term_names(),
        x,
        y,
        dyads,
    })
}

#[cfg(test)]
pub(crate) mod test_support {
    use crate::ingest::{AttributeColumn, AttributeTable, ColumnKind};

    /// Attribute table over N000.. style codes matching `from_index_edges`.
    pub fn attrs(n: usize, columns: &[(&str, ColumnKind, Vec<f64>)]) -> AttributeTable {
        AttributeTable::new(
            (0..n).map(|i| format!("N{i:03}")).collect(),
            columns
                .iter()
                .map(|(name, kind, values)| AttributeColumn {
                    name: name.to_string(),
                    kind: *kind,
                    values: values.iter().map(|&v| Some(v)).collect(),
                })
                .collect(),
        )
    }
}
