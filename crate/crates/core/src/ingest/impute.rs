//! K-nearest-neighbor imputation with cross-validated neighbor count.
//!
//! Distances are Euclidean over z-standardized numeric columns, restricted to
//! the dimensions observed in both rows and rescaled by
//! sqrt(total dims / shared dims) so sparse overlaps are not systematically
//! closer. All fills are computed from the original mask: an imputed value
//! never becomes a donor within the same call.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seeding;

use super::{AttributeTable, ColumnKind};

/// Fraction of observed cells masked per cross-validation fold.
pub const DEFAULT_CV_MASK_FRACTION: f64 = 0.10;

/// Per-column z-scores of observed cells; constant or near-empty columns map
/// to 0 everywhere so they never contribute to distance.
fn standardized_numeric(table: &AttributeTable) -> Vec<Vec<Option<f64>>> {
    table
        .columns
        .iter()
        .filter(|c| c.kind == ColumnKind::Numeric)
        .map(|c| {
            let observed: Vec<f64> = c.values.iter().flatten().copied().collect();
            let mean = if observed.is_empty() {
                0.0
            } else {
                observed.iter().sum::<f64>() / observed.len() as f64
            };
            let sd = crate::netstats::sample_sd(&observed).unwrap_or(0.0);
            c.values
                .iter()
                .map(|v| v.map(|x| if sd > 0.0 { (x - mean) / sd } else { 0.0 }))
                .collect()
        })
        .collect()
}

/// Shared-dimension-rescaled Euclidean distance between two rows; `None`
/// when the rows share no observed numeric dimension.
fn row_distance(z: &[Vec<Option<f64>>], r: usize, s: usize) -> Option<f64> {
    let total = z.len();
    let mut shared = 0usize;
    let mut ss = 0.0;
    for col in z {
        if let (Some(a), Some(b)) = (col[r], col[s]) {
            shared += 1;
            ss += (a - b) * (a - b);
        }
    }
    if shared == 0 {
        None
    } else {
        Some((ss * total as f64 / shared as f64).sqrt())
    }
}

/// Donor rows for one target row: (distance, row index), sorted ascending
/// with row index breaking distance ties.
fn ranked_donors(z: &[Vec<Option<f64>>], r: usize, n: usize) -> Vec<(f64, usize)> {
    let mut donors: Vec<(f64, usize)> = (0..n)
        .filter(|&s| s != r)
        .filter_map(|s| row_distance(z, r, s).map(|d| (d, s)))
        .collect();
    donors.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    donors
}

/// Majority vote over the first `k` eligible donors; ties go to the value
/// seen earliest in donor order (i.e. carried by the nearest donor).
fn vote(values: &[f64]) -> f64 {
    let mut tally: Vec<(f64, usize, usize)> = Vec::new(); // (value, count, first_rank)
    for (rank, &v) in values.iter().enumerate() {
        match tally.iter_mut().find(|(tv, _, _)| *tv == v) {
            Some((_, count, _)) => *count += 1,
            None => tally.push((v, 1, rank)),
        }
    }
    tally
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2)))
        .map(|(v, _, _)| v)
        .unwrap()
}

/// Fill every missing cell with the mean (numeric) or majority value
/// (categorical) of its `k` nearest donor rows.
pub fn knn_impute(table: &AttributeTable, k: usize) -> Result<AttributeTable> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if table.is_complete() {
        return Ok(table.clone());
    }
    let n = table.n_rows();
    let z = standardized_numeric(table);
    if z.is_empty() {
        return Err(Error::InvalidArgument(
            "no numeric columns to compute donor distances".into(),
        ));
    }
    for r in 0..n {
        if z.iter().all(|col| col[r].is_none()) {
            return Err(Error::EmptyRow(table.rows[r].clone()));
        }
    }

    let mut out = table.clone();
    let mut donor_cache: Vec<Option<Vec<(f64, usize)>>> = vec![None; n];
    for (ci, column) in table.columns.iter().enumerate() {
        for r in 0..n {
            if column.values[r].is_some() {
                continue;
            }
            let ranked = donor_cache[r].get_or_insert_with(|| ranked_donors(&z, r, n));
            let eligible: Vec<f64> = ranked
                .iter()
                .filter_map(|&(_, s)| column.values[s])
                .take(k)
                .collect();
            if eligible.is_empty() {
                return Err(Error::NoDonor {
                    row: table.rows[r].clone(),
                    column: column.name.clone(),
                });
            }
            let fill = match column.kind {
                ColumnKind::Numeric => eligible.iter().sum::<f64>() / eligible.len() as f64,
                ColumnKind::Categorical => vote(&eligible),
            };
            out.columns[ci].values[r] = Some(fill);
        }
    }
    Ok(out)
}

/// Outcome of k selection: the chosen k plus everything needed to audit it.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CvSelection {
    pub chosen_k: usize,
    pub k_grid: Vec<usize>,
    /// Masked observed cells per fold as (row, column-index) pairs, sorted.
    pub fold_masks: Vec<Vec<(usize, usize)>>,
    /// mse[k_index][fold]: pooled standardized squared error.
    pub mse: Vec<Vec<f64>>,
    /// Per-k mean over folds; the argmin (ties to smaller k) is `chosen_k`.
    pub mean_mse: Vec<f64>,
}

/// Cells eligible for masking: observed numeric cells whose removal cannot
/// strand a row (row keeps another observed numeric) or a column (column had
/// at least two observed cells).
fn maskable_cells(table: &AttributeTable) -> Vec<(usize, usize)> {
    let numeric_obs_per_row: Vec<usize> = (0..table.n_rows())
        .map(|r| {
            table
                .columns
                .iter()
                .filter(|c| c.kind == ColumnKind::Numeric && c.values[r].is_some())
                .count()
        })
        .collect();
    let mut cells = Vec::new();
    for (ci, c) in table.columns.iter().enumerate() {
        if c.kind != ColumnKind::Numeric {
            continue;
        }
        let col_observed = c.values.iter().filter(|v| v.is_some()).count();
        if col_observed < 2 {
            continue;
        }
        for r in 0..table.n_rows() {
            if c.values[r].is_some() && numeric_obs_per_row[r] >= 2 {
                cells.push((r, ci));
            }
        }
    }
    cells.sort_unstable();
    cells
}

fn fold_mask(
    pool: &[(usize, usize)],
    table: &AttributeTable,
    mask_frac: f64,
    seed: u64,
    fold: u64,
) -> Vec<(usize, usize)> {
    let mut rng = seeding::rng(seed, "ingest.cv", fold);
    let want = ((mask_frac * pool.len() as f64).round() as usize).clamp(1, pool.len());
    let mut chosen: Vec<usize> = rand::seq::index::sample(&mut rng, pool.len(), want)
        .into_iter()
        .collect();
    chosen.sort_unstable();
    // Keep at least one observed cell per column (the masked cell needs a
    // donor somewhere) and one observed numeric per row (distances need a
    // shared dimension); skip sampled cells that would break either.
    let mut col_left: Vec<usize> = table
        .columns
        .iter()
        .map(|c| c.values.iter().filter(|v| v.is_some()).count())
        .collect();
    let mut row_left: Vec<usize> = (0..table.n_rows())
        .map(|r| {
            table
                .columns
                .iter()
                .filter(|c| c.kind == ColumnKind::Numeric && c.values[r].is_some())
                .count()
        })
        .collect();
    let mut mask = Vec::with_capacity(chosen.len());
    for idx in chosen {
        let (r, ci) = pool[idx];
        if col_left[ci] >= 2 && row_left[r] >= 2 {
            col_left[ci] -= 1;
            row_left[r] -= 1;
            mask.push((r, ci));
        }
    }
    // The first sampled cell always survives the filters (pool membership
    // guarantees both counts start at >= 2), so the mask is never empty.
    debug_assert!(!mask.is_empty());
    mask
}

fn masked_table(table: &AttributeTable, mask: &[(usize, usize)]) -> AttributeTable {
    let mut t = table.clone();
    for &(r, ci) in mask {
        t.columns[ci].values[r] = None;
    }
    t
}

/// Pooled standardized MSE of the imputed values at the masked cells.
/// Standardization uses the full table's observed per-column stats so the
/// pooling is comparable across columns.
fn fold_mse(
    truth: &AttributeTable,
    imputed: &AttributeTable,
    mask: &[(usize, usize)],
    scales: &[f64],
) -> f64 {
    let mut ss = 0.0;
    for &(r, ci) in mask {
        let t = truth.columns[ci].values[r].expect("masked cell was observed");
        let x = imputed.columns[ci].values[r].expect("masked cell was imputed");
        let e = (x - t) / scales[ci];
        ss += e * e;
    }
    ss / mask.len() as f64
}

/// Pick the neighbor count minimizing cross-validated imputation error.
///
/// Each fold masks `mask_frac` of the observed numeric cells (at least one),
/// re-imputes with every k in the grid, and scores the masked cells; the
/// selected k minimizes the fold-mean MSE, ties going to the smaller k.
/// Deterministic: fold masks derive from `seed` and the fold index.
pub fn select_k_by_cv(
    table: &AttributeTable,
    k_grid: &[usize],
    folds: usize,
    mask_frac: f64,
    seed: u64,
) -> Result<CvSelection> {
    if k_grid.is_empty() || k_grid.contains(&0) {
        return Err(Error::InvalidArgument(
            "k grid must be non-empty with k >= 1".into(),
        ));
    }
    if folds == 0 {
        return Err(Error::InvalidArgument("folds must be at least 1".into()));
    }
    if !(mask_frac > 0.0 && mask_frac < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "mask fraction must be in (0, 1), got {mask_frac}"
        )));
    }
    if table.n_rows() < 2 {
        return Err(Error::DegenerateTable);
    }
    let pool = maskable_cells(table);
    if pool.is_empty() {
        return Err(Error::DegenerateTable);
    }

    let scales: Vec<f64> = table
        .columns
        .iter()
        .map(|c| {
            let observed: Vec<f64> = c.values.iter().flatten().copied().collect();
            match crate::netstats::sample_sd(&observed) {
                Some(sd) if sd > 0.0 => sd,
                _ => 1.0,
            }
        })
        .collect();

    let fold_masks: Vec<Vec<(usize, usize)>> = (0..folds)
        .map(|f| fold_mask(&pool, table, mask_frac, seed, f as u64))
        .collect();

    // mse_by_fold[fold][k_index]
    let mse_by_fold: Vec<Vec<f64>> = fold_masks
        .par_iter()
        .map(|mask| {
            let masked = masked_table(table, mask);
            k_grid
                .iter()
                .map(|&k| {
                    let imputed = knn_impute(&masked, k)?;
                    Ok(fold_mse(table, &imputed, mask, &scales))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mse: Vec<Vec<f64>> = (0..k_grid.len())
        .map(|ki| (0..folds).map(|f| mse_by_fold[f][ki]).collect())
        .collect();
    let mean_mse: Vec<f64> = mse
        .iter()
        .map(|per_fold| per_fold.iter().sum::<f64>() / folds as f64)
        .collect();

    let mut best = 0usize;
    for ki in 1..k_grid.len() {
        let better = mean_mse[ki] < mean_mse[best]
            || (mean_mse[ki] == mean_mse[best] && k_grid[ki] < k_grid[best]);
        if better {
            best = ki;
        }
    }

    Ok(CvSelection {
        chosen_k: k_grid[best],
        k_grid: k_grid.to_vec(),
        fold_masks,
        mse,
        mean_mse,
    })
}
