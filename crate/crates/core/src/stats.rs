//! Chi-square statistics and small fitting utilities shared by the harness
//! and the relaxation diagnostics.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::{CoreError, Result};

/// Survival function of the chi-square distribution with `dof` degrees of
/// freedom.
pub fn chi_square_sf(stat: f64, dof: f64) -> f64 {
    if dof <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof).expect("dof > 0");
    (1.0 - dist.cdf(stat)).clamp(0.0, 1.0)
}

/// Result of a chi-square test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareOutcome {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Goodness-of-fit test of observed counts against expected counts.
///
/// Bins with expected count below `min_expected` are pooled into a single
/// bin, the usual validity fix for sparse tails.
pub fn goodness_of_fit(
    observed: &[f64],
    expected: &[f64],
    min_expected: f64,
) -> Result<ChiSquareOutcome> {
    assert_eq!(observed.len(), expected.len());
    let mut kept: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        if e >= min_expected {
            kept.push((o, e));
        } else {
            pooled.0 += o;
            pooled.1 += e;
        }
    }
    if pooled.1 > 0.0 {
        if pooled.1 >= min_expected || kept.is_empty() {
            kept.push(pooled);
        } else {
            // fold the remainder into the last regular bin
            let last = kept.last_mut().unwrap();
            last.0 += pooled.0;
            last.1 += pooled.1;
        }
    }
    if kept.len() < 2 {
        return Err(CoreError::DegenerateTable(
            "fewer than two usable bins after pooling".into(),
        ));
    }
    let statistic: f64 = kept
        .iter()
        .map(|&(o, e)| {
            let d = o - e;
            d * d / e
        })
        .sum();
    let dof = kept.len() - 1;
    Ok(ChiSquareOutcome {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof as f64),
    })
}

/// Chi-square independence test on a contingency table (rows x columns of
/// counts).
///
/// Rows are merged top to bottom until every cell's expected count reaches
/// `min_expected`; columns are kept as given. Errors if the merged table
/// degenerates to fewer than two rows or columns with mass.
pub fn independence_test(
    table: &[Vec<f64>],
    min_expected: f64,
) -> Result<ChiSquareOutcome> {
    if table.is_empty() || table[0].is_empty() {
        return Err(CoreError::DegenerateTable("empty table".into()));
    }
    let cols = table[0].len();
    let col_totals: Vec<f64> = (0..cols)
        .map(|j| table.iter().map(|r| r[j]).sum())
        .collect();
    let grand: f64 = col_totals.iter().sum();
    if grand <= 0.0 {
        return Err(CoreError::DegenerateTable("table has no counts".into()));
    }
    let live_cols: Vec<usize> = (0..cols).filter(|&j| col_totals[j] > 0.0).collect();
    if live_cols.len() < 2 {
        return Err(CoreError::DegenerateTable(
            "fewer than two setting columns with counts".into(),
        ));
    }
    let min_col_frac = live_cols
        .iter()
        .map(|&j| col_totals[j] / grand)
        .fold(f64::INFINITY, f64::min);
    // A merged row of total T yields min expected T * min_col_frac.
    let needed_row_total = min_expected / min_col_frac;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut acc = vec![0.0; live_cols.len()];
    let mut acc_total = 0.0;
    for row in table {
        for (k, &j) in live_cols.iter().enumerate() {
            acc[k] += row[j];
        }
        acc_total += row.iter().sum::<f64>();
        if acc_total >= needed_row_total {
            rows.push(std::mem::replace(&mut acc, vec![0.0; live_cols.len()]));
            acc_total = 0.0;
        }
    }
    if acc_total > 0.0 {
        if let Some(last) = rows.last_mut() {
            for (k, v) in acc.iter().enumerate() {
                last[k] += v;
            }
        } else {
            rows.push(acc);
        }
    }
    if rows.len() < 2 {
        return Err(CoreError::DegenerateTable(format!(
            "only {} bin row(s) after merging",
            rows.len()
        )));
    }

    let row_totals: Vec<f64> = rows.iter().map(|r| r.iter().sum()).collect();
    let merged_col_totals: Vec<f64> = (0..live_cols.len())
        .map(|k| rows.iter().map(|r| r[k]).sum())
        .collect();
    let mut statistic = 0.0;
    for (i, row) in rows.iter().enumerate() {
        for (k, &o) in row.iter().enumerate() {
            let e = row_totals[i] * merged_col_totals[k] / grand;
            let d = o - e;
            statistic += d * d / e;
        }
    }
    let dof = (rows.len() - 1) * (live_cols.len() - 1);
    Ok(ChiSquareOutcome {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof as f64),
    })
}

/// Redistribute per-node masses of an `n x n` periodic grid onto a coarser
/// `bins x bins` histogram by exact cell/bin overlap fractions.
///
/// Node `(i1, i2)` owns the node-centered cell
/// `[i1-1/2, i1+1/2) x [i2-1/2, i2+1/2)` in cell units (periodic), and its
/// mass is spread uniformly over it, matching samples drawn as a categorical
/// node draw plus centered uniform jitter.
pub fn rebin_masses(masses: &[f64], n: usize, bins: usize) -> Vec<f64> {
    assert_eq!(masses.len(), n * n);
    assert!(bins >= 1 && bins <= n);
    let r = n as f64 / bins as f64;
    let axis_overlaps = |i: usize| -> Vec<(usize, f64)> {
        // split the node-centered cell at the periodic seam if needed
        let lo = i as f64 - 0.5;
        let pieces: Vec<(f64, f64)> = if lo < 0.0 {
            vec![(0.0, lo + 1.0), (n as f64 + lo, n as f64)]
        } else {
            vec![(lo, lo + 1.0)]
        };
        let mut out = Vec::new();
        for (lo, hi) in pieces {
            let b0 = (lo / r).floor() as usize;
            let b1 = (((hi / r).ceil() as usize).max(1) - 1).min(bins - 1);
            for b in b0..=b1 {
                let seg = hi.min((b + 1) as f64 * r) - lo.max(b as f64 * r);
                if seg > 0.0 {
                    out.push((b, seg));
                }
            }
        }
        out
    };
    let per_axis: Vec<Vec<(usize, f64)>> = (0..n).map(axis_overlaps).collect();
    let mut out = vec![0.0; bins * bins];
    for i1 in 0..n {
        for i2 in 0..n {
            let m = masses[i1 * n + i2];
            if m == 0.0 {
                continue;
            }
            for &(b1, f1) in &per_axis[i1] {
                for &(b2, f2) in &per_axis[i2] {
                    out[b1 * bins + b2] += m * f1 * f2;
                }
            }
        }
    }
    out
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    Some((slope, intercept))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sf_matches_known_values() {
        // chi2 with 1 dof at 3.841 -> p = 0.05
        assert_abs_diff_eq!(chi_square_sf(3.841459, 1.0), 0.05, epsilon = 1e-6);
        assert_abs_diff_eq!(chi_square_sf(0.0, 4.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gof_is_zero_for_identical_counts() {
        let obs = [10.0, 20.0, 30.0];
        let out = goodness_of_fit(&obs, &obs, 5.0).unwrap();
        assert_eq!(out.statistic, 0.0);
        assert_abs_diff_eq!(out.p_value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gof_pools_sparse_bins() {
        let observed = [50.0, 48.0, 1.0, 1.0];
        let expected = [49.0, 49.0, 1.0, 1.0];
        let out = goodness_of_fit(&observed, &expected, 5.0).unwrap();
        // two regular bins plus the pooled remainder folded somewhere
        assert!(out.dof <= 2);
        assert!(out.p_value > 0.5);
    }

    #[test]
    fn independence_detects_dependence() {
        // strongly dependent: row index determines column
        let table = vec![
            vec![100.0, 0.0],
            vec![0.0, 100.0],
            vec![100.0, 0.0],
            vec![0.0, 100.0],
        ];
        let out = independence_test(&table, 5.0).unwrap();
        assert!(out.p_value < 1e-6);

        let flat = vec![vec![50.0, 50.0], vec![50.0, 50.0]];
        let out = independence_test(&flat, 5.0).unwrap();
        assert_abs_diff_eq!(out.statistic, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rebin_conserves_mass_and_splits_straddlers() {
        // 8 nodes onto 5 bins of width 1.6; node 3 owns [2.5, 3.5)
        let n = 8;
        let mut masses = vec![0.0; n * n];
        masses[3 * n + 3] = 1.0;
        let out = rebin_masses(&masses, n, 5);
        let total: f64 = out.iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        // axis overlaps: [1.6,3.2) gets 0.7, [3.2,4.8) gets 0.3
        assert_abs_diff_eq!(out[5 + 1], 0.49, epsilon = 1e-12);
        assert_abs_diff_eq!(out[2 * 5 + 2], 0.09, epsilon = 1e-12);
        assert_abs_diff_eq!(out[5 + 2], 0.21, epsilon = 1e-12);
    }

    #[test]
    fn rebin_wraps_the_seam_cell() {
        // node 0 owns [-0.5, 0.5): half in the first bin, half in the last
        let n = 8;
        let mut masses = vec![0.0; n * n];
        masses[0] = 1.0;
        let out = rebin_masses(&masses, n, 4);
        assert_abs_diff_eq!(out[0], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(out[3], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(out[3 * 4], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(out[3 * 4 + 3], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn linear_fit_recovers_slope() {
        let pts: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, 3.0 - 2.0 * i as f64)).collect();
        let (slope, intercept) = linear_fit(&pts).unwrap();
        assert_abs_diff_eq!(slope, -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(intercept, 3.0, epsilon = 1e-12);
    }
}
