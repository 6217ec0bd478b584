use super::logistic::{LogisticOptions, LogisticRegression};
use super::{discretize, entropy, pearson, RepresentationTable, DEFAULT_BINS};
use crate::datasets::FactorKind;
use crate::{Error, Result};

/// Factors with at least two observed values; the rest are skipped with a
/// warning.
fn informative_factors(table: &RepresentationTable, metric: &str) -> Result<Vec<usize>> {
    let keep: Vec<usize> = (0..table.k())
        .filter(|&f| {
            let ok = entropy(&table.factor_codes(f).0) > 0.0;
            if !ok {
                log::warn!("{metric}: factor `{}` is constant and is excluded", table.spec().factors()[f].name);
            }
            ok
        })
        .collect();
    if keep.is_empty() {
        return Err(Error::invalid(format!("{metric}: every factor is constant")));
    }
    Ok(keep)
}

fn top_two(column: impl Iterator<Item = f64>) -> (f64, f64) {
    column.fold((f64::NEG_INFINITY, 0.0_f64), |(a, b), v| if v > a { (v, a.max(b)) } else { (a, b.max(v)) })
}

/// Mean over factors of the normalized gap between the two most informative
/// dims.
pub fn mig(table: &RepresentationTable) -> Result<f64> {
    let factors = informative_factors(table, "mig")?;
    let mi = table.mutual_info();
    let mut total = 0.0;
    for &f in &factors {
        let h = entropy(&table.factor_codes(f).0);
        let (a, b) = top_two(mi.iter().map(|row| row[f]));
        total += ((a - b) / h).clamp(0.0, 1.0);
    }
    Ok(total / factors.len() as f64)
}

fn balanced_accuracy(pred: &[usize], truth: &[usize], classes: usize) -> f64 {
    let mut hit = vec![0usize; classes];
    let mut seen = vec![0usize; classes];
    for (&p, &t) in pred.iter().zip(truth) {
        seen[t] += 1;
        hit[t] += usize::from(p == t);
    }
    let present: Vec<usize> = (0..classes).filter(|&c| seen[c] > 0).collect();
    present.iter().map(|&c| hit[c] as f64 / seen[c] as f64).sum::<f64>() / present.len() as f64
}

/// Best balanced accuracy of `x > t` (either orientation) for labels in {0,1}.
fn best_threshold(x: &[f64], y: &[usize]) -> f64 {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let pos = y.iter().filter(|&&c| c == 1).count() as f64;
    let neg = y.len() as f64 - pos;
    let (mut below_pos, mut below_neg) = (0.0, 0.0);
    let mut best: f64 = 0.5;
    for (i, &j) in idx.iter().enumerate() {
        if y[j] == 1 {
            below_pos += 1.0;
        } else {
            below_neg += 1.0;
        }
        let split = i + 1 == idx.len() || x[idx[i + 1]] > x[j];
        if split {
            // Predict 1 above the split.
            let bacc = 0.5 * ((pos - below_pos) / pos + below_neg / neg);
            best = best.max(bacc).max(1.0 - bacc);
        }
    }
    best
}

/// Balanced accuracy when each of `bins` equal-width bins predicts its most
/// frequent class.
fn bin_majority(x: &[f64], y: &[usize], classes: usize) -> f64 {
    let codes = discretize(x, DEFAULT_BINS);
    let mut table = vec![0usize; DEFAULT_BINS * classes];
    for (&b, &c) in codes.iter().zip(y) {
        table[b * classes + c] += 1;
    }
    let majority: Vec<usize> = table.chunks_exact(classes).map(|row| {
        let best = row.iter().max().copied().unwrap_or(0);
        row.iter().position(|&v| v == best).unwrap_or(0)
    }).collect();
    let pred: Vec<usize> = codes.iter().map(|&b| majority[b]).collect();
    balanced_accuracy(&pred, y, classes)
}

/// `[n][k]` predictiveness of each dim for each factor: chance-corrected
/// balanced accuracy for discrete factors, R² for continuous ones.
pub fn sap_matrix(table: &RepresentationTable) -> Vec<Vec<f64>> {
    let columns: Vec<Vec<f64>> = (0..table.n()).map(|d| table.column(d)).collect();
    let mut out = vec![vec![0.0; table.k()]; table.n()];
    for f in 0..table.k() {
        let (codes, classes) = table.factor_codes(f);
        let observed = super::counts(&codes).iter().filter(|&&c| c > 0).count();
        for (d, x) in columns.iter().enumerate() {
            out[d][f] = match table.spec().factors()[f].kind {
                FactorKind::Continuous { .. } => pearson(x, &table.factor_values(f)).map_or(0.0, |r| r * r),
                FactorKind::Discrete { .. } if observed < 2 => 0.0,
                FactorKind::Discrete { .. } => {
                    let bacc = if classes == 2 { best_threshold(x, &codes) } else { bin_majority(x, &codes, classes) };
                    let chance = 1.0 / observed as f64;
                    ((bacc - chance) / (1.0 - chance)).clamp(0.0, 1.0)
                }
            };
        }
    }
    out
}

pub fn sap(table: &RepresentationTable) -> Result<f64> {
    let factors = informative_factors(table, "sap")?;
    let s = sap_matrix(table);
    let total: f64 = factors.iter().map(|&f| {
        let (a, b) = top_two(s.iter().map(|row| row[f]));
        (a - b).clamp(0.0, 1.0)
    }).sum();
    Ok(total / factors.len() as f64)
}

/// Mean over dims of how concentrated each dim's information is on a single
/// factor.
pub fn modularity(table: &RepresentationTable) -> Result<f64> {
    let k = table.k();
    if k == 1 {
        return Ok(1.0);
    }
    let mi = table.mutual_info();
    let total: f64 = mi.iter().map(|row| {
        let best = row.iter().copied().fold(0.0, f64::max);
        if best <= 0.0 {
            return 1.0;
        }
        let ideal = row.iter().map(|v| v * v).sum::<f64>() - best * best;
        (1.0 - ideal / (best * best * (k - 1) as f64)).clamp(0.0, 1.0)
    }).sum();
    Ok(total / mi.len() as f64)
}

const DCI_L1: f64 = 0.01;

/// `[n][k]` importances: per factor, the absolute weight mass an L1 linear
/// classifier puts on each dim, normalized to sum to one over dims.
pub fn dci_importance(table: &RepresentationTable) -> Result<Vec<Vec<f64>>> {
    let factors = informative_factors(table, "dci")?;
    let n = table.n();
    let mut r = vec![vec![0.0; table.k()]; n];
    let opts = LogisticOptions { l1: DCI_L1, ..LogisticOptions::default() };
    for f in factors {
        let (codes, classes) = table.factor_codes(f);
        let lr = LogisticRegression::fit(table.reps(), n, &codes, classes, opts)?;
        let imp = lr.feature_importance();
        let total: f64 = imp.iter().sum();
        if total > 0.0 {
            for (row, v) in r.iter_mut().zip(&imp) {
                row[f] = v / total;
            }
        }
    }
    Ok(r)
}

/// Importance-weighted mean over dims of one minus the normalized entropy of
/// the dim's importance over factors.
pub fn dci_from_importance(r: &[Vec<f64>]) -> f64 {
    let k = r.first().map_or(0, Vec::len);
    let total: f64 = r.iter().flatten().sum();
    if total <= 0.0 || k == 0 {
        return 0.0;
    }
    r.iter()
        .map(|row| {
            let mass: f64 = row.iter().sum();
            if mass <= 0.0 {
                return 0.0;
            }
            let score = if k == 1 {
                1.0
            } else {
                let h: f64 = row.iter().filter(|&&v| v > 0.0).map(|&v| -(v / mass) * (v / mass).ln()).sum();
                1.0 - h / (k as f64).ln()
            };
            mass / total * score.clamp(0.0, 1.0)
        })
        .sum()
}

pub fn dci_disentanglement(table: &RepresentationTable) -> Result<f64> {
    Ok(dci_from_importance(&dci_importance(table)?))
}
