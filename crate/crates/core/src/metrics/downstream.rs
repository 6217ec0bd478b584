use rand::seq::SliceRandom;
use rand::RngCore;

use super::logistic::{LogisticOptions, LogisticRegression};
use super::RepresentationTable;
use crate::{Error, Result};

pub const DOWNSTREAM_TEST: usize = 5_000;
pub const DOWNSTREAM_SMALL: usize = 100;
pub const DOWNSTREAM_LARGE: usize = 10_000;
pub const DOWNSTREAM_MIN_ROWS: usize = DOWNSTREAM_TEST + DOWNSTREAM_LARGE;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Efficiency {
    pub acc100: f64,
    pub acc10k: f64,
    /// `acc100 / acc10k`, both averaged over factors.
    pub efficiency: f64,
}

/// Logistic-regression accuracy per factor from 100 and from 10 000 training
/// rows, on a shared 5 000-row test split. The small set is a prefix of the
/// large one.
pub fn downstream_efficiency(table: &RepresentationTable, rng: &mut dyn RngCore) -> Result<Efficiency> {
    if table.len() < DOWNSTREAM_MIN_ROWS {
        return Err(Error::invalid(format!(
            "downstream efficiency needs {DOWNSTREAM_MIN_ROWS} rows, table has {}",
            table.len()
        )));
    }
    let mut idx: Vec<usize> = (0..table.len()).collect();
    idx.shuffle(rng);
    let test = table.subset(&idx[..DOWNSTREAM_TEST]);
    let large = table.subset(&idx[DOWNSTREAM_TEST..DOWNSTREAM_MIN_ROWS]);
    let small = table.subset(&idx[DOWNSTREAM_TEST..DOWNSTREAM_TEST + DOWNSTREAM_SMALL]);
    let n = table.n();
    let (mut a100, mut a10k) = (0.0, 0.0);
    for f in 0..table.k() {
        let (yt, classes) = test.factor_codes(f);
        for (train, acc) in [(&small, &mut a100), (&large, &mut a10k)] {
            let (y, _) = train.factor_codes(f);
            let lr = LogisticRegression::fit(train.reps(), n, &y, classes, LogisticOptions::default())?;
            *acc += lr.accuracy(test.reps(), &yt) / table.k() as f64;
        }
    }
    Ok(Efficiency { acc100: a100, acc10k: a10k, efficiency: if a10k > 0.0 { a100 / a10k } else { 0.0 } })
}
