use std::fmt::Write as _;
use std::path::Path;

use crate::datasets::{render_batch, Dataset, FactorKind, FactorValue, FactorValues};
use crate::models::TrainedModel;
use crate::{Error, Result};

pub const PLOT_POINTS_PER_AXIS: usize = 8;

fn axis_values(kind: &FactorKind) -> Vec<FactorValue> {
    let k = PLOT_POINTS_PER_AXIS;
    match *kind {
        FactorKind::Continuous { lo, hi } => {
            (0..k).map(|i| FactorValue::Real((lo + (hi - lo) * i as f64 / (k - 1) as f64).min(hi))).collect()
        }
        FactorKind::Discrete { cardinality } if cardinality <= k => (1..=cardinality).map(FactorValue::Index).collect(),
        FactorKind::Discrete { cardinality } => {
            (0..k).map(|i| FactorValue::Index(1 + (i * (cardinality - 1) + (k - 1) / 2) / (k - 1))).collect()
        }
    }
}

/// Regular grid over the first two factors; the others sit at their first
/// value (discrete) or midpoint (continuous).
pub fn plot_grid(dataset: &dyn Dataset) -> Result<Vec<FactorValues>> {
    let spec = dataset.spec();
    if spec.len() < 2 {
        return Err(Error::invalid("a latent plot needs at least two factors"));
    }
    let base: Vec<FactorValue> = spec
        .factors()
        .iter()
        .map(|f| match f.kind {
            FactorKind::Discrete { .. } => FactorValue::Index(1),
            FactorKind::Continuous { lo, hi } => FactorValue::Real(0.5 * (lo + hi)),
        })
        .collect();
    let xs = axis_values(&spec.factors()[0].kind);
    let ys = axis_values(&spec.factors()[1].kind);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for x in &xs {
        for y in &ys {
            let mut v = base.clone();
            v[0] = *x;
            v[1] = *y;
            out.push(FactorValues(v));
        }
    }
    Ok(out)
}

fn unit(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 }
}

/// Scatter of 2-D points. `colors` holds the two factor values per point
/// rescaled to `[0, 1]`; they drive the red and blue channels.
pub fn latent_svg(points: &[[f64; 2]], colors: &[[f64; 2]]) -> String {
    const SIDE: f64 = 400.0;
    const PAD: f64 = 30.0;
    let (mut lo, mut hi) = ([0.0_f64, 0.0], [1.0_f64, 1.0]);
    for p in points {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let px = |v: f64, a: usize| PAD + (v - lo[a]) / (hi[a] - lo[a]) * SIDE;
    let mut s = String::new();
    let total = SIDE + 2.0 * PAD;
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#);
    let _ = writeln!(s, r#"<rect x="{PAD}" y="{PAD}" width="{SIDE}" height="{SIDE}" fill="white" stroke="black"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{PAD}" y="{}" font-size="12">[{:.2}, {:.2}] x [{:.2}, {:.2}]</text>"#,
        PAD - 10.0,
        lo[0],
        hi[0],
        lo[1],
        hi[1]
    );
    for (p, c) in points.iter().zip(colors) {
        let (r, b) = ((c[0] * 255.0).round() as u8, (c[1] * 255.0).round() as u8);
        // SVG y grows downwards.
        let _ = writeln!(
            s,
            r#"<circle cx="{:.3}" cy="{:.3}" r="4" fill="rgb({r},60,{b})"/>"#,
            px(p[0], 0),
            total - px(p[1], 1)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Representations of the plot grid through a two-dimensional model.
pub fn plot_latent(model: &TrainedModel, dataset: &dyn Dataset, path: &Path) -> Result<usize> {
    if model.n() != 2 {
        return Err(Error::invalid(format!(
            "latent plots need a model with n = 2 latent dims, this one has {}; retrain with n = 2",
            model.n()
        )));
    }
    let grid = plot_grid(dataset)?;
    let reps = model.represent(&render_batch(dataset, grid.clone())?.images)?;
    let points: Vec<[f64; 2]> = reps.data().chunks_exact(2).map(|r| [r[0], r[1]]).collect();
    let spec = dataset.spec();
    let range = |f: usize| match spec.factors()[f].kind {
        FactorKind::Continuous { lo, hi } => (lo, hi),
        FactorKind::Discrete { cardinality } => (1.0, cardinality as f64),
    };
    let (r0, r1) = (range(0), range(1));
    let colors: Vec<[f64; 2]> =
        grid.iter().map(|g| [unit(g.0[0].as_f64(), r0.0, r0.1), unit(g.0[1].as_f64(), r1.0, r1.1)]).collect();
    std::fs::write(path, latent_svg(&points, &colors)).map_err(|e| Error::io(path, e))?;
    Ok(points.len())
}
