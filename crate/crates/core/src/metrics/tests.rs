use proptest::prelude::*;
use rand::{Rng, RngCore};

use super::*;
use crate::datasets::{Factor, FactorSpec, FactorValue, FactorValues};

fn grid_spec(k: usize, card: usize) -> FactorSpec {
    FactorSpec::new((0..k).map(|i| Factor::discrete(&format!("f{i}"), card)).collect()).unwrap()
}

fn unit(v: &FactorValue, card: usize) -> f64 {
    (v.as_f64() - 1.0) / (card - 1) as f64
}

/// Full-factorial table with representations computed row-wise.
fn table_from(spec: &FactorSpec, n: usize, f: impl Fn(&FactorValues) -> Vec<f64>) -> RepresentationTable {
    let rows = spec.enumerate().unwrap();
    let reps = rows.iter().flat_map(&f).collect();
    RepresentationTable::new(reps, n, spec.clone(), rows).unwrap()
}

fn perfect(spec: &FactorSpec) -> RepresentationTable {
    table_from(spec, spec.len(), |fv| fv.0.iter().map(|v| unit(v, 10)).collect())
}

fn entangled(spec: &FactorSpec) -> RepresentationTable {
    let k = spec.len();
    table_from(spec, k, |fv| (0..k).map(|d| unit(&fv.0[d], 10) + unit(&fv.0[(d + 1) % k], 10)).collect())
}

fn noise_table(spec: &FactorSpec, n: usize, seed: u64) -> RepresentationTable {
    let mut rng = rng_from_seed(seed);
    let rows = spec.enumerate().unwrap();
    let reps = (0..rows.len() * n).map(|_| rng.random::<f64>()).collect();
    RepresentationTable::new(reps, n, spec.clone(), rows).unwrap()
}

fn small_votes() -> VoteOptions {
    VoteOptions { train: 2_000, eval: 1_000, prune: 2_000, ..VoteOptions::default() }
}

#[test]
fn discretize_examples() {
    assert!(discretize(&[3.0; 7], 20).iter().all(|&c| c == 0));
    let lin: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
    let mut codes = discretize(&lin, 20);
    codes.dedup();
    assert_eq!(codes.len(), 20);
    let mut rng = rng_from_seed(3);
    let uni: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
    let c = discretize(&uni, 20);
    for b in 0..20 {
        let freq = c.iter().filter(|&&v| v == b).count() as f64 / 1e4;
        assert!((freq - 0.05).abs() < 0.01, "bin {b}: {freq}");
    }
}

#[test]
fn mutual_info_examples() {
    let mut rng = rng_from_seed(4);
    let a: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..5)).collect();
    assert!((mutual_info(&a, &a) - entropy(&a)).abs() < 1e-12);
    let relabeled: Vec<usize> = a.iter().map(|&v| [3, 0, 4, 1, 2][v]).collect();
    assert!((mutual_info(&relabeled, &a) - mutual_info(&a, &a)).abs() < 1e-12);
    let b: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..5)).collect();
    assert!(mutual_info(&a, &b) < 0.02);
}

#[test]
fn mig_examples() {
    let spec = grid_spec(4, 10);
    assert!((mig(&perfect(&spec)).unwrap() - 1.0).abs() < 1e-9);
    assert!(mig(&noise_table(&spec, 4, 5)).unwrap() < 0.05);

    let two = grid_spec(2, 4);
    let sum = table_from(&two, 2, |fv| {
        let s = fv.0[0].as_f64() + fv.0[1].as_f64();
        vec![s, s]
    });
    assert!(mig(&sum).unwrap().abs() < 1e-9);
}

#[test]
fn mig_is_matching_free() {
    let spec = grid_spec(3, 10);
    let permuted = table_from(&spec, 3, |fv| vec![unit(&fv.0[2], 10), unit(&fv.0[0], 10), unit(&fv.0[1], 10)]);
    assert!((mig(&permuted).unwrap() - mig(&perfect(&spec)).unwrap()).abs() < 1e-12);
}

#[test]
fn constant_factor_is_skipped() {
    let spec = grid_spec(2, 10);
    let rows: Vec<FactorValues> = (1..=10).map(|i| FactorValues::discrete(&[i, 1])).collect();
    let reps = rows.iter().flat_map(|r| [r.0[0].as_f64(), 0.0]).collect();
    let t = RepresentationTable::new(reps, 2, spec, rows).unwrap();
    assert!((mig(&t).unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn sap_examples() {
    let spec = grid_spec(3, 2);
    let rows: Vec<FactorValues> = spec.enumerate().unwrap().into_iter().cycle().take(800).collect();
    let reps: Vec<f64> = rows.iter().flat_map(|r| r.to_f64()).collect();
    let t = RepresentationTable::new(reps.clone(), 3, spec.clone(), rows.clone()).unwrap();
    assert!((sap(&t).unwrap() - 1.0).abs() < 1e-9);

    let dup: Vec<f64> = rows.iter().flat_map(|r| [r.0[0].as_f64(), r.0[0].as_f64(), r.0[1].as_f64()]).collect();
    let s = sap_matrix(&RepresentationTable::new(dup, 3, spec, rows).unwrap());
    assert!((s[0][0] - s[1][0]).abs() < 1e-12 && s[0][0] > 0.99);

    assert!(sap(&noise_table(&grid_spec(4, 10), 4, 6)).unwrap() < 0.1);
}

#[test]
fn dci_examples() {
    let one_hot = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
    assert!((dci_from_importance(&one_hot) - 1.0).abs() < 1e-12);
    let uniform = vec![vec![0.5; 3]; 3];
    assert!(dci_from_importance(&uniform).abs() < 1e-12);
    let d = dci_disentanglement(&perfect(&grid_spec(4, 10))).unwrap();
    assert!(d > 0.9, "dci {d}");
}

#[test]
fn modularity_examples() {
    let spec = grid_spec(4, 10);
    assert!((modularity(&perfect(&spec)).unwrap() - 1.0).abs() < 1e-9);

    let bin = grid_spec(3, 2);
    let rows: Vec<FactorValues> = bin.enumerate().unwrap().into_iter().cycle().take(800).collect();
    let reps = rows.iter().flat_map(|r| [r.0[0].as_f64() + r.0[1].as_f64(), r.0[1].as_f64() + r.0[2].as_f64()]).collect();
    let m = modularity(&RepresentationTable::new(reps, 2, bin, rows).unwrap()).unwrap();
    assert!(m < 0.8, "modularity {m}");

    // A constant dim alongside a perfect one.
    let one = grid_spec(2, 10);
    let t = table_from(&one, 3, |fv| vec![unit(&fv.0[0], 10), unit(&fv.0[1], 10), 0.5]);
    assert!((modularity(&t).unwrap() - 1.0).abs() < 1e-9);
}

fn perfect_source(k: usize, extra: impl Fn(&mut dyn RngCore) -> Vec<f64>, n_extra: usize) -> impl RepresentationSource {
    FnSource::new(grid_spec(k, 10), k + n_extra, move |fv: &FactorValues, rng: &mut dyn RngCore| {
        let mut r: Vec<f64> = fv.0.iter().map(|v| unit(v, 10)).collect();
        r.extend(extra(rng));
        r
    })
}

fn noise_source(k: usize) -> impl RepresentationSource {
    FnSource::new(grid_spec(k, 10), k, move |_: &FactorValues, rng: &mut dyn RngCore| {
        (0..k).map(|_| rng.random::<f64>()).collect()
    })
}

#[test]
fn betavae_examples() {
    let mut rng = rng_from_seed(7);
    let p = betavae_metric(&perfect_source(4, |_| vec![], 0), &small_votes(), &mut rng).unwrap();
    assert!(p >= 0.95, "perfect {p}");
    let z = betavae_metric(&noise_source(4), &small_votes(), &mut rng).unwrap();
    assert!((z - 0.25).abs() < 0.1, "noise {z}");
    let extra = betavae_metric(&perfect_source(4, |rng| vec![rng.random()], 1), &small_votes(), &mut rng).unwrap();
    assert!(extra >= 0.95, "with noise dim {extra}");
    let single = FnSource::new(grid_spec(1, 10), 1, |fv: &FactorValues, _: &mut dyn RngCore| fv.to_f64());
    assert!(betavae_metric(&single, &small_votes(), &mut rng).is_err());
}

#[test]
fn factorvae_examples() {
    let mut rng = rng_from_seed(8);
    let p = factorvae_metric(&perfect_source(4, |_| vec![], 0), &small_votes(), &mut rng).unwrap();
    assert!(p >= 0.95, "perfect {p}");
    let z = factorvae_metric(&noise_source(4), &small_votes(), &mut rng).unwrap();
    assert!((z - 0.25).abs() < 0.1, "noise {z}");
    let c = factorvae_metric(&perfect_source(4, |_| vec![0.3], 1), &small_votes(), &mut rng).unwrap();
    assert!((c - p).abs() < 1e-12, "constant dim {c} vs {p}");
}

fn sampled_table(source: &dyn RepresentationSource, n: usize, seed: u64) -> RepresentationTable {
    RepresentationTable::sample(source, n, &mut rng_from_seed(seed)).unwrap()
}

#[test]
fn downstream_examples() {
    let spec = grid_spec(2, 3);
    let exact = FnSource::new(spec.clone(), 2, |fv: &FactorValues, _: &mut dyn RngCore| fv.to_f64());
    let e = downstream_efficiency(&sampled_table(&exact, 15_000, 1), &mut rng_from_seed(2)).unwrap();
    assert!((e.efficiency - 1.0).abs() < 0.05, "{e:?}");

    let noise = FnSource::new(spec.clone(), 2, |_: &FactorValues, rng: &mut dyn RngCore| vec![rng.random(), rng.random()]);
    let e = downstream_efficiency(&sampled_table(&noise, 15_000, 3), &mut rng_from_seed(4)).unwrap();
    assert!((e.efficiency - 1.0).abs() < 0.15, "{e:?}");

    let ten = grid_spec(2, 10);
    let noisy = FnSource::new(ten, 6, |fv: &FactorValues, rng: &mut dyn RngCore| {
        let mut r: Vec<f64> = fv.to_f64().iter().map(|v| v + 3.0 * (rng.random::<f64>() - 0.5)).collect();
        r.extend((0..4).map(|_| rng.random::<f64>()));
        r
    });
    let e = downstream_efficiency(&sampled_table(&noisy, 15_000, 5), &mut rng_from_seed(6)).unwrap();
    assert!(e.efficiency < 1.0, "{e:?}");

    assert!(downstream_efficiency(&sampled_table(&exact, 100, 1), &mut rng_from_seed(2)).is_err());
}

#[test]
fn spearman_examples() {
    assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 6.0, 9.0]).unwrap() - 1.0).abs() < 1e-12);
    assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
    assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
    assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    // Ties take their average rank.
    assert!((spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap() - 0.866_025_403_784_438_6).abs() < 1e-12);
}

#[test]
fn perfect_beats_entangled() {
    let spec = grid_spec(4, 10);
    let (p, e) = (perfect(&spec), entangled(&spec));
    for (name, f) in [
        ("mig", mig as fn(&RepresentationTable) -> Result<f64>),
        ("sap", sap),
        ("modularity", modularity),
        ("dci", dci_disentanglement),
    ] {
        let (a, b) = (f(&p).unwrap(), f(&e).unwrap());
        assert!(a > b, "{name}: {a} vs {b}");
    }
}

#[test]
fn metric_report_csv_has_ten_fields() {
    let r = MetricReport {
        betavae: 1.0,
        factorvae: 0.5,
        mig: 0.25,
        dci: 0.0,
        modularity: 1.0,
        sap: 0.1,
        st_gap: None,
        recon: 2.0,
        kl: 3.0,
        neg_elbo: 5.0,
    };
    assert_eq!(r.csv().split(',').count(), METRIC_HEADER.split(',').count());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mi_bounded_by_entropies(a in prop::collection::vec(0usize..6, 50..200), seed in 0u64..1000) {
        let mut rng = rng_from_seed(seed);
        let b: Vec<usize> = a.iter().map(|&v| if rng.random::<f64>() < 0.5 { v % 3 } else { rng.random_range(0..4) }).collect();
        let i = mutual_info(&a, &b);
        prop_assert!(i >= 0.0);
        prop_assert!(i <= entropy(&a).min(entropy(&b)) + 1e-12);
    }

    #[test]
    fn mig_and_modularity_invariant_under_affine_maps(
        seed in 0u64..1000,
        scale in prop::sample::select(vec![-3.0, -0.5, 0.25, 2.0, 7.0]),
        shift in -5.0f64..5.0,
    ) {
        let spec = grid_spec(2, 5);
        let mut rng = rng_from_seed(seed);
        let rows = spec.enumerate().unwrap();
        let rows: Vec<FactorValues> = rows.iter().cycle().take(400).cloned().collect();
        let base: Vec<f64> = rows
            .iter()
            .flat_map(|r| {
                let a = r.0[0].as_f64() + rng.random::<f64>();
                let b = r.0[1].as_f64() * rng.random::<f64>();
                [a, b]
            })
            .collect();
        let moved: Vec<f64> = base.iter().map(|v| scale * v + shift).collect();
        let t0 = RepresentationTable::new(base, 2, spec.clone(), rows.clone()).unwrap();
        let t1 = RepresentationTable::new(moved, 2, spec, rows).unwrap();
        prop_assert!((mig(&t0).unwrap() - mig(&t1).unwrap()).abs() < 1e-9);
        prop_assert!((modularity(&t0).unwrap() - modularity(&t1).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn table_scores_in_unit_interval(seed in 0u64..1000, mix in 0.0f64..1.0) {
        let spec = grid_spec(2, 4);
        let mut rng = rng_from_seed(seed);
        let rows: Vec<FactorValues> = spec.enumerate().unwrap().into_iter().cycle().take(160).collect();
        let reps: Vec<f64> = rows
            .iter()
            .flat_map(|r| {
                let a = r.0[0].as_f64();
                let b = r.0[1].as_f64();
                [mix * a + (1.0 - mix) * b + rng.random::<f64>(), rng.random::<f64>() * 4.0]
            })
            .collect();
        let t = RepresentationTable::new(reps, 2, spec, rows).unwrap();
        for s in [mig(&t).unwrap(), sap(&t).unwrap(), modularity(&t).unwrap(), dci_disentanglement(&t).unwrap()] {
            prop_assert!((0.0..=1.0).contains(&s), "{s}");
        }
    }
}
