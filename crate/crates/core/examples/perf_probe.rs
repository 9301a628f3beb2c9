use odtr_core::crossfit::{fit_nuisances, fold_schedule, make_folds, nuisance_design, NuisanceConfig};
use odtr_core::dgp::{sample_dataset, DgpParams};
use odtr_core::learners::{fit_logistic_lasso, LambdaGrid, LassoConfig};
use std::time::Instant;

fn main() {
    let ds = sample_dataset(&DgpParams::new(500, 42)).unwrap();
    let d = nuisance_design(&ds).unwrap();
    let cfg = LassoConfig::default();
    let sub: Vec<usize> = (0..475).filter(|&i| { let r = &ds.records[i]; r.y == 1 && r.s == 1 }).collect();
    let by: Vec<f64> = sub.iter().map(|&i| ds.records[i].v2 as f64).collect();
    let t = Instant::now();
    for _ in 0..5 {
        fit_logistic_lasso(&d, &sub, &by, &LambdaGrid::Auto, 10, 1, &cfg).unwrap();
    }
    println!("b-fit CV'd on {} rows: {:.3}s each", sub.len(), t.elapsed().as_secs_f64() / 5.0);

    for &n in &[500usize, 1000, 2500, 10000] {
        let ds = sample_dataset(&DgpParams::new(n, 42)).unwrap();
        let j = fold_schedule(n);
        let folds = make_folds(n, j, 7).unwrap();
        let t = Instant::now();
        let _fits = fit_nuisances(&ds, &folds, &[0, 1], &NuisanceConfig::new(3)).unwrap();
        println!("n={n:6} J={j:2}  fit_nuisances: {:7.2}s", t.elapsed().as_secs_f64());
    }
}
