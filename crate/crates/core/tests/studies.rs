use negsamp::experiments::{
    generate, run_floor_sensitivity, run_mse_sweep, run_table1, Covariate, Design, FloorConfig,
    Method, SweepConfig, Table1Config, Table1Model, DEFAULT_RHO_GRID,
};
use negsamp::variance::verify_opt_phi;

/// Least-squares slope of `ys` on `xs`.
fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn variance_tracks_positives_not_rows() {
    let cfg = Table1Config {
        replications: 100,
        ..Table1Config::default()
    };
    let rep = run_table1(&cfg, Table1Model::Correct, 55).unwrap();
    let log_tr: Vec<f64> = rep.rows.iter().map(|r| r.trace.ln()).collect();
    let log_n1: Vec<f64> = rep.rows.iter().map(|r| (r.n1_target as f64).ln()).collect();
    let log_n: Vec<f64> = rep.rows.iter().map(|r| (r.n as f64).ln()).collect();
    let s1 = slope(&log_n1, &log_tr);
    let sn = slope(&log_n, &log_tr);
    assert!((-1.4..=-0.6).contains(&s1), "slope against N1 {s1}");
    assert!(sn > -0.55, "slope against N {sn}");
}

#[test]
fn likelihood_estimator_orderings_hold_at_every_rate() {
    let mut cfg = SweepConfig::new(Design::new(Covariate::Normal, 200_000));
    cfg.replications = 200;
    cfg.methods = vec![Method::UniLik, Method::OptW, Method::OptLik];
    let rep = run_mse_sweep(&cfg, 404).unwrap();
    for &rho in &DEFAULT_RHO_GRID {
        let lik = rep.index(Method::OptLik, rho).unwrap();
        for other in [Method::OptW, Method::UniLik] {
            let (diff, se) = rep.paired_difference(lik, rep.index(other, rho).unwrap());
            assert!(diff <= 3.0 * se, "rho {rho}: optLik - {other} = {diff} (se {se})");
        }
    }
}

#[test]
fn optimal_function_beats_uniform_in_plug_in_trace() {
    let (data, truth) = generate(&Design::new(Covariate::Normal, 100_000), 6).unwrap();
    let rep = verify_opt_phi(&data, &truth, 0.002, &[0.0, 0.5, 1.0, 1.5]).unwrap();
    assert!(rep.optimal_attains_min, "{:?}", rep.trace_w);
    assert!(rep.trace_w[2] < rep.trace_w[0]);
}

#[test]
fn largest_floor_reduces_to_uniform() {
    let mut sweep = SweepConfig::new(Design::new(Covariate::Normal, 100_000));
    sweep.replications = 40;
    let cfg = FloorConfig {
        sweep,
        rho: 0.01,
        floor_grid: vec![1e-6, 1e-3, 0.5],
    };
    let rep = run_floor_sensitivity(&cfg, 12).unwrap();
    assert_eq!(rep.largest_floor, 0.5);
    assert!(rep.largest_matches_uniform);
    assert_eq!(rep.report.cells.len(), 2 * 3 + 1);
}
