use latent_impact::book::solve_book_general;
use latent_impact::dist::TailDistribution;
use latent_impact::numerics::{fit_loglog_slope, log_space_int};
use latent_impact::sim::*;

fn adaptive(gamma: f64, mu: f64, horizon: u64, seed: u64) -> SimResult {
    let dist = TailDistribution::power_law(gamma, 1.0).unwrap();
    let book = solve_book_general(&dist, 1.0, 2000).unwrap();
    run_simulation(&SimConfig {
        dist,
        mu,
        horizon,
        policy: MmPolicy::AdaptiveCompetitive,
        book: Some(book),
        seed,
    })
    .unwrap()
}

#[test]
fn adaptive_prices_diffuse() {
    let r = adaptive(1.5, 0.5, 1_000_000, 21);
    let lags: Vec<usize> = log_space_int(10, 1000, 9)
        .into_iter()
        .map(|l| l as usize)
        .collect();
    let (pts, omitted) = volatility_signature(&r, &lags);
    assert!(omitted.is_empty());
    let e = variance_growth_exponent(&pts, 10, 1000).unwrap().slope;
    assert!((0.9..=1.1).contains(&e), "{e}");
}

#[test]
fn level_exits_are_fair_bets() {
    let r = adaptive(1.5, 1.0, 300_000, 4);
    let m = r.martingale;
    assert!(m.n > 1000);
    assert!(m.mean.abs() < 3.0 * m.stderr + 1e-9, "{m:?}");
}

#[test]
fn replay_reproduces_path() {
    let r = adaptive(1.7, 0.7, 20_000, 8);
    assert_eq!(replay(&r).unwrap(), r.price_path);
    let again = adaptive(1.7, 0.7, 20_000, 8);
    assert_eq!(again.price_path, r.price_path);
}

#[test]
fn informed_signs_have_long_memory() {
    // zero-mean estimator pooled over independent runs
    let lags: Vec<usize> = vec![10, 20, 50, 100, 200, 500, 1000];
    let mut sums = vec![0.0; lags.len()];
    let runs = 20;
    for seed in 0..runs {
        let r = adaptive(1.5, 1.0, 1_000_000, 100 + seed);
        for (s, (_, c)) in sums
            .iter_mut()
            .zip(sign_autocorrelation_zero_mean(&r.signs(), &lags))
        {
            *s += c / runs as f64;
        }
    }
    let xs: Vec<f64> = lags.iter().map(|&l| l as f64).collect();
    let slope = fit_loglog_slope(&xs, &sums, 0..xs.len()).unwrap().slope;
    // correlation decays as lag^{-(2-γ)}
    assert!((slope + 0.5).abs() < 0.1, "{slope}");
}

#[test]
fn passive_refill_superdiffuses() {
    // one giant trend can dominate a path, so take the median over paths
    let gamma = 1.7;
    let lags: Vec<usize> = log_space_int(30, 3000, 9)
        .into_iter()
        .map(|l| l as usize)
        .collect();
    let mut es: Vec<f64> = (0..5)
        .map(|seed| {
            let r = run_simulation(&SimConfig {
                dist: TailDistribution::power_law(gamma, 1.0).unwrap(),
                mu: 1.0,
                horizon: 1_000_000,
                policy: MmPolicy::PassiveRefill,
                book: None,
                seed,
            })
            .unwrap();
            let (pts, _) = volatility_signature(&r, &lags);
            variance_growth_exponent(&pts, 30, 3000).unwrap().slope
        })
        .collect();
    es.sort_by(f64::total_cmp);
    let e = es[2];
    assert!((e - (2.0 - (gamma - 1.0))).abs() < 0.15, "{es:?}");
}
