use latent_impact::dist::TailDistribution;
use latent_impact::execution::*;
use latent_impact::impact::ImpactLaw;

#[test]
fn gains_positive_and_ordered() {
    for i in 1..90 {
        let d = 0.1 + 0.8 * i as f64 / 90.0;
        let a = gain_analytics(d).unwrap();
        assert!(a.f > 0.0 && a.g > 0.0, "{a:?}");
        assert!(
            0.0 < a.gain && a.gain < a.gain_max && a.gain_max < 1.0,
            "{a:?}"
        );
        assert!(a.lambda > 0.0 && a.lambda.is_finite());
    }
}

#[test]
fn bucket_savings_increase_with_steps() {
    for d in [0.3, 0.5, 0.7] {
        let a = gain_analytics(d).unwrap();
        let mut last = 0.0;
        for n in 1..=20 {
            let s = bucket_strategy(1.0, n, d, 1.0, a.lambda).unwrap();
            assert!(s.relative_saving > last);
            assert!(s.relative_saving <= a.gain_max);
            last = s.relative_saving;
        }
    }
}

#[test]
fn bucket_completion_time_closed_form() {
    // T_N = L0·((1+f)^{N+1} − λ^{N+1})/(1+f−λ)
    let a = gain_analytics(0.5).unwrap();
    let (l0, n, lam) = (3.0, 7, 0.4);
    let s = bucket_strategy(l0, n, 0.5, 1.0, lam).unwrap();
    let r = 1.0 + a.f;
    let closed = l0 * (r.powi(n as i32 + 1) - lam.powi(n as i32 + 1)) / (r - lam);
    assert!((s.completion_time - closed).abs() < 1e-10 * closed);
    assert!((s.total_volume - l0 * r.powi(n as i32)).abs() < 1e-10);
}

#[test]
fn vwap_cost_properties() {
    let law = ImpactLaw::new(1.0, 1.5).unwrap();
    let cfg = VwapConfig {
        l_a: 3.0,
        mu_tilde: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5],
        mu: 1.0,
        dist: TailDistribution::power_law(1.5, 1.0).unwrap(),
        law,
        replicas: 20_000,
        seed: 1,
        sign_mode: SignMode::Conditional,
        lambda_risk: 0.0,
    };
    let rep = vwap_cost_mc(&cfg).unwrap();
    for w in rep.rates.windows(2) {
        let se = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        assert!(w[1].mean_cost >= w[0].mean_cost - 3.0 * se);
    }
    assert!(rep
        .rates
        .iter()
        .all(|r| r.mean_cost >= 0.0 && r.var_cost >= 0.0));
    let beta = rep.beta.unwrap();
    assert!(beta > 0.05 && beta < 0.25, "{beta}");
    // risk aversion pushes toward faster rates
    let mut prev = 0.0;
    for lam in [0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0] {
        let r = rep.optimal_rate_for(lam);
        assert!(r >= prev);
        prev = r;
    }
    assert_eq!(rep.optimal_rate_for(0.0), 0.01);
    let mut csv = Vec::new();
    rep.write_csv(&mut csv).unwrap();
    assert!(String::from_utf8(csv)
        .unwrap()
        .starts_with("mu_tilde,mean_cost,var_cost,stderr\n"));
}

#[test]
fn vwap_rejects_bad_grids() {
    let law = ImpactLaw::new(1.0, 1.5).unwrap();
    let mut cfg = VwapConfig {
        l_a: 1.0,
        mu_tilde: vec![],
        mu: 0.5,
        dist: TailDistribution::power_law(1.5, 1.0).unwrap(),
        law,
        replicas: 10,
        seed: 0,
        sign_mode: SignMode::Conditional,
        lambda_risk: 0.0,
    };
    assert!(vwap_cost_mc(&cfg).is_err());
    cfg.mu_tilde = vec![0.6];
    assert!(vwap_cost_mc(&cfg).is_err());
}
