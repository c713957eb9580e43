use latent_impact::book::{
    solve_alpha_powerlaw, solve_book_general, verify_book_small, volume_profile_slope,
};
use latent_impact::dist::TailDistribution;
use latent_impact::error::Error;

/// Tail table whose book has boundaries exactly at `levels`: zero profit
/// fixes `Δ(p) = Σ_{k<p} L_k / L_p`, then the martingale condition gives
/// `P(l > L_p) = P(l > L_{p−1})·Δ/(1+Δ)`. The top level is terminal.
fn fixture_from_levels(levels: &[u64], beyond_l0: f64) -> Vec<(u64, f64)> {
    let mut table = vec![(levels[0], 1.0)];
    let mut survival = beyond_l0;
    let mut sum = levels[0] as f64;
    for &level in &levels[1..] {
        table.push((level, survival));
        let lp = level as f64;
        let delta = sum / lp;
        survival *= delta / (1.0 + delta);
        sum += lp;
    }
    table
}

fn fixtures() -> Vec<Vec<(u64, f64)>> {
    vec![
        vec![(1, 1.0), (2, 0.5), (3, 1.0 / 6.0)],
        fixture_from_levels(&[1, 2, 4, 7], 0.4),
        fixture_from_levels(&[1, 3, 5, 6, 10], 0.3),
        fixture_from_levels(&[2, 3, 5, 8, 13, 21], 0.6),
    ]
}

#[test]
fn fixture_builder_reproduces_hand_table() {
    let t = fixture_from_levels(&[1, 2, 3], 0.5);
    assert_eq!(t.len(), 3);
    assert!((t[2].1 - 1.0 / 6.0).abs() < 1e-15);
}

fn book_for(table: &[(u64, f64)]) -> (TailDistribution, latent_impact::LatentBook) {
    let dist = TailDistribution::empirical(table).unwrap();
    let book = solve_book_general(&dist, table[0].0 as f64, 64).unwrap();
    (dist, book)
}

#[test]
fn discrete_fixtures_pass_exhaustive_oracle() {
    for table in fixtures() {
        let (dist, book) = book_for(&table);
        let r = verify_book_small(&dist, &book).unwrap();
        assert!(r.max_martingale_residual <= 1e-8, "{table:?}: {r:?}");
        assert!(r.max_fair_price_residual <= 1e-8, "{table:?}: {r:?}");
        for &(size, pnl) in &r.per_size_mm_profit {
            assert!(pnl.is_finite(), "size {size}");
        }
    }
}

#[test]
fn discrete_levels_land_on_support() {
    for table in fixtures() {
        let (_, book) = book_for(&table);
        for lv in book.levels() {
            assert!(
                table.iter().any(|&(s, _)| (s as f64 - lv.l_p).abs() < 1e-9),
                "{lv:?}"
            );
        }
        assert!(book.is_terminal());
    }
}

#[test]
fn three_size_fixture_by_hand() {
    // G(1) = 1/2, G(2) = 1/6, G(3) = 0 with L0 = 1.
    // Level 1 ends at 2: Δ(1) = G(2)/(G(1) − G(2)) = 1/2, and Δ·L = L0 gives L1 = 2.
    let (_, book) = book_for(&fixtures()[0]);
    let lv = book.levels();
    assert!((lv[1].l_p - 2.0).abs() < 1e-12);
    assert!((lv[1].delta_p - 0.5).abs() < 1e-12);
    assert!((book.completion_probability(1).unwrap() - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn perturbed_volume_is_detected() {
    for table in fixtures() {
        let (dist, book) = book_for(&table);
        for p in 1..book.levels().len() {
            let bad = book.with_perturbed_volume(p, 1.1).unwrap();
            match verify_book_small(&dist, &bad) {
                Ok(r) => assert!(
                    r.max_martingale_residual.max(r.max_fair_price_residual) > 1e-3,
                    "{table:?} level {p}: {r:?}"
                ),
                Err(e) => assert!(matches!(e, Error::Range(_)), "{e}"),
            }
        }
    }
}

#[test]
fn verifier_rejects_continuous_laws() {
    let dist = TailDistribution::power_law(1.5, 1.0).unwrap();
    let book = solve_book_general(&dist, 1.0, 10).unwrap();
    assert!(matches!(
        verify_book_small(&dist, &book),
        Err(Error::Parameter(_))
    ));
}

#[test]
fn exponential_tail_permanent_fraction_vanishes() {
    // P(l ≥ k) = e^{−(k−1)/s}: levels thin out as s/p, so Δ(p)/p → 1
    let scale = 200.0;
    let table: Vec<(u64, f64)> = (1..=6000)
        .map(|k| (k, (-(k as f64 - 1.0) / scale).exp()))
        .collect();
    let dist = TailDistribution::empirical(&table).unwrap();
    let book = solve_book_general(&dist, scale, 400).unwrap();
    // lattice effects stay small while levels span several sizes
    let permanent: Vec<f64> = book.levels()[2..]
        .iter()
        .take_while(|l| l.v_p >= 5.0)
        .map(|l| 1.0 - l.alpha_p)
        .collect();
    assert!(permanent.len() > 30, "{}", permanent.len());
    for w in permanent.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{w:?}");
    }
    assert!(
        *permanent.last().unwrap() < 0.5 * permanent[0],
        "{permanent:?}"
    );
}

#[test]
fn alpha_recursion_limits() {
    for gamma in [1.3, 1.5, 1.7] {
        let a = solve_alpha_powerlaw(gamma, 2000).unwrap();
        let lim = (gamma - 1.0) / gamma;
        assert!((a[1999] - lim).abs() < 0.02, "gamma {gamma}: {}", a[1999]);
        assert!(a.iter().all(|&x| x > 0.0 && x.is_finite()));
    }
}

#[test]
fn book_shapes() {
    let linear =
        solve_book_general(&TailDistribution::power_law(1.5, 1.0).unwrap(), 1.0, 2000).unwrap();
    let s = volume_profile_slope(&linear).unwrap().slope;
    assert!((s - 1.0).abs() < 0.1, "{s}");
    let sub =
        solve_book_general(&TailDistribution::power_law(1.7, 1.0).unwrap(), 1.0, 2000).unwrap();
    let s = volume_profile_slope(&sub).unwrap().slope;
    assert!((s - 0.43).abs() < 0.1, "{s}");
}

#[test]
fn impact_and_reversion_ratio() {
    for gamma in [1.3f64, 1.5, 1.7] {
        let book = solve_book_general(&TailDistribution::power_law(gamma, 1.0).unwrap(), 1.0, 2000)
            .unwrap();
        let e = book.impact_exponent().unwrap().slope;
        assert!((e - (gamma - 1.0)).abs() < 0.05, "gamma {gamma}: {e}");
        let v = book.levels()[1900].l_p;
        let ratio = book.reversion_at(v).unwrap() / book.impact_at(v).unwrap();
        assert!((ratio - 1.0 / gamma).abs() < 0.03, "gamma {gamma}: {ratio}");
    }
}
