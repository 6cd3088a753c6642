use proptest::prelude::*;
use roccet_lab::harness::ScenarioSpec;
use roccet_lab::metrics::{bandwidth_share, harm_from_goodput, jain_index, nearest_rank, Quartiles};
use roccet_lab::netsim::run;

/// Jain index evaluated straight from its definition over integers.
fn jain_oracle(xs: &[u32]) -> f64 {
    let n = xs.len() as f64;
    let sum: u128 = xs.iter().map(|&x| x as u128).sum();
    let sq: u128 = xs.iter().map(|&x| (x as u128) * (x as u128)).sum();
    (sum * sum) as f64 / (n * sq as f64)
}

proptest! {
    #[test]
    fn jain_lies_between_one_over_n_and_one(xs in prop::collection::vec(0.0f64..1e6, 1..40)) {
        prop_assume!(xs.iter().any(|&x| x > 0.0));
        let j = jain_index(&xs).unwrap();
        let n = xs.len() as f64;
        prop_assert!(j >= 1.0 / n - 1e-12 && j <= 1.0 + 1e-12);
    }

    #[test]
    fn jain_ignores_order_and_scale(
        xs in prop::collection::vec(1u32..1_000_000, 1..40),
        k in 1u32..1000,
        rot in 0usize..40,
    ) {
        let v: Vec<f64> = xs.iter().map(|&x| x as f64).collect();
        let mut r = v.clone();
        r.rotate_left(rot % v.len());
        r.reverse();
        let scaled: Vec<f64> = v.iter().map(|x| x * k as f64).collect();
        let j = jain_index(&v).unwrap();
        prop_assert!((j - jain_index(&r).unwrap()).abs() < 1e-12);
        prop_assert!((j - jain_index(&scaled).unwrap()).abs() < 1e-12);
        prop_assert!((j - jain_oracle(&xs)).abs() < 1e-12);
    }

    #[test]
    fn harm_is_a_fraction(solo in 1e-3f64..1e3, comp in 0.0f64..2e3) {
        let h = harm_from_goodput(solo, comp).unwrap();
        prop_assert!((0.0..=1.0).contains(&h));
        if comp >= solo {
            prop_assert_eq!(h, 0.0);
        }
    }

    #[test]
    fn nearest_rank_returns_a_member(mut xs in prop::collection::vec(-1e6f64..1e6, 1..200), p in 0.0f64..=100.0) {
        xs.sort_by(f64::total_cmp);
        let v = nearest_rank(&xs, p).unwrap();
        prop_assert!(xs.contains(&v));
        let below = xs.iter().filter(|&&x| x <= v).count() as f64;
        prop_assert!(below >= (p / 100.0 * xs.len() as f64).ceil());
    }

    #[test]
    fn quartiles_are_ordered(xs in prop::collection::vec(-1e6f64..1e6, 1..200)) {
        let q = Quartiles::of(&xs).unwrap();
        prop_assert!(q.p25 <= q.p50 && q.p50 <= q.p75 && q.p75 <= q.max);
    }
}

#[test]
fn two_equal_reno_flows_share_evenly() {
    let s = ScenarioSpec::from_toml_str(
        r#"
        name = "pair"
        horizon_s = 60
        buffer_bdp = 1
        [link]
        rate_mbps = 10
        rtt_ms = 40
        [[flows]]
        algo = "reno"
        count = 2
        start_jitter_ms = 5
        "#,
    )
    .unwrap();
    let trace = run(&s).unwrap();
    let share = bandwidth_share(&trace, None).unwrap();
    let total: f64 = share.per_flow.iter().map(|f| f.fraction).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(share.jain_index > 0.9, "{}", share.jain_index);
}
