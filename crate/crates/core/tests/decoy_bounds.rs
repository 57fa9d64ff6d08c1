//! Decoy analysis against a straight-line transcription of the bound and
//! rate formulas, plus monotonicity properties.

use proptest::prelude::*;
use qkdnet_core::decoy::{
    binary_entropy, confidence_level, confidence_tail, key_rate, single_photon_bounds, MeasuredStats, RateSettings,
};

struct Oracle {
    q1_l: f64,
    e1_u: f64,
    r: f64,
}

fn h2(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
    }
}

// Written out term by term from the formulas, independent of the crate code.
fn oracle(s: &MeasuredStats, f: f64, q: f64, k: f64) -> Oracle {
    let (mu, nu) = (s.mu, s.nu);
    let qnl = (s.q_nu - k * s.q_nu / (s.n_nu as f64 * s.q_nu).sqrt()).max(0.0);
    let (y0l, y0u) = if s.y0 == 0.0 {
        (0.0, k * k / s.n_0 as f64)
    } else {
        let sd = (s.y0 / s.n_0 as f64).sqrt();
        ((s.y0 - k * sd).max(0.0), s.y0 + k * sd)
    };
    let mut q1 = mu * mu * (-mu).exp() / (mu * nu - nu * nu)
        * (qnl * nu.exp() - s.q_mu * mu.exp() * nu * nu / (mu * mu) - (mu * mu - nu * nu) / (mu * mu) * y0u);
    if q1 < 0.0 {
        q1 = 0.0;
    }
    let e1 = if q1 > 0.0 {
        ((s.e_mu * s.q_mu - 0.5 * y0l * (-mu).exp()) / q1).clamp(0.0, 0.5)
    } else {
        0.5
    };
    let r = q * (-s.q_mu * f * h2(s.e_mu) + q1 * (1.0 - h2(e1)));
    Oracle {
        q1_l: q1,
        e1_u: e1,
        r: r.max(0.0),
    }
}

/// Valid stats drawn from a loss/noise model so that most draws give a
/// positive rate and the rest cover the clamped regimes.
fn stats_strategy() -> impl Strategy<Value = MeasuredStats> {
    (
        0.3f64..0.9,
        0.1f64..0.8,
        0.0f64..35.0,
        prop_oneof![Just(0.0), 1e-8f64..1e-4],
        0.0f64..0.06,
        9.0f64..12.5,
    )
        .prop_map(|(mu, nu_frac, loss_db, y0, ed, log_n)| {
            let nu = mu * nu_frac;
            let eta = 0.1 * 10f64.powf(-loss_db / 10.0);
            let gain = |m: f64| y0 + (1.0 - y0) * (1.0 - (-eta * m).exp());
            let qber = |m: f64| (0.5 * y0 + ed * (gain(m) - y0)) / gain(m);
            let n = 10f64.powf(log_n) as u64;
            MeasuredStats {
                mu,
                nu,
                q_mu: gain(mu),
                e_mu: qber(mu),
                q_nu: gain(nu),
                e_nu: qber(nu),
                y0,
                n_mu: n * 6 / 8,
                n_nu: n / 8,
                n_0: n / 8,
            }
        })
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    a == b || (a - b).abs() <= rel * a.abs().max(b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn bounds_match_oracle(s in stats_strategy(), f in 1.0f64..1.6, k in 0.0f64..12.0) {
        let settings = RateSettings { f, q: 3.0 / 8.0, k_sigma: k };
        let o = oracle(&s, f, settings.q, k);
        let b = single_photon_bounds(&s, &settings).unwrap();
        let est = key_rate(&s, &settings).unwrap();
        prop_assert!(close(b.q1_l, o.q1_l, 1e-12), "q1_l {} vs {}", b.q1_l, o.q1_l);
        prop_assert!(close(b.e1_u, o.e1_u, 1e-12), "e1_u {} vs {}", b.e1_u, o.e1_u);
        // R is a difference of two terms that can nearly cancel; rounding
        // error scales with the terms, so measure it against them.
        let terms = settings.q * (s.q_mu * f * h2(s.e_mu) + o.q1_l * (1.0 - h2(o.e1_u)));
        prop_assert!(
            close(est.r_per_pulse, o.r, 1e-12) || (est.r_per_pulse - o.r).abs() <= 1e-12 * terms,
            "R {} vs {} (terms {})", est.r_per_pulse, o.r, terms
        );
    }

    #[test]
    fn wider_bounds_never_raise_the_rate(s in stats_strategy(), k in 0.0f64..10.0, dk in 0.0f64..5.0) {
        let at = |k_sigma| key_rate(&s, &RateSettings { k_sigma, ..Default::default() }).unwrap();
        let (tight, wide) = (at(k), at(k + dk));
        prop_assert!(wide.q1_l <= tight.q1_l);
        prop_assert!(wide.r_per_pulse <= tight.r_per_pulse);
    }

    #[test]
    fn rate_falls_with_ec_inefficiency(s in stats_strategy(), f in 1.0f64..2.0, df in 0.0f64..1.0) {
        let at = |f| key_rate(&s, &RateSettings { f, ..Default::default() }).unwrap().r_per_pulse;
        prop_assert!(at(f + df) <= at(f));
    }

    #[test]
    fn more_pulses_never_hurt(s in stats_strategy(), scale in 1u64..100) {
        let mut big = s;
        big.n_mu *= scale;
        big.n_nu *= scale;
        big.n_0 *= scale;
        let r = |s: &MeasuredStats| key_rate(s, &RateSettings::default()).unwrap().r_per_pulse;
        prop_assert!(r(&big) >= r(&s));
    }

    #[test]
    fn entropy_is_symmetric_and_bounded(x in 0.0f64..=1.0) {
        let h = binary_entropy(x).unwrap();
        prop_assert!((0.0..=1.0).contains(&h));
        prop_assert!((h - binary_entropy(1.0 - x).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn entropy_rejects_out_of_range() {
    assert!(binary_entropy(-0.01).is_err());
    assert!(binary_entropy(1.5).is_err());
    assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
}

#[test]
fn ten_sigma_tail() {
    let tail = confidence_tail(10.0);
    assert!((tail - 7.62e-24).abs() < 0.01e-24, "{tail:e}");
    assert_eq!(confidence_level(10.0), 1.0);
    assert!((confidence_tail(0.0) - 0.5).abs() < 1e-15);
}
