mod common;

use common::{brute_km, integrate_half_line, km_datasets, mean_sd, weibull_pdf};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use switchstrat_core::diagnostics::gelman_rubin;
use switchstrat_core::km::km_fit;
use switchstrat_core::ppc::{
    deviance_term, disc_bic, disc_deviance_s, disc_deviance_y, disc_km, disc_signal_noise, pppv, replicate_data,
};
use switchstrat_core::trial::{generate, GeneratorConfig};
use switchstrat_core::{stream_rng, Arm, AugmentedUnit, Dataset, PatientRecord, SwitchStatus, Theta};

#[test]
fn km_equals_brute_force_product_limit() {
    for (times, events) in km_datasets(1) {
        let curve = km_fit(&times, &events).unwrap();
        let mut probes = times.clone();
        probes.extend([0.001, 10.0]);
        for t in probes {
            assert_eq!(curve.eval(t), brute_km(&times, &events, t), "t = {t}");
        }
    }
}

#[test]
fn km_hand_case_and_conventions() {
    let c = km_fit(&[1.0, 2.0, 3.0], &[true, true, false]).unwrap();
    approx::assert_abs_diff_eq!(c.eval(1.0), 2.0 / 3.0, epsilon = 1e-15);
    approx::assert_abs_diff_eq!(c.eval(2.0), 1.0 / 3.0, epsilon = 1e-15);
    assert_eq!(c.eval(2.5), c.eval(2.0));
    assert_eq!(c.eval(0.5), 1.0);
    assert_eq!(c.eval(99.0), c.eval(2.0));
    let none = km_fit(&[1.0, 2.0], &[false, false]).unwrap();
    assert_eq!(none.eval(5.0), 1.0);
    assert!(km_fit(&[], &[]).is_err());
}

#[test]
fn km_without_censoring_is_empirical_survival() {
    let mut rng = stream_rng(2, 0);
    let times: Vec<f64> = (0..80).map(|_| (rng.random_range(0.0f64..5.0) * 10.0).ceil() / 10.0 + 0.1).collect();
    let c = km_fit(&times, &vec![true; times.len()]).unwrap();
    for &t in &times {
        let frac = times.iter().filter(|&&x| x > t).count() as f64 / times.len() as f64;
        approx::assert_abs_diff_eq!(c.eval(t), frac, epsilon = 1e-14);
    }
}

#[test]
fn km_ignores_where_late_censorings_fall() {
    // Moving a censoring time around beyond the last event changes no risk set
    // at any event time.
    for (mut times, events) in km_datasets(3).into_iter().take(20) {
        let last_event = times.iter().zip(&events).filter(|(_, &e)| e).map(|(&t, _)| t).fold(0.0, f64::max);
        let before = km_fit(&times, &events).unwrap();
        for (t, e) in times.iter_mut().zip(&events) {
            if !e && *t > last_event {
                *t += 5.0;
            }
        }
        assert_eq!(km_fit(&times, &events).unwrap(), before);
    }
}

#[test]
fn gelman_rubin_examples() {
    let r = gelman_rubin(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap().unwrap();
    assert_eq!(r, (2.0f64 / 3.0).sqrt());
    let mut rng = stream_rng(4, 0);
    let iid: Vec<Vec<f64>> = (0..3).map(|_| (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    let r = gelman_rubin(&iid).unwrap().unwrap();
    assert!((0.99..=1.02).contains(&r), "{r}");
    let apart = vec![iid[0].clone(), iid[1].iter().map(|x| x + 10.0).collect()];
    assert!(gelman_rubin(&apart).unwrap().unwrap() > 3.0);
    assert_eq!(gelman_rubin(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap(), None);
    assert!(gelman_rubin(&[vec![1.0, 2.0]]).is_err());
}

proptest! {
    #[test]
    fn gelman_rubin_is_affine_invariant(
        chains in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 20), 2..5),
        a in 0.1f64..10.0,
        b in -10.0f64..10.0,
    ) {
        let moved: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|x| a * x + b).collect()).collect();
        match (gelman_rubin(&chains).unwrap(), gelman_rubin(&moved).unwrap()) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9 * x),
            (x, y) => prop_assert_eq!(x.is_none(), y.is_none()),
        }
    }

    #[test]
    fn pppv_is_invariant_under_increasing_maps(pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..200)) {
        let (obs, rep): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let p = pppv(&obs, &rep).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        let f = |x: &f64| x.exp() * 3.0 + 1.0;
        let q = pppv(&obs.iter().map(f).collect::<Vec<_>>(), &rep.iter().map(f).collect::<Vec<_>>()).unwrap();
        prop_assert_eq!(p, q);
    }

    #[test]
    fn event_deviance_terms_are_non_negative(cum_hazard in 1e-6f64..50.0) {
        prop_assert!(deviance_term(true, cum_hazard) >= -1e-12);
        prop_assert!(deviance_term(false, cum_hazard) >= 0.0);
    }
}

#[test]
fn pppv_of_exchangeable_pairs_is_near_one_half() {
    let mut rng = stream_rng(5, 0);
    let n = 40_000;
    let obs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let rep: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let p = pppv(&obs, &rep).unwrap();
    assert!((p - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt(), "{p}");
    assert_eq!(pppv(&obs, &obs).unwrap(), 1.0);
}

fn small_complete(seed: u64, n: usize) -> (Dataset, Vec<AugmentedUnit>) {
    let (ds, truth) = generate(&GeneratorConfig { n, ..GeneratorConfig::calibrated(seed) }).unwrap();
    let aug = ds
        .records()
        .iter()
        .zip(&truth)
        .map(|(r, t)| {
            let s_star = match (r.arm, t.s0) {
                (Arm::Control, SwitchStatus::SwitchAt(s)) if s > r.c => SwitchStatus::SwitchAt(r.c),
                _ => t.s0,
            };
            AugmentedUnit { s_star, y0_star: None }
        })
        .collect();
    (ds, aug)
}

fn cum_hazard(t: f64, a: f64, b: f64) -> f64 {
    b.exp() * t.powf(a)
}

#[test]
fn deviances_match_residual_sums() {
    let theta = Theta::calibration_truth(0.0);
    let (ds, aug) = small_complete(9, 20);
    let (mut dy, mut ds_) = (0.0, 0.0);
    for (r, a) in ds.records().iter().zip(&aug) {
        let lam = match (r.arm, a.s_star) {
            (Arm::Control, SwitchStatus::NonSwitcher) => cum_hazard(r.y_tilde, theta.y0_ns.shape, theta.y0_ns.log_rate),
            (Arm::Treated, SwitchStatus::NonSwitcher) => cum_hazard(r.y_tilde, theta.y1_ns.shape, theta.y1_ns.log_rate),
            (Arm::Control, SwitchStatus::SwitchAt(s)) => {
                cum_hazard(r.y_tilde - s, theta.y0_sw.shape, theta.y0_sw.log_rate + theta.lambda * s.ln())
            }
            (Arm::Treated, SwitchStatus::SwitchAt(s)) => {
                cum_hazard(r.y_tilde, theta.y1_sw.shape, theta.y1_sw.log_rate + theta.lambda * s.ln())
            }
        };
        let delta = if r.y_event { 1.0 } else { 0.0 };
        let m = delta - lam;
        dy += -2.0 * (m + if r.y_event { (delta - m).ln() } else { 0.0 });
        if r.arm == Arm::Control && a.s_star.is_switcher() {
            let s = r.s_tilde.unwrap();
            let delta = if r.s_event { 1.0 } else { 0.0 };
            let m = delta - cum_hazard(s, theta.sw.shape, theta.sw.log_rate);
            ds_ += -2.0 * (m + if r.s_event { (delta - m).ln() } else { 0.0 });
        }
    }
    approx::assert_relative_eq!(disc_deviance_y(ds.records(), &aug, &theta), dy, max_relative = 1e-10);
    approx::assert_relative_eq!(disc_deviance_s(ds.records(), &aug, &theta), ds_, max_relative = 1e-10);
    assert_eq!(deviance_term(true, 1.0), 0.0);
    assert_eq!(deviance_term(false, 0.5), 1.0);
}

#[test]
fn bic_is_linear_in_the_log_likelihood() {
    let theta = Theta::calibration_truth(0.0);
    let (ds, aug) = small_complete(10, 50);
    let base = disc_bic(ds.records(), &aug, &theta);
    let doubled: Vec<PatientRecord> = ds.records().iter().chain(ds.records()).copied().collect();
    let aug2: Vec<AugmentedUnit> = aug.iter().chain(&aug).copied().collect();
    let ll = -(base / 2.0) - 12.0 * 50f64.ln();
    // Twice the data: L doubles and n doubles.
    approx::assert_relative_eq!(
        disc_bic(&doubled, &aug2, &theta),
        -2.0 * (2.0 * ll + 12.0 * 100f64.ln()),
        max_relative = 1e-12
    );
}

#[test]
fn signal_noise_arithmetic() {
    let rec = |id, arm, y: f64| PatientRecord {
        id,
        arm,
        c: 10.0,
        s_tilde: (arm == Arm::Control).then_some(10.0),
        s_event: false,
        y_tilde: y,
        y_event: true,
    };
    // Control non-switchers: variance 4 from four values; treated: variance 1 from two.
    let c = [1.0, 3.0, 5.0, 3.0];
    let var_c = {
        let m = 3.0;
        c.iter().map(|x: &f64| (x - m) * (x - m)).sum::<f64>() / 3.0
    };
    let mut records: Vec<PatientRecord> = c.iter().enumerate().map(|(i, &y)| rec(i as u64, Arm::Control, y)).collect();
    records.push(rec(10, Arm::Treated, 3.0));
    records.push(rec(11, Arm::Treated, 3.0 + 2f64.sqrt()));
    let aug = vec![AugmentedUnit::non_switcher(); records.len()];
    let [ns, sw, switching] = disc_signal_noise(&records, &aug);
    let ns = ns.unwrap();
    approx::assert_relative_eq!(ns.signal, (3.0 + 2f64.sqrt() / 2.0 - 3.0), max_relative = 1e-12);
    approx::assert_relative_eq!(ns.noise, (var_c / 4.0 + 1.0 / 2.0).sqrt(), max_relative = 1e-12);
    approx::assert_relative_eq!(ns.ratio, ns.signal / ns.noise, max_relative = 1e-12);
    assert!(sw.is_none() && switching.is_none());

    // Equal means give zero signal.
    let flat: Vec<PatientRecord> = [1.0, 2.0].iter().flat_map(|&y| [rec(0, Arm::Control, y), rec(1, Arm::Treated, y)]).collect();
    let aug = vec![AugmentedUnit::non_switcher(); flat.len()];
    assert_eq!(disc_signal_noise(&flat, &aug)[0].unwrap().signal, 0.0);
}

#[test]
fn km_discrepancy_uses_the_shared_kernel() {
    let (ds, aug) = small_complete(12, 300);
    let grid = [0.1, 0.5, 1.0, 2.0, 2.9];
    let [ns, sw, st] = disc_km(ds.records(), &aug, &grid);
    let pick = |f: &dyn Fn(&PatientRecord, &AugmentedUnit) -> Option<(f64, bool)>| {
        let (t, e): (Vec<f64>, Vec<bool>) = ds.records().iter().zip(&aug).filter_map(|(r, a)| f(r, a)).unzip();
        let c = km_fit(&t, &e).unwrap();
        grid.iter().map(|&x| c.eval(x)).collect::<Vec<f64>>()
    };
    assert_eq!(ns, pick(&|r, a| (!a.s_star.is_switcher()).then_some((r.y_tilde, r.y_event))));
    assert_eq!(sw, pick(&|r, a| a.s_star.is_switcher().then_some((r.y_tilde, r.y_event))));
    assert_eq!(st, pick(&|r, a| (r.is_control() && a.s_star.is_switcher()).then(|| (r.s_tilde.unwrap(), r.s_event))));
    let none = vec![AugmentedUnit::non_switcher(); ds.len()];
    assert!(disc_km(ds.records(), &none, &grid)[2].iter().all(|&v| v == 1.0));
}

#[test]
fn replicate_event_fractions_match_model_probabilities() {
    let theta = Theta::calibration_truth(0.0);
    let (ds, _) = generate(&GeneratorConfig { n: 300, ..GeneratorConfig::calibrated(13) }).unwrap();
    let t = theta;
    // P{Y(z) ≤ c} and P{S(0) ≤ c, switcher} at a unit's censoring time.
    let f_s = |s: f64| weibull_pdf(s, t.sw.shape, t.sw.log_rate);
    let p_event = |arm: Arm, c: f64| {
        let ns = match arm {
            Arm::Control => t.y0_ns.cdf(c),
            Arm::Treated => t.y1_ns.cdf(c),
        };
        let sw = integrate_half_line(
            &|s: f64| {
                if s <= 0.0 {
                    return 0.0;
                }
                let p = match arm {
                    Arm::Control => {
                        if s >= c { 0.0 } else { t.y0_switcher(s).cdf(c - s) }
                    }
                    Arm::Treated => t.y1_switcher(s).cdf(c),
                };
                f_s(s) * p
            },
            1e-11,
        );
        t.pi * ns + (1.0 - t.pi) * sw
    };
    let expected_y: f64 = ds.records().iter().map(|r| p_event(r.arm, r.c)).sum::<f64>() / ds.len() as f64;
    let controls: Vec<&PatientRecord> = ds.records().iter().filter(|r| r.is_control()).collect();
    let expected_s: f64 = controls.iter().map(|r| (1.0 - t.pi) * t.sw.cdf(r.c)).sum::<f64>() / controls.len() as f64;

    let mut rng = stream_rng(14, 0);
    let (mut fy, mut fs) = (Vec::new(), Vec::new());
    for _ in 0..100 {
        let (rep, _) = replicate_data(&ds, &theta, &mut rng).unwrap();
        assert!(rep.records().iter().zip(ds.records()).all(|(a, b)| a.arm == b.arm && a.c == b.c && a.id == b.id));
        fy.push(rep.records().iter().filter(|r| r.y_event).count() as f64 / rep.len() as f64);
        fs.push(rep.records().iter().filter(|r| r.s_event).count() as f64 / controls.len() as f64);
    }
    for (name, xs, want) in [("outcome events", fy, expected_y), ("observed switches", fs, expected_s)] {
        let (m, sd) = mean_sd(&xs);
        assert!((m - want).abs() < 3.0 * sd / 10.0, "{name}: {m} vs {want}");
    }
}
