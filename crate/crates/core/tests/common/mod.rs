//! Numerical oracles shared by the integration tests. They are coded
//! independently of the library so that agreement means something.

#![allow(dead_code)]

/// Adaptive Simpson quadrature on [a, b].
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 50)
}

/// Integral over (0, ∞) via t = x/(1-x).
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: &F, tol: f64) -> f64 {
    let g = |x: f64| {
        if x <= 0.0 || x >= 1.0 {
            return 0.0;
        }
        let t = x / (1.0 - x);
        f(t) / ((1.0 - x) * (1.0 - x))
    };
    integrate(&g, 0.0, 1.0, tol)
}

/// One-sample Kolmogorov–Smirnov p-value (asymptotic law with the Stephens
/// small-sample correction).
pub fn ks_pvalue<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let fx = cdf(x);
        d = d.max((i as f64 + 1.0) / n - fx).max(fx - i as f64 / n);
    }
    let sn = n.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let mut p = 0.0;
    for k in 1..200 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// Weibull density written out directly in the (α, β) parameterization.
pub fn weibull_pdf(t: f64, alpha: f64, beta: f64) -> f64 {
    alpha * t.powf(alpha - 1.0) * (beta - beta.exp() * t.powf(alpha)).exp()
}

pub fn weibull_sf(t: f64, alpha: f64, beta: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else {
        (-beta.exp() * t.powf(alpha)).exp()
    }
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

pub mod reduced {
    //! The two-parameter problem used to check the Metropolis blocks: only
    //! (ᾱ_Y, β̄_Y) move, everything else sits at the generating values.

    use rand::Rng;
    use switchstrat_core::sampler::{ProposalScales, Sampler};
    use switchstrat_core::{stream_rng, Arm, Dataset, Param, PatientRecord, PriorSpec, Theta, WeibullParams};

    pub const TRUTH: (f64, f64) = (1.5, -1.0);

    /// `n` uncensored control deaths of known non-switchers.
    pub fn data(n: usize, seed: u64) -> Dataset {
        let w = WeibullParams::new(TRUTH.0, TRUTH.1).unwrap();
        let mut rng = stream_rng(seed, 0);
        let c = 1e3;
        let records = (0..n)
            .map(|i| {
                let y = w.sample(rng.random_range(1e-300..1.0)).unwrap().min(c);
                PatientRecord { id: i as u64 + 1, arm: Arm::Control, c, s_tilde: Some(c), s_event: false, y_tilde: y, y_event: true }
            })
            .collect();
        Dataset::new(records, c).unwrap()
    }

    /// Posterior means of (α, β) on a 401 × 401 grid under the default
    /// priors: Gamma(1, scale 10) on α and N(0, 10⁴) on β.
    pub fn grid_posterior_mean(ds: &Dataset) -> (f64, f64) {
        let ys: Vec<f64> = ds.records().iter().map(|r| r.y_tilde).collect();
        let n = ys.len() as f64;
        let sum_log: f64 = ys.iter().map(|y| y.ln()).sum();
        let (a0, b0, half) = (TRUTH.0, TRUTH.1, 0.6);
        let k = 400;
        let mut cells = Vec::with_capacity((k + 1) * (k + 1));
        for i in 0..=k {
            let a = a0 - half + 2.0 * half * i as f64 / k as f64;
            let sum_pow: f64 = ys.iter().map(|y| y.powf(a)).sum();
            for j in 0..=k {
                let b = b0 - half + 2.0 * half * j as f64 / k as f64;
                let ll = n * a.ln() + (a - 1.0) * sum_log + n * b - b.exp() * sum_pow;
                let lp = -a / 10.0 - b * b / 2e4;
                cells.push((a, b, ll + lp));
            }
        }
        let top = cells.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
        let (mut z, mut ma, mut mb) = (0.0, 0.0, 0.0);
        for (a, b, l) in cells {
            let w = (l - top).exp();
            z += w;
            ma += w * a;
            mb += w * b;
        }
        (ma / z, mb / z)
    }

    /// Kept draws of (α, β) after `burn` adaptive iterations.
    pub fn chain(ds: &Dataset, burn: usize, keep: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut theta = Theta::calibration_truth(0.0);
        theta.y0_ns = WeibullParams::new(1.2, -0.7).unwrap();
        let mut s = Sampler::new(ds, PriorSpec::default(), theta, ProposalScales::default(), stream_rng(seed, 1)).unwrap();
        let (mut a, mut b) = (Vec::with_capacity(keep), Vec::with_capacity(keep));
        for it in 0..burn + keep {
            let adapt = it < burn;
            s.update_block(Param::AlphaYNs, adapt);
            s.update_block(Param::BetaYNs, adapt);
            if !adapt {
                a.push(s.theta().y0_ns.shape);
                b.push(s.theta().y0_ns.log_rate);
            }
        }
        (a, b)
    }

    pub fn central_95(xs: &[f64]) -> (f64, f64) {
        let mut v = xs.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let h = (v.len() - 1) as f64 * p;
            let lo = h.floor() as usize;
            v[lo] + (h - lo as f64) * (v[(lo + 1).min(v.len() - 1)] - v[lo])
        };
        (q(0.025), q(0.975))
    }
}

/// Product-limit estimate at `t` straight from the definition: a product over
/// distinct event times `≤ t` of `1 - d/R`, with `R` counting every unit whose
/// time is at least the event time.
pub fn brute_km(times: &[f64], events: &[bool], t: f64) -> f64 {
    let mut event_times: Vec<f64> = times.iter().zip(events).filter(|(_, &e)| e).map(|(&x, _)| x).collect();
    event_times.sort_by(f64::total_cmp);
    event_times.dedup();
    let mut s = 1.0;
    for &u in event_times.iter().filter(|&&u| u <= t) {
        let d = times.iter().zip(events).filter(|(&x, &e)| e && x == u).count();
        let r = times.iter().filter(|&&x| x >= u).count();
        s *= 1.0 - d as f64 / r as f64;
    }
    s
}

/// 100 censored samples of size 50 with deliberate ties.
pub fn km_datasets(seed: u64) -> Vec<(Vec<f64>, Vec<bool>)> {
    use rand::Rng;
    let mut rng = switchstrat_core::stream_rng(seed, 0);
    (0..100)
        .map(|_| {
            let mut t = Vec::with_capacity(50);
            let mut e = Vec::with_capacity(50);
            for _ in 0..50 {
                let y: f64 = (rng.random_range(0.01f64..3.0) * 20.0).ceil() / 20.0;
                let c: f64 = (rng.random_range(0.5f64..4.0) * 20.0).ceil() / 20.0;
                t.push(y.min(c));
                e.push(y <= c);
            }
            (t, e)
        })
        .collect()
}
