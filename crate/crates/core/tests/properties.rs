use distevo::convolve::{convolve_cdf, direct_convolve, DiffusionKernel};
use distevo::greeks::{compute_greeks_many, GreekRequest};
use distevo::multidim::{drift_2d, step_2d, Drift2D, Grid2D, Kernel2D};
use distevo::oracles::Greek;
use distevo::pricing::{apply_barrier, price_grid_many, put_call_parity_check, BarrierDirection, MarketParams, PayoffProfile};
use distevo::process::{builtin_transforms, simulate, Builtin, InitialCondition, Keep, SimulationConfig};
use distevo::stochvol::VolStateGrid;
use distevo::{GridDistribution, Kind};
use proptest::prelude::*;
use std::sync::Arc;

fn is_cdf(d: &GridDistribution) -> bool {
    let v = d.values();
    v.windows(2).all(|w| w[1] >= w[0]) && v[0] >= 0.0 && v[v.len() - 1] <= d.mass() + 1e-15
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simulated_cdfs_stay_monotone_and_keep_mass(
        case in prop_oneof![Just(Builtin::Samuelson), Just(Builtin::SquaredDrift), Just(Builtin::ConstantDrift)],
        mu in -0.1f64..0.1,
        sigma in 0.05f64..0.4,
        steps in 1usize..40,
    ) {
        let spec = builtin_transforms(case, mu, sigma).unwrap().spec;
        let cfg = SimulationConfig::for_horizon(0.5, steps, 2e-3).unwrap();
        let path = simulate(&InitialCondition::PointMass(0.0), &spec, &cfg, Keep::All).unwrap();
        for d in &path {
            prop_assert!(is_cdf(d));
            prop_assert!((d.mass() - 1.0).abs() < 1e-15);
            prop_assert!(d.values()[0] < 1e-12);
            prop_assert!(d.values()[d.len() - 1] > 1.0 - 1e-12 - 1e-15);
        }
    }

    #[test]
    fn truncation_drops_at_most_twice_eps(sd in 0.01f64..2.0, exp in 3i32..12) {
        let eps = 10f64.powi(-exp);
        let d = GridDistribution::gaussian_cdf(0.3, sd, sd / 50.0, 1e-15).unwrap();
        let t = d.truncate_by_threshold(eps).unwrap();
        let kept = t.values()[t.len() - 1] - t.values()[0];
        prop_assert!(kept >= 1.0 - 2.0 * eps - 1e-15);
        prop_assert!(kept <= 1.0);
    }

    #[test]
    fn interpolation_stays_between_neighbours(sd in 0.05f64..1.0, shift in 0.0f64..1.0) {
        let d = GridDistribution::gaussian_cdf(0.0, sd, sd / 10.0, 1e-12).unwrap();
        let h = sd / 7.0;
        let u = d.interpolate_to_uniform(h, d.lo() + shift * h, d.hi()).unwrap();
        prop_assert!(is_cdf(&u));
        for (x, v) in u.positions().iter().zip(u.values()) {
            let i = d.positions().partition_point(|p| p <= x).clamp(1, d.len() - 1);
            let (a, b) = (d.values()[i - 1], d.values()[i]);
            prop_assert!(*v >= a.min(b) - 1e-15 && *v <= a.max(b) + 1e-15);
        }
    }

    #[test]
    fn fft_and_direct_convolution_agree(
        sd in 0.05f64..1.0,
        ksd in 1.0f64..30.0,
        kshift in -10.0f64..10.0,
        n in 20usize..600,
    ) {
        let h = 8.0 * sd / n as f64;
        let d = GridDistribution::gaussian_cdf(0.0, sd, h, 1e-13).unwrap();
        let k = DiffusionKernel::gaussian(ksd * h, kshift * h, h, 1e-13).unwrap();
        let a = convolve_cdf(&d, &k).unwrap();
        let b = direct_convolve(&d, &k).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn barrier_splits_mass(level in -0.2f64..0.2, up in any::<bool>()) {
        let d = GridDistribution::gaussian_cdf(0.0, 0.1, 1e-3, 1e-12).unwrap();
        let dir = if up { BarrierDirection::UpAndOut } else { BarrierDirection::DownAndOut };
        let out = apply_barrier(&d, level, dir).unwrap();
        prop_assert!((out.survival + out.knocked_out - d.mass()).abs() < 1e-15);
        prop_assert!(out.survival >= 0.0 && out.knocked_out >= 0.0);
        if let Some(rest) = out.dist {
            prop_assert!(is_cdf(&rest));
            prop_assert!((rest.mass() - out.survival).abs() < 1e-15);
        }
    }

    #[test]
    fn vol_state_weights_sum_to_one(log_mean in -3.0f64..0.0, log_sd in 0.01f64..1.0, n in 2usize..200) {
        let g = VolStateGrid::lognormal(log_mean, log_sd, n, 1e-12).unwrap();
        prop_assert!((g.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(g.weights.iter().all(|&w| w >= 0.0));
        prop_assert!(g.sigmas.iter().zip(&g.rms).all(|(s, r)| *s > 0.0 && r >= s));
        let exact = (log_mean + 0.5 * log_sd * log_sd).exp();
        prop_assert!((g.mean() / exact - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_dimensional_drift_keeps_mass(a in -0.5f64..0.5, b in -0.5f64..0.5, rho in -0.9f64..0.9) {
        let f = Grid2D::gaussian((0.0, 0.0), [[0.04, 0.0], [0.0, 0.04]], (0.01, 0.01), 1e-12).unwrap().renormalize().unwrap();
        let sep = Drift2D::Separable(Arc::new(move |x, _| a * x * x), Arc::new(move |y, _| b * y.sin()));
        let gen = Drift2D::General(Arc::new(move |x, y, _| (a * y, b * x)));
        let k = Kernel2D::correlated((0.2, 0.2), rho, 0.05, (0.01, 0.01), 1e-12).unwrap();
        for drift in [&sep, &gen] {
            let moved = drift_2d(&f, drift, 0.0, 0.05).unwrap();
            prop_assert!((moved.total_mass() - 1.0).abs() < 1e-9);
            let g = step_2d(&f, drift, &k, 0.0, 0.05, 1e-12).unwrap();
            prop_assert!((g.total_mass() - 1.0).abs() < 1e-12);
            prop_assert!(g.density().iter().all(|&v| v >= 0.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn call_prices_fall_with_strike_and_satisfy_parity(
        spot in 2.0f64..6.0,
        rate in 0.0f64..0.08,
        vol in 0.05f64..0.3,
        k1 in 0.8f64..1.2,
        dk in 0.01f64..0.2,
    ) {
        let m = MarketParams::new(spot, rate, vol, 0.5, 0.0).unwrap();
        let (ka, kb) = (k1 * spot, (k1 + dk) * spot);
        let cfg = SimulationConfig::for_horizon(0.5, 30, 2e-3).unwrap();
        let v = price_grid_many(&[PayoffProfile::call(ka), PayoffProfile::call(kb), PayoffProfile::put(ka)], &m, &cfg).unwrap();
        prop_assert!(v[0] > v[1]);
        prop_assert!(v[0] - v[1] <= (kb - ka) * m.discount() + 1e-12);
        prop_assert!(put_call_parity_check(v[0], v[2], ka, &m).abs() < 1e-6 * spot);
    }

    #[test]
    fn call_and_put_greeks_obey_parity(spot in 3.0f64..5.0, k in 3.5f64..4.5) {
        let m = MarketParams::new(spot, 0.05, 0.15, 0.5, 0.0).unwrap();
        let cfg = SimulationConfig::for_horizon(0.5, 30, 1e-3).unwrap();
        let req = GreekRequest::only(&[Greek::Delta, Greek::Gamma, Greek::Vega], 1e-2);
        let g = compute_greeks_many(&[PayoffProfile::call(k), PayoffProfile::put(k)], &m, &cfg, &req).unwrap();
        // C - P = S - K e^{-r tau}: Delta differs by one, Gamma and Vega agree
        prop_assert!((g[0][&Greek::Delta] - g[1][&Greek::Delta] - 1.0).abs() < 1e-5);
        prop_assert!((g[0][&Greek::Gamma] - g[1][&Greek::Gamma]).abs() < 1e-3);
        prop_assert!((g[0][&Greek::Vega] - g[1][&Greek::Vega]).abs() < 1e-5);
    }
}

#[test]
fn kernel_weights_are_a_distribution() {
    let k = DiffusionKernel::gaussian(0.01, 0.002, 1e-3, 1e-12).unwrap();
    assert!((k.weights().iter().sum::<f64>() * k.spacing() - 1.0).abs() < 1e-14);
    assert!(k.weights().iter().all(|&w| w >= 0.0));
    assert!((k.mean() - 0.002).abs() < 1e-12);
    assert!((k.variance() - 1e-4).abs() < 1e-12);
    let g = GridDistribution::uniform(0.0, 1.0, vec![0.0, 0.5, 1.0], Kind::Cdf).unwrap();
    assert!(is_cdf(&g));
}
