use sigsde::expected_signature::{leadlag_bm_expected_signature, model_expected_signature, TruncationPolicy};
use sigsde::market_lab::{bs_call_price, bs_simulate, bs_sig_params, BsModel, PathModel};
use sigsde::payoffs::{mc_prices, price_signature_payoff, InstrumentKind, MarketInstrument, SignatureRegression, Ridge};
use sigsde::path_signature::DiscretePath;
use sigsde::rng::{brownian_increments, path_rng, uniform_grid};
use sigsde::sig_sde::{simulate_batch, volatility_series, SigSdeParams};
use sigsde::stats::MomentAccumulator;
use nalgebra::{DMatrix, DVector};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn call(strike: f64, maturity: f64) -> MarketInstrument {
    MarketInstrument::new(InstrumentKind::VanillaCall, strike, maturity, None)
}

#[test]
fn black_scholes_sampler_reprices_the_closed_form_grid() {
    let model = BsModel::new(0.2, 1.0).unwrap();
    let mut insts = Vec::new();
    for &t in &[0.4, 0.7, 1.0] {
        for k in 0..7 {
            insts.push(call(0.5 + 0.1 * k as f64, t));
        }
    }
    let grid = uniform_grid(1.0, 60);
    let est = mc_prices(&PathModel::BlackScholes(model), &insts, &grid, 20_000, 3).unwrap();
    for (inst, e) in insts.iter().zip(&est) {
        let exact = bs_call_price(&model, inst.strike, inst.maturity).unwrap();
        assert!((e.mean - exact).abs() <= 4.0 * e.se, "{}: mc {} ± {} vs {exact}", inst.id(), e.mean, e.se);
    }
}

#[test]
fn constant_volatility_model_prices_like_bachelier() {
    let (sigma, x0, t) = (0.3, 1.0, 1.0);
    let params = SigSdeParams::constant_vol(sigma, x0, 1).unwrap();
    let insts: Vec<_> = [0.8, 1.0, 1.2].iter().map(|&k| call(k, t)).collect();
    let est = mc_prices(&PathModel::SigSde(params), &insts, &uniform_grid(t, 20), 20_000, 9).unwrap();
    let n = Normal::standard();
    for (inst, e) in insts.iter().zip(&est) {
        let s = sigma * t.sqrt();
        let d = (x0 - inst.strike) / s;
        let exact = (x0 - inst.strike) * n.cdf(d) + s * n.pdf(d);
        assert!((e.mean - exact).abs() <= 4.0 * e.se, "K={}: {} ± {} vs {exact}", inst.strike, e.mean, e.se);
    }
}

#[test]
fn call_prices_fall_and_curve_upward_in_strike() {
    let params = bs_sig_params(&BsModel::new(0.25, 1.0).unwrap(), 3).unwrap();
    let insts: Vec<_> = (0..13).map(|k| call(0.7 + 0.05 * k as f64, 1.0)).collect();
    let est = mc_prices(&PathModel::SigSde(params), &insts, &uniform_grid(1.0, 50), 4_000, 21).unwrap();
    for w in est.windows(2) {
        assert!(w[1].mean <= w[0].mean + 1e-15);
    }
    for w in est.windows(3) {
        assert!(w[0].mean - 2.0 * w[1].mean + w[2].mean >= -1e-12);
    }
}

#[test]
fn black_scholes_lift_has_the_gbm_quadratic_variation() {
    let sigma: f64 = 0.2;
    let params = bs_sig_params(&BsModel::new(sigma, 1.0).unwrap(), 4).unwrap();
    let paths = simulate_batch(&params, &uniform_grid(1.0, 200), 20_000, 17).unwrap();
    let mut acc = MomentAccumulator::new(1);
    for p in &paths {
        let v = p.values();
        let qv: f64 = v.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        acc.push(&[qv]);
    }
    let e = acc.estimates()[0];
    let exact = (sigma * sigma).exp() - 1.0;
    assert!((e.mean - exact).abs() <= 4.0 * e.se + 2e-4, "{} ± {} vs {exact}", e.mean, e.se);
}

#[test]
fn truncating_the_black_scholes_lift_converges_in_order() {
    let sigma: f64 = 0.5;
    let exact = 0.5 * ((sigma * sigma).exp() - 1.0);
    let mut last = f64::INFINITY;
    for order in 1..=4 {
        let params = bs_sig_params(&BsModel::new(sigma, 1.0).unwrap(), order).unwrap();
        let m = model_expected_signature(&params, 1.0, 2, 10, TruncationPolicy::Fail).unwrap();
        let err = (m.esig.coef(&[2, 2]) - exact).abs();
        assert!(err < last, "order {order}: error {err} did not shrink from {last}");
        last = err;
    }
    assert!(last < 1e-4, "order 4 error {last}");
}

#[test]
fn black_scholes_lift_tracks_gbm_volatility_pathwise() {
    let (sigma, x0): (f64, f64) = (0.4, 1.3);
    let model = BsModel::new(sigma, x0).unwrap();
    let grid = uniform_grid(1.0, 200);
    let drivers: Vec<DiscretePath> = (0..50)
        .map(|i| {
            let mut dw = Vec::new();
            brownian_increments(&mut path_rng(8, i), &grid, &mut dw);
            let mut w = vec![0.0];
            for d in &dw {
                w.push(w.last().unwrap() + d);
            }
            DiscretePath::scalar(grid.clone(), w).unwrap()
        })
        .collect();
    let mut last = f64::INFINITY;
    for order in 2..=4 {
        let params = bs_sig_params(&model, order).unwrap();
        let mut sup: f64 = 0.0;
        for d in &drivers {
            let vol = volatility_series(&params, d).unwrap();
            for ((t, w), v) in grid.iter().zip(d.values()).zip(&vol) {
                let exact = sigma * x0 * (sigma * w - 0.5 * sigma * sigma * t).exp();
                sup = sup.max((v - exact).abs());
            }
        }
        assert!(sup < last / 2.0, "order {order}: sup error {sup} after {last}");
        last = sup;
    }
    assert!(last < 1e-2, "order 4 sup error {last}");
}

#[test]
fn lead_lag_expectations_match_ito_calculus() {
    let t = 0.7;
    let e = leadlag_bm_expected_signature(t, 4).unwrap();
    let cases: [(&[u8], f64); 8] = [
        (&[1], t),
        (&[1, 1], t * t / 2.0),
        (&[2, 2], t / 2.0),
        (&[3, 3], t / 2.0),
        (&[2, 3], 0.0),
        (&[3, 2], t),
        (&[3, 3, 3, 3], t * t / 8.0),
        (&[2, 2, 2, 2], t * t / 8.0),
    ];
    for (w, expected) in cases {
        assert!((e.coef(w) - expected).abs() < 1e-14, "{w:?}: {} vs {expected}", e.coef(w));
    }
    for w in [&[2u8][..], &[3], &[1, 2], &[2, 2, 2]] {
        assert_eq!(e.coef(w), 0.0, "{w:?}");
    }
}

fn bs_paths(n: u64, seed: u64) -> Vec<DiscretePath> {
    let model = BsModel::new(0.2, 1.0).unwrap();
    let grid = uniform_grid(1.0, 100);
    (0..n).map(|i| bs_simulate(&model, &grid, &mut path_rng(seed, i)).unwrap()).collect()
}

fn atm_payoffs(paths: &[DiscretePath]) -> Vec<f64> {
    paths.iter().map(|p| (p.values()[100] - 1.0).max(0.0)).collect()
}

/// In-sample and holdout RMSE of the least-squares quartic in `X_T − 1`,
/// trained on the same first 80% of paths.
fn quartic_rmse(paths: &[DiscretePath], y: &[f64]) -> (f64, f64) {
    let rows = |r: std::ops::Range<usize>| {
        DMatrix::from_fn(r.len(), 5, |i, j| (paths[r.start + i].values()[100] - 1.0).powi(j as i32))
    };
    let split = paths.len() * 4 / 5;
    let train = rows(0..split);
    let coef = train.clone().svd(true, true).solve(&DVector::from_column_slice(&y[..split]), 1e-14).unwrap();
    let rmse = |r: std::ops::Range<usize>| {
        let pred = rows(r.clone()) * &coef;
        let sse: f64 = pred.iter().zip(&y[r.clone()]).map(|(p, v)| (p - v).powi(2)).sum();
        (sse / r.len() as f64).sqrt()
    };
    (rmse(0..split), rmse(split..paths.len()))
}

#[test]
fn atm_call_regression_beats_a_terminal_quartic() {
    let paths = bs_paths(10_000, 4);
    let y = atm_payoffs(&paths);
    let report = SignatureRegression::new(&paths, 1.0, 4, Ridge::Value(1e-12)).unwrap().fit(&y).unwrap();
    let (quartic_in, quartic_out) = quartic_rmse(&paths, &y);
    assert!(report.in_sample_rmse <= quartic_in * (1.0 + 1e-6), "in sample {} vs {quartic_in}", report.in_sample_rmse);
    assert!(report.holdout_rmse <= quartic_out * 1.05, "holdout {} vs {quartic_out}", report.holdout_rmse);
    assert!(report.holdout_rmse < 0.15 * report.payoff_std, "holdout rmse {} vs std {}", report.holdout_rmse, report.payoff_std);
}

#[test]
fn regressed_payoff_prices_close_to_black_scholes() {
    let model = BsModel::new(0.2, 1.0).unwrap();
    let paths = bs_paths(8_000, 5);
    let inst = call(1.0, 1.0);
    let report = SignatureRegression::new(&paths, 1.0, 3, Ridge::Default).unwrap().fit(&atm_payoffs(&paths)).unwrap();

    let params = bs_sig_params(&model, 2).unwrap();
    let esig = model_expected_signature(&params, 1.0, 3, 10, TruncationPolicy::Fail).unwrap().esig;
    let price = price_signature_payoff(&report.payoff, &esig).unwrap();
    let exact = bs_call_price(&model, inst.strike, inst.maturity).unwrap();
    let se = report.payoff_std / (0.8 * paths.len() as f64).sqrt();
    assert!((price - exact).abs() <= 4.0 * se + 2e-3, "algebraic {price} vs {exact}");
}
