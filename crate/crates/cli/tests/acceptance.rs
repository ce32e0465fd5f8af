//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Run alone with `cargo test -p sigsde-cli --test acceptance`.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigsde::expected_signature::{model_expected_signature, LeadLagExpectation, TruncationPolicy};
use sigsde::market_lab::{bs_call_price, bs_sig_params, bs_simulate, mc_expected_signature, BsModel, PathModel};
use sigsde::path_signature::{add_time, chen_concat, lead_lag_with_time, path_signature, segment_signature, DiscretePath};
use sigsde::payoffs::{mc_price, InstrumentKind, MarketInstrument};
use sigsde::rng::{brownian_increments, path_rng, uniform_grid};
use sigsde::sig_sde::{simulate, SigSdeParams};
use sigsde::stats::{ks_critical, ks_statistic};
use sigsde::tensor_algebra::{half_shuffle, lin_comb, pair, shuffle, LinearFunctional, MultiIndex};
use sigsde_cli::commands::{calibration_problem, FittedPayoff, PriceRow};
use sigsde_cli::config::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn random_path(rng: &mut ChaCha8Rng, d: usize) -> DiscretePath {
    let n = rng.gen_range(2..12);
    let mut x = vec![0.0; d];
    let points: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            if k > 0 {
                for v in x.iter_mut() {
                    *v += rng.gen_range(-1.0..1.0);
                }
            }
            x.clone()
        })
        .collect();
    DiscretePath::new((0..n).map(|k| k as f64).collect(), points).unwrap()
}

fn random_word(rng: &mut ChaCha8Rng, d: usize, len: usize) -> MultiIndex {
    let letters: Vec<u8> = (0..len).map(|_| rng.gen_range(1..=d as u8)).collect();
    MultiIndex::new(d, &letters).unwrap()
}

fn algebra_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checks = 0;
    let mut worst: f64 = 0.0;
    for p in 0..100 {
        let d = 2 + p % 2;
        let path = random_path(&mut rng, d);
        let sig = path_signature(&path, 5).unwrap();
        for _ in 0..10 {
            let lu = rng.gen_range(0..=4);
            let lv = rng.gen_range(0..=5 - lu);
            let (u, v) = (random_word(&mut rng, d, lu), random_word(&mut rng, d, lv));
            let lhs = sig.coef(u.letters()) * sig.coef(v.letters());
            let rhs = pair(&shuffle(&u, &v).unwrap(), sig.as_functional()).unwrap();
            worst = worst.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
            checks += 1;
        }
    }
    let shuffle_ok = worst <= 1e-9;

    let mut exact = true;
    let mut pairs = 0;
    for (d, max_len) in [(2usize, 5usize), (3, 4)] {
        let words: Vec<MultiIndex> = MultiIndex::all_words(d, max_len).unwrap().into_iter().filter(|w| !w.is_empty()).collect();
        for u in &words {
            for v in &words {
                if d == 3 && u.len() + v.len() > 5 {
                    continue;
                }
                let (fu, fv) = (LinearFunctional::from_word(u.clone(), 1.0), LinearFunctional::from_word(v.clone(), 1.0));
                let split = lin_comb(1.0, &half_shuffle(&fu, &fv, None).unwrap(), 1.0, &half_shuffle(&fv, &fu, None).unwrap()).unwrap();
                exact &= split == shuffle(u, v).unwrap();
                pairs += 1;
            }
        }
    }
    outcome(
        shuffle_ok && exact,
        format!("shuffle identity on {checks} word pairs, worst rel err {worst:.1e}; half-shuffle split exact on {pairs} pairs: {exact}"),
    )
}

fn sub_path(path: &DiscretePath, from: usize, to: usize) -> DiscretePath {
    let points: Vec<Vec<f64>> = (from..to).map(|k| path.point(k).to_vec()).collect();
    DiscretePath::new(path.times()[from..to].to_vec(), points).unwrap()
}

fn chen_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let order = 4;
    let mut worst: f64 = 0.0;
    for p in 0..100 {
        let d = 2 + p % 2;
        let mut path = random_path(&mut rng, d);
        while path.len() < 3 {
            path = random_path(&mut rng, d);
        }
        let whole = path_signature(&path, order).unwrap();
        let k = rng.gen_range(1..path.len() - 1);
        let split = chen_concat(
            &path_signature(&sub_path(&path, 0, k + 1), order).unwrap(),
            &path_signature(&sub_path(&path, k, path.len()), order).unwrap(),
        )
        .unwrap();
        let mut merged = segment_signature(&vec![0.0; d], order).unwrap();
        let mut inc = vec![0.0; d];
        for s in 0..path.len() - 1 {
            path.increment(s, &mut inc);
            merged = chen_concat(&merged, &segment_signature(&inc, order).unwrap()).unwrap();
        }
        for w in MultiIndex::all_words(d, order).unwrap() {
            let c = whole.coef(w.letters());
            for other in [split.coef(w.letters()), merged.coef(w.letters())] {
                worst = worst.max((c - other).abs() / (1.0 + c.abs()));
            }
        }
    }
    outcome(worst <= 1e-12, format!("100 paths, split-point and segment-merge worst rel err {worst:.1e}"))
}

fn brownian_path(rng: &mut sigsde::rng::PathRng, grid: &[f64]) -> DiscretePath {
    let mut dw = Vec::new();
    brownian_increments(rng, grid, &mut dw);
    let mut w = Vec::with_capacity(grid.len());
    w.push(0.0);
    for x in &dw {
        w.push(w.last().unwrap() + x);
    }
    DiscretePath::scalar(grid.to_vec(), w).unwrap()
}

fn expected_signature_suite() -> Outcome {
    let grid = uniform_grid(1.0, 1000);
    let mc = mc_expected_signature(|rng| lead_lag_with_time(&brownian_path(rng, &grid)), 4, 100_000, 3).unwrap();
    let ll = LeadLagExpectation::new(1.0, 4).unwrap();
    let mut fails = Vec::new();
    let mut worst: f64 = 0.0;
    let words = MultiIndex::all_words(3, 4).unwrap();
    for w in &words {
        let exact = ll.coefficient(w.letters()).unwrap();
        let e = mc.estimate(w.letters());
        let ok = if e.se == 0.0 { (e.mean - exact).abs() <= 1e-9 } else { (e.mean - exact).abs() <= 4.0 * e.se };
        if e.se > 0.0 {
            worst = worst.max((e.mean - exact).abs() / e.se);
        }
        if !ok {
            fails.push(w.to_string());
        }
    }
    let named = [(&[2u8, 3][..], 0.0), (&[3, 2][..], 1.0), (&[3, 2, 3][..], 0.0)];
    let named_ok = named.iter().all(|(w, v)| (ll.coefficient(w).unwrap() - v).abs() < 1e-15);
    outcome(
        fails.is_empty() && named_ok,
        format!(
            "{} words, worst |MC - exact| = {worst:.2} SE; E(2,3)=0, E(3,2)=1, E(3,2,3)=0: {named_ok}; failing: {fails:?}",
            words.len()
        ),
    )
}

fn model_consistency_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let grid = uniform_grid(1.0, 400);
    let n_paths = 50_000;
    let mut fails = Vec::new();
    let mut worst: f64 = 0.0;
    for case in 0..5 {
        let coefs: Vec<f64> =
            (0..7).map(|k| if k == 0 { rng.gen_range(0.15..0.3) } else { rng.gen_range(-0.1..0.1) }).collect();
        let params = SigSdeParams::from_vector(2, 1.0, &coefs).unwrap();
        let analytic = model_expected_signature(&params, 1.0, 3, 10, TruncationPolicy::Fail).unwrap().esig;
        let mc = mc_expected_signature(|rng| Ok(add_time(&simulate(&params, &grid, rng)?)), 3, n_paths, 100 + case).unwrap();
        for w in MultiIndex::all_words(2, 3).unwrap() {
            let exact = analytic.get(&w);
            let e = mc.estimate(w.letters());
            let ok = if e.se == 0.0 { (e.mean - exact).abs() <= 1e-9 } else { (e.mean - exact).abs() <= 4.0 * e.se };
            if e.se > 0.0 {
                worst = worst.max((e.mean - exact).abs() / e.se);
            }
            if !ok {
                fails.push(format!("case {case} {w}"));
            }
        }
        // martingale: the terminal mean equals the spot
        let model = PathModel::SigSde(params.clone());
        let fwd = MarketInstrument::new(InstrumentKind::VanillaCall, 1e-9, 1.0, None);
        let m = mc_price(&model, &fwd, &grid, 20_000, 200 + case).unwrap();
        if (m.mean + 1e-9 - 1.0).abs() > 4.0 * m.se {
            fails.push(format!("case {case} martingale {:.5} ± {:.5}", m.mean + 1e-9, m.se));
        }
    }
    outcome(fails.is_empty(), format!("5 parameter sets, words |I| ≤ 3, worst {worst:.2} SE; failing: {fails:?}"))
}

fn black_scholes_suite() -> Outcome {
    let model = BsModel::new(0.2, 1.0).unwrap();
    let params = bs_sig_params(&model, 4).unwrap();
    let grid = uniform_grid(1.0, 200);
    let n = 10_000;
    let sig: Vec<f64> =
        (0..n).map(|i| *simulate(&params, &grid, &mut path_rng(5, i)).unwrap().values().last().unwrap()).collect();
    let gbm: Vec<f64> = (0..n)
        .map(|i| *bs_simulate(&model, &[0.0, 1.0], &mut path_rng(6, i)).unwrap().values().last().unwrap())
        .collect();
    let d = ks_statistic(&sig, &gbm);
    let crit = ks_critical(0.01, sig.len(), gbm.len());
    let call = MarketInstrument::new(InstrumentKind::VanillaCall, 1.0, 1.0, None);
    let mc = mc_price(&PathModel::SigSde(params), &call, &grid, n as usize, 7).unwrap();
    let exact = bs_call_price(&model, 1.0, 1.0).unwrap();
    let tol = (3.0 * mc.se).max(2e-3);
    let ok = d < crit && (mc.mean - exact).abs() <= tol;
    outcome(
        ok,
        format!("KS D = {d:.4} (1% critical {crit:.4}); ATM call {:.5} ± {:.5} vs {exact:.5} (tol {tol:.4})", mc.mean, mc.se),
    )
}

fn sigsde(args: &[&str], out: &Path, config: Option<&Path>) -> Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sigsde"));
    cmd.args(args).arg("--out").arg(out);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    let o = cmd.output().map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("{} exited {:?}: {}", args[0], o.status.code(), String::from_utf8_lossy(&o.stderr).trim()))
    }
}

fn pipeline_suite() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    for c in ["gen-market", "fit-payoffs", "calibrate", "price"] {
        if let Err(e) = sigsde(&[c], out, None) {
            return outcome(false, e);
        }
    }
    let cfg = RunConfig { out_dir: out.to_path_buf(), ..RunConfig::default() };
    let problem = calibration_problem(&cfg).unwrap();
    let reference = problem
        .objective(&bs_sig_params(&BsModel::new(0.2, 1.0).unwrap(), 4).unwrap().to_vector())
        .unwrap();
    let result: serde_json::Value = serde_json::from_reader(std::fs::File::open(out.join(CALIBRATION_JSON)).unwrap()).unwrap();
    let objective = result["objective"].as_f64().unwrap();
    let n_params = problem.parameter_count();

    let mut rdr = csv::Reader::from_path(out.join(PRICES_CSV)).unwrap();
    let rows: Vec<PriceRow> = rdr.deserialize().map(|r| r.unwrap()).collect();
    let mut heldout_fail = 0;
    let mut worst: f64 = 0.0;
    for r in &rows {
        let (mc, se) = (r.mc_price.unwrap(), r.mc_se.unwrap());
        let tol = 4.0 * se + r.fit_holdout_rmse;
        worst = worst.max((r.algebraic_price - mc).abs() / tol);
        heldout_fail += ((r.algebraic_price - mc).abs() > tol) as usize;
    }

    // reported only: where the barrier-option errors concentrate
    let payoffs: Vec<FittedPayoff> = serde_json::from_reader(std::fs::File::open(out.join(PAYOFFS_JSON)).unwrap()).unwrap();
    let residuals_csv = out.join(RESIDUALS_CSV);
    let mut rdr = csv::Reader::from_path(&residuals_csv).unwrap();
    let errors: Vec<(String, f64)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].to_string(), r[3].parse().unwrap())
        })
        .collect();
    let mut barrier: Vec<(f64, f64)> = errors
        .iter()
        .filter_map(|(id, e)| {
            let p = payoffs.iter().find(|p| &p.id == id)?;
            let l = p.instrument.barrier?;
            Some((p.instrument.strike - l, *e))
        })
        .collect();
    barrier.sort_by(|a, b| b.1.total_cmp(&a.1));
    let top = barrier.len().min(10);
    let gap_top = barrier[..top].iter().map(|b| b.0).sum::<f64>() / top.max(1) as f64;
    let gap_all = barrier.iter().map(|b| b.0).sum::<f64>() / barrier.len().max(1) as f64;

    let ok = n_params == 31 && objective <= reference && heldout_fail == 0 && !errors.is_empty();
    outcome(
        ok,
        format!(
            "{n_params} parameters; objective {objective:.3e} vs ℓ_BS {reference:.3e}; held-out {}/{} within 4 SE + RMSE (worst {worst:.2} of tol); \
             strike-barrier gap of 10 largest barrier errors {gap_top:.3} vs mean {gap_all:.3} (reported)",
            rows.len() - heldout_fail,
            rows.len()
        ),
    )
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("small.json");
    let text = r#"{
        "schema_version": 1,
        "gen_market": {
            "n_paths": 3000, "steps": 20,
            "grid": {"vanilla_maturities": [0.5, 1.0], "variance_maturities": [1.0],
                     "barrier_levels": [0.8, 0.9], "heldout_levels": [0.75, 0.85]}
        },
        "fit_payoffs": {"order": 2, "n_paths": 2000, "steps": 20},
        "calibrate": {"order": 2, "optimizer": {"starts": 3, "max_iter": 300}},
        "price": {"mc_paths": 2000, "steps": 20},
        "simulate": {"n_paths": 20, "steps": 20}
    }"#;
    std::fs::write(&path, text).unwrap();
    path
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism_suite() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let mut runs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}"));
        for c in ["gen-market", "fit-payoffs", "calibrate", "price", "simulate"] {
            if let Err(e) = sigsde(&[c], &out, Some(&config)) {
                // a non-converged small calibration still writes its outputs
                if !(c == "calibrate" && e.contains("exited Some(3)")) {
                    return outcome(false, e);
                }
            }
        }
        runs.push(read_dir_sorted(&out));
    }
    let names: Vec<&str> = runs[0].iter().map(|f| f.0.as_str()).collect();
    let same = runs[0] == runs[1];
    outcome(same && names.len() == 10, format!("5 commands run twice, {} files compared, identical: {same}", names.len()))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let filters: Vec<&String> = args.iter().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [Criterion; 7] = [
        ("algebra", algebra_suite),
        ("chen", chen_suite),
        ("expected-signature", expected_signature_suite),
        ("model-consistency", model_consistency_suite),
        ("black-scholes", black_scholes_suite),
        ("pipeline", pipeline_suite),
        ("determinism", determinism_suite),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {} {name}: {status} ({:.1}s) {}", k + 1, start.elapsed().as_secs_f64(), o.detail);
        failed += (!o.pass) as usize;
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
