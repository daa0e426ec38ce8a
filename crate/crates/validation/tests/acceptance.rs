//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any
//! criterion fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use gradmatch::estimator::*;
use gradmatch::montecarlo::{Experiment, ExperimentConfig, SummaryTable};
use gradmatch::ode::*;
use gradmatch::spline::{fit_least_squares, BSplineBasis, Interval};
use gradmatch::{Error, FnPath, Path};
use nalgebra::{DMatrix, DVector, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn fmt(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3}")).collect();
    format!("({})", parts.join(", "))
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn random_basis(rng: &mut ChaCha8Rng, order: usize, max_knots: usize) -> BSplineBasis {
    let lo = rng.random_range(-5.0..5.0);
    let len = rng.random_range(0.5..20.0);
    let iv = Interval::new(lo, lo + len).unwrap();
    let m = rng.random_range(0..=max_knots);
    let mut knots: Vec<f64> = (0..m).map(|_| lo + len * rng.random_range(0.02..0.98)).collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup_by(|a, b| (*a - *b).abs() < 1e-3 * len);
    BSplineBasis::from_parts(iv, knots, order).unwrap()
}

fn c1_spline_suite() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);

    let mut pou: f64 = 0.0;
    for _ in 0..10_000 {
        let k = rng.random_range(2..=6);
        let b = random_basis(&mut rng, k, 12);
        let iv = b.interval();
        let t = rng.random_range(iv.lo..=iv.hi);
        pou = pou.max((b.eval(t).unwrap().sum() - 1.0).abs());
    }

    let mut deriv: f64 = 0.0;
    let mut checked = 0;
    while checked < 2000 {
        let k = rng.random_range(2..=6);
        let b = random_basis(&mut rng, k, 8);
        let iv = b.interval();
        let t = rng.random_range(iv.lo..iv.hi);
        let gap = 1e-3 * iv.length();
        let near = b.knots().breakpoints().iter().any(|x| (x - t).abs() < gap);
        if near {
            continue;
        }
        let h = 2e-4 * iv.length();
        let e = |s: f64| b.eval(t + s * h).unwrap();
        let fd = (e(-2.0) - e(-1.0) * 8.0 + e(1.0) * 8.0 - e(2.0)) / (12.0 * h);
        let d = b.eval_derivative(t, 1).unwrap();
        deriv = deriv.max((fd - &d).amax() / d.amax().max(f64::MIN_POSITIVE));
        checked += 1;
    }

    let mut ls: f64 = 0.0;
    for _ in 0..500 {
        let k = rng.random_range(2..=5);
        let b = random_basis(&mut rng, k, 10 - k);
        let iv = b.interval();
        let n = rng.random_range(b.dimension()..=30);
        let mut times: Vec<f64> = (0..n).map(|_| rng.random_range(iv.lo..=iv.hi)).collect();
        times.sort_by(f64::total_cmp);
        let y = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-3.0..3.0));
        let fit = fit_least_squares(&b, &times, &y).unwrap();
        let x = b.design_matrix(&times).unwrap();
        let oracle = SVD::new(x.clone(), true, true).solve(&y, 1e-12).unwrap();
        let err = (fit.fitted_values() - &x * oracle).amax() / y.amax();
        ls = ls.max(err);
    }

    let took = start.elapsed();
    verdict(
        pou <= 1e-10 && deriv <= 1e-6 && ls <= 1e-8 && took < Duration::from_secs(10),
        format!(
            "max |sum B - 1| = {pou:.1e} (<= 1e-10); derivative rel. err {deriv:.1e} (<= 1e-6); \
             LS vs SVD oracle {ls:.1e} (<= 1e-8); {} (< 10s)",
            secs(took)
        ),
    )
}

fn c2_conservation() -> Verdict {
    let start = Instant::now();
    let th = v(&[0.0, -1.5, 1.0, 2.0, 0.0, -1.5]);
    let grid = Interval::new(0.0, 20.0).unwrap().linspace(2001);
    let tr = integrate(&Glv, &th, &v(&[1.0, 2.0]), &grid, &StepControl::default()).unwrap();
    let took = start.elapsed();
    // conserved for ẋ = x(a2 y + a3), ẏ = y(b1 x + b3)
    let h = |s: &DVector<f64>| th[3] * s[0] + th[5] * s[0].ln() - th[1] * s[1] - th[2] * s[1].ln();
    let h0 = h(&tr.states()[0]);
    let drift = tr.states().iter().map(|s| (h(s) - h0).abs()).fold(0.0, f64::max);
    verdict(
        drift <= 1e-6 && took < Duration::from_secs(1),
        format!("first-integral drift {drift:.1e} (<= 1e-6); {} (< 1s)", secs(took)),
    )
}

fn c3_closed_form_agreement() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let case2 = {
        let mut c = ExperimentConfig::case2(100, 0);
        c.theta_star[4] = -1.0;
        c
    };
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let n = rng.random_range(100..=400);
        let seed = rng.random();
        let (config, model) = match k % 3 {
            0 => (ExperimentConfig::case1(n, seed), classic_lv_model()),
            1 => (ExperimentConfig { n, seed, ..case2.clone() }, glv_model(0.0, -1.0)),
            _ => (ExperimentConfig::case1(n, seed), VectorFieldModel::unmasked(Arc::new(Glv))),
        };
        let config = ExperimentConfig {
            replications: 1,
            knot_policy: gradmatch::knot_select::KnotPolicy {
                candidate_count: Some(rng.random_range(10..=25)),
                selection: gradmatch::knot_select::Selection::FixedUniform,
                ..Default::default()
            },
            ..config
        };
        let exp = Experiment::new(config).unwrap();
        let fit = exp.first_step(&exp.simulate(0)).unwrap();
        let weight = if rng.random::<bool>() {
            WeightFunction::boundary_vanishing(fit.interval(), 0.05).unwrap()
        } else {
            WeightFunction::uniform(fit.interval())
        };
        let cfg = CriterionConfig::new(weight);
        let closed = fit_linear_in_theta(&fit, &model, &cfg).unwrap();
        let start_at = model.mask().apply(&exp.config().theta_star());
        let iter = fit_nonlinear(&fit, &model, &start_at, &cfg, &NonlinearOptions::default()).unwrap();
        worst = worst.max((&closed.theta_hat - &iter.theta_hat).amax());
    }
    let took = start.elapsed();
    verdict(
        worst <= 1e-6 && took < Duration::from_secs(30),
        format!("max componentwise difference over 50 fits {worst:.1e} (<= 1e-6); {} (< 30s)", secs(took)),
    )
}

struct Forced {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: DVector<f64>,
    omega: f64,
}

impl Forced {
    fn forcing(&self, t: f64) -> DVector<f64> {
        &self.b * (self.omega * t).sin() + &self.c * (0.5 * t).cos()
    }
}

impl VectorField for Forced {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn param_dim(&self) -> usize {
        0
    }

    fn eval(&self, t: f64, x: &DVector<f64>, _: &DVector<f64>) -> DVector<f64> {
        &self.a * x + self.forcing(t)
    }

    fn jacobian_state(&self, _: f64, _: &DVector<f64>, _: &DVector<f64>) -> DMatrix<f64> {
        self.a.clone()
    }

    fn jacobian_param(&self, _: f64, _: &DVector<f64>, _: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.a.nrows(), 0)
    }
}

fn c4_duhamel() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let grid = Interval::new(0.0, 10.0).unwrap().linspace(1001);
    let control = StepControl { tol: 1e-11, ..StepControl::default() };
    let mut sup: f64 = 0.0;
    for d in [2usize, 3] {
        for _ in 0..10 {
            // skew part plus a negative definite symmetric part: stable
            let s = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.5..1.5));
            let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let a = (&s - s.transpose()) * 0.5 - &m * m.transpose() - DMatrix::identity(d, d) * 0.1;
            let sys = Forced {
                a,
                b: DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)),
                c: DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)),
                omega: rng.random_range(0.2..2.0),
            };
            let v0 = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
            let dh = duhamel_solve(&sys.a, &|t| sys.forcing(t), &v0, &grid, 1e8).unwrap();
            let rk = integrate(&sys, &DVector::zeros(0), &v0, &grid, &control).unwrap();
            sup = sup.max(dh.iter().zip(rk.states()).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max));
        }
    }
    let took = start.elapsed();
    verdict(
        sup <= 1e-6 && took < Duration::from_secs(5),
        format!("sup error over 10 stable 2x2 and 10 3x3 systems {sup:.1e} (<= 1e-6); {} (< 5s)", secs(took)),
    )
}

fn run_table(config: ExperimentConfig) -> Result<(SummaryTable, Duration), Error> {
    let start = Instant::now();
    let (table, _) = Experiment::new(config)?.run()?;
    Ok((table, start.elapsed()))
}

fn c5_table1(table: &SummaryTable, took: Duration) -> Verdict {
    let reference_mean = [-1.42, 0.95, 1.90, -1.44];
    let reference_std = [0.06, 0.05, 0.08, 0.06];
    let w = table.variant("boundary").expect("boundary variant");
    let std = w.std.clone().unwrap_or_default();
    let mean_ok = w.mean.iter().zip(&reference_mean).all(|(m, r)| (m - r).abs() <= 0.08);
    let std_ok = std.len() == 4 && std.iter().zip(&reference_std).all(|(s, r)| s / r <= 2.0 && r / s <= 2.0);
    verdict(
        mean_ok && std_ok,
        format!(
            "mean {} vs {} (+-0.08); std {} vs {} (x2); {} failures; {}",
            fmt(&w.mean),
            fmt(&reference_mean),
            fmt(&std),
            fmt(&reference_std),
            w.failures,
            secs(took)
        ),
    )
}

fn table5_ordering(config: ExperimentConfig) -> Verdict {
    match run_table(config) {
        Ok((t, took)) => {
            let w = t.variant("boundary").unwrap();
            let u = t.variant("uniform").unwrap();
            verdict(
                w.param_rmse < u.param_rmse,
                format!(
                    "parameter RMSE weighted {:.3} < uniform {:.3} (reference 0.28 < 0.56); {}",
                    w.param_rmse,
                    u.param_rmse,
                    secs(took)
                ),
            )
        }
        Err(e) => verdict(false, format!("experiment could not run: {e}")),
    }
}

fn c6_table5() -> Verdict {
    let config = ExperimentConfig { replications: 200, ..ExperimentConfig::case2(500, 606) };
    table5_ordering(config)
}

fn c7_rate() -> Verdict {
    let run = |n| run_table(ExperimentConfig { replications: 200, ..ExperimentConfig::case1(n, 707) });
    match (run(200), run(800)) {
        (Ok((a, ta)), Ok((b, tb))) => {
            let sa = a.variant("boundary").unwrap().std.clone().unwrap();
            let sb = b.variant("boundary").unwrap().std.clone().unwrap();
            let ratios: Vec<f64> = sa.iter().zip(&sb).map(|(x, y)| x / y).collect();
            verdict(
                ratios.iter().all(|r| (1.4..=2.9).contains(r)),
                format!("std(n=200)/std(n=800) = {} (each in [1.4, 2.9]); {}", fmt(&ratios), secs(ta + tb)),
            )
        }
        (Err(e), _) | (_, Err(e)) => verdict(false, format!("experiment could not run: {e}")),
    }
}

fn c8_normality(table: &SummaryTable) -> Verdict {
    let w = table.variant("boundary").unwrap();
    let decisions: Vec<String> = w
        .normality
        .iter()
        .map(|k| match k {
            Some(k) => format!("D={:.3}/{:.3} {}", k.statistic, k.critical_value, if k.reject_at_5pct { "reject" } else { "keep" }),
            None => "n/a".into(),
        })
        .collect();
    let kept = w.normality.iter().filter(|k| matches!(k, Some(k) if !k.reject_at_5pct)).count();
    verdict(kept >= 3, format!("{kept} of 4 components not rejected (>= 3): {}", decisions.join("; ")))
}

struct RandomPath {
    iv: Interval,
    c: Vec<[f64; 4]>,
}

impl RandomPath {
    fn new(rng: &mut ChaCha8Rng, iv: Interval, dim: usize) -> Self {
        let c = (0..dim)
            .map(|_| [rng.random_range(1.0..3.0), rng.random_range(-0.8..0.8), rng.random_range(0.1..2.0), rng.random_range(0.0..6.3)])
            .collect();
        Self { iv, c }
    }

    fn value_at(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(self.c.len(), self.c.iter().map(|c| c[0] + c[1] * (c[2] * t + c[3]).sin()))
    }
}

fn c9_gamma_b() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut boundary_max: f64 = 0.0;
    let mut uniform_err: f64 = 0.0;
    for k in 0..100 {
        let lo = rng.random_range(-2.0..2.0);
        let iv = Interval::new(lo, lo + rng.random_range(1.0..25.0)).unwrap();
        let (model, theta) = match k % 3 {
            0 => {
                let mut mask = ParameterMask::all_free(6);
                for i in 0..6 {
                    if rng.random::<f64>() < 0.3 {
                        mask = mask.fix(i, rng.random_range(-1.0..1.0));
                    }
                }
                let theta = DVector::from_fn(6, |_, _| rng.random_range(-2.0..2.0));
                (VectorFieldModel::new(Arc::new(Glv), mask).unwrap(), theta)
            }
            1 => {
                let d = rng.random_range(1..=3);
                let theta = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
                (VectorFieldModel::unmasked(Arc::new(ExponentialField { dim: d })), theta)
            }
            _ => {
                let d = rng.random_range(1..=3);
                (VectorFieldModel::unmasked(Arc::new(ConstantField { dim: d })), DVector::zeros(d))
            }
        };
        let d = model.dim();
        let (bp, ap) = (RandomPath::new(&mut rng, iv, d), RandomPath::new(&mut rng, iv, d));
        let base = FnPath::new(iv, d, |t| bp.value_at(t));
        let arg = FnPath::new(iv, d, |t| ap.value_at(t));
        assert_eq!(base.interval().lo, bp.iv.lo);

        let w = WeightFunction::boundary_vanishing(iv, rng.random_range(0.01..0.45)).unwrap();
        let g = gamma_b(&base, &arg, &model, &theta, &w);
        boundary_max = boundary_max.max(g.amax());

        let u = WeightFunction::uniform(iv);
        let g = gamma_b(&base, &arg, &model, &theta, &u);
        let end = |t: f64| model.jacobian_free(t, &bp.value_at(t), &theta).transpose() * ap.value_at(t);
        let assembled = end(iv.hi) - end(iv.lo);
        uniform_err = uniform_err.max((g - &assembled).amax() / assembled.amax().max(1.0));
    }
    verdict(
        boundary_max == 0.0 && uniform_err <= 1e-12,
        format!(
            "boundary weight: max |gamma_b| = {boundary_max:e} (== 0); uniform weight vs endpoint assembly {uniform_err:.1e} (<= 1e-12)"
        ),
    )
}

/// `F = (θ₁ + θ₂) x`: the two parameter columns coincide.
struct Duplicated;

impl VectorField for Duplicated {
    fn dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn eval(&self, _: f64, x: &DVector<f64>, th: &DVector<f64>) -> DVector<f64> {
        x * (th[0] + th[1])
    }

    fn jacobian_state(&self, _: f64, _: &DVector<f64>, th: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, th[0] + th[1])
    }

    fn jacobian_param(&self, _: f64, x: &DVector<f64>, _: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 2, &[x[0], x[0]])
    }

    fn linear_design(&self, _: f64, x: &DVector<f64>) -> Option<(DMatrix<f64>, DVector<f64>)> {
        Some((DMatrix::from_row_slice(1, 2, &[x[0], x[0]]), DVector::zeros(1)))
    }
}

fn jstar_at_truth(config: &ExperimentConfig) -> Result<Vec<(String, Jstar)>, Error> {
    let exp = Experiment::new(config.clone())?;
    let iv = config.interval()?;
    let mut out = Vec::new();
    for spec in [WeightSpec::boundary(), WeightSpec::Uniform] {
        let cfg = CriterionConfig::new(spec.build(iv)?);
        let grid = cfg.grid(iv, &[])?;
        out.push((spec.label().to_string(), hessian_jstar(exp.truth(), exp.model(), &config.theta_star(), &cfg.weight, &grid)));
    }
    Ok(out)
}

fn describe_jstar(name: &str, r: &Result<Vec<(String, Jstar)>, Error>) -> (bool, String) {
    match r {
        Ok(list) => {
            let ok = list.iter().all(|(_, j)| j.min_eigenvalue >= 0.0 && j.condition < 1e6);
            let parts: Vec<String> = list
                .iter()
                .map(|(w, j)| format!("{w}: lambda_min {:.3e}, cond {:.3e}", j.min_eigenvalue, j.condition))
                .collect();
            (ok, format!("{name} [{}]", parts.join(", ")))
        }
        Err(e) => (false, format!("{name}: no true trajectory ({e})")),
    }
}

fn degenerate_detected() -> bool {
    let iv = Interval::new(0.0, 1.0).unwrap();
    let times = iv.linspace(50);
    let y = DMatrix::from_fn(50, 1, |i, _| (0.5 * times[i]).exp());
    let basis = BSplineBasis::from_parts(iv, vec![0.5], 4).unwrap();
    let fit = fit_least_squares(&basis, &times, &y).unwrap();
    let model = VectorFieldModel::unmasked(Arc::new(Duplicated));
    let cfg = CriterionConfig::new(WeightFunction::uniform(iv));
    matches!(fit_linear_in_theta(&fit, &model, &cfg), Err(Error::NotIdentifiable { directions }) if !directions.is_empty())
}

fn c10_identifiability() -> Verdict {
    let (ok1, d1) = describe_jstar("case 1", &jstar_at_truth(&ExperimentConfig::case1(500, 0)));
    let (ok2, d2) = describe_jstar("case 2", &jstar_at_truth(&ExperimentConfig::case2(500, 0)));
    let degenerate = degenerate_detected();
    verdict(
        ok1 && ok2 && degenerate,
        format!("{d1}; {d2}; duplicated columns flagged: {degenerate} (PSD, cond < 1e6)"),
    )
}

fn supplementary_case2() -> ExperimentConfig {
    let mut c = ExperimentConfig { replications: 200, ..ExperimentConfig::case2(500, 606) };
    c.theta_star[4] = -1.0;
    c
}

/// Criterion ids given on the command line; all of them when none are.
fn selected() -> Vec<usize> {
    let ids: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if ids.is_empty() {
        (1..=10).collect()
    } else {
        ids
    }
}

fn main() {
    let want = selected();
    let on = |id: usize| want.contains(&id);
    let mut results: Vec<(usize, &str, Verdict)> = Vec::new();
    let mut record = |id: usize, title: &'static str, v: Verdict| {
        println!("{} [{id:>2}] {title}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((id, title, v));
    };

    if on(1) {
        record(1, "spline property suite", c1_spline_suite());
    }
    if on(2) {
        record(2, "integrator conservation", c2_conservation());
    }
    if on(3) {
        record(3, "closed-form / iterative agreement", c3_closed_form_agreement());
    }
    if on(4) {
        record(4, "Duhamel correctness", c4_duhamel());
    }

    const C5: &str = "case 1 desk-scale means and std (n=500, 200 reps)";
    const C8: &str = "normality of case 1 estimates (n=500, 200 reps)";
    if on(5) || on(8) {
        let case1 = run_table(ExperimentConfig { replications: 200, ..ExperimentConfig::case1(500, 505) });
        match &case1 {
            Ok((t, took)) => {
                if on(5) {
                    record(5, C5, c5_table1(t, *took));
                }
                if on(8) {
                    record(8, C8, c8_normality(t));
                }
            }
            Err(e) => {
                for (id, title) in [(5, C5), (8, C8)].into_iter().filter(|c| on(c.0)) {
                    record(id, title, verdict(false, e.to_string()));
                }
            }
        }
    }
    if on(6) {
        record(6, "case 2 weighted vs uniform parameter RMSE (n=500, 200 reps)", c6_table5());
        let supp = table5_ordering(supplementary_case2());
        println!(
            "INFO [ 6] supplementary, b2 = -1 instead of +1 (not counted): {} {}",
            if supp.pass { "ordering holds;" } else { "ordering fails;" },
            supp.detail
        );
    }
    if on(7) {
        record(7, "root-n rate of the weighted estimator (n=200 vs 800)", c7_rate());
    }
    if on(9) {
        record(9, "gamma_b nullification", c9_gamma_b());
    }
    if on(10) {
        record(10, "local identifiability diagnostic", c10_identifiability());
        let (ok2, d2) = describe_jstar("case 2 with b2 = -1", &jstar_at_truth(&supplementary_case2()));
        println!("INFO [10] supplementary (not counted): {d2}; {}", if ok2 { "PSD and cond < 1e6" } else { "check fails" });
    }

    results.sort_by_key(|r| r.0);
    let failed: Vec<String> = results.iter().filter(|r| !r.2.pass).map(|r| r.0.to_string()).collect();
    println!("acceptance: {} of {} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failing: {}", failed.join(", "));
        std::process::exit(1);
    }
}
