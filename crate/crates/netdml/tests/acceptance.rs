//! Acceptance suite. Runs every criterion at its pinned tolerance and prints
//! one PASS/FAIL line each; exits non-zero when any criterion fails.
//!
//! Built with `harness = false` so the lines appear under a plain
//! `cargo test`. Numeric arguments select criteria, e.g.
//! `cargo test -p netdml --test acceptance -- 1 5`.

use std::cell::OnceCell;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{ensure, Context};
use netdml::config::{Experiment, Method};
use netdml::harness::{self, rep_seed, CONSTANT, FULL_SAMPLE_TREE, SUBSAMPLED_FOREST};
use netdml::presets::Preset;
use netdml::{run_experiment, RayonExecutor, SimResult};
use netdml_core::dgp::{
    gen_er_network, gen_interference_data, propensity, true_ate, Dataset, GroundTruth,
    InterferenceDgpConfig,
};
use netdml_core::estimator::{
    audit_exclusion, fit_crossfit, fit_full_sample, fit_with_folds, make_neighborhood_folds,
    EstimatorConfig, NuisanceSpec,
};
use netdml_core::exec::Executor;
use netdml_core::learners::{
    FeatureMatrix, Replacement, RidgeKernelConfig, SgdConfig, TrainingData,
};
use netdml_core::moments::{MomentModel, NuisanceValues};
use netdml_core::rng::{derive_seed, hashed_unit, tag};
use netdml_core::stability::{check_prop2_bound, check_prop3_bound};

const RESIDUAL_TOL: f64 = 1e-10;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

struct Ctx {
    exec: RayonExecutor,
    desk: OnceCell<SimResult>,
}

impl Ctx {
    /// Desk-scale Table 1 run at n = 500, shared by criteria 3, 4 and 8.
    fn desk(&self) -> anyhow::Result<&SimResult> {
        if let Some(r) = self.desk.get() {
            return Ok(r);
        }
        let mut config = Preset::Table1Desk.config();
        config.n_grid = vec![500];
        config.reps = 1000;
        config.learner.trees = 100;
        config.methods = Method::ALL.to_vec();
        let result = run_experiment(&config, &self.exec)?;
        Ok(self.desk.get_or_init(|| result))
    }
}

type Criterion = fn(&Ctx) -> anyhow::Result<Outcome>;

fn main() {
    let criteria: [(usize, &str, Criterion); 9] = [
        (1, "table 2 fold sizes", fold_sizes),
        (2, "theta_0 oracle", theta0_oracle),
        (3, "treated count", treated_count),
        (4, "table 1 desk reproduction", desk_table1),
        (5, "ridge replacement bound", ridge_bound),
        (6, "SGD ridge replacement bound", sgd_bound),
        (7, "stability scaling", stability_scaling),
        (8, "estimator identities", estimator_identities),
        (9, "local dependence", local_dependence),
    ];
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let ctx = Ctx {
        exec: RayonExecutor::new(0),
        desk: OnceCell::new(),
    };
    let mut failed = Vec::new();
    for (k, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&k) {
            continue;
        }
        let t = Instant::now();
        let outcome = run(&ctx).unwrap_or_else(|e| Outcome::new(false, format!("error: {e:#}")));
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {k} ({name}) ... {verdict}: {} [{:.1}s]",
            outcome.detail,
            t.elapsed().as_secs_f64()
        );
        if !outcome.pass {
            failed.push(k);
        }
    }
    if !failed.is_empty() {
        eprintln!("acceptance: criteria {failed:?} failed");
        std::process::exit(1);
    }
}

fn fold_sizes(ctx: &Ctx) -> anyhow::Result<Outcome> {
    const TARGETS: [(f64, usize, [f64; 3]); 3] = [
        (3.0, 5, [74.12, 148.43, 297.06]),
        (8.0, 5, [0.46, 0.95, 1.93]),
        (5.0, 2, [2.03, 4.13, 8.25]),
    ];
    let mut config = Preset::Table2.config();
    config.experiment = Experiment::Table2;
    config.n_grid = vec![500, 1000, 2000];
    config.reps = 500;
    let result = run_experiment(&config, &ctx.exec)?;
    let mut pass = true;
    let mut parts = Vec::new();
    for (delta, k, target) in TARGETS {
        let mut cell = Vec::new();
        for (&n, want) in config.n_grid.iter().zip(target) {
            let got = result
                .fold_size(n, delta, k)
                .with_context(|| format!("no fold sizes for n={n}, delta={delta}, K={k}"))?
                .mean_training_size;
            let tol = (0.03 * want).max(0.3);
            let ok = (got - want).abs() <= tol;
            pass &= ok;
            cell.push(format!("{got:.2}{}", if ok { "" } else { "!" }));
        }
        parts.push(format!("(D={delta},K={k}) {}", cell.join("/")));
    }
    Ok(Outcome::new(pass, parts.join("; ")))
}

// 0.3183 is a window bound, not 1/π.
#[allow(clippy::approx_constant)]
fn theta0_oracle(ctx: &Ctx) -> anyhow::Result<Outcome> {
    let mut config = Preset::Table1.config();
    config.truth.networks = 10_000;
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, lo, hi) in [(500, 0.3125, 0.3185), (2000, 0.3123, 0.3183)] {
        let t = harness::theta0(&config, n, 3.0, &ctx.exec)?;
        let ok = (lo..=hi).contains(&t.theta0);
        pass &= ok;
        parts.push(format!(
            "n={n}: {:.4} (se {:.4}) vs [{lo}, {hi}]",
            t.theta0, t.std_error
        ));
    }
    Ok(Outcome::new(pass, parts.join("; ")))
}

fn treated_count(ctx: &Ctx) -> anyhow::Result<Outcome> {
    let n = 500.0;
    let record = ctx
        .desk()?
        .record(500, Method::BootstrapFull)
        .context("no n=500 record")?;
    let analytic = n * (0.33 * propensity(0.1) + 0.33 * propensity(0.5) + 0.34 * propensity(0.9));
    ensure!(
        (analytic - n * (0.33 * 0.15 + 0.33 * 0.5 + 0.34 * 0.85)).abs() < 1e-9,
        "propensity levels differ from 0.15/0.5/0.85"
    );
    let got = record.mean_treated;
    let pass = (got - 251.69).abs() <= 1.5 && (got - analytic).abs() <= 1.5;
    Ok(Outcome::new(
        pass,
        format!(
            "mean sum W = {got:.2} over {} reps; table 251.69, analytic {analytic:.2}",
            record.reps
        ),
    ))
}

fn desk_table1(ctx: &Ctx) -> anyhow::Result<Outcome> {
    const TARGET_STD: [(Method, f64); 4] = [
        (Method::BootstrapFull, 0.0657),
        (Method::BootstrapCrossfit, 0.0699),
        (Method::SubsampleFull, 0.0715),
        (Method::SubsampleCrossfit, 0.0761),
    ];
    let result = ctx.desk()?;
    let get = |m: Method| {
        result
            .record(500, m)
            .with_context(|| format!("no record for {}", m.label()))
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for (m, want) in TARGET_STD {
        let r = get(m)?;
        let ok = (r.std - want).abs() <= 0.2 * want;
        pass &= ok;
        parts.push(format!(
            "{} std {:.4} vs {want}{} (bias {:+.4})",
            m.label(),
            r.std,
            if ok { "" } else { " out of 20%" },
            r.bias
        ));
    }
    let order_b = get(Method::BootstrapCrossfit)?.std > get(Method::BootstrapFull)?.std;
    let order_s = get(Method::SubsampleCrossfit)?.std > get(Method::SubsampleFull)?.std;
    let bias_s =
        get(Method::SubsampleCrossfit)?.bias.abs() > get(Method::SubsampleFull)?.bias.abs();
    pass &= order_b && order_s && bias_s;
    parts.push(format!(
        "orderings: bootstrap std {order_b}, subsampling std {order_s}, subsampling |bias| {bias_s}"
    ));
    Ok(Outcome::new(pass, parts.join("; ")))
}

/// Features uniform on the unit disc, targets a clipped noisy linear
/// function with `|y| <= 1`.
fn disc_sample(n: usize, seed: u64) -> TrainingData {
    let rows: Vec<[f64; 2]> = (0..n as u64)
        .map(|i| {
            let r = hashed_unit(seed, 1, i).sqrt();
            let t = std::f64::consts::TAU * hashed_unit(seed, 2, i);
            [r * t.cos(), r * t.sin()]
        })
        .collect();
    let y = rows
        .iter()
        .enumerate()
        .map(|(i, x)| {
            (0.6 * x[0] - 0.3 * x[1] + 0.5 * (hashed_unit(seed, 3, i as u64) - 0.5))
                .clamp(-1.0, 1.0)
        })
        .collect();
    TrainingData::new(FeatureMatrix::from_rows(&rows).unwrap(), y).unwrap()
}

fn ridge_bound(_: &Ctx) -> anyhow::Result<Outcome> {
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for trial in 0..100u64 {
        let n = 100 + (hashed_unit(trial, 4, 0) * 300.0) as usize;
        let k = 1 + (hashed_unit(trial, 5, 0) * 8.0) as usize;
        let lambda = 0.01 + hashed_unit(trial, 6, 0);
        let data = disc_sample(n, trial);
        let donor = disc_sample(k, trial + 1_000);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            hashed_unit(trial, 7, a as u64).total_cmp(&hashed_unit(trial, 7, b as u64))
        });
        let replacements: Vec<Replacement> = order[..k]
            .iter()
            .enumerate()
            .map(|(j, &row)| Replacement {
                row,
                features: donor.features.row(j).to_vec(),
                target: donor.targets[j],
            })
            .collect();
        let config = RidgeKernelConfig {
            kernel_bound: Some(1.0),
            ..RidgeKernelConfig::linear(lambda)
        };
        let c = check_prop2_bound(&data, &replacements, &config, 1.0, 21)?;
        if !c.holds {
            violations += 1;
        }
        worst = worst.max(c.measured_sup / c.bound);
    }
    Ok(Outcome::new(
        violations == 0,
        format!("{violations}/100 violations, largest measured/bound {worst:.3}"),
    ))
}

fn sgd_bound(_: &Ctx) -> anyhow::Result<Outcome> {
    let n = 1000;
    let config = SgdConfig::ridge(0.7, 40.0, 1.0, 1.0);
    let mut violations = 0;
    let mut out_of_scope = 0;
    let mut worst: f64 = 0.0;
    for trial in 0..100u64 {
        let space = gen_er_network(n, 3.0, derive_seed(6, tag::NETWORK, trial))?;
        let data = disc_sample(n, derive_seed(6, tag::DATA, trial));
        let copy = disc_sample(n, derive_seed(6, tag::COPY, trial));
        let i = (hashed_unit(trial, 1, 6) * n as f64) as usize;
        let j = (hashed_unit(trial, 2, 6) * n as f64) as usize;
        let c = check_prop3_bound(&data, &copy, &space, i, j, 3.0, &config)?;
        violations += usize::from(!c.holds);
        out_of_scope += usize::from(c.outside_scope);
        worst = worst.max(c.measured / c.bound);
    }
    Ok(Outcome::new(
        violations == 0 && out_of_scope == 0,
        format!("{violations}/100 violations, {out_of_scope} outside the side condition, largest measured/bound {worst:.3}"),
    ))
}

fn stability_scaling(ctx: &Ctx) -> anyhow::Result<Outcome> {
    let mut config = Preset::Stability.config();
    config.experiment = Experiment::Stability;
    config.n_grid = vec![250, 500, 1000];
    let result = run_experiment(&config, &ctx.exec)?;
    let report = |name: &str| {
        result
            .stability_of(name)
            .with_context(|| format!("no report for {name}"))
    };
    let forest = report(SUBSAMPLED_FOREST)?;
    let tree = report(FULL_SAMPLE_TREE)?;
    let constant = report(CONSTANT)?;
    let cut = forest.slope_threshold + forest.slope_tolerance;
    ensure!(
        (cut + 0.45).abs() < 1e-12,
        "slope cut {cut} differs from -0.45"
    );
    let fmt = |s: Option<f64>| s.map_or("-".to_string(), |v| format!("{v:.3}"));
    let forest_ok = forest.decays_faster_than_root_n();
    let constant_ok = constant.all_zero();
    let control_ok = matches!((tree.slope_in_sample, tree.slope_fresh), (Some(a), Some(b)) if a > cut && b > cut);
    Ok(Outcome::new(
        forest_ok && constant_ok && control_ok,
        format!(
            "subsampled forest slopes {}/{} (need <= {cut}): {forest_ok}; constant all zero: {constant_ok}; \
             full-sample tree slopes {}/{} (need > {cut}): {control_ok}",
            fmt(forest.slope_in_sample),
            fmt(forest.slope_fresh),
            fmt(tree.slope_in_sample),
            fmt(tree.slope_fresh),
        ),
    ))
}

fn interference_truth(data: &Dataset) -> anyhow::Result<&netdml_core::dgp::InterferenceTruth> {
    match &data.truth {
        Some(GroundTruth::Interference(t)) => Ok(t),
        _ => anyhow::bail!("dataset carries no interference truth"),
    }
}

/// `θ̂ = mean ν` for the DR-ATE moment (`ψ = −1`) with the given per-unit
/// nuisances, and the conditional standard error of `θ̂ − mean(g1 − g0)`.
fn dr_estimate(
    data: &Dataset,
    nuisance: impl Fn(usize) -> NuisanceValues,
) -> anyhow::Result<(f64, f64)> {
    let t = interference_truth(data)?;
    let model = MomentModel::dr_ate();
    let n = data.len() as f64;
    let mut nu = Vec::with_capacity(data.len());
    for (i, o) in data.observations.iter().enumerate() {
        let (psi, v) = model.evaluate(o, &nuisance(i))?;
        ensure!(psi == -1.0, "DR-ATE psi must be -1");
        nu.push(v);
    }
    let theta = nu.iter().sum::<f64>() / n;
    let dev: Vec<f64> = nu
        .iter()
        .enumerate()
        .map(|(i, v)| v - (t.g1[i] - t.g0[i]))
        .collect();
    let m = dev.iter().sum::<f64>() / n;
    let var = dev.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((theta, (var / n).sqrt()))
}

fn estimator_identities(ctx: &Ctx) -> anyhow::Result<Outcome> {
    let mut parts = Vec::new();
    let mut pass = true;

    // Residuals of every desk fit, then 100 cross-fitted replications at
    // n = 1000 whose exact folds are audited and refitted.
    let desk = ctx.desk()?;
    let desk_resid = desk
        .records
        .iter()
        .map(|r| r.max_moment_residual)
        .fold(0.0, f64::max);
    let config = Preset::Table1Desk.config();
    let n = 1000;
    let reps: Vec<anyhow::Result<(usize, f64, bool)>> = ctx.exec.map_indexed(100, |r| {
        let s = rep_seed(config.master_seed, r);
        let space = Arc::new(gen_er_network(
            n,
            config.delta,
            derive_seed(s, tag::NETWORK, n as u64),
        )?);
        let data = gen_interference_data(
            &config.dgp(n, config.delta, derive_seed(s, tag::DATA, n as u64)),
            space,
        )?;
        let est = config.estimator(
            Method::SubsampleCrossfit,
            derive_seed(s, tag::LEARNER, n as u64),
        );
        let folds = make_neighborhood_folds(
            &data.space,
            est.folds,
            est.exclusion_distance,
            derive_seed(est.seed, tag::FOLDS, 0),
        )?;
        let violating = audit_exclusion(&data.space, &folds, est.exclusion_distance)?;
        let audited = fit_with_folds(&data, &est, &folds)?;
        let fit = fit_crossfit(&data, &est)?;
        Ok((
            violating,
            fit.moment_residual.max(audited.moment_residual),
            fit.theta_hat == audited.theta_hat,
        ))
    });
    let reps = reps.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
    let violating: usize = reps.iter().map(|r| r.0).sum();
    let cf_resid = reps.iter().map(|r| r.1).fold(0.0, f64::max);
    let same_folds = reps.iter().all(|r| r.2);
    pass &= violating == 0 && same_folds;
    parts.push(format!(
        "{violating} violating pairs over 100 cross-fitted fits at n=1000 (audited folds reproduce fits: {same_folds})"
    ));

    // Oracle and half-misspecified nuisances at n = 10^5.
    let big = 100_000;
    let seed = 8;
    let space = Arc::new(gen_er_network(
        big,
        3.0,
        derive_seed(seed, tag::NETWORK, 0),
    )?);
    let mut dgp = InterferenceDgpConfig::new(big, 3.0, derive_seed(seed, tag::DATA, 0));
    dgp.retain_truth = true;
    let data = gen_interference_data(&dgp, space)?;
    let t = interference_truth(&data)?;
    let theta_n = (0..big).map(|i| t.g1[i] - t.g0[i]).sum::<f64>() / big as f64;

    let oracle = fit_full_sample(
        &data,
        &EstimatorConfig::full_sample(MomentModel::dr_ate(), NuisanceSpec::Oracle, 0),
    )?;
    let truth_nuisance = |i: usize| NuisanceValues::DrAte {
        mu_w: t.g1[i],
        e_w: t.propensity[i],
        mu_c: t.g0[i],
        e_c: 1.0 - t.propensity[i],
    };
    let (manual, se) = dr_estimate(&data, truth_nuisance)?;
    ensure!(
        (manual - oracle.theta_hat).abs() <= 1e-9 * manual.abs().max(1.0),
        "oracle fit {} disagrees with the direct moment average {manual}",
        oracle.theta_hat
    );
    let resid = desk_resid.max(cf_resid).max(oracle.moment_residual);
    pass &= resid <= RESIDUAL_TOL;
    parts.insert(0, format!("max relative moment residual {resid:.1e}"));

    // Population θ0 at n = 10^5: between-network spread of mean(g1 − g0)
    // enters the error next to the conditional noise.
    let networks = 20;
    let pop = true_ate(
        &InterferenceDgpConfig::new(big, 3.0, derive_seed(seed, tag::TRUTH, 0)),
        networks,
        &ctx.exec,
    )?;
    let between = pop.std_error * (networks as f64).sqrt();
    let se_pop = (se * se + between * between + pop.std_error * pop.std_error).sqrt();
    let oracle_ok = (oracle.theta_hat - theta_n).abs() <= 3.0 * se
        && (oracle.theta_hat - pop.theta0).abs() <= 3.0 * se_pop;
    pass &= oracle_ok;
    parts.push(format!(
        "oracle {:.4} vs sample ATE {theta_n:.4} (se {se:.4}) and theta_0 {:.4} (se {se_pop:.4})",
        oracle.theta_hat, pop.theta0
    ));

    let (wrong_e, se_a) = dr_estimate(&data, |i| NuisanceValues::DrAte {
        mu_w: t.g1[i],
        e_w: 0.5,
        mu_c: t.g0[i],
        e_c: 0.5,
    })?;
    let (wrong_mu, se_b) = dr_estimate(&data, |i| NuisanceValues::DrAte {
        mu_w: 0.0,
        e_w: t.propensity[i],
        mu_c: 0.0,
        e_c: 1.0 - t.propensity[i],
    })?;
    let dr_a = (wrong_e - theta_n).abs() <= 3.0 * se_a;
    let dr_b = (wrong_mu - theta_n).abs() <= 3.0 * se_b;
    pass &= dr_a && dr_b;
    parts.push(format!(
        "true mu, e = 0.5: {wrong_e:.4} (se {se_a:.4}) {dr_a}; true e, mu = 0: {wrong_mu:.4} (se {se_b:.4}) {dr_b}"
    ));
    Ok(Outcome::new(pass, parts.join("; ")))
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

fn local_dependence(ctx: &Ctx) -> anyhow::Result<Outcome> {
    let (n, reps, seed) = (500, 2000, 9);
    let space = Arc::new(gen_er_network(n, 3.0, derive_seed(seed, tag::NETWORK, 0))?);
    let draws: Vec<anyhow::Result<Vec<f64>>> = ctx.exec.map_indexed(reps, |r| {
        let d = gen_interference_data(
            &InterferenceDgpConfig::new(n, 3.0, derive_seed(seed, tag::DATA, r as u64)),
            Arc::clone(&space),
        )?;
        Ok(d.observations.iter().map(|o| o.y).collect())
    });
    let draws = draws.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
    let series: Vec<Vec<f64>> = (0..n)
        .map(|i| draws.iter().map(|y| y[i]).collect())
        .collect();
    let corr = |i: usize, j: usize| pearson(&series[i], &series[j]).abs();
    let cut = 4.0 / (reps as f64).sqrt();

    let mut far = Vec::new();
    let mut k = 0u64;
    while far.len() < 200 {
        let i = (hashed_unit(seed, tag::PAIRS, 2 * k) * n as f64) as usize;
        let j = (hashed_unit(seed, tag::PAIRS, 2 * k + 1) * n as f64) as usize;
        k += 1;
        ensure!(k < 1_000_000, "could not sample 200 distant pairs");
        if i != j && space.distance(i, j)? >= 3.0 {
            far.push((i, j));
        }
    }
    let far_max = far.iter().map(|&(i, j)| corr(i, j)).fold(0.0, f64::max);

    let graph = space.as_graph().context("ER network is a graph")?;
    let mut near_max: f64 = 0.0;
    let mut near_pairs = 0;
    for h in 0..n {
        let nb = graph.neighbors(h);
        for (a, &i) in nb.iter().enumerate() {
            for &j in &nb[a + 1..] {
                if space.distance(i as usize, j as usize)? == 2.0 {
                    near_pairs += 1;
                    near_max = near_max.max(corr(i as usize, j as usize));
                }
            }
        }
    }
    Ok(Outcome::new(
        far_max < cut && near_max > cut,
        format!(
            "max |corr| {far_max:.4} over 200 pairs at distance >= 3, {near_max:.4} over {near_pairs} common-neighbor pairs; cut {cut:.4}"
        ),
    ))
}
