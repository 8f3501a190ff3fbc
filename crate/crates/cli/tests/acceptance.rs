//! Acceptance suite: one test per shipped criterion, each printing a
//! PASS line and enforcing its runtime budget. Everything runs on synthetic
//! data with fixed seeds, so results are reproducible.

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use predstack_core::comparisons::{build_profiles, focal_grid, gap_posterior, predict_cells};
use predstack_core::dataset::{
    build_design, generate_synthetic, Dataset, DesignMatrix, DgpConfig, DgpDist, DgpPredictor,
    VariableRole,
};
use predstack_core::loo::{
    exact_loo, loglik_matrix, loo_point_predictions, psis_loo, KHAT_WARN,
};
use predstack_core::math::{mean, quantile};
use predstack_core::model::{
    grad_log_posterior, log_posterior, ModelSpec, PriorConfig, PriorScales,
};
use predstack_core::ppc::{
    grouped_stat, p_one_sided, replicate, tspppv, PredictiveSource, TestStatistic,
};
use predstack_core::rng::child_seed;
use predstack_core::sampler::{diagnose, fit_logistic, PosteriorDraws, SamplerConfig};
use predstack_core::stacking::{
    allocate_draws, brier, stack_weights_logscore, stack_weights_lsq, LpdMatrix,
};

fn spec(name: &str, terms: &[&str]) -> ModelSpec {
    ModelSpec {
        name: name.into(),
        outcome: "y".into(),
        terms: terms.iter().map(|s| s.to_string()).collect(),
        interactions: vec![],
        intercept: true,
        prior: PriorConfig::default(),
    }
}

fn normal_pred(name: &str, coef: f64, role: VariableRole) -> DgpPredictor {
    DgpPredictor {
        name: name.into(),
        dist: DgpDist::Normal { mean: 0.0, sd: 1.0 },
        coef: vec![coef],
        role,
    }
}

fn fit(
    data: &Dataset,
    model: &ModelSpec,
    sampler: &SamplerConfig,
) -> (DesignMatrix, PosteriorDraws) {
    let design = build_design(model, data).unwrap();
    let draws = fit_logistic(&design, &model.prior, sampler).unwrap();
    (design, draws)
}

#[test]
fn criterion_01_gradient_matches_finite_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = rng.gen_range(1..=20);
        let n = rng.gen_range(5..=200);
        let x = Array2::from_shape_fn((n, p), |_| rng.gen::<f64>() * 2.0 - 1.0);
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.5))).collect();
        let beta: Vec<f64> = (0..p).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let scales = PriorScales((0..p).map(|_| 0.5 + 2.0 * rng.gen::<f64>()).collect());

        let grad = grad_log_posterior(&beta, &x, &y, &scales).unwrap();
        let h = 1e-5;
        for j in 0..p {
            let mut bp = beta.clone();
            let mut bm = beta.clone();
            bp[j] += h;
            bm[j] -= h;
            let fd = (log_posterior(&bp, &x, &y, &scales).unwrap()
                - log_posterior(&bm, &x, &y, &scales).unwrap())
                / (2.0 * h);
            let rel = (grad[j] - fd).abs() / grad[j].abs().max(fd.abs()).max(1.0);
            worst = worst.max(rel);
        }
    }
    assert!(worst < 1e-6, "max relative gradient error {worst}");
    assert!(start.elapsed().as_secs() < 10, "took {:?}", start.elapsed());
    println!("[PASS] criterion 01: gradient vs central differences, max rel err {worst:.3e}");
}

#[test]
fn criterion_02_posterior_recovery_and_coverage() {
    let start = Instant::now();
    let truth = [-0.3, 0.8, -0.5, 0.3, -1.0];
    let mut covered = [0usize; 5];
    let reps = 20;
    for rep in 0..reps {
        let config = DgpConfig {
            n: 2000,
            intercept: truth[0],
            outcome: "y".into(),
            predictors: (1..5)
                .map(|j| normal_pred(&format!("x{j}"), truth[j], VariableRole::Nonfocal))
                .collect(),
        };
        let (data, _) = generate_synthetic(&config, child_seed(2202, rep as u64)).unwrap();
        let sampler = SamplerConfig {
            chains: 4,
            warmup: 400,
            draws: 500,
            seed: child_seed(2303, rep as u64),
            ..Default::default()
        };
        let (_, draws) = fit(&data, &spec("m", &["x1", "x2", "x3", "x4"]), &sampler);
        let diag = diagnose(&draws).unwrap();
        assert!(diag.max_rhat() < 1.01, "rep {rep}: rhat {}", diag.max_rhat());
        assert_eq!(draws.total_divergences(), 0, "rep {rep}: divergences");

        for (j, &t) in truth.iter().enumerate() {
            let col: Vec<f64> = draws.draws.column(j).to_vec();
            let lo = quantile(&col, 0.05);
            let hi = quantile(&col, 0.95);
            if lo <= t && t <= hi {
                covered[j] += 1;
            }
        }
    }
    for (j, &c) in covered.iter().enumerate() {
        assert!(
            c * 10 >= reps * 8,
            "coefficient {j}: 90% interval covered truth only {c}/{reps} times"
        );
    }
    assert!(start.elapsed().as_secs() < 600, "took {:?}", start.elapsed());
    println!("[PASS] criterion 02: coverage {covered:?}/20 per coefficient, all R-hat < 1.01");
}

#[test]
fn criterion_03_psis_agrees_with_exact_refits() {
    let start = Instant::now();
    let config = DgpConfig {
        n: 50,
        intercept: 0.2,
        outcome: "y".into(),
        predictors: vec![normal_pred("a", 0.8, VariableRole::Nonfocal)],
    };
    let (data, _) = generate_synthetic(&config, 303).unwrap();
    let sampler =
        SamplerConfig { chains: 4, warmup: 500, draws: 1000, seed: 33, ..Default::default() };
    let model = spec("m", &["a"]);
    let (design, draws) = fit(&data, &model, &sampler);
    assert_eq!(draws.total(), 4000);

    let fast = psis_loo(&loglik_matrix(&draws, &design, "m").unwrap()).unwrap();
    let slow = exact_loo(&design, &model.prior, &sampler, "m", None).unwrap();

    let khat = fast.khat.as_ref().unwrap();
    let mut max_gap: f64 = 0.0;
    for i in 0..design.n() {
        if khat[i] < KHAT_WARN {
            let gap = (fast.pointwise[i] - slow.pointwise[i]).abs();
            assert!(
                gap < 0.1,
                "obs {i}: |psis - exact| = {gap} (psis {}, exact {})",
                fast.pointwise[i],
                slow.pointwise[i]
            );
            max_gap = max_gap.max(gap);
        }
    }
    let total_gap = (fast.total - slow.total).abs();
    assert!(total_gap < 0.5, "total gap {total_gap}");
    assert!(start.elapsed().as_secs() < 300, "took {:?}", start.elapsed());
    println!(
        "[PASS] criterion 03: max pointwise |psis-exact| {max_gap:.4}, total gap {total_gap:.4}"
    );
}

#[test]
fn criterion_04_optimizers_match_simplex_grid_search() {
    let start = Instant::now();
    let step = 0.005f64;
    let ticks = (1.0 / step).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(404);

    for instance in 0..25 {
        // Log-score objective.
        let p = Array2::from_shape_fn((40, 3), |_| (-(rng.gen::<f64>() * 2.95 + 0.05)).exp());
        let lpd = LpdMatrix {
            values: p.clone(),
            models: vec!["a".into(), "b".into(), "c".into()],
        };
        let opt = stack_weights_logscore(&lpd).unwrap();
        assert!(opt.weights.iter().all(|&w| w >= -1e-10));
        assert!((opt.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let mut grid_best = f64::NEG_INFINITY;
        for a in 0..=ticks {
            for b in 0..=(ticks - a) {
                let w = [a as f64 * step, b as f64 * step, 1.0 - (a + b) as f64 * step];
                let mut obj = 0.0;
                for i in 0..40 {
                    obj += (w[0] * p[(i, 0)] + w[1] * p[(i, 1)] + w[2] * p[(i, 2)]).ln();
                }
                grid_best = grid_best.max(obj / 40.0);
            }
        }
        assert!(
            (opt.objective_value - grid_best).abs() < 1e-4,
            "instance {instance} log-score: opt {} vs grid {grid_best}",
            opt.objective_value
        );

        // Squared-error objective.
        let f = Array2::from_shape_fn((40, 3), |_| rng.gen::<f64>());
        let y: Vec<f64> = (0..40).map(|_| f64::from(rng.gen_bool(0.5))).collect();
        let opt = stack_weights_lsq(&f, &y, 3).unwrap();
        assert!(opt.weights.iter().all(|&w| w >= -1e-10));
        assert!((opt.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let mut grid_best = f64::INFINITY;
        for a in 0..=ticks {
            for b in 0..=(ticks - a) {
                let w = [a as f64 * step, b as f64 * step, 1.0 - (a + b) as f64 * step];
                let mut obj = 0.0;
                for i in 0..40 {
                    let pred = w[0] * f[(i, 0)] + w[1] * f[(i, 1)] + w[2] * f[(i, 2)];
                    obj += (y[i] - pred) * (y[i] - pred);
                }
                grid_best = grid_best.min(obj);
            }
        }
        assert!(
            (opt.objective_value - grid_best).abs() < 1e-4,
            "instance {instance} squared-error: opt {} vs grid {grid_best}",
            opt.objective_value
        );
    }
    assert!(start.elapsed().as_secs() < 60, "took {:?}", start.elapsed());
    println!("[PASS] criterion 04: both optimizers within 1e-4 of 0.005-grid search, 25 instances");
}

#[test]
fn criterion_05_stack_beats_candidates_on_brier_and_logscore() {
    let start = Instant::now();
    // Four disjoint active blocks; each candidate carries exactly one, so
    // every candidate omits the other three.
    let config = DgpConfig {
        n: 1500,
        intercept: -0.2,
        outcome: "y".into(),
        predictors: vec![
            DgpPredictor {
                name: "FEM".into(),
                dist: DgpDist::Bernoulli { p: 0.5 },
                coef: vec![-0.6],
                role: VariableRole::Focal,
            },
            normal_pred("b1", 0.8, VariableRole::Nonfocal),
            normal_pred("b2", -0.8, VariableRole::Nonfocal),
            normal_pred("b3", 0.7, VariableRole::Nonfocal),
            normal_pred("b4", -0.7, VariableRole::Nonfocal),
        ],
    };
    let (data, _) = generate_synthetic(&config, 505).unwrap();
    let sampler =
        SamplerConfig { chains: 4, warmup: 300, draws: 500, seed: 55, ..Default::default() };
    let y = data.outcome_values().to_vec();

    let mut loo_results = Vec::new();
    let mut points = Vec::new();
    for k in 1..=4 {
        let name = format!("cand{k}");
        let block = format!("b{k}");
        let (design, draws) = fit(&data, &spec(&name, &["FEM", &block]), &sampler);
        let ll = loglik_matrix(&draws, &design, &name).unwrap();
        loo_results.push(psis_loo(&ll).unwrap());
        points.push(loo_point_predictions(&ll, &draws, &design).unwrap());
    }

    let refs: Vec<&_> = loo_results.iter().collect();
    let lpd = LpdMatrix::from_loo(&refs).unwrap();
    let weights = stack_weights_logscore(&lpd).unwrap();

    // Log score: the stack never falls below the best single candidate.
    let best_vertex = loo_results
        .iter()
        .map(|r| r.total / r.pointwise.len() as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(
        weights.objective_value >= best_vertex - 1e-9,
        "stack log score {} below best candidate {best_vertex}",
        weights.objective_value
    );

    // Brier: the mixed LOO predictions beat the best candidate (small slack).
    let candidate_briers: Vec<f64> =
        points.iter().map(|p| brier(p, &y).unwrap()).collect();
    let mut mixed = vec![0.0; y.len()];
    for (k, p) in points.iter().enumerate() {
        for i in 0..y.len() {
            mixed[i] += weights.weights[k] * p[i];
        }
    }
    let ensemble_brier = brier(&mixed, &y).unwrap();
    let best_brier = candidate_briers.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(
        ensemble_brier <= best_brier + 0.005,
        "ensemble Brier {ensemble_brier} vs best candidate {best_brier}"
    );
    assert!(start.elapsed().as_secs() < 600, "took {:?}", start.elapsed());
    println!(
        "[PASS] criterion 05: ensemble Brier {ensemble_brier:.4} <= best candidate {best_brier:.4} + 0.005; log score dominates vertices"
    );
}

#[test]
fn criterion_06_tspppv_endpoints_and_tie_rule() {
    // Observed at the replicated median gives exactly 1.
    assert_eq!(tspppv(&[1.0, 2.0, 3.0, 4.0, 5.0], 3.0), 1.0);
    // All replicates above the observed value gives exactly 0.
    assert_eq!(tspppv(&[3.0, 4.0, 5.0], 2.0), 0.0);
    assert_eq!(p_one_sided(&[3.0, 4.0, 5.0], 2.0), 1.0);
    // Half-tie fixtures.
    assert_eq!(p_one_sided(&[1.0, 2.0, 3.0, 4.0], 2.5), 0.5);
    assert_eq!(p_one_sided(&[1.0, 2.0, 3.0], 2.0), 0.5);
    assert!((tspppv(&[1.0, 2.0, 3.0, 4.0, 5.0], 2.0) - 0.6).abs() < 1e-15);
    println!("[PASS] criterion 06: TSPPPV endpoints and half-tie fixtures reproduce exactly");
}

#[test]
fn criterion_07_holdout_pattern_across_replications() {
    let start = Instant::now();
    let reps = 50;
    let mut pattern_holds = 0usize;
    let mut core_worst: f64 = 0.0;
    let mut stack_worst: f64 = 1.0;

    for rep in 0..reps {
        let config = DgpConfig {
            n: 1000,
            intercept: -0.6,
            outcome: "y".into(),
            predictors: vec![
                DgpPredictor {
                    name: "FEM".into(),
                    dist: DgpDist::Bernoulli { p: 0.5 },
                    coef: vec![-0.5],
                    role: VariableRole::Focal,
                },
                DgpPredictor {
                    name: "h".into(),
                    dist: DgpDist::Bernoulli { p: 0.4 },
                    coef: vec![1.8],
                    role: VariableRole::Holdout,
                },
                normal_pred("x1", 0.25, VariableRole::Nonfocal),
                normal_pred("x2", -0.25, VariableRole::Nonfocal),
                DgpPredictor {
                    name: "p3".into(),
                    dist: DgpDist::Linked { source: "h".into(), weight: 2.0, noise_sd: 0.7 },
                    coef: vec![0.0],
                    role: VariableRole::Nonfocal,
                },
                DgpPredictor {
                    name: "p4".into(),
                    dist: DgpDist::FlipOf { source: "h".into(), flip_prob: 0.08 },
                    coef: vec![0.0],
                    role: VariableRole::Nonfocal,
                },
            ],
        };
        let (data, _) = generate_synthetic(&config, child_seed(700, rep as u64)).unwrap();
        let sampler = SamplerConfig {
            chains: 2,
            warmup: 250,
            draws: 500,
            seed: child_seed(701, rep as u64),
            ..Default::default()
        };
        let y = data.outcome_values().to_vec();

        let (core_design, core_draws) = fit(&data, &spec("core", &["FEM"]), &sampler);
        let mut cand_fits = Vec::new();
        for (k, extra) in ["x1", "x2", "p3", "p4"].iter().enumerate() {
            cand_fits.push(fit(&data, &spec(&format!("c{}", k + 1), &["FEM", extra]), &sampler));
        }

        let loo_results: Vec<_> = cand_fits
            .iter()
            .map(|(design, draws)| {
                psis_loo(&loglik_matrix(draws, design, "c").unwrap()).unwrap()
            })
            .collect();
        let refs: Vec<&_> = loo_results.iter().collect();
        let weights = stack_weights_logscore(&LpdMatrix::from_loo(&refs).unwrap()).unwrap();
        let stacked = allocate_draws(&weights.weights, cand_fits[0].1.total()).unwrap();

        let grouping = vec!["h".to_string()];
        let core_rep = replicate(
            &PredictiveSource::Single { draws: &core_draws, design: &core_design },
            "core",
            child_seed(702, rep as u64),
        )
        .unwrap();
        let core_grouped =
            grouped_stat(&core_rep, &y, &data, &grouping, TestStatistic::Mean).unwrap();
        let core_tspppv = core_grouped
            .groups
            .iter()
            .map(|g| tspppv(&g.replicated, g.observed))
            .fold(f64::NEG_INFINITY, f64::max);

        let members: Vec<_> = cand_fits.iter().map(|(d, s)| (s, d)).collect();
        let stack_rep = replicate(
            &PredictiveSource::Stacked { stacked: &stacked, members },
            "stack",
            child_seed(703, rep as u64),
        )
        .unwrap();
        let stack_grouped =
            grouped_stat(&stack_rep, &y, &data, &grouping, TestStatistic::Mean).unwrap();
        let stack_tspppv = stack_grouped
            .groups
            .iter()
            .map(|g| tspppv(&g.replicated, g.observed))
            .fold(f64::INFINITY, f64::min);

        core_worst = core_worst.max(core_tspppv);
        stack_worst = stack_worst.min(stack_tspppv);
        if core_tspppv < 0.05 && stack_tspppv > 0.3 {
            pattern_holds += 1;
        }
    }

    assert!(
        pattern_holds >= 45,
        "pattern held in only {pattern_holds}/{reps} replications (core worst {core_worst:.3}, stack worst {stack_worst:.3})"
    );
    assert!(start.elapsed().as_secs() < 1800, "took {:?}", start.elapsed());
    println!(
        "[PASS] criterion 07: core fails & stack passes the hold-out check in {pattern_holds}/50 replications"
    );
}

#[test]
fn criterion_08_ppc_pvalues_calibrate_under_the_truth() {
    let start = Instant::now();
    let reps = 50;
    let mut p_values = Vec::with_capacity(reps);
    for rep in 0..reps {
        let config = DgpConfig {
            n: 400,
            intercept: -0.4,
            outcome: "y".into(),
            predictors: vec![normal_pred("a", 0.7, VariableRole::Nonfocal)],
        };
        let (data, _) = generate_synthetic(&config, child_seed(800, rep as u64)).unwrap();
        let sampler = SamplerConfig {
            chains: 2,
            warmup: 250,
            draws: 400,
            seed: child_seed(801, rep as u64),
            ..Default::default()
        };
        let (design, draws) = fit(&data, &spec("true", &["a"]), &sampler);
        let rep_out = replicate(
            &PredictiveSource::Single { draws: &draws, design: &design },
            "true",
            child_seed(802, rep as u64),
        )
        .unwrap();
        let t_obs = mean(&design.y);
        let t_rep: Vec<f64> = (0..rep_out.matrix.nrows())
            .map(|s| {
                rep_out.matrix.row(s).iter().map(|&v| f64::from(v)).sum::<f64>()
                    / design.n() as f64
            })
            .collect();
        p_values.push(p_one_sided(&t_rep, t_obs));
    }
    let avg = mean(&p_values);
    assert!(
        (0.4..=0.6).contains(&avg),
        "mean one-sided p-value {avg} outside [0.4, 0.6]"
    );
    assert!(start.elapsed().as_secs() < 600, "took {:?}", start.elapsed());
    println!("[PASS] criterion 08: mean one-sided p-value {avg:.3} within [0.4, 0.6]");
}

#[test]
fn criterion_09_gap_pipeline_matches_sorting_oracle_exactly() {
    let start = Instant::now();
    let config = DgpConfig {
        n: 600,
        intercept: -0.2,
        outcome: "y".into(),
        predictors: vec![
            DgpPredictor {
                name: "FEM".into(),
                dist: DgpDist::Bernoulli { p: 0.5 },
                coef: vec![-0.7],
                role: VariableRole::Focal,
            },
            DgpPredictor {
                name: "SES".into(),
                dist: DgpDist::Categorical {
                    levels: vec!["1".into(), "2".into()],
                    probs: vec![0.5, 0.5],
                },
                coef: vec![-0.6],
                role: VariableRole::Focal,
            },
            normal_pred("z", -0.5, VariableRole::Nonfocal),
        ],
    };
    let (data, _) = generate_synthetic(&config, 909).unwrap();
    let sampler =
        SamplerConfig { chains: 2, warmup: 250, draws: 400, seed: 9, ..Default::default() };
    let fits = vec![
        fit(&data, &spec("c1", &["FEM", "SES", "z"]), &sampler),
        fit(&data, &spec("c2", &["FEM", "SES"]), &sampler),
    ];
    let members: Vec<_> = fits.iter().map(|(d, s)| (s, d)).collect();
    let stacked = allocate_draws(&[0.6, 0.4], fits[0].1.total()).unwrap();

    let grid = focal_grid(&data, &["FEM".into(), "SES".into()]).unwrap();
    let profiles = build_profiles(&data, &["z".into()], &[0.25, 0.5, 0.75]).unwrap();
    let cells = predict_cells(&stacked, &members, &data, &grid, &profiles).unwrap();

    // Independent sort-based quantile oracle.
    fn oracle_quantile(values: &[f64], q: f64) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h = (v.len() - 1) as f64 * q;
        let lo = h.floor() as usize;
        let frac = h - lo as f64;
        if lo + 1 < v.len() {
            v[lo] + frac * (v[lo + 1] - v[lo])
        } else {
            v[v.len() - 1]
        }
    }

    let gaps = gap_posterior(&cells, "FEM", "0", "1", 0.5).unwrap();
    assert!(!gaps.is_empty());
    for gap in &gaps {
        assert_eq!(gap.summary.median, oracle_quantile(&gap.draws, 0.5), "median not bit-exact");
        assert_eq!(gap.summary.q05, oracle_quantile(&gap.draws, 0.05), "q05 not bit-exact");
        assert_eq!(gap.summary.q95, oracle_quantile(&gap.draws, 0.95), "q95 not bit-exact");
    }

    let self_gaps = gap_posterior(&cells, "FEM", "1", "1", 0.5).unwrap();
    for gap in &self_gaps {
        assert!(gap.draws.iter().all(|&d| d == 0.0), "self-gap must be identically zero");
    }
    assert!(start.elapsed().as_secs() < 120, "took {:?}", start.elapsed());
    println!("[PASS] criterion 09: gap summaries bit-exact vs sorting oracle; self-gap identically 0");
}

#[test]
fn criterion_10_report_runs_are_byte_identical() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path();
    std::fs::write(
        base.join("dgp.json"),
        r#"{
            "n": 200,
            "intercept": -0.2,
            "outcome": "LD",
            "predictors": [
                {"name": "FEM", "dist": {"bernoulli": {"p": 0.5}}, "coef": [-0.8], "role": "focal"},
                {"name": "ESCS", "dist": {"normal": {"mean": 0.0, "sd": 1.0}}, "coef": [-0.7], "role": "ignore"},
                {"name": "x1", "dist": {"normal": {"mean": 0.0, "sd": 1.0}}, "coef": [-0.5], "role": "nonfocal"},
                {"name": "x2", "dist": {"normal": {"mean": 0.0, "sd": 1.0}}, "coef": [0.6], "role": "nonfocal"},
                {"name": "WITHOUT", "dist": {"bernoulli": {"p": 0.35}}, "coef": [0.9], "role": "holdout"}
            ]
        }"#,
    )
    .unwrap();
    let bin = env!("CARGO_BIN_EXE_predstack");
    let synth = std::process::Command::new(bin)
        .args(["synth", "--dgp"])
        .arg(base.join("dgp.json"))
        .args(["--seed", "4", "--out"])
        .arg(base.join("data"))
        .output()
        .unwrap();
    assert!(synth.status.success(), "{}", String::from_utf8_lossy(&synth.stderr));

    std::fs::write(
        base.join("core.json"),
        r#"{"name": "core", "outcome": "LD", "terms": ["FEM", "SES"]}"#,
    )
    .unwrap();
    std::fs::write(
        base.join("c1.json"),
        r#"{"name": "c1", "outcome": "LD", "terms": ["FEM", "SES", "x1"]}"#,
    )
    .unwrap();
    std::fs::write(
        base.join("c2.json"),
        r#"{"name": "c2", "outcome": "LD", "terms": ["FEM", "SES", "x2"]}"#,
    )
    .unwrap();
    std::fs::write(
        base.join("run.json"),
        r#"{
            "data": "data/data.csv",
            "schema": "data/schema.json",
            "models": {"core": "core.json", "candidates": ["c1.json", "c2.json"]},
            "sampler": {"chains": 2, "warmup": 200, "draws": 250},
            "ppc_groupings": [["FEM", "SES"]],
            "holdout": "WITHOUT",
            "derive": [{"column": "ESCS", "name": "SES", "role": "focal"}],
            "out": "out",
            "seed": 77
        }"#,
    )
    .unwrap();

    for out in ["out_a", "out_b"] {
        let run = std::process::Command::new(bin)
            .arg("report")
            .arg("--config")
            .arg(base.join("run.json"))
            .arg("--out")
            .arg(base.join(out))
            .output()
            .unwrap();
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    }

    let mut names: Vec<String> = std::fs::read_dir(base.join("out_a"))
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().to_string())
        .filter(|n| n.ends_with(".csv") || n.ends_with(".json"))
        .collect();
    names.sort();
    assert!(names.len() > 10, "unexpectedly few artifacts: {names:?}");
    for name in &names {
        let a = std::fs::read(base.join("out_a").join(name)).unwrap();
        let b = std::fs::read(base.join("out_b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    assert!(start.elapsed().as_secs() < 300, "took {:?}", start.elapsed());
    println!(
        "[PASS] criterion 10: two report runs byte-identical across {} CSV/JSON artifacts",
        names.len()
    );
}
