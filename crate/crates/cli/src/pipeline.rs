//! The staged workflow: fit → stack → ppc → compare, each step reading the
//! previous step's files so runs are resumable and inspectable. All writes go
//! through an atomic rename, and every JSON artifact is validated against its
//! shipped schema before a command reports success.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ndarray::Array2;
use serde::Serialize;

use predstack_core::comparisons::{
    build_profiles, focal_grid, gap_posterior, predict_cells, CellPosterior, FocalGrid,
};
use predstack_core::dataset::{
    build_design, generate_synthetic, Dataset, DesignMatrix, DgpConfig, VariableRole,
};
use predstack_core::loo::{loglik_matrix, loo_point_predictions, psis_loo, LooResult};
use predstack_core::model::ModelSpec;
use predstack_core::ppc::{
    grouped_stat, holdout_check, replicate, report_from, PpcReport, PpcSourceSpec,
    PredictiveSource, TestStatistic,
};
use predstack_core::rng::child_seed;
use predstack_core::sampler::{diagnose, fit_logistic, Diagnostics, PosteriorDraws, SamplerConfig};
use predstack_core::stacking::{
    allocate_draws, brier, stack_weights_logscore, stack_weights_lsq, LpdMatrix, Objective,
    StackedDraws, StackingWeights, WeightsReport, WeightsRow,
};
use predstack_core::svg::{histogram_svg, interval_plot_svg, IntervalPoint, IntervalSeries};

use crate::config::{GapSpec, ResolvedRun};
use crate::schema::{check_file, Schemas};

/// Split R-hat above which a fit is rejected.
pub const RHAT_LIMIT: f64 = 1.05;

const PRIOR_NOTE: &str = "priors: independent Normal(0, scale) with per-column autoscaling \
                          unless disabled; see each fit sidecar for the exact configuration";

/// Raised when fits fail the convergence gate (exit code 3 at the CLI).
#[derive(Debug)]
pub struct DiagnosticsFailure(pub String);

impl std::fmt::Display for DiagnosticsFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for DiagnosticsFailure {}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn slug(s: &str) -> String {
    s.replace('=', "-").replace([',', ' '], "_")
}

/// Output-file layout under the run's output directory.
pub struct Layout {
    out: PathBuf,
}

impl Layout {
    pub fn new(out: &Path) -> Result<Layout> {
        std::fs::create_dir_all(out)
            .with_context(|| format!("creating output dir {}", out.display()))?;
        Ok(Layout { out: out.to_path_buf() })
    }

    pub fn draws(&self, model: &str) -> PathBuf {
        self.out.join(format!("draws_{}.csv", slug(model)))
    }

    pub fn fit_sidecar(&self, model: &str) -> PathBuf {
        self.out.join(format!("fit_{}.json", slug(model)))
    }

    pub fn loo_csv(&self, model: &str) -> PathBuf {
        self.out.join(format!("loo_{}.csv", slug(model)))
    }

    pub fn loo_json(&self, model: &str) -> PathBuf {
        self.out.join(format!("loo_{}.json", slug(model)))
    }

    pub fn weights_json(&self) -> PathBuf {
        self.out.join("weights.json")
    }

    pub fn weights_csv(&self) -> PathBuf {
        self.out.join("weights.csv")
    }

    pub fn ppc_json(&self, source: &str, grouping: &str) -> PathBuf {
        self.out.join(format!("ppc_{}_{}.json", slug(source), slug(grouping)))
    }

    pub fn ppc_svg(&self, source: &str, grouping: &str, group: &str) -> PathBuf {
        self.out.join(format!("ppc_{}_{}_{}.svg", slug(source), slug(grouping), slug(group)))
    }

    pub fn focal_grid_csv(&self) -> PathBuf {
        self.out.join("focal_grid.csv")
    }

    pub fn cells_csv(&self) -> PathBuf {
        self.out.join("cells.csv")
    }

    pub fn gaps_csv(&self, tag: f64) -> PathBuf {
        self.out.join(format!("gaps_q{:02}.csv", (tag * 100.0).round() as u32))
    }

    pub fn comparison_svg(&self) -> PathBuf {
        self.out.join("comparison.svg")
    }

    pub fn index_html(&self) -> PathBuf {
        self.out.join("index.html")
    }

    pub fn dir(&self) -> &Path {
        &self.out
    }
}

#[derive(Serialize)]
struct FitSidecar<'a> {
    model: &'a str,
    spec: &'a ModelSpec,
    sampler: &'a SamplerConfig,
    diagnostics: &'a Diagnostics,
    step_sizes: &'a [f64],
    divergences: &'a [usize],
    design_warnings: &'a [String],
}

/// A fitted model with everything downstream steps need.
pub struct Fitted {
    pub name: String,
    pub design: DesignMatrix,
    pub draws: PosteriorDraws,
}

fn model_list(run: &ResolvedRun) -> Vec<&ModelSpec> {
    let mut all = vec![&run.core];
    all.extend(run.candidates.iter());
    all
}

/// Step 3: fit every model (core plus candidates), write draw stores and
/// sidecars, and gate on convergence.
pub fn cmd_fit(run: &ResolvedRun) -> Result<()> {
    let layout = Layout::new(&run.config.out)?;
    let data = run.config.load_data()?;
    let base = run.config.sampler_config();

    let mut failures = Vec::new();
    let mut written_json = Vec::new();
    for (idx, spec) in model_list(run).into_iter().enumerate() {
        let design = build_design(spec, &data)?;
        let config = SamplerConfig { seed: child_seed(base.seed, idx as u64), ..base.clone() };
        log::info!("fitting {} ({} columns, {} rows)", spec.name, design.p(), design.n());
        let draws = fit_logistic(&design, &spec.prior, &config)?;
        let diagnostics = diagnose(&draws)?;

        let mut csv_bytes = Vec::new();
        draws.write_csv(&mut csv_bytes)?;
        write_atomic(&layout.draws(&spec.name), &csv_bytes)?;
        let sidecar = FitSidecar {
            model: &spec.name,
            spec,
            sampler: &config,
            diagnostics: &diagnostics,
            step_sizes: &draws.step_sizes,
            divergences: &draws.divergences,
            design_warnings: &design.warnings,
        };
        let path = layout.fit_sidecar(&spec.name);
        write_atomic(&path, &to_pretty_json(&sidecar)?)?;
        written_json.push(path);

        if diagnostics.max_rhat() > RHAT_LIMIT {
            let (param, rhat) = diagnostics.worst_parameter().unwrap_or(("?", f64::NAN));
            failures.push(format!(
                "model {}: parameter {param} has split R-hat {rhat:.4} > {RHAT_LIMIT}",
                spec.name
            ));
        }
    }

    let schema = Schemas::fit_sidecar();
    for path in &written_json {
        check_file(&schema, path)?;
    }
    if !failures.is_empty() {
        return Err(anyhow!(DiagnosticsFailure(failures.join("; "))));
    }
    Ok(())
}

/// Reloads the draw stores written by `cmd_fit`.
pub fn load_fitted(run: &ResolvedRun, data: &Dataset) -> Result<Vec<Fitted>> {
    let layout = Layout::new(&run.config.out)?;
    let mut fitted = Vec::new();
    for spec in model_list(run) {
        let design = build_design(spec, data)?;
        let path = layout.draws(&spec.name);
        if !path.exists() {
            bail!(
                "missing draw store {} (run `predstack fit` first)",
                path.display()
            );
        }
        let draws = PosteriorDraws::read_csv(&path)?;
        if draws.dim() != design.p() {
            bail!(
                "draw store {} has {} parameters but the design has {}; re-run fit",
                path.display(),
                draws.dim(),
                design.p()
            );
        }
        fitted.push(Fitted { name: spec.name.clone(), design, draws });
    }
    Ok(fitted)
}

struct StackInputs {
    /// Candidate-model LOO results, in candidate order.
    loo: Vec<LooResult>,
    /// LOO point predictions per candidate (n×K, column-major by candidate).
    point_preds: Vec<Vec<f64>>,
    core_loo: LooResult,
    core_points: Vec<f64>,
}

fn compute_loo(fitted: &[Fitted]) -> Result<StackInputs> {
    let mut loo = Vec::new();
    let mut point_preds = Vec::new();
    let mut core_loo = None;
    let mut core_points = None;
    for (idx, f) in fitted.iter().enumerate() {
        let ll = loglik_matrix(&f.draws, &f.design, &f.name)?;
        let result = psis_loo(&ll)?;
        let points = loo_point_predictions(&ll, &f.draws, &f.design)?;
        if idx == 0 {
            core_loo = Some(result);
            core_points = Some(points);
        } else {
            loo.push(result);
            point_preds.push(points);
        }
    }
    Ok(StackInputs {
        loo,
        point_preds,
        core_loo: core_loo.expect("core model present"),
        core_points: core_points.expect("core model present"),
    })
}

fn optimize_weights(inputs: &StackInputs, objective: Objective, y: &[f64]) -> Result<StackingWeights> {
    match objective {
        Objective::LogScore => {
            let refs: Vec<&LooResult> = inputs.loo.iter().collect();
            let lpd = LpdMatrix::from_loo(&refs)?;
            Ok(stack_weights_logscore(&lpd)?)
        }
        Objective::SquaredError => {
            let n = y.len();
            let k = inputs.point_preds.len();
            let mut f = Array2::zeros((n, k));
            for (kk, col) in inputs.point_preds.iter().enumerate() {
                for i in 0..n {
                    f[(i, kk)] = col[i].clamp(0.0, 1.0);
                }
            }
            Ok(stack_weights_lsq(&f, y, k)?)
        }
    }
}

/// Step 3b: stacking weights and the Brier table. Brier scores are computed
/// from leave-one-out point predictions, so the table is an out-of-sample
/// comparison; the ensemble row mixes the candidates' LOO predictions with
/// the stacking weights.
pub fn cmd_stack(run: &ResolvedRun, objective: Objective) -> Result<()> {
    let layout = Layout::new(&run.config.out)?;
    let data = run.config.load_data()?;
    let fitted = load_fitted(run, &data)?;
    let y = data.outcome_values().to_vec();

    let inputs = compute_loo(&fitted)?;
    let weights = optimize_weights(&inputs, objective, &y)?;

    // Per-model artifacts.
    let mut written_loo = Vec::new();
    for (f, result) in fitted
        .iter()
        .zip(std::iter::once(&inputs.core_loo).chain(inputs.loo.iter()))
    {
        let mut csv_bytes = Vec::new();
        result.write_csv(&mut csv_bytes)?;
        write_atomic(&layout.loo_csv(&f.name), &csv_bytes)?;
        let path = layout.loo_json(&f.name);
        write_atomic(&path, &to_pretty_json(&result.summary())?)?;
        written_loo.push(path);
    }

    // Brier table: core, ensemble, then candidates.
    let core_brier = brier(&inputs.core_points, &y)?;
    let n = y.len();
    let mut ensemble_pred = vec![0.0; n];
    for (kk, col) in inputs.point_preds.iter().enumerate() {
        for i in 0..n {
            ensemble_pred[i] += weights.weights[kk] * col[i];
        }
    }
    for p in &mut ensemble_pred {
        *p = p.clamp(0.0, 1.0);
    }
    let ensemble_brier = brier(&ensemble_pred, &y)?;

    let mut rows = vec![
        WeightsRow { model: fitted[0].name.clone(), weight: None, brier: core_brier },
        WeightsRow { model: "stack".into(), weight: None, brier: ensemble_brier },
    ];
    for (kk, f) in fitted.iter().skip(1).enumerate() {
        rows.push(WeightsRow {
            model: f.name.clone(),
            weight: Some(weights.weights[kk]),
            brier: brier(&inputs.point_preds[kk], &y)?,
        });
    }
    let report = WeightsReport {
        objective: weights.objective,
        rows,
        objective_value: weights.objective_value,
        prior_note: PRIOR_NOTE.to_string(),
    };
    let weights_path = layout.weights_json();
    write_atomic(&weights_path, &to_pretty_json(&report)?)?;

    let mut csv = String::from("model,weight,brier\n");
    for row in &report.rows {
        let w = row.weight.map(|w| format!("{w:.16e}")).unwrap_or_default();
        csv.push_str(&format!("{},{},{:.16e}\n", row.model, w, row.brier));
    }
    write_atomic(&layout.weights_csv(), csv.as_bytes())?;

    let loo_schema = Schemas::loo_summary();
    for path in &written_loo {
        check_file(&loo_schema, path)?;
    }
    check_file(&Schemas::weights_report(), &weights_path)?;
    Ok(())
}

/// Reads candidate weights back from the weights report.
fn load_weights(run: &ResolvedRun, layout: &Layout) -> Result<Vec<f64>> {
    let path = layout.weights_json();
    if !path.exists() {
        bail!("missing weights report {} (run `predstack stack` first)", path.display());
    }
    let report: WeightsReport = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
    let mut by_name = BTreeMap::new();
    for row in &report.rows {
        if let Some(w) = row.weight {
            by_name.insert(row.model.clone(), w);
        }
    }
    run.candidates
        .iter()
        .map(|c| {
            by_name
                .get(&c.name)
                .copied()
                .ok_or_else(|| anyhow!("weights report misses candidate {}", c.name))
        })
        .collect()
}

fn stacked_allocation(fitted: &[Fitted], weights: &[f64]) -> Result<StackedDraws> {
    let s = fitted[1].draws.total();
    Ok(allocate_draws(weights, s)?)
}

fn write_ppc_outputs(
    layout: &Layout,
    report: &PpcReport,
    grouping_slug: &str,
    written: &mut Vec<PathBuf>,
) -> Result<()> {
    let path = layout.ppc_json(&report.source, grouping_slug);
    write_atomic(&path, &to_pretty_json(report)?)?;
    written.push(path);
    for entry in &report.entries {
        let svg = histogram_svg(
            &entry.histogram,
            entry.observed,
            &format!("{} | {}", report.source, entry.group),
        );
        write_atomic(&layout.ppc_svg(&report.source, grouping_slug, &entry.group), svg.as_bytes())?;
    }
    Ok(())
}

/// Step 4: grouped posterior predictive checks for the stacking ensemble and
/// the hold-out validity check across all sources.
pub fn cmd_ppc(run: &ResolvedRun) -> Result<()> {
    if run.config.ppc_groupings.is_empty() && run.config.holdout.is_none() {
        bail!("config field ppc_groupings: no groupings configured and no holdout column set");
    }
    let layout = Layout::new(&run.config.out)?;
    let data = run.config.load_data()?;
    let fitted = load_fitted(run, &data)?;
    let weights = load_weights(run, &layout)?;
    let stacked = stacked_allocation(&fitted, &weights)?;
    let y = data.outcome_values().to_vec();
    let candidates: Vec<(&PosteriorDraws, &DesignMatrix)> =
        fitted[1..].iter().map(|f| (&f.draws, &f.design)).collect();

    let mut written = Vec::new();
    for (gi, grouping) in run.config.ppc_groupings.iter().enumerate() {
        if grouping.is_empty() {
            bail!("config field ppc_groupings[{gi}]: empty grouping list");
        }
        let source = PredictiveSource::Stacked { stacked: &stacked, members: candidates.clone() };
        let rep = replicate(&source, "stack", child_seed(run.config.seed, 1000 + gi as u64))?;
        let grouped = grouped_stat(&rep, &y, &data, grouping, TestStatistic::Mean)?;
        let report = report_from(&grouped, "stack");
        write_ppc_outputs(&layout, &report, &grouping.join("_x_"), &mut written)?;
    }

    if let Some(holdout) = &run.config.holdout {
        let mut sources = Vec::new();
        for f in &fitted {
            sources.push(PpcSourceSpec {
                name: f.name.clone(),
                source: PredictiveSource::Single { draws: &f.draws, design: &f.design },
            });
        }
        sources.push(PpcSourceSpec {
            name: "stack".into(),
            source: PredictiveSource::Stacked { stacked: &stacked, members: candidates.clone() },
        });
        let specs: Vec<&ModelSpec> = model_list(run);
        let reports = holdout_check(
            &sources,
            &specs,
            &data,
            holdout,
            TestStatistic::Mean,
            child_seed(run.config.seed, 2000),
        )?;
        for report in &reports {
            write_ppc_outputs(&layout, report, &format!("holdout_{holdout}"), &mut written)?;
        }
    }

    let schema = Schemas::ppc_report();
    for path in &written {
        check_file(&schema, path)?;
    }
    Ok(())
}

/// Resolved gap contrast (possibly sign-flipped by `--gap-sign formula`).
pub fn resolve_gap(run: &ResolvedRun, data: &Dataset, flip: bool) -> Result<GapSpec> {
    let base = match &run.config.gap {
        Some(g) => g.clone(),
        None => {
            // Default: the first two-level focal column, first level as the
            // reference (so e.g. FEM=0 minus FEM=1: positive gaps mean the
            // reference group carries the higher risk).
            let focal = data.columns_with_role(VariableRole::Focal);
            let mut found = None;
            for var in focal {
                let (levels, _) = data.categorical_view(&var.name)?;
                if levels.len() == 2 {
                    found = Some(GapSpec {
                        variable: var.name.clone(),
                        reference: levels[0].clone(),
                        comparison: levels[1].clone(),
                    });
                    break;
                }
            }
            found.ok_or_else(|| anyhow!("no two-level focal column for the default gap; set config field gap"))?
        }
    };
    Ok(if flip {
        GapSpec {
            variable: base.variable,
            reference: base.comparison,
            comparison: base.reference,
        }
    } else {
        base
    })
}

/// Step 5: focal grid, hypothetical profiles, cell posteriors, gap tables,
/// and the comparison interval plot.
pub fn cmd_compare(run: &ResolvedRun, flip_gap_sign: bool) -> Result<()> {
    let layout = Layout::new(&run.config.out)?;
    let data = run.config.load_data()?;
    let fitted = load_fitted(run, &data)?;
    let weights = load_weights(run, &layout)?;
    let stacked = stacked_allocation(&fitted, &weights)?;

    let focal: Vec<String> = data
        .columns_with_role(VariableRole::Focal)
        .iter()
        .map(|v| v.name.clone())
        .collect();
    if focal.is_empty() {
        bail!("no focal columns in the data schema");
    }
    let nonfocal: Vec<String> = data
        .columns_with_role(VariableRole::Nonfocal)
        .iter()
        .map(|v| v.name.clone())
        .collect();

    let grid = focal_grid(&data, &focal)?;
    let profiles = build_profiles(&data, &nonfocal, &run.config.profile_quantiles)?;
    let members: Vec<(&PosteriorDraws, &DesignMatrix)> =
        fitted[1..].iter().map(|f| (&f.draws, &f.design)).collect();
    let cells = predict_cells(&stacked, &members, &data, &grid, &profiles)?;

    // Focal grid table.
    let mut grid_csv = String::new();
    grid_csv.push_str(&focal.join(","));
    grid_csv.push_str(",fraction,size\n");
    for cell in &grid.cells {
        let levels: Vec<&str> = cell.levels.iter().map(|(_, l)| l.as_str()).collect();
        let fraction = cell
            .fraction()
            .map(|f| format!("{f:.16e}"))
            .unwrap_or_else(|| "undefined".to_string());
        grid_csv.push_str(&format!("{},{},{}\n", levels.join(","), fraction, cell.size));
    }
    write_atomic(&layout.focal_grid_csv(), grid_csv.as_bytes())?;

    // Cell posterior summaries.
    let mut cells_csv = String::from("cell,profile,median,q05,q95\n");
    for cell in &cells {
        cells_csv.push_str(&format!(
            "{},{},{:.16e},{:.16e},{:.16e}\n",
            cell.cell_label,
            cell.profile_tag,
            cell.summary.median,
            cell.summary.q05,
            cell.summary.q95
        ));
    }
    write_atomic(&layout.cells_csv(), cells_csv.as_bytes())?;

    // Gap tables, one per profile tag.
    let gap = resolve_gap(run, &data, flip_gap_sign)?;
    for &tag in &run.config.profile_quantiles {
        let gaps = gap_posterior(&cells, &gap.variable, &gap.reference, &gap.comparison, tag)?;
        let mut csv = String::from("fixed,contrast,median,q05,q95\n");
        for g in &gaps {
            let fixed = g
                .fixed_levels
                .iter()
                .map(|(c, l)| format!("{c}={l}"))
                .collect::<Vec<_>>()
                .join(";");
            csv.push_str(&format!(
                "{},{},{:.16e},{:.16e},{:.16e}\n",
                if fixed.is_empty() { "-" } else { &fixed },
                g.contrast,
                g.summary.median,
                g.summary.q05,
                g.summary.q95
            ));
        }
        write_atomic(&layout.gaps_csv(tag), csv.as_bytes())?;
    }

    let svg = comparison_plot(run, &data, &grid, &cells)?;
    write_atomic(&layout.comparison_svg(), svg.as_bytes())?;
    Ok(())
}

/// Interval plot: x runs over the levels of the last focal column, one series
/// per remaining-focal-level × profile combination.
fn comparison_plot(
    run: &ResolvedRun,
    data: &Dataset,
    grid: &FocalGrid,
    cells: &[CellPosterior],
) -> Result<String> {
    let x_var = grid.focal.last().expect("grid has focal columns").clone();
    let (x_levels, _) = data.categorical_view(&x_var)?;

    // Map level → x coordinate: the within-level median of a configured
    // numeric column, or the level index.
    let mut x_of: BTreeMap<String, f64> = BTreeMap::new();
    match &run.config.compare_x {
        Some(cx) if cx.level_of == x_var => {
            let (_, codes) = data.categorical_view(&x_var)?;
            let numeric = data
                .var(&cx.numeric)
                .and_then(|v| v.column.as_numeric().map(|s| s.to_vec()))
                .ok_or_else(|| anyhow!("compare_x.numeric {} is not a numeric column", cx.numeric))?;
            for (li, level) in x_levels.iter().enumerate() {
                let values: Vec<f64> = (0..data.n())
                    .filter(|&i| codes[i] as usize == li)
                    .map(|i| numeric[i])
                    .collect();
                let x = if values.is_empty() {
                    li as f64
                } else {
                    predstack_core::math::quantile(&values, 0.5)
                };
                x_of.insert(level.clone(), x);
            }
        }
        _ => {
            for (li, level) in x_levels.iter().enumerate() {
                x_of.insert(level.clone(), li as f64);
            }
        }
    }

    let mut series_map: BTreeMap<String, Vec<IntervalPoint>> = BTreeMap::new();
    for cell in cells {
        let mut x_level = None;
        let mut rest = Vec::new();
        for (col, level) in &cell.focal_levels {
            if *col == x_var {
                x_level = Some(level.clone());
            } else {
                rest.push(format!("{col}={level}"));
            }
        }
        let Some(x_level) = x_level else { continue };
        let label = if rest.is_empty() {
            format!("q{:.0}%", cell.profile_tag * 100.0)
        } else {
            format!("{} q{:.0}%", rest.join(","), cell.profile_tag * 100.0)
        };
        series_map.entry(label).or_default().push(IntervalPoint {
            x: *x_of.get(&x_level).unwrap_or(&0.0),
            median: cell.summary.median,
            lo: cell.summary.q05,
            hi: cell.summary.q95,
        });
    }
    let mut series: Vec<IntervalSeries> = series_map
        .into_iter()
        .map(|(label, mut points)| {
            points.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap());
            IntervalSeries { label, points }
        })
        .collect();
    series.sort_by(|a, b| a.label.cmp(&b.label));
    Ok(interval_plot_svg(
        &series,
        "Stacked predicted outcome probability",
        &x_var,
        "probability",
    ))
}

/// Bundles every step and writes an HTML index of the figures.
pub fn cmd_report(run: &ResolvedRun, objective: Objective, flip_gap_sign: bool) -> Result<()> {
    cmd_fit(run)?;
    cmd_stack(run, objective)?;
    cmd_ppc(run)?;
    cmd_compare(run, flip_gap_sign)?;

    let layout = Layout::new(&run.config.out)?;
    let mut entries: Vec<String> = std::fs::read_dir(layout.dir())?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().to_string())
        .collect();
    entries.sort();

    let mut html = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>predstack report</title></head><body>\n<h1>predstack report</h1>\n",
    );
    html.push_str("<h2>Figures</h2>\n");
    for name in entries.iter().filter(|n| n.ends_with(".svg")) {
        html.push_str(&format!(
            "<div><h3>{name}</h3><img src=\"{name}\" alt=\"{name}\"/></div>\n"
        ));
    }
    html.push_str("<h2>Tables and stores</h2>\n<ul>\n");
    for name in entries
        .iter()
        .filter(|n| n.ends_with(".json") || n.ends_with(".csv"))
    {
        html.push_str(&format!("<li><a href=\"{name}\">{name}</a></li>\n"));
    }
    html.push_str("</ul>\n</body></html>\n");
    write_atomic(&layout.index_html(), html.as_bytes())?;
    Ok(())
}

/// Generates a synthetic dataset plus its truth sidecar and a ready-to-use
/// role schema.
pub fn cmd_synth(dgp_path: &Path, seed: u64, out: &Path) -> Result<()> {
    let layout = Layout::new(out)?;
    let text = std::fs::read_to_string(dgp_path)
        .with_context(|| format!("cannot read DGP config {}", dgp_path.display()))?;
    let config: DgpConfig = serde_json::from_str(&text)
        .with_context(|| format!("invalid DGP config {}", dgp_path.display()))?;
    let (data, truth) = generate_synthetic(&config, seed)?;

    let mut csv_bytes = Vec::new();
    data.write_csv(&mut csv_bytes)?;
    write_atomic(&layout.dir().join("data.csv"), &csv_bytes)?;

    let truth_path = layout.dir().join("truth.json");
    write_atomic(&truth_path, &to_pretty_json(&truth)?)?;

    let mut roles = BTreeMap::new();
    roles.insert(config.outcome.clone(), "outcome");
    for p in &config.predictors {
        let role = match p.role {
            VariableRole::Outcome => "outcome",
            VariableRole::Focal => "focal",
            VariableRole::Nonfocal => "nonfocal",
            VariableRole::Holdout => "holdout",
            VariableRole::Ignore => "ignore",
        };
        roles.insert(p.name.clone(), role);
    }
    write_atomic(&layout.dir().join("schema.json"), &to_pretty_json(&roles)?)?;

    check_file(&Schemas::synth_truth(), &truth_path)?;
    Ok(())
}
