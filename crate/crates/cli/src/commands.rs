use std::fmt::Write as _;
use std::path::PathBuf;

use sepo_core::analytics::{regress_on_beta1, run_sweep, Response, RunDiagnostics, SweepResult};
use sepo_core::data::{compute_returns, generate_synthetic, load_prices_csv, DataError, ReturnsDataset, SyntheticSpec};
use sepo_core::model::default_sigma;
use sepo_core::{lipschitz_estimate, solve_sepo, Config, Problem, ProjectionVariant, Report, SepoError, Termination};
use serde::Serialize;

use crate::args::{Format, ModelArgs, SolveArgs, SweepArgs};
use crate::output::{fingerprint, float, metadata_lines, to_json, write_file};

pub const EX_CAP: u8 = 2;
pub const EX_USAGE: u8 = 64;
pub const EX_DATA: u8 = 65;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EX_USAGE, message: message.into() }
    }

    fn data(message: impl Into<String>) -> Self {
        Self { code: EX_DATA, message: message.into() }
    }

    fn failure(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

/// Bad flag values surface from the core as config or problem errors.
impl From<SepoError> for CliError {
    fn from(e: SepoError) -> Self {
        match e {
            SepoError::InvalidConfig(_) | SepoError::InvalidProblem(_) => CliError::usage(e.to_string()),
            SepoError::Data(d) => CliError::data(d.to_string()),
            other => CliError::failure(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
enum SourceInfo {
    Prices(PathBuf),
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, Serialize)]
struct DatasetInfo {
    source: SourceInfo,
    n_assets: usize,
    n_periods: usize,
    /// SHA-256 of the returns matrix.
    fingerprint: String,
}

fn load(args: &ModelArgs) -> Result<(ReturnsDataset, DatasetInfo), CliError> {
    let (dataset, source) = if let Some(path) = &args.source.prices {
        let named = |e: DataError| match e {
            DataError::Io { .. } => CliError::data(e.to_string()),
            other => CliError::data(format!("{}: {other}", path.display())),
        };
        let table = load_prices_csv(path).map_err(named)?;
        (compute_returns(&table).map_err(named)?, SourceInfo::Prices(path.clone()))
    } else {
        let spec = args.source.synthetic.expect("clap requires one source");
        let d = generate_synthetic(spec).map_err(|e| CliError::usage(e.to_string()))?;
        (d, SourceInfo::Synthetic(spec))
    };
    let (rows, cols) = dataset.returns.dim();
    let info = DatasetInfo {
        source,
        n_assets: cols,
        n_periods: rows,
        fingerprint: fingerprint(rows, cols, dataset.returns.iter()),
    };
    Ok((dataset, info))
}

fn solver_config(args: &ModelArgs, n: usize) -> Result<Config, CliError> {
    let cfg = Config {
        rho: args.rho,
        sigma: args.sigma.unwrap_or_else(|| default_sigma(n)),
        epsilon: args.eps,
        max_iter: args.max_iter,
        projection_variant: args.projection.into(),
        ..Config::for_assets(n)
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Serialize)]
struct ResolvedConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    beta1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta1_grid: Option<String>,
    beta2: f64,
    r_min: f64,
    rho: f64,
    sigma: f64,
    threshold: f64,
    epsilon: f64,
    max_iter: usize,
    projection: ProjectionVariant,
    lambda_update_enabled: bool,
    tie_break_to_zero: bool,
    /// One entry per beta1: `L = b1 |V|_F + b2 sqrt(n) + rho n` and `alpha = 1/L`.
    lipschitz_estimate: Vec<f64>,
    step_size: Vec<f64>,
}

impl ResolvedConfig {
    fn new(args: &ModelArgs, cfg: &Config, problems: &[Problem]) -> Self {
        let lipschitz: Vec<f64> = problems.iter().map(|p| lipschitz_estimate(p, cfg.rho)).collect();
        Self {
            beta1: None,
            beta1_grid: None,
            beta2: args.beta2,
            r_min: args.r_min,
            rho: cfg.rho,
            sigma: cfg.sigma,
            threshold: (2.0 * cfg.sigma).sqrt(),
            epsilon: cfg.epsilon,
            max_iter: cfg.max_iter,
            projection: cfg.projection_variant,
            lambda_update_enabled: cfg.lambda_update_enabled,
            tie_break_to_zero: cfg.tie_break_to_zero,
            step_size: lipschitz.iter().map(|l| 1.0 / l).collect(),
            lipschitz_estimate: lipschitz,
        }
    }
}

#[derive(Debug, Serialize)]
struct AssetWeight<'a> {
    asset: &'a str,
    weight: f64,
}

#[derive(Debug, Serialize)]
struct SolveDocument<'a> {
    command: &'static str,
    config: &'a ResolvedConfig,
    dataset: &'a DatasetInfo,
    termination: Termination,
    iterations: usize,
    lambda_final: f64,
    budget_violation: f64,
    fixed_point_residual: f64,
    gradient_norm: f64,
    report: &'a Report,
    weights: Vec<AssetWeight<'a>>,
    objective_trace: &'a [f64],
}

pub struct Outcome {
    pub code: u8,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

pub fn cmd_solve(args: &SolveArgs) -> Result<Outcome, CliError> {
    let (dataset, info) = load(&args.model)?;
    let cfg = solver_config(&args.model, dataset.n_assets())?;
    let problem = dataset.problem(args.beta1, args.model.beta2, args.model.r_min)?;
    let result = solve_sepo(&problem, &cfg, None)?;
    let report = Report::new(&problem, result.weights.view())?;
    let mut config = ResolvedConfig::new(&args.model, &cfg, std::slice::from_ref(&problem));
    config.beta1 = Some(args.beta1);

    let doc = SolveDocument {
        command: "solve",
        config: &config,
        dataset: &info,
        termination: result.termination,
        iterations: result.iterations,
        lambda_final: result.lambda_final,
        budget_violation: result.budget_violation,
        fixed_point_residual: result.fixed_point_residual,
        gradient_norm: result.gradient_norm,
        report: &report,
        weights: dataset
            .asset_ids
            .iter()
            .zip(result.weights.iter())
            .map(|(asset, &weight)| AssetWeight { asset, weight })
            .collect(),
        objective_trace: &result.objective_trace,
    };
    let path = PathBuf::from(format!("{}.{}", args.out, args.format.extension()));
    let contents = match args.format {
        Format::Json => to_json(&doc),
        Format::Csv => {
            let mut meta = serde_json::to_value(&doc).expect("serializable");
            let map = meta.as_object_mut().expect("object");
            map.remove("weights");
            map.remove("objective_trace");
            let mut s = metadata_lines(&meta);
            s.push_str("asset,weight\n");
            for w in &doc.weights {
                writeln!(s, "{},{}", w.asset, float(w.weight)).unwrap();
            }
            s
        }
    };
    write_file(&path, &contents).map_err(CliError::failure)?;

    let code = match result.termination {
        Termination::GradientTolerance => 0,
        Termination::IterationCap => EX_CAP,
    };
    let summary = format!(
        "{:?} after {} iterations; {} of {} assets held, expected return {}, variance risk {}",
        result.termination,
        result.iterations,
        report.nonzero_count,
        dataset.n_assets(),
        report.expected_return,
        report.variance_risk
    );
    Ok(Outcome { code, files: vec![path], summary })
}

#[derive(Debug, Serialize)]
struct SweepRowDocument<'a> {
    beta1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sepo: Option<&'a Report>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mvo: Option<&'a Report>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sepo_diagnostics: Option<&'a RunDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mvo_diagnostics: Option<&'a RunDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sepo_weights: Option<&'a [f64]>,
}

#[derive(Debug, Serialize)]
struct SweepDocument<'a> {
    command: &'static str,
    config: &'a ResolvedConfig,
    dataset: &'a DatasetInfo,
    asset_ids: &'a [String],
    failed_rows: usize,
    rows: Vec<SweepRowDocument<'a>>,
}

#[derive(Debug, Serialize)]
struct RegressionDocument<'a> {
    command: &'static str,
    response: Response,
    config: &'a ResolvedConfig,
    dataset: &'a DatasetInfo,
    #[serde(flatten)]
    fit: RegressionOutcome,
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum RegressionOutcome {
    Fit(sepo_core::analytics::RegressionSummary),
    Failed { error: String },
}

const SWEEP_COLUMNS: &str = "beta1,er_sepo,vr_sepo,spar_sepo,er_mvo,vr_mvo,spar_mvo,iters_sepo,budget_violation_sepo";

pub fn cmd_sweep(args: &SweepArgs) -> Result<Outcome, CliError> {
    let (dataset, info) = load(&args.model)?;
    let cfg = solver_config(&args.model, dataset.n_assets())?;
    let grid = &args.beta1_grid.values;
    let problems =
        grid.iter().map(|&b| dataset.problem(b, args.model.beta2, args.model.r_min)).collect::<Result<Vec<_>, _>>()?;
    let jobs = match args.jobs {
        Some(0) => return Err(CliError::usage("--jobs must be at least 1")),
        Some(j) => j,
        None => std::thread::available_parallelism().map_or(1, |p| p.get()).min(grid.len()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::failure(format!("thread pool: {e}")))?;
    let sweep = pool.install(|| run_sweep(&dataset, grid, args.model.beta2, args.model.r_min, &cfg))?;

    let mut config = ResolvedConfig::new(&args.model, &cfg, &problems);
    config.beta1_grid = Some(args.beta1_grid.text.clone());

    let table_path = PathBuf::from(format!("{}.{}", args.out, args.format.extension()));
    let table = match args.format {
        Format::Csv => sweep_csv(&sweep, &config, &info),
        Format::Json => to_json(&sweep_document(&sweep, &config, &info, &dataset.asset_ids)),
    };
    write_file(&table_path, &table).map_err(CliError::failure)?;
    let mut files = vec![table_path];

    let mut regression_failed = false;
    for response in Response::ALL {
        let fit = match regress_on_beta1(&sweep, response) {
            Ok(s) => RegressionOutcome::Fit(s),
            Err(e) => {
                regression_failed = true;
                RegressionOutcome::Failed { error: e.to_string() }
            }
        };
        let doc = RegressionDocument { command: "sweep", response, config: &config, dataset: &info, fit };
        let path = PathBuf::from(format!("{}_regression_{}.json", args.out, response.name()));
        write_file(&path, &to_json(&doc)).map_err(CliError::failure)?;
        files.push(path);
    }

    let failed = sweep.failed_count();
    let capped = sweep.successful().any(|(_, r)| {
        r.sepo_diagnostics.termination == Termination::IterationCap
            || r.mvo_diagnostics.termination == Termination::IterationCap
    });
    let code = if failed > 0 || regression_failed {
        1
    } else if capped {
        EX_CAP
    } else {
        0
    };
    let summary = format!("{} rows, {failed} failed", sweep.rows.len());
    Ok(Outcome { code, files, summary })
}

fn sweep_document<'a>(
    sweep: &'a SweepResult,
    config: &'a ResolvedConfig,
    info: &'a DatasetInfo,
    asset_ids: &'a [String],
) -> SweepDocument<'a> {
    let rows = sweep
        .rows
        .iter()
        .map(|row| match &row.outcome {
            Ok(r) => SweepRowDocument {
                beta1: row.beta1,
                error: None,
                sepo: Some(&r.sepo),
                mvo: Some(&r.mvo),
                sepo_diagnostics: Some(&r.sepo_diagnostics),
                mvo_diagnostics: Some(&r.mvo_diagnostics),
                sepo_weights: Some(&r.sepo_weights),
            },
            Err(e) => SweepRowDocument {
                beta1: row.beta1,
                error: Some(e),
                sepo: None,
                mvo: None,
                sepo_diagnostics: None,
                mvo_diagnostics: None,
                sepo_weights: None,
            },
        })
        .collect();
    SweepDocument { command: "sweep", config, dataset: info, asset_ids, failed_rows: sweep.failed_count(), rows }
}

fn sweep_csv(sweep: &SweepResult, config: &ResolvedConfig, info: &DatasetInfo) -> String {
    let meta = serde_json::json!({
        "command": "sweep",
        "config": config,
        "dataset": info,
        "failed_rows": sweep.failed_count(),
    });
    let mut s = metadata_lines(&meta);
    s.push_str(SWEEP_COLUMNS);
    s.push('\n');
    for row in &sweep.rows {
        match &row.outcome {
            Ok(r) => {
                let cells = [
                    float(row.beta1),
                    float(r.sepo.expected_return),
                    float(r.sepo.variance_risk),
                    float(r.sepo.sparsity_pct),
                    float(r.mvo.expected_return),
                    float(r.mvo.variance_risk),
                    float(r.mvo.sparsity_pct),
                    r.sepo_diagnostics.iterations.to_string(),
                    float(r.sepo_diagnostics.budget_violation),
                ];
                s.push_str(&cells.join(","));
            }
            // failed rows keep their beta1 and leave the rest empty
            Err(_) => s.push_str(&format!("{}{}", float(row.beta1), ",".repeat(8))),
        }
        s.push('\n');
    }
    s
}
