use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sepo_core::data::SyntheticSpec;
use sepo_core::ProjectionVariant;

#[derive(Debug, Parser)]
#[command(name = "sepo", version, about = "Sparse mean-variance portfolios with an l0 penalty")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem and write the weights with their report.
    Solve(SolveArgs),
    /// Solve over a beta1 grid against the baseline and regress the results on beta1.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
#[group(id = "source", required = true, multiple = false)]
pub struct Source {
    /// Price history CSV: a `date` column followed by one column per asset.
    #[arg(long, group = "source")]
    pub prices: Option<PathBuf>,

    /// Seeded synthetic universe as `n,T,seed,sectors`.
    #[arg(long, group = "source", value_parser = parse_synthetic)]
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[command(flatten)]
    pub source: Source,

    #[arg(long, default_value_t = 1.0)]
    pub beta2: f64,

    /// Minimum portfolio return.
    #[arg(long = "r", default_value_t = 0.1)]
    pub r_min: f64,

    #[arg(long, default_value_t = 5.0)]
    pub rho: f64,

    /// Threshold parameter [default: 1/(8n^2)]
    #[arg(long)]
    pub sigma: Option<f64>,

    #[arg(long, default_value_t = 1e-7)]
    pub eps: f64,

    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,

    #[arg(long, value_enum, default_value_t = Projection::Paper)]
    pub projection: Projection,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    /// Variance weight.
    #[arg(long, default_value_t = 1.0)]
    pub beta1: f64,

    /// Output path prefix; the extension follows --format.
    #[arg(long, default_value = "sepo-solve")]
    pub out: String,

    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    /// Inclusive grid `start:stop:step`.
    #[arg(long, value_parser = parse_grid)]
    pub beta1_grid: Grid,

    /// Output path prefix for the table and the `_regression_*.json` files.
    #[arg(long, default_value = "sepo-sweep")]
    pub out: String,

    /// Table format; regressions are always JSON.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    /// Worker threads [default: min(grid size, available parallelism)]
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Projection {
    Paper,
    Euclidean,
}

impl From<Projection> for ProjectionVariant {
    fn from(p: Projection) -> Self {
        match p {
            Projection::Paper => ProjectionVariant::PaperScaling,
            Projection::Euclidean => ProjectionVariant::EuclideanHalfspace,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub text: String,
    pub values: Vec<f64>,
}

fn parse_synthetic(s: &str) -> Result<SyntheticSpec, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [n, periods, seed, sectors] = parts[..] else {
        return Err(format!("expected n,T,seed,sectors, got {s:?}"));
    };
    let int = |name: &str, v: &str| {
        v.parse::<usize>().map_err(|_| format!("{name} must be a nonnegative integer, got {v:?}"))
    };
    Ok(SyntheticSpec {
        n: int("n", n)?,
        periods: int("T", periods)?,
        seed: seed.parse().map_err(|_| format!("seed must be a nonnegative integer, got {seed:?}"))?,
        sectors: int("sectors", sectors)?,
    })
}

/// Grid points are rounded to 12 decimals so `0.1:1.0:0.1` yields `0.3`, not `0.30000000000000004`.
fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    let [start, stop, step] = parts[..] else {
        return Err(format!("expected start:stop:step, got {s:?}"));
    };
    let num = |v: &str| v.parse::<f64>().map_err(|_| format!("not a number: {v:?}"));
    let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
    if !(step > 0.0) || !step.is_finite() {
        return Err(format!("step must be positive, got {step}"));
    }
    if !(start > 0.0) || !stop.is_finite() {
        return Err(format!("start must be positive, got {start}"));
    }
    if stop < start {
        return Err(format!("stop {stop} is below start {start}"));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if count > 100_000 {
        return Err(format!("grid has {count} points"));
    }
    let values = (0..count).map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12).collect();
    Ok(Grid { text: s.to_string(), values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_points() {
        let g = parse_grid("0.1:1.0:0.1").unwrap();
        assert_eq!(g.values, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]);
        assert_eq!(parse_grid("0.5:0.5:1").unwrap().values, vec![0.5]);
        assert_eq!(parse_grid("1:2:0.4").unwrap().values, vec![1.0, 1.4, 1.8]);
    }

    #[test]
    fn bad_grids() {
        for g in ["0.1:1:0", "0.1:1:-1", "0:1:0.1", "1:0.5:0.1", "a:1:0.1", "0.1:1"] {
            assert!(parse_grid(g).is_err(), "{g}");
        }
    }

    #[test]
    fn synthetic_spec() {
        let s = parse_synthetic("10,60,7,2").unwrap();
        assert_eq!(s, SyntheticSpec { n: 10, periods: 60, seed: 7, sectors: 2 });
        assert!(parse_synthetic("10,60,7").is_err());
        assert!(parse_synthetic("10,-1,7,2").is_err());
    }

    #[test]
    fn command_line_shape() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
