//! Price ingestion, return and moment estimation, and seeded synthetic universes.

use std::io::Read;
use std::path::Path;

use chrono::{Days, NaiveDate};
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Result;
use crate::model::PortfolioProblem;
use crate::scalar::Scalar;

const MIN_PRICE_ROWS: usize = 3;

/// Log-volatility range of the sector factors.
const SECTOR_VOL: (f64, f64) = (0.2, 0.4);
/// Idiosyncratic log-volatility: base, slope in drift, uniform jitter.
const IDIO_VOL: (f64, f64, f64) = (0.4, 0.3, 0.1);

/// Errors raised while reading or validating price data. Line numbers count
/// the header as line 1.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed CSV: {0}")]
    Malformed(String),
    #[error("line {line}: non-ascending dates ({prev} then {date})")]
    NonAscendingDates { line: usize, prev: String, date: String },
    #[error("line {line}, column {column}: invalid date {value:?}")]
    BadDate { line: usize, column: String, value: String },
    #[error("line {line}, column {column}: missing price")]
    MissingPrice { line: usize, column: String },
    #[error("line {line}, column {column}: nonpositive or unparseable price {value:?}")]
    BadPrice { line: usize, column: String, value: String },
    #[error("need at least {MIN_PRICE_ROWS} price rows, got {0}")]
    TooFewRows(usize),
    #[error("invalid synthetic configuration: {0}")]
    BadSynthetic(String),
}

/// Validated price history: ascending dates, strictly positive prices.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    pub dates: Vec<NaiveDate>,
    pub asset_ids: Vec<String>,
    /// Rows are periods, columns assets.
    pub prices: Array2<f64>,
}

impl PriceTable {
    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }
    pub fn n_periods(&self) -> usize {
        self.dates.len()
    }
}

pub fn load_prices_csv(path: impl AsRef<Path>) -> Result<PriceTable, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| DataError::Io { path: path.display().to_string(), message: e.to_string() })?;
    read_prices_csv(file)
}

/// Reads `date,<asset_id>,...` with one row per period.
pub fn read_prices_csv(reader: impl Read) -> Result<PriceTable, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| DataError::Malformed(e.to_string()))?.clone();
    if header.len() < 2 {
        return Err(DataError::Malformed("header needs a date column and at least one asset".into()));
    }
    if !header[0].eq_ignore_ascii_case("date") {
        return Err(DataError::Malformed(format!("first column must be `date`, got {:?}", &header[0])));
    }
    let asset_ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let n = asset_ids.len();

    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut flat = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| DataError::Malformed(format!("line {line}: {e}")))?;
        if record.len() != n + 1 {
            return Err(DataError::Malformed(format!("line {line}: expected {} fields, got {}", n + 1, record.len())));
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|_| DataError::BadDate {
            line,
            column: header[0].to_owned(),
            value: record[0].to_owned(),
        })?;
        if let Some(prev) = dates.last() {
            if date <= *prev {
                return Err(DataError::NonAscendingDates { line, prev: prev.to_string(), date: date.to_string() });
            }
        }
        for (j, field) in record.iter().skip(1).enumerate() {
            let column = asset_ids[j].clone();
            if field.is_empty() {
                return Err(DataError::MissingPrice { line, column });
            }
            match field.parse::<f64>() {
                Ok(p) if p.is_finite() && p > 0.0 => flat.push(p),
                _ => return Err(DataError::BadPrice { line, column, value: field.to_owned() }),
            }
        }
        dates.push(date);
    }
    if dates.len() < MIN_PRICE_ROWS {
        return Err(DataError::TooFewRows(dates.len()));
    }
    let prices = Array2::from_shape_vec((dates.len(), n), flat).expect("row lengths checked");
    Ok(PriceTable { dates, asset_ids, prices })
}

/// Settings for [`generate_synthetic`], echoed into output metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub periods: usize,
    pub seed: u64,
    pub sectors: usize,
}

/// Per-period simple returns and their sample moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsDataset {
    pub asset_ids: Vec<String>,
    /// `T x n`, rows are periods.
    pub returns: Array2<f64>,
    pub mu_hat: Array1<f64>,
    /// Unbiased (`1/(T-1)`) sample covariance.
    pub cov_hat: Array2<f64>,
}

impl ReturnsDataset {
    pub fn from_returns(asset_ids: Vec<String>, returns: Array2<f64>) -> Result<Self, DataError> {
        if returns.nrows() < 2 {
            return Err(DataError::TooFewRows(returns.nrows() + 1));
        }
        if asset_ids.len() != returns.ncols() {
            return Err(DataError::Malformed(format!(
                "{} asset ids for {} return columns",
                asset_ids.len(),
                returns.ncols()
            )));
        }
        let (mu_hat, cov_hat) = sample_moments(&returns);
        Ok(Self { asset_ids, returns, mu_hat, cov_hat })
    }

    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    pub fn n_periods(&self) -> usize {
        self.returns.nrows()
    }

    /// Price path starting at `start` on every asset that reproduces `returns`.
    pub fn implied_prices(&self, start: f64) -> PriceTable {
        let (t, n) = self.returns.dim();
        let mut prices = Array2::zeros((t + 1, n));
        prices.row_mut(0).fill(start);
        for i in 0..t {
            for j in 0..n {
                prices[[i + 1, j]] = prices[[i, j]] * (1.0 + self.returns[[i, j]]);
            }
        }
        let day0 = NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date");
        let dates = (0..=t as u64).map(|d| day0 + Days::new(d)).collect();
        PriceTable { dates, asset_ids: self.asset_ids.clone(), prices }
    }

    /// Builds the optimization problem on the estimated moments.
    pub fn problem<T: Scalar>(&self, beta1: T, beta2: T, r_min: T) -> crate::Result<PortfolioProblem<T>> {
        PortfolioProblem::new(self.mu_hat.mapv(T::lit), self.cov_hat.mapv(T::lit), beta1, beta2, r_min)
    }
}

fn sample_moments(returns: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let t = returns.nrows() as f64;
    let mu = returns.mean_axis(Axis(0)).expect("at least one row");
    let centered = returns - &mu;
    let mut cov = centered.t().dot(&centered) / (t - 1.0);
    // exact symmetry regardless of the matmul kernel's summation order
    let n = cov.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = cov[[i, j]];
            cov[[j, i]] = v;
        }
    }
    (mu, cov)
}

/// Simple returns `p_t / p_{t-1} - 1`, one row fewer than the prices.
pub fn compute_returns(prices: &PriceTable) -> Result<ReturnsDataset, DataError> {
    let p = &prices.prices;
    if p.nrows() < MIN_PRICE_ROWS {
        return Err(DataError::TooFewRows(p.nrows()));
    }
    let t = p.nrows() - 1;
    let returns = Array2::from_shape_fn((t, p.ncols()), |(i, j)| p[[i + 1, j]] / p[[i, j]] - 1.0);
    ReturnsDataset::from_returns(prices.asset_ids.clone(), returns)
}

/// Seeded sector factor model with log-normal gross returns.
///
/// Asset `i` in sector `s` has log gross return
/// `m_i + load_i f_{s,t} + vol_i eps_{i,t}` with standard normal `f` and
/// `eps`, and simple return `exp(.) - 1`, so prices stay positive. `m_i` is
/// set so the expected simple return equals a drift spread over
/// `[-0.05, 0.85]`; idiosyncratic volatility rises with drift, so higher mean
/// comes with higher variance.
pub fn generate_synthetic(spec: SyntheticSpec) -> Result<ReturnsDataset, DataError> {
    let SyntheticSpec { n, periods, seed, sectors } = spec;
    if n == 0 || periods < 2 || sectors == 0 {
        return Err(DataError::BadSynthetic(format!(
            "need n >= 1, T >= 2, sectors >= 1; got n={n}, T={periods}, sectors={sectors}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sector_vol: Vec<f64> = (0..sectors).map(|_| rng.random_range(SECTOR_VOL.0..SECTOR_VOL.1)).collect();
    let sector_of: Vec<usize> = (0..n).map(|i| i * sectors / n).collect();
    let drift: Vec<f64> = (0..n).map(|_| rng.random_range(-0.05..0.85)).collect();
    let load: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let vol: Vec<f64> =
        drift.iter().map(|d| IDIO_VOL.0 + IDIO_VOL.1 * (d + 0.05) / 0.9 + rng.random_range(0.0..IDIO_VOL.2)).collect();
    let log_mean: Vec<f64> = (0..n)
        .map(|i| {
            let total_var = (load[i] * sector_vol[sector_of[i]]).powi(2) + vol[i].powi(2);
            (1.0 + drift[i]).ln() - 0.5 * total_var
        })
        .collect();

    let mut returns = Array2::zeros((periods, n));
    for t in 0..periods {
        let factors: Vec<f64> = (0..sectors).map(|s| sector_vol[s] * rng.sample::<f64, _>(StandardNormal)).collect();
        for i in 0..n {
            let eps: f64 = StandardNormal.sample(&mut rng);
            let g = log_mean[i] + load[i] * factors[sector_of[i]] + vol[i] * eps;
            returns[[t, i]] = g.exp() - 1.0;
        }
    }
    let width = (n.max(2) - 1).to_string().len();
    let ids = (0..n).map(|i| format!("S{:02}A{:0width$}", sector_of[i], i)).collect();
    ReturnsDataset::from_returns(ids, returns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    const SMALL: &str = "date,AAA,BBB\n2019-01-01,100,50\n2019-01-02,110,50\n2019-01-03,121,55\n";

    #[test]
    fn parses_small_table() {
        let t = read_prices_csv(SMALL.as_bytes()).unwrap();
        assert_eq!(t.n_periods(), 3);
        assert_eq!(t.n_assets(), 2);
        assert_eq!(t.asset_ids, vec!["AAA", "BBB"]);
        assert_eq!(t.prices, array![[100.0, 50.0], [110.0, 50.0], [121.0, 55.0]]);
    }

    #[test]
    fn rejects_zero_price_with_location() {
        let csv = "date,AAA,BBB\n2019-01-01,100,50\n2019-01-02,110,0\n2019-01-03,121,55\n";
        let err = read_prices_csv(csv.as_bytes()).unwrap_err();
        assert_eq!(err, DataError::BadPrice { line: 3, column: "BBB".into(), value: "0".into() });
        assert!(err.to_string().contains("line 3, column BBB"));
    }

    #[test]
    fn rejects_duplicate_dates() {
        let csv = "date,AAA\n2019-01-01,100\n2019-01-01,110\n2019-01-03,121\n";
        let err = read_prices_csv(csv.as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::NonAscendingDates { line: 3, .. }));
        assert!(err.to_string().contains("non-ascending dates"));
    }

    #[test]
    fn rejects_missing_short_and_malformed() {
        let csv = "date,AAA\n2019-01-01,100\n2019-01-02,\n2019-01-03,121\n";
        assert!(matches!(read_prices_csv(csv.as_bytes()), Err(DataError::MissingPrice { line: 3, .. })));
        let csv = "date,AAA\n2019-01-01,100\n2019-01-02,101\n";
        assert_eq!(read_prices_csv(csv.as_bytes()).unwrap_err(), DataError::TooFewRows(2));
        let csv = "date,AAA\n2019-01-01,100,7\n";
        assert!(matches!(read_prices_csv(csv.as_bytes()), Err(DataError::Malformed(_))));
        let csv = "date,AAA\n01/02/2019,100\n";
        assert!(matches!(read_prices_csv(csv.as_bytes()), Err(DataError::BadDate { .. })));
        let csv = "day,AAA\n2019-01-01,100\n";
        assert!(matches!(read_prices_csv(csv.as_bytes()), Err(DataError::Malformed(_))));
        let csv = "date,AAA\n2019-01-01,abc\n";
        assert!(matches!(read_prices_csv(csv.as_bytes()), Err(DataError::BadPrice { .. })));
    }

    #[test]
    fn missing_file_names_path() {
        let err = load_prices_csv("/nonexistent/prices.csv").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/prices.csv"));
    }

    #[test]
    fn returns_and_moments_of_small_table() {
        let t = read_prices_csv(SMALL.as_bytes()).unwrap();
        let d = compute_returns(&t).unwrap();
        assert_abs_diff_eq!(d.returns, array![[0.10, 0.00], [0.10, 0.10]], epsilon = 1e-12);
        assert_abs_diff_eq!(d.mu_hat, array![0.10, 0.05], epsilon = 1e-12);
        // hand computation: column 0 constant; column 1 deviations +-0.05, (0.0025 + 0.0025) / 1
        assert_abs_diff_eq!(d.cov_hat, array![[0.0, 0.0], [0.0, 0.005]], epsilon = 1e-12);
    }

    #[test]
    fn constant_price_gives_zero_variance() {
        let csv = "date,AAA,BBB\n2019-01-01,10,1\n2019-01-02,10,2\n2019-01-03,10,3\n2019-01-04,10,5\n";
        let d = compute_returns(&read_prices_csv(csv.as_bytes()).unwrap()).unwrap();
        assert!(d.returns.column(0).iter().all(|&r| r == 0.0));
        assert_eq!(d.cov_hat[[0, 0]], 0.0);
        assert_eq!(d.cov_hat[[0, 1]], 0.0);
        assert_eq!(d.cov_hat[[1, 0]], 0.0);
    }

    #[test]
    fn synthetic_is_deterministic_and_seed_sensitive() {
        let spec = SyntheticSpec { n: 100, periods: 120, seed: 42, sectors: 10 };
        let a = generate_synthetic(spec).unwrap();
        let b = generate_synthetic(spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_assets(), 100);
        assert_eq!(a.n_periods(), 120);
        let c = generate_synthetic(SyntheticSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a.returns, c.returns);
    }

    #[test]
    fn synthetic_single_asset() {
        let d = generate_synthetic(SyntheticSpec { n: 1, periods: 10, seed: 1, sectors: 1 }).unwrap();
        assert_eq!(d.cov_hat.dim(), (1, 1));
        assert!(d.cov_hat[[0, 0]] >= 0.0);
    }

    #[test]
    fn synthetic_rejects_degenerate_spec() {
        assert!(generate_synthetic(SyntheticSpec { n: 0, periods: 10, seed: 1, sectors: 1 }).is_err());
        assert!(generate_synthetic(SyntheticSpec { n: 3, periods: 1, seed: 1, sectors: 1 }).is_err());
        assert!(generate_synthetic(SyntheticSpec { n: 3, periods: 10, seed: 1, sectors: 0 }).is_err());
    }

    #[test]
    fn synthetic_means_span_target_range() {
        let d = generate_synthetic(SyntheticSpec { n: 100, periods: 120, seed: 42, sectors: 10 }).unwrap();
        let lo = d.mu_hat.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = d.mu_hat.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo < 0.1 && lo > -0.25, "lo = {lo}");
        assert!(hi > 0.6 && hi < 1.25, "hi = {hi}");
    }

    #[test]
    fn dataset_problem_conversion() {
        let d = generate_synthetic(SyntheticSpec { n: 5, periods: 30, seed: 3, sectors: 2 }).unwrap();
        let p = d.problem::<f64>(0.5, 1.0, 0.1).unwrap();
        assert_eq!(p.n(), 5);
        let p32 = d.problem::<f32>(0.5, 1.0, 0.1).unwrap();
        assert_eq!(p32.n(), 5);
    }
}
