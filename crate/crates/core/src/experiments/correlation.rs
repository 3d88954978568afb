//! Two-asset correlation pipeline: price data, rolling correlations and the
//! SO(2) correlation flow `R_t` built from `P_t = Q_t^T P_0 Q_t`.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrators::{csv_io, step_count, terminal_state, Scheme, SchemeConfig};
use crate::lie::Parametrization;
use crate::matops::SquareMatrix;
use crate::model::{make_so2_corr_model, LieSdeModel};
use crate::noise::{path_increments, NormalStream};

/// Off-diagonal entry of the default initial correlation matrix.
pub const DEFAULT_INITIAL_CORRELATION: f64 = -0.0159;
pub const DEFAULT_WINDOW: usize = 30;
const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub dates: Vec<NaiveDate>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Deserialize)]
struct PriceRecord {
    date: String,
    price_a: f64,
    price_b: f64,
}

impl PriceSeries {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Parses `date,price_a,price_b` with ISO dates and strictly positive prices.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let header = rdr.headers().map_err(csv_io)?.clone();
        if header.iter().collect::<Vec<_>>() != ["date", "price_a", "price_b"] {
            return Err(Error::MalformedCsv(format!(
                "expected header date,price_a,price_b, found {}",
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut out = PriceSeries {
            dates: Vec::new(),
            a: Vec::new(),
            b: Vec::new(),
        };
        for (i, rec) in rdr.deserialize::<PriceRecord>().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::MalformedCsv(format!("line {line}: {e}")))?;
            let date = NaiveDate::parse_from_str(&rec.date, DATE_FORMAT)
                .map_err(|e| Error::MalformedCsv(format!("line {line}: bad date `{}`: {e}", rec.date)))?;
            for p in [rec.price_a, rec.price_b] {
                if !(p > 0.0 && p.is_finite()) {
                    return Err(Error::MalformedCsv(format!("line {line}: price {p} is not positive")));
                }
            }
            out.dates.push(date);
            out.a.push(rec.price_a);
            out.b.push(rec.price_b);
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["date", "price_a", "price_b"]).map_err(csv_io)?;
        for i in 0..self.len() {
            out.write_record([
                self.dates[i].format(DATE_FORMAT).to_string(),
                self.a[i].to_string(),
                self.b[i].to_string(),
            ])
            .map_err(csv_io)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn load_prices_csv(path: impl AsRef<Path>) -> Result<PriceSeries> {
    PriceSeries::read_csv(std::fs::File::open(path)?)
}

pub fn log_returns(prices: &[f64]) -> Vec<f64> {
    prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect()
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation of daily log-returns over each trailing window of
/// `window` returns. Windows where either series is constant give `None`.
pub fn rolling_correlation(a: &[f64], b: &[f64], window: usize) -> Result<Vec<Option<f64>>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if window < 2 {
        return Err(Error::InvalidConfig(format!("window must be at least 2, got {window}")));
    }
    if a.len() < window + 1 {
        return Err(Error::InsufficientPoints {
            needed: window + 1,
            got: a.len(),
        });
    }
    if a.iter().chain(b).any(|p| !(*p > 0.0 && p.is_finite())) {
        return Err(Error::DomainError("prices must be positive and finite".into()));
    }
    let ra = log_returns(a);
    let rb = log_returns(b);
    Ok(ra
        .windows(window)
        .zip(rb.windows(window))
        .map(|(x, y)| pearson(x, y))
        .collect())
}

/// Writes `index,correlation` with `NaN` for degenerate windows.
pub fn write_correlation_csv<W: Write>(w: W, series: &[Option<f64>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["index", "correlation"]).map_err(csv_io)?;
    for (i, r) in series.iter().enumerate() {
        let v = r.map_or_else(|| "NaN".to_string(), |x| format!("{x:.12}"));
        out.write_record([i.to_string(), v]).map_err(csv_io)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct GbmPairConfig {
    pub n_days: usize,
    pub correlation: f64,
    pub drift: [f64; 2],
    pub volatility: [f64; 2],
    pub initial: [f64; 2],
    pub start: NaiveDate,
    pub seed: u64,
}

impl Default for GbmPairConfig {
    fn default() -> Self {
        Self {
            n_days: 300,
            correlation: 0.0,
            drift: [0.05, 0.05],
            volatility: [0.2, 0.3],
            initial: [100.0, 50.0],
            start: NaiveDate::from_ymd_opt(2005, 1, 3).expect("valid date"),
            seed: 0,
        }
    }
}

fn next_weekday(d: NaiveDate) -> NaiveDate {
    let mut next = d + Days::new(1);
    while matches!(next.weekday(), Weekday::Sat | Weekday::Sun) {
        next = next + Days::new(1);
    }
    next
}

/// Two correlated geometric Brownian motions sampled on weekdays with a
/// daily step of 1/252 year.
pub fn synthetic_gbm_pair(cfg: &GbmPairConfig) -> Result<PriceSeries> {
    if !(-1.0..=1.0).contains(&cfg.correlation) {
        return Err(Error::InvalidConfig(format!(
            "correlation {} outside [-1, 1]",
            cfg.correlation
        )));
    }
    if cfg.n_days < 2 || cfg.initial.iter().any(|p| p.is_nan() || *p <= 0.0) || cfg.volatility.iter().any(|s| *s < 0.0)
    {
        return Err(Error::InvalidConfig(
            "GBM pair needs two days, positive initial prices and nonnegative volatilities".into(),
        ));
    }
    let dt = 1.0 / 252.0;
    let mut stream = NormalStream::new(cfg.seed, 0);
    let rho = cfg.correlation;
    let ortho = (1.0 - rho * rho).sqrt();
    let mut out = PriceSeries {
        dates: vec![cfg.start],
        a: vec![cfg.initial[0]],
        b: vec![cfg.initial[1]],
    };
    let (mut la, mut lb) = (cfg.initial[0].ln(), cfg.initial[1].ln());
    for _ in 1..cfg.n_days {
        let z1 = stream.next_normal();
        let z2 = rho * z1 + ortho * stream.next_normal();
        let [s1, s2] = cfg.volatility;
        la += (cfg.drift[0] - 0.5 * s1 * s1) * dt + s1 * dt.sqrt() * z1;
        lb += (cfg.drift[1] - 0.5 * s2 * s2) * dt + s2 * dt.sqrt() * z2;
        let last = *out.dates.last().expect("nonempty");
        out.dates.push(next_weekday(last));
        out.a.push(la.exp());
        out.b.push(lb.exp());
    }
    Ok(out)
}

/// `[[1, rho], [rho, 1]]`.
pub fn correlation_matrix(rho: f64) -> Result<SquareMatrix> {
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::InvalidConfig(format!("correlation {rho} outside (-1, 1)")));
    }
    Ok(SquareMatrix::from_rows([[1.0, rho], [rho, 1.0]]))
}

/// Normalizes a 2x2 covariance to a correlation matrix with an exact unit
/// diagonal and off-diagonal clamped to `[-1, 1]`.
pub fn covariance_to_correlation(p: &SquareMatrix) -> Result<SquareMatrix> {
    if p.dim() != 2 {
        return Err(Error::DimensionMismatch {
            left: p.dim(),
            right: 2,
        });
    }
    let (p11, p22) = (p[(0, 0)], p[(1, 1)]);
    if !(p11 > 0.0 && p22 > 0.0) {
        return Err(Error::DomainError(format!(
            "covariance diagonal ({p11}, {p22}) is not positive"
        )));
    }
    let r = (0.5 * (p[(0, 1)] + p[(1, 0)]) / (p11 * p22).sqrt()).clamp(-1.0, 1.0);
    Ok(SquareMatrix::from_rows([[1.0, r], [r, 1.0]]))
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrelationFlowConfig {
    pub scheme: SchemeConfig,
    pub t_end: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// `P_0 = diag(1, sqrt r) R_0 diag(1, sqrt r)`; one means `P_0 = R_0`.
    pub variance_ratio: f64,
}

impl Default for CorrelationFlowConfig {
    fn default() -> Self {
        Self {
            scheme: SchemeConfig::new(Scheme::Gsrk15, Parametrization::Exponential { q: 1 }),
            t_end: 1.0,
            dt: 1.0 / 64.0,
            n_paths: 2000,
            seed: 0,
            variance_ratio: 1.0,
        }
    }
}

fn initial_covariance(r0: &SquareMatrix, ratio: f64) -> Result<SquareMatrix> {
    if r0.dim() != 2 {
        return Err(Error::DimensionMismatch {
            left: r0.dim(),
            right: 2,
        });
    }
    if (r0[(0, 1)] - r0[(1, 0)]).abs() > 1e-12 || r0[(0, 0)] != 1.0 || r0[(1, 1)] != 1.0 {
        return Err(Error::InvalidConfig(
            "initial matrix is not a correlation matrix".into(),
        ));
    }
    correlation_matrix(r0[(0, 1)])?;
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::InvalidConfig(format!("variance ratio {ratio} must be positive")));
    }
    let s = ratio.sqrt();
    let scale = SquareMatrix::from_diagonal(&[1.0, s]);
    Ok(&(&scale * r0) * &scale)
}

/// Terminal correlation matrices `R_T` over `n_paths` independent paths.
pub fn correlation_flow_matrices(
    model: &LieSdeModel,
    r0: &SquareMatrix,
    cfg: &CorrelationFlowConfig,
) -> Result<Vec<SquareMatrix>> {
    if model.dim != 2 {
        return Err(Error::DimensionMismatch {
            left: model.dim,
            right: 2,
        });
    }
    let p0 = initial_covariance(r0, cfg.variance_ratio)?;
    let n = step_count(cfg.t_end, cfg.dt)?;
    cfg.scheme.validate()?;
    (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|path| {
            let row = path_increments(cfg.seed, path, cfg.dt, n);
            let q = terminal_state(model, &cfg.scheme, cfg.dt, &row)?;
            let p = &(&q.transpose() * &p0) * &q;
            covariance_to_correlation(&p)
        })
        .collect()
}

/// Terminal off-diagonal correlations of the flow.
pub fn correlation_flow(model: &LieSdeModel, r0: &SquareMatrix, cfg: &CorrelationFlowConfig) -> Result<Vec<f64>> {
    Ok(correlation_flow_matrices(model, r0, cfg)?
        .iter()
        .map(|r| r[(0, 1)])
        .collect())
}

/// Flow samples for the SO(2) model with noise amplitude `c`.
pub fn so2_flow_samples(c: f64, r0: &SquareMatrix, cfg: &CorrelationFlowConfig) -> Result<Vec<f64>> {
    correlation_flow(&make_so2_corr_model(c), r0, cfg)
}
