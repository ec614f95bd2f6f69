//! Annual index/dividend/CPI records, inflation-adjusted total returns and
//! the Normal model fitted to them.
//!
//! Returns are gross factors: a value of `1.05` is a 5% real gain over the
//! year. The fitted model is deliberately *not* truncated at zero; under the
//! default fit the mass below zero is about `3e-10`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::Read;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean of the gross annual real return fitted to the 1871–2020 S&P Composite series.
pub const DEFAULT_MU: f64 = 1.083;
/// Standard deviation matching [`DEFAULT_MU`].
pub const DEFAULT_SIGMA: f64 = 0.1753;

/// One calendar year of the price series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceRecord {
    pub year: i32,
    /// Average monthly close of the index.
    #[serde(rename = "index")]
    pub index_level: f64,
    /// Dividend per share paid over the year.
    pub dividend: f64,
    /// January consumer price index.
    pub cpi: f64,
}

impl PriceRecord {
    fn validate(&self) -> Result<()> {
        if !(self.index_level > 0.0 && self.index_level.is_finite()) {
            return Err(Error::Format(format!(
                "year {}: index level must be positive, got {}",
                self.year, self.index_level
            )));
        }
        if !(self.cpi > 0.0 && self.cpi.is_finite()) {
            return Err(Error::Format(format!(
                "year {}: cpi must be positive, got {}",
                self.year, self.cpi
            )));
        }
        if !(self.dividend >= 0.0 && self.dividend.is_finite()) {
            return Err(Error::Format(format!(
                "year {}: dividend must be non-negative, got {}",
                self.year, self.dividend
            )));
        }
        Ok(())
    }
}

/// Parse a `year,index,dividend,cpi` CSV.
pub fn parse_price_csv<R: Read>(reader: R) -> Result<Vec<PriceRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    for required in ["year", "index", "dividend", "cpi"] {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::Format(format!("missing column `{required}`")));
        }
    }
    let mut records = Vec::new();
    for row in rdr.deserialize() {
        let record: PriceRecord = row?;
        record.validate()?;
        records.push(record);
    }
    Ok(records)
}

/// Environment variable naming the directory that holds the price series.
pub const DATA_DIR_ENV: &str = "WSOPT_DATA_DIR";
/// File name of the price series inside the data directory.
pub const PRICE_FILE: &str = "sp_composite_1871_2020.csv";

/// `$WSOPT_DATA_DIR/sp_composite_1871_2020.csv`, falling back to this
/// crate's `data/` directory.
pub fn default_price_path() -> PathBuf {
    let dir = std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("data"));
    dir.join(PRICE_FILE)
}

pub fn load_price_csv(path: impl AsRef<Path>) -> Result<Vec<PriceRecord>> {
    let file = std::fs::File::open(path)?;
    parse_price_csv(file)
}

/// Gross real return for each consecutive pair of years:
/// `((I[k+1] + D[k]) / I[k]) * (C[k] / C[k+1])`.
pub fn compute_real_returns(records: &[PriceRecord]) -> Result<Vec<f64>> {
    if records.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 yearly records, got {}",
            records.len()
        )));
    }
    for r in records {
        r.validate()?;
    }
    for pair in records.windows(2) {
        if pair[1].year != pair[0].year + 1 {
            return Err(Error::Format(format!(
                "years must be contiguous and increasing: {} followed by {}",
                pair[0].year, pair[1].year
            )));
        }
    }
    Ok(records
        .windows(2)
        .map(|p| {
            let (cur, next) = (&p[0], &p[1]);
            (next.index_level + cur.dividend) / cur.index_level * (cur.cpi / next.cpi)
        })
        .collect())
}

/// Normal model of the gross annual real return of the stock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnModel {
    pub mu: f64,
    pub sigma: f64,
}

impl Default for ReturnModel {
    fn default() -> Self {
        Self {
            mu: DEFAULT_MU,
            sigma: DEFAULT_SIGMA,
        }
    }
}

impl ReturnModel {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        let model = Self { mu, sigma };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::Validation(format!("mu must be positive, got {}", self.mu)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Validation(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    /// Density of the return at `x`.
    pub fn pdf(&self, x: f64) -> f64 {
        let t = (x - self.mu) / self.sigma;
        (-0.5 * t * t).exp() / (self.sigma * (2.0 * PI).sqrt())
    }

    /// `P(X <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        standard_normal_cdf((x - self.mu) / self.sigma)
    }

    /// `P(X > x)`, computed without cancellation in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        standard_normal_cdf(-(x - self.mu) / self.sigma)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.mu + self.sigma * z
    }
}

/// Standard normal cdf through the complementary error function, which keeps
/// full relative precision deep in the lower tail.
pub fn standard_normal_cdf(t: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    0.5 * libm::erfc(-t * FRAC_1_SQRT_2)
}

/// Result of fitting [`ReturnModel`] to a return sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: ReturnModel,
    pub n: usize,
    /// Mean of `ln(return)`; `None` when some return is not positive.
    pub log_mean: Option<f64>,
    pub log_sd: Option<f64>,
}

/// Mean and n−1 standard deviation.
pub fn sample_moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn fit_return_model(returns: &[f64]) -> Result<FitReport> {
    if returns.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 returns, got {}",
            returns.len()
        )));
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::Validation("returns must be finite".into()));
    }
    if returns.iter().all(|&r| r == returns[0]) {
        return Err(Error::Degenerate(
            "all returns are identical, standard deviation would be 0".into(),
        ));
    }
    let (mu, sigma) = sample_moments(returns);
    let model = ReturnModel::new(mu, sigma)?;
    let (log_mean, log_sd) = if returns.iter().all(|&r| r > 0.0) {
        let logs: Vec<f64> = returns.iter().map(|r| r.ln()).collect();
        let (m, s) = sample_moments(&logs);
        (Some(m), Some(s))
    } else {
        (None, None)
    };
    Ok(FitReport {
        model,
        n: returns.len(),
        log_mean,
        log_sd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rec(year: i32, index_level: f64, dividend: f64, cpi: f64) -> PriceRecord {
        PriceRecord {
            year,
            index_level,
            dividend,
            cpi,
        }
    }

    #[test]
    fn constant_series_has_unit_returns() {
        let records: Vec<_> = (1900..1910).map(|y| rec(y, 100.0, 0.0, 50.0)).collect();
        let returns = compute_real_returns(&records).unwrap();
        assert_eq!(returns.len(), 9);
        assert!(returns.iter().all(|&r| r == 1.0));
    }

    #[test]
    fn hand_computed_return() {
        let records = [rec(2000, 100.0, 2.0, 100.0), rec(2001, 105.0, 0.0, 102.0)];
        let returns = compute_real_returns(&records).unwrap();
        assert_relative_eq!(returns[0], 1.049_019_607_843_137_3, max_relative = 1e-14);
    }

    #[test]
    fn rejects_short_and_gappy_series() {
        assert!(matches!(
            compute_real_returns(&[rec(2000, 1.0, 0.0, 1.0)]),
            Err(Error::InsufficientData(_))
        ));
        let gap = [rec(2000, 1.0, 0.0, 1.0), rec(2002, 1.0, 0.0, 1.0)];
        assert!(matches!(compute_real_returns(&gap), Err(Error::Format(_))));
        let backwards = [rec(2001, 1.0, 0.0, 1.0), rec(2000, 1.0, 0.0, 1.0)];
        assert!(matches!(compute_real_returns(&backwards), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_invalid_records() {
        let bad = [rec(2000, 0.0, 0.0, 1.0), rec(2001, 1.0, 0.0, 1.0)];
        assert!(matches!(compute_real_returns(&bad), Err(Error::Format(_))));
        let bad = [rec(2000, 1.0, -0.1, 1.0), rec(2001, 1.0, 0.0, 1.0)];
        assert!(matches!(compute_real_returns(&bad), Err(Error::Format(_))));
    }

    #[test]
    fn fit_two_points() {
        let fit = fit_return_model(&[0.9, 1.1]).unwrap();
        assert_relative_eq!(fit.model.mu, 1.0, max_relative = 1e-15);
        assert_relative_eq!(fit.model.sigma, 0.141_421_356_237_309_5, max_relative = 1e-12);
        assert!(fit.log_mean.is_some());
    }

    #[test]
    fn fit_degenerate() {
        assert!(matches!(fit_return_model(&[1.0, 1.0]), Err(Error::Degenerate(_))));
        assert!(matches!(fit_return_model(&[1.0]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn cdf_reference_values() {
        let m = ReturnModel::default();
        assert_eq!(m.cdf(m.mu), 0.5);
        // 30-digit references.
        let cases = [
            (0.5, 0.000_440_940_775_104_401_785_624_797_830_124),
            (0.9, 0.148_260_114_591_548_225_262_115_045_349),
            (1.0, 0.317_937_507_216_540_440_105_460_290_932),
            (1.3, 0.892_119_335_377_571_224_425_060_289_438),
            (1.6, 0.998_407_165_460_072_414_177_841_703_938),
            (0.0, 3.246_334_418_806_944_720_669_413_946_68e-10),
            (-0.2, 1.250_227_488_459_046_579_524_040_844_92e-13),
        ];
        for (x, expected) in cases {
            assert!((m.cdf(x) - expected).abs() <= 1e-12, "x = {x}");
        }
        let upper = m.mu + 1.959_964 * m.sigma;
        assert!((m.cdf(upper) - 0.975_000_000_903_557_6).abs() < 1e-12);
        assert!((m.sf(2.0) - 8.428_292_659_620_181e-8).abs() < 1e-18);
        assert_eq!(m.cdf(f64::NEG_INFINITY), 0.0);
        assert_eq!(m.cdf(f64::INFINITY), 1.0);
    }

    #[test]
    fn pdf_peak_and_symmetry() {
        let m = ReturnModel::default();
        assert_relative_eq!(m.pdf(m.mu), 2.275_768_855_684_156_7, max_relative = 1e-14);
        for d in [0.01, 0.1, 0.3, 1.0] {
            assert_relative_eq!(m.pdf(m.mu + d), m.pdf(m.mu - d), max_relative = 1e-12);
        }
    }

    #[test]
    fn draws_are_reproducible_and_centred() {
        let m = ReturnModel::default();
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(m.draw(&mut a), m.draw(&mut b));

        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mean = (0..n).map(|_| m.draw(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - m.mu).abs() < 3.0 * m.sigma / (n as f64).sqrt());
    }

    #[test]
    fn csv_missing_column_is_format_error() {
        let text = "year,index,cpi\n2000,1,1\n";
        assert!(matches!(parse_price_csv(text.as_bytes()), Err(Error::Format(_))));
    }

    #[test]
    fn csv_roundtrip_to_returns() {
        let text = "year,index,dividend,cpi\n2000,100,2,100\n2001,105,2.1,102\n";
        let records = parse_price_csv(text.as_bytes()).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[1].dividend, 2.1);
        let r = compute_real_returns(&records).unwrap();
        assert_relative_eq!(r[0], 107.0 / 100.0 * 100.0 / 102.0, max_relative = 1e-15);
    }

    #[test]
    fn model_json_keeps_precision() {
        let m = ReturnModel::new(1.0831234567890123, 0.17534321).unwrap();
        let back = ReturnModel::from_json(&m.to_json()).unwrap();
        assert_eq!(m, back);
        assert!(ReturnModel::from_json(r#"{"mu": 1.0, "sigma": 0.0}"#).is_err());
    }
}
