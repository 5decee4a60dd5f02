//! Index forecasting behind a pluggable predictor. The baseline is an exact
//! ordinary-least-squares linear trend.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Signed, Zero};

use crate::ids::Tick;
use crate::indices::{AlertRegion, AlertSide};
use crate::rational::{to_big, Rational};

use super::HealthError;

/// A fitted model that can be evaluated at any tick.
pub trait TrendModel {
    fn value_at(&self, tick: Tick) -> BigRational;
    /// Direction of travel; negative means declining.
    fn slope(&self) -> BigRational;
}

pub trait Predictor {
    fn fit(&self, series: &[(Tick, Rational)]) -> Result<Box<dyn TrendModel>, HealthError>;
}

/// `value = intercept + slope × tick`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearTrend {
    pub slope: BigRational,
    pub intercept: BigRational,
}

impl TrendModel for LinearTrend {
    fn value_at(&self, tick: Tick) -> BigRational {
        &self.intercept + &self.slope * BigRational::from_integer(BigInt::from(tick))
    }

    fn slope(&self) -> BigRational {
        self.slope.clone()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OlsPredictor;

impl OlsPredictor {
    pub fn fit_linear(series: &[(Tick, Rational)]) -> Result<LinearTrend, HealthError> {
        if series.len() < 2 {
            return Err(HealthError::InsufficientHistory);
        }
        let n = BigRational::from_integer(BigInt::from(series.len()));
        let xs: Vec<BigRational> = series.iter().map(|(t, _)| BigRational::from_integer(BigInt::from(*t))).collect();
        let ys: Vec<BigRational> = series.iter().map(|(_, v)| to_big(v)).collect();
        let mean_x = xs.iter().fold(BigRational::zero(), |a, x| a + x) / &n;
        let mean_y = ys.iter().fold(BigRational::zero(), |a, y| a + y) / &n;
        let mut sxy = BigRational::zero();
        let mut sxx = BigRational::zero();
        for (x, y) in xs.iter().zip(&ys) {
            let dx = x - &mean_x;
            sxy += &dx * (y - &mean_y);
            sxx += &dx * &dx;
        }
        if sxx.is_zero() {
            return Err(HealthError::InsufficientHistory);
        }
        let slope = sxy / sxx;
        let intercept = mean_y - &slope * mean_x;
        Ok(LinearTrend { slope, intercept })
    }
}

impl Predictor for OlsPredictor {
    fn fit(&self, series: &[(Tick, Rational)]) -> Result<Box<dyn TrendModel>, HealthError> {
        Ok(Box::new(Self::fit_linear(series)?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Forecast {
    /// `(tick, value)` for `last_tick + 1 ..= last_tick + horizon`.
    pub predicted: Vec<(Tick, BigRational)>,
    /// First predicted tick inside the alert region.
    pub crossing: Option<Tick>,
    pub slope: BigRational,
}

pub fn region_contains(region: &AlertRegion, v: &BigRational) -> bool {
    let bound = to_big(&region.bound);
    match region.side {
        AlertSide::AtOrAbove => *v >= bound,
        AlertSide::AtOrBelow => *v <= bound,
        AlertSide::Below => *v < bound,
    }
}

/// Extrapolate `horizon` ticks past the last observation and report the first step in
/// `region`, if any.
pub fn forecast_index(
    predictor: &dyn Predictor,
    series: &[(Tick, Rational)],
    horizon: u64,
    region: Option<&AlertRegion>,
) -> Result<Forecast, HealthError> {
    let model = predictor.fit(series)?;
    let last = series.iter().map(|(t, _)| *t).max().unwrap_or(0);
    let predicted: Vec<(Tick, BigRational)> = (1..=horizon).map(|k| (last + k, model.value_at(last + k))).collect();
    let crossing = region.and_then(|r| predicted.iter().find(|(_, v)| region_contains(r, v)).map(|(t, _)| *t));
    Ok(Forecast { predicted, crossing, slope: model.slope() })
}

pub fn is_declining(slope: &BigRational) -> bool {
    slope.is_negative()
}
