use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Scattering/absorption coefficients, isotropic source and Knudsen number.
#[derive(Clone)]
pub struct MaterialCoefficients {
    sigma_s: ScalarFn,
    sigma_a: ScalarFn,
    source: ScalarFn,
    epsilon: f64,
    sigma_m: Option<f64>,
}

impl fmt::Debug for MaterialCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MaterialCoefficients")
            .field("epsilon", &self.epsilon)
            .field("sigma_m", &self.sigma_m)
            .finish_non_exhaustive()
    }
}

impl MaterialCoefficients {
    pub fn new(
        sigma_s: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sigma_a: impl Fn(f64) -> f64 + Send + Sync + 'static,
        epsilon: f64,
    ) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(MaterialCoefficients {
            sigma_s: Arc::new(sigma_s),
            sigma_a: Arc::new(sigma_a),
            source: Arc::new(|_| 0.0),
            epsilon,
            sigma_m: None,
        })
    }

    /// Spatially constant coefficients.
    pub fn constant(sigma_s: f64, sigma_a: f64, epsilon: f64) -> Result<Self> {
        if sigma_s < 0.0 || sigma_a < 0.0 {
            return Err(Error::InvalidParameter("coefficients must be non-negative".into()));
        }
        Self::new(move |_| sigma_s, move |_| sigma_a, epsilon)
    }

    pub fn with_source(mut self, source: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.source = Arc::new(source);
        self
    }

    /// Declares a lower bound for `σ_s`; otherwise the minimum over quadrature
    /// samples is used.
    pub fn with_sigma_m(mut self, sigma_m: f64) -> Self {
        self.sigma_m = Some(sigma_m);
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn declared_sigma_m(&self) -> Option<f64> {
        self.sigma_m
    }

    #[inline]
    pub fn sigma_s(&self, x: f64) -> f64 {
        (self.sigma_s)(x)
    }

    #[inline]
    pub fn sigma_a(&self, x: f64) -> f64 {
        (self.sigma_a)(x)
    }

    #[inline]
    pub fn source(&self, x: f64) -> f64 {
        (self.source)(x)
    }

    /// Checks non-negativity at the given sample points and returns `σ_m`
    /// (declared, or the sampled minimum).
    pub fn validate_on(&self, samples: impl IntoIterator<Item = f64>) -> Result<f64> {
        let mut min_s = f64::INFINITY;
        for x in samples {
            let (s, a) = (self.sigma_s(x), self.sigma_a(x));
            if !(s >= 0.0) || !(a >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "negative or NaN coefficient at x = {x}: sigma_s = {s}, sigma_a = {a}"
                )));
            }
            min_s = min_s.min(s);
        }
        match self.sigma_m {
            Some(m) if m > min_s + 1e-14 * min_s.abs() => Err(Error::InvalidParameter(format!(
                "declared sigma_m = {m} exceeds sampled minimum {min_s}"
            ))),
            Some(m) => Ok(m),
            None => Ok(min_s),
        }
    }
}
