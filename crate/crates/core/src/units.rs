//! Reported quantities to wood-fiber equivalent, and WFE volumes to carbon mass.

use std::collections::BTreeMap;

use thiserror::Error;

/// Carbon density applied when a product has no specific value, in tC per m³ WFE.
pub const DEFAULT_CARBON_DENSITY: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UnitsError {
    #[error("unknown product {0:?}")]
    UnknownProduct(String),
    #[error("negative quantity {0}")]
    NegativeQuantity(f64),
    #[error("coefficient for {product:?} must be finite and > 0, got {value}")]
    InvalidCoefficient { product: String, value: f64 },
}

/// Product → WFE coefficients and product → carbon densities.
#[derive(Debug, Clone, PartialEq)]
pub struct ConversionTable {
    wfe: BTreeMap<String, f64>,
    carbon_density: BTreeMap<String, f64>,
    default_carbon_density: f64,
}

impl Default for ConversionTable {
    fn default() -> Self {
        ConversionTable {
            wfe: BTreeMap::new(),
            carbon_density: BTreeMap::new(),
            default_carbon_density: DEFAULT_CARBON_DENSITY,
        }
    }
}

fn check_positive(product: &str, value: f64) -> Result<f64, UnitsError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(UnitsError::InvalidCoefficient {
            product: product.to_string(),
            value,
        })
    }
}

fn check_quantity(q: f64) -> Result<f64, UnitsError> {
    if q < 0.0 || q.is_nan() {
        Err(UnitsError::NegativeQuantity(q))
    } else {
        Ok(q)
    }
}

impl ConversionTable {
    pub fn new(default_carbon_density: f64) -> Result<Self, UnitsError> {
        Ok(ConversionTable {
            default_carbon_density: check_positive("__default__", default_carbon_density)?,
            ..Default::default()
        })
    }

    pub fn with_wfe(mut self, product: impl Into<String>, coefficient: f64) -> Result<Self, UnitsError> {
        let product = product.into();
        check_positive(&product, coefficient)?;
        self.wfe.insert(product, coefficient);
        Ok(self)
    }

    pub fn with_carbon_density(mut self, product: impl Into<String>, density: f64) -> Result<Self, UnitsError> {
        let product = product.into();
        check_positive(&product, density)?;
        self.carbon_density.insert(product, density);
        Ok(self)
    }

    pub fn default_carbon_density(&self) -> f64 {
        self.default_carbon_density
    }

    pub fn wfe_coefficient(&self, product: &str) -> Option<f64> {
        self.wfe.get(product).copied()
    }

    pub fn wfe_coefficients(&self) -> &BTreeMap<String, f64> {
        &self.wfe
    }

    pub fn carbon_densities(&self) -> &BTreeMap<String, f64> {
        &self.carbon_density
    }

    /// tC per m³ WFE for `product`, falling back to the default.
    pub fn carbon_density(&self, product: &str) -> f64 {
        self.carbon_density
            .get(product)
            .copied()
            .unwrap_or(self.default_carbon_density)
    }

    /// Reported quantity → m³ WFE.
    pub fn to_wfe(&self, quantity: f64, product: &str) -> Result<f64, UnitsError> {
        let coefficient = self
            .wfe
            .get(product)
            .ok_or_else(|| UnitsError::UnknownProduct(product.to_string()))?;
        Ok(check_quantity(quantity)? * coefficient)
    }

    /// m³ WFE → tonnes of carbon.
    pub fn to_carbon(&self, volume: f64, product: &str) -> Result<f64, UnitsError> {
        Ok(check_quantity(volume)? * self.carbon_density(product))
    }
}
