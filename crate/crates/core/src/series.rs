use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Marginal scale of a series as it moves through the estimation pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleTag {
    /// Raw data, whatever marginal it arrived with.
    Original,
    /// Transformed to tail index 2 with unit tail scale.
    Frechet2Unit,
    /// Mean-subtracted and clamped at zero, ready for TPDF estimation.
    Preprocessed,
}

/// An ordered nonnegative time series tagged with its marginal scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Series {
    pub values: Vec<f64>,
    pub scale: ScaleTag,
    pub metadata: Option<String>,
}

impl Series {
    pub fn new(values: Vec<f64>, scale: ScaleTag) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Argument("series must have length >= 1".into()));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Domain(format!("non-finite value at index {i}")));
            }
            if v < 0.0 && scale != ScaleTag::Original {
                return Err(Error::Domain(format!(
                    "negative value {v} at index {i} on scale {scale:?}"
                )));
            }
        }
        Ok(Series { values, scale, metadata: None })
    }

    pub fn with_metadata(mut self, meta: impl Into<String>) -> Self {
        self.metadata = Some(meta.into());
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty() {
        assert!(Series::new(vec![], ScaleTag::Original).is_err());
    }

    #[test]
    fn rejects_negative_on_frechet_scale() {
        assert!(Series::new(vec![1.0, -0.5], ScaleTag::Frechet2Unit).is_err());
        assert!(Series::new(vec![1.0, -0.5], ScaleTag::Original).is_ok());
    }

    #[test]
    fn rejects_nan() {
        assert!(Series::new(vec![f64::NAN], ScaleTag::Original).is_err());
    }
}
