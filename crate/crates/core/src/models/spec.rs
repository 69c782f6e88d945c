use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mlp,
    Fcn,
    Pct,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Mlp, ModelKind::Fcn, ModelKind::Pct];

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Mlp => "MLP",
            ModelKind::Fcn => "FCN",
            ModelKind::Pct => "PCT",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(ModelKind::Mlp),
            "fcn" => Ok(ModelKind::Fcn),
            "pct" => Ok(ModelKind::Pct),
            other => Err(Error::Config(format!("unknown model kind `{other}` (expected mlp, fcn or pct)"))),
        }
    }
}

/// Kind-specific structure.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Hyper {
    Mlp { hidden: Vec<usize> },
    Fcn { filters: Vec<usize>, kernels: Vec<usize> },
    Pct { d_model: usize, blocks: usize, qk_reduction: usize },
}

/// Hidden widths of the MLP for a flattened input of `input_dim` features.
pub fn mlp_widths(input_dim: usize) -> [usize; 2] {
    [input_dim / 2, input_dim / 4]
}

impl Hyper {
    pub fn default_for(kind: ModelKind, window_size: usize, channels: usize) -> Hyper {
        match kind {
            ModelKind::Mlp => Hyper::Mlp { hidden: mlp_widths(window_size * channels).to_vec() },
            ModelKind::Fcn => Hyper::Fcn { filters: vec![128, 256, 128], kernels: vec![8, 5, 3] },
            ModelKind::Pct => Hyper::Pct { d_model: 64, blocks: 4, qk_reduction: 4 },
        }
    }

    fn kind(&self) -> ModelKind {
        match self {
            Hyper::Mlp { .. } => ModelKind::Mlp,
            Hyper::Fcn { .. } => ModelKind::Fcn,
            Hyper::Pct { .. } => ModelKind::Pct,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub window_size: usize,
    pub channels: usize,
    pub class_count: usize,
    pub hyper: Hyper,
}

impl ModelSpec {
    /// Spec with the default structure for `kind`.
    pub fn new(kind: ModelKind, window_size: usize, channels: usize) -> ModelSpec {
        ModelSpec { kind, window_size, channels, class_count: 2, hyper: Hyper::default_for(kind, window_size, channels) }
    }

    pub fn with_hyper(mut self, hyper: Hyper) -> Result<ModelSpec> {
        if hyper.kind() != self.kind {
            return Err(Error::Config(format!("{} structure given for a {} model", hyper.kind(), self.kind)));
        }
        self.hyper = hyper;
        Ok(self)
    }

    pub fn input_dim(&self) -> usize {
        self.window_size * self.channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_count != 2 {
            return Err(Error::Config(format!("class_count must be 2, got {}", self.class_count)));
        }
        if self.channels == 0 || self.window_size == 0 {
            return Err(Error::Config("window size and channel count must be positive".into()));
        }
        if self.hyper.kind() != self.kind {
            return Err(Error::Config(format!("{} structure given for a {} model", self.hyper.kind(), self.kind)));
        }
        match &self.hyper {
            Hyper::Mlp { hidden } => {
                if self.input_dim() < 4 {
                    return Err(Error::Config(format!(
                        "MLP needs window_size * channels >= 4, got {}",
                        self.input_dim()
                    )));
                }
                if hidden.contains(&0) {
                    return Err(Error::Config(format!("MLP hidden widths must be positive, got {hidden:?}")));
                }
            }
            Hyper::Fcn { filters, kernels } => {
                if filters.is_empty() || filters.len() != kernels.len() || filters.contains(&0) || kernels.contains(&0) {
                    return Err(Error::Config(format!("invalid FCN blocks: filters {filters:?}, kernels {kernels:?}")));
                }
                let largest = *kernels.iter().max().unwrap();
                if self.window_size < largest {
                    return Err(Error::Config(format!(
                        "FCN needs window_size >= {largest} (largest kernel), got {}",
                        self.window_size
                    )));
                }
            }
            Hyper::Pct { d_model, blocks, qk_reduction } => {
                if *d_model == 0 || *qk_reduction == 0 || d_model % qk_reduction != 0 || *blocks == 0 {
                    return Err(Error::Config(format!(
                        "PCT needs d_model divisible by {qk_reduction} and at least one block, got d_model={d_model}, blocks={blocks}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults() {
        let s = ModelSpec::new(ModelKind::Fcn, 50, 3);
        assert_eq!(s.hyper, Hyper::Fcn { filters: vec![128, 256, 128], kernels: vec![8, 5, 3] });
        assert_eq!(ModelSpec::new(ModelKind::Pct, 50, 3).hyper, Hyper::Pct { d_model: 64, blocks: 4, qk_reduction: 4 });
        assert_eq!(ModelSpec::new(ModelKind::Mlp, 120, 3).hyper, Hyper::Mlp { hidden: vec![180, 90] });
    }

    #[test]
    fn mismatched_hyper_is_rejected() {
        let s = ModelSpec::new(ModelKind::Fcn, 50, 3);
        assert!(s.with_hyper(Hyper::Mlp { hidden: vec![4] }).is_err());
        let bad = ModelSpec::new(ModelKind::Pct, 50, 3)
            .with_hyper(Hyper::Pct { d_model: 30, blocks: 4, qk_reduction: 4 })
            .unwrap();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("PCT".parse::<ModelKind>().unwrap(), ModelKind::Pct);
        assert!("cnn".parse::<ModelKind>().is_err());
    }

    proptest! {
        #[test]
        fn halving_is_floor(d in 4usize..100_000) {
            let [a, b] = mlp_widths(d);
            prop_assert_eq!(a, d / 2);
            prop_assert_eq!(b, d / 4);
            prop_assert!(2 * a <= d && d < 2 * a + 2);
        }
    }
}
