use serde::{Deserialize, Serialize};

use super::{
    Bernoulli, CauchyLocation, CurvedGaussian, DegenerateSumMap, EfronMap, GraphSurfaceMap,
    IdentityMap, ParametricModel, Poisson,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// The built-in model battery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Builtin {
    GaussianMean,
    Poisson,
    Bernoulli,
    CurvedGaussianEfron,
    GraphSurfaceGaussian,
    CauchyLocation,
    DegenerateSumGaussian,
}

impl Builtin {
    pub const ALL: [Builtin; 7] = [
        Builtin::GaussianMean,
        Builtin::Poisson,
        Builtin::Bernoulli,
        Builtin::CurvedGaussianEfron,
        Builtin::GraphSurfaceGaussian,
        Builtin::CauchyLocation,
        Builtin::DegenerateSumGaussian,
    ];

    pub fn registry_name(self) -> &'static str {
        match self {
            Builtin::GaussianMean => "gaussian-mean",
            Builtin::Poisson => "poisson",
            Builtin::Bernoulli => "bernoulli",
            Builtin::CurvedGaussianEfron => "curved-gaussian-efron",
            Builtin::GraphSurfaceGaussian => "graph-surface-gaussian",
            Builtin::CauchyLocation => "cauchy-location",
            Builtin::DegenerateSumGaussian => "degenerate-sum-gaussian",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.registry_name() == name)
            .ok_or_else(|| Error::UnknownModel(name.to_string()))
    }

    /// Whether the model is a full exponential family.
    pub fn is_exponential_family(self) -> bool {
        matches!(self, Builtin::GaussianMean | Builtin::Poisson | Builtin::Bernoulli)
    }

    /// Parameter dimension; `GaussianMean` takes it from the spec.
    pub fn dim(self, requested: Option<usize>) -> usize {
        match self {
            Builtin::GaussianMean => requested.unwrap_or(1),
            Builtin::GraphSurfaceGaussian | Builtin::DegenerateSumGaussian => 2,
            _ => 1,
        }
    }

    /// Five points inside the regular domain used by sweeps and the verify suite.
    /// Empty for the singular model.
    pub fn theta_grid(self, dim: usize) -> Vec<Vec<f64>> {
        let line = |pts: [f64; 5]| pts.iter().map(|&t| vec![t]).collect();
        match self {
            Builtin::GaussianMean => [-1.3, -0.4, 0.0, 0.3, 2.1]
                .iter()
                .map(|&t| (0..dim).map(|i| t + 0.25 * i as f64).collect())
                .collect(),
            Builtin::Poisson => line([0.3, 1.0, 2.0, 4.5, 9.0]),
            Builtin::Bernoulli => line([0.05, 0.2, 0.5, 0.7, 0.93]),
            Builtin::CurvedGaussianEfron => line([-1.0, -0.3, 0.0, 0.5, 1.2]),
            Builtin::CauchyLocation => line([-2.0, -0.5, 0.0, 0.7, 3.0]),
            Builtin::GraphSurfaceGaussian => vec![
                vec![0.0, 0.0],
                vec![0.5, -0.3],
                vec![-0.8, 0.2],
                vec![1.0, 1.0],
                vec![0.1, -1.2],
            ],
            Builtin::DegenerateSumGaussian => Vec::new(),
        }
    }
}

/// Registry name plus parameter record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, dim: Option<usize>) -> Self {
        Self {
            name: name.into(),
            dim,
        }
    }

    pub fn builtin(&self) -> Result<Builtin> {
        Builtin::from_name(&self.name)
    }
}

pub fn build_model<T: Scalar>(spec: &ModelSpec) -> Result<Box<dyn ParametricModel<T>>> {
    let builtin = spec.builtin()?;
    if let Some(d) = spec.dim {
        let natural = builtin.dim(Some(d));
        if d != natural || d == 0 {
            return Err(Error::InvalidInput(format!(
                "model {} does not accept dimension {d}",
                spec.name
            )));
        }
    }
    let model: Box<dyn ParametricModel<T>> = match builtin {
        Builtin::GaussianMean => Box::new(CurvedGaussian::new(IdentityMap::new(builtin.dim(spec.dim)))),
        Builtin::Poisson => Box::new(Poisson),
        Builtin::Bernoulli => Box::new(Bernoulli),
        Builtin::CurvedGaussianEfron => Box::new(CurvedGaussian::new(EfronMap)),
        Builtin::GraphSurfaceGaussian => Box::new(CurvedGaussian::new(GraphSurfaceMap)),
        Builtin::CauchyLocation => Box::new(CauchyLocation),
        Builtin::DegenerateSumGaussian => Box::new(CurvedGaussian::new(DegenerateSumMap)),
    };
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for b in Builtin::ALL {
            assert_eq!(Builtin::from_name(b.registry_name()).unwrap(), b);
        }
        assert!(matches!(Builtin::from_name("nope"), Err(Error::UnknownModel(_))));
    }

    #[test]
    fn grids_lie_in_regular_domain() {
        for b in Builtin::ALL {
            let dim = b.dim(Some(3));
            let spec = ModelSpec::new(b.registry_name(), (b == Builtin::GaussianMean).then_some(3));
            let model = build_model::<f64>(&spec).unwrap();
            for theta in b.theta_grid(dim) {
                assert!(model.in_regular_domain(&theta), "{} {:?}", b.registry_name(), theta);
            }
        }
        let singular = build_model::<f64>(&ModelSpec::new("degenerate-sum-gaussian", None)).unwrap();
        assert!(!singular.in_regular_domain(&[0.0, 0.0]));
    }

    #[test]
    fn wrong_dimension_rejected() {
        assert!(build_model::<f64>(&ModelSpec::new("poisson", Some(2))).is_err());
        assert!(build_model::<f64>(&ModelSpec::new("gaussian-mean", Some(4))).is_ok());
    }
}
