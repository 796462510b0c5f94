use super::{Activation, Affine1dField, GaussianMixtureField, NeuralMlpField, VelocityField};
use super::mlp::Layer;
use crate::num::Matrix;
use serde::{Deserialize, Serialize};

/// JSON-serializable description of a reference field, used by configs and by
/// trained-model snapshots. Covariances travel as nested Cholesky factors or
/// as thin factor columns; MLP weights travel as flat arrays with shape
/// headers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Affine1d {
        mu: f64,
        sigma: f64,
    },
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        /// Lower-triangular factors, one d x d matrix per component.
        chols: Vec<Vec<Vec<f64>>>,
    },
    GaussianLowRank {
        mean: Vec<f64>,
        /// Thin factor `F` (d x m, row-major) with `S = F F^T + floor I`.
        factor: Vec<f64>,
        factor_cols: usize,
        floor: f64,
    },
    Mlp {
        dim: usize,
        activation: Activation,
        /// Per-layer output widths including the final layer.
        widths: Vec<usize>,
        /// Per-layer flat row-major weights followed by biases.
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    },
}

impl FieldSpec {
    pub fn build(&self) -> Result<Box<dyn VelocityField>, String> {
        match self {
            FieldSpec::Affine1d { mu, sigma } => {
                if *sigma <= 0.0 {
                    return Err("affine1d needs sigma > 0".into());
                }
                Ok(Box::new(Affine1dField::new(*mu, *sigma)))
            }
            FieldSpec::GaussianMixture { weights, means, chols } => {
                let mats: Result<Vec<Matrix>, String> = chols
                    .iter()
                    .map(|rows| {
                        let d = rows.len();
                        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                        Matrix::from_vec(flat, d, d).map_err(|e| e.to_string())
                    })
                    .collect();
                GaussianMixtureField::from_cholesky(weights, means, &mats?)
                    .map(|f| Box::new(f) as Box<dyn VelocityField>)
                    .map_err(|e| e.to_string())
            }
            FieldSpec::GaussianLowRank { mean, factor, factor_cols, floor } => {
                let f = Matrix::from_vec(factor.clone(), mean.len(), *factor_cols)
                    .map_err(|e| e.to_string())?;
                GaussianMixtureField::from_low_rank_factor(mean.clone(), &f, *floor)
                    .map(|f| Box::new(f) as Box<dyn VelocityField>)
                    .map_err(|e| e.to_string())
            }
            FieldSpec::Mlp { dim, activation, widths, weights, biases } => {
                if widths.len() != weights.len() || widths.len() != biases.len() {
                    return Err("mlp spec: widths/weights/biases length mismatch".into());
                }
                let mut layers = Vec::new();
                let mut fan_in = dim + 1;
                for ((w, flat), bias) in widths.iter().zip(weights).zip(biases) {
                    let mat = Matrix::from_vec(flat.clone(), *w, fan_in)
                        .map_err(|e| e.to_string())?;
                    if bias.len() != *w {
                        return Err("mlp spec: bias width mismatch".into());
                    }
                    layers.push(Layer { weight: mat, bias: bias.clone() });
                    fan_in = *w;
                }
                if *widths.last().unwrap_or(&0) != *dim {
                    return Err("mlp spec: final width must equal dim".into());
                }
                Ok(Box::new(NeuralMlpField::from_parts(*dim, *activation, layers)))
            }
        }
    }

    pub fn from_mlp(net: &NeuralMlpField) -> Self {
        FieldSpec::Mlp {
            dim: net.dim(),
            activation: net.activation(),
            widths: net.layers.iter().map(|l| l.weight.rows()).collect(),
            weights: net.layers.iter().map(|l| l.weight.data().to_vec()).collect(),
            biases: net.layers.iter().map(|l| l.bias.clone()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::RngStream;

    #[test]
    fn affine_spec_roundtrip() {
        let spec = FieldSpec::Affine1d { mu: 2.0, sigma: 1.0 };
        let json = serde_json::to_string(&spec).unwrap();
        let back: FieldSpec = serde_json::from_str(&json).unwrap();
        let field = back.build().unwrap();
        assert_eq!(field.dim(), 1);
        assert!((field.eval(&[0.0], 0.5)[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mlp_spec_roundtrip_preserves_outputs() {
        let mut rng = RngStream::new(3, 0);
        let net = NeuralMlpField::glorot(2, &[4], Activation::Tanh, &mut rng);
        let spec = FieldSpec::from_mlp(&net);
        let json = serde_json::to_string(&spec).unwrap();
        let rebuilt: FieldSpec = serde_json::from_str(&json).unwrap();
        let field = rebuilt.build().unwrap();
        let x = [0.4, -1.1];
        assert_eq!(field.eval(&x, 0.3), net.eval(&x, 0.3));
    }

    #[test]
    fn unknown_keys_rejected() {
        let json = r#"{"type": "affine1d", "mu": 1.0, "sigma": 1.0, "extra": 5}"#;
        assert!(serde_json::from_str::<FieldSpec>(json).is_err());
    }
}
