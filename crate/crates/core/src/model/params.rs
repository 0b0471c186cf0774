use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::ModelError;
use crate::scalar::Scalar;

/// Weights of the recurrent frame classifier.
///
/// Gate rows are ordered input, forget, candidate, output; every matrix is row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub(crate) config: ModelConfig,
    /// `4H x 40`
    pub(crate) w_input: Vec<T>,
    /// `4H x H`
    pub(crate) w_recurrent: Vec<T>,
    /// `4H`
    pub(crate) b_gates: Vec<T>,
    /// `5 x (H + 5 * history_len)`
    pub(crate) w_out: Vec<T>,
    /// `5`
    pub(crate) b_out: Vec<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// Seeded init: every tensor uniform in `±1/sqrt(fan_in)` where fan-in is
    /// `40 + H` for the cell and `H + 5 * history_len` for the output head.
    pub fn init(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let cell_bound = 1.0 / ((config.input_size() + config.hidden_size) as f64).sqrt();
        let head_bound = 1.0 / (config.head_size() as f64).sqrt();
        let mut draw = |n: usize, bound: f64| -> Vec<T> {
            (0..n)
                .map(|_| T::lit(rng.gen_range(-bound..bound)))
                .collect()
        };
        let [wi, wr, bg, wo, bo] = config.tensor_shapes().map(|(_, r, c)| r * c);
        let w_input = draw(wi, cell_bound);
        let w_recurrent = draw(wr, cell_bound);
        let b_gates = draw(bg, cell_bound);
        let w_out = draw(wo, head_bound);
        let b_out = draw(bo, head_bound);
        Ok(ModelParams {
            config,
            w_input,
            w_recurrent,
            b_gates,
            w_out,
            b_out,
        })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let [wi, wr, bg, wo, bo] = config.tensor_shapes().map(|(_, r, c)| r * c);
        Ok(ModelParams {
            config,
            w_input: vec![T::zero(); wi],
            w_recurrent: vec![T::zero(); wr],
            b_gates: vec![T::zero(); bg],
            w_out: vec![T::zero(); wo],
            b_out: vec![T::zero(); bo],
        })
    }

    /// Assembles parameters from tensors in [`ModelConfig::tensor_shapes`] order.
    pub fn from_tensors(config: ModelConfig, tensors: [Vec<T>; 5]) -> Result<Self, ModelError> {
        config.validate()?;
        for ((name, r, c), t) in config.tensor_shapes().iter().zip(&tensors) {
            if t.len() != r * c {
                return Err(ModelError::Dimension {
                    what: name,
                    expected: r * c,
                    actual: t.len(),
                });
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFiniteParameter(name));
            }
        }
        let [w_input, w_recurrent, b_gates, w_out, b_out] = tensors;
        Ok(ModelParams {
            config,
            w_input,
            w_recurrent,
            b_gates,
            w_out,
            b_out,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensors(&self) -> [(&'static str, &[T]); 5] {
        [
            ("w_input", &self.w_input),
            ("w_recurrent", &self.w_recurrent),
            ("b_gates", &self.b_gates),
            ("w_out", &self.w_out),
            ("b_out", &self.b_out),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Vec<T>); 5] {
        [
            ("w_input", &mut self.w_input),
            ("w_recurrent", &mut self.w_recurrent),
            ("b_gates", &mut self.b_gates),
            ("w_out", &mut self.w_out),
            ("b_out", &mut self.b_out),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// `self += scale * other`, tensor by tensor.
    pub(crate) fn add_scaled(&mut self, other: &ModelParams<T>, scale: T) {
        for ((_, dst), (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = *d + scale * *s;
            }
        }
    }

    pub(crate) fn fill_zero(&mut self) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::lit(x.to_f64_lossy())).collect();
        ModelParams {
            config: self.config,
            w_input: conv(&self.w_input),
            w_recurrent: conv(&self.w_recurrent),
            b_gates: conv(&self.b_gates),
            w_out: conv(&self.w_out),
            b_out: conv(&self.b_out),
        }
    }
}
