//! Forward pass and backpropagation through time for [`ModelParams`].
//!
//! Per step `s` over the audio window:
//!
//! ```text
//! z = W_in x_s + W_rec h + b
//! i = σ(z_i)  f = σ(z_f)  g = tanh(z_g)  o = σ(z_o)
//! c = f ⊙ c + i ⊙ g
//! h = o ⊙ tanh(c)
//! ```
//!
//! then `p = softmax(W_out [h; onehot(history)] + b_out)`.

use super::config::CLASS_COUNT;
use super::instances::ModelInput;
use super::params::ModelParams;
use super::ModelError;
use crate::scalar::Scalar;

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub(crate) fn softmax<T: Scalar>(logits: &[T; CLASS_COUNT]) -> [T; CLASS_COUNT] {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out = logits.map(|l| (l - max).exp());
    let sum: T = out.iter().copied().sum();
    out.iter_mut().for_each(|p| *p = *p / sum);
    out
}

/// Activations kept for the backward pass.
pub(crate) struct StepCache<T> {
    /// Gate activations `[i; f; g; o]`, each of length H.
    gates: Vec<T>,
    cell: Vec<T>,
    hidden: Vec<T>,
}

pub(crate) struct ForwardCache<T> {
    steps: Vec<StepCache<T>>,
    pub(crate) probs: [T; CLASS_COUNT],
}

impl<T: Scalar> ModelParams<T> {
    pub(crate) fn check_input(&self, input: &ModelInput<'_, T>) -> Result<(), ModelError> {
        let cfg = &self.config;
        if input.audio.len() != cfg.audio_len() {
            return Err(ModelError::Dimension {
                what: "audio window",
                expected: cfg.audio_len(),
                actual: input.audio.len(),
            });
        }
        if input.history.len() != cfg.history_len {
            return Err(ModelError::Dimension {
                what: "history",
                expected: cfg.history_len,
                actual: input.history.len(),
            });
        }
        if let Some(&Some(bad)) = input
            .history
            .iter()
            .find(|h| matches!(h, Some(c) if *c as usize >= CLASS_COUNT))
        {
            return Err(ModelError::InvalidClass(bad));
        }
        Ok(())
    }

    /// Class distribution for one frame.
    pub fn forward(&self, input: ModelInput<'_, T>) -> Result<[T; CLASS_COUNT], ModelError> {
        self.check_input(&input)?;
        Ok(self.forward_cached(input).probs)
    }

    /// Forward pass on checked input, keeping every step's activations.
    pub(crate) fn forward_cached(&self, input: ModelInput<'_, T>) -> ForwardCache<T> {
        let cfg = &self.config;
        let h_size = cfg.hidden_size;
        let n_in = cfg.input_size();
        let mut h = vec![T::zero(); h_size];
        let mut c = vec![T::zero(); h_size];
        let mut steps = Vec::with_capacity(cfg.steps());
        let mut z = vec![T::zero(); 4 * h_size];
        for x in input.audio.chunks_exact(n_in) {
            for (r, zr) in z.iter_mut().enumerate() {
                let wi = &self.w_input[r * n_in..(r + 1) * n_in];
                let wr = &self.w_recurrent[r * h_size..(r + 1) * h_size];
                let mut acc = self.b_gates[r];
                for (w, v) in wi.iter().zip(x) {
                    acc = acc + *w * *v;
                }
                for (w, v) in wr.iter().zip(&h) {
                    acc = acc + *w * *v;
                }
                *zr = acc;
            }
            let mut gates = vec![T::zero(); 4 * h_size];
            for j in 0..h_size {
                let i_g = sigmoid(z[j]);
                let f_g = sigmoid(z[h_size + j]);
                let g_g = z[2 * h_size + j].tanh();
                let o_g = sigmoid(z[3 * h_size + j]);
                gates[j] = i_g;
                gates[h_size + j] = f_g;
                gates[2 * h_size + j] = g_g;
                gates[3 * h_size + j] = o_g;
                c[j] = f_g * c[j] + i_g * g_g;
                h[j] = o_g * c[j].tanh();
            }
            steps.push(StepCache {
                gates,
                cell: c.clone(),
                hidden: h.clone(),
            });
        }

        let head = cfg.head_size();
        let mut logits = [T::zero(); CLASS_COUNT];
        for (k, l) in logits.iter_mut().enumerate() {
            let row = &self.w_out[k * head..(k + 1) * head];
            let mut acc = self.b_out[k];
            for (w, v) in row[..h_size].iter().zip(&h) {
                acc = acc + *w * *v;
            }
            for (j, cls) in input.history.iter().enumerate() {
                if let Some(cls) = cls {
                    acc = acc + row[h_size + j * CLASS_COUNT + *cls as usize];
                }
            }
            *l = acc;
        }
        ForwardCache {
            steps,
            probs: softmax(&logits),
        }
    }

    /// Adds `scale * dLoss/dθ` for cross-entropy against `target` into `grad`.
    /// Returns the loss `-ln p[target]`.
    pub(crate) fn accumulate_gradient(
        &self,
        input: ModelInput<'_, T>,
        target: u8,
        scale: T,
        grad: &mut ModelParams<T>,
    ) -> T {
        let cache = self.forward_cached(input);
        let cfg = &self.config;
        let h_size = cfg.hidden_size;
        let n_in = cfg.input_size();
        let head = cfg.head_size();
        let target = target as usize;
        let loss = -cache.probs[target].ln();

        let mut dlogits = cache.probs;
        dlogits[target] = dlogits[target] - T::one();
        dlogits.iter_mut().for_each(|d| *d = *d * scale);

        let last_h = &cache.steps.last().expect("at least one step").hidden;
        let mut dh = vec![T::zero(); h_size];
        for (k, &dl) in dlogits.iter().enumerate() {
            grad.b_out[k] = grad.b_out[k] + dl;
            let grow = &mut grad.w_out[k * head..(k + 1) * head];
            for j in 0..h_size {
                grow[j] = grow[j] + dl * last_h[j];
            }
            for (j, cls) in input.history.iter().enumerate() {
                if let Some(cls) = cls {
                    let idx = h_size + j * CLASS_COUNT + *cls as usize;
                    grow[idx] = grow[idx] + dl;
                }
            }
            let wrow = &self.w_out[k * head..k * head + h_size];
            for j in 0..h_size {
                dh[j] = dh[j] + wrow[j] * dl;
            }
        }

        let zeros = vec![T::zero(); h_size];
        let mut dc = vec![T::zero(); h_size];
        let mut dz = vec![T::zero(); 4 * h_size];
        let audio_rows: Vec<&[T]> = input.audio.chunks_exact(n_in).collect();
        for s in (0..cache.steps.len()).rev() {
            let step = &cache.steps[s];
            let (c_prev, h_prev) = if s == 0 {
                (&zeros, &zeros)
            } else {
                (&cache.steps[s - 1].cell, &cache.steps[s - 1].hidden)
            };
            for j in 0..h_size {
                let i_g = step.gates[j];
                let f_g = step.gates[h_size + j];
                let g_g = step.gates[2 * h_size + j];
                let o_g = step.gates[3 * h_size + j];
                let tc = step.cell[j].tanh();
                let d_o = dh[j] * tc;
                let dcj = dc[j] + dh[j] * o_g * (T::one() - tc * tc);
                let d_i = dcj * g_g;
                let d_g = dcj * i_g;
                let d_f = dcj * c_prev[j];
                dz[j] = d_i * i_g * (T::one() - i_g);
                dz[h_size + j] = d_f * f_g * (T::one() - f_g);
                dz[2 * h_size + j] = d_g * (T::one() - g_g * g_g);
                dz[3 * h_size + j] = d_o * o_g * (T::one() - o_g);
                dc[j] = dcj * f_g;
            }
            let x = audio_rows[s];
            dh.iter_mut().for_each(|v| *v = T::zero());
            for (r, &dzr) in dz.iter().enumerate() {
                grad.b_gates[r] = grad.b_gates[r] + dzr;
                let gi = &mut grad.w_input[r * n_in..(r + 1) * n_in];
                for (g, v) in gi.iter_mut().zip(x) {
                    *g = *g + dzr * *v;
                }
                let gr = &mut grad.w_recurrent[r * h_size..(r + 1) * h_size];
                for (g, v) in gr.iter_mut().zip(h_prev) {
                    *g = *g + dzr * *v;
                }
                let wr = &self.w_recurrent[r * h_size..(r + 1) * h_size];
                for (d, w) in dh.iter_mut().zip(wr) {
                    *d = *d + *w * dzr;
                }
            }
        }
        loss
    }
}
