//! Single-hidden-layer perceptron with ReLU, inverted dropout and softmax.
//!
//! Parameters live in one flat buffer laid out as `[W1 | b1 | W2 | b2]`, with
//! both weight matrices row-major (`W1` is hidden × input, `W2` is
//! output × hidden). Gradients share that layout.

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    input: usize,
    hidden: usize,
    output: usize,
    params: Vec<f64>,
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub(crate) fn log_softmax_at(logits: &[f64], k: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits[k] - max - lse
}

/// Dropout applied to the hidden layer during training.
pub struct Dropout<'a, R: Rng> {
    pub p: f64,
    pub rng: &'a mut R,
}

impl Mlp {
    pub fn param_count(input: usize, hidden: usize, output: usize) -> usize {
        hidden * input + hidden + output * hidden + output
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Mlp {
        Mlp { input, hidden, output, params: vec![0.0; Mlp::param_count(input, hidden, output)] }
    }

    /// He-style uniform initialization, `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`,
    /// with zero biases.
    pub fn init<R: Rng>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Mlp {
        let mut net = Mlp::zeros(input, hidden, output);
        let a1 = (6.0 / input as f64).sqrt();
        let a2 = (6.0 / hidden as f64).sqrt();
        let (w1, _, w2, _) = net.split_mut();
        for w in w1 {
            *w = rng.random_range(-a1..a1);
        }
        for w in w2 {
            *w = rng.random_range(-a2..a2);
        }
        net
    }

    pub fn from_parts(
        input: usize,
        hidden: usize,
        output: usize,
        params: Vec<f64>,
    ) -> Option<Mlp> {
        (params.len() == Mlp::param_count(input, hidden, output)).then_some(Mlp { input, hidden, output, params })
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn output_dim(&self) -> usize {
        self.output
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// `(W1, b1, W2, b2)` views.
    pub fn split(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let (w1, rest) = self.params.split_at(self.hidden * self.input);
        let (b1, rest) = rest.split_at(self.hidden);
        let (w2, b2) = rest.split_at(self.output * self.hidden);
        (w1, b1, w2, b2)
    }

    fn split_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64], &mut [f64]) {
        let (w1, rest) = self.params.split_at_mut(self.hidden * self.input);
        let (b1, rest) = rest.split_at_mut(self.hidden);
        let (w2, b2) = rest.split_at_mut(self.output * self.hidden);
        (w1, b1, w2, b2)
    }

    /// Hidden activations `relu(W1 x + b1)` followed by optional inverted
    /// dropout. Returns `(pre_activation, hidden, mask)`, where `mask` holds the
    /// per-unit dropout scale (`0` or `1 / keep`, all `1` without dropout).
    fn hidden_layer<R: Rng>(
        &self,
        x: &[f64],
        dropout: Option<&mut Dropout<'_, R>>,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (w1, b1, _, _) = self.split();
        let pre: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &w1[j * self.input..(j + 1) * self.input];
                b1[j] + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>()
            })
            .collect();
        let mut mask = vec![1.0; self.hidden];
        if let Some(d) = dropout {
            let keep = 1.0 - d.p;
            // drawn for every unit so the rng stream does not depend on activations
            for m in &mut mask {
                *m = if d.rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 };
            }
        }
        let h = pre.iter().zip(&mask).map(|(&z, m)| z.max(0.0) * m).collect();
        (pre, h, mask)
    }

    fn output_layer(&self, h: &[f64]) -> Vec<f64> {
        let (_, _, w2, b2) = self.split();
        (0..self.output)
            .map(|k| {
                let row = &w2[k * self.hidden..(k + 1) * self.hidden];
                b2[k] + row.iter().zip(h).map(|(w, hj)| w * hj).sum::<f64>()
            })
            .collect()
    }

    /// Pre-softmax logits without dropout.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let (_, h, _) = self.hidden_layer::<rand_chacha::ChaCha8Rng>(x, None);
        self.output_layer(&h)
    }

    /// Hidden layer output, with dropout when given. Exposed for checking the
    /// dropout scaling.
    pub fn hidden<R: Rng>(&self, x: &[f64], dropout: Option<&mut Dropout<'_, R>>) -> Vec<f64> {
        self.hidden_layer(x, dropout).1
    }

    pub fn forward<R: Rng>(&self, x: &[f64], dropout: Option<&mut Dropout<'_, R>>) -> Vec<f64> {
        let (_, h, _) = self.hidden_layer(x, dropout);
        softmax(&self.output_layer(&h))
    }

    /// Mean cross-entropy over the batch and its gradient with respect to the
    /// flat parameter buffer.
    pub fn loss_and_gradient<R: Rng>(
        &self,
        xs: &[&[f64]],
        ys: &[usize],
        mut dropout: Option<&mut Dropout<'_, R>>,
    ) -> (f64, Vec<f64>) {
        let n = xs.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let (_, _, w2, _) = self.split();
        let (d1, i, o) = (self.hidden, self.input, self.output);
        let off_b1 = d1 * i;
        let off_w2 = off_b1 + d1;
        let off_b2 = off_w2 + o * d1;
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let (pre, h, mask) = self.hidden_layer(x, dropout.as_deref_mut());
            let logits = self.output_layer(&h);
            loss -= log_softmax_at(&logits, y);
            let mut dz2 = softmax(&logits);
            dz2[y] -= 1.0;
            for v in &mut dz2 {
                *v /= n;
            }
            let mut dh = vec![0.0; d1];
            for k in 0..o {
                let g = dz2[k];
                grad[off_b2 + k] += g;
                let row = &w2[k * d1..(k + 1) * d1];
                let grow = &mut grad[off_w2 + k * d1..off_w2 + (k + 1) * d1];
                for j in 0..d1 {
                    grow[j] += g * h[j];
                    dh[j] += g * row[j];
                }
            }
            for j in 0..d1 {
                if pre[j] <= 0.0 {
                    continue;
                }
                let dz1 = dh[j] * mask[j];
                if dz1 == 0.0 {
                    continue;
                }
                grad[off_b1 + j] += dz1;
                let grow = &mut grad[j * i..(j + 1) * i];
                for (g, xi) in grow.iter_mut().zip(x.iter()) {
                    *g += dz1 * xi;
                }
            }
        }
        (loss / n, grad)
    }

    /// Rounds every parameter to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        for p in &mut self.params {
            *p = *p as f32 as f64;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // independent scalar softmax for three logits
    fn softmax3(a: f64, b: f64, c: f64) -> [f64; 3] {
        let d = a.exp() + b.exp() + c.exp();
        [a.exp() / d, b.exp() / d, c.exp() / d]
    }

    #[test]
    fn zero_network_is_uniform() {
        let net = Mlp::zeros(14, 64, 4);
        let p = net.forward::<ChaCha8Rng>(&[0.3; 14], None);
        assert_eq!(p, vec![0.25; 4]);
    }

    #[test]
    fn softmax_matches_scalar_oracle() {
        let oracle = softmax3(1.0, 0.0, 0.0);
        let p = softmax(&[1.0, 0.0, 0.0]);
        for (a, b) in p.iter().zip(oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((p[0] - 0.5761).abs() < 1e-4);
        assert!((p[1] - 0.2119).abs() < 1e-4);
    }

    #[test]
    fn softmax_shift_invariant() {
        let a = softmax(&[0.3, -1.2, 2.0, 0.0]);
        let b = softmax(&[100.3, 98.8, 102.0, 100.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn dropout_off_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::init(14, 64, 4, &mut rng);
        let x = [0.5; 14];
        assert_eq!(net.forward::<ChaCha8Rng>(&x, None), net.forward::<ChaCha8Rng>(&x, None));
    }

    #[test]
    fn from_parts_checks_length() {
        assert!(Mlp::from_parts(2, 3, 2, vec![0.0; Mlp::param_count(2, 3, 2)]).is_some());
        assert!(Mlp::from_parts(2, 3, 2, vec![0.0; 5]).is_none());
    }
}
