//! Q-value scorers and the temporal-difference update.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::replay::Transition;

/// Maps a concatenated `(state ⊕ action)` input to a scalar Q-value.
pub trait Scorer {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn score(&self, input: &[f64]) -> f64;
    /// Returns Q(input) and adds `scale · ∂Q/∂θ` into `grad`.
    fn backward(&self, input: &[f64], scale: f64, grad: &mut [f64]) -> f64;
}

/// Compresses wide-range statistics into a scale the network can use:
/// `sign(x)·ln(1+|x|)`.
#[inline]
pub fn squash(x: f64) -> f64 {
    x.signum() * x.abs().ln_1p()
}

/// Fully connected ReLU network with a scalar output.
///
/// Parameters are stored flat, layer by layer, weights (row-major,
/// `out × in`) followed by biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    /// Apply [`squash`] to every input before the first layer.
    squash_inputs: bool,
}

impl Mlp {
    /// He-uniform weights, zero biases.
    pub fn new<R: Rng>(input: usize, hidden: &[usize], squash_inputs: bool, rng: &mut R) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)));
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Self {
            sizes,
            params,
            squash_inputs,
        }
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    fn prepare(&self, input: &[f64]) -> Vec<f64> {
        assert_eq!(input.len(), self.sizes[0], "scorer input width");
        if self.squash_inputs {
            input.iter().map(|&x| squash(x)).collect()
        } else {
            input.to_vec()
        }
    }

    /// Pre-activation outputs of every layer.
    fn forward_all(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![self.prepare(input)];
        let mut off = 0;
        let layers = self.sizes.len() - 1;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let x = acts.last().unwrap();
            let mut z: Vec<f64> = (0..n_out)
                .map(|o| b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
                .collect();
            if l + 1 < layers {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
            off += n_in * n_out + n_out;
        }
        acts
    }
}

impl Scorer for Mlp {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn score(&self, input: &[f64]) -> f64 {
        self.forward_all(input).last().unwrap()[0]
    }

    fn backward(&self, input: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
        let acts = self.forward_all(input);
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        // dQ/d(layer output)
        let mut delta = vec![scale];
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let x = &acts[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                row.iter_mut().zip(x).for_each(|(g, xi)| *g += d * xi);
                grad[off + n_in * n_out + o] += d;
            }
            if l > 0 {
                let w = &self.params[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    prev.iter_mut()
                        .zip(&w[o * n_in..(o + 1) * n_in])
                        .for_each(|(p, wi)| *p += d * wi);
                }
                // ReLU gate of the hidden layer feeding this one
                for (p, a) in prev.iter_mut().zip(x) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        acts[layers][0]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= self.learning_rate * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// `R + γ·max_a′ Q(s′, a′)`; terminal transitions (no candidates) use `R`.
pub fn td_target<S: Scorer>(target_net: &S, t: &Transition, gamma: f64) -> f64 {
    let best = t
        .next_inputs
        .iter()
        .map(|x| target_net.score(x))
        .fold(f64::NEG_INFINITY, f64::max);
    if best.is_finite() {
        t.reward + gamma * best
    } else {
        t.reward
    }
}

/// Mean squared TD error over the batch and its gradient in the online
/// parameters. Targets are held fixed.
pub fn td_loss_and_grad<S: Scorer>(
    online: &S,
    target_net: &S,
    batch: &[&Transition],
    gamma: f64,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Empty("td batch"));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Config(format!("discount {gamma} outside [0, 1]")));
    }
    let n = batch.len() as f64;
    let targets: Vec<f64> = batch.iter().map(|t| td_target(target_net, t, gamma)).collect();
    let mut grad = vec![0.0; online.params().len()];
    let mut loss = 0.0;
    for (t, target) in batch.iter().zip(targets) {
        let q = online.score(&t.input);
        let delta = q - target;
        loss += delta * delta / n;
        online.backward(&t.input, 2.0 * delta / n, &mut grad);
    }
    Ok((loss, grad))
}

/// One gradient step on the TD loss; returns the loss before the step.
pub fn td_update<S: Scorer + Clone>(
    online: &mut S,
    target_net: Option<&S>,
    opt: &mut Adam,
    batch: &[&Transition],
    gamma: f64,
) -> Result<f64> {
    let (loss, grad) = match target_net {
        Some(t) => td_loss_and_grad(online, t, batch, gamma)?,
        None => td_loss_and_grad(online, online, batch, gamma)?,
    };
    opt.step(online.params_mut(), &grad);
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Q(x) = tanh(a·x0 + b·x1) + c
    #[derive(Clone)]
    struct Tiny {
        p: [f64; 3],
    }

    impl Scorer for Tiny {
        fn params(&self) -> &[f64] {
            &self.p
        }
        fn params_mut(&mut self) -> &mut [f64] {
            &mut self.p
        }
        fn score(&self, x: &[f64]) -> f64 {
            (self.p[0] * x[0] + self.p[1] * x[1]).tanh() + self.p[2]
        }
        fn backward(&self, x: &[f64], scale: f64, g: &mut [f64]) -> f64 {
            let h = (self.p[0] * x[0] + self.p[1] * x[1]).tanh();
            let dh = 1.0 - h * h;
            g[0] += scale * dh * x[0];
            g[1] += scale * dh * x[1];
            g[2] += scale;
            h + self.p[2]
        }
    }

    fn transitions() -> Vec<Transition> {
        vec![
            Transition::new(vec![0.3, -1.2], 0.7, vec![vec![0.5, 0.1], vec![-0.4, 0.9]]),
            Transition::new(vec![1.1, 0.4], -0.2, vec![vec![0.0, 0.3]]),
            Transition::new(vec![-0.6, 0.8], 1.5, vec![]),
        ]
    }

    /// Loss with the bootstrap target evaluated at fixed parameters.
    fn loss_at<S: Scorer + Clone>(s: &S, frozen: &S, batch: &[&Transition], gamma: f64) -> f64 {
        td_loss_and_grad(s, frozen, batch, gamma).unwrap().0
    }

    fn check_gradient<S: Scorer + Clone>(s: &S, batch: &[&Transition], gamma: f64) {
        let (_, analytic) = td_loss_and_grad(s, s, batch, gamma).unwrap();
        let h = 1e-6;
        for i in 0..s.params().len() {
            let mut plus = s.clone();
            plus.params_mut()[i] += h;
            let mut minus = s.clone();
            minus.params_mut()[i] -= h;
            let fd = (loss_at(&plus, s, batch, gamma) - loss_at(&minus, s, batch, gamma)) / (2.0 * h);
            let denom = fd.abs().max(analytic[i].abs()).max(1e-8);
            assert!(
                (fd - analytic[i]).abs() / denom <= 1e-4,
                "param {i}: fd {fd} vs analytic {}",
                analytic[i]
            );
        }
    }

    #[test]
    fn tiny_scorer_gradient_matches_finite_differences() {
        let s = Tiny { p: [0.4, -0.7, 0.1] };
        let ts = transitions();
        let batch: Vec<&Transition> = ts.iter().collect();
        check_gradient(&s, &batch, 0.9);
        check_gradient(&s, &batch, 0.0);
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mlp = Mlp::new(2, &[5, 4], false, &mut rng);
        let ts = transitions();
        let batch: Vec<&Transition> = ts.iter().collect();
        check_gradient(&mlp, &batch, 0.5);
    }

    #[test]
    fn single_transition_loss_is_squared_error() {
        let s = Tiny { p: [0.2, 0.3, -0.1] };
        let t = Transition::new(vec![1.0, 2.0], 0.25, vec![vec![3.0, 1.0]]);
        let (loss, _) = td_loss_and_grad(&s, &s, &[&t], 0.0).unwrap();
        let q = (0.2f64 + 0.6).tanh() - 0.1;
        assert_eq!(loss, (q - 0.25) * (q - 0.25));
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let s = Tiny { p: [0.0, 0.0, 0.75] };
        let ts = vec![
            Transition::new(vec![1.0, 2.0], 0.75, vec![vec![0.0, 0.0]]),
            Transition::new(vec![-1.0, 0.5], 0.75, vec![]),
        ];
        let batch: Vec<&Transition> = ts.iter().collect();
        let mut s2 = s.clone();
        let mut opt = Adam::new(3, 1e-3);
        assert_eq!(td_update(&mut s2, None, &mut opt, &batch, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_discount_and_empty_batch() {
        let s = Tiny { p: [0.0; 3] };
        let t = Transition::new(vec![0.0, 0.0], 0.0, vec![]);
        assert!(td_loss_and_grad(&s, &s, &[&t], 1.5).is_err());
        assert!(td_loss_and_grad(&s, &s, &[&t], -0.1).is_err());
        assert!(td_loss_and_grad(&s, &s, &[], 0.5).is_err());
    }

    #[test]
    fn squash_is_odd_and_monotone() {
        assert_eq!(squash(0.0), 0.0);
        assert_eq!(squash(-3.0), -squash(3.0));
        assert!(squash(1e300).is_finite());
        assert!(squash(2.0) > squash(1.0));
    }
}
