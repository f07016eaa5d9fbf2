//! Single-hidden-layer perceptron for regression, trained by mini-batch
//! gradient descent with momentum on standardized inputs and targets.
//!
//! Loss on a batch of m rows: L = (1/2m) * sum (yhat - y)^2.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::standardize::Scaler;
use super::Dataset;
use crate::error::{validation, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Logistic,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Logistic => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the activation value.
    fn slope(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Logistic => a * (1.0 - a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Uniform Glorot-style scale.
    Random,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden_units: usize,
    pub activation: Activation,
    pub epochs: usize,
    pub step: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub init: Init,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden_units: 16,
            activation: Activation::Tanh,
            epochs: 500,
            step: 0.05,
            momentum: 0.9,
            batch_size: 32,
            init: Init::Random,
            seed: 0,
        }
    }
}

/// Network weights in one flat vector: hidden weights (h x p, row-major),
/// hidden biases (h), output weights (h), output bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNetwork {
    pub n_inputs: usize,
    pub hidden: usize,
    pub activation: Activation,
    pub params: Vec<f64>,
}

impl MlpNetwork {
    pub fn param_count(n_inputs: usize, hidden: usize) -> usize {
        hidden * n_inputs + 2 * hidden + 1
    }

    pub fn zeros(n_inputs: usize, hidden: usize, activation: Activation) -> Self {
        MlpNetwork { n_inputs, hidden, activation, params: vec![0.0; Self::param_count(n_inputs, hidden)] }
    }

    pub fn random<R: Rng + ?Sized>(n_inputs: usize, hidden: usize, activation: Activation, rng: &mut R) -> Self {
        let mut net = Self::zeros(n_inputs, hidden, activation);
        let s1 = (6.0 / (n_inputs + hidden) as f64).sqrt();
        let s2 = (6.0 / (hidden + 1) as f64).sqrt();
        let hw = hidden * n_inputs;
        for v in &mut net.params[..hw] {
            *v = rng.random_range(-s1..s1);
        }
        let out = hw + hidden;
        for v in &mut net.params[out..out + hidden] {
            *v = rng.random_range(-s2..s2);
        }
        net
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let hw = self.hidden * self.n_inputs;
        (hw, hw + self.hidden, hw + 2 * self.hidden)
    }

    fn hidden_activations(&self, x: &[f64], out: &mut [f64]) {
        let (b1, _, _) = self.offsets();
        for (j, a) in out.iter_mut().enumerate() {
            let w = &self.params[j * self.n_inputs..(j + 1) * self.n_inputs];
            let z = self.params[b1 + j] + w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>();
            *a = self.activation.apply(z);
        }
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let (_, w2, b2) = self.offsets();
        let mut a = vec![0.0; self.hidden];
        self.hidden_activations(x, &mut a);
        self.params[b2] + a.iter().zip(&self.params[w2..w2 + self.hidden]).map(|(ai, wi)| ai * wi).sum::<f64>()
    }

    /// Loss and analytic gradient over rows `xs` (each of length
    /// `n_inputs`) with targets `ys`.
    pub fn loss_and_grad(&self, xs: &[&[f64]], ys: &[f64]) -> (f64, Vec<f64>) {
        let m = xs.len().max(1) as f64;
        let (b1, w2, b2) = self.offsets();
        let mut grad = vec![0.0; self.params.len()];
        let mut a = vec![0.0; self.hidden];
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            self.hidden_activations(x, &mut a);
            let out =
                self.params[b2] + a.iter().zip(&self.params[w2..w2 + self.hidden]).map(|(ai, wi)| ai * wi).sum::<f64>();
            let err = out - y;
            loss += 0.5 * err * err;
            let d_out = err / m;
            grad[b2] += d_out;
            for j in 0..self.hidden {
                grad[w2 + j] += d_out * a[j];
                let d_z = d_out * self.params[w2 + j] * self.activation.slope(a[j]);
                grad[b1 + j] += d_z;
                for (g, xi) in grad[j * self.n_inputs..(j + 1) * self.n_inputs].iter_mut().zip(x.iter()) {
                    *g += d_z * xi;
                }
            }
        }
        (loss / m, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub scaler: Scaler,
    pub y_mean: f64,
    pub y_std: f64,
    pub network: MlpNetwork,
    /// Full-batch standardized loss after each epoch.
    pub loss_history: Vec<f64>,
}

impl MlpModel {
    pub fn n_features(&self) -> usize {
        self.network.n_inputs
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.y_mean + self.y_std * self.network.forward(&self.scaler.transform(row))
    }
}

pub fn fit_mlp(data: &Dataset, params: &MlpParams) -> Result<MlpModel> {
    if params.hidden_units < 1 {
        return Err(validation("an MLP needs at least one hidden unit"));
    }
    if !(params.step >= 0.0) || !(0.0..1.0).contains(&params.momentum) || params.batch_size < 1 {
        return Err(validation("step must be non-negative, momentum in [0, 1), batch size positive"));
    }
    if data.is_empty() {
        return Err(Error::InsufficientData { what: "neural network", needed: 1, got: 0 });
    }
    let scaler = Scaler::fit_features(data);
    let (y_mean, y_std) = Scaler::fit_target(data);
    let xs: Vec<Vec<f64>> = data.rows().map(|r| scaler.transform(r)).collect();
    let ys: Vec<f64> = data.targets().iter().map(|y| (y - y_mean) / y_std).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let p = data.n_features();
    let mut net = match params.init {
        Init::Random => MlpNetwork::random(p, params.hidden_units, params.activation, &mut rng),
        Init::Zero => MlpNetwork::zeros(p, params.hidden_units, params.activation),
    };
    let mut velocity = vec![0.0; net.params.len()];
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut loss_history = Vec::with_capacity(params.epochs);
    let all_x: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(params.batch_size) {
            let bx: Vec<&[f64]> = batch.iter().map(|&i| xs[i].as_slice()).collect();
            let by: Vec<f64> = batch.iter().map(|&i| ys[i]).collect();
            let (_, grad) = net.loss_and_grad(&bx, &by);
            for ((v, g), w) in velocity.iter_mut().zip(&grad).zip(net.params.iter_mut()) {
                *v = params.momentum * *v - params.step * g;
                *w += *v;
            }
        }
        let (loss, _) = net.loss_and_grad(&all_x, &ys);
        if !loss.is_finite() {
            return Err(Error::Training {
                model: "neural network",
                epoch,
                reason: format!("loss became {loss} with step {}", params.step),
            });
        }
        loss_history.push(loss);
    }
    Ok(MlpModel { scaler, y_mean, y_std, network: net, loss_history })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(n: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![-2.0 + 4.0 * i as f64 / (n - 1) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0].sin()).collect();
        Dataset::from_rows(&rows, &y).unwrap()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<Vec<f64>> = (0..12).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let ys: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let xr: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let h = 1e-6;
        for point in 0..10 {
            let act = if point % 2 == 0 { Activation::Tanh } else { Activation::Logistic };
            let net = MlpNetwork::random(3, 5, act, &mut rng);
            let mut net =
                MlpNetwork { params: net.params.iter().map(|v| v + rng.random_range(-0.3..0.3)).collect(), ..net };
            let (_, grad) = net.loss_and_grad(&xr, &ys);
            for k in 0..net.params.len() {
                let orig = net.params[k];
                net.params[k] = orig + h;
                let (lp, _) = net.loss_and_grad(&xr, &ys);
                net.params[k] = orig - h;
                let (lm, _) = net.loss_and_grad(&xr, &ys);
                net.params[k] = orig;
                let fd = (lp - lm) / (2.0 * h);
                assert!(rel_err(grad[k], fd) <= 1e-4, "point {point} param {k}: {} vs {fd}", grad[k]);
            }
        }
    }

    #[test]
    fn zero_init_zero_step_predicts_target_mean() {
        let data = sine(21);
        let params = MlpParams { init: Init::Zero, step: 0.0, epochs: 3, ..Default::default() };
        let m = fit_mlp(&data, &params).unwrap();
        let mean = data.targets().iter().sum::<f64>() / data.len() as f64;
        assert!((m.predict_row(&[1.3]) - mean).abs() < 1e-12);
        assert_eq!(m.network.forward(&[0.4]), 0.0);
    }

    #[test]
    fn fits_a_sine() {
        let data = sine(200);
        let m = fit_mlp(&data, &MlpParams::default()).unwrap();
        let mse = data.rows().zip(data.targets()).map(|(r, y)| (m.predict_row(r) - y).powi(2)).sum::<f64>() / 200.0;
        assert!(mse <= 0.01, "mse {mse}");
    }

    #[test]
    fn divergence_is_reported() {
        let params = MlpParams { step: 1e6, momentum: 0.0, epochs: 50, ..Default::default() };
        match fit_mlp(&sine(50), &params) {
            Err(Error::Training { model, .. }) => assert_eq!(model, "neural network"),
            other => panic!("expected training error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_zero_hidden_units() {
        assert!(fit_mlp(&sine(10), &MlpParams { hidden_units: 0, ..Default::default() }).is_err());
    }
}
