//! Mini-batch gradient-descent training on mean squared error, with exact
//! gradients computed by backpropagation through time.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::lstm::{ForecastModel, LstmLayerParams, ModelConfig};
use super::norm::NormParams;
use super::window::WindowDataset;
use super::ForecastError;

const GATES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub fn adam_default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            optimizer: Optimizer::adam_default(),
        }
    }
}

/// Parameter-shaped gradient accumulator; layouts mirror
/// [`LstmLayerParams`] and flatten in the same canonical order as
/// [`ForecastModel::flatten`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LstmLayerParams>,
    pub head_w: Vec<f64>,
    pub head_b: f64,
}

impl Gradients {
    fn zeros_like(model: &ForecastModel) -> Self {
        Self {
            layers: model
                .layers()
                .iter()
                .map(|l| LstmLayerParams::zeros(l.input_width, l.hidden))
                .collect(),
            head_w: vec![0.0; model.head().0.len()],
            head_b: 0.0,
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for layer in &self.layers {
            for g in 0..GATES {
                flat.extend_from_slice(&layer.w[g]);
            }
            for g in 0..GATES {
                flat.extend_from_slice(&layer.u[g]);
            }
            for g in 0..GATES {
                flat.extend_from_slice(&layer.b[g]);
            }
        }
        flat.extend_from_slice(&self.head_w);
        flat.push(self.head_b);
        flat
    }
}

/// Exact gradient of the batch mean-squared error with respect to every
/// parameter, plus the batch MSE itself. The mean reduction makes the
/// gradient of a duplicated sample equal to the single-sample gradient.
pub fn batch_gradients(
    model: &ForecastModel,
    batch: &[(&[f64], f64)],
) -> Result<(Gradients, f64), ForecastError> {
    if batch.is_empty() {
        return Err(ForecastError::EmptyDataset);
    }
    let lookback = model.lookback();
    let mut grads = Gradients::zeros_like(model);
    let mut sse = 0.0;
    for (window, target) in batch {
        if window.len() != lookback {
            return Err(ForecastError::ShapeMismatch {
                expected: lookback,
                got: window.len(),
            });
        }
        let trace = model.forward_traced(window);
        let err = trace.prediction - target;
        sse += err * err;
        // d(batch MSE)/d(prediction) for this sample.
        let err_scale = 2.0 * err / batch.len() as f64;
        backprop_sample(model, &trace, err_scale, &mut grads);
    }
    Ok((grads, sse / batch.len() as f64))
}

fn backprop_sample(
    model: &ForecastModel,
    trace: &super::lstm::ForwardTrace,
    err_scale: f64,
    grads: &mut Gradients,
) {
    let layers = model.layers();
    let (head_w, _) = model.head();
    let seq_len = trace.steps.len();
    let top = layers.len() - 1;

    for (gw, h) in grads.head_w.iter_mut().zip(&trace.final_h) {
        *gw += err_scale * h;
    }
    grads.head_b += err_scale;

    // Gradient flowing into each layer's hidden output per timestep. The
    // top layer only receives loss gradient at the final step, through the
    // dense head.
    let mut incoming: Vec<Vec<f64>> = (0..seq_len)
        .map(|t| {
            if t == seq_len - 1 {
                head_w.iter().map(|w| w * err_scale).collect()
            } else {
                vec![0.0; layers[top].hidden]
            }
        })
        .collect();

    for l in (0..layers.len()).rev() {
        let layer = &layers[l];
        let hidden = layer.hidden;
        let in_w = layer.input_width;
        let gl = &mut grads.layers[l];

        let mut dh_next = vec![0.0; hidden];
        let mut dc_next = vec![0.0; hidden];
        let mut below: Vec<Vec<f64>> = vec![Vec::new(); seq_len];

        for t in (0..seq_len).rev() {
            let st = &trace.steps[t][l];
            let mut d_pre = [
                vec![0.0; hidden],
                vec![0.0; hidden],
                vec![0.0; hidden],
                vec![0.0; hidden],
            ];
            for j in 0..hidden {
                let dh = incoming[t][j] + dh_next[j];
                let dc = dh * st.gate_o[j] * (1.0 - st.tanh_c[j] * st.tanh_c[j]) + dc_next[j];
                d_pre[0][j] = dc * st.gate_g[j] * st.gate_i[j] * (1.0 - st.gate_i[j]);
                d_pre[1][j] = dc * st.c_prev[j] * st.gate_f[j] * (1.0 - st.gate_f[j]);
                d_pre[2][j] = dc * st.gate_i[j] * (1.0 - st.gate_g[j] * st.gate_g[j]);
                d_pre[3][j] = dh * st.tanh_c[j] * st.gate_o[j] * (1.0 - st.gate_o[j]);
                dc_next[j] = dc * st.gate_f[j];
            }
            for (g, d_pre_g) in d_pre.iter().enumerate() {
                for (i, xi) in st.x.iter().enumerate() {
                    let row = &mut gl.w[g][i * hidden..(i + 1) * hidden];
                    for j in 0..hidden {
                        row[j] += d_pre_g[j] * xi;
                    }
                }
                for (k, hk) in st.h_prev.iter().enumerate() {
                    let row = &mut gl.u[g][k * hidden..(k + 1) * hidden];
                    for j in 0..hidden {
                        row[j] += d_pre_g[j] * hk;
                    }
                }
                for j in 0..hidden {
                    gl.b[g][j] += d_pre_g[j];
                }
            }
            for (k, out) in dh_next.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (g, d_pre_g) in d_pre.iter().enumerate() {
                    let row = &layer.u[g][k * hidden..(k + 1) * hidden];
                    for j in 0..hidden {
                        acc += row[j] * d_pre_g[j];
                    }
                }
                *out = acc;
            }
            let mut dx = vec![0.0; in_w];
            for (i, out) in dx.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (g, d_pre_g) in d_pre.iter().enumerate() {
                    let row = &layer.w[g][i * hidden..(i + 1) * hidden];
                    for j in 0..hidden {
                        acc += row[j] * d_pre_g[j];
                    }
                }
                *out = acc;
            }
            below[t] = dx;
        }
        if l > 0 {
            incoming = below;
        }
    }
}

/// Trains a freshly initialized model on the given (normalized) windows
/// and returns it together with the per-epoch training-loss trace.
/// Identical `(dataset, config, params)` always produce identical models.
pub fn train(
    train_set: &WindowDataset,
    config: ModelConfig,
    norm: NormParams,
    params: &TrainParams,
) -> Result<(ForecastModel, Vec<f64>), ForecastError> {
    if train_set.is_empty() {
        return Err(ForecastError::EmptyDataset);
    }
    if train_set.horizon != 1 {
        return Err(ForecastError::BadModelConfig(
            "training targets must have horizon 1".into(),
        ));
    }
    if train_set.lookback != config.lookback {
        return Err(ForecastError::ShapeMismatch {
            expected: config.lookback,
            got: train_set.lookback,
        });
    }
    if params.batch_size == 0 {
        return Err(ForecastError::BadModelConfig("batch size must be >= 1".into()));
    }

    let mut model = ForecastModel::init(config, norm, params.seed)?;
    // Separate stream from the init draws.
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x9e37_79b9_7f4a_7c15);

    let n = train_set.len();
    let param_len = model.parameter_len();
    let mut flat = model.flatten();
    let mut adam_m = vec![0.0; param_len];
    let mut adam_v = vec![0.0; param_len];
    let mut adam_t = 0u32;

    let mut losses = Vec::with_capacity(params.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..params.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_sse = 0.0;
        for chunk in order.chunks(params.batch_size) {
            let batch: Vec<(&[f64], f64)> = chunk
                .iter()
                .map(|&i| (train_set.x[i].as_slice(), train_set.target(i)))
                .collect();
            let (grads, mse) = batch_gradients(&model, &batch)?;
            epoch_sse += mse * batch.len() as f64;
            let g = grads.flatten();
            match params.optimizer {
                Optimizer::Sgd => {
                    for (p, gi) in flat.iter_mut().zip(&g) {
                        *p -= params.learning_rate * gi;
                    }
                }
                Optimizer::Adam {
                    beta1,
                    beta2,
                    epsilon,
                } => {
                    adam_t += 1;
                    let bc1 = 1.0 - beta1.powi(adam_t as i32);
                    let bc2 = 1.0 - beta2.powi(adam_t as i32);
                    for i in 0..param_len {
                        adam_m[i] = beta1 * adam_m[i] + (1.0 - beta1) * g[i];
                        adam_v[i] = beta2 * adam_v[i] + (1.0 - beta2) * g[i] * g[i];
                        let m_hat = adam_m[i] / bc1;
                        let v_hat = adam_v[i] / bc2;
                        flat[i] -= params.learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                    }
                }
            }
            model.assign_from_flat(&flat);
        }
        let epoch_loss = epoch_sse / n as f64;
        if !epoch_loss.is_finite() {
            return Err(ForecastError::NonFiniteLoss { epoch });
        }
        losses.push(epoch_loss);
    }
    Ok((model, losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::{
        chrono_split, evaluate, make_windows, minmax_normalize, persistence_metrics, MetricScale,
    };

    fn identity_norm() -> NormParams {
        NormParams::new(0.0, 1.0).unwrap()
    }

    /// Batch MSE computed with the plain forward pass only; the
    /// finite-difference oracle perturbs parameters around this.
    fn batch_loss(model: &ForecastModel, batch: &[(&[f64], f64)]) -> f64 {
        let sse: f64 = batch
            .iter()
            .map(|(x, y)| {
                let e = model.forward(x).unwrap() - y;
                e * e
            })
            .sum();
        sse / batch.len() as f64
    }

    fn fd_gradient(model: &ForecastModel, batch: &[(&[f64], f64)], step: f64) -> Vec<f64> {
        let base = model.flatten();
        let mut grad = vec![0.0; base.len()];
        for i in 0..base.len() {
            let mut probe = model.clone();
            let mut flat = base.clone();
            flat[i] = base[i] + step;
            probe.assign_from_flat(&flat);
            let plus = batch_loss(&probe, batch);
            flat[i] = base[i] - step;
            probe.assign_from_flat(&flat);
            let minus = batch_loss(&probe, batch);
            grad[i] = (plus - minus) / (2.0 * step);
        }
        grad
    }

    /// Relative error with a floor so that two near-zero gradients count
    /// as agreeing.
    fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
        analytic
            .iter()
            .zip(numeric)
            .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-6))
            .fold(0.0, f64::max)
    }

    fn sample_batch(seed: u64, lookback: usize, count: usize) -> Vec<(Vec<f64>, f64)> {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let window: Vec<f64> =
                    (0..lookback).map(|_| rng.random_range(0.0..1.0)).collect();
                let target = rng.random_range(0.0..1.0);
                (window, target)
            })
            .collect()
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        for (seed, hidden) in [(1u64, vec![3]), (2, vec![5]), (3, vec![4, 2]), (4, vec![2, 3])] {
            let model = ForecastModel::init(
                ModelConfig::new(3, 1, hidden),
                identity_norm(),
                seed,
            )
            .unwrap();
            let owned = sample_batch(seed * 31 + 7, 3, 4);
            let batch: Vec<(&[f64], f64)> =
                owned.iter().map(|(x, y)| (x.as_slice(), *y)).collect();
            let (grads, _) = batch_gradients(&model, &batch).unwrap();
            let numeric = fd_gradient(&model, &batch, 1e-5);
            let err = max_rel_error(&grads.flatten(), &numeric);
            assert!(err < 1e-4, "seed {seed}: max relative error {err}");
        }
    }

    #[test]
    fn zero_model_on_zero_targets_has_zero_gradient() {
        let model = ForecastModel::from_parts(
            vec![LstmLayerParams::zeros(1, 3)],
            vec![0.0; 3],
            0.0,
            identity_norm(),
            ModelConfig::new(3, 1, vec![3]),
        )
        .unwrap();
        let batch: Vec<(&[f64], f64)> = vec![(&[0.2, 0.4, 0.6][..], 0.0)];
        let (grads, loss) = batch_gradients(&model, &batch).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.flatten().iter().all(|g| *g == 0.0));
        // Finite differences confirm the stationary point.
        let numeric = fd_gradient(&model, &batch, 1e-5);
        assert!(numeric.iter().all(|g| g.abs() < 1e-9));
    }

    #[test]
    fn duplicated_sample_gradient_equals_single_sample() {
        let model = ForecastModel::init(
            ModelConfig::new(3, 1, vec![4]),
            identity_norm(),
            5,
        )
        .unwrap();
        let window = [0.1, 0.7, 0.3];
        let single: Vec<(&[f64], f64)> = vec![(&window[..], 0.9)];
        let doubled: Vec<(&[f64], f64)> = vec![(&window[..], 0.9), (&window[..], 0.9)];
        let (g1, l1) = batch_gradients(&model, &single).unwrap();
        let (g2, l2) = batch_gradients(&model, &doubled).unwrap();
        assert_eq!(l1, l2);
        // Mean reduction makes the gradients algebraically identical; the
        // accumulation order differs, so compare to round-off.
        for (a, b) in g1.flatten().iter().zip(g2.flatten()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-3));
        }
    }

    #[test]
    fn zero_epochs_returns_the_seeded_initialization() {
        let values: Vec<f64> = (0..20).map(|i| (i as f64) / 20.0).collect();
        let ds = make_windows(&values, 3, 1).unwrap();
        let params = TrainParams {
            epochs: 0,
            seed: 17,
            ..TrainParams::default()
        };
        let (model, losses) =
            train(&ds, ModelConfig::new(3, 1, vec![4]), identity_norm(), &params).unwrap();
        assert!(losses.is_empty());
        let fresh = ForecastModel::init(ModelConfig::new(3, 1, vec![4]), identity_norm(), 17)
            .unwrap();
        assert_eq!(model.flatten(), fresh.flatten());
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let values: Vec<f64> = (0..60)
            .map(|i| 0.5 + 0.4 * ((i as f64) * 0.3).sin())
            .collect();
        let ds = make_windows(&values, 3, 1).unwrap();
        let params = TrainParams {
            epochs: 5,
            batch_size: 8,
            seed: 23,
            ..TrainParams::default()
        };
        let cfg = ModelConfig::new(3, 1, vec![6]);
        let (m1, l1) = train(&ds, cfg.clone(), identity_norm(), &params).unwrap();
        let (m2, l2) = train(&ds, cfg, identity_norm(), &params).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(m1.flatten(), m2.flatten());
    }

    #[test]
    fn diverging_run_reports_non_finite_loss() {
        let values: Vec<f64> = (0..30).map(|i| (i as f64) / 30.0).collect();
        let ds = make_windows(&values, 3, 1).unwrap();
        let params = TrainParams {
            epochs: 30,
            batch_size: 4,
            learning_rate: 1e18,
            seed: 2,
            optimizer: Optimizer::Sgd,
            ..TrainParams::default()
        };
        let err = train(&ds, ModelConfig::new(3, 1, vec![4]), identity_norm(), &params)
            .unwrap_err();
        assert!(matches!(err, ForecastError::NonFiniteLoss { .. }));
    }

    #[test]
    fn noiseless_line_beats_the_persistence_baseline() {
        let values: Vec<f64> = (0..120).map(f64::from).collect();
        let (scaled, norm) = minmax_normalize(&values).unwrap();
        let ds = make_windows(&scaled, 3, 1).unwrap();
        let (train_set, test_set) = chrono_split(&ds, 0.2).unwrap();
        let params = TrainParams {
            epochs: 400,
            batch_size: 8,
            learning_rate: 1e-2,
            seed: 7,
            ..TrainParams::default()
        };
        let (model, losses) =
            train(&train_set, ModelConfig::new(3, 1, vec![8]), norm, &params).unwrap();
        assert!(losses[losses.len() - 1] < losses[0], "loss should drop");
        let metrics = evaluate(&model, &test_set, MetricScale::Denormalized).unwrap();
        let baseline = persistence_metrics(&test_set, &norm, MetricScale::Denormalized).unwrap();
        assert!(
            metrics.mae < baseline.mae,
            "model MAE {} not below persistence MAE {}",
            metrics.mae,
            baseline.mae
        );
    }
}
