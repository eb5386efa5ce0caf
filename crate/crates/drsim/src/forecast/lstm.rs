//! Stacked LSTM regressor with a scalar dense head.
//!
//! Per timestep and layer the standard recurrence applies:
//!
//! ```text
//! i = sigmoid(W_i x + U_i h + b_i)      f = sigmoid(W_f x + U_f h + b_f)
//! g = tanh   (W_g x + U_g h + b_g)      o = sigmoid(W_o x + U_o h + b_o)
//! c <- f * c + i * g                    h <- o * tanh(c)
//! ```
//!
//! States start at zero; the final hidden state of the last layer feeds a
//! dense `hidden -> 1` head. Gate order everywhere (weights, checkpoints,
//! flattened parameter vectors) is fixed to (i, f, g, o).

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::norm::NormParams;
use super::ForecastError;

/// Gate names in serialization order.
pub const GATE_ORDER: [&str; 4] = ["input", "forget", "cell", "output"];

const GATES: usize = 4;
const GATE_INPUT: usize = 0;
const GATE_FORGET: usize = 1;
const GATE_CELL: usize = 2;
const GATE_OUTPUT: usize = 3;

/// Parameters of one LSTM layer. `w[g]` is `input_width x hidden`
/// row-major, `u[g]` is `hidden x hidden` row-major, `b[g]` has one bias
/// per hidden unit; `g` indexes gates in (i, f, g, o) order.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    pub input_width: usize,
    pub hidden: usize,
    pub w: [Vec<f64>; 4],
    pub u: [Vec<f64>; 4],
    pub b: [Vec<f64>; 4],
}

impl LstmLayerParams {
    pub fn zeros(input_width: usize, hidden: usize) -> Self {
        Self {
            input_width,
            hidden,
            w: std::array::from_fn(|_| vec![0.0; input_width * hidden]),
            u: std::array::from_fn(|_| vec![0.0; hidden * hidden]),
            b: std::array::from_fn(|_| vec![0.0; hidden]),
        }
    }

    fn parameter_len(&self) -> usize {
        GATES * (self.input_width * self.hidden + self.hidden * self.hidden + self.hidden)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub lookback: usize,
    pub horizon: usize,
    pub hidden: Vec<usize>,
}

impl ModelConfig {
    pub fn new(lookback: usize, horizon: usize, hidden: Vec<usize>) -> Self {
        Self {
            lookback,
            horizon,
            hidden,
        }
    }

    fn validate(&self) -> Result<(), ForecastError> {
        if self.lookback == 0 {
            return Err(ForecastError::BadModelConfig("lookback must be >= 1".into()));
        }
        if self.horizon != 1 {
            return Err(ForecastError::BadModelConfig(
                "the dense head is hidden -> 1; only horizon 1 is supported".into(),
            ));
        }
        if self.hidden.is_empty() || self.hidden.iter().any(|h| *h == 0) {
            return Err(ForecastError::BadModelConfig(
                "need at least one layer with hidden size >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Trainable parameter count for stacked layers over a scalar input:
/// `sum over layers of 4*(in*h + h^2 + h)` plus the dense head
/// (`h_last + 1`), with one bias vector per gate.
pub fn param_count(hidden: &[usize]) -> usize {
    assert!(!hidden.is_empty(), "at least one layer required");
    let mut input = 1usize;
    let mut total = 0usize;
    for &h in hidden {
        total += GATES * (input * h + h * h + h);
        input = h;
    }
    total + hidden[hidden.len() - 1] + 1
}

/// The trained predictor: stacked LSTM layers, dense head and the scaling
/// constants of the series it was fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastModel {
    layers: Vec<LstmLayerParams>,
    head_w: Vec<f64>,
    head_b: f64,
    norm: NormParams,
    config: ModelConfig,
}

impl ForecastModel {
    /// Seeded initialization: weights and biases uniform in `(-1/sqrt(h),
    /// 1/sqrt(h))` per layer, forget-gate biases set to 1.0, head bias 0.
    pub fn init(config: ModelConfig, norm: NormParams, seed: u64) -> Result<Self, ForecastError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(config.hidden.len());
        let mut input_width = 1usize;
        for &hidden in &config.hidden {
            let bound = 1.0 / (hidden as f64).sqrt();
            let mut draw = |n: usize| -> Vec<f64> {
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            };
            let w = std::array::from_fn(|_| draw(input_width * hidden));
            let u = std::array::from_fn(|_| draw(hidden * hidden));
            let mut b: [Vec<f64>; 4] = std::array::from_fn(|_| draw(hidden));
            b[GATE_FORGET] = vec![1.0; hidden];
            layers.push(LstmLayerParams {
                input_width,
                hidden,
                w,
                u,
                b,
            });
            input_width = hidden;
        }
        let bound = 1.0 / (input_width as f64).sqrt();
        let head_w = (0..input_width)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Ok(Self {
            layers,
            head_w,
            head_b: 0.0,
            norm,
            config,
        })
    }

    /// Assembles a model from explicit parts, validating all shapes and
    /// finiteness. Used by checkpoint loading and by tests that hand-set
    /// weights.
    pub fn from_parts(
        layers: Vec<LstmLayerParams>,
        head_w: Vec<f64>,
        head_b: f64,
        norm: NormParams,
        config: ModelConfig,
    ) -> Result<Self, ForecastError> {
        config.validate()?;
        if layers.len() != config.hidden.len() {
            return Err(ForecastError::BadModelConfig(format!(
                "config names {} layers but {} were supplied",
                config.hidden.len(),
                layers.len()
            )));
        }
        let mut input_width = 1usize;
        for (idx, layer) in layers.iter().enumerate() {
            if layer.input_width != input_width || layer.hidden != config.hidden[idx] {
                return Err(ForecastError::BadModelConfig(format!(
                    "layer {idx}: expected {}x{}, got {}x{}",
                    input_width, config.hidden[idx], layer.input_width, layer.hidden
                )));
            }
            for g in 0..GATES {
                if layer.w[g].len() != layer.input_width * layer.hidden
                    || layer.u[g].len() != layer.hidden * layer.hidden
                    || layer.b[g].len() != layer.hidden
                {
                    return Err(ForecastError::BadModelConfig(format!(
                        "layer {idx}: {} gate arrays have wrong lengths",
                        GATE_ORDER[g]
                    )));
                }
            }
            input_width = layer.hidden;
        }
        if head_w.len() != input_width {
            return Err(ForecastError::BadModelConfig(format!(
                "head expects {} weights, got {}",
                input_width,
                head_w.len()
            )));
        }
        let model = Self {
            layers,
            head_w,
            head_b,
            norm,
            config,
        };
        if model.flatten().iter().any(|p| !p.is_finite()) {
            return Err(ForecastError::BadModelConfig(
                "parameters must be finite".into(),
            ));
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn norm(&self) -> &NormParams {
        &self.norm
    }

    pub fn layers(&self) -> &[LstmLayerParams] {
        &self.layers
    }

    pub fn head(&self) -> (&[f64], f64) {
        (&self.head_w, self.head_b)
    }

    pub fn lookback(&self) -> usize {
        self.config.lookback
    }

    pub fn parameter_len(&self) -> usize {
        self.layers
            .iter()
            .map(LstmLayerParams::parameter_len)
            .sum::<usize>()
            + self.head_w.len()
            + 1
    }

    /// Runs the recurrence over a normalized window and returns the
    /// normalized scalar prediction.
    pub fn forward(&self, window: &[f64]) -> Result<f64, ForecastError> {
        if window.len() != self.config.lookback {
            return Err(ForecastError::ShapeMismatch {
                expected: self.config.lookback,
                got: window.len(),
            });
        }
        let trace = self.forward_traced(window);
        Ok(trace.prediction)
    }

    /// Forward pass retaining every per-step activation, for
    /// backpropagation through time. The window length must already be
    /// validated.
    pub(crate) fn forward_traced(&self, window: &[f64]) -> ForwardTrace {
        let mut h: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.hidden]).collect();
        let mut c: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.hidden]).collect();
        let mut steps: Vec<Vec<StepTrace>> = Vec::with_capacity(window.len());
        for &x_scalar in window {
            let mut x = vec![x_scalar];
            let mut per_layer = Vec::with_capacity(self.layers.len());
            for (l, layer) in self.layers.iter().enumerate() {
                let step = layer_step(layer, &x, &h[l], &c[l]);
                let next_x = step.h.clone();
                per_layer.push(StepTrace {
                    x,
                    h_prev: std::mem::replace(&mut h[l], step.h),
                    c_prev: std::mem::replace(&mut c[l], step.c),
                    gate_i: step.gate_i,
                    gate_f: step.gate_f,
                    gate_g: step.gate_g,
                    gate_o: step.gate_o,
                    tanh_c: step.tanh_c,
                });
                x = next_x;
            }
            steps.push(per_layer);
        }
        let final_h = h.pop().expect("at least one layer");
        let prediction = self
            .head_w
            .iter()
            .zip(&final_h)
            .map(|(w, h)| w * h)
            .sum::<f64>()
            + self.head_b;
        ForwardTrace {
            steps,
            final_h,
            prediction,
        }
    }

    /// Predicts the next slot in original units: scales the raw window
    /// with the model's constants, runs the network and unscales the
    /// output. Strictly increasing in the network output, so candidate
    /// ordering is preserved.
    pub fn predict_next(&self, raw_window: &[f64]) -> Result<f64, ForecastError> {
        let scaled: Vec<f64> = raw_window.iter().map(|x| self.norm.scale(*x)).collect();
        Ok(self.norm.unscale(self.forward(&scaled)?))
    }

    /// All parameters in canonical order: per layer W then U then B, gates
    /// in (i, f, g, o) order within each group; then head weights and head
    /// bias. This is also the checkpoint array order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.parameter_len());
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

    /// Writes a canonical-order parameter vector back into the model.
    pub fn assign_from_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.parameter_len(), "parameter vector length");
        let mut offset = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&flat[offset..offset + dst.len()]);
            offset += dst.len();
        };
        for layer in &mut self.layers {
            for g in 0..GATES {
                take(&mut layer.w[g]);
            }
            for g in 0..GATES {
                take(&mut layer.u[g]);
            }
            for g in 0..GATES {
                take(&mut layer.b[g]);
            }
        }
        take(&mut self.head_w);
        self.head_b = flat[offset];
    }
}

struct StepOut {
    gate_i: Vec<f64>,
    gate_f: Vec<f64>,
    gate_g: Vec<f64>,
    gate_o: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

fn layer_step(layer: &LstmLayerParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepOut {
    let hidden = layer.hidden;
    let mut pre = [
        layer.b[GATE_INPUT].clone(),
        layer.b[GATE_FORGET].clone(),
        layer.b[GATE_CELL].clone(),
        layer.b[GATE_OUTPUT].clone(),
    ];
    for (g, pre_g) in pre.iter_mut().enumerate() {
        for (i, xi) in x.iter().enumerate() {
            let row = &layer.w[g][i * hidden..(i + 1) * hidden];
            for j in 0..hidden {
                pre_g[j] += xi * row[j];
            }
        }
        for (k, hk) in h_prev.iter().enumerate() {
            let row = &layer.u[g][k * hidden..(k + 1) * hidden];
            for j in 0..hidden {
                pre_g[j] += hk * row[j];
            }
        }
    }
    let gate_i: Vec<f64> = pre[GATE_INPUT].iter().map(|v| sigmoid(*v)).collect();
    let gate_f: Vec<f64> = pre[GATE_FORGET].iter().map(|v| sigmoid(*v)).collect();
    let gate_g: Vec<f64> = pre[GATE_CELL].iter().map(|v| v.tanh()).collect();
    let gate_o: Vec<f64> = pre[GATE_OUTPUT].iter().map(|v| sigmoid(*v)).collect();
    let mut c = vec![0.0; hidden];
    let mut tanh_c = vec![0.0; hidden];
    let mut h = vec![0.0; hidden];
    for j in 0..hidden {
        c[j] = gate_f[j] * c_prev[j] + gate_i[j] * gate_g[j];
        tanh_c[j] = c[j].tanh();
        h[j] = gate_o[j] * tanh_c[j];
    }
    StepOut {
        gate_i,
        gate_f,
        gate_g,
        gate_o,
        c,
        tanh_c,
        h,
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-step activations kept for the backward pass, indexed `[t][layer]`.
pub(crate) struct ForwardTrace {
    pub steps: Vec<Vec<StepTrace>>,
    pub final_h: Vec<f64>,
    pub prediction: f64,
}

pub(crate) struct StepTrace {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub gate_i: Vec<f64>,
    pub gate_f: Vec<f64>,
    pub gate_g: Vec<f64>,
    pub gate_o: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_norm() -> NormParams {
        NormParams::new(0.0, 1.0).unwrap()
    }

    fn zero_model(hidden: Vec<usize>, lookback: usize) -> ForecastModel {
        let mut layers = Vec::new();
        let mut input = 1;
        for &h in &hidden {
            layers.push(LstmLayerParams::zeros(input, h));
            input = h;
        }
        ForecastModel::from_parts(
            layers,
            vec![0.0; input],
            0.0,
            identity_norm(),
            ModelConfig::new(lookback, 1, hidden),
        )
        .unwrap()
    }

    #[test]
    fn param_count_matches_reference_architecture() {
        assert_eq!(param_count(&[128, 128]), 198_273);
    }

    #[test]
    fn param_count_smallest_net() {
        // 4*(1 + 1 + 1) + (1 + 1)
        assert_eq!(param_count(&[1]), 14);
    }

    #[test]
    fn param_count_single_layer_hidden_eight() {
        // 4*(8 + 64 + 8) + (8 + 1)
        assert_eq!(param_count(&[8]), 329);
    }

    #[test]
    fn flattened_parameters_match_closed_form() {
        for hidden in [vec![1], vec![3], vec![5, 2], vec![4, 4], vec![2, 7]] {
            let model = ForecastModel::init(
                ModelConfig::new(3, 1, hidden.clone()),
                identity_norm(),
                9,
            )
            .unwrap();
            assert_eq!(model.flatten().len(), param_count(&hidden));
            assert_eq!(model.parameter_len(), param_count(&hidden));
        }
    }

    #[test]
    fn zero_network_predicts_zero() {
        let model = zero_model(vec![4, 3], 3);
        let y = model.forward(&[0.3, 0.9, 0.1]).unwrap();
        assert_eq!(y, 0.0);
    }

    #[test]
    fn wrong_window_length_is_a_shape_mismatch() {
        let model = zero_model(vec![2], 3);
        assert!(matches!(
            model.forward(&[0.5, 0.5]),
            Err(ForecastError::ShapeMismatch {
                expected: 3,
                got: 2
            })
        ));
    }

    #[test]
    fn scalar_network_matches_hand_recurrence() {
        // hidden 1, lookback 1: every gate is a scalar expression.
        let mut layer = LstmLayerParams::zeros(1, 1);
        layer.w = [vec![0.6], vec![-0.4], vec![0.9], vec![0.2]];
        layer.u = [vec![0.1], vec![0.3], vec![-0.5], vec![0.7]];
        layer.b = [vec![0.05], vec![-0.1], vec![0.2], vec![0.0]];
        let model = ForecastModel::from_parts(
            vec![layer],
            vec![1.5],
            0.25,
            identity_norm(),
            ModelConfig::new(1, 1, vec![1]),
        )
        .unwrap();

        let x = 1.0;
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        // h_prev = c_prev = 0, so the recurrent terms vanish.
        let i = sig(0.6 * x + 0.05);
        let f = sig(-0.4 * x - 0.1);
        let g = (0.9 * x + 0.2).tanh();
        let o = sig(0.2 * x);
        let c = f * 0.0 + i * g;
        let h = o * c.tanh();
        let expected = 1.5 * h + 0.25;

        let got = model.forward(&[x]).unwrap();
        assert!((got - expected).abs() < 1e-15, "got {got}, want {expected}");
    }

    #[test]
    fn saturated_gates_reduce_to_double_tanh() {
        // Large positive input/output biases and the forget gate pinned
        // shut: one step collapses to h = tanh(tanh(w_g * x + b_g)).
        let mut layer = LstmLayerParams::zeros(1, 2);
        layer.b[0] = vec![40.0, 40.0]; // input gate open
        layer.b[1] = vec![-40.0, -40.0]; // forget gate shut
        layer.b[3] = vec![40.0, 40.0]; // output gate open
        layer.w[2] = vec![0.8, -1.2];
        layer.b[2] = vec![0.1, 0.4];
        let model = ForecastModel::from_parts(
            vec![layer],
            vec![1.0, 1.0],
            0.0,
            identity_norm(),
            ModelConfig::new(1, 1, vec![2]),
        )
        .unwrap();
        let x: f64 = 0.37;
        let expected = (0.8_f64 * x + 0.1).tanh().tanh() + (-1.2_f64 * x + 0.4).tanh().tanh();
        let got = model.forward(&[x]).unwrap();
        assert!((got - expected).abs() < 1e-12, "got {got}, want {expected}");
    }

    #[test]
    fn output_is_bounded_by_head_norm() {
        // |h| < 1 elementwise, so |y| <= sum |head_w| + |head_b|.
        for seed in 0..20u64 {
            let model = ForecastModel::init(
                ModelConfig::new(3, 1, vec![6, 4]),
                identity_norm(),
                seed,
            )
            .unwrap();
            let (head_w, head_b) = model.head();
            let bound: f64 = head_w.iter().map(|w| w.abs()).sum::<f64>() + head_b.abs();
            for window in [[0.0, 0.5, 1.0], [5.0, -3.0, 2.0], [1e3, 1e3, 1e3]] {
                let y = model.forward(&window).unwrap();
                assert!(y.abs() <= bound, "|{y}| exceeds bound {bound}");
            }
        }
    }

    #[test]
    fn flatten_assign_roundtrip() {
        let mut model = ForecastModel::init(
            ModelConfig::new(3, 1, vec![5, 3]),
            identity_norm(),
            1,
        )
        .unwrap();
        let flat = model.flatten();
        let mut perturbed: Vec<f64> = flat.iter().map(|p| p + 0.5).collect();
        model.assign_from_flat(&perturbed);
        assert_eq!(model.flatten(), perturbed);
        perturbed.reverse();
        model.assign_from_flat(&perturbed);
        assert_eq!(model.flatten(), perturbed);
    }

    #[test]
    fn init_is_seed_deterministic() {
        let cfg = ModelConfig::new(3, 1, vec![4, 4]);
        let a = ForecastModel::init(cfg.clone(), identity_norm(), 11).unwrap();
        let b = ForecastModel::init(cfg, identity_norm(), 11).unwrap();
        assert_eq!(a.flatten(), b.flatten());
    }

    #[test]
    fn forget_bias_initialized_to_one() {
        let model = ForecastModel::init(
            ModelConfig::new(3, 1, vec![4]),
            identity_norm(),
            3,
        )
        .unwrap();
        assert!(model.layers()[0].b[1].iter().all(|b| *b == 1.0));
    }

    #[test]
    fn multi_step_horizon_is_rejected() {
        let err = ForecastModel::init(
            ModelConfig::new(3, 2, vec![4]),
            identity_norm(),
            0,
        )
        .unwrap_err();
        assert!(matches!(err, ForecastError::BadModelConfig(_)));
    }
}
