//! Dense feedforward networks with manual backpropagation and Adam.
//!
//! Only what the dual potentials and Monge maps need: affine layers, ReLU
//! hidden activations, an identity or tanh output, f64 throughout.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{OtError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            // subgradient 0 at the kink
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Layer widths from input to output plus activations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, output_activation: Activation) -> Result<Self> {
        let spec = Self {
            layer_sizes,
            hidden_activation: Activation::Relu,
            output_activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `input → hidden… → output` with ReLU hidden layers.
    pub fn with_hidden(input: usize, hidden: &[usize], output: usize, output_activation: Activation) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Self::new(sizes, output_activation)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(OtError::InvalidInput(
                "a network needs at least an input and an output size".into(),
            ));
        }
        if self.layer_sizes.contains(&0) {
            return Err(OtError::InvalidInput("layer sizes must be positive".into()));
        }
        if self.hidden_activation != Activation::Relu {
            return Err(OtError::InvalidInput("hidden layers use ReLU".into()));
        }
        if self.output_activation == Activation::Relu {
            return Err(OtError::InvalidInput("output activation is identity or tanh".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 2 == self.layer_sizes.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }
}

/// One affine layer; `weight` is `fan_in × fan_out` so that `out = x·W + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    #[serde(with = "nested::matrix")]
    pub weight: Array2<f64>,
    #[serde(with = "nested::vector")]
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
}

impl MlpParams {
    /// He-scaled Gaussian weights, zero biases; deterministic in `seed`.
    pub fn init(spec: &MlpSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| {
                let std = (2.0 / w[0] as f64).sqrt();
                Dense {
                    weight: Array2::from_shape_simple_fn((w[0], w[1]), || {
                        std * rng.sample::<f64, _>(StandardNormal)
                    }),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(spec: &MlpSpec) -> Self {
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| Dense {
                weight: Array2::zeros((w[0], w[1])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    /// All parameters in layer order (weights row-major, then bias).
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    fn slot(&mut self, mut k: usize) -> &mut f64 {
        for l in &mut self.layers {
            let nw = l.weight.len();
            if k < nw {
                let cols = l.weight.ncols();
                return &mut l.weight[[k / cols, k % cols]];
            }
            k -= nw;
            if k < l.bias.len() {
                return &mut l.bias[k];
            }
            k -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn get(&self, k: usize) -> f64 {
        self.values().nth(k).expect("parameter index out of range")
    }

    pub fn set(&mut self, k: usize, v: f64) {
        *self.slot(k) = v;
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.dim() == b.weight.dim() && a.bias.len() == b.bias.len())
    }
}

/// A network: architecture plus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: MlpParams,
}

/// Layer inputs and pre-activations recorded by [`Mlp::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl Mlp {
    pub fn new(spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let params = MlpParams::init(&spec, seed);
        Ok(Self { spec, params })
    }

    pub fn from_parts(spec: MlpSpec, params: MlpParams) -> Result<Self> {
        spec.validate()?;
        let expected = MlpParams::zeros(&spec);
        if !expected.same_shape(&params) {
            return Err(OtError::InvalidInput(
                "parameter shapes do not match the architecture".into(),
            ));
        }
        if !params.is_finite() {
            return Err(OtError::InvalidInput("non-finite parameters".into()));
        }
        Ok(Self { spec, params })
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    fn check_input(&self, xb: &ArrayView2<f64>) -> Result<()> {
        if xb.ncols() != self.input_dim() {
            return Err(OtError::DimensionMismatch {
                expected: self.input_dim(),
                found: xb.ncols(),
            });
        }
        Ok(())
    }

    /// Outputs for every row of `xb`, without a cache.
    pub fn predict(&self, xb: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&xb)?;
        let mut a = xb.to_owned();
        for (l, layer) in self.params.layers.iter().enumerate() {
            let act = self.spec.activation(l);
            let mut z = a.dot(&layer.weight);
            z += &layer.bias;
            z.mapv_inplace(|v| act.apply(v));
            a = z;
        }
        finite_output(a)
    }

    pub fn forward(&self, xb: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(&xb)?;
        let n_layers = self.params.layers.len();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers);
        let mut a = xb.to_owned();
        for (l, layer) in self.params.layers.iter().enumerate() {
            let act = self.spec.activation(l);
            let mut z = a.dot(&layer.weight);
            z += &layer.bias;
            let next = z.mapv(|v| act.apply(v));
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        let out = finite_output(a)?;
        let cache = ForwardCache {
            inputs,
            pre,
            output: out.clone(),
        };
        Ok((out, cache))
    }

    /// Reverse-mode gradients of `Σ out ⊙ out_grad` with respect to the
    /// parameters and to the input batch.
    pub fn backward(&self, cache: &ForwardCache, out_grad: ArrayView2<f64>) -> Result<(MlpParams, Array2<f64>)> {
        if out_grad.dim() != cache.output.dim() {
            return Err(OtError::DimensionMismatch {
                expected: cache.output.ncols(),
                found: out_grad.ncols(),
            });
        }
        if cache.inputs.len() != self.params.layers.len() {
            return Err(OtError::InvalidInput("cache from a different network".into()));
        }
        let mut grads = Vec::with_capacity(self.params.layers.len());
        let mut g = out_grad.to_owned();
        for l in (0..self.params.layers.len()).rev() {
            let act = self.spec.activation(l);
            let z = &cache.pre[l];
            let a_out = if l + 1 < cache.inputs.len() {
                &cache.inputs[l + 1]
            } else {
                &cache.output
            };
            Zip::from(&mut g)
                .and(z)
                .and(a_out)
                .for_each(|gv, &zv, &av| *gv *= act.derivative(zv, av));
            let weight_grad = cache.inputs[l].t().dot(&g);
            let bias_grad = g.sum_axis(Axis(0));
            let next = g.dot(&self.params.layers[l].weight.t());
            grads.push(Dense {
                weight: weight_grad,
                bias: bias_grad,
            });
            g = next;
        }
        grads.reverse();
        Ok((MlpParams { layers: grads }, g))
    }
}

fn finite_output(a: Array2<f64>) -> Result<Array2<f64>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(OtError::NonFinite("network produced a non-finite output".into()));
    }
    Ok(a)
}

/// Moment accumulators for Adam. Only the learning rate is configurable at
/// step time; the decay rates use the usual defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first: MlpParams,
    pub second: MlpParams,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub delta: f64,
}

impl AdamState {
    pub fn new(params: &MlpParams) -> Self {
        Self {
            first: params.zeros_like(),
            second: params.zeros_like(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            delta: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `params` (descent direction).
pub fn adam_step(params: &mut MlpParams, grads: &MlpParams, state: &mut AdamState, lr: f64) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.first) {
        return Err(OtError::InvalidInput("Adam: shape mismatch".into()));
    }
    if !grads.is_finite() {
        return Err(OtError::NonFinite("non-finite gradient passed to Adam".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, delta) = (state.beta1, state.beta2, state.delta);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in params
        .values_mut()
        .zip(grads.values())
        .zip(state.first.values_mut())
        .zip(state.second.values_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + delta);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
    pub passed: bool,
}

/// Compare an analytic gradient against central differences of `loss` on a
/// random subset of at most `max_params` parameters.
///
/// The relative error of one entry is `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn grad_check<F>(
    mlp: &Mlp,
    loss: F,
    analytic: &MlpParams,
    step: f64,
    tol: f64,
    max_params: usize,
    seed: u64,
) -> GradCheckReport
where
    F: Fn(&Mlp) -> f64,
{
    let total = mlp.params.num_params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices: Vec<usize> = if total <= max_params {
        (0..total).collect()
    } else {
        rand::seq::index::sample(&mut rng, total, max_params).into_vec()
    };
    let mut probe = mlp.clone();
    let mut worst = (0.0f64, 0usize);
    for &k in &indices {
        let orig = probe.params.get(k);
        probe.params.set(k, orig + step);
        let up = loss(&probe);
        probe.params.set(k, orig - step);
        let down = loss(&probe);
        probe.params.set(k, orig);
        let numeric = (up - down) / (2.0 * step);
        let a = analytic.get(k);
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        if err > worst.0 || err.is_nan() {
            worst = (err, k);
        }
    }
    GradCheckReport {
        max_rel_error: worst.0,
        worst_index: worst.1,
        checked: indices.len(),
        passed: worst.0 <= tol,
    }
}

/// Serde adapters storing arrays as nested JSON lists.
pub(crate) mod nested {
    pub mod matrix {
        use ndarray::Array2;
        use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(m: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
            let rows: Vec<Vec<f64>> = m.rows().into_iter().map(|r| r.to_vec()).collect();
            rows.serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<f64>, D::Error> {
            let rows = Vec::<Vec<f64>>::deserialize(d)?;
            let cols = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != cols) {
                return Err(D::Error::custom("ragged matrix"));
            }
            let n = rows.len();
            Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect())
                .map_err(D::Error::custom)
        }
    }

    pub mod vector {
        use ndarray::Array1;
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(v: &Array1<f64>, s: S) -> Result<S::Ok, S::Error> {
            v.to_vec().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array1<f64>, D::Error> {
            Ok(Array1::from(Vec::<f64>::deserialize(d)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn scalar_linear(w: f64, b: f64) -> Mlp {
        let spec = MlpSpec::new(vec![1, 1], Activation::Identity).unwrap();
        Mlp::from_parts(
            spec,
            MlpParams {
                layers: vec![Dense {
                    weight: array![[w]],
                    bias: array![b],
                }],
            },
        )
        .unwrap()
    }

    fn random_input(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn init_shapes_and_determinism() {
        let spec = MlpSpec::new(vec![1, 1], Activation::Identity).unwrap();
        let p = MlpParams::init(&spec, 3);
        assert_eq!(p.layers.len(), 1);
        assert_eq!(p.layers[0].weight.dim(), (1, 1));
        assert_eq!(p.layers[0].bias, array![0.0]);

        let spec = MlpSpec::with_hidden(4, &[8, 8], 2, Activation::Tanh).unwrap();
        let a = MlpParams::init(&spec, 11);
        let b = MlpParams::init(&spec, 11);
        assert!(a.values().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a, MlpParams::init(&spec, 12));
    }

    #[test]
    fn init_weight_scale() {
        let spec = MlpSpec::new(vec![200, 300], Activation::Identity).unwrap();
        let p = MlpParams::init(&spec, 5);
        let w = &p.layers[0].weight;
        let mean = w.mean().unwrap();
        let std = (w.mapv(|v| (v - mean).powi(2)).mean().unwrap()).sqrt();
        let target = (2.0f64 / 200.0).sqrt();
        assert!((std / target - 1.0).abs() < 0.1, "std {std} vs {target}");
    }

    #[test]
    fn spec_validation() {
        assert!(MlpSpec::new(vec![3], Activation::Identity).is_err());
        assert!(MlpSpec::new(vec![3, 0, 1], Activation::Identity).is_err());
        assert!(MlpSpec::new(vec![3, 1], Activation::Relu).is_err());
    }

    #[test]
    fn forward_examples() {
        let spec = MlpSpec::with_hidden(3, &[5], 2, Activation::Identity).unwrap();
        let zero = Mlp::from_parts(spec.clone(), MlpParams::zeros(&spec)).unwrap();
        let out = zero.predict(random_input(4, 3, 0).view()).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));

        let lin = scalar_linear(2.0, 1.0);
        let (out, _) = lin.forward(array![[3.0]].view()).unwrap();
        assert_eq!(out, array![[7.0]]);

        let spec = MlpSpec::with_hidden(2, &[16], 3, Activation::Tanh).unwrap();
        let mut net = Mlp::new(spec, 1).unwrap();
        net.params.values_mut().for_each(|v| *v *= 20.0);
        let out = net.predict((random_input(50, 2, 2) * 10.0).view()).unwrap();
        assert!(out.iter().all(|v| v.abs() <= 1.0));
        assert!(net.predict(random_input(1, 3, 0).view()).is_err());
    }

    #[test]
    fn backward_examples() {
        let lin = scalar_linear(2.0, 1.0);
        let (_, cache) = lin.forward(array![[3.0]].view()).unwrap();
        let (g, gin) = lin.backward(&cache, array![[1.0]].view()).unwrap();
        assert_eq!(g.layers[0].weight, array![[3.0]]);
        assert_eq!(g.layers[0].bias, array![1.0]);
        assert_eq!(gin, array![[2.0]]);

        let (g, _) = lin.backward(&cache, array![[0.0]].view()).unwrap();
        assert!(g.values().all(|v| v == 0.0));
        assert!(lin.backward(&cache, array![[1.0, 1.0]].view()).is_err());
    }

    /// Loss `Σ out ⊙ R` for a fixed random `R`, whose gradient is exactly backward(R).
    fn projection_loss(net: &Mlp, x: &Array2<f64>, r: &Array2<f64>) -> f64 {
        (net.predict(x.view()).unwrap() * r).sum()
    }

    fn away_from_kinks(net: &Mlp, x: &Array2<f64>) -> bool {
        let (_, cache) = net.forward(x.view()).unwrap();
        let n = cache.pre.len();
        cache.pre[..n - 1].iter().all(|z| z.iter().all(|v| v.abs() > 1e-3))
    }

    #[test]
    fn backward_matches_finite_differences() {
        for (seed, out_act) in [(0u64, Activation::Identity), (1, Activation::Tanh), (2, Activation::Identity)] {
            let spec = MlpSpec::with_hidden(3, &[7, 5], 2, out_act).unwrap();
            let net = Mlp::new(spec, seed).unwrap();
            let mut s = seed;
            let x = loop {
                let x = random_input(6, 3, 100 + s);
                if away_from_kinks(&net, &x) {
                    break x;
                }
                s += 1;
            };
            let r = random_input(6, 2, 200 + seed);
            let (_, cache) = net.forward(x.view()).unwrap();
            let (g, gin) = net.backward(&cache, r.view()).unwrap();
            let rep = grad_check(&net, |m| projection_loss(m, &x, &r), &g, 1e-5, 1e-5, 10_000, seed);
            assert!(rep.passed, "{rep:?}");
            assert_eq!(rep.checked, net.params.num_params());

            // input gradient
            for i in 0..x.nrows() {
                for k in 0..x.ncols() {
                    let mut xp = x.clone();
                    xp[[i, k]] += 1e-5;
                    let mut xm = x.clone();
                    xm[[i, k]] -= 1e-5;
                    let fd = (projection_loss(&net, &xp, &r) - projection_loss(&net, &xm, &r)) / 2e-5;
                    assert_abs_diff_eq!(gin[[i, k]], fd, epsilon = 1e-7);
                }
            }
        }
    }

    #[test]
    fn grad_check_linear_least_squares() {
        let spec = MlpSpec::new(vec![3, 2], Activation::Identity).unwrap();
        let net = Mlp::new(spec, 4).unwrap();
        let x = random_input(10, 3, 5);
        let y = random_input(10, 2, 6);
        let loss = |m: &Mlp| 0.5 * (m.predict(x.view()).unwrap() - &y).mapv(|v| v * v).sum();
        let (out, cache) = net.forward(x.view()).unwrap();
        let (g, _) = net.backward(&cache, (&out - &y).view()).unwrap();
        let rep = grad_check(&net, loss, &g, 1e-5, 1e-7, 100, 0);
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn grad_check_flags_sabotage() {
        let spec = MlpSpec::with_hidden(2, &[4], 1, Activation::Identity).unwrap();
        let net = Mlp::new(spec, 9).unwrap();
        let x = random_input(5, 2, 7);
        let r = random_input(5, 1, 8);
        let (_, cache) = net.forward(x.view()).unwrap();
        let (mut g, _) = net.backward(&cache, r.view()).unwrap();
        let k = g.num_params() - 1;
        let v = g.get(k);
        g.set(k, v + 0.5 + v.abs());
        let rep = grad_check(&net, |m| projection_loss(m, &x, &r), &g, 1e-5, 1e-5, 1000, 0);
        assert!(!rep.passed);
        assert!(rep.max_rel_error >= 1e-2);
        assert_eq!(rep.worst_index, k);
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let spec = MlpSpec::with_hidden(2, &[3], 1, Activation::Identity).unwrap();
        let mut net = Mlp::new(spec, 0).unwrap();
        let before = net.params.clone();
        let mut st = AdamState::new(&net.params);
        let zeros = net.params.zeros_like();
        for _ in 0..5 {
            adam_step(&mut net.params, &zeros, &mut st, 0.1).unwrap();
        }
        assert_eq!(net.params, before);
        assert_eq!(st.step, 5);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut net = scalar_linear(1.0, 0.0);
        let mut st = AdamState::new(&net.params);
        let mut g = net.params.zeros_like();
        g.layers[0].weight[[0, 0]] = 0.37;
        adam_step(&mut net.params, &g, &mut st, 0.01).unwrap();
        assert_abs_diff_eq!(net.params.layers[0].weight[[0, 0]], 1.0 - 0.01, epsilon = 1e-8);
        assert_eq!(net.params.layers[0].bias[0], 0.0);
    }

    #[test]
    fn adam_minimises_square() {
        let mut net = scalar_linear(1.0, 0.0);
        let mut st = AdamState::new(&net.params);
        for _ in 0..100 {
            let w = net.params.layers[0].weight[[0, 0]];
            let mut g = net.params.zeros_like();
            g.layers[0].weight[[0, 0]] = 2.0 * w;
            adam_step(&mut net.params, &g, &mut st, 0.1).unwrap();
        }
        assert!(net.params.layers[0].weight[[0, 0]].abs() < 0.1);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut net = scalar_linear(1.0, 0.0);
        let mut st = AdamState::new(&net.params);
        let mut g = net.params.zeros_like();
        g.layers[0].bias[0] = f64::NAN;
        assert!(matches!(
            adam_step(&mut net.params, &g, &mut st, 0.1),
            Err(OtError::NonFinite(_))
        ));
    }

    #[test]
    fn forward_is_deterministic() {
        let spec = MlpSpec::with_hidden(3, &[10, 10], 3, Activation::Identity).unwrap();
        let net = Mlp::new(spec, 7).unwrap();
        let x = random_input(20, 3, 1);
        let a = net.predict(x.view()).unwrap();
        let (b, _) = net.forward(x.view()).unwrap();
        assert_eq!(a, b);
    }
}
