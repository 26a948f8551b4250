//! Single-hidden-layer `p–q–1` perceptron with a linear output unit.
//!
//! Flat parameter layout, shared by the global and local optimizers:
//!
//! ```text
//! [ hidden_weights (q×p, row-major) | hidden_biases (q) | output_weights (q) | output_bias | λ? ]
//! ```
//!
//! λ occupies the last slot only when the activation is `ArandaFree`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::activation::ActivationSpec;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_HIDDEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
}

impl Topology {
    pub fn new(inputs: usize, hidden: usize) -> Self {
        Self {
            inputs,
            hidden,
            outputs: 1,
        }
    }

    pub fn validate(&self, max_hidden: usize) -> Result<()> {
        if self.inputs == 0 {
            return Err(Error::Config("topology needs at least one input".into()));
        }
        if self.hidden == 0 || self.hidden > max_hidden {
            return Err(Error::Config(format!(
                "hidden units must be in 1..={max_hidden}, got {}",
                self.hidden
            )));
        }
        if self.outputs != 1 {
            return Err(Error::Config(format!(
                "only a single output unit is supported, got {}",
                self.outputs
            )));
        }
        Ok(())
    }

    /// Connection count `pq + qm`.
    pub fn connections(&self) -> usize {
        self.inputs * self.hidden + self.hidden * self.outputs
    }

    /// Weights and biases, λ excluded.
    pub fn weight_count(&self) -> usize {
        self.connections() + self.hidden + self.outputs
    }

    pub fn label(&self) -> String {
        format!("{}-{}-{}", self.inputs, self.hidden, self.outputs)
    }
}

/// Number of adjustable parameters: `pq + qm + q + m`, plus one for a free λ.
pub fn param_count(topology: &Topology, spec: &ActivationSpec) -> usize {
    topology.weight_count() + usize::from(spec.is_free())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub topology: Topology,
    pub hidden_weights: Vec<f64>,
    pub hidden_biases: Vec<f64>,
    pub output_weights: Vec<f64>,
    pub output_bias: f64,
    pub activation: ActivationSpec,
}

/// A candidate point in the global search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub vector: Vec<f64>,
    pub cost: f64,
}

/// Forward pass with the intermediates needed for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub output: f64,
    pub hidden_pre: Vec<f64>,
    pub hidden_act: Vec<f64>,
}

/// Every weight and bias drawn from U(0,1); λ starts at 1 when free.
pub fn init_params<R: Rng + ?Sized>(
    topology: Topology,
    spec: ActivationSpec,
    rng: &mut R,
) -> Result<MlpParams> {
    topology.validate(usize::MAX)?;
    spec.validate()?;
    let mut draw = |n: usize| (0..n).map(|_| rng.random::<f64>()).collect::<Vec<_>>();
    let hidden_weights = draw(topology.inputs * topology.hidden);
    let hidden_biases = draw(topology.hidden);
    let output_weights = draw(topology.hidden);
    let output_bias = draw(1)[0];
    let activation = if spec.is_free() {
        spec.with_lambda(1.0_f64.clamp(spec.lambda_min, spec.lambda_max))
    } else {
        spec
    };
    Ok(MlpParams {
        topology,
        hidden_weights,
        hidden_biases,
        output_weights,
        output_bias,
        activation,
    })
}

impl MlpParams {
    pub fn param_count(&self) -> usize {
        param_count(&self.topology, &self.activation)
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(&self.hidden_weights);
        v.extend_from_slice(&self.hidden_biases);
        v.extend_from_slice(&self.output_weights);
        v.push(self.output_bias);
        if self.activation.is_free() {
            v.push(self.activation.lambda);
        }
        v
    }

    pub fn unflatten(topology: Topology, spec: ActivationSpec, vector: &[f64]) -> Result<Self> {
        let expected = param_count(&topology, &spec);
        if vector.len() != expected {
            return Err(Error::Dimension {
                expected,
                got: vector.len(),
                context: "flat parameter vector",
            });
        }
        let (p, q) = (topology.inputs, topology.hidden);
        let (hw, rest) = vector.split_at(p * q);
        let (hb, rest) = rest.split_at(q);
        let (ow, rest) = rest.split_at(q);
        let activation = if spec.is_free() {
            spec.with_lambda(rest[1])
        } else {
            spec
        };
        Ok(Self {
            topology,
            hidden_weights: hw.to_vec(),
            hidden_biases: hb.to_vec(),
            output_weights: ow.to_vec(),
            output_bias: rest[0],
            activation,
        })
    }

    /// Overwrite weights and biases from the leading `weight_count` entries,
    /// leaving λ untouched.
    pub fn set_weights(&mut self, weights: &[f64]) {
        let (p, q) = (self.topology.inputs, self.topology.hidden);
        debug_assert_eq!(weights.len(), self.topology.weight_count());
        self.hidden_weights.copy_from_slice(&weights[..p * q]);
        self.hidden_biases.copy_from_slice(&weights[p * q..p * q + q]);
        self.output_weights
            .copy_from_slice(&weights[p * q + q..p * q + 2 * q]);
        self.output_bias = weights[p * q + 2 * q];
    }

    pub fn weights(&self) -> Vec<f64> {
        let mut v = self.flatten();
        v.truncate(self.topology.weight_count());
        v
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardPass> {
        self.check_input(x)?;
        let q = self.topology.hidden;
        let mut hidden_pre = vec![0.0; q];
        let mut hidden_act = vec![0.0; q];
        let mut output = self.output_bias;
        for k in 0..q {
            let a = self.pre_activation(k, x);
            if !a.is_finite() {
                return Err(Error::Numerical(format!("non-finite pre-activation in unit {k}")));
            }
            let h = self.activation.eval(a)?;
            hidden_pre[k] = a;
            hidden_act[k] = h;
            output += self.output_weights[k] * h;
        }
        Ok(ForwardPass {
            output,
            hidden_pre,
            hidden_act,
        })
    }

    /// Output only. Non-finite pre-activations propagate as NaN instead of
    /// an error so optimizers can score such points as infinitely bad.
    pub fn predict(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.topology.inputs);
        let mut out = self.output_bias;
        for k in 0..self.topology.hidden {
            let a = self.pre_activation(k, x);
            if !a.is_finite() {
                return f64::NAN;
            }
            out += self.output_weights[k] * self.activation.value_unchecked(a);
        }
        out
    }

    /// Output and `∂ŷ/∂w` over the weight layout (λ excluded), written into `grad`.
    pub(crate) fn predict_with_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let (p, q) = (self.topology.inputs, self.topology.hidden);
        let mut out = self.output_bias;
        for k in 0..q {
            let a = self.pre_activation(k, x);
            let (h, dh) = self.activation.value_and_deriv(a);
            let v = self.output_weights[k];
            out += v * h;
            let back = v * dh;
            let row = &mut grad[k * p..(k + 1) * p];
            for (g, xi) in row.iter_mut().zip(x) {
                *g = back * xi;
            }
            grad[p * q + k] = back;
            grad[p * q + q + k] = h;
        }
        grad[p * q + 2 * q] = 1.0;
        out
    }

    #[inline]
    fn pre_activation(&self, k: usize, x: &[f64]) -> f64 {
        let p = self.topology.inputs;
        let row = &self.hidden_weights[k * p..(k + 1) * p];
        self.hidden_biases[k] + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.topology.inputs {
            return Err(Error::Dimension {
                expected: self.topology.inputs,
                got: x.len(),
                context: "network input",
            });
        }
        Ok(())
    }
}

/// JSON checkpoint of a parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsDocument {
    pub topology: Topology,
    pub activation: ActivationSpec,
    pub vector: Vec<f64>,
}

impl ParamsDocument {
    pub fn from_params(params: &MlpParams) -> Self {
        Self {
            topology: params.topology,
            activation: params.activation,
            vector: params.flatten(),
        }
    }

    pub fn into_params(self) -> Result<MlpParams> {
        self.activation.validate()?;
        MlpParams::unflatten(self.topology, self.activation, &self.vector)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::ActivationKind;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_params(p: usize, q: usize, spec: ActivationSpec, seed: u64) -> MlpParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = init_params(Topology::new(p, q), spec, &mut rng).unwrap();
        // centre weights so both activation tails are exercised
        for w in params.hidden_weights.iter_mut().chain(&mut params.hidden_biases) {
            *w = 4.0 * (*w - 0.5);
        }
        params
    }

    #[test]
    fn param_counts_match_reference_architectures() {
        let free = ActivationSpec::aranda_free();
        let logit = ActivationSpec::logit();
        let cloglog = ActivationSpec::cloglog();
        for &(p, q, aranda, fixed) in &[
            (5, 2, 16, 15),
            (3, 3, 17, 16),
            (4, 4, 26, 25),
            (8, 4, 42, 41),
            (3, 4, 22, 21),
        ] {
            let t = Topology::new(p, q);
            assert_eq!(param_count(&t, &free), aranda);
            assert_eq!(param_count(&t, &logit), fixed);
            assert_eq!(param_count(&t, &cloglog), fixed);
        }
        assert_eq!(param_count(&Topology::new(1, 1), &logit), 4);
        assert_eq!(Topology::new(5, 2).connections(), 12);
    }

    #[test]
    fn init_is_seeded_and_uniform() {
        let t = Topology::new(5, 2);
        let spec = ActivationSpec::aranda_free();
        let a = init_params(t, spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = init_params(t, spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.flatten(), b.flatten());
        assert_eq!(a.flatten().len(), 16);
        assert_eq!(a.activation.lambda, 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let big = init_params(Topology::new(100, 100), ActivationSpec::logit(), &mut rng).unwrap();
        let w = &big.hidden_weights;
        assert_eq!(w.len(), 10_000);
        assert!(w.iter().all(|v| (0.0..1.0).contains(v)));
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        assert!((0.48..=0.52).contains(&mean), "mean {mean}");
    }

    #[test]
    fn forward_examples() {
        let mut params = random_params(3, 2, ActivationSpec::logit(), 3);
        params.output_weights = vec![0.0, 0.0];
        params.output_bias = 1.25;
        assert_eq!(params.forward(&[0.1, -4.0, 9.0]).unwrap().output, 1.25);
        assert_eq!(params.forward(&[7.0, 2.0, -1.0]).unwrap().output, 1.25);

        let unit = MlpParams {
            topology: Topology::new(1, 1),
            hidden_weights: vec![1.0],
            hidden_biases: vec![0.0],
            output_weights: vec![1.0],
            output_bias: 0.0,
            activation: ActivationSpec::aranda_free(),
        };
        let fp = unit.forward(&[0.0]).unwrap();
        assert_eq!(fp.output, 0.5);
        assert_eq!(fp.hidden_pre, vec![0.0]);
        assert_eq!(fp.hidden_act, vec![0.5]);
    }

    #[test]
    fn forward_matches_independent_matrix_arithmetic() {
        for seed in 0..20 {
            let spec = ActivationSpec::aranda_fixed(0.3 + 0.2 * seed as f64);
            let params = random_params(4, 3, spec, seed);
            let x = [0.2, -0.7, 1.1, 0.4];
            // independent re-implementation with the textbook formula
            let mut y = params.output_bias;
            for k in 0..3 {
                let mut a = params.hidden_biases[k];
                for j in 0..4 {
                    a += params.hidden_weights[k * 4 + j] * x[j];
                }
                let lam = spec.lambda;
                let h = 1.0 - (1.0 + lam * a.exp()).powf(-1.0 / lam);
                y += params.output_weights[k] * h;
            }
            let fp = params.forward(&x).unwrap();
            assert!((fp.output - y).abs() < 1e-12);
            assert!((params.predict(&x) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let params = random_params(3, 2, ActivationSpec::logit(), 0);
        assert!(matches!(
            params.forward(&[1.0, 2.0]),
            Err(Error::Dimension { expected: 3, got: 2, .. })
        ));
    }

    #[test]
    fn unflatten_rejects_wrong_length() {
        let t = Topology::new(5, 2);
        assert!(MlpParams::unflatten(t, ActivationSpec::aranda_free(), &[0.0; 15]).is_err());
        assert!(MlpParams::unflatten(t, ActivationSpec::logit(), &[0.0; 16]).is_err());
    }

    #[test]
    fn lambda_is_last_slot() {
        let mut params = random_params(2, 2, ActivationSpec::aranda_free(), 4);
        params.activation.lambda = 2.5;
        let v = params.flatten();
        assert_eq!(*v.last().unwrap(), 2.5);
        assert_eq!(params.weights().len(), v.len() - 1);
        let fixed = random_params(2, 2, ActivationSpec::cloglog(), 4);
        assert_eq!(fixed.flatten().len(), fixed.topology.weight_count());
    }

    #[test]
    fn topology_bounds() {
        assert!(Topology::new(3, 4).validate(DEFAULT_MAX_HIDDEN).is_ok());
        assert!(Topology::new(3, 5).validate(DEFAULT_MAX_HIDDEN).is_err());
        assert!(Topology::new(0, 2).validate(DEFAULT_MAX_HIDDEN).is_err());
        assert!(Topology::new(3, 0).validate(DEFAULT_MAX_HIDDEN).is_err());
    }

    #[test]
    fn document_round_trip() {
        let params = random_params(3, 3, ActivationSpec::aranda_free().with_lambda(1.7), 8);
        let json = serde_json::to_string(&ParamsDocument::from_params(&params)).unwrap();
        let back: ParamsDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(back.into_params().unwrap(), params);
    }

    proptest! {
        #[test]
        fn flatten_round_trip(
            p in 1usize..6,
            q in 1usize..5,
            free in any::<bool>(),
            seed in any::<u64>(),
        ) {
            let spec = if free { ActivationSpec::aranda_free() } else { ActivationSpec::logit() };
            let mut params = random_params(p, q, spec, seed);
            if free {
                params.activation.lambda = 0.5 + (seed % 7) as f64;
            }
            let flat = params.flatten();
            prop_assert_eq!(flat.len(), param_count(&params.topology, &spec));
            let back = MlpParams::unflatten(params.topology, spec, &flat).unwrap();
            prop_assert_eq!(back.flatten(), flat);
            prop_assert_eq!(back.activation.kind == ActivationKind::ArandaFree, free);
        }

        #[test]
        fn output_linear_in_output_layer(seed in any::<u64>(), scale in -3.0f64..3.0) {
            let params = random_params(3, 3, ActivationSpec::aranda_fixed(1.5), seed);
            let x = [0.3, 0.6, 0.9];
            let fp = params.forward(&x).unwrap();
            let mut scaled = params.clone();
            scaled.output_weights.iter_mut().for_each(|w| *w *= scale);
            scaled.output_bias *= scale;
            let y = scaled.forward(&x).unwrap().output;
            prop_assert!((y - scale * fp.output).abs() < 1e-12 * (1.0 + fp.output.abs() * scale.abs()));
        }
    }
}
