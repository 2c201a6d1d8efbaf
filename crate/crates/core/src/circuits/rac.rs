use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_config, random_matrix, random_vector};
use crate::error::{Error, Result};
use crate::format::NamedTensor;
use crate::tensor::{column, matvec, DenseTensor};

/// Architecture of a recurrent arithmetic circuit with multiplicative
/// integration `h_t = (W^H h_{t-1}) * (W^I x_t)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RacSpec {
    /// Sequence length `N`.
    pub length: usize,
    /// Local dimension `M`.
    pub local_dim: usize,
    /// Hidden dimension `R`.
    pub hidden: usize,
    /// 1 (shallow) or 2 (deep).
    pub depth: usize,
}

impl RacSpec {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 || self.local_dim == 0 || self.hidden == 0 {
            return Err(Error::Spec("length, local_dim and hidden must be positive".into()));
        }
        if self.depth != 1 && self.depth != 2 {
            return Err(Error::Spec(format!("depth must be 1 or 2, got {}", self.depth)));
        }
        Ok(())
    }

    fn input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.local_dim
        } else {
            self.hidden
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RacLayer {
    /// `R x R`.
    pub hidden: DenseTensor,
    /// `R x M` for the first layer, `R x R` above it.
    pub input: DenseTensor,
    /// Initial hidden state, length `R`.
    pub h0: DenseTensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RacWeights {
    pub layers: Vec<RacLayer>,
    /// Output weights `W^O` as a length-`R` row.
    pub output: DenseTensor,
}

impl RacWeights {
    /// I.i.d. standard normal `W^H`, `W^I` (per layer, in that order) then `W^O`.
    /// Initial hidden states are all-ones.
    pub fn random<R: Rng + ?Sized>(spec: &RacSpec, rng: &mut R) -> Self {
        let layers = (0..spec.depth)
            .map(|l| {
                let hidden = random_matrix(spec.hidden, spec.hidden, rng);
                let input = random_matrix(spec.hidden, spec.input_dim(l), rng);
                RacLayer {
                    hidden,
                    input,
                    h0: DenseTensor::vector(vec![1.0; spec.hidden]),
                }
            })
            .collect();
        let output = random_vector(spec.hidden, rng);
        Self { layers, output }
    }

    pub fn validate(&self, spec: &RacSpec) -> Result<()> {
        if self.layers.len() != spec.depth {
            return Err(Error::Weights(format!(
                "{} layers for depth {}",
                self.layers.len(),
                spec.depth
            )));
        }
        let r = spec.hidden;
        for (l, layer) in self.layers.iter().enumerate() {
            let checks = [
                ("hidden", layer.hidden.shape().to_vec(), vec![r, r]),
                ("input", layer.input.shape().to_vec(), vec![r, spec.input_dim(l)]),
                ("h0", layer.h0.shape().to_vec(), vec![r]),
            ];
            for (name, got, want) in checks {
                if got != want {
                    return Err(Error::Weights(format!(
                        "layer {} {name} has shape {got:?}, expected {want:?}",
                        l + 1
                    )));
                }
            }
        }
        if self.output.shape() != [r] {
            return Err(Error::Weights(format!(
                "output has shape {:?}, expected [{r}]",
                self.output.shape()
            )));
        }
        Ok(())
    }

    /// Names are `layer<l>.hidden`, `layer<l>.input`, `layer<l>.h0` (1-based) and `output`.
    pub fn to_named(&self) -> Vec<(String, DenseTensor)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{}.hidden", l + 1), layer.hidden.clone()));
            out.push((format!("layer{}.input", l + 1), layer.input.clone()));
            out.push((format!("layer{}.h0", l + 1), layer.h0.clone()));
        }
        out.push(("output".into(), self.output.clone()));
        out
    }

    pub fn from_named(spec: &RacSpec, tensors: &[NamedTensor]) -> Result<Self> {
        let find = |name: String| {
            tensors
                .iter()
                .find(|t| t.name == name)
                .map(|t| t.tensor.clone())
                .ok_or_else(|| Error::Weights(format!("missing tensor `{name}`")))
        };
        let layers = (1..=spec.depth)
            .map(|l| {
                Ok(RacLayer {
                    hidden: find(format!("layer{l}.hidden"))?,
                    input: find(format!("layer{l}.input"))?,
                    h0: find(format!("layer{l}.h0"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let w = Self {
            layers,
            output: find("output".into())?,
        };
        w.validate(spec)?;
        Ok(w)
    }
}

pub(crate) fn rac_forward_unchecked(w: &RacWeights, config: &[usize]) -> f64 {
    let mut states: Vec<Vec<f64>> = w.layers.iter().map(|l| l.h0.data().to_vec()).collect();
    for &s in config {
        let mut below: Vec<f64> = Vec::new();
        for (l, (layer, state)) in w.layers.iter().zip(states.iter_mut()).enumerate() {
            // the first layer's input is one-hot: W^I e^(s) is column s
            let projected_input = if l == 0 {
                column(&layer.input, s)
            } else {
                matvec(&layer.input, &below)
            };
            let carried = matvec(&layer.hidden, state);
            *state = carried.iter().zip(&projected_input).map(|(a, b)| a * b).collect();
            // this step's output feeds both the next step and the layer above
            below = state.clone();
        }
    }
    let top = states.last().expect("at least one layer");
    top.iter().zip(w.output.data()).map(|(a, b)| a * b).sum()
}

/// The whole amplitude tensor in lexicographic configuration order, sharing
/// the hidden states of common prefixes. Equal to evaluating
/// [`rac_forward`] on every configuration.
pub(crate) fn rac_tensor_unchecked(w: &RacWeights, length: usize, local_dim: usize) -> Vec<f64> {
    let depth = w.layers.len();
    let r = w.output.len();
    // states of every prefix, flattened as [prefix][layer][r]
    let mut states: Vec<f64> = w.layers.iter().flat_map(|l| l.h0.data().iter().copied()).collect();
    let stride = depth * r;
    let inputs: Vec<Vec<f64>> = (0..local_dim).map(|s| column(&w.layers[0].input, s)).collect();
    for _ in 0..length {
        let mut next = Vec::with_capacity(states.len() * local_dim);
        for prefix in states.chunks(stride) {
            for input in &inputs {
                let mut below: Vec<f64> = Vec::new();
                for (l, layer) in w.layers.iter().enumerate() {
                    let projected = if l == 0 {
                        input.clone()
                    } else {
                        matvec(&layer.input, &below)
                    };
                    let carried = matvec(&layer.hidden, &prefix[l * r..(l + 1) * r]);
                    below = carried.iter().zip(&projected).map(|(a, b)| a * b).collect();
                    next.extend_from_slice(&below);
                }
            }
        }
        states = next;
    }
    states
        .chunks(stride)
        .map(|s| {
            s[(depth - 1) * r..]
                .iter()
                .zip(w.output.data())
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

/// Circuit output `W^O h_N` on the basis input `e^(s_1), ..., e^(s_N)` (states 0-based).
pub fn rac_forward(spec: &RacSpec, w: &RacWeights, config: &[usize]) -> Result<f64> {
    spec.validate()?;
    w.validate(spec)?;
    check_config(config, spec.length, spec.local_dim)?;
    Ok(rac_forward_unchecked(w, config))
}

/// For every time step, the number of computation paths from the output down to
/// that step's input, following the recurrence's dataflow graph.
pub fn rac_input_path_counts(spec: &RacSpec) -> Vec<usize> {
    let (n, depth) = (spec.length, spec.depth);
    // paths[l][t]: paths from the output to the hidden state of layer l after step t+1
    let mut paths = vec![vec![0usize; n]; depth];
    for t in (0..n).rev() {
        for l in (0..depth).rev() {
            let mut p = usize::from(l == depth - 1 && t == n - 1);
            if t + 1 < n {
                p += paths[l][t + 1]; // carried as hidden state
            }
            if l + 1 < depth {
                p += paths[l + 1][t]; // consumed by the layer above
            }
            paths[l][t] = p;
        }
    }
    paths[0].clone()
}
