//! Convolutional and recurrent arithmetic circuits evaluated on standard-basis
//! inputs, and brute-force materialization of the tensor they realize.

mod conv;
mod rac;

pub use conv::{
    cac_forward, input_path_counts, param_count, total_receptive_field, total_stride, trace_receptive_field, ConvSpec,
    ConvWeights, Padding, Stage, StageKind,
};
pub use rac::{rac_forward, rac_input_path_counts, RacLayer, RacSpec, RacWeights};

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// Default cap on the number of entries a materialized tensor may have.
pub const DEFAULT_BUDGET: usize = 1 << 20;

/// One local state per site, each in `0..M`.
pub type BasisConfig = [usize];

pub(crate) fn check_config(config: &BasisConfig, n_sites: usize, local_dim: usize) -> Result<()> {
    if config.len() != n_sites {
        return Err(Error::Config(format!("expected {n_sites} sites, got {}", config.len())));
    }
    if let Some((site, &s)) = config.iter().enumerate().find(|(_, &s)| s >= local_dim) {
        return Err(Error::Config(format!(
            "site {site} holds state {s}, local dimension is {local_dim}"
        )));
    }
    Ok(())
}

pub(crate) fn random_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseTensor {
    DenseTensor::from_fn(&[rows, cols], |_| StandardNormal.sample(rng))
}

pub(crate) fn random_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> DenseTensor {
    DenseTensor::from_fn(&[len], |_| StandardNormal.sample(rng))
}

/// `M^N`, or `None` on overflow.
pub fn state_space_size(n_sites: usize, local_dim: usize) -> Option<usize> {
    local_dim.checked_pow(u32::try_from(n_sites).ok()?)
}

/// Evaluates `amplitude` on every basis configuration and assembles the order-N
/// tensor in lexicographic configuration order. Configurations are evaluated in
/// parallel; the result does not depend on scheduling.
pub fn materialize<F>(amplitude: F, n_sites: usize, local_dim: usize, budget: usize) -> Result<DenseTensor>
where
    F: Fn(&BasisConfig) -> f64 + Sync,
{
    let required = state_space_size(n_sites, local_dim).unwrap_or(usize::MAX);
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let data: Vec<f64> = (0..required)
        .into_par_iter()
        .map_init(
            || vec![0usize; n_sites],
            |config, flat| {
                let mut rest = flat;
                for slot in config.iter_mut().rev() {
                    *slot = rest % local_dim;
                    rest /= local_dim;
                }
                amplitude(config)
            },
        )
        .collect();
    DenseTensor::new(vec![local_dim; n_sites], data)
}

/// The order-N tensor realized by a convolutional circuit.
pub fn materialize_cac(spec: &ConvSpec, w: &ConvWeights, budget: usize) -> Result<DenseTensor> {
    spec.validate()?;
    w.validate(spec)?;
    materialize(
        |c| conv::cac_forward_unchecked(spec, w, c),
        spec.n_sites(),
        spec.local_dim,
        budget,
    )
}

/// The order-N tensor realized by a recurrent circuit.
pub fn materialize_rac(spec: &RacSpec, w: &RacWeights, budget: usize) -> Result<DenseTensor> {
    spec.validate()?;
    w.validate(spec)?;
    materialize(
        |c| rac::rac_forward_unchecked(w, c),
        spec.length,
        spec.local_dim,
        budget,
    )
}

/// Architecture of any supported circuit family.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CircuitSpec {
    Cac(ConvSpec),
    Rac(RacSpec),
    /// Independent sites, `y = prod_j v_j[s_j]`: the depth-zero limit with no
    /// entanglement across any cut.
    Product {
        sites: usize,
        local_dim: usize,
    },
}

impl fmt::Display for CircuitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CircuitSpec::Cac(s) => write!(
                f,
                "cac d={} side={} M={} L={} K={} S={} P={} widths={:?}",
                s.dims, s.side, s.local_dim, s.depth, s.kernel, s.stride, s.pool, s.widths
            ),
            CircuitSpec::Rac(s) => write!(f, "rac N={} M={} R={} L={}", s.length, s.local_dim, s.hidden, s.depth),
            CircuitSpec::Product { sites, local_dim } => write!(f, "product N={sites} M={local_dim}"),
        }
    }
}

impl CircuitSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            CircuitSpec::Cac(s) => s.validate(),
            CircuitSpec::Rac(s) => s.validate(),
            CircuitSpec::Product { sites, local_dim } => {
                if *sites == 0 || *local_dim == 0 {
                    Err(Error::Spec("product family needs positive sites and local_dim".into()))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn n_sites(&self) -> usize {
        match self {
            CircuitSpec::Cac(s) => s.n_sites(),
            CircuitSpec::Rac(s) => s.length,
            CircuitSpec::Product { sites, .. } => *sites,
        }
    }

    pub fn local_dim(&self) -> usize {
        match self {
            CircuitSpec::Cac(s) => s.local_dim,
            CircuitSpec::Rac(s) => s.local_dim,
            CircuitSpec::Product { local_dim, .. } => *local_dim,
        }
    }

    /// Draws i.i.d. standard normal weights.
    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> Circuit {
        match self {
            CircuitSpec::Cac(s) => Circuit::Cac(s.clone(), ConvWeights::random(s, rng)),
            CircuitSpec::Rac(s) => Circuit::Rac(s.clone(), RacWeights::random(s, rng)),
            CircuitSpec::Product { sites, local_dim } => {
                Circuit::Product((0..*sites).map(|_| random_vector(*local_dim, rng)).collect())
            }
        }
    }

    /// Reads weights from a named-tensor bundle.
    pub fn with_weights(&self, tensors: &[crate::format::NamedTensor]) -> Result<Circuit> {
        self.validate()?;
        match self {
            CircuitSpec::Cac(s) => Ok(Circuit::Cac(s.clone(), ConvWeights::from_named(s, tensors)?)),
            CircuitSpec::Rac(s) => Ok(Circuit::Rac(s.clone(), RacWeights::from_named(s, tensors)?)),
            CircuitSpec::Product { sites, local_dim } => {
                let vectors = (0..*sites)
                    .map(|j| {
                        let name = format!("site{j}");
                        let t = tensors
                            .iter()
                            .find(|t| t.name == name)
                            .ok_or_else(|| Error::Weights(format!("missing tensor `{name}`")))?;
                        if t.tensor.shape() != [*local_dim] {
                            return Err(Error::Weights(format!("`{name}` must have shape [{local_dim}]")));
                        }
                        Ok(t.tensor.clone())
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Circuit::Product(vectors))
            }
        }
    }
}

/// A circuit together with its weights.
#[derive(Clone, Debug, PartialEq)]
pub enum Circuit {
    Cac(ConvSpec, ConvWeights),
    Rac(RacSpec, RacWeights),
    Product(Vec<DenseTensor>),
}

impl Circuit {
    pub fn spec(&self) -> CircuitSpec {
        match self {
            Circuit::Cac(s, _) => CircuitSpec::Cac(s.clone()),
            Circuit::Rac(s, _) => CircuitSpec::Rac(s.clone()),
            Circuit::Product(v) => CircuitSpec::Product {
                sites: v.len(),
                local_dim: v[0].len(),
            },
        }
    }

    pub fn forward(&self, config: &BasisConfig) -> Result<f64> {
        match self {
            Circuit::Cac(s, w) => cac_forward(s, w, config),
            Circuit::Rac(s, w) => rac_forward(s, w, config),
            Circuit::Product(v) => {
                check_config(config, v.len(), v[0].len())?;
                Ok(product_amplitude(v, config))
            }
        }
    }

    /// The amplitude tensor by the fastest exact route available: prefix
    /// sharing for recurrent circuits, [`Circuit::materialize`] otherwise.
    pub fn amplitudes(&self, budget: usize) -> Result<DenseTensor> {
        match self {
            Circuit::Rac(s, w) => {
                s.validate()?;
                w.validate(s)?;
                let required = state_space_size(s.length, s.local_dim).unwrap_or(usize::MAX);
                if required > budget {
                    return Err(Error::BudgetExceeded { required, budget });
                }
                DenseTensor::new(
                    vec![s.local_dim; s.length],
                    rac::rac_tensor_unchecked(w, s.length, s.local_dim),
                )
            }
            _ => self.materialize(budget),
        }
    }

    pub fn materialize(&self, budget: usize) -> Result<DenseTensor> {
        match self {
            Circuit::Cac(s, w) => materialize_cac(s, w, budget),
            Circuit::Rac(s, w) => materialize_rac(s, w, budget),
            Circuit::Product(v) => materialize(|c| product_amplitude(v, c), v.len(), v[0].len(), budget),
        }
    }

    /// Weights as named tensors, for the `dten` bundle format.
    pub fn weights_named(&self) -> Vec<(String, DenseTensor)> {
        match self {
            Circuit::Cac(_, w) => w.to_named(),
            Circuit::Rac(_, w) => w.to_named(),
            Circuit::Product(v) => v
                .iter()
                .enumerate()
                .map(|(j, t)| (format!("site{j}"), t.clone()))
                .collect(),
        }
    }
}

impl Circuit {
    /// Trainable weights flattened in a fixed order: kernels then head for
    /// convolutional circuits, per layer `W^H` and `W^I` then `W^O` for recurrent
    /// ones. Initial hidden states are not trainable.
    pub fn params(&self) -> Vec<f64> {
        self.trainable().iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    /// The same circuit with trainable weights replaced from `params`.
    pub fn with_params(&self, params: &[f64]) -> Circuit {
        let mut out = self.clone();
        let mut rest = params;
        for t in out.trainable_mut() {
            let (head, tail) = rest.split_at(t.len());
            t.data_mut().copy_from_slice(head);
            rest = tail;
        }
        assert!(rest.is_empty(), "parameter vector longer than the circuit");
        out
    }

    fn trainable(&self) -> Vec<&DenseTensor> {
        match self {
            Circuit::Cac(_, w) => w.kernels.iter().flatten().chain([&w.head]).collect(),
            Circuit::Rac(_, w) => w
                .layers
                .iter()
                .flat_map(|l| [&l.hidden, &l.input])
                .chain([&w.output])
                .collect(),
            Circuit::Product(v) => v.iter().collect(),
        }
    }

    fn trainable_mut(&mut self) -> Vec<&mut DenseTensor> {
        match self {
            Circuit::Cac(_, w) => w.kernels.iter_mut().flatten().chain([&mut w.head]).collect(),
            Circuit::Rac(_, w) => w
                .layers
                .iter_mut()
                .flat_map(|l| [&mut l.hidden, &mut l.input])
                .chain([&mut w.output])
                .collect(),
            Circuit::Product(v) => v.iter_mut().collect(),
        }
    }
}

fn product_amplitude(vectors: &[DenseTensor], config: &BasisConfig) -> f64 {
    vectors.iter().zip(config).map(|(v, &s)| v.data()[s]).product()
}
