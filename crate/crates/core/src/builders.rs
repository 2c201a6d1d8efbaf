//! Exact tensor-network equivalents of the circuits.
//!
//! Every construction recurses over the circuit's dataflow graph from the
//! output down to the inputs, emitting a fresh node for each use of an
//! intermediate vector. Without re-use (non-overlapping CAC, shallow RAC) this
//! yields the Tree TN and the MPS. With re-use every consumer regenerates its
//! producer's sub-branch, so input sites appear on several external legs that
//! share the site label; DUP over those groups recovers the circuit's tensor.

use std::fmt;

use crate::circuits::{
    input_path_counts, rac_input_path_counts, Circuit, CircuitSpec, ConvSpec, ConvWeights, Padding, RacSpec,
    RacWeights, StageKind,
};
use crate::error::{Error, Result};
use crate::network::{attach_dup_deltas, contract_network, dup, DupGroups, LegRef, NetworkBuilder, TensorNetwork};
use crate::tensor::DenseTensor;

/// Cap on raw external legs for recursive constructions.
pub const DEFAULT_LEG_BUDGET: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Construction {
    Tree,
    Mps,
    RecursiveTree,
    RecursiveMps,
}

impl fmt::Display for Construction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Construction::Tree => "tree",
            Construction::Mps => "mps",
            Construction::RecursiveTree => "recursive-tree",
            Construction::RecursiveMps => "recursive-mps",
        })
    }
}

#[derive(Clone, Debug)]
pub struct BuiltNetwork {
    pub tn: TensorNetwork,
    pub dup_groups: DupGroups,
    pub construction: Construction,
    /// Human-readable summary of the circuit the network was built from.
    pub provenance: String,
}

impl BuiltNetwork {
    pub fn raw_leg_count(&self) -> usize {
        self.tn.external_legs().len()
    }

    /// `DUP(contract(tn))`: the order-N amplitude tensor, via index mapping.
    pub fn amplitudes(&self) -> Result<DenseTensor> {
        dup(&contract_network(&self.tn)?, &self.dup_groups)
    }

    /// The same tensor via delta-tensor attachment before contraction.
    pub fn amplitudes_via_deltas(&self) -> Result<DenseTensor> {
        contract_network(&attach_dup_deltas(&self.tn)?)
    }
}

pub fn site_label(site: usize) -> String {
    format!("s{site}")
}

enum Source {
    Site(usize),
    Leg(LegRef),
}

/// Accumulates nodes, routing input-site legs to external legs.
struct Emitter {
    net: NetworkBuilder,
    site_legs: Vec<(usize, LegRef)>,
}

impl Emitter {
    fn new() -> Self {
        Self {
            net: NetworkBuilder::new(),
            site_legs: Vec::new(),
        }
    }

    fn connect(&mut self, leg: LegRef, src: Source) {
        match src {
            Source::Site(s) => self.site_legs.push((s, leg)),
            Source::Leg(other) => {
                self.net.bond(leg, other);
            }
        }
    }

    fn finish(mut self, n_sites: usize, construction: Construction, provenance: String) -> Result<BuiltNetwork> {
        // stable sort keeps first appearances in site order, fixing the DUP order
        self.site_legs.sort_by_key(|(s, _)| *s);
        let mut covered = vec![false; n_sites];
        for &(s, leg) in &self.site_legs {
            covered[s] = true;
            self.net.external(leg, site_label(s));
        }
        if let Some(s) = covered.iter().position(|c| !c) {
            return Err(Error::Network(format!("site {s} is not read by the circuit")));
        }
        let tn = self.net.build()?;
        let dup_groups = tn.dup_groups();
        Ok(BuiltNetwork {
            tn,
            dup_groups,
            construction,
            provenance,
        })
    }
}

fn cac_provenance(spec: &ConvSpec) -> String {
    CircuitSpec::Cac(spec.clone()).to_string()
}

fn rac_provenance(spec: &RacSpec) -> String {
    CircuitSpec::Rac(spec.clone()).to_string()
}

/// Node tensor `a_{i, j_1..j_m} = prod_e W^(slot_e)_{i, j_e}` over the window entries.
fn conv_node_tensor(kernels: &[DenseTensor], slots: &[usize], zeroed: bool) -> DenseTensor {
    let out_dim = kernels[0].shape()[0];
    let mut shape = vec![out_dim];
    shape.extend(slots.iter().map(|&k| kernels[k].shape()[1]));
    if zeroed {
        return DenseTensor::zeros(&shape);
    }
    DenseTensor::from_fn(&shape, |idx| {
        slots
            .iter()
            .enumerate()
            .map(|(e, &k)| kernels[k].get(&[idx[0], idx[e + 1]]))
            .product()
    })
}

/// Tensor with `values[c]` where all indices equal `c`, zero elsewhere.
fn weighted_diagonal(values: &[f64], order: usize) -> DenseTensor {
    let dim = values.len();
    DenseTensor::from_fn(&vec![dim; order], |idx| {
        if idx.iter().all(|&i| i == idx[0]) {
            values[idx[0]]
        } else {
            0.0
        }
    })
}

struct CacEmitter<'a> {
    spec: &'a ConvSpec,
    w: &'a ConvWeights,
    stages: Vec<crate::circuits::Stage>,
    out: Emitter,
}

impl CacEmitter<'_> {
    /// Emits the sub-network producing the output vector of `stage` at `pos`;
    /// `stage == 0` denotes the input sites.
    fn emit(&mut self, stage: usize, pos: usize) -> Source {
        if stage == 0 {
            return Source::Site(pos);
        }
        let st = self.stages[stage - 1];
        let (entries, padded) = self.spec.window(&st, pos);
        let zeroed = padded && self.spec.padding == Padding::Zero;
        let slots: Vec<usize> = entries.iter().map(|e| e.0).collect();
        let node = match st.kind {
            StageKind::Conv(l) => {
                let t = conv_node_tensor(&self.w.kernels[l - 1], &slots, zeroed);
                self.out.net.add_node(format!("conv{l}@{pos}"), t, &[])
            }
            StageKind::Pool => {
                if entries.len() == 1 && !zeroed {
                    return self.emit(stage - 1, entries[0].1);
                }
                let width = self.width_after(stage - 1);
                let diag = vec![if zeroed { 0.0 } else { 1.0 }; width];
                let t = weighted_diagonal(&diag, entries.len() + 1);
                self.out.net.add_node(format!("pool@{pos}"), t, &[])
            }
        };
        for (e, &(_, q)) in entries.iter().enumerate() {
            let src = self.emit(stage - 1, q);
            self.out.connect(LegRef::new(node, e + 1), src);
        }
        Source::Leg(LegRef::new(node, 0))
    }

    fn width_after(&self, stage: usize) -> usize {
        self.stages[..stage]
            .iter()
            .rev()
            .find_map(|s| match s.kind {
                StageKind::Conv(l) => Some(self.spec.widths[l]),
                StageKind::Pool => None,
            })
            .unwrap_or(self.spec.local_dim)
    }
}

fn build_cac(spec: &ConvSpec, w: &ConvWeights, construction: Construction, leg_budget: usize) -> Result<BuiltNetwork> {
    spec.validate()?;
    w.validate(spec)?;
    let required: usize = input_path_counts(spec).iter().sum();
    if required > leg_budget {
        return Err(Error::LegBudgetExceeded {
            required,
            budget: leg_budget,
        });
    }
    let stages = spec.stages();
    let top = stages.len();
    let n_final = spec.final_extent().pow(spec.dims as u32);
    let mut em = CacEmitter {
        spec,
        w,
        stages,
        out: Emitter::new(),
    };
    // global product pooling fused with the linear head
    let root_tensor = weighted_diagonal(w.head.data(), n_final);
    let root = em.out.net.add_node("head", root_tensor, &[]);
    for p in 0..n_final {
        let src = em.emit(top, p);
        em.out.connect(LegRef::new(root, p), src);
    }
    em.out.finish(spec.n_sites(), construction, cac_provenance(spec))
}

/// Tree TN of a non-overlapping CAC (`S = K`, `P = 1`, `side` divisible by `K^L`).
pub fn tree_tn_from_cac(spec: &ConvSpec, w: &ConvWeights) -> Result<BuiltNetwork> {
    spec.validate()?;
    if !spec.is_tree_compatible() {
        return Err(Error::Spec(format!(
            "tree construction needs S = K, P = 1 and side divisible by K^L; got S={}, K={}, P={}, side={}, L={}",
            spec.stride, spec.kernel, spec.pool, spec.side, spec.depth
        )));
    }
    build_cac(spec, w, Construction::Tree, usize::MAX)
}

/// Recursive-Tree TN of an overlapping CAC (`S = 1`).
pub fn recursive_tree_from_cac(spec: &ConvSpec, w: &ConvWeights) -> Result<BuiltNetwork> {
    recursive_tree_from_cac_with_budget(spec, w, DEFAULT_LEG_BUDGET)
}

pub fn recursive_tree_from_cac_with_budget(
    spec: &ConvSpec,
    w: &ConvWeights,
    leg_budget: usize,
) -> Result<BuiltNetwork> {
    spec.validate()?;
    if spec.stride != 1 {
        return Err(Error::Spec(format!(
            "recursive tree construction needs S = 1, got {}",
            spec.stride
        )));
    }
    build_cac(spec, w, Construction::RecursiveTree, leg_budget)
}

struct RacEmitter<'a> {
    w: &'a RacWeights,
    cores: Vec<DenseTensor>,
    out: Emitter,
}

impl RacEmitter<'_> {
    /// Emits the sub-network producing the hidden state of `layer` after `t` steps.
    fn emit(&mut self, layer: usize, t: usize) -> Source {
        if t == 0 {
            let node = self
                .out
                .net
                .add_node(format!("h0[{}]", layer + 1), self.w.layers[layer].h0.clone(), &["out"]);
            return Source::Leg(LegRef::new(node, 0));
        }
        let node = self.out.net.add_node(
            format!("a{}@{t}", layer + 1),
            self.cores[layer].clone(),
            &["out", "hidden", "input"],
        );
        let carried = self.emit(layer, t - 1);
        self.out.connect(LegRef::new(node, 1), carried);
        let input = if layer == 0 {
            Source::Site(t - 1)
        } else {
            self.emit(layer - 1, t)
        };
        self.out.connect(LegRef::new(node, 2), input);
        Source::Leg(LegRef::new(node, 0))
    }
}

/// Order-3 core `a_{ijk} = W^H_{ij} W^I_{ik}` of one recurrent layer.
pub fn rac_core(hidden: &DenseTensor, input: &DenseTensor) -> DenseTensor {
    let r = hidden.shape()[0];
    let m = input.shape()[1];
    DenseTensor::from_fn(&[r, r, m], |i| hidden.get(&[i[0], i[1]]) * input.get(&[i[0], i[2]]))
}

fn build_rac(spec: &RacSpec, w: &RacWeights, construction: Construction, leg_budget: usize) -> Result<BuiltNetwork> {
    spec.validate()?;
    w.validate(spec)?;
    let required: usize = rac_input_path_counts(spec).iter().sum();
    if required > leg_budget {
        return Err(Error::LegBudgetExceeded {
            required,
            budget: leg_budget,
        });
    }
    let cores = w.layers.iter().map(|l| rac_core(&l.hidden, &l.input)).collect();
    let mut em = RacEmitter {
        w,
        cores,
        out: Emitter::new(),
    };
    let head = em.out.net.add_node("output", w.output.clone(), &["in"]);
    let top = em.emit(spec.depth - 1, spec.length);
    em.out.connect(LegRef::new(head, 0), top);
    em.out.finish(spec.length, construction, rac_provenance(spec))
}

/// Translationally invariant MPS of a shallow RAC.
pub fn mps_from_rac(spec: &RacSpec, w: &RacWeights) -> Result<BuiltNetwork> {
    spec.validate()?;
    if spec.depth != 1 {
        return Err(Error::Spec(format!(
            "MPS construction needs depth 1, got {}",
            spec.depth
        )));
    }
    build_rac(spec, w, Construction::Mps, usize::MAX)
}

/// Recursive MPS of a depth-2 RAC.
pub fn recursive_mps_from_rac(spec: &RacSpec, w: &RacWeights) -> Result<BuiltNetwork> {
    recursive_mps_from_rac_with_budget(spec, w, DEFAULT_LEG_BUDGET)
}

pub fn recursive_mps_from_rac_with_budget(spec: &RacSpec, w: &RacWeights, leg_budget: usize) -> Result<BuiltNetwork> {
    spec.validate()?;
    if spec.depth != 2 {
        return Err(Error::Spec(format!(
            "recursive MPS construction needs depth 2, got {}",
            spec.depth
        )));
    }
    build_rac(spec, w, Construction::RecursiveMps, leg_budget)
}

/// The construction matching the circuit's architecture: Tree for
/// non-overlapping CACs, recursive Tree for unit-stride CACs, MPS for shallow
/// RACs and recursive MPS for deep ones.
pub fn build_equivalent(circuit: &Circuit, leg_budget: usize) -> Result<BuiltNetwork> {
    match circuit {
        Circuit::Cac(s, w) if s.is_tree_compatible() => tree_tn_from_cac(s, w),
        Circuit::Cac(s, w) if s.stride == 1 => recursive_tree_from_cac_with_budget(s, w, leg_budget),
        Circuit::Cac(s, _) => Err(Error::Spec(format!(
            "no exact construction for S = K = {} when side {} is not divisible by K^L or P = 2",
            s.kernel, s.side
        ))),
        Circuit::Rac(s, w) if s.depth == 1 => mps_from_rac(s, w),
        Circuit::Rac(s, w) => recursive_mps_from_rac_with_budget(s, w, leg_budget),
        Circuit::Product(_) => Err(Error::Spec(
            "a product of independent sites has no connected network".into(),
        )),
    }
}
