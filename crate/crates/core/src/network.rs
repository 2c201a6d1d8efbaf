//! Tensor networks whose external legs may repeat a label, their contraction
//! to a dense tensor, and the DUP operation that equates repeated indices.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{advance, contract, delta_tensor, DenseTensor};

/// A leg of a node: `(node index, leg index)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LegRef {
    pub node: usize,
    pub leg: usize,
}

impl LegRef {
    pub fn new(node: usize, leg: usize) -> Self {
        Self { node, leg }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub name: String,
    pub tensor: DenseTensor,
    /// One label per leg, for display and file round trips.
    pub legs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExternalLeg {
    pub at: LegRef,
    pub label: String,
}

/// A connected network of dense tensors. Every leg is either bonded to exactly
/// one other leg or exposed as exactly one external leg. Several external legs
/// may carry the same label; such a label is a duplicated index.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorNetwork {
    nodes: Vec<Node>,
    bonds: Vec<(LegRef, LegRef)>,
    external: Vec<ExternalLeg>,
}

impl TensorNetwork {
    pub fn new(nodes: Vec<Node>, bonds: Vec<(LegRef, LegRef)>, external: Vec<ExternalLeg>) -> Result<Self> {
        let tn = Self { nodes, bonds, external };
        tn.validate()?;
        Ok(tn)
    }

    fn extent(&self, leg: LegRef) -> usize {
        self.nodes[leg.node].tensor.shape()[leg.leg]
    }

    fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Network("network has no nodes".into()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.legs.len() != n.tensor.order() {
                return Err(Error::Network(format!(
                    "node {i} names {} legs but its tensor has order {}",
                    n.legs.len(),
                    n.tensor.order()
                )));
            }
        }

        let mut uses: Vec<Vec<u8>> = self.nodes.iter().map(|n| vec![0; n.tensor.order()]).collect();
        let mut mark = |leg: LegRef| -> Result<()> {
            let slot = uses
                .get_mut(leg.node)
                .and_then(|legs| legs.get_mut(leg.leg))
                .ok_or_else(|| Error::Network(format!("leg {leg:?} does not exist")))?;
            *slot += 1;
            Ok(())
        };
        for &(a, b) in &self.bonds {
            mark(a)?;
            mark(b)?;
        }
        for e in &self.external {
            mark(e.at)?;
        }
        for (node, legs) in uses.iter().enumerate() {
            for (leg, &count) in legs.iter().enumerate() {
                match count {
                    1 => {}
                    0 => return Err(Error::Network(format!("dangling leg {leg} on node {node}"))),
                    _ => {
                        return Err(Error::Network(format!(
                            "leg {leg} on node {node} is used {count} times"
                        )))
                    }
                }
            }
        }

        for &(a, b) in &self.bonds {
            if a == b {
                return Err(Error::Network(format!("leg {a:?} bonded to itself")));
            }
            if self.extent(a) != self.extent(b) {
                return Err(Error::Network(format!(
                    "bond {a:?}-{b:?} joins extents {} and {}",
                    self.extent(a),
                    self.extent(b)
                )));
            }
        }

        let mut label_extent: HashMap<&str, usize> = HashMap::new();
        for e in &self.external {
            let ext = self.extent(e.at);
            if let Some(&prev) = label_extent.get(e.label.as_str()) {
                if prev != ext {
                    return Err(Error::Network(format!(
                        "external label `{}` used with extents {prev} and {ext}",
                        e.label
                    )));
                }
            } else {
                label_extent.insert(&e.label, ext);
            }
        }

        // connectivity over bonds
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(a, b) in &self.bonds {
            let (ra, rb) = (find(&mut parent, a.node), find(&mut parent, b.node));
            parent[ra] = rb;
        }
        let root = find(&mut parent, 0);
        if (1..self.nodes.len()).any(|i| find(&mut parent, i) != root) {
            return Err(Error::Network("network is disconnected".into()));
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn bonds(&self) -> &[(LegRef, LegRef)] {
        &self.bonds
    }

    pub fn external_legs(&self) -> &[ExternalLeg] {
        &self.external
    }

    /// Extents of the raw external legs, in external-leg order.
    pub fn external_shape(&self) -> Vec<usize> {
        self.external.iter().map(|e| self.extent(e.at)).collect()
    }

    /// Groups raw external legs by label, in order of first appearance.
    pub fn dup_groups(&self) -> DupGroups {
        DupGroups::from_labels(self.external.iter().map(|e| e.label.as_str()))
    }

    /// Replaces the tensor of `node`, keeping its legs.
    pub fn with_node_tensor(&self, node: usize, tensor: DenseTensor) -> Result<Self> {
        let mut nodes = self.nodes.clone();
        nodes
            .get_mut(node)
            .ok_or_else(|| Error::Network(format!("no node {node}")))?
            .tensor = tensor;
        Self::new(nodes, self.bonds.clone(), self.external.clone())
    }
}

/// Incremental construction of a [`TensorNetwork`].
#[derive(Default, Debug)]
pub struct NetworkBuilder {
    nodes: Vec<Node>,
    bonds: Vec<(LegRef, LegRef)>,
    external: Vec<ExternalLeg>,
}

impl NetworkBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, name: impl Into<String>, tensor: DenseTensor, legs: &[&str]) -> usize {
        let legs = if legs.is_empty() {
            (0..tensor.order()).map(|i| i.to_string()).collect()
        } else {
            assert_eq!(legs.len(), tensor.order(), "one leg name per tensor index");
            legs.iter().map(|s| s.to_string()).collect()
        };
        self.nodes.push(Node {
            name: name.into(),
            tensor,
            legs,
        });
        self.nodes.len() - 1
    }

    pub fn bond(&mut self, a: LegRef, b: LegRef) -> &mut Self {
        self.bonds.push((a, b));
        self
    }

    pub fn external(&mut self, at: LegRef, label: impl Into<String>) -> &mut Self {
        self.external.push(ExternalLeg {
            at,
            label: label.into(),
        });
        self
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn external_count(&self) -> usize {
        self.external.len()
    }

    /// Stable reordering of the external legs.
    pub fn sort_external_by_key<K: Ord>(&mut self, key: impl FnMut(&ExternalLeg) -> K) {
        self.external.sort_by_key(key);
    }

    pub fn build(self) -> Result<TensorNetwork> {
        TensorNetwork::new(self.nodes, self.bonds, self.external)
    }
}

/// A partition of raw external positions into groups of duplicated indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DupGroups {
    groups: Vec<Vec<usize>>,
    labels: Vec<String>,
}

impl DupGroups {
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a str>) -> Self {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut unique = Vec::new();
        for (pos, label) in labels.into_iter().enumerate() {
            let g = *index.entry(label).or_insert_with(|| {
                groups.push(Vec::new());
                unique.push(label.to_string());
                groups.len() - 1
            });
            groups[g].push(pos);
        }
        Self { groups, labels: unique }
    }

    /// Explicit groups; they must cover `0..n` exactly once. Labels are the group indices.
    pub fn new(groups: Vec<Vec<usize>>) -> Result<Self> {
        let n: usize = groups.iter().map(Vec::len).sum();
        let mut seen = vec![false; n];
        for g in &groups {
            if g.is_empty() {
                return Err(Error::Network("empty duplication group".into()));
            }
            for &p in g {
                if p >= n || seen[p] {
                    return Err(Error::Network(format!(
                        "duplication groups do not cover 0..{n} exactly once"
                    )));
                }
                seen[p] = true;
            }
        }
        let labels = (0..groups.len()).map(|i| i.to_string()).collect();
        Ok(Self { groups, labels })
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            groups: (0..n).map(|i| vec![i]).collect(),
            labels: (0..n).map(|i| i.to_string()).collect(),
        }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn unique_labels(&self) -> &[String] {
        &self.labels
    }

    pub fn raw_len(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn has_duplicates(&self) -> bool {
        self.groups.iter().any(|g| g.len() > 1)
    }

    /// Label of each raw position.
    pub fn raw_labels(&self) -> Vec<String> {
        let mut out = vec![String::new(); self.raw_len()];
        for (g, label) in self.groups.iter().zip(&self.labels) {
            for &p in g {
                out[p] = label.clone();
            }
        }
        out
    }
}

/// The generalized diagonal of `t`: entry `(k_1..k_m)` is the entry of `t`
/// where every raw index in group `j` takes the value `k_j`.
pub fn dup(t: &DenseTensor, groups: &DupGroups) -> Result<DenseTensor> {
    if t.order() != groups.raw_len() {
        return Err(Error::Network(format!(
            "tensor of order {} cannot be grouped over {} raw indices",
            t.order(),
            groups.raw_len()
        )));
    }
    let mut out_shape = Vec::with_capacity(groups.groups.len());
    for (gi, g) in groups.groups.iter().enumerate() {
        let first = t.shape()[g[0]];
        if let Some(&p) = g.iter().find(|&&p| t.shape()[p] != first) {
            return Err(Error::GroupExtentMismatch {
                group: gi,
                first,
                other: t.shape()[p],
            });
        }
        out_shape.push(first);
    }

    let strides = crate::tensor::row_major_strides(t.shape());
    // offset contribution of a unit step in each group
    let group_step: Vec<usize> = groups
        .groups
        .iter()
        .map(|g| g.iter().map(|&p| strides[p]).sum())
        .collect();

    if out_shape.is_empty() {
        return Ok(DenseTensor::scalar(t.data()[0]));
    }
    let mut out = DenseTensor::zeros(&out_shape);
    let mut index = vec![0; out_shape.len()];
    for slot in out.data_mut() {
        let off: usize = index.iter().zip(&group_step).map(|(k, s)| k * s).sum();
        *slot = t.data()[off];
        advance(&mut index, &out_shape);
    }
    Ok(out)
}

/// Adds one delta tensor per unique external label, bonded to every raw leg with
/// that label and exposing a single new leg. The result has distinct labels
/// ordered by first appearance.
pub fn attach_dup_deltas(tn: &TensorNetwork) -> Result<TensorNetwork> {
    let groups = tn.dup_groups();
    let mut nodes = tn.nodes.clone();
    let mut bonds = tn.bonds.clone();
    let mut external = Vec::with_capacity(groups.groups.len());
    for (g, label) in groups.groups.iter().zip(&groups.labels) {
        let dim = tn.extent(tn.external[g[0]].at);
        let id = nodes.len();
        let mut legs = vec![label.clone()];
        legs.extend((0..g.len()).map(|i| format!("{label}#{i}")));
        nodes.push(Node {
            name: format!("delta[{label}]"),
            tensor: delta_tensor(g.len() + 1, dim),
            legs,
        });
        for (k, &raw) in g.iter().enumerate() {
            bonds.push((tn.external[raw].at, LegRef::new(id, k + 1)));
        }
        external.push(ExternalLeg {
            at: LegRef::new(id, 0),
            label: label.clone(),
        });
    }
    TensorNetwork::new(nodes, bonds, external)
}

/// DUP computed through delta tensors: wraps `t` in a one-node network,
/// attaches the deltas and contracts.
pub fn dup_via_deltas(t: &DenseTensor, groups: &DupGroups) -> Result<DenseTensor> {
    if t.order() != groups.raw_len() {
        return Err(Error::Network(format!(
            "tensor of order {} cannot be grouped over {} raw indices",
            t.order(),
            groups.raw_len()
        )));
    }
    let mut b = NetworkBuilder::new();
    let node = b.add_node("t", t.clone(), &[]);
    for (pos, label) in groups.raw_labels().into_iter().enumerate() {
        b.external(LegRef::new(node, pos), label);
    }
    let tn = b.build()?;
    for (gi, g) in groups.groups.iter().enumerate() {
        let first = t.shape()[g[0]];
        if let Some(&p) = g.iter().find(|&&p| t.shape()[p] != first) {
            return Err(Error::GroupExtentMismatch {
                group: gi,
                first,
                other: t.shape()[p],
            });
        }
    }
    contract_network(&attach_dup_deltas(&tn)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Tag {
    Bond(usize),
    External(usize),
}

struct Cluster {
    tensor: DenseTensor,
    tags: Vec<Tag>,
}

impl Cluster {
    fn shared_with(&self, other: &Cluster) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for (i, t) in self.tags.iter().enumerate() {
            if let Tag::Bond(b) = t {
                if let Some(j) = other.tags.iter().position(|u| *u == Tag::Bond(*b)) {
                    pairs.push((i, j));
                }
            }
        }
        pairs
    }
}

fn initial_clusters(tn: &TensorNetwork) -> Vec<Option<Cluster>> {
    let mut tags: Vec<Vec<Option<Tag>>> = tn.nodes.iter().map(|n| vec![None; n.tensor.order()]).collect();
    for (b, &(x, y)) in tn.bonds.iter().enumerate() {
        tags[x.node][x.leg] = Some(Tag::Bond(b));
        tags[y.node][y.leg] = Some(Tag::Bond(b));
    }
    for (p, e) in tn.external.iter().enumerate() {
        tags[e.at.node][e.at.leg] = Some(Tag::External(p));
    }
    tn.nodes
        .iter()
        .zip(tags)
        .map(|(n, t)| {
            let mut c = Cluster {
                tensor: n.tensor.clone(),
                tags: t.into_iter().map(|x| x.expect("validated network")).collect(),
            };
            // bonds between two legs of the same node are traces
            while let Some((i, j)) = c.shared_with(&c).into_iter().find(|(i, j)| i != j) {
                let dim = c.tensor.shape()[i];
                c.tensor = contract(&c.tensor, &DenseTensor::identity(dim), &[(i, 0), (j, 1)])
                    .expect("matching trace extents");
                c.tags = c
                    .tags
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != i && k != j)
                    .map(|(_, t)| *t)
                    .collect();
            }
            Some(c)
        })
        .collect()
}

fn merge(clusters: &mut [Option<Cluster>], i: usize, j: usize) -> Result<()> {
    let b = clusters[j].take().expect("live cluster");
    let a = clusters[i].take().expect("live cluster");
    let pairs = a.shared_with(&b);
    let tensor = contract(&a.tensor, &b.tensor, &pairs)?;
    let mut tags: Vec<Tag> = a
        .tags
        .iter()
        .enumerate()
        .filter(|(k, _)| !pairs.iter().any(|p| p.0 == *k))
        .map(|(_, t)| *t)
        .collect();
    tags.extend(
        b.tags
            .iter()
            .enumerate()
            .filter(|(k, _)| !pairs.iter().any(|p| p.1 == *k))
            .map(|(_, t)| *t),
    );
    clusters[i] = Some(Cluster { tensor, tags });
    Ok(())
}

/// Live pairs `(i, j)`, `i < j`, that share at least one bond, with the size of
/// the tensor their contraction would produce.
fn candidates(clusters: &[Option<Cluster>]) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for (i, a) in clusters.iter().enumerate() {
        let Some(a) = a else { continue };
        for (j, b) in clusters.iter().enumerate().skip(i + 1) {
            let Some(b) = b else { continue };
            let pairs = a.shared_with(b);
            if pairs.is_empty() {
                continue;
            }
            let shared: usize = pairs.iter().map(|p| a.tensor.shape()[p.0]).product();
            let size = a.tensor.len() / shared * (b.tensor.len() / shared);
            out.push((size, i, j));
        }
    }
    out
}

fn finish(clusters: Vec<Option<Cluster>>, n_external: usize) -> Result<DenseTensor> {
    let mut live = clusters.into_iter().flatten();
    let last = live
        .next()
        .ok_or_else(|| Error::Network("network has no nodes".into()))?;
    if live.next().is_some() {
        return Err(Error::Network("network is disconnected".into()));
    }
    let mut axes = vec![0; n_external];
    for (k, t) in last.tags.iter().enumerate() {
        match t {
            Tag::External(p) => axes[*p] = k,
            Tag::Bond(_) => unreachable!("all bonds contracted"),
        }
    }
    last.tensor.permute(&axes)
}

/// Contracts the whole network. The result has one index per raw external leg,
/// in external-leg order.
///
/// Pairs are merged greedily by smallest intermediate tensor, ties broken by
/// lowest node ids.
pub fn contract_network(tn: &TensorNetwork) -> Result<DenseTensor> {
    let mut clusters = initial_clusters(tn);
    while let Some(&(_, i, j)) = candidates(&clusters).iter().min() {
        merge(&mut clusters, i, j)?;
    }
    finish(clusters, tn.external.len())
}

/// Contracts with a uniformly random choice among bonded pairs at every step.
pub fn contract_network_random<R: Rng + ?Sized>(tn: &TensorNetwork, rng: &mut R) -> Result<DenseTensor> {
    let mut clusters = initial_clusters(tn);
    loop {
        let c = candidates(&clusters);
        if c.is_empty() {
            break;
        }
        let (_, i, j) = c[rng.random_range(0..c.len())];
        merge(&mut clusters, i, j)?;
    }
    finish(clusters, tn.external.len())
}

/// Outcome of trying to clone vectors with the only tensor that clones every
/// standard basis vector.
#[derive(Clone, Debug, PartialEq)]
pub struct NoCloningReport {
    pub dim: usize,
    /// Whether the candidate maps every `e_a` to `e_a (x) e_a` exactly.
    pub basis_cloned: bool,
    /// `sum_i phi_ijk v_i` for the all-ones vector `v`.
    pub counterexample_value: DenseTensor,
    /// Largest entrywise gap between that value and `v (x) v`.
    pub counterexample_violation: f64,
}

/// `sum_i phi_ijk v_i`, the pair of legs a three-leg node produces from `v`.
pub fn clone_output(phi: &DenseTensor, v: &DenseTensor) -> Result<DenseTensor> {
    contract(phi, v, &[(0, 0)])
}

/// Largest entrywise deviation of [`clone_output`] from `v (x) v`.
pub fn clone_violation(phi: &DenseTensor, v: &DenseTensor) -> Result<f64> {
    let out = clone_output(phi, v)?;
    let target = v.outer(v);
    Ok(out
        .data()
        .iter()
        .zip(target.data())
        .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
}

/// Cloning every basis vector forces `phi = delta(3)`, which then fails on the
/// all-ones vector with an off-diagonal gap of exactly 1.
pub fn no_cloning_witness(dim: usize) -> NoCloningReport {
    assert!(dim >= 1);
    let phi = delta_tensor(3, dim);
    let basis_cloned =
        (0..dim).all(|a| clone_violation(&phi, &DenseTensor::basis(dim, a)).expect("matching extents") == 0.0);
    let ones = DenseTensor::vector(vec![1.0; dim]);
    let counterexample_value = clone_output(&phi, &ones).expect("matching extents");
    let counterexample_violation = clone_violation(&phi, &ones).expect("matching extents");
    NoCloningReport {
        dim,
        basis_cloned,
        counterexample_value,
        counterexample_violation,
    }
}
