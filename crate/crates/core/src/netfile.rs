//! TOML description files for tensor networks and circuits.
//!
//! A network file lists nodes, bonds and external legs. Node tensors are
//! given inline (`shape` plus row-major `data`) or by reference to a tensor in
//! a `dten` bundle (`file` plus `tensor`), resolved relative to the network
//! file's directory:
//!
//! ```toml
//! [[node]]
//! name = "a"
//! legs = ["out", "in"]
//! shape = [2, 2]
//! data = [1.0, 0.0, 0.0, 1.0]
//!
//! [[node]]
//! name = "v"
//! file = "weights.dten"
//! tensor = "head"
//!
//! [[bond]]
//! a = [0, 0]
//! b = [1, 0]
//!
//! [[external]]
//! node = 0
//! leg = 1
//! label = "s0"
//! ```
//!
//! Bonds and external legs refer to nodes by position in the `node` list.
//! Several external entries may share a label; those legs form a duplicated
//! index.
//!
//! A circuit file holds a `[circuit]` table tagged by `kind` (`cac`, `rac` or
//! `product`) and a `[weights]` table with either a `seed` for i.i.d. standard
//! normal draws or a `file` naming a `dten` bundle.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuits::{Circuit, CircuitSpec};
use crate::error::{Error, Result};
use crate::format::{read_bundle, write_bundle};
use crate::network::{ExternalLeg, LegRef, Node, TensorNetwork};
use crate::tensor::DenseTensor;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    #[serde(default, rename = "node")]
    nodes: Vec<NodeDoc>,
    #[serde(default, rename = "bond")]
    bonds: Vec<BondDoc>,
    #[serde(default, rename = "external")]
    external: Vec<ExternalDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    legs: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shape: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    data: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tensor: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BondDoc {
    a: [usize; 2],
    b: [usize; 2],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExternalDoc {
    node: usize,
    leg: usize,
    label: String,
}

fn toml_error(text: &str, e: toml::de::Error) -> Error {
    let line = e
        .span()
        .map(|span| text[..span.start.min(text.len())].matches('\n').count() + 1)
        .unwrap_or(0);
    Error::Parse {
        line,
        msg: e.message().to_string(),
    }
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

/// Serializes a network with every node tensor inline.
pub fn network_to_toml(tn: &TensorNetwork) -> String {
    let doc = NetworkDoc {
        nodes: tn
            .nodes()
            .iter()
            .map(|n| NodeDoc {
                name: n.name.clone(),
                legs: Some(n.legs.clone()),
                shape: Some(n.tensor.shape().to_vec()),
                data: Some(n.tensor.data().to_vec()),
                file: None,
                tensor: None,
            })
            .collect(),
        bonds: tn
            .bonds()
            .iter()
            .map(|(a, b)| BondDoc {
                a: [a.node, a.leg],
                b: [b.node, b.leg],
            })
            .collect(),
        external: tn
            .external_legs()
            .iter()
            .map(|e| ExternalDoc {
                node: e.at.node,
                leg: e.at.leg,
                label: e.label.clone(),
            })
            .collect(),
    };
    toml::to_string(&doc).expect("network documents always serialize")
}

/// Parses a network file; `base_dir` resolves `file` references.
pub fn network_from_toml(text: &str, base_dir: &Path) -> Result<TensorNetwork> {
    let doc: NetworkDoc = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    let mut nodes = Vec::with_capacity(doc.nodes.len());
    for (i, n) in doc.nodes.into_iter().enumerate() {
        let tensor = match (&n.shape, n.data, &n.file, &n.tensor) {
            (Some(shape), Some(data), None, None) => DenseTensor::new(shape.clone(), data)?,
            (None, None, Some(file), name) => {
                let bundle = read_bundle(&read_file(&base_dir.join(file))?)?;
                let found = match name {
                    Some(name) => bundle.into_iter().find(|t| &t.name == name),
                    None if bundle.len() == 1 => bundle.into_iter().next(),
                    None => None,
                };
                let t = found.ok_or_else(|| {
                    Error::Network(format!("node {i} ({}): tensor {:?} not found in {file}", n.name, name))
                })?;
                t.tensor
            }
            _ => {
                return Err(Error::Network(format!(
                    "node {i} ({}) needs either shape and data, or file",
                    n.name
                )))
            }
        };
        let legs = match n.legs {
            Some(legs) if legs.len() == tensor.order() => legs,
            Some(legs) => {
                return Err(Error::Network(format!(
                    "node {i} ({}) names {} legs for an order-{} tensor",
                    n.name,
                    legs.len(),
                    tensor.order()
                )))
            }
            None => (0..tensor.order()).map(|k| k.to_string()).collect(),
        };
        nodes.push(Node {
            name: n.name,
            tensor,
            legs,
        });
    }
    let bonds = doc
        .bonds
        .iter()
        .map(|b| (LegRef::new(b.a[0], b.a[1]), LegRef::new(b.b[0], b.b[1])))
        .collect();
    let external = doc
        .external
        .into_iter()
        .map(|e| ExternalLeg {
            at: LegRef::new(e.node, e.leg),
            label: e.label,
        })
        .collect();
    TensorNetwork::new(nodes, bonds, external)
}

pub fn load_network(path: &Path) -> Result<TensorNetwork> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    network_from_toml(&read_file(path)?, &base)
}

/// Where a circuit's weights come from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

/// Parsed circuit description file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitDoc {
    pub circuit: CircuitSpec,
    pub weights: WeightsSource,
}

impl CircuitDoc {
    pub fn parse(text: &str) -> Result<Self> {
        let doc: CircuitDoc = toml::from_str(text).map_err(|e| toml_error(text, e))?;
        doc.circuit.validate()?;
        match (&doc.weights.seed, &doc.weights.file) {
            (Some(_), None) | (None, Some(_)) => Ok(doc),
            _ => Err(Error::Spec("[weights] needs exactly one of `seed` or `file`".into())),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("circuit documents always serialize")
    }

    /// Instantiates the circuit; `seed_override` replaces a `seed` source.
    pub fn instantiate(&self, base_dir: &Path, seed_override: Option<u64>) -> Result<Circuit> {
        match (&self.weights.file, seed_override.or(self.weights.seed)) {
            (Some(file), _) => {
                let bundle = read_bundle(&read_file(&base_dir.join(file))?)?;
                self.circuit.with_weights(&bundle)
            }
            (None, Some(seed)) => Ok(self.circuit.random(&mut ChaCha8Rng::seed_from_u64(seed))),
            (None, None) => Err(Error::Spec("no weights source".into())),
        }
    }
}

pub fn load_circuit_doc(path: &Path) -> Result<(CircuitDoc, PathBuf)> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((CircuitDoc::parse(&read_file(path)?)?, base))
}

/// A circuit's weights as a `dten` bundle.
pub fn weights_bundle(circuit: &Circuit) -> String {
    let named = circuit.weights_named();
    write_bundle(named.iter().map(|(n, t)| (n.as_str(), t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::{build_equivalent, DEFAULT_LEG_BUDGET};
    use crate::circuits::{ConvSpec, Padding, RacSpec};
    use crate::network::contract_network;
    use proptest::prelude::*;

    fn rac_doc() -> &'static str {
        r#"
[circuit]
kind = "rac"
length = 3
local_dim = 2
hidden = 2
depth = 2

[weights]
seed = 11
"#
    }

    #[test]
    fn circuit_doc_parses_and_round_trips() {
        let doc = CircuitDoc::parse(rac_doc()).unwrap();
        assert_eq!(
            doc.circuit,
            CircuitSpec::Rac(RacSpec {
                length: 3,
                local_dim: 2,
                hidden: 2,
                depth: 2
            })
        );
        assert_eq!(CircuitDoc::parse(&doc.to_toml()).unwrap(), doc);
    }

    #[test]
    fn cac_doc_defaults() {
        let text = r#"
[circuit]
kind = "cac"
dims = 1
side = 4
local_dim = 2
depth = 2
kernel = 2
stride = 1
widths = [2, 2, 2]

[weights]
seed = 3
"#;
        let doc = CircuitDoc::parse(text).unwrap();
        match doc.circuit {
            CircuitSpec::Cac(ConvSpec { pool, padding, .. }) => {
                assert_eq!(pool, 1);
                assert_eq!(padding, Padding::Identity);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn weights_need_one_source() {
        let both = rac_doc().replace("seed = 11", "seed = 11\nfile = \"w.dten\"");
        assert!(CircuitDoc::parse(&both).is_err());
        let none = rac_doc().replace("seed = 11", "");
        assert!(CircuitDoc::parse(&none).is_err());
        assert!(CircuitDoc::parse(&rac_doc().replace("hidden", "hiden")).is_err());
    }

    #[test]
    fn weights_file_reproduces_seeded_circuit() {
        let dir = tempdir();
        let doc = CircuitDoc::parse(rac_doc()).unwrap();
        let seeded = doc.instantiate(&dir, None).unwrap();
        fs::write(dir.join("w.dten"), weights_bundle(&seeded)).unwrap();
        let from_file = CircuitDoc::parse(&rac_doc().replace("seed = 11", "file = \"w.dten\""))
            .unwrap()
            .instantiate(&dir, None)
            .unwrap();
        assert_eq!(from_file, seeded);
        assert_ne!(doc.instantiate(&dir, Some(12)).unwrap(), seeded);
    }

    fn tempdir() -> PathBuf {
        let dir = std::env::temp_dir().join(format!("reusetn-netfile-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn built_network_round_trips() {
        let doc = CircuitDoc::parse(rac_doc()).unwrap();
        let circuit = doc.instantiate(Path::new("."), None).unwrap();
        let built = build_equivalent(&circuit, DEFAULT_LEG_BUDGET).unwrap();
        let text = network_to_toml(&built.tn);
        let back = network_from_toml(&text, Path::new(".")).unwrap();
        assert_eq!(back, built.tn);
        assert_eq!(contract_network(&back).unwrap(), contract_network(&built.tn).unwrap());
    }

    #[test]
    fn file_references_resolve() {
        let dir = tempdir();
        let m = DenseTensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        fs::write(dir.join("m.dten"), write_bundle([("m", &m)])).unwrap();
        let text = r#"
[[node]]
name = "m"
file = "m.dten"
tensor = "m"

[[node]]
name = "v"
shape = [2]
data = [1.0, -1.0]

[[bond]]
a = [0, 1]
b = [1, 0]

[[external]]
node = 0
leg = 0
label = "x"
"#;
        let tn = network_from_toml(text, &dir).unwrap();
        assert_eq!(contract_network(&tn).unwrap().data(), &[-1.0, -1.0]);
        assert!(network_from_toml(&text.replace("tensor = \"m\"", "tensor = \"q\""), &dir).is_err());
    }

    #[test]
    fn malformed_networks_are_rejected() {
        let dangling = r#"
[[node]]
name = "a"
shape = [2]
data = [1.0, 2.0]
"#;
        assert!(matches!(
            network_from_toml(dangling, Path::new(".")),
            Err(Error::Network(_))
        ));
        assert!(matches!(
            network_from_toml("[[node]]\nname = 1", Path::new(".")),
            Err(Error::Parse { .. })
        ));
    }

    proptest! {
        #[test]
        fn inline_floats_round_trip_bit_exact(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..12)) {
            let n = values.len();
            let t = DenseTensor::new(vec![n], values).unwrap();
            let tn = TensorNetwork::new(
                vec![Node { name: "t".into(), tensor: t.clone(), legs: vec!["0".into()] }],
                vec![],
                vec![ExternalLeg { at: LegRef::new(0, 0), label: "x".into() }],
            ).unwrap();
            let back = network_from_toml(&network_to_toml(&tn), Path::new(".")).unwrap();
            let bits = |d: &[f64]| d.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(back.nodes()[0].tensor.data()), bits(t.data()));
        }
    }
}
