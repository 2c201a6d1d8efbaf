//! Plain-text tensor serialization.
//!
//! ```text
//! dten 1
//! # comment lines and blank lines are ignored
//! tensor conv1.k0
//! shape 2 2
//! 0.5 -1.25
//! 3.0 1e-7
//! ```
//!
//! A file starts with the `dten 1` header and holds one or more blocks. Each
//! block opens with `tensor` (optionally followed by a name), then a `shape`
//! line listing the extents (empty for a scalar), then the entries in row-major
//! order, whitespace separated over any number of lines. Values are written in
//! the shortest decimal form that parses back to the identical `f64`, so a
//! write/read cycle is bit-exact.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

pub const HEADER: &str = "dten 1";

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: DenseTensor,
}

fn write_block(out: &mut String, name: &str, t: &DenseTensor) {
    if name.is_empty() {
        out.push_str("tensor\n");
    } else {
        let _ = writeln!(out, "tensor {name}");
    }
    out.push_str("shape");
    for e in t.shape() {
        let _ = write!(out, " {e}");
    }
    out.push('\n');
    let row = t.shape().last().copied().unwrap_or(1);
    for chunk in t.data().chunks(row) {
        let line: Vec<String> = chunk.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
}

pub fn write_tensor(t: &DenseTensor) -> String {
    write_bundle([("", t)])
}

pub fn write_bundle<'a>(tensors: impl IntoIterator<Item = (&'a str, &'a DenseTensor)>) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for (name, t) in tensors {
        write_block(&mut out, name, t);
    }
    out
}

pub fn read_bundle(text: &str) -> Result<Vec<NamedTensor>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    match lines.next() {
        Some((_, l)) if l == HEADER => {}
        Some((line, l)) => {
            return Err(Error::Parse {
                line,
                msg: format!("expected header `{HEADER}`, found `{l}`"),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 0,
                msg: "empty input".into(),
            })
        }
    }

    struct Pending {
        line: usize,
        name: String,
        shape: Option<Vec<usize>>,
        values: Vec<f64>,
    }

    fn finish(p: Pending) -> Result<NamedTensor> {
        let shape = p.shape.ok_or(Error::Parse {
            line: p.line,
            msg: "tensor block without a shape line".into(),
        })?;
        let tensor = DenseTensor::new(shape, p.values).map_err(|e| Error::Parse {
            line: p.line,
            msg: e.to_string(),
        })?;
        Ok(NamedTensor { name: p.name, tensor })
    }

    let mut out = Vec::new();
    let mut current: Option<Pending> = None;
    for (line, l) in lines {
        let mut words = l.split_whitespace();
        let head = words.next().unwrap_or_default();
        if head == "tensor" {
            if let Some(p) = current.take() {
                out.push(finish(p)?);
            }
            current = Some(Pending {
                line,
                name: words.collect::<Vec<_>>().join(" "),
                shape: None,
                values: Vec::new(),
            });
            continue;
        }
        let Some(p) = current.as_mut() else {
            return Err(Error::Parse {
                line,
                msg: "data before the first `tensor` line".into(),
            });
        };
        if head == "shape" {
            if p.shape.is_some() {
                return Err(Error::Parse {
                    line,
                    msg: "duplicate shape line".into(),
                });
            }
            let shape = words
                .map(|w| w.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    line,
                    msg: format!("bad extent: {e}"),
                })?;
            p.shape = Some(shape);
            continue;
        }
        if p.shape.is_none() {
            return Err(Error::Parse {
                line,
                msg: "values before the shape line".into(),
            });
        }
        for w in l.split_whitespace() {
            let v = w.parse::<f64>().map_err(|e| Error::Parse {
                line,
                msg: format!("bad value `{w}`: {e}"),
            })?;
            p.values.push(v);
        }
    }
    if let Some(p) = current.take() {
        out.push(finish(p)?);
    }
    Ok(out)
}

/// Reads a file holding exactly one tensor.
pub fn read_tensor(text: &str) -> Result<DenseTensor> {
    let mut all = read_bundle(text)?;
    if all.len() != 1 {
        return Err(Error::Parse {
            line: 0,
            msg: format!("expected one tensor, found {}", all.len()),
        });
    }
    Ok(all.remove(0).tensor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn documented_example_parses() {
        let text = "dten 1\n# weights\ntensor conv1.k0\nshape 2 2\n0.5 -1.25\n3.0 1e-7\n";
        let t = read_bundle(text).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].name, "conv1.k0");
        assert_eq!(t[0].tensor.data(), &[0.5, -1.25, 3.0, 1e-7]);
    }

    #[test]
    fn scalar_round_trip() {
        let s = DenseTensor::scalar(-0.1);
        let text = write_tensor(&s);
        assert_eq!(text, "dten 1\ntensor\nshape\n-0.1\n");
        assert_eq!(read_tensor(&text).unwrap(), s);
    }

    #[test]
    fn malformed_inputs() {
        assert!(read_bundle("").is_err());
        assert!(read_bundle("dten 2\n").is_err());
        assert!(read_bundle("dten 1\nshape 2\n1 2\n").is_err());
        assert!(read_bundle("dten 1\ntensor\n1 2\n").is_err());
        assert!(read_bundle("dten 1\ntensor\nshape 2\n1 2 3\n").is_err());
        assert!(read_bundle("dten 1\ntensor\nshape 2\n1 x\n").is_err());
        assert!(read_tensor("dten 1\ntensor a\nshape\n1\ntensor b\nshape\n2\n").is_err());
    }

    proptest! {
        #[test]
        fn bundle_round_trip_is_bit_exact(
            shapes in prop::collection::vec(prop::collection::vec(1usize..4, 0..4), 1..4),
            seed in any::<u64>(),
        ) {
            let mut state = seed;
            let tensors: Vec<(String, DenseTensor)> = shapes
                .iter()
                .enumerate()
                .map(|(i, shape)| {
                    let t = DenseTensor::from_fn(shape, |_| {
                        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        f64::from_bits(state >> 2) * if state & 1 == 0 { 1.0 } else { -1.0 }
                    });
                    (format!("t{i}"), t)
                })
                .collect();
            let text = write_bundle(tensors.iter().map(|(n, t)| (n.as_str(), t)));
            let back = read_bundle(&text).unwrap();
            prop_assert_eq!(back.len(), tensors.len());
            for (b, (n, t)) in back.iter().zip(&tensors) {
                prop_assert_eq!(&b.name, n);
                prop_assert_eq!(b.tensor.shape(), t.shape());
                for (x, y) in b.tensor.data().iter().zip(t.data()) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }
}
