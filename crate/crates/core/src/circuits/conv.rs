use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_config, random_matrix, random_vector};
use crate::error::{Error, Result};
use crate::format::NamedTensor;
use crate::tensor::{column, matvec, DenseTensor};

/// Treatment of window positions that fall outside the layer input.
///
/// `Identity` drops them from the product, i.e. pads with the multiplicative
/// identity. `Zero` pads with zero vectors, which zeroes every output whose
/// window touches the border and, through the global product, the whole
/// circuit whenever `K > 1` and `S = 1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    #[default]
    Identity,
    Zero,
}

/// Architecture of a convolutional arithmetic circuit.
///
/// The input is a `side^d` lattice of one-hot vectors in `R^M` (row-major site
/// order). Each of the `depth` blocks applies a conv layer with `K^d` kernel
/// matrices and stride `S`; between consecutive conv layers a product pooling
/// layer with `P^d` blocks is inserted when `P = 2`. A global product pooling
/// over whatever extent remains and a linear head then give the scalar output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    /// Spatial dimensionality `d`, 1 or 2.
    pub dims: usize,
    /// Linear input size; the circuit has `side^dims` sites.
    pub side: usize,
    /// Local dimension `M`.
    pub local_dim: usize,
    /// Number of conv layers `L`.
    pub depth: usize,
    /// Kernel linear size `K`.
    pub kernel: usize,
    /// Conv stride `S`, either 1 (overlapping) or `K` (non-overlapping).
    pub stride: usize,
    /// Pooling linear size `P` between conv layers, 1 (none) or 2.
    #[serde(default = "one")]
    pub pool: usize,
    /// Channel widths `r_0..r_L`; `r_0` must equal `M`.
    pub widths: Vec<usize>,
    #[serde(default)]
    pub padding: Padding,
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageKind {
    /// Conv layer, 1-based.
    Conv(usize),
    Pool,
}

/// One spatial stage of the circuit with its per-axis input and output extents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stage {
    pub kind: StageKind,
    pub in_extent: usize,
    pub out_extent: usize,
}

/// A window entry: slot inside the window (kernel index for conv, block index
/// for pooling) and flat position in the stage input.
pub(crate) type WindowEntry = (usize, usize);

impl ConvSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Spec(m));
        if !(1..=2).contains(&self.dims) {
            return fail(format!("dims must be 1 or 2, got {}", self.dims));
        }
        if self.side == 0 || self.local_dim == 0 || self.kernel == 0 {
            return fail("side, local_dim and kernel must be positive".into());
        }
        if self.depth == 0 {
            return fail("depth must be at least 1".into());
        }
        if self.stride != 1 && self.stride != self.kernel {
            return fail(format!(
                "stride must be 1 or equal to the kernel size {}, got {}",
                self.kernel, self.stride
            ));
        }
        if self.pool != 1 && self.pool != 2 {
            return fail(format!("pool must be 1 or 2, got {}", self.pool));
        }
        if self.widths.len() != self.depth + 1 {
            return fail(format!(
                "expected {} widths r_0..r_L, got {}",
                self.depth + 1,
                self.widths.len()
            ));
        }
        if self.widths.contains(&0) {
            return fail("widths must be positive".into());
        }
        if self.widths[0] != self.local_dim {
            return fail(format!(
                "r_0 = {} must equal the local dimension {}",
                self.widths[0], self.local_dim
            ));
        }
        Ok(())
    }

    pub fn n_sites(&self) -> usize {
        self.side.pow(self.dims as u32)
    }

    pub fn kernel_volume(&self) -> usize {
        self.kernel.pow(self.dims as u32)
    }

    pub fn is_overlapping(&self) -> bool {
        self.stride == 1 && self.kernel > 1
    }

    /// Non-overlapping, unpooled, and every window lies fully inside its input.
    pub fn is_tree_compatible(&self) -> bool {
        self.stride == self.kernel
            && self.pool == 1
            && self
                .kernel
                .checked_pow(self.depth as u32)
                .is_some_and(|span| self.side.is_multiple_of(span))
    }

    pub fn stages(&self) -> Vec<Stage> {
        let mut out = Vec::new();
        let mut extent = self.side;
        for l in 1..=self.depth {
            let next = if self.stride == 1 {
                extent
            } else {
                extent.div_ceil(self.stride)
            };
            out.push(Stage {
                kind: StageKind::Conv(l),
                in_extent: extent,
                out_extent: next,
            });
            extent = next;
            if l < self.depth && self.pool > 1 {
                let next = extent.div_ceil(self.pool);
                out.push(Stage {
                    kind: StageKind::Pool,
                    in_extent: extent,
                    out_extent: next,
                });
                extent = next;
            }
        }
        out
    }

    /// Per-axis extent feeding the global pooling.
    pub fn final_extent(&self) -> usize {
        self.stages().last().map_or(self.side, |s| s.out_extent)
    }

    /// Anchor of a conv window relative to `position * stride`: centered for
    /// unit stride, corner-anchored otherwise.
    fn anchor(&self) -> usize {
        if self.stride == 1 {
            (self.kernel - 1) / 2
        } else {
            0
        }
    }

    /// In-bounds entries of the window of output `out_pos` (flat) at `stage`,
    /// and whether any window slot fell outside the input.
    pub(crate) fn window(&self, stage: &Stage, out_pos: usize) -> (Vec<WindowEntry>, bool) {
        let (size, step, anchor) = match stage.kind {
            StageKind::Conv(_) => (self.kernel, self.stride, self.anchor()),
            StageKind::Pool => (self.pool, self.pool, 0),
        };
        let d = self.dims;
        let mut out_coord = vec![0; d];
        let mut rest = out_pos;
        for axis in (0..d).rev() {
            out_coord[axis] = rest % stage.out_extent;
            rest /= stage.out_extent;
        }

        let slots = size.pow(d as u32);
        let mut entries = Vec::with_capacity(slots);
        let mut padded = false;
        for slot in 0..slots {
            let mut rem = slot;
            let mut offsets = vec![0; d];
            for axis in (0..d).rev() {
                offsets[axis] = rem % size;
                rem /= size;
            }
            let mut flat = 0usize;
            let mut inside = true;
            for axis in 0..d {
                let q = (out_coord[axis] * step + offsets[axis]) as isize - anchor as isize;
                if q < 0 || q as usize >= stage.in_extent {
                    inside = false;
                    break;
                }
                flat = flat * stage.in_extent + q as usize;
            }
            if inside {
                entries.push((slot, flat));
            } else {
                padded = true;
            }
        }
        (entries, padded)
    }
}

/// Kernel matrices and output head of a convolutional arithmetic circuit.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvWeights {
    /// `kernels[l][k]` is the `r_{l+1} x r_l` matrix at kernel slot `k` of conv layer `l+1`.
    pub kernels: Vec<Vec<DenseTensor>>,
    /// Length-`r_L` output head.
    pub head: DenseTensor,
}

impl ConvWeights {
    /// I.i.d. standard normal entries, drawn layer by layer, slot by slot, then the head.
    pub fn random<R: Rng + ?Sized>(spec: &ConvSpec, rng: &mut R) -> Self {
        let kernels = (1..=spec.depth)
            .map(|l| {
                (0..spec.kernel_volume())
                    .map(|_| random_matrix(spec.widths[l], spec.widths[l - 1], rng))
                    .collect()
            })
            .collect();
        let head = random_vector(spec.widths[spec.depth], rng);
        Self { kernels, head }
    }

    pub fn validate(&self, spec: &ConvSpec) -> Result<()> {
        if self.kernels.len() != spec.depth {
            return Err(Error::Weights(format!(
                "{} kernel layers for depth {}",
                self.kernels.len(),
                spec.depth
            )));
        }
        for (i, layer) in self.kernels.iter().enumerate() {
            if layer.len() != spec.kernel_volume() {
                return Err(Error::Weights(format!(
                    "layer {} has {} kernel matrices, expected {}",
                    i + 1,
                    layer.len(),
                    spec.kernel_volume()
                )));
            }
            let want = [spec.widths[i + 1], spec.widths[i]];
            if let Some(w) = layer.iter().find(|w| w.shape() != want) {
                return Err(Error::Weights(format!(
                    "layer {} kernel has shape {:?}, expected {want:?}",
                    i + 1,
                    w.shape()
                )));
            }
        }
        if self.head.shape() != [spec.widths[spec.depth]] {
            return Err(Error::Weights(format!(
                "head has shape {:?}, expected [{}]",
                self.head.shape(),
                spec.widths[spec.depth]
            )));
        }
        Ok(())
    }

    /// Names are `conv<l>.k<slot>` (layer 1-based, slot 0-based) and `head`.
    pub fn to_named(&self) -> Vec<(String, DenseTensor)> {
        let mut out = Vec::new();
        for (l, layer) in self.kernels.iter().enumerate() {
            for (k, w) in layer.iter().enumerate() {
                out.push((format!("conv{}.k{k}", l + 1), w.clone()));
            }
        }
        out.push(("head".into(), self.head.clone()));
        out
    }

    pub fn from_named(spec: &ConvSpec, tensors: &[NamedTensor]) -> Result<Self> {
        let find = |name: &str| {
            tensors
                .iter()
                .find(|t| t.name == name)
                .map(|t| t.tensor.clone())
                .ok_or_else(|| Error::Weights(format!("missing tensor `{name}`")))
        };
        let kernels = (1..=spec.depth)
            .map(|l| {
                (0..spec.kernel_volume())
                    .map(|k| find(&format!("conv{l}.k{k}")))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let w = Self {
            kernels,
            head: find("head")?,
        };
        w.validate(spec)?;
        Ok(w)
    }
}

pub(crate) fn cac_forward_unchecked(spec: &ConvSpec, w: &ConvWeights, config: &[usize]) -> f64 {
    let mut act: Vec<Vec<f64>> = config
        .iter()
        .map(|&s| {
            let mut v = vec![0.0; spec.local_dim];
            v[s] = 1.0;
            v
        })
        .collect();
    let zero_pad = spec.padding == Padding::Zero;

    for stage in spec.stages() {
        let n_out = stage.out_extent.pow(spec.dims as u32);
        let mut next = Vec::with_capacity(n_out);
        for p in 0..n_out {
            let (entries, padded) = spec.window(&stage, p);
            let width = match stage.kind {
                StageKind::Conv(l) => spec.widths[l],
                StageKind::Pool => act[0].len(),
            };
            let mut out = vec![1.0; width];
            if padded && zero_pad {
                out.fill(0.0);
            } else {
                for (slot, q) in entries {
                    let factor = match stage.kind {
                        StageKind::Conv(l) => {
                            let kernel = &w.kernels[l - 1][slot];
                            if l == 1 {
                                // one-hot input selects a kernel column
                                let s = act[q].iter().position(|&x| x == 1.0).unwrap_or(0);
                                column(kernel, s)
                            } else {
                                matvec(kernel, &act[q])
                            }
                        }
                        StageKind::Pool => act[q].clone(),
                    };
                    out.iter_mut().zip(&factor).for_each(|(o, f)| *o *= f);
                }
            }
            next.push(out);
        }
        act = next;
    }

    let mut pooled = vec![1.0; spec.widths[spec.depth]];
    for v in &act {
        pooled.iter_mut().zip(v).for_each(|(p, x)| *p *= x);
    }
    pooled.iter().zip(w.head.data()).map(|(a, b)| a * b).sum()
}

/// Circuit output on the basis input `e^(s_1), ..., e^(s_N)` (states 0-based).
pub fn cac_forward(spec: &ConvSpec, w: &ConvWeights, config: &[usize]) -> Result<f64> {
    spec.validate()?;
    w.validate(spec)?;
    check_config(config, spec.n_sites(), spec.local_dim)?;
    Ok(cac_forward_unchecked(spec, w, config))
}

/// Number of weight entries: `sum_l K^d r_l r_{l-1}` plus the head.
pub fn param_count(spec: &ConvSpec) -> usize {
    let kv = spec.kernel_volume();
    let convs: usize = (1..=spec.depth).map(|l| kv * spec.widths[l] * spec.widths[l - 1]).sum();
    convs + spec.widths[spec.depth]
}

fn projected(spec: &ConvSpec, layer: usize) -> (usize, usize) {
    assert!((1..=spec.depth).contains(&layer), "layer out of range");
    let (mut field, mut jump) = (1usize, 1usize);
    for l in 1..=layer {
        field += (spec.kernel - 1) * jump;
        jump *= spec.stride;
        if l < layer && spec.pool > 1 {
            field += (spec.pool - 1) * jump;
            jump *= spec.pool;
        }
    }
    (field, jump)
}

/// Linear size of the input region seen by one output of conv layer `layer`.
pub fn total_receptive_field(spec: &ConvSpec, layer: usize) -> usize {
    projected(spec, layer).0
}

/// Input distance between neighbouring outputs of conv layer `layer`.
pub fn total_stride(spec: &ConvSpec, layer: usize) -> usize {
    projected(spec, layer).1
}

/// Receptive field and stride of conv layer `layer` found by marking the input
/// cells that reach one output cell, on a 1D input wide enough to avoid edges.
pub fn trace_receptive_field(spec: &ConvSpec, layer: usize) -> (usize, usize) {
    assert!((1..=spec.depth).contains(&layer), "layer out of range");
    let grow = spec.kernel.max(spec.pool) + 1;
    let side = grow
        .checked_pow(layer as u32)
        .and_then(|x| x.checked_mul(8))
        .filter(|&x| x <= 1 << 22)
        .expect("trace input too large");
    let wide = ConvSpec {
        dims: 1,
        side,
        depth: layer,
        widths: vec![spec.local_dim; layer + 1],
        local_dim: spec.local_dim,
        ..spec.clone()
    };
    let stages = wide.stages();
    let top = stages.last().expect("at least one stage");

    let reach = |pos: usize| -> (usize, usize) {
        let mut cells = vec![pos];
        for stage in stages.iter().rev() {
            let mut below: Vec<usize> = cells
                .iter()
                .flat_map(|&c| wide.window(stage, c).0.into_iter().map(|(_, q)| q))
                .collect();
            below.sort_unstable();
            below.dedup();
            cells = below;
        }
        (cells[0], *cells.last().unwrap())
    };
    let centre = top.out_extent / 2;
    let (lo, hi) = reach(centre);
    let (lo_next, _) = reach(centre + 1);
    (hi - lo + 1, lo_next - lo)
}

/// For every site, the number of distinct computation paths from the circuit
/// output down to that site's input vector.
pub fn input_path_counts(spec: &ConvSpec) -> Vec<usize> {
    let stages = spec.stages();
    let d = spec.dims as u32;
    let mut counts = vec![1usize; spec.final_extent().pow(d)];
    for stage in stages.iter().rev() {
        let mut below = vec![0usize; stage.in_extent.pow(d)];
        for (p, &c) in counts.iter().enumerate() {
            let (entries, padded) = spec.window(stage, p);
            if padded && spec.padding == Padding::Zero {
                continue;
            }
            for (_, q) in entries {
                below[q] += c;
            }
        }
        counts = below;
    }
    counts
}
