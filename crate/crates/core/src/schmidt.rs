//! Bipartitions of sites, matricization, and Schmidt-spectrum quantities.
//!
//! Sites are 0-based throughout. Entropies are in nats.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// Relative cutoff below which singular values do not count toward the rank.
pub const DEFAULT_REL_TOL: f64 = 1e-9;

/// A split of sites `0..n_sites` into two non-empty sets A and B.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    n_sites: usize,
    local_dim: usize,
    a: Vec<usize>,
    b: Vec<usize>,
}

impl Partition {
    pub fn new(n_sites: usize, a_sites: impl IntoIterator<Item = usize>, local_dim: usize) -> Result<Self> {
        if local_dim == 0 {
            return Err(Error::Partition("local dimension must be positive".into()));
        }
        let mut in_a = vec![false; n_sites];
        for s in a_sites {
            if s >= n_sites {
                return Err(Error::Partition(format!("site {s} outside 0..{n_sites}")));
            }
            if in_a[s] {
                return Err(Error::Partition(format!("site {s} listed twice")));
            }
            in_a[s] = true;
        }
        let a: Vec<usize> = (0..n_sites).filter(|&s| in_a[s]).collect();
        let b: Vec<usize> = (0..n_sites).filter(|&s| !in_a[s]).collect();
        if a.is_empty() || b.is_empty() {
            return Err(Error::Partition("both sides must be non-empty".into()));
        }
        Ok(Self {
            n_sites,
            local_dim,
            a,
            b,
        })
    }

    /// A = first `len` sites.
    pub fn prefix(n_sites: usize, len: usize, local_dim: usize) -> Result<Self> {
        Self::new(n_sites, 0..len, local_dim)
    }

    /// A = last `len` sites (A to the right of B).
    pub fn suffix(n_sites: usize, len: usize, local_dim: usize) -> Result<Self> {
        Self::new(n_sites, n_sites.saturating_sub(len)..n_sites, local_dim)
    }

    pub fn contiguous(n_sites: usize, start: usize, len: usize, local_dim: usize) -> Result<Self> {
        Self::new(n_sites, start..start + len, local_dim)
    }

    /// A = left half, `floor(n/2)` sites.
    pub fn middle(n_sites: usize, local_dim: usize) -> Result<Self> {
        Self::prefix(n_sites, n_sites / 2, local_dim)
    }

    /// Square `alpha x alpha` block of a `side x side` lattice with row-major
    /// site order, top-left corner at (`row`, `col`).
    pub fn square(side: usize, row: usize, col: usize, alpha: usize, local_dim: usize) -> Result<Self> {
        if row + alpha > side || col + alpha > side {
            return Err(Error::Partition(format!(
                "{alpha}x{alpha} block at ({row},{col}) leaves the {side}x{side} lattice"
            )));
        }
        let sites = (row..row + alpha).flat_map(|r| (col..col + alpha).map(move |c| r * side + c));
        Self::new(side * side, sites, local_dim)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn a_sites(&self) -> &[usize] {
        &self.a
    }

    pub fn b_sites(&self) -> &[usize] {
        &self.b
    }

    /// The same cut with the roles of A and B exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            n_sites: self.n_sites,
            local_dim: self.local_dim,
            a: self.b.clone(),
            b: self.a.clone(),
        }
    }

    /// `ln min(M^|A|, M^|B|)`, the largest entropy any state can have across this cut.
    pub fn max_entropy(&self) -> f64 {
        self.a.len().min(self.b.len()) as f64 * (self.local_dim as f64).ln()
    }

    /// Compact description of A using merged runs, e.g. `A=0-3,6`.
    pub fn descriptor(&self) -> String {
        let mut runs: Vec<String> = Vec::new();
        let mut i = 0;
        while i < self.a.len() {
            let start = self.a[i];
            let mut end = start;
            while i + 1 < self.a.len() && self.a[i + 1] == end + 1 {
                i += 1;
                end += 1;
            }
            runs.push(if start == end {
                start.to_string()
            } else {
                format!("{start}-{end}")
            });
            i += 1;
        }
        format!("A={}", runs.join(","))
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} of {}", self.descriptor(), self.n_sites)
    }
}

fn check_fits(t: &DenseTensor, p: &Partition) -> Result<()> {
    if t.order() != p.n_sites {
        return Err(Error::Partition(format!(
            "tensor has order {} but partition covers {} sites",
            t.order(),
            p.n_sites
        )));
    }
    if let Some(&e) = t.shape().iter().find(|&&e| e != p.local_dim) {
        return Err(Error::Partition(format!(
            "tensor extent {e} differs from local dimension {}",
            p.local_dim
        )));
    }
    Ok(())
}

/// Reshapes `t` into an `M^|A| x M^|B|` matrix. Rows enumerate A-configurations
/// lexicographically in sorted site order; columns likewise for B.
pub fn matricize(t: &DenseTensor, p: &Partition) -> Result<DenseTensor> {
    check_fits(t, p)?;
    let axes: Vec<usize> = p.a.iter().chain(&p.b).copied().collect();
    let rows = p.local_dim.pow(p.a.len() as u32);
    let cols = p.local_dim.pow(p.b.len() as u32);
    t.permute(&axes)?.reshape(vec![rows, cols])
}

/// Inverse of [`matricize`].
pub fn dematricize(matrix: &DenseTensor, p: &Partition) -> Result<DenseTensor> {
    let rows = p.local_dim.pow(p.a.len() as u32);
    let cols = p.local_dim.pow(p.b.len() as u32);
    if matrix.shape() != [rows, cols] {
        return Err(Error::Partition(format!(
            "matrix shape {:?} does not match {rows}x{cols}",
            matrix.shape()
        )));
    }
    let stacked = matrix.reshape(vec![p.local_dim; p.n_sites])?;
    // stacked axis i holds site axes[i]; invert that map
    let axes: Vec<usize> = p.a.iter().chain(&p.b).copied().collect();
    let mut inverse = vec![0; axes.len()];
    for (i, &site) in axes.iter().enumerate() {
        inverse[site] = i;
    }
    stacked.permute(&inverse)
}

/// Singular values of the matricization, in descending order.
pub fn singular_values(t: &DenseTensor, p: &Partition) -> Result<Vec<f64>> {
    let m = matricize(t, p)?;
    let (rows, cols) = (m.shape()[0], m.shape()[1]);
    let matrix = DMatrix::from_row_slice(rows, cols, m.data());
    let mut sv: Vec<f64> = matrix.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Von Neumann entropy from a Schmidt spectrum of (unnormalized) weights
/// `lambda_i = sigma_i^2`. Weights below `eps * max` are discarded.
pub fn entropy_from_weights(weights: &[f64]) -> f64 {
    let max = weights.iter().fold(0.0f64, |m, &w| m.max(w));
    if max <= 0.0 {
        return 0.0;
    }
    let cutoff = f64::EPSILON * max;
    let kept: Vec<f64> = weights.iter().copied().filter(|&w| w >= cutoff).collect();
    let total: f64 = kept.iter().sum();
    let s: f64 = kept
        .iter()
        .map(|&w| {
            let l = w / total;
            -l * l.ln()
        })
        .sum();
    s.max(0.0)
}

/// Entanglement entropy (nats) of the state with coefficients `t` across `p`.
pub fn entanglement_entropy(t: &DenseTensor, p: &Partition) -> Result<f64> {
    check_fits(t, p)?;
    if t.is_zero() {
        return Err(Error::ZeroTensor);
    }
    if p.local_dim == 1 {
        return Ok(0.0);
    }
    // the norm cancels in the weights; rescale only to stay clear of under/overflow
    let scaled = t.scaled(1.0 / t.max_abs());
    let sv = singular_values(&scaled, p)?;
    let weights: Vec<f64> = sv.iter().map(|s| s * s).collect();
    Ok(entropy_from_weights(&weights))
}

/// Number of singular values above `rel_tol * sigma_max`. Zero only for the zero tensor.
pub fn schmidt_rank(t: &DenseTensor, p: &Partition, rel_tol: f64) -> Result<usize> {
    assert!(rel_tol > 0.0 && rel_tol < 1.0, "rel_tol must lie in (0, 1)");
    check_fits(t, p)?;
    if t.is_zero() {
        return Ok(0);
    }
    let sv = singular_values(&t.scaled(1.0 / t.max_abs()), p)?;
    let cutoff = rel_tol * sv[0];
    Ok(sv.iter().filter(|&&s| s > cutoff).count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bell() -> DenseTensor {
        DenseTensor::from_fn(&[2, 2], |i| (i[0] == i[1]) as u8 as f64)
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(3, [0, 1, 2], 2).is_err());
        assert!(Partition::new(3, [], 2).is_err());
        assert!(Partition::new(3, [3], 2).is_err());
        assert!(Partition::new(3, [1, 1], 2).is_err());
        let p = Partition::new(5, [3, 0, 4], 2).unwrap();
        assert_eq!(p.a_sites(), &[0, 3, 4]);
        assert_eq!(p.b_sites(), &[1, 2]);
        assert_eq!(p.descriptor(), "A=0,3-4");
        assert_eq!(Partition::suffix(6, 2, 2).unwrap().a_sites(), &[4, 5]);
        assert_eq!(Partition::square(3, 1, 1, 2, 2).unwrap().a_sites(), &[4, 5, 7, 8]);
        assert!(Partition::square(3, 2, 2, 2, 2).is_err());
    }

    #[test]
    fn matricize_order_two_is_identity_map() {
        let t = DenseTensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = Partition::prefix(2, 1, 2).unwrap();
        assert_eq!(matricize(&t, &p).unwrap(), t);
    }

    #[test]
    fn matricize_outer_product_is_rank_one() {
        let u = DenseTensor::vector(vec![1.0, 2.0]);
        let v = DenseTensor::vector(vec![3.0, -1.0]);
        let w = DenseTensor::vector(vec![0.5, 4.0]);
        let t = u.outer(&v).outer(&w);
        let p = Partition::new(3, [0, 2], 2).unwrap();
        let m = matricize(&t, &p).unwrap();
        // explicit oracle: row (i,k) col j = u_i w_k v_j
        for i in 0..2 {
            for k in 0..2 {
                for j in 0..2 {
                    let want = u.data()[i] * w.data()[k] * v.data()[j];
                    assert_eq!(m.get(&[i * 2 + k, j]), want);
                }
            }
        }
        assert_eq!(schmidt_rank(&t, &p, DEFAULT_REL_TOL).unwrap(), 1);
    }

    #[test]
    fn entropy_examples() {
        let product = DenseTensor::basis(2, 0).outer(&DenseTensor::basis(2, 0));
        let p = Partition::prefix(2, 1, 2).unwrap();
        assert_eq!(entanglement_entropy(&product, &p).unwrap(), 0.0);
        assert_abs_diff_eq!(entanglement_entropy(&bell(), &p).unwrap(), 2f64.ln(), epsilon = 1e-14);
        assert_eq!(schmidt_rank(&bell(), &p, DEFAULT_REL_TOL).unwrap(), 2);
        assert_eq!(
            entanglement_entropy(&DenseTensor::zeros(&[2, 2]), &p),
            Err(Error::ZeroTensor)
        );
        assert_eq!(schmidt_rank(&DenseTensor::zeros(&[2, 2]), &p, 0.5).unwrap(), 0);
    }

    #[test]
    fn unit_local_dimension_has_no_entropy() {
        let t = DenseTensor::new(vec![1, 1, 1], vec![3.0]).unwrap();
        let p = Partition::prefix(3, 1, 1).unwrap();
        assert_eq!(entanglement_entropy(&t, &p).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_partition_rejected() {
        let p = Partition::prefix(3, 1, 2).unwrap();
        assert!(matches!(matricize(&bell(), &p), Err(Error::Partition(_))));
        let q = Partition::prefix(2, 1, 3).unwrap();
        assert!(matches!(matricize(&bell(), &q), Err(Error::Partition(_))));
    }
}
