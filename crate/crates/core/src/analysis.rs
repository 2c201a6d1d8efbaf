//! Random-search estimates of maximal entanglement, the lower-bound formulas
//! they are compared against, and declarative scaling sweeps.
//!
//! Every trial draws fresh i.i.d. standard normal weights from its own
//! generator: ChaCha8 seeded with the master seed, on stream `trial`. Trials run
//! in parallel and are reduced in trial order, so results depend only on the
//! seed.

use std::time::Instant;

use cmaes::{CMAESOptions, DVector, Mode};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::{param_count, Circuit, CircuitSpec, ConvSpec, Padding, DEFAULT_BUDGET};
use crate::error::{Error, Result};
use crate::schmidt::{entropy_from_weights, singular_values, Partition, DEFAULT_REL_TOL};

/// `min(alpha^d, L K alpha^(d-1))`: entanglement growth for overlapping
/// convolutions across a region of linear size `alpha`.
pub fn overlap_bound(alpha: usize, dims: usize, depth: usize, kernel: usize) -> f64 {
    let a = alpha as f64;
    let d = dims as i32;
    a.powi(d).min((depth * kernel) as f64 * a.powi(d - 1))
}

/// `min(alpha^d, K alpha^(d-1))`: the same quantity once `2^d` pooling sits
/// between the conv layers, so depth no longer helps.
pub fn pooled_overlap_bound(alpha: usize, dims: usize, kernel: usize) -> f64 {
    overlap_bound(alpha, dims, 1, kernel)
}

/// `ln C(min(R, M) + |A| - 1, |A|)`: logarithmic growth for deep recurrent
/// circuits with `A` to the right of `B`.
pub fn deep_rac_bound(a_size: usize, hidden: usize, local_dim: usize) -> f64 {
    let q = hidden.min(local_dim);
    ln_binomial(q + a_size - 1, a_size)
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

/// Linear size of `A`: `|A|` in one dimension, the side of `A` when it is a
/// square in two. `None` for non-square two-dimensional regions.
pub fn linear_size(p: &Partition, dims: usize, side: usize) -> Option<usize> {
    let a = p.a_sites();
    if dims == 1 {
        return Some(a.len());
    }
    let alpha = (a.len() as f64).sqrt().round() as usize;
    if alpha * alpha != a.len() {
        return None;
    }
    let (r0, c0) = (a[0] / side, a[0] % side);
    let square = (0..alpha).all(|i| (0..alpha).all(|j| a[i * alpha + j] == (r0 + i) * side + c0 + j));
    square.then_some(alpha)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

/// Two-dimensional overlapping CAC on `n_sites = alpha^2` sites whose depth
/// `ceil(alpha / K)` lets the receptive field span the input.
pub fn full_coverage_cac(n_sites: usize, kernel: usize, width: usize) -> ConvSpec {
    let side = (n_sites as f64).sqrt().round() as usize;
    let depth = side.div_ceil(kernel);
    let mut widths = vec![width; depth + 1];
    widths[0] = width;
    ConvSpec {
        dims: 2,
        side,
        local_dim: width,
        depth,
        kernel,
        stride: 1,
        pool: 1,
        widths,
        padding: Padding::Identity,
    }
}

/// Parameter counts of [`full_coverage_cac`] over `sizes`, with their log-log slope.
pub fn param_scaling(sizes: &[usize], kernel: usize, width: usize) -> (Vec<usize>, f64) {
    let counts: Vec<usize> = sizes
        .iter()
        .map(|&n| param_count(&full_coverage_cac(n, kernel, width)))
        .collect();
    let xs: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    (counts, loglog_slope(&xs, &ys))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateOptions {
    /// Independent weight draws.
    pub trials: usize,
    pub seed: u64,
    pub rel_tol: f64,
    pub budget: usize,
    /// Evaluation budget of the optimizer run from each refined draw.
    pub refine_evals: usize,
    /// How many of the best draws are refined.
    pub refine_starts: usize,
}

impl EstimateOptions {
    pub fn new(trials: usize, seed: u64) -> Self {
        Self {
            trials,
            seed,
            rel_tol: DEFAULT_REL_TOL,
            budget: DEFAULT_BUDGET,
            refine_evals: 0,
            refine_starts: DEFAULT_REFINE_STARTS,
        }
    }

    pub fn with_refinement(mut self, evals: usize) -> Self {
        self.refine_evals = evals;
        self
    }
}

pub const DEFAULT_REFINE_STARTS: usize = 4;

const INITIAL_STEP: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialOutcome {
    pub ee: f64,
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    /// Results of the independent draws, in trial order.
    pub trials: Vec<TrialOutcome>,
    pub best_ee: f64,
    pub best_rank: usize,
    /// Circuits evaluated, refinement included.
    pub evaluations: usize,
}

/// Generator for one trial of an experiment with master seed `seed`.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Entropy (nats) and Schmidt rank from a single SVD. The zero tensor gives `(0, 0)`.
pub fn entanglement_stats(t: &crate::tensor::DenseTensor, p: &Partition, rel_tol: f64) -> Result<TrialOutcome> {
    if t.is_zero() {
        singular_values(t, p)?;
        return Ok(TrialOutcome { ee: 0.0, rank: 0 });
    }
    let sv = singular_values(&t.scaled(1.0 / t.max_abs()), p)?;
    let cutoff = rel_tol * sv[0];
    let rank = sv.iter().filter(|&&s| s > cutoff).count();
    let ee = if p.local_dim() == 1 {
        0.0
    } else {
        entropy_from_weights(&sv.iter().map(|s| s * s).collect::<Vec<_>>())
    };
    Ok(TrialOutcome { ee, rank })
}

/// Index of the first maximal entropy.
fn argmax_ee(outcomes: &[TrialOutcome]) -> usize {
    let mut best = 0;
    for (i, o) in outcomes.iter().enumerate() {
        if o.ee > outcomes[best].ee {
            best = i;
        }
    }
    best
}

/// Largest entanglement entropy and Schmidt rank across `p` found over the
/// weights: `trials` independent draws, then optionally a CMA-ES run from
/// each of the `refine_starts` best draws. Every evaluated circuit counts, so the
/// result is a lower bound on the maximum over all weights.
pub fn max_ee_estimate(family: &CircuitSpec, p: &Partition, opts: &EstimateOptions) -> Result<Estimate> {
    family.validate()?;
    if opts.trials == 0 {
        return Err(Error::Spec("at least one trial is required".into()));
    }
    if p.n_sites() != family.n_sites() || p.local_dim() != family.local_dim() {
        return Err(Error::Partition(format!(
            "partition over {} sites of dimension {} for a circuit with {} sites of dimension {}",
            p.n_sites(),
            p.local_dim(),
            family.n_sites(),
            family.local_dim()
        )));
    }
    let evaluate =
        |c: &Circuit| -> Result<TrialOutcome> { entanglement_stats(&c.amplitudes(opts.budget)?, p, opts.rel_tol) };
    let trials = (0..opts.trials)
        .into_par_iter()
        .map(|trial| evaluate(&family.random(&mut trial_rng(opts.seed, trial))))
        .collect::<Result<Vec<_>>>()?;
    let mut best_rank = trials.iter().map(|t| t.rank).max().unwrap_or(0);
    let start = argmax_ee(&trials);
    let mut best_ee = trials[start].ee;
    let mut evaluations = opts.trials;

    if opts.refine_evals > 0 && opts.refine_starts > 0 {
        let mut order: Vec<usize> = (0..trials.len()).collect();
        // stable: ties keep trial order
        order.sort_by(|&i, &j| trials[j].ee.total_cmp(&trials[i].ee));
        order.truncate(opts.refine_starts);
        let chains: Vec<(TrialOutcome, usize)> = order
            .par_iter()
            .map(|&start| {
                let circuit = family.random(&mut trial_rng(opts.seed, start));
                let chain_seed = trial_rng(opts.seed, opts.trials + start).next_u64();
                refine(&circuit, trials[start], chain_seed, opts.refine_evals, &evaluate)
            })
            .collect();
        for (c, n) in chains {
            best_ee = best_ee.max(c.ee);
            best_rank = best_rank.max(c.rank);
            evaluations += n;
        }
    }
    Ok(Estimate {
        trials,
        best_ee,
        best_rank,
        evaluations,
    })
}

/// CMA-ES maximization of the entropy over [`Circuit::params`], started at
/// one draw with a step of `INITIAL_STEP` times the parameters' root mean
/// square. Returns the best entropy, the highest rank seen and the number of
/// evaluations.
fn refine<F>(
    start: &Circuit,
    start_outcome: TrialOutcome,
    seed: u64,
    max_evals: usize,
    evaluate: &F,
) -> (TrialOutcome, usize)
where
    F: Fn(&Circuit) -> Result<TrialOutcome>,
{
    let x0 = start.params();
    let rms = (x0.iter().map(|v| v * v).sum::<f64>() / x0.len() as f64).sqrt();
    let mut best_rank = start_outcome.rank;
    let objective = |x: &DVector<f64>| -> f64 {
        // same shapes as the start circuit, which already evaluated
        let o = evaluate(&start.with_params(x.as_slice())).expect("circuit of validated shape");
        best_rank = best_rank.max(o.rank);
        o.ee
    };
    let mut cma = CMAESOptions::new(x0, INITIAL_STEP * rms.max(f64::MIN_POSITIVE))
        .mode(Mode::Maximize)
        .seed(seed)
        .max_function_evals(max_evals)
        .build(objective)
        .expect("valid optimizer options");
    let result = cma.run();
    let evals = cma.function_evals();
    drop(cma);
    let ee = result
        .overall_best
        .map_or(start_outcome.ee, |b| b.value.max(start_outcome.ee));
    (TrialOutcome { ee, rank: best_rank }, evals)
}

/// Which lower-bound formula a record is compared against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    /// [`overlap_bound`]
    Overlap,
    /// [`pooled_overlap_bound`]
    PooledOverlap,
    /// [`deep_rac_bound`]
    DeepRac,
    None,
}

/// The applicable bound for a circuit and partition, if any.
///
/// The recurrent bound is only attached when `A` is a suffix; the convolutional
/// ones need a linear size for `A`.
pub fn bound_for(family: &CircuitSpec, p: &Partition) -> (BoundKind, Option<f64>) {
    match family {
        CircuitSpec::Cac(s) if s.is_overlapping() => match linear_size(p, s.dims, s.side) {
            Some(alpha) if s.pool == 1 => (
                BoundKind::Overlap,
                Some(overlap_bound(alpha, s.dims, s.depth, s.kernel)),
            ),
            Some(alpha) => (
                BoundKind::PooledOverlap,
                Some(pooled_overlap_bound(alpha, s.dims, s.kernel)),
            ),
            None => (BoundKind::None, None),
        },
        CircuitSpec::Rac(s) if s.depth == 2 && is_suffix(p) => (
            BoundKind::DeepRac,
            Some(deep_rac_bound(p.a_sites().len(), s.hidden, s.local_dim)),
        ),
        _ => (BoundKind::None, None),
    }
}

fn is_suffix(p: &Partition) -> bool {
    let n = p.n_sites();
    let a = p.a_sites();
    a.iter().enumerate().all(|(i, &s)| s == n - a.len() + i)
}

/// Partitions swept by a scaling experiment. Sites are 0-based; in two
/// dimensions they are numbered row-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PartitionSpec {
    /// `A` = first half of the sites.
    Middle,
    /// `A` = the last `n` sites, for each `n` in `sizes` (A right of B).
    Suffix { sizes: Vec<usize> },
    /// `A` = the first `n` sites, for each `n` in `sizes`.
    Prefix { sizes: Vec<usize> },
    /// Every cut of the chain: prefixes of length `1..N`.
    Cuts,
    /// Explicit `A` sites.
    Sites { a: Vec<usize> },
    /// `alpha x alpha` square with top-left corner `(row, col)` on a 2D input.
    Square { row: usize, col: usize, alpha: Vec<usize> },
}

impl PartitionSpec {
    pub fn expand(&self, family: &CircuitSpec) -> Result<Vec<Partition>> {
        let n = family.n_sites();
        let m = family.local_dim();
        match self {
            PartitionSpec::Middle => Ok(vec![Partition::middle(n, m)?]),
            PartitionSpec::Suffix { sizes } => sizes.iter().map(|&k| Partition::suffix(n, k, m)).collect(),
            PartitionSpec::Prefix { sizes } => sizes.iter().map(|&k| Partition::prefix(n, k, m)).collect(),
            PartitionSpec::Cuts => (1..n).map(|k| Partition::prefix(n, k, m)).collect(),
            PartitionSpec::Sites { a } => Ok(vec![Partition::new(n, a.iter().copied(), m)?]),
            PartitionSpec::Square { row, col, alpha } => {
                let side = match family {
                    CircuitSpec::Cac(s) if s.dims == 2 => s.side,
                    _ => {
                        return Err(Error::Partition(
                            "square regions need a 2D convolutional circuit".into(),
                        ))
                    }
                };
                alpha
                    .iter()
                    .map(|&a| Partition::square(side, *row, *col, a, m))
                    .collect()
            }
        }
    }
}

/// A property checked over the rows of one sweep, in grid order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Assertion {
    EeNondecreasing,
    RankNondecreasing,
    RankNonincreasing,
    RankAtMost { value: usize },
    RankAtLeast { value: usize },
}

impl Assertion {
    pub fn name(&self) -> String {
        match self {
            Assertion::EeNondecreasing => "ee-nondecreasing".into(),
            Assertion::RankNondecreasing => "rank-nondecreasing".into(),
            Assertion::RankNonincreasing => "rank-nonincreasing".into(),
            Assertion::RankAtMost { value } => format!("rank-at-most {value}"),
            Assertion::RankAtLeast { value } => format!("rank-at-least {value}"),
        }
    }

    /// Checks completed rows; skipped rows are ignored. `Err` carries the
    /// first violation.
    pub fn check(&self, rows: &[ScalingRecord]) -> std::result::Result<(), String> {
        let done: Vec<&ScalingRecord> = rows.iter().filter(|r| r.status == Status::Ok).collect();
        let pairs = || done.windows(2).map(|w| (w[0], w[1]));
        let violation = match self {
            Assertion::EeNondecreasing => pairs().find(|(a, b)| b.best_ee < a.best_ee - EE_SLACK).map(|(a, b)| {
                format!(
                    "best_ee drops from {} (row {}) to {} (row {})",
                    a.best_ee, a.row, b.best_ee, b.row
                )
            }),
            Assertion::RankNondecreasing => pairs().find(|(a, b)| b.best_rank < a.best_rank).map(|(a, b)| {
                format!(
                    "best_rank drops from {} (row {}) to {} (row {})",
                    a.best_rank, a.row, b.best_rank, b.row
                )
            }),
            Assertion::RankNonincreasing => pairs().find(|(a, b)| b.best_rank > a.best_rank).map(|(a, b)| {
                format!(
                    "best_rank rises from {} (row {}) to {} (row {})",
                    a.best_rank, a.row, b.best_rank, b.row
                )
            }),
            Assertion::RankAtMost { value } => done
                .iter()
                .find(|r| r.best_rank > *value)
                .map(|r| format!("row {} reaches rank {} > {value}", r.row, r.best_rank)),
            Assertion::RankAtLeast { value } => done
                .iter()
                .find(|r| r.best_rank < *value)
                .map(|r| format!("row {} only reaches rank {} < {value}", r.row, r.best_rank)),
        };
        match violation {
            Some(v) => Err(v),
            None => Ok(()),
        }
    }
}

/// Slack for comparing entropies of different random searches.
pub const EE_SLACK: f64 = 1e-9;

/// One sweep: a base circuit, optional overrides, the partitions to measure
/// and the properties to assert.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub name: String,
    pub circuit: CircuitSpec,
    pub partition: PartitionSpec,
    /// Depth overrides; convolutional widths are truncated or extended with
    /// their last entry to match.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub depths: Vec<usize>,
    /// Pooling overrides for convolutional circuits.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pools: Vec<usize>,
    #[serde(default, rename = "assert", skip_serializing_if = "Vec::is_empty")]
    pub assertions: Vec<Assertion>,
}

/// A scaling experiment: shared trial settings and a list of sweeps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// Optimizer evaluations per refined draw; see [`max_ee_estimate`].
    #[serde(default)]
    pub refine_evals: usize,
    #[serde(default = "default_refine_starts")]
    pub refine_starts: usize,
    #[serde(default, rename = "sweep")]
    pub sweeps: Vec<Sweep>,
}

fn default_trials() -> usize {
    100
}

fn default_rel_tol() -> f64 {
    DEFAULT_REL_TOL
}

fn default_budget() -> usize {
    DEFAULT_BUDGET
}

fn default_refine_starts() -> usize {
    DEFAULT_REFINE_STARTS
}

impl ScalingConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ScalingConfig = toml::from_str(text).map_err(|e| Error::Parse {
            line: e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0),
            msg: e.message().to_string(),
        })?;
        if cfg.trials == 0 {
            return Err(Error::Spec("trials must be at least 1".into()));
        }
        if !(cfg.rel_tol > 0.0 && cfg.rel_tol < 1.0) {
            return Err(Error::Spec("rel_tol must lie in (0, 1)".into()));
        }
        Ok(cfg)
    }

    /// Every row of the grid, in output order, without computing anything.
    pub fn plan(&self) -> Result<Vec<PlannedRow>> {
        let mut rows = Vec::new();
        for sweep in &self.sweeps {
            for family in sweep.families()? {
                for partition in sweep.partition.expand(&family)? {
                    rows.push(PlannedRow {
                        sweep: sweep.name.clone(),
                        family: family.clone(),
                        partition,
                    });
                }
            }
        }
        Ok(rows)
    }
}

impl Sweep {
    /// The circuit variants, depth-major then pooling.
    pub fn families(&self) -> Result<Vec<CircuitSpec>> {
        let depths: Vec<Option<usize>> = if self.depths.is_empty() {
            vec![None]
        } else {
            self.depths.iter().copied().map(Some).collect()
        };
        let pools: Vec<Option<usize>> = if self.pools.is_empty() {
            vec![None]
        } else {
            self.pools.iter().copied().map(Some).collect()
        };
        let mut out = Vec::new();
        for &depth in &depths {
            for &pool in &pools {
                let mut family = self.circuit.clone();
                match &mut family {
                    CircuitSpec::Cac(s) => {
                        if let Some(l) = depth {
                            let last = *s.widths.last().expect("validated widths");
                            s.widths.resize(l + 1, last);
                            s.depth = l;
                        }
                        if let Some(p) = pool {
                            s.pool = p;
                        }
                    }
                    CircuitSpec::Rac(s) => {
                        if let Some(l) = depth {
                            s.depth = l;
                        }
                        if pool.is_some() {
                            return Err(Error::Spec(format!(
                                "sweep {}: pooling applies to convolutional circuits only",
                                self.name
                            )));
                        }
                    }
                    CircuitSpec::Product { .. } => {
                        if depth.is_some() || pool.is_some() {
                            return Err(Error::Spec(format!(
                                "sweep {}: product circuits take no overrides",
                                self.name
                            )));
                        }
                    }
                }
                family.validate()?;
                out.push(family);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlannedRow {
    pub sweep: String,
    pub family: CircuitSpec,
    pub partition: Partition,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Skipped,
}

/// One measured row. Field order is the CSV column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub sweep: String,
    pub row: usize,
    pub kind: String,
    pub dims: Option<usize>,
    pub sites: usize,
    pub local_dim: usize,
    pub depth: Option<usize>,
    pub kernel: Option<usize>,
    pub stride: Option<usize>,
    pub pool: Option<usize>,
    pub widths: Option<String>,
    pub hidden: Option<usize>,
    pub partition: String,
    pub a_size: usize,
    pub trials: usize,
    pub seed: u64,
    pub best_ee: f64,
    pub best_rank: usize,
    pub ee_cap: f64,
    pub bound_kind: BoundKind,
    pub bound_value: Option<f64>,
    pub status: Status,
    pub wall_time_ms: Option<f64>,
}

impl ScalingRecord {
    fn describe(sweep: &str, row: usize, family: &CircuitSpec, p: &Partition, trials: usize, seed: u64) -> Self {
        let (bound_kind, bound_value) = bound_for(family, p);
        let mut rec = ScalingRecord {
            sweep: sweep.to_string(),
            row,
            kind: String::new(),
            dims: None,
            sites: family.n_sites(),
            local_dim: family.local_dim(),
            depth: None,
            kernel: None,
            stride: None,
            pool: None,
            widths: None,
            hidden: None,
            partition: p.descriptor(),
            a_size: p.a_sites().len(),
            trials,
            seed,
            best_ee: 0.0,
            best_rank: 0,
            ee_cap: p.max_entropy(),
            bound_kind,
            bound_value,
            status: Status::Skipped,
            wall_time_ms: None,
        };
        match family {
            CircuitSpec::Cac(s) => {
                rec.kind = "cac".into();
                rec.dims = Some(s.dims);
                rec.depth = Some(s.depth);
                rec.kernel = Some(s.kernel);
                rec.stride = Some(s.stride);
                rec.pool = Some(s.pool);
                rec.widths = Some(s.widths.iter().map(|w| w.to_string()).collect::<Vec<_>>().join("-"));
            }
            CircuitSpec::Rac(s) => {
                rec.kind = "rac".into();
                rec.depth = Some(s.depth);
                rec.hidden = Some(s.hidden);
            }
            CircuitSpec::Product { .. } => {
                rec.kind = "product".into();
                rec.depth = Some(0);
            }
        }
        rec
    }

    /// Converts entropies (and the logarithmic bound) from nats to bits.
    pub fn in_bits(mut self) -> Self {
        let f = std::f64::consts::LN_2;
        self.best_ee /= f;
        self.ee_cap /= f;
        if self.bound_kind == BoundKind::DeepRac {
            self.bound_value = self.bound_value.map(|v| v / f);
        }
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssertionOutcome {
    pub sweep: String,
    pub check: String,
    pub result: std::result::Result<(), String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingReport {
    pub records: Vec<ScalingRecord>,
    pub assertions: Vec<AssertionOutcome>,
}

impl ScalingReport {
    pub fn all_passed(&self) -> bool {
        self.assertions.iter().all(|a| a.result.is_ok())
    }
}

/// Runs every sweep. Rows whose tensor exceeds the budget are marked skipped;
/// any other error aborts the run.
pub fn scaling_experiment(cfg: &ScalingConfig, seed: u64, timing: bool) -> Result<ScalingReport> {
    let opts = EstimateOptions {
        trials: cfg.trials,
        seed,
        rel_tol: cfg.rel_tol,
        budget: cfg.budget,
        refine_evals: cfg.refine_evals,
        refine_starts: cfg.refine_starts,
    };
    let mut records = Vec::new();
    let mut assertions = Vec::new();
    for sweep in &cfg.sweeps {
        let first = records.len();
        for family in sweep.families()? {
            for p in sweep.partition.expand(&family)? {
                let mut rec = ScalingRecord::describe(&sweep.name, records.len(), &family, &p, cfg.trials, seed);
                let start = Instant::now();
                match max_ee_estimate(&family, &p, &opts) {
                    Ok(est) => {
                        rec.best_ee = est.best_ee;
                        rec.best_rank = est.best_rank;
                        rec.status = Status::Ok;
                    }
                    Err(Error::BudgetExceeded { .. }) => {}
                    Err(e) => return Err(e),
                }
                if timing {
                    rec.wall_time_ms = Some(start.elapsed().as_secs_f64() * 1e3);
                }
                records.push(rec);
            }
        }
        for a in &sweep.assertions {
            assertions.push(AssertionOutcome {
                sweep: sweep.name.clone(),
                check: a.name(),
                result: a.check(&records[first..]),
            });
        }
    }
    Ok(ScalingReport { records, assertions })
}
