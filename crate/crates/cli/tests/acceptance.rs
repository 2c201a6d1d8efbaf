//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reusetn::analysis::{
    deep_rac_bound, overlap_bound, param_scaling, scaling_experiment, trial_rng, ScalingConfig, ScalingRecord,
};
use reusetn::builders::{build_equivalent, Construction, DEFAULT_LEG_BUDGET};
use reusetn::circuits::{CircuitSpec, ConvSpec, Padding, RacSpec, DEFAULT_BUDGET};
use reusetn::network::{dup, dup_via_deltas, no_cloning_witness, DupGroups};
use reusetn::schmidt::{schmidt_rank, Partition, DEFAULT_REL_TOL};
use reusetn::tensor::{relative_deviations, DenseTensor};

const EQ_TOL: f64 = 1e-10;

type Verdict = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Verdict,
}

fn cac(side: usize, depth: usize, kernel: usize, stride: usize, pool: usize) -> CircuitSpec {
    CircuitSpec::Cac(ConvSpec {
        dims: 1,
        side,
        local_dim: 2,
        depth,
        kernel,
        stride,
        pool,
        widths: vec![2; depth + 1],
        padding: Padding::Identity,
    })
}

fn rac(length: usize, hidden: usize, depth: usize) -> CircuitSpec {
    CircuitSpec::Rac(RacSpec {
        length,
        local_dim: 2,
        hidden,
        depth,
    })
}

/// Largest relative deviation of `DUP(contract(TN))` from the materialized
/// circuit over `draws` seeded weight draws.
fn equivalence(family: &CircuitSpec, expect: Construction, draws: u64) -> Result<f64, String> {
    let mut worst = 0.0f64;
    for seed in 0..draws {
        let circuit = family.random(&mut ChaCha8Rng::seed_from_u64(seed));
        let built = build_equivalent(&circuit, DEFAULT_LEG_BUDGET).map_err(|e| e.to_string())?;
        if built.construction != expect {
            return Err(format!("{family}: built {} instead of {expect}", built.construction));
        }
        let oracle = circuit.materialize(DEFAULT_BUDGET).map_err(|e| e.to_string())?;
        let amps = built.amplitudes().map_err(|e| e.to_string())?;
        let dev = relative_deviations(&amps, &oracle).map_err(|e| e.to_string())?;
        if let Some((config, d)) = dev.iter().enumerate().find(|(_, d)| d.is_nan() || **d > EQ_TOL) {
            return Err(format!(
                "{family}: draw {seed}, configuration {config} deviates by {d:e}"
            ));
        }
        worst = dev.into_iter().fold(worst, f64::max);
    }
    Ok(worst)
}

fn tree_equivalence() -> Verdict {
    let worst = equivalence(&cac(4, 2, 2, 2, 1), Construction::Tree, 100)?;
    Ok(format!("16 amplitudes x 100 draws, max relative deviation {worst:.2e}"))
}

fn mps_equivalence() -> Verdict {
    let worst = equivalence(&rac(6, 3, 1), Construction::Mps, 100)?;
    Ok(format!("64 amplitudes x 100 draws, max relative deviation {worst:.2e}"))
}

fn dup_equivalences() -> Verdict {
    let cases = [
        (cac(4, 2, 2, 1, 1), Construction::RecursiveTree),
        (rac(3, 2, 2), Construction::RecursiveMps),
        (rac(6, 2, 2), Construction::RecursiveMps),
    ];
    let mut parts = Vec::new();
    for (family, expect) in &cases {
        let worst = equivalence(family, *expect, 20)?;
        parts.push(format!("{expect} {worst:.2e}"));
    }
    Ok(format!("20 draws each, max relative deviation: {}", parts.join(", ")))
}

fn delta_path_consistency() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..50 {
        let order = rng.random_range(1usize..=6);
        let dim = rng.random_range(1usize..=4);
        let data = (0..dim.pow(order as u32))
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let t = DenseTensor::new(vec![dim; order], data).map_err(|e| e.to_string())?;
        let labels: Vec<String> = (0..order).map(|_| rng.random_range(0..order).to_string()).collect();
        let groups = DupGroups::from_labels(labels.iter().map(String::as_str));
        let by_index = dup(&t, &groups).map_err(|e| e.to_string())?;
        let by_delta = dup_via_deltas(&t, &groups).map_err(|e| e.to_string())?;
        if by_index != by_delta {
            return Err(format!("case {case}: shape {:?}, labels {labels:?} differ", t.shape()));
        }
    }
    Ok("50 tensors, index mapping and delta attachment identical".into())
}

fn no_cloning() -> Verdict {
    let mut parts = Vec::new();
    for dim in [2, 3, 5] {
        let r = no_cloning_witness(dim);
        if !r.basis_cloned {
            return Err(format!("dim {dim}: a basis vector is not cloned"));
        }
        if r.counterexample_violation < 1.0 - 1e-12 {
            return Err(format!("dim {dim}: violation {} < 1", r.counterexample_violation));
        }
        parts.push(format!("dim {dim} violation {}", r.counterexample_violation));
    }
    Ok(parts.join(", "))
}

fn ranks(family: &CircuitSpec, partitions: &[Partition], seed: u64, trials: usize) -> Result<Vec<Vec<usize>>, String> {
    (0..trials)
        .map(|trial| {
            let circuit = family.random(&mut trial_rng(seed, trial));
            let t = circuit.amplitudes(DEFAULT_BUDGET).map_err(|e| e.to_string())?;
            partitions
                .iter()
                .map(|p| schmidt_rank(&t, p, DEFAULT_REL_TOL).map_err(|e| e.to_string()))
                .collect()
        })
        .collect()
}

fn shallow_rank_cap() -> Verdict {
    let cuts: Vec<Partition> = (1..8).map(|k| Partition::prefix(8, k, 2).unwrap()).collect();
    let all = ranks(&rac(8, 2, 1), &cuts, 6, 100)?;
    let max = all.iter().flatten().copied().max().unwrap_or(0);
    if max > 2 {
        return Err(format!("a cut reaches rank {max}"));
    }
    Ok(format!("100 draws x 7 cuts, max Schmidt rank {max}"))
}

/// First trial (0-based) among `trials` whose rank across `p` exceeds `cap`.
fn first_exceeding(
    family: &CircuitSpec,
    p: &Partition,
    cap: usize,
    seed: u64,
    trials: usize,
) -> Result<Option<(usize, usize)>, String> {
    for trial in 0..trials {
        let rank = ranks_one(family, p, seed, trial)?;
        if rank > cap {
            return Ok(Some((trial, rank)));
        }
    }
    Ok(None)
}

fn ranks_one(family: &CircuitSpec, p: &Partition, seed: u64, trial: usize) -> Result<usize, String> {
    let circuit = family.random(&mut trial_rng(seed, trial));
    let t = circuit.amplitudes(DEFAULT_BUDGET).map_err(|e| e.to_string())?;
    schmidt_rank(&t, p, DEFAULT_REL_TOL).map_err(|e| e.to_string())
}

fn depth_separation() -> Verdict {
    let middle = Partition::middle(8, 2).unwrap();
    match first_exceeding(&rac(8, 2, 2), &middle, 2, 7, 200)? {
        Some((trial, rank)) => Ok(format!("draw {trial} reaches middle-cut rank {rank} > R = 2")),
        None => Err("no draw out of 200 exceeds rank 2".into()),
    }
}

fn overlap_separation() -> Verdict {
    let middle = Partition::middle(8, 2).unwrap();
    let witness = first_exceeding(&cac(8, 2, 2, 1, 1), &middle, 2, 8, 200)?;
    let Some((trial, rank)) = witness else {
        return Err("overlapping circuit never exceeds rank 2 in 200 draws".into());
    };
    let tree = ranks(&cac(8, 3, 2, 2, 1), std::slice::from_ref(&middle), 8, 200)?;
    let tree_max = tree.iter().flatten().copied().max().unwrap_or(0);
    if tree_max > 2 {
        return Err(format!("non-overlapping tree reaches rank {tree_max}"));
    }
    Ok(format!(
        "overlapping draw {trial} reaches rank {rank}; tree max over 200 draws is {tree_max}"
    ))
}

const MONOTONE: &str = r#"
trials = 100
refine_evals = 3000
refine_starts = 4

[[sweep]]
name = "deep-rac"
circuit = { kind = "rac", length = 10, local_dim = 2, hidden = 2, depth = 2 }
partition = { kind = "suffix", sizes = [1, 2, 3, 4, 5] }
assert = [{ check = "ee-nondecreasing" }]

[[sweep]]
name = "overlapping-cac"
circuit = { kind = "cac", dims = 1, side = 8, local_dim = 2, depth = 1, kernel = 2, stride = 1, widths = [2, 2] }
partition = { kind = "middle" }
depths = [1, 2, 3]
assert = [{ check = "rank-nondecreasing" }]
"#;

fn monotonicity() -> Verdict {
    let cfg = ScalingConfig::parse(MONOTONE).map_err(|e| e.to_string())?;
    let report = scaling_experiment(&cfg, 0, false).map_err(|e| e.to_string())?;
    let by = |sweep: &str, f: fn(&ScalingRecord) -> String| {
        report
            .records
            .iter()
            .filter(|r| r.sweep == sweep)
            .map(f)
            .collect::<Vec<_>>()
            .join(" ")
    };
    let summary = format!(
        "deep-rac best_ee [{}]; overlapping-cac best_rank [{}]",
        by("deep-rac", |r| format!("{:.3}", r.best_ee)),
        by("overlapping-cac", |r| r.best_rank.to_string())
    );
    match report.assertions.iter().find(|a| a.result.is_err()) {
        None => Ok(summary),
        Some(a) => Err(format!("{}: {}; {summary}", a.sweep, a.result.clone().unwrap_err())),
    }
}

const POOLING: &str = r#"
trials = 100

[[sweep]]
name = "k2-l2"
circuit = { kind = "cac", dims = 1, side = 8, local_dim = 2, depth = 2, kernel = 2, stride = 1, widths = [2, 2, 2] }
partition = { kind = "middle" }
pools = [1, 2]

[[sweep]]
name = "k2-l3"
circuit = { kind = "cac", dims = 1, side = 8, local_dim = 2, depth = 3, kernel = 2, stride = 1, widths = [2, 2, 2, 2] }
partition = { kind = "middle" }
pools = [1, 2]

[[sweep]]
name = "k3-l2"
circuit = { kind = "cac", dims = 1, side = 9, local_dim = 2, depth = 2, kernel = 3, stride = 1, widths = [2, 2, 2] }
partition = { kind = "middle" }
pools = [1, 2]
"#;

fn pooling_degradation() -> Verdict {
    let cfg = ScalingConfig::parse(POOLING).map_err(|e| e.to_string())?;
    let report = scaling_experiment(&cfg, 10, false).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for pair in report.records.chunks(2) {
        let [unpooled, pooled] = pair else {
            return Err("unpaired row".into());
        };
        if unpooled.pool != Some(1) || pooled.pool != Some(2) {
            return Err(format!("{}: rows are not a P=1/P=2 pair", unpooled.sweep));
        }
        if pooled.best_rank > unpooled.best_rank {
            return Err(format!(
                "{}: pooled rank {} > unpooled {}",
                unpooled.sweep, pooled.best_rank, unpooled.best_rank
            ));
        }
        parts.push(format!(
            "{} {} <= {}",
            unpooled.sweep, pooled.best_rank, unpooled.best_rank
        ));
    }
    Ok(parts.join(", "))
}

fn bound_functions() -> Verdict {
    let v = overlap_bound(100, 2, 20, 5);
    if v != 10000.0 {
        return Err(format!("overlap_bound(100, 2, 20, 5) = {v}"));
    }
    for a in 1..=8 {
        for r in 1..=6 {
            for m in 1..=6 {
                let b = deep_rac_bound(a, r, m);
                if r.min(m) == 1 && b != 0.0 {
                    return Err(format!("deep_rac_bound({a}, {r}, {m}) = {b}, expected 0"));
                }
                let neighbours = [
                    deep_rac_bound(a + 1, r, m),
                    deep_rac_bound(a, r + 1, m),
                    deep_rac_bound(a, r, m + 1),
                ];
                if neighbours.iter().any(|&n| n < b) {
                    return Err(format!("deep_rac_bound decreases from ({a}, {r}, {m})"));
                }
            }
        }
    }
    let (counts, slope) = param_scaling(&[16, 64, 256, 1024], 2, 2);
    if (slope - 0.5).abs() > 0.05 {
        return Err(format!("parameter slope {slope}"));
    }
    Ok(format!(
        "overlap_bound = {v}; deep_rac_bound monotone and zero at min(R,M)=1; params {counts:?} slope {slope:.4}"
    ))
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run_cli(args: &[&str], out: Option<&Path>) -> Result<(Output, Vec<u8>), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_reusetn"));
    cmd.current_dir(workspace()).args(args);
    if let Some(path) = out {
        cmd.arg("--out").arg(path);
    }
    let output = cmd.output().map_err(|e| e.to_string())?;
    let file = match out {
        Some(path) => std::fs::read(path).map_err(|e| e.to_string())?,
        None => Vec::new(),
    };
    Ok((output, file))
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs: &[&[&str]] = &[
        &[
            "verify-equivalence",
            "--config",
            "fixtures/cac-tree-n4.toml",
            "--format",
            "json",
        ],
        &[
            "verify-equivalence",
            "--config",
            "configs/rac-deep-n3.toml",
            "--draws",
            "5",
        ],
        &[
            "verify-equivalence",
            "--config",
            "fixtures/cac-tree-n4.toml",
            "--tn",
            "fixtures/cac-tree-n4-corrupted.tn.toml",
        ],
        &["no-cloning", "--dim", "2", "--dim", "3", "--format", "json"],
        &["scaling", "--preset", "rac-depth-separation", "--seed", "3"],
        &["scaling", "--preset", "cac-overlap", "--seed", "3", "--format", "json"],
        &[
            "scaling",
            "--config",
            "configs/deep-rac-suffix.toml",
            "--trials",
            "20",
            "--refine-evals",
            "200",
        ],
        &["build", "--config", "configs/cac-overlap-n4.toml"],
        &["entropy", "--config", "configs/rac-deep-n3.toml", "--partition", "cuts"],
    ];
    for (i, args) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let path = dir.path().join(format!("run{i}-{rep}.out"));
            let via_file = run_cli(args, Some(&path))?;
            let via_stdout = run_cli(args, None)?;
            outputs.push((via_file, via_stdout));
        }
        let ((f0, file0), (s0, _)) = &outputs[0];
        let ((f1, file1), (s1, _)) = &outputs[1];
        let cmdline = args.join(" ");
        if f0.status.code().is_none_or(|c| c == 2) {
            return Err(format!("`{cmdline}` failed: {}", String::from_utf8_lossy(&f0.stderr)));
        }
        if file0.is_empty() || file0 != file1 || s0.stdout != s1.stdout || *file0 != s0.stdout {
            return Err(format!("`{cmdline}` output differs between invocations"));
        }
        if f0.status.code() != f1.status.code() || f0.stderr != f1.stderr {
            return Err(format!("`{cmdline}` status or summary differs between invocations"));
        }
    }
    Ok(format!("{} invocations byte-identical across repeats", runs.len()))
}

fn main() {
    let criteria = [
        Criterion {
            id: 1,
            name: "tree network equivalence",
            limit: Some(Duration::from_secs(5)),
            run: tree_equivalence,
        },
        Criterion {
            id: 2,
            name: "MPS equivalence",
            limit: Some(Duration::from_secs(5)),
            run: mps_equivalence,
        },
        Criterion {
            id: 3,
            name: "DUP equivalences",
            limit: Some(Duration::from_secs(30)),
            run: dup_equivalences,
        },
        Criterion {
            id: 4,
            name: "delta-path consistency",
            limit: None,
            run: delta_path_consistency,
        },
        Criterion {
            id: 5,
            name: "no-cloning witness",
            limit: None,
            run: no_cloning,
        },
        Criterion {
            id: 6,
            name: "shallow RAC rank cap",
            limit: None,
            run: shallow_rank_cap,
        },
        Criterion {
            id: 7,
            name: "depth separation",
            limit: Some(Duration::from_secs(120)),
            run: depth_separation,
        },
        Criterion {
            id: 8,
            name: "overlap separation",
            limit: Some(Duration::from_secs(120)),
            run: overlap_separation,
        },
        Criterion {
            id: 9,
            name: "monotonicity sweeps",
            limit: None,
            run: monotonicity,
        },
        Criterion {
            id: 10,
            name: "pooling degradation",
            limit: None,
            run: pooling_degradation,
        },
        Criterion {
            id: 11,
            name: "bound functions",
            limit: None,
            run: bound_functions,
        },
        Criterion {
            id: 12,
            name: "CLI determinism",
            limit: None,
            run: determinism,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let mut verdict = (c.run)();
        let elapsed = start.elapsed();
        if let (Ok(detail), Some(limit)) = (&verdict, c.limit) {
            if elapsed > limit {
                verdict = Err(format!("{detail}; took {elapsed:.2?}, limit {limit:?}"));
            }
        }
        match verdict {
            Ok(detail) => println!("PASS {:>2} {}: {detail} [{elapsed:.2?}]", c.id, c.name),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {}: {detail} [{elapsed:.2?}]", c.id, c.name);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
