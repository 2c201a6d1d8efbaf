use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use reusetn::analysis::{entanglement_stats, scaling_experiment, ScalingConfig, ScalingRecord, Status};
use reusetn::builders::{build_equivalent, BuiltNetwork, DEFAULT_LEG_BUDGET};
use reusetn::circuits::{Circuit, DEFAULT_BUDGET};
use reusetn::netfile::{load_circuit_doc, load_network, network_to_toml, weights_bundle};
use reusetn::network::{attach_dup_deltas, contract_network, dup, no_cloning_witness};
use reusetn::schmidt::{Partition, DEFAULT_REL_TOL};
use reusetn::tensor::{relative_deviations, DenseTensor};

const PRESETS: &[(&str, &str)] = &[
    (
        "rac-depth-separation",
        include_str!("../presets/rac-depth-separation.toml"),
    ),
    ("cac-overlap", include_str!("../presets/cac-overlap.toml")),
];

/// Arithmetic-circuit tensor networks and entanglement experiments.
///
/// Exit status: 0 on success, 1 when a checked property fails, 2 on usage or
/// configuration errors.
#[derive(Parser, Debug)]
#[command(name = "reusetn", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compare a circuit's amplitudes with the contraction of its tensor network.
    VerifyEquivalence(VerifyArgs),
    /// Check the delta-tensor cloning candidate on basis vectors and on the all-ones vector.
    NoCloning(NoCloningArgs),
    /// Run an entanglement scaling experiment and check its assertions.
    Scaling(ScalingArgs),
    /// Emit the tensor network equivalent to a circuit.
    Build(BuildArgs),
    /// Entanglement entropy and Schmidt rank of one circuit across one cut.
    Entropy(EntropyArgs),
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Write results here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Print the resolved plan and exit without computing.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Circuit description file.
    #[arg(long)]
    config: PathBuf,
    /// Replaces the weights seed of the circuit file.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of weight draws (seeded circuits only); draw k uses seed + k.
    #[arg(long, default_value_t = 1)]
    draws: u64,
    /// Use this network file instead of building one from the circuit.
    #[arg(long)]
    tn: Option<PathBuf>,
    /// Largest accepted deviation, relative to the largest amplitude.
    #[arg(long, default_value_t = 1e-10)]
    tolerance: f64,
    /// Cap on materialized tensor entries.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: usize,
    /// Cap on raw external legs of recursive constructions.
    #[arg(long, default_value_t = DEFAULT_LEG_BUDGET)]
    leg_budget: usize,
    /// Merge duplicated indices with delta tensors instead of index mapping.
    #[arg(long)]
    via_deltas: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct NoCloningArgs {
    /// Local dimension; may be repeated.
    #[arg(long = "dim", required = true)]
    dims: Vec<usize>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct ScalingArgs {
    /// Experiment file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in experiment: rac-depth-separation or cac-overlap.
    #[arg(long)]
    preset: Option<String>,
    /// Master seed; required unless the experiment file sets one.
    #[arg(long)]
    seed: Option<u64>,
    /// Replaces the number of independent draws per row.
    #[arg(long)]
    trials: Option<usize>,
    /// Replaces the number of CMA-ES evaluations per refined draw (0 disables refinement).
    #[arg(long)]
    refine_evals: Option<usize>,
    /// Replaces the Schmidt-rank tolerance, relative to the largest singular value.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Replaces the cap on materialized tensor entries.
    #[arg(long)]
    budget: Option<usize>,
    /// Report entropies in bits instead of nats.
    #[arg(long)]
    bits: bool,
    /// Record wall time per row (makes output run-dependent).
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct BuildArgs {
    /// Circuit description file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_LEG_BUDGET)]
    leg_budget: usize,
    /// Attach one delta tensor per duplicated label.
    #[arg(long)]
    deltas: bool,
    /// Also write the circuit's weights as a dten bundle.
    #[arg(long)]
    weights_out: Option<PathBuf>,
    /// Network file to write; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args, Debug)]
struct EntropyArgs {
    /// Circuit description file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Cut: middle, prefix:K, suffix:K, cuts, or sites:I,J,... (0-based).
    #[arg(long, default_value = "middle")]
    partition: String,
    /// Schmidt-rank tolerance relative to the largest singular value.
    #[arg(long, default_value_t = DEFAULT_REL_TOL)]
    tolerance: f64,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: usize,
    #[arg(long)]
    bits: bool,
    #[command(flatten)]
    output: OutputArgs,
}

enum Outcome {
    Pass,
    Fail,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::VerifyEquivalence(a) => verify(a),
        Command::NoCloning(a) => no_cloning(a),
        Command::Scaling(a) => scaling(a),
        Command::Build(a) => build(a),
        Command::Entropy(a) => entropy(a),
    };
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn to_csv<T: Serialize>(rows: &[T], header: &[&str]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn config_label(config: &[usize]) -> String {
    config.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ")
}

#[derive(Serialize)]
struct VerifyRow {
    draw: u64,
    config: String,
    circuit: f64,
    network: f64,
    deviation: f64,
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    construction: String,
    draws: u64,
    tolerance: f64,
    max_deviation: f64,
    passed: bool,
    rows: &'a [VerifyRow],
}

fn network_amplitudes(built: &BuiltNetwork, via_deltas: bool) -> Result<DenseTensor> {
    Ok(if via_deltas {
        built.amplitudes_via_deltas()?
    } else {
        built.amplitudes()?
    })
}

fn verify(a: VerifyArgs) -> Result<Outcome> {
    if a.tolerance.is_nan() || a.tolerance < 0.0 {
        bail!("tolerance must be non-negative");
    }
    let (doc, base) = load_circuit_doc(&a.config)?;
    if a.draws == 0 {
        bail!("--draws must be at least 1");
    }
    if a.draws > 1 && doc.weights.file.is_some() {
        bail!("--draws needs seeded weights; the circuit file names a weights file");
    }
    let override_tn = a.tn.as_deref().map(load_network).transpose()?;
    let seed = a.seed.or(doc.weights.seed);
    if a.output.dry_run {
        let spec = toml::to_string(&doc.circuit)?;
        println!("verify-equivalence");
        println!("circuit:\n{}", spec.trim_end());
        match (&doc.weights.file, seed) {
            (Some(f), _) => println!("weights: file {f}"),
            (None, Some(s)) => println!("weights: seeds {s}..{}", s + a.draws - 1),
            (None, None) => println!("weights: none"),
        }
        println!(
            "network: {}",
            a.tn.as_ref()
                .map_or("built from the circuit".into(), |p| p.display().to_string())
        );
        println!("tolerance: {:e}", a.tolerance);
        return Ok(Outcome::Pass);
    }

    let mut rows = Vec::new();
    let mut construction = String::from("file");
    let mut first_failure: Option<(u64, String, f64)> = None;
    for k in 0..a.draws {
        let circuit = doc.instantiate(&base, seed.map(|s| s + k))?;
        let network = match &override_tn {
            Some(tn) if a.via_deltas => contract_network(&attach_dup_deltas(tn)?)?,
            Some(tn) => dup(&contract_network(tn)?, &tn.dup_groups())?,
            None => {
                let built = build_equivalent(&circuit, a.leg_budget)?;
                construction = built.construction.to_string();
                network_amplitudes(&built, a.via_deltas)?
            }
        };
        let oracle = circuit.materialize(a.budget)?;
        if network.shape() != oracle.shape() {
            bail!(
                "network has external shape {:?}, circuit tensor has {:?}",
                network.shape(),
                oracle.shape()
            );
        }
        let dev = relative_deviations(&network, &oracle)?;
        let n = oracle.order();
        let m = circuit.spec().local_dim();
        for (flat, d) in dev.iter().enumerate() {
            let mut config = vec![0; n];
            let mut rest = flat;
            for slot in config.iter_mut().rev() {
                *slot = rest % m;
                rest /= m;
            }
            let label = config_label(&config);
            if (d.is_nan() || *d > a.tolerance) && first_failure.is_none() {
                first_failure = Some((k, label.clone(), *d));
            }
            rows.push(VerifyRow {
                draw: k,
                config: label,
                circuit: oracle.data()[flat],
                network: network.data()[flat],
                deviation: *d,
            });
        }
    }
    let max_deviation = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    let passed = first_failure.is_none();
    let text = match a.output.format {
        Format::Csv => to_csv(&rows, &["draw", "config", "circuit", "network", "deviation"])?,
        Format::Json => to_json(&VerifyReport {
            construction: construction.clone(),
            draws: a.draws,
            tolerance: a.tolerance,
            max_deviation,
            passed,
            rows: &rows,
        })?,
    };
    emit(a.output.out.as_deref(), &text)?;
    eprintln!(
        "{construction}: {} configurations over {} draw(s), max relative deviation {max_deviation:e} (tolerance {:e})",
        rows.len() as u64 / a.draws,
        a.draws,
        a.tolerance
    );
    match first_failure {
        None => {
            eprintln!("PASS");
            Ok(Outcome::Pass)
        }
        Some((k, config, d)) => {
            eprintln!("FAIL: draw {k}, configuration [{config}] deviates by {d:e}");
            Ok(Outcome::Fail)
        }
    }
}

#[derive(Serialize)]
struct NoCloningRow {
    dim: usize,
    basis_cloned: bool,
    violation: f64,
    degenerate: bool,
}

fn no_cloning(a: NoCloningArgs) -> Result<Outcome> {
    if let Some(d) = a.dims.iter().find(|&&d| d == 0) {
        bail!("dimension must be positive, got {d}");
    }
    if a.output.dry_run {
        println!("no-cloning for dimensions {:?}", a.dims);
        return Ok(Outcome::Pass);
    }
    let rows: Vec<NoCloningRow> = a
        .dims
        .iter()
        .map(|&dim| {
            let r = no_cloning_witness(dim);
            NoCloningRow {
                dim,
                basis_cloned: r.basis_cloned,
                violation: r.counterexample_violation,
                degenerate: dim == 1,
            }
        })
        .collect();
    let text = match a.output.format {
        Format::Csv => to_csv(&rows, &["dim", "basis_cloned", "violation", "degenerate"])?,
        Format::Json => to_json(&rows)?,
    };
    emit(a.output.out.as_deref(), &text)?;
    for r in &rows {
        if r.degenerate {
            eprintln!("dim 1: the all-ones vector is the only basis vector, so cloning succeeds (excluded case)");
        } else {
            eprintln!(
                "dim {}: basis vectors cloned exactly: {}; all-ones violation {}",
                r.dim, r.basis_cloned, r.violation
            );
        }
    }
    Ok(Outcome::Pass)
}

fn load_scaling_config(a: &ScalingArgs) -> Result<ScalingConfig> {
    let text = match (&a.config, &a.preset) {
        (Some(path), _) => fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        (None, Some(name)) => PRESETS
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.to_string())
            .with_context(|| {
                let names: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
                format!("unknown preset `{name}`; available: {}", names.join(", "))
            })?,
        (None, None) => bail!("either --config or --preset is required"),
    };
    let mut cfg = ScalingConfig::parse(&text)?;
    if let Some(t) = a.trials {
        if t == 0 {
            bail!("--trials must be at least 1");
        }
        cfg.trials = t;
    }
    if let Some(t) = a.tolerance {
        if !(t > 0.0 && t < 1.0) {
            bail!("--tolerance must lie in (0, 1)");
        }
        cfg.rel_tol = t;
    }
    if let Some(b) = a.budget {
        cfg.budget = b;
    }
    if let Some(e) = a.refine_evals {
        cfg.refine_evals = e;
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct AssertionRow {
    sweep: String,
    check: String,
    passed: bool,
    detail: String,
}

#[derive(Serialize)]
struct ScalingJson<'a> {
    records: &'a [ScalingRecord],
    assertions: &'a [AssertionRow],
}

const RECORD_COLUMNS: &[&str] = &[
    "sweep",
    "row",
    "kind",
    "dims",
    "sites",
    "local_dim",
    "depth",
    "kernel",
    "stride",
    "pool",
    "widths",
    "hidden",
    "partition",
    "a_size",
    "trials",
    "seed",
    "best_ee",
    "best_rank",
    "ee_cap",
    "bound_kind",
    "bound_value",
    "status",
    "wall_time_ms",
];

fn scaling(a: ScalingArgs) -> Result<Outcome> {
    let cfg = load_scaling_config(&a)?;
    let seed = a
        .seed
        .or(cfg.seed)
        .context("a seed is required: pass --seed or set `seed` in the experiment file")?;
    if a.output.dry_run {
        let plan = cfg.plan()?;
        println!(
            "scaling: seed {seed}, {} trials per row, refinement {} evals x {} starts, rel_tol {:e}, budget {}",
            cfg.trials, cfg.refine_evals, cfg.refine_starts, cfg.rel_tol, cfg.budget
        );
        for (i, row) in plan.iter().enumerate() {
            println!(
                "row {i}: sweep {}, {}, {}",
                row.sweep,
                row.family,
                row.partition.descriptor()
            );
        }
        for sweep in &cfg.sweeps {
            for check in &sweep.assertions {
                println!("assert {}: {}", sweep.name, check.name());
            }
        }
        return Ok(Outcome::Pass);
    }
    let report = scaling_experiment(&cfg, seed, a.timing)?;
    let records: Vec<ScalingRecord> = if a.bits {
        report.records.iter().cloned().map(ScalingRecord::in_bits).collect()
    } else {
        report.records.clone()
    };
    let assertions: Vec<AssertionRow> = report
        .assertions
        .iter()
        .map(|o| AssertionRow {
            sweep: o.sweep.clone(),
            check: o.check.clone(),
            passed: o.result.is_ok(),
            detail: o.result.clone().err().unwrap_or_default(),
        })
        .collect();
    let text = match a.output.format {
        Format::Csv => to_csv(&records, RECORD_COLUMNS)?,
        Format::Json => to_json(&ScalingJson {
            records: &records,
            assertions: &assertions,
        })?,
    };
    emit(a.output.out.as_deref(), &text)?;
    let skipped = records.iter().filter(|r| r.status == Status::Skipped).count();
    eprintln!("{} rows ({skipped} skipped over budget)", records.len());
    for r in &assertions {
        if r.passed {
            eprintln!("PASS {}: {}", r.sweep, r.check);
        } else {
            eprintln!("FAIL {}: {}: {}", r.sweep, r.check, r.detail);
        }
    }
    Ok(if report.all_passed() {
        Outcome::Pass
    } else {
        Outcome::Fail
    })
}

fn build(a: BuildArgs) -> Result<Outcome> {
    let (doc, base) = load_circuit_doc(&a.config)?;
    if a.dry_run {
        println!("build network for:\n{}", doc.to_toml().trim_end());
        return Ok(Outcome::Pass);
    }
    let circuit = doc.instantiate(&base, a.seed)?;
    let built = build_equivalent(&circuit, a.leg_budget)?;
    let tn = if a.deltas {
        attach_dup_deltas(&built.tn)?
    } else {
        built.tn.clone()
    };
    let mut text = format!("# {} network for {}\n", built.construction, built.provenance);
    text.push_str(&network_to_toml(&tn));
    emit(a.out.as_deref(), &text)?;
    if let Some(path) = &a.weights_out {
        fs::write(path, weights_bundle(&circuit)).with_context(|| format!("writing {}", path.display()))?;
    }
    eprintln!(
        "{}: {} nodes, {} raw external legs, {} sites",
        built.construction,
        tn.nodes().len(),
        built.raw_leg_count(),
        built.dup_groups.groups().len()
    );
    Ok(Outcome::Pass)
}

fn parse_partitions(spec: &str, n: usize, m: usize) -> Result<Vec<Partition>> {
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let number = || -> Result<usize> {
        arg.trim()
            .parse()
            .with_context(|| format!("`{spec}`: expected a size after `:`"))
    };
    Ok(match kind {
        "middle" => vec![Partition::middle(n, m)?],
        "prefix" => vec![Partition::prefix(n, number()?, m)?],
        "suffix" => vec![Partition::suffix(n, number()?, m)?],
        "cuts" => (1..n)
            .map(|k| Partition::prefix(n, k, m))
            .collect::<reusetn::Result<_>>()?,
        "sites" => {
            let sites = arg
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .with_context(|| format!("`{spec}`: expected comma-separated site indices"))?;
            vec![Partition::new(n, sites, m)?]
        }
        _ => bail!("unknown partition `{spec}`"),
    })
}

#[derive(Serialize)]
struct EntropyRow {
    partition: String,
    entropy: f64,
    unit: &'static str,
    schmidt_rank: usize,
    ee_cap: f64,
}

fn entropy(a: EntropyArgs) -> Result<Outcome> {
    if !(a.tolerance > 0.0 && a.tolerance < 1.0) {
        bail!("--tolerance must lie in (0, 1)");
    }
    let (doc, base) = load_circuit_doc(&a.config)?;
    let n = doc.circuit.n_sites();
    let m = doc.circuit.local_dim();
    let parts = parse_partitions(&a.partition, n, m)?;
    if a.output.dry_run {
        println!("entropy of the circuit in {} across:", a.config.display());
        for p in &parts {
            println!("  {}", p.descriptor());
        }
        return Ok(Outcome::Pass);
    }
    let circuit: Circuit = doc.instantiate(&base, a.seed)?;
    let t = circuit.amplitudes(a.budget)?;
    let (unit, factor) = if a.bits {
        ("bits", std::f64::consts::LN_2)
    } else {
        ("nats", 1.0)
    };
    let rows = parts
        .iter()
        .map(|p| {
            let s = entanglement_stats(&t, p, a.tolerance)?;
            Ok(EntropyRow {
                partition: p.descriptor(),
                entropy: s.ee / factor,
                unit,
                schmidt_rank: s.rank,
                ee_cap: p.max_entropy() / factor,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let text = match a.output.format {
        Format::Csv => to_csv(&rows, &["partition", "entropy", "unit", "schmidt_rank", "ee_cap"])?,
        Format::Json => to_json(&rows)?,
    };
    emit(a.output.out.as_deref(), &text)?;
    Ok(Outcome::Pass)
}
