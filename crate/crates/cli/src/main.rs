//! `iolab`: command-line front end for the simulator, pebbling tools, code
//! constructions and compression counting. Exit status is 0 iff every
//! enabled check passes.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use iolab::compression::{
    cc_lower_bound_symbols, direct_compression_protocol, distinct_output_count, IndexSet, RowRestriction,
    DEFAULT_ENUMERATION_CAP,
};
use iolab::dense::DenseMatrix;
use iolab::experiments::{check_bounds, run_sweep, write_records_csv, BoundConstants, SweepConfig};
use iolab::fields::{
    all_k_subsets_independent, bch_parity_check, binary_independence_matrix, min_code_distance, vandermonde_matrix,
    FieldMatrix, DEFAULT_SUBSET_CAP,
};
use iolab::kernels::{reference_attention, run_kernel, Algorithm, AttentionInstance};
use iolab::pebbling::{
    blocked_pebbling_schedule, brute_force_min_io, build_attention_dag, validate_calculation, verify_m_partition,
    Calculation, Dag, MPartition,
};

#[derive(Parser)]
#[command(name = "iolab", version, about = "I/O complexity laboratory for attention")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Attention kernels on the two-level memory simulator.
    #[command(subcommand)]
    Attn(AttnCmd),
    /// Red-blue pebbling of the attention DAG.
    #[command(subcommand)]
    Pebble(PebbleCmd),
    /// Finite-field independence constructions.
    #[command(subcommand)]
    Codes(CodesCmd),
    /// Compression counting for entries of QKᵀ.
    #[command(subcommand)]
    Compress(CompressCmd),
}

#[derive(Subcommand)]
enum AttnCmd {
    /// Run one kernel and report I/O, epochs and error against the reference.
    Run(AttnRun),
    /// Run a parameter sweep from a JSON config and write CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Check every record against the bound constants.
        #[arg(long)]
        check: bool,
        /// TOML file overriding the bundled bound constants.
        #[arg(long)]
        bounds: Option<PathBuf>,
    },
}

#[derive(Args)]
struct AttnRun {
    #[arg(long, default_value = "dispatch")]
    algorithm: Algorithm,
    #[arg(short = 'm', long)]
    m: usize,
    /// Random instance size (ignored when --q/--k/--v are given).
    #[arg(short = 'n', long, default_value_t = 16)]
    n: usize,
    #[arg(short = 'd', long, default_value_t = 4)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    bound: f64,
    /// Input matrices as CSV, or binary when the file ends in `.bin`.
    #[arg(long, requires_all = ["k", "v"])]
    q: Option<PathBuf>,
    #[arg(long)]
    k: Option<PathBuf>,
    #[arg(long)]
    v: Option<PathBuf>,
    /// Where to write O (CSV, or binary for `.bin`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the I/O trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Maximum accepted relative Frobenius error.
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
}

#[derive(Subcommand)]
enum PebbleCmd {
    /// Write the attention DAG as JSON lines.
    Build {
        #[arg(short = 'n', long)]
        n: usize,
        #[arg(short = 'd', long)]
        d: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a calculation (JSON list of transitions) against a DAG.
    Validate {
        #[arg(long)]
        dag: PathBuf,
        #[arg(long)]
        calc: PathBuf,
        #[arg(short = 'm', long)]
        m: usize,
    },
    /// Exact minimum I/O by exhaustive search on a tiny DAG.
    Search {
        #[arg(long)]
        dag: PathBuf,
        #[arg(short = 'm', long)]
        m: usize,
    },
    /// Emit the blocked schedule for the attention DAG and validate it.
    Schedule {
        #[arg(short = 'n', long)]
        n: usize,
        #[arg(short = 'd', long)]
        d: usize,
        #[arg(short = 'm', long)]
        m: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify an M-partition (JSON) of a DAG.
    Partition {
        #[arg(long)]
        dag: PathBuf,
        #[arg(long)]
        partition: PathBuf,
        #[arg(short = 'm', long)]
        m: usize,
    },
}

#[derive(Subcommand)]
enum CodesCmd {
    /// N×d Vandermonde matrix over F_q with nodes 1..N.
    Vandermonde {
        #[arg(short = 'n', long)]
        n: usize,
        #[arg(short = 'd', long)]
        d: usize,
        #[arg(short = 'q', long)]
        q: u64,
        /// Also check that every d rows are independent.
        #[arg(long)]
        check: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "IOLAB_ENUM_CAP", default_value_t = DEFAULT_SUBSET_CAP)]
        cap: u128,
    },
    /// Binary BCH parity-check matrix of length 2^m − 1 and designed distance s.
    Bch {
        #[arg(long)]
        m: u32,
        #[arg(short = 's', long)]
        s: usize,
        /// Also compute the minimum distance by enumeration and compare with s.
        #[arg(long)]
        distance: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// N×d binary matrix from a truncated BCH code.
    Binary {
        #[arg(short = 'n', long)]
        n: usize,
        #[arg(short = 'd', long)]
        d: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that every k rows of a CSV matrix over F_q are independent.
    Verify {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(short = 'q', long)]
        q: u64,
        #[arg(short = 'k', long)]
        k: usize,
        /// Check columns instead of rows.
        #[arg(long)]
        columns: bool,
        #[arg(long, env = "IOLAB_ENUM_CAP", default_value_t = DEFAULT_SUBSET_CAP)]
        cap: u128,
    },
}

#[derive(Subcommand)]
enum CompressCmd {
    /// Count distinct outputs on an index set and compare with the direct protocol.
    Count {
        /// K as CSV over F_q (N rows, d columns).
        #[arg(long)]
        k: PathBuf,
        #[arg(short = 'q', long)]
        q: u64,
        /// Index set as CSV lines `row,col` (0-based).
        #[arg(long)]
        indices: PathBuf,
        #[arg(long, env = "IOLAB_ENUM_CAP", default_value_t = DEFAULT_ENUMERATION_CAP)]
        cap: u128,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Attn(AttnCmd::Run(a)) => attn_run(a),
        Command::Attn(AttnCmd::Sweep { config, out, check, bounds }) => attn_sweep(&config, &out, check, bounds),
        Command::Pebble(p) => pebble(p),
        Command::Codes(c) => codes(c),
        Command::Compress(CompressCmd::Count { k, q, indices, cap }) => compress_count(&k, q, &indices, cap),
    }
}

fn is_binary(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "bin")
}

fn load_matrix(path: &Path) -> Result<DenseMatrix> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let m = if is_binary(path) {
        DenseMatrix::read_binary(BufReader::new(f))
    } else {
        DenseMatrix::read_csv(BufReader::new(f))
    };
    m.with_context(|| format!("reading {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

/// Writes to `path`, or stdout when absent.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn print_json(v: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&v).expect("json value serialises"));
}

fn attn_run(a: AttnRun) -> Result<bool> {
    let inst = match (&a.q, &a.k, &a.v) {
        (Some(q), Some(k), Some(v)) => AttentionInstance::new(load_matrix(q)?, load_matrix(k)?, load_matrix(v)?)?,
        _ => AttentionInstance::random(a.n, a.d, a.bound, &mut ChaCha8Rng::seed_from_u64(a.seed)),
    };
    let (result, h) = run_kernel(a.algorithm, a.m, &inst)?;
    let err = result.output.relative_error(&reference_attention(&inst));
    if let Some(path) = &a.out {
        let w = create(path)?;
        if is_binary(path) {
            result.output.write_binary(w)?;
        } else {
            result.output.write_csv(w)?;
        }
    }
    if let Some(path) = &a.trace {
        h.write_trace_csv(create(path)?)?;
    }
    let ok = err <= a.tolerance;
    print_json(json!({
        "algorithm": result.algorithm,
        "n": inst.n(), "d": inst.d(), "m": a.m,
        "reads": result.io.reads, "writes": result.io.writes, "io": result.io.total(),
        "epochs": result.epochs.epochs, "b_max": result.epochs.b_max,
        "peak_cache": result.peak_cache,
        "float_overflow": h.float_overflow(),
        "rel_error": err,
        "pass": ok,
    }));
    Ok(ok)
}

fn attn_sweep(config: &Path, out: &Path, check: bool, bounds: Option<PathBuf>) -> Result<bool> {
    let text = std::fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let cfg = SweepConfig::from_json(&text)?;
    let records = run_sweep(&cfg)?;
    write_records_csv(&records, create(out)?)?;
    let failed_runs = records.iter().filter(|r| !r.ok()).count();
    eprintln!("{} records written to {} ({failed_runs} with errors)", records.len(), out.display());
    if !check {
        return Ok(true);
    }
    let constants = match bounds {
        Some(p) => BoundConstants::from_toml(
            &std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?,
        )?,
        None => BoundConstants::default(),
    };
    let report = check_bounds(&records, &constants, cfg.value_mode);
    for c in report.failures() {
        let r = &records[c.index];
        println!(
            "FAIL {} N={} d={} M={} io={} upper={} lower={} reads_inputs={} epoch={}",
            r.algorithm,
            r.n,
            r.d,
            r.m,
            r.io(),
            c.upper,
            c.lower,
            c.reads_inputs,
            c.epoch
        );
    }
    println!(
        "checked {} records, {} failed, {} skipped",
        report.checks.len(),
        report.failures().count(),
        report.skipped.len()
    );
    Ok(report.all_pass())
}

fn load_dag(path: &Path) -> Result<Dag> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Dag::read_jsonl(BufReader::new(f))?)
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

fn pebble(cmd: PebbleCmd) -> Result<bool> {
    match cmd {
        PebbleCmd::Build { n, d, out } => {
            let a = build_attention_dag(n, d)?;
            let mut w = sink(out.as_deref())?;
            a.dag().write_jsonl(&mut w)?;
            w.flush()?;
            Ok(true)
        }
        PebbleCmd::Validate { dag, calc, m } => {
            let g = load_dag(&dag)?;
            let calc: Calculation = load_json(&calc)?;
            match validate_calculation(&g, m, &calc) {
                Ok(io) => {
                    print_json(json!({"valid": true, "reads": io.reads, "writes": io.writes, "io": io.total()}));
                    Ok(true)
                }
                Err(v) => {
                    print_json(json!({"valid": false, "index": v.index, "violation": v.to_string()}));
                    Ok(false)
                }
            }
        }
        PebbleCmd::Search { dag, m } => {
            let g = load_dag(&dag)?;
            let best = brute_force_min_io(&g, m)?;
            print_json(json!({"m": m, "min_io": best}));
            Ok(best.is_some())
        }
        PebbleCmd::Schedule { n, d, m, out } => {
            let a = build_attention_dag(n, d)?;
            let s = blocked_pebbling_schedule(&a, m)?;
            let io = validate_calculation(a.dag(), m, &s.calculation);
            if let Some(p) = out {
                serde_json::to_writer(create(&p)?, &s.calculation)?;
            }
            let ok = io.is_ok();
            let io = io.map(|x| x.total()).map_err(|v| v.to_string());
            print_json(json!({
                "n": n, "d": d, "m": m,
                "rows_per_block": s.rows_per_block, "peak_red": s.peak_red, "spills": s.spills,
                "transitions": s.calculation.len(),
                "io": io.as_ref().ok(), "violation": io.as_ref().err(),
            }));
            Ok(ok)
        }
        PebbleCmd::Partition { dag, partition, m } => {
            let g = load_dag(&dag)?;
            let p: MPartition = load_json(&partition)?;
            let violations = verify_m_partition(&g, m, &p);
            for v in &violations {
                println!("{v:?}");
            }
            println!("{} parts, {} violations", p.parts.len(), violations.len());
            Ok(violations.is_empty())
        }
    }
}

fn write_field_matrix(m: &FieldMatrix, out: Option<&Path>) -> Result<()> {
    let mut w = sink(out)?;
    m.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn codes(cmd: CodesCmd) -> Result<bool> {
    match cmd {
        CodesCmd::Vandermonde { n, d, q, check, out, cap } => {
            let v = vandermonde_matrix(n, d, q)?;
            if out.is_some() || !check {
                write_field_matrix(&v, out.as_deref())?;
            }
            if !check {
                return Ok(true);
            }
            let r = all_k_subsets_independent(&v, d, cap)?;
            print_json(json!({"independent": r.independent, "checked": r.checked.to_string(), "witness": r.witness}));
            Ok(r.independent)
        }
        CodesCmd::Bch { m, s, distance, out } => {
            let h = bch_parity_check(m, s)?;
            if out.is_some() || !distance {
                write_field_matrix(&h, out.as_deref())?;
            }
            if !distance {
                return Ok(true);
            }
            let Some(dist) = min_code_distance(&h)? else {
                bail!("code dimension too large to enumerate");
            };
            print_json(json!({"rows": h.rows(), "cols": h.cols(), "designed": s, "min_distance": dist}));
            Ok(dist >= s)
        }
        CodesCmd::Binary { n, d, out } => {
            let b = binary_independence_matrix(n, d)?;
            write_field_matrix(&b.matrix, out.as_deref())?;
            eprintln!("m = {}, s = {}, every {} rows independent", b.m, b.s, b.guaranteed);
            Ok(true)
        }
        CodesCmd::Verify { matrix, q, k, columns, cap } => {
            let f = File::open(&matrix).with_context(|| format!("opening {}", matrix.display()))?;
            let mut mat = FieldMatrix::read_csv(BufReader::new(f), q)?;
            if columns {
                mat = mat.transpose();
            }
            let r = all_k_subsets_independent(&mat, k, cap)?;
            print_json(json!({"independent": r.independent, "checked": r.checked.to_string(), "witness": r.witness}));
            Ok(r.independent)
        }
    }
}

fn compress_count(k_path: &Path, q: u64, indices: &Path, cap: u128) -> Result<bool> {
    let f = File::open(k_path).with_context(|| format!("opening {}", k_path.display()))?;
    let k = FieldMatrix::read_csv(BufReader::new(f), q)?;
    let f = File::open(indices).with_context(|| format!("opening {}", indices.display()))?;
    let idx = IndexSet::read_csv(BufReader::new(f))?;
    let (n, d) = (k.rows(), k.cols());
    let count = distinct_output_count(&k, &idx, n, d, &RowRestriction::IndexRows, cap)?;
    let lower = cc_lower_bound_symbols(count, q);
    // The protocol length depends only on I, N and d, so any Q will do.
    let msg = direct_compression_protocol(&FieldMatrix::zeros(n, d, q)?, &k, &idx)?;
    let ok = lower as usize <= msg.len();
    print_json(json!({
        "q": q, "n": n, "d": d, "indices": idx.len(),
        "distinct_outputs": count,
        "cc_lower_bound_symbols": lower,
        "protocol": msg.strategy, "protocol_symbols": msg.len(), "protocol_bits": msg.bit_length(),
        "pass": ok,
    }));
    Ok(ok)
}
