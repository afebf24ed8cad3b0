//! Parameter sweeps over `(N, d, M)`, log-log scaling fits, and bound checks.

use std::io;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compression::{epoch_progress_bound, FieldMode};
use crate::dense::DenseMatrix;
use crate::fields::{is_prime, FieldMatrix};
use crate::kernels::{
    matmul_via_attention, reference_attention, run_kernel, select_algorithm, Algorithm, AttentionInstance, KernelResult,
};
use crate::memory::{MemoryHierarchy, ValueKind};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid sweep config: {0}")]
    Config(String),
    #[error("fit: {0}")]
    Fit(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("bounds file: {0}")]
    Bounds(#[from] toml::de::Error),
}

/// How inputs are drawn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueMode {
    /// Uniform in `[-bound, bound]`.
    #[default]
    Float,
    /// `Q, K` uniform over `F_q`; runs the `QKᵀ` reduction on the tiling
    /// kernel and checks the product mod `q`.
    Field(u64),
}

impl ValueMode {
    /// Field regime used for the epoch-progress check.
    pub fn field_mode(self, n: usize) -> FieldMode {
        match self {
            ValueMode::Float => FieldMode::LargeField,
            ValueMode::Field(q) if q as usize > n => FieldMode::LargeField,
            ValueMode::Field(_) => FieldMode::Binary,
        }
    }
}

fn default_bound() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n: Vec<usize>,
    pub d: Vec<usize>,
    pub m: Vec<usize>,
    pub algorithms: Vec<Algorithm>,
    pub seed: u64,
    #[serde(default)]
    pub value_mode: ValueMode,
    #[serde(default = "default_bound")]
    pub bound: f64,
    /// Record wall-clock time. Off by default so output is reproducible.
    #[serde(default)]
    pub timing: bool,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let c: SweepConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::Config(msg));
        if self.n.is_empty() || self.d.is_empty() || self.m.is_empty() || self.algorithms.is_empty() {
            return bad("grids and algorithm list must be non-empty".into());
        }
        if self.n.contains(&0) || self.d.contains(&0) {
            return bad("N and d must be at least 1".into());
        }
        if let Some(m) = self.m.iter().find(|&&m| m < 4) {
            return bad(format!("M = {m} is below the smallest kernel regime (4)"));
        }
        if !(self.bound.is_finite() && self.bound > 0.0) {
            return bad(format!("bound must be positive and finite, got {}", self.bound));
        }
        if let ValueMode::Field(q) = self.value_mode {
            if !is_prime(q) {
                return bad(format!("field modulus {q} is not prime"));
            }
            if self.algorithms.iter().any(|&a| a != Algorithm::Tiling) {
                return bad("field mode runs the QKᵀ reduction, which uses the tiling kernel only".into());
            }
        }
        Ok(())
    }

    /// Grid points in output order: `N`, then `d`, then `M`, then algorithm.
    pub fn points(&self) -> Vec<(Algorithm, usize, usize, usize)> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &d in &self.d {
                for &m in &self.m {
                    for &a in &self.algorithms {
                        out.push((a, n, d, m));
                    }
                }
            }
        }
        out
    }
}

/// One CSV row. `error` is empty for successful runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub algorithm: Algorithm,
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub reads: u64,
    pub writes: u64,
    pub epochs: usize,
    pub b_max: usize,
    pub rel_error: f64,
    pub wall_ms: f64,
    pub error: String,
}

impl SweepRecord {
    pub fn from_result(n: usize, d: usize, m: usize, r: &KernelResult, rel_error: f64) -> Self {
        SweepRecord {
            algorithm: r.algorithm,
            n,
            d,
            m,
            reads: r.io.reads,
            writes: r.io.writes,
            epochs: r.epochs.epochs,
            b_max: r.epochs.b_max,
            rel_error,
            wall_ms: 0.0,
            error: String::new(),
        }
    }

    fn failed(algorithm: Algorithm, n: usize, d: usize, m: usize, error: String) -> Self {
        SweepRecord {
            algorithm,
            n,
            d,
            m,
            reads: 0,
            writes: 0,
            epochs: 0,
            b_max: 0,
            rel_error: 0.0,
            wall_ms: 0.0,
            error,
        }
    }

    pub fn io(&self) -> u64 {
        self.reads + self.writes
    }

    pub fn ok(&self) -> bool {
        self.error.is_empty()
    }

    /// The kernel that actually ran.
    pub fn kernel(&self) -> Algorithm {
        match self.algorithm {
            Algorithm::Dispatch => select_algorithm(self.d, self.m),
            a => a,
        }
    }
}

/// RNG for the instance at `(N, d)`: every `M` and algorithm sees the same inputs.
fn instance_rng(seed: u64, n: usize, d: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n as u64) << 32) | d as u64);
    rng
}

fn run_float(c: &SweepConfig, a: Algorithm, n: usize, d: usize, m: usize) -> SweepRecord {
    let inst = AttentionInstance::random(n, d, c.bound, &mut instance_rng(c.seed, n, d));
    match run_kernel(a, m, &inst) {
        Ok((r, _)) => {
            let err = r.output.relative_error(&reference_attention(&inst));
            let mut rec = SweepRecord::from_result(n, d, m, &r, err);
            rec.algorithm = a;
            rec
        }
        Err(e) => SweepRecord::failed(a, n, d, m, e.to_string()),
    }
}

fn run_field(q: u64, c: &SweepConfig, n: usize, d: usize, m: usize) -> SweepRecord {
    use rand::Rng;
    let mut rng = instance_rng(c.seed, n, d);
    let mut draw = || -> Vec<Vec<u64>> { (0..n).map(|_| (0..d).map(|_| rng.gen_range(0..q)).collect()).collect() };
    let (qf, kf) = (draw(), draw());
    let to_dense = |rows: &[Vec<u64>]| {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.iter().map(|&x| x as f64).collect()).collect::<Vec<_>>())
    };
    let run = || -> Result<SweepRecord, String> {
        let fq = FieldMatrix::from_rows(q, &qf).map_err(|e| e.to_string())?;
        let fk = FieldMatrix::from_rows(q, &kf).map_err(|e| e.to_string())?;
        let expected = fq.matmul(&fk.transpose()).map_err(|e| e.to_string())?;
        let mut h = MemoryHierarchy::new(m, ValueKind::Float).map_err(|e| e.to_string())?;
        let dq = to_dense(&qf).map_err(|e| e.to_string())?;
        let dk = to_dense(&kf).map_err(|e| e.to_string())?;
        let (product, r) = matmul_via_attention(&mut h, &dq, &dk).map_err(|e| e.to_string())?;
        let wrong = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| (product.get(i, j) as u64) % q != expected.get(i, j))
            .count();
        Ok(SweepRecord::from_result(n, d, m, &r, wrong as f64 / (n * n) as f64))
    };
    run().unwrap_or_else(|e| SweepRecord::failed(Algorithm::Tiling, n, d, m, e))
}

/// One record per grid point per algorithm, in [`SweepConfig::points`]
/// order. Points run in parallel; a kernel error is stored in the record.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRecord>, ExperimentError> {
    config.validate()?;
    let records = config
        .points()
        .into_par_iter()
        .map(|(a, n, d, m)| {
            let start = Instant::now();
            let mut rec = match config.value_mode {
                ValueMode::Float => run_float(config, a, n, d, m),
                ValueMode::Field(q) => run_field(q, config, n, d, m),
            };
            if config.timing {
                rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
            }
            rec
        })
        .collect();
    Ok(records)
}

pub fn write_records_csv<W: io::Write>(records: &[SweepRecord], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_records_csv<R: io::Read>(input: R) -> Result<Vec<SweepRecord>, ExperimentError> {
    let mut rd = csv::Reader::from_reader(input);
    Ok(rd.deserialize().collect::<Result<_, _>>()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    N,
    D,
    M,
}

impl Axis {
    fn of(self, r: &SweepRecord) -> usize {
        match self {
            Axis::N => r.n,
            Axis::D => r.d,
            Axis::M => r.m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
}

/// Least-squares slope of `ln(I/O)` against `ln(axis)`.
pub fn fit_scaling_exponent(records: &[SweepRecord], vary: Axis) -> Result<ScalingFit, ExperimentError> {
    let fail = |m: &str| Err(ExperimentError::Fit(m.to_string()));
    if records.len() < 3 {
        return fail("need at least three records");
    }
    if let Some(r) = records.iter().find(|r| !r.ok() || r.io() == 0) {
        return Err(ExperimentError::Fit(format!("record at N={} d={} M={} has no measurement", r.n, r.d, r.m)));
    }
    let key = |r: &SweepRecord| (r.algorithm, [Axis::N, Axis::D, Axis::M].map(|a| if a == vary { 0 } else { a.of(r) }));
    if records.iter().any(|r| key(r) != key(&records[0])) {
        return fail("records differ on more than the fitted axis");
    }
    let pts: Vec<(f64, f64)> = records.iter().map(|r| ((vary.of(r) as f64).ln(), (r.io() as f64).ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return fail("fitted axis takes a single value");
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / k).sqrt();
    Ok(ScalingFit { slope, intercept, residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub c_up: f64,
    pub c_lo: f64,
    pub epoch_factor: f64,
}

impl BoundConstants {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        Ok(toml::from_str(text)?)
    }
}

impl Default for BoundConstants {
    fn default() -> Self {
        Self::from_toml(include_str!("../config/bounds.toml")).expect("bundled bounds.toml parses")
    }
}

/// `N²d/√M`.
pub fn tiling_formula(n: usize, d: usize, m: usize) -> f64 {
    let (n, d, m) = (n as f64, d as f64, m as f64);
    n * n * d / m.sqrt()
}

/// `N²d²/M`.
pub fn streaming_formula(n: usize, d: usize, m: usize) -> f64 {
    let (n, d, m) = (n as f64, d as f64, m as f64);
    n * n * d * d / m
}

/// `min(N²d²/M, N²)`.
pub fn lower_formula(n: usize, d: usize, m: usize) -> f64 {
    streaming_formula(n, d, m).min((n * n) as f64)
}

/// Kernel whose formula is smaller, streaming on ties (`M ≥ d²`).
pub fn formula_argmin(d: usize, m: usize) -> Algorithm {
    if m >= d * d {
        Algorithm::Streaming
    } else {
        Algorithm::Tiling
    }
}

/// Upper-bound budget for the kernel that produced `r`: tiling
/// `N²d/√M + N²` (it materialises `A`), streaming `N²d²/M + Nd`.
pub fn upper_formula(r: &SweepRecord) -> f64 {
    let (n, d, m) = (r.n, r.d, r.m);
    match r.kernel() {
        Algorithm::Streaming => streaming_formula(n, d, m) + (n * d) as f64,
        _ => tiling_formula(n, d, m) + (n * n) as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordCheck {
    pub index: usize,
    pub upper: bool,
    pub lower: bool,
    pub reads_inputs: bool,
    pub epoch: bool,
}

impl RecordCheck {
    pub fn passed(&self) -> bool {
        self.upper && self.lower && self.reads_inputs && self.epoch
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub checks: Vec<RecordCheck>,
    /// Indices of records that carry an error and were not checked.
    pub skipped: Vec<usize>,
}

impl BoundsReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(RecordCheck::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &RecordCheck> {
        self.checks.iter().filter(|c| !c.passed())
    }
}

/// Per record: (i) `I/O ≤ c_up·upper_formula`, (ii) `I/O ≥ c_lo·min(N²d²/M, N²)`
/// and `I/O ≥ 3Nd`, (iii) `B_max ≤ epoch_factor·epoch_progress_bound(2M, d)`.
pub fn check_bounds(records: &[SweepRecord], k: &BoundConstants, mode: ValueMode) -> BoundsReport {
    let mut checks = Vec::new();
    let mut skipped = Vec::new();
    for (index, r) in records.iter().enumerate() {
        if !r.ok() {
            skipped.push(index);
            continue;
        }
        let io = r.io() as f64;
        let progress = epoch_progress_bound(2 * r.m as u64, r.d as u64, mode.field_mode(r.n), r.n as u64);
        checks.push(RecordCheck {
            index,
            upper: io <= k.c_up * upper_formula(r),
            lower: io >= k.c_lo * lower_formula(r.n, r.d, r.m),
            reads_inputs: r.io() >= 3 * (r.n * r.d) as u64,
            epoch: r.b_max as f64 <= k.epoch_factor * progress as f64,
        });
    }
    BoundsReport { checks, skipped }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(ms: &[usize], io: impl Fn(f64) -> f64) -> Vec<SweepRecord> {
        ms.iter()
            .map(|&m| {
                let mut r = SweepRecord::failed(Algorithm::Streaming, 16, 4, m, String::new());
                r.reads = io(m as f64).round() as u64;
                r
            })
            .collect()
    }

    #[test]
    fn exact_power_laws_fit() {
        let inv = synthetic(&[16, 32, 64, 128], |m| 1000.0 * 256.0 * 16.0 / m * 1000.0);
        let f = fit_scaling_exponent(&inv, Axis::M).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-3, "{f:?}");
        let sqrt = synthetic(&[16, 36, 64, 144], |m| 7.0 * 256.0 * 4.0 / m.sqrt() * 1000.0);
        let f = fit_scaling_exponent(&sqrt, Axis::M).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-3, "{f:?}");
        assert!(f.residual < 1e-3);
    }

    #[test]
    fn degenerate_fits_are_errors() {
        let two = synthetic(&[16, 32], |m| m);
        assert!(fit_scaling_exponent(&two, Axis::M).is_err());
        let flat = synthetic(&[16, 16, 16], |m| m);
        assert!(fit_scaling_exponent(&flat, Axis::M).is_err());
        let mut mixed = synthetic(&[16, 32, 64], |m| m);
        mixed[1].n = 32;
        assert!(fit_scaling_exponent(&mixed, Axis::M).is_err());
    }

    #[test]
    fn bundled_constants() {
        let k = BoundConstants::default();
        assert_eq!((k.c_up, k.c_lo, k.epoch_factor), (16.0, 1.0 / 16.0, 4.0));
    }

    #[test]
    fn config_validation() {
        let ok = r#"{"n":[8],"d":[2],"m":[16,32],"algorithms":["tiling","streaming"],"seed":1}"#;
        let c = SweepConfig::from_json(ok).unwrap();
        assert_eq!((c.value_mode, c.bound, c.timing), (ValueMode::Float, 1.0, false));
        assert_eq!(c.points().len(), 4);
        for bad in [
            r#"{"n":[],"d":[2],"m":[16],"algorithms":["tiling"],"seed":1}"#,
            r#"{"n":[8],"d":[2],"m":[2],"algorithms":["tiling"],"seed":1}"#,
            r#"{"n":[8],"d":[2],"m":[16],"algorithms":["tiling"],"seed":1,"value_mode":{"field":9}}"#,
            r#"{"n":[8],"d":[2],"m":[16],"algorithms":["streaming"],"seed":1,"value_mode":{"field":7}}"#,
        ] {
            assert!(SweepConfig::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn regime_errors_are_recorded() {
        let c = SweepConfig::from_json(r#"{"n":[4],"d":[4],"m":[16],"algorithms":["streaming","tiling"],"seed":3}"#)
            .unwrap();
        let r = run_sweep(&c).unwrap();
        assert!(!r[0].ok());
        assert!(r[1].ok());
        let report = check_bounds(&r, &BoundConstants::default(), ValueMode::Float);
        assert_eq!(report.skipped, vec![0]);
    }

    #[test]
    fn field_mode_reproduces_product() {
        let c = SweepConfig::from_json(
            r#"{"n":[6],"d":[3],"m":[16],"algorithms":["tiling"],"seed":5,"value_mode":{"field":17}}"#,
        )
        .unwrap();
        let r = run_sweep(&c).unwrap();
        assert!(r[0].ok(), "{}", r[0].error);
        assert_eq!(r[0].rel_error, 0.0);
    }

    #[test]
    fn argmin_ties_to_streaming() {
        assert_eq!(formula_argmin(8, 64), Algorithm::Streaming);
        assert_eq!(formula_argmin(8, 63), Algorithm::Tiling);
        assert_eq!(tiling_formula(32, 8, 64), streaming_formula(32, 8, 64));
    }

    #[test]
    fn csv_round_trip() {
        let c = SweepConfig::from_json(r#"{"n":[8],"d":[2],"m":[16,32],"algorithms":["dispatch"],"seed":9}"#).unwrap();
        let recs = run_sweep(&c).unwrap();
        let mut buf = Vec::new();
        write_records_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("algorithm,n,d,m,reads,writes,epochs,b_max,rel_error,wall_ms,error\n"));
        assert_eq!(read_records_csv(&buf[..]).unwrap(), recs);
    }
}
