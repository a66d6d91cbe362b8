//! Dependent data designs with a reproducible seeding contract.
//!
//! Every random stream is addressed by a [`Substream`] key
//! (master seed, replication, stream index). The key bytes form the ChaCha8
//! seed directly, so a stream depends on nothing but its key and parallel
//! replications are bit-identical to sequential ones.
//!
//! An m-block Gaussian stream of length n = q·m is
//!
//! ```text
//! V_{l+(j−1)m} = V1_j + mix·V2_{l+(j−1)m},   j = 1..q, l = 1..m
//! ```
//!
//! with V1 one standard normal per block and V2 one per observation, so that
//! Var V_i = 1 + mix², observations in one block have covariance 1 and
//! distinct blocks are independent.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Default weight of the per-observation perturbation.
pub const NOISE_MIX: f64 = 0.01;

/// Innovations of [`gen_ma`] are redrawn until they fall inside ±this value.
pub const MA_TRUNCATION: f64 = 6.0;

/// Scale of the error term in both regression designs.
pub const ERROR_SCALE: f64 = 0.5;

/// Marginal variance 1 + mix² of a block Gaussian stream.
pub fn stream_variance(noise_mix: f64) -> f64 {
    1.0 + noise_mix * noise_mix
}

/// Address of one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Substream {
    pub master: u64,
    pub rep: u64,
    pub stream: u64,
}

impl Substream {
    pub fn new(master: u64, rep: u64, stream: u64) -> Self {
        Self { master, rep, stream }
    }

    /// The same replication with another stream index.
    pub fn with_stream(self, stream: u64) -> Self {
        Self { stream, ..self }
    }

    /// A generator seeded with the little-endian key bytes.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        seed[..8].copy_from_slice(&self.master.to_le_bytes());
        seed[8..16].copy_from_slice(&self.rep.to_le_bytes());
        seed[16..24].copy_from_slice(&self.stream.to_le_bytes());
        ChaCha8Rng::from_seed(seed)
    }
}

/// Parameters of an m-block design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockDesign {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub noise_mix: f64,
    pub seed: u64,
}

impl BlockDesign {
    /// A design with the default perturbation weight.
    pub fn new(n: usize, m: usize, d: usize, seed: u64) -> Self {
        Self { n, m, d, noise_mix: NOISE_MIX, seed }
    }

    pub fn validate(&self) -> Result<()> {
        check_blocks(self.n, self.m)?;
        if self.d == 0 {
            return domain("at least one covariate is required");
        }
        if !(self.noise_mix >= 0.0 && self.noise_mix.is_finite()) {
            return domain("noise_mix must be nonnegative");
        }
        Ok(())
    }
}

fn check_blocks(n: usize, m: usize) -> Result<()> {
    if m == 0 || n == 0 || !n.is_multiple_of(m) {
        return domain(format!("block length m = {m} must divide n = {n}"));
    }
    Ok(())
}

/// One block Gaussian stream of length n.
pub fn gen_block_stream(n: usize, m: usize, noise_mix: f64, key: Substream) -> Result<Vec<f64>> {
    check_blocks(n, m)?;
    let mut rng = key.rng();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n / m {
        let shared: f64 = StandardNormal.sample(&mut rng);
        for _ in 0..m {
            let own: f64 = StandardNormal.sample(&mut rng);
            out.push(shared + noise_mix * own);
        }
    }
    Ok(out)
}

/// `count` mutually independent block Gaussian streams, stream s using the
/// key (master, rep, s).
pub fn gen_block_gaussian(n: usize, m: usize, count: usize, noise_mix: f64, master: u64, rep: u64) -> Result<Vec<Vec<f64>>> {
    (0..count as u64)
        .map(|s| gen_block_stream(n, m, noise_mix, Substream::new(master, rep, s)))
        .collect()
}

/// U_i = ε_i − Σ_{l=1..q} θ_l ε_{i−l} with i.i.d. standard normal innovations
/// truncated at ±[`MA_TRUNCATION`] by redrawing.
pub fn gen_ma(n: usize, coeffs: &[f64], key: Substream) -> Result<Vec<f64>> {
    if coeffs.is_empty() {
        return domain("MA order must be at least 1");
    }
    let q = coeffs.len();
    let mut rng = key.rng();
    let eps: Vec<f64> = (0..n + q)
        .map(|_| loop {
            let z: f64 = StandardNormal.sample(&mut rng);
            if z.abs() <= MA_TRUNCATION {
                break z;
            }
        })
        .collect();
    Ok((q..n + q)
        .map(|i| eps[i] - coeffs.iter().enumerate().map(|(l, c)| c * eps[i - l - 1]).sum::<f64>())
        .collect())
}

/// The regression function of a dataset.
#[derive(Debug, Clone)]
pub enum Truth {
    /// Coefficients θ* of a linear model.
    Linear(DVector<f64>),
    /// A scalar regression function w ↦ θ*(w).
    Function(fn(f64) -> f64),
}

/// A generated sample. For the nonparametric design `x` has one column
/// holding W.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub truth: Truth,
    pub n: usize,
    pub m: usize,
}

/// θ*(j) = j^{−1/2}, j = 1..d.
pub fn linear_truth(d: usize) -> DVector<f64> {
    DVector::from_fn(d, |j, _| ((j + 1) as f64).powf(-0.5))
}

/// θ*(w) = 2 cos w + w.
pub fn np_truth(w: f64) -> f64 {
    2.0 * w.cos() + w
}

/// w = 6x/(1 + |x|), which maps ℝ into (−6, 6).
pub fn np_transform(x: f64) -> f64 {
    6.0 * x / (1.0 + x.abs())
}

/// y = Σ_j θ*(j)·X_j + 0.5·U with d independent block Gaussian covariate
/// streams (indices 0..d) and a block Gaussian error stream (index d).
pub fn make_linear_design(design: &BlockDesign, rep: u64) -> Result<Dataset> {
    design.validate()?;
    let (n, d) = (design.n, design.d);
    let streams = gen_block_gaussian(n, design.m, d + 1, design.noise_mix, design.seed, rep)?;
    let x = DMatrix::from_fn(n, d, |i, j| streams[j][i]);
    let theta = linear_truth(d);
    let y = &x * &theta + DVector::from_column_slice(&streams[d]) * ERROR_SCALE;
    Ok(Dataset { x, y, truth: Truth::Linear(theta), n, m: design.m })
}

/// y = θ*(W) + 0.5·U with W = 6X/(1+|X|), X from stream 0 and U from stream 1.
pub fn make_np_design(n: usize, m: usize, noise_mix: f64, master: u64, rep: u64) -> Result<Dataset> {
    let streams = gen_block_gaussian(n, m, 2, noise_mix, master, rep)?;
    let w: Vec<f64> = streams[0].iter().map(|&x| np_transform(x)).collect();
    let y = DVector::from_fn(n, |i, _| np_truth(w[i]) + ERROR_SCALE * streams[1][i]);
    Ok(Dataset { x: DMatrix::from_column_slice(n, 1, &w), y, truth: Truth::Function(np_truth), n, m })
}

/// Writes a header row `y,x1..xd` (or `y,w` when `nonparametric`) and one
/// row per observation.
pub fn write_csv<W: Write>(data: &Dataset, nonparametric: bool, out: W) -> Result<()> {
    let io = |e: csv::Error| Error::Config(e.to_string());
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["y".to_string()];
    if nonparametric {
        header.push("w".into());
    } else {
        header.extend((1..=data.x.ncols()).map(|j| format!("x{j}")));
    }
    wtr.write_record(&header).map_err(io)?;
    for i in 0..data.y.len() {
        let xr = data.x.row(i);
        let row = std::iter::once(data.y[i]).chain(xr.iter().copied()).map(|v| v.to_string());
        wtr.write_record(row).map_err(io)?;
    }
    wtr.flush().map_err(|e| Error::Config(e.to_string()))
}

/// Reads a CSV with a header row and the response in the first column;
/// returns (covariates, response).
pub fn read_csv<R: Read>(input: R) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Config(e.to_string()))?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad number {s:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::ShapeMismatch(format!("row of length {} after rows of length {}", row.len(), first.len())));
            }
        }
        rows.push(row);
    }
    let ncol = rows.first().map_or(0, |r| r.len());
    if rows.is_empty() || ncol < 2 {
        return Err(Error::Config("need at least one row with a response and a covariate".into()));
    }
    let x = DMatrix::from_fn(rows.len(), ncol - 1, |i, j| rows[i][j + 1]);
    let y = DVector::from_fn(rows.len(), |i, _| rows[i][0]);
    Ok((x, y))
}
