// SPDX-License-Identifier: Apache-2.0

//! Synthetic data streams and per-stream bit statistics.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};

use crate::{width_mask, Error, Result};

/// Shape parameter of the log-normal generator (std-dev of the underlying
/// Gaussian). Small enough that the skew stays moderate at 16 bit.
const LOGNORMAL_SHAPE: f64 = 0.5;

/// A sequence of `width`-bit words belonging to one data type.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataStream {
    words: Vec<u64>,
    width: u32,
    type_id: usize,
}

impl DataStream {
    pub fn new(words: Vec<u64>, width: u32, type_id: usize) -> Result<Self> {
        if width == 0 || width > 64 {
            return Err(Error::InvalidWidth(width));
        }
        let mask = width_mask(width);
        if let Some(&word) = words.iter().find(|&&w| w & !mask != 0) {
            return Err(Error::WordOutOfRange { word, width });
        }
        Ok(Self {
            words,
            width,
            type_id,
        })
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn into_words(self) -> Vec<u64> {
        self.words
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn type_id(&self) -> usize {
        self.type_id
    }

    pub fn with_type_id(mut self, type_id: usize) -> Self {
        self.type_id = type_id;
        self
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Packs two streams into one of width `hi.width + lo.width`, `hi` in the
    /// upper bits. Both must have the same length.
    pub fn pack(hi: &DataStream, lo: &DataStream, type_id: usize) -> Result<Self> {
        if hi.len() != lo.len() {
            return Err(Error::DimensionMismatch {
                expected: hi.len(),
                got: lo.len(),
            });
        }
        let shift = lo.width;
        let words = hi
            .words
            .iter()
            .zip(&lo.words)
            .map(|(&h, &l)| (h << shift) | l)
            .collect();
        DataStream::new(words, hi.width + lo.width, type_id)
    }
}

/// Bit-probability statistics of one stream: `S_ij = E{b_i b_j}` and `p = diag(S)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BitStats {
    pub s: DMatrix<f64>,
    pub p: DVector<f64>,
}

impl BitStats {
    pub fn width(&self) -> usize {
        self.p.len()
    }

    /// Statistics of a stream whose bits are independent with the given
    /// 1-probabilities.
    pub fn independent(p: &[f64]) -> Self {
        let n = p.len();
        let s = DMatrix::from_fn(n, n, |i, j| if i == j { p[i] } else { p[i] * p[j] });
        Self {
            s,
            p: DVector::from_column_slice(p),
        }
    }
}

/// Switching properties of a link: self switching `E{Δb_i²}` on the
/// diagonal and `E{Δb_i² − Δb_iΔb_j}` off the diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct SwitchingMatrix {
    t: DMatrix<f64>,
}

impl SwitchingMatrix {
    pub fn zeros(width: usize) -> Self {
        Self {
            t: DMatrix::zeros(width, width),
        }
    }

    /// Wraps a raw `T` matrix.
    pub fn from_matrix(t: DMatrix<f64>) -> Result<Self> {
        if !t.is_square() {
            return Err(Error::NonSquare {
                rows: t.nrows(),
                cols: t.ncols(),
            });
        }
        Ok(Self { t })
    }

    /// Builds `T = t_s·1ᵀ − T_c` from the self switching vector and the
    /// correlated switching matrix `E{Δb_iΔb_j}` (its diagonal is ignored).
    pub fn from_parts(self_switching: &DVector<f64>, correlated: &DMatrix<f64>) -> Self {
        let n = self_switching.len();
        let t = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self_switching[i]
            } else {
                self_switching[i] - correlated[(i, j)]
            }
        });
        Self { t }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.t
    }

    pub fn width(&self) -> usize {
        self.t.nrows()
    }

    pub fn self_switching(&self) -> DVector<f64> {
        self.t.diagonal()
    }

    /// `E{Δb_iΔb_j}`; for `i == j` this is the self switching.
    pub fn correlated(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.t[(i, i)]
        } else {
            self.t[(i, i)] - self.t[(i, j)]
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            t: &self.t * factor,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Distribution {
    Uniform,
    Gaussian,
    LogNormal,
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Self::Uniform),
            "gaussian" | "normal" => Ok(Self::Gaussian),
            "lognormal" | "log-normal" => Ok(Self::LogNormal),
            _ => Err(Error::UnknownDistribution(s.to_owned())),
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::Gaussian => "gaussian",
            Self::LogNormal => "lognormal",
        })
    }
}

/// Parameters of a synthetic stream.
///
/// `sigma` is in pattern units (LSBs) and ignored for uniform streams. `rho`
/// is the lag-1 correlation of the underlying continuous process; uniform
/// streams with `rho = 0` are i.i.d. words.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamSpec {
    pub distribution: Distribution,
    pub width: u32,
    pub length: usize,
    pub sigma: f64,
    pub rho: f64,
    pub seed: u64,
}

impl StreamSpec {
    pub fn uniform(width: u32, length: usize, seed: u64) -> Self {
        Self {
            distribution: Distribution::Uniform,
            width,
            length,
            sigma: 0.0,
            rho: 0.0,
            seed,
        }
    }

    pub fn gaussian(width: u32, length: usize, sigma: f64, rho: f64, seed: u64) -> Self {
        Self {
            distribution: Distribution::Gaussian,
            width,
            length,
            sigma,
            rho,
            seed,
        }
    }

    /// Smallest and largest admissible `sigma` for the spec's width.
    pub fn sigma_range(width: u32) -> (f64, f64) {
        (
            2f64.powf(width as f64 / 10.0),
            2f64.powi(width as i32 - 1),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.width > 63 {
            return Err(Error::InvalidWidth(self.width));
        }
        if self.distribution != Distribution::Uniform {
            let (lo, hi) = Self::sigma_range(self.width);
            // relative slack so that range endpoints computed elsewhere pass
            if !(self.sigma >= lo * (1.0 - 1e-12) && self.sigma <= hi * (1.0 + 1e-12)) {
                return Err(Error::InvalidParameter(format!(
                    "sigma {} outside [{lo}, {hi}] for width {}",
                    self.sigma, self.width
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidParameter(format!(
                "rho {} outside [0, 1]",
                self.rho
            )));
        }
        Ok(())
    }
}

/// Unit-variance AR(1) sequence with lag-1 correlation `rho`.
fn ar1_unit(rng: &mut ChaCha8Rng, length: usize, rho: f64) -> Vec<f64> {
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let innovation = (1.0 - rho * rho).max(0.0).sqrt();
    let mut out = Vec::with_capacity(length);
    let mut x: f64 = std_normal.sample(rng);
    for _ in 0..length {
        out.push(x);
        x = rho * x + innovation * std_normal.sample(rng);
    }
    out
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

fn quantize(x: f64, width: u32) -> u64 {
    let max = width_mask(width) as f64;
    x.round().clamp(0.0, max) as u64
}

/// Generates a stream from `spec`; fully determined by `spec.seed`.
///
/// Uniform words with `rho > 0` map an AR(1) process through the normal CDF
/// (a Gaussian copula); the process correlation `2·sin(πρ/6)` gives lag-1
/// correlation `ρ` of the uniform values.
///
/// Gaussian words are `2^(N-1) + σ·z_t` with `z_t` a unit AR(1) process,
/// rounded and clamped to the word range (offset binary). Log-normal words
/// exponentiate an AR(1) process and rescale it affinely to mean `2^(N-1)`
/// and std `σ`; the underlying correlation is chosen so that the lag-1
/// correlation after exponentiation equals `ρ`.
pub fn generate_stream(spec: &StreamSpec, type_id: usize) -> Result<DataStream> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mask = width_mask(spec.width);
    let center = 2f64.powi(spec.width as i32 - 1);
    let words: Vec<u64> = match spec.distribution {
        Distribution::Uniform if spec.rho == 0.0 => (0..spec.length).map(|_| rng.random::<u64>() & mask).collect(),
        Distribution::Uniform => {
            let rho_z = 2.0 * (std::f64::consts::PI * spec.rho / 6.0).sin();
            let levels = 2f64.powi(spec.width as i32);
            ar1_unit(&mut rng, spec.length, rho_z.min(1.0))
                .into_iter()
                .map(|z| ((normal_cdf(z) * levels).floor() as u64).min(mask))
                .collect()
        }
        Distribution::Gaussian => ar1_unit(&mut rng, spec.length, spec.rho)
            .into_iter()
            .map(|z| quantize(center + spec.sigma * z, spec.width))
            .collect(),
        Distribution::LogNormal => {
            let s2 = LOGNORMAL_SHAPE * LOGNORMAL_SHAPE;
            let rho_z = ((1.0 + spec.rho * (s2.exp() - 1.0)).ln() / s2).clamp(0.0, 1.0);
            let mean = (s2 / 2.0).exp();
            let std = ((s2.exp() - 1.0) * s2.exp()).sqrt();
            ar1_unit(&mut rng, spec.length, rho_z)
                .into_iter()
                .map(|z| {
                    let y = (LOGNORMAL_SHAPE * z).exp();
                    quantize(center + spec.sigma * (y - mean) / std, spec.width)
                })
                .collect()
        }
    };
    DataStream::new(words, spec.width, type_id)
}

/// Result of multiplexing several streams onto one link.
#[derive(Clone, Debug)]
pub struct Multiplexed {
    /// Interleaved words; its type id is that of the first input.
    pub stream: DataStream,
    /// Index into the input list of the source of every output word.
    pub sources: Vec<usize>,
    /// Per input, the words taken from it in consumption order.
    pub consumed: Vec<DataStream>,
}

impl Multiplexed {
    /// Type id of every output word.
    pub fn type_trace<'a>(&'a self) -> impl Iterator<Item = usize> + 'a {
        self.sources.iter().map(|&s| self.consumed[s].type_id())
    }
}

/// Interleaves `streams` into `length` words. At every position after the
/// first, the active source changes with probability `mux_prob` (to one of
/// the other sources, uniformly). Each source is read in order and restarts
/// from its first word when exhausted.
pub fn multiplex_streams(
    streams: &[DataStream],
    mux_prob: f64,
    length: usize,
    seed: u64,
) -> Result<Multiplexed> {
    if streams.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least two streams to multiplex, got {}",
            streams.len()
        )));
    }
    let width = streams[0].width();
    if let Some(s) = streams.iter().find(|s| s.width() != width) {
        return Err(Error::WidthMismatch {
            expected: width as usize,
            got: s.width() as usize,
        });
    }
    if let Some(s) = streams.iter().find(|s| s.is_empty()) {
        return Err(Error::InvalidParameter(format!(
            "stream of type {} is empty",
            s.type_id()
        )));
    }
    if !(0.0..=1.0).contains(&mux_prob) {
        return Err(Error::InvalidParameter(format!(
            "mux probability {mux_prob} outside [0, 1]"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cursors = vec![0usize; streams.len()];
    let mut consumed: Vec<Vec<u64>> = vec![Vec::new(); streams.len()];
    let mut words = Vec::with_capacity(length);
    let mut sources = Vec::with_capacity(length);
    let mut active = 0usize;
    for pos in 0..length {
        if pos > 0 && rng.random_bool(mux_prob) {
            let other = rng.random_range(0..streams.len() - 1);
            active = if other >= active { other + 1 } else { other };
        }
        let src = &streams[active];
        let word = src.words()[cursors[active]];
        cursors[active] = (cursors[active] + 1) % src.len();
        words.push(word);
        consumed[active].push(word);
        sources.push(active);
    }
    let consumed = consumed
        .into_iter()
        .zip(streams)
        .map(|(w, s)| DataStream::new(w, width, s.type_id()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Multiplexed {
        stream: DataStream::new(words, width, streams[0].type_id())?,
        sources,
        consumed,
    })
}

#[inline]
fn for_each_set_bit(mut word: u64, mut f: impl FnMut(usize)) {
    while word != 0 {
        let i = word.trailing_zeros() as usize;
        f(i);
        word &= word - 1;
    }
}

/// Empirical `S` and `p` of a stream.
pub fn compute_bit_stats(stream: &DataStream) -> Result<BitStats> {
    if stream.is_empty() {
        return Err(Error::EmptyStream);
    }
    let n = stream.width() as usize;
    let mut counts = vec![0u64; n * n];
    let mut ones = Vec::with_capacity(n);
    for &w in stream.words() {
        ones.clear();
        for_each_set_bit(w, |i| ones.push(i));
        for (a, &i) in ones.iter().enumerate() {
            for &j in &ones[a..] {
                counts[i * n + j] += 1;
            }
        }
    }
    let len = stream.len() as f64;
    let s = DMatrix::from_fn(n, n, |i, j| {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        counts[lo * n + hi] as f64 / len
    });
    let p = s.diagonal();
    Ok(BitStats { s, p })
}

/// Accumulates switching over consecutive word pairs.
pub(crate) struct SwitchingAccumulator {
    width: usize,
    self_counts: Vec<u64>,
    corr: Vec<i64>,
    pairs: u64,
}

impl SwitchingAccumulator {
    pub(crate) fn new(width: usize) -> Self {
        Self {
            width,
            self_counts: vec![0; width],
            corr: vec![0; width * width],
            pairs: 0,
        }
    }

    #[inline]
    pub(crate) fn push(&mut self, prev: u64, next: u64) {
        self.pairs += 1;
        let diff = prev ^ next;
        if diff == 0 {
            return;
        }
        let mut toggles = [(0usize, 0i64); 64];
        let mut k = 0;
        for_each_set_bit(diff, |i| {
            let dir = if next >> i & 1 == 1 { 1 } else { -1 };
            toggles[k] = (i, dir);
            k += 1;
        });
        let n = self.width;
        for a in 0..k {
            let (i, di) = toggles[a];
            self.self_counts[i] += 1;
            for &(j, dj) in &toggles[a + 1..k] {
                self.corr[i * n + j] += di * dj;
            }
        }
    }

    pub(crate) fn finish(&self) -> SwitchingMatrix {
        let n = self.width;
        if self.pairs == 0 {
            return SwitchingMatrix::zeros(n);
        }
        let pairs = self.pairs as f64;
        let ts = DVector::from_fn(n, |i, _| self.self_counts[i] as f64 / pairs);
        let corr = DMatrix::from_fn(n, n, |i, j| {
            let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
            self.corr[lo * n + hi] as f64 / pairs
        });
        SwitchingMatrix::from_parts(&ts, &corr)
    }
}

/// Switching matrix of a stream transmitted sequentially (no multiplexing).
pub fn compute_sequential_switching(stream: &DataStream) -> Result<SwitchingMatrix> {
    if stream.len() < 2 {
        return Err(Error::StreamTooShort {
            need: 2,
            got: stream.len(),
        });
    }
    let mut acc = SwitchingAccumulator::new(stream.width() as usize);
    for pair in stream.words().windows(2) {
        acc.push(pair[0], pair[1]);
    }
    Ok(acc.finish())
}

/// Sample standard deviation and lag-1 autocorrelation of the words.
pub fn sample_moments(stream: &DataStream) -> (f64, f64) {
    let x: Vec<f64> = stream.words().iter().map(|&w| w as f64).collect();
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let cov = x
        .windows(2)
        .map(|w| (w[0] - mean) * (w[1] - mean))
        .sum::<f64>()
        / (n - 1.0);
    let rho = if var > 0.0 { cov / var } else { 1.0 };
    (var.sqrt(), rho)
}
