// SPDX-License-Identifier: Apache-2.0

//! Link switching and bit probabilities under virtual-channel multiplexing.
//!
//! A link transmits `n` data types (the last one by convention holds head
//! flits). Its data flow is summarised by a [`DataFlowMatrix`] over the `2n`
//! link states "transmitting type x" (`x`) and "idle, holding a word of type
//! x" (`x + n`). Together with per-type bit statistics this is enough to
//! estimate the link's switching matrix and bit probabilities without a
//! bit-level trace.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::energy::{LinkCapacitance, TechnologyParams};
use crate::io::{read_matrix_csv, write_matrix_csv};
use crate::stats::{compute_bit_stats, compute_sequential_switching, BitStats, DataStream, SwitchingMatrix};
use crate::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;

/// Joint distribution of consecutive link-cycle states.
#[derive(Clone, Debug, PartialEq)]
pub struct DataFlowMatrix {
    m: DMatrix<f64>,
    n: usize,
    cycles: u64,
}

impl DataFlowMatrix {
    /// Validates and wraps a `2n × 2n` joint probability matrix. `cycles` is
    /// the number of observed link cycles (one more than the transitions).
    pub fn new(m: DMatrix<f64>, cycles: u64) -> Result<Self> {
        if !m.is_square() || m.nrows() % 2 != 0 || m.nrows() == 0 {
            return Err(Error::InvalidDataFlow(format!(
                "expected a non-empty 2n x 2n matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows() / 2;
        if let Some(v) = m.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidDataFlow(format!("negative or NaN entry {v}")));
        }
        let sum = m.sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDataFlow(format!("entries sum to {sum}, not 1")));
        }
        for x in 0..n {
            for y in (0..n).filter(|&y| y != x) {
                if m[(x + n, y + n)] != 0.0 {
                    return Err(Error::InvalidDataFlow(format!(
                        "idle link changed held type {x} -> {y}"
                    )));
                }
                if m[(x, y + n)] != 0.0 {
                    return Err(Error::InvalidDataFlow(format!(
                        "link went idle holding type {y} after transmitting type {x}"
                    )));
                }
            }
        }
        Ok(Self { m, n, cycles })
    }

    /// Normalizes transition counts (row = previous state, column = current
    /// state) into a joint distribution.
    pub fn from_counts(counts: &DMatrix<u64>) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidDataFlow("no transitions observed".into()));
        }
        let m = counts.map(|c| c as f64 / total as f64);
        Self::new(m, total + 1)
    }

    pub fn n_types(&self) -> usize {
        self.n
    }

    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Probability that a word of type `y` is transmitted in a cycle whose
    /// predecessor transmitted or held type `x`: `M[x,y] + M[x+n,y]`.
    pub fn transition_weight(&self, x: usize, y: usize) -> f64 {
        self.m[(x, y)] + self.m[(x + self.n, y)]
    }

    /// Fraction of cycles in which a flit is transmitted.
    pub fn active_fraction(&self) -> f64 {
        self.m.columns(0, self.n).sum()
    }

    /// Per-type fraction of cycles in which that type is transmitted.
    pub fn type_frequencies(&self) -> Vec<f64> {
        (0..self.n).map(|y| self.m.column(y).sum()).collect()
    }

    /// Probability that consecutive transmitted flits differ in type, over
    /// all active-to-active transitions.
    pub fn mux_probability(&self) -> f64 {
        let mut switch = 0.0;
        let mut total = 0.0;
        for x in 0..self.n {
            for y in 0..self.n {
                let w = self.transition_weight(x, y);
                total += w;
                if x != y {
                    switch += w;
                }
            }
        }
        if total > 0.0 {
            switch / total
        } else {
            0.0
        }
    }
}

/// Writes `M` as CSV with the header `# n=<types> cycles=<count> link=<id>`.
pub fn write_data_flow_csv<W: Write>(w: W, m: &DataFlowMatrix, link: &str) -> Result<()> {
    write_matrix_csv(
        w,
        &[
            ("n", &m.n.to_string()),
            ("cycles", &m.cycles.to_string()),
            ("link", link),
        ],
        &m.m,
    )
}

/// Reads a data-flow CSV; returns the matrix and the link id.
pub fn read_data_flow_csv<R: BufRead>(r: R) -> Result<(DataFlowMatrix, String)> {
    let (header, m) = read_matrix_csv(r)?;
    let field = |k: &str| {
        header.get(k).cloned().ok_or(Error::Parse {
            line: 1,
            msg: format!("missing `{k}` in data-flow header"),
        })
    };
    let n: usize = field("n")?.parse().map_err(|_| Error::Parse {
        line: 1,
        msg: "bad `n`".into(),
    })?;
    let cycles: u64 = field("cycles")?.parse().map_err(|_| Error::Parse {
        line: 1,
        msg: "bad `cycles`".into(),
    })?;
    if m.nrows() != 2 * n {
        return Err(Error::DimensionMismatch {
            expected: 2 * n,
            got: m.nrows(),
        });
    }
    Ok((DataFlowMatrix::new(m, cycles)?, field("link")?))
}

/// Statistics of one data type: `S`/`p` and its sequential switching.
#[derive(Clone, Debug, PartialEq)]
pub struct TypeStats {
    pub bits: BitStats,
    pub sequential: SwitchingMatrix,
}

impl TypeStats {
    /// Measures a stream. An empty stream yields all-zero statistics, a
    /// single word zero sequential switching.
    pub fn from_stream(stream: &DataStream) -> Result<Self> {
        let n = stream.width() as usize;
        let bits = if stream.is_empty() {
            BitStats {
                s: DMatrix::zeros(n, n),
                p: DVector::zeros(n),
            }
        } else {
            compute_bit_stats(stream)?
        };
        let sequential = if stream.len() < 2 {
            SwitchingMatrix::zeros(n)
        } else {
            compute_sequential_switching(stream)?
        };
        Ok(Self { bits, sequential })
    }

    pub fn width(&self) -> usize {
        self.bits.width()
    }
}

/// Statistics of every data type that may appear on a link.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkTypeStats {
    types: Vec<TypeStats>,
    width: usize,
}

impl LinkTypeStats {
    pub fn new(types: Vec<TypeStats>) -> Result<Self> {
        let width = types
            .first()
            .ok_or_else(|| Error::InvalidParameter("no data types".into()))?
            .width();
        for t in &types {
            if t.width() != width || t.sequential.width() != width {
                return Err(Error::WidthMismatch {
                    expected: width,
                    got: t.width(),
                });
            }
        }
        Ok(Self { types, width })
    }

    pub fn from_streams<'a>(streams: impl IntoIterator<Item = &'a DataStream>) -> Result<Self> {
        Self::new(
            streams
                .into_iter()
                .map(TypeStats::from_stream)
                .collect::<Result<Vec<_>>>()?,
        )
    }

    pub fn types(&self) -> &[TypeStats] {
        &self.types
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    fn check(&self, m: &DataFlowMatrix) -> Result<()> {
        if m.n_types() != self.types.len() {
            return Err(Error::DimensionMismatch {
                expected: self.types.len(),
                got: m.n_types(),
            });
        }
        Ok(())
    }

    /// `T^{x→y}`: sequential statistics for `x == y`, the multiplexing
    /// estimate otherwise.
    pub fn transition_switching(&self, x: usize, y: usize) -> Result<SwitchingMatrix> {
        if x == y {
            Ok(self.types[x].sequential.clone())
        } else {
            mux_switching(&self.types[x].bits, &self.types[y].bits)
        }
    }
}

/// Switching when a word of stream `y` follows a word of an independent
/// stream `x`:
/// `E{Δb_iΔb_j} = S^y_ij + S^x_ij − S^y_ii·S^x_jj − S^x_ii·S^y_jj`.
pub fn mux_switching(sx: &BitStats, sy: &BitStats) -> Result<SwitchingMatrix> {
    let n = sx.width();
    if sy.width() != n {
        return Err(Error::WidthMismatch {
            expected: n,
            got: sy.width(),
        });
    }
    let corr = DMatrix::from_fn(n, n, |i, j| {
        sy.s[(i, j)] + sx.s[(i, j)] - sy.s[(i, i)] * sx.s[(j, j)] - sx.s[(i, i)] * sy.s[(j, j)]
    });
    Ok(SwitchingMatrix::from_parts(&corr.diagonal(), &corr))
}

/// Mean switching per link cycle:
/// `T_link = Σ_{x,y} (M[x,y] + M[x+n,y])·T^{x→y}`.
pub fn link_switching(stats: &LinkTypeStats, m: &DataFlowMatrix) -> Result<SwitchingMatrix> {
    stats.check(m)?;
    let n = m.n_types();
    let mut t = DMatrix::zeros(stats.width, stats.width);
    for x in 0..n {
        for y in 0..n {
            let w = m.transition_weight(x, y);
            if w > 0.0 {
                t += stats.transition_switching(x, y)?.matrix() * w;
            }
        }
    }
    SwitchingMatrix::from_matrix(t)
}

/// Baseline that ignores multiplexing: every transmitted word is assumed to
/// follow a word of its own stream, `T_std = Σ_y f_y·T^{y→y}`.
pub fn standard_link_switching(stats: &LinkTypeStats, m: &DataFlowMatrix) -> Result<SwitchingMatrix> {
    stats.check(m)?;
    let mut t = DMatrix::zeros(stats.width, stats.width);
    for (y, f) in m.type_frequencies().into_iter().enumerate() {
        if f > 0.0 {
            t += stats.types[y].sequential.matrix() * f;
        }
    }
    SwitchingMatrix::from_matrix(t)
}

/// How idle-to-idle cycles enter the link bit probabilities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum IdleWeighting {
    /// Idle cycles that stay idle count with the held type, so the weights
    /// sum to one.
    #[default]
    Corrected,
    /// Only transitions that involve at least one transmission are counted.
    Uncorrected,
}

/// Per-cycle bit probabilities of the value held on the link:
/// `p = Σ_{x,y} (M[x,y] + M[x,y+n] + M[x+n,y])·p^y (+ Σ_x M[x+n,x+n]·p^x)`.
pub fn link_bit_probabilities(
    stats: &LinkTypeStats,
    m: &DataFlowMatrix,
    mode: IdleWeighting,
) -> Result<DVector<f64>> {
    stats.check(m)?;
    let n = m.n_types();
    let mm = m.matrix();
    let mut p = DVector::zeros(stats.width);
    for y in 0..n {
        let mut w: f64 = (0..n).map(|x| mm[(x, y)] + mm[(x + n, y)]).sum();
        // M[x, y+n] is non-zero only for x == y
        w += mm[(y, y + n)];
        if mode == IdleWeighting::Corrected {
            w += mm[(y + n, y + n)];
        }
        if w > 0.0 {
            p += &stats.types[y].bits.p * w;
        }
    }
    Ok(p)
}

/// What a link's words carry, for per-byte accounting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PayloadAccounting {
    /// Payload bits per body flit (excluding code overhead such as an
    /// invert line).
    pub data_bits: u32,
    /// Type index of head flits, which carry no payload.
    pub head_type: Option<usize>,
}

/// Energy quantities derived from a per-cycle normalized energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyFigures {
    /// `⟨T, C⟩` in aF per link cycle.
    pub normalized_per_cycle_af: f64,
    pub energy_per_cycle_fj: f64,
    /// `None` when the link never transmits.
    pub energy_per_flit_fj: Option<f64>,
    /// `None` when the link never transmits payload.
    pub energy_per_payload_byte_fj: Option<f64>,
}

impl EnergyFigures {
    pub fn new(
        normalized_per_cycle_af: f64,
        active_fraction: f64,
        payload_fraction: f64,
        data_bits: u32,
        tech: &TechnologyParams,
    ) -> Self {
        let energy_per_cycle_fj = tech.to_femtojoules(normalized_per_cycle_af);
        let per = |frac: f64| (frac > 0.0).then(|| energy_per_cycle_fj / frac);
        Self {
            normalized_per_cycle_af,
            energy_per_cycle_fj,
            energy_per_flit_fj: per(active_fraction),
            energy_per_payload_byte_fj: per(payload_fraction * data_bits as f64 / 8.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkEnergyReport {
    pub active_fraction: f64,
    /// Fraction of cycles carrying a payload (non-head) flit.
    pub payload_fraction: f64,
    pub mux_probability: f64,
    pub model: EnergyFigures,
    pub standard: EnergyFigures,
}

/// Fraction of link cycles that carry payload flits.
pub fn payload_fraction(m: &DataFlowMatrix, head_type: Option<usize>) -> f64 {
    m.type_frequencies()
        .into_iter()
        .enumerate()
        .filter(|(y, _)| Some(*y) != head_type)
        .map(|(_, f)| f)
        .sum()
}

/// Energy of a link estimated from type statistics and its data flow, plus
/// the standard-model counterpart.
pub fn link_energy_report(
    stats: &LinkTypeStats,
    m: &DataFlowMatrix,
    cap: &LinkCapacitance,
    tech: &TechnologyParams,
    payload: PayloadAccounting,
    mode: IdleWeighting,
) -> Result<LinkEnergyReport> {
    if cap.width() != stats.width() {
        return Err(Error::WidthMismatch {
            expected: cap.width(),
            got: stats.width(),
        });
    }
    let t = link_switching(stats, m)?;
    let t_std = standard_link_switching(stats, m)?;
    let p = link_bit_probabilities(stats, m, mode)?;
    let active = m.active_fraction();
    let payload_frac = payload_fraction(m, payload.head_type);
    let figures = |normalized: f64| EnergyFigures::new(normalized, active, payload_frac, payload.data_bits, tech);
    Ok(LinkEnergyReport {
        active_fraction: active,
        payload_fraction: payload_frac,
        mux_probability: m.mux_probability(),
        model: figures(cap.normalized_energy(&t, &p)?),
        standard: figures(cap.normalized_energy(&t_std, &p)?),
    })
}
