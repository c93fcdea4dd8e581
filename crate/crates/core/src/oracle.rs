// SPDX-License-Identifier: Apache-2.0

//! Bit-level reference: exact switching and energy of explicit link traces.
//!
//! Everything here walks the trace cycle by cycle and bit pair by bit pair.
//! It is slow and straightforward, and shares no code with
//! the statistical estimators.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::energy::{LinkCapacitance, TechnologyParams};
use crate::io::parse_header;
use crate::stats::SwitchingMatrix;
use crate::vc_model::{EnergyFigures, PayloadAccounting};
use crate::{width_mask, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinkCycle {
    Active { type_id: usize, word: u64 },
    Idle,
}

/// What a link carried in every cycle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinkTrace {
    width: u32,
    cycles: Vec<LinkCycle>,
}

impl LinkTrace {
    pub fn new(width: u32) -> Result<Self> {
        if width == 0 || width > 64 {
            return Err(Error::InvalidWidth(width));
        }
        Ok(Self {
            width,
            cycles: Vec::new(),
        })
    }

    pub fn from_cycles(width: u32, cycles: Vec<LinkCycle>) -> Result<Self> {
        let mut t = Self::new(width)?;
        for c in cycles {
            t.push(c)?;
        }
        Ok(t)
    }

    /// Trace in which every word of `words` is transmitted back to back.
    pub fn from_words(width: u32, words: &[u64], type_id: usize) -> Result<Self> {
        Self::from_cycles(
            width,
            words.iter().map(|&word| LinkCycle::Active { type_id, word }).collect(),
        )
    }

    pub fn push(&mut self, cycle: LinkCycle) -> Result<()> {
        if let LinkCycle::Active { word, .. } = cycle {
            if word & !width_mask(self.width) != 0 {
                return Err(Error::WordOutOfRange {
                    word,
                    width: self.width,
                });
            }
        }
        self.cycles.push(cycle);
        Ok(())
    }

    pub fn push_active(&mut self, type_id: usize, word: u64) -> Result<()> {
        self.push(LinkCycle::Active { type_id, word })
    }

    pub fn push_idle(&mut self) {
        self.cycles.push(LinkCycle::Idle);
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn cycles(&self) -> &[LinkCycle] {
        &self.cycles
    }

    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    /// Value on the wires in each cycle. Idle cycles keep the previous value;
    /// the link starts at zero.
    pub fn held_words(&self) -> Vec<u64> {
        let mut held = 0;
        self.cycles
            .iter()
            .map(|c| {
                if let LinkCycle::Active { word, .. } = c {
                    held = *word;
                }
                held
            })
            .collect()
    }
}

/// Exact switching statistics of a trace.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactStats {
    pub t: SwitchingMatrix,
    /// Fraction of cycles 2..end in which each bit of the held value is one.
    pub p: DVector<f64>,
    /// Number of cycle pairs averaged over.
    pub transitions: usize,
}

fn bit(word: u64, i: usize) -> i32 {
    ((word >> i) & 1) as i32
}

pub fn exact_switching(trace: &LinkTrace) -> Result<ExactStats> {
    if trace.len() < 2 {
        return Err(Error::StreamTooShort {
            need: 2,
            got: trace.len(),
        });
    }
    let n = trace.width as usize;
    let held = trace.held_words();
    let mut sum_dd = DMatrix::<i64>::zeros(n, n);
    let mut ones = vec![0u64; n];
    for pair in held.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        for i in 0..n {
            let di = bit(b, i) - bit(a, i);
            ones[i] += bit(b, i) as u64;
            for j in 0..n {
                let dj = bit(b, j) - bit(a, j);
                sum_dd[(i, j)] += (di * dj) as i64;
            }
        }
    }
    let pairs = held.len() - 1;
    let e = sum_dd.map(|v| v as f64 / pairs as f64);
    let t = DMatrix::from_fn(n, n, |i, j| if i == j { e[(i, i)] } else { e[(i, i)] - e[(i, j)] });
    Ok(ExactStats {
        t: SwitchingMatrix::from_matrix(t)?,
        p: DVector::from_iterator(n, ones.iter().map(|&c| c as f64 / pairs as f64)),
        transitions: pairs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactEnergy {
    /// Sum of the normalized energy of every transition, in aF.
    pub total_normalized_af: f64,
    pub total_fj: f64,
    pub transitions: usize,
    /// Active and payload cycles among cycles 2..end.
    pub active_cycles: usize,
    pub payload_cycles: usize,
    pub figures: EnergyFigures,
}

/// Sums the energy of every transition of the trace. For TSV links the
/// capacitance uses the bit probabilities of the whole trace.
pub fn exact_energy(
    trace: &LinkTrace,
    cap: &LinkCapacitance,
    tech: &TechnologyParams,
    payload: PayloadAccounting,
) -> Result<ExactEnergy> {
    let n = trace.width as usize;
    if cap.width() != n {
        return Err(Error::WidthMismatch {
            expected: cap.width(),
            got: n,
        });
    }
    if trace.len() < 2 {
        return Err(Error::StreamTooShort {
            need: 2,
            got: trace.len(),
        });
    }
    let held = trace.held_words();
    let c = match cap {
        LinkCapacitance::Planar(c) => c.matrix().clone(),
        LinkCapacitance::Tsv(c) => {
            let mut ones = vec![0usize; n];
            for &w in &held[1..] {
                for (i, o) in ones.iter_mut().enumerate() {
                    *o += bit(w, i) as usize;
                }
            }
            let p: Vec<f64> = ones.iter().map(|&o| o as f64 / (held.len() - 1) as f64).collect();
            DMatrix::from_fn(n, n, |i, j| c.c_t0()[(i, j)] + c.delta_c_t()[(i, j)] * (p[i] + p[j]))
        }
    };
    let mut total = 0.0;
    for pair in held.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if a == b {
            continue;
        }
        let mut e = 0.0;
        for i in 0..n {
            let di = bit(b, i) - bit(a, i);
            if di == 0 {
                continue;
            }
            e += c[(i, i)];
            for j in (0..n).filter(|&j| j != i) {
                let dj = bit(b, j) - bit(a, j);
                e += (1 - di * dj) as f64 * c[(i, j)];
            }
        }
        total += e;
    }
    let transitions = held.len() - 1;
    let mut active_cycles = 0;
    let mut payload_cycles = 0;
    for c in &trace.cycles[1..] {
        if let LinkCycle::Active { type_id, .. } = c {
            active_cycles += 1;
            if Some(*type_id) != payload.head_type {
                payload_cycles += 1;
            }
        }
    }
    let per_cycle = total / transitions as f64;
    Ok(ExactEnergy {
        total_normalized_af: total,
        total_fj: tech.to_femtojoules(total),
        transitions,
        active_cycles,
        payload_cycles,
        figures: EnergyFigures::new(
            per_cycle,
            active_cycles as f64 / transitions as f64,
            payload_cycles as f64 / transitions as f64,
            payload.data_bits,
            tech,
        ),
    })
}

/// Writes a trace as a protocol file: a `# link=<id> width=<N>` header and one
/// `cycle,type_id|IDLE,hexword` record per cycle (cycles numbered from 1).
/// Idle records carry the held word.
pub fn write_link_protocol<W: Write>(mut w: W, link: &str, trace: &LinkTrace) -> Result<()> {
    writeln!(w, "# link={link} width={}", trace.width)?;
    let digits = trace.width.div_ceil(4) as usize;
    for (k, (c, held)) in trace.cycles.iter().zip(trace.held_words()).enumerate() {
        match c {
            LinkCycle::Active { type_id, word } => writeln!(w, "{},{type_id},{word:0digits$x}", k + 1)?,
            LinkCycle::Idle => writeln!(w, "{},IDLE,{held:0digits$x}", k + 1)?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Incremental protocol writer for simulators that produce one cycle at a
/// time.
pub struct ProtocolWriter<W: Write> {
    out: W,
    width: u32,
    cycle: u64,
    held: u64,
}

impl<W: Write> ProtocolWriter<W> {
    pub fn new(mut out: W, link: &str, width: u32) -> Result<Self> {
        writeln!(out, "# link={link} width={width}")?;
        Ok(Self {
            out,
            width,
            cycle: 0,
            held: 0,
        })
    }

    pub fn record(&mut self, cycle: LinkCycle) -> Result<()> {
        self.cycle += 1;
        let digits = self.width.div_ceil(4) as usize;
        match cycle {
            LinkCycle::Active { type_id, word } => {
                self.held = word;
                writeln!(self.out, "{},{type_id},{word:0digits$x}", self.cycle)?;
            }
            LinkCycle::Idle => writeln!(self.out, "{},IDLE,{:0digits$x}", self.cycle, self.held)?,
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Reads a protocol file. If `width` is given it must match the header.
/// Returns the link id and the trace.
pub fn replay_link_protocol<R: BufRead>(r: R, width: Option<u32>) -> Result<(String, LinkTrace)> {
    let mut link = None;
    let mut trace: Option<LinkTrace> = None;
    let mut expected_cycle = None;
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        let lineno = k + 1;
        let bad = |msg: String| Error::Parse { line: lineno, msg };
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let h = parse_header(rest);
            if let Some(w) = h.get("width") {
                let w: u32 = w.parse().map_err(|_| bad(format!("bad width `{w}`")))?;
                if let Some(expected) = width {
                    if expected != w {
                        return Err(Error::WidthMismatch {
                            expected: expected as usize,
                            got: w as usize,
                        });
                    }
                }
                trace = Some(LinkTrace::new(w)?);
            }
            if let Some(l) = h.get("link") {
                link = Some(l.clone());
            }
            continue;
        }
        let t = trace
            .as_mut()
            .ok_or_else(|| bad("record before `# link=.. width=..` header".into()))?;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", fields.len())));
        }
        let cycle: u64 = fields[0]
            .parse()
            .map_err(|_| bad(format!("bad cycle `{}`", fields[0])))?;
        if let Some(e) = expected_cycle {
            if cycle != e {
                return Err(bad(format!("expected cycle {e}, found {cycle}")));
            }
        }
        expected_cycle = Some(cycle + 1);
        let word = u64::from_str_radix(fields[2], 16).map_err(|_| bad(format!("bad word `{}`", fields[2])))?;
        if word & !width_mask(t.width) != 0 {
            return Err(bad(format!("word {word:#x} exceeds width {}", t.width)));
        }
        if fields[1] == "IDLE" {
            t.push_idle();
        } else {
            let type_id: usize = fields[1]
                .parse()
                .map_err(|_| bad(format!("bad type `{}`", fields[1])))?;
            t.push_active(type_id, word)?;
        }
    }
    let trace = trace.ok_or(Error::Parse {
        line: 0,
        msg: "missing protocol header".into(),
    })?;
    if trace.is_empty() {
        return Err(Error::EmptyStream);
    }
    Ok((link.unwrap_or_default(), trace))
}
