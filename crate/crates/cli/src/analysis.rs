// SPDX-License-Identifier: Apache-2.0

//! Link energy of a simulated network, from recorded data-flow matrices and
//! per-type payload statistics, optionally re-coded after the fact.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vclink::codec::{Codec, CodecKind};
use vclink::energy::TechnologyParams;
use vclink::io::read_stream_binary;
use vclink::oracle::{exact_energy, replay_link_protocol, ExactEnergy, LinkCycle, LinkTrace};
use vclink::stats::DataStream;
use vclink::vc_model::{
    link_energy_report, read_data_flow_csv, DataFlowMatrix, IdleWeighting, LinkEnergyReport, LinkTypeStats,
    PayloadAccounting,
};
use vclink_sim::network::SimResult;
use vclink_sim::reporting::RunManifest;

use crate::templates::Capacitances;

/// What the energy analysis needs from a simulation run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunData {
    pub n_types: usize,
    pub head_type: usize,
    pub flit_width: u32,
    pub clock_period: f64,
    pub cycles: u64,
    pub links: Vec<LinkData>,
    /// Payload of every type in injection order; heads last.
    pub type_streams: Vec<DataStream>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkData {
    pub name: String,
    pub vertical: bool,
    pub flow: DataFlowMatrix,
    pub trace: Option<LinkTrace>,
}

impl RunData {
    pub fn from_result(r: &SimResult) -> Self {
        Self {
            n_types: r.n_types,
            head_type: r.head_type(),
            flit_width: r.flit_width,
            clock_period: r.clock_period,
            cycles: r.cycles,
            links: r
                .links
                .iter()
                .map(|l| LinkData {
                    name: l.name.clone(),
                    vertical: l.vertical,
                    flow: l.flow.clone(),
                    trace: l.trace.clone(),
                })
                .collect(),
            type_streams: r.type_streams.clone(),
        }
    }

    /// Reads the reports written by `emit_reports`. Protocol files are
    /// loaded only when `traces` is set.
    pub fn load(dir: &Path, traces: bool) -> Result<Self> {
        let open = |p: &Path| File::open(p).with_context(|| format!("cannot open {}", p.display()));
        let manifest: RunManifest = serde_json::from_reader(BufReader::new(open(&dir.join("run.json"))?))
            .context("malformed run.json")?;
        let mut links = Vec::new();
        for l in &manifest.links {
            let path = dir.join(&l.matrix);
            let (flow, name) = read_data_flow_csv(BufReader::new(open(&path)?))
                .with_context(|| format!("reading {}", path.display()))?;
            if name != l.name {
                bail!("{} holds link {name}, expected {}", path.display(), l.name);
            }
            let trace = match (&l.protocol, traces) {
                (Some(p), true) => {
                    let path = dir.join(p);
                    let (_, t) = replay_link_protocol(BufReader::new(open(&path)?), Some(manifest.flit_width))
                        .with_context(|| format!("reading {}", path.display()))?;
                    Some(t)
                }
                (None, true) => bail!("run has no protocol for link {}; simulate with --debug-protocol", l.name),
                _ => None,
            };
            links.push(LinkData {
                name: l.name.clone(),
                vertical: l.vertical,
                flow,
                trace,
            });
        }
        let mut type_streams = Vec::with_capacity(manifest.n_types);
        for k in 0..manifest.n_types {
            let path = dir.join(format!("streams/type_{k}.bin"));
            let s = read_stream_binary(BufReader::new(open(&path)?), k)
                .with_context(|| format!("reading {}", path.display()))?;
            type_streams.push(s);
        }
        Ok(Self {
            n_types: manifest.n_types,
            head_type: manifest.head_type,
            flit_width: manifest.flit_width,
            clock_period: manifest.clock_period,
            cycles: manifest.cycles,
            links,
            type_streams,
        })
    }
}

/// Encodes every payload type with `kind`. Head flits are never encoded; on
/// a wider coded link they are zero-extended.
pub fn encode_type_streams(streams: &[DataStream], kind: CodecKind, head_type: usize) -> Result<Vec<DataStream>> {
    streams
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let codec = Codec::new(kind, s.width())?;
            if k == head_type {
                Ok(DataStream::new(s.words().to_vec(), codec.width_out(), k)?)
            } else {
                Ok(codec.encode(s)?)
            }
        })
        .collect()
}

/// Replaces every transmitted payload word of `trace` by its coded
/// counterpart. The k-th word of payload type x on any link is the k-th word
/// of the type's stream. Head flits, which interleave the heads of all flows,
/// are copied unchanged.
pub fn encode_trace(
    trace: &LinkTrace,
    raw: &[DataStream],
    coded: &[DataStream],
    head_type: usize,
) -> Result<LinkTrace> {
    let width = coded.first().map(DataStream::width).unwrap_or(trace.width());
    let mut next = vec![0usize; raw.len()];
    let mut out = LinkTrace::new(width)?;
    for c in trace.cycles() {
        match *c {
            LinkCycle::Idle => out.push_idle(),
            LinkCycle::Active { type_id, word } if type_id == head_type => out.push_active(type_id, word)?,
            LinkCycle::Active { type_id, word } => {
                let k = next[type_id];
                match raw[type_id].words().get(k) {
                    Some(&w) if w == word => {}
                    _ => bail!("word {k} of type {type_id} on the link does not match the type's stream"),
                }
                out.push_active(type_id, coded[type_id].words()[k])?;
                next[type_id] += 1;
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisOptions {
    pub codec: CodecKind,
    pub caps: Capacitances,
    pub vdd: f64,
    pub mode: IdleWeighting,
    /// Also evaluate the bit-level reference (needs link traces).
    pub oracle: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            codec: CodecKind::None,
            caps: Capacitances::default(),
            vdd: 1.0,
            mode: IdleWeighting::Corrected,
            oracle: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkEnergy {
    pub name: String,
    pub vertical: bool,
    pub width: usize,
    pub report: LinkEnergyReport,
    /// Model energy over the run, in fJ.
    pub model_fj: f64,
    pub standard_fj: f64,
    pub oracle: Option<ExactEnergy>,
}

impl LinkEnergy {
    /// `|model − oracle| / oracle`.
    pub fn oracle_error(&self) -> Option<f64> {
        self.oracle
            .as_ref()
            .filter(|o| o.total_fj > 0.0)
            .map(|o| (self.model_fj - o.total_fj).abs() / o.total_fj)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkEnergy {
    pub codec: String,
    pub transitions: u64,
    pub links: Vec<LinkEnergy>,
    pub model_fj: f64,
    pub standard_fj: f64,
    pub oracle_fj: Option<f64>,
}

/// Energy of every link of a run under `opts`. Planar links use the planar
/// capacitance, vertical links the TSV one.
pub fn analyze(run: &RunData, opts: &AnalysisOptions) -> Result<NetworkEnergy> {
    if run.cycles < 2 {
        bail!("run of {} cycles has no link transitions", run.cycles);
    }
    let coded = encode_type_streams(&run.type_streams, opts.codec, run.head_type)?;
    let stats = LinkTypeStats::from_streams(&coded)?;
    let width = stats.width();
    let tech = TechnologyParams::new(opts.vdd, run.clock_period)?;
    let payload = PayloadAccounting {
        data_bits: run.flit_width,
        head_type: Some(run.head_type),
    };
    let transitions = run.cycles - 1;
    let mut links = Vec::with_capacity(run.links.len());
    for l in &run.links {
        let cap = opts
            .caps
            .for_link(width, l.vertical)
            .with_context(|| format!("capacitance for link {}", l.name))?;
        let report = link_energy_report(&stats, &l.flow, &cap, &tech, payload, opts.mode)
            .with_context(|| format!("link {}", l.name))?;
        let oracle = if opts.oracle {
            let Some(trace) = &l.trace else {
                bail!("no trace recorded for link {}", l.name);
            };
            let t = encode_trace(trace, &run.type_streams, &coded, run.head_type)?;
            Some(exact_energy(&t, &cap, &tech, payload)?)
        } else {
            None
        };
        links.push(LinkEnergy {
            name: l.name.clone(),
            vertical: l.vertical,
            width,
            model_fj: report.model.energy_per_cycle_fj * transitions as f64,
            standard_fj: report.standard.energy_per_cycle_fj * transitions as f64,
            report,
            oracle,
        });
    }
    Ok(NetworkEnergy {
        codec: opts.codec.to_string(),
        transitions,
        model_fj: links.iter().map(|l| l.model_fj).sum(),
        standard_fj: links.iter().map(|l| l.standard_fj).sum(),
        oracle_fj: opts
            .oracle
            .then(|| links.iter().filter_map(|l| l.oracle.as_ref()).map(|o| o.total_fj).sum()),
        links,
    })
}

/// Per-link table: model, standard model and (when present) reference.
pub fn energy_table(e: &NetworkEnergy) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    writeln!(
        s,
        "codec {}, {} link cycles\n{:<8}{:>4}{:>9}{:>9}{:>14}{:>14}{:>14}{:>9}",
        e.codec, e.transitions, "link", "3D", "active", "mux", "model pJ", "standard pJ", "oracle pJ", "err %"
    )
    .unwrap();
    for l in &e.links {
        let oracle = l.oracle.as_ref().map(|o| format!("{:.3}", o.total_fj / 1e3));
        let err = l.oracle_error().map(|v| format!("{:.3}", v * 100.0));
        writeln!(
            s,
            "{:<8}{:>4}{:>9.4}{:>9.4}{:>14.3}{:>14.3}{:>14}{:>9}",
            l.name,
            if l.vertical { "y" } else { "" },
            l.report.active_fraction,
            l.report.mux_probability,
            l.model_fj / 1e3,
            l.standard_fj / 1e3,
            oracle.unwrap_or_else(|| "-".into()),
            err.unwrap_or_else(|| "-".into()),
        )
        .unwrap();
    }
    writeln!(
        s,
        "{:<30}{:>14.3}{:>14.3}{:>14}",
        "total",
        e.model_fj / 1e3,
        e.standard_fj / 1e3,
        e.oracle_fj.map(|v| format!("{:.3}", v / 1e3)).unwrap_or_else(|| "-".into())
    )
    .unwrap();
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(words: &[u64], width: u32, k: usize) -> DataStream {
        DataStream::new(words.to_vec(), width, k).unwrap()
    }

    #[test]
    fn heads_are_not_coded() {
        let streams = vec![s(&[0, 0xFF], 8, 0), s(&[0xFF], 8, 1)];
        let c = encode_type_streams(&streams, CodecKind::Invert, 1).unwrap();
        assert_eq!(c[0].words(), &[0, 0x100]);
        assert_eq!(c[1].words(), &[0xFF]);
        assert_eq!(c[1].width(), 9);
    }

    #[test]
    fn trace_coding_follows_stream_order() {
        let raw = vec![s(&[3, 3, 5], 4, 0), s(&[9], 4, 1)];
        let coded = encode_type_streams(&raw, CodecKind::Correlator { invert: false }, 1).unwrap();
        let mut t = LinkTrace::new(4).unwrap();
        t.push_active(1, 9).unwrap();
        t.push_active(0, 3).unwrap();
        t.push_idle();
        t.push_active(0, 3).unwrap();
        t.push_active(0, 5).unwrap();
        let e = encode_trace(&t, &raw, &coded, 1).unwrap();
        let words: Vec<u64> = e.held_words();
        assert_eq!(words, vec![9, 3, 3, 0, 6]);
        let mut bad = LinkTrace::new(4).unwrap();
        bad.push_active(0, 4).unwrap();
        assert!(encode_trace(&bad, &raw, &coded, 1).is_err());
    }
}
