// SPDX-License-Identifier: Apache-2.0

//! The vision SoC case study: the same traffic with several and with a single
//! virtual channel, link energy per packet for uncoded and coded payloads,
//! and network latency.

use std::fmt::Write;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vclink::codec::{coding_gain, CodecKind};
use vclink_sim::config::SimConfig;
use vclink_sim::network::{run, SimOptions, SimResult};
use vclink_sim::reporting::LatencyReport;

use crate::analysis::{analyze, AnalysisOptions, NetworkEnergy, RunData};

#[derive(Clone, Debug, PartialEq)]
pub struct CaseStudyOptions {
    pub vc_counts: Vec<usize>,
    /// Codecs compared against uncoded payload.
    pub codecs: Vec<CodecKind>,
    pub analysis: AnalysisOptions,
    pub cycles: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRun {
    pub vc_count: usize,
    pub latency: LatencyReport,
    /// Uncoded first, then one entry per codec.
    pub energy: Vec<NetworkEnergy>,
}

impl CaseRun {
    pub fn uncoded(&self) -> &NetworkEnergy {
        &self.energy[0]
    }

    pub fn coded(&self, codec: CodecKind) -> Option<&NetworkEnergy> {
        let name = codec.to_string();
        self.energy.iter().find(|e| e.codec == name)
    }

    /// Gain of `codec` over uncoded payload according to the model, or to the
    /// reference when `oracle` is set.
    pub fn gain(&self, codec: CodecKind, oracle: bool) -> Result<f64> {
        let c = self.coded(codec).with_context(|| format!("codec {codec} not evaluated"))?;
        let pick = |e: &NetworkEnergy| if oracle { e.oracle_fj.unwrap_or(f64::NAN) } else { e.model_fj };
        Ok(coding_gain(pick(self.uncoded()), pick(c))?)
    }
}

/// Simulates `cfg` once per VC count.
pub fn simulate_variants(cfg: &SimConfig, vc_counts: &[usize], cycles: u64, seed: u64, traces: bool) -> Result<Vec<SimResult>> {
    vc_counts
        .par_iter()
        .map(|&vc| {
            let mut c = cfg.clone();
            c.vc_count = vc;
            c.cycles = cycles;
            c.seed = seed;
            let opts = SimOptions {
                cycles,
                seed,
                record_traces: traces,
                check_invariants: false,
            };
            run(&c, opts).with_context(|| format!("simulation with {vc} VCs"))
        })
        .collect()
}

pub fn evaluate(result: &SimResult, vc_count: usize, opts: &CaseStudyOptions) -> Result<CaseRun> {
    let data = RunData::from_result(result);
    let mut codecs = vec![CodecKind::None];
    codecs.extend(opts.codecs.iter().copied().filter(|c| *c != CodecKind::None));
    let energy = codecs
        .par_iter()
        .map(|&codec| {
            analyze(
                &data,
                &AnalysisOptions {
                    codec,
                    ..opts.analysis.clone()
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CaseRun {
        vc_count,
        latency: LatencyReport::from_result(result),
        energy,
    })
}

pub fn run_case_study(cfg: &SimConfig, opts: &CaseStudyOptions) -> Result<Vec<CaseRun>> {
    let results = simulate_variants(cfg, &opts.vc_counts, opts.cycles, opts.seed, opts.analysis.oracle)?;
    results
        .iter()
        .zip(&opts.vc_counts)
        .map(|(r, &vc)| evaluate(r, vc, opts))
        .collect()
}

/// Energy per transmitted packet in the three estimates, with changes
/// relative to uncoded payload, and the latency row.
pub fn case_table(run: &CaseRun) -> String {
    let packets = run.latency.delivered_packets.max(1) as f64;
    let per_packet = |fj: f64| fj / 1e3 / packets;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "Link energy and network performance with {} virtual channel{}",
        run.vc_count,
        if run.vc_count == 1 { "" } else { "s" }
    );
    let _ = writeln!(s, "Energy per transmitted packet [pJ]");
    let _ = writeln!(s, "{:<16}{:>24}{:>24}{:>24}", "Data", "Bit-level sim.", "Model", "Standard model");
    let base = run.uncoded();
    for e in &run.energy {
        let cell = |v: Option<f64>, b: Option<f64>| -> String {
            match (v, b) {
                (Some(v), Some(b)) if e.codec != base.codec => {
                    format!("{:.4} ({:+.2} %)", per_packet(v), (v - b) / b * 100.0)
                }
                (Some(v), _) => format!("{:.4}", per_packet(v)),
                (None, _) => "-".into(),
            }
        };
        let _ = writeln!(
            s,
            "{:<16}{:>24}{:>24}{:>24}",
            e.codec,
            cell(e.oracle_fj, base.oracle_fj),
            cell(Some(e.model_fj), Some(base.model_fj)),
            cell(Some(e.standard_fj), Some(base.standard_fj)),
        );
    }
    let ns = |v: &Option<vclink_sim::reporting::LatencySummary>| {
        v.map(|v| format!("{:.1} ns", v.mean_ns)).unwrap_or_else(|| "n/a".into())
    };
    let _ = writeln!(
        s,
        "Avg. flit latency: {}    Avg. network latency: {}",
        ns(&run.latency.flit),
        ns(&run.latency.network)
    );
    let _ = writeln!(
        s,
        "{} of {} packets delivered in {} cycles",
        run.latency.delivered_packets, run.latency.injected_packets, run.latency.cycles
    );
    s
}
