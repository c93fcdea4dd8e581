// SPDX-License-Identifier: Apache-2.0

//! Per-link data-flow recording and simulation reports.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use vclink::vc_model::{write_data_flow_csv, DataFlowMatrix};

use crate::network::SimResult;
use crate::{Error, Result};

/// What a link did in one cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinkState {
    Active(usize),
    Idle,
}

/// Counts transitions between consecutive link states. States `0..n` mean
/// "transmitting type x", states `n..2n` "idle, last transmitted type x".
/// Before its first flit a link is idle holding the head type `n − 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkObserver {
    pub id: String,
    n: usize,
    held: usize,
    prev: Option<usize>,
    counts: DMatrix<u64>,
    cycles: u64,
}

impl LinkObserver {
    pub fn new(id: impl Into<String>, n_types: usize) -> Self {
        assert!(n_types > 0, "observer needs at least one type");
        Self {
            id: id.into(),
            n: n_types,
            held: n_types - 1,
            prev: None,
            counts: DMatrix::zeros(2 * n_types, 2 * n_types),
            cycles: 0,
        }
    }

    pub fn record(&mut self, state: LinkState) {
        let cur = match state {
            LinkState::Active(x) => {
                assert!(x < self.n, "type {x} out of range on link {}", self.id);
                self.held = x;
                x
            }
            LinkState::Idle => self.held + self.n,
        };
        if let Some(p) = self.prev {
            self.counts[(p, cur)] += 1;
        }
        self.prev = Some(cur);
        self.cycles += 1;
    }

    pub fn counts(&self) -> &DMatrix<u64> {
        &self.counts
    }

    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    /// Number of active cycles after the first one.
    pub fn active_transitions(&self) -> u64 {
        self.counts.columns(0, self.n).iter().sum()
    }

    pub fn finalize(&self) -> Result<DataFlowMatrix> {
        if self.cycles < 2 {
            return Err(Error::Invalid(format!(
                "link {} observed for {} cycles, need 2",
                self.id, self.cycles
            )));
        }
        Ok(DataFlowMatrix::from_counts(&self.counts)?)
    }
}

pub fn finalize_matrices(observers: &[LinkObserver]) -> Result<Vec<DataFlowMatrix>> {
    observers.iter().map(LinkObserver::finalize).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub samples: usize,
    pub mean_cycles: f64,
    pub median_cycles: f64,
    pub p95_cycles: f64,
    pub max_cycles: f64,
    pub mean_ns: f64,
    pub median_ns: f64,
    pub p95_ns: f64,
    pub max_ns: f64,
}

/// Mean, median, 95th percentile (nearest rank) and maximum of latency
/// samples given in base cycles.
pub fn latency_stats(samples: &[u64], clock_period_s: f64) -> Result<LatencySummary> {
    if samples.is_empty() {
        return Err(Error::Invalid("no latency samples".into()));
    }
    let mut s = samples.to_vec();
    s.sort_unstable();
    let n = s.len();
    let mean = s.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        s[n / 2] as f64
    } else {
        (s[n / 2 - 1] + s[n / 2]) as f64 / 2.0
    };
    let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
    let p95 = s[rank - 1] as f64;
    let max = s[n - 1] as f64;
    let ns = clock_period_s * 1e9;
    Ok(LatencySummary {
        samples: n,
        mean_cycles: mean,
        median_cycles: median,
        p95_cycles: p95,
        max_cycles: max,
        mean_ns: mean * ns,
        median_ns: median * ns,
        p95_ns: p95 * ns,
        max_ns: max * ns,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub flit: Option<LatencySummary>,
    pub network: Option<LatencySummary>,
    pub injected_packets: u64,
    pub delivered_packets: u64,
    pub injected_flits: u64,
    pub delivered_flits: u64,
    pub cycles: u64,
}

impl LatencyReport {
    pub fn from_result(r: &SimResult) -> Self {
        Self {
            flit: latency_stats(&r.flit_latencies, r.clock_period).ok(),
            network: latency_stats(&r.network_latencies, r.clock_period).ok(),
            injected_packets: r.injected_packets,
            delivered_packets: r.delivered_packets,
            injected_flits: r.injected_flits,
            delivered_flits: r.delivered_flits,
            cycles: r.cycles,
        }
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let row = |s: &mut String, label: &str, v: &Option<LatencySummary>| {
            match v {
                Some(v) => writeln!(
                    s,
                    "{label:<24}{:>10.2} ns{:>10.2} ns{:>10.2} ns{:>10.2} ns",
                    v.mean_ns, v.median_ns, v.p95_ns, v.max_ns
                ),
                None => writeln!(s, "{label:<24}{:>13}", "n/a"),
            }
            .expect("write to string");
        };
        writeln!(s, "{:<24}{:>13}{:>13}{:>13}{:>13}", "", "mean", "median", "p95", "max").unwrap();
        row(&mut s, "Avg. flit latency", &self.flit);
        row(&mut s, "Avg. network latency", &self.network);
        writeln!(
            s,
            "packets {}/{} delivered, flits {}/{} delivered, {} cycles",
            self.delivered_packets, self.injected_packets, self.delivered_flits, self.injected_flits, self.cycles
        )
        .unwrap();
        s
    }
}

/// Static facts about a run that `analyze` needs besides the matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub n_types: usize,
    pub head_type: usize,
    pub flit_width: u32,
    pub clock_period: f64,
    pub cycles: u64,
    pub seed: u64,
    pub links: Vec<ManifestLink>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestLink {
    pub name: String,
    pub vertical: bool,
    pub flits: u64,
    pub matrix: String,
    pub protocol: Option<String>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|source| Error::File {
        path: path.display().to_string(),
        source,
    })?))
}

/// Writes all reports of a run into `dir`:
///
/// - `M_<link>.csv` per inter-router link
/// - `latency.json`, `latency.txt`, `utilization.csv`
/// - `streams/type_<k>.bin`, the payload of every data type in injection
///   order (heads last)
/// - `protocols/<link>.protocol` when link traces were recorded
/// - `run.json`
pub fn emit_reports(r: &SimResult, dir: &Path) -> Result<RunManifest> {
    let mk = |p: &Path| {
        fs::create_dir_all(p).map_err(|source| Error::File {
            path: p.display().to_string(),
            source,
        })
    };
    mk(dir)?;
    mk(&dir.join("streams"))?;
    let mut links = Vec::new();
    let mut util = create(&dir.join("utilization.csv"))?;
    writeln!(util, "link,vertical,active_fraction,flits,cycles")?;
    for l in &r.links {
        let matrix = format!("M_{}.csv", l.name);
        write_data_flow_csv(create(&dir.join(&matrix))?, &l.flow, &l.name)?;
        writeln!(
            util,
            "{},{},{:?},{},{}",
            l.name,
            l.vertical,
            l.flow.active_fraction(),
            l.flits,
            r.cycles
        )?;
        let protocol = match &l.trace {
            Some(t) => {
                mk(&dir.join("protocols"))?;
                let name = format!("protocols/{}.protocol", l.name);
                vclink::oracle::write_link_protocol(create(&dir.join(&name))?, &l.name, t)?;
                Some(name)
            }
            None => None,
        };
        links.push(ManifestLink {
            name: l.name.clone(),
            vertical: l.vertical,
            flits: l.flits,
            matrix,
            protocol,
        });
    }
    util.flush()?;
    for (k, s) in r.type_streams.iter().enumerate() {
        vclink::io::write_stream_binary(create(&dir.join(format!("streams/type_{k}.bin")))?, s)?;
    }
    let latency = LatencyReport::from_result(r);
    serde_json::to_writer_pretty(create(&dir.join("latency.json"))?, &latency)?;
    fs::write(dir.join("latency.txt"), latency.to_table())?;
    let manifest = RunManifest {
        n_types: r.n_types,
        head_type: r.n_types - 1,
        flit_width: r.flit_width,
        clock_period: r.clock_period,
        cycles: r.cycles,
        seed: r.seed,
        links,
    };
    serde_json::to_writer_pretty(create(&dir.join("run.json"))?, &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observer_counts() {
        let mut o = LinkObserver::new("L", 3);
        for s in [LinkState::Active(0), LinkState::Active(0), LinkState::Idle, LinkState::Active(1)] {
            o.record(s);
        }
        let c = o.counts();
        assert_eq!(c[(0, 0)], 1);
        assert_eq!(c[(0, 3)], 1);
        assert_eq!(c[(3, 1)], 1);
        assert_eq!(c.iter().sum::<u64>(), 3);
    }

    #[test]
    fn all_idle_holds_head_type() {
        let mut o = LinkObserver::new("L", 2);
        for _ in 0..10 {
            o.record(LinkState::Idle);
        }
        assert_eq!(o.counts()[(3, 3)], 9);
        let m = o.finalize().unwrap();
        assert_eq!(m.active_fraction(), 0.0);
    }

    #[test]
    fn normalization() {
        let mut o = LinkObserver::new("L", 1);
        for s in [LinkState::Active(0), LinkState::Active(0), LinkState::Active(0), LinkState::Active(0), LinkState::Idle] {
            o.record(s);
        }
        let m = o.finalize().unwrap();
        assert_eq!(m.matrix()[(0, 0)], 0.75);
        assert_eq!(m.matrix()[(0, 1)], 0.25);
        let mut short = LinkObserver::new("L", 1);
        short.record(LinkState::Idle);
        assert!(short.finalize().is_err());
    }

    #[test]
    fn latency_summary() {
        let s = latency_stats(&[2, 4], 1e-9).unwrap();
        assert_eq!(s.mean_cycles, 3.0);
        assert_eq!(s.median_cycles, 3.0);
        let one = latency_stats(&[7], 2e-9).unwrap();
        assert_eq!((one.mean_cycles, one.median_cycles, one.max_cycles), (7.0, 7.0, 7.0));
        assert_eq!(one.mean_ns, 14.0);
        let many: Vec<u64> = (1..=100).collect();
        assert_eq!(latency_stats(&many, 1e-9).unwrap().p95_cycles, 95.0);
        assert!(latency_stats(&[], 1e-9).is_err());
    }
    proptest::proptest! {
        #[test]
        fn counts_cover_every_transition(states in proptest::collection::vec(proptest::option::of(0usize..3), 2..300)) {
            let mut o = LinkObserver::new("L", 3);
            for s in &states {
                o.record(s.map_or(LinkState::Idle, LinkState::Active));
            }
            proptest::prop_assert_eq!(o.counts().iter().sum::<u64>(), states.len() as u64 - 1);
            let m = o.finalize().unwrap();
            proptest::prop_assert!((m.matrix().sum() - 1.0).abs() < 1e-12);
        }
    }
}
