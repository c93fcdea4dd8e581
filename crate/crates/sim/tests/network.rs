// SPDX-License-Identifier: Apache-2.0

use std::path::Path;

use nalgebra::DMatrix;
use vclink::oracle::{replay_link_protocol, LinkCycle};
use vclink::stats::{DataStream, Distribution};
use vclink_sim::config::SimConfig;
use vclink_sim::network::{run, Network, SimOptions};
use vclink_sim::reporting::emit_reports;
use vclink_sim::router::Arbitration;
use vclink_sim::traffic::{PayloadSpec, RateUnit, StreamParams};
use vclink_sim::{parse_config_file, Topology};

fn uniform(seed: Option<u64>) -> PayloadSpec {
    PayloadSpec::Stream(StreamParams {
        distribution: Distribution::Uniform,
        width: 16,
        sigma: 1.0,
        rho: 0.0,
        seed,
    })
}

fn opts(cycles: u64, seed: u64) -> SimOptions {
    SimOptions {
        cycles,
        seed,
        record_traces: true,
        check_invariants: true,
    }
}

fn case_study() -> SimConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/case-study.xml");
    parse_config_file(&path).unwrap()
}

/// Transition counts recomputed directly from a link trace.
fn recount(cycles: &[LinkCycle], n: usize) -> DMatrix<u64> {
    let mut counts = DMatrix::zeros(2 * n, 2 * n);
    let mut held = n - 1;
    let mut states = Vec::with_capacity(cycles.len());
    for c in cycles {
        states.push(match c {
            LinkCycle::Active { type_id, .. } => {
                held = *type_id;
                *type_id
            }
            LinkCycle::Idle => n + held,
        });
    }
    for w in states.windows(2) {
        counts[(w[0], w[1])] += 1;
    }
    counts
}

#[test]
fn golden_two_hop_latency() {
    // R1 -> R2 -> R3 on a 3x1 mesh, four-flit packet, empty network.
    //  t=0  NI starts the packet and sends the head
    //  t=1  head in R1: route     t=2 VC allocation    t=3 sent on R1-R2
    //  t=4  R2 route   t=5 VA     t=6 sent on R2-R3
    //  t=7  R3 route   t=8 VA     t=9 sent to the NI, received t=10
    // body flits follow one per cycle; latency counts from the cycle the
    // packet entered the NI queue.
    let mut cfg = SimConfig::new(Topology::mesh(3, 1, 1).unwrap());
    cfg.flits_per_packet = 4;
    cfg.add_flow(0, 2, 0.0, RateUnit::Packets, uniform(Some(1)));
    let mut net = Network::new(&cfg, opts(20, 1)).unwrap();
    assert!(net.inject_now(0));
    for _ in 0..20 {
        net.step();
    }
    let r = net.finish().unwrap();
    assert_eq!(r.flit_latencies, vec![10, 11, 12, 13]);
    assert_eq!(r.network_latencies, vec![13]);
    let active = |name: &str| -> Vec<usize> {
        let t = r.link(name).unwrap().trace.as_ref().unwrap();
        t.cycles()
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c, LinkCycle::Active { .. }))
            .map(|(k, _)| k)
            .collect()
    };
    assert_eq!(active("R1-R2"), vec![3, 4, 5, 6]);
    assert_eq!(active("R2-R3"), vec![6, 7, 8, 9]);
    assert!(active("R2-R1").is_empty());
}

#[test]
fn idle_network() {
    let cfg = SimConfig::new(Topology::mesh(2, 2, 1).unwrap());
    let r = run(&cfg, opts(100, 3)).unwrap();
    assert_eq!(r.links.len(), 8);
    for l in &r.links {
        // one type (heads): state 1 is "idle holding head"
        assert_eq!(l.counts[(1, 1)], 99);
        assert_eq!(l.flow.active_fraction(), 0.0);
    }
    assert!(r.flit_latencies.is_empty());
}

#[test]
fn deterministic_given_seed() {
    let mut cfg = SimConfig::new(Topology::mesh(3, 3, 1).unwrap());
    for s in 0..9 {
        cfg.add_flow(s, 8 - s, 0.02, RateUnit::Packets, uniform(None));
    }
    let a = run(&cfg, opts(5_000, 11)).unwrap();
    let b = run(&cfg, opts(5_000, 11)).unwrap();
    let c = run(&cfg, opts(5_000, 12)).unwrap();
    assert_eq!(a.flit_latencies, b.flit_latencies);
    for (x, y) in a.links.iter().zip(&b.links) {
        assert_eq!(x.counts, y.counts);
        assert_eq!(x.trace, y.trace);
    }
    assert_eq!(a.type_streams, b.type_streams);
    assert_ne!(a.flit_latencies, c.flit_latencies);
}

#[test]
fn stress_conserves_flits_and_credits() {
    // every node sends to the far corner at a load the mesh cannot carry;
    // invariants are asserted after every cycle
    let mut cfg = SimConfig::new(Topology::mesh(3, 3, 2).unwrap());
    cfg.vc_count = 2;
    cfg.buffer_depth = 2;
    let n = cfg.topology.len();
    for s in 0..n {
        cfg.add_flow(s, n - 1 - s, 0.9, RateUnit::Flits, uniform(None));
        cfg.add_flow(s, (s + 5) % n, 0.3, RateUnit::Flits, uniform(None));
    }
    let r = run(&cfg, opts(100_000, 5)).unwrap();
    assert!(r.delivered_packets > 1000);
    assert!(r.injected_flits >= r.delivered_flits);
}

#[test]
fn observer_matches_protocol_recount() {
    let cfg = case_study();
    let r = run(&cfg, opts(20_000, 2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = emit_reports(&r, dir.path()).unwrap();
    for (l, m) in r.links.iter().zip(&manifest.links) {
        let file = std::fs::File::open(dir.path().join(m.protocol.as_ref().unwrap())).unwrap();
        let (name, trace) = replay_link_protocol(std::io::BufReader::new(file), Some(16)).unwrap();
        assert_eq!(name, l.name);
        assert_eq!(trace.len() as u64, r.cycles);
        assert_eq!(recount(trace.cycles(), r.n_types), l.counts, "{}", l.name);
        // active transitions plus a possibly active first cycle equal the flit count
        let first = matches!(trace.cycles()[0], LinkCycle::Active { .. }) as u64;
        let active: u64 = l.counts.columns(0, r.n_types).iter().sum();
        assert_eq!(active + first, l.flits);
        let m = l.flow.matrix();
        assert!((m.sum() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn payload_order_is_preserved_on_every_link() {
    let cfg = case_study();
    let r = run(&cfg, opts(20_000, 4)).unwrap();
    for l in &r.links {
        let t = l.trace.as_ref().unwrap();
        for ty in 0..r.n_types - 1 {
            let seen: Vec<u64> = t
                .cycles()
                .iter()
                .filter_map(|c| match c {
                    LinkCycle::Active { type_id, word } if *type_id == ty => Some(*word),
                    _ => None,
                })
                .collect();
            let src = r.type_streams[ty].words();
            if !seen.is_empty() {
                assert_eq!(&src[..seen.len()], &seen[..], "type {ty} on {}", l.name);
            }
        }
    }
}

#[test]
fn case_study_structure() {
    let cfg = case_study();
    assert_eq!(cfg.topology.len(), 7);
    let links = cfg.topology.links();
    let vertical: Vec<&str> = links.iter().filter(|l| l.vertical).map(|l| l.name.as_str()).collect();
    assert_eq!(vertical, vec!["R5-R7", "R7-R5"]);
    assert_eq!(cfg.n_types(), 7);
    let r = run(&cfg, opts(30_000, 9)).unwrap();
    let used: Vec<&str> = r.links.iter().filter(|l| l.flits > 0).map(|l| l.name.as_str()).collect();
    assert_eq!(used, vec!["R1-R2", "R2-R5", "R3-R2", "R4-R5", "R5-R7", "R6-R5"]);
    // VCs are only exercised where flows merge
    let mux = |name: &str| r.link(name).unwrap().flow.mux_probability();
    assert!(mux("R5-R7") > 0.3);
    assert!(mux("R2-R5") > 0.2);
}

#[test]
fn pe_ticks_at_half_router_rate() {
    let mut cfg = SimConfig::new(Topology::mesh(2, 1, 1).unwrap());
    cfg.add_flow(0, 1, 1.0, RateUnit::Packets, uniform(None));
    cfg.ni_queue_depth = 1000;
    let r = run(&cfg, opts(1_000, 1)).unwrap();
    // one packet per PE cycle, PE fires on even base cycles
    assert_eq!(r.injected_packets, 500);
}

#[test]
fn injection_rate_converges() {
    let mut cfg = SimConfig::new(Topology::mesh(2, 1, 1).unwrap());
    cfg.flits_per_packet = 2;
    cfg.add_flow(0, 1, 0.2, RateUnit::Packets, uniform(None));
    let r = run(&cfg, SimOptions { check_invariants: false, record_traces: false, ..opts(200_000, 8) }).unwrap();
    let pe_cycles = 100_000.0;
    let rate = r.injected_packets as f64 / pe_cycles;
    assert!((rate - 0.2).abs() < 0.01 * 0.2 * 5.0, "{rate}");
}

#[test]
fn unloaded_network_delivers_everything() {
    let mut cfg = SimConfig::new(Topology::mesh(4, 4, 2).unwrap());
    let n = cfg.topology.len();
    for s in 0..n {
        cfg.add_flow(s, (s * 7 + 3) % n, 0.002, RateUnit::Packets, uniform(None));
    }
    let mut net = Network::new(&cfg, opts(20_000, 6)).unwrap();
    for _ in 0..20_000 {
        net.step();
    }
    // stop injecting by draining: the remaining packets need at most a few
    // hundred cycles on an idle mesh
    let mut drained = false;
    let before = net.injected_flits();
    for _ in 0..2_000 {
        if net.in_flight() == 0 && net.pending_packets() == 0 {
            drained = true;
            break;
        }
        net.step();
    }
    assert!(before > 0);
    let r = net.finish().unwrap();
    assert!(drained || r.delivered_packets + 20 >= r.injected_packets);
    let max = *r.network_latencies.iter().max().unwrap();
    assert!(max < 500, "max latency {max}");
}

#[test]
fn priority_arbitration_runs() {
    let mut cfg = case_study();
    for t in &mut cfg.node_types {
        t.arbitration = Arbitration::Priority;
    }
    let r = run(&cfg, opts(10_000, 3)).unwrap();
    assert!(r.delivered_packets > 0);
}

#[test]
fn image_payload_consumed_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("img.pgm");
    let mut bytes = b"P5\n64 64\n255\n".to_vec();
    bytes.extend((0..64 * 64).map(|k| (k % 251) as u8));
    std::fs::write(&path, &bytes).unwrap();
    let mut cfg = SimConfig::new(Topology::mesh(2, 1, 1).unwrap());
    cfg.add_flow(
        0,
        1,
        0.5,
        RateUnit::Flits,
        PayloadSpec::File {
            path: path.clone(),
            format: vclink_sim::traffic::FileFormat::Pgm,
        },
    );
    let r = run(&cfg, opts(4_000, 1)).unwrap();
    let image = vclink_sim::traffic::load_payload_file(&path, vclink_sim::traffic::FileFormat::Pgm, 16).unwrap();
    let used = &r.type_streams[0];
    assert!(used.len() > 100);
    let n = used.len().min(image.len());
    assert_eq!(&used.words()[..n], &image.words()[..n]);
    let _: &DataStream = used;
}
