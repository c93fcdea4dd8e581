// SPDX-License-Identifier: Apache-2.0

//! Network assembly and the cycle loop.
//!
//! Order within one base cycle:
//!
//! 1. flits and credits sent in the previous cycle arrive
//! 2. routers that fire this cycle compute routes, allocate VCs and send
//! 3. every inter-router link reports active or idle to its observer
//! 4. NIs (clocked with their router) start packets and inject one flit
//! 5. PEs that fire this cycle create packets
//!
//! Links, including the NI-router links, take one cycle.

use std::collections::{HashMap, VecDeque};

use nalgebra::DMatrix;
use vclink::oracle::LinkTrace;
use vclink::stats::DataStream;
use vclink::vc_model::DataFlowMatrix;
use vclink::width_mask;

use crate::config::SimConfig;
use crate::reporting::{LinkObserver, LinkState};
use crate::router::{Flit, Router};
use crate::topology::{LinkId, Port};
use crate::traffic::{Injector, PayloadSource};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimOptions {
    pub cycles: u64,
    pub seed: u64,
    /// Keep the full per-cycle trace of every link.
    pub record_traces: bool,
    /// Check flit and credit conservation after every cycle.
    pub check_invariants: bool,
}

impl SimOptions {
    pub fn from_config(cfg: &SimConfig) -> Self {
        Self {
            cycles: cfg.cycles,
            seed: cfg.seed,
            record_traces: false,
            check_invariants: false,
        }
    }
}

/// splitmix64 finalizer, used to derive independent per-flow seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Head flit word: destination index in the upper half, per-flow sequence
/// number in the lower half.
pub fn head_word(width: u32, dst: usize, seq: u64) -> u64 {
    let low = width / 2;
    ((dst as u64 & width_mask(width - low)) << low) | (seq & width_mask(low))
}

#[derive(Clone, Debug)]
struct Packet {
    flow: usize,
    flits: Vec<Flit>,
}

impl Packet {
    fn enqueued_at(mut self, t: u64) -> Self {
        for f in &mut self.flits {
            f.enqueued = t;
        }
        self
    }
}

#[derive(Clone, Debug)]
struct NiVc {
    flow: usize,
    flits: VecDeque<Flit>,
}

#[derive(Clone, Debug)]
struct Ni {
    queue: VecDeque<Packet>,
    vcs: Vec<Option<NiVc>>,
    credits: Vec<usize>,
    rr: usize,
    expected: HashMap<u64, u32>,
}

#[derive(Clone, Debug)]
struct Pe {
    delay: u32,
    flows: Vec<usize>,
    blocked: Vec<Option<Packet>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Dest {
    Router(usize, Port),
    Ni(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum CreditTo {
    Router(usize, Port, usize),
    Ni(usize, usize),
}

#[derive(Clone, Debug)]
pub struct LinkResult {
    pub name: String,
    pub from: usize,
    pub to: usize,
    pub vertical: bool,
    pub flow: DataFlowMatrix,
    pub counts: DMatrix<u64>,
    /// Flits that crossed the link.
    pub flits: u64,
    pub trace: Option<LinkTrace>,
}

#[derive(Clone, Debug)]
pub struct SimResult {
    pub links: Vec<LinkResult>,
    /// Payload words of every data type in creation order; the last entry
    /// holds the head words.
    pub type_streams: Vec<DataStream>,
    pub flit_latencies: Vec<u64>,
    pub network_latencies: Vec<u64>,
    pub injected_packets: u64,
    pub delivered_packets: u64,
    pub injected_flits: u64,
    pub delivered_flits: u64,
    pub cycles: u64,
    pub n_types: usize,
    pub flit_width: u32,
    pub clock_period: f64,
    pub seed: u64,
    pub payload_restarts: Vec<u64>,
}

impl SimResult {
    pub fn link(&self, name: &str) -> Option<&LinkResult> {
        self.links.iter().find(|l| l.name == name)
    }

    pub fn head_type(&self) -> usize {
        self.n_types - 1
    }
}

pub struct Network {
    cfg: SimConfig,
    opts: SimOptions,
    routers: Vec<Router>,
    nis: Vec<Ni>,
    pes: Vec<Pe>,
    injectors: Vec<Injector>,
    links: Vec<LinkId>,
    link_of: Vec<[Option<usize>; Port::COUNT]>,
    observers: Vec<LinkObserver>,
    traces: Option<Vec<LinkTrace>>,
    link_flits: Vec<u64>,
    flits_transit: Vec<(Dest, usize, Flit)>,
    credits_transit: Vec<CreditTo>,
    cycle: u64,
    next_packet: u64,
    type_words: Vec<Vec<u64>>,
    flit_latencies: Vec<u64>,
    network_latencies: Vec<u64>,
    injected_packets: u64,
    delivered_packets: u64,
    injected_flits: u64,
    delivered_flits: u64,
}

impl Network {
    pub fn new(cfg: &SimConfig, opts: SimOptions) -> Result<Self> {
        cfg.validate()?;
        let topo = &cfg.topology;
        let routers = (0..topo.len())
            .map(|n| {
                let mut connected = [false; Port::COUNT];
                for p in Port::ALL {
                    connected[p.index()] = topo.neighbor(n, p).is_some();
                }
                Router::new(n, cfg.router_config(n), connected)
            })
            .collect();
        let nis = (0..topo.len())
            .map(|_| Ni {
                queue: VecDeque::new(),
                vcs: vec![None; cfg.vc_count],
                credits: vec![cfg.buffer_depth; cfg.vc_count],
                rr: 0,
                expected: HashMap::new(),
            })
            .collect();
        let mut pes: Vec<Pe> = (0..topo.len())
            .map(|n| Pe {
                delay: cfg.pe_delay(n),
                flows: Vec::new(),
                blocked: Vec::new(),
            })
            .collect();
        let mut injectors = Vec::new();
        for (k, spec) in cfg.traffic.iter().enumerate() {
            let pe = &mut pes[spec.source];
            let pe_cycles = opts.cycles / pe.delay as u64 + 1;
            let expected = pe_cycles as f64 * spec.packet_probability();
            let packets = ((expected + 6.0 * expected.sqrt() + 8.0).ceil() as u64).min(pe_cycles);
            let length = (packets as usize * (cfg.flits_per_packet - 1)).max(1);
            let stream = spec
                .payload
                .build(cfg.flit_width, length, derive_seed(opts.seed, 1000 + k as u64))?;
            injectors.push(Injector::new(
                spec.clone(),
                PayloadSource::new(stream)?,
                derive_seed(opts.seed, k as u64),
            ));
            pe.flows.push(k);
            pe.blocked.push(None);
        }
        let links = topo.links();
        let mut link_of = vec![[None; Port::COUNT]; topo.len()];
        for (k, l) in links.iter().enumerate() {
            link_of[l.from][l.port.index()] = Some(k);
        }
        let n = cfg.n_types();
        let observers = links.iter().map(|l| LinkObserver::new(l.name.clone(), n)).collect();
        let traces = opts
            .record_traces
            .then(|| links.iter().map(|_| LinkTrace::new(cfg.flit_width)).collect::<vclink::Result<Vec<_>>>())
            .transpose()?;
        Ok(Self {
            cfg: cfg.clone(),
            opts,
            routers,
            nis,
            pes,
            injectors,
            link_flits: vec![0; links.len()],
            links,
            link_of,
            observers,
            traces,
            flits_transit: Vec::new(),
            credits_transit: Vec::new(),
            cycle: 0,
            next_packet: 0,
            type_words: vec![Vec::new(); n],
            flit_latencies: Vec::new(),
            network_latencies: Vec::new(),
            injected_packets: 0,
            delivered_packets: 0,
            injected_flits: 0,
            delivered_flits: 0,
        })
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn links(&self) -> &[LinkId] {
        &self.links
    }

    pub fn observers(&self) -> &[LinkObserver] {
        &self.observers
    }

    pub fn delivered_flits(&self) -> u64 {
        self.delivered_flits
    }

    pub fn injected_flits(&self) -> u64 {
        self.injected_flits
    }

    /// Flits inside routers or on links.
    pub fn in_flight(&self) -> u64 {
        (self.routers.iter().map(Router::buffered).sum::<usize>() + self.flits_transit.len()) as u64
    }

    /// Packets waiting at PEs or NIs, or being serialized.
    pub fn pending_packets(&self) -> usize {
        self.nis
            .iter()
            .map(|ni| ni.queue.len() + ni.vcs.iter().flatten().count())
            .sum::<usize>()
            + self.pes.iter().map(|p| p.blocked.iter().flatten().count()).sum::<usize>()
    }

    fn receive(&mut self, node: usize, flit: Flit) {
        let t = self.cycle;
        assert_eq!(flit.dst, node, "flit of packet {} ejected at wrong node", flit.packet);
        let ni = &mut self.nis[node];
        let expected = ni.expected.entry(flit.packet).or_insert(0);
        assert_eq!(*expected, flit.index, "packet {} reassembled out of order", flit.packet);
        *expected += 1;
        self.delivered_flits += 1;
        self.flit_latencies.push(t - flit.enqueued);
        if flit.tail {
            ni.expected.remove(&flit.packet);
            self.delivered_packets += 1;
            self.network_latencies.push(t - flit.created);
        }
    }

    fn make_packet(&mut self, flow: usize) -> Packet {
        let t = self.cycle;
        let fpp = self.cfg.flits_per_packet;
        let inj = &mut self.injectors[flow];
        let (seq, words) = inj.next_payload(fpp - 1);
        let (src, dst, type_id) = (inj.spec.source, inj.spec.destination, inj.spec.type_id);
        let head_type = self.cfg.head_type();
        let packet = self.next_packet;
        self.next_packet += 1;
        let head = head_word(self.cfg.flit_width, dst, seq);
        self.type_words[head_type].push(head);
        self.type_words[type_id].extend_from_slice(&words);
        let flit = |index: usize, type_id: usize, word: u64| Flit {
            packet,
            flow,
            type_id,
            word,
            index: index as u32,
            tail: index == fpp - 1,
            src,
            dst,
            created: t,
            enqueued: t,
        };
        let mut flits = Vec::with_capacity(fpp);
        flits.push(flit(0, head_type, head));
        flits.extend(words.into_iter().enumerate().map(|(k, w)| flit(k + 1, type_id, w)));
        Packet { flow, flits }
    }

    /// Creates a packet of `flow` now, outside the Bernoulli process. Returns
    /// false when the NI queue is full.
    pub fn inject_now(&mut self, flow: usize) -> bool {
        let src = self.injectors[flow].spec.source;
        if self.nis[src].queue.len() >= self.cfg.ni_queue_depth {
            return false;
        }
        let p = self.make_packet(flow).enqueued_at(self.cycle);
        self.nis[src].queue.push_back(p);
        self.injected_packets += 1;
        true
    }

    /// Advances the network by one base cycle.
    pub fn step(&mut self) {
        let t = self.cycle;
        let depth = self.cfg.buffer_depth;

        for (dest, vc, flit) in std::mem::take(&mut self.flits_transit) {
            match dest {
                Dest::Router(n, p) => self.routers[n].accept(p, vc, flit),
                Dest::Ni(n) => self.receive(n, flit),
            }
        }
        for c in std::mem::take(&mut self.credits_transit) {
            match c {
                CreditTo::Router(n, p, vc) => self.routers[n].credit(p, vc),
                CreditTo::Ni(n, vc) => {
                    self.nis[n].credits[vc] += 1;
                    assert!(self.nis[n].credits[vc] <= depth, "NI {n} VC {vc}: credit overflow");
                }
            }
        }

        let mut active: Vec<Option<(usize, u64)>> = vec![None; self.links.len()];
        let topo = &self.cfg.topology;
        for n in 0..self.routers.len() {
            if !self.routers[n].fires(t) {
                continue;
            }
            let out = self.routers[n].step(t, |dst| topo.route(n, dst).expect("flows validated"));
            for s in out.sent {
                if s.port == Port::Local {
                    self.flits_transit.push((Dest::Ni(n), s.vc, s.flit));
                } else {
                    let to = topo.neighbor(n, s.port).expect("connected output");
                    let l = self.link_of[n][s.port.index()].expect("link exists");
                    active[l] = Some((s.flit.type_id, s.flit.word));
                    self.flits_transit.push((Dest::Router(to, s.port.opposite()), s.vc, s.flit));
                }
            }
            for (p, vc) in out.credits {
                self.credits_transit.push(if p == Port::Local {
                    CreditTo::Ni(n, vc)
                } else {
                    let up = topo.neighbor(n, p).expect("connected input");
                    CreditTo::Router(up, p.opposite(), vc)
                });
            }
        }

        for (l, a) in active.iter().enumerate() {
            match *a {
                Some((ty, word)) => {
                    self.observers[l].record(LinkState::Active(ty));
                    self.link_flits[l] += 1;
                    if let Some(tr) = &mut self.traces {
                        tr[l].push_active(ty, word).expect("word fits link width");
                    }
                }
                None => {
                    self.observers[l].record(LinkState::Idle);
                    if let Some(tr) = &mut self.traces {
                        tr[l].push_idle();
                    }
                }
            }
        }

        for n in 0..self.nis.len() {
            if !self.routers[n].fires(t) {
                continue;
            }
            let ni = &mut self.nis[n];
            if let Some(front) = ni.queue.front() {
                let flow = front.flow;
                let same_flow_busy = ni.vcs.iter().flatten().any(|v| v.flow == flow);
                let free = (0..ni.vcs.len()).find(|&v| ni.vcs[v].is_none() && ni.credits[v] == depth);
                if let (false, Some(v)) = (same_flow_busy, free) {
                    let p = ni.queue.pop_front().expect("front exists");
                    ni.vcs[v] = Some(NiVc {
                        flow,
                        flits: p.flits.into(),
                    });
                }
            }
            let nv = ni.vcs.len();
            let ready = (0..nv)
                .map(|k| (ni.rr + k) % nv)
                .find(|&v| ni.vcs[v].is_some() && ni.credits[v] > 0);
            if let Some(v) = ready {
                let slot = ni.vcs[v].as_mut().expect("ready VC");
                let flit = slot.flits.pop_front().expect("active VC has flits");
                if slot.flits.is_empty() {
                    ni.vcs[v] = None;
                }
                ni.credits[v] -= 1;
                ni.rr = (v + 1) % nv;
                self.injected_flits += 1;
                self.flits_transit.push((Dest::Router(n, Port::Local), v, flit));
            }
        }

        for n in 0..self.pes.len() {
            if t % self.pes[n].delay as u64 != 0 {
                continue;
            }
            for k in 0..self.pes[n].flows.len() {
                let flow = self.pes[n].flows[k];
                let packet = match self.pes[n].blocked[k].take() {
                    Some(p) => Some(p),
                    None if self.injectors[flow].fire() => Some(self.make_packet(flow)),
                    None => None,
                };
                if let Some(p) = packet {
                    if self.nis[n].queue.len() < self.cfg.ni_queue_depth {
                        self.nis[n].queue.push_back(p.enqueued_at(t));
                        self.injected_packets += 1;
                    } else {
                        self.pes[n].blocked[k] = Some(p);
                    }
                }
            }
        }

        if self.opts.check_invariants {
            self.check_invariants();
        }
        self.cycle += 1;
    }

    /// Panics unless flits and credits are conserved.
    pub fn check_invariants(&self) {
        assert_eq!(
            self.injected_flits,
            self.in_flight() + self.delivered_flits,
            "flit conservation violated in cycle {}",
            self.cycle
        );
        let depth = self.cfg.buffer_depth;
        let mut flits_to: HashMap<(Dest, usize), usize> = HashMap::new();
        for (d, vc, _) in &self.flits_transit {
            *flits_to.entry((*d, *vc)).or_default() += 1;
        }
        let mut credits_to: HashMap<CreditTo, usize> = HashMap::new();
        for c in &self.credits_transit {
            *credits_to.entry(*c).or_default() += 1;
        }
        let topo = &self.cfg.topology;
        for (n, r) in self.routers.iter().enumerate() {
            for vc in 0..self.cfg.vc_count {
                for p in &Port::ALL[1..] {
                    let Some(down) = topo.neighbor(n, *p) else { continue };
                    let q = p.opposite();
                    let total = r.credits(*p, vc)
                        + self.routers[down].occupancy(q, vc)
                        + flits_to.get(&(Dest::Router(down, q), vc)).copied().unwrap_or(0)
                        + credits_to.get(&CreditTo::Router(n, *p, vc)).copied().unwrap_or(0);
                    assert_eq!(total, depth, "credit invariant broken at {n} {p} VC {vc}");
                }
                let total = self.nis[n].credits[vc]
                    + r.occupancy(Port::Local, vc)
                    + flits_to.get(&(Dest::Router(n, Port::Local), vc)).copied().unwrap_or(0)
                    + credits_to.get(&CreditTo::Ni(n, vc)).copied().unwrap_or(0);
                assert_eq!(total, depth, "credit invariant broken at NI {n} VC {vc}");
            }
        }
    }

    pub fn finish(self) -> Result<SimResult> {
        let width = self.cfg.flit_width;
        let mut traces = self.traces.map(|t| t.into_iter().map(Some).collect::<Vec<_>>());
        let links = self
            .links
            .iter()
            .enumerate()
            .map(|(k, l)| {
                Ok(LinkResult {
                    name: l.name.clone(),
                    from: l.from,
                    to: l.to,
                    vertical: l.vertical,
                    flow: self.observers[k].finalize()?,
                    counts: self.observers[k].counts().clone(),
                    flits: self.link_flits[k],
                    trace: traces.as_mut().and_then(|t| t[k].take()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let type_streams = self
            .type_words
            .into_iter()
            .enumerate()
            .map(|(k, w)| DataStream::new(w, width, k))
            .collect::<vclink::Result<Vec<_>>>()?;
        Ok(SimResult {
            links,
            type_streams,
            flit_latencies: self.flit_latencies,
            network_latencies: self.network_latencies,
            injected_packets: self.injected_packets,
            delivered_packets: self.delivered_packets,
            injected_flits: self.injected_flits,
            delivered_flits: self.delivered_flits,
            cycles: self.cycle,
            n_types: self.cfg.n_types(),
            flit_width: width,
            clock_period: self.cfg.clock_period,
            seed: self.opts.seed,
            payload_restarts: self.injectors.iter().map(|i| i.payload().restarts()).collect(),
        })
    }
}

/// Builds the network and simulates `opts.cycles` base cycles.
pub fn run(cfg: &SimConfig, opts: SimOptions) -> Result<SimResult> {
    let mut net = Network::new(cfg, opts)?;
    for _ in 0..opts.cycles {
        net.step();
    }
    net.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_word_layout() {
        assert_eq!(head_word(16, 6, 3), 0x0603);
        assert_eq!(head_word(16, 6, 0x1ff), 0x06ff);
        assert_eq!(head_word(5, 3, 7), 0b011_11);
    }

    #[test]
    fn seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }
}
