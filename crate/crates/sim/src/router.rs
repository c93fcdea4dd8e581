// SPDX-License-Identifier: Apache-2.0

//! Input-buffered virtual-channel router.
//!
//! Head flits take three router cycles: route computation in the cycle they
//! arrive, VC allocation in the next, and switch/link traversal in the one
//! after. Body flits of an allocated packet leave as soon as they reach the
//! front of their VC and the downstream VC has a credit.

use std::collections::VecDeque;

use crate::topology::Port;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Flit {
    pub packet: u64,
    pub flow: usize,
    pub type_id: usize,
    pub word: u64,
    /// Position in the packet; 0 is the head.
    pub index: u32,
    pub tail: bool,
    pub src: usize,
    pub dst: usize,
    /// Cycle the packet was created by its PE.
    pub created: u64,
    /// Cycle the packet entered the source NI queue.
    pub enqueued: u64,
}

impl Flit {
    pub fn is_head(&self) -> bool {
        self.index == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arbitration {
    /// Round-robin over the ready VCs of an output, one flit each.
    Fair,
    /// Lowest ready VC index wins.
    Priority,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RouterConfig {
    pub vc_count: usize,
    pub buffer_depth: usize,
    pub arbitration: Arbitration,
    pub clock_delay: u32,
}

#[derive(Clone, Debug, Default)]
struct InputVc {
    buf: VecDeque<Flit>,
    route: Option<Port>,
    rc_cycle: u64,
    out_vc: Option<usize>,
    va_cycle: u64,
}

#[derive(Clone, Debug)]
struct OutputVc {
    credits: usize,
    owner: Option<(usize, usize)>,
    flow: Option<usize>,
}

#[derive(Clone, Debug)]
struct Output {
    vcs: Vec<OutputVc>,
    connected: bool,
    /// Ejection port: the NI consumes every flit, so credits are not tracked.
    sink: bool,
    rr: usize,
    va_rr: usize,
}

/// A flit leaving the router this cycle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sent {
    pub port: Port,
    pub vc: usize,
    pub flit: Flit,
}

#[derive(Clone, Debug, Default)]
pub struct StepOutput {
    pub sent: Vec<Sent>,
    /// Input VCs read this cycle; one credit each goes back upstream.
    pub credits: Vec<(Port, usize)>,
}

#[derive(Clone, Debug)]
pub struct Router {
    pub node: usize,
    cfg: RouterConfig,
    inputs: Vec<Vec<InputVc>>,
    outputs: Vec<Output>,
}

impl Router {
    /// `connected[p]` tells whether output port `p` leads to a neighbour.
    /// The local port is always present.
    pub fn new(node: usize, cfg: RouterConfig, connected: [bool; Port::COUNT]) -> Self {
        let outputs = Port::ALL
            .iter()
            .map(|p| Output {
                vcs: vec![
                    OutputVc {
                        credits: cfg.buffer_depth,
                        owner: None,
                        flow: None,
                    };
                    cfg.vc_count
                ],
                connected: *p == Port::Local || connected[p.index()],
                sink: *p == Port::Local,
                rr: 0,
                va_rr: 0,
            })
            .collect();
        Self {
            node,
            cfg,
            inputs: vec![vec![InputVc::default(); cfg.vc_count]; Port::COUNT],
            outputs,
        }
    }

    pub fn config(&self) -> &RouterConfig {
        &self.cfg
    }

    pub fn fires(&self, cycle: u64) -> bool {
        cycle % self.cfg.clock_delay as u64 == 0
    }

    /// Buffer write of an arriving flit.
    pub fn accept(&mut self, port: Port, vc: usize, flit: Flit) {
        let ivc = &mut self.inputs[port.index()][vc];
        assert!(
            ivc.buf.len() < self.cfg.buffer_depth,
            "router {} input {port} VC {vc}: buffer overflow",
            self.node
        );
        if let Some(last) = ivc.buf.back() {
            assert_eq!(last.packet, flit.packet, "router {}: two packets in one VC", self.node);
        }
        ivc.buf.push_back(flit);
    }

    /// Credit returned by the downstream router of `port`.
    pub fn credit(&mut self, port: Port, vc: usize) {
        let o = &mut self.outputs[port.index()].vcs[vc];
        o.credits += 1;
        assert!(
            o.credits <= self.cfg.buffer_depth,
            "router {} output {port} VC {vc}: credit overflow",
            self.node
        );
    }

    pub fn occupancy(&self, port: Port, vc: usize) -> usize {
        self.inputs[port.index()][vc].buf.len()
    }

    pub fn credits(&self, port: Port, vc: usize) -> usize {
        self.outputs[port.index()].vcs[vc].credits
    }

    pub fn buffered(&self) -> usize {
        self.inputs.iter().flatten().map(|v| v.buf.len()).sum()
    }

    fn out_vc_free(&self, port: usize, vc: usize) -> bool {
        let o = &self.outputs[port];
        let v = &o.vcs[vc];
        v.owner.is_none() && (o.sink || v.credits == self.cfg.buffer_depth)
    }

    /// One router cycle. `route(dst)` returns the output port towards `dst`.
    pub fn step(&mut self, cycle: u64, route: impl Fn(usize) -> Port) -> StepOutput {
        let nv = self.cfg.vc_count;

        // route computation
        for ivc in self.inputs.iter_mut().flatten() {
            if ivc.route.is_none() {
                if let Some(f) = ivc.buf.front() {
                    debug_assert!(f.is_head());
                    ivc.route = Some(route(f.dst));
                    ivc.rc_cycle = cycle;
                }
            }
        }

        // VC allocation, round-robin over requesting input VCs per output
        let total = Port::COUNT * nv;
        for out in 0..Port::COUNT {
            let start = self.outputs[out].va_rr;
            for k in 0..total {
                let idx = (start + k) % total;
                let (ip, iv) = (idx / nv, idx % nv);
                let ivc = &self.inputs[ip][iv];
                let requesting = ivc.route.map(Port::index) == Some(out)
                    && ivc.out_vc.is_none()
                    && ivc.rc_cycle < cycle;
                if !requesting {
                    continue;
                }
                let flow = ivc.buf.front().expect("routed VC holds a head").flow;
                assert!(self.outputs[out].connected, "router {}: route to unconnected port", self.node);
                // packets of one flow keep their order on every link
                if self.outputs[out].vcs.iter().any(|v| v.flow == Some(flow)) {
                    continue;
                }
                let Some(ov) = (0..nv).find(|&v| self.out_vc_free(out, v)) else {
                    break;
                };
                let o = &mut self.outputs[out];
                o.vcs[ov].owner = Some((ip, iv));
                o.vcs[ov].flow = Some(flow);
                o.va_rr = (idx + 1) % total;
                let ivc = &mut self.inputs[ip][iv];
                ivc.out_vc = Some(ov);
                ivc.va_cycle = cycle;
            }
        }

        // output arbitration and traversal
        let mut result = StepOutput::default();
        for out in 0..Port::COUNT {
            let ready = |router: &Self, v: usize| -> bool {
                let o = &router.outputs[out];
                let Some((ip, iv)) = o.vcs[v].owner else {
                    return false;
                };
                let ivc = &router.inputs[ip][iv];
                match ivc.buf.front() {
                    None => false,
                    Some(f) => (!f.is_head() || ivc.va_cycle < cycle) && (o.sink || o.vcs[v].credits > 0),
                }
            };
            let winner = match self.cfg.arbitration {
                Arbitration::Fair => {
                    let rr = self.outputs[out].rr;
                    (0..nv).map(|k| (rr + k) % nv).find(|&v| ready(self, v))
                }
                Arbitration::Priority => (0..nv).find(|&v| ready(self, v)),
            };
            let Some(v) = winner else { continue };
            let (ip, iv) = self.outputs[out].vcs[v].owner.expect("ready VC is owned");
            let flit = self.inputs[ip][iv].buf.pop_front().expect("ready VC has a flit");
            let o = &mut self.outputs[out];
            if !o.sink {
                o.vcs[v].credits -= 1;
            }
            o.rr = (v + 1) % nv;
            if flit.tail {
                o.vcs[v].owner = None;
                o.vcs[v].flow = None;
                let ivc = &mut self.inputs[ip][iv];
                ivc.route = None;
                ivc.out_vc = None;
            }
            result.credits.push((Port::ALL[ip], iv));
            result.sent.push(Sent {
                port: Port::ALL[out],
                vc: v,
                flit,
            });
        }
        result
    }
}
