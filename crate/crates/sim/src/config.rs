// SPDX-License-Identifier: Apache-2.0

//! XML configuration. See `docs/config-schema.md` for the element reference.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use roxmltree::{Document, Node as XmlNode};
use vclink::stats::Distribution;

use crate::router::{Arbitration, RouterConfig};
use crate::topology::{Coord, Node, Topology};
use crate::traffic::{FileFormat, InjectionSpec, PayloadSpec, RateUnit, StreamParams};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeModel {
    RouterVc,
    ProcessingElementVc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Routing {
    Xyz,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    RoundRobin,
}

/// One `<nodeType>` entry.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeType {
    pub id: u32,
    pub model: NodeModel,
    pub routing: Routing,
    pub selection: Selection,
    pub arbitration: Arbitration,
    pub clock_delay: u32,
}

/// Node types of the router and the PE at a topology node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Placement {
    pub router_type: u32,
    pub pe_type: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub node_types: Vec<NodeType>,
    pub topology: Topology,
    pub placements: Vec<Placement>,
    pub flit_width: u32,
    pub buffer_depth: usize,
    pub vc_count: usize,
    pub flits_per_packet: usize,
    /// Packets the NI can queue before its PE blocks.
    pub ni_queue_depth: usize,
    /// Seconds per base cycle.
    pub clock_period: f64,
    pub cycles: u64,
    pub seed: u64,
    pub traffic: Vec<InjectionSpec>,
}

impl SimConfig {
    /// Defaults: a fair 1-cycle router type (id 0) and a 2-cycle PE type
    /// (id 1) on every node, 16-bit flits, 4 VCs of depth 4, 32-flit packets,
    /// 1 ns base cycle, no traffic.
    pub fn new(topology: Topology) -> Self {
        let placements = vec![
            Placement {
                router_type: 0,
                pe_type: 1,
            };
            topology.len()
        ];
        Self {
            node_types: vec![
                NodeType {
                    id: 0,
                    model: NodeModel::RouterVc,
                    routing: Routing::Xyz,
                    selection: Selection::RoundRobin,
                    arbitration: Arbitration::Fair,
                    clock_delay: 1,
                },
                NodeType {
                    id: 1,
                    model: NodeModel::ProcessingElementVc,
                    routing: Routing::Xyz,
                    selection: Selection::RoundRobin,
                    arbitration: Arbitration::Fair,
                    clock_delay: 2,
                },
            ],
            topology,
            placements,
            flit_width: 16,
            buffer_depth: 4,
            vc_count: 4,
            flits_per_packet: 32,
            ni_queue_depth: 4,
            clock_period: 1e-9,
            cycles: 10_000,
            seed: 1,
            traffic: Vec::new(),
        }
    }

    pub fn node_type(&self, id: u32) -> Option<&NodeType> {
        self.node_types.iter().find(|t| t.id == id)
    }

    pub fn router_config(&self, node: usize) -> RouterConfig {
        let t = self
            .node_type(self.placements[node].router_type)
            .expect("validated router type");
        RouterConfig {
            vc_count: self.vc_count,
            buffer_depth: self.buffer_depth,
            arbitration: t.arbitration,
            clock_delay: t.clock_delay,
        }
    }

    pub fn pe_delay(&self, node: usize) -> u32 {
        self.node_type(self.placements[node].pe_type)
            .expect("validated PE type")
            .clock_delay
    }

    /// Payload types plus the head type, which is the last index.
    pub fn n_types(&self) -> usize {
        self.traffic.len() + 1
    }

    pub fn head_type(&self) -> usize {
        self.traffic.len()
    }

    /// Adds a flow; its data type is the next free index.
    pub fn add_flow(&mut self, source: usize, destination: usize, rate: f64, unit: RateUnit, payload: PayloadSpec) {
        let type_id = self.traffic.len();
        self.traffic.push(InjectionSpec {
            source,
            destination,
            type_id,
            payload,
            rate,
            unit,
            packet_length: self.flits_per_packet,
        });
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.vc_count == 0 || self.buffer_depth == 0 {
            return bad("vcCount and bufferDepth must be at least 1".into());
        }
        if self.flits_per_packet < 2 {
            return bad("a packet needs a head and at least one body flit".into());
        }
        if !(2..=63).contains(&self.flit_width) {
            return bad(format!("flit width {} outside 2..=63", self.flit_width));
        }
        if self.ni_queue_depth == 0 {
            return bad("niQueueDepth must be at least 1".into());
        }
        if !(self.clock_period > 0.0) {
            return bad("clock period must be positive".into());
        }
        if self.placements.len() != self.topology.len() {
            return bad("one placement per node required".into());
        }
        for (k, p) in self.placements.iter().enumerate() {
            let name = &self.topology.node(k).name;
            match self.node_type(p.router_type) {
                Some(t) if t.model == NodeModel::RouterVc => {}
                _ => return bad(format!("node {name}: router type {} is not a RouterVC", p.router_type)),
            }
            match self.node_type(p.pe_type) {
                Some(t) if t.model == NodeModel::ProcessingElementVc => {}
                _ => return bad(format!("node {name}: PE type {} is not a ProcessingElementVC", p.pe_type)),
            }
        }
        for t in &self.node_types {
            if t.clock_delay == 0 {
                return bad(format!("nodeType {}: clockDelay must be at least 1", t.id));
            }
        }
        for (k, f) in self.traffic.iter().enumerate() {
            if f.type_id != k || f.packet_length != self.flits_per_packet {
                return bad(format!("flow {k}: inconsistent type id or packet length"));
            }
            f.validate(&self.topology, self.flit_width)?;
        }
        Ok(())
    }
}

struct Ctx<'a> {
    doc: &'a Document<'a>,
    base: Option<&'a Path>,
}

impl Ctx<'_> {
    fn err(&self, node: XmlNode, msg: impl Into<String>) -> Error {
        let pos = self.doc.text_pos_at(node.range().start);
        Error::Config {
            line: pos.row,
            col: pos.col,
            msg: msg.into(),
        }
    }

    fn children<'b>(&self, node: XmlNode<'b, 'b>) -> impl Iterator<Item = XmlNode<'b, 'b>> {
        node.children().filter(|c| c.is_element())
    }

    fn check_attrs(&self, node: XmlNode, allowed: &[&str]) -> Result<()> {
        for a in node.attributes() {
            if !allowed.contains(&a.name()) {
                return Err(self.err(
                    node,
                    format!("unknown attribute `{}` on <{}>", a.name(), node.tag_name().name()),
                ));
            }
        }
        Ok(())
    }

    fn attr<T: FromStr>(&self, node: XmlNode, name: &str) -> Result<Option<T>> {
        match node.attribute(name) {
            None => Ok(None),
            Some(v) => v.trim().parse().map(Some).map_err(|_| {
                self.err(
                    node,
                    format!("bad value `{v}` for `{name}` on <{}>", node.tag_name().name()),
                )
            }),
        }
    }

    fn req<T: FromStr>(&self, node: XmlNode, name: &str) -> Result<T> {
        self.attr(node, name)?.ok_or_else(|| {
            self.err(
                node,
                format!("<{}> requires attribute `{name}`", node.tag_name().name()),
            )
        })
    }

    /// `<tag value="..."/>`
    fn value<T: FromStr>(&self, node: XmlNode) -> Result<T> {
        self.check_attrs(node, &["value"])?;
        if let Some(c) = self.children(node).next() {
            return Err(self.err(c, format!("unexpected element <{}>", c.tag_name().name())));
        }
        self.req(node, "value")
    }
}

/// Parses a `<nodeTypes>` element or a document whose root is one.
pub fn parse_node_types(xml: &str) -> Result<Vec<NodeType>> {
    let doc = Document::parse(xml)?;
    let ctx = Ctx { doc: &doc, base: None };
    let root = doc.root_element();
    if root.tag_name().name() != "nodeTypes" {
        return Err(ctx.err(root, "expected <nodeTypes>"));
    }
    node_types(&ctx, root)
}

fn node_types(ctx: &Ctx, el: XmlNode) -> Result<Vec<NodeType>> {
    ctx.check_attrs(el, &[])?;
    let mut out: Vec<NodeType> = Vec::new();
    for t in ctx.children(el) {
        if t.tag_name().name() != "nodeType" {
            return Err(ctx.err(t, format!("unexpected element <{}> in <nodeTypes>", t.tag_name().name())));
        }
        ctx.check_attrs(t, &["id"])?;
        let id: u32 = ctx.req(t, "id")?;
        if out.iter().any(|o| o.id == id) {
            return Err(ctx.err(t, format!("duplicate nodeType id {id}")));
        }
        let mut model = None;
        let mut routing = Routing::Xyz;
        let mut selection = Selection::RoundRobin;
        let mut arbitration = Arbitration::Fair;
        let mut clock_delay = 1;
        for c in ctx.children(t) {
            match c.tag_name().name() {
                "model" => {
                    model = Some(match ctx.value::<String>(c)?.as_str() {
                        "RouterVC" => NodeModel::RouterVc,
                        "ProcessingElementVC" => NodeModel::ProcessingElementVc,
                        m => return Err(ctx.err(c, format!("nodeType {id}: unknown model `{m}`"))),
                    })
                }
                "routing" => {
                    routing = match ctx.value::<String>(c)?.as_str() {
                        "XYZ" => Routing::Xyz,
                        r => return Err(ctx.err(c, format!("nodeType {id}: unknown routing `{r}`"))),
                    }
                }
                "selection" => {
                    selection = match ctx.value::<String>(c)?.as_str() {
                        "RoundRobin" => Selection::RoundRobin,
                        s => return Err(ctx.err(c, format!("nodeType {id}: unknown selection `{s}`"))),
                    }
                }
                "arbitration" => {
                    arbitration = match ctx.value::<String>(c)?.as_str() {
                        "fair" => Arbitration::Fair,
                        "priority" => Arbitration::Priority,
                        a => return Err(ctx.err(c, format!("nodeType {id}: unknown arbitration `{a}`"))),
                    }
                }
                "clockDelay" => {
                    clock_delay = ctx.value(c)?;
                    if clock_delay == 0 {
                        return Err(ctx.err(c, format!("nodeType {id}: clockDelay must be at least 1")));
                    }
                }
                other => return Err(ctx.err(c, format!("nodeType {id}: unknown element <{other}>"))),
            }
        }
        let model = model.ok_or_else(|| ctx.err(t, format!("nodeType {id}: missing <model>")))?;
        out.push(NodeType {
            id,
            model,
            routing,
            selection,
            arbitration,
            clock_delay,
        });
    }
    Ok(out)
}

fn topology(ctx: &Ctx, el: XmlNode, types: &[NodeType]) -> Result<(Topology, Vec<Placement>)> {
    ctx.check_attrs(el, &["routerType", "peType"])?;
    let first = |m: NodeModel| types.iter().find(|t| t.model == m).map(|t| t.id);
    let default = (
        ctx.attr(el, "routerType")?.or(first(NodeModel::RouterVc)),
        ctx.attr(el, "peType")?.or(first(NodeModel::ProcessingElementVc)),
    );
    let placement = |node: XmlNode| -> Result<Placement> {
        let r = ctx.attr(node, "routerType")?.or(default.0);
        let p = ctx.attr(node, "peType")?.or(default.1);
        match (r, p) {
            (Some(router_type), Some(pe_type)) => Ok(Placement { router_type, pe_type }),
            _ => Err(ctx.err(node, "no router or PE node type available")),
        }
    };
    let mut nodes = Vec::new();
    let mut placements = Vec::new();
    let mut mesh = None;
    for c in ctx.children(el) {
        match c.tag_name().name() {
            "mesh" => {
                ctx.check_attrs(c, &["x", "y", "z", "routerType", "peType"])?;
                let t = Topology::mesh(ctx.req(c, "x")?, ctx.req(c, "y")?, ctx.attr(c, "z")?.unwrap_or(1))
                    .map_err(|e| ctx.err(c, e.to_string()))?;
                placements = vec![placement(c)?; t.len()];
                mesh = Some((c, t));
            }
            "node" => {
                ctx.check_attrs(c, &["name", "x", "y", "z", "routerType", "peType"])?;
                nodes.push(Node {
                    name: ctx.req(c, "name")?,
                    coord: Coord::new(ctx.req(c, "x")?, ctx.req(c, "y")?, ctx.attr(c, "z")?.unwrap_or(0)),
                });
                placements.push(placement(c)?);
            }
            other => return Err(ctx.err(c, format!("unexpected element <{other}> in <topology>"))),
        }
    }
    match mesh {
        Some((_, t)) if nodes.is_empty() => Ok((t, placements)),
        Some((c2, _)) => Err(ctx.err(c2, "use either <mesh> or <node> entries, not both")),
        None => {
            let t = Topology::new(nodes).map_err(|e| ctx.err(el, e.to_string()))?;
            Ok((t, placements))
        }
    }
}

fn payload(ctx: &Ctx, el: XmlNode) -> Result<PayloadSpec> {
    match el.tag_name().name() {
        "stream" => {
            ctx.check_attrs(el, &["distribution", "width", "sigma", "rho", "seed"])?;
            let distribution: Distribution = ctx.req::<String>(el, "distribution")?.parse().map_err(|e: vclink::Error| ctx.err(el, e.to_string()))?;
            Ok(PayloadSpec::Stream(StreamParams {
                distribution,
                width: ctx.req(el, "width")?,
                sigma: ctx.attr(el, "sigma")?.unwrap_or(1.0),
                rho: ctx.attr(el, "rho")?.unwrap_or(0.0),
                seed: ctx.attr(el, "seed")?,
            }))
        }
        "packed" => {
            ctx.check_attrs(el, &[])?;
            let parts = ctx
                .children(el)
                .map(|c| payload(ctx, c))
                .collect::<Result<Vec<_>>>()?;
            let [hi, lo]: [PayloadSpec; 2] = parts
                .try_into()
                .map_err(|_| ctx.err(el, "<packed> needs exactly two payload elements (high, low)"))?;
            Ok(PayloadSpec::Packed {
                hi: Box::new(hi),
                lo: Box::new(lo),
            })
        }
        "file" => {
            ctx.check_attrs(el, &["path", "format"])?;
            let path: PathBuf = ctx.req::<String>(el, "path")?.into();
            let path = match ctx.base {
                Some(b) if path.is_relative() => b.join(path),
                _ => path,
            };
            let format = match ctx.attr::<String>(el, "format")?.as_deref() {
                Some("pgm") | None => FileFormat::Pgm,
                Some("raw") => FileFormat::Raw,
                Some("stream") => FileFormat::Stream,
                Some(f) => return Err(ctx.err(el, format!("unknown file format `{f}`"))),
            };
            Ok(PayloadSpec::File { path, format })
        }
        other => Err(ctx.err(el, format!("unknown payload element <{other}>"))),
    }
}

fn rate_unit(ctx: &Ctx, el: XmlNode, default: RateUnit) -> Result<RateUnit> {
    match ctx.attr::<String>(el, "unit")?.as_deref() {
        None => Ok(default),
        Some("packets") => Ok(RateUnit::Packets),
        Some("flits") => Ok(RateUnit::Flits),
        Some(u) => Err(ctx.err(el, format!("unknown rate unit `{u}`"))),
    }
}

fn traffic(ctx: &Ctx, el: XmlNode, cfg: &mut SimConfig) -> Result<()> {
    ctx.check_attrs(el, &["unit"])?;
    let default_unit = rate_unit(ctx, el, RateUnit::Packets)?;
    for f in ctx.children(el) {
        if f.tag_name().name() != "flow" {
            return Err(ctx.err(f, format!("unexpected element <{}> in <traffic>", f.tag_name().name())));
        }
        ctx.check_attrs(f, &["source", "destination", "rate", "unit"])?;
        let node = |attr: &str| -> Result<usize> {
            let name: String = ctx.req(f, attr)?;
            cfg.topology
                .find(&name)
                .ok_or_else(|| ctx.err(f, format!("unknown node `{name}`")))
        };
        let (src, dst) = (node("source")?, node("destination")?);
        let rate: f64 = ctx.req(f, "rate")?;
        let unit = rate_unit(ctx, f, default_unit)?;
        let mut kids = ctx.children(f);
        let p = kids.next().ok_or_else(|| ctx.err(f, "<flow> needs a payload element"))?;
        if let Some(extra) = kids.next() {
            return Err(ctx.err(extra, "<flow> takes a single payload element"));
        }
        cfg.add_flow(src, dst, rate, unit, payload(ctx, p)?);
        cfg.traffic
            .last()
            .expect("just added")
            .validate(&cfg.topology, cfg.flit_width)
            .map_err(|e| ctx.err(f, e.to_string()))?;
    }
    Ok(())
}

/// Parses a simulator configuration. Relative payload file paths are
/// resolved against `base_dir`.
pub fn parse_config(xml: &str, base_dir: Option<&Path>) -> Result<SimConfig> {
    let doc = Document::parse(xml)?;
    let ctx = Ctx { doc: &doc, base: base_dir };
    let root = doc.root_element();
    if root.tag_name().name() != "configuration" {
        return Err(ctx.err(root, format!("expected <configuration>, found <{}>", root.tag_name().name())));
    }
    ctx.check_attrs(root, &[])?;
    let find = |name: &str| ctx.children(root).find(|c| c.tag_name().name() == name);
    let types = match find("nodeTypes") {
        Some(el) => node_types(&ctx, el)?,
        None => return Err(ctx.err(root, "missing <nodeTypes>")),
    };
    let topo_el = find("topology").ok_or_else(|| ctx.err(root, "missing <topology>"))?;
    let (topo, placements) = topology(&ctx, topo_el, &types)?;
    let mut cfg = SimConfig::new(topo);
    cfg.node_types = types;
    cfg.placements = placements;
    let mut traffic_el = None;
    for c in ctx.children(root) {
        match c.tag_name().name() {
            "nodeTypes" | "topology" => {}
            "flitWidth" => cfg.flit_width = ctx.value(c)?,
            "bufferDepth" => cfg.buffer_depth = ctx.value(c)?,
            "vcCount" => cfg.vc_count = ctx.value(c)?,
            "flitsPerPacket" => cfg.flits_per_packet = ctx.value(c)?,
            "niQueueDepth" => cfg.ni_queue_depth = ctx.value(c)?,
            "clockPeriod" => cfg.clock_period = ctx.value(c)?,
            "cycles" => cfg.cycles = ctx.value(c)?,
            "seed" => cfg.seed = ctx.value(c)?,
            "traffic" => traffic_el = Some(c),
            other => return Err(ctx.err(c, format!("unknown element <{other}>"))),
        }
    }
    if let Some(t) = traffic_el {
        traffic(&ctx, t, &mut cfg)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config_file(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::File {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text, path.parent())
}

#[cfg(test)]
mod tests {
    use super::*;

    const LISTING: &str = r#"<nodeTypes>
	<nodeType id="0">
		<model value="RouterVC"/>
		<routing value="XYZ"/>
		<selection value="RoundRobin"/>
		<arbitration value="fair"/>
		<clockDelay value="1"/>
	</nodeType>
	<nodeType id="1">
		<model value="ProcessingElementVC"/>
		<clockDelay value="2"/>
	</nodeType>
</nodeTypes>"#;

    fn wrap(body: &str) -> String {
        format!("<configuration>{LISTING}<topology><mesh x=\"2\" y=\"2\"/></topology>{body}</configuration>")
    }

    #[test]
    fn node_types_listing() {
        let t = parse_node_types(LISTING).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].model, NodeModel::RouterVc);
        assert_eq!(t[0].arbitration, Arbitration::Fair);
        assert_eq!(t[0].clock_delay, 1);
        assert_eq!(t[1].model, NodeModel::ProcessingElementVc);
        assert_eq!(t[1].clock_delay, 2);
    }

    #[test]
    fn missing_model_names_id() {
        let err = parse_node_types(r#"<nodeTypes><nodeType id="7"><clockDelay value="1"/></nodeType></nodeTypes>"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("nodeType 7") && err.contains("model"), "{err}");
    }

    #[test]
    fn priority_arbitration() {
        let xml = LISTING.replace("fair", "priority");
        assert_eq!(parse_node_types(&xml).unwrap()[0].arbitration, Arbitration::Priority);
        assert!(parse_node_types(&LISTING.replace("fair", "lottery")).is_err());
        assert!(parse_node_types(&LISTING.replace("XYZ", "westfirst")).is_err());
    }

    #[test]
    fn unknown_element_has_location() {
        let err = parse_config(&wrap("\n<bogus/>"), None).unwrap_err();
        match err {
            Error::Config { line, msg, .. } => {
                assert!(line >= 2);
                assert!(msg.contains("bogus"));
            }
            e => panic!("{e}"),
        }
        assert!(parse_config(&wrap(r#"<vcCount value="2" extra="1"/>"#), None).is_err());
    }

    #[test]
    fn full_config() {
        let cfg = parse_config(
            &wrap(
                r#"<flitWidth value="16"/><vcCount value="2"/><bufferDepth value="3"/>
                <traffic unit="flits">
                  <flow source="R1" destination="R4" rate="0.2">
                    <stream distribution="gaussian" width="16" sigma="256" rho="0.99" seed="3"/>
                  </flow>
                  <flow source="R2" destination="R3" rate="0.1" unit="packets">
                    <packed><stream distribution="gaussian" width="8" sigma="40" rho="0.9"/><stream distribution="uniform" width="8"/></packed>
                  </flow>
                </traffic>"#,
            ),
            None,
        )
        .unwrap();
        assert_eq!(cfg.vc_count, 2);
        assert_eq!(cfg.buffer_depth, 3);
        assert_eq!(cfg.n_types(), 3);
        assert_eq!(cfg.traffic[0].unit, RateUnit::Flits);
        assert_eq!(cfg.traffic[1].unit, RateUnit::Packets);
        assert_eq!(cfg.traffic[1].type_id, 1);
        assert_eq!(cfg.pe_delay(0), 2);
    }

    #[test]
    fn traffic_validation() {
        let flow = |body: &str| wrap(&format!("<traffic>{body}</traffic>"));
        let s = r#"<stream distribution="uniform" width="16"/>"#;
        assert!(parse_config(&flow(&format!(r#"<flow source="R1" destination="R9" rate="0.1">{s}</flow>"#)), None).is_err());
        assert!(parse_config(&flow(&format!(r#"<flow source="R1" destination="R2" rate="1.5">{s}</flow>"#)), None).is_err());
        let narrow = r#"<stream distribution="uniform" width="8"/>"#;
        assert!(parse_config(&flow(&format!(r#"<flow source="R1" destination="R2" rate="0.1">{narrow}</flow>"#)), None).is_err());
        let empty = parse_config(&flow(""), None).unwrap();
        assert!(empty.traffic.is_empty());
    }
}
