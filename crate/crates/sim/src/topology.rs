// SPDX-License-Identifier: Apache-2.0

//! Mesh coordinates, router ports and dimension-order routing.

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Coord {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl Coord {
    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        Self { x, y, z }
    }

    pub fn step(self, port: Port) -> Self {
        let (dx, dy, dz) = port.offset();
        Self::new(self.x + dx, self.y + dy, self.z + dz)
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.x, self.y, self.z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Port {
    Local,
    XPlus,
    XMinus,
    YPlus,
    YMinus,
    ZPlus,
    ZMinus,
}

impl Port {
    pub const COUNT: usize = 7;
    pub const ALL: [Port; 7] = [
        Port::Local,
        Port::XPlus,
        Port::XMinus,
        Port::YPlus,
        Port::YMinus,
        Port::ZPlus,
        Port::ZMinus,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn opposite(self) -> Port {
        match self {
            Port::Local => Port::Local,
            Port::XPlus => Port::XMinus,
            Port::XMinus => Port::XPlus,
            Port::YPlus => Port::YMinus,
            Port::YMinus => Port::YPlus,
            Port::ZPlus => Port::ZMinus,
            Port::ZMinus => Port::ZPlus,
        }
    }

    pub fn offset(self) -> (i32, i32, i32) {
        match self {
            Port::Local => (0, 0, 0),
            Port::XPlus => (1, 0, 0),
            Port::XMinus => (-1, 0, 0),
            Port::YPlus => (0, 1, 0),
            Port::YMinus => (0, -1, 0),
            Port::ZPlus => (0, 0, 1),
            Port::ZMinus => (0, 0, -1),
        }
    }

    pub fn is_vertical(self) -> bool {
        matches!(self, Port::ZPlus | Port::ZMinus)
    }
}

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Port::Local => "local",
            Port::XPlus => "+X",
            Port::XMinus => "-X",
            Port::YPlus => "+Y",
            Port::YMinus => "-Y",
            Port::ZPlus => "+Z",
            Port::ZMinus => "-Z",
        })
    }
}

/// Dimension-order step from `current` towards `dest`: X first, then Y,
/// then Z; `Local` on arrival.
pub fn route_xyz(current: Coord, dest: Coord) -> Port {
    use std::cmp::Ordering::*;
    match (dest.x.cmp(&current.x), dest.y.cmp(&current.y), dest.z.cmp(&current.z)) {
        (Greater, _, _) => Port::XPlus,
        (Less, _, _) => Port::XMinus,
        (_, Greater, _) => Port::YPlus,
        (_, Less, _) => Port::YMinus,
        (_, _, Greater) => Port::ZPlus,
        (_, _, Less) => Port::ZMinus,
        _ => Port::Local,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Node {
    pub name: String,
    pub coord: Coord,
}

/// A set of router positions on a 3D grid. Routers at unit distance are
/// connected in both directions; positions may be left out, which gives
/// partial meshes such as a single router below a planar layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    nodes: Vec<Node>,
    by_coord: HashMap<Coord, usize>,
}

/// A unidirectional inter-router link.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LinkId {
    pub from: usize,
    pub to: usize,
    #[serde(skip)]
    pub port: Port,
    pub name: String,
    pub vertical: bool,
}

impl Topology {
    pub fn new(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Invalid("topology has no nodes".into()));
        }
        let mut by_coord = HashMap::new();
        let mut names = HashMap::new();
        for (k, n) in nodes.iter().enumerate() {
            if by_coord.insert(n.coord, k).is_some() {
                return Err(Error::Invalid(format!("two nodes at {}", n.coord)));
            }
            if names.insert(n.name.clone(), k).is_some() {
                return Err(Error::Invalid(format!("duplicate node name `{}`", n.name)));
            }
        }
        Ok(Self { nodes, by_coord })
    }

    /// Full `x × y × z` mesh; nodes are named `R1`, `R2`, ... in x-fastest
    /// order.
    pub fn mesh(x: usize, y: usize, z: usize) -> Result<Self> {
        if x == 0 || y == 0 || z == 0 {
            return Err(Error::Invalid(format!("mesh dimension is zero: {x}x{y}x{z}")));
        }
        let mut nodes = Vec::with_capacity(x * y * z);
        for k in 0..z {
            for j in 0..y {
                for i in 0..x {
                    nodes.push(Node {
                        name: format!("R{}", nodes.len() + 1),
                        coord: Coord::new(i as i32, j as i32, k as i32),
                    });
                }
            }
        }
        Self::new(nodes)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> &Node {
        &self.nodes[k]
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn at(&self, c: Coord) -> Option<usize> {
        self.by_coord.get(&c).copied()
    }

    pub fn neighbor(&self, node: usize, port: Port) -> Option<usize> {
        if port == Port::Local {
            return None;
        }
        self.at(self.nodes[node].coord.step(port))
    }

    /// All unidirectional links, ordered by source node then port.
    pub fn links(&self) -> Vec<LinkId> {
        let mut out = Vec::new();
        for from in 0..self.nodes.len() {
            for port in &Port::ALL[1..] {
                if let Some(to) = self.neighbor(from, *port) {
                    out.push(LinkId {
                        from,
                        to,
                        port: *port,
                        name: format!("{}-{}", self.nodes[from].name, self.nodes[to].name),
                        vertical: port.is_vertical(),
                    });
                }
            }
        }
        out
    }

    /// Next output port at `current` for a packet to `dest`, failing when the
    /// dimension-order step leaves the topology.
    pub fn route(&self, current: usize, dest: usize) -> Result<Port> {
        let port = route_xyz(self.nodes[current].coord, self.nodes[dest].coord);
        if port != Port::Local && self.neighbor(current, port).is_none() {
            return Err(Error::Unreachable {
                from: self.nodes[current].name.clone(),
                to: self.nodes[dest].name.clone(),
                at: self.nodes[current].name.clone(),
                port: port.to_string(),
            });
        }
        Ok(port)
    }

    /// Routers visited from `src` to `dst`, both included.
    pub fn path(&self, src: usize, dst: usize) -> Result<Vec<usize>> {
        let mut path = vec![src];
        let mut at = src;
        while at != dst {
            let port = self.route(at, dst).map_err(|e| match e {
                Error::Unreachable { at, port, .. } => Error::Unreachable {
                    from: self.nodes[src].name.clone(),
                    to: self.nodes[dst].name.clone(),
                    at,
                    port,
                },
                e => e,
            })?;
            at = self.neighbor(at, port).expect("checked by route");
            path.push(at);
        }
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_order() {
        assert_eq!(route_xyz(Coord::new(1, 0, 0), Coord::new(0, 1, 1)), Port::XMinus);
        assert_eq!(route_xyz(Coord::new(0, 1, 1), Coord::new(0, 1, 0)), Port::ZMinus);
        assert_eq!(route_xyz(Coord::new(0, 0, 0), Coord::new(0, 2, 3)), Port::YPlus);
        assert_eq!(route_xyz(Coord::new(2, 2, 2), Coord::new(2, 2, 2)), Port::Local);
    }

    #[test]
    fn mesh_link_count() {
        let t = Topology::mesh(2, 2, 1).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t.links().len(), 8);
        assert_eq!(Topology::mesh(3, 3, 2).unwrap().links().len(), 2 * (12 + 12) + 2 * 9);
        assert!(Topology::mesh(0, 2, 1).is_err());
    }

    #[test]
    fn partial_mesh_unreachable() {
        let t = Topology::new(vec![
            Node { name: "A".into(), coord: Coord::new(0, 0, 0) },
            Node { name: "B".into(), coord: Coord::new(1, 0, 0) },
            Node { name: "C".into(), coord: Coord::new(1, 0, 1) },
        ])
        .unwrap();
        assert_eq!(t.path(0, 2).unwrap(), vec![0, 1, 2]);
        assert!(matches!(t.path(2, 0), Err(Error::Unreachable { .. })));
    }

    #[test]
    fn duplicates_rejected() {
        let n = |name: &str, x| Node { name: name.into(), coord: Coord::new(x, 0, 0) };
        assert!(Topology::new(vec![n("A", 0), n("A", 1)]).is_err());
        assert!(Topology::new(vec![n("A", 0), n("B", 0)]).is_err());
    }
    proptest::proptest! {
        #[test]
        fn mesh_paths_are_minimal(x in 1usize..4, y in 1usize..4, z in 1usize..3, a in 0usize..36, b in 0usize..36) {
            let t = Topology::mesh(x, y, z).unwrap();
            let (a, b) = (a % t.len(), b % t.len());
            let (ca, cb) = (t.node(a).coord, t.node(b).coord);
            let hops = (ca.x - cb.x).abs() + (ca.y - cb.y).abs() + (ca.z - cb.z).abs();
            let path = t.path(a, b).unwrap();
            proptest::prop_assert_eq!(path.len() as i32, hops + 1);
            proptest::prop_assert_eq!(path[0], a);
            proptest::prop_assert_eq!(*path.last().unwrap(), b);
        }
    }
}
