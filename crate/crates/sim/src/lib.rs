// SPDX-License-Identifier: Apache-2.0

//! Cycle-accurate simulation of a 2D/3D mesh NoC with virtual channels.
//!
//! Every inter-router link reports, once per base cycle, whether it carried a
//! flit (and of which data type) or stayed idle. Those reports become the
//! per-link data-flow matrices consumed by [`vclink::vc_model`].

pub mod config;
mod error;
pub mod network;
pub mod reporting;
pub mod router;
pub mod topology;
pub mod traffic;

pub use config::{parse_config, parse_config_file, parse_node_types, SimConfig};
pub use error::{Error, Result};
pub use network::{run, Network, SimOptions, SimResult};
pub use topology::{route_xyz, Coord, Port, Topology};
