// SPDX-License-Identifier: Apache-2.0

//! Pattern-dependent energy estimation for network-on-chip links.
//!
//! The crate is organised around the quantities that determine the dynamic
//! energy of an `N`-bit link:
//!
//! * [`stats`]: synthetic data streams and their bit statistics (`S`, `p`,
//!   sequential switching `T`).
//! * [`energy`]: capacitance models for metal-wire (2D) and TSV (3D) links
//!   and the Frobenius-product energy evaluation.
//! * [`vc_model`]: link switching and bit probabilities when several typed
//!   streams are multiplexed over one physical link by virtual channels,
//!   driven by a recorded [`vc_model::DataFlowMatrix`].
//! * [`oracle`]: the exact bit-level reference working on explicit link
//!   traces.
//! * [`codec`]: bus-invert, Gray and correlator coding.
//! * [`io`]: stream and matrix file formats.

pub mod codec;
pub mod energy;
mod error;
pub mod io;
pub mod oracle;
pub mod stats;
pub mod vc_model;

pub use error::{Error, Result};

/// Mask with the lowest `width` bits set.
#[inline]
pub fn width_mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}
