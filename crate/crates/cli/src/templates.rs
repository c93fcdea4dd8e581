// SPDX-License-Identifier: Apache-2.0

//! Stand-in capacitance models for links whose parasitics are not supplied.
//!
//! The values are not extracted from any technology. They describe a
//! coupling-dominated link: each line couples to a direct neighbour as
//! strongly as to ground, so its total coupling capacitance is at least
//! twice its ground capacitance. TSVs lose about 10 % of their capacitance
//! per unit of bit probability, the depletion behaviour of a p-doped
//! substrate.

use std::path::Path;

use serde::{Deserialize, Serialize};
use vclink::energy::{load_capacitance_model, template_2d_bus, tsv_array, LinkCapacitance, ModelKind};

/// Parameters of the built-in templates, in aF.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateParams {
    pub wire_ground: f64,
    pub wire_couple: f64,
    pub wire_range: usize,
    pub tsv_c0_neighbor: f64,
    pub tsv_dc_neighbor: f64,
    pub tsv_c0_ground: f64,
    pub tsv_dc_ground: f64,
}

impl TemplateParams {
    pub const COUPLING_DOMINATED: Self = Self {
        wire_ground: 100.0,
        wire_couple: 100.0,
        wire_range: 1,
        tsv_c0_neighbor: 60.0,
        tsv_dc_neighbor: -6.0,
        tsv_c0_ground: 60.0,
        tsv_dc_ground: -6.0,
    };

    pub fn planar(&self, width: usize) -> vclink::Result<LinkCapacitance> {
        Ok(LinkCapacitance::Planar(template_2d_bus(
            width,
            self.wire_ground,
            self.wire_couple,
            self.wire_range,
        )?))
    }

    /// TSV array with `⌊√width⌋` columns, so that an extra code line of an
    /// `N+1`-wide link starts a new row of the `N`-wide square array.
    pub fn tsv(&self, width: usize) -> vclink::Result<LinkCapacitance> {
        let cols = (width as f64).sqrt().floor().max(1.0) as usize;
        Ok(LinkCapacitance::Tsv(tsv_array(
            width,
            cols,
            self.tsv_c0_neighbor,
            self.tsv_dc_neighbor,
            self.tsv_c0_ground,
            self.tsv_dc_ground,
        )?))
    }
}

impl Default for TemplateParams {
    fn default() -> Self {
        Self::COUPLING_DOMINATED
    }
}

/// Capacitance of one link class: a fixed model or a template that adapts to
/// the coded link width.
#[derive(Clone, Debug, PartialEq)]
pub enum CapSource {
    Template(TemplateParams),
    Model(LinkCapacitance),
}

impl CapSource {
    /// `template` selects the built-in template, anything else is a model
    /// file (for 3D models the stem or either file of the pair).
    pub fn parse(arg: &str, kind: ModelKind) -> vclink::Result<Self> {
        if arg == "template" {
            Ok(Self::Template(TemplateParams::default()))
        } else {
            Ok(Self::Model(load_capacitance_model(Path::new(arg), kind)?))
        }
    }

    pub fn resolve(&self, width: usize, vertical: bool) -> vclink::Result<LinkCapacitance> {
        match self {
            Self::Template(t) if vertical => t.tsv(width),
            Self::Template(t) => t.planar(width),
            Self::Model(m) if m.width() == width => Ok(m.clone()),
            Self::Model(m) => Err(vclink::Error::WidthMismatch {
                expected: width,
                got: m.width(),
            }),
        }
    }
}

/// Capacitances for planar and vertical links.
#[derive(Clone, Debug, PartialEq)]
pub struct Capacitances {
    pub planar: CapSource,
    pub vertical: CapSource,
}

impl Default for Capacitances {
    fn default() -> Self {
        Self {
            planar: CapSource::Template(TemplateParams::default()),
            vertical: CapSource::Template(TemplateParams::default()),
        }
    }
}

impl Capacitances {
    pub fn for_link(&self, width: usize, vertical: bool) -> vclink::Result<LinkCapacitance> {
        if vertical {
            self.vertical.resolve(width, true)
        } else {
            self.planar.resolve(width, false)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates_follow_width() {
        let t = TemplateParams::default();
        assert_eq!(t.planar(17).unwrap().width(), 17);
        let LinkCapacitance::Tsv(c) = t.tsv(17).unwrap() else { panic!() };
        // line 16 sits below line 12 of the 4x4 array
        assert_eq!(c.c_t0()[(16, 12)], t.tsv_c0_neighbor);
        assert_eq!(c.c_t0()[(16, 13)], t.tsv_c0_neighbor * std::f64::consts::FRAC_1_SQRT_2);
        assert_eq!(c.c_t0()[(16, 15)], 0.0);
        assert!(t.tsv(16).unwrap().is_3d());
    }

    #[test]
    fn model_width_must_match() {
        let m = TemplateParams::default().planar(16).unwrap();
        let src = CapSource::Model(m);
        assert!(src.resolve(16, false).is_ok());
        assert!(src.resolve(17, false).is_err());
    }
}
