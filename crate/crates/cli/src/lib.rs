// SPDX-License-Identifier: Apache-2.0

//! Experiment orchestration behind the `vclink` command: post-simulation
//! energy analysis, synthetic multiplexing sweeps and the case study.

pub mod analysis;
pub mod case_study;
pub mod sweep;
pub mod templates;
