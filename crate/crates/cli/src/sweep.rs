// SPDX-License-Identifier: Apache-2.0

//! Synthetic multiplexing experiments: estimation accuracy and energy or
//! coding gain over the multiplexing probability.

use anyhow::{Context, Result};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vclink::codec::{coding_gain, Codec, CodecKind};
use vclink::energy::{LinkCapacitance, TechnologyParams};
use vclink::oracle::{exact_energy, exact_switching, LinkCycle, LinkTrace};
use vclink::stats::{generate_stream, multiplex_streams, DataStream, Distribution, Multiplexed, StreamSpec};
use vclink::vc_model::{
    link_energy_report, link_switching, DataFlowMatrix, IdleWeighting, LinkTypeStats, PayloadAccounting,
};

use crate::templates::TemplateParams;

/// Runs `f` on a pool of `jobs` threads (0 means one per core).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("cannot start worker threads")?;
    Ok(pool.install(f))
}

/// Data-flow matrix of an always-active link carrying `types` in order.
pub fn flow_of_types(types: impl IntoIterator<Item = usize>, n_types: usize) -> Result<DataFlowMatrix> {
    let mut counts = DMatrix::<u64>::zeros(2 * n_types, 2 * n_types);
    let mut prev = None;
    for t in types {
        if let Some(p) = prev {
            counts[(p, t)] += 1;
        }
        prev = Some(t);
    }
    Ok(DataFlowMatrix::from_counts(&counts)?)
}

/// Trace of an always-active link.
pub fn trace_of(m: &Multiplexed) -> Result<LinkTrace> {
    let cycles = m
        .type_trace()
        .zip(m.stream.words())
        .map(|(type_id, &word)| LinkCycle::Active { type_id, word })
        .collect();
    Ok(LinkTrace::from_cycles(m.stream.width(), cycles)?)
}

/// Estimation error of one multiplexed trace, in percentage points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchingError {
    pub rmse_pp: f64,
    pub max_abs_pp: f64,
}

/// Model versus exact link switching for `specs` multiplexed into `length`
/// words. The model sees the statistics of the words each source actually
/// contributed.
pub fn switching_error(specs: &[StreamSpec], mux_prob: f64, length: usize, seed: u64) -> Result<SwitchingError> {
    let streams = specs
        .iter()
        .enumerate()
        .map(|(k, s)| generate_stream(s, k))
        .collect::<vclink::Result<Vec<_>>>()?;
    let mux = multiplex_streams(&streams, mux_prob, length, seed)?;
    let m = flow_of_types(mux.type_trace(), streams.len())?;
    let stats = LinkTypeStats::from_streams(&mux.consumed)?;
    let model = link_switching(&stats, &m)?;
    let exact = exact_switching(&trace_of(&mux)?)?;
    let diff = model.matrix() - exact.t.matrix();
    let n = diff.len() as f64;
    Ok(SwitchingError {
        rmse_pp: (diff.norm_squared() / n).sqrt() * 100.0,
        max_abs_pp: diff.amax() * 100.0,
    })
}

/// A random stream as drawn by the accuracy sweep: distribution uniform over
/// the three kinds, σ log-uniform over the admissible range, ρ uniform.
pub fn random_spec(rng: &mut impl Rng, width: u32, length: usize) -> StreamSpec {
    let distribution = [Distribution::Uniform, Distribution::Gaussian, Distribution::LogNormal][rng.random_range(0..3)];
    let (lo, hi) = StreamSpec::sigma_range(width);
    let sigma = (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp().clamp(lo, hi);
    StreamSpec {
        distribution,
        width,
        length,
        sigma,
        rho: rng.random::<f64>(),
        seed: rng.random(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracySweep {
    pub streams: Vec<usize>,
    pub mux: Vec<f64>,
    pub widths: Vec<u32>,
    pub runs: usize,
    pub length: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub streams: usize,
    pub mux_prob: f64,
    pub width: u32,
    pub runs: usize,
    /// Root mean square error over all runs and matrix entries.
    pub rmse_pp: f64,
    /// Largest absolute entry error over all runs.
    pub max_abs_pp: f64,
}

/// Every (stream count, mux probability, width) cell with `runs` random
/// trials each. Trials are seeded from the cell and run index, so results do
/// not depend on the thread count.
pub fn accuracy_sweep(cfg: &AccuracySweep) -> Result<Vec<AccuracyRow>> {
    let mut cells = Vec::new();
    for &k in &cfg.streams {
        for &mux in &cfg.mux {
            for &w in &cfg.widths {
                cells.push((k, mux, w));
            }
        }
    }
    cells
        .par_iter()
        .enumerate()
        .map(|(c, &(k, mux, w))| {
            let errors = (0..cfg.runs)
                .into_par_iter()
                .map(|run| {
                    let mut rng = ChaCha8Rng::seed_from_u64(vclink_sim::network::derive_seed(
                        cfg.seed,
                        (c as u64) << 32 | run as u64,
                    ));
                    let specs: Vec<_> = (0..k).map(|_| random_spec(&mut rng, w, cfg.length)).collect();
                    switching_error(&specs, mux, cfg.length, rng.random())
                })
                .collect::<Result<Vec<_>>>()?;
            let mse = errors.iter().map(|e| e.rmse_pp * e.rmse_pp).sum::<f64>() / errors.len().max(1) as f64;
            Ok(AccuracyRow {
                streams: k,
                mux_prob: mux,
                width: w,
                runs: cfg.runs,
                rmse_pp: mse.sqrt(),
                max_abs_pp: errors.iter().map(|e| e.max_abs_pp).fold(0.0, f64::max),
            })
        })
        .collect()
}

/// Energy of multiplexed source streams under one codec.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuxEnergy {
    pub mux_prob: f64,
    /// Measured mux probability of the generated trace.
    pub measured_mux: f64,
    pub model_per_byte_fj: f64,
    pub standard_per_byte_fj: f64,
    pub oracle_per_byte_fj: f64,
}

/// Encodes each source with `codec`, multiplexes the coded streams and
/// evaluates model, standard model and reference energy per payload byte.
/// `cap` must match the coded width.
pub fn mux_energy(
    sources: &[DataStream],
    codec: CodecKind,
    mux_prob: f64,
    length: usize,
    seed: u64,
    cap: &LinkCapacitance,
) -> Result<MuxEnergy> {
    let width = sources[0].width();
    let coded = sources
        .iter()
        .map(|s| Codec::new(codec, width)?.encode(s))
        .collect::<vclink::Result<Vec<_>>>()?;
    let mux = multiplex_streams(&coded, mux_prob, length, seed)?;
    let m = flow_of_types(mux.type_trace(), coded.len())?;
    let stats = LinkTypeStats::from_streams(&mux.consumed)?;
    let tech = TechnologyParams::default();
    let payload = PayloadAccounting {
        data_bits: width,
        head_type: None,
    };
    let report = link_energy_report(&stats, &m, cap, &tech, payload, IdleWeighting::Corrected)?;
    let oracle = exact_energy(&trace_of(&mux)?, cap, &tech, payload)?;
    let per_byte = |f: Option<f64>| f.context("link carries no payload");
    Ok(MuxEnergy {
        mux_prob,
        measured_mux: m.mux_probability(),
        model_per_byte_fj: per_byte(report.model.energy_per_payload_byte_fj)?,
        standard_per_byte_fj: per_byte(report.standard.energy_per_payload_byte_fj)?,
        oracle_per_byte_fj: per_byte(oracle.figures.energy_per_payload_byte_fj)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub link: String,
    pub codec: String,
    pub energy: MuxEnergy,
    /// Gain of the model energy against the uncoded model energy, percent.
    pub gain_pct: f64,
    pub oracle_gain_pct: f64,
}

/// Energy per byte of `sources` multiplexed at each probability in `mux`,
/// uncoded and for each codec, on planar and TSV template links.
pub fn energy_sweep(
    sources: &[DataStream],
    codecs: &[CodecKind],
    mux: &[f64],
    length: usize,
    seed: u64,
    templates: &TemplateParams,
) -> Result<Vec<EnergyRow>> {
    let width = sources[0].width() as usize;
    let mut all = vec![CodecKind::None];
    all.extend(codecs.iter().copied().filter(|c| *c != CodecKind::None));
    let cells: Vec<(bool, f64)> = [false, true]
        .into_iter()
        .flat_map(|v| mux.iter().map(move |&p| (v, p)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(vertical, p)| {
            let mut out: Vec<EnergyRow> = Vec::new();
            for &codec in &all {
                let w = Codec::new(codec, width as u32)?.width_out() as usize;
                let cap = if vertical { templates.tsv(w)? } else { templates.planar(w)? };
                let e = mux_energy(sources, codec, p, length, seed, &cap)?;
                let (gain_pct, oracle_gain_pct) = match out.first() {
                    Some(base) => (
                        coding_gain(base.energy.model_per_byte_fj, e.model_per_byte_fj)?,
                        coding_gain(base.energy.oracle_per_byte_fj, e.oracle_per_byte_fj)?,
                    ),
                    None => (0.0, 0.0),
                };
                out.push(EnergyRow {
                    link: if vertical { "3d" } else { "2d" }.into(),
                    codec: codec.to_string(),
                    energy: e,
                    gain_pct,
                    oracle_gain_pct,
                });
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Two independent streams of `spec` shape with seeds derived from `seed`.
pub fn stream_pair(spec: &StreamSpec, seed: u64) -> Result<Vec<DataStream>> {
    (0..2)
        .map(|k| {
            let s = StreamSpec {
                seed: vclink_sim::network::derive_seed(seed, k),
                ..spec.clone()
            };
            Ok(generate_stream(&s, k as usize)?)
        })
        .collect()
}

pub fn accuracy_csv(rows: &[AccuracyRow]) -> String {
    let mut s = String::from("streams,mux_prob,width,runs,rmse_pp,max_abs_pp\n");
    for r in rows {
        s += &format!(
            "{},{},{},{},{:.6},{:.6}\n",
            r.streams, r.mux_prob, r.width, r.runs, r.rmse_pp, r.max_abs_pp
        );
    }
    s
}

pub fn energy_csv(rows: &[EnergyRow]) -> String {
    let mut s = String::from(
        "link,codec,mux_prob,measured_mux,model_fj_per_byte,standard_fj_per_byte,oracle_fj_per_byte,gain_pct,oracle_gain_pct\n",
    );
    for r in rows {
        let e = &r.energy;
        s += &format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.4},{:.4}\n",
            r.link,
            r.codec,
            e.mux_prob,
            e.measured_mux,
            e.model_per_byte_fj,
            e.standard_per_byte_fj,
            e.oracle_per_byte_fj,
            r.gain_pct,
            r.oracle_gain_pct
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flow_counts_all_active() {
        let m = flow_of_types([0, 0, 1, 0], 2).unwrap();
        assert_eq!(m.matrix()[(0, 0)], 1.0 / 3.0);
        assert_eq!(m.mux_probability(), 2.0 / 3.0);
    }

    #[test]
    fn random_specs_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for w in [16, 32] {
            for _ in 0..200 {
                random_spec(&mut rng, w, 10).validate().unwrap();
            }
        }
    }

    #[test]
    fn sweep_is_thread_count_independent() {
        let cfg = AccuracySweep {
            streams: vec![2, 3],
            mux: vec![0.4],
            widths: vec![16],
            runs: 3,
            length: 2000,
            seed: 5,
        };
        let a = with_jobs(1, || accuracy_sweep(&cfg)).unwrap().unwrap();
        let b = with_jobs(4, || accuracy_sweep(&cfg)).unwrap().unwrap();
        assert_eq!(a, b);
    }
}
