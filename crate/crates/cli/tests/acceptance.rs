// SPDX-License-Identifier: Apache-2.0

//! Acceptance criteria 1 to 9. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vclink::codec::{Codec, CodecKind};
use vclink::energy::{
    effective_tsv_capacitance, energy_2d, energy_3d, tsv_array, Capacitance2D, TechnologyParams,
};
use vclink::oracle::{exact_energy, LinkCycle};
use vclink::stats::{compute_bit_stats, generate_stream, multiplex_streams, DataStream, StreamSpec, SwitchingMatrix};
use vclink::vc_model::{link_energy_report, mux_switching, IdleWeighting, LinkTypeStats, PayloadAccounting};
use vclink_cli::analysis::AnalysisOptions;
use vclink_cli::case_study::{evaluate, simulate_variants, CaseRun, CaseStudyOptions};
use vclink_cli::sweep::{accuracy_sweep, flow_of_types, mux_energy, stream_pair, trace_of, AccuracySweep};
use vclink_cli::templates::TemplateParams;
use vclink_sim::config::SimConfig;
use vclink_sim::network::{run, SimOptions, SimResult};
use vclink_sim::traffic::{PayloadSpec, RateUnit, StreamParams};
use vclink_sim::{parse_config_file, Topology};

// criterion 1
const RMSE_MAX_PP: f64 = 1.0;
const MAE_MAX_PP: f64 = 4.0;
const ACCURACY_RUNS: usize = 100;
const ACCURACY_FLITS: usize = 10_000;
// criterion 2
const ENERGY_ERROR_MAX: f64 = 0.01;
// criterion 3
const MUX_RATIO: (f64, f64) = (1.7, 2.3);
const MUX_SWEEP_FLITS: usize = 100_000;
// criterion 4
const INVERT_GAIN_MUX0: (f64, f64) = (10.0, 18.0);
// criterion 5
const CORRELATOR_MARGIN_PP: f64 = 10.0;
// criterion 6
const STANDARD_UNDERESTIMATE: f64 = 2.0;
const VC_LINKS: [&str; 2] = ["R2-R5", "R5-R7"];
// criterion 7
const LATENCY_RATIO_MAX: f64 = 0.7;
// criterion 8
const CODEC_STREAMS: usize = 1000;
const STRESS_CYCLES: u64 = 100_000;
const CROSS_SWITCHING_TOLERANCE: f64 = 1e-12;
// criterion 9
const SPEEDUP_MIN: f64 = 100.0;
const SPEED_CYCLES: usize = 1_000_000;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn in_range(v: f64, (lo, hi): (f64, f64)) -> bool {
    v >= lo && v <= hi
}

fn case_config() -> SimConfig {
    parse_config_file(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/case-study.xml")).unwrap()
}

/// Case study with 4 and 1 VCs, traces kept for the checks of criterion 8.
struct CaseStudy {
    results: Vec<SimResult>,
    runs: Vec<CaseRun>,
}

fn case_study() -> CaseStudy {
    let cfg = case_config();
    let opts = CaseStudyOptions {
        vc_counts: vec![4, 1],
        codecs: vec![CodecKind::Gray, CodecKind::Correlator { invert: false }],
        analysis: AnalysisOptions {
            oracle: true,
            ..Default::default()
        },
        cycles: cfg.cycles,
        seed: cfg.seed,
    };
    let results = simulate_variants(&cfg, &opts.vc_counts, opts.cycles, opts.seed, true).unwrap();
    let runs = results
        .iter()
        .zip(&opts.vc_counts)
        .map(|(r, &vc)| evaluate(r, vc, &opts).unwrap())
        .collect();
    CaseStudy { results, runs }
}

fn accuracy() -> Verdict {
    let rows = accuracy_sweep(&AccuracySweep {
        streams: vec![2, 3, 4, 5],
        mux: vec![0.1, 0.4, 0.7, 1.0],
        widths: vec![16, 32],
        runs: ACCURACY_RUNS,
        length: ACCURACY_FLITS,
        seed: 1,
    })
    .unwrap();
    let rmse = rows.iter().map(|r| r.rmse_pp).fold(0.0, f64::max);
    let mae = rows.iter().map(|r| r.max_abs_pp).fold(0.0, f64::max);
    let worst = rows.iter().max_by(|a, b| a.max_abs_pp.total_cmp(&b.max_abs_pp)).unwrap();
    verdict(
        rmse <= RMSE_MAX_PP && mae <= MAE_MAX_PP,
        format!(
            "worst cell RMSE {rmse:.3} pp (<= {RMSE_MAX_PP}), max abs error {mae:.3} pp (<= {MAE_MAX_PP}) \
             at {} streams, mux {}, N={}",
            worst.streams, worst.mux_prob, worst.width
        ),
    )
}

fn end_to_end_error(cs: &CaseStudy) -> Verdict {
    let run = &cs.runs[0];
    let mut worst = (0.0, String::new());
    let mut aggregate: f64 = 0.0;
    for e in &run.energy {
        for l in &e.links {
            if let Some(err) = l.oracle_error() {
                if err > worst.0 {
                    worst = (err, format!("{} ({})", l.name, e.codec));
                }
            }
        }
        let o = e.oracle_fj.unwrap();
        aggregate = aggregate.max((e.model_fj - o).abs() / o);
    }
    verdict(
        worst.0 < ENERGY_ERROR_MAX && aggregate < ENERGY_ERROR_MAX,
        format!(
            "{} VCs: worst link error {:.3} % on {}, worst aggregate error {:.4} % (< {} %)",
            run.vc_count,
            worst.0 * 100.0,
            worst.1,
            aggregate * 100.0,
            ENERGY_ERROR_MAX * 100.0
        ),
    )
}

fn mux_trend() -> Verdict {
    let t = TemplateParams::default();
    let sources = stream_pair(&StreamSpec::gaussian(16, MUX_SWEEP_FLITS, 256.0, 0.99, 0), 7).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, cap) in [("2D", t.planar(16).unwrap()), ("3D", t.tsv(16).unwrap())] {
        let e0 = mux_energy(&sources, CodecKind::None, 0.0, MUX_SWEEP_FLITS, 11, &cap).unwrap();
        let e1 = mux_energy(&sources, CodecKind::None, 1.0, MUX_SWEEP_FLITS, 11, &cap).unwrap();
        let model = e1.model_per_byte_fj / e0.model_per_byte_fj;
        let oracle = e1.oracle_per_byte_fj / e0.oracle_per_byte_fj;
        pass &= in_range(model, MUX_RATIO) && in_range(oracle, MUX_RATIO);
        parts.push(format!("{label} {model:.3} (bit-level {oracle:.3})"));
    }
    verdict(
        pass,
        format!("energy per byte mux 1 / mux 0: {} in [{}, {}]", parts.join(", "), MUX_RATIO.0, MUX_RATIO.1),
    )
}

fn invert_crossover() -> Verdict {
    let t = TemplateParams::default();
    let sources = stream_pair(&StreamSpec::uniform(16, MUX_SWEEP_FLITS, 0), 3).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, vertical) in [("2D", false), ("3D", true)] {
        let cap = |w: usize| if vertical { t.tsv(w) } else { t.planar(w) }.unwrap();
        let gain = |mux: f64| {
            let u = mux_energy(&sources, CodecKind::None, mux, MUX_SWEEP_FLITS, 5, &cap(16)).unwrap();
            let c = mux_energy(&sources, CodecKind::Invert, mux, MUX_SWEEP_FLITS, 5, &cap(17)).unwrap();
            (
                (u.model_per_byte_fj - c.model_per_byte_fj) / u.model_per_byte_fj * 100.0,
                (u.oracle_per_byte_fj - c.oracle_per_byte_fj) / u.oracle_per_byte_fj * 100.0,
            )
        };
        let (g0, o0) = gain(0.0);
        let (g1, o1) = gain(1.0);
        pass &= in_range(g0, INVERT_GAIN_MUX0) && in_range(o0, INVERT_GAIN_MUX0) && g1 < 0.0 && o1 < 0.0;
        parts.push(format!("{label} {g0:+.2} % / {g1:+.2} % (bit-level {o0:+.2} % / {o1:+.2} %)"));
    }
    verdict(
        pass,
        format!(
            "invert gain at mux 0 / mux 1: {}; need [{}, {}] / < 0",
            parts.join(", "),
            INVERT_GAIN_MUX0.0,
            INVERT_GAIN_MUX0.1
        ),
    )
}

fn coding_order(cs: &CaseStudy) -> Verdict {
    let gray = CodecKind::Gray;
    let corr = CodecKind::Correlator { invert: false };
    let g = |r: &CaseRun, c, oracle| r.gain(c, oracle).unwrap();
    let (vc, novc) = (&cs.runs[0], &cs.runs[1]);
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, oracle) in [("model", false), ("bit-level", true)] {
        let (g4, c4, g1, c1) = (g(vc, gray, oracle), g(vc, corr, oracle), g(novc, gray, oracle), g(novc, corr, oracle));
        pass &= c4 - g4 >= CORRELATOR_MARGIN_PP && g1 > c1 && c1 < 0.0;
        parts.push(format!(
            "{label}: 4 VCs gray {g4:+.2} % corr {c4:+.2} %, 1 VC gray {g1:+.2} % corr {c1:+.2} %"
        ));
    }
    verdict(
        pass,
        format!(
            "{}; need corr - gray >= {CORRELATOR_MARGIN_PP} pp with VCs, gray > corr and corr < 0 without",
            parts.join("; ")
        ),
    )
}

fn standard_underestimate(cs: &CaseStudy) -> Verdict {
    let e = cs.runs[0].uncoded();
    let mut pass = true;
    let mut parts = Vec::new();
    for name in VC_LINKS {
        let l = e.links.iter().find(|l| l.name == name).unwrap();
        let factor = l.oracle.as_ref().unwrap().total_fj / l.standard_fj;
        pass &= factor >= STANDARD_UNDERESTIMATE;
        parts.push(format!("{name} {factor:.3}x (mux {:.3})", l.report.mux_probability));
    }
    verdict(
        pass,
        format!("bit-level / standard energy: {}; need >= {STANDARD_UNDERESTIMATE}", parts.join(", ")),
    )
}

fn vc_latency(cs: &CaseStudy) -> Verdict {
    let mean = |r: &CaseRun| r.latency.flit.unwrap().mean_ns;
    let (l4, l1) = (mean(&cs.runs[0]), mean(&cs.runs[1]));
    verdict(
        l4 <= LATENCY_RATIO_MAX * l1,
        format!(
            "mean flit latency 4 VCs {l4:.2} ns, 1 VC {l1:.2} ns, ratio {:.3} (<= {LATENCY_RATIO_MAX})",
            l4 / l1
        ),
    )
}

/// `None` when the matrix is a joint distribution whose idle states are only
/// entered from the held type.
fn flow_violation(m: &DMatrix<f64>) -> Option<String> {
    let n = m.nrows() / 2;
    if (m.sum() - 1.0).abs() > 1e-12 {
        return Some(format!("sum {}", m.sum()));
    }
    for r in 0..2 * n {
        for c in 0..2 * n {
            let v = m[(r, c)];
            if v < 0.0 {
                return Some(format!("negative entry at ({r}, {c})"));
            }
            let entering_idle = c >= n;
            if entering_idle && v > 0.0 && r % n != c - n {
                return Some(format!("idle state {c} entered from {r}"));
            }
        }
    }
    None
}

fn recount(cycles: &[LinkCycle], n: usize) -> DMatrix<u64> {
    let mut counts = DMatrix::zeros(2 * n, 2 * n);
    let mut held = n - 1;
    let mut prev = None;
    for c in cycles {
        let state = match c {
            LinkCycle::Active { type_id, .. } => {
                held = *type_id;
                *type_id
            }
            LinkCycle::Idle => n + held,
        };
        if let Some(p) = prev {
            counts[(p, state)] += 1;
        }
        prev = Some(state);
    }
    counts
}

fn brute_force_cross(x: &[u64], y: &[u64], n: usize) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(n, n);
    for &a in x {
        for &b in y {
            for i in 0..n {
                let di = (b >> i & 1) as f64 - (a >> i & 1) as f64;
                for j in 0..n {
                    acc[(i, j)] += di * ((b >> j & 1) as f64 - (a >> j & 1) as f64);
                }
            }
        }
    }
    acc / (x.len() * y.len()) as f64
}

fn stress_run() -> SimResult {
    let mut cfg = SimConfig::new(Topology::mesh(3, 3, 2).unwrap());
    cfg.vc_count = 2;
    cfg.buffer_depth = 2;
    let n = cfg.topology.len();
    let payload = PayloadSpec::Stream(StreamParams {
        distribution: vclink::stats::Distribution::Uniform,
        width: 16,
        sigma: 0.0,
        rho: 0.0,
        seed: None,
    });
    for s in 0..n {
        cfg.add_flow(s, n - 1 - s, 0.9, RateUnit::Flits, payload.clone());
        cfg.add_flow(s, (s + 5) % n, 0.3, RateUnit::Flits, payload.clone());
    }
    // check_invariants asserts flit and credit conservation after every cycle
    let opts = SimOptions {
        cycles: STRESS_CYCLES,
        seed: 5,
        record_traces: false,
        check_invariants: true,
    };
    run(&cfg, opts).unwrap()
}

fn properties(cs: &CaseStudy) -> Verdict {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    let stress = stress_run();
    if stress.delivered_flits == 0 || stress.injected_flits < stress.delivered_flits {
        failures.push("stress run conservation".to_string());
    }
    for r in cs.results.iter().chain([&stress]) {
        for l in &r.links {
            if let Some(v) = flow_violation(l.flow.matrix()) {
                failures.push(format!("M of {}: {v}", l.name));
            }
        }
    }

    for r in &cs.results {
        for l in &r.links {
            if recount(l.trace.as_ref().unwrap().cycles(), r.n_types) != l.counts {
                failures.push(format!("protocol recount of {}", l.name));
            }
        }
    }

    let kinds = [
        CodecKind::None,
        CodecKind::Invert,
        CodecKind::Gray,
        CodecKind::Correlator { invert: false },
        CodecKind::Correlator { invert: true },
    ];
    for k in 0..CODEC_STREAMS {
        let width = rng.random_range(1..=32u32);
        let len = rng.random_range(1..300);
        let mask = (1u64 << width) - 1;
        let words = (0..len).map(|_| rng.random::<u64>() & mask).collect();
        let s = DataStream::new(words, width, 0).unwrap();
        let codec = Codec::new(kinds[k % kinds.len()], width).unwrap();
        if codec.decode(&codec.encode(&s).unwrap()).unwrap() != s {
            failures.push(format!("codec {} roundtrip at width {width}", codec.kind()));
        }
    }

    for _ in 0..200 {
        let n = 4;
        let model = tsv_array(n, 2, 30.0, -rng.random::<f64>() * 5.0, 40.0, -rng.random::<f64>() * 6.0).unwrap();
        let p = DVector::from_fn(n, |_, _| rng.random::<f64>());
        let t = SwitchingMatrix::from_matrix(DMatrix::from_fn(n, n, |_, _| rng.random::<f64>())).unwrap();
        let direct = energy_3d(&t, &p, &model).unwrap();
        let eff = Capacitance2D::new(effective_tsv_capacitance(&model, &p).unwrap()).unwrap();
        if (direct - energy_2d(&t, &eff).unwrap()).abs() > 1e-12 * direct.abs().max(1.0) {
            failures.push("energy_3d differs from energy_2d on the effective capacitance".into());
        }
    }

    for k in 0..50 {
        let x = generate_stream(&StreamSpec::gaussian(4, 300, 1.5 + k as f64 / 10.0, 0.5, k), 0).unwrap();
        let y = generate_stream(&StreamSpec::uniform(4, 250, 100 + k), 1).unwrap();
        let t = mux_switching(&compute_bit_stats(&x).unwrap(), &compute_bit_stats(&y).unwrap()).unwrap();
        let oracle = brute_force_cross(x.words(), y.words(), 4);
        let diff = DMatrix::from_fn(4, 4, |i, j| t.correlated(i, j) - oracle[(i, j)]).amax();
        if diff > CROSS_SWITCHING_TOLERANCE {
            failures.push(format!("cross-transition switching off by {diff:e}"));
        }
    }

    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "M invariants on {} runs, protocol recount, {CODEC_STREAMS} codec roundtrips, \
                 {STRESS_CYCLES}-cycle conservation, 3D/2D identity, cross-pair switching within {CROSS_SWITCHING_TOLERANCE:e}",
                cs.results.len() + 1
            )
        } else {
            failures.join("; ")
        },
    )
}

fn speed() -> Verdict {
    let sources = stream_pair(&StreamSpec::gaussian(16, SPEED_CYCLES, 256.0, 0.99, 0), 2).unwrap();
    let mux = multiplex_streams(&sources, 0.5, SPEED_CYCLES, 9).unwrap();
    let trace = trace_of(&mux).unwrap();
    let m = flow_of_types(mux.type_trace(), 2).unwrap();
    let stats = LinkTypeStats::from_streams(&mux.consumed).unwrap();
    let cap = TemplateParams::default().tsv(16).unwrap();
    let tech = TechnologyParams::default();
    let payload = PayloadAccounting {
        data_bits: 16,
        head_type: None,
    };

    let start = Instant::now();
    let reps = 100;
    let mut model = None;
    for _ in 0..reps {
        model = Some(link_energy_report(&stats, &m, &cap, &tech, payload, IdleWeighting::Corrected).unwrap());
    }
    let model_s = start.elapsed().as_secs_f64() / reps as f64;

    let start = Instant::now();
    let oracle = exact_energy(&trace, &cap, &tech, payload).unwrap();
    let oracle_s = start.elapsed().as_secs_f64();

    let model = model.unwrap().model.energy_per_cycle_fj;
    let agree = (model - oracle.figures.energy_per_cycle_fj).abs() / oracle.figures.energy_per_cycle_fj;
    let speedup = oracle_s / model_s;
    verdict(
        speedup >= SPEEDUP_MIN && agree < ENERGY_ERROR_MAX,
        format!(
            "{SPEED_CYCLES}-cycle trace: model {:.1} us, bit-level {:.1} ms, speed-up {speedup:.0}x (>= {SPEEDUP_MIN}), \
             energies agree within {:.3} %",
            model_s * 1e6,
            oracle_s * 1e3,
            agree * 100.0
        ),
    )
}

fn main() -> ExitCode {
    let cs = case_study();
    let criteria: Vec<(&str, Verdict)> = vec![
        ("switching estimation accuracy", accuracy()),
        ("end-to-end energy error", end_to_end_error(&cs)),
        ("mux-probability energy trend", mux_trend()),
        ("invert-coding crossover", invert_crossover()),
        ("coding ordering", coding_order(&cs)),
        ("standard-model underestimation", standard_underestimate(&cs)),
        ("VC latency effect", vc_latency(&cs)),
        ("property suites", properties(&cs)),
        ("model speed", speed()),
    ];
    let mut failed = 0;
    for (k, (name, v)) in criteria.iter().enumerate() {
        println!("{} {}. {name}: {}", if v.pass { "PASS" } else { "FAIL" }, k + 1, v.detail);
        failed += !v.pass as usize;
    }
    println!("{} of {} acceptance criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
