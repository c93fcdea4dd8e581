// SPDX-License-Identifier: Apache-2.0

//! `vclink`: simulate a NoC, estimate link energy after the fact and run the
//! multiplexing sweeps and the case study.
//!
//! Exit status: 0 on success, 1 on invalid input, 2 on runtime failure.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use vclink::codec::{Codec, CodecKind};
use vclink::energy::{ModelKind, TechnologyParams};
use vclink::io::{write_stream_binary, write_stream_csv};
use vclink::oracle::{exact_energy, replay_link_protocol};
use vclink::stats::{compute_bit_stats, generate_stream, sample_moments, DataStream, Distribution, StreamSpec};
use vclink::vc_model::{IdleWeighting, PayloadAccounting};
use vclink_cli::analysis::{analyze, energy_table, AnalysisOptions, RunData};
use vclink_cli::case_study::{case_table, run_case_study, CaseStudyOptions};
use vclink_cli::sweep::{accuracy_csv, accuracy_sweep, energy_csv, energy_sweep, stream_pair, with_jobs, AccuracySweep};
use vclink_cli::templates::{CapSource, Capacitances, TemplateParams};
use vclink_sim::network::{derive_seed, SimOptions};
use vclink_sim::reporting::{emit_reports, RunManifest};
use vclink_sim::SimConfig;

/// Input rejected before any work was done.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Invalid(String);

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "vclink", version, about = "Link energy of NoCs with virtual channels")]
struct Cli {
    /// Worker threads for parallel work (0: one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulator and write matrices, latency and payload reports.
    Simulate(SimulateArgs),
    /// Link energy of a stored run, optionally with a codec.
    Analyze(AnalyzeArgs),
    /// Bit-level energy of link protocol files.
    Oracle(OracleArgs),
    /// Generate synthetic data streams.
    Streams(StreamsArgs),
    /// Estimation accuracy and energy over the multiplexing probability.
    SweepMux(SweepMuxArgs),
    /// Coding gain over the multiplexing probability.
    SweepCoding(SweepCodingArgs),
    /// Case study with and without virtual channels.
    CaseStudy(CaseStudyArgs),
}

#[derive(Args, Clone)]
struct CapArgs {
    /// Planar link capacitance: `template` or a 2D model file.
    #[arg(long)]
    cap2d: Option<String>,
    /// TSV link capacitance: `template` or a 3D model stem.
    #[arg(long)]
    cap3d: Option<String>,
    /// Supply voltage in V.
    #[arg(long, default_value_t = 1.0)]
    vdd: f64,
    /// Leave idle-to-idle cycles out of the link bit probabilities.
    #[arg(long)]
    no_idle_correction: bool,
}

impl CapArgs {
    fn any(&self) -> bool {
        self.cap2d.is_some() || self.cap3d.is_some()
    }

    fn capacitances(&self) -> Result<Capacitances> {
        let parse = |arg: &Option<String>, kind| -> Result<CapSource> {
            match arg {
                None => Ok(CapSource::Template(TemplateParams::default())),
                Some(a) => CapSource::parse(a, kind).with_context(|| format!("capacitance model `{a}`")),
            }
        };
        Ok(Capacitances {
            planar: parse(&self.cap2d, ModelKind::Planar)?,
            vertical: parse(&self.cap3d, ModelKind::Tsv)?,
        })
    }

    fn mode(&self) -> IdleWeighting {
        if self.no_idle_correction {
            IdleWeighting::Uncorrected
        } else {
            IdleWeighting::Corrected
        }
    }

    fn options(&self, codec: CodecKind, oracle: bool) -> Result<AnalysisOptions> {
        if !(self.vdd > 0.0) {
            return Err(invalid(format!("--vdd must be positive, got {}", self.vdd)));
        }
        Ok(AnalysisOptions {
            codec,
            caps: self.capacitances()?,
            vdd: self.vdd,
            mode: self.mode(),
            oracle,
        })
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Simulator XML configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured cycle count.
    #[arg(long)]
    cycles: Option<u64>,
    /// Overrides the configured number of virtual channels.
    #[arg(long)]
    vcs: Option<usize>,
    /// Record every link cycle into protocol files.
    #[arg(long)]
    debug_protocol: bool,
    /// Codec for the energy report.
    #[arg(long, default_value = "none")]
    codec: CodecKind,
    #[command(flatten)]
    caps: CapArgs,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Directory written by `simulate`.
    #[arg(long)]
    run: PathBuf,
    /// Codec applied to the payload; repeat or comma-separate for several.
    #[arg(long, value_delimiter = ',', default_value = "none")]
    codec: Vec<CodecKind>,
    /// Also evaluate the bit-level reference from the protocol files.
    #[arg(long)]
    oracle: bool,
    /// Write the energy reports as JSON here instead of into the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    caps: CapArgs,
}

#[derive(Args)]
struct OracleArgs {
    /// Protocol files.
    #[arg(long, required = true, num_args = 1..)]
    trace: Vec<PathBuf>,
    /// Treat the links as TSV arrays. Taken from the run manifest next to the
    /// protocols when present.
    #[arg(long)]
    vertical: bool,
    /// Type id of head flits, excluded from the payload. Taken from the run
    /// manifest when present.
    #[arg(long)]
    head_type: Option<usize>,
    /// Clock period in s.
    #[arg(long, default_value_t = 1e-9)]
    clock_period: f64,
    #[command(flatten)]
    caps: CapArgs,
}

#[derive(Args)]
struct StreamsArgs {
    #[arg(long, default_value = "uniform")]
    distribution: Distribution,
    #[arg(long, default_value_t = 16)]
    width: u32,
    #[arg(long, default_value_t = 100_000)]
    length: usize,
    /// Standard deviation in LSBs (Gaussian and log-normal).
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Lag-1 correlation.
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    /// Number of independent streams.
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also write each stream as CSV.
    #[arg(long)]
    csv: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepMuxArgs {
    /// Stream counts, as a list or an inclusive range `a..b`.
    #[arg(long, default_value = "2..5")]
    streams: String,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.4,0.7,1.0")]
    mux: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "16,32")]
    widths: Vec<u32>,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    /// Flits per trial.
    #[arg(long, default_value_t = 10_000)]
    length: usize,
    /// Flits per point of the energy sweep.
    #[arg(long, default_value_t = 100_000)]
    energy_length: usize,
    /// Mux probabilities of the energy sweep.
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
    energy_mux: Vec<f64>,
    /// Skip the accuracy sweep.
    #[arg(long)]
    no_accuracy: bool,
    /// Skip the energy sweep.
    #[arg(long)]
    no_energy: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepCodingArgs {
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
    mux: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    length: usize,
    /// Codecs for the correlated streams.
    #[arg(long, value_delimiter = ',', default_value = "correlator+inv,correlator,gray")]
    codec: Vec<CodecKind>,
    /// Codecs for the random streams.
    #[arg(long, value_delimiter = ',', default_value = "invert")]
    random_codec: Vec<CodecKind>,
    /// Lag-1 correlation of the correlated bytes.
    #[arg(long, default_value_t = 0.99)]
    rho: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CaseStudyArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "4,1")]
    vcs: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "gray,correlator")]
    codec: Vec<CodecKind>,
    /// Overrides the configured cycle count.
    #[arg(long)]
    cycles: Option<u64>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Skip the bit-level reference.
    #[arg(long)]
    no_oracle: bool,
    #[command(flatten)]
    caps: CapArgs,
}

fn load_config(path: &Path) -> Result<SimConfig> {
    if !path.is_file() {
        return Err(invalid(format!("config file {} not found", path.display())));
    }
    vclink_sim::parse_config_file(path).with_context(|| format!("in {}", path.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    write(path, serde_json::to_string_pretty(value)?)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = load_config(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(c) = a.cycles {
        cfg.cycles = c;
    }
    if let Some(v) = a.vcs {
        cfg.vc_count = v;
    }
    cfg.validate()?;
    let opts = SimOptions {
        record_traces: a.debug_protocol,
        ..SimOptions::from_config(&cfg)
    };
    info!("simulating {} cycles", opts.cycles);
    let result = vclink_sim::run(&cfg, opts)?;
    emit_reports(&result, &a.out)?;
    print!("{}", vclink_sim::reporting::LatencyReport::from_result(&result).to_table());
    if a.caps.any() {
        let e = analyze(&RunData::from_result(&result), &a.caps.options(a.codec, a.debug_protocol)?)?;
        write_json(&a.out.join("energy.json"), &e)?;
        let table = energy_table(&e);
        write(&a.out.join("energy.txt"), &table)?;
        print!("{table}");
    }
    Ok(())
}

fn analyze_run(a: AnalyzeArgs) -> Result<()> {
    let manifest = fs::read_to_string(a.run.join("run.json"))
        .ok()
        .and_then(|s| serde_json::from_str::<RunManifest>(&s).ok())
        .ok_or_else(|| invalid(format!("{} holds no simulation run", a.run.display())))?;
    if a.oracle && manifest.links.iter().any(|l| l.protocol.is_none()) {
        return Err(invalid("run has no link protocols; simulate with --debug-protocol"));
    }
    let run = RunData::load(&a.run, a.oracle)?;
    let out = a.out.unwrap_or_else(|| a.run.clone());
    for codec in a.codec {
        let e = analyze(&run, &a.caps.options(codec, a.oracle)?)?;
        write_json(&out.join(format!("energy_{codec}.json")), &e)?;
        print!("{}", energy_table(&e));
    }
    Ok(())
}

fn oracle(a: OracleArgs) -> Result<()> {
    let tech = TechnologyParams::new(a.caps.vdd, a.clock_period)?;
    let caps = a.caps.capacitances()?;
    let mut total = 0.0;
    println!("{:<12}{:>10}{:>12}{:>14}{:>14}", "link", "cycles", "active", "energy pJ", "fJ/cycle");
    for path in &a.trace {
        let file = fs::File::open(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let (name, trace) =
            replay_link_protocol(BufReader::new(file), None).with_context(|| format!("reading {}", path.display()))?;
        let manifest = path
            .parent()
            .and_then(Path::parent)
            .map(|d| d.join("run.json"))
            .and_then(|p| fs::read_to_string(p).ok())
            .and_then(|s| serde_json::from_str::<RunManifest>(&s).ok());
        let link = manifest.as_ref().and_then(|m| m.links.iter().find(|l| l.name == name));
        let vertical = a.vertical || link.is_some_and(|l| l.vertical);
        let head_type = a.head_type.or(manifest.as_ref().map(|m| m.head_type));
        let cap = caps.for_link(trace.width() as usize, vertical)?;
        let payload = PayloadAccounting {
            data_bits: manifest.as_ref().map_or(trace.width(), |m| m.flit_width),
            head_type,
        };
        let e = exact_energy(&trace, &cap, &tech, payload)?;
        total += e.total_fj;
        println!(
            "{:<12}{:>10}{:>12}{:>14.3}{:>14.4}",
            name,
            trace.len(),
            e.active_cycles,
            e.total_fj / 1e3,
            e.figures.energy_per_cycle_fj
        );
    }
    println!("{:<34}{:>14.3}", "total", total / 1e3);
    Ok(())
}

fn streams(a: StreamsArgs) -> Result<()> {
    if a.count == 0 {
        return Err(invalid("--count must be at least 1"));
    }
    println!("{:<14}{:>12}{:>12}{:>12}", "file", "std", "rho", "mean p");
    for k in 0..a.count {
        let spec = StreamSpec {
            distribution: a.distribution,
            width: a.width,
            length: a.length,
            sigma: a.sigma,
            rho: a.rho,
            seed: derive_seed(a.seed, k as u64),
        };
        spec.validate().map_err(|e| invalid(e.to_string()))?;
        let s = generate_stream(&spec, k)?;
        let name = format!("stream_{k}");
        let mut bin = Vec::new();
        write_stream_binary(&mut bin, &s)?;
        write(&a.out.join(format!("{name}.bin")), bin)?;
        if a.csv {
            let mut csv = Vec::new();
            write_stream_csv(&mut csv, &s)?;
            write(&a.out.join(format!("{name}.csv")), csv)?;
        }
        let (std, rho) = sample_moments(&s);
        let p = compute_bit_stats(&s)?.p;
        println!("{:<14}{:>12.2}{:>12.4}{:>12.4}", name, std, rho, p.mean());
    }
    Ok(())
}

fn parse_counts(s: &str) -> Result<Vec<usize>> {
    let bad = || invalid(format!("bad stream counts `{s}`"));
    let v: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        (a..=b).collect()
    } else {
        s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    };
    if v.is_empty() || v.contains(&0) {
        return Err(bad());
    }
    Ok(v)
}

fn check_probs(v: &[f64], flag: &str) -> Result<()> {
    match v.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        Some(p) => Err(invalid(format!("{flag}: probability {p} outside [0, 1]"))),
        None => Ok(()),
    }
}

fn sweep_mux(a: SweepMuxArgs) -> Result<()> {
    let streams = parse_counts(&a.streams)?;
    check_probs(&a.mux, "--mux")?;
    check_probs(&a.energy_mux, "--energy-mux")?;
    if !a.no_accuracy {
        let cfg = AccuracySweep {
            streams,
            mux: a.mux.clone(),
            widths: a.widths.clone(),
            runs: a.runs,
            length: a.length,
            seed: a.seed,
        };
        info!("accuracy sweep: {} runs per cell", cfg.runs);
        let rows = accuracy_sweep(&cfg)?;
        let csv = accuracy_csv(&rows);
        write(&a.out.join("accuracy.csv"), &csv)?;
        print!("{csv}");
    }
    if !a.no_energy {
        let t = TemplateParams::default();
        let gauss = stream_pair(&StreamSpec::gaussian(16, a.energy_length, 256.0, 0.99, 0), a.seed)?;
        let rows = energy_sweep(&gauss, &[], &a.energy_mux, a.energy_length, a.seed, &t)?;
        write(&a.out.join("energy.csv"), energy_csv(&rows))?;
        let random = stream_pair(&StreamSpec::uniform(16, a.energy_length, 0), derive_seed(a.seed, 1))?;
        let rows = energy_sweep(&random, &[CodecKind::Invert], &a.energy_mux, a.energy_length, a.seed, &t)?;
        write(&a.out.join("invert.csv"), energy_csv(&rows))?;
        println!("wrote {}", a.out.join("energy.csv").display());
        println!("wrote {}", a.out.join("invert.csv").display());
    }
    Ok(())
}

/// Uniform 16-bit words whose upper byte has lag-1 correlation `rho` and
/// whose lower byte is random.
fn msb_correlated(length: usize, rho: f64, seed: u64, type_id: usize) -> Result<DataStream> {
    let hi = StreamSpec {
        rho,
        ..StreamSpec::uniform(8, length, derive_seed(seed, 0))
    };
    let lo = StreamSpec::uniform(8, length, derive_seed(seed, 1));
    Ok(DataStream::pack(&generate_stream(&hi, 0)?, &generate_stream(&lo, 0)?, type_id)?)
}

fn sweep_coding(a: SweepCodingArgs) -> Result<()> {
    check_probs(&a.mux, "--mux")?;
    if !(0.0..=1.0).contains(&a.rho) {
        return Err(invalid(format!("--rho {} outside [0, 1]", a.rho)));
    }
    for c in a.codec.iter().chain(&a.random_codec) {
        Codec::new(*c, 16)?;
    }
    let t = TemplateParams::default();
    let correlated = (0..2)
        .map(|k| msb_correlated(a.length, a.rho, derive_seed(a.seed, 10 + k as u64), k))
        .collect::<Result<Vec<_>>>()?;
    let rows = energy_sweep(&correlated, &a.codec, &a.mux, a.length, a.seed, &t)?;
    write(&a.out.join("coding_correlated.csv"), energy_csv(&rows))?;
    let random = stream_pair(&StreamSpec::uniform(16, a.length, 0), derive_seed(a.seed, 1))?;
    let rows = energy_sweep(&random, &a.random_codec, &a.mux, a.length, a.seed, &t)?;
    write(&a.out.join("coding_random.csv"), energy_csv(&rows))?;
    println!("wrote {}", a.out.join("coding_correlated.csv").display());
    println!("wrote {}", a.out.join("coding_random.csv").display());
    Ok(())
}

fn case_study(a: CaseStudyArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    if a.vcs.is_empty() || a.vcs.contains(&0) {
        return Err(invalid("--vcs needs positive VC counts"));
    }
    let opts = CaseStudyOptions {
        vc_counts: a.vcs.clone(),
        codecs: a.codec.clone(),
        analysis: a.caps.options(CodecKind::None, !a.no_oracle)?,
        cycles: a.cycles.unwrap_or(cfg.cycles),
        seed: a.seed.unwrap_or(cfg.seed),
    };
    let runs = run_case_study(&cfg, &opts)?;
    for r in &runs {
        let table = case_table(r);
        write(&a.out.join(format!("table_vc{}.txt", r.vc_count)), &table)?;
        println!("{table}");
    }
    write_json(&a.out.join("case_study.json"), &runs)
}

fn dispatch(cli: Cli) -> Result<()> {
    let jobs = cli.jobs;
    with_jobs(jobs, move || match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Analyze(a) => analyze_run(a),
        Command::Oracle(a) => oracle(a),
        Command::Streams(a) => streams(a),
        Command::SweepMux(a) => sweep_mux(a),
        Command::SweepCoding(a) => sweep_coding(a),
        Command::CaseStudy(a) => case_study(a),
    })?
}

fn is_validation(e: &anyhow::Error) -> bool {
    use vclink_sim::Error as S;
    let model = |e: &vclink::Error| !matches!(e, vclink::Error::Io(_));
    e.chain().any(|c| {
        c.is::<Invalid>()
            || c.downcast_ref::<vclink::Error>().is_some_and(model)
            || match c.downcast_ref::<S>() {
                Some(S::Config { .. } | S::Invalid(_) | S::Xml(_) | S::Unreachable { .. }) => true,
                Some(S::Model(m)) => model(m),
                _ => false,
            }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_validation(&e) { 1 } else { 2 })
        }
    }
}
