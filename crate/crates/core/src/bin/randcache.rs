use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use randcache::analysis::{formula_table, AnalysisParams};
use randcache::error::{ConfigError, Error, Result};
use randcache::harness::{self, fmt_sig, ExperimentSpec, TraceSource, Workload};
use randcache::rng::{purpose, RngStream};
use randcache::CacheGeometry;

#[derive(Parser)]
#[command(
    name = "randcache",
    version,
    about = "Randomized cache mapping simulator and attack harness"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Cmd {
    /// Replay a trace against a scheme and report hit/miss statistics.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        trace: TraceArgs,
    },
    /// Run an attack against a scheme, one CSV row per trial.
    Attack {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        attack: AttackArgs,
    },
    /// Repeat a run over values of one parameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        trace: TraceArgs,
        #[command(flatten)]
        attack: AttackArgs,
        /// Parameter to vary, e.g. `g`, `N`, `s`, `E`.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Print the closed-form model table for a cache configuration.
    Analyze {
        #[command(flatten)]
        params: AnalyzeArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic trace file.
    TraceGen {
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        trace: TraceArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Flags shared by every experiment subcommand. Each one, when given,
/// overrides the configuration file.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scheme kind: sa, se, de (ceaser), srs, drs, drs-de (ceaser-s),
    /// tlsr-se, tlsr-srp, tlsr-se-srp, tldr-de, tldr-drp, de-drp.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    sets: Option<String>,
    #[arg(long)]
    assoc: Option<String>,
    /// Total lines; sets become `lines / assoc`.
    #[arg(long)]
    lines: Option<String>,
    #[arg(long)]
    skews: Option<String>,
    #[arg(long)]
    epoch: Option<String>,
    #[arg(long)]
    epoch_unit: Option<String>,
    #[arg(long)]
    table_entries: Option<String>,
    #[arg(long)]
    buffer: Option<String>,
    #[arg(long)]
    threshold: Option<String>,
    #[arg(long)]
    first_level: Option<String>,
    #[arg(long)]
    serial: bool,
    /// Any other parameter as `key=value`; applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets_kv: Vec<String>,
}

#[derive(Args)]
struct TraceArgs {
    /// uniform, looping, pointer-chase or file.
    #[arg(long)]
    trace: Option<String>,
    #[arg(long)]
    trace_file: Option<PathBuf>,
    #[arg(long)]
    span: Option<String>,
    #[arg(long)]
    working_set: Option<String>,
    #[arg(long)]
    stride: Option<String>,
    #[arg(long)]
    length: Option<String>,
    #[arg(long)]
    warmup: Option<String>,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    attack: Option<String>,
    #[arg(long)]
    group_size: Option<String>,
    #[arg(long)]
    fraction: Option<String>,
    #[arg(long)]
    entry_stride: Option<String>,
    #[arg(long)]
    max_accesses: Option<String>,
    #[arg(long)]
    max_epochs: Option<String>,
    #[arg(long)]
    max_evictions: Option<String>,
    #[arg(long)]
    scg_size: Option<String>,
    #[arg(long)]
    probes: Option<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    lines: Option<u64>,
    #[arg(long)]
    sets: Option<u64>,
    #[arg(long)]
    assoc: Option<u64>,
    #[arg(long)]
    skews: Option<u64>,
    #[arg(long)]
    group_size: Option<u64>,
    #[arg(long)]
    start_size: Option<u64>,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    epoch_multiple: Option<u64>,
    #[arg(long)]
    load: Option<f64>,
    #[arg(long)]
    threshold: Option<u64>,
    #[arg(long)]
    table_entries: Option<u64>,
}

type Overrides = Vec<(&'static str, String)>;

fn push(o: &mut Overrides, key: &'static str, v: &Option<String>) {
    if let Some(v) = v {
        o.push((key, v.clone()));
    }
}

impl RunArgs {
    /// Scheme overrides, ordered so that `lines` sees the final `assoc`.
    fn overrides(&self) -> Overrides {
        let mut o = Overrides::new();
        push(&mut o, "seed", &self.seed.map(|v| v.to_string()));
        push(&mut o, "trials", &self.trials.map(|v| v.to_string()));
        push(&mut o, "scheme", &self.scheme);
        push(&mut o, "assoc", &self.assoc);
        push(&mut o, "n_sets", &self.sets);
        push(&mut o, "n_lines", &self.lines);
        push(&mut o, "n_skews", &self.skews);
        push(&mut o, "epoch_len", &self.epoch);
        push(&mut o, "epoch_unit", &self.epoch_unit);
        push(&mut o, "table_entries", &self.table_entries);
        push(&mut o, "buffer_capacity", &self.buffer);
        push(&mut o, "oversub_threshold", &self.threshold);
        push(&mut o, "first_level", &self.first_level);
        if self.serial {
            o.push(("parallel", "false".into()));
        }
        o
    }
}

impl TraceArgs {
    fn overrides(&self) -> Overrides {
        let mut o = Overrides::new();
        push(&mut o, "trace", &self.trace);
        if let Some(p) = &self.trace_file {
            if self.trace.is_none() {
                o.push(("trace", "file".into()));
            }
            o.push(("path", p.display().to_string()));
        }
        push(&mut o, "span", &self.span);
        push(&mut o, "working_set", &self.working_set);
        push(&mut o, "stride", &self.stride);
        push(&mut o, "length", &self.length);
        push(&mut o, "warmup", &self.warmup);
        o
    }
}

impl AttackArgs {
    fn overrides(&self) -> Overrides {
        let mut o = Overrides::new();
        push(&mut o, "attack", &self.attack);
        push(&mut o, "group_size", &self.group_size);
        push(&mut o, "fraction", &self.fraction);
        push(&mut o, "entry_stride", &self.entry_stride);
        push(&mut o, "max_accesses", &self.max_accesses);
        push(&mut o, "max_epochs", &self.max_epochs);
        push(&mut o, "max_evictions", &self.max_evictions);
        push(&mut o, "scg_size", &self.scg_size);
        push(&mut o, "probes", &self.probes);
        o
    }
}

/// Defaults, then the config file, then flags.
fn build_spec(run: &RunArgs, workload: &[Overrides]) -> Result<ExperimentSpec> {
    let mut spec = match &run.config {
        Some(p) => ExperimentSpec::load(p)?,
        None => ExperimentSpec::default(),
    };
    for (k, v) in run.overrides().iter().chain(workload.iter().flatten()) {
        spec.set(k, v)?;
    }
    for kv in &run.sets_kv {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ConfigError::invalid("set", format!("expected KEY=VALUE, found `{kv}`")))?;
        spec.set(k.trim(), v)?;
    }
    if let Some(out) = &run.out {
        spec.output = Some(out.clone());
    }
    spec.validate()?;
    Ok(spec)
}

fn stdout_csv(f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    f(&mut lock)
}

fn report(stats: &harness::RunStats, workload: &Workload) {
    let ci = |e: harness::Estimate| e.ci95.map_or(String::new(), |h| format!(" ± {}", fmt_sig(h)));
    match workload {
        Workload::Trace(_) => {
            let m = stats.miss_rate();
            eprintln!(
                "{} trials, {} accesses, miss rate {}{}, buffer peak {}",
                stats.trials.len(),
                stats.accesses(),
                fmt_sig(m.mean),
                ci(m),
                stats.buffer_peak()
            );
        }
        Workload::Attack(a) => {
            let p = stats.eviction_probability();
            eprintln!(
                "{}: {}/{} succeeded, eviction probability {}{}, mean attack accesses {}",
                a.kind,
                stats.successes(),
                stats.trials.len(),
                fmt_sig(p.mean),
                ci(p),
                fmt_sig(stats.attack_accesses().mean)
            );
        }
    }
}

fn run_experiment(spec: &ExperimentSpec) -> Result<()> {
    let stats = harness::run(spec)?;
    report(&stats, &spec.workload);
    if spec.output.is_none() {
        stdout_csv(|w| stats.write_csv(w))?;
    }
    Ok(())
}

fn analyze(a: &AnalyzeArgs, out: Option<&PathBuf>) -> Result<()> {
    let mut p = AnalysisParams::llc_defaults();
    let set = |slot: &mut Option<u64>, v: Option<u64>| {
        if v.is_some() {
            *slot = v;
        }
    };
    set(&mut p.n_lines, a.lines);
    set(&mut p.n_sets, a.sets);
    set(&mut p.assoc, a.assoc);
    set(&mut p.n_skews, a.skews);
    set(&mut p.group_size, a.group_size);
    set(&mut p.start_size, a.start_size);
    set(&mut p.epoch_multiple, a.epoch_multiple);
    set(&mut p.threshold, a.threshold);
    set(&mut p.table_entries, a.table_entries);
    if a.fraction.is_some() {
        p.fraction = a.fraction;
    }
    if a.load.is_some() {
        p.load = a.load;
    }
    let rows = formula_table(&p)?;
    let write = |w: &mut dyn Write| -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["name", "expression", "value", "note"])?;
        for r in &rows {
            let v = r.value.map(fmt_sig).unwrap_or_default();
            csv.write_record([r.name.as_str(), r.expression.as_str(), v.as_str(), r.note.as_str()])?;
        }
        csv.flush().map_err(|e| Error::io("<csv>", e))
    };
    match out {
        Some(path) => {
            let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
            write(&mut f)
        }
        None => stdout_csv(write),
    }
}

fn trace_gen(seed: u64, t: &TraceArgs, out: Option<&PathBuf>) -> Result<()> {
    let mut spec = ExperimentSpec {
        workload: Workload::Trace(TraceSource::default()),
        ..Default::default()
    };
    for (k, v) in t.overrides() {
        spec.set(k, &v)?;
    }
    let Workload::Trace(src) = &spec.workload else {
        unreachable!()
    };
    let geo = CacheGeometry::llc_bank();
    let trace = harness::gen_trace(src, &geo, &mut RngStream::new(seed).derive(purpose::TRACE))?;
    match out {
        Some(path) => {
            let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
            harness::write_trace(io::BufWriter::new(f), &trace).map_err(|e| Error::io(path, e))
        }
        None => harness::write_trace(io::stdout().lock(), &trace).map_err(|e| Error::io("<stdout>", e)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match &cli.cmd {
        Cmd::Simulate { run, trace } => build_spec(run, &[trace.overrides()]).and_then(|s| {
            if !matches!(s.workload, Workload::Trace(_)) {
                return Err(ConfigError::invalid("workload", "simulate needs a trace workload").into());
            }
            run_experiment(&s)
        }),
        Cmd::Attack { run, attack } => {
            let mut ov = attack.overrides();
            if attack.attack.is_none() {
                ov.insert(0, ("attack", "fractional-reduction".into()));
            }
            build_spec(run, &[ov]).and_then(|s| run_experiment(&s))
        }
        Cmd::Sweep {
            run,
            trace,
            attack,
            axis,
            values,
        } => build_spec(run, &[trace.overrides(), attack.overrides()]).and_then(|s| {
            let table = harness::sweep(&s, axis, values)?;
            if s.output.is_none() {
                stdout_csv(|w| table.write_csv(w))?;
            }
            Ok(())
        }),
        Cmd::Analyze { params, out } => analyze(params, out.as_ref()),
        Cmd::TraceGen { seed, trace, out } => trace_gen(seed.unwrap_or(0), trace, out.as_ref()),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
