//! Seeded experiments: configuration, trace generation, Monte-Carlo trials
//! and CSV output.
//!
//! An [`ExperimentSpec`] fully determines a run. Trial `i` draws all of its
//! randomness from `RngStream::new(seed).derive(TRIAL + i)`, so results do
//! not depend on scheduling and parallel runs match serial ones byte for
//! byte. Configuration is a sectioned key-value file; [`ExperimentSpec::set`]
//! applies single `key = value` overrides on top of it.

mod stats;
mod trace;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use stats::{fmt_sig, AttackOutcome, Estimate, RunStats, TrialRecord};
pub use trace::{gen_trace, parse_trace, read_trace, write_trace, TraceKind, TraceSource, DEFAULT_TRACE_LENGTH};

use crate::attacks::{self, AttackKind, AttackOptions, AttackerOracle, Budget, LinePool, OversubOptions};
use crate::error::{ConfigError, Error, Result};
use crate::geometry::Address;
use crate::rng::{purpose, RngStream};
use crate::schemes::{EpochUnit, FirstLevelKind, SchemeConfig};
use crate::set_array::Owner;

/// An attack workload. Unset sizes take per-attack defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Starting group `L` for reductions and the fast builder, group size
    /// `g` for random-group probing. Defaults to `N / 2` and `N`.
    pub group_size: Option<usize>,
    /// Share kept per fractional-reduction round.
    pub fraction: f64,
    /// Fresh background accesses before the attack starts; default `2 * N`.
    pub warmup: Option<u64>,
    /// Probes per trial for random-group probing.
    pub probes: usize,
    pub entry_stride: Option<u64>,
    pub budget: Budget,
    pub options: AttackOptions,
}

impl Default for AttackSpec {
    fn default() -> Self {
        AttackSpec {
            kind: AttackKind::FractionalReduction,
            group_size: None,
            fraction: 0.5,
            warmup: None,
            probes: 1000,
            entry_stride: None,
            budget: Budget::UNLIMITED,
            options: AttackOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Workload {
    Trace(TraceSource),
    Attack(AttackSpec),
}

impl Default for Workload {
    fn default() -> Self {
        Workload::Trace(TraceSource::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub seed: u64,
    pub trials: usize,
    /// Run trials on the rayon pool. Output is identical either way.
    pub parallel: bool,
    pub output: Option<PathBuf>,
    pub scheme: SchemeConfig,
    pub workload: Workload,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            seed: 0,
            trials: 1,
            parallel: true,
            output: None,
            scheme: SchemeConfig::default(),
            workload: Workload::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| ConfigError::invalid(key, format!("cannot parse `{value}`: {e}")))
}

/// Integers also accept `2^k` and scientific forms such as `1e6`.
fn parse_count(key: &str, value: &str) -> Result<u64, ConfigError> {
    let v = value.trim().replace('_', "");
    if let Some((b, e)) = v.split_once('^') {
        let b: u64 = parse(key, b)?;
        let e: u32 = parse(key, e)?;
        return b
            .checked_pow(e)
            .ok_or_else(|| ConfigError::invalid(key, "overflows 64 bits"));
    }
    if let Ok(n) = v.parse::<u64>() {
        return Ok(n);
    }
    let f: f64 = parse(key, &v)?;
    if f < 0.0 || f.fract() != 0.0 || f >= u64::MAX as f64 {
        return Err(ConfigError::invalid(
            key,
            format!("`{value}` is not a non-negative integer"),
        ));
    }
    Ok(f as u64)
}

fn parse_usize(key: &str, value: &str) -> Result<usize, ConfigError> {
    parse_count(key, value).map(|n| n as usize)
}

fn parse_opt_count(key: &str, value: &str) -> Result<Option<u64>, ConfigError> {
    match value.trim() {
        "" | "none" | "default" => Ok(None),
        v => parse_count(key, v).map(Some),
    }
}

impl ExperimentSpec {
    /// Parse a configuration file body; `path` only labels errors.
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |s| text[..s.start].matches('\n').count() + 1);
            Error::Parse {
                path: path.to_path_buf(),
                line,
                message: e.message().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    /// Apply one override. Keys name spec fields, with short aliases
    /// (`sets`, `w`, `s`, `N`, `E`, `g`, `f`, ...). Setting `trace` or
    /// `attack` switches the workload kind; other workload keys must match
    /// the current kind.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let sc = &mut self.scheme;
        match key {
            "seed" => self.seed = parse_count(key, value)?,
            "trials" => self.trials = parse_usize(key, value)?,
            "parallel" => self.parallel = parse(key, value)?,
            "output" | "out" => self.output = Some(PathBuf::from(value)),
            "scheme" | "kind" => sc.kind = value.parse()?,
            "n_sets" | "sets" | "S" => sc.n_sets = parse_usize(key, value)?,
            "assoc" | "ways" | "w" => sc.assoc = parse_usize(key, value)?,
            "n_lines" | "lines" | "N" => {
                let n = parse_usize(key, value)?;
                if sc.assoc == 0 || n % sc.assoc != 0 {
                    return Err(ConfigError::invalid(
                        key,
                        format!("{n} lines do not divide into {}-way sets", sc.assoc),
                    ));
                }
                sc.n_sets = n / sc.assoc;
            }
            "n_skews" | "skews" | "s" => sc.n_skews = parse_usize(key, value)?,
            "epoch_len" | "epoch" | "E" => sc.epoch_len = parse_opt_count(key, value)?,
            "epoch_unit" => {
                sc.epoch_unit = match value.trim() {
                    "evictions" => EpochUnit::Evictions,
                    "accesses" => EpochUnit::Accesses,
                    v => {
                        return Err(ConfigError::invalid(
                            key,
                            format!("expected `evictions` or `accesses`, found `{v}`"),
                        ))
                    }
                }
            }
            "table_entries" | "table" | "T" => sc.table_entries = parse_opt_count(key, value)?.map(|n| n as usize),
            "buffer_capacity" | "buffer" => sc.buffer_capacity = parse_usize(key, value)?,
            "oversub_threshold" | "threshold" => {
                sc.oversub_threshold = parse_opt_count(key, value)?.map(|n| n as usize)
            }
            "first_level" => {
                sc.first_level = match value.trim() {
                    "index-bits" | "index_bits" => FirstLevelKind::IndexBits,
                    "encrypted" => FirstLevelKind::Encrypted,
                    v => {
                        return Err(ConfigError::invalid(
                            key,
                            format!("expected `index-bits` or `encrypted`, found `{v}`"),
                        ))
                    }
                }
            }
            "identity_keys" => sc.identity_keys = parse(key, value)?,
            "trace" => {
                let kind = value.parse()?;
                match &mut self.workload {
                    Workload::Trace(t) => t.kind = kind,
                    w => {
                        *w = Workload::Trace(TraceSource {
                            kind,
                            ..Default::default()
                        })
                    }
                }
            }
            "attack" => {
                let kind = value.parse()?;
                match &mut self.workload {
                    Workload::Attack(a) => a.kind = kind,
                    w => {
                        *w = Workload::Attack(AttackSpec {
                            kind,
                            ..Default::default()
                        })
                    }
                }
            }
            "span" | "working_set" | "stride" | "length" | "warmup" | "path"
                if matches!(self.workload, Workload::Trace(_)) =>
            {
                let Workload::Trace(t) = &mut self.workload else {
                    unreachable!()
                };
                match key {
                    "span" => t.span = parse_count(key, value)?,
                    "working_set" => t.working_set = parse_count(key, value)?,
                    "stride" => t.stride = parse_count(key, value)?,
                    "length" => t.length = parse_opt_count(key, value)?,
                    "warmup" => t.warmup = parse_count(key, value)?,
                    _ => t.path = Some(PathBuf::from(value)),
                }
            }
            "group_size" | "g" | "L" | "fraction" | "f" | "warmup" | "probes" | "entry_stride" | "max_accesses"
            | "max_epochs" | "max_evictions" | "scg_size" | "test_passes" | "verify_trials" | "success_threshold" => {
                let Workload::Attack(a) = &mut self.workload else {
                    return Err(ConfigError::invalid(key, "only applies to attack workloads"));
                };
                match key {
                    "group_size" | "g" | "L" => a.group_size = parse_opt_count(key, value)?.map(|n| n as usize),
                    "fraction" | "f" => a.fraction = parse(key, value)?,
                    "warmup" => a.warmup = parse_opt_count(key, value)?,
                    "probes" => a.probes = parse_usize(key, value)?,
                    "entry_stride" => a.entry_stride = parse_opt_count(key, value)?,
                    "max_accesses" => a.budget.max_accesses = parse_opt_count(key, value)?,
                    "max_epochs" => a.budget.max_epochs = parse_opt_count(key, value)?,
                    "max_evictions" => a.budget.max_evictions = parse_opt_count(key, value)?,
                    "scg_size" => a.options.scg_size = parse_opt_count(key, value)?.map(|n| n as usize),
                    "test_passes" => a.options.test_passes = parse_usize(key, value)?,
                    "verify_trials" => a.options.verify.trials = parse_usize(key, value)?,
                    _ => a.options.success_threshold = parse(key, value)?,
                }
            }
            "span" | "working_set" | "stride" | "length" | "path" => {
                return Err(ConfigError::invalid(key, "only applies to trace workloads"));
            }
            _ => return Err(ConfigError::invalid(key, "unknown parameter")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trials == 0 {
            return Err(ConfigError::invalid("trials", "must be at least 1"));
        }
        self.scheme.validate()?;
        match &self.workload {
            Workload::Trace(t) => t.validate(),
            Workload::Attack(a) => {
                if !(a.fraction > 0.0 && a.fraction < 1.0) {
                    return Err(ConfigError::invalid("fraction", "must lie strictly between 0 and 1"));
                }
                if a.group_size == Some(0) {
                    return Err(ConfigError::invalid("group_size", "must be positive"));
                }
                if a.options.verify.trials == 0 {
                    return Err(ConfigError::invalid("verify_trials", "must be at least 1"));
                }
                if a.kind == AttackKind::RandomGroup && a.probes == 0 {
                    return Err(ConfigError::invalid("probes", "must be at least 1"));
                }
                Ok(())
            }
        }
    }
}

fn run_trace_trial(spec: &ExperimentSpec, src: &TraceSource, i: usize, rng: &RngStream) -> Result<TrialRecord> {
    let mut cache = spec.scheme.build(rng)?;
    let trace = gen_trace(src, cache.geometry(), &mut rng.derive(purpose::TRACE))?;
    let warm = (src.warmup as usize).min(trace.len());
    for &a in &trace[..warm] {
        cache.access(a, Owner::Other);
    }
    let before = cache.stats().clone();
    for &a in &trace[warm..] {
        cache.access(a, Owner::Other);
    }
    Ok(TrialRecord::from_stats(i, &before, cache.stats()))
}

fn run_attack_trial(spec: &ExperimentSpec, a: &AttackSpec, i: usize, rng: &RngStream) -> Result<TrialRecord> {
    let mut cache = spec.scheme.build(rng)?;
    let geo = *cache.geometry();
    let n = geo.n_lines;
    let mut pick = rng.derive(purpose::ATTACK);
    let target = Address::from_line(pick.next_u64() & geo.line_mask() & ((1 << 40) - 1), &geo);
    let mut pool = LinePool::new(pick.derive(purpose::ATTACK), &geo, target);
    for _ in 0..a.warmup.unwrap_or(2 * n as u64) {
        cache.access(pool.fresh(), Owner::Other);
    }
    let before = cache.stats().clone();
    let l = a.group_size.unwrap_or(n / 2);
    let mut o = AttackerOracle::new(cache.as_mut(), target, a.budget);
    let opts = &a.options;
    let result = match a.kind {
        AttackKind::SimpleReduction => attacks::simple_reduction(&mut o, l, opts, &mut pool),
        AttackKind::FractionalReduction => attacks::fractional_reduction(&mut o, l, a.fraction, opts, &mut pool),
        AttackKind::Builder => {
            let size = opts.scg_size(&geo);
            attacks::builder(&mut o, size, opts, &mut pool)
        }
        AttackKind::FastBuilder => attacks::fast_builder(&mut o, l, opts, &mut pool),
        AttackKind::Oversubscription => {
            let over = OversubOptions {
                entry_stride: a.entry_stride,
            };
            attacks::oversubscription_attack(&mut o, &over, opts, &mut pool)
        }
        AttackKind::ItableOversubscription => attacks::itable_oversubscription_attack(&mut o, l, opts, &mut pool),
        AttackKind::RandomGroup => {
            let g = a.group_size.unwrap_or(n);
            let p = attacks::random_group_eviction(&mut o, g, a.probes, &mut pool);
            attacks::AttackResult {
                attack: AttackKind::RandomGroup,
                succeeded: p >= opts.success_threshold,
                scg: None,
                accesses_used: 0,
                group_load_accesses: 0,
                evictions_observed: 0,
                epochs_elapsed: o.epochs_elapsed(),
                eviction_probability: Some(p),
                note: String::new(),
            }
        }
    };
    let mut rec = TrialRecord::from_stats(i, &before, cache.stats());
    rec.attack = Some((&result).into());
    Ok(rec)
}

fn run_trial(spec: &ExperimentSpec, i: usize) -> Result<TrialRecord> {
    let rng = RngStream::new(spec.seed).derive(purpose::TRIAL + i as u64);
    match &spec.workload {
        Workload::Trace(t) => run_trace_trial(spec, t, i, &rng),
        Workload::Attack(a) => run_attack_trial(spec, a, i, &rng),
    }
}

/// Execute every trial and gather records in trial order. Writes the CSV
/// to `spec.output` when set.
pub fn run(spec: &ExperimentSpec) -> Result<RunStats> {
    spec.validate()?;
    let trials: Vec<TrialRecord> = if spec.parallel {
        (0..spec.trials)
            .into_par_iter()
            .map(|i| run_trial(spec, i))
            .collect::<Result<_>>()?
    } else {
        (0..spec.trials).map(|i| run_trial(spec, i)).collect::<Result<_>>()?
    };
    let stats = RunStats { trials };
    if let Some(path) = &spec.output {
        write_file(path, |w| stats.write_csv(w))?;
    }
    Ok(stats)
}

pub(crate) fn write_file(path: &Path, f: impl FnOnce(&mut fs::File) -> Result<()>) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f(&mut file)?;
    file.flush().map_err(|e| Error::io(path, e))
}

/// Summary rows of a parameter sweep, keyed by the axis value.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub axis: String,
    pub rows: Vec<(String, RunStats)>,
}

impl SweepTable {
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(stats::header(&["axis", "value"]))?;
        for (v, s) in &self.rows {
            let mut row = vec![self.axis.clone(), v.clone()];
            row.extend(s.summary_row());
            out.write_record(row)?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv is utf-8"))
    }
}

/// One [`run`] per value of `axis`, every other parameter taken from
/// `base`. Writes the table to `base.output` when set.
pub fn sweep(base: &ExperimentSpec, axis: &str, values: &[String]) -> Result<SweepTable> {
    let mut rows = Vec::with_capacity(values.len());
    for v in values {
        let mut spec = base.clone();
        spec.output = None;
        spec.set(axis, v)?;
        rows.push((v.clone(), run(&spec)?));
    }
    let table = SweepTable {
        axis: axis.to_string(),
        rows,
    };
    if let Some(path) = &base.output {
        write_file(path, |w| table.write_csv(w))?;
    }
    Ok(table)
}
