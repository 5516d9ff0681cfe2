use std::io::Write;

use serde::Serialize;

use crate::attacks::AttackResult;
use crate::error::Result;
use crate::set_array::SchemeStats;

/// Mean across trials with the half-width of its 95% normal interval.
/// The interval is absent below two trials.
#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci95: Option<f64>,
}

impl Estimate {
    pub fn of(values: &[f64]) -> Estimate {
        let n = values.len();
        if n == 0 {
            return Estimate { mean: 0.0, ci95: None };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let ci95 = (n >= 2).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            1.96 * (var / n as f64).sqrt()
        });
        Estimate { mean, ci95 }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci95.is_some_and(|h| (x - self.mean).abs() <= h)
    }
}

/// Outcome of one trial. Attack fields stay `None` for trace workloads.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub accesses: u64,
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    pub relocations: u64,
    pub cleaner_forced: u64,
    pub buffer_peak: u64,
    pub buffer_overflows: u64,
    pub epochs: u64,
    pub attack: Option<AttackOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttackOutcome {
    pub succeeded: bool,
    pub accesses_used: u64,
    pub evictions_observed: u64,
    pub eviction_probability: Option<f64>,
    pub scg_size: usize,
}

impl From<&AttackResult> for AttackOutcome {
    fn from(r: &AttackResult) -> Self {
        AttackOutcome {
            succeeded: r.succeeded,
            accesses_used: r.accesses_used,
            evictions_observed: r.evictions_observed,
            eviction_probability: r.eviction_probability,
            scg_size: r.scg.as_ref().map_or(0, |g| g.len()),
        }
    }
}

impl TrialRecord {
    /// Counters accumulated between `before` and `after`.
    pub fn from_stats(trial: usize, before: &SchemeStats, after: &SchemeStats) -> Self {
        TrialRecord {
            trial,
            accesses: after.accesses - before.accesses,
            hits: after.hits - before.hits,
            misses: after.misses - before.misses,
            evictions: after.total_evictions() - before.total_evictions(),
            relocations: after.relocations - before.relocations,
            cleaner_forced: after.cleaner_forced - before.cleaner_forced,
            buffer_peak: after.buffer_peak,
            buffer_overflows: after.buffer_overflows - before.buffer_overflows,
            epochs: after.epochs - before.epochs,
            attack: None,
        }
    }

    pub fn miss_rate(&self) -> f64 {
        if self.accesses == 0 {
            0.0
        } else {
            self.misses as f64 / self.accesses as f64
        }
    }
}

/// Per-trial records of one run, in trial order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunStats {
    pub trials: Vec<TrialRecord>,
}

impl RunStats {
    pub fn estimate(&self, f: impl Fn(&TrialRecord) -> f64) -> Estimate {
        Estimate::of(&self.trials.iter().map(f).collect::<Vec<_>>())
    }

    pub fn miss_rate(&self) -> Estimate {
        self.estimate(TrialRecord::miss_rate)
    }

    pub fn hits(&self) -> u64 {
        self.trials.iter().map(|t| t.hits).sum()
    }

    pub fn misses(&self) -> u64 {
        self.trials.iter().map(|t| t.misses).sum()
    }

    pub fn accesses(&self) -> u64 {
        self.trials.iter().map(|t| t.accesses).sum()
    }

    pub fn buffer_peak(&self) -> u64 {
        self.trials.iter().map(|t| t.buffer_peak).max().unwrap_or(0)
    }

    /// Fraction of attack trials that succeeded.
    pub fn success_rate(&self) -> Estimate {
        self.estimate(|t| t.attack.as_ref().map_or(0.0, |a| a.succeeded as u8 as f64))
    }

    pub fn successes(&self) -> usize {
        self.trials
            .iter()
            .filter(|t| t.attack.as_ref().is_some_and(|a| a.succeeded))
            .count()
    }

    pub fn eviction_probability(&self) -> Estimate {
        let v: Vec<f64> = self
            .trials
            .iter()
            .filter_map(|t| t.attack.as_ref().and_then(|a| a.eviction_probability))
            .collect();
        Estimate::of(&v)
    }

    pub fn attack_accesses(&self) -> Estimate {
        self.estimate(|t| t.attack.as_ref().map_or(0.0, |a| a.accesses_used as f64))
    }

    /// Write one row per trial and a closing `summary` row of means.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(header(&[]))?;
        for t in &self.trials {
            out.write_record(trial_row(t))?;
        }
        out.write_record(self.summary_row())?;
        out.flush().map_err(|e| crate::error::Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv is utf-8"))
    }

    pub(crate) fn summary_row(&self) -> Vec<String> {
        let est = |f: &dyn Fn(&TrialRecord) -> f64| fmt_sig(self.estimate(f).mean);
        let attack = |f: fn(&AttackOutcome) -> f64| {
            let v: Vec<f64> = self.trials.iter().filter_map(|t| t.attack.as_ref().map(f)).collect();
            if v.is_empty() {
                String::new()
            } else {
                fmt_sig(Estimate::of(&v).mean)
            }
        };
        let ci = |e: Estimate| e.ci95.map(fmt_sig).unwrap_or_default();
        let is_attack = self.trials.iter().any(|t| t.attack.is_some());
        let ep = self.eviction_probability();
        vec![
            "summary".into(),
            self.trials.len().to_string(),
            est(&|t| t.accesses as f64),
            est(&|t| t.hits as f64),
            est(&|t| t.misses as f64),
            est(&TrialRecord::miss_rate),
            est(&|t| t.evictions as f64),
            est(&|t| t.relocations as f64),
            est(&|t| t.cleaner_forced as f64),
            est(&|t| t.buffer_peak as f64),
            est(&|t| t.buffer_overflows as f64),
            est(&|t| t.epochs as f64),
            attack(|a| a.succeeded as u8 as f64),
            attack(|a| a.accesses_used as f64),
            attack(|a| a.evictions_observed as f64),
            if is_attack { fmt_sig(ep.mean) } else { String::new() },
            attack(|a| a.scg_size as f64),
            ci(self.miss_rate()),
            if is_attack {
                ci(self.success_rate())
            } else {
                String::new()
            },
            if is_attack { ci(ep) } else { String::new() },
        ]
    }
}

pub(crate) const COLUMNS: [&str; 20] = [
    "row",
    "trial",
    "accesses",
    "hits",
    "misses",
    "miss_rate",
    "evictions",
    "relocations",
    "cleaner_forced",
    "buffer_peak",
    "buffer_overflows",
    "epochs",
    "succeeded",
    "attack_accesses",
    "evictions_observed",
    "eviction_probability",
    "scg_size",
    "miss_rate_ci95",
    "success_ci95",
    "eviction_probability_ci95",
];

/// `COLUMNS` preceded by `lead`.
pub(crate) fn header(lead: &[&str]) -> Vec<String> {
    lead.iter().chain(COLUMNS.iter()).map(|s| s.to_string()).collect()
}

fn trial_row(t: &TrialRecord) -> Vec<String> {
    let a = t.attack.as_ref();
    let opt = |f: &dyn Fn(&AttackOutcome) -> String| a.map(f).unwrap_or_default();
    vec![
        "trial".into(),
        t.trial.to_string(),
        t.accesses.to_string(),
        t.hits.to_string(),
        t.misses.to_string(),
        fmt_sig(t.miss_rate()),
        t.evictions.to_string(),
        t.relocations.to_string(),
        t.cleaner_forced.to_string(),
        t.buffer_peak.to_string(),
        t.buffer_overflows.to_string(),
        t.epochs.to_string(),
        opt(&|a| (a.succeeded as u8).to_string()),
        opt(&|a| a.accesses_used.to_string()),
        opt(&|a| a.evictions_observed.to_string()),
        opt(&|a| a.eviction_probability.map(fmt_sig).unwrap_or_default()),
        opt(&|a| a.scg_size.to_string()),
        String::new(),
        String::new(),
        String::new(),
    ]
}

/// Six significant digits, plain notation where it stays short.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-5..15).contains(&mag) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - mag).max(0) as usize;
    let scale = 10f64.powi((5 - mag).min(0).abs());
    let rounded = if mag > 5 { (x / scale).round() * scale } else { x };
    format!("{rounded:.decimals$}")
}
