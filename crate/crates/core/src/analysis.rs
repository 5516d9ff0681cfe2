//! Closed-form models for attack cost, eviction probability and iTable
//! oversubscription. These are the oracles the simulations are checked
//! against and back the `analyze` subcommand.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Every symbol the formulas take. Fields a formula does not need may be
/// left unset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisParams {
    pub n_lines: Option<u64>,
    pub n_sets: Option<u64>,
    pub assoc: Option<u64>,
    pub n_skews: Option<u64>,
    pub group_size: Option<u64>,
    pub start_size: Option<u64>,
    pub fraction: Option<f64>,
    pub epoch_multiple: Option<u64>,
    pub load: Option<f64>,
    pub threshold: Option<u64>,
    pub table_entries: Option<u64>,
}

impl AnalysisParams {
    /// The default LLC bank: 2048 sets, 16 ways, 2 skews, iTable of N
    /// entries, load 2, threshold 9, 1000-line group, f = 0.5.
    pub fn llc_defaults() -> Self {
        AnalysisParams {
            n_lines: Some(1 << 15),
            n_sets: Some(1 << 11),
            assoc: Some(16),
            n_skews: Some(2),
            group_size: Some(1000),
            start_size: Some(1024),
            fraction: Some(0.5),
            epoch_multiple: None,
            load: Some(2.0),
            threshold: Some(9),
            table_entries: Some(1 << 15),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let counts = [
            ("n_lines", self.n_lines),
            ("n_sets", self.n_sets),
            ("assoc", self.assoc),
            ("n_skews", self.n_skews),
            ("start_size", self.start_size),
            ("table_entries", self.table_entries),
        ];
        for (name, v) in counts {
            if v == Some(0) {
                return Err(ConfigError::invalid(name, "must be positive"));
            }
        }
        if let Some(f) = self.fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(ConfigError::invalid("fraction", format!("{f} is outside (0, 1)")));
            }
        }
        if let Some(l) = self.load {
            if !(l > 0.0 && l.is_finite()) {
                return Err(ConfigError::invalid("load", format!("{l} is not positive")));
            }
        }
        Ok(())
    }
}

fn need<T: Copy>(v: Option<T>, name: &str) -> Result<T, ConfigError> {
    v.ok_or_else(|| ConfigError::missing(name))
}

/// Probability that loading `g` uniformly placed lines evicts one given
/// line from an `n`-line cache: `1 - (1 - 1/n)^g`.
pub fn evict_probability(n: u64, g: u64) -> f64 {
    assert!(n >= 1, "cache must hold at least one line");
    if g == 0 {
        return 0.0;
    }
    let survive = (g as f64 * (-1.0 / n as f64).ln_1p()).exp();
    1.0 - survive
}

/// Which Poisson quantity `poisson_oversubscribed` reports.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoissonConvention {
    /// `P[X >= k]`.
    #[default]
    Tail,
    /// `P[X = k]`.
    Point,
}

fn ln_poisson_pmf(lambda: f64, k: u64) -> f64 {
    let ln_fact: f64 = (2..=k).map(|i| (i as f64).ln()).sum();
    -lambda + k as f64 * lambda.ln() - ln_fact
}

/// Expected number of the `t` table entries receiving at least `k` (or
/// exactly `k`) lines when each receives Poisson(`lambda`) lines.
pub fn poisson_oversubscribed(lambda: f64, k: u64, t: u64, conv: PoissonConvention) -> f64 {
    assert!(lambda > 0.0 && lambda.is_finite(), "load must be positive");
    let t = t as f64;
    match conv {
        PoissonConvention::Point => t * ln_poisson_pmf(lambda, k).exp(),
        PoissonConvention::Tail if k == 0 => t,
        PoissonConvention::Tail => {
            // Terms are summed upward from k; past the mode they shrink
            // geometrically, so stop once they no longer move the sum.
            let mut ln_term = ln_poisson_pmf(lambda, k);
            let mut sum = 0.0;
            let mut j = k;
            loop {
                let term = ln_term.exp();
                sum += term;
                if j as f64 > lambda && term <= sum * 1e-17 {
                    break;
                }
                j += 1;
                ln_term += lambda.ln() - (j as f64).ln();
            }
            t * sum.min(1.0)
        }
    }
}

/// Smallest built-group size with a good chance to evict on a DRS cache.
pub fn min_scg_size_drs(s: u64, w: u64) -> u64 {
    assert!(s >= 1 && w >= 1);
    s * w
}

/// Epoch length, in multiples of N, at which the CEASER-S builder attack
/// completes in expectation.
pub fn ceaser_s_epoch_bound(w: u64, s: u64) -> u64 {
    assert!(s >= 1 && w >= 1);
    w * s
}

/// Epoch bound divided by a safety gap between attack and refresh rate.
pub fn ceaser_s_safe_epoch(w: u64, s: u64, safety: f64) -> f64 {
    assert!(safety > 0.0);
    ceaser_s_epoch_bound(w, s) as f64 / safety
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostModel {
    /// One-at-a-time reduction: `L(L+1)/2`.
    Arithmetic,
    /// Fractional reduction: `L/(1-f)`.
    Geometric,
    /// Builder on a set-associative mapping: `N*w`.
    Builder,
    /// Repeated group reloads: `w*L`.
    FastBuilder,
    /// Builder on a DRS cache: `N*s*w`.
    DrsBuilder,
}

impl CostModel {
    pub const ALL: [CostModel; 5] = [
        CostModel::Arithmetic,
        CostModel::Geometric,
        CostModel::Builder,
        CostModel::FastBuilder,
        CostModel::DrsBuilder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CostModel::Arithmetic => "arithmetic",
            CostModel::Geometric => "geometric",
            CostModel::Builder => "builder",
            CostModel::FastBuilder => "fast-builder",
            CostModel::DrsBuilder => "drs-builder",
        }
    }
}

/// Expected attack accesses under `model`.
pub fn attack_cost(model: CostModel, p: &AnalysisParams) -> Result<f64, ConfigError> {
    p.validate()?;
    Ok(match model {
        CostModel::Arithmetic => {
            let l = need(p.start_size, "start_size")? as f64;
            l * (l + 1.0) / 2.0
        }
        CostModel::Geometric => {
            let l = need(p.start_size, "start_size")? as f64;
            let f = need(p.fraction, "fraction")?;
            l / (1.0 - f)
        }
        CostModel::Builder => (need(p.n_lines, "n_lines")? * need(p.assoc, "assoc")?) as f64,
        CostModel::FastBuilder => (need(p.assoc, "assoc")? * need(p.start_size, "start_size")?) as f64,
        CostModel::DrsBuilder => {
            (need(p.n_lines, "n_lines")? * need(p.n_skews, "n_skews")? * need(p.assoc, "assoc")?) as f64
        }
    })
}

/// Per-line tag-store overhead of a TLDR cache.
#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct StorageOverhead {
    pub bits_per_line: u32,
    /// Overhead relative to a 550-bit line (512 data bits plus tag/state).
    pub ratio: f64,
}

pub const LINE_BITS: u32 = 550;

/// `2*log2(S) + 1 + log2(N)` bits per line.
pub fn storage_overhead_bits(s: u64, n: u64) -> Result<StorageOverhead, ConfigError> {
    for (name, v) in [("n_sets", s), ("n_lines", n)] {
        if v == 0 || !v.is_power_of_two() {
            return Err(ConfigError::invalid(name, format!("{v} is not a power of two")));
        }
    }
    let bits = 2 * s.trailing_zeros() + 1 + n.trailing_zeros();
    Ok(StorageOverhead {
        bits_per_line: bits,
        ratio: bits as f64 / LINE_BITS as f64,
    })
}

/// One line of the `analyze` table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FormulaRow {
    pub name: String,
    pub expression: String,
    pub value: Option<f64>,
    pub note: String,
}

fn row(name: &str, expr: &str, value: Result<f64, ConfigError>) -> FormulaRow {
    match value {
        Ok(v) => FormulaRow {
            name: name.into(),
            expression: expr.into(),
            value: Some(v),
            note: String::new(),
        },
        Err(e) => FormulaRow {
            name: name.into(),
            expression: expr.into(),
            value: None,
            note: format!("needs {}", e.field),
        },
    }
}

/// Evaluate every formula that `p` has enough parameters for.
pub fn formula_table(p: &AnalysisParams) -> Result<Vec<FormulaRow>, ConfigError> {
    p.validate()?;
    let mut rows = Vec::new();
    rows.push(row(
        "evict_probability",
        "1 - (1 - 1/N)^g",
        need(p.n_lines, "n_lines").and_then(|n| Ok(evict_probability(n, need(p.group_size, "group_size")?))),
    ));
    let poisson = |conv| -> Result<f64, ConfigError> {
        Ok(poisson_oversubscribed(
            need(p.load, "load")?,
            need(p.threshold, "threshold")?,
            need(p.table_entries, "table_entries")?,
            conv,
        ))
    };
    rows.push(row(
        "oversubscribed_entries",
        "T * P[X >= k], X ~ Poisson(lambda)",
        poisson(PoissonConvention::Tail),
    ));
    rows.push(row(
        "oversubscribed_entries_point",
        "T * P[X = k]",
        poisson(PoissonConvention::Point),
    ));
    rows.push(row(
        "min_scg_size_drs",
        "s * w",
        need(p.n_skews, "n_skews").and_then(|s| Ok(min_scg_size_drs(s, need(p.assoc, "assoc")?) as f64)),
    ));
    rows.push(row(
        "ceaser_s_epoch_bound",
        "k = w * s",
        need(p.n_skews, "n_skews").and_then(|s| Ok(ceaser_s_epoch_bound(need(p.assoc, "assoc")?, s) as f64)),
    ));
    let exprs = ["L(L+1)/2", "L/(1-f)", "N*w", "w*L", "N*s*w"];
    for (m, e) in CostModel::ALL.into_iter().zip(exprs) {
        rows.push(row(
            &format!("cost_{}", m.name().replace('-', "_")),
            e,
            attack_cost(m, p),
        ));
    }
    match (p.n_sets, p.n_lines) {
        (Some(s), Some(n)) => {
            let o = storage_overhead_bits(s, n)?;
            rows.push(row(
                "storage_bits_per_line",
                "2*log2(S) + 1 + log2(N)",
                Ok(o.bits_per_line as f64),
            ));
            rows.push(row("storage_ratio", "bits / 550", Ok(o.ratio)));
        }
        _ => rows.push(row(
            "storage_bits_per_line",
            "2*log2(S) + 1 + log2(N)",
            Err(ConfigError::missing(if p.n_sets.is_none() {
                "n_sets"
            } else {
                "n_lines"
            })),
        )),
    }
    Ok(rows)
}
