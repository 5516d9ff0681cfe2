use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error, Result};
use crate::geometry::{Address, CacheGeometry};
use crate::rng::RngStream;

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceKind {
    #[default]
    Uniform,
    Looping,
    PointerChase,
    File,
}

impl std::str::FromStr for TraceKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "uniform" | "uniform-random" => Ok(TraceKind::Uniform),
            "looping" | "looping-working-set" | "loop" => Ok(TraceKind::Looping),
            "pointer-chase" | "chase" => Ok(TraceKind::PointerChase),
            "file" => Ok(TraceKind::File),
            _ => Err(ConfigError::invalid("trace", format!("unknown trace kind `{s}`"))),
        }
    }
}

/// Where a trial's accesses come from. Sizes are in cache lines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSource {
    pub kind: TraceKind,
    /// Line-address space the trace draws from.
    pub span: u64,
    /// Distinct lines touched by looping and pointer-chase traces.
    pub working_set: u64,
    /// Line distance between consecutive working-set lines.
    pub stride: u64,
    /// Accesses per trial; a file trace defaults to the whole file.
    pub length: Option<u64>,
    /// Leading accesses replayed before statistics start.
    pub warmup: u64,
    pub path: Option<PathBuf>,
}

impl Default for TraceSource {
    fn default() -> Self {
        TraceSource {
            kind: TraceKind::Uniform,
            span: 1 << 30,
            working_set: 1 << 15,
            stride: 1,
            length: None,
            warmup: 0,
            path: None,
        }
    }
}

pub const DEFAULT_TRACE_LENGTH: u64 = 1_000_000;

impl TraceSource {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.span == 0 {
            return Err(ConfigError::invalid("span", "must be positive"));
        }
        if self.stride == 0 {
            return Err(ConfigError::invalid("stride", "must be positive"));
        }
        match self.kind {
            TraceKind::Looping | TraceKind::PointerChase => {
                if self.working_set == 0 {
                    return Err(ConfigError::invalid("working_set", "must be positive"));
                }
                let needed = self.working_set.checked_mul(self.stride);
                if needed.is_none_or(|n| n > self.span) {
                    return Err(ConfigError::invalid(
                        "working_set",
                        format!(
                            "working set of {} lines at stride {} does not fit in a span of {} lines",
                            self.working_set, self.stride, self.span
                        ),
                    ));
                }
            }
            TraceKind::File if self.path.is_none() => return Err(ConfigError::missing("path")),
            _ => {}
        }
        Ok(())
    }

    fn generated_len(&self) -> u64 {
        self.warmup + self.length.unwrap_or(DEFAULT_TRACE_LENGTH)
    }
}

/// Produce the full trace for one trial, warm-up included.
pub fn gen_trace(src: &TraceSource, geo: &CacheGeometry, rng: &mut RngStream) -> Result<Vec<Address>> {
    src.validate()?;
    let at = |line: u64| Address::from_line(line, geo);
    let n = src.generated_len();
    let base_line = |rng: &mut RngStream| -> u64 {
        let room = src.span - src.working_set * src.stride;
        if room == 0 {
            0
        } else {
            rng.next_u64() % (room + 1)
        }
    };
    let trace = match src.kind {
        TraceKind::Uniform => (0..n).map(|_| at(rng.next_u64() % src.span)).collect(),
        TraceKind::Looping => {
            let base = base_line(rng);
            (0..n).map(|i| at(base + (i % src.working_set) * src.stride)).collect()
        }
        TraceKind::PointerChase => {
            let base = base_line(rng);
            let ws = src.working_set as usize;
            // Sattolo's shuffle: one cycle through every working-set line.
            let mut next: Vec<u32> = (0..ws as u32).collect();
            for i in (1..ws).rev() {
                let j = rng.uniform(i);
                next.swap(i, j);
            }
            let mut cur = rng.uniform(ws);
            (0..n)
                .map(|_| {
                    let a = at(base + cur as u64 * src.stride);
                    cur = next[cur] as usize;
                    a
                })
                .collect()
        }
        TraceKind::File => {
            let path = src.path.as_deref().expect("validated");
            let mut t = read_trace(path)?;
            if let Some(len) = src.length {
                t.truncate((src.warmup + len).min(t.len() as u64) as usize);
            }
            t
        }
    };
    Ok(trace)
}

/// Parse trace text: one `R <hex>` or `W <hex>` per line, `#` comments.
pub fn parse_trace(text: &str, path: &Path) -> Result<Vec<Address>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let mut parts = line.split_whitespace();
        let op = parts.next().unwrap_or("");
        if !matches!(op, "R" | "W" | "r" | "w") {
            return Err(bad(format!("expected `R` or `W`, found `{op}`")));
        }
        let hex = parts.next().ok_or_else(|| bad("missing address".into()))?;
        if parts.next().is_some() {
            return Err(bad("trailing fields".into()));
        }
        let digits = hex.strip_prefix("0x").or_else(|| hex.strip_prefix("0X")).unwrap_or(hex);
        let addr = u64::from_str_radix(digits, 16).map_err(|e| bad(format!("bad address `{hex}`: {e}")))?;
        out.push(Address(addr));
    }
    Ok(out)
}

pub fn read_trace(path: &Path) -> Result<Vec<Address>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace(&text, path)
}

/// Write `trace` as read accesses.
pub fn write_trace(mut w: impl Write, trace: &[Address]) -> io::Result<()> {
    for a in trace {
        writeln!(w, "R {:#x}", a.0)?;
    }
    w.flush()
}
