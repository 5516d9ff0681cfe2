//! Cache mapping schemes behind one access interface.
//!
//! | kind          | first level            | second level        | dynamics                     |
//! |---------------|------------------------|---------------------|------------------------------|
//! | `sa`          | set bits               | -                   | none                         |
//! | `se`          | encrypted set bits     | -                   | none                         |
//! | `de`          | encrypted set bits     | -                   | key rotation, set relocation |
//! | `srs` / `drs` | keyed index per skew   | -                   | static / random skew pick    |
//! | `drs-de`      | per-skew rotating keys | -                   | random skew + key rotation   |
//! | `tlsr-*`      | set bits or encrypted  | static table        | none                         |
//! | `tldr-*`      | see [`crate::tldr`]    | iTable              | eviction-driven              |

mod ceaser;
mod skewed;
mod static_map;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use ceaser::{CeaserCache, DeState};
pub use skewed::{SkewSelect, SkewedCache};
pub use static_map::{FirstLevel, StaticCache, StaticMap};

use crate::error::{ConfigError, InvariantViolation};
use crate::geometry::{Address, CacheGeometry};
use crate::rng::RngStream;
use crate::set_array::{AccessOutcome, Owner, SchemeStats};
use crate::tldr::{EpochRecord, TldrCache};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    Sa,
    Se,
    De,
    Srs,
    Drs,
    DrsDe,
    TlsrSe,
    TlsrSrp,
    TlsrSeSrp,
    TldrDe,
    TldrDrp,
    DeDrp,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 12] = [
        SchemeKind::Sa,
        SchemeKind::Se,
        SchemeKind::De,
        SchemeKind::Srs,
        SchemeKind::Drs,
        SchemeKind::DrsDe,
        SchemeKind::TlsrSe,
        SchemeKind::TlsrSrp,
        SchemeKind::TlsrSeSrp,
        SchemeKind::TldrDe,
        SchemeKind::TldrDrp,
        SchemeKind::DeDrp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Sa => "sa",
            SchemeKind::Se => "se",
            SchemeKind::De => "de",
            SchemeKind::Srs => "srs",
            SchemeKind::Drs => "drs",
            SchemeKind::DrsDe => "drs-de",
            SchemeKind::TlsrSe => "tlsr-se",
            SchemeKind::TlsrSrp => "tlsr-srp",
            SchemeKind::TlsrSeSrp => "tlsr-se-srp",
            SchemeKind::TldrDe => "tldr-de",
            SchemeKind::TldrDrp => "tldr-drp",
            SchemeKind::DeDrp => "de-drp",
        }
    }

    pub fn is_skewed(self) -> bool {
        matches!(self, SchemeKind::Srs | SchemeKind::Drs | SchemeKind::DrsDe)
    }

    pub fn is_tldr(self) -> bool {
        matches!(self, SchemeKind::TldrDe | SchemeKind::TldrDrp | SchemeKind::DeDrp)
    }

    /// Set mapping never changes after construction.
    pub fn is_static(self) -> bool {
        matches!(
            self,
            SchemeKind::Sa
                | SchemeKind::Se
                | SchemeKind::Srs
                | SchemeKind::TlsrSe
                | SchemeKind::TlsrSrp
                | SchemeKind::TlsrSeSrp
        )
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        let alias = match norm.as_str() {
            "ceaser" => "de",
            "ceaser-s" => "drs-de",
            "se+drp" | "se-drp" => "tldr-drp",
            "de+srp" | "de-srp" => "tldr-de",
            "de+drp" => "de-drp",
            "tlsr-se+srp" => "tlsr-se-srp",
            other => other,
        };
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == alias)
            .ok_or_else(|| ConfigError::invalid("scheme", format!("unknown scheme kind `{s}`")))
    }
}

/// Unit in which TLDR epochs are counted.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpochUnit {
    #[default]
    Evictions,
    Accesses,
}

/// Everything needed to construct any scheme. Unset optional fields take
/// the per-scheme defaults documented on each accessor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub n_sets: usize,
    pub assoc: usize,
    pub n_skews: usize,
    /// DE / CEASER-S: accesses per epoch. TLDR: epoch length in `epoch_unit`.
    pub epoch_len: Option<u64>,
    pub epoch_unit: EpochUnit,
    /// TLSR / TLDR table entries.
    pub table_entries: Option<usize>,
    /// TLDR victim buffer; 0 disables it.
    pub buffer_capacity: usize,
    pub oversub_threshold: Option<usize>,
    /// First-level index for schemes without a DE layer (TLDR-DRP).
    pub first_level: FirstLevelKind,
    /// Replace every key with the identity permutation (test hook).
    pub identity_keys: bool,
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FirstLevelKind {
    #[default]
    IndexBits,
    Encrypted,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            kind: SchemeKind::Sa,
            n_sets: 2048,
            assoc: 16,
            n_skews: 1,
            epoch_len: None,
            epoch_unit: EpochUnit::Evictions,
            table_entries: None,
            buffer_capacity: 32,
            oversub_threshold: None,
            first_level: FirstLevelKind::IndexBits,
            identity_keys: false,
        }
    }
}

impl SchemeConfig {
    pub fn new(kind: SchemeKind, n_sets: usize, assoc: usize) -> Self {
        SchemeConfig {
            kind,
            n_sets,
            assoc,
            ..Default::default()
        }
    }

    pub fn skews(mut self, n_skews: usize) -> Self {
        self.n_skews = n_skews;
        self
    }

    pub fn epoch(mut self, len: u64) -> Self {
        self.epoch_len = Some(len);
        self
    }

    pub fn buffer(mut self, capacity: usize) -> Self {
        self.buffer_capacity = capacity;
        self
    }

    pub fn geometry(&self) -> Result<CacheGeometry, ConfigError> {
        let skews = if self.kind.is_skewed() { self.n_skews } else { 1 };
        CacheGeometry::with_skews(self.n_sets, self.assoc, skews)
    }

    pub fn n_lines(&self) -> usize {
        self.n_sets * self.assoc
    }

    /// CEASER pacing: an epoch of `100 * N` accesses unless overridden.
    pub fn de_epoch_accesses(&self) -> u64 {
        self.epoch_len.unwrap_or(100 * self.n_lines() as u64)
    }

    /// TLSR defaults to `S` entries, TLDR to `N`.
    pub fn table_size(&self) -> usize {
        self.table_entries.unwrap_or(if self.kind.is_tldr() {
            self.n_lines()
        } else {
            self.n_sets
        })
    }

    /// TLDR epoch length, `2 * N` by default.
    pub fn tldr_epoch_len(&self) -> u64 {
        self.epoch_len.unwrap_or(2 * self.n_lines() as u64)
    }

    pub fn threshold(&self) -> usize {
        self.oversub_threshold.unwrap_or(self.assoc).clamp(1, self.assoc)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let geo = self.geometry()?;
        if self.kind.is_skewed() && self.n_skews < 1 {
            return Err(ConfigError::invalid("n_skews", "must be at least 1"));
        }
        if let Some(t) = self.table_entries {
            if t == 0 || !t.is_power_of_two() {
                return Err(ConfigError::invalid(
                    "table_entries",
                    format!("{t} is not a power of two"),
                ));
            }
            if t as u64 > 1u64 << geo.domain_bits().min(40) {
                return Err(ConfigError::invalid("table_entries", "larger than the address space"));
            }
        }
        if self.epoch_len == Some(0) {
            return Err(ConfigError::invalid("epoch_len", "must be positive"));
        }
        if let Some(t) = self.oversub_threshold {
            if t == 0 {
                return Err(ConfigError::invalid("oversub_threshold", "must be positive"));
            }
        }
        Ok(())
    }

    /// Construct the scheme, drawing all keys and table contents from `rng`.
    pub fn build(&self, rng: &RngStream) -> Result<Box<dyn CacheModel>, ConfigError> {
        self.validate()?;
        let model: Box<dyn CacheModel> = match self.kind {
            SchemeKind::Sa | SchemeKind::Se | SchemeKind::TlsrSe | SchemeKind::TlsrSrp | SchemeKind::TlsrSeSrp => {
                Box::new(StaticCache::from_config(self, rng)?)
            }
            SchemeKind::De => Box::new(CeaserCache::from_config(self, rng)?),
            SchemeKind::Srs | SchemeKind::Drs | SchemeKind::DrsDe => Box::new(SkewedCache::from_config(self, rng)?),
            SchemeKind::TldrDe | SchemeKind::TldrDrp | SchemeKind::DeDrp => {
                Box::new(TldrCache::from_config(self, rng)?)
            }
        };
        Ok(model)
    }
}

/// The access interface every scheme implements.
pub trait CacheModel: Send {
    fn kind(&self) -> SchemeKind;

    fn geometry(&self) -> &CacheGeometry;

    fn access(&mut self, addr: Address, owner: Owner) -> AccessOutcome;

    /// Remove `addr` if resident (own-line flush). Returns whether it was.
    fn flush(&mut self, addr: Address) -> bool;

    /// Residency check that does not disturb any state.
    fn contains(&self, addr: Address) -> bool;

    /// Line numbers of every resident line (cache slots and buffer).
    fn resident_lines(&self) -> Vec<u64>;

    fn stats(&self) -> &SchemeStats;

    /// Check the structural invariants of the current state.
    fn audit(&self) -> Result<(), InvariantViolation>;

    /// Per-epoch records (TLDR schemes only).
    fn epoch_records(&self) -> &[EpochRecord] {
        &[]
    }

    /// Number of key rotations so far.
    fn epochs(&self) -> u64 {
        self.stats().epochs
    }

    /// Independent copy of the full state, keys and RNG positions included.
    fn clone_box(&self) -> Box<dyn CacheModel>;

    /// Replace the runtime random streams (replacement, skew choice,
    /// placement draws) without touching keys or contents.
    fn reseed(&mut self, rng: &RngStream);
}

pub(crate) fn check_no_duplicates(lines: &[u64]) -> Result<(), InvariantViolation> {
    let mut sorted = lines.to_vec();
    sorted.sort_unstable();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(InvariantViolation(format!("line {:#x} resident twice", w[0])));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in SchemeKind::ALL {
            assert_eq!(k.name().parse::<SchemeKind>().unwrap(), k);
        }
        assert_eq!("CEASER-S".parse::<SchemeKind>().unwrap(), SchemeKind::DrsDe);
        assert_eq!("de+drp".parse::<SchemeKind>().unwrap(), SchemeKind::DeDrp);
        assert!("lru".parse::<SchemeKind>().is_err());
    }

    #[test]
    fn defaults_follow_the_scheme() {
        let c = SchemeConfig::new(SchemeKind::DeDrp, 2048, 16);
        assert_eq!(c.table_size(), 1 << 15);
        assert_eq!(c.tldr_epoch_len(), 1 << 16);
        assert_eq!(c.threshold(), 16);
        let c = SchemeConfig::new(SchemeKind::TlsrSrp, 2048, 16);
        assert_eq!(c.table_size(), 2048);
        let c = SchemeConfig::new(SchemeKind::De, 2048, 16);
        assert_eq!(c.de_epoch_accesses(), 100 * (1 << 15));
    }

    #[test]
    fn every_kind_builds() {
        let rng = RngStream::new(1);
        for k in SchemeKind::ALL {
            let mut cfg = SchemeConfig::new(k, 64, 4);
            cfg.n_skews = 2;
            let mut m = cfg.build(&rng).unwrap();
            assert_eq!(m.kind(), k);
            let out = m.access(Address(0x1000), Owner::Other);
            assert!(!out.hit);
            assert!(m.access(Address(0x1000), Owner::Other).hit);
            m.audit().unwrap();
        }
    }
}
