//! Attacks see hit or miss only: scrambling every scheme-internal field of
//! an access outcome leaves each attack result unchanged.

use randcache::attacks::{
    builder, fast_builder, fractional_reduction, oversubscription_attack, random_group_eviction, simple_reduction,
    AttackOptions, AttackResult, AttackerOracle, Budget, LinePool, OversubOptions,
};
use randcache::error::InvariantViolation;
use randcache::rng::purpose;
use randcache::set_array::SchemeStats;
use randcache::tldr::EpochRecord;
use randcache::{AccessOutcome, Address, CacheGeometry, CacheModel, Owner, RngStream, SchemeConfig, SchemeKind};

struct Scrambled(Box<dyn CacheModel>);

impl CacheModel for Scrambled {
    fn kind(&self) -> SchemeKind {
        self.0.kind()
    }
    fn geometry(&self) -> &CacheGeometry {
        self.0.geometry()
    }
    fn access(&mut self, addr: Address, owner: Owner) -> AccessOutcome {
        let out = self.0.access(addr, owner);
        AccessOutcome {
            hit: out.hit,
            set_probed: out.set_probed ^ 0x5a5,
            skew_probed: out.skew_probed.map(|s| s + 7),
            evicted: Vec::new(),
            spilled_to_buffer: !out.spilled_to_buffer,
        }
    }
    fn flush(&mut self, addr: Address) -> bool {
        self.0.flush(addr)
    }
    fn contains(&self, addr: Address) -> bool {
        self.0.contains(addr)
    }
    fn resident_lines(&self) -> Vec<u64> {
        let mut v = self.0.resident_lines();
        v.reverse();
        v
    }
    fn stats(&self) -> &SchemeStats {
        self.0.stats()
    }
    fn audit(&self) -> Result<(), InvariantViolation> {
        self.0.audit()
    }
    fn epoch_records(&self) -> &[EpochRecord] {
        self.0.epoch_records()
    }
    fn clone_box(&self) -> Box<dyn CacheModel> {
        Box::new(Scrambled(self.0.clone_box()))
    }
    fn reseed(&mut self, rng: &RngStream) {
        self.0.reseed(rng)
    }
}

type Attack = fn(&mut AttackerOracle<'_>, &mut LinePool) -> AttackResult;

fn run<R>(
    cfg: &SchemeConfig,
    seed: u64,
    scramble: bool,
    attack: impl FnOnce(&mut AttackerOracle<'_>, &mut LinePool) -> R,
) -> R {
    let inner = cfg.build(&RngStream::new(seed)).unwrap();
    let mut cache: Box<dyn CacheModel> = if scramble { Box::new(Scrambled(inner)) } else { inner };
    let geo = *cache.geometry();
    let target = Address(0x1234_5678 << 6);
    let mut pool = LinePool::new(RngStream::new(seed).derive(purpose::WARMUP), &geo, target);
    let mut o = AttackerOracle::new(cache.as_mut(), target, Budget::accesses(2_000_000));
    attack(&mut o, &mut pool)
}

#[test]
fn attacks_ignore_scheme_internals() {
    let cases: Vec<(SchemeConfig, Attack)> = vec![
        (SchemeConfig::new(SchemeKind::Sa, 64, 4), |o, p| {
            simple_reduction(o, 128, &AttackOptions::default(), p)
        }),
        (SchemeConfig::new(SchemeKind::Se, 16, 4), |o, p| {
            fractional_reduction(o, 256, 0.5, &AttackOptions::default(), p)
        }),
        (SchemeConfig::new(SchemeKind::Drs, 64, 4).skews(2), |o, p| {
            builder(o, 16, &AttackOptions::default(), p)
        }),
        (SchemeConfig::new(SchemeKind::Se, 64, 8), |o, p| {
            fast_builder(o, 256, &AttackOptions::default(), p)
        }),
        (SchemeConfig::new(SchemeKind::TldrDrp, 64, 8).buffer(0), |o, p| {
            let over = OversubOptions {
                // Table size of a 64 x 8 tldr cache.
                entry_stride: Some(512),
            };
            oversubscription_attack(o, &over, &AttackOptions::default(), p)
        }),
    ];
    for (cfg, attack) in &cases {
        let mut wins = 0;
        for seed in 0..3 {
            let plain = run(cfg, seed, false, *attack);
            let scrambled = run(cfg, seed, true, *attack);
            assert_eq!(plain, scrambled, "{} seed {seed}", cfg.kind);
            wins += plain.succeeded as usize;
        }
        assert!(wins > 0, "{} never succeeded", cfg.kind);
    }
}

#[test]
fn random_group_probability_ignores_scheme_internals() {
    let cfg = SchemeConfig::new(SchemeKind::DeDrp, 64, 8);
    let p = |scramble| run(&cfg, 5, scramble, |o, pool| random_group_eviction(o, 300, 200, pool));
    assert_eq!(p(false), p(true));
}
