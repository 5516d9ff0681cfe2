//! Entry-sharing attack: strong against a two-level cache without a victim
//! buffer, stopped by rotating first-level keys.

use randcache::attacks::{oversubscription_attack, AttackOptions, AttackerOracle, Budget, LinePool, OversubOptions};
use randcache::{Address, Owner, RngStream, SchemeConfig, SchemeKind};

fn attempt(cfg: &SchemeConfig, seed: u64, budget: Budget) -> (bool, u64, u64) {
    let mut cache = cfg.build(&RngStream::new(seed)).unwrap();
    let geo = *cache.geometry();
    let target = Address(0x4_4440);
    let mut pool = LinePool::new(RngStream::new(seed + 1000), &geo, target);
    for _ in 0..2 * geo.n_lines {
        cache.access(pool.fresh(), Owner::Other);
    }
    let over = OversubOptions {
        entry_stride: Some(cfg.table_size() as u64),
    };
    let mut o = AttackerOracle::new(cache.as_mut(), target, budget);
    let r = oversubscription_attack(&mut o, &over, &AttackOptions::default(), &mut pool);
    (r.succeeded, r.accesses_used, r.epochs_elapsed)
}

fn main() {
    let weak = SchemeConfig::new(SchemeKind::TldrDrp, 256, 16).buffer(0);
    let (ok, acc, _) = attempt(&weak, 1, Budget::UNLIMITED);
    println!("tldr-drp, no buffer: succeeded = {ok} after {acc} accesses");
    let strong = SchemeConfig::new(SchemeKind::DeDrp, 256, 16);
    let budget = Budget {
        max_epochs: Some(10),
        ..Budget::UNLIMITED
    };
    let wins = (0..10).filter(|&s| attempt(&strong, 10 + s, budget).0).count();
    println!("de-drp: {wins}/10 attempts succeeded within 10 epochs");
}
