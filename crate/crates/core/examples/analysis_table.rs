//! Closed-form cost and probability models for the default LLC bank.

use randcache::analysis::{formula_table, poisson_oversubscribed, AnalysisParams, PoissonConvention};

fn main() {
    let rows = formula_table(&AnalysisParams::llc_defaults()).unwrap();
    for r in &rows {
        match r.value {
            Some(v) => println!("{:<32} {:<40} {v:.6e}", r.name, r.expression),
            None => println!("{:<32} {:<40} ({})", r.name, r.expression, r.note),
        }
    }
    let t = 1u64 << 15;
    for k in [8, 9, 10, 11] {
        println!(
            "entries with at least {k} lines at load 2: {:.3}",
            poisson_oversubscribed(2.0, k, t, PoissonConvention::Tail)
        );
    }
}
