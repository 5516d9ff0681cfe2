//! Drive the harness from a configuration file, override one field, run
//! trials in parallel and sweep a parameter. Prints CSV.

use std::path::Path;

use randcache::harness::{run, sweep, ExperimentSpec};

const CONFIG: &str = r#"
seed = 42
trials = 4

[scheme]
kind = "de-drp"
n_sets = 256
assoc = 16

[workload.attack]
kind = "random-group"
group_size = 1000
probes = 500
"#;

fn main() {
    let mut spec = ExperimentSpec::from_toml(CONFIG, Path::new("inline.toml")).unwrap();
    spec.set("trials", "6").unwrap();
    let stats = run(&spec).unwrap();
    let p = stats.eviction_probability();
    println!("p(evict) = {:.4} +- {:.4}", p.mean, p.ci95.unwrap_or(0.0));
    print!("{}", stats.to_csv_string().unwrap());
    let values: Vec<String> = ["250", "1000", "4096"].map(String::from).to_vec();
    print!("{}", sweep(&spec, "g", &values).unwrap().to_csv_string().unwrap());
}
