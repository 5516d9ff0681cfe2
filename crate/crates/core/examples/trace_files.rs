//! Generate a pointer-chase trace, write it as text, read it back and
//! replay it through the harness.

use randcache::harness::{gen_trace, read_trace, run, write_trace, ExperimentSpec, TraceKind, TraceSource, Workload};
use randcache::{CacheGeometry, RngStream, SchemeConfig, SchemeKind};

fn main() {
    let dir = std::env::temp_dir().join("randcache-trace-example");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("chase.trace");
    let src = TraceSource {
        kind: TraceKind::PointerChase,
        working_set: 3000,
        length: Some(50_000),
        ..Default::default()
    };
    let trace = gen_trace(&src, &CacheGeometry::llc_bank(), &mut RngStream::new(8)).unwrap();
    write_trace(std::io::BufWriter::new(std::fs::File::create(&path).unwrap()), &trace).unwrap();
    assert_eq!(read_trace(&path).unwrap(), trace);
    let spec = ExperimentSpec {
        scheme: SchemeConfig::new(SchemeKind::TldrDe, 256, 16),
        workload: Workload::Trace(TraceSource {
            kind: TraceKind::File,
            path: Some(path.clone()),
            warmup: 3000,
            ..Default::default()
        }),
        ..Default::default()
    };
    let stats = run(&spec).unwrap();
    println!(
        "{}: {} accesses after warm-up, miss rate {:.4}",
        path.display(),
        stats.accesses(),
        stats.miss_rate().mean
    );
}
