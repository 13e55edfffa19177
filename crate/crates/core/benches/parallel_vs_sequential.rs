use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use witgen::focal::{slice_all, Level};
use witgen::manifest::MethodLocator;
use witgen::par;

/// A class with `n` methods; `target` is the last one.
fn class_with(n: usize) -> String {
    let mut s = String::from("package bench;\n\npublic class Big {\n    private int count;\n\n");
    for i in 0..n {
        s += &format!("    public int m{i}(int v) {{\n        count += v;\n        return count * {i};\n    }}\n\n");
    }
    s += "    public String target(String s) {\n        return s.trim();\n    }\n}\n";
    s
}

fn slicing(c: &mut Criterion) {
    let loc = MethodLocator {
        class_name: "bench.Big".into(),
        method_name: "target".into(),
        parameter_types: None,
    };
    let sources: Vec<String> = (0..64).map(|i| class_with(20 + i)).collect();
    let mut g = c.benchmark_group("slice_corpus");
    for (name, parallel) in [("sequential", false), ("parallel", true)] {
        g.bench_with_input(BenchmarkId::from_parameter(name), &parallel, |b, &parallel| {
            let work = |src: &String| slice_all(src, &loc).map(|s| s[Level::L3.index()].snippet.len()).unwrap_or(0);
            b.iter(|| {
                if parallel {
                    par::map(&sources, work)
                } else {
                    par::map_sequential(&sources, work)
                }
            })
        });
    }
    g.finish();
}

criterion_group!(benches, slicing);
criterion_main!(benches);
