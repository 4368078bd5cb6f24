use std::path::PathBuf;

use ratio_scope::bench::{run_bench, BenchConfig, DataSource, LabeledPool, Method};
use ratio_scope::data::Label;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn resplit_follows_protocol() {
    let pool = LabeledPool::load(fixture("iris.csv")).unwrap();
    assert_eq!(pool.dim(), 4);
    let split = pool.split(10, 3).unwrap();
    assert_eq!(split.inliers.len(), 25);
    assert_eq!(split.test.len(), 35);
    assert_eq!(split.labels.iter().filter(|&&l| l == Label::Outlier).count(), 10);
    assert_eq!(pool.split(10, 3).unwrap().test, split.test);
}

#[test]
fn bench_on_bundled_datasets() {
    for (name, dim) in [("iris.csv", 4), ("wine.csv", 13)] {
        let source = DataSource::Csv { path: fixture(name), n_outliers: 10 };
        let cfg = BenchConfig::new(vec![Method::Llr, Method::Kde, Method::Ulsif], 3, 1, source);
        let report = run_bench(&cfg, None, None).unwrap();
        assert_eq!(report.failures(), 0, "{name}");
        assert_eq!(report.results.len(), 1);
        assert_eq!(report.results[0].dim, dim);
        for m in &report.results[0].methods {
            assert_eq!(m.auc_values.len(), 3);
            assert!((0.0..=1.0).contains(&m.mean), "{name} {}: {}", m.name, m.mean);
        }
        // the held-out classes are far from the inlier class on both datasets
        let llr = &report.results[0].methods[0];
        assert!(llr.mean > 0.7, "{name}: llr mean {}", llr.mean);
    }
}
