use std::path::{Path, PathBuf};
use std::process::Command;

use predaug::harness::{noise_ladder, SimConfig};

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn load(name: &str) -> SimConfig {
    let text = std::fs::read_to_string(config_path(name)).unwrap();
    SimConfig::parse(&text).unwrap()
}

fn parse_rows(text: &str) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn sine_config_writes_plot_files_with_shrinking_widths() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("sine");
    let out = Command::new(env!("CARGO_BIN_EXE_predaug"))
        .args(["simulate", "--config", config_path("sine.cfg").to_str().unwrap()])
        .args(["--output", prefix.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let width = std::fs::read_to_string(dir.path().join("sine_width.csv")).unwrap();
    let coverage = std::fs::read_to_string(dir.path().join("sine_coverage.csv")).unwrap();
    let header = width.lines().next().unwrap();
    assert_eq!(header.split(',').next(), Some("n"));
    assert_eq!(coverage.lines().next().unwrap(), header);
    let rows = parse_rows(&width);
    assert_eq!(rows.len(), 4);
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["50", "100", "200", "400"]);

    // mean width is nonincreasing in n for every method
    for col in 1..rows[0].len() {
        let widths: Vec<f64> = rows.iter().map(|r| r[col].parse().unwrap()).collect();
        assert!(widths.windows(2).all(|w| w[1] <= w[0]), "column {col}: {widths:?}");
    }
    for row in parse_rows(&coverage) {
        for v in &row[1..] {
            let c: f64 = v.parse().unwrap();
            assert!((0.0..=1.0).contains(&c));
        }
    }
}

#[test]
fn paq_coverage_degrades_with_noise() {
    let cfg = load("sine_noise.cfg");
    let noises = cfg.noise_ladder.clone().unwrap();
    assert_eq!(noises, [0.0, 0.1, 0.2, 0.5, 1.0]);
    let ladder = noise_ladder(&cfg, &noises).unwrap();
    let paq = cfg.methods[2].to_string();
    assert!(paq.starts_with("paq("));
    for &n in &cfg.n_grid {
        let cov: Vec<f64> = ladder.iter().map(|(_, res)| res.row(n, &paq).unwrap().coverage).collect();
        let rises: Vec<f64> = cov.windows(2).map(|w| w[1] - w[0]).filter(|&d| d > 0.0).collect();
        assert!(rises.len() <= 1 && rises.iter().all(|&d| d <= 0.02), "n={n}: {cov:?}");
        assert!(cov[4] < cov[0], "n={n}: {cov:?}");
    }
}
