//! Fixture loading and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use factscope::gateway::MockScript;
use factscope::runner::RunConfig;

pub fn fixture_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// The golden config with its input paths made absolute and the output
/// directory set to `out`.
pub fn golden_config(out: &Path) -> RunConfig {
    let dir = fixture_dir("golden");
    let mut cfg = RunConfig::from_path(&dir.join("config.json")).unwrap();
    cfg.prompts_path = dir.join(&cfg.prompts_path);
    cfg.knowledge.location = dir.join(&cfg.knowledge.location).display().to_string();
    cfg.mock_script = cfg.mock_script.map(|m| dir.join(m));
    cfg.output_dir = out.to_path_buf();
    cfg
}

pub fn golden_script() -> MockScript {
    let text = std::fs::read_to_string(fixture_dir("golden").join("mock.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn golden_expected() -> serde_json::Value {
    let text = std::fs::read_to_string(fixture_dir("golden").join("expected.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Naive average-linkage clustering: every step recomputes the mean pairwise
/// similarity of every cluster pair from the item matrix and merges the best
/// pair while it reaches `tau`. Clusters come back sorted by first member.
pub fn naive_average_linkage(sim: &[Vec<f64>], tau: f64) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = (0..sim.len()).map(|i| vec![i]).collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut total = 0.0;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        total += sim[i][j];
                    }
                }
                let avg = total / (clusters[a].len() * clusters[b].len()) as f64;
                if best.is_none_or(|(s, _, _)| avg > s) {
                    best = Some((avg, a, b));
                }
            }
        }
        match best {
            Some((s, a, b)) if s >= tau => {
                let merged = clusters.remove(b);
                clusters[a].extend(merged);
                clusters[a].sort_unstable();
            }
            _ => break,
        }
    }
    clusters.sort_by_key(|c| c[0]);
    clusters
}
