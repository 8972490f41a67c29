//! Near-duplicate removal by average-linkage agglomerative clustering.
//!
//! Byte-identical texts are grouped before clustering, so exact duplicates
//! always collapse. Clusters are merged greedily while the best average
//! similarity is at least `tau`; each surviving cluster is replaced by one
//! canonical fact. The procedure is repeated on the canonical facts until no
//! merge happens, which makes `dedup_facts` idempotent.

use serde::{Deserialize, Serialize};

use super::ReferenceError;
use crate::gateway::Gateway;
use crate::model::ExtractedFact;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    /// Cosine similarity of gateway embeddings; falls back to Jaccard if the
    /// embedding call fails.
    Embedding,
    Jaccard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalRule {
    /// Most whitespace tokens; ties go to the smaller fact id.
    LongestText,
    /// Most digit-bearing or capitalized tokens (after the first), then
    /// longest, then smaller fact id.
    HighestSpecificity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DedupConfig {
    pub similarity: SimilarityKind,
    pub tau: f64,
    pub canonical_rule: CanonicalRule,
    pub embedding_model: String,
}

impl Default for DedupConfig {
    fn default() -> Self {
        Self {
            similarity: SimilarityKind::Embedding,
            tau: 0.85,
            canonical_rule: CanonicalRule::LongestText,
            embedding_model: "text-embedding-3-small".into(),
        }
    }
}

impl DedupConfig {
    pub fn validate(&self) -> Result<(), ReferenceError> {
        if self.tau > 0.0 && self.tau < 1.0 {
            Ok(())
        } else {
            Err(ReferenceError::InvalidConfig(format!("dedup tau must be in (0, 1), got {}", self.tau)))
        }
    }
}

fn trigrams(text: &str) -> std::collections::BTreeSet<String> {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    if chars.len() < 3 {
        return std::iter::once(chars.iter().collect()).collect();
    }
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

/// Jaccard similarity of lowercased character 3-gram sets.
pub fn jaccard_3gram(a: &str, b: &str) -> f64 {
    let (ga, gb) = (trigrams(a), trigrams(b));
    let inter = ga.intersection(&gb).count();
    let union = ga.len() + gb.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Count of tokens after the first that contain a digit or start uppercase.
pub fn specificity(text: &str) -> usize {
    text.split_whitespace()
        .skip(1)
        .filter(|t| t.chars().any(|c| c.is_ascii_digit()) || t.chars().next().is_some_and(char::is_uppercase))
        .count()
}

/// Average-linkage clustering of items with the given pairwise similarity
/// matrix. Returns clusters as sorted item-index lists, ordered by their
/// smallest member.
pub fn cluster_average_linkage(sim: &[Vec<f64>], tau: f64) -> Vec<Vec<usize>> {
    weighted_clusters(sim, &vec![1; sim.len()], tau)
}

/// Same as [`cluster_average_linkage`] where item `i` stands for `weights[i]`
/// identical members. Merges the closest pair (lowest indices on ties) and
/// updates similarities with the Lance–Williams rule for average linkage.
fn weighted_clusters(sim: &[Vec<f64>], weights: &[usize], tau: f64) -> Vec<Vec<usize>> {
    let n = sim.len();
    let mut s: Vec<Vec<f64>> = sim.to_vec();
    let mut size: Vec<usize> = weights.to_vec();
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut active = vec![true; n];
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if active[j] && best.is_none_or(|(_, _, b)| s[i][j] > b) {
                    best = Some((i, j, s[i][j]));
                }
            }
        }
        let Some((i, j, value)) = best else { break };
        if value < tau {
            break;
        }
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for k in 0..n {
            if active[k] && k != i && k != j {
                let merged = (ni * s[k][i] + nj * s[k][j]) / (ni + nj);
                s[k][i] = merged;
                s[i][k] = merged;
            }
        }
        size[i] += size[j];
        let moved = std::mem::take(&mut members[j]);
        members[i].extend(moved);
        members[i].sort_unstable();
        active[j] = false;
    }
    (0..n).filter(|&i| active[i]).map(|i| members[i].clone()).collect()
}

fn similarity_matrix(texts: &[String], cfg: &DedupConfig, gateway: Option<&Gateway>) -> Vec<Vec<f64>> {
    let n = texts.len();
    let embeddings = match (cfg.similarity, gateway) {
        (SimilarityKind::Embedding, Some(gw)) if n > 1 => match gw.embed(&cfg.embedding_model, texts) {
            Ok(v) => Some(v),
            Err(e) => {
                tracing::warn!(error = %e, "embedding failed; using 3-gram Jaccard similarity");
                None
            }
        },
        (SimilarityKind::Embedding, None) => {
            tracing::warn!("no gateway for embeddings; using 3-gram Jaccard similarity");
            None
        }
        _ => None,
    };
    let mut sim = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = if texts[i] == texts[j] {
                1.0
            } else {
                match &embeddings {
                    Some(e) => e[i].cosine(&e[j]).clamp(-1.0, 1.0),
                    None => jaccard_3gram(&texts[i], &texts[j]),
                }
            };
            sim[i][j] = v;
            sim[j][i] = v;
        }
    }
    sim
}

fn canonical_order(rule: CanonicalRule, a: &ExtractedFact, b: &ExtractedFact) -> std::cmp::Ordering {
    let tokens = |f: &ExtractedFact| f.text.split_whitespace().count();
    let by_len = tokens(b).cmp(&tokens(a));
    let primary = match rule {
        CanonicalRule::LongestText => by_len,
        CanonicalRule::HighestSpecificity => specificity(&b.text).cmp(&specificity(&a.text)).then(by_len),
    };
    primary.then_with(|| a.fact_id.cmp(&b.fact_id))
}

struct Group {
    canonical: ExtractedFact,
    /// Position of the earliest input fact in this group.
    first: usize,
    weight: usize,
}

fn merge_groups(groups: Vec<Group>, clusters: &[Vec<usize>], rule: CanonicalRule) -> Vec<Group> {
    let mut slots: Vec<Option<Group>> = groups.into_iter().map(Some).collect();
    clusters
        .iter()
        .map(|cluster| {
            let parts: Vec<Group> = cluster.iter().map(|&i| slots[i].take().expect("each group used once")).collect();
            let first = parts.iter().map(|g| g.first).min().expect("non-empty cluster");
            let weight = parts.iter().map(|g| g.weight).sum();
            let mut by_first: Vec<&Group> = parts.iter().collect();
            by_first.sort_by_key(|g| g.first);
            let mut docs: Vec<String> = Vec::new();
            for g in &by_first {
                for d in &g.canonical.source_doc_ids {
                    if !docs.contains(d) {
                        docs.push(d.clone());
                    }
                }
            }
            let best = parts
                .iter()
                .min_by(|a, b| canonical_order(rule, &a.canonical, &b.canonical))
                .expect("non-empty cluster");
            Group {
                canonical: ExtractedFact {
                    source_doc_ids: docs,
                    ..best.canonical.clone()
                },
                first,
                weight,
            }
        })
        .collect()
}

/// Removes duplicate and near-duplicate facts. Output keeps one canonical
/// fact per cluster, in order of each cluster's earliest member, with
/// `cluster_id` set to its output position and `source_doc_ids` unioned over
/// the cluster.
pub fn dedup_facts(
    facts: Vec<ExtractedFact>,
    cfg: &DedupConfig,
    gateway: Option<&Gateway>,
) -> Result<Vec<ExtractedFact>, ReferenceError> {
    cfg.validate()?;
    // exact duplicates first
    let mut exact: Vec<Vec<usize>> = Vec::new();
    let mut by_text: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    for (i, f) in facts.iter().enumerate() {
        let slot = *by_text.entry(f.text.as_str()).or_insert_with(|| {
            exact.push(Vec::new());
            exact.len() - 1
        });
        exact[slot].push(i);
    }
    let singles: Vec<Group> = facts
        .into_iter()
        .enumerate()
        .map(|(i, f)| Group {
            canonical: f,
            first: i,
            weight: 1,
        })
        .collect();
    let mut groups = merge_groups(singles, &exact, cfg.canonical_rule);

    loop {
        let texts: Vec<String> = groups.iter().map(|g| g.canonical.text.clone()).collect();
        let sim = similarity_matrix(&texts, cfg, gateway);
        let weights: Vec<usize> = groups.iter().map(|g| g.weight).collect();
        let clusters = weighted_clusters(&sim, &weights, cfg.tau);
        if clusters.len() == groups.len() {
            break;
        }
        groups = merge_groups(groups, &clusters, cfg.canonical_rule);
    }

    groups.sort_by_key(|g| g.first);
    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(i, g)| ExtractedFact {
            cluster_id: Some(i as u32),
            ..g.canonical
        })
        .collect())
}
