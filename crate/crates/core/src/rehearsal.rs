//! Cluster-based rehearsal of old documents.
//!
//! Titles are embedded as hashed character trigrams, old documents get
//! clustered with k-means, and each incoming document pulls exemplars from
//! its nearest cluster. Exemplar draws consume a per-session pool, so the
//! same old document is not selected twice within one session.

use crate::corpus::Docid;
use crate::error::{Error, Result};
use crate::rng::{self, stable_hash};
use rand::Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

pub const DEFAULT_EMBED_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct DocidEmbedding {
    pub docid: Docid,
    pub vector: Vec<f64>,
}

/// Hashed character-trigram frequency vector over the title, L2-normalized.
/// Titles shorter than three chars hash as a single gram.
pub fn embed_docid(docid: &Docid, dim: usize) -> DocidEmbedding {
    assert!(dim >= 1, "embedding dim must be >= 1");
    let chars: Vec<char> = docid.as_str().chars().collect();
    let mut vector = vec![0.0f64; dim];
    if chars.len() < 3 {
        let h = stable_hash(docid.as_str().as_bytes()) as usize % dim;
        vector[h] += 1.0;
    } else {
        for w in chars.windows(3) {
            let gram: String = w.iter().collect();
            let h = stable_hash(gram.as_bytes()) as usize % dim;
            vector[h] += 1.0;
        }
    }
    let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut vector {
            *v /= norm;
        }
    }
    DocidEmbedding {
        docid: docid.clone(),
        vector,
    }
}

#[derive(Debug, Clone)]
pub struct ClusterModel {
    pub k_clusters: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignment: BTreeMap<Docid, usize>,
    pub inertia: f64,
    /// Inertia after each Lloyd iteration; non-increasing.
    pub inertia_trace: Vec<f64>,
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], point: &[f64]) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = dist_sq(c, point);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Lloyd iterations with k-means++ seeding. Stops at an assignment fixpoint
/// or `max_iters`. Empty clusters are re-seeded from the point farthest from
/// its centroid, which keeps the inertia trace non-increasing.
pub fn kmeans(
    embeddings: &[DocidEmbedding],
    k_clusters: usize,
    max_iters: usize,
    seed: u64,
) -> Result<ClusterModel> {
    let n = embeddings.len();
    if k_clusters < 1 {
        return Err(Error::Validation("k_clusters must be >= 1".into()));
    }
    if k_clusters > n {
        return Err(Error::Validation(format!(
            "k_clusters {k_clusters} exceeds population {n}"
        )));
    }
    let dim = embeddings[0].vector.len();
    let mut rng = rng::rng_for(seed, "rehearsal.kmeans");

    // k-means++ seeding: first centroid uniform, then d^2-weighted.
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k_clusters);
    centroids.push(embeddings[rng.gen_range(0..n)].vector.clone());
    let mut min_d2: Vec<f64> = embeddings
        .iter()
        .map(|e| dist_sq(&e.vector, &centroids[0]))
        .collect();
    while centroids.len() < k_clusters {
        let total: f64 = min_d2.iter().sum();
        let next = if total <= f64::EPSILON {
            // All points coincide with chosen centroids; pick uniformly.
            rng.gen_range(0..n)
        } else {
            let mut r: f64 = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in min_d2.iter().enumerate() {
                r -= d;
                if r <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        };
        centroids.push(embeddings[next].vector.clone());
        for (i, e) in embeddings.iter().enumerate() {
            let d = dist_sq(&e.vector, centroids.last().unwrap());
            if d < min_d2[i] {
                min_d2[i] = d;
            }
        }
    }

    let mut assignment: Vec<usize> = vec![0; n];
    let mut inertia_trace = Vec::new();
    let mut inertia = f64::INFINITY;
    for _ in 0..max_iters.max(1) {
        // Assign.
        let mut changed = false;
        for (i, e) in embeddings.iter().enumerate() {
            let (c, _) = nearest(&centroids, &e.vector);
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        // Update.
        let mut sums = vec![vec![0.0f64; dim]; k_clusters];
        let mut counts = vec![0usize; k_clusters];
        for (i, e) in embeddings.iter().enumerate() {
            counts[assignment[i]] += 1;
            for (s, v) in sums[assignment[i]].iter_mut().zip(&e.vector) {
                *s += v;
            }
        }
        for c in 0..k_clusters {
            if counts[c] > 0 {
                for s in &mut sums[c] {
                    *s /= counts[c] as f64;
                }
                centroids[c] = sums[c].clone();
            } else {
                // Re-seed from the globally farthest point and move it here;
                // its cost drops to zero, so inertia cannot increase.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = dist_sq(&embeddings[a].vector, &centroids[assignment[a]]);
                        let db = dist_sq(&embeddings[b].vector, &centroids[assignment[b]]);
                        da.partial_cmp(&db).unwrap()
                    })
                    .expect("non-empty population");
                centroids[c] = embeddings[far].vector.clone();
                assignment[far] = c;
                changed = true;
            }
        }
        inertia = embeddings
            .iter()
            .enumerate()
            .map(|(i, e)| dist_sq(&e.vector, &centroids[assignment[i]]))
            .sum();
        inertia_trace.push(inertia);
        if !changed {
            break;
        }
    }

    Ok(ClusterModel {
        k_clusters,
        centroids,
        assignment: embeddings
            .iter()
            .enumerate()
            .map(|(i, e)| (e.docid.clone(), assignment[i]))
            .collect(),
        inertia,
        inertia_trace,
    })
}

impl ClusterModel {
    pub fn members(&self) -> Vec<Vec<Docid>> {
        let mut out = vec![Vec::new(); self.k_clusters];
        for (d, &c) in &self.assignment {
            out[c].push(d.clone());
        }
        out
    }

    /// Dump `docid,cluster` rows plus centroid rows for inspection.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut body = String::from("docid,cluster\n");
        for (d, c) in &self.assignment {
            body.push_str(&format!("{},{c}\n", d.as_str().replace(',', " ")));
        }
        body.push_str("centroid,components\n");
        for (i, c) in self.centroids.iter().enumerate() {
            let comps: Vec<String> = c.iter().map(|v| format!("{v:.6}")).collect();
            body.push_str(&format!("{i},{}\n", comps.join(";")));
        }
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }
}

/// Cluster-similarity exemplar selection: each new document draws up to
/// `n_per_doc` old docids from its nearest cluster, without replacement
/// within a session; the union is returned.
pub fn select_exemplars(
    model: &ClusterModel,
    new_docids: &BTreeSet<Docid>,
    n_per_doc: usize,
    embed_dim: usize,
    seed: u64,
) -> BTreeSet<Docid> {
    let mut rng = rng::rng_for(seed, "rehearsal.select");
    let mut pools: Vec<Vec<Docid>> = model.members();
    let mut out = BTreeSet::new();
    if n_per_doc == 0 {
        return out;
    }
    for new_doc in new_docids {
        let emb = embed_docid(new_doc, embed_dim);
        let (mut cluster, _) = nearest(&model.centroids, &emb.vector);
        if pools[cluster].is_empty() {
            // Fall back to the nearest cluster that still has members.
            let mut best: Option<(usize, f64)> = None;
            for (c, members) in pools.iter().enumerate() {
                if members.is_empty() {
                    continue;
                }
                let d = dist_sq(&model.centroids[c], &emb.vector);
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((c, d));
                }
            }
            let Some((c, _)) = best else {
                log::warn!("all rehearsal pools exhausted at {new_doc}");
                break;
            };
            log::warn!("cluster {cluster} exhausted; falling back to {c} for {new_doc}");
            cluster = c;
        }
        let take = n_per_doc.min(pools[cluster].len());
        for _ in 0..take {
            let idx = rng.gen_range(0..pools[cluster].len());
            out.insert(pools[cluster].swap_remove(idx));
        }
    }
    out
}

/// Ablation strategy: uniform draws from the old pool, ignoring clusters.
/// Matches the expected size of the cluster strategy for equal `n_per_doc`.
pub fn random_exemplars(
    old_docids: &BTreeSet<Docid>,
    new_doc_count: usize,
    n_per_doc: usize,
    seed: u64,
) -> BTreeSet<Docid> {
    let mut rng = rng::rng_for(seed, "rehearsal.random");
    let mut pool: Vec<Docid> = old_docids.iter().cloned().collect();
    let mut out = BTreeSet::new();
    let total = n_per_doc.saturating_mul(new_doc_count).min(pool.len());
    for _ in 0..total {
        let idx = rng.gen_range(0..pool.len());
        out.insert(pool.swap_remove(idx));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(t: &str) -> Docid {
        Docid::new(t).unwrap()
    }

    #[test]
    fn embeddings_are_unit_norm_and_deterministic() {
        for title in ["Microsoft", "A", "Nelson Mandela 70th Birthday Tribute"] {
            let e = embed_docid(&d(title), DEFAULT_EMBED_DIM);
            let norm: f64 = e.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9, "{title}: {norm}");
        }
        assert_eq!(
            embed_docid(&d("Microsoft"), 64).vector,
            embed_docid(&d("Microsoft"), 64).vector
        );
    }

    #[test]
    fn trigram_overlap_orders_similarity() {
        let cos = |a: &str, b: &str| -> f64 {
            let ea = embed_docid(&d(a), DEFAULT_EMBED_DIM);
            let eb = embed_docid(&d(b), DEFAULT_EMBED_DIM);
            ea.vector.iter().zip(&eb.vector).map(|(x, y)| x * y).sum()
        };
        assert!(cos("Microsoft", "Microsoft Windows") > cos("Microsoft", "Zebra"));
    }

    #[test]
    fn kmeans_degenerate_cases() {
        let points: Vec<DocidEmbedding> = ["Alpha", "Beta", "Gamma", "Delta"]
            .iter()
            .map(|t| embed_docid(&d(t), 32))
            .collect();
        // k = population: every point its own cluster, inertia 0.
        let m = kmeans(&points, 4, 10, 1).unwrap();
        assert!(m.inertia < 1e-12);
        let clusters: BTreeSet<usize> = m.assignment.values().copied().collect();
        assert_eq!(clusters.len(), 4);
        // k = 1: centroid is the mean vector.
        let m = kmeans(&points, 1, 10, 1).unwrap();
        for (c, comp) in m.centroids[0].iter().enumerate() {
            let mean: f64 = points.iter().map(|p| p.vector[c]).sum::<f64>() / 4.0;
            assert!((comp - mean).abs() < 1e-12);
        }
        // k > population is an error.
        assert!(kmeans(&points, 5, 10, 1).is_err());
    }

    /// Brute-force best 2-partition inertia for a tiny instance.
    fn exhaustive_two_partition(points: &[DocidEmbedding]) -> f64 {
        let n = points.len();
        let dim = points[0].vector.len();
        let mut best = f64::INFINITY;
        for mask in 1..(1u32 << n) - 1 {
            let mut cost = 0.0;
            for side in [0u32, 1] {
                let members: Vec<&DocidEmbedding> = (0..n)
                    .filter(|&i| ((mask >> i) & 1) == side)
                    .map(|i| &points[i])
                    .collect();
                if members.is_empty() {
                    continue;
                }
                let mut centroid = vec![0.0f64; dim];
                for m in &members {
                    for (c, v) in centroid.iter_mut().zip(&m.vector) {
                        *c += v;
                    }
                }
                for c in &mut centroid {
                    *c /= members.len() as f64;
                }
                for m in &members {
                    cost += dist_sq(&m.vector, &centroid);
                }
            }
            if cost < best {
                best = cost;
            }
        }
        best
    }

    #[test]
    fn two_blob_instance_matches_exhaustive_optimum() {
        // Two tight groups of similar titles.
        let titles = [
            "Harbor Delta",
            "Harbor Dells",
            "Harbor Dunes",
            "Quartz Summit",
            "Quartz Summet",
            "Quartz Sumter",
        ];
        let points: Vec<DocidEmbedding> = titles.iter().map(|t| embed_docid(&d(t), 64)).collect();
        let m = kmeans(&points, 2, 20, 3).unwrap();
        let brute = exhaustive_two_partition(&points);
        assert!(
            (m.inertia - brute).abs() < 1e-9,
            "kmeans {} vs exhaustive {brute}",
            m.inertia
        );
        // Assignment separates the blobs.
        let c0 = m.assignment[&d("Harbor Delta")];
        assert_eq!(m.assignment[&d("Harbor Dells")], c0);
        assert_eq!(m.assignment[&d("Harbor Dunes")], c0);
        let c1 = m.assignment[&d("Quartz Summit")];
        assert_ne!(c0, c1);
        assert_eq!(m.assignment[&d("Quartz Summet")], c1);
        assert_eq!(m.assignment[&d("Quartz Sumter")], c1);
    }

    #[test]
    fn inertia_trace_is_non_increasing() {
        let titles: Vec<String> = (0..40).map(|i| format!("Doc {} {}", i % 7, i)).collect();
        let points: Vec<DocidEmbedding> = titles.iter().map(|t| embed_docid(&d(t), 48)).collect();
        for seed in 0..5 {
            let m = kmeans(&points, 5, 20, seed).unwrap();
            for w in m.inertia_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "trace {:?}", m.inertia_trace);
            }
        }
    }

    #[test]
    fn exemplars_come_from_old_pool_and_respect_clamps() {
        let old: Vec<DocidEmbedding> = ["Harbor One", "Harbor Two", "Harbor Three"]
            .iter()
            .map(|t| embed_docid(&d(t), 64))
            .collect();
        let model = kmeans(&old, 1, 10, 0).unwrap();
        let new_docs: BTreeSet<Docid> = [d("Harbor Four")].into();

        // n_per_doc = 0 -> empty.
        assert!(select_exemplars(&model, &new_docs, 0, 64, 1).is_empty());
        // Ask for 5 from a 3-member cluster -> all 3.
        let got = select_exemplars(&model, &new_docs, 5, 64, 1);
        assert_eq!(got.len(), 3);
        let old_set: BTreeSet<Docid> = old.iter().map(|e| e.docid.clone()).collect();
        assert!(got.is_subset(&old_set));
        assert!(got.is_disjoint(&new_docs));
    }

    #[test]
    fn exemplar_clusters_match_some_new_doc_assignment() {
        let titles: Vec<String> = (0..24).map(|i| format!("Entry {} {}", i % 4, i)).collect();
        let old: Vec<DocidEmbedding> = titles.iter().map(|t| embed_docid(&d(t), 64)).collect();
        let model = kmeans(&old, 4, 20, 2).unwrap();
        let new_docs: BTreeSet<Docid> = [d("Entry 1 99"), d("Entry 3 98")].into();
        let got = select_exemplars(&model, &new_docs, 2, 64, 3);
        assert!(!got.is_empty());
        let new_clusters: BTreeSet<usize> = new_docs
            .iter()
            .map(|nd| nearest(&model.centroids, &embed_docid(nd, 64).vector).0)
            .collect();
        for ex in &got {
            assert!(
                new_clusters.contains(&model.assignment[ex]),
                "exemplar {ex} from cluster {} not matching any new doc",
                model.assignment[ex]
            );
        }
    }

    #[test]
    fn random_rehearsal_matches_expected_size() {
        let old: BTreeSet<Docid> = (0..30).map(|i| d(&format!("Old {i}"))).collect();
        let got = random_exemplars(&old, 5, 2, 7);
        assert_eq!(got.len(), 10);
        assert!(got.is_subset(&old));
        // Determinism.
        assert_eq!(got, random_exemplars(&old, 5, 2, 7));
    }
}
