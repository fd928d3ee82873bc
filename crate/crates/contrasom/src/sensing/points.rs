//! Point-cloud sensing: ground removal, density clustering, cross-frame
//! cluster tracking and receiver/building point labeling.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::SensingError;

pub const NOISE: i64 = -1;

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Keeps points strictly above the ground threshold.
pub fn remove_ground(cloud: &[[f64; 3]], z_thresh: f64) -> Vec<[f64; 3]> {
    cloud.iter().copied().filter(|p| p[2] > z_thresh).collect()
}

/// Density-based clustering with classic core/border/noise semantics.
///
/// A point is a core point when its eps-neighborhood (itself included)
/// contains at least `min_pts` points. Clusters are grown breadth-first from
/// core points; border points join the first cluster that reaches them.
/// Points are processed in lexicographic (x, y, z) order so the assignment is
/// deterministic regardless of input order. Returns one cluster id per input
/// point, `-1` for noise.
pub fn dbscan(points: &[[f64; 3]], eps: f64, min_pts: usize) -> Vec<i64> {
    assert!(eps > 0.0, "eps must be positive");
    assert!(min_pts >= 1, "min_pts must be at least 1");
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .partial_cmp(&points[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let eps2 = eps * eps;
    let neighbors = |i: usize| -> Vec<usize> {
        (0..n).filter(|&j| dist2(&points[i], &points[j]) <= eps2).collect()
    };
    let core: Vec<bool> = (0..n).map(|i| neighbors(i).len() >= min_pts).collect();

    let mut labels = vec![NOISE; n];
    let mut visited = vec![false; n];
    let mut next_cluster = 0i64;
    for &seed in &order {
        if visited[seed] || !core[seed] {
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        let mut queue = std::collections::VecDeque::from([seed]);
        visited[seed] = true;
        labels[seed] = cluster;
        while let Some(p) = queue.pop_front() {
            for q in neighbors(p) {
                if labels[q] == NOISE {
                    labels[q] = cluster;
                }
                if core[q] && !visited[q] {
                    visited[q] = true;
                    queue.push_back(q);
                }
            }
        }
    }
    labels
}

/// Centroid of each cluster id present in `labels` (noise excluded), sorted
/// by cluster id.
pub fn cluster_centroids(points: &[[f64; 3]], labels: &[i64]) -> Vec<(i64, [f64; 3])> {
    let mut sums: HashMap<i64, ([f64; 3], usize)> = HashMap::new();
    for (p, &l) in points.iter().zip(labels.iter()) {
        if l == NOISE {
            continue;
        }
        let e = sums.entry(l).or_insert(([0.0; 3], 0));
        for a in 0..3 {
            e.0[a] += p[a];
        }
        e.1 += 1;
    }
    let mut out: Vec<(i64, [f64; 3])> = sums
        .into_iter()
        .map(|(l, (s, c))| (l, [s[0] / c as f64, s[1] / c as f64, s[2] / c as f64]))
        .collect();
    out.sort_by_key(|(l, _)| *l);
    out
}

/// Cluster whose centroid is closest to the receiver position; exact ties go
/// to the lowest cluster id.
pub fn match_cluster(
    centroids: &[(i64, [f64; 3])],
    rx_pos: [f64; 3],
) -> Result<i64, SensingError> {
    centroids
        .iter()
        .min_by(|(la, ca), (lb, cb)| {
            dist2(ca, &rx_pos)
                .total_cmp(&dist2(cb, &rx_pos))
                .then(la.cmp(lb))
        })
        .map(|(l, _)| *l)
        .ok_or(SensingError::NoClusters)
}

/// Greedy nearest-centroid association between the previous frame's tracked
/// clusters and the current frame's clusters. Pairs are taken in order of
/// increasing distance, each previous id and each current cluster used at
/// most once, and only pairs within `gate` meters are allowed. Returns, per
/// current cluster, `Some(previous id)` or `None` for unmatched.
pub fn track_clusters(
    prev: &[(i64, [f64; 3])],
    curr: &[[f64; 3]],
    gate: f64,
) -> Vec<Option<i64>> {
    assert!(gate > 0.0, "gate must be positive");
    let gate2 = gate * gate;
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (pi, (_, pc)) in prev.iter().enumerate() {
        for (ci, cc) in curr.iter().enumerate() {
            let d2 = dist2(pc, cc);
            if d2 <= gate2 {
                pairs.push((d2, pi, ci));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut prev_used = vec![false; prev.len()];
    let mut out: Vec<Option<i64>> = vec![None; curr.len()];
    for (_, pi, ci) in pairs {
        if prev_used[pi] || out[ci].is_some() {
            continue;
        }
        prev_used[pi] = true;
        out[ci] = Some(prev[pi].0);
    }
    out
}

/// Stateful wrapper that assigns fresh ids to unmatched clusters and carries
/// centroids between frames. Must be fed frames in timestamp order.
#[derive(Debug, Clone, Default)]
pub struct ClusterTracker {
    tracked: Vec<(i64, [f64; 3])>,
    next_id: i64,
}

impl ClusterTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Associates current centroids with tracked ids; unmatched clusters get
    /// fresh ids. Returns the persistent id per current cluster.
    pub fn update(&mut self, centroids: &[[f64; 3]], gate: f64) -> Vec<i64> {
        let assoc = track_clusters(&self.tracked, centroids, gate);
        let ids: Vec<i64> = assoc
            .iter()
            .map(|m| {
                m.unwrap_or_else(|| {
                    let id = self.next_id;
                    self.next_id += 1;
                    id
                })
            })
            .collect();
        self.next_id = self.next_id.max(ids.iter().copied().max().unwrap_or(-1) + 1);
        self.tracked = ids.iter().copied().zip(centroids.iter().copied()).collect();
        ids
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(i8)]
pub enum PointLabel {
    Building = -1,
    Other = 0,
    Receiver = 1,
}

impl PointLabel {
    pub fn as_f64(self) -> f64 {
        self as i8 as f64
    }
}

/// Geometric rule defining the building half-space, e.g. y > y_build.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BuildingRule {
    /// 0 = x, 1 = y, 2 = z.
    pub axis: usize,
    pub threshold: f64,
}

impl BuildingRule {
    pub fn matches(&self, p: &[f64; 3]) -> bool {
        p[self.axis] > self.threshold
    }
}

#[derive(Debug, Clone)]
pub struct LabeledPointCloud {
    /// (x, y, z, label) rows; label in {-1, 0, 1}.
    pub points: Vec<[f64; 4]>,
    pub receiver_cluster: i64,
    pub n_receiver: usize,
    pub n_building: usize,
    pub n_other: usize,
}

/// Appends the label column: 1 for receiver-cluster points, -1 for building
/// points outside the receiver cluster, 0 otherwise.
pub fn label_points(
    points: &[[f64; 3]],
    labels: &[i64],
    rx_cluster: i64,
    rule: &BuildingRule,
) -> LabeledPointCloud {
    assert_eq!(points.len(), labels.len());
    let mut out = Vec::with_capacity(points.len());
    let (mut n_rx, mut n_b, mut n_o) = (0usize, 0usize, 0usize);
    for (p, &l) in points.iter().zip(labels.iter()) {
        let label = if l == rx_cluster && rx_cluster != NOISE {
            n_rx += 1;
            PointLabel::Receiver
        } else if rule.matches(p) {
            n_b += 1;
            PointLabel::Building
        } else {
            n_o += 1;
            PointLabel::Other
        };
        out.push([p[0], p[1], p[2], label.as_f64()]);
    }
    LabeledPointCloud {
        points: out,
        receiver_cluster: rx_cluster,
        n_receiver: n_rx,
        n_building: n_b,
        n_other: n_o,
    }
}

/// Brute-force reference for `dbscan`: core points from exhaustive
/// neighborhood counts, clusters as the transitive closure of core-to-core
/// eps-adjacency, border points attached to the earliest-formed reachable
/// cluster. Used by the acceptance suite.
pub fn dbscan_reference(points: &[[f64; 3]], eps: f64, min_pts: usize) -> Vec<i64> {
    let n = points.len();
    let eps2 = eps * eps;
    let core: Vec<bool> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| dist2(&points[i], &points[j]) <= eps2)
                .count()
                >= min_pts
        })
        .collect();

    // Transitive closure over core-core adjacency via repeated relaxation.
    let mut comp: Vec<usize> = (0..n).collect();
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..n {
            for j in 0..n {
                if core[i]
                    && core[j]
                    && dist2(&points[i], &points[j]) <= eps2
                    && comp[j] != comp[i]
                {
                    let m = comp[i].min(comp[j]);
                    if comp[i] != m || comp[j] != m {
                        comp[i] = m;
                        comp[j] = m;
                        changed = true;
                    }
                }
            }
        }
    }

    // Order components the same way the implementation discovers them: by
    // their minimal core point in lexicographic order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .partial_cmp(&points[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut comp_to_cluster: HashMap<usize, i64> = HashMap::new();
    let mut next = 0i64;
    for &i in &order {
        if core[i] && !comp_to_cluster.contains_key(&comp[i]) {
            comp_to_cluster.insert(comp[i], next);
            next += 1;
        }
    }

    let mut labels = vec![NOISE; n];
    for i in 0..n {
        if core[i] {
            labels[i] = comp_to_cluster[&comp[i]];
        } else {
            // Border point: earliest cluster containing a core point within eps.
            labels[i] = (0..n)
                .filter(|&j| core[j] && dist2(&points[i], &points[j]) <= eps2)
                .map(|j| comp_to_cluster[&comp[j]])
                .min()
                .unwrap_or(NOISE);
        }
    }
    labels
}
