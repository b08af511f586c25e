//! Group-average agglomerative hierarchical clustering over a pairwise
//! distance matrix, plus a threshold cut that turns the merge tree into
//! flat clusters.
//!
//! Node ids are assigned by creation order: leaves are 0..M, the k-th merge
//! gets id M+k. Each step merges the globally closest pair of clusters
//! under group-average linkage; among equal-distance candidates the pair
//! with the lexicographically least (smaller id, larger id) wins, which
//! makes the result deterministic across platforms.
//!
//! Merge distances for the new cluster are maintained with the weighted
//! average update
//!
//! ```text
//! d(Cz, Ck) = (|Cx| * d(Cx, Ck) + |Cy| * d(Cy, Ck)) / (|Cx| + |Cy|)
//! ```
//!
//! which equals the definition (mean over all cross-cluster pairs) and
//! keeps the whole run at O(M^2) distance updates.

use serde_json::json;

use crate::distance::DistanceMatrix;

/// One merge step: the two node ids joined and the group-average distance
/// between them at merge time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
}

/// Binary merge tree produced by [`agglomerate`]. For M leaves there are
/// exactly M-1 merges and every node id feeds into at most one merge.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    /// Record indices at the leaves, in input order.
    pub leaves: Vec<usize>,
    /// Merges in creation order.
    pub merges: Vec<Merge>,
}

/// A partition of the dendrogram's leaves, produced by [`cut`].
#[derive(Debug, Clone, PartialEq)]
pub struct FlatClusters {
    /// Disjoint non-empty clusters of leaf indices, each sorted ascending,
    /// ordered by their smallest member.
    pub clusters: Vec<Vec<usize>>,
    /// The threshold the partition was cut at.
    pub tau: f64,
}

impl Dendrogram {
    /// leaves + merges.
    pub fn node_count(&self) -> usize {
        self.leaves.len() + self.merges.len()
    }

    /// Serializes as `{"leaves":[...],"merges":[[left,right,distance],...]}`
    /// with distances rounded to 9 significant digits.
    pub fn to_json(&self) -> String {
        let merges: Vec<_> = self
            .merges
            .iter()
            .map(|m| json!([m.left, m.right, round_sig9(m.distance)]))
            .collect();
        json!({ "leaves": self.leaves, "merges": merges }).to_string()
    }

    /// Checks the structural invariants: merge count, node ids referring
    /// only to earlier nodes, and no node consumed twice.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.leaves.len();
        if n > 0 && self.merges.len() != n - 1 {
            return Err(format!(
                "expected {} merges for {} leaves, found {}",
                n - 1,
                n,
                self.merges.len()
            ));
        }
        let mut consumed = vec![false; self.node_count()];
        for (k, m) in self.merges.iter().enumerate() {
            let id = n + k;
            for child in [m.left, m.right] {
                if child >= id {
                    return Err(format!("merge {k} references later node {child}"));
                }
                if consumed[child] {
                    return Err(format!("node {child} consumed twice"));
                }
                consumed[child] = true;
            }
        }
        Ok(())
    }
}

fn round_sig9(x: f64) -> f64 {
    format!("{x:.8e}").parse().expect("formatted float reparses")
}

/// Mean packet distance over all cross-pairs of two disjoint, non-empty
/// index sets. Panics on an empty cluster.
pub fn group_average(cx: &[usize], cy: &[usize], m: &DistanceMatrix) -> f64 {
    assert!(
        !cx.is_empty() && !cy.is_empty(),
        "group average of an empty cluster"
    );
    let mut sum = 0.0;
    for &i in cx {
        for &j in cy {
            sum += m.get(i, j);
        }
    }
    sum / (cx.len() * cy.len()) as f64
}

/// Builds the full merge tree: start from singleton clusters and repeatedly
/// join the globally closest pair under group-average linkage until one
/// cluster remains. Deterministic for a given matrix.
pub fn agglomerate(m: &DistanceMatrix) -> Dendrogram {
    let n = m.len();
    let leaves: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    if n <= 1 {
        return Dendrogram { leaves, merges };
    }

    let total = 2 * n - 1;
    let mut dist = vec![0.0f64; total * total];
    for i in 0..n {
        for j in i + 1..n {
            let d = m.get(i, j);
            dist[i * total + j] = d;
            dist[j * total + i] = d;
        }
    }
    let mut size = vec![0usize; total];
    size[..n].fill(1);

    // Active node ids, kept ascending; new ids only ever grow.
    let mut active: Vec<usize> = (0..n).collect();
    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for (pos, &u) in active.iter().enumerate() {
            for &v in &active[pos + 1..] {
                let d = dist[u * total + v];
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, u, v));
                }
            }
        }
        let (d, u, v) = best.expect("at least two active clusters");

        let z = n + step;
        let (su, sv) = (size[u] as f64, size[v] as f64);
        for &k in &active {
            if k == u || k == v {
                continue;
            }
            let dzk = (su * dist[u * total + k] + sv * dist[v * total + k]) / (su + sv);
            dist[z * total + k] = dzk;
            dist[k * total + z] = dzk;
        }
        size[z] = size[u] + size[v];
        active.retain(|&x| x != u && x != v);
        active.push(z);
        merges.push(Merge {
            left: u,
            right: v,
            distance: d,
        });
    }
    Dendrogram { leaves, merges }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        parent[rb] = ra;
    }
}

/// Flattens the dendrogram at threshold `tau`: merges with distance above
/// `tau` are discarded and the connected components of the remaining merges
/// (plus orphan leaves) become the clusters.
pub fn cut(d: &Dendrogram, tau: f64) -> FlatClusters {
    assert!(tau >= 0.0, "tau must be non-negative");
    let n = d.leaves.len();
    let total = d.node_count();
    let mut parent: Vec<usize> = (0..total).collect();
    for (k, m) in d.merges.iter().enumerate() {
        if m.distance <= tau {
            let id = n + k;
            union(&mut parent, id, m.left);
            union(&mut parent, id, m.right);
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for pos in 0..n {
        let root = find(&mut parent, pos);
        groups.entry(root).or_default().push(d.leaves[pos]);
    }
    let mut clusters: Vec<Vec<usize>> = groups.into_values().collect();
    clusters.sort_by_key(|c| c[0]);
    FlatClusters { clusters, tau }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix_from(entries: &[f64], n: usize) -> DistanceMatrix {
        DistanceMatrix::from_condensed(n, entries.to_vec())
    }

    /// Re-scan oracle: recompute every cross-cluster average from the
    /// original matrix at each step, same tie-break.
    fn naive_agglomerate(m: &DistanceMatrix) -> Dendrogram {
        let n = m.len();
        let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
        let mut merges = Vec::new();
        let mut next_id = n;
        while clusters.len() > 1 {
            let mut best: Option<(f64, usize, usize)> = None;
            for a in 0..clusters.len() {
                for b in a + 1..clusters.len() {
                    let d = group_average(&clusters[a].1, &clusters[b].1, m);
                    if best.is_none_or(|(bd, _, _)| d < bd) {
                        best = Some((d, a, b));
                    }
                }
            }
            let (d, a, b) = best.unwrap();
            merges.push(Merge {
                left: clusters[a].0,
                right: clusters[b].0,
                distance: d,
            });
            let (id_b, leaves_b) = clusters.remove(b);
            let (_, leaves_a) = clusters.remove(a);
            let _ = id_b;
            let mut joined = leaves_a;
            joined.extend(leaves_b);
            clusters.push((next_id, joined));
            next_id += 1;
        }
        Dendrogram {
            leaves: (0..n).collect(),
            merges,
        }
    }

    #[test]
    fn group_average_singletons_and_definition() {
        let m = matrix_from(&[0.5, 1.5, 2.5], 3); // pairs (0,1) (0,2) (1,2)
        assert_eq!(group_average(&[0], &[1], &m), 0.5);
        assert_eq!(group_average(&[0], &[1, 2], &m), (0.5 + 1.5) / 2.0);
        assert_eq!(group_average(&[1, 2], &[0], &m), (0.5 + 1.5) / 2.0);
    }

    #[test]
    #[should_panic(expected = "empty cluster")]
    fn group_average_rejects_empty_cluster() {
        let m = matrix_from(&[0.5], 2);
        group_average(&[], &[0], &m);
    }

    #[test]
    fn agglomerate_single_leaf() {
        let m = matrix_from(&[], 1);
        let d = agglomerate(&m);
        assert_eq!(d.leaves, vec![0]);
        assert!(d.merges.is_empty());
        d.validate().unwrap();
    }

    #[test]
    fn agglomerate_three_records_hand_example() {
        // d(0,1)=0.1, d(0,2)=1.0, d(1,2)=1.0
        let m = matrix_from(&[0.1, 1.0, 1.0], 3);
        let d = agglomerate(&m);
        assert_eq!(d.merges.len(), 2);
        assert_eq!((d.merges[0].left, d.merges[0].right), (0, 1));
        assert!((d.merges[0].distance - 0.1).abs() < 1e-12);
        // Second merge joins leaf 2 with the first merge node (id 3) at
        // the average (1.0 + 1.0) / 2.
        assert_eq!((d.merges[1].left, d.merges[1].right), (2, 3));
        assert!((d.merges[1].distance - 1.0).abs() < 1e-12);
        d.validate().unwrap();
    }

    #[test]
    fn cut_three_record_example() {
        let m = matrix_from(&[0.1, 1.0, 1.0], 3);
        let d = agglomerate(&m);
        let flat = cut(&d, 0.5);
        assert_eq!(flat.clusters, vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn cut_extremes() {
        let m = matrix_from(&[0.3, 0.7, 0.9], 3);
        let d = agglomerate(&m);
        let singles = cut(&d, 0.0);
        assert_eq!(singles.clusters, vec![vec![0], vec![1], vec![2]]);
        let all = cut(&d, 10.0);
        assert_eq!(all.clusters, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn serialization_is_deterministic_with_rounded_distances() {
        let m = matrix_from(&[0.123456789123, 0.9, 1.0 / 3.0], 3);
        let d1 = agglomerate(&m);
        let d2 = agglomerate(&m);
        assert_eq!(d1.to_json(), d2.to_json());
        assert!(d1.to_json().contains("0.123456789"));
        // 1/3 appears rounded to 9 significant digits somewhere in the tree.
        assert!(d1.to_json().contains("0.333333333"));
    }

    fn arb_matrix(n: usize) -> impl Strategy<Value = DistanceMatrix> {
        proptest::collection::vec(0.0f64..6.0, n * (n - 1) / 2)
            .prop_map(move |v| DistanceMatrix::from_condensed(n, v))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn matches_naive_oracle(m in arb_matrix(8)) {
            let fast = agglomerate(&m);
            let slow = naive_agglomerate(&m);
            prop_assert_eq!(fast.merges.len(), slow.merges.len());
            for (a, b) in fast.merges.iter().zip(&slow.merges) {
                prop_assert_eq!((a.left, a.right), (b.left, b.right));
                prop_assert!((a.distance - b.distance).abs() <= 1e-9);
            }
        }

        #[test]
        fn group_average_matches_double_loop(m in arb_matrix(7)) {
            let cx = vec![0, 2, 5];
            let cy = vec![1, 3];
            let mut sum = 0.0;
            for &i in &cx { for &j in &cy { sum += m.get(i, j); } }
            prop_assert!((group_average(&cx, &cy, &m) - sum / 6.0).abs() < 1e-12);
        }

        #[test]
        fn cut_partitions_exactly_and_nests(m in arb_matrix(9), t1 in 0.0f64..6.0, t2 in 0.0f64..6.0) {
            let (t1, t2) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let d = agglomerate(&m);
            d.validate().unwrap();
            let fine = cut(&d, t1);
            let coarse = cut(&d, t2);
            for flat in [&fine, &coarse] {
                let mut seen: Vec<usize> = flat.clusters.iter().flatten().copied().collect();
                seen.sort_unstable();
                prop_assert_eq!(seen, (0..9).collect::<Vec<_>>());
                prop_assert!(flat.clusters.iter().all(|c| !c.is_empty()));
            }
            // Every fine cluster sits inside exactly one coarse cluster.
            for c in &fine.clusters {
                let hosts = coarse
                    .clusters
                    .iter()
                    .filter(|big| c.iter().all(|x| big.contains(x)))
                    .count();
                prop_assert_eq!(hosts, 1);
            }
        }
    }
}
