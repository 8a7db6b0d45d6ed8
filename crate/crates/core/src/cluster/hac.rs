//! Agglomerative clustering engine.
//!
//! Nearest-neighbour chain over a condensed distance matrix with
//! Lance-Williams updates. Both supported linkages are reducible, so the
//! chain produces the same dendrogram as the textbook "merge the closest
//! pair" loop whenever merge heights are distinct.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linkage {
    /// Ward's minimum-variance criterion on Euclidean distance. Merge
    /// heights follow the scipy convention
    /// `sqrt(2 n_a n_b / (n_a + n_b)) * |c_a - c_b|`.
    Ward,
    /// Maximum pairwise distance.
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
}

struct Condensed {
    n: usize,
    d: Vec<f64>,
}

impl Condensed {
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        // Row-major upper triangle without the diagonal.
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.d[self.idx(i, j)]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.d[k] = v;
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Builds the full dendrogram of weighted points. `weights[i]` is the number
/// of identical observations collapsed into `points[i]`.
pub(crate) fn agglomerate(points: &[Vec<f64>], weights: &[usize], linkage: Linkage) -> Vec<Merge> {
    let n = points.len();
    if n < 2 {
        return Vec::new();
    }
    let mut dist = Condensed {
        n,
        d: vec![0.0; n * (n - 1) / 2],
    };
    for i in 0..n {
        for j in i + 1..n {
            let e = euclidean(&points[i], &points[j]);
            let h = match linkage {
                Linkage::Ward => {
                    let (wi, wj) = (weights[i] as f64, weights[j] as f64);
                    (2.0 * wi * wj / (wi + wj)).sqrt() * e
                }
                Linkage::Complete => e,
            };
            dist.set(i, j, h);
        }
    }

    let mut size: Vec<f64> = weights.iter().map(|&w| w as f64).collect();
    let mut active = vec![true; n];
    let mut remaining = n;
    let mut chain: Vec<usize> = Vec::with_capacity(n);
    let mut merges = Vec::with_capacity(n - 1);

    while remaining > 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).expect("active cluster"));
        }
        let (a, b, height) = loop {
            let tip = *chain.last().expect("non-empty chain");
            let prev = chain.len().checked_sub(2).map(|k| chain[k]);
            // Prefer the previous chain element on ties so the chain
            // terminates, then the lowest index.
            let mut best = prev;
            let mut best_d = prev.map_or(f64::INFINITY, |p| dist.get(tip, p));
            for k in (0..n).filter(|&k| active[k] && k != tip) {
                let d = dist.get(tip, k);
                if d < best_d {
                    best_d = d;
                    best = Some(k);
                }
            }
            let next = best.expect("at least two active clusters");
            if Some(next) == prev {
                chain.pop();
                chain.pop();
                break (tip.min(next), tip.max(next), best_d);
            }
            chain.push(next);
        };

        merges.push(Merge { a, b, height });
        let (na, nb) = (size[a], size[b]);
        for k in (0..n).filter(|&k| active[k] && k != a && k != b) {
            let (dka, dkb) = (dist.get(k, a), dist.get(k, b));
            let updated = match linkage {
                Linkage::Ward => {
                    let nk = size[k];
                    (((na + nk) * dka * dka + (nb + nk) * dkb * dkb - nk * height * height)
                        / (na + nb + nk))
                        .max(0.0)
                        .sqrt()
                }
                Linkage::Complete => dka.max(dkb),
            };
            dist.set(k, a, updated);
        }
        size[a] = na + nb;
        active[b] = false;
        remaining -= 1;
    }
    merges
}

/// Flat clusters from cutting the dendrogram at `threshold`: points joined by
/// merges of height `<= threshold` share a label. Labels are the lowest
/// point index of each cluster.
pub(crate) fn cut(n: usize, merges: &[Merge], threshold: f64) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for m in merges.iter().filter(|m| m.height <= threshold) {
        let (ra, rb) = (find(&mut parent, m.a), find(&mut parent, m.b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect()
}

/// Collapses bitwise-identical feature vectors. Returns the distinct points,
/// their multiplicities, and for every input the index of its distinct point.
pub(crate) fn dedup(features: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<usize>, Vec<usize>) {
    use std::collections::HashMap;
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut owner = Vec::with_capacity(features.len());
    for f in features {
        let key: Vec<u64> = f.iter().map(|v| (v + 0.0).to_bits()).collect();
        let id = *seen.entry(key).or_insert_with(|| {
            points.push(f.clone());
            weights.push(0);
            points.len() - 1
        });
        weights[id] += 1;
        owner.push(id);
    }
    (points, weights, owner)
}

/// Clusters `features` and returns one label per input. Identical inputs are
/// collapsed first; with a positive threshold they always end up together,
/// so the collapse does not change the partition.
pub(crate) fn flat_clusters(features: &[Vec<f64>], linkage: Linkage, threshold: f64) -> Vec<usize> {
    let (points, weights, owner) = dedup(features);
    let merges = agglomerate(&points, &weights, linkage);
    let labels = cut(points.len(), &merges, threshold);
    owner.into_iter().map(|o| labels[o]).collect()
}
