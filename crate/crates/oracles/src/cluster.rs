//! Textbook agglomerative clustering: repeatedly merge the closest pair.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linkage {
    Ward,
    Complete,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn distance(points: &[Vec<f64>], a: &[usize], b: &[usize], linkage: Linkage) -> f64 {
    match linkage {
        Linkage::Complete => {
            let mut worst: f64 = 0.0;
            for &i in a {
                for &j in b {
                    worst = worst.max(euclid(&points[i], &points[j]));
                }
            }
            worst
        }
        Linkage::Ward => {
            let centroid = |m: &[usize]| -> Vec<f64> {
                let dim = points[m[0]].len();
                (0..dim)
                    .map(|d| m.iter().map(|&i| points[i][d]).sum::<f64>() / m.len() as f64)
                    .collect()
            };
            let (na, nb) = (a.len() as f64, b.len() as f64);
            (2.0 * na * nb / (na + nb)).sqrt() * euclid(&centroid(a), &centroid(b))
        }
    }
}

/// Clusters `points`, merging while the closest pair is at most `threshold`
/// apart. Returns the clusters as sorted member lists, sorted by first
/// member.
pub fn naive_hac(points: &[Vec<f64>], linkage: Linkage, threshold: f64) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
    while clusters.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let d = distance(points, &clusters[a], &clusters[b], linkage);
                if best.map_or(true, |(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        let (d, a, b) = best.unwrap();
        if d > threshold {
            break;
        }
        let merged = clusters.remove(b);
        clusters[a].extend(merged);
    }
    for c in &mut clusters {
        c.sort_unstable();
    }
    clusters.sort();
    clusters
}
