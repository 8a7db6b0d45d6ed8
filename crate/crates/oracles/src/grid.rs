/// Concurrency and parallelism levels.
pub const STREAM_LEVELS: [u32; 6] = [1, 2, 4, 8, 16, 32];
/// Block sizes in KiB.
pub const BLOCK_KIB: [u32; 7] = [1, 2, 4, 8, 16, 32, 64];

/// Exhaustive argmax of `score(cc, p, bs_kib)` over all 252 nodes.
///
/// Loops run in ascending (cc, p, bs) order and only a strictly larger score
/// replaces the incumbent, so ties keep the smallest node.
pub fn exhaustive_argmax(mut score: impl FnMut(u32, u32, u32) -> f64) -> ((u32, u32, u32), f64) {
    let mut best = ((0, 0, 0), f64::NEG_INFINITY);
    let mut seen = 0;
    for &cc in &STREAM_LEVELS {
        for &p in &STREAM_LEVELS {
            for &bs in &BLOCK_KIB {
                seen += 1;
                let s = score(cc, p, bs);
                if s > best.1 {
                    best = ((cc, p, bs), s);
                }
            }
        }
    }
    assert_eq!(seen, 252);
    best
}

/// `k` nearest rows by full scan and an inverse-distance vote per axis.
///
/// `rows` are `(standardized features, level indices)`. Distance ties keep
/// the earlier row; an exact match (distance 0) outvotes everything; vote
/// ties go to the smaller level.
pub fn knn_scan(rows: &[(Vec<f64>, [usize; 3])], query: &[f64], k: usize, levels: [usize; 3]) -> [usize; 3] {
    let mut picked: Vec<(f64, usize)> = Vec::new();
    for _ in 0..k {
        let mut best: Option<(f64, usize)> = None;
        for (i, (x, _)) in rows.iter().enumerate() {
            if picked.iter().any(|p| p.1 == i) {
                continue;
            }
            let d = x.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if best.map_or(true, |b| d < b.0) {
                best = Some((d, i));
            }
        }
        picked.push(best.expect("k <= rows"));
    }
    let exact = picked.iter().any(|p| p.0 == 0.0);
    let mut out = [0; 3];
    for axis in 0..3 {
        let mut votes = vec![0.0; levels[axis]];
        for &(d, i) in &picked {
            let w = if exact {
                if d == 0.0 { 1.0 } else { 0.0 }
            } else {
                1.0 / d
            };
            votes[rows[i].1[axis]] += w;
        }
        let max = votes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        out[axis] = votes.iter().position(|&v| v == max).unwrap();
    }
    out
}
