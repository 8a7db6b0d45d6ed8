/// Splits `size` bytes into at most `p` contiguous `(offset, length)` ranges.
///
/// The first `size % p` ranges are one byte longer than the rest. When
/// `size < p` only `size` one-byte ranges are returned; a zero-byte file has
/// no ranges. `p = 0` is treated as 1.
pub fn split_ranges(size: u64, p: u32) -> Vec<(u64, u64)> {
    let p = u64::from(p.max(1));
    let base = size / p;
    let extra = size % p;
    let mut out = Vec::with_capacity(p.min(size) as usize);
    let mut offset = 0;
    for i in 0..p {
        let len = base + u64::from(i < extra);
        if len == 0 {
            break;
        }
        out.push((offset, len));
        offset += len;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let mb = 1 << 20;
        assert_eq!(split_ranges(4 * mb, 4), (0..4).map(|i| (i * mb, mb)).collect::<Vec<_>>());
        assert_eq!(
            split_ranges(10, 4).iter().map(|r| r.1).collect::<Vec<_>>(),
            vec![3, 3, 2, 2]
        );
        assert_eq!(split_ranges(3, 8), vec![(0, 1), (1, 1), (2, 1)]);
        assert!(split_ranges(0, 4).is_empty());
        assert_eq!(split_ranges(5, 0), vec![(0, 5)]);
    }

    proptest! {
        #[test]
        fn ranges_tile_the_file(size in 0u64..1_000_000, p in 1u32..=64) {
            let r = split_ranges(size, p);
            prop_assert!(r.len() as u64 <= u64::from(p));
            // Interval-union oracle: walk the ranges and check each starts
            // where the previous ended.
            let mut covered = 0;
            for &(off, len) in &r {
                prop_assert_eq!(off, covered);
                prop_assert!(len > 0);
                covered += len;
            }
            prop_assert_eq!(covered, size);
            if let (Some(first), Some(last)) = (r.first(), r.last()) {
                prop_assert!(first.1 - last.1 <= 1);
            }
        }
    }
}
