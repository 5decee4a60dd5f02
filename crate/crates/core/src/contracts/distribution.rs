//! Integer pro-rata allocation by largest remainder.

/// Split `total` across `weights` so each share is the floor or ceiling of its exact
/// pro-rata value and the shares sum to `total`. Leftover units go to the largest
/// fractional remainders; ties go to the earlier index.
///
/// Returns all zeros when the weights sum to zero.
pub fn largest_remainder(total: u64, weights: &[u64]) -> Vec<u64> {
    let sum: u128 = weights.iter().map(|&w| w as u128).sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut shares = Vec::with_capacity(weights.len());
    let mut remainders = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        let exact = total as u128 * w as u128;
        shares.push((exact / sum) as u64);
        remainders.push((exact % sum, i));
    }
    let assigned: u64 = shares.iter().sum();
    let leftover = (total - assigned) as usize;
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(leftover) {
        shares[i] += 1;
    }
    shares
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_splits() {
        assert_eq!(largest_remainder(100_000, &[10]), vec![100_000]);
        assert_eq!(largest_remainder(100_000, &[4, 6]), vec![40_000, 60_000]);
    }

    #[test]
    fn three_three_one_split() {
        // 100000 * 3/7 = 42857.142.., 100000 * 1/7 = 14285.714..
        assert_eq!(largest_remainder(100_000, &[3, 3, 1]), vec![42_857, 42_857, 14_286]);
    }

    #[test]
    fn zero_weights() {
        assert_eq!(largest_remainder(10, &[0, 0]), vec![0, 0]);
        assert_eq!(largest_remainder(10, &[]), Vec::<u64>::new());
    }

    proptest! {
        #[test]
        fn shares_sum_and_stay_within_one(total in 0u64..10_000_000, weights in prop::collection::vec(0u64..1000, 1..8)) {
            let shares = largest_remainder(total, &weights);
            let sum_w: u128 = weights.iter().map(|&w| w as u128).sum();
            match sum_w {
                0 => prop_assert!(shares.iter().all(|&s| s == 0)),
                _ => {
                    prop_assert_eq!(shares.iter().sum::<u64>(), total);
                    for (s, w) in shares.iter().zip(&weights) {
                        let floor = (total as u128 * *w as u128 / sum_w) as u64;
                        prop_assert!(*s == floor || *s == floor + 1);
                    }
                }
            }
        }
    }
}
