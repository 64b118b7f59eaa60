//! Partitions fitting in a box.

/// Number of partitions of `j` into at most `n` parts, each at most `n`
/// (`q_n(0) = 1`).
pub fn partition_count(n: usize, j: usize) -> u128 {
    box_partition_counts(n, n, j)[j]
}

/// `q_n(0..=max_j)` for parts bounded by `n` in both number and magnitude.
pub fn partition_counts(n: usize, max_j: usize) -> Vec<u128> {
    box_partition_counts(n, n, max_j)
}

/// Counts of partitions of `0..=max_j` with at most `parts` parts, each at
/// most `size`, via `P(j; k, l) = P(j; k-1, l) + P(j-k; k, l-1)`: either
/// fewer than `k` parts are used, or all `k` parts are positive and one can
/// be removed from each.
pub fn box_partition_counts(parts: usize, size: usize, max_j: usize) -> Vec<u128> {
    // prev[k][j] = P(j; k, l - 1), cur[k][j] = P(j; k, l).
    let width = max_j + 1;
    let base = |k_rows: usize| {
        let mut t = vec![0u128; k_rows * width];
        for k in 0..k_rows {
            t[k * width] = 1;
        }
        t
    };
    let rows = parts + 1;
    // l = 0: only the empty partition.
    let mut prev = base(rows);
    for _l in 1..=size {
        let mut cur = base(rows);
        for k in 1..rows {
            for j in 1..width {
                let fewer = cur[(k - 1) * width + j];
                let shrink = if j >= k { prev[k * width + j - k] } else { 0 };
                cur[k * width + j] = fewer + shrink;
            }
        }
        prev = cur;
    }
    prev[parts * width..].to_vec()
}
