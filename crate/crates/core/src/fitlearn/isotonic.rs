//! Pool-adjacent-violators projection onto nondecreasing sequences.

/// Maximal constant blocks `(start, end, mean)` of the projection of `s`.
pub fn isotonic_blocks(s: &[f64]) -> Vec<(usize, usize, f64)> {
    // (start, count, sum)
    let mut stack: Vec<(usize, usize, f64)> = Vec::with_capacity(s.len());
    for (i, &v) in s.iter().enumerate() {
        stack.push((i, 1, v));
        while stack.len() > 1 {
            let (_, n1, s1) = stack[stack.len() - 1];
            let (st0, n0, s0) = stack[stack.len() - 2];
            if s0 / n0 as f64 > s1 / n1 as f64 {
                stack.pop();
                let last = stack.len() - 1;
                stack[last] = (st0, n0 + n1, s0 + s1);
            } else {
                break;
            }
        }
    }
    stack
        .into_iter()
        .map(|(st, n, sum)| (st, st + n, sum / n as f64))
        .collect()
}

/// Nearest nondecreasing vector to `s` in squared distance.
pub fn isotonic_project(s: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(s.len());
    for (start, end, mean) in isotonic_blocks(s) {
        out.extend(std::iter::repeat_n(mean, end - start));
    }
    out
}
