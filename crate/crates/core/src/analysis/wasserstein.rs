//! First-order Wasserstein distance between one-dimensional empirical
//! measures.

use crate::simulator::EmpiricalMeasure;

/// `W_1` between two empirical measures on the line.
///
/// In one dimension the optimal coupling is the monotone (order-statistics)
/// one. With equally many atoms the distance is the mean absolute difference
/// of the sorted atom lists; otherwise it is the integral over `(0, 1)` of
/// the absolute difference of the two piecewise-constant quantile functions,
/// evaluated exactly on the merged breakpoints.
pub fn wasserstein1(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> f64 {
    let mut xs: Vec<f64> = a.atoms().to_vec();
    let mut ys: Vec<f64> = b.atoms().to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).expect("finite atoms"));
    ys.sort_by(|p, q| p.partial_cmp(q).expect("finite atoms"));

    if xs.len() == ys.len() {
        let n = xs.len() as f64;
        return xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / n;
    }

    let (n, m) = (xs.len(), ys.len());
    let mut acc = 0.0;
    let mut level = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    while i < n && j < m {
        let next_i = (i + 1) as f64 / n as f64;
        let next_j = (j + 1) as f64 / m as f64;
        let next = next_i.min(next_j);
        acc += (next - level) * (xs[i] - ys[j]).abs();
        level = next;
        if next_i <= next {
            i += 1;
        }
        if next_j <= next {
            j += 1;
        }
    }
    acc
}
