use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// DTW with steps (1,0), (0,1), (1,1) under the cosine distance. Returns
/// the cost of the cheapest alignment (the shortest among equally cheap
/// ones) divided by its length.
pub fn dtw_divergence(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    let (n, m) = (a.nrows(), b.nrows());
    if n == 0 || m == 0 {
        return Err(Error::Invalid("DTW needs two non-empty sequences".into()));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::Dimension {
            expected: a.ncols(),
            actual: b.ncols(),
        });
    }
    let norms = |x: ArrayView2<f64>| -> Vec<f64> { x.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect() };
    let (na, nb) = (norms(a), norms(b));
    let cost = |i: usize, j: usize| -> f64 {
        match (na[i] > 0.0, nb[j] > 0.0) {
            (false, false) => 0.0,
            (true, true) => 1.0 - a.row(i).dot(&b.row(j)) / (na[i] * nb[j]),
            _ => 1.0,
        }
    };
    // (accumulated cost, path length), compared lexicographically
    let mut prev: Vec<(f64, usize)> = vec![(f64::INFINITY, 0); m];
    let mut cur: Vec<(f64, usize)> = vec![(f64::INFINITY, 0); m];
    let better = |x: (f64, usize), y: (f64, usize)| x.0 < y.0 || (x.0 == y.0 && x.1 < y.1);
    for i in 0..n {
        for j in 0..m {
            let c = cost(i, j);
            let best = if i == 0 && j == 0 {
                (0.0, 0)
            } else {
                let mut best = (f64::INFINITY, usize::MAX);
                if i > 0 && better(prev[j], best) {
                    best = prev[j];
                }
                if j > 0 && better(cur[j - 1], best) {
                    best = cur[j - 1];
                }
                if i > 0 && j > 0 && better(prev[j - 1], best) {
                    best = prev[j - 1];
                }
                best
            };
            cur[j] = (best.0 + c, best.1 + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (total, len) = prev[m - 1];
    Ok(total / len as f64)
}
