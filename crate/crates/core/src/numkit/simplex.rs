use ndarray::{Array1, ArrayView1};

/// Euclidean projection onto `{w ≥ 0, ⟨b, w⟩ = radius}` for positive weights `b`.
///
/// The minimizer has the form `w = max(0, v − τ b)`; `τ` is found by sorting the
/// breakpoints `vᵢ / bᵢ` and scanning.
pub fn project_weighted_simplex(v: ArrayView1<f64>, b: ArrayView1<f64>, radius: f64) -> Array1<f64> {
    let n = v.len();
    assert_eq!(b.len(), n, "weight length mismatch");
    assert!(radius > 0.0, "radius must be positive");
    debug_assert!(b.iter().all(|&x| x > 0.0));

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| (v[j] / b[j]).total_cmp(&(v[i] / b[i])));

    let mut sum_bv = 0.0;
    let mut sum_bb = 0.0;
    let mut tau = 0.0;
    for (k, &i) in order.iter().enumerate() {
        sum_bv += b[i] * v[i];
        sum_bb += b[i] * b[i];
        let candidate = (sum_bv - radius) / sum_bb;
        let next = order.get(k + 1).map(|&j| v[j] / b[j]);
        // Active set of size k+1 is correct once the next breakpoint lies below τ.
        if next.map_or(true, |t| t <= candidate) {
            tau = candidate;
            break;
        }
    }

    let mut w = Array1::from_iter((0..n).map(|i| (v[i] - tau * b[i]).max(0.0)));
    // Remove the rounding drift in the normalization.
    let total: f64 = w.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
    if total > 0.0 {
        w *= radius / total;
    }
    w
}
