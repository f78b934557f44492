//! Trapezoidal quadrature on a uniform grid.

use nalgebra::DVector;

use crate::scalar::Real;

/// Trapezoidal weights for `nodes` points spaced `h` apart.
pub fn trapezoid_weights<T: Real>(nodes: usize, h: T) -> Vec<T> {
    let half = h / T::lit(2.0);
    (0..nodes)
        .map(|i| if i == 0 || i + 1 == nodes { half } else { h })
        .collect()
}

pub fn trapezoid<T: Real>(values: &[T], h: T) -> T {
    trapezoid_weights(values.len(), h)
        .into_iter()
        .zip(values)
        .fold(T::zero(), |acc, (w, &v)| acc + w * v)
}

/// Backward cumulative integrals: entry `i` is the trapezoidal approximation
/// of the integral from node `i` to the last node. The last entry is zero.
pub fn cumulative_backward<T: Real>(values: &[DVector<T>], h: T) -> Vec<DVector<T>> {
    let nodes = values.len();
    let half = h / T::lit(2.0);
    let dim = values.first().map_or(0, |v| v.len());
    let mut out = vec![DVector::zeros(dim); nodes];
    for i in (0..nodes.saturating_sub(1)).rev() {
        out[i] = &out[i + 1] + (&values[i] + &values[i + 1]) * half;
    }
    out
}
