// Float methods (sqrt, exp, cos, ...) are not inherent on f64 without std.
#[allow(unused_imports)]
pub(crate) use num_traits::Float;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Root mean square of `a`, zero for an empty slice.
pub(crate) fn rms(a: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    Float::sqrt(norm_sq(a) / a.len() as f64)
}
