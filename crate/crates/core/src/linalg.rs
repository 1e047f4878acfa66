//! Dense-vector helpers and power iteration for symmetric operators.

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// SplitMix64 finalizer; used for deterministic seeds and start vectors.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn start_vector(dim: usize) -> Vec<f64> {
    let mut x: Vec<f64> = (0..dim as u64)
        .map(|i| 0.5 + (mix64(i) >> 11) as f64 / (1u64 << 53) as f64)
        .collect();
    let s = norm(&x);
    x.iter_mut().for_each(|v| *v /= s);
    x
}

const POWER_MAX_ITERS: usize = 2000;
const POWER_REL_TOL: f64 = 1e-12;

/// Largest eigenvalue magnitude of a symmetric operator.
pub(crate) fn spectral_norm(dim: usize, apply: impl Fn(&[f64], &mut [f64])) -> f64 {
    if dim == 0 {
        return 0.0;
    }
    let mut x = start_vector(dim);
    let mut y = vec![0.0; dim];
    let mut estimate = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        apply(&x, &mut y);
        let next = norm(&y);
        if next == 0.0 || !next.is_finite() {
            return next;
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / next;
        }
        let done = (next - estimate).abs() <= POWER_REL_TOL * next;
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}

/// Estimate of the smallest eigenvalue of a symmetric operator whose
/// spectral norm is `norm_estimate`, via power iteration on `norm*I - A`.
pub(crate) fn smallest_eigenvalue(
    dim: usize,
    norm_estimate: f64,
    apply: impl Fn(&[f64], &mut [f64]),
) -> f64 {
    if dim == 0 {
        return 0.0;
    }
    let shift = norm_estimate;
    let shifted = |x: &[f64], out: &mut [f64]| {
        apply(x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = shift * xi - *o;
        }
    };
    let mut x = start_vector(dim);
    let mut y = vec![0.0; dim];
    let mut rayleigh = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        shifted(&x, &mut y);
        let next = dot(&x, &y);
        let len = norm(&y);
        if len == 0.0 || !len.is_finite() {
            rayleigh = next;
            break;
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / len;
        }
        let done = (next - rayleigh).abs() <= POWER_REL_TOL * shift.abs().max(1.0);
        rayleigh = next;
        if done {
            break;
        }
    }
    shift - rayleigh
}
