//! Resampling, ensemble means and sup-norm metrics on a common time grid.

/// `0, dt, 2 dt, ...` up to and including `t_end` (within rounding).
pub fn grid(t_end: f64, dt: f64) -> Vec<f64> {
    let n = (t_end / dt + 1e-9).floor() as usize;
    (0..=n).map(|k| k as f64 * dt).collect()
}

/// Piecewise-linear interpolation of `(times, values)` at each grid point.
/// Points outside the sampled range take the nearest endpoint value.
pub fn resample(times: &[f64], values: &[f64], grid: &[f64]) -> Vec<f64> {
    assert_eq!(times.len(), values.len());
    assert!(!times.is_empty(), "cannot resample an empty series");
    let last = times.len() - 1;
    grid.iter()
        .map(|&t| {
            if t <= times[0] {
                return values[0];
            }
            if t >= times[last] {
                return values[last];
            }
            let j = times.partition_point(|&s| s <= t);
            let (t0, t1) = (times[j - 1], times[j]);
            let w = (t - t0) / (t1 - t0);
            values[j - 1] + w * (values[j] - values[j - 1])
        })
        .collect()
}

/// Largest distance between a series' sample times and the nearest grid
/// point, as a fraction of the grid spacing; 0 when they coincide.
pub fn grid_mismatch(times: &[f64], grid: &[f64]) -> f64 {
    if grid.len() < 2 {
        return 0.0;
    }
    let step = grid[1] - grid[0];
    times
        .iter()
        .map(|&t| {
            let k = (t / step).round();
            (t - k * step).abs() / step
        })
        .fold(0.0, f64::max)
}

pub fn ensemble_mean(curves: &[Vec<f64>]) -> Vec<f64> {
    let n = curves.iter().map(Vec::len).min().unwrap_or(0);
    (0..n)
        .map(|i| curves.iter().map(|c| c[i]).sum::<f64>() / curves.len() as f64)
        .collect()
}

pub fn sup_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Maximum pairwise sup-norm distance between the curves.
pub fn collapse(curves: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in curves.iter().enumerate() {
        for b in &curves[i + 1..] {
            worst = worst.max(sup_norm(a, b));
        }
    }
    worst
}
