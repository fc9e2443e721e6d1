//! Small statistics helpers shared by the sweep drivers and their checks.

/// Trailing moving average: element i is the mean of the up-to-`window`
/// most recent points ending at i. Output length equals input length.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be at least 1");
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for i in 0..series.len() {
        sum += series[i];
        if i >= window {
            sum -= series[i - window];
        }
        let count = (i + 1).min(window);
        out.push(sum / count as f64);
    }
    out
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1); zero for a single observation.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    var.sqrt()
}

pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let mx = mean(xs);
    let my = mean(ys);
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    cov / (vx.sqrt() * vy.sqrt())
}

/// Least-squares slope of y against x.
pub fn linear_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let mx = mean(xs);
    let my = mean(ys);
    let mut cov = 0.0;
    let mut vx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
    }
    cov / vx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_window_one_is_identity() {
        let series = vec![3.0, 1.0, 4.0, 1.0, 5.0];
        assert_eq!(moving_average(&series, 1), series);
    }

    #[test]
    fn moving_average_hand_case() {
        let got = moving_average(&[1.0, 2.0, 3.0, 4.0], 3);
        assert_eq!(got, vec![1.0, 1.5, 2.0, 3.0]);
    }

    #[test]
    fn moving_average_constant_series_unchanged() {
        let series = vec![2.5; 8];
        for window in [1, 3, 5, 10] {
            for v in moving_average(&series, window) {
                assert!((v - 2.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn std_of_singleton_is_zero() {
        assert_eq!(sample_std(&[4.2]), 0.0);
        assert!((sample_std(&[1.0, 3.0]) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn pearson_of_exact_line_is_one() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 2.0).collect();
        assert!((pearson(&xs, &ys) - 1.0).abs() < 1e-12);
        assert!((linear_slope(&xs, &ys) - 3.0).abs() < 1e-12);
    }
}
