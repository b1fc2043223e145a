use crate::error::{Error, Result};

/// Rule-of-thumb Gaussian KDE bandwidth `1.06 σ n^(-1/5)`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Shape("no samples".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !sd.is_finite() {
        return Err(Error::NonFinite("samples".into()));
    }
    Ok(if sd > 0.0 { 1.06 * sd * n.powf(-0.2) } else { 1e-3 * mean.abs().max(1.0) })
}

/// Gaussian kernel density estimate evaluated on a sorted grid.
pub fn kde_pdf(samples: &[f64], bandwidth: f64, grid: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Shape("no samples".into()));
    }
    if !(bandwidth > 0.0) {
        return Err(Error::Domain(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if grid.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::Domain("grid must be sorted".into()));
    }
    let norm = 1.0 / (samples.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    Ok(grid
        .iter()
        .map(|&g| samples.iter().map(|&s| (-0.5 * ((g - s) / bandwidth).powi(2)).exp()).sum::<f64>() * norm)
        .collect())
}

/// Evenly spaced grid covering the samples plus `margin` on either side.
pub fn padded_grid(samples: &[f64], margin: f64, points: usize) -> Vec<f64> {
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - margin;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + margin;
    let n = points.max(2);
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Indices of local maxima; a plateau counts once, at its first point.
pub fn local_maxima(density: &[f64]) -> Vec<usize> {
    let n = density.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && density[j + 1] == density[i] {
            j += 1;
        }
        let left = i == 0 || density[i - 1] < density[i];
        let right = j + 1 == n || density[j + 1] < density[i];
        if left && right && density[i] > 0.0 {
            out.push(i);
        }
        i = j + 1;
    }
    out
}

/// `1 − (lowest density between the two highest modes) / (lower of the two modes)`; 0 when unimodal.
pub fn bimodality_gap(density: &[f64]) -> f64 {
    let mut modes = local_maxima(density);
    if modes.len() < 2 {
        return 0.0;
    }
    modes.sort_by(|&a, &b| density[b].total_cmp(&density[a]).then(a.cmp(&b)));
    let (a, b) = (modes[0].min(modes[1]), modes[0].max(modes[1]));
    let valley = density[a..=b].iter().copied().fold(f64::INFINITY, f64::min);
    let lower = density[a].min(density[b]);
    (1.0 - valley / lower).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
        x.windows(2).zip(y.windows(2)).map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1])).sum()
    }

    #[test]
    fn single_sample_bump() {
        let grid = padded_grid(&[2.0], 4.0, 801);
        let d = kde_pdf(&[2.0], 0.5, &grid).unwrap();
        assert_eq!(local_maxima(&d), vec![400]);
        assert!((d[400] - 1.0 / (0.5 * (2.0 * std::f64::consts::PI).sqrt())).abs() < 1e-12);
    }

    #[test]
    fn mixture_modes_and_gap() {
        let s: Vec<f64> = (0..400).map(|k| if k % 2 == 0 { -3.0 } else { 3.0 } + ((k * 37) % 11) as f64 * 0.05 - 0.25).collect();
        let h = 0.3;
        let grid = padded_grid(&s, 4.0 * h, 1201);
        let d = kde_pdf(&s, h, &grid).unwrap();
        let modes = local_maxima(&d);
        assert_eq!(modes.len(), 2, "{modes:?}");
        assert!((grid[modes[0]] + 3.0).abs() < h && (grid[modes[1]] - 3.0).abs() < h);
        assert!(bimodality_gap(&d) > 0.99);
        assert!((trapezoid(&grid, &d) - 1.0).abs() < 0.02);
    }

    #[test]
    fn unimodal_gap_is_zero() {
        let grid = padded_grid(&[0.0], 5.0, 201);
        let d: Vec<f64> = grid.iter().map(|x| (-x * x / 2.0).exp()).collect();
        assert_eq!(bimodality_gap(&d), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(kde_pdf(&[], 1.0, &[0.0]).is_err());
        assert!(kde_pdf(&[1.0], 0.0, &[0.0]).is_err());
        assert!(kde_pdf(&[1.0], 1.0, &[1.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn kde_integrates_to_one(s in prop::collection::vec(-10.0f64..10.0, 1..40), h in 0.2f64..2.0) {
            let grid = padded_grid(&s, 4.0 * h, 2001);
            let d = kde_pdf(&s, h, &grid).unwrap();
            prop_assert!((trapezoid(&grid, &d) - 1.0).abs() < 0.02);
        }

        #[test]
        fn gap_in_unit_interval(d in prop::collection::vec(0.0f64..5.0, 3..50)) {
            let g = bimodality_gap(&d);
            prop_assert!((0.0..=1.0).contains(&g));
        }
    }
}
