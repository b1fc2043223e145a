use nalgebra::DMatrix;

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub(crate) fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let norm = a.iter().map(|v| v.abs()).fold(0.0, f64::max) * a.nrows() as f64;
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(squarings);
    let n = a.nrows();
    let mut term = DMatrix::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=20 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

#[test]
fn expm_of_diagonal_and_rotation() {
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 2.0]));
    let e = expm(&d);
    assert!((e[(0, 0)] - (-1f64).exp()).abs() < 1e-14);
    assert!((e[(1, 1)] - 2f64.exp()).abs() < 1e-12);
    let r = DMatrix::from_row_slice(2, 2, &[0.0, -3.0, 3.0, 0.0]);
    let e = expm(&r);
    assert!((e[(0, 0)] - 3f64.cos()).abs() < 1e-13);
    assert!((e[(1, 0)] - 3f64.sin()).abs() < 1e-13);
}
