use crate::error::{Error, Result};

/// Freedman–Diaconis bin count, never below `floor`.
pub fn freedman_diaconis_bins(samples: &[f64], floor: usize) -> usize {
    let n = samples.len();
    if n < 2 {
        return floor.max(1);
    }
    let mut s: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite()).collect();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let x = p * (s.len() - 1) as f64;
        let (i, f) = (x.floor() as usize, x.fract());
        if i + 1 < s.len() {
            s[i] * (1.0 - f) + s[i + 1] * f
        } else {
            s[i]
        }
    };
    let iqr = q(0.75) - q(0.25);
    let span = s[s.len() - 1] - s[0];
    if !(iqr > 0.0) || !(span > 0.0) {
        return floor.max(1);
    }
    let width = 2.0 * iqr / (n as f64).cbrt();
    ((span / width).ceil() as usize).max(floor)
}

/// Equal-width binning over `[lo, hi]`; the top edge belongs to the last bin.
#[derive(Debug, Clone, Copy)]
struct Binning {
    lo: f64,
    width: f64,
    bins: usize,
}

impl Binning {
    fn over<'a>(data: impl IntoIterator<Item = &'a f64>, bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::Config(format!("need at least 2 bins, got {bins}")));
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut any = false;
        for &v in data {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("sample {v}")));
            }
            lo = lo.min(v);
            hi = hi.max(v);
            any = true;
        }
        if !any {
            return Err(Error::Shape("no samples".into()));
        }
        Ok(Self { lo, width: (hi - lo) / bins as f64, bins })
    }

    fn index(&self, v: f64) -> usize {
        if self.width > 0.0 {
            (((v - self.lo) / self.width) as usize).min(self.bins - 1)
        } else {
            0
        }
    }

    fn counts(&self, data: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; self.bins];
        for &v in data {
            c[self.index(v)] += 1.0;
        }
        c
    }
}

fn entropy_of_counts(counts: &[f64]) -> f64 {
    let n: f64 = counts.iter().sum();
    -counts.iter().filter(|&&c| c > 0.0).map(|&c| (c / n) * (c / n).log2()).sum::<f64>()
}

/// Plug-in Shannon entropy in bits over equal-width bins.
pub fn shannon_entropy_hist(samples: &[f64], bins: usize) -> Result<f64> {
    let b = Binning::over(samples, bins)?;
    if b.width == 0.0 {
        log::debug!("constant sample falls in a single bin");
        return Ok(0.0);
    }
    Ok(entropy_of_counts(&b.counts(samples)).max(0.0))
}

/// Plug-in KL divergence `D(p || q)` in bits on a binning shared by both sample sets.
///
/// Where `q` has empty bins under occupied `p` bins, both histograms receive a
/// half-count pseudo-count per bin before normalising.
pub fn kl_divergence_hist(p_samples: &[f64], q_samples: &[f64], bins: usize) -> Result<f64> {
    if p_samples.is_empty() || q_samples.is_empty() {
        return Err(Error::Shape("KL divergence needs samples from both distributions".into()));
    }
    let b = Binning::over(p_samples.iter().chain(q_samples), bins)?;
    let mut p = b.counts(p_samples);
    let mut q = b.counts(q_samples);
    if p.iter().zip(&q).any(|(&pi, &qi)| pi > 0.0 && qi == 0.0) {
        log::warn!("histogram supports do not overlap; using a smoothed estimate");
        for c in p.iter_mut().chain(q.iter_mut()) {
            *c += 0.5;
        }
    }
    let (np, nq): (f64, f64) = (p.iter().sum(), q.iter().sum());
    let d: f64 = p
        .iter()
        .zip(&q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| (pi / np) * ((pi / np) / (qi / nq)).log2())
        .sum();
    Ok(d.max(0.0))
}

/// Plug-in mutual information in bits from a `bins × bins` joint histogram.
pub fn mi_hist(x: &[f64], y: &[f64], bins: usize) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} x samples paired with {} y samples", x.len(), y.len())));
    }
    let bx = Binning::over(x, bins)?;
    let by = Binning::over(y, bins)?;
    let mut joint = vec![0.0; bins * bins];
    for (&a, &b) in x.iter().zip(y) {
        joint[bx.index(a) * bins + by.index(b)] += 1.0;
    }
    let hx = entropy_of_counts(&bx.counts(x));
    let hy = entropy_of_counts(&by.counts(y));
    let hxy = entropy_of_counts(&joint);
    Ok(hx + hy - hxy)
}
