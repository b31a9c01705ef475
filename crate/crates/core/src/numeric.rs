//! Small numerical helpers shared by the dynamics modules.

/// Maximum of a slice ignoring `-inf`; returns `-inf` for an empty or all `-inf` input.
pub fn max_finite(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `ln Σ exp(x_i)` evaluated after shifting by the maximum exponent.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = max_finite(xs);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Normalised weights `exp(x_i) / Σ exp(x_j)` computed in log space.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = max_finite(xs);
    let mut w: Vec<f64> = xs.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Cumulative trapezoid integral of `ys` over `ts`, starting at zero.
pub fn cumulative_trapezoid(ts: &[f64], ys: &[f64]) -> Vec<f64> {
    debug_assert_eq!(ts.len(), ys.len());
    let mut out = Vec::with_capacity(ts.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..ts.len() {
        acc += 0.5 * (ys[k] + ys[k - 1]) * (ts[k] - ts[k - 1]);
        out.push(acc);
    }
    out.truncate(ts.len());
    out
}

/// Trapezoid integral of `ys` over `xs`.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0]))
        .sum()
}

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }

    /// Fold another accumulator in, keeping both carries.
    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.carry += other.carry;
    }
}

/// `n` equally spaced points covering `[a, b]` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let h = (b - a) / (n - 1) as f64;
            let mut v: Vec<f64> = (0..n).map(|i| a + h * i as f64).collect();
            v[n - 1] = b;
            v
        }
    }
}

/// Time `0` followed by `n` geometrically spaced times from `lo` to `hi`.
pub fn geometric_checkpoints(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(n + 1);
    v.push(0.0);
    if n == 1 {
        v.push(hi);
        return v;
    }
    let ratio = (hi / lo).ln() / (n - 1) as f64;
    for i in 0..n {
        v.push(lo * (ratio * i as f64).exp());
    }
    v[n] = hi;
    v
}

/// Ordinary least squares slope through the origin.
pub fn slope_through_origin(xs: &[f64], ys: &[f64]) -> f64 {
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    sxy / sxx
}

/// Running mean and centred second moment per slot (Welford within a
/// sample, Chan et al. when merging samples).
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    pub fn new(len: usize) -> Self {
        Moments {
            n: 0.0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    pub fn push(&mut self, xs: impl Iterator<Item = f64>) {
        self.n += 1.0;
        for ((x, mean), m2) in xs.zip(&mut self.mean).zip(&mut self.m2) {
            let d = x - *mean;
            *mean += d / self.n;
            *m2 += d * (x - *mean);
        }
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0.0 {
            return;
        }
        let n = self.n + other.n;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * other.n / n;
            self.m2[i] += other.m2[i] + d * d * self.n * other.n / n;
        }
        self.n = n;
    }

    /// Means and standard errors of the mean.
    pub fn mean_and_se(&self) -> (Vec<f64>, Vec<f64>) {
        let se = self
            .m2
            .iter()
            .map(|&m2| {
                if self.n > 1.0 {
                    (m2.max(0.0) / (self.n - 1.0) / self.n).sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        (self.mean.clone(), se)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_survives_huge_exponents() {
        let xs = [-1.0e7, -1.0e7 + 1.0, f64::NEG_INFINITY];
        let lse = log_sum_exp(&xs);
        assert!((lse - (-1.0e7 + 1.0 + (1.0 + (-1.0f64).exp()).ln())).abs() < 1e-6);
        let w = softmax(&xs);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(w[2], 0.0);
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let mut c = CompensatedSum::default();
        c.add(1.0);
        for _ in 0..10_000 {
            c.add(1e-16);
        }
        assert!((c.value() - (1.0 + 1e-12)).abs() < 1e-20);
    }

    #[test]
    fn checkpoints_are_geometric() {
        let c = geometric_checkpoints(0.01, 10.0, 64);
        assert_eq!(c.len(), 65);
        assert_eq!(c[0], 0.0);
        assert!((c[1] - 0.01).abs() < 1e-15);
        assert_eq!(c[64], 10.0);
        let r1 = c[2] / c[1];
        let r2 = c[64] / c[63];
        assert!((r1 - r2).abs() < 1e-9);
    }

    #[test]
    fn trapezoid_is_exact_for_linear() {
        let xs = linspace(0.0, 2.0, 11);
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 1.0).collect();
        assert!((trapezoid(&xs, &ys) - 8.0).abs() < 1e-12);
        let c = cumulative_trapezoid(&xs, &ys);
        assert!((c[10] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn moments_merge_matches_direct() {
        let xs: Vec<f64> = (0..37).map(|i| ((i * 7919) % 101) as f64 / 10.0).collect();
        let mut whole = Moments::new(1);
        let mut a = Moments::new(1);
        let mut b = Moments::new(1);
        for (i, &x) in xs.iter().enumerate() {
            whole.push(std::iter::once(x));
            if i < 11 {
                a.push(std::iter::once(x))
            } else {
                b.push(std::iter::once(x))
            }
        }
        a.merge(&b);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        for m in [whole, a] {
            let (mu, se) = m.mean_and_se();
            assert!((mu[0] - mean).abs() < 1e-12);
            assert!((se[0] - (var / n).sqrt()).abs() < 1e-12);
        }
        let mut same = Moments::new(1);
        (0..5).for_each(|_| same.push(std::iter::once(1e-40)));
        assert_eq!(same.mean_and_se().1[0], 0.0);
    }
}
