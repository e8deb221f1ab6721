//! Small numeric kernels shared by every module.
//!
//! All accumulation is 64-bit, in a fixed left-to-right order, so results do
//! not depend on how work was split across threads.

/// Dot product of two f32 rows accumulated in f64.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        acc += f64::from(*x) * f64::from(*y);
    }
    acc
}

/// Squared Euclidean distance accumulated in f64.
#[inline]
pub fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let d = f64::from(*x) - f64::from(*y);
        acc += d * d;
    }
    acc
}

#[inline]
pub fn norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
    count: usize,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
        self.count += 1;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Mean of the added values; `NaN` when nothing was added.
    pub fn mean(&self) -> f64 {
        self.total() / self.count as f64
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for v in iter {
            s.add(v);
        }
        s
    }
}

/// Compensated mean over a slice, in index order.
pub fn mean(values: &[f64]) -> f64 {
    values.iter().copied().collect::<CompensatedSum>().mean()
}

/// Mean and standard error of the mean (sample standard deviation / sqrt(n)).
pub fn mean_and_standard_error(values: &[f64]) -> (f64, f64) {
    let m = mean(values);
    if values.len() < 2 {
        return (m, 0.0);
    }
    let var = values
        .iter()
        .map(|v| (v - m) * (v - m))
        .collect::<CompensatedSum>()
        .total()
        / (values.len() - 1) as f64;
    (m, (var / values.len() as f64).sqrt())
}

/// Exact median; averages the two middle values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    })
}
