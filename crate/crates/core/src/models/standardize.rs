use crate::num::Real;

/// Per-column mean and standard deviation, applied as `(x − mean) / std`.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Real> Standardizer<T> {
    /// Population statistics over `rows`. Constant columns get std 1.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [T]>) -> Self {
        let rows: Vec<&[T]> = rows.into_iter().collect();
        let d = rows.first().map_or(0, |r| r.len());
        let n = T::from_usize_lossy(rows.len().max(1));
        let mut mean = vec![T::zero(); d];
        for r in &rows {
            for (m, &v) in mean.iter_mut().zip(*r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![T::zero(); d];
        for r in &rows {
            for ((s, &v), &m) in var.iter_mut().zip(*r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > T::lit(1e-12) {
                    sd
                } else {
                    T::one()
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((&v, &m), &s)| (v - m) / s).collect()
    }
}
