use std::ops::Index;

use crate::study::IntervalIndex;

/// Values on a grid, one slot per interval, `None` where missing.
#[derive(Debug, Clone, PartialEq)]
pub struct Series<T>(pub Vec<Option<T>>);

impl<T: Clone> Series<T> {
    pub fn missing(len: usize) -> Self {
        Series(vec![None; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, idx: IntervalIndex) -> Option<&T> {
        self.0.get(idx.0).and_then(Option::as_ref)
    }

    pub fn set(&mut self, idx: IntervalIndex, value: Option<T>) {
        self.0[idx.0] = value;
    }

    pub fn present(&self) -> usize {
        self.0.iter().filter(|v| v.is_some()).count()
    }
}

impl<T> Index<usize> for Series<T> {
    type Output = Option<T>;

    fn index(&self, i: usize) -> &Option<T> {
        &self.0[i]
    }
}

/// Forward-fills runs of at most `max_gap` missing values that follow a
/// present value. Longer runs, and leading runs, stay missing.
pub fn impute_series<T: Clone>(series: &Series<T>, max_gap: usize) -> Series<T> {
    let mut out = series.0.clone();
    let n = out.len();
    let mut i = 0;
    while i < n {
        if out[i].is_some() {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && out[i].is_none() {
            i += 1;
        }
        let run = i - start;
        if start > 0 && run <= max_gap {
            let fill = out[start - 1].clone();
            for slot in &mut out[start..i] {
                *slot = fill.clone();
            }
        }
    }
    Series(out)
}
