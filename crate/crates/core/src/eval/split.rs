use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, Duration, NaiveDate};
use rand::seq::index::sample;

use crate::fusion::FeatureTable;
use crate::seed::rng_for;

use super::EvalError;

/// Length of the validation tail in calendar days.
pub const VALIDATION_DAYS: i64 = 21;
/// Test days drawn from each calendar month.
pub const TEST_DAYS_PER_MONTH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn code(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub train_days: BTreeSet<NaiveDate>,
    pub validation_days: BTreeSet<NaiveDate>,
    pub test_days: BTreeSet<NaiveDate>,
    pub seed: u64,
}

impl SplitAssignment {
    pub fn which(&self, day: NaiveDate) -> Option<Split> {
        if self.test_days.contains(&day) {
            Some(Split::Test)
        } else if self.validation_days.contains(&day) {
            Some(Split::Validation)
        } else if self.train_days.contains(&day) {
            Some(Split::Train)
        } else {
            None
        }
    }

    /// Row indices of `table` in each split: (train, validation, test).
    pub fn rows(&self, table: &FeatureTable) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        let (mut tr, mut va, mut te) = (Vec::new(), Vec::new(), Vec::new());
        for (i, r) in table.rows.iter().enumerate() {
            match self.which(r.obs.date()) {
                Some(Split::Train) => tr.push(i),
                Some(Split::Validation) => va.push(i),
                Some(Split::Test) => te.push(i),
                None => {}
            }
        }
        (tr, va, te)
    }
}

/// Validation is the final 21 calendar days of the span; two test days are
/// drawn per calendar month from the days outside validation; the rest is
/// training.
pub fn make_split(days: &[NaiveDate], seed: u64) -> Result<SplitAssignment, EvalError> {
    let days: BTreeSet<NaiveDate> = days.iter().copied().collect();
    let (Some(&first), Some(&last)) = (days.first(), days.last()) else {
        return Err(EvalError::Split("no days to split".into()));
    };
    let months = (last.year() - first.year()) * 12 + last.month() as i32 - first.month() as i32 + 1;
    if months < 2 {
        return Err(EvalError::Split(format!("span {first}..{last} covers fewer than 2 calendar months")));
    }
    let cutoff = last - Duration::days(VALIDATION_DAYS - 1);
    let validation_days: BTreeSet<NaiveDate> = days.range(cutoff..).copied().collect();

    let mut by_month: BTreeMap<(i32, u32), Vec<NaiveDate>> = BTreeMap::new();
    for &d in &days {
        by_month.entry((d.year(), d.month())).or_default();
        if !validation_days.contains(&d) {
            by_month.get_mut(&(d.year(), d.month())).expect("inserted").push(d);
        }
    }
    let mut rng = rng_for(seed, "split");
    let mut test_days = BTreeSet::new();
    for ((y, m), eligible) in &by_month {
        if eligible.len() < TEST_DAYS_PER_MONTH {
            return Err(EvalError::Split(format!(
                "{y}-{m:02} has {} days outside validation, need {TEST_DAYS_PER_MONTH}",
                eligible.len()
            )));
        }
        for i in sample(&mut rng, eligible.len(), TEST_DAYS_PER_MONTH) {
            test_days.insert(eligible[i]);
        }
    }
    let train_days = days
        .iter()
        .copied()
        .filter(|d| !validation_days.contains(d) && !test_days.contains(d))
        .collect();
    Ok(SplitAssignment { train_days, validation_days, test_days, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(from: (i32, u32, u32), n: i64) -> Vec<NaiveDate> {
        let s = NaiveDate::from_ymd_opt(from.0, from.1, from.2).unwrap();
        (0..n).map(|i| s + Duration::days(i)).collect()
    }

    #[test]
    fn eighteen_months_give_36_test_days() {
        let days = span((2018, 1, 1), 546); // through 2019-06-30
        let s = make_split(&days, 2018).unwrap();
        assert_eq!(s.test_days.len(), 36);
        assert_eq!(s.validation_days.len(), 21);
        assert_eq!(*s.validation_days.first().unwrap(), NaiveDate::from_ymd_opt(2019, 6, 10).unwrap());
        assert!(s.test_days.is_disjoint(&s.validation_days));
        assert!(s.train_days.is_disjoint(&s.test_days));
        assert_eq!(s.train_days.len() + 36 + 21, days.len());
        assert_eq!(s, make_split(&days, 2018).unwrap());
        assert_ne!(s.test_days, make_split(&days, 2019).unwrap().test_days);
    }

    #[test]
    fn thin_month_is_an_error() {
        // ends on 2018-03-05: March is entirely validation
        let days = span((2018, 1, 1), 64);
        assert!(make_split(&days, 1).is_err());
        assert!(make_split(&span((2018, 1, 1), 20), 1).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn partition(seed in any::<u64>(), n in 80i64..400, skip in 2usize..7) {
                let days: Vec<NaiveDate> = span((2018, 1, 1), n).into_iter().enumerate()
                    .filter(|(i, _)| i % skip != 0).map(|(_, d)| d).collect();
                if let Ok(s) = make_split(&days, seed) {
                    prop_assert!(s.train_days.is_disjoint(&s.test_days));
                    prop_assert!(s.train_days.is_disjoint(&s.validation_days));
                    prop_assert!(s.test_days.is_disjoint(&s.validation_days));
                    let all: BTreeSet<NaiveDate> = s.train_days.iter().chain(&s.test_days).chain(&s.validation_days).copied().collect();
                    prop_assert_eq!(all, days.iter().copied().collect::<BTreeSet<_>>());
                }
            }
        }
    }
}
