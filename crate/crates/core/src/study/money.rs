use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};

/// US currency held as whole cents.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(u64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_cents(cents: u64) -> Money {
        Money(cents)
    }

    pub const fn cents(self) -> u64 {
        self.0
    }

    /// Real-valued dollars, for metric and report boundaries only.
    pub fn to_dollars(self) -> f64 {
        self.0 as f64 / 100.0
    }

    pub fn checked_sub(self, rhs: Money) -> Option<Money> {
        self.0.checked_sub(rhs.0).map(Money)
    }

    /// Nearest multiple of `step` cents, ties rounding up.
    pub fn quantize(self, step: u64) -> Money {
        assert!(step > 0, "quantization step must be positive");
        Money((self.0 + step / 2) / step * step)
    }
}

impl Add for Money {
    type Output = Money;

    fn add(self, rhs: Money) -> Money {
        Money(self.0.checked_add(rhs.0).expect("money overflow"))
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        *self = *self + rhs;
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${}.{:02}", self.0 / 100, self.0 % 100)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_is_exact() {
        let a = Money::from_cents(825);
        let b = Money::from_cents(175);
        assert_eq!(a + b, Money::from_cents(1000));
        assert_eq!(b.checked_sub(a), None);
        assert_eq!(a.checked_sub(b), Some(Money::from_cents(650)));
        let total: Money = std::iter::repeat_n(Money::from_cents(10), 1000).sum();
        assert_eq!(total.cents(), 10_000);
        assert!(a > b);
    }

    #[test]
    fn display_and_quantize() {
        assert_eq!(Money::from_cents(825).to_string(), "$8.25");
        assert_eq!(Money::from_cents(5).to_string(), "$0.05");
        assert_eq!(Money::from_cents(812).quantize(25), Money::from_cents(800));
        assert_eq!(Money::from_cents(813).quantize(25), Money::from_cents(825));
        assert_eq!(Money::from_cents(600).to_dollars(), 6.0);
    }
}
