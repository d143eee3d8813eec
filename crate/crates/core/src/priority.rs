//! Priorities and communication bounds.
//!
//! A priority abstracts *when* a communication action happens. Concrete
//! actions always carry a natural number; `Bot` and `Top` only occur as the
//! bounds of computations that do not communicate at all.

use std::fmt;

use thiserror::Error;

/// The priority lattice `Bot < At(0) < At(1) < ... < Top`.
///
/// The derived ordering follows declaration order, so `Ord` is exactly the
/// lattice order and `min`/`max` are meet and join.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Priority {
    Bot,
    At(u64),
    Top,
}

impl Priority {
    /// Strict order.
    pub fn lt(self, other: Priority) -> bool {
        self < other
    }

    /// Greatest lower bound (`⊓`).
    pub fn meet(self, other: Priority) -> Priority {
        self.min(other)
    }

    /// Least upper bound (`⊔`).
    pub fn join(self, other: Priority) -> Priority {
        self.max(other)
    }
}

impl fmt::Display for Priority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Priority::Bot => f.write_str("bot"),
            Priority::At(n) => write!(f, "{n}"),
            Priority::Top => f.write_str("top"),
        }
    }
}

/// Parses `bot`, `top` or a decimal natural.
impl std::str::FromStr for Priority {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bot" => Ok(Priority::Bot),
            "top" => Ok(Priority::Top),
            n => n.parse().map(Priority::At),
        }
    }
}

/// The window `[lower, upper]` in which a computation communicates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Bounds {
    pub lower: Priority,
    pub upper: Priority,
}

impl Bounds {
    /// Bounds of a computation that performs no communication.
    pub const PURE: Bounds = Bounds { lower: Priority::Top, upper: Priority::Bot };

    pub fn new(lower: Priority, upper: Priority) -> Self {
        Bounds { lower, upper }
    }

    /// Bounds of a single action at priority `o`.
    pub fn exact(o: u64) -> Self {
        Bounds::new(Priority::At(o), Priority::At(o))
    }

    pub fn is_pure(&self) -> bool {
        *self == Bounds::PURE
    }

    /// `true` when `self` is at least as wide as `inner` on both ends.
    pub fn contains(&self, inner: &Bounds) -> bool {
        self.lower <= inner.lower && inner.upper <= self.upper
    }

    /// Combines two windows without any ordering requirement.
    pub fn union(&self, other: &Bounds) -> Bounds {
        Bounds::new(self.lower.meet(other.lower), self.upper.join(other.upper))
    }
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds::PURE
    }
}

impl fmt::Display for Bounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lower, self.upper)
    }
}

/// Sequencing would let the second computation start communicating before
/// the first has finished.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("cannot sequence {first} before {second}: requires {} < {}", first.upper, second.lower)]
pub struct SequenceError {
    pub first: Bounds,
    pub second: Bounds,
}

/// Bounds of `first` followed by `second`.
///
/// Requires `first.upper < second.lower`; the result is the meet of the
/// lower bounds and the join of the upper bounds.
pub fn seq_bounds(first: Bounds, second: Bounds) -> Result<Bounds, SequenceError> {
    if first.upper.lt(second.lower) {
        Ok(first.union(&second))
    } else {
        Err(SequenceError { first, second })
    }
}

#[cfg(test)]
mod tests {
    use super::Priority::*;
    use super::*;

    fn universe() -> Vec<Priority> {
        let mut v = vec![Bot];
        v.extend((0..=5).map(At));
        v.push(Top);
        v
    }

    #[test]
    fn strict_order_examples() {
        assert!(Bot.lt(At(0)));
        assert!(!Top.lt(Top));
        assert!(!At(3).lt(At(3)));
        assert!(At(2).lt(Top));
        assert!(!Bot.lt(Bot));
    }

    #[test]
    fn meet_join_examples() {
        assert_eq!(Top.meet(At(3)), At(3));
        assert_eq!(At(1).meet(At(4)), At(1));
        assert_eq!(Bot.meet(Top), Bot);
        assert_eq!(Bot.join(At(5)), At(5));
        assert_eq!(At(1).join(At(4)), At(4));
        assert_eq!(Top.join(At(9)), Top);
    }

    #[test]
    fn seq_bounds_examples() {
        assert_eq!(seq_bounds(Bounds::PURE, Bounds::exact(0)), Ok(Bounds::exact(0)));
        assert_eq!(seq_bounds(Bounds::exact(0), Bounds::exact(1)), Ok(Bounds::new(At(0), At(1))));
        let first = Bounds::new(At(0), At(1));
        let second = Bounds::new(At(1), At(2));
        assert_eq!(seq_bounds(first, second), Err(SequenceError { first, second }));
    }

    #[test]
    fn lattice_laws_exhaustive() {
        let u = universe();
        for &a in &u {
            assert_eq!(a.meet(a), a);
            assert_eq!(a.join(a), a);
            assert_eq!(Top.meet(a), a);
            assert_eq!(Bot.join(a), a);
            assert!(!a.lt(a));
            for &b in &u {
                assert_eq!(a.meet(b), b.meet(a));
                assert_eq!(a.join(b), b.join(a));
                assert_eq!(a.meet(a.join(b)), a);
                assert_eq!(a.join(a.meet(b)), a);
                if a != b {
                    assert!(a.lt(b) ^ b.lt(a));
                }
                for &c in &u {
                    assert_eq!(a.meet(b.meet(c)), a.meet(b).meet(c));
                    assert_eq!(a.join(b.join(c)), a.join(b).join(c));
                    if a.lt(b) && b.lt(c) {
                        assert!(a.lt(c));
                    }
                }
            }
        }
    }

    #[test]
    fn pure_identity_strict_edges() {
        // Left identity fails only when the right operand starts at bot.
        let starts_at_bot = Bounds::new(Bot, At(2));
        assert!(seq_bounds(Bounds::PURE, starts_at_bot).is_err());
        // Right identity fails only when the left operand ends at top.
        let ends_at_top = Bounds::new(At(2), Top);
        assert!(seq_bounds(ends_at_top, Bounds::PURE).is_err());
        assert_eq!(seq_bounds(Bounds::PURE, Bounds::PURE), Ok(Bounds::PURE));
    }

    #[test]
    fn rendering() {
        assert_eq!(Bounds::PURE.to_string(), "[top,bot]");
        assert_eq!(Bounds::new(At(0), At(7)).to_string(), "[0,7]");
        assert_eq!("bot".parse::<Priority>().unwrap(), Bot);
        assert_eq!("12".parse::<Priority>().unwrap(), At(12));
        assert!("-1".parse::<Priority>().is_err());
        assert!("99999999999999999999999".parse::<Priority>().is_err());
    }
}
