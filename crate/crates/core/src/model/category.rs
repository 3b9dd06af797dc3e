use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bucketing of the maximum operator parallelism of a plan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParallelismCategory {
    XS,
    S,
    M,
    L,
    XL,
    XXL,
}

impl ParallelismCategory {
    pub const ALL: [ParallelismCategory; 6] = [
        ParallelismCategory::XS,
        ParallelismCategory::S,
        ParallelismCategory::M,
        ParallelismCategory::L,
        ParallelismCategory::XL,
        ParallelismCategory::XXL,
    ];

    /// Half-open degree interval `[lo, hi)`; `hi` is `None` for XXL.
    pub fn bounds(self) -> (u32, Option<u32>) {
        match self {
            ParallelismCategory::XS => (1, Some(8)),
            ParallelismCategory::S => (8, Some(16)),
            ParallelismCategory::M => (16, Some(32)),
            ParallelismCategory::L => (32, Some(64)),
            ParallelismCategory::XL => (64, Some(128)),
            ParallelismCategory::XXL => (128, None),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ParallelismCategory::XS => "XS",
            ParallelismCategory::S => "S",
            ParallelismCategory::M => "M",
            ParallelismCategory::L => "L",
            ParallelismCategory::XL => "XL",
            ParallelismCategory::XXL => "XXL",
        }
    }
}

impl fmt::Display for ParallelismCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ParallelismCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ParallelismCategory::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parallelism category `{s}`")))
    }
}

pub fn categorize_parallelism(max_degree: u32) -> Result<ParallelismCategory> {
    match max_degree {
        0 => Err(Error::InvalidArgument("parallelism degree must be at least 1".into())),
        1..=7 => Ok(ParallelismCategory::XS),
        8..=15 => Ok(ParallelismCategory::S),
        16..=31 => Ok(ParallelismCategory::M),
        32..=63 => Ok(ParallelismCategory::L),
        64..=127 => Ok(ParallelismCategory::XL),
        _ => Ok(ParallelismCategory::XXL),
    }
}

/// Category of a whole plan: that of its largest operator parallelism.
pub fn plan_category(plan: &super::QueryPlan) -> ParallelismCategory {
    categorize_parallelism(plan.max_parallelism().max(1)).expect("degree clamped to >= 1")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn boundary_examples() {
        assert_eq!(categorize_parallelism(1).unwrap(), ParallelismCategory::XS);
        assert_eq!(categorize_parallelism(8).unwrap(), ParallelismCategory::S);
        assert_eq!(categorize_parallelism(128).unwrap(), ParallelismCategory::XXL);
        assert!(categorize_parallelism(0).is_err());
    }

    proptest! {
        #[test]
        fn exactly_one_interval_contains_degree(d in 1u32..100_000) {
            let hits: Vec<_> = ParallelismCategory::ALL
                .into_iter()
                .filter(|c| {
                    let (lo, hi) = c.bounds();
                    d >= lo && hi.is_none_or(|h| d < h)
                })
                .collect();
            prop_assert_eq!(hits.len(), 1);
            prop_assert_eq!(hits[0], categorize_parallelism(d).unwrap());
        }
    }
}
