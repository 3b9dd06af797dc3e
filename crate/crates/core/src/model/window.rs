use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Sliding,
    Tumbling,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowPolicy {
    Count,
    Time,
}

/// Window definition. `length` and `slide` are tuples for count windows and
/// milliseconds for time windows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub kind: WindowKind,
    pub policy: WindowPolicy,
    pub length: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slide: Option<u64>,
}

pub const NANOS_PER_MILLI: u64 = 1_000_000;

impl WindowSpec {
    pub fn tumbling(policy: WindowPolicy, length: u64) -> Self {
        WindowSpec { kind: WindowKind::Tumbling, policy, length, slide: None }
    }

    pub fn sliding(policy: WindowPolicy, length: u64, slide: u64) -> Self {
        WindowSpec { kind: WindowKind::Sliding, policy, length, slide: Some(slide) }
    }

    /// Effective slide: equal to the length for tumbling windows.
    pub fn step(&self) -> u64 {
        match self.kind {
            WindowKind::Tumbling => self.length,
            WindowKind::Sliding => self.slide.unwrap_or(self.length),
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if self.length == 0 {
            return Err("window length must be positive".into());
        }
        match (self.kind, self.slide) {
            (WindowKind::Tumbling, Some(_)) => Err("tumbling window must not declare a slide".into()),
            (WindowKind::Sliding, None) => Err("sliding window requires a slide".into()),
            (WindowKind::Sliding, Some(s)) if s == 0 || s > self.length => {
                Err(format!("sliding window slide {s} outside (0, {}]", self.length))
            }
            _ => Ok(()),
        }
    }

    /// Length and step in the unit windows are assigned in: nanoseconds for
    /// time windows, tuple ordinals for count windows.
    pub fn extent(&self) -> (u64, u64) {
        match self.policy {
            WindowPolicy::Time => (self.length * NANOS_PER_MILLI, self.step() * NANOS_PER_MILLI),
            WindowPolicy::Count => (self.length, self.step()),
        }
    }

    /// Start positions (in `extent` units) of every window containing `pos`.
    /// Windows start at non-negative multiples of the step.
    pub fn windows_containing(&self, pos: u64) -> impl Iterator<Item = u64> {
        let (len, step) = self.extent();
        let last = pos / step;
        let first = if pos + 1 > len { (pos + 1 - len).div_ceil(step) } else { 0 };
        (first..=last).map(move |k| k * step)
    }

    pub fn slide_fraction(&self) -> f64 {
        self.step() as f64 / self.length as f64
    }
}
