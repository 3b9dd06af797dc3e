use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::value::{DataType, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum FilterFn {
    Le,
    Ge,
    Ne,
    Eq,
    Lt,
    Gt,
    StartsWith,
    EndsWith,
    EndsNotWith,
    StartsNotWith,
}

impl FilterFn {
    pub const ALL: [FilterFn; 10] = [
        FilterFn::Le,
        FilterFn::Ge,
        FilterFn::Ne,
        FilterFn::Eq,
        FilterFn::Lt,
        FilterFn::Gt,
        FilterFn::StartsWith,
        FilterFn::EndsWith,
        FilterFn::EndsNotWith,
        FilterFn::StartsNotWith,
    ];

    pub fn is_string_only(self) -> bool {
        matches!(
            self,
            FilterFn::StartsWith | FilterFn::EndsWith | FilterFn::EndsNotWith | FilterFn::StartsNotWith
        )
    }

    pub fn applies_to(self, ty: DataType) -> bool {
        !self.is_string_only() || ty == DataType::String
    }
}

impl fmt::Display for FilterFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterFn::Le => "<=",
            FilterFn::Ge => ">=",
            FilterFn::Ne => "!=",
            FilterFn::Eq => "==",
            FilterFn::Lt => "<",
            FilterFn::Gt => ">",
            FilterFn::StartsWith => "startsWith",
            FilterFn::EndsWith => "endsWith",
            FilterFn::EndsNotWith => "endsNotWith",
            FilterFn::StartsNotWith => "startsNotWith",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub field: usize,
    pub function: FilterFn,
    pub literal: Value,
    pub estimated_selectivity: f64,
}

impl FilterSpec {
    pub fn new(field: usize, function: FilterFn, literal: Value) -> Self {
        FilterSpec { field, function, literal, estimated_selectivity: 1.0 }
    }

    /// Applies the predicate to one field value. Type mismatches never match.
    pub fn matches_value(&self, value: &Value) -> bool {
        if self.function.is_string_only() {
            let (Some(s), Some(lit)) = (value.as_str(), self.literal.as_str()) else {
                return false;
            };
            return match self.function {
                FilterFn::StartsWith => s.starts_with(lit),
                FilterFn::EndsWith => s.ends_with(lit),
                FilterFn::EndsNotWith => !s.ends_with(lit),
                FilterFn::StartsNotWith => !s.starts_with(lit),
                _ => unreachable!(),
            };
        }
        let Some(ord) = value.compare(&self.literal) else {
            return false;
        };
        match self.function {
            FilterFn::Le => ord != Ordering::Greater,
            FilterFn::Ge => ord != Ordering::Less,
            FilterFn::Ne => ord != Ordering::Equal,
            FilterFn::Eq => ord == Ordering::Equal,
            FilterFn::Lt => ord == Ordering::Less,
            FilterFn::Gt => ord == Ordering::Greater,
            _ => unreachable!(),
        }
    }

    pub fn matches(&self, tuple: &[Value]) -> bool {
        tuple.get(self.field).is_some_and(|v| self.matches_value(v))
    }

    pub fn check_against(&self, field_type: Option<DataType>) -> Result<(), String> {
        let Some(ty) = field_type else {
            return Err(format!("filter field {} out of range", self.field));
        };
        if !self.function.applies_to(ty) {
            return Err(format!("filter {} not applicable to {ty} field", self.function));
        }
        if self.literal.data_type() != ty {
            return Err(format!("filter literal {} does not match {ty} field", self.literal));
        }
        Ok(())
    }
}
