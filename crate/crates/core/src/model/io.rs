use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::plan::QueryPlan;
use crate::error::{Error, Result};

/// Reads one plan per line; blank lines are skipped.
pub fn read_plans(path: &Path) -> Result<Vec<QueryPlan>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_plans(BufReader::new(file), path)
}

pub fn parse_plans(reader: impl BufRead, path: &Path) -> Result<Vec<QueryPlan>> {
    let mut plans = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let plan = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        plans.push(plan);
    }
    Ok(plans)
}

pub fn write_plans(path: &Path, plans: &[QueryPlan]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in plans {
        writeln!(w, "{}", p.to_json_line()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{linear_plan, two_way_join_plan};

    #[test]
    fn plans_round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plans.jsonl");
        let plans = vec![linear_plan(), two_way_join_plan(100)];
        write_plans(&path, &plans).unwrap();
        assert_eq!(read_plans(&path).unwrap(), plans);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&linear_plan().to_json_line()).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(serde_json::from_value::<QueryPlan>(v.clone()).is_err());
        let mut v2: serde_json::Value = serde_json::from_str(&linear_plan().to_json_line()).unwrap();
        v2["operators"][1]["kind"]["bogus"] = serde_json::json!(true);
        assert!(serde_json::from_value::<QueryPlan>(v2).is_err());
    }

    #[test]
    fn field_order_is_irrelevant() {
        let line = linear_plan().to_json_line();
        let v: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&line).unwrap();
        let reversed: serde_json::Map<_, _> = v.into_iter().rev().collect();
        let text = serde_json::to_string(&reversed).unwrap();
        let err = Path::new("x");
        let parsed = parse_plans(text.as_bytes(), err).unwrap();
        assert_eq!(parsed[0], linear_plan());
    }
}
