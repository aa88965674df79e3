//! Per-class mean box size statistics.
//!
//! JSON layout: `{"Car": {"l": 4.4, "w": 1.79, "h": 1.49}, ...}`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanDims {
    pub l: f64,
    pub w: f64,
    pub h: f64,
}

impl MeanDims {
    pub const fn new(l: f64, w: f64, h: f64) -> Self {
        MeanDims { l, w, h }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SizeStats {
    pub classes: BTreeMap<String, MeanDims>,
}

/// Mean car sizes (length, width, height in meters) of the public AV datasets.
const BUNDLED: [(&str, MeanDims); 3] = [
    ("kitti", MeanDims::new(4.4, 1.79, 1.49)),
    ("nuscenes", MeanDims::new(4.61, 1.95, 1.73)),
    ("waymo", MeanDims::new(5.15, 1.93, 1.71)),
];

impl SizeStats {
    pub fn validate(&self) -> Result<()> {
        for (class, d) in &self.classes {
            if !(d.l > 0.0 && d.w > 0.0 && d.h > 0.0) || ![d.l, d.w, d.h].iter().all(|v| v.is_finite()) {
                return Err(Error::NonPositive(format!(
                    "mean dimensions of {class} ({}, {}, {})",
                    d.l, d.w, d.h
                )));
            }
        }
        Ok(())
    }

    /// Built-in statistics by dataset name (`kitti`, `nuscenes`, `waymo`).
    pub fn bundled(name: &str) -> Option<SizeStats> {
        let key = name.to_ascii_lowercase();
        BUNDLED.iter().find(|(n, _)| *n == key).map(|(_, car)| SizeStats {
            classes: BTreeMap::from([("Car".to_string(), *car)]),
        })
    }

    pub fn bundled_names() -> impl Iterator<Item = &'static str> {
        BUNDLED.iter().map(|(n, _)| *n)
    }

    pub fn from_json(text: &str) -> Result<SizeStats> {
        let stats: SizeStats = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        stats.validate()?;
        Ok(stats)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("size stats serialize")
    }

    pub fn get(&self, class: &str) -> Option<&MeanDims> {
        self.classes.get(class)
    }
}

pub fn read_size_stats(path: &Path) -> Result<SizeStats> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    SizeStats::from_json(&text).map_err(|e| e.in_file(path))
}

/// Resolves a bundled dataset name first, falling back to a JSON file path.
pub fn resolve_size_stats(name_or_path: &str) -> Result<SizeStats> {
    match SizeStats::bundled(name_or_path) {
        Some(stats) => Ok(stats),
        None => read_size_stats(Path::new(name_or_path)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_tables() {
        let kitti = SizeStats::bundled("kitti").unwrap();
        assert_eq!(kitti.get("Car"), Some(&MeanDims::new(4.4, 1.79, 1.49)));
        let waymo = SizeStats::bundled("Waymo").unwrap();
        assert_eq!(waymo.get("Car"), Some(&MeanDims::new(5.15, 1.93, 1.71)));
        let nuscenes = SizeStats::bundled("nuscenes").unwrap();
        assert_eq!(nuscenes.get("Car"), Some(&MeanDims::new(4.61, 1.95, 1.73)));
        assert!(SizeStats::bundled("lyft").is_none());
        for name in SizeStats::bundled_names() {
            SizeStats::bundled(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn parses_json() {
        let stats = SizeStats::from_json(r#"{"Car":{"l":4.0,"w":1.8,"h":1.5},"Van":{"l":5,"w":2,"h":2.1}}"#).unwrap();
        assert_eq!(stats.classes.len(), 2);
        assert_eq!(SizeStats::from_json(&stats.to_json()).unwrap(), stats);
    }

    #[test]
    fn rejects_non_positive() {
        let err = SizeStats::from_json(r#"{"Car":{"l":-1,"w":1,"h":1}}"#).unwrap_err();
        assert!(matches!(err, Error::NonPositive(_)));
        assert!(SizeStats::from_json(r#"{"Car":{"l":1,"w":1}}"#).is_err());
    }
}
