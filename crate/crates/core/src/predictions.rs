//! Predicted class ids per sample: the common output of every classifier
//! variant and the input of every metric.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredictionSet {
    sample_ids: Vec<String>,
    classes: Vec<u32>,
    class_count: u32,
    variant: String,
}

impl PredictionSet {
    pub fn new(
        sample_ids: Vec<String>,
        classes: Vec<u32>,
        class_count: u32,
        variant: impl Into<String>,
    ) -> Result<Self> {
        if sample_ids.len() != classes.len() {
            return Err(Error::LengthMismatch {
                expected: sample_ids.len(),
                actual: classes.len(),
            });
        }
        if let Some(&bad) = classes.iter().find(|&&c| c >= class_count) {
            return Err(Error::arg(format!(
                "predicted class {bad} out of range for {class_count} classes"
            )));
        }
        Ok(Self {
            sample_ids,
            classes,
            class_count,
            variant: variant.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn classes(&self) -> &[u32] {
        &self.classes
    }

    pub fn class_count(&self) -> u32 {
        self.class_count
    }

    pub fn variant(&self) -> &str {
        &self.variant
    }

    pub fn with_variant(mut self, variant: impl Into<String>) -> Self {
        self.variant = variant.into();
        self
    }

    /// Error unless both sets list the same ids in the same order.
    pub fn check_aligned(&self, ids: &[String]) -> Result<()> {
        check_aligned(&self.sample_ids, ids)
    }

    /// Reorder to match `ids`; every id must be present.
    pub fn align_to(&self, ids: &[String]) -> Result<Self> {
        if self.sample_ids == ids {
            return Ok(self.clone());
        }
        let index: HashMap<&str, usize> = self
            .sample_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let mut classes = Vec::with_capacity(ids.len());
        for id in ids {
            let &i = index
                .get(id.as_str())
                .ok_or_else(|| Error::arg(format!("no prediction for sample {id:?}")))?;
            classes.push(self.classes[i]);
        }
        Self::new(ids.to_vec(), classes, self.class_count, self.variant.clone())
    }

    /// Subset at the given positions.
    pub fn select(&self, positions: &[u32]) -> Self {
        Self {
            sample_ids: positions
                .iter()
                .map(|&p| self.sample_ids[p as usize].clone())
                .collect(),
            classes: positions.iter().map(|&p| self.classes[p as usize]).collect(),
            class_count: self.class_count,
            variant: self.variant.clone(),
        }
    }

    /// Read a `sample_id,class_id` CSV with a header row.
    pub fn read_csv(path: &Path, class_count: u32, variant: impl Into<String>) -> Result<Self> {
        let bad = |message: String| Error::Predictions {
            path: path.to_path_buf(),
            message,
        };
        let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
        let mut ids = Vec::new();
        let mut classes = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| bad(e.to_string()))?;
            if record.len() != 2 {
                return Err(bad(format!("record {} has {} fields", line + 1, record.len())));
            }
            ids.push(record[0].to_string());
            let class = record[1]
                .trim()
                .parse::<u32>()
                .map_err(|e| bad(format!("record {}: {e}", line + 1)))?;
            classes.push(class);
        }
        Self::new(ids, classes, class_count, variant).map_err(|e| bad(e.to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Predictions {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let io = |e: csv::Error| Error::Predictions {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        w.write_record(["sample_id", "class_id"]).map_err(io)?;
        for (id, c) in self.sample_ids.iter().zip(&self.classes) {
            w.write_record([id.as_str(), &c.to_string()]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn check_aligned(left: &[String], right: &[String]) -> Result<()> {
    if left.len() != right.len() {
        return Err(Error::LengthMismatch {
            expected: right.len(),
            actual: left.len(),
        });
    }
    if let Some(position) = left.iter().zip(right).position(|(a, b)| a != b) {
        return Err(Error::Misaligned {
            position,
            left: left[position].clone(),
            right: right[position].clone(),
        });
    }
    Ok(())
}

/// Named prediction sets over one common sample list, e.g. one member per
/// template, per k, or per modality.
#[derive(Clone, Debug)]
pub struct VariantFamily {
    name: String,
    members: Vec<PredictionSet>,
}

impl VariantFamily {
    pub fn new(name: impl Into<String>, members: Vec<PredictionSet>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::arg("a variant family needs at least one member"))?;
        for m in &members[1..] {
            m.check_aligned(first.sample_ids())?;
            if m.class_count() != first.class_count() {
                return Err(Error::arg("family members disagree on the class count"));
            }
        }
        Ok(Self {
            name: name.into(),
            members,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn members(&self) -> &[PredictionSet] {
        &self.members
    }

    pub fn sample_ids(&self) -> &[String] {
        self.members[0].sample_ids()
    }

    pub fn class_count(&self) -> u32 {
        self.members[0].class_count()
    }

    /// Members of `self` followed by members of `other`.
    pub fn union(&self, other: &VariantFamily) -> Result<Self> {
        let mut members = self.members.clone();
        members.extend(other.members.iter().cloned());
        Self::new(format!("{}+{}", self.name, other.name), members)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(PredictionSet::new(ids(2), vec![0, 5], 5, "x").is_err());
    }

    #[test]
    fn align_reorders() {
        let p = PredictionSet::new(ids(3), vec![0, 1, 2], 3, "x").unwrap();
        let target = vec!["s2".to_string(), "s0".to_string(), "s1".to_string()];
        assert_eq!(p.align_to(&target).unwrap().classes(), &[2, 0, 1]);
        assert!(p.align_to(&["zz".to_string()]).is_err());
        assert!(matches!(
            p.check_aligned(&target),
            Err(Error::Misaligned { position: 0, .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let p = PredictionSet::new(ids(3), vec![2, 0, 1], 3, "import").unwrap();
        p.write_csv(&path).unwrap();
        assert_eq!(PredictionSet::read_csv(&path, 3, "import").unwrap(), p);
        std::fs::write(&path, "sample_id,class_id\ns0,x\n").unwrap();
        assert!(PredictionSet::read_csv(&path, 3, "import").is_err());
    }

    #[test]
    fn family_requires_alignment() {
        let a = PredictionSet::new(ids(2), vec![0, 1], 2, "a").unwrap();
        let b = PredictionSet::new(vec!["s1".into(), "s0".into()], vec![0, 1], 2, "b").unwrap();
        assert!(VariantFamily::new("f", vec![a.clone(), b]).is_err());
        assert!(VariantFamily::new("f", vec![]).is_err());
        let f = VariantFamily::new("f", vec![a.clone()]).unwrap();
        assert_eq!(f.union(&f).unwrap().members().len(), 2);
    }
}
