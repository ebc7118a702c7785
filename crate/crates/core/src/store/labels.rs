/// Per-sample class-id sets over `class_count` classes, stored as a flat
/// offset table. Single-label stores have exactly one id per sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSet {
    class_count: u32,
    offsets: Vec<usize>,
    ids: Vec<u32>,
}

impl LabelSet {
    pub fn from_single(ids: Vec<u32>, class_count: u32) -> Self {
        let offsets = (0..=ids.len()).collect();
        Self {
            class_count,
            offsets,
            ids,
        }
    }

    pub fn from_sets<I, S>(sets: I, class_count: u32) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u32]>,
    {
        let mut offsets = vec![0];
        let mut ids = Vec::new();
        for set in sets {
            ids.extend_from_slice(set.as_ref());
            offsets.push(ids.len());
        }
        Self {
            class_count,
            offsets,
            ids,
        }
    }

    pub fn class_count(&self) -> u32 {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, sample: usize) -> &[u32] {
        &self.ids[self.offsets[sample]..self.offsets[sample + 1]]
    }

    /// First listed label. For single-label data this is the label.
    pub fn primary(&self, sample: usize) -> u32 {
        self.get(sample)[0]
    }

    pub fn contains(&self, sample: usize, class: u32) -> bool {
        self.get(sample).contains(&class)
    }

    pub fn is_single_label(&self) -> bool {
        self.offsets.windows(2).all(|w| w[1] - w[0] == 1)
    }

    /// Largest number of labels carried by one sample.
    pub fn max_set_len(&self) -> usize {
        self.offsets
            .windows(2)
            .map(|w| w[1] - w[0])
            .max()
            .unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    pub fn with_class_count(mut self, class_count: u32) -> Self {
        self.class_count = class_count;
        self
    }

    /// Labels of the given samples, in the given order.
    pub fn select(&self, rows: &[u32]) -> Self {
        Self::from_sets(rows.iter().map(|&r| self.get(r as usize)), self.class_count)
    }

    /// Sample indices grouped by primary label.
    pub fn members_by_class(&self) -> Vec<Vec<u32>> {
        let mut members = vec![Vec::new(); self.class_count as usize];
        for i in 0..self.len() {
            let c = self.primary(i) as usize;
            if c < members.len() {
                members[c].push(i as u32);
            }
        }
        members
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_and_multi() {
        let single = LabelSet::from_single(vec![2, 0, 1], 3);
        assert!(single.is_single_label());
        assert_eq!(single.get(1), &[0]);

        let multi = LabelSet::from_sets([vec![0], vec![1, 2], vec![2]], 3);
        assert!(!multi.is_single_label());
        assert!(multi.contains(1, 2));
        assert_eq!(multi.primary(1), 1);
        assert_eq!(multi.max_set_len(), 2);
        assert_eq!(multi.select(&[2, 1]).get(1), &[1, 2]);
    }

    #[test]
    fn members_group_by_primary() {
        let labels = LabelSet::from_single(vec![1, 0, 1, 1], 3);
        assert_eq!(labels.members_by_class(), vec![vec![1], vec![0, 2, 3], vec![]]);
    }
}
