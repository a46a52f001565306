use std::collections::VecDeque;

/// FIFO of detached `(prediction, target)` snapshots from earlier steps.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryQueue {
    capacity: usize,
    entries: VecDeque<(f64, f64)>,
}

impl HistoryQueue {
    pub fn new(capacity: usize) -> Self {
        HistoryQueue { capacity, entries: VecDeque::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, prediction: f64, target: f64) {
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((prediction, target));
    }

    pub fn push_batch(&mut self, predictions: &[f64], targets: &[f64]) {
        for (&p, &t) in predictions.iter().zip(targets) {
            self.push(p, t);
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &(f64, f64)> {
        self.entries.iter()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifo_eviction() {
        let mut q = HistoryQueue::new(3);
        q.push_batch(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 40.0]);
        assert_eq!(q.len(), 3);
        let v: Vec<_> = q.iter().copied().collect();
        assert_eq!(v, vec![(2.0, 20.0), (3.0, 30.0), (4.0, 40.0)]);
    }

    #[test]
    fn zero_capacity_stays_empty() {
        let mut q = HistoryQueue::new(0);
        q.push(1.0, 1.0);
        assert!(q.is_empty());
    }
}
