//! Fixed-capacity FIFO of past key embeddings.

use crate::autograd::UNIT_TOLERANCE;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_CAPACITY: usize = 4096;

#[derive(Clone, Debug)]
pub struct NegativeQueue {
    capacity: usize,
    dim: usize,
    /// Ring storage, `capacity * dim` once full.
    slots: Vec<f32>,
    /// Slot the next entry is written to once the ring is full.
    head: usize,
    len: usize,
}

/// Queues are equal when they hold the same entries in the same order,
/// wherever the ring happens to start.
impl PartialEq for NegativeQueue {
    fn eq(&self, other: &Self) -> bool {
        self.capacity == other.capacity && self.dim == other.dim && self.negatives() == other.negatives()
    }
}

impl NegativeQueue {
    pub fn new(capacity: usize, dim: usize) -> Result<Self> {
        if capacity == 0 || dim == 0 {
            return Err(Error::Parameter(format!(
                "queue needs positive capacity and width, got {capacity}x{dim}"
            )));
        }
        Ok(NegativeQueue {
            capacity,
            dim,
            slots: Vec::new(),
            head: 0,
            len: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_full(&self) -> bool {
        self.len == self.capacity
    }

    /// Appends rows of `rows[B, dim]`, evicting the oldest entries once full.
    /// Every row must be unit length.
    pub fn enqueue(&mut self, rows: &[f32]) -> Result<()> {
        if !rows.len().is_multiple_of(self.dim) {
            return Err(Error::dim(
                "enqueue",
                format!("{} values is not a multiple of width {}", rows.len(), self.dim),
            ));
        }
        for (i, row) in rows.chunks(self.dim).enumerate() {
            let norm = row.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::Contract(format!("queued row {i} has norm {norm}")));
            }
        }
        for row in rows.chunks(self.dim) {
            if self.len < self.capacity {
                self.slots.extend_from_slice(row);
                self.len += 1;
            } else {
                let at = self.head * self.dim;
                self.slots[at..at + self.dim].copy_from_slice(row);
                self.head = (self.head + 1) % self.capacity;
            }
        }
        Ok(())
    }

    /// Entries oldest first, `[len, dim]`.
    pub fn negatives(&self) -> Tensor {
        let mut data = Vec::with_capacity(self.len * self.dim);
        let split = self.head * self.dim;
        data.extend_from_slice(&self.slots[split..]);
        data.extend_from_slice(&self.slots[..split]);
        Tensor::new(vec![self.len, self.dim], data).expect("ring holds len rows")
    }

    /// Rebuilds a queue from oldest-first entries.
    pub fn from_entries(capacity: usize, entries: &Tensor) -> Result<Self> {
        let [n, d] = entries.dims2("queue entries")?;
        let mut q = NegativeQueue::new(capacity, d)?;
        if n > capacity {
            return Err(Error::Capacity {
                requested: n,
                available: capacity,
            });
        }
        q.enqueue(entries.data())?;
        Ok(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn basis(dim: usize, i: usize) -> Vec<f32> {
        let mut v = vec![0.0; dim];
        v[i % dim] = 1.0;
        v
    }

    #[test]
    fn equality_ignores_where_the_ring_starts() {
        let mut rotated = NegativeQueue::new(3, 2).unwrap();
        for i in 0..5 {
            rotated.enqueue(&basis(2, i)).unwrap();
        }
        let rebuilt = NegativeQueue::from_entries(3, &rotated.negatives()).unwrap();
        assert_eq!(rotated, rebuilt);
        let mut other = rebuilt.clone();
        other.enqueue(&basis(2, 0)).unwrap();
        assert_ne!(rotated, other);
    }

    #[test]
    fn fills_then_evicts_oldest() {
        let mut q = NegativeQueue::new(3, 4).unwrap();
        for i in 0..3 {
            q.enqueue(&basis(4, i)).unwrap();
        }
        assert!(q.is_full());
        q.enqueue(&[basis(4, 3), basis(4, 0)].concat()).unwrap();
        assert_eq!(q.len(), 3);
        let rows: Vec<usize> = q
            .negatives()
            .data()
            .chunks(4)
            .map(|r| r.iter().position(|&v| v == 1.0).unwrap())
            .collect();
        assert_eq!(rows, vec![2, 3, 0]);
    }

    #[test]
    fn rejects_non_unit_rows() {
        let mut q = NegativeQueue::new(4, 2).unwrap();
        assert!(matches!(q.enqueue(&[0.5, 0.5]), Err(Error::Contract(_))));
        assert!(q.enqueue(&[0.6, 0.8]).is_ok());
        assert!(q.enqueue(&[1.0]).is_err());
    }

    #[test]
    fn roundtrips_through_entries() {
        let mut q = NegativeQueue::new(3, 2).unwrap();
        for i in 0..5 {
            q.enqueue(&basis(2, i)).unwrap();
        }
        let back = NegativeQueue::from_entries(3, &q.negatives()).unwrap();
        assert_eq!(back.negatives(), q.negatives());
    }

    proptest! {
        #[test]
        fn behaves_like_a_bounded_deque(cap in 1usize..12, batches in proptest::collection::vec(0usize..7, 0..20)) {
            let mut q = NegativeQueue::new(cap, 2).unwrap();
            let mut model = std::collections::VecDeque::new();
            let mut next = 0u32;
            for b in batches {
                let mut rows = Vec::new();
                for _ in 0..b {
                    let a = next as f32 * 0.1;
                    rows.extend([a.cos(), a.sin()]);
                    model.push_back(next);
                    next += 1;
                }
                q.enqueue(&rows).unwrap();
                while model.len() > cap {
                    model.pop_front();
                }
                prop_assert_eq!(q.len(), model.len());
                let expect: Vec<f32> = model
                    .iter()
                    .flat_map(|&i| { let a = i as f32 * 0.1; [a.cos(), a.sin()] })
                    .collect();
                let neg = q.negatives();
                prop_assert_eq!(neg.data(), &expect[..]);
            }
        }
    }
}
