use crate::error::{Error, Result};

/// Binary tree whose internal nodes hold the sum of their children.
///
/// Leaves are padded up to a power of two so that leaf order matches
/// insertion-slot order; padded leaves hold zero priority and are never
/// returned by [`SumTree::get`] while the total is positive.
#[derive(Clone, Debug)]
pub struct SumTree<T> {
    capacity: usize,
    leaves: usize,
    tree: Vec<f64>,
    data: Vec<T>,
    cursor: usize,
}

impl<T> SumTree<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig("sum tree capacity must be >= 1".into()));
        }
        let leaves = capacity.next_power_of_two();
        Ok(Self {
            capacity,
            leaves,
            tree: vec![0.0; 2 * leaves - 1],
            data: Vec::with_capacity(capacity.min(1 << 16)),
            cursor: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of stored entries, at most `capacity`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.tree[0]
    }

    pub fn priority(&self, leaf: usize) -> Result<f64> {
        self.check_leaf(leaf)?;
        Ok(self.tree[leaf + self.leaves - 1])
    }

    pub fn data(&self, leaf: usize) -> Result<&T> {
        self.check_leaf(leaf)?;
        Ok(&self.data[leaf])
    }

    /// Leaf priorities of the stored entries, in slot order.
    pub fn priorities(&self) -> &[f64] {
        &self.tree[self.leaves - 1..self.leaves - 1 + self.data.len()]
    }

    /// Internal node values, root first, in heap order.
    pub fn nodes(&self) -> &[f64] {
        &self.tree
    }

    /// Number of nodes on a root-to-leaf path.
    pub fn path_len(&self) -> usize {
        self.leaves.trailing_zeros() as usize + 1
    }

    fn check_leaf(&self, leaf: usize) -> Result<()> {
        if leaf >= self.data.len() {
            return Err(Error::InvalidLeaf {
                index: leaf,
                len: self.data.len(),
            });
        }
        Ok(())
    }

    fn check_priority(priority: f64) -> Result<()> {
        if !(priority.is_finite() && priority >= 0.0) {
            return Err(Error::InvalidPriority(priority));
        }
        Ok(())
    }

    /// Stores `item` in the next slot, overwriting the oldest once full.
    pub fn add(&mut self, priority: f64, item: T) -> Result<usize> {
        Self::check_priority(priority)?;
        let leaf = self.cursor;
        if self.data.len() < self.capacity {
            self.data.push(item);
        } else {
            self.data[leaf] = item;
        }
        self.set(leaf, priority);
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(leaf)
    }

    pub fn update(&mut self, leaf: usize, priority: f64) -> Result<()> {
        self.check_leaf(leaf)?;
        Self::check_priority(priority)?;
        self.set(leaf, priority);
        Ok(())
    }

    fn set(&mut self, leaf: usize, priority: f64) {
        let mut node = leaf + self.leaves - 1;
        self.tree[node] = priority;
        // Recompute parents from their children rather than propagating a
        // delta so that sums never accumulate drift.
        while node > 0 {
            node = (node - 1) / 2;
            self.tree[node] = self.tree[2 * node + 1] + self.tree[2 * node + 2];
        }
    }

    /// Leaf reached by prefix-sum descent, and the number of nodes visited.
    ///
    /// At each node the walk goes left when `s` is within the left subtree's
    /// mass, otherwise subtracts that mass and goes right. Empty subtrees are
    /// never entered while the other side has mass, so `s = 0` reaches the
    /// first positive leaf and `s = total` the last.
    pub fn find(&self, s: f64) -> Result<(usize, usize)> {
        let total = self.total();
        if !(0.0..=total).contains(&s) || self.data.is_empty() {
            return Err(Error::QueryOutOfRange { value: s, total });
        }
        let mut node = 0;
        let mut remaining = s;
        let mut visited = 1;
        while node < self.leaves - 1 {
            let left = 2 * node + 1;
            let right = left + 1;
            let left_mass = self.tree[left];
            let go_left = left_mass > 0.0 && (remaining <= left_mass || self.tree[right] <= 0.0);
            if go_left {
                node = left;
            } else {
                remaining -= left_mass;
                node = right;
            }
            visited += 1;
        }
        let leaf = node + 1 - self.leaves;
        // only reachable when every priority is zero
        let leaf = leaf.min(self.data.len() - 1);
        Ok((leaf, visited))
    }

    /// `(leaf index, priority, item)` for the query value `s ∈ [0, total]`.
    pub fn get(&self, s: f64) -> Result<(usize, f64, &T)> {
        let (leaf, _) = self.find(s)?;
        Ok((leaf, self.tree[leaf + self.leaves - 1], &self.data[leaf]))
    }

    /// Largest absolute deviation between any internal node and the sum of its children.
    pub fn audit(&self) -> f64 {
        (0..self.leaves - 1)
            .map(|i| (self.tree[i] - self.tree[2 * i + 1] - self.tree[2 * i + 2]).abs())
            .fold(0.0, f64::max)
    }
}
