/// Complete binary tree of partial sums over non-negative weights.
///
/// Internal nodes are recomputed from their children on every update, so the
/// root never accumulates drift.
#[derive(Debug, Clone)]
pub(crate) struct SumTree {
    len: usize,
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(weights: &[f64]) -> Self {
        let len = weights.len();
        let leaves = len.next_power_of_two().max(1);
        let mut nodes = vec![0.0; 2 * leaves];
        nodes[leaves..leaves + len].copy_from_slice(weights);
        for i in (1..leaves).rev() {
            nodes[i] = nodes[2 * i] + nodes[2 * i + 1];
        }
        Self { len, leaves, nodes }
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    pub fn set(&mut self, i: usize, w: f64) {
        let mut node = self.leaves + i;
        self.nodes[node] = w;
        while node > 1 {
            node /= 2;
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
        }
    }

    /// Leaf whose cumulative interval contains `target ∈ [0, total)`.
    pub fn find(&self, mut target: f64) -> usize {
        let mut node = 1;
        while node < self.leaves {
            let left = self.nodes[2 * node];
            if target < left {
                node *= 2;
            } else {
                target -= left;
                node = 2 * node + 1;
            }
        }
        let mut i = node - self.leaves;
        // Rounding can walk off the last positive leaf.
        if i >= self.len || self.get(i) <= 0.0 {
            i = (0..self.len).rev().find(|&j| self.get(j) > 0.0).unwrap_or(0);
        }
        i
    }
}
