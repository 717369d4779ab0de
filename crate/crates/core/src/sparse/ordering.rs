//! Fill-reducing orderings for symmetric patterns.

use std::collections::VecDeque;

use super::CsrMatrix;

/// Parts at or below this size are numbered directly.
const LEAF_SIZE: usize = 96;

/// Nested dissection with level-structure separators.
///
/// Each part is split by the middle level of a breadth-first search from a
/// pseudo-peripheral vertex; the two halves are numbered first and the
/// separator last. Returns `perm` with `perm[k]` the original index of the
/// `k`-th pivot.
pub fn nested_dissection(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let mut state = NdState {
        a,
        part: vec![0u32; n],
        level: vec![usize::MAX; n],
        next_part: 1,
        perm: Vec::with_capacity(n),
    };
    let all: Vec<usize> = (0..n).collect();
    state.dissect(all, 0);
    state.perm
}

struct NdState<'a> {
    a: &'a CsrMatrix,
    part: Vec<u32>,
    level: Vec<usize>,
    next_part: u32,
    perm: Vec<usize>,
}

impl NdState<'_> {
    fn neighbours(&self, v: usize) -> &[usize] {
        self.a.row(v).0
    }

    /// Breadth-first levels from `root` restricted to part `id`. Returns the
    /// vertices in visit order and the level boundaries.
    fn bfs(&mut self, root: usize, id: u32) -> (Vec<usize>, Vec<usize>) {
        let mut order = vec![root];
        let mut bounds = vec![0];
        self.level[root] = 0;
        let mut head = 0;
        let mut cur_level = 0;
        while head < order.len() {
            let v = order[head];
            if self.level[v] != cur_level {
                cur_level = self.level[v];
                bounds.push(head);
            }
            head += 1;
            for k in self.a.indptr()[v]..self.a.indptr()[v + 1] {
                let w = self.a.indices()[k];
                if self.part[w] == id && self.level[w] == usize::MAX {
                    self.level[w] = self.level[v] + 1;
                    order.push(w);
                }
            }
        }
        bounds.push(order.len());
        (order, bounds)
    }

    fn clear_levels(&mut self, verts: &[usize]) {
        for &v in verts {
            self.level[v] = usize::MAX;
        }
    }

    fn dissect(&mut self, verts: Vec<usize>, id: u32) {
        if verts.len() <= LEAF_SIZE {
            self.perm.extend_from_slice(&verts);
            return;
        }
        // pseudo-peripheral root: repeat BFS from the last vertex while the
        // eccentricity grows
        let mut root = verts[0];
        let mut ecc = 0;
        let (mut order, mut bounds);
        loop {
            (order, bounds) = self.bfs(root, id);
            self.clear_levels(&order);
            let depth = bounds.len() - 2;
            let last = order[bounds[bounds.len() - 2]..]
                .iter()
                .copied()
                .min_by_key(|&v| self.neighbours(v).len())
                .unwrap_or(root);
            if depth <= ecc || order.len() < verts.len() {
                break;
            }
            ecc = depth;
            root = last;
        }
        if order.len() < verts.len() {
            // disconnected: split off the reached component
            let reached_id = self.fresh();
            for &v in &order {
                self.part[v] = reached_id;
            }
            let rest: Vec<usize> = verts.iter().copied().filter(|&v| self.part[v] == id).collect();
            let rest_id = self.fresh();
            for &v in &rest {
                self.part[v] = rest_id;
            }
            self.dissect(order, reached_id);
            self.dissect(rest, rest_id);
            return;
        }
        let levels = bounds.len() - 1;
        if levels < 3 {
            self.perm.extend(reverse_cuthill_mckee_subset(self.a, &verts, &self.part, id));
            return;
        }
        // separator: the level holding the median vertex
        let half = order.len() / 2;
        let mut sep_level = 1;
        while sep_level + 1 < levels && bounds[sep_level + 1] <= half {
            sep_level += 1;
        }
        sep_level = sep_level.clamp(1, levels - 2);
        let low: Vec<usize> = order[..bounds[sep_level]].to_vec();
        let sep: Vec<usize> = order[bounds[sep_level]..bounds[sep_level + 1]].to_vec();
        let high: Vec<usize> = order[bounds[sep_level + 1]..].to_vec();
        let (low_id, high_id, sep_id) = (self.fresh(), self.fresh(), self.fresh());
        for &v in &low {
            self.part[v] = low_id;
        }
        for &v in &high {
            self.part[v] = high_id;
        }
        for &v in &sep {
            self.part[v] = sep_id;
        }
        self.dissect(low, low_id);
        self.dissect(high, high_id);
        self.perm.extend_from_slice(&sep);
    }

    fn fresh(&mut self) -> u32 {
        self.next_part += 1;
        self.next_part
    }
}

/// Reverse Cuthill–McKee ordering of the whole pattern.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let part = vec![0u32; n];
    let all: Vec<usize> = (0..n).collect();
    reverse_cuthill_mckee_subset(a, &all, &part, 0)
}

fn reverse_cuthill_mckee_subset(a: &CsrMatrix, verts: &[usize], part: &[u32], id: u32) -> Vec<usize> {
    let degree = |v: usize| a.row(v).0.iter().filter(|&&w| part[w] == id).count();
    let mut seen = std::collections::HashSet::with_capacity(verts.len());
    let mut out = Vec::with_capacity(verts.len());
    let mut starts: Vec<usize> = verts.to_vec();
    starts.sort_by_key(|&v| (degree(v), v));
    for &s in &starts {
        if !seen.insert(s) {
            continue;
        }
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            out.push(v);
            let mut nb: Vec<usize> = a
                .row(v)
                .0
                .iter()
                .copied()
                .filter(|&w| part[w] == id && !seen.contains(&w))
                .collect();
            nb.sort_by_key(|&w| (degree(w), w));
            for w in nb {
                if seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
    }
    out.reverse();
    out
}
