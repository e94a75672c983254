//! Orbit tables and cell-hashed neighbour search under the `d_n` metric.
//!
//! Two points with `d_n(p, q) < ε` are within `ε` at iterate 0 and at iterate `n-1`,
//! so they share neighbouring cells (cell width `≥ ε`) at both times. The bucket key
//! packs both cell vectors; candidates are then confirmed against every iterate.

use rustc_hash::FxHashMap;

use crate::system::SystemSpec;
use crate::torus::torus_distance_sq;

/// `f^i(y)` for every `y` in a finite set and `0 ≤ i < len`, stored flat.
pub(crate) struct OrbitTable {
    dim: usize,
    len: usize,
    count: usize,
    data: Vec<f64>,
}

impl OrbitTable {
    pub fn build(sys: &SystemSpec, points: &[Vec<f64>], len: usize) -> Self {
        let d = sys.dim;
        let mut data = Vec::with_capacity(points.len() * len * d);
        let mut cur = vec![0.0; d];
        let mut scratch = vec![0.0; d];
        for p in points {
            cur.copy_from_slice(p);
            for i in 0..len {
                if i > 0 {
                    sys.forward_in_place(&mut cur, &mut scratch);
                }
                data.extend_from_slice(&cur);
            }
        }
        Self {
            dim: d,
            len,
            count: points.len(),
            data,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn iterate(&self, p: usize, i: usize) -> &[f64] {
        let off = (p * self.len + i) * self.dim;
        &self.data[off..off + self.dim]
    }

    /// `d_n(p, q) < ε`, given `eps_sq = ε²`.
    #[inline]
    pub fn within(&self, p: usize, q: usize, n: usize, eps_sq: f64) -> bool {
        debug_assert!(n <= self.len);
        // last iterate first: it separates fastest under expansion
        for i in (0..n).rev() {
            if torus_distance_sq(self.iterate(p, i), self.iterate(q, i)) >= eps_sq {
                return false;
            }
        }
        true
    }
}

/// Cell geometry shared by the two index flavours.
pub(crate) struct CellGrid {
    per_axis: usize,
    dim: usize,
    two_times: bool,
    n: usize,
}

impl CellGrid {
    pub fn new(dim: usize, eps: f64, n: usize) -> Self {
        let per_axis = ((1.0 / eps).floor() as usize).clamp(1, u16::MAX as usize);
        Self {
            per_axis,
            dim,
            two_times: n > 1,
            n,
        }
    }

    fn cell(&self, v: f64) -> u16 {
        ((v * self.per_axis as f64) as usize).min(self.per_axis - 1) as u16
    }

    fn cells(&self, table: &OrbitTable, p: usize, out: &mut Vec<u16>) {
        out.clear();
        out.extend(table.iterate(p, 0).iter().map(|&v| self.cell(v)));
        if self.two_times {
            out.extend(table.iterate(p, self.n - 1).iter().map(|&v| self.cell(v)));
        }
    }

    fn pack(cells: &[u16]) -> u128 {
        cells
            .iter()
            .fold(0u128, |acc, &c| (acc << 16) | u128::from(c))
    }

    pub fn key(&self, table: &OrbitTable, p: usize, buf: &mut Vec<u16>) -> u128 {
        self.cells(table, p, buf);
        Self::pack(buf)
    }

    /// Calls `f` once for every distinct bucket key adjacent to `p`'s cells.
    pub fn for_each_neighbor_key(
        &self,
        table: &OrbitTable,
        p: usize,
        buf: &mut Vec<u16>,
        mut f: impl FnMut(u128),
    ) {
        self.cells(table, p, buf);
        let m = self.per_axis;
        let k = buf.len();
        debug_assert!(k == self.dim || k == 2 * self.dim);
        let choices: Vec<Vec<u16>> = buf
            .iter()
            .map(|&c| {
                if m >= 3 {
                    let c = c as usize;
                    vec![((c + m - 1) % m) as u16, c as u16, ((c + 1) % m) as u16]
                } else {
                    (0..m as u16).collect()
                }
            })
            .collect();
        let mut idx = vec![0usize; k];
        let mut cur = vec![0u16; k];
        loop {
            for j in 0..k {
                cur[j] = choices[j][idx[j]];
            }
            f(Self::pack(&cur));
            let mut j = k;
            loop {
                if j == 0 {
                    return;
                }
                j -= 1;
                idx[j] += 1;
                if idx[j] < choices[j].len() {
                    break;
                }
                idx[j] = 0;
            }
        }
    }
}

/// Index over all points of a table, built once.
pub(crate) struct StaticIndex {
    buckets: FxHashMap<u128, (u32, u32)>,
    ids: Vec<u32>,
}

impl StaticIndex {
    pub fn build(table: &OrbitTable, grid: &CellGrid) -> Self {
        let mut buf = Vec::new();
        let mut keyed: Vec<(u128, u32)> = (0..table.count())
            .map(|p| (grid.key(table, p, &mut buf), p as u32))
            .collect();
        keyed.sort_unstable();
        let mut buckets = FxHashMap::default();
        let mut start = 0usize;
        while start < keyed.len() {
            let key = keyed[start].0;
            let mut end = start + 1;
            while end < keyed.len() && keyed[end].0 == key {
                end += 1;
            }
            buckets.insert(key, (start as u32, (end - start) as u32));
            start = end;
        }
        let ids = keyed.into_iter().map(|(_, id)| id).collect();
        Self { buckets, ids }
    }

    /// All `q` with `d_n(p, q) < ε` (including `p`).
    pub fn neighbors(
        &self,
        table: &OrbitTable,
        grid: &CellGrid,
        p: usize,
        eps_sq: f64,
        buf: &mut Vec<u16>,
        out: &mut Vec<u32>,
    ) {
        out.clear();
        grid.for_each_neighbor_key(table, p, buf, |key| {
            if let Some(&(s, l)) = self.buckets.get(&key) {
                for &q in &self.ids[s as usize..(s + l) as usize] {
                    if table.within(p, q as usize, grid.n, eps_sq) {
                        out.push(q);
                    }
                }
            }
        });
    }
}

/// Incrementally filled index (for greedy separated sets).
pub(crate) struct DynamicIndex {
    buckets: FxHashMap<u128, Vec<u32>>,
}

impl DynamicIndex {
    pub fn new() -> Self {
        Self {
            buckets: FxHashMap::default(),
        }
    }

    pub fn insert(&mut self, table: &OrbitTable, grid: &CellGrid, p: usize, buf: &mut Vec<u16>) {
        let key = grid.key(table, p, buf);
        self.buckets.entry(key).or_default().push(p as u32);
    }

    pub fn any_within(
        &self,
        table: &OrbitTable,
        grid: &CellGrid,
        p: usize,
        eps_sq: f64,
        buf: &mut Vec<u16>,
    ) -> bool {
        let mut found = false;
        grid.for_each_neighbor_key(table, p, buf, |key| {
            if found {
                return;
            }
            if let Some(v) = self.buckets.get(&key) {
                found = v
                    .iter()
                    .any(|&q| table.within(p, q as usize, grid.n, eps_sq));
            }
        });
        found
    }
}
