//! Exact linear algebra over F_q: reduced row echelon form, nullspaces,
//! linear solves, and subspace arithmetic.
//!
//! The operator matrices produced upstream split into many small
//! column-connected components ("fans"): each digit prefix couples only the
//! sibling representatives sharing it plus one parent. `rref_sparse` finds
//! the components with a union-find, eliminates each independently (densely
//! when small), and merges. Since the reduced row echelon form of a matrix
//! is unique, the result is identical to sequential dense elimination no
//! matter how the work is split, which is also what makes the parallel path
//! safe.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::gf::{FieldContext, FqElem};
use crate::par;

/// Sorted sparse vector: (column, nonzero coefficient) pairs.
pub type SparseVec = Vec<(u32, FqElem)>;

/// Options for elimination routines.
#[derive(Debug, Clone, Copy)]
pub struct ElimOptions {
    pub parallel: bool,
    /// Components with at most this many columns are eliminated densely.
    pub dense_threshold: usize,
}

impl Default for ElimOptions {
    fn default() -> Self {
        ElimOptions {
            parallel: par::parallel_available(),
            dense_threshold: 2000,
        }
    }
}

/// Row-major dense matrix over F_q.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<FqElem>,
}

impl DenseMat {
    pub fn zeros(rows: usize, cols: usize) -> DenseMat {
        DenseMat {
            rows,
            cols,
            data: vec![FqElem::ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> DenseMat {
        let mut m = DenseMat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = FqElem::ONE;
        }
        m
    }

    pub fn at(&self, i: usize, j: usize) -> FqElem {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: FqElem) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[FqElem] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn from_sparse_rows(rows: &[SparseVec], cols: usize) -> DenseMat {
        let mut m = DenseMat::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            for &(j, v) in r {
                m.set(i, j as usize, v);
            }
        }
        m
    }

    pub fn to_sparse_rows(&self) -> Vec<SparseVec> {
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| !v.is_zero())
                    .map(|(j, &v)| (j as u32, v))
                    .collect()
            })
            .collect()
    }

    pub fn mat_vec(&self, field: &FieldContext, x: &[FqElem]) -> Vec<FqElem> {
        (0..self.rows)
            .map(|i| {
                let mut acc = FqElem::ZERO;
                for (j, &v) in self.row(i).iter().enumerate() {
                    if !v.is_zero() && !x[j].is_zero() {
                        acc = field.add(acc, field.mul(v, x[j]));
                    }
                }
                acc
            })
            .collect()
    }
}

/// In-place reduced row echelon form with first-nonzero pivoting.
/// Returns the pivot column of each surviving row; zero rows are dropped.
pub fn rref_dense(field: &FieldContext, m: &mut DenseMat) -> Vec<usize> {
    let (rows, cols) = (m.rows, m.cols);
    let mut pivots = Vec::new();
    let mut rank = 0usize;
    for col in 0..cols {
        let mut pivot_row = None;
        for r in rank..rows {
            if !m.at(r, col).is_zero() {
                pivot_row = Some(r);
                break;
            }
        }
        let Some(pr) = pivot_row else { continue };
        m.data.swap_ranges(rank, pr, cols);
        let inv = field
            .inv(m.at(rank, col))
            .expect("pivot entry is nonzero");
        for j in col..cols {
            let v = m.at(rank, j);
            m.set(rank, j, field.mul(v, inv));
        }
        for r in 0..rows {
            if r == rank {
                continue;
            }
            let factor = m.at(r, col);
            if factor.is_zero() {
                continue;
            }
            for j in col..cols {
                let v = field.sub(m.at(r, j), field.mul(factor, m.at(rank, j)));
                m.set(r, j, v);
            }
        }
        pivots.push(col);
        rank += 1;
        if rank == rows {
            break;
        }
    }
    m.rows = rank;
    m.data.truncate(rank * cols);
    pivots
}

trait SwapRanges {
    fn swap_ranges(&mut self, a: usize, b: usize, len: usize);
}

impl SwapRanges for Vec<FqElem> {
    fn swap_ranges(&mut self, a: usize, b: usize, len: usize) {
        if a == b {
            return;
        }
        for k in 0..len {
            self.swap(a * len + k, b * len + k);
        }
    }
}

fn axpy_sparse(field: &FieldContext, x: &SparseVec, c: FqElem, y: &SparseVec) -> SparseVec {
    // x - c * y, merged by column.
    let mut out = Vec::with_capacity(x.len() + y.len());
    let (mut i, mut j) = (0usize, 0usize);
    while i < x.len() || j < y.len() {
        let xc = x.get(i).map(|&(c, _)| c).unwrap_or(u32::MAX);
        let yc = y.get(j).map(|&(c, _)| c).unwrap_or(u32::MAX);
        match xc.cmp(&yc) {
            std::cmp::Ordering::Less => {
                out.push(x[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push((yc, field.neg(field.mul(c, y[j].1))));
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                let v = field.sub(x[i].1, field.mul(c, y[j].1));
                if !v.is_zero() {
                    out.push((xc, v));
                }
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn scale_sparse(field: &FieldContext, x: &SparseVec, c: FqElem) -> SparseVec {
    x.iter().map(|&(col, v)| (col, field.mul(v, c))).collect()
}

/// RREF of a set of sparse rows by forward elimination plus back substitution.
fn rref_rows_sequential(
    field: &FieldContext,
    rows: Vec<SparseVec>,
) -> (Vec<SparseVec>, Vec<u32>) {
    let mut out: Vec<SparseVec> = Vec::new();
    let mut pivot_of: HashMap<u32, usize> = HashMap::new();
    for mut r in rows {
        loop {
            let Some(&(lead, lv)) = r.first() else { break };
            match pivot_of.get(&lead) {
                Some(&idx) => {
                    r = axpy_sparse(field, &r, lv, &out[idx]);
                }
                None => {
                    let inv = field.inv(lv).expect("leading entry nonzero");
                    r = scale_sparse(field, &r, inv);
                    pivot_of.insert(lead, out.len());
                    out.push(r);
                    break;
                }
            }
        }
    }
    // Sort by pivot, then clear pivot columns above.
    let mut order: Vec<usize> = (0..out.len()).collect();
    order.sort_unstable_by_key(|&i| out[i][0].0);
    let mut sorted: Vec<SparseVec> = order.iter().map(|&i| std::mem::take(&mut out[i])).collect();
    let pivcols: Vec<u32> = sorted.iter().map(|r| r[0].0).collect();
    let pivot_idx: HashMap<u32, usize> = pivcols
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i))
        .collect();
    for i in (0..sorted.len()).rev() {
        let mut r = std::mem::take(&mut sorted[i]);
        let mut k = 1;
        while k < r.len() {
            let (col, v) = r[k];
            if let Some(&j) = pivot_idx.get(&col) {
                if j > i {
                    r = axpy_sparse(field, &r, v, &sorted[j]);
                    // restart scan past the pivot entry
                    k = 1;
                    continue;
                }
            }
            k += 1;
        }
        sorted[i] = r;
    }
    (sorted, pivcols)
}

/// Connected components of the column-intersection graph of `rows`.
/// Returns, per component, the list of row indices.
fn column_components(rows: &[SparseVec], ncols: usize) -> Vec<Vec<usize>> {
    let mut parent: Vec<u32> = (0..ncols as u32).collect();
    fn find(parent: &mut [u32], x: u32) -> u32 {
        let mut root = x;
        while parent[root as usize] != root {
            root = parent[root as usize];
        }
        let mut cur = x;
        while parent[cur as usize] != root {
            let next = parent[cur as usize];
            parent[cur as usize] = root;
            cur = next;
        }
        root
    }
    for r in rows {
        if let Some(&(first, _)) = r.first() {
            let root = find(&mut parent, first);
            for &(c, _) in &r[1..] {
                let rc = find(&mut parent, c);
                parent[rc as usize] = root;
            }
        }
    }
    let mut groups: HashMap<u32, Vec<usize>> = HashMap::new();
    for (i, r) in rows.iter().enumerate() {
        if let Some(&(first, _)) = r.first() {
            let root = find(&mut parent, first);
            groups.entry(root).or_default().push(i);
        }
    }
    let mut comps: Vec<Vec<usize>> = groups.into_values().collect();
    comps.sort_unstable_by_key(|g| g[0]);
    comps
}

/// RREF of sparse rows: split into column-connected components, eliminate
/// each (densely below the threshold), merge sorted by pivot. The output is
/// the unique RREF of the row space.
pub fn rref_sparse(
    field: &FieldContext,
    rows: Vec<SparseVec>,
    ncols: usize,
    opts: ElimOptions,
) -> (Vec<SparseVec>, Vec<u32>) {
    let comps = column_components(&rows, ncols);
    let rows_ref = &rows;
    let mut per_comp: Vec<(Vec<SparseVec>, Vec<u32>)> =
        par::map_slice(&comps, opts.parallel, |group| {
            let local_rows: Vec<SparseVec> = group.iter().map(|&i| rows_ref[i].clone()).collect();
            // Local column set, preserving global order.
            let mut cols: Vec<u32> = local_rows
                .iter()
                .flat_map(|r| r.iter().map(|&(c, _)| c))
                .collect();
            cols.sort_unstable();
            cols.dedup();
            let ncols_local = cols.len();
            let use_dense = ncols_local <= opts.dense_threshold
                && local_rows.len().saturating_mul(ncols_local) <= 8_000_000;
            if use_dense {
                let col_of: HashMap<u32, usize> =
                    cols.iter().enumerate().map(|(i, &c)| (c, i)).collect();
                let localized: Vec<SparseVec> = local_rows
                    .iter()
                    .map(|r| {
                        r.iter()
                            .map(|&(c, v)| (col_of[&c] as u32, v))
                            .collect()
                    })
                    .collect();
                let mut dm = DenseMat::from_sparse_rows(&localized, ncols_local);
                let piv = rref_dense(field, &mut dm);
                let back = dm
                    .to_sparse_rows()
                    .into_iter()
                    .map(|r| {
                        r.into_iter()
                            .map(|(c, v)| (cols[c as usize], v))
                            .collect()
                    })
                    .collect();
                let pivcols = piv.iter().map(|&c| cols[c]).collect();
                (back, pivcols)
            } else {
                rref_rows_sequential(field, local_rows)
            }
        });
    let mut all_rows = Vec::new();
    let mut all_pivs = Vec::new();
    per_comp.sort_unstable_by_key(|(_, p)| p.first().copied().unwrap_or(u32::MAX));
    for (r, p) in per_comp {
        all_rows.extend(r);
        all_pivs.extend(p);
    }
    // Components have disjoint column supports, so a final sort by pivot
    // yields the global RREF.
    let mut order: Vec<usize> = (0..all_rows.len()).collect();
    order.sort_unstable_by_key(|&i| all_pivs[i]);
    let rows_sorted: Vec<SparseVec> = order.iter().map(|&i| all_rows[i].clone()).collect();
    let pivs_sorted: Vec<u32> = order.iter().map(|&i| all_pivs[i]).collect();
    (rows_sorted, pivs_sorted)
}

/// Nullspace basis of the matrix with the given sparse rows, from its RREF:
/// one vector per free column, in free-column order.
pub fn nullspace_sparse(
    field: &FieldContext,
    rows: Vec<SparseVec>,
    ncols: usize,
    opts: ElimOptions,
) -> Vec<SparseVec> {
    let (rref, pivots) = rref_sparse(field, rows, ncols, opts);
    let pivot_set: HashMap<u32, usize> = pivots.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut basis = Vec::with_capacity(ncols - pivots.len());
    for fc in 0..ncols as u32 {
        if pivot_set.contains_key(&fc) {
            continue;
        }
        let mut v: SparseVec = vec![(fc, FqElem::ONE)];
        for (i, r) in rref.iter().enumerate() {
            if let Ok(pos) = r.binary_search_by_key(&fc, |&(c, _)| c) {
                v.push((pivots[i], field.neg(r[pos].1)));
            }
        }
        v.sort_unstable_by_key(|&(c, _)| c);
        basis.push(v);
    }
    basis
}

/// One solution of `M x = b` if the system is consistent, with free
/// coordinates set to zero.
pub fn solve_sparse(
    field: &FieldContext,
    rows: &[SparseVec],
    ncols: usize,
    b: &SparseVec,
    opts: ElimOptions,
) -> Option<SparseVec> {
    // Augment with b as column `ncols`.
    let bmap: HashMap<u32, FqElem> = b.iter().copied().collect();
    let aug: Vec<SparseVec> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut v = r.clone();
            if let Some(&c) = bmap.get(&(i as u32)) {
                v.push((ncols as u32, c));
            }
            v
        })
        .collect();
    let (rref, pivots) = rref_sparse(field, aug, ncols + 1, opts);
    if pivots.contains(&(ncols as u32)) {
        return None;
    }
    let mut x: SparseVec = Vec::new();
    for (i, r) in rref.iter().enumerate() {
        if let Some(&(c, v)) = r.last() {
            if c == ncols as u32 {
                x.push((pivots[i], v));
            }
        }
    }
    x.sort_unstable_by_key(|&(c, _)| c);
    Some(x)
}

/// A subspace of F_q^ambient, stored as the unique RREF basis of its row
/// space. Membership, sums, and intersections are all exact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubspaceBasis {
    pub ambient: usize,
    pub rows: Vec<SparseVec>,
    pub pivots: Vec<u32>,
}

impl SubspaceBasis {
    pub fn empty(ambient: usize) -> SubspaceBasis {
        SubspaceBasis {
            ambient,
            rows: vec![],
            pivots: vec![],
        }
    }

    pub fn from_vectors(
        field: &FieldContext,
        ambient: usize,
        vectors: Vec<SparseVec>,
        opts: ElimOptions,
    ) -> SubspaceBasis {
        let (rows, pivots) = rref_sparse(field, vectors, ambient, opts);
        SubspaceBasis {
            ambient,
            rows,
            pivots,
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Residual of v after eliminating every pivot coordinate. Zero iff v is
    /// a member. A single pass suffices because RREF rows vanish at the
    /// other rows' pivots.
    pub fn reduce(&self, field: &FieldContext, v: &SparseVec) -> SparseVec {
        let vmap: HashMap<u32, FqElem> = v.iter().copied().collect();
        let mut out = v.clone();
        for (i, &p) in self.pivots.iter().enumerate() {
            if let Some(&c) = vmap.get(&p) {
                out = axpy_sparse(field, &out, c, &self.rows[i]);
            }
        }
        out
    }

    pub fn member(&self, field: &FieldContext, v: &SparseVec) -> bool {
        self.reduce(field, v).is_empty()
    }

    pub fn sum(
        &self,
        field: &FieldContext,
        other: &SubspaceBasis,
        opts: ElimOptions,
    ) -> Result<SubspaceBasis> {
        if self.ambient != other.ambient {
            return Err(Error::AmbientMismatch(self.ambient, other.ambient));
        }
        let mut rows = self.rows.clone();
        rows.extend(other.rows.clone());
        Ok(SubspaceBasis::from_vectors(
            field,
            self.ambient,
            rows,
            opts,
        ))
    }

    /// Zassenhaus: reduce rows (a | a) and (b | 0); right halves of rows
    /// whose left half vanished span the intersection.
    pub fn intersect(
        &self,
        field: &FieldContext,
        other: &SubspaceBasis,
        opts: ElimOptions,
    ) -> Result<SubspaceBasis> {
        if self.ambient != other.ambient {
            return Err(Error::AmbientMismatch(self.ambient, other.ambient));
        }
        let n = self.ambient as u32;
        let mut stacked: Vec<SparseVec> = Vec::with_capacity(self.dim() + other.dim());
        for r in &self.rows {
            let mut v = r.clone();
            v.extend(r.iter().map(|&(c, x)| (c + n, x)));
            stacked.push(v);
        }
        for r in &other.rows {
            stacked.push(r.clone());
        }
        let (rref, pivots) = rref_sparse(field, stacked, 2 * self.ambient, opts);
        let mut inter_rows = Vec::new();
        for (i, &p) in pivots.iter().enumerate() {
            if p >= n {
                let v: SparseVec = rref[i].iter().map(|&(c, x)| (c - n, x)).collect();
                inter_rows.push(v);
            }
        }
        let result = SubspaceBasis::from_vectors(field, self.ambient, inter_rows, opts);
        debug_assert_eq!(
            result.dim() + self.sum(field, other, opts)?.dim(),
            self.dim() + other.dim(),
            "dimension formula violated"
        );
        Ok(result)
    }
}

/// Write sparse rows as `row,col,value` CSV (integer element codes).
pub fn write_sparse_csv<W: Write>(mut w: W, rows: &[SparseVec]) -> Result<()> {
    writeln!(w, "row,col,value")?;
    for (i, r) in rows.iter().enumerate() {
        for &(c, v) in r {
            writeln!(w, "{i},{c},{}", v.0)?;
        }
    }
    Ok(())
}
