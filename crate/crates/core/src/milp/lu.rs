//! Sparse LU factorization of a simplex basis with product-form updates.
//!
//! Pivots are chosen by a Markowitz search over the sparsest active
//! columns with a relative threshold. The factor is stored as the sequence
//! of row eliminations (L) and the pivot rows that remain (U); basis changes
//! are appended as eta columns until the next refactorization.

const PIVOT_THRESHOLD: f64 = 0.1;
const ABS_PIVOT_TOL: f64 = 1e-11;
const DROP_TOL: f64 = 1e-14;
const SEARCH_COLUMNS: usize = 4;

/// Basis positions and rows left without a pivot when the basis matrix is
/// (numerically) singular. Both lists have the same length.
#[derive(Debug, Clone)]
pub(crate) struct Singular {
    pub positions: Vec<usize>,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Eta {
    pivot: usize,
    pivot_value: f64,
    entries: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct LuFactor {
    m: usize,
    // Step k eliminated with pivot row `rows[k]` and column `cols[k]`.
    rows: Vec<usize>,
    cols: Vec<usize>,
    l: Vec<Vec<(usize, f64)>>,
    u_pivot: Vec<f64>,
    u: Vec<Vec<(usize, f64)>>,
    etas: Vec<Eta>,
    eta_nnz: usize,
}

/// Active columns bucketed by nonzero count, as doubly linked lists.
struct Buckets {
    head: Vec<usize>,
    next: Vec<usize>,
    prev: Vec<usize>,
    count: Vec<usize>,
}

const NIL: usize = usize::MAX;

impl Buckets {
    fn new(counts: &[usize]) -> Self {
        let m = counts.len();
        let mut b = Buckets {
            head: vec![NIL; m + 2],
            next: vec![NIL; m],
            prev: vec![NIL; m],
            count: vec![0; m],
        };
        for j in (0..m).rev() {
            b.insert(j, counts[j]);
        }
        b
    }

    fn insert(&mut self, j: usize, c: usize) {
        if c >= self.head.len() {
            self.head.resize(c + 1, NIL);
        }
        self.count[j] = c;
        self.prev[j] = NIL;
        self.next[j] = self.head[c];
        if self.head[c] != NIL {
            self.prev[self.head[c]] = j;
        }
        self.head[c] = j;
    }

    fn remove(&mut self, j: usize) {
        let (p, n) = (self.prev[j], self.next[j]);
        if p != NIL {
            self.next[p] = n;
        } else {
            self.head[self.count[j]] = n;
        }
        if n != NIL {
            self.prev[n] = p;
        }
    }

    fn shift(&mut self, j: usize, from: usize, to: usize) {
        debug_assert_eq!(self.count[j], from);
        self.remove(j);
        self.insert(j, to);
    }

    /// Up to `k` columns in increasing count order, skipping empty ones.
    fn sparsest(&self, k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        for c in 1..self.head.len() {
            let mut j = self.head[c];
            while j != NIL {
                out.push(j);
                if out.len() == k {
                    return out;
                }
                j = self.next[j];
            }
        }
        out
    }
}

impl LuFactor {
    /// Factorizes the `m x m` matrix whose column `j` is `columns[j]`.
    pub fn factorize(m: usize, columns: &[Vec<(usize, f64)>]) -> Result<Self, Singular> {
        debug_assert_eq!(columns.len(), m);
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        let mut col_pattern: Vec<Vec<usize>> = vec![Vec::new(); m];
        let mut col_count = vec![0usize; m];
        for (j, col) in columns.iter().enumerate() {
            for &(i, v) in col {
                if v.abs() > DROP_TOL {
                    rows[i].push((j, v));
                    col_pattern[j].push(i);
                    col_count[j] += 1;
                }
            }
        }

        let mut row_active = vec![true; m];
        let mut col_active = vec![true; m];
        let mut marker = vec![usize::MAX; m];
        let mut f = LuFactor {
            m,
            ..Default::default()
        };
        let mut buckets = Buckets::new(&col_count);

        for _ in 0..m {
            // Candidate columns: the few active columns with the smallest count.
            let mut search = buckets.sparsest(SEARCH_COLUMNS);
            let mut best: Option<(usize, usize, usize, f64)> = None; // (cost, row, col, value)
            let mut widened = false;
            loop {
                for &j in &search {
                    col_pattern[j].retain(|&i| row_active[i]);
                    let entries: Vec<(usize, f64)> = col_pattern[j]
                        .iter()
                        .filter_map(|&i| rows[i].iter().find(|e| e.0 == j).map(|e| (i, e.1)))
                        .collect();
                    let col_max = entries.iter().fold(0.0_f64, |a, e| a.max(e.1.abs()));
                    if col_max <= ABS_PIVOT_TOL {
                        continue;
                    }
                    let cj = entries.len().saturating_sub(1);
                    for &(i, v) in &entries {
                        if v.abs() < PIVOT_THRESHOLD * col_max {
                            continue;
                        }
                        let cost = (rows[i].len() - 1) * cj;
                        let better = match best {
                            None => true,
                            Some((bc, bi, _, bv)) => {
                                cost < bc
                                    || (cost == bc
                                        && (v.abs() > bv.abs() || (v.abs() == bv.abs() && i < bi)))
                            }
                        };
                        if better {
                            best = Some((cost, i, j, v));
                        }
                    }
                    if matches!(best, Some((0, ..))) {
                        break;
                    }
                }
                if best.is_some() || widened {
                    break;
                }
                // Every sparse candidate was numerically empty; look at all columns.
                search = (0..m).filter(|&j| col_active[j]).collect();
                widened = true;
            }

            let Some((_, pr, pc, pv)) = best else {
                break;
            };

            let pivot_row = std::mem::take(&mut rows[pr]);
            row_active[pr] = false;
            col_active[pc] = false;
            buckets.remove(pc);
            for &(j, _) in &pivot_row {
                if j != pc {
                    buckets.shift(j, col_count[j], col_count[j].saturating_sub(1));
                }
                col_count[j] = col_count[j].saturating_sub(1);
            }

            let mut lcol = Vec::new();
            let others: Vec<usize> = col_pattern[pc]
                .iter()
                .copied()
                .filter(|&i| row_active[i])
                .collect();
            for i in others {
                let Some(at) = rows[i].iter().position(|e| e.0 == pc) else {
                    continue;
                };
                let mult = rows[i][at].1 / pv;
                rows[i].swap_remove(at);
                lcol.push((i, mult));
                for (k, e) in rows[i].iter().enumerate() {
                    marker[e.0] = k;
                }
                for &(j, v) in &pivot_row {
                    if j == pc {
                        continue;
                    }
                    let k = marker[j];
                    if k != usize::MAX {
                        rows[i][k].1 -= mult * v;
                    } else {
                        rows[i].push((j, -mult * v));
                        marker[j] = rows[i].len() - 1;
                        col_pattern[j].push(i);
                        buckets.shift(j, col_count[j], col_count[j] + 1);
                        col_count[j] += 1;
                    }
                }
                for e in &rows[i] {
                    marker[e.0] = usize::MAX;
                }
                rows[i].retain(|e| {
                    let keep = e.1.abs() > DROP_TOL;
                    if !keep {
                        buckets.shift(e.0, col_count[e.0], col_count[e.0] - 1);
                        col_count[e.0] -= 1;
                    }
                    keep
                });
            }

            f.rows.push(pr);
            f.cols.push(pc);
            f.l.push(lcol);
            f.u_pivot.push(pv);
            f.u.push(pivot_row.into_iter().filter(|e| e.0 != pc).collect());
        }

        if f.rows.len() < m {
            return Err(Singular {
                positions: (0..m).filter(|&j| col_active[j]).collect(),
                rows: (0..m).filter(|&i| row_active[i]).collect(),
            });
        }
        Ok(f)
    }

    pub fn eta_count(&self) -> usize {
        self.etas.len()
    }

    pub fn eta_nnz(&self) -> usize {
        self.eta_nnz
    }

    /// Solves `B x = b` in place; on entry `b` is indexed by row, on exit by
    /// basis position.
    pub fn ftran(&self, b: &mut [f64]) {
        for (k, lcol) in self.l.iter().enumerate() {
            let br = b[self.rows[k]];
            if br != 0.0 {
                for &(i, mult) in lcol {
                    b[i] -= mult * br;
                }
            }
        }
        let mut x = vec![0.0; self.m];
        for k in (0..self.m).rev() {
            let mut s = b[self.rows[k]];
            for &(j, v) in &self.u[k] {
                s -= v * x[j];
            }
            x[self.cols[k]] = s / self.u_pivot[k];
        }
        for eta in &self.etas {
            let xp = x[eta.pivot] / eta.pivot_value;
            x[eta.pivot] = xp;
            if xp != 0.0 {
                for &(i, v) in &eta.entries {
                    x[i] -= v * xp;
                }
            }
        }
        b.copy_from_slice(&x);
    }

    /// Solves `B^T y = c` in place; on entry `c` is indexed by basis
    /// position, on exit by row.
    pub fn btran(&self, c: &mut [f64]) {
        for eta in self.etas.iter().rev() {
            let mut s = c[eta.pivot];
            for &(i, v) in &eta.entries {
                s -= v * c[i];
            }
            c[eta.pivot] = s / eta.pivot_value;
        }
        let mut w = vec![0.0; self.m];
        for k in 0..self.m {
            let wk = c[self.cols[k]] / self.u_pivot[k];
            w[self.rows[k]] = wk;
            if wk != 0.0 {
                for &(j, v) in &self.u[k] {
                    c[j] -= wk * v;
                }
            }
        }
        for k in (0..self.m).rev() {
            let r = self.rows[k];
            let mut s = w[r];
            for &(i, mult) in &self.l[k] {
                s -= mult * w[i];
            }
            w[r] = s;
        }
        c.copy_from_slice(&w);
    }

    /// Records the replacement of basis position `pivot` by a column whose
    /// FTRAN image is `alpha`.
    pub fn update(&mut self, pivot: usize, alpha: &[f64]) {
        let entries: Vec<(usize, f64)> = alpha
            .iter()
            .enumerate()
            .filter(|&(i, v)| i != pivot && v.abs() > DROP_TOL)
            .map(|(i, &v)| (i, v))
            .collect();
        self.eta_nnz += entries.len() + 1;
        self.etas.push(Eta {
            pivot,
            pivot_value: alpha[pivot],
            entries,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_to_cols(a: &[Vec<f64>]) -> Vec<Vec<(usize, f64)>> {
        let m = a.len();
        (0..m)
            .map(|j| {
                (0..m)
                    .filter(|&i| a[i][j] != 0.0)
                    .map(|i| (i, a[i][j]))
                    .collect()
            })
            .collect()
    }

    fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum())
            .collect()
    }

    fn mat_t_vec(a: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let m = a.len();
        (0..m)
            .map(|j| (0..m).map(|i| a[i][j] * y[i]).sum())
            .collect()
    }

    #[test]
    fn solves_small_systems_both_ways() {
        let a = vec![
            vec![2.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 3.0, -1.0],
            vec![1.0, 4.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 5.0],
        ];
        let lu = LuFactor::factorize(4, &dense_to_cols(&a)).unwrap();
        let x = vec![1.0, -2.0, 0.5, 3.0];
        let mut b = matvec(&a, &x);
        lu.ftran(&mut b);
        for (p, q) in b.iter().zip(&x) {
            assert!((p - q).abs() < 1e-12);
        }
        let mut c = mat_t_vec(&a, &x);
        lu.btran(&mut c);
        for (p, q) in c.iter().zip(&x) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn eta_updates_track_column_replacement() {
        let mut a = vec![
            vec![1.0, 2.0, 0.0],
            vec![0.0, 1.0, 1.0],
            vec![3.0, 0.0, 1.0],
        ];
        let mut lu = LuFactor::factorize(3, &dense_to_cols(&a)).unwrap();
        let newcol = [1.0, 2.0, -1.0];
        let mut alpha = newcol.to_vec();
        lu.ftran(&mut alpha);
        lu.update(1, &alpha);
        for i in 0..3 {
            a[i][1] = newcol[i];
        }
        let x = vec![0.3, 1.7, -2.0];
        let mut b = matvec(&a, &x);
        lu.ftran(&mut b);
        for (p, q) in b.iter().zip(&x) {
            assert!((p - q).abs() < 1e-12, "{b:?}");
        }
        let mut c = mat_t_vec(&a, &x);
        lu.btran(&mut c);
        for (p, q) in c.iter().zip(&x) {
            assert!((p - q).abs() < 1e-12, "{c:?}");
        }
    }

    #[test]
    fn singular_reports_unpivoted_positions() {
        let a = vec![
            vec![1.0, 2.0, 0.0],
            vec![2.0, 4.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let err = LuFactor::factorize(3, &dense_to_cols(&a)).unwrap_err();
        assert_eq!(err.positions.len(), 1);
        assert_eq!(err.rows.len(), 1);
    }
}
