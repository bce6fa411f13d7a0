//! Sparse LU factorization of the simplex basis with product-form updates.
//!
//! Left-looking Gilbert-Peierls factorization with partial pivoting. Basis
//! changes between refactorizations are absorbed into an eta file.

/// Sparse column: (row index, value) pairs.
pub type SpCol = Vec<(usize, f64)>;

#[derive(Debug, Clone)]
struct EtaCol {
    /// Basis position being replaced.
    pos: usize,
    diag: f64,
    /// Off-diagonal entries of the spiked column, in basis-position space.
    off: Vec<(usize, f64)>,
}

#[derive(Debug)]
pub struct Factorization {
    m: usize,
    /// L columns in pivot order; row indices are original, unit diagonal at
    /// `pivot_row[k]` kept implicit.
    l_cols: Vec<SpCol>,
    /// U columns in pivot order; row indices are pivot positions `< k`.
    u_cols: Vec<SpCol>,
    u_diag: Vec<f64>,
    /// pivot_row[k] = original row chosen as the k-th pivot.
    pivot_row: Vec<usize>,
    /// row_pos[i] = pivot position of original row i.
    row_pos: Vec<usize>,
    etas: Vec<EtaCol>,
    // scratch
    work: Vec<f64>,
    mark: Vec<u32>,
    stamp: u32,
    reach_stack: Vec<(usize, usize)>,
    topo: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LuError {
    /// Basis positions that could not be pivoted and the rows left without
    /// a pivot; the two lists have equal length.
    Singular { cols: Vec<usize>, rows: Vec<usize> },
}

impl Factorization {
    /// Factorize the matrix whose columns are given in basis order.
    pub fn new(m: usize, cols: &[SpCol]) -> Result<Self, LuError> {
        assert_eq!(cols.len(), m);
        let mut f = Factorization {
            m,
            l_cols: Vec::with_capacity(m),
            u_cols: Vec::with_capacity(m),
            u_diag: Vec::with_capacity(m),
            pivot_row: Vec::with_capacity(m),
            row_pos: vec![usize::MAX; m],
            etas: Vec::new(),
            work: vec![0.0; m],
            mark: vec![0; m],
            stamp: 0,
            reach_stack: Vec::new(),
            topo: Vec::new(),
        };
        let mut failed = Vec::new();
        for (k, col) in cols.iter().enumerate() {
            if !f.factor_step(k, col) {
                failed.push(k);
                // keep positions aligned with a harmless placeholder
                f.l_cols.push(Vec::new());
                f.u_cols.push(Vec::new());
                f.u_diag.push(1.0);
                f.pivot_row.push(usize::MAX);
            }
        }
        if failed.is_empty() {
            Ok(f)
        } else {
            let rows = (0..m).filter(|&i| f.row_pos[i] == usize::MAX).collect();
            Err(LuError::Singular { cols: failed, rows })
        }
    }

    /// One Gilbert-Peierls step; returns false if no usable pivot exists.
    fn factor_step(&mut self, k: usize, col: &SpCol) -> bool {
        let order = self.sparse_lsolve(col);
        // pick pivot: largest magnitude among not-yet-pivoted rows
        let mut piv_row = usize::MAX;
        let mut piv_abs = 0.0f64;
        let mut col_max = 0.0f64;
        for &i in &order {
            let a = self.work[i].abs();
            col_max = col_max.max(a);
            if self.row_pos[i] == usize::MAX && a > piv_abs {
                piv_abs = a;
                piv_row = i;
            }
        }
        if piv_row == usize::MAX || piv_abs < 1e-11 * col_max.max(1.0) {
            for &i in &order {
                self.work[i] = 0.0;
            }
            return false;
        }
        let piv = self.work[piv_row];
        let mut ucol = Vec::new();
        let mut lcol = Vec::new();
        for &i in &order {
            let v = self.work[i];
            self.work[i] = 0.0;
            if v == 0.0 {
                continue;
            }
            let pos = self.row_pos[i];
            if pos != usize::MAX {
                ucol.push((pos, v));
            } else if i != piv_row {
                lcol.push((i, v / piv));
            }
        }
        self.row_pos[piv_row] = k;
        self.pivot_row.push(piv_row);
        self.u_diag.push(piv);
        self.u_cols.push(ucol);
        self.l_cols.push(lcol);
        true
    }

    /// Solve L x = a symbolically+numerically against the partial L built so
    /// far; leaves values in `work`, returns reached rows in topological order.
    fn sparse_lsolve(&mut self, a: &SpCol) -> Vec<usize> {
        if self.stamp == u32::MAX {
            self.mark.iter_mut().for_each(|m| *m = 0);
            self.stamp = 0;
        }
        self.stamp += 1;
        let stamp = self.stamp;
        self.topo.clear();
        for &(i, _) in a {
            if self.mark[i] != stamp {
                self.dfs_reach(i, stamp);
            }
        }
        for &(i, v) in a {
            self.work[i] += v;
        }
        // topo holds rows in reverse-post order (dependencies first)
        let order: Vec<usize> = self.topo.iter().rev().copied().collect();
        for &i in &order {
            let k = self.row_pos[i];
            if k == usize::MAX {
                continue;
            }
            let xi = self.work[i];
            if xi != 0.0 {
                for idx in 0..self.l_cols[k].len() {
                    let (r, v) = self.l_cols[k][idx];
                    self.work[r] -= v * xi;
                }
            }
        }
        order
    }

    fn dfs_reach(&mut self, start: usize, stamp: u32) {
        self.reach_stack.clear();
        self.reach_stack.push((start, 0));
        self.mark[start] = stamp;
        while !self.reach_stack.is_empty() {
            let top = self.reach_stack.len() - 1;
            let (i, next) = self.reach_stack[top];
            let k = self.row_pos[i];
            let children = if k == usize::MAX { 0 } else { self.l_cols[k].len() };
            if next < children {
                self.reach_stack[top].1 += 1;
                let (r, _) = self.l_cols[k][next];
                if self.mark[r] != stamp {
                    self.mark[r] = stamp;
                    self.reach_stack.push((r, 0));
                }
            } else {
                self.reach_stack.pop();
                self.topo.push(i);
            }
        }
    }

    /// Record a basis change: position `pos` is replaced by a column whose
    /// FTRAN image is `alpha` (dense, basis-position space).
    pub fn push_eta(&mut self, pos: usize, alpha: &[f64]) {
        let diag = alpha[pos];
        debug_assert!(diag.abs() > 1e-12);
        let off: Vec<(usize, f64)> = alpha
            .iter()
            .enumerate()
            .filter(|&(i, &v)| i != pos && v != 0.0)
            .map(|(i, &v)| (i, v))
            .collect();
        self.etas.push(EtaCol { pos, diag, off });
    }

    /// FTRAN: solve B x = a. Input is a sparse column in original row space;
    /// output is dense in basis-position space.
    pub fn ftran(&mut self, a: &SpCol, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.m);
        // L solve into work (original row space)
        let order = self.sparse_lsolve(a);
        for v in out.iter_mut() {
            *v = 0.0;
        }
        for &i in &order {
            let k = self.row_pos[i];
            let v = self.work[i];
            self.work[i] = 0.0;
            if k != usize::MAX {
                out[k] = v;
            }
            // rows without pivot carry no component (structurally impossible
            // for a nonsingular basis)
        }
        // U back-substitution in pivot space
        for k in (0..self.m).rev() {
            let xk = out[k];
            if xk == 0.0 {
                continue;
            }
            let xk = xk / self.u_diag[k];
            out[k] = xk;
            for &(j, v) in &self.u_cols[k] {
                out[j] -= v * xk;
            }
        }
        // eta file
        for eta in &self.etas {
            let xr = out[eta.pos] / eta.diag;
            if xr != 0.0 {
                for &(i, v) in &eta.off {
                    out[i] -= v * xr;
                }
            }
            out[eta.pos] = xr;
        }
    }

    /// BTRAN: solve y' B = c'. Input `c` is dense in basis-position space and
    /// is consumed; output is dense in original row space.
    pub fn btran(&mut self, c: &mut [f64], out: &mut [f64]) {
        debug_assert_eq!(c.len(), self.m);
        debug_assert_eq!(out.len(), self.m);
        for eta in self.etas.iter().rev() {
            let mut acc = c[eta.pos];
            for &(i, v) in &eta.off {
                acc -= v * c[i];
            }
            c[eta.pos] = acc / eta.diag;
        }
        // U' z = c : forward in pivot order
        for k in 0..self.m {
            let mut acc = c[k];
            for &(j, v) in &self.u_cols[k] {
                acc -= v * c[j];
            }
            c[k] = acc / self.u_diag[k];
        }
        // L' y = z : backward, result lands in original row space
        for v in out.iter_mut() {
            *v = 0.0;
        }
        for k in (0..self.m).rev() {
            let mut acc = c[k];
            for &(i, v) in &self.l_cols[k] {
                acc -= v * out[i];
            }
            out[self.pivot_row[k]] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_to_cols(a: &[Vec<f64>]) -> Vec<SpCol> {
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

    fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|row| row.iter().zip(x).map(|(aij, xj)| aij * xj).sum())
            .collect()
    }

    #[test]
    fn ftran_btran_roundtrip() {
        let a = vec![
            vec![2.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 3.0, 0.0],
            vec![4.0, 0.0, 1.0, 1.0],
            vec![0.0, 5.0, 0.0, -2.0],
        ];
        let cols = dense_to_cols(&a);
        let mut f = Factorization::new(4, &cols).unwrap();

        let rhs = vec![(0, 1.0), (2, -2.0), (3, 0.5)];
        let mut x = vec![0.0; 4];
        f.ftran(&rhs, &mut x);
        // columns of a are indexed by basis position, so B x uses x in that order
        let bx = mat_vec(&a, &x);
        let mut dense_rhs = vec![0.0; 4];
        for &(i, v) in &rhs {
            dense_rhs[i] = v;
        }
        for i in 0..4 {
            assert!((bx[i] - dense_rhs[i]).abs() < 1e-10, "ftran mismatch at {i}");
        }

        let c = vec![1.0, -1.0, 2.0, 0.0];
        let mut cw = c.clone();
        let mut y = vec![0.0; 4];
        f.btran(&mut cw, &mut y);
        // y' B = c'  =>  for each basis position k: sum_i y_i * a[i][k] = c[k]
        for k in 0..4 {
            let dot: f64 = (0..4).map(|i| y[i] * a[i][k]).sum();
            assert!((dot - c[k]).abs() < 1e-10, "btran mismatch at {k}");
        }
    }

    #[test]
    fn eta_update_matches_refactorization() {
        let a = vec![
            vec![1.0, 2.0, 0.0],
            vec![0.0, 1.0, 1.0],
            vec![1.0, 0.0, 2.0],
        ];
        let cols = dense_to_cols(&a);
        let mut f = Factorization::new(3, &cols).unwrap();

        // replace basis position 1 by column [1, 1, 0]
        let newcol: SpCol = vec![(0, 1.0), (1, 1.0)];
        let mut alpha = vec![0.0; 3];
        f.ftran(&newcol, &mut alpha);
        f.push_eta(1, &alpha);

        let mut b2 = a.clone();
        b2[0][1] = 1.0;
        b2[1][1] = 1.0;
        b2[2][1] = 0.0;
        let mut fresh = Factorization::new(3, &dense_to_cols(&b2)).unwrap();

        let rhs: SpCol = vec![(0, 3.0), (1, -1.0), (2, 2.0)];
        let mut x_eta = vec![0.0; 3];
        let mut x_new = vec![0.0; 3];
        f.ftran(&rhs, &mut x_eta);
        fresh.ftran(&rhs, &mut x_new);
        for i in 0..3 {
            assert!((x_eta[i] - x_new[i]).abs() < 1e-10);
        }

        let c = vec![0.5, 1.5, -2.0];
        let mut c1 = c.clone();
        let mut c2 = c.clone();
        let mut y1 = vec![0.0; 3];
        let mut y2 = vec![0.0; 3];
        f.btran(&mut c1, &mut y1);
        fresh.btran(&mut c2, &mut y2);
        for i in 0..3 {
            assert!((y1[i] - y2[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_matrix_reports_columns() {
        let a = vec![
            vec![1.0, 2.0, 3.0],
            vec![0.0, 0.0, 0.0],
            vec![1.0, 2.0, 3.0],
        ];
        match Factorization::new(3, &dense_to_cols(&a)) {
            Err(LuError::Singular { cols, rows }) => {
                assert!(!cols.is_empty());
                assert_eq!(cols.len(), rows.len());
            }
            Ok(_) => panic!("expected singular"),
        }
    }
}
