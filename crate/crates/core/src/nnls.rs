//! Active-set (Lawson–Hanson) non-negative least squares for tall systems
//! with three rows and at most three columns, the shape of per-pixel stain
//! unmixing.
//!
//! The solver works on the normal equations. The Gram matrix is computed
//! once per stain basis and reused for every pixel.

/// Maximum number of unknowns.
pub const MAX_COLS: usize = 3;

#[derive(Debug, Clone)]
pub struct Nnls {
    columns: Vec<[f64; 3]>,
    gram: [[f64; MAX_COLS]; MAX_COLS],
}

impl Nnls {
    /// `columns` are the columns of the 3×n design matrix.
    ///
    /// # Panics
    ///
    /// If there are no columns or more than [`MAX_COLS`].
    pub fn new(columns: &[[f64; 3]]) -> Self {
        assert!(
            !columns.is_empty() && columns.len() <= MAX_COLS,
            "NNLS supports 1..={MAX_COLS} columns, got {}",
            columns.len()
        );
        let mut gram = [[0.0; MAX_COLS]; MAX_COLS];
        for (i, a) in columns.iter().enumerate() {
            for (j, b) in columns.iter().enumerate() {
                gram[i][j] = dot(a, b);
            }
        }
        Self { columns: columns.to_vec(), gram }
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[[f64; 3]] {
        &self.columns
    }

    /// Solves `min ||A x - b||` subject to `x >= 0`. Only the first
    /// [`n_cols`](Self::n_cols) entries of the result are meaningful.
    pub fn solve(&self, b: &[f64; 3]) -> [f64; MAX_COLS] {
        let n = self.n_cols();
        let mut atb = [0.0; MAX_COLS];
        for (j, col) in self.columns.iter().enumerate() {
            atb[j] = dot(col, b);
        }
        let scale = self.gram.iter().take(n).enumerate().map(|(i, row)| row[i]).fold(0.0, f64::max).sqrt()
            * b.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let eps = 1e-14 * scale.max(f64::MIN_POSITIVE);

        let mut x = [0.0; MAX_COLS];
        let mut passive = [false; MAX_COLS];

        // Each outer pass adds one index; at most 3n passes in practice.
        for _ in 0..(3 * n + 3) {
            let w = self.dual(&atb, &x);
            let candidate =
                (0..n).filter(|&j| !passive[j] && w[j] > eps).max_by(|&a, &b| w[a].total_cmp(&w[b]).then(b.cmp(&a)));
            let Some(j) = candidate else {
                break;
            };
            passive[j] = true;

            loop {
                let z = self.solve_passive(&atb, &passive);
                if (0..n).all(|i| !passive[i] || z[i] > 0.0) {
                    x = z;
                    break;
                }
                let mut step = f64::INFINITY;
                for i in 0..n {
                    if passive[i] && z[i] <= 0.0 {
                        let t = x[i] / (x[i] - z[i]);
                        if t < step {
                            step = t;
                        }
                    }
                }
                for i in 0..n {
                    if passive[i] {
                        x[i] += step * (z[i] - x[i]);
                        if x[i] <= eps {
                            x[i] = 0.0;
                            passive[i] = false;
                        }
                    }
                }
                if !passive.iter().take(n).any(|&p| p) {
                    break;
                }
            }
        }
        x
    }

    /// Negative gradient of `0.5 ||A x - b||^2`, i.e. `Aᵀ(b - A x)`.
    pub fn dual(&self, atb: &[f64; MAX_COLS], x: &[f64; MAX_COLS]) -> [f64; MAX_COLS] {
        let n = self.n_cols();
        let mut w = [0.0; MAX_COLS];
        for i in 0..n {
            w[i] = atb[i] - (0..n).map(|j| self.gram[i][j] * x[j]).sum::<f64>();
        }
        w
    }

    /// Unconstrained least squares restricted to the passive columns.
    fn solve_passive(&self, atb: &[f64; MAX_COLS], passive: &[bool; MAX_COLS]) -> [f64; MAX_COLS] {
        let idx: Vec<usize> = (0..self.n_cols()).filter(|&i| passive[i]).collect();
        let k = idx.len();
        let mut a = [[0.0; MAX_COLS + 1]; MAX_COLS];
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                a[r][c] = self.gram[i][j];
            }
            a[r][k] = atb[i];
        }
        let sol = gauss_solve(&mut a, k);
        let mut z = [0.0; MAX_COLS];
        for (r, &i) in idx.iter().enumerate() {
            z[i] = sol[r];
        }
        z
    }

    /// `||A x - b||₂`.
    pub fn residual_norm(&self, x: &[f64], b: &[f64; 3]) -> f64 {
        let mut r = *b;
        for (col, &xj) in self.columns.iter().zip(x) {
            for c in 0..3 {
                r[c] -= col[c] * xj;
            }
        }
        dot(&r, &r).sqrt()
    }
}

/// Gaussian elimination with partial pivoting on a `k × (k+1)` augmented
/// system. Singular pivots produce a zero component.
#[allow(clippy::needless_range_loop)]
fn gauss_solve(a: &mut [[f64; MAX_COLS + 1]; MAX_COLS], k: usize) -> [f64; MAX_COLS] {
    for col in 0..k {
        let pivot = (col..k).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap_or(col);
        a.swap(col, pivot);
        let p = a[col][col];
        if p.abs() < 1e-300 {
            continue;
        }
        for row in (col + 1)..k {
            let f = a[row][col] / p;
            for c in col..=k {
                a[row][c] -= f * a[col][c];
            }
        }
    }
    let mut x = [0.0; MAX_COLS];
    for row in (0..k).rev() {
        let p = a[row][row];
        if p.abs() < 1e-300 {
            continue;
        }
        let tail: f64 = ((row + 1)..k).map(|c| a[row][c] * x[c]).sum();
        x[row] = (a[row][k] - tail) / p;
    }
    x
}

pub(crate) fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
