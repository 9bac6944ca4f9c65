//! Solver for multi-term matrix equations
//!
//! ```text
//! −Σ_ℓ A⁽ℓ⁾ X B⁽ℓ⁾ + Σ_ℓ C⁽ℓ⁾ X D⁽ℓ⁾ = Y,    X, Y ∈ ℝ^{N×M}
//! ```
//!
//! by explicit vectorization. `X` is flattened row-major, `x̃[i·M + α] = X[i, α]`,
//! so the vectorized operator has entries
//!
//! ```text
//! 𝓔[(i·M + β), (j·M + α)] = Σ_ℓ (−A_ij B_αβ + C_ij D_αβ).
//! ```
//!
//! When the left matrices are banded (tridiagonal stencils, diagonal
//! densities) `𝓔` has bandwidth `(b + 1)·M − 1` and is factored in band
//! storage; otherwise a dense LU is used.

use nalgebra::{Dyn, LU};

use crate::error::{Error, Result};
use crate::{Mat, Vector};

/// Relative residual tolerance enforced on every solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Pivot ratios below this count as singular.
const SINGULAR_PIVOT_RATIO: f64 = 1e-14;

/// `−Σ A⁽ℓ⁾ X B⁽ℓ⁾ + Σ C⁽ℓ⁾ X D⁽ℓ⁾`, with the A/B and C/D lists paired by index.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTermSystem {
    pub n: usize,
    pub m: usize,
    pub left_a: Vec<Mat>,
    pub right_b: Vec<Mat>,
    pub left_c: Vec<Mat>,
    pub right_d: Vec<Mat>,
}

impl MultiTermSystem {
    pub fn new(
        n: usize,
        m: usize,
        minus_terms: Vec<(Mat, Mat)>,
        plus_terms: Vec<(Mat, Mat)>,
    ) -> Result<Self> {
        let (left_a, right_b) = minus_terms.into_iter().unzip();
        let (left_c, right_d) = plus_terms.into_iter().unzip();
        let system = Self {
            n,
            m,
            left_a,
            right_b,
            left_c,
            right_d,
        };
        system.validate()?;
        Ok(system)
    }

    /// System with only `+ C X D` terms.
    pub fn positive(n: usize, m: usize, terms: Vec<(Mat, Mat)>) -> Result<Self> {
        Self::new(n, m, Vec::new(), terms)
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::Dimension("system dimensions must be positive".into()));
        }
        if self.left_a.len() != self.right_b.len() || self.left_c.len() != self.right_d.len() {
            return Err(Error::Dimension("paired term lists differ in length".into()));
        }
        let square = |mat: &Mat, size: usize, what: &str, t: usize| {
            if mat.shape() != (size, size) {
                Err(Error::Dimension(format!(
                    "{what}[{t}] is {}×{}, expected {size}×{size}",
                    mat.nrows(),
                    mat.ncols()
                )))
            } else {
                Ok(())
            }
        };
        for (t, (a, b)) in self.left_a.iter().zip(&self.right_b).enumerate() {
            square(a, self.n, "A", t)?;
            square(b, self.m, "B", t)?;
        }
        for (t, (c, d)) in self.left_c.iter().zip(&self.right_d).enumerate() {
            square(c, self.n, "C", t)?;
            square(d, self.m, "D", t)?;
        }
        Ok(())
    }

    pub fn n_terms(&self) -> usize {
        self.left_a.len() + self.left_c.len()
    }

    /// Apply the operator to `x` directly in matrix form.
    pub fn apply(&self, x: &Mat) -> Result<Mat> {
        if x.shape() != (self.n, self.m) {
            return Err(Error::Dimension(format!(
                "operand is {}×{}, expected {}×{}",
                x.nrows(),
                x.ncols(),
                self.n,
                self.m
            )));
        }
        let mut out = Mat::zeros(self.n, self.m);
        for (a, b) in self.left_a.iter().zip(&self.right_b) {
            out -= a * x * b;
        }
        for (c, d) in self.left_c.iter().zip(&self.right_d) {
            out += c * x * d;
        }
        Ok(out)
    }

    /// Largest `|i − j|` with a nonzero entry in any left matrix.
    pub fn left_bandwidth(&self) -> usize {
        self.left_a
            .iter()
            .chain(&self.left_c)
            .map(bandwidth)
            .max()
            .unwrap_or(0)
    }

    /// Accumulate every entry of `𝓔` through `sink(row, col, value)`, skipping
    /// zero blocks of the left matrices.
    fn for_each_entry(&self, mut sink: impl FnMut(usize, usize, f64)) {
        let m = self.m;
        let terms = self
            .left_a
            .iter()
            .zip(&self.right_b)
            .map(|(l, r)| (-1.0, l, r))
            .chain(self.left_c.iter().zip(&self.right_d).map(|(l, r)| (1.0, l, r)));
        for (sign, left, right) in terms {
            for j in 0..self.n {
                for i in 0..self.n {
                    let lij = left[(i, j)];
                    if lij == 0.0 {
                        continue;
                    }
                    for beta in 0..m {
                        for alpha in 0..m {
                            let rab = right[(alpha, beta)];
                            if rab != 0.0 {
                                sink(flat_index(i, beta, m), flat_index(j, alpha, m), sign * lij * rab);
                            }
                        }
                    }
                }
            }
        }
    }
}

fn bandwidth(mat: &Mat) -> usize {
    let mut width = 0;
    for j in 0..mat.ncols() {
        for i in 0..mat.nrows() {
            if mat[(i, j)] != 0.0 {
                width = width.max(i.abs_diff(j));
            }
        }
    }
    width
}

/// Position of `X[i, beta]` in the flattened vector.
#[inline]
pub fn flat_index(i: usize, beta: usize, m: usize) -> usize {
    i * m + beta
}

pub fn flatten(x: &Mat) -> Vector {
    let m = x.ncols();
    Vector::from_fn(x.nrows() * m, |k, _| x[(k / m, k % m)])
}

pub fn unflatten(v: &Vector, n: usize, m: usize) -> Mat {
    Mat::from_fn(n, m, |i, beta| v[flat_index(i, beta, m)])
}

/// Factored vectorized operator, reusable across right-hand sides.
///
/// Solves take `&self` and never mutate the factorization, so one operator
/// can serve concurrent solves.
#[derive(Debug, Clone)]
pub struct VectorizedOperator {
    system: MultiTermSystem,
    factorization: Factorization,
}

#[derive(Debug, Clone)]
enum Factorization {
    Dense { e_matrix: Mat, lu: LU<f64, Dyn, Dyn> },
    Banded(BandedLu),
}

/// Build and factor `𝓔` for `system`.
pub fn assemble_vectorized(system: MultiTermSystem) -> Result<VectorizedOperator> {
    system.validate()?;
    let size = system.n * system.m;
    let half_band = (system.left_bandwidth() + 1) * system.m - 1;
    // Band storage holds 3·half_band + 1 diagonals (upper fill-in from pivoting).
    let factorization = if (3 * half_band + 1) * 2 < size {
        let mut band = BandMatrix::zeros(size, half_band, half_band);
        system.for_each_entry(|r, c, v| band.add(r, c, v));
        Factorization::Banded(BandedLu::factor(band)?)
    } else {
        let mut e_matrix = Mat::zeros(size, size);
        system.for_each_entry(|r, c, v| e_matrix[(r, c)] += v);
        let lu = e_matrix.clone().lu();
        check_pivots(lu.u().diagonal().iter().copied())?;
        Factorization::Dense { e_matrix, lu }
    };
    Ok(VectorizedOperator {
        system,
        factorization,
    })
}

fn check_pivots(pivots: impl Iterator<Item = f64>) -> Result<()> {
    let (lo, hi) = pivots.fold((f64::INFINITY, 0.0f64), |(lo, hi), p| (lo.min(p.abs()), hi.max(p.abs())));
    if !(hi > 0.0) || !(lo > SINGULAR_PIVOT_RATIO * hi) {
        return Err(Error::Singular {
            condition: if lo > 0.0 { hi / lo } else { f64::INFINITY },
        });
    }
    Ok(())
}

impl VectorizedOperator {
    pub fn system(&self) -> &MultiTermSystem {
        &self.system
    }

    /// Whether the band-storage factorization is in use.
    pub fn is_banded(&self) -> bool {
        matches!(self.factorization, Factorization::Banded(_))
    }

    /// Dense copy of `𝓔`.
    pub fn e_matrix(&self) -> Mat {
        match &self.factorization {
            Factorization::Dense { e_matrix, .. } => e_matrix.clone(),
            Factorization::Banded(_) => {
                let size = self.system.n * self.system.m;
                let mut e = Mat::zeros(size, size);
                self.system.for_each_entry(|r, c, v| e[(r, c)] += v);
                e
            }
        }
    }

    fn solve_flat(&self, rhs: &Vector) -> Result<Vector> {
        match &self.factorization {
            Factorization::Dense { lu, .. } => lu
                .solve(rhs)
                .ok_or(Error::Singular { condition: f64::INFINITY }),
            Factorization::Banded(lu) => Ok(lu.solve(rhs)),
        }
    }

    /// Solve for `X`; the returned solution satisfies
    /// `‖op(X) − Y‖_F ≤ RESIDUAL_TOLERANCE · ‖Y‖_F`.
    pub fn solve(&self, rhs: &Mat) -> Result<Mat> {
        let (n, m) = (self.system.n, self.system.m);
        if rhs.shape() != (n, m) {
            return Err(Error::Dimension(format!(
                "right-hand side is {}×{}, expected {n}×{m}",
                rhs.nrows(),
                rhs.ncols()
            )));
        }
        let scale = rhs.norm();
        if scale == 0.0 {
            return Ok(Mat::zeros(n, m));
        }
        let mut x = unflatten(&self.solve_flat(&flatten(rhs))?, n, m);
        let mut residual = rhs - self.system.apply(&x)?;
        // One step of iterative refinement if the first solve falls short.
        if residual.norm() > RESIDUAL_TOLERANCE * scale {
            x += unflatten(&self.solve_flat(&flatten(&residual))?, n, m);
            residual = rhs - self.system.apply(&x)?;
        }
        let relative = residual.norm() / scale;
        if !(relative <= RESIDUAL_TOLERANCE) {
            return Err(Error::Residual {
                residual: relative,
                tolerance: RESIDUAL_TOLERANCE,
            });
        }
        Ok(x)
    }
}

/// Square band matrix with room for the `lower` extra super-diagonals that
/// partial pivoting fills in.
#[derive(Debug, Clone)]
struct BandMatrix {
    size: usize,
    lower: usize,
    upper: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    fn zeros(size: usize, lower: usize, upper: usize) -> Self {
        let width = 2 * lower + upper + 1;
        Self {
            size,
            lower,
            upper,
            width,
            data: vec![0.0; size * width],
        }
    }

    #[inline]
    fn offset(&self, row: usize, col: usize) -> usize {
        debug_assert!(col + self.lower >= row && col <= row + self.upper + self.lower);
        row * self.width + (col + self.lower - row)
    }

    #[inline]
    fn get(&self, row: usize, col: usize) -> f64 {
        self.data[self.offset(row, col)]
    }

    #[inline]
    fn add(&mut self, row: usize, col: usize, value: f64) {
        let k = self.offset(row, col);
        self.data[k] += value;
    }
}

/// LU with partial pivoting in band storage. Multipliers stay in the column
/// where they were computed, so the forward solve interleaves row swaps and
/// eliminations.
#[derive(Debug, Clone)]
struct BandedLu {
    band: BandMatrix,
    pivots: Vec<usize>,
}

impl BandedLu {
    fn factor(mut a: BandMatrix) -> Result<Self> {
        let n = a.size;
        let kl = a.lower;
        let reach = kl + a.upper;
        let mut pivots = Vec::with_capacity(n);
        let mut largest = 0.0f64;
        let mut smallest = f64::INFINITY;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + reach).min(n - 1);
            let p = (k..=last_row)
                .max_by(|&i, &j| a.get(i, k).abs().total_cmp(&a.get(j, k).abs()))
                .expect("non-empty pivot range");
            pivots.push(p);
            if p != k {
                for col in k..=last_col {
                    let (ik, ip) = (a.offset(k, col), a.offset(p, col));
                    a.data.swap(ik, ip);
                }
            }
            let pivot = a.get(k, k);
            largest = largest.max(pivot.abs());
            smallest = smallest.min(pivot.abs());
            if pivot == 0.0 {
                return Err(Error::Singular {
                    condition: f64::INFINITY,
                });
            }
            for i in k + 1..=last_row {
                let ik = a.offset(i, k);
                let l = a.data[ik] / pivot;
                a.data[ik] = l;
                if l != 0.0 {
                    for col in k + 1..=last_col {
                        let u = a.get(k, col);
                        a.add(i, col, -l * u);
                    }
                }
            }
        }
        check_pivots([smallest, largest].into_iter())?;
        Ok(Self { band: a, pivots })
    }

    fn solve(&self, rhs: &Vector) -> Vector {
        let a = &self.band;
        let n = a.size;
        let kl = a.lower;
        let reach = kl + a.upper;
        let mut x = rhs.clone();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap_rows(k, p);
            }
            let xk = x[k];
            if xk != 0.0 {
                for i in k + 1..=(k + kl).min(n - 1) {
                    x[i] -= a.get(i, k) * xk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for col in k + 1..=(k + reach).min(n - 1) {
                s -= a.get(k, col) * x[col];
            }
            x[k] = s / a.get(k, k);
        }
        x
    }
}
