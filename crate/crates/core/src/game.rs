//! Game definitions: antisymmetric payoff matrices, simplex points, the
//! boundary-vanishing step function and interior Nash equilibria.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|sum p_i - 1|` for a point to count as a member of the simplex.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Tolerance on `max |A + A^T|` for a matrix to count as antisymmetric.
pub const ANTISYMMETRY_TOL: f64 = 1e-12;

/// Default tolerance for null-space detection and interiority.
pub const NASH_TOL: f64 = 1e-10;

/// A mixed strategy: nonnegative coordinates summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        check_simplex(&coords)?;
        Ok(SimplexPoint(coords))
    }

    /// Scales a nonnegative vector with positive sum onto the simplex.
    pub fn normalized(mut coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::BadDimension(format!("simplex dimension {} < 2", coords.len())));
        }
        if coords.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::NotInSimplex(format!("{coords:?} has a negative or non-finite entry")));
        }
        let total: f64 = coords.iter().sum();
        if total <= 0.0 {
            return Err(Error::NotInSimplex("zero vector cannot be normalized".into()));
        }
        coords.iter_mut().for_each(|x| *x /= total);
        Ok(SimplexPoint(coords))
    }

    /// The uniform strategy `(1/d, ..., 1/d)`.
    pub fn barycenter(dim: usize) -> Self {
        SimplexPoint(vec![1.0 / dim as f64; dim])
    }

    /// The pure strategy `e_index` (0-based).
    pub fn vertex(dim: usize, index: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[index] = 1.0;
        SimplexPoint(v)
    }

    /// Wraps coordinates already known to lie in the simplex.
    pub(crate) fn from_trusted(coords: Vec<f64>) -> Self {
        debug_assert!(check_simplex(&coords).is_ok(), "untrusted simplex point {coords:?}");
        SimplexPoint(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn min_coord(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn product(&self) -> f64 {
        self.0.iter().product()
    }

    pub fn is_interior(&self, tol: f64) -> bool {
        self.min_coord() > tol
    }

    pub fn max_abs_diff(&self, other: &SimplexPoint) -> f64 {
        max_abs_diff(&self.0, &other.0)
    }
}

impl TryFrom<Vec<f64>> for SimplexPoint {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        SimplexPoint::new(v)
    }
}

impl From<SimplexPoint> for Vec<f64> {
    fn from(p: SimplexPoint) -> Self {
        p.0
    }
}

impl AsRef<[f64]> for SimplexPoint {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Checks simplex membership of raw coordinates.
pub fn check_simplex(coords: &[f64]) -> Result<()> {
    if coords.len() < 2 {
        return Err(Error::BadDimension(format!("simplex dimension {} < 2", coords.len())));
    }
    if let Some((i, x)) = coords.iter().enumerate().find(|(_, x)| !x.is_finite() || **x < 0.0) {
        return Err(Error::NotInSimplex(format!("coordinate {i} = {x}")));
    }
    let total: f64 = coords.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::NotInSimplex(format!("coordinates sum to {total:.17}")));
    }
    Ok(())
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Antisymmetric payoff matrix of a symmetric zero-sum game, entries in `[-1, 1]`.
///
/// A matrix built through [`PayoffMatrix::rps_unchecked`] may violate
/// antisymmetry; [`PayoffMatrix::is_antisymmetric`] tells the two apart and the
/// dynamics modules call [`PayoffMatrix::require_antisymmetric`].
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffMatrix {
    dim: usize,
    entries: Vec<f64>,
    antisymmetric: bool,
}

impl PayoffMatrix {
    /// Validates a row-major square array.
    pub fn validate(raw: &[Vec<f64>]) -> Result<Self> {
        let m = Self::from_rows_bounded(raw)?;
        let defect = m.antisymmetry_defect();
        if defect > ANTISYMMETRY_TOL {
            return Err(Error::NotAntisymmetric { max_defect: defect });
        }
        Ok(m)
    }

    fn from_rows_bounded(raw: &[Vec<f64>]) -> Result<Self> {
        let dim = raw.len();
        if dim < 2 {
            return Err(Error::BadDimension(format!("payoff matrix must be at least 2x2, got {dim} rows")));
        }
        let mut entries = Vec::with_capacity(dim * dim);
        for (i, row) in raw.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::BadDimension(format!("row {i} has {} entries, expected {dim}", row.len())));
            }
            for (j, &a) in row.iter().enumerate() {
                if !a.is_finite() || a.abs() > 1.0 {
                    return Err(Error::EntryOutOfRange { row: i, col: j, value: a });
                }
                entries.push(a);
            }
        }
        let mut m = PayoffMatrix { dim, entries, antisymmetric: false };
        m.antisymmetric = m.antisymmetry_defect() <= ANTISYMMETRY_TOL;
        Ok(m)
    }

    /// Rock-paper-scissors with rows `(0,-a,b), (b,0,-a), (-a,b,0)`; requires `a == b`.
    pub fn rps(a: f64, b: f64) -> Result<Self> {
        let m = Self::rps_unchecked(a, b)?;
        if !m.antisymmetric {
            return Err(Error::NotAntisymmetric { max_defect: m.antisymmetry_defect() });
        }
        Ok(m)
    }

    /// Rock-paper-scissors allowing `a != b`. The result is not a zero-sum
    /// symmetric game and is refused by every dynamics routine.
    pub fn rps_unchecked(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::ConfigInvalid(format!("rps parameters must be positive, got a={a}, b={b}")));
        }
        Self::from_rows_bounded(&[vec![0.0, -a, b], vec![b, 0.0, -a], vec![-a, b, 0.0]])
    }

    /// Circulant game on an odd number of strategies, first row
    /// `(0, a_1, ..., a_{d-1})` with `a_k = (-1)^(k-1)`.
    pub fn cyclic(dim: usize) -> Result<Self> {
        if dim < 3 {
            return Err(Error::BadDimension(format!("cyclic game needs d >= 3, got {dim}")));
        }
        if dim.is_multiple_of(2) {
            return Err(Error::EvenDimension(dim));
        }
        let first: Vec<f64> = (0..dim).map(|k| if k == 0 { 0.0 } else if k % 2 == 1 { 1.0 } else { -1.0 }).collect();
        // row i is the first row shifted right by i
        let rows: Vec<Vec<f64>> = (0..dim)
            .map(|i| (0..dim).map(|j| first[(j + dim - i) % dim]).collect())
            .collect();
        Self::validate(&rows)
    }

    /// The two-strategy game `[[0, b], [-b, 0]]`.
    pub fn two_strategy(b: f64) -> Result<Self> {
        Self::validate(&[vec![0.0, b], vec![-b, 0.0]])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_antisymmetric(&self) -> bool {
        self.antisymmetric
    }

    pub fn require_antisymmetric(&self) -> Result<()> {
        if self.antisymmetric {
            Ok(())
        } else {
            Err(Error::NotAntisymmetric { max_defect: self.antisymmetry_defect() })
        }
    }

    pub fn antisymmetry_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                worst = worst.max((self.get(i, j) + self.get(j, i)).abs());
            }
        }
        worst
    }

    /// `out = A x`.
    #[inline]
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = self.row(i).iter().zip(x).map(|(a, v)| a * v).sum();
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.apply_into(x, &mut out);
        out
    }

    /// `x^T A y` without dimension checks.
    #[inline]
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.dim).map(|i| x[i] * self.row(i).iter().zip(y).map(|(a, v)| a * v).sum::<f64>()).sum()
    }

    /// Operator 2-norm (largest singular value).
    pub fn spectral_norm(&self) -> f64 {
        self.to_dmatrix().singular_values().iter().copied().fold(0.0, f64::max)
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: n });
        }
        Ok(())
    }
}

/// The step function `h(p) = min(prod_i p_i, c)`, zero on the simplex boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct StepFunction {
    c: f64,
}

impl StepFunction {
    pub fn new(c: f64) -> Result<Self> {
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::ConfigInvalid(format!("step cap c must lie in (0, 1), got {c}")));
        }
        Ok(StepFunction { c })
    }

    pub fn cap(&self) -> f64 {
        self.c
    }

    #[inline]
    pub fn eval(&self, p: &[f64]) -> f64 {
        p.iter().product::<f64>().min(self.c)
    }

    /// Whether `p` lies on the plateau where `h(p) = c`.
    pub fn on_plateau(&self, p: &[f64]) -> bool {
        p.iter().product::<f64>() >= self.c
    }
}

impl TryFrom<f64> for StepFunction {
    type Error = Error;
    fn try_from(c: f64) -> Result<Self> {
        StepFunction::new(c)
    }
}

impl From<StepFunction> for f64 {
    fn from(s: StepFunction) -> f64 {
        s.c
    }
}

pub fn h_eval(p: &SimplexPoint, step: &StepFunction) -> f64 {
    step.eval(p.coords())
}

/// Draws a pure strategy from `p` given a uniform variate `zeta` in `[0, 1)`.
///
/// Returns the 0-based index `i` with `sum_{j<i} p_j <= zeta < sum_{j<=i} p_j`.
/// When rounding leaves `zeta` beyond the last cumulative sum, the last
/// strategy with positive mass absorbs it.
#[inline]
pub fn sample_pure(p: &[f64], zeta: f64) -> usize {
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (i, &pi) in p.iter().enumerate() {
        if pi > 0.0 {
            last_positive = i;
        }
        cumulative += pi;
        if zeta < cumulative {
            return i;
        }
    }
    last_positive
}

/// Expected payoff `p^T A q` of `p` against `q`.
pub fn payoff(p: &SimplexPoint, q: &SimplexPoint, a: &PayoffMatrix) -> Result<f64> {
    a.check_dim(p.dim())?;
    a.check_dim(q.dim())?;
    Ok(a.bilinear(p.coords(), q.coords()))
}

/// Outcome of an interior-equilibrium search.
#[derive(Debug, Clone, PartialEq)]
pub struct NashSearch {
    pub equilibrium: Option<SimplexPoint>,
    /// Dimension of the numerical null space of `A`.
    pub null_dim: usize,
}

impl NashSearch {
    pub fn is_degenerate(&self) -> bool {
        self.null_dim > 1
    }
}

/// Finds an interior point of the null space of `A`, normalized to the simplex.
///
/// Singular values below `tol * ||A||_2` count as zero. With a null space of
/// dimension above one the first interior basis vector is returned and the
/// multiplicity is left visible in [`NashSearch::null_dim`].
pub fn interior_nash(a: &PayoffMatrix, tol: f64) -> NashSearch {
    let d = a.dim();
    let m = a.to_dmatrix();
    let norm = a.spectral_norm();
    if norm == 0.0 {
        // every vector is a null vector; the barycenter is the canonical pick
        return NashSearch { equilibrium: Some(SimplexPoint::barycenter(d)), null_dim: d };
    }
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut equilibrium = None;
    let mut null_dim = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s >= tol * norm {
            continue;
        }
        null_dim += 1;
        if equilibrium.is_some() {
            continue;
        }
        let v: Vec<f64> = v_t.row(k).iter().copied().collect();
        let total: f64 = v.iter().sum();
        if total.abs() <= tol {
            continue;
        }
        let q: Vec<f64> = v.iter().map(|x| x / total).collect();
        if q.iter().all(|&x| x > tol) {
            equilibrium = SimplexPoint::normalized(q).ok();
        }
    }
    NashSearch { equilibrium, null_dim }
}

/// Whether the interior point `q` is a Nash equilibrium, i.e. `||A q||_inf <= tol`.
pub fn is_nash(q: &SimplexPoint, a: &PayoffMatrix, tol: f64) -> Result<bool> {
    a.check_dim(q.dim())?;
    if !q.is_interior(tol) {
        return Err(Error::NotInterior { min_coord: q.min_coord() });
    }
    Ok(a.apply(q.coords()).iter().all(|x| x.abs() <= tol))
}

/// `||A q||_inf`.
pub fn nash_residual(q: &SimplexPoint, a: &PayoffMatrix) -> f64 {
    a.apply(q.coords()).iter().map(|x| x.abs()).fold(0.0, f64::max)
}
