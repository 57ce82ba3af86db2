//! Dense symmetric linear algebra for rank-deficient matrices.
//!
//! Everything here works on symmetric positive semi-definite matrices built
//! from sums of outer products, which are singular as a rule rather than as
//! an exception: a design matrix for one arm only spans the directions of the
//! clients that still have that arm active.
//!
//! Eigenvalues at or below the tolerance are treated as exact zeros. The
//! default tolerance is `dim * f64::EPSILON * spectral_norm`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Denominators of rank-one updates at or below this are rejected.
pub const SINGULAR_UPDATE_EPS: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-8;

/// A symmetric positive semi-definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdMatrix(DMatrix<f64>);

impl PsdMatrix {
    /// Validates symmetry and positive semi-definiteness.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.nrows() != m.ncols() {
            return Err(Error::InvalidInput(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if (a - b).abs() > SYMMETRY_TOL * a.abs().max(1.0) {
                    return Err(Error::InvalidInput(format!(
                        "matrix is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        let eig = SymmetricEigen::new(m.clone());
        let norm = spectral_norm(&eig.eigenvalues);
        let min = eig.eigenvalues.min();
        if min < -PSD_TOL * norm {
            return Err(Error::InvalidInput(format!(
                "matrix is not positive semi-definite: smallest eigenvalue {min:e}"
            )));
        }
        Ok(PsdMatrix(m))
    }

    pub fn identity(dim: usize) -> Self {
        PsdMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// `sum_k w_k v_k v_k'`; all weights must be non-negative.
    pub fn from_outer_products<'a>(
        dim: usize,
        terms: impl IntoIterator<Item = (f64, &'a DVector<f64>)>,
    ) -> Result<Self> {
        let mut m = DMatrix::zeros(dim, dim);
        for (w, v) in terms {
            if v.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "vector of length {} in a {dim}-dimensional sum",
                    v.len()
                )));
            }
            if !(w >= 0.0) {
                return Err(Error::InvalidInput(format!("negative weight {w}")));
            }
            m.ger(w, v, v, 1.0);
        }
        Ok(PsdMatrix(m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn pinv(&self, tol: Option<f64>) -> PsdMatrix {
        PsdMatrix(sym_pinv(&self.0, tol))
    }

    pub fn log_pdet(&self, tol: Option<f64>) -> f64 {
        sym_log_pdet(&self.0, tol)
    }

    pub fn rank(&self, tol: Option<f64>) -> usize {
        sym_rank(&self.0, tol)
    }

    /// `v' A v`.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        quad_form(&self.0, v)
    }
}

/// Moore-Penrose pseudo-inverse of a PSD matrix.
pub fn pinv(a: &PsdMatrix, tol: Option<f64>) -> PsdMatrix {
    a.pinv(tol)
}

/// Log of the pseudo-determinant (product of eigenvalues above `tol`).
/// A rank-zero matrix has an empty product and returns 0.
pub fn log_pdet(a: &PsdMatrix, tol: Option<f64>) -> f64 {
    a.log_pdet(tol)
}

/// Pseudo-inverse of `A + lambda u u'` from `A+`, valid when `u` lies in the
/// range of `A` and the update keeps that range.
///
/// Returns the updated pseudo-inverse and the pseudo-determinant multiplier
/// `1 + lambda u' A+ u`.
pub fn pinv_rank1_update(
    a_pinv: &PsdMatrix,
    u: &DVector<f64>,
    lambda: f64,
) -> Result<(PsdMatrix, f64)> {
    if u.len() != a_pinv.dim() {
        return Err(Error::InvalidInput(format!(
            "update vector has length {}, matrix is {}x{}",
            u.len(),
            a_pinv.dim(),
            a_pinv.dim()
        )));
    }
    let (m, factor) = rank1_update_raw(&a_pinv.0, u, lambda)?;
    Ok((PsdMatrix(m), factor))
}

pub(crate) fn rank1_update_raw(
    a_pinv: &DMatrix<f64>,
    u: &DVector<f64>,
    lambda: f64,
) -> Result<(DMatrix<f64>, f64)> {
    let w = a_pinv * u;
    let denominator = 1.0 + lambda * u.dot(&w);
    if !(denominator > SINGULAR_UPDATE_EPS) {
        return Err(Error::SingularUpdate { denominator });
    }
    let mut out = a_pinv.clone();
    if lambda != 0.0 {
        out.ger(-lambda / denominator, &w, &w, 1.0);
    }
    Ok((out, denominator))
}

/// Number of singular values of the stacked vectors above `tol`
/// (default `max(n, dim) * eps * sigma_max`).
pub fn rank_of_set(vectors: &[DVector<f64>], tol: Option<f64>) -> Result<usize> {
    let Some(first) = vectors.first() else {
        return Ok(0);
    };
    let dim = first.len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::InvalidInput(format!(
            "mixed dimensions {} and {} in vector set",
            dim,
            v.len()
        )));
    }
    if dim == 0 {
        return Ok(0);
    }
    let stacked = DMatrix::from_fn(vectors.len(), dim, |r, c| vectors[r][c]);
    let sv = stacked.singular_values();
    let smax = sv.max();
    if smax <= 0.0 {
        return Ok(0);
    }
    let tol = tol.unwrap_or(vectors.len().max(dim) as f64 * f64::EPSILON * smax);
    Ok(sv.iter().filter(|&&s| s > tol).count())
}

/// Partitions vectors into equivalence classes of the collinear relation:
/// `x ~ y` when some subset `S` has `x` outside `span(S)` but inside
/// `span(S + {y})`.
///
/// Classes are the connected components of the linear matroid on the
/// vectors. They are read off the fundamental circuits of one greedy basis:
/// every non-basis vector is joined to each basis vector that carries a
/// nonzero coefficient in its expansion. Classes are returned sorted by
/// smallest member; members are ascending.
pub fn collinearity_classes(vectors: &[DVector<f64>]) -> Result<Vec<Vec<usize>>> {
    let Some(first) = vectors.first() else {
        return Err(Error::InvalidInput("empty vector set".into()));
    };
    let dim = first.len();
    let mut units = Vec::with_capacity(vectors.len());
    for (idx, v) in vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(Error::InvalidInput(format!(
                "vector {idx} has length {}, expected {dim}",
                v.len()
            )));
        }
        let n = v.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidInput(format!(
                "vector {idx} is zero or non-finite"
            )));
        }
        units.push(v / n);
    }

    const INDEPENDENCE_TOL: f64 = 1e-9;
    const COEFF_TOL: f64 = 1e-9;

    // Greedy basis via modified Gram-Schmidt on unit vectors.
    let mut ortho: Vec<DVector<f64>> = Vec::new();
    let mut basis: Vec<usize> = Vec::new();
    let mut dependent: Vec<usize> = Vec::new();
    for (idx, v) in units.iter().enumerate() {
        let mut r = v.clone();
        for q in &ortho {
            let c = q.dot(&r);
            r.axpy(-c, q, 1.0);
        }
        let rn = r.norm();
        if rn > INDEPENDENCE_TOL {
            ortho.push(r / rn);
            basis.push(idx);
        } else {
            dependent.push(idx);
        }
    }

    let mut uf = UnionFind::new(units.len());
    if !dependent.is_empty() {
        let b = DMatrix::from_fn(dim, basis.len(), |r, c| units[basis[c]][r]);
        let svd = b.svd(true, true);
        for &idx in &dependent {
            let coeffs = svd
                .solve(&units[idx], 1e-14)
                .map_err(|e| Error::InvalidInput(format!("basis solve failed: {e}")))?;
            for (k, &bidx) in basis.iter().enumerate() {
                if coeffs[k].abs() > COEFF_TOL {
                    uf.union(idx, bidx);
                }
            }
        }
    }

    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut slot_of_root = vec![usize::MAX; units.len()];
    for idx in 0..units.len() {
        let root = uf.find(idx);
        if slot_of_root[root] == usize::MAX {
            slot_of_root[root] = classes.len();
            classes.push(Vec::new());
        }
        classes[slot_of_root[root]].push(idx);
    }
    Ok(classes)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Keep the smaller index as root so class order is stable.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

// ---------------------------------------------------------------------------
// Unchecked helpers on raw symmetric matrices, used by the solvers.

fn spectral_norm(eigenvalues: &DVector<f64>) -> f64 {
    eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()))
}

pub(crate) fn default_tol(dim: usize, norm: f64) -> f64 {
    dim as f64 * f64::EPSILON * norm
}

fn eigen_with_tol(a: &DMatrix<f64>, tol: Option<f64>) -> (SymmetricEigen<f64, nalgebra::Dyn>, f64) {
    let eig = SymmetricEigen::new(a.clone());
    let norm = spectral_norm(&eig.eigenvalues);
    let tol = tol.unwrap_or_else(|| default_tol(a.nrows(), norm));
    (eig, tol)
}

pub(crate) fn sym_pinv(a: &DMatrix<f64>, tol: Option<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let (eig, tol) = eigen_with_tol(a, tol);
    let mut out = DMatrix::zeros(n, n);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > tol {
            let q = eig.eigenvectors.column(k);
            out.ger(1.0 / lam, &q, &q, 1.0);
        }
    }
    symmetrize(&mut out);
    out
}

pub(crate) fn sym_log_pdet(a: &DMatrix<f64>, tol: Option<f64>) -> f64 {
    let (eig, tol) = eigen_with_tol(a, tol);
    eig.eigenvalues
        .iter()
        .filter(|&&l| l > tol)
        .map(|l| l.ln())
        .sum()
}

pub(crate) fn sym_rank(a: &DMatrix<f64>, tol: Option<f64>) -> usize {
    let (eig, tol) = eigen_with_tol(a, tol);
    eig.eigenvalues.iter().filter(|&&l| l > tol).count()
}

/// Pseudo-inverse, log pseudo-determinant and rank from one eigendecomposition.
/// `rel_tol` is relative to the spectral norm and floored at the default.
pub(crate) fn sym_analyze(a: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, f64, usize) {
    let n = a.nrows();
    let eig = SymmetricEigen::new(a.clone());
    let norm = spectral_norm(&eig.eigenvalues);
    let tol = (rel_tol * norm).max(default_tol(n, norm));
    let mut pinv = DMatrix::zeros(n, n);
    let mut logdet = 0.0;
    let mut rank = 0;
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > tol {
            let q = eig.eigenvectors.column(k);
            pinv.ger(1.0 / lam, &q, &q, 1.0);
            logdet += lam.ln();
            rank += 1;
        }
    }
    symmetrize(&mut pinv);
    (pinv, logdet, rank)
}

pub(crate) fn quad_form(a: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(a * v))
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// `v / |v|`, or `None` for a zero vector.
/// Unit vector along `v`. Vectors already of unit norm (to a few ulps) are
/// returned unchanged so normalising twice is a no-op.
pub(crate) fn normalized(v: &DVector<f64>) -> Option<DVector<f64>> {
    let n = v.norm();
    if !(n > 0.0 && n.is_finite()) {
        return None;
    }
    if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
        return Some(v.clone());
    }
    Some(v / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
    }

    fn dv(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn identity_is_its_own_pinv() {
        let i3 = PsdMatrix::identity(3);
        assert!(max_abs(&(pinv(&i3, None).into_matrix() - DMatrix::identity(3, 3))) < 1e-15);
        assert_eq!(log_pdet(&i3, None), 0.0);
    }

    #[test]
    fn diagonal_rank_deficient() {
        let a = PsdMatrix::from_diagonal(&[2.0, 0.0]).unwrap();
        let p = pinv(&a, None);
        let want = DMatrix::from_diagonal(&dv(&[0.5, 0.0]));
        assert!(max_abs(&(p.as_matrix() - want)) < 1e-15);

        let b = PsdMatrix::from_diagonal(&[2.0, 0.0, 3.0]).unwrap();
        assert!((log_pdet(&b, None) - 6f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn rank_one_outer_product() {
        // u = (1,1): sole eigenvalue |u|^2 = 2 along u/sqrt(2), so
        // pinv = (1/2) (u u' / 2) = u u' / 4.
        let u = dv(&[1.0, 1.0]);
        let a = PsdMatrix::from_outer_products(2, [(1.0, &u)]).unwrap();
        let p = pinv(&a, None);
        let want = &u * u.transpose() / 4.0;
        assert!(max_abs(&(p.as_matrix() - want)) < 1e-15);
        assert!((log_pdet(&a, None) - 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn zero_matrix_has_empty_pdet() {
        let z = PsdMatrix::new(DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(log_pdet(&z, None), 0.0);
        assert_eq!(z.rank(None), 0);
        assert_eq!(pinv(&z, None).into_matrix(), DMatrix::zeros(3, 3));
    }

    #[test]
    fn rejects_non_symmetric_and_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(PsdMatrix::new(m), Err(Error::InvalidInput(_))));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(PsdMatrix::new(m), Err(Error::InvalidInput(_))));
        let m = DMatrix::from_row_slice(2, 3, &[1.0; 6]);
        assert!(PsdMatrix::new(m).is_err());
    }

    #[test]
    fn rank1_update_hand_checked() {
        let (p, f) = pinv_rank1_update(&PsdMatrix::identity(2), &dv(&[1.0, 0.0]), 1.0).unwrap();
        let want = DMatrix::from_diagonal(&dv(&[0.5, 1.0]));
        assert!(max_abs(&(p.as_matrix() - want)) < 1e-15);
        assert_eq!(f, 2.0);

        let a = PsdMatrix::from_diagonal(&[3.0, 0.5]).unwrap();
        let (p, f) = pinv_rank1_update(&a, &dv(&[0.3, -0.2]), 0.0).unwrap();
        assert_eq!(p, a);
        assert_eq!(f, 1.0);
    }

    #[test]
    fn rank1_update_detects_singular_denominator() {
        // A = I, u = e1, lambda = -1 removes the e1 direction entirely.
        let err = pinv_rank1_update(&PsdMatrix::identity(2), &dv(&[1.0, 0.0]), -1.0).unwrap_err();
        assert!(matches!(err, Error::SingularUpdate { .. }));
    }

    #[test]
    fn rank_of_set_examples() {
        let e1 = dv(&[1.0, 0.0, 0.0]);
        let e2 = dv(&[0.0, 1.0, 0.0]);
        assert_eq!(rank_of_set(&[e1.clone(), e2], None).unwrap(), 2);
        assert_eq!(rank_of_set(&[e1.clone(), 2.0 * &e1], None).unwrap(), 1);
        assert_eq!(rank_of_set(&[], None).unwrap(), 0);
        assert!(rank_of_set(&[e1, dv(&[1.0])], None).is_err());
    }

    #[test]
    fn rank_of_random_set_matches_gram_eigen_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let vs: Vec<DVector<f64>> = (0..5)
                .map(|_| DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0)))
                .collect();
            // Oracle: eigenvalues of the 3x3 Gram matrix sum v v'.
            let gram = vs.iter().fold(DMatrix::zeros(3, 3), |g, v| g + v * v.transpose());
            let ev = SymmetricEigen::new(gram).eigenvalues;
            let oracle = ev.iter().filter(|&&l| l > 1e-10).count();
            assert_eq!(oracle, 3);
            assert_eq!(rank_of_set(&vs, None).unwrap(), oracle);
        }
    }

    #[test]
    fn collinearity_examples() {
        let e = |i: usize| {
            let mut v = DVector::zeros(3);
            v[i] = 1.0;
            v
        };
        assert_eq!(
            collinearity_classes(&[e(0), e(1), e(2)]).unwrap(),
            vec![vec![0], vec![1], vec![2]]
        );
        assert_eq!(
            collinearity_classes(&[e(0), 2.0 * e(0)]).unwrap(),
            vec![vec![0, 1]]
        );
        assert_eq!(
            collinearity_classes(&[e(0), e(1), e(0) + e(1), e(2)]).unwrap(),
            vec![vec![0, 1, 2], vec![3]]
        );
    }

    #[test]
    fn collinearity_rejects_zero_and_empty() {
        assert!(collinearity_classes(&[]).is_err());
        assert!(collinearity_classes(&[dv(&[1.0, 0.0]), dv(&[0.0, 0.0])]).is_err());
    }

    // Exhaustive oracle straight from the definition: x ~ y iff some subset S
    // of the remaining vectors has x outside span(S) and inside span(S + y).
    // Ranks come from a test-local Gaussian elimination.
    fn ge_rank(vs: &[&DVector<f64>]) -> usize {
        if vs.is_empty() {
            return 0;
        }
        let dim = vs[0].len();
        let mut rows: Vec<Vec<f64>> = vs.iter().map(|v| v.iter().copied().collect()).collect();
        let mut rank = 0;
        for col in 0..dim {
            let Some(piv) = (rank..rows.len()).max_by(|&a, &b| {
                rows[a][col].abs().partial_cmp(&rows[b][col].abs()).unwrap()
            }) else {
                break;
            };
            if rows[piv][col].abs() < 1e-9 {
                continue;
            }
            rows.swap(rank, piv);
            for r in 0..rows.len() {
                if r != rank {
                    let f = rows[r][col] / rows[rank][col];
                    for c in 0..dim {
                        rows[r][c] -= f * rows[rank][c];
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    fn in_span(x: &DVector<f64>, s: &[&DVector<f64>]) -> bool {
        let mut with = s.to_vec();
        with.push(x);
        ge_rank(&with) == ge_rank(s)
    }

    fn exhaustive_classes(vs: &[DVector<f64>]) -> Vec<Vec<usize>> {
        let n = vs.len();
        let related = |x: usize, y: usize| -> bool {
            if x == y {
                return true;
            }
            let others: Vec<usize> = (0..n).filter(|&k| k != x && k != y).collect();
            (0..(1u32 << others.len())).any(|mask| {
                let s: Vec<&DVector<f64>> = others
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| mask & (1 << b) != 0)
                    .map(|(_, &k)| &vs[k])
                    .collect();
                let mut sy = s.clone();
                sy.push(&vs[y]);
                !in_span(&vs[x], &s) && in_span(&vs[x], &sy)
            })
        };
        let mut classes: Vec<Vec<usize>> = Vec::new();
        for x in 0..n {
            if let Some(c) = classes.iter_mut().find(|c| related(c[0], x)) {
                c.push(x);
            } else {
                classes.push(vec![x]);
            }
        }
        classes
    }

    #[test]
    fn exhaustive_oracle_agrees_on_worked_example() {
        let vs = vec![
            dv(&[1.0, 0.0, 0.0]),
            dv(&[0.0, 1.0, 0.0]),
            dv(&[1.0, 1.0, 0.0]),
            dv(&[0.0, 0.0, 1.0]),
        ];
        assert_eq!(exhaustive_classes(&vs), vec![vec![0, 1, 2], vec![3]]);
    }

    fn small_int_vectors() -> impl Strategy<Value = Vec<DVector<f64>>> {
        (2usize..=4).prop_flat_map(|dim| {
            prop::collection::vec(
                prop::collection::vec(-1i32..=1, dim).prop_filter("nonzero", |v| {
                    v.iter().any(|&x| x != 0)
                }),
                1..=6,
            )
            .prop_map(|rows| {
                rows.into_iter()
                    .map(|r| DVector::from_iterator(r.len(), r.into_iter().map(f64::from)))
                    .collect()
            })
        })
    }

    fn random_psd(dim: usize, rank: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        let q = g.qr().q();
        let basis = q.columns(0, rank).into_owned();
        let lam = DMatrix::from_diagonal(&DVector::from_fn(rank, |_, _| rng.random_range(0.05..5.0)));
        (&basis * lam * basis.transpose(), basis)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn collinearity_matches_exhaustive_definition(vs in small_int_vectors()) {
            let got = collinearity_classes(&vs).unwrap();
            prop_assert_eq!(got, exhaustive_classes(&vs));
        }

        #[test]
        fn distinct_classes_have_additive_rank(vs in small_int_vectors()) {
            let classes = collinearity_classes(&vs).unwrap();
            let mut seen: Vec<usize> = classes.iter().flatten().copied().collect();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..vs.len()).collect::<Vec<_>>());
            let rank = |idx: &[usize]| {
                let set: Vec<DVector<f64>> = idx.iter().map(|&k| vs[k].clone()).collect();
                rank_of_set(&set, None).unwrap()
            };
            for a in 0..classes.len() {
                for b in (a + 1)..classes.len() {
                    let union: Vec<usize> = classes[a].iter().chain(&classes[b]).copied().collect();
                    prop_assert_eq!(rank(&union), rank(&classes[a]) + rank(&classes[b]));
                }
            }
        }

        #[test]
        fn moore_penrose_identities(dim in 1usize..=8, rank_frac in 0.0f64..1.0, seed: u64) {
            let rank = 1 + ((dim as f64) * rank_frac) as usize % dim;
            let (a, _) = random_psd(dim, rank, seed);
            let ap = PsdMatrix::new(a.clone()).unwrap();
            let p = pinv(&ap, None).into_matrix();
            let sa = max_abs(&a).max(1.0);
            let sp = max_abs(&p).max(1.0);
            prop_assert!(max_abs(&(&a * &p * &a - &a)) <= 1e-8 * sa);
            prop_assert!(max_abs(&(&p * &a * &p - &p)) <= 1e-8 * sp);
            let ap_ = &a * &p;
            let pa_ = &p * &a;
            prop_assert!(max_abs(&(&ap_ - ap_.transpose())) <= 1e-8);
            prop_assert!(max_abs(&(&pa_ - pa_.transpose())) <= 1e-8);
            prop_assert_eq!(ap.rank(None), rank);
            // exp(log pdet) is the product of the nonzero eigenvalues.
            let ev = SymmetricEigen::new(a.clone()).eigenvalues;
            let mut sorted: Vec<f64> = ev.iter().copied().collect();
            sorted.sort_by(|x, y| y.partial_cmp(x).unwrap());
            let prod: f64 = sorted[..rank].iter().product();
            prop_assert!((ap.log_pdet(None).exp() - prod).abs() <= 1e-8 * prod);
        }

        #[test]
        fn rank1_update_matches_recompute(dim in 2usize..=6, seed: u64, lam_frac in -0.8f64..2.0) {
            use rand::{Rng, SeedableRng};
            let rank = 1 + (seed as usize) % dim;
            let (a, basis) = random_psd(dim, rank, seed);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5555);
            let c = DVector::from_fn(rank, |_, _| rng.random_range(-1.0..1.0));
            let u = &basis * c;
            let ap = PsdMatrix::new(a.clone()).unwrap();
            let p = pinv(&ap, None);
            // Keep lambda above -1/(u' A+ u) so the range is preserved.
            let lam = if lam_frac < 0.0 { lam_frac / p.quad_form(&u) } else { lam_frac };
            let (up, factor) = pinv_rank1_update(&p, &u, lam).unwrap();
            let updated = PsdMatrix::new(&a + lam * &u * u.transpose()).unwrap();
            let direct = pinv(&updated, Some(1e-9)).into_matrix();
            prop_assert!(max_abs(&(up.as_matrix() - &direct)) <= 1e-8 * max_abs(&direct).max(1.0));
            let ratio = (updated.log_pdet(Some(1e-9)) - ap.log_pdet(Some(1e-9))).exp();
            prop_assert!((factor - ratio).abs() <= 1e-8 * ratio.max(1.0));
        }
    }
}
