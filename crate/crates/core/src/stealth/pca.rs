use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::Point;
use crate::error::{Error, Result};

/// Eigenvalues below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-12;

/// Standardization parameters, the two principal axes, and the projected rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduced2D {
    pub points: Vec<Point>,
    pub axes: [Array1<f64>; 2],
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
    /// Covariance eigenvalues along the two axes.
    pub explained: [f64; 2],
    /// Trace of the standardized covariance.
    pub total_variance: f64,
}

impl Reduced2D {
    pub fn standardize(&self, row: ArrayView1<f64>) -> Array1<f64> {
        (&row - &self.mean) / &self.scale
    }

    pub fn project(&self, row: ArrayView1<f64>) -> Point {
        let z = self.standardize(row);
        [z.dot(&self.axes[0]), z.dot(&self.axes[1])]
    }

    /// Point back in standardized coordinates.
    pub fn reconstruct(&self, p: Point) -> Array1<f64> {
        &self.axes[0] * p[0] + &self.axes[1] * p[1]
    }
}

fn top_two(m: DMatrix<f64>) -> [(f64, Vec<f64>); 2] {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let pick = |k: usize| {
        let j = order[k];
        (eig.eigenvalues[j].max(0.0), eig.eigenvectors.column(j).iter().copied().collect())
    };
    [pick(0), pick(1)]
}

fn fix_sign(v: &mut Array1<f64>) {
    let mut best = 0;
    for (j, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = j;
        }
    }
    if v[best] < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

/// Unit vector orthogonal to `against`, taken from the standard basis.
fn complete_basis(against: &[&Array1<f64>], d: usize) -> Array1<f64> {
    for j in 0..d {
        let mut e = Array1::zeros(d);
        e[j] = 1.0;
        for a in against {
            let c = e.dot(*a);
            e.scaled_add(-c, a);
        }
        let norm = e.dot(&e).sqrt();
        if norm > 0.5 {
            return e / norm;
        }
    }
    unreachable!("d >= 2 leaves room for an orthogonal direction")
}

/// Standardize columns (population std; constant columns keep scale 1) and
/// project onto the top two covariance eigenvectors. The eigenproblem is
/// solved on the `n x n` Gram matrix when there are fewer rows than columns.
pub fn pca_2d(models: ArrayView2<f64>) -> Result<Reduced2D> {
    let (n, d) = models.dim();
    if n < 3 {
        return Err(Error::precondition(format!("PCA needs at least 3 rows, got {n}")));
    }
    if d < 2 {
        return Err(Error::precondition(format!("PCA needs at least 2 columns, got {d}")));
    }
    if models.iter().any(|v| !v.is_finite()) {
        return Err(Error::precondition("PCA input must be finite"));
    }
    let nf = n as f64;
    let mean = models.mean_axis(Axis(0)).expect("n >= 3");
    let scale = Array1::from_iter(models.axis_iter(Axis(1)).zip(mean.iter()).map(|(col, &m)| {
        let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let sd = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / nf).sqrt();
        if lo == hi || sd == 0.0 {
            1.0
        } else {
            sd
        }
    }));
    let z: Array2<f64> = (&models - &mean) / &scale;
    let total_variance = z.iter().map(|v| v * v).sum::<f64>() / nf;

    let pairs = if n < d {
        let gram = z.dot(&z.t()) / nf;
        let top = top_two(DMatrix::from_row_slice(n, n, gram.as_slice().expect("standard layout")));
        top.map(|(lambda, u)| {
            let u = Array1::from(u);
            let v = z.t().dot(&u);
            let norm = v.dot(&v).sqrt();
            let v = if norm > 0.0 { v / norm } else { v };
            (lambda, v)
        })
    } else {
        let cov = z.t().dot(&z) / nf;
        let top = top_two(DMatrix::from_row_slice(d, d, cov.as_slice().expect("standard layout")));
        top.map(|(lambda, v)| (lambda, Array1::from(v)))
    };
    let [(l0, mut v0), (l1, mut v1)] = pairs;
    let floor = RANK_TOL * l0.max(f64::MIN_POSITIVE);
    let (l0, l1) = (if l0 > 0.0 { l0 } else { 0.0 }, if l1 > floor { l1 } else { 0.0 });
    if l0 == 0.0 {
        v0 = complete_basis(&[], d);
    }
    if l1 == 0.0 {
        v1 = complete_basis(&[&v0], d);
    }
    fix_sign(&mut v0);
    fix_sign(&mut v1);
    let points = z.rows().into_iter().map(|r| [r.dot(&v0), r.dot(&v1)]).collect();
    Ok(Reduced2D {
        points,
        axes: [v0, v1],
        mean,
        scale,
        explained: [l0, l1],
        total_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, concatenate};
    use rand::Rng as _;

    fn random(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut r = crate::rng::from_seed(seed);
        Array2::from_shape_simple_fn((n, d), || r.random_range(-1.0..1.0))
    }

    #[test]
    fn needs_three_rows() {
        assert!(pca_2d(random(2, 5, 1).view()).is_err());
        assert!(pca_2d(random(4, 1, 1).view()).is_err());
    }

    #[test]
    fn axes_are_orthonormal_and_sign_fixed() {
        for (n, d) in [(6, 30), (30, 6)] {
            let red = pca_2d(random(n, d, 2).view()).unwrap();
            let [a, b] = &red.axes;
            assert!((a.dot(a) - 1.0).abs() < 1e-10);
            assert!((b.dot(b) - 1.0).abs() < 1e-10);
            assert!(a.dot(b).abs() < 1e-10);
            for ax in [a, b] {
                let big = ax.iter().fold(0.0f64, |m, v| if v.abs() > m.abs() { *v } else { m });
                assert!(big > 0.0);
            }
            assert!(red.explained[0] >= red.explained[1]);
        }
    }

    #[test]
    fn gram_and_covariance_routes_agree() {
        // 7x8 goes through the Gram matrix, the duplicated 14x8 through the covariance
        let x = random(7, 8, 3);
        let wide = pca_2d(x.view()).unwrap();
        let tall = pca_2d(concatenate(Axis(0), &[x.view(), x.view()]).unwrap().view()).unwrap();
        for (p, q) in wide.points.iter().zip(&tall.points) {
            assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_columns_pass_through() {
        let x = array![[1.0, 5.0, 0.0], [2.0, 5.0, 1.0], [4.0, 5.0, 3.0], [3.0, 5.0, 1.0]];
        let red = pca_2d(x.view()).unwrap();
        assert_eq!(red.scale[1], 1.0);
        assert!(red.axes[0][1].abs() < 1e-12);
        let p = red.project(x.row(2));
        assert!((p[0] - red.points[2][0]).abs() < 1e-12);
    }

    #[test]
    fn identical_rows_project_to_origin() {
        let x = Array2::from_elem((4, 3), 0.7);
        let red = pca_2d(x.view()).unwrap();
        assert!(red.points.iter().all(|p| p[0] == 0.0 && p[1] == 0.0));
        assert_eq!(red.explained, [0.0, 0.0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        /// Rank-two signal plus small noise keeps the top eigenvalues apart.
        fn population() -> impl Strategy<Value = Array2<f64>> {
            (4usize..12, 3usize..20, any::<u64>()).prop_map(|(n, d, seed)| {
                let mut r = crate::rng::from_seed(seed);
                let u: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
                let v: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
                Array2::from_shape_fn((n, d), |(i, j)| {
                    let a = 3.0 * ((i as f64) - n as f64 / 2.0);
                    let b = if i % 2 == 0 { 1.0 } else { -1.0 };
                    a * u[j] + b * v[j] + 0.01 * r.random_range(-1.0..1.0)
                })
            })
        }

        proptest! {
            #[test]
            fn row_permutation_permutes_points(x in population(), shuffle in any::<u64>()) {
                use rand::seq::SliceRandom;
                let n = x.nrows();
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut crate::rng::from_seed(shuffle));
                let base = pca_2d(x.view()).unwrap();
                let perm = pca_2d(x.select(Axis(0), &order).view()).unwrap();
                let gap = base.explained[0] - base.explained[1];
                prop_assume!(gap > 1e-6 && base.explained[1] > 1e-6);
                for k in 0..2 {
                    prop_assert!((base.explained[k] - perm.explained[k]).abs() < 1e-8);
                }
                for (slot, &src) in order.iter().enumerate() {
                    let (p, q) = (base.points[src], perm.points[slot]);
                    prop_assert!((p[0] - q[0]).abs() < 1e-7 && (p[1] - q[1]).abs() < 1e-7, "{:?} vs {:?}", p, q);
                }
            }
        }
    }
}
