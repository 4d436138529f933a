//! Polynomial chaos expansions over Gaussian germs.

mod index;
mod io;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::exec::{map_range, Execution};
use crate::linalg::psd_repair;
use crate::rng::rng_from_seed;

pub use index::{total_degree_index_set, MultiIndex, MultiIndexSet};

/// Probabilists' Hermite polynomial `He_n(x)`.
pub fn hermite_1d(n: u32, x: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, x);
    match n {
        0 => h0,
        1 => h1,
        _ => {
            for k in 1..n {
                let h2 = x * h1 - k as f64 * h0;
                h0 = h1;
                h1 = h2;
            }
            h1
        }
    }
}

fn hermite_table(max: usize, x: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if max >= 1 {
        out[1] = x;
    }
    for k in 1..max {
        out[k + 1] = x * out[k] - k as f64 * out[k - 1];
    }
}

fn power_table(max: usize, x: f64, out: &mut [f64]) {
    out[0] = 1.0;
    for k in 1..=max {
        out[k] = out[k - 1] * x;
    }
}

/// Multivariate Hermite polynomial `He_α(ξ) = ∏ He_{α_i}(ξ_i)`.
pub fn hermite_eval(index: &MultiIndex, point: &[f64]) -> Result<f64> {
    if index.dim() != point.len() {
        return Err(Error::dim("germ point", index.dim(), point.len()));
    }
    Ok(index
        .0
        .iter()
        .zip(point)
        .map(|(&a, &x)| hermite_1d(a, x))
        .product())
}

const ROW_CHUNK: usize = 256;

/// Evaluate the tensor-product polynomials of `set` at each row of `points`.
fn product_design(
    set: &MultiIndexSet,
    points: &DMatrix<f64>,
    table: fn(usize, f64, &mut [f64]),
) -> Result<DMatrix<f64>> {
    if points.ncols() != set.germ_dim() {
        return Err(Error::dim(
            "evaluation point",
            set.germ_dim(),
            points.ncols(),
        ));
    }
    let n = points.nrows();
    let p = set.len();
    let d = set.germ_dim();
    let w = set.max_order() as usize + 1;
    let chunks = n.div_ceil(ROW_CHUNK);
    let blocks = map_range(Execution::default(), chunks, |c| {
        let lo = c * ROW_CHUNK;
        let hi = (lo + ROW_CHUNK).min(n);
        let mut tab = vec![0.0; d * w];
        let mut block = vec![0.0; (hi - lo) * p];
        for (r, i) in (lo..hi).enumerate() {
            for j in 0..d {
                table(w - 1, points[(i, j)], &mut tab[j * w..(j + 1) * w]);
            }
            for k in 0..p {
                block[r * p + k] = set
                    .sparse(k)
                    .iter()
                    .map(|&(j, a)| tab[j * w + a as usize])
                    .product();
            }
        }
        block
    });
    let mut out = DMatrix::zeros(n, p);
    for (c, block) in blocks.into_iter().enumerate() {
        let lo = c * ROW_CHUNK;
        for (idx, v) in block.into_iter().enumerate() {
            out[(lo + idx / p, idx % p)] = v;
        }
    }
    Ok(out)
}

/// Hermite basis evaluated at each germ sample (rows).
pub fn hermite_design(set: &MultiIndexSet, germ: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    product_design(set, germ, hermite_table)
}

/// Monomials of `set` evaluated at each state sample (rows).
pub fn monomial_design(set: &MultiIndexSet, states: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    product_design(set, states, power_table)
}

/// Polynomial basis used by an expansion.
#[derive(Clone, Debug)]
pub enum BasisKind {
    /// Probabilists' Hermite polynomials of the germ.
    Hermite,
    /// Monomials of the anchor state, orthonormalized on samples:
    /// `Φ(ξ) = m(ζ(ξ)) · transform` with `ζ` the anchor expansion and `m` the kept monomials.
    MgsOrthonormal {
        anchor: Arc<PCExpansion>,
        transform: DMatrix<f64>,
    },
    /// Monomials of the anchor state `ζ(ξ)`.
    NmapMonomial { anchor: Arc<PCExpansion> },
}

impl BasisKind {
    pub fn name(&self) -> &'static str {
        match self {
            BasisKind::Hermite => "hermite",
            BasisKind::MgsOrthonormal { .. } => "mgs",
            BasisKind::NmapMonomial { .. } => "nmap",
        }
    }

    pub fn anchor(&self) -> Option<&Arc<PCExpansion>> {
        match self {
            BasisKind::Hermite => None,
            BasisKind::MgsOrthonormal { anchor, .. } | BasisKind::NmapMonomial { anchor } => {
                Some(anchor)
            }
        }
    }

    /// Germ dimension of the basis given the index set it is paired with.
    pub fn germ_dim(&self, set: &MultiIndexSet) -> usize {
        match self.anchor() {
            None => set.germ_dim(),
            Some(a) => a.germ_dim(),
        }
    }

    /// Evaluate all basis functions at each germ sample.
    pub fn design(&self, set: &MultiIndexSet, germ: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            BasisKind::Hermite => hermite_design(set, germ),
            BasisKind::NmapMonomial { anchor } => {
                let zeta = anchor.eval_many(germ)?;
                monomial_design(set, &zeta)
            }
            BasisKind::MgsOrthonormal { anchor, transform } => {
                let zeta = anchor.eval_many(germ)?;
                Ok(monomial_design(set, &zeta)? * transform)
            }
        }
    }

    fn same_as(&self, other: &BasisKind) -> bool {
        match (self, other) {
            (BasisKind::Hermite, BasisKind::Hermite) => true,
            (
                BasisKind::MgsOrthonormal {
                    anchor: a,
                    transform: ta,
                },
                BasisKind::MgsOrthonormal {
                    anchor: b,
                    transform: tb,
                },
            ) => (Arc::ptr_eq(a, b) || a.same_expansion(b)) && ta == tb,
            (BasisKind::NmapMonomial { anchor: a }, BasisKind::NmapMonomial { anchor: b }) => {
                Arc::ptr_eq(a, b) || a.same_expansion(b)
            }
            _ => false,
        }
    }
}

/// A random vector `x(ξ) = Σ_α x_α Φ_α(ξ)`.
#[derive(Clone, Debug)]
pub struct PCExpansion {
    coeffs: DMatrix<f64>,
    basis: BasisKind,
    index_set: MultiIndexSet,
}

impl PCExpansion {
    pub fn new(coeffs: DMatrix<f64>, basis: BasisKind, index_set: MultiIndexSet) -> Result<Self> {
        if coeffs.ncols() != index_set.len() {
            return Err(Error::dim(
                "coefficient columns",
                index_set.len(),
                coeffs.ncols(),
            ));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite PCE coefficient".into()));
        }
        match &basis {
            BasisKind::Hermite => {}
            BasisKind::NmapMonomial { anchor } => {
                if index_set.germ_dim() != anchor.state_dim() {
                    return Err(Error::dim(
                        "monomial variables",
                        anchor.state_dim(),
                        index_set.germ_dim(),
                    ));
                }
            }
            BasisKind::MgsOrthonormal { anchor, transform } => {
                if index_set.germ_dim() != anchor.state_dim() {
                    return Err(Error::dim(
                        "monomial variables",
                        anchor.state_dim(),
                        index_set.germ_dim(),
                    ));
                }
                if transform.nrows() != index_set.len() || transform.ncols() != index_set.len() {
                    return Err(Error::dim(
                        "MGS transform",
                        index_set.len(),
                        transform.nrows(),
                    ));
                }
            }
        }
        Ok(Self {
            coeffs,
            basis,
            index_set,
        })
    }

    pub fn hermite(coeffs: DMatrix<f64>, index_set: MultiIndexSet) -> Result<Self> {
        Self::new(coeffs, BasisKind::Hermite, index_set)
    }

    /// Deterministic vector on a `germ_dim`-dimensional Hermite germ.
    pub fn constant(c: &DVector<f64>, germ_dim: usize) -> Result<Self> {
        let set = MultiIndexSet::total_degree(germ_dim, 0)?;
        Self::hermite(DMatrix::from_column_slice(c.len(), 1, c.as_slice()), set)
    }

    /// Order-1 Hermite expansion of a Gaussian, using germ block
    /// `offset..offset+dim` of a `total_dim` germ.
    pub fn from_gaussian(g: &GaussianDensity, offset: usize, total_dim: usize) -> Result<Self> {
        let d = g.dim();
        let l = crate::linalg::sqrt_factor(&g.cov)?;
        let set = MultiIndexSet::total_degree(d, 1)?.embed(offset, total_dim)?;
        let mut coeffs = DMatrix::zeros(d, d + 1);
        coeffs.set_column(0, &g.mean);
        coeffs.columns_mut(1, d).copy_from(&l);
        Self::hermite(coeffs, set)
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn basis(&self) -> &BasisKind {
        &self.basis
    }

    pub fn index_set(&self) -> &MultiIndexSet {
        &self.index_set
    }

    pub fn state_dim(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn germ_dim(&self) -> usize {
        self.basis.germ_dim(&self.index_set)
    }

    pub fn len(&self) -> usize {
        self.index_set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_set.is_empty()
    }

    pub fn is_hermite(&self) -> bool {
        matches!(self.basis, BasisKind::Hermite)
    }

    fn same_expansion(&self, other: &PCExpansion) -> bool {
        self.coeffs == other.coeffs
            && self.index_set == other.index_set
            && self.basis.same_as(&other.basis)
    }

    /// Basis functions evaluated at each germ sample (rows).
    pub fn design(&self, germ: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if germ.ncols() != self.germ_dim() {
            return Err(Error::dim("germ sample", self.germ_dim(), germ.ncols()));
        }
        self.basis.design(&self.index_set, germ)
    }

    /// Evaluate at many germ samples; returns one state per row.
    pub fn eval_many(&self, germ: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.design(germ)? * self.coeffs.transpose())
    }

    pub fn eval(&self, germ_sample: &[f64]) -> Result<DVector<f64>> {
        let g = DMatrix::from_row_slice(1, germ_sample.len(), germ_sample);
        let x = self.eval_many(&g)?;
        Ok(x.row(0).transpose())
    }

    pub fn mean(&self) -> Result<DVector<f64>> {
        match self.basis {
            BasisKind::NmapMonomial { .. } => Err(Error::UnsupportedBasis("pce_mean")),
            _ => Ok(self.coeffs.column(0).into_owned()),
        }
    }

    /// Cross-covariance `E[(x - E x)(y - E y)ᵀ]` from coefficients.
    pub fn cross_cov(&self, other: &PCExpansion) -> Result<DMatrix<f64>> {
        match (&self.basis, &other.basis) {
            (BasisKind::Hermite, BasisKind::Hermite) => {
                if self.germ_dim() != other.germ_dim() {
                    return Err(Error::BasisMismatch(format!(
                        "germ dimensions {} and {}",
                        self.germ_dim(),
                        other.germ_dim()
                    )));
                }
                let mut c = DMatrix::zeros(self.state_dim(), other.state_dim());
                for (ka, idx) in self.index_set.indices().iter().enumerate() {
                    if idx.is_zero() {
                        continue;
                    }
                    if let Some(kb) = other.index_set.position(idx) {
                        let w = idx.factorial();
                        c += self.coeffs.column(ka) * other.coeffs.column(kb).transpose() * w;
                    }
                }
                Ok(c)
            }
            (BasisKind::MgsOrthonormal { .. }, BasisKind::MgsOrthonormal { .. })
                if self.basis.same_as(&other.basis) && self.index_set == other.index_set =>
            {
                let p = self.len();
                let a = self.coeffs.columns(1, p - 1);
                let b = other.coeffs.columns(1, p - 1);
                Ok(a * b.transpose())
            }
            (BasisKind::NmapMonomial { .. }, _) | (_, BasisKind::NmapMonomial { .. }) => {
                Err(Error::UnsupportedBasis("pce_cov"))
            }
            _ => Err(Error::BasisMismatch(format!(
                "{} vs {}",
                self.basis.name(),
                other.basis.name()
            ))),
        }
    }

    pub fn cov(&self) -> Result<DMatrix<f64>> {
        self.cross_cov(self)
    }

    /// Variance of each component.
    pub fn variance(&self) -> Result<DVector<f64>> {
        Ok(self.cov()?.diagonal())
    }

    /// Move a Hermite expansion onto germ block `offset..` of a `total_dim` germ.
    pub fn embed(&self, offset: usize, total_dim: usize) -> Result<Self> {
        if !self.is_hermite() {
            return Err(Error::UnsupportedBasis("germ embedding"));
        }
        let set = self.index_set.embed(offset, total_dim)?;
        Self::hermite(self.coeffs.clone(), set)
    }

    /// `Σ_i M_i x_i + c` for Hermite expansions on a shared germ, aligned on the
    /// union of their index sets.
    pub fn affine_combination(
        terms: &[(&DMatrix<f64>, &PCExpansion)],
        constant: Option<&DVector<f64>>,
    ) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty affine combination".into()))?;
        let out_dim = first.0.nrows();
        let germ_dim = first.1.germ_dim();
        let mut set = first.1.index_set.clone();
        for (m, x) in terms {
            if !x.is_hermite() {
                return Err(Error::UnsupportedBasis("affine combination"));
            }
            if x.germ_dim() != germ_dim {
                return Err(Error::dim("germ dimension", germ_dim, x.germ_dim()));
            }
            if m.nrows() != out_dim || m.ncols() != x.state_dim() {
                return Err(Error::dim("combination matrix", x.state_dim(), m.ncols()));
            }
            if set != x.index_set {
                set = set.union(&x.index_set)?;
            }
        }
        let mut coeffs = DMatrix::zeros(out_dim, set.len());
        for (m, x) in terms {
            let mx = *m * &x.coeffs;
            for (k, idx) in x.index_set.indices().iter().enumerate() {
                let pos = set.position(idx).expect("union contains index");
                let mut col = coeffs.column_mut(pos);
                col += mx.column(k);
            }
        }
        if let Some(c) = constant {
            if c.len() != out_dim {
                return Err(Error::dim("constant term", out_dim, c.len()));
            }
            let mut col = coeffs.column_mut(0);
            col += c;
        }
        Self::hermite(coeffs, set)
    }

    /// `M x + c`, valid for every basis since the basis functions are untouched.
    pub fn transform(&self, m: &DMatrix<f64>, c: Option<&DVector<f64>>) -> Result<Self> {
        if m.ncols() != self.state_dim() {
            return Err(Error::dim("transform columns", self.state_dim(), m.ncols()));
        }
        let mut coeffs = m * &self.coeffs;
        if let Some(c) = c {
            let mut col = coeffs.column_mut(0);
            col += c;
        }
        Self::new(coeffs, self.basis.clone(), self.index_set.clone())
    }

    /// Drop all columns whose coefficients are exactly zero (keeping the zero index).
    pub fn compress(&self) -> Result<Self> {
        if !self.is_hermite() {
            return Ok(self.clone());
        }
        let keep: Vec<usize> = (0..self.len())
            .filter(|&k| k == 0 || self.coeffs.column(k).iter().any(|&v| v != 0.0))
            .collect();
        let set = self.index_set.subset(&keep)?;
        let coeffs = self.coeffs.select_columns(keep.iter());
        Self::hermite(coeffs, set)
    }

    /// Serialize to the self-describing text format.
    pub fn to_text(&self) -> String {
        io::write_expansion(self)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        io::read_expansion(text)
    }
}

pub fn pce_eval(exp: &PCExpansion, germ_sample: &[f64]) -> Result<DVector<f64>> {
    exp.eval(germ_sample)
}

pub fn pce_mean(exp: &PCExpansion) -> Result<DVector<f64>> {
    exp.mean()
}

pub fn pce_cov(a: &PCExpansion, b: &PCExpansion) -> Result<DMatrix<f64>> {
    a.cross_cov(b)
}

/// `n` i.i.d. standard normal germ samples, one per row.
pub fn sample_germ(n: usize, germ_dim: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    let mut out = DMatrix::zeros(n, germ_dim);
    for i in 0..n {
        for j in 0..germ_dim {
            out[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    out
}

/// Germ samples whose empirical mean is exactly zero and whose empirical
/// second moment `(1/n) Σ ξξᵀ` is exactly the identity.
pub fn sample_germ_balanced(n: usize, germ_dim: usize, seed: u64) -> DMatrix<f64> {
    let mut g = sample_germ(n, germ_dim, seed);
    if n <= germ_dim + 1 || germ_dim == 0 {
        return g;
    }
    let mean = crate::linalg::column_mean(&g);
    for mut row in g.row_iter_mut() {
        row -= mean.transpose();
    }
    let second = g.transpose() * &g / n as f64;
    if let Some(ch) = second.cholesky() {
        let l_inv = ch
            .l()
            .solve_lower_triangular(&DMatrix::identity(germ_dim, germ_dim))
            .expect("nonsingular Cholesky factor");
        g *= l_inv.transpose();
    }
    g
}

/// Mean vector and covariance matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianDensity {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianDensity {
    /// Build a density, symmetrizing and repairing the covariance.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::dim("covariance", mean.len(), cov.nrows()));
        }
        let (cov, _) = psd_repair(&cov)?;
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: DVector::zeros(dim),
            cov: DMatrix::identity(dim, dim),
        }
    }

    pub fn diagonal(mean: DVector<f64>, var: &DVector<f64>) -> Result<Self> {
        Self::new(mean, DMatrix::from_diagonal(var))
    }
}

/// Moment-matched Gaussian of an expansion.
pub fn gaussianize(exp: &PCExpansion) -> Result<GaussianDensity> {
    GaussianDensity::new(exp.mean()?, exp.cov()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(coeffs: &[f64]) -> PCExpansion {
        let set = total_degree_index_set(1, coeffs.len() as u32 - 1).unwrap();
        PCExpansion::hermite(DMatrix::from_row_slice(1, coeffs.len(), coeffs), set).unwrap()
    }

    #[test]
    fn balanced_germ_has_exact_moments() {
        let g = sample_germ_balanced(50, 3, 9);
        let m = crate::linalg::column_mean(&g);
        assert!(m.norm() < 1e-12);
        let c = g.transpose() * &g / 50.0;
        assert!((c - DMatrix::<f64>::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn hermite_examples() {
        assert_eq!(
            hermite_eval(&MultiIndex(vec![0, 0, 0]), &[0.3, -2.0, 7.0]).unwrap(),
            1.0
        );
        assert_eq!(hermite_eval(&MultiIndex(vec![2]), &[2.0]).unwrap(), 3.0);
        assert_eq!(
            hermite_eval(&MultiIndex(vec![1, 2]), &[1.0, 2.0]).unwrap(),
            3.0
        );
        assert!(hermite_eval(&MultiIndex(vec![1, 2]), &[1.0]).is_err());
        // He_4(x) = x^4 - 6x^2 + 3
        let x: f64 = 1.7;
        assert!((hermite_1d(4, x) - (x.powi(4) - 6.0 * x * x + 3.0)).abs() < 1e-12);
    }

    #[test]
    fn eval_mean_cov_examples() {
        let e = one_d(&[2.0, 3.0, 1.0]);
        assert_eq!(e.eval(&[1.0]).unwrap()[0], 5.0);
        assert_eq!(e.mean().unwrap()[0], 2.0);
        assert_eq!(e.cov().unwrap()[(0, 0)], 11.0);
        let g = gaussianize(&e).unwrap();
        assert_eq!(g.mean[0], 2.0);
        assert_eq!(g.cov[(0, 0)], 11.0);
    }

    #[test]
    fn constant_expansion() {
        let c = DVector::from_vec(vec![1.5, -2.0]);
        let e = PCExpansion::constant(&c, 3).unwrap();
        assert_eq!(e.eval(&[0.1, 0.2, 0.3]).unwrap(), c);
        assert_eq!(e.mean().unwrap(), c);
        assert_eq!(e.cov().unwrap(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn cross_cov_is_transpose_symmetric() {
        let set = total_degree_index_set(2, 2).unwrap();
        let a = PCExpansion::hermite(
            DMatrix::from_fn(2, 6, |i, j| (i + 2 * j) as f64 * 0.3 - 1.0),
            set.clone(),
        )
        .unwrap();
        let b = PCExpansion::hermite(DMatrix::from_fn(3, 6, |i, j| ((i * j) as f64).sin()), set)
            .unwrap();
        let ab = pce_cov(&a, &b).unwrap();
        let ba = pce_cov(&b, &a).unwrap();
        assert!((ab - ba.transpose()).norm() < 1e-14);
    }

    #[test]
    fn sample_germ_determinism_and_moments() {
        assert_eq!(sample_germ(0, 3, 1).nrows(), 0);
        assert_eq!(sample_germ(10, 3, 7), sample_germ(10, 3, 7));
        let s = sample_germ(100_000, 3, 11);
        for j in 0..3 {
            let c = s.column(j);
            let m = c.mean();
            let v = c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (c.len() - 1) as f64;
            assert!(m.abs() < 0.02 && (v - 1.0).abs() < 0.03);
        }
    }

    #[test]
    fn gaussian_roundtrip_through_pce() {
        let g = GaussianDensity::new(
            DVector::from_vec(vec![1.0, -1.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        )
        .unwrap();
        let e = PCExpansion::from_gaussian(&g, 1, 4).unwrap();
        let back = gaussianize(&e).unwrap();
        assert!((back.mean - &g.mean).norm() < 1e-14);
        assert!((back.cov - &g.cov).norm() < 1e-12);
    }

    #[test]
    fn affine_combination_aligns_blocks() {
        let x = one_d(&[1.0, 2.0]).embed(0, 2).unwrap();
        let y = one_d(&[0.5, 0.0, 1.0]).embed(1, 2).unwrap();
        let m = DMatrix::from_element(1, 1, 2.0);
        let z = PCExpansion::affine_combination(&[(&m, &x), (&m, &y)], None).unwrap();
        for xi in [[0.3, -0.7], [1.1, 2.0]] {
            let want = 2.0 * x.eval(&xi).unwrap()[0] + 2.0 * y.eval(&xi).unwrap()[0];
            assert!((z.eval(&xi).unwrap()[0] - want).abs() < 1e-12);
        }
        // independent blocks add variances
        let v = z.cov().unwrap()[(0, 0)];
        assert!((v - 4.0 * (4.0 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn nmap_mean_is_unsupported() {
        let anchor = Arc::new(one_d(&[0.0, 1.0]));
        let set = total_degree_index_set(1, 2).unwrap();
        let e = PCExpansion::new(
            DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]),
            BasisKind::NmapMonomial { anchor },
            set,
        )
        .unwrap();
        assert!(matches!(e.mean(), Err(Error::UnsupportedBasis(_))));
        // ζ² evaluated at ξ = 3
        assert_eq!(e.eval(&[3.0]).unwrap()[0], 9.0);
    }
}
