//! Dense complex linear algebra for small Hilbert spaces.
//!
//! Operators carry a symmetry tag. A matrix tagged [`Symmetry::Hermitian`] was
//! checked against `HERMITIAN_TOL` when it was built, and every derived
//! Hermitian matrix is re-symmetrized so the tag stays exact.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Largest supported Hilbert-space dimension for the dense path.
pub const MAX_DIM: usize = 64;
/// Max-entry tolerance on `M - M^dagger` for the Hermitian tag.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Allowed deviation of a normalized state's norm from one.
pub const NORM_TOL: f64 = 1e-10;
/// Allowed imaginary part of an expectation value of a Hermitian operator.
pub const IMAG_TOL: f64 = 1e-10;
/// Window below zero inside which a variance is clamped to zero.
pub const VARIANCE_CLAMP: f64 = 1e-12;
/// Residual tolerance for eigenpairs returned by [`hermitian_eigh`].
pub const EIGEN_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Symmetry {
    Hermitian,
    General,
}

/// Square complex matrix with a validated symmetry tag.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    data: DMatrix<C64>,
    symmetry: Symmetry,
}

fn check_shape(data: &DMatrix<C64>) -> Result<()> {
    if data.nrows() != data.ncols() {
        return Err(Error::NotSquare {
            rows: data.nrows(),
            cols: data.ncols(),
        });
    }
    if data.nrows() == 0 || data.nrows() > MAX_DIM {
        return Err(Error::DimensionOutOfRange(data.nrows()));
    }
    if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("matrix"));
    }
    Ok(())
}

/// Max-entry deviation `max |M - M^dagger|`.
pub fn hermitian_deviation(data: &DMatrix<C64>) -> f64 {
    let n = data.nrows();
    let mut dev = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            dev = dev.max((data[(i, j)] - data[(j, i)].conj()).norm());
        }
    }
    dev
}

fn symmetrize(data: DMatrix<C64>) -> DMatrix<C64> {
    let adj = data.adjoint();
    (data + adj) * C64::new(0.5, 0.0)
}

impl ComplexMatrix {
    pub fn general(data: DMatrix<C64>) -> Result<Self> {
        check_shape(&data)?;
        Ok(Self {
            data,
            symmetry: Symmetry::General,
        })
    }

    pub fn hermitian(data: DMatrix<C64>) -> Result<Self> {
        check_shape(&data)?;
        let deviation = hermitian_deviation(&data);
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(Self {
            data: symmetrize(data),
            symmetry: Symmetry::Hermitian,
        })
    }

    /// Hermitian part of a matrix that is Hermitian by construction
    /// (spectral calculus, sums of Hermitian operators).
    pub(crate) fn hermitian_by_construction(data: DMatrix<C64>) -> Self {
        Self {
            data: symmetrize(data),
            symmetry: Symmetry::Hermitian,
        }
    }

    /// Builds a matrix from row-major rows with the requested tag.
    pub fn from_rows(rows: &[Vec<C64>], symmetry: Symmetry) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::NotSquare {
                rows: n,
                cols: bad.len(),
            });
        }
        let data = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        match symmetry {
            Symmetry::Hermitian => Self::hermitian(data),
            Symmetry::General => Self::general(data),
        }
    }

    pub fn from_real_rows(rows: &[Vec<f64>], symmetry: Symmetry) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows, symmetry)
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::hermitian(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::hermitian(DMatrix::zeros(dim, dim))
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let n = values.len();
        Self::hermitian(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(values[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }))
    }

    pub fn pauli_x() -> Self {
        Self::from_real_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]], Symmetry::Hermitian)
            .expect("pauli x")
    }

    pub fn pauli_y() -> Self {
        let i = C64::i();
        Self::from_rows(
            &[vec![C64::new(0.0, 0.0), -i], vec![i, C64::new(0.0, 0.0)]],
            Symmetry::Hermitian,
        )
        .expect("pauli y")
    }

    pub fn pauli_z() -> Self {
        Self::diagonal(&[1.0, -1.0]).expect("pauli z")
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn is_hermitian(&self) -> bool {
        self.symmetry == Symmetry::Hermitian
    }

    pub fn as_matrix(&self) -> &DMatrix<C64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Induced 1-norm (max column sum of moduli).
    pub fn one_norm(&self) -> f64 {
        one_norm(&self.data)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            data: &self.data * C64::new(factor, 0.0),
            symmetry: self.symmetry,
        }
    }

    /// Multiplies by a complex scalar; the result is tagged general.
    pub fn scaled_complex(&self, factor: C64) -> Self {
        Self {
            data: &self.data * factor,
            symmetry: Symmetry::General,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.dim())?;
        let data = &self.data + &other.data;
        Ok(self.combine_tag(other, data))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.dim())?;
        let data = &self.data - &other.data;
        Ok(self.combine_tag(other, data))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.dim())?;
        Ok(Self {
            data: &self.data * &other.data,
            symmetry: Symmetry::General,
        })
    }

    /// `A^2` for a Hermitian `A` stays Hermitian.
    pub fn square(&self) -> Self {
        let data = &self.data * &self.data;
        match self.symmetry {
            Symmetry::Hermitian => Self::hermitian_by_construction(data),
            Symmetry::General => Self {
                data,
                symmetry: Symmetry::General,
            },
        }
    }

    pub fn apply(&self, psi: &StateVector) -> Result<DVector<C64>> {
        self.check_dim(psi.dim())?;
        Ok(&self.data * psi.amplitudes())
    }

    pub(crate) fn apply_raw(&self, v: &DVector<C64>) -> DVector<C64> {
        &self.data * v
    }

    fn combine_tag(&self, other: &Self, data: DMatrix<C64>) -> Self {
        if self.is_hermitian() && other.is_hermitian() {
            Self::hermitian_by_construction(data)
        } else {
            Self {
                data,
                symmetry: Symmetry::General,
            }
        }
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if self.dim() != found {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found,
            });
        }
        Ok(())
    }
}

fn one_norm(m: &DMatrix<C64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `[A, B] = AB - BA`.
pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    a.check_dim(b.dim())?;
    ComplexMatrix::general(&a.data * &b.data - &b.data * &a.data)
}

/// Max-entry norm of `[A, B]`.
pub fn commutator_norm(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    Ok(commutator(a, b)?.max_abs())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormClass {
    Normalized,
    Unnormalized,
}

/// A pure state, either normalized or an unnormalized nonzero vector.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    data: DVector<C64>,
    norm_class: NormClass,
}

fn check_vector(data: &DVector<C64>) -> Result<f64> {
    if data.is_empty() || data.len() > MAX_DIM {
        return Err(Error::DimensionOutOfRange(data.len()));
    }
    if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("state vector"));
    }
    Ok(data.norm())
}

impl StateVector {
    pub fn normalized(data: DVector<C64>) -> Result<Self> {
        let norm = check_vector(&data)?;
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!(
                "norm {norm} differs from 1 by more than {NORM_TOL:e}"
            )));
        }
        Ok(Self {
            data,
            norm_class: NormClass::Normalized,
        })
    }

    pub fn unnormalized(data: DVector<C64>) -> Result<Self> {
        let norm = check_vector(&data)?;
        if norm <= 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("zero vector is not a physical state".into()));
        }
        Ok(Self {
            data,
            norm_class: NormClass::Unnormalized,
        })
    }

    /// Rescales an arbitrary nonzero vector to unit norm.
    pub fn normalize(data: DVector<C64>) -> Result<Self> {
        let norm = check_vector(&data)?;
        if norm <= 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("zero vector is not a physical state".into()));
        }
        Ok(Self {
            data: data / C64::new(norm, 0.0),
            norm_class: NormClass::Normalized,
        })
    }

    pub fn from_slice(amplitudes: &[C64]) -> Result<Self> {
        Self::normalize(DVector::from_column_slice(amplitudes))
    }

    /// Computational basis state `|index>`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: index + 1,
            });
        }
        let mut v = DVector::zeros(dim);
        v[index] = C64::new(1.0, 0.0);
        Self::normalized(v)
    }

    /// `(|0> + |1>)/sqrt(2)`.
    pub fn plus() -> Self {
        let a = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self::normalize(DVector::from_vec(vec![a, a])).expect("plus state")
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn norm_class(&self) -> NormClass {
        self.norm_class
    }

    pub fn is_normalized(&self) -> bool {
        self.norm_class == NormClass::Normalized
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.data
    }

    pub fn into_amplitudes(self) -> DVector<C64> {
        self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.norm_squared()
    }

    pub fn to_normalized(&self) -> Self {
        match self.norm_class {
            NormClass::Normalized => self.clone(),
            NormClass::Unnormalized => {
                Self::normalize(self.data.clone()).expect("unnormalized states are nonzero")
            }
        }
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(self.data.dotc(&other.data))
    }

    /// Fidelity `|<a|b>|^2 / (|a|^2 |b|^2)` between the rays of two states.
    pub fn fidelity(&self, other: &Self) -> Result<f64> {
        let overlap = self.inner(other)?;
        Ok(overlap.norm_sqr() / (self.norm_sqr() * other.norm_sqr()))
    }

    pub fn scaled(&self, factor: C64) -> Result<Self> {
        Self::unnormalized(&self.data * factor)
    }
}

fn require_hermitian(op: &ComplexMatrix) -> Result<()> {
    if !op.is_hermitian() {
        return Err(Error::HermitianRequired);
    }
    Ok(())
}

fn require_normalized(psi: &StateVector) -> Result<()> {
    if !psi.is_normalized() {
        return Err(Error::InvalidState("a normalized state is required".into()));
    }
    Ok(())
}

fn real_part_checked(value: C64, context: &'static str) -> Result<f64> {
    if value.im.abs() > IMAG_TOL * value.re.abs().max(1.0) {
        return Err(Error::ImaginaryResidue {
            context,
            residue: value.im.abs(),
        });
    }
    Ok(value.re)
}

/// `<psi|op|psi>` for a Hermitian operator and normalized state.
pub fn expectation(op: &ComplexMatrix, psi: &StateVector) -> Result<f64> {
    require_hermitian(op)?;
    require_normalized(psi)?;
    let op_psi = op.apply(psi)?;
    real_part_checked(psi.data.dotc(&op_psi), "expectation")
}

/// `<op^2> - <op>^2`, evaluated as `|(op - <op>) psi|^2`.
pub fn variance(op: &ComplexMatrix, psi: &StateVector) -> Result<f64> {
    let mean = expectation(op, psi)?;
    let centered = op.apply(psi)? - &psi.data * C64::new(mean, 0.0);
    let var = centered.norm_squared();
    Ok(if var < 0.0 && var > -VARIANCE_CLAMP { 0.0 } else { var })
}

/// Symmetrized covariance `Re<psi|A B|psi> - <A><B>`.
pub fn covariance(a: &ComplexMatrix, b: &ComplexMatrix, psi: &StateVector) -> Result<f64> {
    let mean_a = expectation(a, psi)?;
    let mean_b = expectation(b, psi)?;
    let da = a.apply(psi)? - &psi.data * C64::new(mean_a, 0.0);
    let db = b.apply(psi)? - &psi.data * C64::new(mean_b, 0.0);
    Ok(da.dotc(&db).re)
}

/// Eigenpairs of a Hermitian operator, eigenvalues ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, in the order of `values`.
    pub vectors: DMatrix<C64>,
}

impl HermitianEigen {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, index: usize) -> DVector<C64> {
        self.vectors.column(index).into_owned()
    }

    /// Coefficients of `psi` in the eigenbasis, `c_i = <v_i|psi>`.
    pub fn coefficients(&self, psi: &DVector<C64>) -> DVector<C64> {
        self.vectors.adjoint() * psi
    }

    /// Maps eigenbasis coefficients back to the computational basis.
    pub fn synthesize(&self, coefficients: &DVector<C64>) -> DVector<C64> {
        &self.vectors * coefficients
    }

    /// Spectral calculus: `sum_i f(lambda_i) |v_i><v_i|`.
    pub fn apply_function(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let mapped: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        self.from_spectrum(&mapped)
    }

    /// `sum_i values[i] |v_i><v_i|` for caller-supplied real eigenvalues.
    pub fn from_spectrum(&self, values: &[f64]) -> ComplexMatrix {
        let n = self.dim();
        let mut scaled = self.vectors.clone();
        for (j, &value) in values.iter().enumerate().take(n) {
            scaled.column_mut(j).scale_mut(value);
        }
        ComplexMatrix::hermitian_by_construction(scaled * self.vectors.adjoint())
    }
}

/// Hermitian eigendecomposition with residual and orthonormality checks.
pub fn hermitian_eigh(op: &ComplexMatrix) -> Result<HermitianEigen> {
    require_hermitian(op)?;
    let n = op.dim();
    let eig = op.data.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let norm = col.norm();
        vectors.set_column(dst, &(col / C64::new(norm, 0.0)));
    }

    let scale = op.max_abs().max(1.0);
    for (j, &value) in values.iter().enumerate() {
        let v = vectors.column(j);
        let residual = (&op.data * v - v * C64::new(value, 0.0)).norm();
        if residual > EIGEN_TOL * scale {
            return Err(Error::Eigen(format!("eigenpair {j} residual {residual:e}")));
        }
    }
    let gram = vectors.adjoint() * &vectors;
    let ortho = (gram - DMatrix::<C64>::identity(n, n))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if ortho > EIGEN_TOL {
        return Err(Error::Eigen(format!("eigenvectors not orthonormal ({ortho:e})")));
    }
    Ok(HermitianEigen { values, vectors })
}

const THETA_3: f64 = 1.495_585_217_958_292e-2;
const THETA_5: f64 = 2.539_398_330_063_230e-1;
const THETA_7: f64 = 9.504_178_996_162_932e-1;
const THETA_9: f64 = 2.097_847_961_257_068;
const THETA_13: f64 = 5.371_920_351_148_152;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1_512.0,
    56.0,
    1.0,
];
const PADE_9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3_960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Numerator/denominator halves `(U, V)` of the diagonal Padé approximant of
/// low degree, using powers of `a` up to `a^(m-1)`.
fn pade_low(a: &DMatrix<C64>, coeffs: &[f64]) -> (DMatrix<C64>, DMatrix<C64>) {
    let n = a.nrows();
    let ident = DMatrix::<C64>::identity(n, n);
    let a2 = a * a;
    let mut power = ident.clone();
    let mut odd = &ident * real(coeffs[1]);
    let mut even = &ident * real(coeffs[0]);
    for k in 1..coeffs.len() / 2 {
        power = &power * &a2;
        odd += &power * real(coeffs[2 * k + 1]);
        even += &power * real(coeffs[2 * k]);
    }
    (a * odd, even)
}

fn pade_13(a: &DMatrix<C64>) -> (DMatrix<C64>, DMatrix<C64>) {
    let b = &PADE_13;
    let n = a.nrows();
    let ident = DMatrix::<C64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * real(b[13]) + &a4 * real(b[11]) + &a2 * real(b[9]);
    let u = a
        * (&a6 * inner_u
            + &a6 * real(b[7])
            + &a4 * real(b[5])
            + &a2 * real(b[3])
            + &ident * real(b[1]));
    let inner_v = &a6 * real(b[12]) + &a4 * real(b[10]) + &a2 * real(b[8]);
    let v = &a6 * inner_v + &a6 * real(b[6]) + &a4 * real(b[4]) + &a2 * real(b[2]) + ident * real(b[0]);
    (u, v)
}

/// Matrix exponential by scaling and squaring with a diagonal Padé
/// approximant, degree chosen from the 1-norm as in Higham (2005).
pub fn matrix_exp(op: &ComplexMatrix) -> Result<ComplexMatrix> {
    let a = &op.data;
    let norm = one_norm(a);
    let (u, v, squarings) = if norm <= THETA_3 {
        let (u, v) = pade_low(a, &PADE_3);
        (u, v, 0)
    } else if norm <= THETA_5 {
        let (u, v) = pade_low(a, &PADE_5);
        (u, v, 0)
    } else if norm <= THETA_7 {
        let (u, v) = pade_low(a, &PADE_7);
        (u, v, 0)
    } else if norm <= THETA_9 {
        let (u, v) = pade_low(a, &PADE_9);
        (u, v, 0)
    } else {
        let s = (norm / THETA_13).log2().ceil().max(0.0) as i32;
        let scaled = a * real(2f64.powi(-s));
        let (u, v) = pade_13(&scaled);
        (u, v, s)
    };
    let numer = &v + &u;
    let denom = v - u;
    let mut result = denom.lu().solve(&numer).ok_or(Error::ExpOverflow)?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    if result.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::ExpOverflow);
    }
    ComplexMatrix::general(result)
}
