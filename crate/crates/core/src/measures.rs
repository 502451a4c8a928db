//! Intensity measures on `R^d` and Poisson sampling on boxes.
//!
//! The ambient measures here (exponential `e_lambda` with density
//! `c exp(-<lambda, x>)`, exponential on a subspace, exponential-polynomial
//! `p(x) exp(-<lambda, x>)`, finite mixtures of exponentials) all have
//! infinite total mass, so Poisson sampling is always restricted to a box.
//! Signed exponential-polynomial measures are analytic-only citizens:
//! densities, masses and checker inputs work, simulation refuses them.

use nalgebra::{DMatrix, DVector};
use rand::RngExt;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

use crate::poly::{MultiIndex, Poly};
use crate::rng::stream_rng;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("invalid measure parameter: {0}")]
    InvalidParameter(String),
    #[error("box must satisfy lower < upper coordinatewise")]
    DegenerateBox,
    #[error("signed measures cannot be sampled as Poisson intensities")]
    SignedMeasure,
    #[error("rejection acceptance rate {rate:e} below 1e-3; tighten the box or rescale the polynomial so the exponential envelope is sharper")]
    EnvelopeTooLoose { rate: f64 },
    #[error("subspace basis rows must be orthonormal (Gram residual {0:e})")]
    BasisNotOrthonormal(f64),
    #[error("box mass on a subspace is only supported for lines (k = 1) and axis-aligned subspaces")]
    UnsupportedSubspace,
    #[error("polynomial degree {0} exceeds the cap 6")]
    DegreeTooHigh(u32),
    #[error("polynomial marked non-negative is negative at probe point {at:?} (value {value:e})")]
    NegativeDensity { at: Vec<f64>, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Axis-aligned box with positive volume.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoxRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, MeasureError> {
        if lower.len() != upper.len()
            || lower.is_empty()
            || lower
                .iter()
                .zip(&upper)
                .any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u))
        {
            return Err(MeasureError::DegenerateBox);
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        (0..self.dim()).all(|k| self.lower[k] <= x[k] && x[k] <= self.upper[k])
    }

    /// Box grown by `radius[k]` on both sides of axis `k`.
    pub fn buffered(&self, radius: &[f64]) -> Result<Self, MeasureError> {
        BoxRegion::new(
            self.lower.iter().zip(radius).map(|(l, r)| l - r).collect(),
            self.upper.iter().zip(radius).map(|(u, r)| u + r).collect(),
        )
    }
}

/// Gaussian probability measure, the sigma of the convolution equations.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianMeasure {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, MeasureError> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(MeasureError::DimensionMismatch {
                expected: mean.len(),
                got: cov.nrows(),
            });
        }
        let sym_err = (&cov - cov.transpose()).abs().max();
        if sym_err > 1e-12 {
            return Err(MeasureError::InvalidParameter(
                "Gaussian covariance must be symmetric".into(),
            ));
        }
        let min_eig = cov
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        if min_eig < -1e-10 * (1.0 + cov.trace().abs()) {
            return Err(MeasureError::InvalidParameter(
                "Gaussian covariance must be positive semidefinite".into(),
            ));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Log moment generating function `<lambda, m> + 1/2 <lambda, S lambda>`.
    pub fn log_mgf(&self, lambda: &DVector<f64>) -> f64 {
        lambda.dot(&self.mean) + 0.5 * lambda.dot(&(&self.cov * lambda))
    }
}

/// `lambda` lies in `E_{sigma1 sigma2}` iff the exponential moments of the
/// two Gaussians coincide; returned residual is the difference of log MGFs.
pub fn membership_e(
    lambda: &DVector<f64>,
    sigma1: &GaussianMeasure,
    sigma2: &GaussianMeasure,
) -> (bool, f64) {
    let residual = sigma1.log_mgf(lambda) - sigma2.log_mgf(lambda);
    (residual.abs() <= 1e-12, residual)
}

/// Exponential measure with density `scale * exp(-<lambda, x>)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentialMeasure {
    pub lambda: DVector<f64>,
    pub scale: f64,
}

/// Exponential measure supported on the subspace `H` spanned by the
/// orthonormal rows of `basis`, with density `scale * exp(-<lambda, x>)`
/// for `x` in `H`. The constructor projects `lambda` onto `H`, which leaves
/// the density on `H` unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceExponential {
    pub basis: DMatrix<f64>,
    pub lambda: DVector<f64>,
    pub scale: f64,
}

impl SubspaceExponential {
    /// Density in surface coordinates: `y` in `R^k` addresses the point
    /// `basis^T y` of `H`, so the value is `scale * exp(-<B lambda, y>)`.
    pub fn surface_density(&self, y: &DVector<f64>) -> f64 {
        let rate = &self.basis * &self.lambda;
        self.scale * (-rate.dot(y)).exp()
    }

    /// Ambient point addressed by the surface coordinates `y`.
    pub fn embed(&self, y: &DVector<f64>) -> DVector<f64> {
        self.basis.transpose() * y
    }
}

/// Measure with density `p(x) exp(-<lambda, x>)`, possibly signed.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyExponential {
    pub lambda: DVector<f64>,
    pub poly: Poly<f64>,
    pub signed: bool,
}

/// Finite mixture `sum_i w_i e_{lambda_i}` with positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMixture {
    pub atoms: Vec<(DVector<f64>, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Measure {
    Exponential(ExponentialMeasure),
    SubspaceExponential(SubspaceExponential),
    PolyExponential(PolyExponential),
    Mixture(FiniteMixture),
}

/// Signed mass of a measure on a box together with its total variation;
/// the two coincide for non-negative measures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxMass {
    pub value: f64,
    pub total_variation: f64,
}

/// Points drawn from the restriction of a measure to a box, with the
/// rejection acceptance rate when a rejection sampler was used.
#[derive(Debug, Clone)]
pub struct SampledPoints {
    pub points: Vec<DVector<f64>>,
    pub acceptance_rate: Option<f64>,
}

impl Measure {
    /// Zero scale is allowed and denotes the null measure, which samples
    /// empty configurations.
    pub fn exponential(lambda: DVector<f64>, scale: f64) -> Result<Self, MeasureError> {
        if !(scale >= 0.0) {
            return Err(MeasureError::InvalidParameter("scale must be non-negative".into()));
        }
        Ok(Measure::Exponential(ExponentialMeasure { lambda, scale }))
    }

    /// Lebesgue measure is the exponential measure at `lambda = 0`.
    pub fn lebesgue(dim: usize) -> Self {
        Measure::Exponential(ExponentialMeasure { lambda: DVector::zeros(dim), scale: 1.0 })
    }

    pub fn subspace_exponential(
        basis: DMatrix<f64>,
        lambda: DVector<f64>,
        scale: f64,
    ) -> Result<Self, MeasureError> {
        if !(scale > 0.0) {
            return Err(MeasureError::InvalidParameter("scale must be positive".into()));
        }
        let (k, d) = (basis.nrows(), basis.ncols());
        if k == 0 || k >= d {
            return Err(MeasureError::InvalidParameter(
                "subspace must have dimension 1 <= k < d".into(),
            ));
        }
        if lambda.len() != d {
            return Err(MeasureError::DimensionMismatch { expected: d, got: lambda.len() });
        }
        let gram_residual = (&basis * basis.transpose() - DMatrix::<f64>::identity(k, k))
            .abs()
            .max();
        if gram_residual > 1e-12 {
            return Err(MeasureError::BasisNotOrthonormal(gram_residual));
        }
        let projected = basis.transpose() * (&basis * &lambda);
        Ok(Measure::SubspaceExponential(SubspaceExponential {
            basis,
            lambda: projected,
            scale,
        }))
    }

    pub fn poly_exponential(
        lambda: DVector<f64>,
        coeffs: impl IntoIterator<Item = (MultiIndex, f64)>,
        signed: bool,
    ) -> Result<Self, MeasureError> {
        let d = lambda.len();
        let poly = Poly::from_terms(d, coeffs);
        let deg = poly.degree();
        if deg > 6 {
            return Err(MeasureError::DegreeTooHigh(deg));
        }
        if !signed {
            // heuristic non-negativity guard on a probe grid
            let scale = poly
                .terms
                .values()
                .fold(0.0f64, |a, &c| a.max(c.abs()))
                .max(1.0);
            for x in probe_points(d) {
                let v = poly.eval(&x);
                if v < -1e-12 * scale {
                    return Err(MeasureError::NegativeDensity { at: x, value: v });
                }
            }
        }
        Ok(Measure::PolyExponential(PolyExponential { lambda, poly, signed }))
    }

    pub fn mixture(atoms: Vec<(DVector<f64>, f64)>) -> Result<Self, MeasureError> {
        if atoms.is_empty() {
            return Err(MeasureError::InvalidParameter("mixture needs atoms".into()));
        }
        if atoms.iter().any(|(_, w)| !(*w > 0.0)) {
            return Err(MeasureError::InvalidParameter("weights must be positive".into()));
        }
        for i in 0..atoms.len() {
            for j in i + 1..atoms.len() {
                if atoms[i].0 == atoms[j].0 {
                    return Err(MeasureError::InvalidParameter(
                        "mixture atoms must be distinct".into(),
                    ));
                }
            }
        }
        Ok(Measure::Mixture(FiniteMixture { atoms }))
    }

    pub fn dim(&self) -> usize {
        match self {
            Measure::Exponential(m) => m.lambda.len(),
            Measure::SubspaceExponential(m) => m.lambda.len(),
            Measure::PolyExponential(m) => m.lambda.len(),
            Measure::Mixture(m) => m.atoms[0].0.len(),
        }
    }

    pub fn is_signed(&self) -> bool {
        matches!(self, Measure::PolyExponential(p) if p.signed)
    }

    /// Ambient density at `x`. Subspace measures report 0 off `H` (within
    /// 1e-9); use surface coordinates for the on-subspace density.
    pub fn density(&self, x: &DVector<f64>) -> f64 {
        match self {
            Measure::Exponential(m) => m.scale * (-m.lambda.dot(x)).exp(),
            Measure::SubspaceExponential(m) => {
                let proj = m.basis.transpose() * (&m.basis * x);
                if (x - proj).abs().max() > 1e-9 {
                    0.0
                } else {
                    m.scale * (-m.lambda.dot(x)).exp()
                }
            }
            Measure::PolyExponential(m) => m.poly.eval(x.as_slice()) * (-m.lambda.dot(x)).exp(),
            Measure::Mixture(m) => m.atoms.iter().map(|(l, w)| w * (-l.dot(x)).exp()).sum(),
        }
    }

    /// Exact mass of the measure restricted to `box_`; for signed
    /// exponential-polynomials the total variation accompanies the signed
    /// value.
    pub fn mass_on_box(&self, box_: &BoxRegion) -> Result<BoxMass, MeasureError> {
        if box_.dim() != self.dim() {
            return Err(MeasureError::DimensionMismatch {
                expected: self.dim(),
                got: box_.dim(),
            });
        }
        match self {
            Measure::Exponential(m) => {
                let mut v = m.scale;
                for k in 0..box_.dim() {
                    v *= exp_moment_integral(0, m.lambda[k], box_.lower[k], box_.upper[k]);
                }
                Ok(BoxMass { value: v, total_variation: v })
            }
            Measure::SubspaceExponential(m) => subspace_mass(m, box_),
            Measure::PolyExponential(m) => {
                let value: f64 = m
                    .poly
                    .terms
                    .iter()
                    .map(|(alpha, &c)| {
                        let mut term = c;
                        for k in 0..box_.dim() {
                            term *= exp_moment_integral(
                                alpha[k],
                                m.lambda[k],
                                box_.lower[k],
                                box_.upper[k],
                            );
                        }
                        term
                    })
                    .sum();
                let total_variation =
                    if m.signed { polyexp_total_variation(m, box_) } else { value };
                Ok(BoxMass { value, total_variation })
            }
            Measure::Mixture(m) => {
                let mut v = 0.0;
                for (lambda, w) in &m.atoms {
                    let mut atom = *w;
                    for k in 0..box_.dim() {
                        atom *= exp_moment_integral(0, lambda[k], box_.lower[k], box_.upper[k]);
                    }
                    v += atom;
                }
                Ok(BoxMass { value: v, total_variation: v })
            }
        }
    }

    /// Poisson configuration on `box_`: the count is Poisson with mean
    /// `mass_on_box` and locations are i.i.d. from the normalized
    /// restriction. Deterministic per seed.
    pub fn sample_on_box(
        &self,
        box_: &BoxRegion,
        seed: u64,
    ) -> Result<SampledPoints, MeasureError> {
        if self.is_signed() {
            return Err(MeasureError::SignedMeasure);
        }
        let mass = self.mass_on_box(box_)?.value;
        let count = sample_poisson_count(mass, seed);
        let mut rng = stream_rng(seed, LOCATION_STREAM, 0);
        match self {
            Measure::Exponential(m) => {
                let points = (0..count)
                    .map(|_| {
                        DVector::from_iterator(
                            box_.dim(),
                            (0..box_.dim()).map(|k| {
                                truncated_exp_inverse(
                                    m.lambda[k],
                                    box_.lower[k],
                                    box_.upper[k],
                                    rng.random::<f64>(),
                                )
                            }),
                        )
                    })
                    .collect();
                Ok(SampledPoints { points, acceptance_rate: None })
            }
            Measure::SubspaceExponential(m) => subspace_sample(m, box_, count, &mut rng),
            Measure::PolyExponential(m) => polyexp_rejection_sample(m, box_, count, &mut rng),
            Measure::Mixture(m) => {
                let atom_masses: Vec<f64> = m
                    .atoms
                    .iter()
                    .map(|(lambda, w)| {
                        let mut a = *w;
                        for k in 0..box_.dim() {
                            a *= exp_moment_integral(0, lambda[k], box_.lower[k], box_.upper[k]);
                        }
                        a
                    })
                    .collect();
                let total: f64 = atom_masses.iter().sum();
                let points = (0..count)
                    .map(|_| {
                        let mut pick = rng.random::<f64>() * total;
                        let mut idx = 0;
                        for (i, am) in atom_masses.iter().enumerate() {
                            idx = i;
                            if pick < *am {
                                break;
                            }
                            pick -= am;
                        }
                        let lambda = &m.atoms[idx].0;
                        DVector::from_iterator(
                            box_.dim(),
                            (0..box_.dim()).map(|k| {
                                truncated_exp_inverse(
                                    lambda[k],
                                    box_.lower[k],
                                    box_.upper[k],
                                    rng.random::<f64>(),
                                )
                            }),
                        )
                    })
                    .collect();
                Ok(SampledPoints { points, acceptance_rate: None })
            }
        }
    }
}

/// Coefficient map of the partial derivative `d^beta p`.
///
/// Over-differentiation yields the zero polynomial; derivatives commute
/// coefficientwise, `d^beta d^gamma = d^(beta+gamma)`.
pub fn differentiate_poly(poly: &Poly<f64>, beta: &[u32]) -> Poly<f64> {
    poly.derivative_multi(beta)
}

/// All multi-indices `beta` with `d^beta p` not identically zero, i.e.
/// `beta <= alpha` componentwise for some monomial `alpha` of `p`.
pub fn nonzero_derivative_indices(poly: &Poly<f64>) -> Vec<MultiIndex> {
    let dim = poly.dim;
    let mut caps = vec![0u32; dim];
    for alpha in poly.terms.keys() {
        for k in 0..dim {
            caps[k] = caps[k].max(alpha[k]);
        }
    }
    let mut out = Vec::new();
    let mut beta = vec![0u32; dim];
    loop {
        if !poly.derivative_multi(&beta).is_zero() {
            out.push(beta.clone());
        }
        let mut k = 0;
        loop {
            beta[k] += 1;
            if beta[k] <= caps[k] {
                break;
            }
            beta[k] = 0;
            k += 1;
            if k == dim {
                return out;
            }
        }
    }
}

const COUNT_STREAM: u64 = 0x636f756e74;
const LOCATION_STREAM: u64 = 0x6c6f63;

fn sample_poisson_count(mass: f64, seed: u64) -> usize {
    if mass <= 0.0 {
        return 0;
    }
    let mut rng = stream_rng(seed, COUNT_STREAM, 0);
    let pois = Poisson::new(mass).expect("positive finite mass");
    let draw: f64 = pois.sample(&mut rng);
    draw as usize
}

/// `int_a^b x^n exp(-lambda x) dx` in closed form (repeated integration by
/// parts for `lambda != 0`, power rule otherwise).
pub fn exp_moment_integral(n: u32, lambda: f64, a: f64, b: f64) -> f64 {
    if lambda == 0.0 {
        let p = n as i32 + 1;
        return (b.powi(p) - a.powi(p)) / p as f64;
    }
    // antiderivative: -exp(-lambda x) * sum_j n!/(n-j)! x^(n-j) / lambda^(j+1)
    let anti = |x: f64| -> f64 {
        let mut sum = 0.0;
        let mut falling = 1.0; // n! / (n-j)!
        for j in 0..=n {
            sum += falling * x.powi((n - j) as i32) / lambda.powi(j as i32 + 1);
            falling *= (n - j) as f64;
        }
        -(-lambda * x).exp() * sum
    };
    anti(b) - anti(a)
}

/// Inverse CDF of the exponential density `exp(-lambda x)` truncated to
/// `[a, b]`, evaluated at `u` in [0, 1). Shifted to the interval midpoint
/// for overflow safety.
pub fn truncated_exp_inverse(lambda: f64, a: f64, b: f64, u: f64) -> f64 {
    if lambda.abs() < 1e-12 {
        return a + u * (b - a);
    }
    let c = 0.5 * (a + b);
    let wa = (-lambda * (a - c)).exp();
    let wb = (-lambda * (b - c)).exp();
    let x = c - ((1.0 - u) * wa + u * wb).ln() / lambda;
    x.clamp(a, b)
}

fn probe_points(d: usize) -> Vec<Vec<f64>> {
    // probe cube [-10, 10]^d
    let per_axis: usize = match d {
        1 => 4096,
        2 => 128,
        _ => 16,
    };
    let axis: Vec<f64> = (0..per_axis)
        .map(|i| -10.0 + 20.0 * (i as f64 + 0.5) / per_axis as f64)
        .collect();
    let mut points: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..d {
        let mut next = Vec::with_capacity(points.len() * axis.len());
        for p in &points {
            for &x in &axis {
                let mut q = p.clone();
                q.push(x);
                next.push(q);
            }
        }
        points = next;
        if points.len() > 200_000 {
            break;
        }
    }
    points
}

/// Total variation of a signed exponential-polynomial on a box: exact for
/// d = 1 by splitting at the sign changes of `p`; numeric composite
/// Gauss-Legendre quadrature otherwise.
fn polyexp_total_variation(m: &PolyExponential, box_: &BoxRegion) -> f64 {
    let d = box_.dim();
    if d == 1 {
        let (a, b) = (box_.lower[0], box_.upper[0]);
        let mut cuts = vec![a];
        cuts.extend(sign_changes_1d(&m.poly, a, b));
        cuts.push(b);
        let mut tv = 0.0;
        for w in cuts.windows(2) {
            let piece: f64 = m
                .poly
                .terms
                .iter()
                .map(|(alpha, &c)| c * exp_moment_integral(alpha[0], m.lambda[0], w[0], w[1]))
                .sum();
            tv += piece.abs();
        }
        return tv;
    }
    // tensor Gauss-Legendre, 8 nodes on 32 panels per axis
    let (nodes, weights) = gauss_legendre_8();
    let panels = 32usize;
    let mut tv = 0.0;
    let mut idx = vec![0usize; d];
    loop {
        let mut nidx = vec![0usize; d];
        loop {
            let mut x = vec![0.0; d];
            let mut w = 1.0;
            for k in 0..d {
                let h = (box_.upper[k] - box_.lower[k]) / panels as f64;
                let left = box_.lower[k] + idx[k] as f64 * h;
                x[k] = left + 0.5 * h * (1.0 + nodes[nidx[k]]);
                w *= 0.5 * h * weights[nidx[k]];
            }
            let xv = DVector::from_vec(x.clone());
            tv += w * (m.poly.eval(&x) * (-m.lambda.dot(&xv)).exp()).abs();
            if !advance(&mut nidx, nodes.len()) {
                break;
            }
        }
        if !advance(&mut idx, panels) {
            return tv;
        }
    }
}

/// Odometer increment over a `base`-ary counter; false on wrap-around.
fn advance(idx: &mut [usize], base: usize) -> bool {
    for slot in idx.iter_mut() {
        *slot += 1;
        if *slot < base {
            return true;
        }
        *slot = 0;
    }
    false
}

fn sign_changes_1d(p: &Poly<f64>, a: f64, b: f64) -> Vec<f64> {
    let scan = 4096;
    let mut roots = Vec::new();
    let eval = |x: f64| p.eval(&[x]);
    let mut prev_x = a;
    let mut prev_v = eval(a);
    for i in 1..=scan {
        let x = a + (b - a) * i as f64 / scan as f64;
        let v = eval(x);
        if prev_v * v < 0.0 {
            let (mut lo, mut hi) = (prev_x, x);
            let mut flo = prev_v;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let fm = eval(mid);
                if flo * fm <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev_x = x;
        prev_v = v;
    }
    roots
}

fn gauss_legendre_8() -> ([f64; 8], [f64; 8]) {
    (
        [
            -0.9602898564975363,
            -0.7966664774136267,
            -0.525532409916329,
            -0.18343464249564978,
            0.18343464249564978,
            0.525532409916329,
            0.7966664774136267,
            0.9602898564975363,
        ],
        [
            0.10122853629037669,
            0.22238103445337434,
            0.31370664587788705,
            0.36268378337836177,
            0.36268378337836177,
            0.31370664587788705,
            0.22238103445337434,
            0.10122853629037669,
        ],
    )
}

/// Mass of the k-dimensional restriction `box intersect H`. Supported for
/// lines in any direction and for axis-aligned subspaces.
fn subspace_mass(m: &SubspaceExponential, box_: &BoxRegion) -> Result<BoxMass, MeasureError> {
    let k = m.basis.nrows();
    if k == 1 {
        let b = m.basis.row(0).transpose();
        let rate = m.lambda.dot(&b);
        let Some((y_lo, y_hi)) = line_box_interval(&b, box_) else {
            return Ok(BoxMass { value: 0.0, total_variation: 0.0 });
        };
        let v = m.scale * exp_moment_integral(0, rate, y_lo, y_hi);
        return Ok(BoxMass { value: v, total_variation: v });
    }
    if let Some(axes) = axis_aligned_rows(&m.basis) {
        // every non-selected axis must contain 0, otherwise the box misses H
        let selected: Vec<usize> = axes.iter().map(|&(j, _)| j).collect();
        for j in 0..box_.dim() {
            if !selected.contains(&j) && !(box_.lower[j] <= 0.0 && 0.0 <= box_.upper[j]) {
                return Ok(BoxMass { value: 0.0, total_variation: 0.0 });
            }
        }
        let mut v = m.scale;
        for &(j, _) in &axes {
            v *= exp_moment_integral(0, m.lambda[j], box_.lower[j], box_.upper[j]);
        }
        return Ok(BoxMass { value: v, total_variation: v });
    }
    Err(MeasureError::UnsupportedSubspace)
}

fn subspace_sample(
    m: &SubspaceExponential,
    box_: &BoxRegion,
    count: usize,
    rng: &mut impl RngExt,
) -> Result<SampledPoints, MeasureError> {
    let k = m.basis.nrows();
    if k == 1 {
        let b = m.basis.row(0).transpose();
        let rate = m.lambda.dot(&b);
        let Some((y_lo, y_hi)) = line_box_interval(&b, box_) else {
            return Ok(SampledPoints { points: vec![], acceptance_rate: None });
        };
        let points = (0..count)
            .map(|_| &b * truncated_exp_inverse(rate, y_lo, y_hi, rng.random::<f64>()))
            .collect();
        return Ok(SampledPoints { points, acceptance_rate: None });
    }
    if let Some(axes) = axis_aligned_rows(&m.basis) {
        let selected: Vec<usize> = axes.iter().map(|&(j, _)| j).collect();
        for j in 0..box_.dim() {
            if !selected.contains(&j) && !(box_.lower[j] <= 0.0 && 0.0 <= box_.upper[j]) {
                return Ok(SampledPoints { points: vec![], acceptance_rate: None });
            }
        }
        let points = (0..count)
            .map(|_| {
                let mut x = DVector::zeros(box_.dim());
                for &(j, _) in &axes {
                    x[j] = truncated_exp_inverse(
                        m.lambda[j],
                        box_.lower[j],
                        box_.upper[j],
                        rng.random::<f64>(),
                    );
                }
                x
            })
            .collect();
        return Ok(SampledPoints { points, acceptance_rate: None });
    }
    Err(MeasureError::UnsupportedSubspace)
}

/// Parameter interval of `{y b : l <= y b <= u}` for a unit direction `b`,
/// or `None` when the line misses the box.
fn line_box_interval(b: &DVector<f64>, box_: &BoxRegion) -> Option<(f64, f64)> {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for j in 0..box_.dim() {
        let bj = b[j];
        if bj.abs() < 1e-14 {
            if !(box_.lower[j] <= 0.0 && 0.0 <= box_.upper[j]) {
                return None;
            }
            continue;
        }
        let (a1, a2) = (box_.lower[j] / bj, box_.upper[j] / bj);
        lo = lo.max(a1.min(a2));
        hi = hi.min(a1.max(a2));
    }
    (lo < hi).then_some((lo, hi))
}

/// Rows that are signed standard basis vectors, as `(axis, sign)` pairs.
fn axis_aligned_rows(basis: &DMatrix<f64>) -> Option<Vec<(usize, f64)>> {
    let mut axes = Vec::with_capacity(basis.nrows());
    for i in 0..basis.nrows() {
        let row = basis.row(i);
        let mut hit = None;
        for j in 0..basis.ncols() {
            let v = row[j];
            if v.abs() > 1e-12 {
                if hit.is_some() || (v.abs() - 1.0).abs() > 1e-12 {
                    return None;
                }
                hit = Some((j, v.signum()));
            }
        }
        axes.push(hit?);
    }
    Some(axes)
}

fn polyexp_rejection_sample(
    m: &PolyExponential,
    box_: &BoxRegion,
    count: usize,
    rng: &mut impl RngExt,
) -> Result<SampledPoints, MeasureError> {
    let d = box_.dim();
    // envelope constant: sup of p over a probe grid with headroom
    let per_axis: usize = if d == 1 { 4096 } else { 128 };
    let mut sup = 0.0f64;
    let mut idx = vec![0usize; d];
    loop {
        let x: Vec<f64> = (0..d)
            .map(|k| {
                box_.lower[k]
                    + (box_.upper[k] - box_.lower[k]) * (idx[k] as f64 + 0.5) / per_axis as f64
            })
            .collect();
        sup = sup.max(m.poly.eval(&x));
        if !advance(&mut idx, per_axis) {
            break;
        }
    }
    let envelope = sup * 1.05;
    if envelope <= 0.0 {
        return Ok(SampledPoints { points: vec![], acceptance_rate: None });
    }
    let mut points = Vec::with_capacity(count);
    let mut proposals = 0u64;
    while points.len() < count {
        proposals += 1;
        let x = DVector::from_iterator(
            d,
            (0..d).map(|k| {
                truncated_exp_inverse(m.lambda[k], box_.lower[k], box_.upper[k], rng.random())
            }),
        );
        let accept_p = (m.poly.eval(x.as_slice()) / envelope).min(1.0);
        if rng.random::<f64>() < accept_p {
            points.push(x);
        }
        if proposals >= 1000 && (points.len() as f64) < 1e-3 * proposals as f64 {
            return Err(MeasureError::EnvelopeTooLoose {
                rate: points.len() as f64 / proposals as f64,
            });
        }
    }
    let rate = if proposals == 0 { 1.0 } else { count as f64 / proposals as f64 };
    Ok(SampledPoints { points, acceptance_rate: Some(rate) })
}
