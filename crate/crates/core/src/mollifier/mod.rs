//! Center-of-mass mollification `f_ρ` of maps between Carnot groups.
//!
//! `f_1(x) = com(f_*σ_x)` where `σ_x` is the kernel measure translated to `x`,
//! and `f_ρ = δ_ρ ∘ (δ_{1/ρ} ∘ f ∘ δ_ρ)_1 ∘ δ_{1/ρ}`. The kernel is a discrete
//! quadrature of a smooth radial bump supported in the unit quasi-ball.

pub mod map;

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::algebra::{AlgebraError, CarnotAlgebra};
use crate::barycenter::{com, DiscreteMeasure, MeasureError};
use crate::bch::GroupPoint;
use crate::linalg::Matrix;

pub use map::{dilate_slice, Domain, MapError, SampledMap, TabulatedMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MollifyError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("kernel was built for {expected}, map source is {found}")]
    KernelMismatch { expected: String, found: String },
    #[error("precondition failed: {0}")]
    Precondition(String),
}

/// Radial bump `exp(1/(t²-1))` on `[0, 1)`, zero beyond.
pub fn bump_profile(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (1.0 / (t * t - 1.0)).exp()
    }
}

/// Default number of quadrature nodes per axis: 9 up to dimension 4, then
/// about `9^4` nodes in total.
pub fn default_nodes_per_axis(n: usize) -> usize {
    if n <= 4 {
        9
    } else {
        (6561f64.powf(1.0 / n as f64).floor() as usize).max(2)
    }
}

/// Discrete mollification kernel `σ_1`.
#[derive(Debug, Clone)]
pub struct MollKernel {
    alg: Arc<CarnotAlgebra>,
    per_axis: usize,
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
    cell_volume: f64,
    normalization: f64,
}

impl MollKernel {
    /// Midpoint grid with `per_axis` nodes per coordinate over the bounding box
    /// of the unit quasi-ball, clipped to `|X| < 1`.
    pub fn new(alg: Arc<CarnotAlgebra>, per_axis: usize) -> Result<Self, MollifyError> {
        if per_axis == 0 {
            return Err(MollifyError::Precondition(
                "kernel needs at least one node per axis".into(),
            ));
        }
        let n = alg.dim();
        let bounds = alg.unit_ball_box();
        let steps: Vec<f64> = bounds.iter().map(|b| 2.0 * b / per_axis as f64).collect();
        let cell_volume: f64 = steps.iter().product();
        let total = per_axis.checked_pow(n as u32).ok_or_else(|| {
            MollifyError::Precondition(format!("{per_axis}^{n} quadrature nodes overflow"))
        })?;
        let mut nodes = Vec::new();
        let mut raw = Vec::new();
        for flat in 0..total {
            let mut rem = flat;
            let mut q = vec![0.0; n];
            for d in (0..n).rev() {
                let k = rem % per_axis;
                rem /= per_axis;
                q[d] = -bounds[d] + (k as f64 + 0.5) * steps[d];
            }
            let w = bump_profile(alg.homogeneous_norm_f64(&q));
            if w > 0.0 {
                nodes.push(q);
                raw.push(w);
            }
        }
        if nodes.is_empty() {
            return Err(MollifyError::Precondition(
                "no quadrature node inside the unit ball".into(),
            ));
        }
        let mass: f64 =
            crate::barycenter::pairwise_sum(&raw.iter().map(|w| vec![*w]).collect::<Vec<_>>(), 1)
                [0];
        let weights = raw.iter().map(|w| w / mass).collect();
        Ok(MollKernel {
            alg,
            per_axis,
            nodes,
            weights,
            cell_volume,
            normalization: 1.0 / (mass * cell_volume),
        })
    }

    pub fn default_for(alg: Arc<CarnotAlgebra>) -> Result<Self, MollifyError> {
        let k = default_nodes_per_axis(alg.dim());
        Self::new(alg, k)
    }

    pub fn algebra(&self) -> &Arc<CarnotAlgebra> {
        &self.alg
    }

    pub fn per_axis(&self) -> usize {
        self.per_axis
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    /// Quadrature weights, summing to one.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Lebesgue volume of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    /// `Z` such that `Z · bump(|X|)` has unit Lebesgue mass (on the grid).
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    fn check_source(&self, f: &SampledMap) -> Result<(), MollifyError> {
        if **f.source() != *self.alg {
            return Err(MollifyError::KernelMismatch {
                expected: self.alg.name().to_string(),
                found: f.source().name().to_string(),
            });
        }
        Ok(())
    }
}

/// `f_1(x)`: center of mass of `f` pushed through the kernel translated to `x`.
pub fn mollify_unit(
    f: &SampledMap,
    kernel: &MollKernel,
    x: &[f64],
) -> Result<Vec<f64>, MollifyError> {
    mollify_coords(f, kernel, x, 1.0)
}

/// `f_ρ(x) = δ_ρ (h_1(δ_{1/ρ} x))` with `h = δ_{1/ρ} ∘ f ∘ δ_ρ`.
///
/// By dilation equivariance of the center of mass this equals the center of
/// mass of `f(x · δ_ρ q)` over kernel nodes `q`, which is what is evaluated.
/// The measure is recentered at `f(x)` first, so constant maps and
/// homomorphisms are reproduced to rounding.
pub fn mollify_at(
    f: &SampledMap,
    kernel: &MollKernel,
    x: &GroupPoint<f64>,
    rho: f64,
) -> Result<GroupPoint<f64>, MollifyError> {
    f.source().check(x.log())?;
    Ok(GroupPoint::from_coords(mollify_coords(
        f,
        kernel,
        x.coords(),
        rho,
    )?))
}

pub(crate) fn mollify_coords(
    f: &SampledMap,
    kernel: &MollKernel,
    x: &[f64],
    rho: f64,
) -> Result<Vec<f64>, MollifyError> {
    if !(rho > 0.0) {
        return Err(MollifyError::NonPositiveRadius(rho));
    }
    kernel.check_source(f)?;
    let (src, tgt) = (f.source(), f.target());
    let base = f.eval_coords(x)?;
    let base_inv: Vec<f64> = base.iter().map(|v| -v).collect();
    let mut support = Vec::with_capacity(kernel.nodes.len());
    for q in &kernel.nodes {
        let y = src.bch_slice(x, &dilate_slice(src, rho, q));
        let v = f.eval_coords(&y)?;
        support.push(GroupPoint::from_coords(tgt.bch_slice(&base_inv, &v)));
    }
    let measure = DiscreteMeasure::new(support, kernel.weights.clone())?;
    let c = com(tgt, &measure)?;
    Ok(tgt.bch_slice(&base, c.coords()))
}

/// The mollified map `f_ρ` as a [`SampledMap`] (domain errors surface as NaN).
pub fn mollified_map(
    f: &SampledMap,
    kernel: &MollKernel,
    rho: f64,
) -> Result<SampledMap, MollifyError> {
    if !(rho > 0.0) {
        return Err(MollifyError::NonPositiveRadius(rho));
    }
    kernel.check_source(f)?;
    let (f2, k2) = (f.clone(), kernel.clone());
    let nt = f.target().dim();
    Ok(SampledMap::new(
        format!("moll({}, {rho})", f.name()),
        f.source().clone(),
        f.target().clone(),
        move |x| mollify_coords(&f2, &k2, x, rho).unwrap_or_else(|_| vec![f64::NAN; nt]),
    ))
}

/// `min_a (∫_{B(x,ρ)} d(f(y), a)^p dy)^{1/p}` over candidates `a ∈ {f(y_q)} ∪ {com}`,
/// by quadrature on the kernel grid with uniform Haar weights.
pub fn oscillation(
    f: &SampledMap,
    kernel: &MollKernel,
    x: &GroupPoint<f64>,
    rho: f64,
    p: f64,
) -> Result<f64, MollifyError> {
    if !(rho > 0.0) {
        return Err(MollifyError::NonPositiveRadius(rho));
    }
    if !(p > 0.0) {
        return Err(MollifyError::Precondition(format!(
            "exponent must be positive, got {p}"
        )));
    }
    kernel.check_source(f)?;
    let (src, tgt) = (f.source(), f.target());
    let xc = x.coords();
    let mut values = Vec::with_capacity(kernel.nodes.len());
    for q in &kernel.nodes {
        let y = src.bch_slice(xc, &dilate_slice(src, rho, q));
        values.push(f.eval_coords(&y)?);
    }
    let cell = kernel.cell_volume * rho.powi(src.homogeneous_dim() as i32);
    let uniform = DiscreteMeasure::uniform(
        values
            .iter()
            .cloned()
            .map(GroupPoint::from_coords)
            .collect(),
    )?;
    let mut candidates = values.clone();
    candidates.push(com(tgt, &uniform)?.into_log().into_coords());
    let integrals: Vec<f64> = candidates
        .par_iter()
        .map(|a| {
            let terms: Vec<Vec<f64>> = values
                .iter()
                .map(|v| vec![tgt.homogeneous_norm_f64(&tgt.log_based_slice(a, v)).powf(p)])
                .collect();
            crate::barycenter::pairwise_sum(&terms, 1)[0] * cell
        })
        .collect();
    let best = integrals.into_iter().fold(f64::INFINITY, f64::min);
    Ok(best.powf(1.0 / p))
}

/// Pointwise distances `d(f_ρ(x), f(x))` for each radius.
pub fn convergence_probe(
    f: &SampledMap,
    kernel: &MollKernel,
    x: &GroupPoint<f64>,
    rhos: &[f64],
) -> Result<Vec<(f64, f64)>, MollifyError> {
    let fx = f.eval(x)?;
    rhos.iter()
        .map(|&rho| {
            let m = mollify_at(f, kernel, x, rho)?;
            Ok((rho, f.target().quasi_distance(&fx, &m)?))
        })
        .collect()
}

/// Norms of finite-difference derivatives of `f_1` in the charts
/// `log ∘ ℓ_{f_1(x)⁻¹}` and `log ∘ ℓ_{x⁻¹}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBounds {
    /// Jacobian of the chart map at 0.
    pub jacobian: Matrix<f64>,
    /// Spectral norm of the Jacobian.
    pub first: f64,
    /// Largest Euclidean norm of a second partial derivative vector.
    pub second: f64,
    /// `osc_m(f, B(x, 1))` used for the precondition.
    pub oscillation: f64,
}

/// Step used for the chart derivatives of `f_1`.
pub const DERIVATIVE_STEP: f64 = 1e-3;

pub fn derivative_bound_probe(
    f: &SampledMap,
    kernel: &MollKernel,
    x: &GroupPoint<f64>,
    bound: f64,
) -> Result<DerivativeBounds, MollifyError> {
    let m = f.target().step() as f64;
    let osc = oscillation(f, kernel, x, 1.0, m)?;
    if osc > bound {
        return Err(MollifyError::Precondition(format!(
            "oscillation {osc} exceeds the bound {bound}"
        )));
    }
    let (src, tgt) = (f.source(), f.target());
    let n = src.dim();
    let xc = x.coords();
    let base = mollify_unit(f, kernel, xc)?;
    let base_inv: Vec<f64> = base.iter().map(|v| -v).collect();
    let chart = |v: &[f64]| -> Result<Vec<f64>, MollifyError> {
        let y = mollify_unit(f, kernel, &src.bch_slice(xc, v))?;
        Ok(tgt.bch_slice(&base_inv, &y))
    };
    let h = DERIVATIVE_STEP;
    let unit = |i: usize, s: f64| -> Vec<f64> {
        let mut e = vec![0.0; n];
        e[i] = s;
        e
    };
    let g0 = chart(&vec![0.0; n])?;
    let mut jac = Matrix::zeros(tgt.dim(), n);
    let mut plus = Vec::with_capacity(n);
    let mut minus = Vec::with_capacity(n);
    for i in 0..n {
        let gp = chart(&unit(i, h))?;
        let gm = chart(&unit(i, -h))?;
        for r in 0..tgt.dim() {
            jac[(r, i)] = (gp[r] - gm[r]) / (2.0 * h);
        }
        plus.push(gp);
        minus.push(gm);
    }
    let mut second: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            let d2: Vec<f64> = if i == j {
                (0..tgt.dim())
                    .map(|r| (plus[i][r] - 2.0 * g0[r] + minus[i][r]) / (h * h))
                    .collect()
            } else {
                let mut v = vec![0.0; n];
                let mut corner = |si: f64, sj: f64| -> Result<Vec<f64>, MollifyError> {
                    v[i] = si * h;
                    v[j] = sj * h;
                    chart(&v)
                };
                let (pp, pm, mp, mm) = (
                    corner(1.0, 1.0)?,
                    corner(1.0, -1.0)?,
                    corner(-1.0, 1.0)?,
                    corner(-1.0, -1.0)?,
                );
                (0..tgt.dim())
                    .map(|r| (pp[r] - pm[r] - mp[r] + mm[r]) / (4.0 * h * h))
                    .collect()
            };
            second = second.max(crate::scalar::norm2(&d2));
        }
    }
    let first = spectral_norm(&jac);
    Ok(DerivativeBounds {
        jacobian: jac,
        first,
        second,
        oscillation: osc,
    })
}

/// Largest singular value.
pub fn spectral_norm(m: &Matrix<f64>) -> f64 {
    if m.rows() == 0 || m.cols() == 0 {
        return 0.0;
    }
    let dm = nalgebra::DMatrix::from_fn(m.rows(), m.cols(), |r, c| m[(r, c)]);
    dm.singular_values().iter().copied().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{builtin, random_graded_hom};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn h1() -> Arc<CarnotAlgebra> {
        Arc::new(builtin("H1").unwrap())
    }

    #[test]
    fn kernel_is_symmetric_and_normalized() {
        let k = MollKernel::default_for(h1()).unwrap();
        let s: f64 = k.weights().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        // node list is symmetric under X ↦ -X
        let n = k.nodes().len();
        for (i, q) in k.nodes().iter().enumerate() {
            let j = n - 1 - i;
            assert!(k.nodes()[j]
                .iter()
                .zip(q)
                .all(|(a, b)| (a + b).abs() < 1e-15));
            assert!((k.weights()[i] - k.weights()[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_map_is_fixed() {
        let h = h1();
        let k = MollKernel::new(h.clone(), 5).unwrap();
        let f = map::constant(h.clone(), h.clone(), vec![1.0, 2.0, -3.0]);
        let y = mollify_at(&f, &k, &GroupPoint::from_coords(vec![0.3, 0.1, 0.2]), 0.5).unwrap();
        assert_eq!(y.coords(), &[1.0, 2.0, -3.0]);
        let osc = oscillation(&f, &k, &GroupPoint::identity(3), 0.5, 4.0).unwrap();
        assert_eq!(osc, 0.0);
    }

    #[test]
    fn homomorphisms_are_fixed() {
        let h = h1();
        let k = MollKernel::new(h.clone(), 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let phi = random_graded_hom(h.clone(), h.clone(), &mut rng)
            .unwrap()
            .to_f64();
        let f = map::from_hom(&phi);
        let x = GroupPoint::from_coords(vec![0.4, -0.3, 0.7]);
        let y = mollify_at(&f, &k, &x, 0.3).unwrap();
        let fx = f.eval(&x).unwrap();
        assert!(
            h.quasi_distance(&y, &fx).unwrap() < 1e-8,
            "{y} vs {fx} {:?}",
            phi.matrix()
        );
    }

    #[test]
    fn domain_violation_is_reported() {
        let h = h1();
        let k = MollKernel::new(h.clone(), 5).unwrap();
        let f = map::identity(h.clone()).with_domain(Domain::QuasiBall {
            center: vec![0.0; 3],
            radius: 1.0,
        });
        let err = mollify_at(&f, &k, &GroupPoint::from_coords(vec![0.9, 0.0, 0.0]), 0.5);
        assert!(matches!(
            err,
            Err(MollifyError::Map(MapError::Domain { .. }))
        ));
    }

    #[test]
    fn identity_derivative_is_identity() {
        let h = h1();
        let k = MollKernel::new(h.clone(), 7).unwrap();
        let f = map::identity(h.clone());
        let b = derivative_bound_probe(&f, &k, &GroupPoint::from_coords(vec![0.2, 0.1, 0.0]), 10.0)
            .unwrap();
        assert!(b.jacobian.sub(&Matrix::identity(3)).max_abs() < 1e-6);
    }
}
