//! Detecting factor permutations of product automorphisms through Pansu pullbacks.
//!
//! For `f = exp ∘ φ ∘ log`, the pullback of `i_Y vol_{G_i}` (lifted from
//! factor `i`) is supported on the factor mapped onto `G_i`. The block of
//! nonzero coefficients therefore recovers the permutation of factors.

use std::sync::Arc;

use rand::Rng;

use crate::algebra::{
    decompose_product_automorphism, random_graded_automorphism, CarnotAlgebra, GradedHom,
};
use crate::bch::GroupPoint;
use crate::exterior::{codegree_one_forms, two_form_pairs, GradedForm};
use crate::linalg::Matrix;
use crate::mollifier::SampledMap;
use crate::pansu::{pansu_differential_analytic, PansuDifferential, DEFAULT_STEP};
use crate::scalar::Rational;

use super::report::{Check, Report, ReportRow};
use super::HarnessError;

/// Coefficient blocks below this fraction of the largest are treated as zero.
pub const BLOCK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct RigidityCase {
    /// From [`decompose_product_automorphism`].
    pub sigma: Vec<usize>,
    /// From codegree-one forms; `None` if the blocks do not form a permutation.
    pub detected: Option<Vec<usize>>,
    /// From the two-form family; `None` when unavailable or inconclusive.
    pub detected_two_forms: Option<Vec<usize>>,
    /// `blocks[j][i]`: largest coefficient linking source factor `j` to target factor `i`.
    pub blocks: Vec<Vec<f64>>,
}

impl RigidityCase {
    pub fn matches(&self) -> bool {
        self.detected.as_ref() == Some(&self.sigma)
    }

    fn on_off(&self) -> (f64, f64) {
        let mut on = f64::INFINITY;
        let mut off: f64 = 0.0;
        for (j, row) in self.blocks.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                if self.sigma[j] == i {
                    on = on.min(*v);
                } else {
                    off = off.max(*v);
                }
            }
        }
        (on, off)
    }
}

#[derive(Debug, Clone)]
pub struct RigidityReport {
    pub id: String,
    pub cases: Vec<RigidityCase>,
    pub two_forms_available: bool,
}

impl RigidityReport {
    pub fn match_rate(&self) -> f64 {
        if self.cases.is_empty() {
            return 1.0;
        }
        self.cases.iter().filter(|c| c.matches()).count() as f64 / self.cases.len() as f64
    }

    /// Two-form detections agree with codegree-one detections.
    pub fn two_forms_agree(&self) -> bool {
        self.cases
            .iter()
            .all(|c| c.detected_two_forms.is_some() && c.detected_two_forms == c.detected)
    }

    pub fn to_report(&self) -> Report {
        let rows = self
            .cases
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let (on, off) = c.on_off();
                ReportRow {
                    experiment: self.id.clone(),
                    level: k.to_string(),
                    norm: on,
                    max_error: off,
                    runtime_ms: None,
                }
            })
            .collect();
        let mut checks = vec![Check::new(
            "detected permutation matches decomposition",
            self.match_rate() == 1.0,
            format!("match rate {}", self.match_rate()),
        )];
        if self.two_forms_available {
            checks.push(Check::new(
                "two-form family agrees",
                self.two_forms_agree(),
                "",
            ));
        }
        Report {
            rows,
            checks,
            notes: Vec::new(),
        }
    }
}

/// Projection `G → G_i` onto factor `i` as a matrix.
fn projection(product: &CarnotAlgebra, i: usize) -> Matrix<f64> {
    let idx = &product.factors()[i].indices;
    let mut p = Matrix::zeros(idx.len(), product.dim());
    for (r, &g) in idx.iter().enumerate() {
        p[(r, g)] = 1.0;
    }
    p
}

fn lift(
    form: &GradedForm<Rational>,
    product: &Arc<CarnotAlgebra>,
    i: usize,
) -> Result<GradedForm<f64>, HarnessError> {
    Ok(form
        .to_f64()
        .pullback_matrix(product.clone(), &projection(product, i))?)
}

fn factor_volume_index(product: &CarnotAlgebra, j: usize) -> Vec<usize> {
    let mut idx = product.factors()[j].indices.clone();
    idx.sort_unstable();
    idx
}

/// Reads a permutation off a block matrix, if each row has exactly one dominant entry.
fn permutation_from_blocks(blocks: &[Vec<f64>]) -> Option<Vec<usize>> {
    let top = blocks.iter().flatten().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return None;
    }
    let mut sigma = Vec::with_capacity(blocks.len());
    for row in blocks {
        let hits: Vec<usize> = (0..row.len())
            .filter(|&i| row[i] > BLOCK_TOL * top)
            .collect();
        if hits.len() != 1 {
            return None;
        }
        sigma.push(hits[0]);
    }
    let mut seen = vec![false; sigma.len()];
    for &s in &sigma {
        if std::mem::replace(&mut seen[s], true) {
            return None;
        }
    }
    Some(sigma)
}

/// Codegree-one blocks: `θ_{j,k} ∧ f_P^*(lift_i i_Y vol_{G_i})` on `vol_{G_j}`.
pub fn codegree_one_blocks(
    product: &Arc<CarnotAlgebra>,
    dps: &[PansuDifferential],
) -> Result<Vec<Vec<f64>>, HarnessError> {
    let factors = product.factors();
    let k = factors.len();
    let mut blocks = vec![vec![0.0; k]; k];
    for (i, fi) in factors.iter().enumerate() {
        for alpha in codegree_one_forms(&fi.algebra) {
            let lifted = lift(&alpha, product, i)?;
            for dp in dps {
                let pulled = lifted.pullback_hom(&dp.hom)?;
                for (j, fj) in factors.iter().enumerate() {
                    let vol = factor_volume_index(product, j);
                    for &g in &fj.indices {
                        let c = GradedForm::theta(product.clone(), g)
                            .wedge(&pulled)?
                            .coefficient(&vol);
                        blocks[j][i] = f64::max(blocks[j][i], c.abs());
                    }
                }
            }
        }
    }
    Ok(blocks)
}

/// Two-form blocks: `f_P^*(lift_i α_k) ∧ lift_j γ_l` on `vol_{G_j}`; `None` for free factors.
pub fn two_form_blocks(
    product: &Arc<CarnotAlgebra>,
    dps: &[PansuDifferential],
) -> Result<Option<Vec<Vec<f64>>>, HarnessError> {
    let factors = product.factors();
    let k = factors.len();
    let mut pairs = Vec::with_capacity(k);
    for f in factors {
        match two_form_pairs(&f.algebra) {
            Ok(p) => pairs.push(p),
            Err(_) => return Ok(None),
        }
    }
    let mut blocks = vec![vec![0.0; k]; k];
    for i in 0..k {
        for (alpha, _) in &pairs[i] {
            let lifted = lift(alpha, product, i)?;
            for dp in dps {
                let pulled = lifted.pullback_hom(&dp.hom)?;
                for j in 0..k {
                    let vol = factor_volume_index(product, j);
                    for (_, gamma) in &pairs[j] {
                        let c = pulled.wedge(&lift(gamma, product, j)?)?.coefficient(&vol);
                        blocks[j][i] = f64::max(blocks[j][i], c.abs());
                    }
                }
            }
        }
    }
    Ok(Some(blocks))
}

/// Detects the permutation of one automorphism, sampling `D_P f` at `points`.
pub fn detect(
    product: &Arc<CarnotAlgebra>,
    phi: &GradedHom<Rational>,
    points: &[Vec<f64>],
) -> Result<RigidityCase, HarnessError> {
    let dec = decompose_product_automorphism(product, phi)?;
    let m = phi.to_f64().matrix().clone();
    let f = SampledMap::new("automorphism", product.clone(), product.clone(), move |x| {
        m.mul_vec(x)
    });
    let dps = points
        .iter()
        .map(|x| pansu_differential_analytic(&f, &GroupPoint::from_coords(x.clone()), DEFAULT_STEP))
        .collect::<Result<Vec<_>, _>>()?;
    let blocks = codegree_one_blocks(product, &dps)?;
    let detected_two_forms =
        two_form_blocks(product, &dps)?.and_then(|b| permutation_from_blocks(&b));
    Ok(RigidityCase {
        sigma: dec.sigma,
        detected: permutation_from_blocks(&blocks),
        detected_two_forms,
        blocks,
    })
}

/// Runs `count` random cases on a product algebra.
pub fn run_rigidity_demo<R: Rng + ?Sized>(
    id: &str,
    product: Arc<CarnotAlgebra>,
    count: usize,
    points: usize,
    rng: &mut R,
) -> Result<RigidityReport, HarnessError> {
    let factors = product.factors();
    if factors.len() < 2 {
        return Err(HarnessError::Hypothesis(format!(
            "{} is not an explicit product",
            product.name()
        )));
    }
    if factors.iter().all(|f| *f.algebra != *factors[0].algebra)
        || factors.iter().any(|f| f.algebra.is_abelian())
    {
        return Err(HarnessError::Hypothesis(
            "need at least two isomorphic nonabelian factors".into(),
        ));
    }
    let two_forms_available = factors.iter().all(|f| two_form_pairs(&f.algebra).is_ok());
    let mut cases = Vec::with_capacity(count);
    for _ in 0..count {
        let phi = random_graded_automorphism(product.clone(), rng)?;
        if !phi.is_invertible() {
            return Err(HarnessError::Hypothesis(
                "sampled map is not an isomorphism".into(),
            ));
        }
        let pts: Vec<Vec<f64>> = (0..points)
            .map(|_| {
                (0..product.dim())
                    .map(|_| rng.random_range(-0.5..0.5))
                    .collect()
            })
            .collect();
        cases.push(detect(&product, &phi, &pts)?);
    }
    Ok(RigidityReport {
        id: id.to_string(),
        cases,
        two_forms_available,
    })
}
