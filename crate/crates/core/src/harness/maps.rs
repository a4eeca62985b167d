//! Built-in maps and form specifications used by the experiments.

use std::sync::Arc;

use rand::Rng;

use crate::algebra::{random_graded_automorphism, random_graded_hom, CarnotAlgebra, GradedHom};
use crate::exterior::GradedForm;
use crate::linalg::Matrix;
use crate::mollifier::map::{
    constant, contact_scaling, contact_shear, dilation, from_hom, identity, left_translation,
    quadratic_right_perturbation, vertical_square_perturbation,
};
use crate::mollifier::SampledMap;

use super::config::{ExperimentConfig, MapSpec};
use super::io::load_tabulated;
use super::HarnessError;

fn need<'a, T>(v: &'a Option<T>, key: &str, map: &str) -> Result<&'a T, HarnessError> {
    v.as_ref()
        .ok_or_else(|| HarnessError::Config(format!("map '{map}' needs '{key}'")))
}

fn same_algebra(src: &CarnotAlgebra, tgt: &CarnotAlgebra, map: &str) -> Result<(), HarnessError> {
    if src != tgt {
        return Err(HarnessError::Config(format!(
            "map '{map}' needs equal source and target"
        )));
    }
    Ok(())
}

/// Graded homomorphism extending a horizontal block.
pub fn hom_from_block(
    src: Arc<CarnotAlgebra>,
    tgt: Arc<CarnotAlgebra>,
    block: &[Vec<f64>],
) -> Result<GradedHom<f64>, HarnessError> {
    let m = Matrix::from_rows(block.to_vec());
    Ok(GradedHom::from_horizontal(src, tgt, &m, crate::pansu::EXTENSION_TOL)?.0)
}

/// Builds the map named in `spec`. Random maps draw from `rng`.
pub fn build_map<R: Rng + ?Sized>(
    spec: &MapSpec,
    src: Arc<CarnotAlgebra>,
    tgt: Arc<CarnotAlgebra>,
    cfg: &ExperimentConfig,
    rng: &mut R,
) -> Result<SampledMap, HarnessError> {
    let name = spec.name.as_str();
    let f = match name {
        "identity" => {
            same_algebra(&src, &tgt, name)?;
            identity(src)
        }
        "constant" => constant(src, tgt, need(&spec.value, "value", name)?.clone()),
        "dilation" => {
            same_algebra(&src, &tgt, name)?;
            dilation(src, *need(&spec.lambda, "lambda", name)?)?
        }
        "translation" => {
            same_algebra(&src, &tgt, name)?;
            left_translation(src, need(&spec.value, "value", name)?.clone())?
        }
        "hom" => {
            let m = Matrix::from_rows(need(&spec.matrix, "matrix", name)?.clone());
            from_hom(&GradedHom::new(src, tgt, m)?)
        }
        "horizontal" => from_hom(&hom_from_block(
            src,
            tgt,
            need(&spec.block, "block", name)?,
        )?),
        "random_hom" => from_hom(&random_graded_hom(src, tgt, rng)?.to_f64()),
        "random_auto" => {
            same_algebra(&src, &tgt, name)?;
            from_hom(&random_graded_automorphism(src, rng)?.to_f64())
        }
        "contact_shear" => {
            let shear = contact_shear(src.clone(), *need(&spec.eps, "eps", name)?)?;
            match &spec.block {
                Some(b) => shear.then_hom(&hom_from_block(src, tgt, b)?)?,
                None => {
                    same_algebra(&src, &tgt, name)?;
                    shear
                }
            }
        }
        "contact_scaling" => {
            same_algebra(&src, &tgt, name)?;
            let f = contact_scaling(src.clone(), *need(&spec.eps, "eps", name)?)?;
            match &spec.block {
                Some(b) => f.conjugated_by_hom(&hom_from_block(src.clone(), src, b)?)?,
                None => f,
            }
        }
        "vertical_square" => {
            let phi = match &spec.block {
                Some(b) => hom_from_block(src, tgt, b)?,
                None => {
                    same_algebra(&src, &tgt, name)?;
                    GradedHom::identity(src)
                }
            };
            vertical_square_perturbation(&phi, *need(&spec.eps, "eps", name)?)
        }
        "quadratic" => {
            same_algebra(&src, &tgt, name)?;
            quadratic_right_perturbation(src, need(&spec.coeffs, "coeffs", name)?.clone())?
        }
        "tabulated" => {
            let path = cfg.resolve(need(&spec.file, "file", name)?);
            load_tabulated(&path, src.dim(), tgt.dim())?.into_map(src, tgt)?
        }
        other => return Err(HarnessError::Config(format!("unknown map '{other}'"))),
    };
    Ok(f)
}

/// `vol`, `1`, or a 1-based monomial such as `2,3`.
pub fn parse_form(spec: &str, alg: &Arc<CarnotAlgebra>) -> Result<GradedForm<f64>, HarnessError> {
    let s = spec.trim();
    match s {
        "vol" => return Ok(GradedForm::volume(alg.clone())),
        "1" => return Ok(GradedForm::scalar(alg.clone(), 1.0)),
        _ => {}
    }
    let mut idx = Vec::new();
    for t in s.split(',') {
        match t.trim().parse::<usize>() {
            Ok(i) if i >= 1 && i <= alg.dim() => idx.push(i - 1),
            _ => {
                return Err(HarnessError::Config(format!(
                    "bad form '{spec}': expected vol, 1 or indices like 2,3"
                )))
            }
        }
    }
    let mut sorted = idx.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != idx.len() {
        return Err(HarnessError::Config(format!(
            "form '{spec}' repeats an index"
        )));
    }
    Ok(GradedForm::monomial(alg.clone(), &idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::builtin;

    #[test]
    fn forms_parse() {
        let h1 = Arc::new(builtin("H1").unwrap());
        assert_eq!(parse_form("vol", &h1).unwrap().degree(), 3);
        assert_eq!(parse_form("2,3", &h1).unwrap().weight(), Some(-3));
        assert!(parse_form("2,2", &h1).is_err());
        assert!(parse_form("4", &h1).is_err());
    }
}
