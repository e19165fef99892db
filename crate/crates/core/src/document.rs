//! JSON interchange documents for assemblages and realizations.
//!
//! Matrix entries are `[re, im]` pairs whose components are either plain
//! numbers or exact-rational strings `"p/q"`. Rational entries round-trip
//! bit-exactly, so the bundled dyadic fixtures survive serialization
//! losslessly.

use crate::matcore::{CMatrix, CRational, HermitianMatrix, RatMatrix, C64};
use num::rational::BigRational;
use crate::model::{
    Assemblage, ElemKey, MeasurementSet, ModelError, QuantumRealization, ScenarioSpec,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::str::FromStr;
use thiserror::Error;

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid document: {0}")]
    Bad(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One matrix-entry component: a float or an exact rational string.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EntryComp {
    Float(f64),
    Rational(String),
}

impl EntryComp {
    fn to_f64(&self) -> Result<f64, DocumentError> {
        match self {
            EntryComp::Float(v) => Ok(*v),
            EntryComp::Rational(s) => Ok(crate::matcore::rational_to_f64(&parse_rational(s)?)),
        }
    }

    fn to_rational(&self) -> Option<Result<BigRational, DocumentError>> {
        match self {
            EntryComp::Float(_) => None,
            EntryComp::Rational(s) => Some(parse_rational(s)),
        }
    }
}

fn parse_rational(s: &str) -> Result<BigRational, DocumentError> {
    BigRational::from_str(s)
        .map_err(|e| DocumentError::Bad(format!("bad rational {:?}: {}", s, e)))
}

fn rational_string(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Row-major matrix of `[re, im]` entries.
pub type MatrixDoc = Vec<Vec<(EntryComp, EntryComp)>>;

pub fn matrix_to_doc(m: &CMatrix) -> MatrixDoc {
    (0..m.rows())
        .map(|i| {
            (0..m.cols())
                .map(|j| {
                    let v = m[(i, j)];
                    (EntryComp::Float(v.re), EntryComp::Float(v.im))
                })
                .collect()
        })
        .collect()
}

pub fn rat_matrix_to_doc(m: &RatMatrix) -> MatrixDoc {
    (0..m.rows())
        .map(|i| {
            (0..m.cols())
                .map(|j| {
                    let v = &m.entries()[i * m.cols() + j];
                    (
                        EntryComp::Rational(rational_string(&v.re)),
                        EntryComp::Rational(rational_string(&v.im)),
                    )
                })
                .collect()
        })
        .collect()
}

/// Parse to floats, plus the exact matrix when every component is rational.
pub fn doc_to_matrix(doc: &MatrixDoc) -> Result<(CMatrix, Option<RatMatrix>), DocumentError> {
    let rows = doc.len();
    if rows == 0 || doc.iter().any(|r| r.len() != rows) {
        return Err(DocumentError::Bad(format!("matrix is not square ({} rows)", rows)));
    }
    let mut float_data = Vec::with_capacity(rows * rows);
    let mut rat_data: Option<Vec<CRational>> = Some(Vec::with_capacity(rows * rows));
    for row in doc {
        for (re, im) in row {
            float_data.push(C64::new(re.to_f64()?, im.to_f64()?));
            rat_data = match (rat_data, re.to_rational(), im.to_rational()) {
                (Some(mut v), Some(r), Some(i)) => {
                    v.push(CRational { re: r?, im: i? });
                    Some(v)
                }
                _ => None,
            };
        }
    }
    let float = CMatrix::from_vec(rows, rows, float_data);
    Ok((float, rat_data.map(|d| RatMatrix::from_vec(rows, rows, d))))
}

/// Serializable form of one assemblage element.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElementRecord {
    pub a: Vec<usize>,
    pub x: Vec<usize>,
    pub bobs: Vec<MatrixDoc>,
}

/// On-disk representation of an [`Assemblage`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssemblageDocument {
    pub format_version: String,
    pub scenario: ScenarioSpec,
    pub elements: Vec<ElementRecord>,
}

impl AssemblageDocument {
    pub fn from_assemblage(asm: &Assemblage) -> Self {
        let elements = asm
            .scenario
            .element_keys()
            .into_iter()
            .map(|(a, x)| {
                let key: ElemKey = (a.clone(), x.clone());
                let bobs = match &asm.exact_elements {
                    Some(exact) => exact[&key].iter().map(rat_matrix_to_doc).collect(),
                    None => asm.elements[&key].iter().map(|h| matrix_to_doc(h.matrix())).collect(),
                };
                ElementRecord { a, x, bobs }
            })
            .collect();
        AssemblageDocument {
            format_version: FORMAT_VERSION.into(),
            scenario: asm.scenario.clone(),
            elements,
        }
    }

    pub fn to_assemblage(&self) -> Result<Assemblage, DocumentError> {
        if self.format_version != FORMAT_VERSION {
            return Err(DocumentError::Bad(format!(
                "unsupported format_version {:?} (expected {:?})",
                self.format_version, FORMAT_VERSION
            )));
        }
        let mut elements = BTreeMap::new();
        let mut exact: Option<BTreeMap<ElemKey, Vec<RatMatrix>>> = Some(BTreeMap::new());
        for rec in &self.elements {
            let key: ElemKey = (rec.a.clone(), rec.x.clone());
            let mut bobs = Vec::with_capacity(rec.bobs.len());
            let mut rats = Vec::with_capacity(rec.bobs.len());
            for m in &rec.bobs {
                let (float, rat) = doc_to_matrix(m)?;
                bobs.push(HermitianMatrix::new(float).map_err(|e| {
                    DocumentError::Bad(format!("element {:?} is not Hermitian: {}", key, e))
                })?);
                match rat {
                    Some(r) => rats.push(r),
                    None => exact = None,
                }
            }
            if let Some(map) = exact.as_mut() {
                map.insert(key.clone(), rats);
            }
            elements.insert(key, bobs);
        }
        let asm = Assemblage::new(self.scenario.clone(), elements)?;
        Ok(match exact {
            Some(map) => asm.with_exact(map),
            None => asm,
        })
    }

    pub fn to_json(&self) -> Result<String, DocumentError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, DocumentError> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Serializable form of one party's measurement set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurementDoc {
    pub dim: usize,
    /// Outcome count per setting.
    pub outcomes: Vec<usize>,
    /// `[setting, outcome, matrix]` records.
    pub operators: Vec<OperatorRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorRecord {
    pub setting: usize,
    pub outcome: usize,
    pub matrix: MatrixDoc,
}

impl MeasurementDoc {
    pub fn from_measurement_set(ms: &MeasurementSet) -> Self {
        MeasurementDoc {
            dim: ms.dim,
            outcomes: ms.outcomes.clone(),
            operators: ms
                .operators
                .iter()
                .map(|(&(x, a), op)| OperatorRecord {
                    setting: x,
                    outcome: a,
                    matrix: matrix_to_doc(op.matrix()),
                })
                .collect(),
        }
    }

    pub fn to_measurement_set(&self) -> Result<MeasurementSet, DocumentError> {
        let mut operators = BTreeMap::new();
        for rec in &self.operators {
            let (float, _) = doc_to_matrix(&rec.matrix)?;
            let op = HermitianMatrix::new(float).map_err(|e| {
                DocumentError::Bad(format!(
                    "operator ({}, {}) is not Hermitian: {}",
                    rec.setting, rec.outcome, e
                ))
            })?;
            operators.insert((rec.setting, rec.outcome), op);
        }
        Ok(MeasurementSet::new(self.dim, self.outcomes.clone(), operators)?)
    }
}

/// On-disk representation of a [`QuantumRealization`] plus measurement
/// choices for the characterised parties (needed to form Bell correlations).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RealizationDocument {
    pub format_version: String,
    pub alice_dims: Vec<usize>,
    pub bob_dims: Vec<usize>,
    pub state: MatrixDoc,
    pub alice_measurements: Vec<MeasurementDoc>,
    #[serde(default)]
    pub bob_measurements: Vec<MeasurementDoc>,
}

impl RealizationDocument {
    pub fn from_parts(qr: &QuantumRealization, bob_meas: &[MeasurementSet]) -> Self {
        RealizationDocument {
            format_version: FORMAT_VERSION.into(),
            alice_dims: qr.alice_dims.clone(),
            bob_dims: qr.bob_dims.clone(),
            state: matrix_to_doc(qr.state.matrix()),
            alice_measurements: qr
                .alice_measurements
                .iter()
                .map(MeasurementDoc::from_measurement_set)
                .collect(),
            bob_measurements: bob_meas.iter().map(MeasurementDoc::from_measurement_set).collect(),
        }
    }

    pub fn to_parts(&self) -> Result<(QuantumRealization, Vec<MeasurementSet>), DocumentError> {
        if self.format_version != FORMAT_VERSION {
            return Err(DocumentError::Bad(format!(
                "unsupported format_version {:?} (expected {:?})",
                self.format_version, FORMAT_VERSION
            )));
        }
        let (state, _) = doc_to_matrix(&self.state)?;
        let state = HermitianMatrix::new(state)
            .map_err(|e| DocumentError::Bad(format!("state is not Hermitian: {}", e)))?;
        let alice_measurements = self
            .alice_measurements
            .iter()
            .map(|m| m.to_measurement_set())
            .collect::<Result<Vec<_>, _>>()?;
        let qr = QuantumRealization::new(
            self.alice_dims.clone(),
            self.bob_dims.clone(),
            state,
            alice_measurements,
        )?;
        let bob_meas = self
            .bob_measurements
            .iter()
            .map(|m| m.to_measurement_set())
            .collect::<Result<Vec<_>, _>>()?;
        Ok((qr, bob_meas))
    }

    pub fn to_json(&self) -> Result<String, DocumentError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, DocumentError> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::{load_fixture, pr_assemblage, FixtureName};

    #[test]
    fn rational_fixture_round_trips_bit_exactly() {
        let asm = load_fixture(FixtureName::Abb1);
        let doc = AssemblageDocument::from_assemblage(&asm);
        let json = doc.to_json().unwrap();
        let back = AssemblageDocument::from_json(&json).unwrap().to_assemblage().unwrap();
        assert_eq!(asm.exact_elements, back.exact_elements);
        assert!(back.exact_elements.is_some());
        assert!(back.validate().is_valid());
    }

    #[test]
    fn float_document_round_trips_to_tolerance() {
        let mut asm = pr_assemblage();
        asm.exact_elements = None;
        let doc = AssemblageDocument::from_assemblage(&asm);
        let back =
            AssemblageDocument::from_json(&doc.to_json().unwrap()).unwrap().to_assemblage().unwrap();
        assert!(back.exact_elements.is_none());
        for (key, bobs) in &asm.elements {
            for (k, b) in bobs.iter().enumerate() {
                assert!(back.elements[key][k].matrix().max_abs_diff(b.matrix()) == 0.0);
            }
        }
    }

    #[test]
    fn version_and_shape_are_checked() {
        let asm = pr_assemblage();
        let mut doc = AssemblageDocument::from_assemblage(&asm);
        doc.format_version = "2".into();
        assert!(matches!(doc.to_assemblage(), Err(DocumentError::Bad(_))));
        let mut doc = AssemblageDocument::from_assemblage(&asm);
        doc.elements[0].bobs[0].pop();
        assert!(matches!(doc.to_assemblage(), Err(DocumentError::Bad(_))));
    }

    #[test]
    fn realization_document_round_trips() {
        use crate::construct::{x_basis_projectors, z_basis_projectors};
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(7);
        let qr = crate::construct::random_qubit_realization(&mut rng, vec![2, 2]);
        let bob = MeasurementSet::from_projector_pairs(
            2,
            &[x_basis_projectors(), z_basis_projectors()],
        )
        .unwrap();
        let bobs = vec![bob.clone(), bob];
        let doc = RealizationDocument::from_parts(&qr, &bobs);
        let (qr2, bobs2) = RealizationDocument::from_json(&doc.to_json().unwrap())
            .unwrap()
            .to_parts()
            .unwrap();
        assert!(qr2.state.matrix().max_abs_diff(qr.state.matrix()) == 0.0);
        assert_eq!(bobs2.len(), 2);
        let a1 = crate::construct::from_quantum_realization(&qr).unwrap();
        let a2 = crate::construct::from_quantum_realization(&qr2).unwrap();
        for (key, bobs) in &a1.elements {
            for (k, b) in bobs.iter().enumerate() {
                assert!(a2.elements[key][k].matrix().max_abs_diff(b.matrix()) < 1e-14);
            }
        }
    }
}
