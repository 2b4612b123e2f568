//! JSON model files.
//!
//! ```text
//! {
//!   "L": 2, "N": 1000, "ell": 1,
//!   "alpha_tilde": [ [[[re, im], ...], ...] ],      ℓ matrices, L rows of L [re, im] pairs
//!   "beta_tilde":  [ ... ],
//!   "gamma_tilde": [ ... ],
//!   "variances": {"kind": "flat", "s": [..ℓ..], "t": [..ℓ..]}
//!              | {"kind": "banded", "width": w, "s": [..], "t": [..]}
//!              | {"kind": "explicit", "s": [ℓ × N × N], "t": [ℓ × N × N]},
//!   "a_tilde": [ N matrices ],
//!   "kappa": {"k1": 10, "k2": 10, "k3": 10}
//! }
//! ```
//!
//! Flat profiles mean `s_ij^μ = s[μ]/N`; banded profiles spread `s[μ]` evenly over a
//! periodic band of half-width `w`. Floats are written with shortest round-trip
//! formatting, so parse ∘ serialize is the identity bit for bit.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};
use crate::model::{ExpectationDiagonal, Kappa, KroneckerModel, StructureSet, VarianceKind, VarianceProfile};

type MatrixRepr = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    #[serde(rename = "L")]
    l: usize,
    #[serde(rename = "N")]
    n: usize,
    ell: usize,
    alpha_tilde: Vec<MatrixRepr>,
    beta_tilde: Vec<MatrixRepr>,
    gamma_tilde: Vec<MatrixRepr>,
    variances: VarianceFile,
    a_tilde: Vec<MatrixRepr>,
    #[serde(default)]
    kappa: Kappa,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum VarianceFile {
    Flat { s: Vec<f64>, t: Vec<f64> },
    Banded { width: usize, s: Vec<f64>, t: Vec<f64> },
    Explicit { s: Vec<Vec<Vec<f64>>>, t: Vec<Vec<Vec<f64>>> },
}

fn matrix_to_repr(m: &CMat) -> MatrixRepr {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
        .collect()
}

fn matrix_from_repr(field: &str, l: usize, rows: &MatrixRepr) -> Result<CMat> {
    if rows.len() != l {
        return Err(Error::dimension(field, format!("expected {l} rows, got {}", rows.len())));
    }
    for (r, row) in rows.iter().enumerate() {
        if row.len() != l {
            return Err(Error::dimension(
                format!("{field}[{r}]"),
                format!("expected {l} entries, got {}", row.len()),
            ));
        }
    }
    Ok(CMat::from_fn(l, l, |r, c| C64::new(rows[r][c][0], rows[r][c][1])))
}

fn matrices_from_repr(field: &str, count: usize, l: usize, list: &[MatrixRepr]) -> Result<Vec<CMat>> {
    if list.len() != count {
        return Err(Error::dimension(field, format!("expected {count} matrices, got {}", list.len())));
    }
    list.iter()
        .enumerate()
        .map(|(i, m)| matrix_from_repr(&format!("{field}[{i}]"), l, m))
        .collect()
}

fn square_from_nested(field: &str, n: usize, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    if rows.len() != n {
        return Err(Error::dimension(field, format!("expected {n} rows, got {}", rows.len())));
    }
    let mut out = Vec::with_capacity(n * n);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(Error::dimension(
                format!("{field}[{r}]"),
                format!("expected {n} entries, got {}", row.len()),
            ));
        }
        out.extend_from_slice(row);
    }
    Ok(out)
}

fn nested_from_square(n: usize, flat: &[f64]) -> Vec<Vec<f64>> {
    flat.chunks(n).map(|c| c.to_vec()).collect()
}

impl ModelFile {
    fn from_model(model: &KroneckerModel) -> Self {
        let n = model.n();
        let variances = match &model.variances.kind {
            VarianceKind::Flat { s, t } => VarianceFile::Flat { s: s.clone(), t: t.clone() },
            VarianceKind::Banded { width, s, t } => VarianceFile::Banded {
                width: *width,
                s: s.clone(),
                t: t.clone(),
            },
            VarianceKind::Explicit { s, t } => VarianceFile::Explicit {
                s: s.iter().map(|a| nested_from_square(n, a)).collect(),
                t: t.iter().map(|a| nested_from_square(n, a)).collect(),
            },
        };
        let st = &model.structure;
        ModelFile {
            l: st.l,
            n,
            ell: st.ell(),
            alpha_tilde: st.alpha_tilde.iter().map(matrix_to_repr).collect(),
            beta_tilde: st.beta_tilde.iter().map(matrix_to_repr).collect(),
            gamma_tilde: st.gamma_tilde.iter().map(matrix_to_repr).collect(),
            variances,
            a_tilde: model.expectation.a_tilde.iter().map(matrix_to_repr).collect(),
            kappa: model.kappa,
        }
    }

    fn into_model(self) -> Result<KroneckerModel> {
        let (l, n, ell) = (self.l, self.n, self.ell);
        if l == 0 {
            return Err(Error::dimension("L", "must be positive"));
        }
        if n == 0 {
            return Err(Error::dimension("N", "must be positive"));
        }
        let structure = StructureSet {
            l,
            alpha_tilde: matrices_from_repr("alpha_tilde", ell, l, &self.alpha_tilde)?,
            beta_tilde: matrices_from_repr("beta_tilde", ell, l, &self.beta_tilde)?,
            gamma_tilde: matrices_from_repr("gamma_tilde", ell, l, &self.gamma_tilde)?,
        };
        let kind = match self.variances {
            VarianceFile::Flat { s, t } => VarianceKind::Flat { s, t },
            VarianceFile::Banded { width, s, t } => VarianceKind::Banded { width, s, t },
            VarianceFile::Explicit { s, t } => VarianceKind::Explicit {
                s: s.iter()
                    .enumerate()
                    .map(|(mu, a)| square_from_nested(&format!("variances.s[{mu}]"), n, a))
                    .collect::<Result<_>>()?,
                t: t.iter()
                    .enumerate()
                    .map(|(nu, a)| square_from_nested(&format!("variances.t[{nu}]"), n, a))
                    .collect::<Result<_>>()?,
            },
        };
        let model = KroneckerModel {
            structure,
            variances: VarianceProfile { n, kind },
            expectation: ExpectationDiagonal {
                a_tilde: matrices_from_repr("a_tilde", n, l, &self.a_tilde)?,
            },
            kappa: self.kappa,
        };
        model.check_dimensions()?;
        Ok(model)
    }
}

/// Serializes a model to its JSON file form (compact, deterministic).
pub fn to_json(model: &KroneckerModel) -> Result<String> {
    Ok(serde_json::to_string(&ModelFile::from_model(model))?)
}

pub fn to_json_pretty(model: &KroneckerModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelFile::from_model(model))?)
}

/// Parses a model file. Shape problems surface as [`Error::Dimension`] naming the field;
/// admissibility is left to [`crate::model::validate`].
pub fn from_json(text: &str) -> Result<KroneckerModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    file.into_model()
}

/// SHA-256 of the canonical compact serialization.
pub fn model_hash(model: &KroneckerModel) -> Result<String> {
    let json = to_json(model)?;
    Ok(hex::encode(Sha256::digest(json.as_bytes())))
}
