//! Built-in models used by the acceptance suite and the `preset` command.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::linalg::{c, CMat, C64};
use crate::model::{ExpectationDiagonal, Kappa, KroneckerModel, StructureSet, VarianceProfile};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preset {
    /// Flat Wigner matrix, variance 1/N, semicircle on [−2, 2].
    Wigner,
    /// Flat i.i.d. (Ginibre-type) matrix, variance 1/N, circular law on the unit disk.
    Ginibre,
    /// Shifted i.i.d. block matrix with diagonal shifts ±0.97.
    Fig1a,
    /// Shifts ±1.0.
    Fig1b,
    /// Shifts ±1.03.
    Fig1c,
    /// Shifts 0, ±1.4, ±0.8 + 1.26i.
    Fig1d,
    /// Flat Wigner noise on top of a deterministic diagonal ±3 (half each).
    TwoBand,
}

impl Preset {
    pub const ALL: [Preset; 7] = [
        Preset::Wigner,
        Preset::Ginibre,
        Preset::Fig1a,
        Preset::Fig1b,
        Preset::Fig1c,
        Preset::Fig1d,
        Preset::TwoBand,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Wigner => "wigner",
            Preset::Ginibre => "ginibre",
            Preset::Fig1a => "fig1a",
            Preset::Fig1b => "fig1b",
            Preset::Fig1c => "fig1c",
            Preset::Fig1d => "fig1d",
            Preset::TwoBand => "two-band",
        }
    }

    /// Diagonal shifts `ζ_i` of the shifted i.i.d. presets.
    pub fn shift_points(self) -> Option<Vec<C64>> {
        match self {
            Preset::Ginibre => Some(vec![c(0.0, 0.0)]),
            Preset::Fig1a => Some(vec![c(0.97, 0.0), c(-0.97, 0.0)]),
            Preset::Fig1b => Some(vec![c(1.0, 0.0), c(-1.0, 0.0)]),
            Preset::Fig1c => Some(vec![c(1.03, 0.0), c(-1.03, 0.0)]),
            Preset::Fig1d => Some(vec![
                c(0.0, 0.0),
                c(1.4, 0.0),
                c(-1.4, 0.0),
                c(0.8, 1.26),
                c(-0.8, 1.26),
            ]),
            Preset::Wigner | Preset::TwoBand => None,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown preset `{s}`")))
    }
}

fn scalar(v: f64) -> CMat {
    CMat::from_element(1, 1, c(v, 0.0))
}

fn unit(l: usize, a: usize, b: usize) -> CMat {
    let mut m = CMat::zeros(l, l);
    m[(a, b)] = c(1.0, 0.0);
    m
}

pub fn build(preset: Preset, n: usize) -> KroneckerModel {
    match preset {
        Preset::Wigner => wigner(n, vec![0.0; n]),
        Preset::TwoBand => wigner(
            n,
            (0..n).map(|i| if i < n / 2 { 3.0 } else { -3.0 }).collect(),
        ),
        other => shifted_iid(&other.shift_points().expect("shifted i.i.d. preset"), n),
    }
}

/// Flat Wigner matrix `X_1` (variance 1/N) plus a real diagonal.
pub fn wigner(n: usize, diagonal: Vec<f64>) -> KroneckerModel {
    KroneckerModel {
        structure: StructureSet {
            l: 1,
            alpha_tilde: vec![scalar(1.0)],
            beta_tilde: vec![scalar(0.0)],
            gamma_tilde: vec![scalar(0.0)],
        },
        variances: VarianceProfile::flat(n, vec![1.0], vec![0.0]),
        expectation: ExpectationDiagonal {
            a_tilde: diagonal.into_iter().map(scalar).collect(),
        },
        kappa: Kappa::default(),
    }
}

/// `X = diag(ζ_1, …, ζ_L) ⊗ 1 + W` with `W` an LN×LN matrix of i.i.d. entries of variance 1/(NL).
///
/// `W` is written as `Σ_{a,b} E_ab ⊗ Y_ab` with L² independent families, so ℓ = L².
pub fn shifted_iid(points: &[C64], n: usize) -> KroneckerModel {
    let l = points.len();
    let ell = l * l;
    let beta_tilde = (0..ell).map(|p| unit(l, p / l, p % l)).collect();
    let diag = CMat::from_fn(l, l, |r, col| if r == col { points[r] } else { c(0.0, 0.0) });
    KroneckerModel {
        structure: StructureSet {
            l,
            alpha_tilde: vec![CMat::zeros(l, l); ell],
            beta_tilde,
            gamma_tilde: vec![CMat::zeros(l, l); ell],
        },
        variances: VarianceProfile::flat(n, vec![0.0; ell], vec![1.0 / l as f64; ell]),
        expectation: ExpectationDiagonal { a_tilde: vec![diag; n] },
        kappa: Kappa::default(),
    }
}

/// Deterministic model (all variances zero) with the given L×L expectation blocks.
pub fn deterministic(a_tilde: Vec<CMat>) -> KroneckerModel {
    let l = a_tilde[0].nrows();
    let n = a_tilde.len();
    KroneckerModel {
        structure: StructureSet {
            l,
            alpha_tilde: vec![CMat::zeros(l, l)],
            beta_tilde: vec![CMat::zeros(l, l)],
            gamma_tilde: vec![CMat::zeros(l, l)],
        },
        variances: VarianceProfile::flat(n, vec![0.0], vec![0.0]),
        expectation: ExpectationDiagonal { a_tilde },
        kappa: Kappa::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate;

    #[test]
    fn presets_validate_and_parse_by_name() {
        for p in Preset::ALL {
            let m = build(p, 10);
            assert!(validate(&m).unwrap().is_admissible(), "{p}");
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("nope".parse::<Preset>().is_err());
    }

    #[test]
    fn shifted_iid_family_count() {
        let m = build(Preset::Fig1d, 3);
        assert_eq!(m.l(), 5);
        assert_eq!(m.ell(), 25);
    }
}
