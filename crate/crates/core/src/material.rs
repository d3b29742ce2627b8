//! Per-phase material constants, the affine mixing rule and the ideal-gas laws.
//!
//! Each phase `+` / `-` carries a viscosity, a specific heat, an adiabatic
//! constant and a heat conductivity. The gas constant is derived from
//! `R = cv (gamma - 1)` and is never accepted as an independent input.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Tolerance on `c` outside `[0, 1]` accepted by [`MaterialTable::mix`].
pub const COLOR_TOLERANCE: f64 = 1e-12;

/// Below this volume fraction a phase is treated as absent.
pub const VANISHED_PHASE: f64 = 1e-12;

/// Material coefficient selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coefficient {
    Mu,
    Cv,
    Gamma,
    R,
    Kappa,
}

impl Coefficient {
    pub const ALL: [Coefficient; 5] = [
        Coefficient::Mu,
        Coefficient::Cv,
        Coefficient::Gamma,
        Coefficient::R,
        Coefficient::Kappa,
    ];
}

/// Input form of a material table, as it appears in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub cv_plus: f64,
    pub cv_minus: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub kappa_plus: f64,
    pub kappa_minus: f64,
}

impl Default for MaterialSpec {
    fn default() -> Self {
        MaterialSpec {
            mu_plus: 1.0,
            mu_minus: 2.0,
            cv_plus: 1.5,
            cv_minus: 1.0,
            gamma_plus: 1.4,
            gamma_minus: 5.0 / 3.0,
            kappa_plus: 0.5,
            kappa_minus: 1.0,
        }
    }
}

/// Validated material constants of the two phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MaterialSpec", into = "MaterialSpec")]
pub struct MaterialTable {
    plus: [f64; 5],
    minus: [f64; 5],
}

impl TryFrom<MaterialSpec> for MaterialTable {
    type Error = Error;

    fn try_from(spec: MaterialSpec) -> Result<Self> {
        MaterialTable::new(spec)
    }
}

impl From<MaterialTable> for MaterialSpec {
    fn from(t: MaterialTable) -> Self {
        t.spec()
    }
}

fn slot(f: Coefficient) -> usize {
    match f {
        Coefficient::Mu => 0,
        Coefficient::Cv => 1,
        Coefficient::Gamma => 2,
        Coefficient::R => 3,
        Coefficient::Kappa => 4,
    }
}

impl MaterialTable {
    pub fn new(spec: MaterialSpec) -> Result<Self> {
        let positive = [
            ("mu_plus", spec.mu_plus),
            ("mu_minus", spec.mu_minus),
            ("cv_plus", spec.cv_plus),
            ("cv_minus", spec.cv_minus),
            ("kappa_plus", spec.kappa_plus),
            ("kappa_minus", spec.kappa_minus),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(invalid(format!("{name} must be positive and finite, got {value}")));
            }
        }
        for (name, value) in [("gamma_plus", spec.gamma_plus), ("gamma_minus", spec.gamma_minus)] {
            if !(value.is_finite() && value > 1.0) {
                return Err(invalid(format!("{name} must exceed 1, got {value}")));
            }
        }
        let plus = [
            spec.mu_plus,
            spec.cv_plus,
            spec.gamma_plus,
            spec.cv_plus * (spec.gamma_plus - 1.0),
            spec.kappa_plus,
        ];
        let minus = [
            spec.mu_minus,
            spec.cv_minus,
            spec.gamma_minus,
            spec.cv_minus * (spec.gamma_minus - 1.0),
            spec.kappa_minus,
        ];
        Ok(MaterialTable { plus, minus })
    }

    /// A table whose two phases are the same fluid.
    pub fn single_fluid(mu: f64, cv: f64, gamma: f64, kappa: f64) -> Result<Self> {
        MaterialTable::new(MaterialSpec {
            mu_plus: mu,
            mu_minus: mu,
            cv_plus: cv,
            cv_minus: cv,
            gamma_plus: gamma,
            gamma_minus: gamma,
            kappa_plus: kappa,
            kappa_minus: kappa,
        })
    }

    pub fn spec(&self) -> MaterialSpec {
        MaterialSpec {
            mu_plus: self.plus[0],
            mu_minus: self.minus[0],
            cv_plus: self.plus[1],
            cv_minus: self.minus[1],
            gamma_plus: self.plus[2],
            gamma_minus: self.minus[2],
            kappa_plus: self.plus[4],
            kappa_minus: self.minus[4],
        }
    }

    /// The same materials with the `+` and `-` labels exchanged.
    pub fn swapped(&self) -> MaterialTable {
        MaterialTable {
            plus: self.minus,
            minus: self.plus,
        }
    }

    #[inline]
    pub fn plus(&self, f: Coefficient) -> f64 {
        self.plus[slot(f)]
    }

    #[inline]
    pub fn minus(&self, f: Coefficient) -> f64 {
        self.minus[slot(f)]
    }

    pub fn max(&self, f: Coefficient) -> f64 {
        self.plus(f).max(self.minus(f))
    }

    pub fn min(&self, f: Coefficient) -> f64 {
        self.plus(f).min(self.minus(f))
    }

    /// `f(c) = f+ c + f- (1 - c)`, checked.
    pub fn mix(&self, f: Coefficient, c: f64) -> Result<f64> {
        if !(c >= -COLOR_TOLERANCE && c <= 1.0 + COLOR_TOLERANCE) {
            return Err(invalid(format!("color {c} outside [0, 1]")));
        }
        Ok(self.mix_unchecked(f, c))
    }

    #[inline]
    pub fn mix_unchecked(&self, f: Coefficient, c: f64) -> f64 {
        self.plus(f) * c + self.minus(f) * (1.0 - c)
    }

    /// Ideal-gas pressure, internal energy and entropy at color `c`.
    pub fn eos(&self, c: f64, rho: f64, theta: f64) -> Result<Thermo> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(invalid(format!("density must be positive, got {rho}")));
        }
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(invalid(format!("temperature must be positive, got {theta}")));
        }
        let r = self.mix(Coefficient::R, c)?;
        let cv = self.mix_unchecked(Coefficient::Cv, c);
        Ok(Thermo {
            p: r * rho * theta,
            e: cv * theta,
            s: cv * theta.ln() - r * rho.ln(),
        })
    }

    /// Effective coefficients of a two-phase mixture at one point.
    ///
    /// A phase with volume fraction below [`VANISHED_PHASE`] contributes
    /// nothing; its density is never read.
    pub fn effective(
        &self,
        alpha_plus: f64,
        rho_plus: f64,
        rho_minus: f64,
        theta: f64,
    ) -> Result<EffectiveCoefficients> {
        if !(alpha_plus >= 0.0 && alpha_plus <= 1.0) {
            return Err(invalid(format!("volume fraction {alpha_plus} outside [0, 1]")));
        }
        if !(theta > 0.0) {
            return Err(invalid(format!("temperature must be positive, got {theta}")));
        }
        let alpha_minus = 1.0 - alpha_plus;
        if alpha_plus > VANISHED_PHASE && !(rho_plus > 0.0) {
            return Err(invalid("rho_plus must be positive where the + phase is present"));
        }
        if alpha_minus > VANISHED_PHASE && !(rho_minus > 0.0) {
            return Err(invalid("rho_minus must be positive where the - phase is present"));
        }
        Ok(self.effective_unchecked(alpha_plus, rho_plus, rho_minus, theta))
    }

    pub fn effective_unchecked(
        &self,
        alpha_plus: f64,
        rho_plus: f64,
        rho_minus: f64,
        theta: f64,
    ) -> EffectiveCoefficients {
        use Coefficient::*;
        let alpha_minus = 1.0 - alpha_plus;
        let (wp, wm) = phase_weights(alpha_plus);
        let mu_eff = 1.0 / (alpha_plus / self.plus(Mu) + alpha_minus / self.minus(Mu));
        let kappa_eff = 1.0 / (alpha_plus / self.plus(Kappa) + alpha_minus / self.minus(Kappa));
        let mass_p = wp * rho_plus;
        let mass_m = wm * rho_minus;
        let cv_eff = (mass_p * self.plus(Cv) + mass_m * self.minus(Cv)) / (mass_p + mass_m);
        let p_eff = mu_eff
            * (mass_p * self.plus(R) / self.plus(Mu) + mass_m * self.minus(R) / self.minus(Mu))
            * theta;
        EffectiveCoefficients {
            mu_eff,
            kappa_eff,
            cv_eff,
            p_eff,
        }
    }
}

/// Volume-fraction weights with vanished phases zeroed.
#[inline]
pub(crate) fn phase_weights(alpha_plus: f64) -> (f64, f64) {
    let alpha_minus = 1.0 - alpha_plus;
    let wp = if alpha_plus > VANISHED_PHASE { alpha_plus } else { 0.0 };
    let wm = if alpha_minus > VANISHED_PHASE { alpha_minus } else { 0.0 };
    (wp, wm)
}

/// Pointwise thermodynamic state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thermo {
    pub p: f64,
    pub e: f64,
    pub s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveCoefficients {
    pub mu_eff: f64,
    pub kappa_eff: f64,
    pub cv_eff: f64,
    pub p_eff: f64,
}
