use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// Priors of the generative model. Intervals are `[a_*, b_*]`; upper-only
/// parameters bound a non-negative amplitude. Field names follow the usual
/// parameter symbols so config files can use them directly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerativeConfig {
    /// Rotation (degrees).
    pub a_rot: f64,
    pub b_rot: f64,
    pub a_sc: f64,
    pub b_sc: f64,
    pub a_sh: f64,
    pub b_sh: f64,
    /// Translation (mm).
    pub a_tr: f64,
    pub b_tr: f64,
    /// Upper bound of the nonlinear deformation std (mm).
    pub b_nonlin: f64,
    pub a_mu: f64,
    pub b_mu: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    /// Upper bound of the log bias-field std.
    #[serde(rename = "b_B")]
    pub b_bias: f64,
    /// Variance of the log-gamma exponent.
    pub sigma2_gamma: f64,

    // Resolution randomization is not supported; these keys are accepted
    // only with a null / "None" value.
    #[serde(rename = "r_HR", skip_serializing)]
    pub r_hr: Disabled,
    #[serde(skip_serializing)]
    pub b_res: Disabled,
    #[serde(skip_serializing)]
    pub a_alpha: Disabled,
    #[serde(skip_serializing)]
    pub b_alpha: Disabled,
}

impl Default for GenerativeConfig {
    fn default() -> Self {
        Self {
            a_rot: -20.0,
            b_rot: 20.0,
            a_sc: 0.8,
            b_sc: 1.2,
            a_sh: -0.015,
            b_sh: 0.015,
            a_tr: -30.0,
            b_tr: 30.0,
            b_nonlin: 4.0,
            a_mu: 0.0,
            b_mu: 255.0,
            a_sigma: 0.0,
            b_sigma: 35.0,
            b_bias: 0.9,
            sigma2_gamma: 0.4,
            r_hr: Disabled,
            b_res: Disabled,
            a_alpha: Disabled,
            b_alpha: Disabled,
        }
    }
}

impl GenerativeConfig {
    /// Every randomization switched off: identity geometry, noiseless
    /// intensities, no bias field and no gamma. Means still span `[0, 255]`.
    pub fn deterministic() -> Self {
        Self {
            a_rot: 0.0,
            b_rot: 0.0,
            a_sc: 1.0,
            b_sc: 1.0,
            a_sh: 0.0,
            b_sh: 0.0,
            a_tr: 0.0,
            b_tr: 0.0,
            b_nonlin: 0.0,
            a_sigma: 0.0,
            b_sigma: 0.0,
            b_bias: 0.0,
            sigma2_gamma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let intervals = [
            ("rot", self.a_rot, self.b_rot),
            ("sc", self.a_sc, self.b_sc),
            ("sh", self.a_sh, self.b_sh),
            ("tr", self.a_tr, self.b_tr),
            ("mu", self.a_mu, self.b_mu),
            ("sigma", self.a_sigma, self.b_sigma),
        ];
        for (name, a, b) in intervals {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidParameter(format!("a_{name}/b_{name} must be finite")));
            }
            if a > b {
                return Err(Error::InvalidParameter(format!(
                    "a_{name} = {a} exceeds b_{name} = {b}"
                )));
            }
        }
        if self.a_sc <= 0.0 {
            return Err(Error::InvalidParameter("a_sc must be positive".into()));
        }
        if self.a_sigma < 0.0 {
            return Err(Error::InvalidParameter("a_sigma must be non-negative".into()));
        }
        for (name, v) in [
            ("b_nonlin", self.b_nonlin),
            ("b_B", self.b_bias),
            ("sigma2_gamma", self.sigma2_gamma),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Placeholder for a parameter that must stay disabled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Disabled;

impl<'de> Deserialize<'de> for Disabled {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Unit(()),
        }
        match Option::<Raw>::deserialize(d)? {
            None | Some(Raw::Unit(())) => Ok(Disabled),
            Some(Raw::Text(s)) if s.eq_ignore_ascii_case("none") => Ok(Disabled),
            Some(_) => Err(serde::de::Error::custom(
                "resolution randomization parameters are disabled and only accept None",
            )),
        }
    }
}
