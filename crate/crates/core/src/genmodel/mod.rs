//! Domain-randomization generator of (synthetic image, target label map)
//! training pairs.
//!
//! A prepared label map is spatially deformed (random affine plus a smooth
//! nonlinear displacement), a noisy Gaussian signal is drawn per label on
//! the deformed map, and the result is corrupted by a multiplicative bias
//! field and a random gamma. The extra-cerebral label takes part in image
//! synthesis but is removed from the target.
//!
//! Every stage draws from its own [`StreamKey`] child of the sample key, so
//! a sample is a pure function of `(labels, config, seed)`.

mod affine;
mod config;
mod field;
mod intensity;

pub use affine::{AffineSample, Mat4};
pub use config::{Disabled, GenerativeConfig};
pub use field::{
    deform_labelmap, sample_nonlinear_field, upsample_linear, BiasControl, DeformationField, BIAS_CONTROL_POINTS,
    NONLIN_CONTROL_POINTS,
};
pub use intensity::{min_max_normalize, sample_intensities, sample_raw_intensities, IntensityPrior};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::labels::EXTRA_CEREBRAL;
use crate::rng::StreamKey;
use crate::volume::{LabelVolume, ScalarVolume};

const STREAM_AFFINE: u64 = 1;
const STREAM_NONLIN: u64 = 2;
const STREAM_PRIOR: u64 = 3;
const STREAM_NOISE: u64 = 4;
const STREAM_BIAS: u64 = 5;
const STREAM_GAMMA: u64 = 6;

pub fn sample_affine<R: Rng + ?Sized>(cfg: &GenerativeConfig, rng: &mut R) -> AffineSample {
    AffineSample::sample(cfg, rng)
}

/// Multiplies the image by `exp` of the upsampled control field.
pub fn apply_bias_control(img: &ScalarVolume, control: &BiasControl) -> ScalarVolume {
    let mult = control.multiplier(img.dims());
    let data = img.data().par_iter().zip(&mult).map(|(&v, &m)| v * m).collect();
    img.with_data(data).expect("same geometry")
}

/// Draws a bias field (std uniform in `[0, b_B]`) and applies it.
pub fn apply_bias_field<R: Rng + ?Sized>(img: &ScalarVolume, cfg: &GenerativeConfig, rng: &mut R) -> ScalarVolume {
    if cfg.b_bias == 0.0 {
        return img.clone();
    }
    let (control, _) = BiasControl::sample(cfg, rng, img.dims());
    apply_bias_control(img, &control)
}

/// `img^exponent` voxelwise; requires intensities in `[0, 1]`.
pub fn apply_gamma_exponent(img: &ScalarVolume, exponent: f64) -> Result<ScalarVolume> {
    if let Some(&bad) = img.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::IntensityOutOfRange(bad));
    }
    if exponent == 1.0 {
        return Ok(img.clone());
    }
    let e = exponent as f32;
    let data = img.data().par_iter().map(|&v| v.powf(e)).collect();
    img.with_data(data)
}

/// Draws `g ~ N(0, sigma2_gamma)` (variance) and raises the image to `exp(g)`.
pub fn apply_gamma<R: Rng + ?Sized>(img: &ScalarVolume, cfg: &GenerativeConfig, rng: &mut R) -> Result<ScalarVolume> {
    apply_gamma_exponent(img, sample_gamma_exponent(cfg, rng))
}

fn sample_gamma_exponent<R: Rng + ?Sized>(cfg: &GenerativeConfig, rng: &mut R) -> f64 {
    let g: f64 = rng.sample::<f64, _>(StandardNormal) * cfg.sigma2_gamma.sqrt();
    g.exp()
}

/// Removes the extra-cerebral label from the target; the image is untouched.
pub fn finalize_pair(img: ScalarVolume, deformed: &LabelVolume) -> Result<(ScalarVolume, LabelVolume)> {
    img.geometry()
        .ensure_same_grid(deformed.geometry(), "image and deformed label map")?;
    let target = deformed.map(|l| if l == EXTRA_CEREBRAL { 0 } else { l })?;
    Ok((img, target))
}

/// Everything drawn while generating one sample, plus the ranges used by
/// each min-max normalization.
#[derive(Clone, Debug)]
pub struct SampleTrace {
    pub affine: AffineSample,
    pub prior: IntensityPrior,
    /// Raw intensity range mapped onto `[0, 1]` before the bias field.
    pub raw_range: (f32, f32),
    pub bias: Option<BiasControl>,
    pub bias_std: f64,
    /// Range mapped onto `[0, 1]` after the bias field.
    pub bias_range: Option<(f32, f32)>,
    pub gamma_exponent: f64,
    /// Range mapped onto `[0, 1]` after the gamma.
    pub gamma_range: (f32, f32),
}

#[derive(Clone, Debug)]
pub struct GeneratedSample {
    pub image: ScalarVolume,
    pub target: LabelVolume,
    pub trace: SampleTrace,
}

/// Generates one training pair. See the module docs for the stage order.
pub fn generate_sample(labels: &LabelVolume, cfg: &GenerativeConfig, seed: u64) -> Result<(ScalarVolume, LabelVolume)> {
    generate_with_key(labels, cfg, StreamKey::new(seed)).map(|s| (s.image, s.target))
}

pub fn generate_sample_traced(labels: &LabelVolume, cfg: &GenerativeConfig, seed: u64) -> Result<GeneratedSample> {
    generate_with_key(labels, cfg, StreamKey::new(seed))
}

/// Same as [`generate_sample_traced`] with an explicit stream key, e.g. from
/// [`crate::rng::sample_key`].
pub fn generate_with_key(labels: &LabelVolume, cfg: &GenerativeConfig, key: StreamKey) -> Result<GeneratedSample> {
    cfg.validate()?;
    let geom = labels.geometry();

    let affine = sample_affine(cfg, &mut key.child(STREAM_AFFINE).rng());
    let field = sample_nonlinear_field(cfg, &mut key.child(STREAM_NONLIN).rng(), geom);
    let deformed = deform_labelmap(labels, &affine, &field);
    drop(field);

    let prior = IntensityPrior::sample(cfg, &mut key.child(STREAM_PRIOR).rng());
    let raw = sample_raw_intensities(&deformed, &prior, key.child(STREAM_NOISE))?;
    let (img, raw_range) = min_max_normalize(&raw);
    drop(raw);

    let mut bias_rng = key.child(STREAM_BIAS).rng();
    let (img, bias, bias_std, bias_range) = if cfg.b_bias > 0.0 {
        let (control, std) = BiasControl::sample(cfg, &mut bias_rng, img.dims());
        let (img, range) = min_max_normalize(&apply_bias_control(&img, &control));
        (img, Some(control), std, Some(range))
    } else {
        (img, None, 0.0, None)
    };

    let gamma_exponent = sample_gamma_exponent(cfg, &mut key.child(STREAM_GAMMA).rng());
    let (img, gamma_range) = min_max_normalize(&apply_gamma_exponent(&img, gamma_exponent)?);

    let (image, target) = finalize_pair(img, &deformed)?;
    Ok(GeneratedSample {
        image,
        target,
        trace: SampleTrace {
            affine,
            prior,
            raw_range,
            bias,
            bias_std,
            bias_range,
            gamma_exponent,
            gamma_range,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;

    fn phantom() -> LabelVolume {
        let g = Geometry::from_spacing([12, 10, 8], [1.0; 3]).unwrap();
        LabelVolume::from_fn(g, |[i, j, k]| {
            if (3..9).contains(&i) && (3..7).contains(&j) && (2..6).contains(&k) {
                if i < 6 {
                    2
                } else {
                    17
                }
            } else if (1..11).contains(&i) && (1..9).contains(&j) {
                EXTRA_CEREBRAL
            } else {
                0
            }
        })
        .unwrap()
    }

    #[test]
    fn gamma_exponent_cases() {
        let g = Geometry::from_spacing([3, 1, 1], [1.0; 3]).unwrap();
        let img = ScalarVolume::new(g, vec![0.0, 0.25, 1.0]).unwrap();
        assert_eq!(apply_gamma_exponent(&img, 1.0).unwrap(), img);
        let sq = apply_gamma_exponent(&img, 2.0).unwrap();
        assert_eq!(sq.data(), &[0.0, 0.0625, 1.0]);
        let bad = img.map(|v| v + 0.5).unwrap();
        assert!(apply_gamma_exponent(&bad, 2.0).is_err());
    }

    #[test]
    fn zero_gamma_variance_is_identity() {
        let g = Geometry::from_spacing([3, 1, 1], [1.0; 3]).unwrap();
        let img = ScalarVolume::new(g, vec![0.0, 0.3, 1.0]).unwrap();
        let cfg = GenerativeConfig {
            sigma2_gamma: 0.0,
            ..Default::default()
        };
        assert_eq!(apply_gamma(&img, &cfg, &mut StreamKey::new(1).rng()).unwrap(), img);
    }

    #[test]
    fn zero_bias_bound_is_identity() {
        let g = Geometry::from_spacing([3, 2, 1], [1.0; 3]).unwrap();
        let img = ScalarVolume::new(g, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let cfg = GenerativeConfig {
            b_bias: 0.0,
            ..Default::default()
        };
        assert_eq!(apply_bias_field(&img, &cfg, &mut StreamKey::new(1).rng()), img);
    }

    #[test]
    fn finalize_removes_extracerebral_only() {
        let labels = phantom();
        let img = labels.map(|l| l as f32).unwrap();
        let (out_img, target) = finalize_pair(img.clone(), &labels).unwrap();
        assert_eq!(out_img, img);
        assert!(!target.label_domain().contains(&EXTRA_CEREBRAL));
        for (&t, &l) in target.data().iter().zip(labels.data()) {
            assert_eq!(t, if l == EXTRA_CEREBRAL { 0 } else { l });
        }
    }

    #[test]
    fn fully_disabled_generator_is_constant_map() {
        let labels = phantom();
        let s = generate_sample_traced(&labels, &GenerativeConfig::deterministic(), 5).unwrap();
        let (lo, hi) = s.trace.raw_range;
        for ((&v, &l), &t) in s.image.data().iter().zip(labels.data()).zip(s.target.data()) {
            let (mu, _) = s.trace.prior.get(l).unwrap();
            let expected = (mu as f32 - lo) / (hi - lo);
            assert!((v - expected).abs() < 1e-5);
            assert_eq!(t, if l == EXTRA_CEREBRAL { 0 } else { l });
        }
    }

    #[test]
    fn output_grid_equals_input_grid() {
        let labels = phantom();
        let (img, target) = generate_sample(&labels, &GenerativeConfig::default(), 3).unwrap();
        assert_eq!(img.geometry(), labels.geometry());
        assert_eq!(target.geometry(), labels.geometry());
        assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
