use rand::Rng;

use super::config::GenerativeConfig;

pub type Mat4 = [[f64; 4]; 4];

/// Random linear transform parameters. The transform acts on millimetre
/// coordinates centred on the middle of the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineSample {
    pub rotation_deg: [f64; 3],
    pub scale: [f64; 3],
    /// Upper-triangular shear coefficients (xy, xz, yz).
    pub shear: [f64; 3],
    pub translation_mm: [f64; 3],
}

pub(crate) fn uniform<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    a + (b - a) * rng.random::<f64>()
}

fn matmul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            out[r][c] = (0..4).map(|m| a[r][m] * b[m][c]).sum();
        }
    }
    out
}

fn eye() -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

impl AffineSample {
    pub fn identity() -> Self {
        Self {
            rotation_deg: [0.0; 3],
            scale: [1.0; 3],
            shear: [0.0; 3],
            translation_mm: [0.0; 3],
        }
    }

    pub fn translation(t: [f64; 3]) -> Self {
        Self {
            translation_mm: t,
            ..Self::identity()
        }
    }

    /// Per-axis uniform draws from the configured intervals.
    pub fn sample<R: Rng + ?Sized>(cfg: &GenerativeConfig, rng: &mut R) -> Self {
        let mut draw3 = |a: f64, b: f64| [uniform(rng, a, b), uniform(rng, a, b), uniform(rng, a, b)];
        let rotation_deg = draw3(cfg.a_rot, cfg.b_rot);
        let scale = draw3(cfg.a_sc, cfg.b_sc);
        let shear = draw3(cfg.a_sh, cfg.b_sh);
        let translation_mm = draw3(cfg.a_tr, cfg.b_tr);
        Self {
            rotation_deg,
            scale,
            shear,
            translation_mm,
        }
    }

    pub fn translation_matrix(&self) -> Mat4 {
        let mut m = eye();
        for d in 0..3 {
            m[d][3] = self.translation_mm[d];
        }
        m
    }

    /// `Rz · Ry · Rx`.
    pub fn rotation_matrix(&self) -> Mat4 {
        let [ax, ay, az] = self.rotation_deg.map(f64::to_radians);
        let mut rx = eye();
        rx[1][1] = ax.cos();
        rx[1][2] = -ax.sin();
        rx[2][1] = ax.sin();
        rx[2][2] = ax.cos();
        let mut ry = eye();
        ry[0][0] = ay.cos();
        ry[0][2] = ay.sin();
        ry[2][0] = -ay.sin();
        ry[2][2] = ay.cos();
        let mut rz = eye();
        rz[0][0] = az.cos();
        rz[0][1] = -az.sin();
        rz[1][0] = az.sin();
        rz[1][1] = az.cos();
        matmul(&rz, &matmul(&ry, &rx))
    }

    pub fn shear_matrix(&self) -> Mat4 {
        let mut m = eye();
        m[0][1] = self.shear[0];
        m[0][2] = self.shear[1];
        m[1][2] = self.shear[2];
        m
    }

    pub fn scale_matrix(&self) -> Mat4 {
        let mut m = eye();
        for d in 0..3 {
            m[d][d] = self.scale[d];
        }
        m
    }

    /// Composed transform `T · R · Sh · Sc`.
    pub fn matrix(&self) -> Mat4 {
        matmul(
            &self.translation_matrix(),
            &matmul(
                &self.rotation_matrix(),
                &matmul(&self.shear_matrix(), &self.scale_matrix()),
            ),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;

    #[test]
    fn degenerate_config_gives_identity() {
        let cfg = GenerativeConfig::deterministic();
        let s = AffineSample::sample(&cfg, &mut StreamKey::new(3).rng());
        assert_eq!(s, AffineSample::identity());
        assert_eq!(s.matrix(), eye());
    }

    #[test]
    fn rotation_is_orthonormal() {
        let s = AffineSample {
            rotation_deg: [13.0, -7.0, 19.0],
            ..AffineSample::identity()
        };
        let r = s.rotation_matrix();
        for a in 0..3 {
            for b in 0..3 {
                let dot: f64 = (0..3).map(|i| r[i][a] * r[i][b]).sum();
                assert!((dot - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rotation_about_z_by_90() {
        let s = AffineSample {
            rotation_deg: [0.0, 0.0, 90.0],
            ..AffineSample::identity()
        };
        let m = s.matrix();
        // x axis maps to y axis
        assert!((m[1][0] - 1.0).abs() < 1e-12 && m[0][0].abs() < 1e-12);
    }

    #[test]
    fn composition_order() {
        let s = AffineSample {
            rotation_deg: [0.0; 3],
            scale: [2.0, 1.0, 1.0],
            shear: [0.5, 0.0, 0.0],
            translation_mm: [1.0, 0.0, 0.0],
        };
        // Sc first: (1,1,0) -> (2,1,0); Sh: x += 0.5*y -> (2.5,1,0); T: (3.5,1,0)
        let m = s.matrix();
        let p = [1.0, 1.0, 0.0, 1.0];
        let q: Vec<f64> = (0..3).map(|r| (0..4).map(|c| m[r][c] * p[c]).sum()).collect();
        assert_eq!(q, vec![3.5, 1.0, 0.0]);
    }

    #[test]
    fn same_seed_same_sample() {
        let cfg = GenerativeConfig::default();
        let a = AffineSample::sample(&cfg, &mut StreamKey::new(11).rng());
        let b = AffineSample::sample(&cfg, &mut StreamKey::new(11).rng());
        assert_eq!(a, b);
    }
}
