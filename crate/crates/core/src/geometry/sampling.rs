//! Random rotations, von Mises–Fisher directions, and isotropic rotation
//! noise, with densities.
//!
//! Rotation densities are with respect to Haar measure normalized to total
//! mass π², directions on S² with respect to surface area (total 4π), and
//! angles on S¹ with respect to arc length (total 2π).

use super::{Quat, Vec3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::{PI, TAU};

/// Total Haar mass assigned to SO(3).
pub const SO3_MEASURE: f64 = PI * PI;
pub const S2_MEASURE: f64 = 4.0 * PI;
pub const S1_MEASURE: f64 = TAU;

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn gaussian_vec3<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Vec3 {
    Vec3::new(standard_normal(rng), standard_normal(rng), standard_normal(rng)) * sigma
}

/// Haar-uniform rotation via a normalized 4D Gaussian.
pub fn uniform_rotation<R: Rng + ?Sized>(rng: &mut R) -> Quat {
    loop {
        let v = [standard_normal(rng), standard_normal(rng), standard_normal(rng), standard_normal(rng)];
        let n2: f64 = v.iter().map(|x| x * x).sum();
        if n2 > 1e-12 {
            return Quat::new(v[0], v[1], v[2], v[3]).canonical();
        }
    }
}

pub fn uniform_rotation_logpdf() -> f64 {
    -SO3_MEASURE.ln()
}

pub fn uniform_s2<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = gaussian_vec3(rng, 1.0);
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Two unit vectors completing `n` to a right-handed orthonormal basis.
pub fn orthonormal_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = n.cross(&helper).normalize();
    let v = n.cross(&u);
    (u, v)
}

/// Draws from vMF(mean, κ) on S² by inverting the marginal CDF of the
/// cosine to the mean axis.
pub fn sample_vmf_s2<R: Rng + ?Sized>(rng: &mut R, mean: &Vec3, kappa: f64) -> Vec3 {
    if kappa < 1e-8 {
        return uniform_s2(rng);
    }
    let u: f64 = rng.random();
    let w = (1.0 + (u + (1.0 - u) * (-2.0 * kappa).exp()).ln() / kappa).clamp(-1.0, 1.0);
    let angle = rng.random::<f64>() * TAU;
    let (e1, e2) = orthonormal_basis(mean);
    let r = (1.0 - w * w).max(0.0).sqrt();
    (mean * w + (e1 * angle.cos() + e2 * angle.sin()) * r).normalize()
}

/// Log density of vMF(mean, κ) on S² with respect to surface area.
pub fn vmf_s2_logpdf(x: &Vec3, mean: &Vec3, kappa: f64) -> f64 {
    if kappa < 1e-8 {
        return -S2_MEASURE.ln();
    }
    // κ / (4π sinh κ) · exp(κ μ·x), written to avoid overflow.
    kappa.ln() - TAU.ln() - (-(-2.0 * kappa).exp()).ln_1p() + kappa * (mean.dot(x) - 1.0)
}

/// Isotropic rotation noise: `R = exp(ω) · R0` with `ω ~ N(0, σ² I)`.
///
/// The induced density on SO(3) depends only on the angle of `R R0⁻¹`, so a
/// random walk built from it is symmetric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationNoise {
    pub sigma: f64,
}

impl RotationNoise {
    /// Noise whose concentration matches a vMF-style `κ` (σ² = 1/κ).
    pub fn from_kappa(kappa: f64) -> Self {
        Self { sigma: 1.0 / kappa.max(1e-12).sqrt() }
    }

    pub fn perturb<R: Rng + ?Sized>(&self, rng: &mut R, center: &Quat) -> Quat {
        let w = gaussian_vec3(rng, self.sigma);
        Quat::from_rotation_vector(&w).mul(center).canonical()
    }

    /// Log density of `q` given `center`, with respect to Haar measure of
    /// total mass π².
    pub fn logpdf(&self, q: &Quat, center: &Quat) -> f64 {
        let delta = q.mul(&center.conjugate());
        let theta = delta.to_rotation_vector().norm();
        let s2 = self.sigma * self.sigma;
        let log_norm = -1.5 * (TAU * s2).ln();
        // Haar (mass π²) in exponential coordinates: (1 - cos θ) / (4 θ²) dω.
        // Sum the Gaussian over every preimage ω_k = axis · (θ + 2πk).
        let half = theta / 2.0;
        let sin_half_sq = half.sin().powi(2);
        let mut terms: Vec<f64> = Vec::with_capacity(7);
        for k in -3i32..=3 {
            let r = theta + TAU * k as f64;
            if k != 0 && sin_half_sq < 1e-300 {
                continue;
            }
            // r² / (1 - cos θ), stable as θ → 0 for the principal branch.
            let ratio = if k == 0 {
                if half < 1e-8 {
                    2.0
                } else {
                    let s = half / half.sin();
                    2.0 * s * s
                }
            } else {
                r * r / (2.0 * sin_half_sq)
            };
            terms.push(4.0f64.ln() + ratio.ln() + log_norm - r * r / (2.0 * s2));
        }
        log_sum_exp(&terms)
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn normal_logpdf(x: f64, mean: f64, sigma: f64) -> f64 {
    let d = (x - mean) / sigma;
    -0.5 * d * d - sigma.ln() - 0.5 * TAU.ln()
}
