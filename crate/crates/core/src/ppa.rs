//! Pixels-per-area (PPA): value, visibility filtering and analytic gradients.
//!
//! For a camera at `p_d` looking along `n_d` and a patch `(p_j, n_j)`,
//! `ppa = cos(alpha) / d` with `d = |p_d - p_j|` and `alpha` the acute angle
//! between `n_d` and `n_j`, i.e. `cos(alpha) = |n_d . n_j|`. The absolute
//! value is what makes the position gradient point *toward* a head-on patch;
//! the raw signed dot product would push the camera away.
//!
//! With the view direction slaved to each patch (look-at model) the value
//! becomes `((p_d - p_j) . n_j) / |p_d - p_j|^2`, whose level sets in a
//! plane through the normal are circles tangent to the patch.

use crate::actor::{Patch, Vec3};
use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};

/// Camera position and unit viewing direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub position: Vec3,
    pub view_dir: Vec3,
}

impl CameraPose {
    pub fn new(position: Vec3, view_dir: Vec3) -> Result<Self> {
        let n = view_dir.norm();
        if !(n > 1e-12) || !n.is_finite() {
            return Err(Error::Argument(format!(
                "view direction must be non-zero, got {view_dir:?}"
            )));
        }
        Ok(Self {
            position,
            view_dir: view_dir / n,
        })
    }

    /// Pose at `position` looking at `target`. Falls back to looking along
    /// -z when the two coincide.
    pub fn look_at(position: Vec3, target: Vec3) -> Self {
        let d = target - position;
        let n = d.norm();
        let view_dir = if n > 1e-12 { d / n } else { -Vec3::z() };
        Self { position, view_dir }
    }
}

/// Gradient of a PPA sum with respect to the camera pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpaGradient {
    pub d_position: Vec3,
    /// Tangent to the unit sphere at the view direction.
    pub d_view_dir: Vec3,
}

impl PpaGradient {
    pub fn zero() -> Self {
        Self {
            d_position: Vec3::zeros(),
            d_view_dir: Vec3::zeros(),
        }
    }
}

/// True when the patch faces the camera position.
pub fn is_front_facing(position: &Vec3, patch: &Patch) -> bool {
    (position - patch.centroid).dot(&patch.normal) > 0.0
}

/// Patches that face the camera and whose centroid lies in the view frustum.
/// Occlusion is not tested.
pub fn visible_patches(camera: &CameraPose, intr: &CameraIntrinsics, patches: &[Patch]) -> Vec<Patch> {
    patches
        .iter()
        .filter(|p| is_front_facing(&camera.position, p) && intr.in_frustum(camera, &p.centroid))
        .copied()
        .collect()
}

fn offset(position: &Vec3, patch: &Patch) -> Result<(Vec3, f64)> {
    let r = position - patch.centroid;
    let d = r.norm();
    if d == 0.0 {
        return Err(Error::ZeroDistance);
    }
    Ok((r, d))
}

/// `|view_dir . normal| / distance`.
pub fn ppa_value(camera: &CameraPose, patch: &Patch) -> Result<f64> {
    let (_, d) = offset(&camera.position, patch)?;
    Ok(camera.view_dir.dot(&patch.normal).abs() / d)
}

/// Sum of [`ppa_value`] over the visible patches; 0 when none is visible.
pub fn ppa_sum(camera: &CameraPose, intr: &CameraIntrinsics, patches: &[Patch]) -> f64 {
    visible_patches(camera, intr, patches)
        .iter()
        .map(|p| ppa_value(camera, p).expect("front-facing patches have d > 0"))
        .sum()
}

/// Mean PPA over the visible patches; 0 when none is visible.
pub fn ppa_mean(camera: &CameraPose, intr: &CameraIntrinsics, patches: &[Patch]) -> f64 {
    let vis = visible_patches(camera, intr, patches);
    if vis.is_empty() {
        return 0.0;
    }
    vis.iter()
        .map(|p| ppa_value(camera, p).expect("front-facing patches have d > 0"))
        .sum::<f64>()
        / vis.len() as f64
}

/// Analytic gradient of `sum_j ppa_value(camera, patch_j)` over `patches`
/// (assumed already visible).
pub fn ppa_jacobian(camera: &CameraPose, patches: &[Patch]) -> Result<PpaGradient> {
    let n_d = camera.view_dir;
    let mut grad = PpaGradient::zero();
    for patch in patches {
        let (r, d) = offset(&camera.position, patch)?;
        let dot = n_d.dot(&patch.normal);
        // sign-corrected normal so that n_d . n_tilde = cos(alpha) >= 0
        let n_tilde = if dot < 0.0 { -patch.normal } else { patch.normal };
        let cos_a = dot.abs();
        grad.d_position -= r * (cos_a / (d * d * d));
        grad.d_view_dir += (n_tilde - n_d * cos_a) / d;
    }
    Ok(grad)
}

/// Gradient of [`ppa_sum`]: the analytic Jacobian over the visible subset.
/// Invisible patches contribute nothing.
pub fn ppa_sum_gradient(camera: &CameraPose, intr: &CameraIntrinsics, patches: &[Patch]) -> PpaGradient {
    ppa_jacobian(camera, &visible_patches(camera, intr, patches))
        .expect("front-facing patches have d > 0")
}

/// PPA with the view direction aimed at the patch:
/// `((p_d - p_j) . n_j) / |p_d - p_j|^2`.
pub fn ppa_constrained(camera_pos: &Vec3, patch: &Patch) -> Result<f64> {
    let (r, d) = offset(camera_pos, patch)?;
    Ok(r.dot(&patch.normal) / (d * d))
}

/// Gradient of `sum_j ppa_constrained(camera_pos, patch_j)`:
/// `sum_j (n_j d_j - 2 cos(alpha_j) (p_d - p_j)) / d_j^3`.
pub fn ppa_constrained_gradient(camera_pos: &Vec3, patches: &[Patch]) -> Result<Vec3> {
    let mut g = Vec3::zeros();
    for patch in patches {
        let (r, d) = offset(camera_pos, patch)?;
        let cos_a = r.dot(&patch.normal) / d;
        g += (patch.normal * d - r * (2.0 * cos_a)) / (d * d * d);
    }
    Ok(g)
}

/// Central finite differences, used as an independent check of the
/// analytic gradients.
pub mod fd {
    use super::*;

    /// Central-difference gradient of a scalar field at `x`.
    pub fn gradient<F: Fn(&Vec3) -> f64>(f: F, x: &Vec3, h: f64) -> Vec3 {
        let mut g = Vec3::zeros();
        for i in 0..3 {
            let mut e = Vec3::zeros();
            e[i] = h;
            g[i] = (f(&(x + e)) - f(&(x - e))) / (2.0 * h);
        }
        g
    }

    /// Finite-difference gradient of the unconstrained PPA sum over the given
    /// patches (no visibility filter), with the view direction renormalized
    /// after each perturbation.
    pub fn ppa_gradient(camera: &CameraPose, patches: &[Patch], h: f64) -> PpaGradient {
        let value = |pos: &Vec3, dir: &Vec3| -> f64 {
            let n = dir.normalize();
            patches
                .iter()
                .map(|p| n.dot(&p.normal).abs() / (pos - p.centroid).norm())
                .sum()
        };
        PpaGradient {
            d_position: gradient(|p| value(p, &camera.view_dir), &camera.position, h),
            d_view_dir: gradient(|n| value(&camera.position, n), &camera.view_dir, h),
        }
    }

    pub fn constrained_gradient(camera_pos: &Vec3, patches: &[Patch], h: f64) -> Vec3 {
        gradient(
            |x| {
                patches
                    .iter()
                    .map(|p| {
                        let r = x - p.centroid;
                        r.dot(&p.normal) / r.norm_squared()
                    })
                    .sum()
            },
            camera_pos,
            h,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn cam() -> CameraPose {
        CameraPose::new(Vec3::zeros(), Vec3::x()).unwrap()
    }

    fn patch(c: [f64; 3], n: [f64; 3]) -> Patch {
        Patch::new(Vec3::new(c[0], c[1], c[2]), Vec3::new(n[0], n[1], n[2])).unwrap()
    }

    #[test]
    fn visibility() {
        let intr = CameraIntrinsics::default();
        let head_on = patch([2.0, 0.0, 0.0], [-1.0, 0.0, 0.0]);
        let back = patch([2.0, 0.0, 0.0], [1.0, 0.0, 0.0]);
        let behind = patch([-2.0, 0.0, 0.0], [1.0, 0.0, 0.0]);
        let vis = visible_patches(&cam(), &intr, &[head_on, back, behind]);
        assert_eq!(vis, vec![head_on]);
    }

    #[test]
    fn values() {
        let c = cam();
        assert_abs_diff_eq!(ppa_value(&c, &patch([2.0, 0.0, 0.0], [-1.0, 0.0, 0.0])).unwrap(), 0.5);
        let oblique = patch([2.0, 0.0, 0.0], [-FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0]);
        assert_abs_diff_eq!(ppa_value(&c, &oblique).unwrap(), 0.353553, epsilon = 1e-6);
        assert_abs_diff_eq!(ppa_value(&c, &patch([2.0, 0.0, 0.0], [0.0, 1.0, 0.0])).unwrap(), 0.0);
        assert!(matches!(
            ppa_value(&c, &patch([0.0, 0.0, 0.0], [-1.0, 0.0, 0.0])),
            Err(Error::ZeroDistance)
        ));
    }

    #[test]
    fn sums_are_additive() {
        let intr = CameraIntrinsics::default();
        let p = patch([2.0, 0.0, 0.0], [-1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(ppa_sum(&cam(), &intr, &[p]), 0.5);
        assert_abs_diff_eq!(ppa_sum(&cam(), &intr, &[p, p]), 1.0);
        assert_eq!(ppa_sum(&cam(), &intr, &[]), 0.0);
        assert_eq!(ppa_sum_gradient(&cam(), &intr, &[]), PpaGradient::zero());
    }

    #[test]
    fn head_on_gradient() {
        let g = ppa_jacobian(&cam(), &[patch([2.0, 0.0, 0.0], [-1.0, 0.0, 0.0])]).unwrap();
        assert_abs_diff_eq!(g.d_position, Vec3::new(0.25, 0.0, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(g.d_view_dir, Vec3::zeros(), epsilon = 1e-9);
        let num = fd::ppa_gradient(&cam(), &[patch([2.0, 0.0, 0.0], [-1.0, 0.0, 0.0])], 1e-6);
        assert_abs_diff_eq!(num.d_position, g.d_position, epsilon = 1e-8);
    }

    #[test]
    fn constrained_values() {
        let p = patch([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(ppa_constrained(&Vec3::new(2.0, 0.0, 0.0), &p).unwrap(), 0.5);
        assert_abs_diff_eq!(ppa_constrained(&Vec3::new(0.0, 2.0, 0.0), &p).unwrap(), 0.0);
        assert_abs_diff_eq!(ppa_constrained(&Vec3::new(2.0, 2.0, 0.0), &p).unwrap(), 0.25);
        assert!(ppa_constrained(&Vec3::zeros(), &p).is_err());
    }

    #[test]
    fn constrained_gradient_on_axis_is_axial() {
        let p = patch([0.3, -0.2, 1.0], [0.0, 0.6, 0.8]);
        let pos = p.centroid + p.normal * 5.0;
        let g = ppa_constrained_gradient(&pos, &[p]).unwrap();
        assert_abs_diff_eq!(g.cross(&p.normal).norm(), 0.0, epsilon = 1e-15);
        // moving closer increases PPA
        assert!(g.dot(&p.normal) < 0.0);
    }

    #[test]
    fn scale_covariance() {
        let p = patch([1.0, 2.0, -0.5], [0.2, -0.9, 0.1]);
        let c = CameraPose::new(Vec3::new(-3.0, 4.0, 2.0), Vec3::new(0.5, -0.3, -0.2)).unwrap();
        let base = ppa_value(&c, &p).unwrap();
        let s = 4.0;
        let scaled_patch = Patch::new(p.centroid * s, p.normal).unwrap();
        let scaled_cam = CameraPose::new(c.position * s, c.view_dir).unwrap();
        assert_eq!(ppa_value(&scaled_cam, &scaled_patch).unwrap(), base / s);
    }
}
