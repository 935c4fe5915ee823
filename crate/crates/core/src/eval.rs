//! Reconstruction-quality metrics and the PPA correlation study.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::actor::{Patch, Vec3};
use crate::camera::{backproject, render, CameraIntrinsics, RenderedView};
use crate::cloud::{NearestIndex, PointCloud};
use crate::error::{Error, Result};
use crate::mesh::{mesh_to_patches, TriangleMesh};
use crate::ppa::{ppa_mean, CameraPose};

/// Total prism height used for triangle coverage, meters.
pub const DEFAULT_PRISM_HEIGHT: f64 = 0.01;

const BARY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageReport {
    pub visible_triangles: usize,
    pub total_triangles: usize,
    pub coverage_ratio: f64,
    pub pixels_per_triangle: f64,
}

/// Uniform grid over triangle bounds inflated by half the prism height, so a
/// point inside a prism always finds that triangle in its own cell.
struct PrismIndex<'a> {
    mesh: &'a TriangleMesh,
    half_height: f64,
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<u32>>,
}

impl<'a> PrismIndex<'a> {
    fn new(mesh: &'a TriangleMesh, prism_height: f64) -> Self {
        let half_height = 0.5 * prism_height;
        let mean_edge = (0..mesh.len())
            .map(|i| {
                let [a, b, c] = mesh.triangle(i);
                ((b - a).norm() + (c - b).norm() + (a - c).norm()) / 3.0
            })
            .sum::<f64>()
            / mesh.len() as f64;
        let cell = (2.0 * mean_edge).max(4.0 * half_height).max(1e-6);
        let mut cells: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        let key = |v: f64| (v / cell).floor() as i64;
        for i in 0..mesh.len() {
            let [a, b, c] = mesh.triangle(i);
            let lo = a.inf(&b).inf(&c) - Vec3::repeat(half_height);
            let hi = a.sup(&b).sup(&c) + Vec3::repeat(half_height);
            for x in key(lo.x)..=key(hi.x) {
                for y in key(lo.y)..=key(hi.y) {
                    for z in key(lo.z)..=key(hi.z) {
                        cells.entry((x, y, z)).or_default().push(i as u32);
                    }
                }
            }
        }
        Self {
            mesh,
            half_height,
            cell,
            cells,
        }
    }

    fn candidates(&self, p: &Vec3) -> &[u32] {
        let k = (
            (p.x / self.cell).floor() as i64,
            (p.y / self.cell).floor() as i64,
            (p.z / self.cell).floor() as i64,
        );
        self.cells.get(&k).map(Vec::as_slice).unwrap_or(&[])
    }

    fn in_prism(&self, tri: usize, p: &Vec3) -> bool {
        let [a, b, c] = self.mesh.triangle(tri);
        let n = self.mesh.normals()[tri];
        let s = (p - a).dot(&n);
        if s.abs() > self.half_height {
            return false;
        }
        let q = p - n * s;
        let (v0, v1, v2) = (b - a, c - a, q - a);
        let d00 = v0.dot(&v0);
        let d01 = v0.dot(&v1);
        let d11 = v1.dot(&v1);
        let d20 = v2.dot(&v0);
        let d21 = v2.dot(&v1);
        let denom = d00 * d11 - d01 * d01;
        let beta = (d11 * d20 - d01 * d21) / denom;
        let gamma = (d00 * d21 - d01 * d20) / denom;
        beta >= -BARY_EPS && gamma >= -BARY_EPS && beta + gamma <= 1.0 + BARY_EPS
    }

    /// Number of cloud points inside each triangle's prism.
    fn counts(&self, cloud: &PointCloud) -> Vec<usize> {
        let mut counts = vec![0usize; self.mesh.len()];
        for p in &cloud.points {
            for &t in self.candidates(p) {
                if self.in_prism(t as usize, p) {
                    counts[t as usize] += 1;
                }
            }
        }
        counts
    }
}

fn report_from_counts(prism_counts: &[usize], pixels: Option<&[usize]>) -> CoverageReport {
    let total = prism_counts.len();
    let visible = prism_counts.iter().filter(|&&c| c > 0).count();
    let pixels_per_triangle = match pixels {
        Some(px) => {
            let seen = px.iter().filter(|&&c| c > 0).count();
            if seen == 0 {
                0.0
            } else {
                px.iter().sum::<usize>() as f64 / seen as f64
            }
        }
        None => {
            if visible == 0 {
                0.0
            } else {
                prism_counts.iter().sum::<usize>() as f64 / visible as f64
            }
        }
    };
    CoverageReport {
        visible_triangles: visible,
        total_triangles: total,
        coverage_ratio: visible as f64 / total as f64,
        pixels_per_triangle,
    }
}

fn check_coverage_args(mesh: &TriangleMesh, prism_height: f64) -> Result<()> {
    if mesh.is_empty() {
        return Err(Error::Argument("coverage needs a non-empty mesh".into()));
    }
    if !(prism_height > 0.0) {
        return Err(Error::Argument(format!("prism height must be positive, got {prism_height}")));
    }
    Ok(())
}

/// A triangle counts as covered when at least one point lies in its prism:
/// the triangle extruded by +-prism_height/2 along its normal. Pixels per
/// triangle are estimated from point-in-prism counts.
pub fn triangle_coverage(cloud: &PointCloud, mesh: &TriangleMesh, prism_height: f64) -> Result<CoverageReport> {
    check_coverage_args(mesh, prism_height)?;
    let counts = PrismIndex::new(mesh, prism_height).counts(cloud);
    Ok(report_from_counts(&counts, None))
}

/// Coverage of a rendered view of `mesh`: prism test on the back-projected
/// cloud, pixels per triangle from the triangle-id map.
pub fn triangle_coverage_from_view(view: &RenderedView, mesh: &TriangleMesh, prism_height: f64) -> Result<CoverageReport> {
    check_coverage_args(mesh, prism_height)?;
    let cloud = backproject(view);
    let counts = PrismIndex::new(mesh, prism_height).counts(&cloud);
    let pixels = view.pixel_counts(mesh.len());
    Ok(report_from_counts(&counts, Some(&pixels)))
}

/// Chamfer distance in millimeters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chamfer {
    pub forward_mm: f64,
    pub backward_mm: f64,
    pub mean_mm: f64,
}

fn mean_nn_distance(from: &PointCloud, into: &NearestIndex) -> f64 {
    let d: Vec<f64> = from.points.par_iter().map(|p| into.nearest(p).1).collect();
    d.iter().sum::<f64>() / d.len() as f64
}

/// Forward = mean over `x` of the distance to the nearest point of `y`;
/// backward the reverse; mean of the two. Exact nearest neighbors.
pub fn chamfer_distance(x: &PointCloud, y: &PointCloud) -> Result<Chamfer> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Argument("chamfer distance needs two non-empty clouds".into()));
    }
    let forward = 1000.0 * mean_nn_distance(x, &NearestIndex::new(&y.points));
    let backward = 1000.0 * mean_nn_distance(y, &NearestIndex::new(&x.points));
    Ok(Chamfer {
        forward_mm: forward,
        backward_mm: backward,
        mean_mm: 0.5 * (forward + backward),
    })
}

/// Average ranks (1-based), ties share the mean rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64 + 1.0;
        for &k in &order[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

/// Spearman rank correlation. `None` when fewer than two samples or either
/// side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    if a.len() < 2 {
        return None;
    }
    pearson(&ranks(a), &ranks(b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationRecord {
    pub view: CameraPose,
    pub ppa_mesh: f64,
    pub ppa_cuboid: f64,
    pub coverage_ratio: f64,
    pub pixels_per_triangle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationSummary {
    pub views: usize,
    pub ppa_vs_pixels_per_triangle: Option<f64>,
    pub ppa_vs_coverage: Option<f64>,
    pub ppa_mesh_vs_cuboid: Option<f64>,
}

/// Per view: mean PPA over visible mesh triangles and cuboid faces, and the
/// rendered coverage metrics. Records come back in input order.
pub fn run_correlation_study(
    mesh: &TriangleMesh,
    views: &[CameraPose],
    intr: &CameraIntrinsics,
    cuboid: &[Patch],
) -> Result<Vec<CorrelationRecord>> {
    if views.is_empty() {
        return Err(Error::Argument("correlation study needs at least one view".into()));
    }
    let patches = mesh_to_patches(mesh);
    views
        .par_iter()
        .map(|view| {
            let rendered = render(mesh, view, intr);
            let cov = triangle_coverage_from_view(&rendered, mesh, DEFAULT_PRISM_HEIGHT)?;
            Ok(CorrelationRecord {
                view: *view,
                ppa_mesh: ppa_mean(view, intr, &patches),
                ppa_cuboid: ppa_mean(view, intr, cuboid),
                coverage_ratio: cov.coverage_ratio,
                pixels_per_triangle: cov.pixels_per_triangle,
            })
        })
        .collect()
}

pub fn summarize_correlation(records: &[CorrelationRecord]) -> CorrelationSummary {
    let col = |f: fn(&CorrelationRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
    let ppa = col(|r| r.ppa_mesh);
    CorrelationSummary {
        views: records.len(),
        ppa_vs_pixels_per_triangle: spearman(&ppa, &col(|r| r.pixels_per_triangle)),
        ppa_vs_coverage: spearman(&ppa, &col(|r| r.coverage_ratio)),
        ppa_mesh_vs_cuboid: spearman(&ppa, &col(|r| r.ppa_cuboid)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::NormalOrientation;
    use crate::shapes;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_triangle() -> TriangleMesh {
        TriangleMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            vec![[0, 1, 2]],
            NormalOrientation::AsStored,
        )
        .unwrap()
    }

    #[test]
    fn vertices_cover_their_triangle() {
        let m = one_triangle();
        let cloud = PointCloud::new(m.vertices().to_vec());
        let r = triangle_coverage(&cloud, &m, 0.01).unwrap();
        assert_eq!(r.coverage_ratio, 1.0);
        let lifted = cloud.map(|p| p + Vec3::z() * 0.02);
        assert_eq!(triangle_coverage(&lifted, &m, 0.01).unwrap().coverage_ratio, 0.0);
        let inside = PointCloud::new(vec![Vec3::new(0.2, 0.2, 0.004)]);
        assert_eq!(triangle_coverage(&inside, &m, 0.01).unwrap().visible_triangles, 1);
        let outside_footprint = PointCloud::new(vec![Vec3::new(0.6, 0.6, 0.0)]);
        assert_eq!(triangle_coverage(&outside_footprint, &m, 0.01).unwrap().visible_triangles, 0);
    }

    #[test]
    fn coverage_argument_errors() {
        let m = one_triangle();
        assert!(triangle_coverage(&PointCloud::default(), &m, 0.0).is_err());
        let empty = TriangleMesh::new(vec![], vec![], NormalOrientation::AsStored).unwrap();
        assert!(triangle_coverage(&PointCloud::default(), &empty, 0.01).is_err());
    }

    #[test]
    fn cube_side_view_sees_one_face() {
        let cube = shapes::unit_cube();
        let pose = CameraPose::look_at(Vec3::new(4.0, 0.0, 0.0), Vec3::zeros());
        let view = render(&cube, &pose, &CameraIntrinsics::default());
        let ids: std::collections::BTreeSet<u32> = view.triangle_id.iter().flatten().copied().collect();
        assert_eq!(ids.len(), 2);
        let r = triangle_coverage_from_view(&view, &cube, 0.01).unwrap();
        assert_eq!(r.visible_triangles, 2);
        assert_abs_diff_eq!(r.coverage_ratio, 1.0 / 6.0);
        assert!(r.pixels_per_triangle >= 1.0);
    }

    #[test]
    fn chamfer_examples() {
        let x = PointCloud::new(vec![Vec3::zeros()]);
        let y = PointCloud::new(vec![Vec3::new(0.001, 0.0, 0.0)]);
        let c = chamfer_distance(&x, &y).unwrap();
        assert_abs_diff_eq!(c.forward_mm, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.backward_mm, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.mean_mm, 1.0, epsilon = 1e-12);
        assert!(chamfer_distance(&x, &PointCloud::default()).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Vec3> = (0..1000).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
        let mut perm = pts.clone();
        perm.reverse();
        perm.swap(3, 700);
        let c = chamfer_distance(&PointCloud::new(pts), &PointCloud::new(perm)).unwrap();
        assert_eq!((c.forward_mm, c.backward_mm, c.mean_mm), (0.0, 0.0, 0.0));
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0], &[1.0]), None);
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), None);
        // monotone but non-linear is still perfect
        assert_eq!(spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 8.0, 27.0, 64.0]), Some(1.0));
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn correlation_head_on_radii() {
        let mesh = shapes::humanoid();
        let target = Vec3::new(0.0, 0.0, 1.0);
        let views: Vec<CameraPose> = [8.0, 12.0, 16.0]
            .iter()
            .map(|r| CameraPose::look_at(target + Vec3::x() * *r, target))
            .collect();
        let cuboid = crate::actor::build_cuboid(&crate::actor::ActorPose2D::new(0.0, 0.0, 0.0), &Default::default()).unwrap();
        let intr = CameraIntrinsics::new(640, 480, 90.0).unwrap();
        let recs = run_correlation_study(&mesh, &views, &intr, &cuboid).unwrap();
        for w in recs.windows(2) {
            assert!(w[1].ppa_mesh < w[0].ppa_mesh);
            assert!(w[1].pixels_per_triangle < w[0].pixels_per_triangle);
        }
        let again = run_correlation_study(&mesh, &[views[1], views[1]], &intr, &cuboid).unwrap();
        assert_eq!(again[0], again[1]);
        assert_eq!(again[0], recs[1]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn chamfer_mean_is_symmetric(seed in 0u64..1000, n in 1usize..60, m in 1usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cloud = |k: usize| PointCloud::new((0..k).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect());
            let (a, b) = (cloud(n), cloud(m));
            let ab = chamfer_distance(&a, &b).unwrap();
            let ba = chamfer_distance(&b, &a).unwrap();
            prop_assert_eq!(ab.mean_mm, ba.mean_mm);
        }

        #[test]
        fn chamfer_forward_bounded_under_translation(seed in 0u64..1000, tx in -0.2f64..0.2, ty in -0.2f64..0.2) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cloud = |k: usize| PointCloud::new((0..k).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect());
            let (a, b) = (cloud(40), cloud(50));
            let t = Vec3::new(tx, ty, 0.0);
            let base = chamfer_distance(&a, &b).unwrap().forward_mm;
            let moved = chamfer_distance(&a, &b.map(|p| p + t)).unwrap().forward_mm;
            prop_assert!(moved <= base + 1000.0 * t.norm() + 1e-9);
        }
    }
}
