//! Triangle meshes: ASCII OBJ / PLY loading, validation, patch extraction.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::actor::{ActorPose2D, Patch, Vec3};
use crate::error::{Error, Result};

/// Smallest triangle area accepted, in m^2.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalOrientation {
    /// Flip each triangle so its normal points away from the mesh centroid.
    Outward,
    /// Keep the winding found in the file.
    #[default]
    AsStored,
}

/// Validated triangle mesh. Normals always agree with the winding order.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    normals: Vec<Vec3>,
}

impl TriangleMesh {
    pub fn new(
        vertices: Vec<Vec3>,
        mut triangles: Vec<[usize; 3]>,
        orientation: NormalOrientation,
    ) -> Result<Self> {
        let nv = vertices.len();
        if let Some(v) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::Argument(format!("vertex {v} has non-finite coordinates")));
        }
        let mut normals = Vec::with_capacity(triangles.len());
        for (i, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&k| k >= nv) {
                return Err(Error::Argument(format!(
                    "triangle {i} references vertex {bad}, but only {nv} vertices exist"
                )));
            }
            let cross = (vertices[tri[1]] - vertices[tri[0]]).cross(&(vertices[tri[2]] - vertices[tri[0]]));
            let area = 0.5 * cross.norm();
            if !(area > MIN_TRIANGLE_AREA) {
                return Err(Error::DegenerateTriangle { index: i, area });
            }
            normals.push(cross / (2.0 * area));
        }

        if orientation == NormalOrientation::Outward && !triangles.is_empty() {
            let center = vertices.iter().sum::<Vec3>() / nv as f64;
            for (tri, n) in triangles.iter_mut().zip(normals.iter_mut()) {
                let c = (vertices[tri[0]] + vertices[tri[1]] + vertices[tri[2]]) / 3.0;
                if (c - center).dot(n) < 0.0 {
                    tri.swap(1, 2);
                    *n = -*n;
                }
            }
        }

        Ok(Self {
            vertices,
            triangles,
            normals,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        let t = self.triangles[i];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    pub fn triangle_centroid(&self, i: usize) -> Vec3 {
        let [a, b, c] = self.triangle(i);
        (a + b + c) / 3.0
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle(i);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.len()).map(|i| self.triangle_area(i)).sum()
    }

    /// Mean of the triangle centroids.
    pub fn centroid(&self) -> Vec3 {
        if self.is_empty() {
            return Vec3::zeros();
        }
        (0..self.len()).map(|i| self.triangle_centroid(i)).sum::<Vec3>() / self.len() as f64
    }

    /// Axis-aligned bounds (min, max) of the vertices.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    /// Copy of the mesh placed in the world at `pose` (body frame in, world out).
    pub fn transformed(&self, pose: &ActorPose2D) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| pose.transform_point(v)).collect(),
            triangles: self.triangles.clone(),
            normals: self.normals.iter().map(|n| pose.transform_vector(n)).collect(),
        }
    }

    /// Area-weighted uniform samples on the surface.
    pub fn sample_surface<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<Vec3> {
        let mut cdf = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        for i in 0..self.len() {
            acc += self.triangle_area(i);
            cdf.push(acc);
        }
        (0..n)
            .map(|_| {
                let r = rng.random::<f64>() * acc;
                let i = cdf.partition_point(|&c| c < r).min(self.len() - 1);
                let [a, b, c] = self.triangle(i);
                let (mut u, mut v) = (rng.random::<f64>(), rng.random::<f64>());
                if u + v > 1.0 {
                    u = 1.0 - u;
                    v = 1.0 - v;
                }
                a + (b - a) * u + (c - a) * v
            })
            .collect()
    }

    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        s
    }

    pub fn write_obj(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_obj()).map_err(|e| Error::io(path, e))
    }
}

/// One patch per triangle: centroid of the three vertices, stored normal.
pub fn mesh_to_patches(mesh: &TriangleMesh) -> Vec<Patch> {
    (0..mesh.len())
        .map(|i| Patch::from_unit(mesh.triangle_centroid(i), mesh.normals[i]))
        .collect()
}

/// Loads an ASCII OBJ or ASCII PLY triangle mesh.
pub fn load_mesh(path: &Path, orientation: NormalOrientation) -> Result<TriangleMesh> {
    let text = fs::read_to_string(path).map_err(|e| Error::MeshLoad {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let is_ply = text.trim_start().starts_with("ply");
    let parsed = if is_ply { parse_ply(&text) } else { parse_obj(&text) };
    let (vertices, triangles) = parsed.map_err(|reason| Error::MeshLoad {
        path: path.to_path_buf(),
        reason,
    })?;
    TriangleMesh::new(vertices, triangles, orientation).map_err(|e| match e {
        Error::Argument(reason) => Error::MeshLoad {
            path: path.to_path_buf(),
            reason,
        },
        other => other,
    })
}

type Parsed = std::result::Result<(Vec<Vec3>, Vec<[usize; 3]>), String>;

fn parse_f64(tok: Option<&str>, line: usize) -> std::result::Result<f64, String> {
    tok.ok_or_else(|| format!("line {line}: missing coordinate"))?
        .parse::<f64>()
        .map_err(|e| format!("line {line}: {e}"))
}

pub(crate) fn parse_obj(text: &str) -> Parsed {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut toks = content.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = parse_f64(toks.next(), line)?;
                let y = parse_f64(toks.next(), line)?;
                let z = parse_f64(toks.next(), line)?;
                vertices.push(Vec3::new(x, y, z));
            }
            Some("f") => {
                let idx: Vec<&str> = toks.collect();
                if idx.len() != 3 {
                    return Err(format!(
                        "line {line}: face {} has {} vertices, only triangles are supported",
                        triangles.len(),
                        idx.len()
                    ));
                }
                let mut tri = [0usize; 3];
                for (k, tok) in idx.iter().enumerate() {
                    let first = tok.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|e| format!("line {line}: bad face index {tok:?}: {e}"))?;
                    let resolved = if i > 0 {
                        i - 1
                    } else if i < 0 {
                        vertices.len() as i64 + i
                    } else {
                        return Err(format!("line {line}: face index 0 is invalid"));
                    };
                    if resolved < 0 {
                        return Err(format!("line {line}: face index {i} out of range"));
                    }
                    tri[k] = resolved as usize;
                }
                triangles.push(tri);
            }
            _ => {}
        }
    }
    Ok((vertices, triangles))
}

pub(crate) fn parse_ply(text: &str) -> Parsed {
    let mut lines = text.lines().enumerate();
    let mut n_vertices = None;
    let mut n_faces = None;
    let mut vertex_props: Vec<String> = Vec::new();
    let mut current = "";
    let mut ended = false;
    for (_, raw) in lines.by_ref() {
        let l = raw.trim();
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.as_slice() {
            ["ply"] | [] => {}
            ["format", fmt, ..] => {
                if *fmt != "ascii" {
                    return Err(format!("unsupported PLY format {fmt:?}, only ascii"));
                }
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", name, count] => {
                let n: usize = count.parse().map_err(|e| format!("bad element count: {e}"))?;
                match *name {
                    "vertex" => {
                        n_vertices = Some(n);
                        current = "vertex";
                    }
                    "face" => {
                        n_faces = Some(n);
                        current = "face";
                    }
                    _ => {
                        if n > 0 {
                            return Err(format!("unsupported PLY element {name:?}"));
                        }
                        current = "";
                    }
                }
            }
            ["property", "list", ..] => {}
            ["property", _ty, name] => {
                if current == "vertex" {
                    vertex_props.push((*name).to_string());
                }
            }
            ["end_header"] => {
                ended = true;
                break;
            }
            _ => return Err(format!("unrecognized PLY header line {l:?}")),
        }
    }
    if !ended {
        return Err("PLY header missing end_header".into());
    }
    let nv = n_vertices.ok_or("PLY has no vertex element")?;
    let nf = n_faces.unwrap_or(0);
    let pos = |name: &str| {
        vertex_props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| format!("PLY vertex has no {name} property"))
    };
    let (ix, iy, iz) = (pos("x")?, pos("y")?, pos("z")?);

    let mut body = lines.filter(|(_, l)| !l.trim().is_empty());
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = body.next().ok_or("PLY truncated in vertex list")?;
        let vals: Vec<&str> = l.split_whitespace().collect();
        let get = |k: usize| parse_f64(vals.get(k).copied(), ln + 1);
        vertices.push(Vec3::new(get(ix)?, get(iy)?, get(iz)?));
    }
    let mut triangles = Vec::with_capacity(nf);
    for f in 0..nf {
        let (ln, l) = body.next().ok_or("PLY truncated in face list")?;
        let vals: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format!("line {}: {e}", ln + 1))?;
        if vals.first() != Some(&3) || vals.len() < 4 {
            return Err(format!(
                "line {}: face {f} is not a triangle",
                ln + 1
            ));
        }
        triangles.push([vals[1], vals[2], vals[3]]);
    }
    Ok((vertices, triangles))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use approx::assert_abs_diff_eq;
    use std::io::Write;

    fn write_tmp(ext: &str, body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn cube_obj_outward() {
        // deliberately mixed winding
        let obj = shapes::unit_cube().to_obj().replacen("f 1 2 3", "f 1 3 2", 1);
        let f = write_tmp(".obj", &obj);
        let mesh = load_mesh(f.path(), NormalOrientation::Outward).unwrap();
        assert_eq!(mesh.len(), 12);
        let patches = mesh_to_patches(&mesh);
        assert_eq!(patches.len(), 12);
        for p in &patches {
            assert!(p.centroid.dot(&p.normal) > 0.0);
            // on a face plane
            assert_abs_diff_eq!(p.centroid.amax(), 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn degenerate_triangle_is_named() {
        let obj = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 2 0 0\nf 1 2 3\nf 1 2 4\n";
        let f = write_tmp(".obj", obj);
        let err = load_mesh(f.path(), NormalOrientation::AsStored).unwrap_err();
        assert!(matches!(err, Error::DegenerateTriangle { index: 1, .. }), "{err}");
        assert!(err.to_string().contains("triangle 1"));
    }

    #[test]
    fn quad_face_rejected() {
        let obj = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        let f = write_tmp(".obj", obj);
        let err = load_mesh(f.path(), NormalOrientation::AsStored).unwrap_err();
        assert!(err.to_string().contains("only triangles"), "{err}");
    }

    #[test]
    fn out_of_range_index_rejected() {
        let f = write_tmp(".obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 7\n");
        assert!(matches!(
            load_mesh(f.path(), NormalOrientation::AsStored),
            Err(Error::MeshLoad { .. })
        ));
    }

    #[test]
    fn obj_slash_and_negative_indices() {
        let obj = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2//1 -1\n";
        let f = write_tmp(".obj", obj);
        let mesh = load_mesh(f.path(), NormalOrientation::AsStored).unwrap();
        assert_eq!(mesh.triangles()[0], [0, 1, 2]);
    }

    #[test]
    fn single_triangle_patch() {
        let mesh = TriangleMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            vec![[0, 1, 2]],
            NormalOrientation::AsStored,
        )
        .unwrap();
        let p = mesh_to_patches(&mesh)[0];
        assert_abs_diff_eq!(p.centroid, Vec3::new(1.0 / 3.0, 1.0 / 3.0, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(p.normal, Vec3::z(), epsilon = 1e-15);
    }

    #[test]
    fn ply_ascii() {
        let ply = "ply\nformat ascii 1.0\ncomment test\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nproperty float nx\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0 9\n1 0 0 9\n0 1 0 9\n3 0 1 2\n";
        let f = write_tmp(".ply", ply);
        let mesh = load_mesh(f.path(), NormalOrientation::AsStored).unwrap();
        assert_eq!(mesh.len(), 1);
        assert_abs_diff_eq!(mesh.normals()[0], Vec3::z(), epsilon = 1e-15);
    }

    #[test]
    fn ply_binary_rejected() {
        let f = write_tmp(".ply", "ply\nformat binary_little_endian 1.0\nend_header\n");
        assert!(load_mesh(f.path(), NormalOrientation::AsStored).is_err());
    }

    #[test]
    fn stored_normals_match_winding_after_flip() {
        let mesh = shapes::unit_cube();
        let flipped: Vec<[usize; 3]> = mesh.triangles().iter().map(|t| [t[0], t[2], t[1]]).collect();
        let m = TriangleMesh::new(mesh.vertices().to_vec(), flipped, NormalOrientation::Outward).unwrap();
        for i in 0..m.len() {
            let [a, b, c] = m.triangle(i);
            let n = (b - a).cross(&(c - a)).normalize();
            assert_abs_diff_eq!(n, m.normals()[i], epsilon = 1e-12);
        }
    }
}
