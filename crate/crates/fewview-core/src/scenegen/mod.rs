//! Procedural ground-truth factory: primitive meshes, seeded textures,
//! texture-mapped Lambert renders, color augmentation, and trial sets for
//! the pose-error sensitivity experiments.

mod augment;
mod texture;

pub use augment::{apply_augment, color_augment, sample_augment, AugmentParams, AugmentValues};
pub use texture::{mean_gradient_magnitude, procedural_texture};

pub(crate) use texture::mix_seed;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::featuremap::{FeatureMap, Mask};
use crate::geometry::{look_at_pose, perturb_pose, Camera, RigidPose, TriangleMesh};
use crate::raster::{rasterize, SourceView};

/// Primitive shapes for synthetic trials, dimensions in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrimitiveKind {
    Box { size: [f64; 3] },
    Cylinder { radius: f64, height: f64, segments: usize },
}

impl PrimitiveKind {
    /// Cereal-box proportions used by default box trials.
    pub fn default_box() -> Self {
        PrimitiveKind::Box { size: [0.16, 0.07, 0.21] }
    }

    /// Soup-can proportions used by default cylinder trials.
    pub fn default_cylinder() -> Self {
        PrimitiveKind::Cylinder { radius: 0.04, height: 0.14, segments: 36 }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "box" => Ok(Self::default_box()),
            "cylinder" => Ok(Self::default_cylinder()),
            other => Err(Error::invalid(format!("unknown shape {other:?} (expected box|cylinder)"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PrimitiveKind::Box { .. } => "box",
            PrimitiveKind::Cylinder { .. } => "cylinder",
        }
    }
}

/// Builds a watertight primitive mesh centered at the origin with outward
/// face windings.
pub fn make_primitive(kind: PrimitiveKind) -> Result<TriangleMesh> {
    match kind {
        PrimitiveKind::Box { size } => {
            if size.iter().any(|s| *s <= 0.0) {
                return Err(Error::invalid("box dimensions must be positive"));
            }
            let [hx, hy, hz] = [size[0] / 2.0, size[1] / 2.0, size[2] / 2.0];
            let v = vec![
                Vector3::new(-hx, -hy, -hz),
                Vector3::new(hx, -hy, -hz),
                Vector3::new(hx, hy, -hz),
                Vector3::new(-hx, hy, -hz),
                Vector3::new(-hx, -hy, hz),
                Vector3::new(hx, -hy, hz),
                Vector3::new(hx, hy, hz),
                Vector3::new(-hx, hy, hz),
            ];
            let f = vec![
                [0, 3, 2],
                [0, 2, 1], // bottom (−z)
                [4, 5, 6],
                [4, 6, 7], // top (+z)
                [0, 1, 5],
                [0, 5, 4], // −y
                [2, 3, 7],
                [2, 7, 6], // +y
                [0, 4, 7],
                [0, 7, 3], // −x
                [1, 2, 6],
                [1, 6, 5], // +x
            ];
            TriangleMesh::new(v, f, None)
        }
        PrimitiveKind::Cylinder { radius, height, segments } => {
            if radius <= 0.0 || height <= 0.0 {
                return Err(Error::invalid("cylinder dimensions must be positive"));
            }
            if segments < 36 {
                return Err(Error::invalid("cylinder tessellation must use at least 36 segments"));
            }
            let n = segments as u32;
            let hz = height / 2.0;
            let mut v = Vec::with_capacity(segments * 2 + 2);
            for ring in [-hz, hz] {
                for i in 0..segments {
                    let a = 2.0 * std::f64::consts::PI * i as f64 / segments as f64;
                    v.push(Vector3::new(radius * a.cos(), radius * a.sin(), ring));
                }
            }
            v.push(Vector3::new(0.0, 0.0, -hz)); // bottom center
            v.push(Vector3::new(0.0, 0.0, hz)); // top center
            let (cb, ct) = (2 * n, 2 * n + 1);
            let mut f = Vec::with_capacity(segments * 4);
            for i in 0..n {
                let j = (i + 1) % n;
                f.push([i, j, n + j]); // side lower
                f.push([i, n + j, n + i]); // side upper
                f.push([cb, j, i]); // bottom cap (−z)
                f.push([ct, n + i, n + j]); // top cap (+z)
            }
            TriangleMesh::new(v, f, None)
        }
    }
}

/// Midpoint triangle subdivision (no smoothing): each level splits every
/// face into 4, sharing edge midpoints. Densifies coarse primitives so
/// vertex-visibility sets have usable granularity.
pub fn subdivide_mesh(mesh: &TriangleMesh, levels: usize) -> Result<TriangleMesh> {
    let mut vertices = mesh.vertices.clone();
    let mut faces = mesh.faces.clone();
    for _ in 0..levels {
        let mut midpoints = std::collections::HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in &faces {
            let mut mid = |i: u32, j: u32| -> u32 {
                let key = (i.min(j), i.max(j));
                *midpoints.entry(key).or_insert_with(|| {
                    vertices.push((vertices[i as usize] + vertices[j as usize]) / 2.0);
                    (vertices.len() - 1) as u32
                })
            };
            let (ab, bc, ca) = (mid(*a, *b), mid(*b, *c), mid(*c, *a));
            next.push([*a, ab, ca]);
            next.push([*b, bc, ab]);
            next.push([*c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    TriangleMesh::new(vertices, faces, None)
}

/// Icosphere for tests and sampling experiments: an icosahedron subdivided
/// `subdivisions` times and projected to `radius`.
pub fn icosphere(radius: f64, subdivisions: usize) -> Result<TriangleMesh> {
    if radius <= 0.0 {
        return Err(Error::invalid("icosphere radius must be positive"));
    }
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = vec![
        Vector3::new(-1.0, phi, 0.0),
        Vector3::new(1.0, phi, 0.0),
        Vector3::new(-1.0, -phi, 0.0),
        Vector3::new(1.0, -phi, 0.0),
        Vector3::new(0.0, -1.0, phi),
        Vector3::new(0.0, 1.0, phi),
        Vector3::new(0.0, -1.0, -phi),
        Vector3::new(0.0, 1.0, -phi),
        Vector3::new(phi, 0.0, -1.0),
        Vector3::new(phi, 0.0, 1.0),
        Vector3::new(-phi, 0.0, -1.0),
        Vector3::new(-phi, 0.0, 1.0),
    ];
    for v in &mut verts {
        *v = v.normalize() * radius;
    }
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints = std::collections::HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in &faces {
            let mut mid = |i: u32, j: u32| -> u32 {
                let key = (i.min(j), i.max(j));
                *midpoints.entry(key).or_insert_with(|| {
                    let m = ((verts[i as usize] + verts[j as usize]) / 2.0).normalize() * radius;
                    verts.push(m);
                    (verts.len() - 1) as u32
                })
            };
            let (ab, bc, ca) = (mid(*a, *b), mid(*b, *c), mid(*c, *a));
            next.push([*a, ab, ca]);
            next.push([*b, bc, ab]);
            next.push([*c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    TriangleMesh::new(verts, faces, None)
}

/// Ground-truth render of a texture-mapped mesh.
#[derive(Debug, Clone)]
pub struct GtRender {
    pub image: FeatureMap,
    pub mask: Mask,
    /// Per-pixel depth (meters), infinity outside coverage.
    pub depth: Vec<f64>,
}

/// Renders the mesh at `pose` with dominant-axis planar texture mapping and
/// flat Lambert shading under directional light `light_dir` (object frame,
/// pointing from the light into the scene) plus a 0.25 ambient floor.
/// Background pixels are black with an empty mask. Deterministic.
pub fn render_gt_view(
    mesh: &TriangleMesh,
    texture: &FeatureMap,
    pose: &RigidPose,
    camera: &Camera,
    light_dir: &Vector3<f64>,
) -> GtRender {
    let frags = rasterize(mesh, pose, camera);
    let (h, w) = (frags.height, frags.width);
    let mut image = FeatureMap::zeros(h, w, 3);
    let mut mask = Mask::filled(h, w, false);
    let light = light_dir.normalize();
    let shades: Vec<f64> = (0..mesh.faces.len())
        .map(|f| 0.25 + 0.75 * mesh.face_normal(f).dot(&-light).max(0.0))
        .collect();
    let normals: Vec<Vector3<f64>> = (0..mesh.faces.len()).map(|f| mesh.face_normal(f)).collect();
    let (bb_min, bb_max) = bounding_box(mesh);
    let extent = bb_max - bb_min;
    let mut rgb = [0.0f64; 3];
    for p in 0..h * w {
        let Some(face) = frags.face[p] else { continue };
        let point = frags.object_point(mesh, p).expect("covered fragment");
        let (u, v) = planar_uv(&point, &normals[face as usize], &bb_min, &extent);
        sample_texture_clamped(texture, u, v, &mut rgb);
        let shade = shades[face as usize];
        for c in 0..3 {
            image.values[p * 3 + c] = (rgb[c] * shade).clamp(0.0, 1.0);
        }
        mask.data[p] = true;
    }
    GtRender { image, mask, depth: frags.depth }
}

fn bounding_box(mesh: &TriangleMesh) -> (Vector3<f64>, Vector3<f64>) {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for v in &mesh.vertices {
        for a in 0..3 {
            lo[a] = lo[a].min(v[a]);
            hi[a] = hi[a].max(v[a]);
        }
    }
    (lo, hi.zip_map(&lo, |h, l| if h - l < 1e-12 { l + 1e-12 } else { h }))
}

/// Planar projection along the face normal's dominant axis, normalized by
/// the mesh bounding box. Texture features stay rigidly attached to the
/// surface, with sharp seams where the dominant axis changes.
#[inline]
fn planar_uv(
    point: &Vector3<f64>,
    normal: &Vector3<f64>,
    bb_min: &Vector3<f64>,
    extent: &Vector3<f64>,
) -> (f64, f64) {
    let axis = if normal.x.abs() >= normal.y.abs() && normal.x.abs() >= normal.z.abs() {
        0
    } else if normal.y.abs() >= normal.z.abs() {
        1
    } else {
        2
    };
    let (a, b) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    // 0.4 texture span per bounding-box extent keeps the texel density at
    // render scale; per-axis offsets give the three projections distinct
    // texture regions.
    let (ou, ov) = match axis {
        0 => (0.0, 0.0),
        1 => (0.55, 0.0),
        _ => (0.0, 0.55),
    };
    (
        ou + 0.4 * (point[a] - bb_min[a]) / extent[a],
        ov + 0.4 * (point[b] - bb_min[b]) / extent[b],
    )
}

/// Bilinear texture sample with clamped coordinates.
fn sample_texture_clamped(tex: &FeatureMap, u: f64, v: f64, out: &mut [f64; 3]) {
    let (h, w) = (tex.height as i64, tex.width as i64);
    let fu = (u.clamp(0.0, 1.0) * tex.width as f64 - 0.5).max(0.0);
    let fv = (v.clamp(0.0, 1.0) * tex.height as f64 - 0.5).max(0.0);
    let x0 = fu.floor() as i64;
    let y0 = fv.floor() as i64;
    let tx = fu - x0 as f64;
    let ty = fv - y0 as f64;
    let xc = |x: i64| x.clamp(0, w - 1) as usize;
    let yc = |y: i64| y.clamp(0, h - 1) as usize;
    let (x0c, x1c, y0c, y1c) = (xc(x0), xc(x0 + 1), yc(y0), yc(y0 + 1));
    for c in 0..3 {
        let f00 = tex.get(y0c, x0c, c);
        let f01 = tex.get(y0c, x1c, c);
        let f10 = tex.get(y1c, x0c, c);
        let f11 = tex.get(y1c, x1c, c);
        out[c] = f00 * (1.0 - tx) * (1.0 - ty)
            + f01 * tx * (1.0 - ty)
            + f10 * (1.0 - tx) * ty
            + f11 * tx * ty;
    }
}

/// One source observation of a trial: the render at the exact pose plus the
/// perturbed pose that plays the role of the noisy annotation.
#[derive(Debug, Clone)]
pub struct TrialSource {
    pub image: FeatureMap,
    pub mask: Mask,
    pub exact_pose: RigidPose,
    pub noisy_pose: RigidPose,
}

/// A complete seeded sensitivity trial: ground-truth target render plus
/// `n` source views with pose errors injected into their annotations.
#[derive(Debug, Clone)]
pub struct TrialSet {
    pub mesh: TriangleMesh,
    pub texture: FeatureMap,
    pub camera: Camera,
    pub target_pose: RigidPose,
    pub target_image: FeatureMap,
    pub target_mask: Mask,
    pub sources: Vec<TrialSource>,
    pub light_dir: Vector3<f64>,
    pub trans_err_m: f64,
    pub rot_err_rad: f64,
    pub seed: u64,
}

impl TrialSet {
    /// Source views annotated with their noisy poses, pipeline input.
    pub fn noisy_views(&self) -> Result<Vec<SourceView>> {
        self.sources
            .iter()
            .map(|s| SourceView::new(s.image.clone(), s.mask.clone(), s.noisy_pose))
            .collect()
    }

    /// Source views annotated with their exact poses, the error-free baseline.
    pub fn exact_views(&self) -> Result<Vec<SourceView>> {
        self.sources
            .iter()
            .map(|s| SourceView::new(s.image.clone(), s.mask.clone(), s.exact_pose))
            .collect()
    }
}

/// Builds a seeded trial: sources are placed on viewpoints fanned around the
/// target viewpoint (so each one observes part of the target-visible
/// surface), rendered at their exact poses, and annotated with poses
/// perturbed by up to the given ranges.
pub fn make_trial_set(
    kind: PrimitiveKind,
    target_pose: &RigidPose,
    camera: &Camera,
    n_sources: usize,
    trans_err_m: f64,
    rot_err_rad: f64,
    seed: u64,
) -> Result<TrialSet> {
    if trans_err_m < 0.0 || rot_err_rad < 0.0 {
        return Err(Error::invalid("error ranges must be nonnegative"));
    }
    if n_sources == 0 {
        return Err(Error::invalid("need at least one source view"));
    }
    // Boxes get two subdivision levels: 8 vertices is too coarse for
    // vertex-visibility bookkeeping, and real scanned meshes are dense.
    let mesh = match kind {
        PrimitiveKind::Box { .. } => subdivide_mesh(&make_primitive(kind)?, 2)?,
        PrimitiveKind::Cylinder { .. } => make_primitive(kind)?,
    };
    let texture = procedural_texture(mix_seed(seed, 0xA11CE), 256);

    // Fixed world-frame light tilted off the target view axis: shading is
    // view-independent, so exact-pose sources agree on surface color.
    let view_axis = target_pose.rotation.transpose() * Vector3::new(0.0, 0.0, 1.0);
    let light_dir = (view_axis + Vector3::new(0.15, 0.1, -0.3)).normalize();

    let gt = render_gt_view(&mesh, &texture, target_pose, camera, &light_dir);

    let center = target_pose.camera_center();
    let rho = center.norm();
    let base_az = center.y.atan2(center.x);
    let base_el = (center.z / rho).clamp(-1.0, 1.0).asin();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5EED));

    let mut sources = Vec::with_capacity(n_sources);
    for i in 0..n_sources {
        let spread = if n_sources == 1 {
            0.0
        } else {
            -50.0 + 100.0 * i as f64 / (n_sources - 1) as f64
        };
        let alt: f64 = [12.0, -12.0, 18.0, -18.0, 0.0][i % 5];
        let az = base_az + (spread + rng.gen_range(-4.0..4.0)).to_radians();
        let el = (base_el + (alt + rng.gen_range(-4.0..4.0)).to_radians())
            .clamp(10f64.to_radians(), 80f64.to_radians());
        let eye = Vector3::new(rho * el.cos() * az.cos(), rho * el.cos() * az.sin(), rho * el.sin());
        let exact_pose = look_at_pose(&eye, &Vector3::zeros(), &Vector3::new(0.0, 0.0, 1.0))?;
        let render = render_gt_view(&mesh, &texture, &exact_pose, camera, &light_dir);
        let noisy_pose =
            perturb_pose(&exact_pose, trans_err_m, rot_err_rad, mix_seed(seed, 0xB0B + i as u64));
        sources.push(TrialSource {
            image: render.image,
            mask: render.mask,
            exact_pose,
            noisy_pose,
        });
    }

    Ok(TrialSet {
        mesh,
        texture,
        camera: *camera,
        target_pose: *target_pose,
        target_image: gt.image,
        target_mask: gt.mask,
        sources,
        light_dir,
        trans_err_m,
        rot_err_rad,
        seed,
    })
}

/// A deterministic target pose for trial `index`: random azimuth, elevation
/// in [25°, 65°], camera distance 3 diameters.
pub fn trial_target_pose(diameter: f64, seed: u64, index: u64) -> Result<RigidPose> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x7A4 + index));
    let az = rng.gen_range(0.0..std::f64::consts::TAU);
    let el = rng.gen_range(25f64.to_radians()..65f64.to_radians());
    let rho = 3.0 * diameter;
    let eye = Vector3::new(rho * el.cos() * az.cos(), rho * el.cos() * az.sin(), rho * el.sin());
    look_at_pose(&eye, &Vector3::zeros(), &Vector3::new(0.0, 0.0, 1.0))
}
