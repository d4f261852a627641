//! Procedural shape corpus: complete surfaces, view-dependent partial
//! crops, unpaired pools, and the `.xyz` file format.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::DataConfig;
use crate::error::{Error, Result};
use crate::geometry::{self, PointCloud};
use crate::rng::{derive_seed, rng_for, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Sphere,
    Cuboid,
    Cylinder,
    Table,
    Chair,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Sphere,
        Family::Cuboid,
        Family::Cylinder,
        Family::Table,
        Family::Chair,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Sphere => "sphere",
            Family::Cuboid => "cuboid",
            Family::Cylinder => "cylinder",
            Family::Table => "table",
            Family::Chair => "chair",
        }
    }
}

/// Axis-aligned box given by center and half extents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slab {
    pub center: [f64; 3],
    pub half: [f64; 3],
}

impl Slab {
    fn from_bounds(lo: [f64; 3], hi: [f64; 3]) -> Self {
        Slab {
            center: [0, 1, 2].map(|k| 0.5 * (lo[k] + hi[k])),
            half: [0, 1, 2].map(|k| 0.5 * (hi[k] - lo[k])),
        }
    }

    fn area(&self) -> f64 {
        let [a, b, c] = self.half;
        8.0 * (a * b + b * c + a * c)
    }
}

/// Geometry of one shape instance. `Cylinder` is aligned with the y axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum Shape {
    Sphere { radius: f64 },
    Cuboid { half: [f64; 3] },
    Cylinder { radius: f64, half_height: f64 },
    /// Unions of boxes (top and legs, or seat, back and legs).
    Table { parts: Vec<Slab> },
    Chair { parts: Vec<Slab> },
}

/// A shape plus the seed of its surface sampler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub shape: Shape,
    pub seed: u64,
}

fn legs(x_half: f64, z_half: f64, leg: f64, bottom: f64, top: f64) -> Vec<Slab> {
    let mut out = Vec::with_capacity(4);
    for sx in [-1.0, 1.0] {
        for sz in [-1.0, 1.0] {
            let cx = sx * (x_half - leg);
            let cz = sz * (z_half - leg);
            out.push(Slab::from_bounds([cx - leg, bottom, cz - leg], [cx + leg, top, cz + leg]));
        }
    }
    out
}

impl ShapeSpec {
    /// Draws in-range parameters for `family`. Every family stays inside
    /// `[-0.49, 0.49]³`.
    ///
    /// | family   | parameters |
    /// |----------|------------|
    /// | sphere   | radius 0.25–0.49 |
    /// | cuboid   | half extents 0.1–0.49 |
    /// | cylinder | radius 0.15–0.49, half height 0.15–0.49 |
    /// | table    | top half 0.3–0.49, height 0.5–0.98, leg half 0.02–0.06 |
    /// | chair    | seat half 0.2–0.35, seat y −0.15–0.05, back top 0.3–0.49 |
    pub fn random(family: Family, seed: u64) -> Self {
        let mut rng = rng_for(seed, stream::SHAPE, 0);
        let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
        let shape = match family {
            Family::Sphere => Shape::Sphere { radius: u(0.25, 0.49) },
            Family::Cuboid => Shape::Cuboid {
                half: [u(0.1, 0.49), u(0.1, 0.49), u(0.1, 0.49)],
            },
            Family::Cylinder => Shape::Cylinder {
                radius: u(0.15, 0.49),
                half_height: u(0.15, 0.49),
            },
            Family::Table => {
                let (hx, hz) = (u(0.3, 0.49), u(0.3, 0.49));
                let height = u(0.5, 0.98);
                let thick = u(0.02, 0.05);
                let leg = u(0.02, 0.06);
                let (bottom, top) = (-0.5 * height, 0.5 * height);
                let mut parts = vec![Slab::from_bounds(
                    [-hx, top - 2.0 * thick, -hz],
                    [hx, top, hz],
                )];
                parts.extend(legs(hx, hz, leg, bottom, top - 2.0 * thick));
                Shape::Table { parts }
            }
            Family::Chair => {
                let (hx, hz) = (u(0.2, 0.35), u(0.2, 0.35));
                let seat_y = u(-0.15, 0.05);
                let thick = u(0.02, 0.04);
                let back_top = u(0.3, 0.49);
                let back = u(0.02, 0.04);
                let leg = u(0.02, 0.05);
                let mut parts = vec![
                    Slab::from_bounds([-hx, seat_y - thick, -hz], [hx, seat_y + thick, hz]),
                    Slab::from_bounds(
                        [-hx, seat_y + thick, -hz],
                        [hx, back_top, -hz + 2.0 * back],
                    ),
                ];
                parts.extend(legs(hx, hz, leg, -0.49, seat_y - thick));
                Shape::Chair { parts }
            }
        };
        ShapeSpec {
            shape,
            seed: derive_seed(seed, stream::SHAPE, 1),
        }
    }

    pub fn family(&self) -> Family {
        match self.shape {
            Shape::Sphere { .. } => Family::Sphere,
            Shape::Cuboid { .. } => Family::Cuboid,
            Shape::Cylinder { .. } => Family::Cylinder,
            Shape::Table { .. } => Family::Table,
            Shape::Chair { .. } => Family::Chair,
        }
    }
}

fn degenerate(what: &str) -> Error {
    Error::InvalidArgument(format!("degenerate shape: {what}"))
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

fn sample_slabs(parts: &[Slab], n: usize, rng: &mut impl Rng) -> Result<Vec<[f64; 3]>> {
    if parts.is_empty() {
        return Err(degenerate("no parts"));
    }
    if parts.iter().any(|s| !s.half.iter().all(|&h| positive(h))) {
        return Err(degenerate("box with a non-positive extent"));
    }
    let areas: Vec<f64> = parts.iter().map(Slab::area).collect();
    let total: f64 = areas.iter().sum();
    let pick = |rng: &mut dyn rand::RngCore, weights: &[f64], total: f64| {
        let mut t = rng.random_range(0.0..total);
        for (i, w) in weights.iter().enumerate() {
            if t < *w {
                return i;
            }
            t -= w;
        }
        weights.len() - 1
    };
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        let s = &parts[pick(rng, &areas, total)];
        let [a, b, c] = s.half;
        // face pairs normal to x, y, z
        let faces = [b * c, a * c, a * b];
        let axis = pick(rng, &faces, faces.iter().sum());
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let mut p = [0.0; 3];
        for k in 0..3 {
            p[k] = s.center[k]
                + if k == axis {
                    sign * s.half[k]
                } else {
                    rng.random_range(-s.half[k]..s.half[k])
                };
        }
        pts.push(p);
    }
    Ok(pts)
}

/// Draws `n_points` area-uniformly from the shape's surface.
pub fn sample_complete(spec: &ShapeSpec, n_points: usize) -> Result<PointCloud> {
    if n_points == 0 {
        return Err(Error::EmptyCloud);
    }
    let mut rng = rng_for(spec.seed, stream::SHAPE, 2);
    let pts = match &spec.shape {
        Shape::Sphere { radius } => {
            let r = *radius;
            if !positive(r) {
                return Err(degenerate("sphere radius"));
            }
            (0..n_points)
                .map(|_| loop {
                    let v: [f64; 3] = [
                        rng.sample(StandardNormal),
                        rng.sample(StandardNormal),
                        rng.sample(StandardNormal),
                    ];
                    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                    if norm > 1e-12 {
                        break v.map(|c| r * c / norm);
                    }
                })
                .collect()
        }
        Shape::Cuboid { half } => sample_slabs(
            &[Slab {
                center: [0.0; 3],
                half: *half,
            }],
            n_points,
            &mut rng,
        )?,
        Shape::Cylinder { radius, half_height } => {
            let (r, h) = (*radius, *half_height);
            if !positive(r) || !positive(h) {
                return Err(degenerate("cylinder radius or height"));
            }
            let side = 2.0 * std::f64::consts::PI * r * 2.0 * h;
            let cap = std::f64::consts::PI * r * r;
            (0..n_points)
                .map(|_| {
                    let t = rng.random_range(0.0..side + 2.0 * cap);
                    let phi = rng.random_range(0.0..2.0 * std::f64::consts::PI);
                    if t < side {
                        [r * phi.cos(), rng.random_range(-h..h), r * phi.sin()]
                    } else {
                        // uniform on a disc
                        let rho = r * rng.random::<f64>().sqrt();
                        let y = if t < side + cap { h } else { -h };
                        [rho * phi.cos(), y, rho * phi.sin()]
                    }
                })
                .collect()
        }
        Shape::Table { parts } | Shape::Chair { parts } => sample_slabs(parts, n_points, &mut rng)?,
    };
    PointCloud::new(pts)
}

/// The eight cube-corner view directions.
pub fn view_directions() -> [[f64; 3]; 8] {
    let s = 1.0 / 3f64.sqrt();
    let mut out = [[0.0; 3]; 8];
    for (i, d) in out.iter_mut().enumerate() {
        *d = [
            if i & 1 == 0 { s } else { -s },
            if i & 2 == 0 { s } else { -s },
            if i & 4 == 0 { s } else { -s },
        ];
    }
    out
}

/// Result of cropping a complete cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct Partial {
    /// The retained points, a subset of the input.
    pub kept: PointCloud,
    /// `kept` resampled with replacement back to the input size.
    pub cloud: PointCloud,
    /// Largest `dot(p − centroid, view_dir)` among retained points.
    pub threshold: f64,
    pub centroid: [f64; 3],
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Projection of `p` onto the view axis of a crop.
pub fn view_depth(p: &[f64; 3], centroid: &[f64; 3], view_dir: &[f64; 3]) -> f64 {
    dot(&[p[0] - centroid[0], p[1] - centroid[1], p[2] - centroid[2]], view_dir)
}

/// Keeps the `keep_fraction` of points lying furthest against `view_dir`
/// (lowest `dot(p − centroid, view_dir)`), then resamples to the original
/// point count.
pub fn make_partial(
    complete: &PointCloud,
    view_dir: [f64; 3],
    keep_fraction: f64,
    rng: &mut impl Rng,
) -> Result<Partial> {
    if !(keep_fraction > 0.0 && keep_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "keep_fraction must lie in (0, 1), got {keep_fraction}"
        )));
    }
    let len = dot(&view_dir, &view_dir).sqrt();
    if !(len > 0.0 && len.is_finite()) {
        return Err(Error::InvalidArgument("view direction must be non-zero".into()));
    }
    let dir = view_dir.map(|v| v / len);
    let n = complete.len();
    let centroid = complete.centroid();
    let depth: Vec<f64> = complete
        .points()
        .iter()
        .map(|p| view_depth(p, &centroid, &dir))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| depth[a].total_cmp(&depth[b]).then(a.cmp(&b)));
    let keep = ((keep_fraction * n as f64).round() as usize).clamp(1, n);
    let mut chosen: Vec<usize> = order[..keep].to_vec();
    chosen.sort_unstable();
    let threshold = chosen.iter().map(|&i| depth[i]).fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<[f64; 3]> = chosen.iter().map(|&i| complete.points()[i]).collect();
    let mut resampled = kept.clone();
    while resampled.len() < n {
        resampled.push(kept[rng.random_range(0..kept.len())]);
    }
    Ok(Partial {
        kept: PointCloud::new(kept)?,
        cloud: PointCloud::new(resampled)?,
        threshold,
        centroid,
    })
}

// ---------------------------------------------------------------------------
// .xyz files

fn parse_line(path: &Path, lineno: usize, line: &str, want: usize) -> Result<Option<Vec<f64>>> {
    let t = line.trim();
    if t.is_empty() || t.starts_with('#') {
        return Ok(None);
    }
    let vals: Vec<f64> = t
        .split_whitespace()
        .map(|s| s.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            msg: format!("invalid number: {e}"),
        })?;
    if vals.len() < want {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            msg: format!("expected at least {want} values, found {}", vals.len()),
        });
    }
    if vals[..want].iter().any(|v| !v.is_finite()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            msg: "non-finite value".into(),
        });
    }
    Ok(Some(vals))
}

fn read_rows(path: &Path, want: usize) -> Result<Vec<Vec<f64>>> {
    let file = fs::File::open(path)?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        if let Some(v) = parse_line(path, i + 1, &line?, want)? {
            rows.push(v);
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: "no points".into(),
        });
    }
    Ok(rows)
}

/// Reads the first three columns of every non-comment line.
pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let rows = read_rows(path, 3)?;
    PointCloud::new(rows.iter().map(|r| [r[0], r[1], r[2]]).collect())
}

/// Reads a four-column file: points plus one scalar per point.
pub fn read_cloud_with_scalar(path: &Path) -> Result<(PointCloud, Vec<f64>)> {
    let rows = read_rows(path, 4)?;
    let cloud = PointCloud::new(rows.iter().map(|r| [r[0], r[1], r[2]]).collect())?;
    Ok((cloud, rows.iter().map(|r| r[3]).collect()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, text)?;
    Ok(())
}

/// Writes one `x y z` line per point using shortest round-trip decimals.
pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut s = format!("# {} points\n", cloud.len());
    for p in cloud.points() {
        let _ = writeln!(s, "{} {} {}", p[0], p[1], p[2]);
    }
    write_text(path, &s)
}

/// Writes `x y z scalar` lines.
pub fn write_cloud_with_scalar(path: &Path, cloud: &PointCloud, scalar: &[f64]) -> Result<()> {
    if scalar.len() != cloud.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scalars for {} points",
            scalar.len(),
            cloud.len()
        )));
    }
    let mut s = format!("# {} points: x y z value\n", cloud.len());
    for (p, v) in cloud.points().iter().zip(scalar) {
        let _ = writeln!(s, "{} {} {} {}", p[0], p[1], p[2], v);
    }
    write_text(path, &s)
}

// ---------------------------------------------------------------------------
// Datasets

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub cloud: PointCloud,
    pub family: Family,
    pub instance: u64,
}

/// Evaluation pair with the crop geometry needed to tell observed from
/// occluded regions.
#[derive(Clone, Debug, PartialEq)]
pub struct HeldOutPair {
    pub partial: PointCloud,
    pub complete: PointCloud,
    pub family: Family,
    pub instance: u64,
    pub view_dir: [f64; 3],
    pub centroid: [f64; 3],
    pub threshold: f64,
}

impl HeldOutPair {
    /// Whether a point lies beyond the crop plane (in the removed half).
    pub fn is_occluded(&self, p: &[f64; 3]) -> bool {
        view_depth(p, &self.centroid, &self.view_dir) > self.threshold
    }
}

/// The two unpaired training pools. This is all the trainer ever sees.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPools {
    pub partial: Vec<Sample>,
    pub complete: Vec<Sample>,
}

impl TrainingPools {
    pub fn num_points(&self) -> Option<usize> {
        self.partial.first().map(|s| s.cloud.len())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train: TrainingPools,
    pub held_out: Vec<HeldOutPair>,
}

impl DatasetSplit {
    /// Instance ids shared by the partial and complete training pools.
    pub fn pool_overlap(&self) -> Vec<u64> {
        let complete: std::collections::BTreeSet<u64> =
            self.train.complete.iter().map(|s| s.instance).collect();
        let mut shared: Vec<u64> = self
            .train
            .partial
            .iter()
            .map(|s| s.instance)
            .filter(|i| complete.contains(i))
            .collect();
        shared.dedup();
        shared
    }
}

fn keep_fraction(cfg: &DataConfig, rng: &mut impl Rng) -> f64 {
    if cfg.keep_fraction_max > cfg.keep_fraction_min {
        rng.random_range(cfg.keep_fraction_min..cfg.keep_fraction_max)
    } else {
        cfg.keep_fraction_min
    }
}

/// Builds disjoint partial, complete and held-out pools. Per family, the
/// first `heldout_per_family` instances are held out and the rest alternate
/// between the partial and the complete pool.
pub fn build_dataset(cfg: &DataConfig, seed: u64) -> Result<DatasetSplit> {
    cfg.validate()?;
    let views = view_directions();
    let mut train = TrainingPools {
        partial: Vec::new(),
        complete: Vec::new(),
    };
    let mut held_out = Vec::new();
    let mut instance = 0u64;
    let mut view_counter = 0usize;
    for &family in &cfg.families {
        for i in 0..cfg.instances_per_family {
            let id = instance;
            instance += 1;
            let spec = ShapeSpec::random(family, derive_seed(seed, stream::SHAPE, id));
            let complete = sample_complete(&spec, cfg.num_points)?;
            let nviews = if i < cfg.heldout_per_family {
                cfg.heldout_views
            } else {
                cfg.partial_views
            };
            let is_partial_pool = (i - cfg.heldout_per_family.min(i)) % 2 == 0;
            if i >= cfg.heldout_per_family && !is_partial_pool {
                train.complete.push(Sample {
                    cloud: complete,
                    family,
                    instance: id,
                });
                continue;
            }
            for v in 0..nviews {
                let dir = views[view_counter % views.len()];
                view_counter += 1;
                let mut rng = rng_for(seed, stream::PARTIAL, id * 1024 + v as u64);
                let kf = keep_fraction(cfg, &mut rng);
                let part = make_partial(&complete, dir, kf, &mut rng)?;
                if i < cfg.heldout_per_family {
                    held_out.push(HeldOutPair {
                        partial: part.cloud,
                        complete: complete.clone(),
                        family,
                        instance: id,
                        view_dir: dir,
                        centroid: part.centroid,
                        threshold: part.threshold,
                    });
                } else {
                    train.partial.push(Sample {
                        cloud: part.cloud,
                        family,
                        instance: id,
                    });
                }
            }
        }
    }
    Ok(DatasetSplit { train, held_out })
}

// ---------------------------------------------------------------------------
// Manifest

pub const MANIFEST_FORMAT: &str = "ebcomplete-dataset/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub family: Family,
    pub instance: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestPair {
    pub partial: PathBuf,
    pub complete: PathBuf,
    pub family: Family,
    pub instance: u64,
    pub view_dir: [f64; 3],
    pub centroid: [f64; 3],
    pub threshold: f64,
}

/// On-disk index of a dataset; paths are relative to the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub seed: u64,
    pub config: DataConfig,
    pub partial: Vec<ManifestEntry>,
    pub complete: Vec<ManifestEntry>,
    pub held_out: Vec<ManifestPair>,
}

/// Writes all clouds under `dir` and returns the manifest path.
pub fn write_dataset(dir: &Path, split: &DatasetSplit, cfg: &DataConfig, seed: u64) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let entry = |sub: &str, k: usize, s: &Sample| -> Result<ManifestEntry> {
        let rel = PathBuf::from(sub).join(format!("{}_{:05}_{k:04}.xyz", s.family.name(), s.instance));
        write_cloud(&dir.join(&rel), &s.cloud)?;
        Ok(ManifestEntry {
            path: rel,
            family: s.family,
            instance: s.instance,
        })
    };
    let partial = split
        .train
        .partial
        .iter()
        .enumerate()
        .map(|(k, s)| entry("partial", k, s))
        .collect::<Result<Vec<_>>>()?;
    let complete = split
        .train
        .complete
        .iter()
        .enumerate()
        .map(|(k, s)| entry("complete", k, s))
        .collect::<Result<Vec<_>>>()?;
    let mut held_out = Vec::with_capacity(split.held_out.len());
    for (k, p) in split.held_out.iter().enumerate() {
        let stem = format!("{}_{:05}_{k:04}", p.family.name(), p.instance);
        let pr = PathBuf::from("heldout").join(format!("{stem}_partial.xyz"));
        let cr = PathBuf::from("heldout").join(format!("{stem}_complete.xyz"));
        write_cloud(&dir.join(&pr), &p.partial)?;
        write_cloud(&dir.join(&cr), &p.complete)?;
        held_out.push(ManifestPair {
            partial: pr,
            complete: cr,
            family: p.family,
            instance: p.instance,
            view_dir: p.view_dir,
            centroid: p.centroid,
            threshold: p.threshold,
        });
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        seed,
        config: cfg.clone(),
        partial,
        complete,
        held_out,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

/// Resolves a manifest argument that may be the file or its directory.
pub fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("manifest.json")
    } else {
        p.to_path_buf()
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let path = manifest_path(path);
    let text = fs::read_to_string(&path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    let m: Manifest = serde_json::from_str(&text)?;
    if m.format != MANIFEST_FORMAT {
        return Err(Error::InvalidArgument(format!(
            "{}: unsupported manifest format {:?}",
            path.display(),
            m.format
        )));
    }
    Ok(m)
}

fn base_dir(path: &Path) -> PathBuf {
    manifest_path(path)
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

/// Loads only the two training pools of a dataset.
pub fn load_training_pools(manifest: &Path) -> Result<TrainingPools> {
    let m = read_manifest(manifest)?;
    let base = base_dir(manifest);
    let load = |entries: &[ManifestEntry]| -> Result<Vec<Sample>> {
        entries
            .iter()
            .map(|e| {
                Ok(Sample {
                    cloud: read_cloud(&base.join(&e.path))?,
                    family: e.family,
                    instance: e.instance,
                })
            })
            .collect()
    };
    Ok(TrainingPools {
        partial: load(&m.partial)?,
        complete: load(&m.complete)?,
    })
}

/// Loads the evaluation pairs of a dataset.
pub fn load_held_out(manifest: &Path) -> Result<Vec<HeldOutPair>> {
    let m = read_manifest(manifest)?;
    let base = base_dir(manifest);
    m.held_out
        .iter()
        .map(|p| {
            Ok(HeldOutPair {
                partial: read_cloud(&base.join(&p.partial))?,
                complete: read_cloud(&base.join(&p.complete))?,
                family: p.family,
                instance: p.instance,
                view_dir: p.view_dir,
                centroid: p.centroid,
                threshold: p.threshold,
            })
        })
        .collect()
}

/// CD between each held-out partial and its ground truth.
pub fn baseline_cd(pair: &HeldOutPair) -> Result<f64> {
    geometry::chamfer_distance(&pair.partial, &pair.complete)
}
