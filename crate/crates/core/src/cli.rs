//! Command-line front end: configuration, the `register`, `morph`,
//! `evaluate` and `basis-info` commands, and their file formats.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::basis::{basis_field, CoefficientVector, DeformationBasis, ModeIndex};
use crate::descriptors::{
    build_distance_model, compute_descriptors, estimate_normals, load_descriptors, DescriptorBins, DescriptorSet,
};
use crate::domain::{
    farthest_point_sample, fit_domain, load_shape, nearest_to_centroid, pca_align, write_shape, DomainTransform, Mesh,
    PointCloud, ShapeFormat,
};
use crate::em::{extract_correspondences_streaming, run_em, EmConfig};
use crate::error::{Error, Result};
use crate::eval::{default_thresholds, princeton_curve, EvalReport, GeodesicIndex};
use crate::flow::{extrapolate, integrate, FlowConfig};
use crate::format::{fmt_exact, fmt_sig9, write_atomic};

/// Neighbors used for normal estimation when a shape has no normals.
const NORMAL_NEIGHBORS: usize = 12;

/// Header of the coefficient file.
const FIELD_MAGIC: &str = "MORPHFLOW-FIELD v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DescriptorMode {
    Shot,
    File,
    None,
}

impl FromStr for DescriptorMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "shot" => Ok(DescriptorMode::Shot),
            "file" => Ok(DescriptorMode::File),
            "none" => Ok(DescriptorMode::None),
            other => Err(format!("unknown descriptor mode `{other}` (expected shot, file or none)")),
        }
    }
}

impl DescriptorMode {
    fn as_str(self) -> &'static str {
        match self {
            DescriptorMode::Shot => "shot",
            DescriptorMode::File => "file",
            DescriptorMode::None => "none",
        }
    }
}

/// Every setting of a run. Defaults, then the config file, then flags.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub sigma2: f64,
    pub steps: usize,
    pub basis_k: usize,
    /// Prior exponent; `None` means `D/2`.
    pub basis_exponent: Option<f64>,
    pub downsample: usize,
    pub margin: f64,
    pub huber_r0: f64,
    pub max_iters: usize,
    pub energy_tol: f64,
    pub descriptor_mode: DescriptorMode,
    pub descriptor_radius: f64,
    /// Farthest point sampling start; `None` means the point nearest the centroid.
    pub seed: Option<usize>,
    /// Worker threads, 0 for all cores.
    pub threads: usize,
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub source_descriptors: Option<PathBuf>,
    pub target_descriptors: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dim: 3,
            sigma2: 0.01,
            steps: 20,
            basis_k: 3000,
            basis_exponent: None,
            downsample: 3000,
            margin: 0.1,
            huber_r0: 0.01,
            max_iters: 100,
            energy_tol: 1e-5,
            descriptor_mode: DescriptorMode::Shot,
            descriptor_radius: 0.1,
            seed: None,
            threads: 0,
            source: None,
            target: None,
            source_descriptors: None,
            target_descriptors: None,
        }
    }
}

fn parse_value<V: FromStr>(key: &str, value: &str) -> std::result::Result<V, String>
where
    V::Err: std::fmt::Display,
{
    value.parse().map_err(|e| format!("bad value `{value}` for `{key}`: {e}"))
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "dim" => self.dim = parse_value(key, value)?,
            "sigma2" => self.sigma2 = parse_value(key, value)?,
            "steps" => self.steps = parse_value(key, value)?,
            "basis_k" => self.basis_k = parse_value(key, value)?,
            "basis_exponent" => self.basis_exponent = Some(parse_value(key, value)?),
            "downsample" => self.downsample = parse_value(key, value)?,
            "margin" => self.margin = parse_value(key, value)?,
            "huber_r0" => self.huber_r0 = parse_value(key, value)?,
            "max_iters" => self.max_iters = parse_value(key, value)?,
            "energy_tol" => self.energy_tol = parse_value(key, value)?,
            "descriptor_mode" => self.descriptor_mode = value.parse()?,
            "descriptor_radius" => self.descriptor_radius = parse_value(key, value)?,
            "seed" => self.seed = Some(parse_value(key, value)?),
            "threads" => self.threads = parse_value(key, value)?,
            "source" => self.source = Some(value.into()),
            "target" => self.target = Some(value.into()),
            "source_descriptors" => self.source_descriptors = Some(value.into()),
            "target_descriptors" => self.target_descriptors = Some(value.into()),
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Applies a `key=value` file; blank lines and `#` comments are ignored.
    /// Relative paths in the file are resolved against its directory.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::parse(path, i + 1, "expected key=value"));
            };
            let (key, value) = (key.trim(), value.trim());
            let value = if matches!(key, "source" | "target" | "source_descriptors" | "target_descriptors") {
                base.join(value).to_string_lossy().into_owned()
            } else {
                value.to_string()
            };
            self.set(key, &value).map_err(|msg| Error::parse(path, i + 1, msg))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.dim != 2 && self.dim != 3 {
            return bad("dim must be 2 or 3");
        }
        if !(self.sigma2 > 0.0) || !(self.huber_r0 > 0.0) {
            return bad("sigma2 and huber_r0 must be positive");
        }
        if self.steps == 0 || self.basis_k == 0 || self.downsample == 0 {
            return bad("steps, basis_k and downsample must be positive");
        }
        if !(self.energy_tol >= 0.0) || !(self.descriptor_radius > 0.0) {
            return bad("energy_tol must be nonnegative and descriptor_radius positive");
        }
        Ok(())
    }

    pub fn basis(&self) -> Result<DeformationBasis<f64>> {
        match self.basis_exponent {
            Some(e) => DeformationBasis::enumerate(self.dim, self.basis_k, e),
            None => DeformationBasis::with_default_exponent(self.dim, self.basis_k),
        }
    }

    pub fn flow(&self) -> Result<FlowConfig<f64>> {
        FlowConfig::new(self.steps)
    }

    pub fn em(&self) -> EmConfig<f64> {
        EmConfig {
            sigma2: self.sigma2,
            r0: self.huber_r0,
            max_iters: self.max_iters,
            rel_energy_tol: self.energy_tol,
            ..EmConfig::default()
        }
    }

    /// `key=value` lines of every numeric setting, in a fixed order.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        let exponent = self.basis_exponent.unwrap_or(self.dim as f64 / 2.0);
        let seed = self.seed.map_or_else(|| "centroid".to_string(), |v| v.to_string());
        let _ = writeln!(s, "dim={}", self.dim);
        let _ = writeln!(s, "sigma2={}", self.sigma2);
        let _ = writeln!(s, "steps={}", self.steps);
        let _ = writeln!(s, "basis_k={}", self.basis_k);
        let _ = writeln!(s, "basis_exponent={exponent}");
        let _ = writeln!(s, "downsample={}", self.downsample);
        let _ = writeln!(s, "margin={}", self.margin);
        let _ = writeln!(s, "huber_r0={}", self.huber_r0);
        let _ = writeln!(s, "max_iters={}", self.max_iters);
        let _ = writeln!(s, "energy_tol={}", self.energy_tol);
        let _ = writeln!(s, "descriptor_mode={}", self.descriptor_mode.as_str());
        let _ = writeln!(s, "descriptor_radius={}", self.descriptor_radius);
        let _ = writeln!(s, "seed={seed}");
        s
    }

    fn source_path(&self) -> Result<&Path> {
        self.source.as_deref().ok_or_else(|| Error::InvalidArgument("no source shape given".into()))
    }

    fn target_path(&self) -> Result<&Path> {
        self.target.as_deref().ok_or_else(|| Error::InvalidArgument("no target shape given".into()))
    }
}

/// Reads a coefficient file and checks it against the basis.
pub fn read_field(path: &Path, basis: &DeformationBasis<f64>) -> Result<CoefficientVector<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Err(Error::parse(path, 1, "empty field file"));
    };
    let rest = header
        .strip_prefix(FIELD_MAGIC)
        .ok_or_else(|| Error::parse(path, 1, format!("expected `{FIELD_MAGIC}` header")))?;
    let mut dim = None;
    let mut k = None;
    for tok in rest.split_whitespace() {
        match tok.split_once('=') {
            Some(("D", v)) => dim = v.parse::<usize>().ok(),
            Some(("K", v)) => k = v.parse::<usize>().ok(),
            _ => return Err(Error::parse(path, 1, format!("unexpected header token `{tok}`"))),
        }
    }
    let (Some(dim), Some(k)) = (dim, k) else {
        return Err(Error::parse(path, 1, "header must give D=<d> K=<k>"));
    };
    if dim != basis.dim() || k != basis.len() {
        return Err(Error::FieldMismatch(format!(
            "file has D={dim} K={k}, configuration has D={} K={}",
            basis.dim(),
            basis.len()
        )));
    }
    let mut values = Vec::with_capacity(k);
    for (i, line) in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != dim + 2 {
            return Err(Error::parse(path, i + 1, format!("expected {} fields", dim + 2)));
        }
        let ints: Vec<u32> = toks[..=dim]
            .iter()
            .map(|t| t.parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        let value: f64 = toks[dim + 1].parse().map_err(|e: std::num::ParseFloatError| Error::parse(path, i + 1, e.to_string()))?;
        let idx = values.len();
        if idx >= k {
            return Err(Error::parse(path, i + 1, format!("more than K={k} coefficients")));
        }
        let mode = ModeIndex::new(&ints[..dim], ints[dim] as u8);
        if mode != basis.entries()[idx].mode {
            return Err(Error::FieldMismatch(format!("line {}: mode does not match basis entry {}", i + 1, idx + 1)));
        }
        values.push(value);
    }
    if values.len() != k {
        return Err(Error::FieldMismatch(format!("file lists {} of K={k} coefficients", values.len())));
    }
    CoefficientVector::new(values)
}

/// Text form of a coefficient file: header, then one `j.. component a_k` line per mode.
pub fn field_to_string(basis: &DeformationBasis<f64>, a: &CoefficientVector<f64>) -> String {
    let dim = basis.dim();
    let mut s = format!("{FIELD_MAGIC} D={dim} K={}\n", basis.len());
    for (e, &ak) in basis.entries().iter().zip(a.as_slice()) {
        for j in e.mode.freq(dim) {
            let _ = write!(s, "{j} ");
        }
        let _ = writeln!(s, "{} {}", e.mode.component, fmt_exact(ak));
    }
    s
}

pub fn write_field(path: &Path, basis: &DeformationBasis<f64>, a: &CoefficientVector<f64>) -> Result<()> {
    write_atomic(path, field_to_string(basis, a).as_bytes())
}

/// Reads `source_index,target_index` rows; a non-numeric first line is taken as a header.
pub fn read_correspondences(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let parsed = line.split_once(',').and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
        match parsed {
            Some(pair) => out.push(pair),
            None if i == 0 => continue,
            None => return Err(Error::parse(path, i + 1, "expected source_index,target_index")),
        }
    }
    Ok(out)
}

pub fn correspondences_to_string(pairs: &[(usize, usize)]) -> String {
    let mut s = String::from("source_index,target_index\n");
    for (a, b) in pairs {
        let _ = writeln!(s, "{a},{b}");
    }
    s
}

/// Both shapes after loading, PCA alignment and mapping into the unit domain.
pub struct NormalizedPair {
    pub source: Mesh<f64>,
    pub target: Mesh<f64>,
    pub transform: DomainTransform<f64>,
    pub source_format: ShapeFormat,
}

fn load_for(cfg: &RunConfig, path: &Path) -> Result<(Mesh<f64>, ShapeFormat)> {
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file")));
    }
    let format = ShapeFormat::from_path(path)?;
    let mut mesh = load_shape::<f64>(path, format)?;
    if cfg.dim == 2 {
        let faces = mesh.faces().to_vec();
        mesh = Mesh::new(mesh.cloud.to_planar()?, faces)?;
    }
    Ok((mesh, format))
}

/// Loads source and target and places them in the unit domain.
pub fn normalize_inputs(cfg: &RunConfig) -> Result<NormalizedPair> {
    let (src, source_format) = load_for(cfg, cfg.source_path()?)?;
    let (tgt, _) = load_for(cfg, cfg.target_path()?)?;
    let (src_aligned, tgt_aligned) = pca_align(&src.cloud, &tgt.cloud)?;
    let transform = fit_domain(&src_aligned, &tgt_aligned, cfg.margin)?;
    let source = Mesh::new(transform.apply(&src_aligned), src.faces().to_vec())?;
    let target = Mesh::new(transform.apply(&tgt_aligned), tgt.faces().to_vec())?;
    Ok(NormalizedPair { source, target, transform, source_format })
}

fn sample_indices(cloud: &PointCloud<f64>, cfg: &RunConfig) -> Result<Vec<usize>> {
    if cloud.len() <= cfg.downsample {
        return Ok((0..cloud.len()).collect());
    }
    let seed = cfg.seed.unwrap_or_else(|| nearest_to_centroid(cloud));
    Ok(farthest_point_sample(cloud, cfg.downsample, seed)?.indices)
}

fn descriptors_for(cloud: &PointCloud<f64>, file: Option<&Path>, cfg: &RunConfig) -> Result<DescriptorSet<f64>> {
    match cfg.descriptor_mode {
        DescriptorMode::None => Ok(DescriptorSet::none(cloud.len())),
        DescriptorMode::File => {
            let path = file.ok_or_else(|| Error::InvalidArgument("descriptor_mode=file needs descriptor files".into()))?;
            load_descriptors(path, cloud.len())
        }
        DescriptorMode::Shot => {
            let with_normals = if cloud.has_normals() { cloud.clone() } else { estimate_normals(cloud, NORMAL_NEIGHBORS)? };
            compute_descriptors(&with_normals, cfg.descriptor_radius, DescriptorBins::default())
        }
    }
}

/// Outcome of a registration, in normalized domain coordinates.
pub struct RegistrationResult {
    pub basis: DeformationBasis<f64>,
    pub coefficients: CoefficientVector<f64>,
    /// One hard match per full-resolution source point.
    pub correspondences: Vec<(usize, usize)>,
    pub energy_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub rejected_steps: usize,
    pub w_nonzeros: usize,
    pub mean_outlier_mass: f64,
    /// Full-resolution source advected to `t = 1`, with the source faces.
    pub registered: Mesh<f64>,
    pub normalized: NormalizedPair,
    pub sample_sizes: (usize, usize),
    pub timings: Vec<(&'static str, f64)>,
}

/// Runs the full pipeline: normalize, downsample, describe, estimate the
/// field, then advect and match the full-resolution source.
pub fn register(cfg: &RunConfig) -> Result<RegistrationResult> {
    cfg.validate()?;
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &'static str, timings: &mut Vec<(&'static str, f64)>| {
        timings.push((name, clock.elapsed().as_secs_f64()));
        clock = Instant::now();
    };

    let normalized = normalize_inputs(cfg)?;
    let (x_full, y_full) = (&normalized.source.cloud, &normalized.target.cloud);
    let basis = cfg.basis()?;
    let flow = cfg.flow()?;
    lap("load", &mut timings);

    let xi = sample_indices(x_full, cfg)?;
    let yi = sample_indices(y_full, cfg)?;
    let (x, y) = (x_full.select(&xi), y_full.select(&yi));
    let dx_full = descriptors_for(x_full, cfg.source_descriptors.as_deref(), cfg)?;
    let dy_full = descriptors_for(y_full, cfg.target_descriptors.as_deref(), cfg)?;
    let (dx, dy) = (dx_full.select(&xi), dy_full.select(&yi));
    lap("descriptors", &mut timings);

    let state = run_em(&x, &y, &basis, &dx, &dy, &flow, &cfg.em())?;
    lap("em", &mut timings);

    let registered_cloud = integrate(x_full, &basis, &state.a, &flow)?.endpoints();
    let scale = build_distance_model(&x, &y, &dx, &dy)?.descriptor_scale();
    let correspondences = extract_correspondences_streaming(&registered_cloud, y_full, &dx_full, &dy_full, scale)?;
    let registered = Mesh::new(registered_cloud, normalized.source.faces().to_vec())?;
    lap("apply", &mut timings);

    let outlier = &state.w.outlier_mass;
    let mean_outlier_mass = outlier.iter().sum::<f64>() / outlier.len().max(1) as f64;
    Ok(RegistrationResult {
        coefficients: state.a,
        correspondences,
        energy_history: state.energy_history,
        iterations: state.iteration,
        converged: state.converged,
        rejected_steps: state.rejected_steps,
        w_nonzeros: state.w.nonzeros(),
        mean_outlier_mass,
        registered,
        sample_sizes: (x.len(), y.len()),
        basis,
        normalized,
        timings,
    })
}

fn shape_ext(format: ShapeFormat) -> &'static str {
    match format {
        ShapeFormat::Off => "off",
        ShapeFormat::PlyAscii => "ply",
        ShapeFormat::Obj => "obj",
    }
}

/// Output file names inside a run directory.
pub const FIELD_FILE: &str = "field.txt";
pub const CORRESPONDENCE_FILE: &str = "correspondences.csv";
pub const ENERGY_FILE: &str = "energy.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Registers and writes the field, correspondences, energy history, the
/// registered source shape and a manifest into `out_dir`.
pub fn cmd_register(cfg: &RunConfig, out_dir: &Path) -> Result<RegistrationResult> {
    let result = register(cfg)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_field(&out_dir.join(FIELD_FILE), &result.basis, &result.coefficients)?;
    write_atomic(&out_dir.join(CORRESPONDENCE_FILE), correspondences_to_string(&result.correspondences).as_bytes())?;

    let mut energy = String::from("iteration,energy\n");
    for (i, e) in result.energy_history.iter().enumerate() {
        let _ = writeln!(energy, "{i},{}", fmt_exact(*e));
    }
    write_atomic(&out_dir.join(ENERGY_FILE), energy.as_bytes())?;

    let ext = shape_ext(result.normalized.source_format);
    let registered_name = format!("registered.{ext}");
    write_shape(&out_dir.join(&registered_name), result.normalized.source_format, &result.registered)?;

    let mut m = String::new();
    let _ = writeln!(m, "format=MORPHFLOW-RUN v1");
    let _ = writeln!(m, "source={}", cfg.source_path()?.display());
    let _ = writeln!(m, "target={}", cfg.target_path()?.display());
    m.push_str(&cfg.snapshot());
    let t = &result.normalized.transform;
    let _ = writeln!(m, "domain_scale={}", fmt_exact(t.scale));
    let translation: Vec<String> = t.translation.iter().map(|v| fmt_exact(*v)).collect();
    let _ = writeln!(m, "domain_translation={}", translation.join(" "));
    let _ = writeln!(m, "source_samples={}", result.sample_sizes.0);
    let _ = writeln!(m, "target_samples={}", result.sample_sizes.1);
    let _ = writeln!(m, "iterations={}", result.iterations);
    let _ = writeln!(m, "converged={}", result.converged);
    let _ = writeln!(m, "rejected_steps={}", result.rejected_steps);
    let _ = writeln!(m, "final_energy={}", fmt_exact(*result.energy_history.last().unwrap_or(&f64::NAN)));
    let _ = writeln!(m, "w_nonzeros={}", result.w_nonzeros);
    let _ = writeln!(m, "mean_outlier_mass={}", fmt_sig9(result.mean_outlier_mass));
    let _ = writeln!(m, "field_file={FIELD_FILE}");
    let _ = writeln!(m, "correspondence_file={CORRESPONDENCE_FILE}");
    let _ = writeln!(m, "energy_file={ENERGY_FILE}");
    let _ = writeln!(m, "registered_file={registered_name}");
    for (name, secs) in &result.timings {
        let _ = writeln!(m, "time_{name}_s={}", fmt_sig9(*secs));
    }
    write_atomic(&out_dir.join(MANIFEST_FILE), m.as_bytes())?;
    Ok(result)
}

/// Advects the full-resolution normalized source to each time in `times`.
pub fn morph(cfg: &RunConfig, a: &CoefficientVector<f64>, times: &[f64]) -> Result<(NormalizedPair, Vec<Mesh<f64>>)> {
    cfg.validate()?;
    let basis = cfg.basis()?;
    if a.len() != basis.len() {
        return Err(Error::FieldMismatch(format!("{} coefficients for K={}", a.len(), basis.len())));
    }
    let flow = cfg.flow()?;
    if times.is_empty() {
        return Err(Error::InvalidArgument("no times given".into()));
    }
    let normalized = normalize_inputs(cfg)?;
    let horizon = times.iter().fold(0.0f64, |m, &t| m.max(t));
    let bundle = extrapolate(&normalized.source.cloud, &basis, a, &flow, horizon)?;
    let faces = normalized.source.faces().to_vec();
    let shapes = times
        .iter()
        .map(|&t| Mesh::new(bundle.sample_time(t)?, faces.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok((normalized, shapes))
}

/// File name of the shape written for time `t`.
pub fn morph_file_name(t: f64, format: ShapeFormat) -> String {
    format!("morph_t{t}.{}", shape_ext(format))
}

pub fn cmd_morph(cfg: &RunConfig, field: &Path, times: &[f64], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let basis = cfg.basis()?;
    let a = read_field(field, &basis)?;
    let (normalized, shapes) = morph(cfg, &a, times)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut paths = Vec::new();
    for (&t, mesh) in times.iter().zip(&shapes) {
        let path = out_dir.join(morph_file_name(t, normalized.source_format));
        write_shape(&path, normalized.source_format, mesh)?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn cmd_evaluate(matches: &Path, ground_truth: &Path, target_mesh: &Path, out: &Path) -> Result<EvalReport<f64>> {
    let m = read_correspondences(matches)?;
    if m.is_empty() {
        return Err(Error::InvalidArgument(format!("{}: no matches", matches.display())));
    }
    let gt = read_correspondences(ground_truth)?;
    if !target_mesh.exists() {
        return Err(Error::io(target_mesh, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file")));
    }
    let mesh = load_shape::<f64>(target_mesh, ShapeFormat::from_path(target_mesh)?)?;
    let index = GeodesicIndex::new(&mesh)?;
    let report = princeton_curve(&m, &gt, &index, &default_thresholds())?;
    let crossing = report.per_point_error.iter().filter(|e| e.is_infinite()).count();
    if crossing > 0 {
        log::warn!("{crossing} matches land in a different connected component than their ground truth");
    }
    report.write(out)?;
    Ok(report)
}

/// `k,j1,..,component,laplace_eigenvalue,kl_weight` table of the basis, `k` from 1.
pub fn basis_table(basis: &DeformationBasis<f64>) -> String {
    let dim = basis.dim();
    let mut s = String::from("k,");
    for d in 1..=dim {
        let _ = write!(s, "j{d},");
    }
    s.push_str("component,laplace_eigenvalue,kl_weight\n");
    for (k, e) in basis.entries().iter().enumerate() {
        let _ = write!(s, "{},", k + 1);
        for j in e.mode.freq(dim) {
            let _ = write!(s, "{j},");
        }
        let _ = writeln!(
            s,
            "{},{},{}",
            e.mode.component,
            fmt_exact(e.laplace_eigenvalue),
            fmt_exact(e.kl_weight)
        );
    }
    s
}

/// Samples basis field `mode` (1-based) on a `res x res` cell-centered grid of
/// the plane `x3 = 0.5` (or the whole square in 2-D) as `x1,x2,v1,v2[,v3]` rows.
pub fn basis_grid(basis: &DeformationBasis<f64>, mode: usize, res: usize) -> Result<String> {
    if mode == 0 || mode > basis.len() || res == 0 {
        return Err(Error::InvalidArgument(format!("mode must lie in 1..={} and resolution be positive", basis.len())));
    }
    let dim = basis.dim();
    let entry = &basis.entries()[mode - 1];
    let mut s = if dim == 3 { String::from("x1,x2,v1,v2,v3\n") } else { String::from("x1,x2,v1,v2\n") };
    for i in 0..res {
        for j in 0..res {
            let x1 = (i as f64 + 0.5) / res as f64;
            let x2 = (j as f64 + 0.5) / res as f64;
            let p = [x1, x2, 0.5];
            let v = basis_field(dim, &entry.mode, &p[..dim]);
            let cols: Vec<String> = v[..dim].iter().map(|c| fmt_exact(*c)).collect();
            let _ = writeln!(s, "{},{},{}", fmt_exact(x1), fmt_exact(x2), cols.join(","));
        }
    }
    Ok(s)
}

#[derive(Parser, Debug)]
#[command(name = "morphflow", version, about = "Divergence-free flow registration of point-cloud shapes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct ConfigFlags {
    /// key=value configuration file; flags override its entries
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    dim: Option<usize>,
    #[arg(long, global = true)]
    sigma2: Option<f64>,
    /// Integration steps T on [0, 1]
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Number of basis fields K
    #[arg(long, global = true)]
    basis_k: Option<usize>,
    #[arg(long, global = true)]
    basis_exponent: Option<f64>,
    /// Points kept per shape for the field estimation
    #[arg(long, global = true)]
    downsample: Option<usize>,
    #[arg(long, global = true)]
    margin: Option<f64>,
    #[arg(long, global = true)]
    huber_r0: Option<f64>,
    #[arg(long, global = true)]
    max_iters: Option<usize>,
    #[arg(long, global = true)]
    energy_tol: Option<f64>,
    /// shot, file or none
    #[arg(long, global = true)]
    descriptor_mode: Option<DescriptorMode>,
    #[arg(long, global = true)]
    descriptor_radius: Option<f64>,
    /// Farthest point sampling start index
    #[arg(long, global = true)]
    seed: Option<usize>,
    /// Worker threads (0 = all cores); falls back to MORPHFLOW_THREADS
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    source: Option<PathBuf>,
    #[arg(long, global = true)]
    target: Option<PathBuf>,
    #[arg(long, global = true)]
    source_descriptors: Option<PathBuf>,
    #[arg(long, global = true)]
    target_descriptors: Option<PathBuf>,
}

impl ConfigFlags {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Ok(v) = std::env::var("MORPHFLOW_THREADS") {
            cfg.set("threads", v.trim())
                .map_err(|msg| Error::InvalidArgument(format!("MORPHFLOW_THREADS: {msg}")))?;
        }
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        macro_rules! over {
            ($($field:ident),*) => { $( if let Some(v) = &self.$field { cfg.$field = v.clone(); } )* };
        }
        over!(dim, sigma2, steps, basis_k, downsample, margin, huber_r0, max_iters, energy_tol, descriptor_mode, descriptor_radius, threads);
        if let Some(v) = self.basis_exponent {
            cfg.basis_exponent = Some(v);
        }
        if let Some(v) = self.seed {
            cfg.seed = Some(v);
        }
        macro_rules! over_path {
            ($($field:ident),*) => { $( if let Some(v) = &self.$field { cfg.$field = Some(v.clone()); } )* };
        }
        over_path!(source, target, source_descriptors, target_descriptors);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the deformation field from source to target
    Register {
        #[command(flatten)]
        flags: ConfigFlags,
        /// Directory receiving the run outputs
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Advect the full-resolution source along a saved field
    Morph {
        #[command(flatten)]
        flags: ConfigFlags,
        #[arg(long)]
        field: PathBuf,
        /// Comma-separated times in [0, 2]
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Normalized geodesic error curve of matches against ground truth
    Evaluate {
        #[arg(long)]
        matches: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(long)]
        target_mesh: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the basis table and optionally export a field cross-section
    BasisInfo {
        #[command(flatten)]
        flags: ConfigFlags,
        /// Write the table here instead of standard output
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write a cross-section of one basis field here
        #[arg(long)]
        grid_out: Option<PathBuf>,
        /// 1-based index of the exported basis field
        #[arg(long, default_value_t = 1)]
        grid_mode: usize,
        #[arg(long, default_value_t = 32)]
        grid_res: usize,
    },
}

fn init_threads(threads: usize) {
    // A pool may already exist when commands run repeatedly in one process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Register { flags, out_dir } => {
            let cfg = flags.resolve()?;
            init_threads(cfg.threads);
            let r = cmd_register(&cfg, &out_dir)?;
            log::info!(
                "registered in {} iterations (converged: {}), final energy {:e}",
                r.iterations,
                r.converged,
                r.energy_history.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Morph { flags, field, times, out_dir } => {
            let cfg = flags.resolve()?;
            init_threads(cfg.threads);
            for p in cmd_morph(&cfg, &field, &times, &out_dir)? {
                println!("{}", p.display());
            }
        }
        Command::Evaluate { matches, ground_truth, target_mesh, out } => {
            let report = cmd_evaluate(&matches, &ground_truth, &target_mesh, &out)?;
            println!("mean_error={}", fmt_sig9(report.mean_error));
        }
        Command::BasisInfo { flags, out, grid_out, grid_mode, grid_res } => {
            let cfg = flags.resolve()?;
            let basis = cfg.basis()?;
            let table = basis_table(&basis);
            match out {
                Some(path) => write_atomic(&path, table.as_bytes())?,
                None => print!("{table}"),
            }
            if let Some(path) = grid_out {
                write_atomic(&path, basis_grid(&basis, grid_mode, grid_res)?.as_bytes())?;
            }
        }
    }
    Ok(())
}

/// Exit status for an error: 3 for numerical failures, 2 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        3
    } else {
        2
    }
}

/// Parses arguments, runs the command and returns the process exit status.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("morphflow: {e}");
            exit_code(&e)
        }
    }
}

/// Key/value pairs of a `key=value` text such as a manifest.
pub fn parse_key_values(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "# test\nsigma2 = 0.02\nsteps=10 # trailing\n\nsource=a.off\n").unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply_file(&path).unwrap();
        assert_eq!(cfg.sigma2, 0.02);
        assert_eq!(cfg.steps, 10);
        assert_eq!(cfg.source.as_deref(), Some(dir.path().join("a.off").as_path()));
        fs::write(&path, "sigma2=0.02\nbogus=1\n").unwrap();
        match RunConfig::default().apply_file(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn field_round_trip_is_byte_identical() {
        let basis = DeformationBasis::<f64>::with_default_exponent(3, 7).unwrap();
        let a = basis.sample_prior(3);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.txt");
        write_field(&p, &basis, &a).unwrap();
        let back = read_field(&p, &basis).unwrap();
        assert_eq!(back, a);
        assert_eq!(field_to_string(&basis, &back), fs::read_to_string(&p).unwrap());
        let other = DeformationBasis::<f64>::with_default_exponent(3, 8).unwrap();
        assert!(matches!(read_field(&p, &other), Err(Error::FieldMismatch(_))));
    }

    #[test]
    fn basis_table_rows() {
        let basis = DeformationBasis::<f64>::with_default_exponent(3, 3).unwrap();
        let t = basis_table(&basis);
        let rows: Vec<&str> = t.lines().collect();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0], "k,j1,j2,j3,component,laplace_eigenvalue,kl_weight");
        for r in &rows[1..] {
            let lam: f64 = r.split(',').nth(5).unwrap().parse().unwrap();
            assert!((lam + 3.0 * std::f64::consts::PI.powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn correspondence_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let pairs = vec![(0, 3), (1, 1)];
        fs::write(&p, correspondences_to_string(&pairs)).unwrap();
        assert_eq!(read_correspondences(&p).unwrap(), pairs);
    }
}
