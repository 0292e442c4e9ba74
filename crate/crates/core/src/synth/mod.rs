//! Synthetic 40x50 bubble-image generation and dataset persistence.
//!
//! Every image is a light paper background with a dark elliptical bubble
//! outline; mark families add ink inside it:
//!
//! * `blank` — outline only.
//! * `filled` — interior fully inked (a proper vote).
//! * `penrest` — a 1–4 px accidental dot cluster.
//! * `check` / `cross` — two-stroke polylines.
//! * `line_fill` — parallel strokes crossing the interior.
//! * `scribble` — a bounded random-walk stroke.
//!
//! Ink is rendered with 4x4 supersampled coverage and multiplicative
//! darkening (`v *= 1 - coverage * (1 - ink_level)`), so repeated
//! strokes darken and pixels stay in [0, 1]. Generation is a pure
//! function of (spec, seed): image `i` draws only from the synth
//! substream keyed by `i`, and train/val splits draw from per-type
//! split substreams.

pub mod pgm;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::image::{BubbleImage, Label, MarkType, Raster, HEIGHT, PIXELS, WIDTH};
use crate::rng::{Purpose, Stream};
use crate::Result;

/// Nominal bubble geometry (pixel coordinates; rows grow downward).
const CENTER_ROW: f64 = 19.5;
const CENTER_COL: f64 = 24.5;
const SEMI_ROW: f64 = 12.5;
const SEMI_COL: f64 = 16.0;
/// Interior metrics use this fraction of the nominal radius, keeping
/// clear of the outline band under the default width and jitter ranges.
const INTERIOR_RADIUS: f64 = 0.72;

/// Paper background range and per-pixel paper-texture noise. These are
/// generator-internal: the controllable knobs live in [`GenParams`].
const BACKGROUND: (f64, f64) = (0.92, 0.99);
const PAPER_NOISE: f64 = 0.008;

/// Stroke/intensity ranges for the generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenParams {
    /// Stroke width range in pixels (lo, hi).
    pub line_width: (f64, f64),
    /// Ink intensity range (lo, hi); lower is darker (0 = black).
    pub darkness: (f64, f64),
    /// Maximum bubble-center offset in pixels, per axis.
    pub jitter: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            line_width: (1.0, 2.5),
            darkness: (0.05, 0.28),
            jitter: 0.8,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        let range_ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !range_ok(self.line_width) || self.line_width.0 <= 0.0 {
            return Err(Error::invalid(format!(
                "line_width range {:?} must be positive and ordered",
                self.line_width
            )));
        }
        if !range_ok(self.darkness) || self.darkness.0 < 0.0 || self.darkness.1 > 1.0 {
            return Err(Error::invalid(format!(
                "darkness range {:?} must lie within [0, 1]",
                self.darkness
            )));
        }
        if !self.jitter.is_finite() || self.jitter < 0.0 || self.jitter > 3.0 {
            return Err(Error::invalid(format!(
                "jitter {} must lie within [0, 3] pixels",
                self.jitter
            )));
        }
        Ok(())
    }
}

/// Which partition a dataset row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

/// Full recipe for a dataset: per-type counts, generator ranges, seed,
/// and split fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub counts: BTreeMap<MarkType, usize>,
    #[serde(default)]
    pub params: GenParams,
    pub seed: u64,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl DatasetSpec {
    /// 5000-image two-class corpus: blanks and proper fills only.
    pub fn bubbles_small(seed: u64) -> DatasetSpec {
        DatasetSpec {
            counts: BTreeMap::from([(MarkType::Blank, 2500), (MarkType::Filled, 2500)]),
            params: GenParams::default(),
            seed,
            train_fraction: 0.85,
            val_fraction: 0.15,
        }
    }

    /// 5000-image corpus over all seven mark families, majority blank,
    /// marginal marks in equal minority shares.
    pub fn combined_small(seed: u64) -> DatasetSpec {
        DatasetSpec {
            counts: BTreeMap::from([
                (MarkType::Blank, 2500),
                (MarkType::Filled, 850),
                (MarkType::Penrest, 330),
                (MarkType::Check, 330),
                (MarkType::Cross, 330),
                (MarkType::LineFill, 330),
                (MarkType::Scribble, 330),
            ]),
            params: GenParams::default(),
            seed,
            train_fraction: 0.85,
            val_fraction: 0.15,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !self.train_fraction.is_finite()
            || !self.val_fraction.is_finite()
            || self.train_fraction < 0.0
            || self.val_fraction < 0.0
        {
            return Err(Error::invalid("split fractions must be nonnegative"));
        }
        if (self.train_fraction + self.val_fraction - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "split fractions must sum to 1, got {} + {}",
                self.train_fraction, self.val_fraction
            )));
        }
        Ok(())
    }
}

/// Hex SHA-256 of the spec's canonical JSON form; stored in manifests so
/// a dataset directory can be traced back to its recipe.
pub fn spec_hash(spec: &DatasetSpec) -> String {
    let json = serde_json::to_string(spec).expect("spec serializes");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    hex(&hasher.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One dataset row: where the image lives plus its metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub path: String,
    pub label: Label,
    pub mark_type: MarkType,
    pub split: Split,
}

/// Everything needed to reload or audit a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
    pub seed: u64,
    pub spec_hash: String,
}

// ---------------------------------------------------------------------
// Rendering primitives
// ---------------------------------------------------------------------

#[derive(Clone, Copy)]
struct Ellipse {
    row: f64,
    col: f64,
    semi_row: f64,
    semi_col: f64,
}

impl Ellipse {
    /// Normalized radius: 0 at the center, 1 on the outline.
    fn rho(&self, r: f64, c: f64) -> f64 {
        let dr = (r - self.row) / self.semi_row;
        let dc = (c - self.col) / self.semi_col;
        (dr * dr + dc * dc).sqrt()
    }

    /// First-order pixel distance to the outline ring.
    fn ring_distance(&self, r: f64, c: f64) -> f64 {
        let rho = self.rho(r, c);
        let gr = (r - self.row) / (self.semi_row * self.semi_row);
        let gc = (c - self.col) / (self.semi_col * self.semi_col);
        let grad = (gr * gr + gc * gc).sqrt();
        if grad == 0.0 {
            f64::INFINITY
        } else {
            (rho - 1.0).abs() * rho / grad
        }
    }

    /// Map normalized (row, col) offsets in [-1, 1] to pixel coords.
    fn point(&self, t_row: f64, t_col: f64) -> (f64, f64) {
        (
            self.row + t_row * self.semi_row,
            self.col + t_col * self.semi_col,
        )
    }
}

struct Segment {
    a: (f64, f64),
    b: (f64, f64),
}

impl Segment {
    fn distance(&self, p: (f64, f64)) -> f64 {
        let (ar, ac) = self.a;
        let (br, bc) = self.b;
        let (dr, dc) = (br - ar, bc - ac);
        let len2 = dr * dr + dc * dc;
        let t = if len2 == 0.0 {
            0.0
        } else {
            (((p.0 - ar) * dr + (p.1 - ac) * dc) / len2).clamp(0.0, 1.0)
        };
        let (qr, qc) = (ar + t * dr, ac + t * dc);
        ((p.0 - qr) * (p.0 - qr) + (p.1 - qc) * (p.1 - qc)).sqrt()
    }
}

const SUBSAMPLES: usize = 4;

/// Darken the canvas under a coverage predicate, sampled on a 4x4
/// subgrid per pixel: `v *= 1 - coverage * (1 - ink)`.
fn render(canvas: &mut [f64], ink: f64, inked: impl Fn(f64, f64) -> bool) {
    for row in 0..HEIGHT {
        for col in 0..WIDTH {
            let mut hits = 0;
            for i in 0..SUBSAMPLES {
                for j in 0..SUBSAMPLES {
                    let r = row as f64 - 0.5 + (i as f64 + 0.5) / SUBSAMPLES as f64;
                    let c = col as f64 - 0.5 + (j as f64 + 0.5) / SUBSAMPLES as f64;
                    if inked(r, c) {
                        hits += 1;
                    }
                }
            }
            if hits > 0 {
                let coverage = hits as f64 / (SUBSAMPLES * SUBSAMPLES) as f64;
                canvas[row * WIDTH + col] *= 1.0 - coverage * (1.0 - ink);
            }
        }
    }
}

fn render_polyline(canvas: &mut [f64], segments: &[Segment], width: f64, ink: f64) {
    let half = width / 2.0;
    render(canvas, ink, |r, c| {
        segments.iter().any(|s| s.distance((r, c)) <= half)
    });
}

// ---------------------------------------------------------------------
// Mark families
// ---------------------------------------------------------------------

fn jittered(rng: &mut Stream, t: (f64, f64), amount: f64) -> (f64, f64) {
    (
        t.0 + rng.uniform_in(-amount, amount),
        t.1 + rng.uniform_in(-amount, amount),
    )
}

fn normalized_segments(bubble: &Ellipse, points: &[(f64, f64)]) -> Vec<Segment> {
    points
        .windows(2)
        .map(|w| Segment {
            a: bubble.point(w[0].0, w[0].1),
            b: bubble.point(w[1].0, w[1].1),
        })
        .collect()
}

fn draw_penrest(canvas: &mut [f64], bubble: &Ellipse, ink: f64, rng: &mut Stream) {
    let dots = 1 + rng.index(2); // one or two specks
    let mut center = jittered(rng, (0.0, 0.0), 0.45);
    for _ in 0..dots {
        let radius = rng.uniform_in(0.45, 0.85);
        let (pr, pc) = bubble.point(center.0, center.1);
        render(canvas, ink, |r, c| {
            let (dr, dc) = (r - pr, c - pc);
            (dr * dr + dc * dc).sqrt() <= radius
        });
        center = (
            center.0 + rng.uniform_in(-0.12, 0.12),
            center.1 + rng.uniform_in(-0.12, 0.12),
        );
    }
}

fn draw_check(canvas: &mut [f64], bubble: &Ellipse, width: f64, ink: f64, rng: &mut Stream) {
    let points = [
        jittered(rng, (-0.10, -0.55), 0.08),
        jittered(rng, (0.55, -0.15), 0.08),
        jittered(rng, (-0.50, 0.60), 0.08),
    ];
    render_polyline(canvas, &normalized_segments(bubble, &points), width, ink);
}

fn draw_cross(canvas: &mut [f64], bubble: &Ellipse, width: f64, ink: f64, rng: &mut Stream) {
    let a = [
        jittered(rng, (-0.55, -0.55), 0.08),
        jittered(rng, (0.55, 0.55), 0.08),
    ];
    let b = [
        jittered(rng, (-0.55, 0.55), 0.08),
        jittered(rng, (0.55, -0.55), 0.08),
    ];
    let mut segments = normalized_segments(bubble, &a);
    segments.extend(normalized_segments(bubble, &b));
    render_polyline(canvas, &segments, width, ink);
}

fn draw_line_fill(canvas: &mut [f64], bubble: &Ellipse, width: f64, ink: f64, rng: &mut Stream) {
    let strokes = 3 + rng.index(3); // 3 to 5 parallel strokes
    let angle = rng.uniform_in(-0.5, 0.5);
    let (dir_r, dir_c) = (angle.sin(), angle.cos());
    let (nrm_r, nrm_c) = (dir_c, -dir_r);
    let mut segments = Vec::with_capacity(strokes);
    for i in 0..strokes {
        let offset = -0.55 + 1.1 * i as f64 / (strokes - 1) as f64 + rng.uniform_in(-0.05, 0.05);
        let reach = rng.uniform_in(0.7, 0.85);
        let mid = (offset * nrm_r, offset * nrm_c);
        segments.push(Segment {
            a: bubble.point(mid.0 - reach * dir_r, mid.1 - reach * dir_c),
            b: bubble.point(mid.0 + reach * dir_r, mid.1 + reach * dir_c),
        });
    }
    render_polyline(canvas, &segments, width, ink);
}

fn draw_scribble(canvas: &mut [f64], bubble: &Ellipse, width: f64, ink: f64, rng: &mut Stream) {
    // Scribbles are vigorous: never hairline-thin, and long enough to
    // cover a solid share of the interior.
    let width = width.max(1.4);
    let steps = 9 + rng.index(6);
    let mut heading = rng.uniform_in(0.0, std::f64::consts::TAU);
    let mut point = (rng.uniform_in(-0.3, 0.3), rng.uniform_in(-0.3, 0.3));
    let mut points = vec![point];
    for _ in 0..steps {
        let step = rng.uniform_in(0.25, 0.45);
        let mut next = (point.0 + step * heading.sin(), point.1 + step * heading.cos());
        // Keep the walk in the interior: pull overshoots back onto a
        // 0.7-radius circle and aim the next stride at the center, so
        // strokes stay clear of the outline band instead of hugging it.
        let norm = (next.0 * next.0 + next.1 * next.1).sqrt();
        if norm > 0.7 {
            next = (next.0 * 0.7 / norm, next.1 * 0.7 / norm);
            heading = f64::atan2(-next.0, -next.1);
        }
        points.push(next);
        point = next;
        heading += rng.uniform_in(-1.2, 1.2);
    }
    render_polyline(canvas, &normalized_segments(bubble, &points), width, ink);
}

/// Render one bubble image. Deterministic in the stream state: the same
/// (mark_type, params, stream) always yields the same pixels.
pub fn generate_bubble(
    mark_type: MarkType,
    params: &GenParams,
    rng: &mut Stream,
) -> Result<BubbleImage> {
    params.validate()?;

    // Per-image draws, in a fixed order so the stream stays aligned.
    let background = rng.uniform_in(BACKGROUND.0, BACKGROUND.1);
    let bubble = Ellipse {
        row: CENTER_ROW + rng.uniform_in(-params.jitter, params.jitter),
        col: CENTER_COL + rng.uniform_in(-params.jitter, params.jitter),
        semi_row: SEMI_ROW + rng.uniform_in(-1.0, 1.0),
        semi_col: SEMI_COL + rng.uniform_in(-1.0, 1.0),
    };
    let outline_width = rng.uniform_in(params.line_width.0, params.line_width.1);
    let stroke_width = rng.uniform_in(params.line_width.0, params.line_width.1);
    let ink = rng.uniform_in(params.darkness.0, params.darkness.1);

    let mut canvas = vec![0.0f64; PIXELS];
    for v in canvas.iter_mut() {
        *v = (background + rng.uniform_in(-PAPER_NOISE, PAPER_NOISE)).clamp(0.0, 1.0);
    }

    match mark_type {
        MarkType::Blank => {}
        MarkType::Filled => render(&mut canvas, ink, |r, c| bubble.rho(r, c) <= 1.0),
        MarkType::Penrest => draw_penrest(&mut canvas, &bubble, ink, rng),
        MarkType::Check => draw_check(&mut canvas, &bubble, stroke_width, ink, rng),
        MarkType::Cross => draw_cross(&mut canvas, &bubble, stroke_width, ink, rng),
        MarkType::LineFill => draw_line_fill(&mut canvas, &bubble, stroke_width, ink, rng),
        MarkType::Scribble => draw_scribble(&mut canvas, &bubble, stroke_width, ink, rng),
    }

    // The outline goes on top of everything.
    let half = outline_width / 2.0;
    render(&mut canvas, ink, |r, c| bubble.ring_distance(r, c) <= half);

    BubbleImage::new(Raster::from_vec(canvas)?, mark_type)
}

/// Canonical interior mask used by intensity metrics: the nominal
/// ellipse shrunk clear of the outline band.
pub fn interior_mask() -> Vec<bool> {
    let nominal = Ellipse {
        row: CENTER_ROW,
        col: CENTER_COL,
        semi_row: SEMI_ROW,
        semi_col: SEMI_COL,
    };
    (0..PIXELS)
        .map(|i| {
            let (r, c) = ((i / WIDTH) as f64, (i % WIDTH) as f64);
            nominal.rho(r, c) <= INTERIOR_RADIUS
        })
        .collect()
}

/// Mean intensity over the canonical interior.
pub fn interior_mean(image: &Raster) -> f64 {
    let mask = interior_mask();
    let mut sum = 0.0;
    let mut n = 0usize;
    for (v, keep) in image.data().iter().zip(&mask) {
        if *keep {
            sum += v;
            n += 1;
        }
    }
    sum / n as f64
}

// ---------------------------------------------------------------------
// Dataset assembly and persistence
// ---------------------------------------------------------------------

/// Generate the full dataset described by a spec: exact per-type counts,
/// per-image substreams, stratified per-type train/val splits.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<(Vec<BubbleImage>, DatasetManifest)> {
    spec.validate()?;
    if spec.total() == 0 {
        return Err(Error::invalid("dataset spec has zero total count"));
    }

    let mut kinds = Vec::with_capacity(spec.total());
    for mark_type in MarkType::ALL {
        let count = spec.counts.get(&mark_type).copied().unwrap_or(0);
        kinds.extend(std::iter::repeat_n(mark_type, count));
    }

    let images: Vec<BubbleImage> = kinds
        .par_iter()
        .enumerate()
        .map(|(i, &mark_type)| {
            let mut rng = Stream::for_item(spec.seed, Purpose::Synth, i as u64);
            generate_bubble(mark_type, &spec.params, &mut rng)
        })
        .collect::<Result<_>>()?;

    // Stratified split: each type independently contributes its rounded
    // share of validation examples.
    let mut split_of = vec![Split::Train; kinds.len()];
    let mut start = 0usize;
    for (rank, mark_type) in MarkType::ALL.into_iter().enumerate() {
        let count = spec.counts.get(&mark_type).copied().unwrap_or(0);
        if count > 0 {
            let val_count = (spec.val_fraction * count as f64).round() as usize;
            let mut rng = Stream::for_item(spec.seed, Purpose::Split, rank as u64);
            for local in rng.choose_k(count, val_count.min(count)) {
                split_of[start + local] = Split::Val;
            }
        }
        start += count;
    }

    let rows = kinds
        .iter()
        .enumerate()
        .map(|(i, &mark_type)| ManifestRow {
            path: format!("images/{i:05}_{}.pgm", mark_type.as_str()),
            label: mark_type.label(),
            mark_type,
            split: split_of[i],
        })
        .collect();

    Ok((
        images,
        DatasetManifest {
            rows,
            seed: spec.seed,
            spec_hash: spec_hash(spec),
        },
    ))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaFile {
    seed: u64,
    spec_hash: String,
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::io(path.display().to_string(), e)
}

/// Write a dataset directory: `images/*.pgm`, `manifest.csv`
/// (`path,label,mark_type,split`), and `meta.json` (seed + spec hash).
pub fn save_dataset(dir: &Path, images: &[BubbleImage], manifest: &DatasetManifest) -> Result<()> {
    if images.len() != manifest.rows.len() {
        return Err(Error::invalid(format!(
            "{} images but {} manifest rows",
            images.len(),
            manifest.rows.len()
        )));
    }
    let mut seen = BTreeSet::new();
    for row in &manifest.rows {
        if !seen.insert(row.path.as_str()) {
            return Err(Error::invalid(format!("duplicate path {}", row.path)));
        }
    }

    let image_dir = dir.join("images");
    fs::create_dir_all(&image_dir).map_err(|e| io_err(&image_dir, e))?;
    for (image, row) in images.iter().zip(&manifest.rows) {
        pgm::save_pgm(&dir.join(&row.path), &image.pixels)?;
    }

    let manifest_path = dir.join("manifest.csv");
    let file = fs::File::create(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    for row in &manifest.rows {
        writer
            .serialize(row)
            .map_err(|e| Error::malformed("csv", format!("{}: {e}", manifest_path.display())))?;
    }
    writer.flush().map_err(|e| io_err(&manifest_path, e))?;

    let meta_path = dir.join("meta.json");
    let meta = MetaFile {
        seed: manifest.seed,
        spec_hash: manifest.spec_hash.clone(),
    };
    fs::write(
        &meta_path,
        serde_json::to_vec_pretty(&meta).expect("meta serializes"),
    )
    .map_err(|e| io_err(&meta_path, e))?;
    Ok(())
}

/// Load a dataset directory written by [`save_dataset`]. Pixel data
/// round-trips within 1/255; metadata round-trips exactly. Rows whose
/// label contradicts the mark-type mapping, duplicate paths, and missing
/// image files are all rejected.
pub fn load_dataset(dir: &Path) -> Result<(Vec<BubbleImage>, DatasetManifest)> {
    let meta_path = dir.join("meta.json");
    let meta_bytes = fs::read(&meta_path).map_err(|e| io_err(&meta_path, e))?;
    let meta: MetaFile = serde_json::from_slice(&meta_bytes)
        .map_err(|e| Error::malformed("json", format!("{}: {e}", meta_path.display())))?;

    let manifest_path = dir.join("manifest.csv");
    let file = fs::File::open(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let rows: Vec<ManifestRow> = reader
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::malformed("csv", format!("{}: {e}", manifest_path.display())))?;

    let mut seen = BTreeSet::new();
    let mut images = Vec::with_capacity(rows.len());
    for row in &rows {
        if !seen.insert(row.path.as_str()) {
            return Err(Error::malformed(
                "manifest",
                format!("duplicate path {}", row.path),
            ));
        }
        if row.label != row.mark_type.label() {
            return Err(Error::malformed(
                "manifest",
                format!(
                    "{}: label {:?} contradicts mark type {}",
                    row.path,
                    row.label,
                    row.mark_type.as_str()
                ),
            ));
        }
        let raster = pgm::load_pgm(&dir.join(&row.path))?;
        images.push(BubbleImage::new(raster, row.mark_type)?);
    }

    Ok((
        images,
        DatasetManifest {
            rows,
            seed: meta.seed,
            spec_hash: meta.spec_hash,
        },
    ))
}

/// Clone out the images belonging to one split, in manifest order.
pub fn split_images(
    images: &[BubbleImage],
    manifest: &DatasetManifest,
    split: Split,
) -> Vec<BubbleImage> {
    images
        .iter()
        .zip(&manifest.rows)
        .filter(|(_, row)| row.split == split)
        .map(|(img, _)| img.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(i: u64) -> Stream {
        Stream::for_item(99, Purpose::Synth, i)
    }

    #[test]
    fn blank_interior_is_light() {
        let params = GenParams::default();
        for i in 0..50 {
            let img = generate_bubble(MarkType::Blank, &params, &mut stream(i)).unwrap();
            let mean = interior_mean(&img.pixels);
            assert!(mean >= 0.85, "sample {i}: interior mean {mean}");
        }
    }

    #[test]
    fn filled_interior_is_dark() {
        let params = GenParams::default();
        for i in 0..50 {
            let img = generate_bubble(MarkType::Filled, &params, &mut stream(i)).unwrap();
            let mean = interior_mean(&img.pixels);
            assert!(mean <= 0.3, "sample {i}: interior mean {mean}");
        }
    }

    #[test]
    fn generation_is_deterministic_per_stream() {
        let params = GenParams::default();
        for mark_type in MarkType::ALL {
            let a = generate_bubble(mark_type, &params, &mut stream(3)).unwrap();
            let b = generate_bubble(mark_type, &params, &mut stream(3)).unwrap();
            assert_eq!(a.pixels.data(), b.pixels.data());
            let c = generate_bubble(mark_type, &params, &mut stream(4)).unwrap();
            assert_ne!(a.pixels.data(), c.pixels.data());
        }
    }

    /// Ink mass separates the families the way their labels demand:
    /// penrests are specks, real marks are substantial.
    #[test]
    fn ink_area_matches_mark_family() {
        let params = GenParams::default();
        let blank_ink = |img: &BubbleImage, reference: &BubbleImage| -> usize {
            img.pixels
                .data()
                .iter()
                .zip(reference.pixels.data())
                .filter(|(v, r)| **r - **v > 0.3)
                .count()
        };
        for i in 0..20 {
            let blank = generate_bubble(MarkType::Blank, &params, &mut stream(i)).unwrap();
            let penrest = generate_bubble(MarkType::Penrest, &params, &mut stream(i)).unwrap();
            let dots = blank_ink(&penrest, &blank);
            assert!((1..=8).contains(&dots), "sample {i}: penrest covers {dots} px");
            for mark_type in [
                MarkType::Check,
                MarkType::Cross,
                MarkType::LineFill,
                MarkType::Scribble,
            ] {
                let marked = generate_bubble(mark_type, &params, &mut stream(i)).unwrap();
                let area = blank_ink(&marked, &blank);
                assert!(
                    area >= 20,
                    "sample {i}: {} covers only {area} px",
                    mark_type.as_str()
                );
            }
        }
    }

    #[test]
    fn labels_follow_the_mark_mapping() {
        let params = GenParams::default();
        for mark_type in MarkType::ALL {
            let img = generate_bubble(mark_type, &params, &mut stream(0)).unwrap();
            assert_eq!(img.label, mark_type.label());
            assert!(img.pixels.in_unit_range());
        }
    }

    #[test]
    fn dataset_counts_and_splits_are_exact() {
        let mut spec = DatasetSpec::bubbles_small(5);
        spec.counts = BTreeMap::from([(MarkType::Blank, 60), (MarkType::Filled, 40)]);
        spec.train_fraction = 0.8;
        spec.val_fraction = 0.2;
        let (images, manifest) = generate_dataset(&spec).unwrap();
        assert_eq!(images.len(), 100);
        assert_eq!(manifest.rows.len(), 100);

        let count = |mt: MarkType| manifest.rows.iter().filter(|r| r.mark_type == mt).count();
        assert_eq!(count(MarkType::Blank), 60);
        assert_eq!(count(MarkType::Filled), 40);

        let val = manifest.rows.iter().filter(|r| r.split == Split::Val).count();
        assert_eq!(val, 20); // 12 blanks + 8 filled, stratified
        let val_blank = manifest
            .rows
            .iter()
            .filter(|r| r.split == Split::Val && r.mark_type == MarkType::Blank)
            .count();
        assert_eq!(val_blank, 12);

        // Splits partition the dataset.
        assert_eq!(
            split_images(&images, &manifest, Split::Train).len()
                + split_images(&images, &manifest, Split::Val).len(),
            100
        );
    }

    #[test]
    fn presets_have_documented_shapes() {
        let combined = DatasetSpec::combined_small(1);
        assert_eq!(combined.total(), 5000);
        assert_eq!(combined.counts[&MarkType::Blank], 2500);
        let bubbles = DatasetSpec::bubbles_small(1);
        assert_eq!(bubbles.total(), 5000);
        assert_eq!(bubbles.counts.len(), 2);
        combined.validate().unwrap();
        bubbles.validate().unwrap();
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = DatasetSpec::bubbles_small(0);
        spec.counts.clear();
        assert!(matches!(generate_dataset(&spec), Err(Error::InvalidParameter(_))));

        let mut spec = DatasetSpec::bubbles_small(0);
        spec.val_fraction = 0.5; // sums to 1.35
        assert!(spec.validate().is_err());

        let mut spec = DatasetSpec::bubbles_small(0);
        spec.params.darkness = (0.5, 0.2);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn dataset_round_trips_through_disk() {
        let mut spec = DatasetSpec::combined_small(11);
        for count in spec.counts.values_mut() {
            *count = (*count / 100).max(2);
        }
        let (images, manifest) = generate_dataset(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &images, &manifest).unwrap();

        let (loaded, loaded_manifest) = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded_manifest, manifest);
        assert_eq!(loaded.len(), images.len());
        for (a, b) in images.iter().zip(&loaded) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.mark_type, b.mark_type);
            let worst = a
                .pixels
                .data()
                .iter()
                .zip(b.pixels.data())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0f64, f64::max);
            assert!(worst <= 1.0 / 255.0);
        }
    }

    #[test]
    fn loading_rejects_mismatched_manifest() {
        let spec = DatasetSpec {
            counts: BTreeMap::from([(MarkType::Blank, 3)]),
            params: GenParams::default(),
            seed: 2,
            train_fraction: 1.0,
            val_fraction: 0.0,
        };
        let (images, manifest) = generate_dataset(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &images, &manifest).unwrap();

        // Label column contradicting the mark type.
        let manifest_path = dir.path().join("manifest.csv");
        let text = fs::read_to_string(&manifest_path).unwrap();
        fs::write(&manifest_path, text.replace("non_mark", "mark")).unwrap();
        assert!(load_dataset(dir.path()).is_err());

        // Missing image file.
        fs::write(&manifest_path, text).unwrap();
        fs::remove_file(dir.path().join(&manifest.rows[1].path)).unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.is_not_found());
    }

    #[test]
    fn spec_hash_tracks_content() {
        let a = DatasetSpec::combined_small(1);
        let mut b = a.clone();
        assert_eq!(spec_hash(&a), spec_hash(&b));
        b.seed = 2;
        assert_ne!(spec_hash(&a), spec_hash(&b));
        assert_eq!(spec_hash(&a).len(), 64);
    }

    #[test]
    fn spec_json_round_trip_rejects_unknown_fields() {
        let spec = DatasetSpec::combined_small(3);
        let json = serde_json::to_string(&spec).unwrap();
        let back: DatasetSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
        assert!(serde_json::from_str::<DatasetSpec>(
            &json.replace("\"seed\"", "\"sneed\"")
        )
        .is_err());
    }
}
