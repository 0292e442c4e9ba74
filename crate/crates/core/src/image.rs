//! Fixed-size grayscale raster used everywhere in the pipeline.
//!
//! Images are 40 rows by 50 columns of `f64` intensities stored row-major,
//! 0.0 = black ink, 1.0 = white paper. [`Raster`] itself does not restrict
//! the value range: attack deltas and intermediate print-channel planes
//! legitimately leave [0, 1]. Boundaries that require valid pixel
//! intensities (persistence, classification datasets) call
//! [`Raster::clamped01`] or validate explicitly.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Image height in rows.
pub const HEIGHT: usize = 40;
/// Image width in columns.
pub const WIDTH: usize = 50;
/// Pixels per image; also the classifier input dimension.
pub const PIXELS: usize = HEIGHT * WIDTH;

/// A HEIGHT x WIDTH grayscale plane, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    data: Vec<f64>,
}

impl Raster {
    /// All-zero raster.
    pub fn zeros() -> Self {
        Raster {
            data: vec![0.0; PIXELS],
        }
    }

    /// Raster filled with a constant value.
    pub fn filled(value: f64) -> Self {
        Raster {
            data: vec![value; PIXELS],
        }
    }

    /// Wrap a row-major pixel vector; errors unless it has exactly
    /// [`PIXELS`] entries.
    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        if data.len() != PIXELS {
            return Err(Error::invalid(format!(
                "raster needs {PIXELS} pixels, got {}",
                data.len()
            )));
        }
        Ok(Raster { data })
    }

    /// Pixel at (row, col).
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < HEIGHT && col < WIDTH);
        self.data[row * WIDTH + col]
    }

    /// Set pixel at (row, col).
    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < HEIGHT && col < WIDTH);
        self.data[row * WIDTH + col] = value;
    }

    /// Flat row-major pixel slice.
    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable flat row-major pixel slice.
    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Mean intensity over the whole plane.
    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / PIXELS as f64
    }

    /// Copy with every pixel clamped to [0, 1].
    pub fn clamped01(&self) -> Raster {
        Raster {
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    /// True when every pixel already lies in [0, 1].
    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Elementwise difference `self - other`.
    pub fn minus(&self, other: &Raster) -> Raster {
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Raster { data }
    }

    /// Elementwise sum `self + other`.
    pub fn plus(&self, other: &Raster) -> Raster {
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Raster { data }
    }
}

/// Two-class target: was the bubble marked by the voter or not.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    NonMark,
    Mark,
}

impl Label {
    /// Logit index of this class (non-mark = 0, mark = 1).
    pub fn index(self) -> usize {
        match self {
            Label::NonMark => 0,
            Label::Mark => 1,
        }
    }

    /// The opposite class.
    pub fn other(self) -> Label {
        match self {
            Label::NonMark => Label::Mark,
            Label::Mark => Label::NonMark,
        }
    }

    /// Parse the 0/1 encoding used in manifests.
    pub fn from_index(index: u8) -> Result<Label> {
        match index {
            0 => Ok(Label::NonMark),
            1 => Ok(Label::Mark),
            other => Err(Error::invalid(format!("label {other} not in {{0, 1}}"))),
        }
    }
}

/// The seven families of bubble content the generator produces.
///
/// `Blank` and `Penrest` count as non-marks (a pen rest is not an intended
/// vote); every other family counts as a mark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkType {
    Blank,
    Filled,
    Penrest,
    Check,
    Cross,
    LineFill,
    Scribble,
}

impl MarkType {
    /// Every variant, in canonical (reporting) order.
    pub const ALL: [MarkType; 7] = [
        MarkType::Blank,
        MarkType::Filled,
        MarkType::Penrest,
        MarkType::Check,
        MarkType::Cross,
        MarkType::LineFill,
        MarkType::Scribble,
    ];

    /// Classification target implied by this mark family.
    pub fn label(self) -> Label {
        match self {
            MarkType::Blank | MarkType::Penrest => Label::NonMark,
            _ => Label::Mark,
        }
    }

    /// Stable lowercase name used in manifests and file names.
    pub fn as_str(self) -> &'static str {
        match self {
            MarkType::Blank => "blank",
            MarkType::Filled => "filled",
            MarkType::Penrest => "penrest",
            MarkType::Check => "check",
            MarkType::Cross => "cross",
            MarkType::LineFill => "line_fill",
            MarkType::Scribble => "scribble",
        }
    }

    /// Inverse of [`MarkType::as_str`].
    pub fn parse(name: &str) -> Result<MarkType> {
        MarkType::ALL
            .into_iter()
            .find(|m| m.as_str() == name)
            .ok_or_else(|| Error::invalid(format!("unknown mark type {name:?}")))
    }
}

/// A labeled bubble image with every pixel validated into [0, 1].
#[derive(Clone, Debug)]
pub struct BubbleImage {
    pub pixels: Raster,
    pub label: Label,
    pub mark_type: MarkType,
}

impl BubbleImage {
    /// Wrap a raster under the canonical mark-type → label mapping;
    /// errors if any pixel leaves [0, 1].
    pub fn new(pixels: Raster, mark_type: MarkType) -> Result<Self> {
        if !pixels.in_unit_range() {
            return Err(Error::invalid("bubble image pixels must lie in [0, 1]"));
        }
        Ok(BubbleImage {
            pixels,
            label: mark_type.label(),
            mark_type,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions_are_desk_scale() {
        assert_eq!(HEIGHT, 40);
        assert_eq!(WIDTH, 50);
        assert_eq!(PIXELS, 2000);
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(Raster::from_vec(vec![0.0; 100]).is_err());
        assert!(Raster::from_vec(vec![0.0; PIXELS]).is_ok());
    }

    #[test]
    fn get_set_row_major() {
        let mut r = Raster::zeros();
        r.set(1, 2, 0.5);
        assert_eq!(r.get(1, 2), 0.5);
        assert_eq!(r.data()[WIDTH + 2], 0.5);
    }

    #[test]
    fn clamp_and_range_checks() {
        let mut r = Raster::filled(0.5);
        assert!(r.in_unit_range());
        r.set(0, 0, -0.25);
        r.set(0, 1, 1.75);
        assert!(!r.in_unit_range());
        let c = r.clamped01();
        assert_eq!(c.get(0, 0), 0.0);
        assert_eq!(c.get(0, 1), 1.0);
        assert!(c.in_unit_range());
    }

    #[test]
    fn arithmetic_helpers() {
        let a = Raster::filled(0.75);
        let b = Raster::filled(0.25);
        assert_eq!(a.minus(&b).get(3, 3), 0.5);
        assert_eq!(a.plus(&b).get(3, 3), 1.0);
        assert!((a.mean() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn mark_types_map_to_labels() {
        assert_eq!(MarkType::Blank.label(), Label::NonMark);
        assert_eq!(MarkType::Penrest.label(), Label::NonMark);
        for m in [
            MarkType::Filled,
            MarkType::Check,
            MarkType::Cross,
            MarkType::LineFill,
            MarkType::Scribble,
        ] {
            assert_eq!(m.label(), Label::Mark);
        }
    }

    #[test]
    fn mark_type_names_round_trip() {
        for m in MarkType::ALL {
            assert_eq!(MarkType::parse(m.as_str()).unwrap(), m);
        }
        assert!(MarkType::parse("squiggle").is_err());
    }

    #[test]
    fn label_indices() {
        assert_eq!(Label::NonMark.index(), 0);
        assert_eq!(Label::Mark.index(), 1);
        assert_eq!(Label::Mark.other(), Label::NonMark);
        assert_eq!(Label::from_index(1).unwrap(), Label::Mark);
        assert!(Label::from_index(2).is_err());
    }

    #[test]
    fn bubble_image_validates_range() {
        let ok = BubbleImage::new(Raster::filled(0.9), MarkType::Blank).unwrap();
        assert_eq!(ok.label, Label::NonMark);
        assert!(BubbleImage::new(Raster::filled(1.5), MarkType::Blank).is_err());
    }
}
