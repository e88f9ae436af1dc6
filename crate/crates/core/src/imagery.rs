//! Image and manifest ingestion plus background bias estimation.
//!
//! Images are `width × height` grids of `f64` intensities stored row-major,
//! addressed by pixel coordinates `(u, v)` where `u` is the column
//! (horizontal) and `v` the row (vertical).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Region;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "expected {} intensities for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite intensity {} at pixel ({}, {})",
                data[i],
                i % width,
                i / width
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, 0.0)
    }

    /// Builds a grid from a list of rows (each row is one `v`).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if let Some((v, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
            return Err(Error::Dimension(format!(
                "row {v} has {} values, expected {width}",
                r.len()
            )));
        }
        Self::new(width, height, rows.concat())
    }

    /// Builds a grid by evaluating `f(u, v)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self::new(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.width)
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Applies `f` to every intensity. The result must stay finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.width, self.height, self.data.iter().map(|&x| f(x)).collect())
    }

    /// Pixelwise `self + other`.
    pub fn add(&self, other: &ImageGrid) -> Result<Self> {
        self.check_same_shape(other)?;
        Self::new(
            self.width,
            self.height,
            self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        )
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub(crate) fn check_same_shape(&self, other: &ImageGrid) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Dimension(format!(
                "shape mismatch: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// Serializes to the matrix-text format. Values use the shortest
    /// representation that parses back to the identical `f64`.
    pub fn to_matrix_text(&self) -> String {
        let mut out = String::with_capacity(self.data.len() * 12);
        for row in self.rows() {
            for (i, x) in row.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{x}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_matrix_text(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut row = Vec::new();
            for tok in line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
            {
                let x: f64 = tok.parse().map_err(|_| Error::Format {
                    location: format!("line {}", lineno + 1),
                    message: format!("cannot parse {tok:?} as a real number"),
                })?;
                if !x.is_finite() {
                    return Err(Error::Data(format!("non-finite value {tok:?} on line {}", lineno + 1)));
                }
                row.push(x);
            }
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(Error::Format {
                        location: format!("line {}", lineno + 1),
                        message: format!("row has {} values, expected {}", row.len(), first.len()),
                    });
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Format {
                location: "line 1".into(),
                message: "no image rows found".into(),
            });
        }
        Self::from_rows(&rows)
    }

    pub fn parse_pgm(bytes: &[u8]) -> Result<Self> {
        let mut cursor = PgmCursor { bytes, pos: 0 };
        let magic = cursor.token()?;
        let binary = match magic.as_str() {
            "P2" => false,
            "P5" => true,
            other => {
                return Err(Error::Format {
                    location: "byte 0".into(),
                    message: format!("unsupported PGM magic {other:?}"),
                })
            }
        };
        let width = cursor.number()? as usize;
        let height = cursor.number()? as usize;
        let maxval = cursor.number()?;
        if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
            return Err(Error::Format {
                location: format!("byte {}", cursor.pos),
                message: format!("invalid PGM header {width}x{height} maxval {maxval}"),
            });
        }
        let n = width * height;
        let mut data = Vec::with_capacity(n);
        if binary {
            // exactly one whitespace byte separates the header from the raster
            cursor.pos += 1;
            let depth = if maxval < 256 { 1 } else { 2 };
            let need = n * depth;
            let raster = bytes.get(cursor.pos..cursor.pos + need).ok_or_else(|| Error::Format {
                location: format!("byte {}", cursor.pos),
                message: format!(
                    "raster truncated: need {need} bytes, have {}",
                    bytes.len().saturating_sub(cursor.pos)
                ),
            })?;
            if depth == 1 {
                data.extend(raster.iter().map(|&b| f64::from(b)));
            } else {
                data.extend(
                    raster
                        .chunks_exact(2)
                        .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]]))),
                );
            }
        } else {
            for _ in 0..n {
                data.push(cursor.number()? as f64);
            }
        }
        Self::new(width, height, data)
    }

    /// Writes an 8-bit binary PGM, linearly rescaling `[min, max]` to `[0, 255]`.
    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let (lo, hi) = (self.min(), self.max());
        let span = if hi > lo { hi - lo } else { 1.0 };
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(
            self.data
                .iter()
                .map(|&x| (((x - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8),
        );
        out
    }

    pub fn save(&self, path: impl AsRef<Path>, format: ImageFormat) -> Result<()> {
        let path = path.as_ref();
        let bytes = match format {
            ImageFormat::MatrixText => self.to_matrix_text().into_bytes(),
            ImageFormat::Pgm => self.to_pgm_bytes(),
        };
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

struct PgmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl PgmCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<String> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format {
                location: format!("byte {start}"),
                message: "unexpected end of PGM data".into(),
            });
        }
        Ok(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }

    fn number(&mut self) -> Result<u32> {
        let start = self.pos;
        let tok = self.token()?;
        tok.parse().map_err(|_| Error::Format {
            location: format!("byte {start}"),
            message: format!("expected a non-negative integer, found {tok:?}"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImageFormat {
    MatrixText,
    Pgm,
}

impl ImageFormat {
    /// `.pgm` files are PGM, everything else is matrix text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("pgm") => ImageFormat::Pgm,
            _ => ImageFormat::MatrixText,
        }
    }
}

pub fn load_image(path: impl AsRef<Path>, format: ImageFormat) -> Result<ImageGrid> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        ImageFormat::MatrixText => {
            let text = std::str::from_utf8(&bytes).map_err(|e| Error::Format {
                location: format!("byte {}", e.valid_up_to()),
                message: "matrix-text image is not valid UTF-8".into(),
            })?;
            ImageGrid::parse_matrix_text(text)
        }
        ImageFormat::Pgm => ImageGrid::parse_pgm(&bytes),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasEstimator {
    #[default]
    Mean,
    Median,
}

/// Mean intensity of the pixels outside `exclude` (all pixels when absent).
pub fn estimate_bias(img: &ImageGrid, exclude: Option<&Region>) -> Result<f64> {
    estimate_bias_with(img, exclude, BiasEstimator::Mean)
}

pub fn estimate_bias_with(img: &ImageGrid, exclude: Option<&Region>, estimator: BiasEstimator) -> Result<f64> {
    let outside: Vec<f64> = match exclude {
        None => img.data.clone(),
        Some(region) => (0..img.height)
            .flat_map(|v| (0..img.width).map(move |u| (u, v)))
            .filter(|&(u, v)| !region.contains(u as i64, v as i64))
            .map(|(u, v)| img.get(u, v))
            .collect(),
    };
    if outside.is_empty() {
        return Err(Error::DegenerateRegion(
            "no pixels remain outside the excluded region".into(),
        ));
    }
    Ok(match estimator {
        BiasEstimator::Mean => outside.iter().sum::<f64>() / outside.len() as f64,
        BiasEstimator::Median => crate::stats::median(&outside),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecimenRecord {
    pub image: String,
    pub flaw_size: Option<f64>,
    pub is_flawed: bool,
}

impl SpecimenRecord {
    pub fn flawed(image: impl Into<String>, size: f64) -> Self {
        Self {
            image: image.into(),
            flaw_size: Some(size),
            is_flawed: true,
        }
    }

    pub fn flawless(image: impl Into<String>) -> Self {
        Self {
            image: image.into(),
            flaw_size: None,
            is_flawed: false,
        }
    }
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    image: String,
    flaw_size: Option<String>,
    flawed: String,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<SpecimenRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

/// Parses a manifest CSV with header `image,flaw_size,flawed`.
pub fn parse_manifest(text: &str) -> Result<Vec<SpecimenRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let expected = ["image", "flaw_size", "flawed"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::Format {
            location: "line 1".into(),
            message: format!("expected header image,flaw_size,flawed, found {headers:?}"),
        });
    }
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<ManifestRow>().enumerate() {
        let row_no = i + 2;
        let row = row?;
        let flawed = match row.flawed.to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" => true,
            "false" | "0" | "no" => false,
            other => {
                return Err(Error::Manifest {
                    row: row_no,
                    message: format!("flawed must be true/false, found {other:?}"),
                })
            }
        };
        let size = match row.flaw_size.as_deref().map(str::trim) {
            None | Some("") => None,
            Some(s) => {
                let x: f64 = s.parse().map_err(|_| Error::Manifest {
                    row: row_no,
                    message: format!("cannot parse flaw_size {s:?}"),
                })?;
                if !(x.is_finite() && x > 0.0) {
                    return Err(Error::Manifest {
                        row: row_no,
                        message: format!("flaw_size must be positive, found {x}"),
                    });
                }
                Some(x)
            }
        };
        let record = match (flawed, size) {
            (true, Some(s)) => SpecimenRecord::flawed(row.image, s),
            (false, None) => SpecimenRecord::flawless(row.image),
            (true, None) => {
                return Err(Error::Manifest {
                    row: row_no,
                    message: "flawed specimen has no flaw_size".into(),
                })
            }
            (false, Some(_)) => {
                return Err(Error::Manifest {
                    row: row_no,
                    message: "flawless specimen has a flaw_size".into(),
                })
            }
        };
        out.push(record);
    }
    Ok(out)
}
