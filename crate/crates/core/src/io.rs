//! File formats: IDX tensors, PNG images, heatmap files, ASCII listings and
//! on-disk dataset bundles.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gpt_mnist::{SampleRecord, SIDE};
use crate::grid::{Grid, Image};
use crate::metrics::Heatmap;
use crate::pattern::{Configuration, GeneratorSpace};

pub const IMAGES_FILE: &str = "images-idx3-ubyte";
pub const LABELS_FILE: &str = "labels-idx1-ubyte";
pub const Y_G_FILE: &str = "y_g-idx3-ubyte";
pub const Y_S_FILE: &str = "y_s-idx3-ubyte";
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const PNG_DIR: &str = "png";

const HMAP_MAGIC: &[u8; 4] = b"HMAP";
const IDX_UBYTE: u8 = 0x08;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad magic number {0:#010x}")]
    BadMagic(u32),
    #[error("file truncated: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },
    #[error("{0} unexpected trailing bytes")]
    TrailingData(usize),
    #[error("IDX rank {0} is not supported (1 to 3)")]
    UnsupportedRank(usize),
    #[error("tensor has {data} bytes but its dimensions {dims:?} need {expected}")]
    ShapeMismatch {
        dims: Vec<usize>,
        expected: usize,
        data: usize,
    },
    #[error("space has {0} template rows; ASCII letters cover at most 27")]
    TooManyGenerators(usize),
    #[error("template row {alpha} at {site:?} is not in the space")]
    UnknownGenerator { alpha: u8, site: (usize, usize) },
    #[error("png: {0}")]
    Png(String),
    #[error("heatmap: {0}")]
    Heatmap(String),
    #[error("bundle: {0}")]
    Bundle(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Unsigned-byte tensor in IDX layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    pub fn new(dims: Vec<usize>, data: Vec<u8>) -> Result<Self, IoError> {
        if dims.is_empty() || dims.len() > 3 {
            return Err(IoError::UnsupportedRank(dims.len()));
        }
        let expected = dims.iter().product();
        if expected != data.len() {
            return Err(IoError::ShapeMismatch {
                dims,
                expected,
                data: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    /// Stacks equally shaped lattices into an `n x h x w` tensor.
    pub fn from_grids(width: usize, height: usize, grids: &[Grid<u8>]) -> Result<Self, IoError> {
        let mut data = Vec::with_capacity(grids.len() * width * height);
        for g in grids {
            if g.width() != width || g.height() != height {
                return Err(IoError::ShapeMismatch {
                    dims: vec![height, width],
                    expected: width * height,
                    data: g.len(),
                });
            }
            data.extend_from_slice(g.as_slice());
        }
        Self::new(vec![grids.len(), height, width], data)
    }

    /// Splits an `n x h x w` tensor into lattices.
    pub fn to_grids(&self) -> Result<Vec<Grid<u8>>, IoError> {
        let [_, h, w] = self.dims[..] else {
            return Err(IoError::UnsupportedRank(self.dims.len()));
        };
        Ok(self
            .data
            .chunks(h * w)
            .map(|c| Grid::from_vec(w, h, c.to_vec()).expect("chunk size"))
            .collect())
    }
}

pub fn encode_idx(t: &IdxTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * t.dims.len() + t.data.len());
    out.extend_from_slice(&[0, 0, IDX_UBYTE, t.dims.len() as u8]);
    for &d in &t.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&t.data);
    out
}

pub fn decode_idx(bytes: &[u8]) -> Result<IdxTensor, IoError> {
    let truncated = |expected| IoError::TruncatedFile {
        expected,
        found: bytes.len(),
    };
    let header: [u8; 4] = bytes.get(..4).ok_or(truncated(4))?.try_into().unwrap();
    let magic = u32::from_be_bytes(header);
    let rank = header[3] as usize;
    if header[..3] != [0, 0, IDX_UBYTE] || !(1..=3).contains(&rank) {
        return Err(IoError::BadMagic(magic));
    }
    let body = 4 + 4 * rank;
    let dim_bytes = bytes.get(4..body).ok_or(truncated(body))?;
    let dims: Vec<usize> = dim_bytes
        .chunks(4)
        .map(|c| u32::from_be_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let expected = body + dims.iter().product::<usize>();
    if bytes.len() < expected {
        return Err(truncated(expected));
    }
    if bytes.len() > expected {
        return Err(IoError::TrailingData(bytes.len() - expected));
    }
    IdxTensor::new(dims, bytes[body..].to_vec())
}

pub fn write_idx(path: &Path, t: &IdxTensor) -> Result<(), IoError> {
    fs::write(path, encode_idx(t)).map_err(io_err(path))
}

pub fn read_idx(path: &Path) -> Result<IdxTensor, IoError> {
    decode_idx(&fs::read(path).map_err(io_err(path))?)
}

/// `round(255 * p)` with `p` clamped to `[0, 1]`.
pub fn pixel_byte(p: f64) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn image_bytes(image: &Image) -> Grid<u8> {
    image.map(|&p| pixel_byte(p))
}

pub fn bytes_image(bytes: &Grid<u8>) -> Image {
    bytes.map(|&b| f64::from(b) / 255.0)
}

/// 8-bit grayscale PNG.
pub fn encode_png(pixels: &Grid<u8>) -> Result<Vec<u8>, IoError> {
    let mut out = Vec::new();
    let mut encoder = png::Encoder::new(&mut out, pixels.width() as u32, pixels.height() as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| IoError::Png(e.to_string());
    let mut writer = encoder.write_header().map_err(png_err)?;
    writer
        .write_image_data(pixels.as_slice())
        .map_err(png_err)?;
    writer.finish().map_err(png_err)?;
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<Grid<u8>, IoError> {
    let png_err = |e: png::DecodingError| IoError::Png(e.to_string());
    let mut reader = png::Decoder::new(std::io::Cursor::new(bytes))
        .read_info()
        .map_err(png_err)?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(IoError::Png(format!(
            "expected 8-bit grayscale, found {:?} {:?}",
            info.color_type, info.bit_depth
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(w * h)];
    let frame = reader.next_frame(&mut buf).map_err(png_err)?;
    buf.truncate(frame.buffer_size());
    Grid::from_vec(w, h, buf).ok_or_else(|| IoError::Png("unexpected frame size".into()))
}

pub fn write_png(path: &Path, image: &Image) -> Result<(), IoError> {
    fs::write(path, encode_png(&image_bytes(image))?).map_err(io_err(path))
}

pub fn read_png(path: &Path) -> Result<Grid<u8>, IoError> {
    decode_png(&fs::read(path).map_err(io_err(path))?)
}

/// Raw binary heatmap: `HMAP`, width and height as little-endian `u32`,
/// then row-major little-endian `f32` values.
pub fn encode_hmap(h: &Heatmap) -> Vec<u8> {
    let v = &h.values;
    let mut out = Vec::with_capacity(12 + 4 * v.len());
    out.extend_from_slice(HMAP_MAGIC);
    out.extend_from_slice(&(v.width() as u32).to_le_bytes());
    out.extend_from_slice(&(v.height() as u32).to_le_bytes());
    for &x in v.as_slice() {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    out
}

pub fn decode_hmap(bytes: &[u8]) -> Result<Heatmap, IoError> {
    let truncated = |expected| IoError::TruncatedFile {
        expected,
        found: bytes.len(),
    };
    let header = bytes.get(..12).ok_or(truncated(12))?;
    if &header[..4] != HMAP_MAGIC {
        return Err(IoError::BadMagic(u32::from_be_bytes(
            header[..4].try_into().unwrap(),
        )));
    }
    let w = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let expected = 12 + 4 * w * h;
    if bytes.len() < expected {
        return Err(truncated(expected));
    }
    if bytes.len() > expected {
        return Err(IoError::TrailingData(bytes.len() - expected));
    }
    let values = bytes[12..]
        .chunks(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Ok(Heatmap::new(
        Grid::from_vec(w, h, values).expect("length checked"),
    ))
}

/// CSV heatmap: one line per lattice row, no header.
pub fn encode_heatmap_csv(h: &Heatmap) -> Result<Vec<u8>, IoError> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    for row in h.values.rows() {
        writer
            .write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| IoError::Heatmap(e.to_string()))?;
    }
    writer
        .into_inner()
        .map_err(|e| IoError::Heatmap(e.to_string()))
}

pub fn decode_heatmap_csv(bytes: &[u8]) -> Result<Heatmap, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut width = None;
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| IoError::Heatmap(e.to_string()))?;
        if *width.get_or_insert(record.len()) != record.len() {
            return Err(IoError::Heatmap(format!(
                "row {i} has {} values",
                record.len()
            )));
        }
        for field in &record {
            values.push(
                field
                    .parse::<f64>()
                    .map_err(|e| IoError::Heatmap(format!("row {i}: {field:?}: {e}")))?,
            );
        }
    }
    let width = width.ok_or_else(|| IoError::Heatmap("no rows".into()))?;
    let height = values.len() / width.max(1);
    Ok(Heatmap::new(
        Grid::from_vec(width, height, values).expect("rectangular"),
    ))
}

/// Reads either heatmap format, chosen by the leading magic bytes.
pub fn read_heatmap(path: &Path) -> Result<Heatmap, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.starts_with(HMAP_MAGIC) {
        decode_hmap(&bytes)
    } else {
        decode_heatmap_csv(&bytes)
    }
}

/// Writes HMAP for a `.hmap` extension and CSV otherwise.
pub fn write_heatmap(path: &Path, h: &Heatmap) -> Result<(), IoError> {
    let bytes = if path.extension().is_some_and(|e| e == "hmap") {
        encode_hmap(h)
    } else {
        encode_heatmap_csv(h)?
    };
    fs::write(path, bytes).map_err(io_err(path))
}

/// Every `.csv` or `.hmap` file in `dir`, in file-name order.
pub fn read_heatmap_dir(dir: &Path) -> Result<Vec<Heatmap>, IoError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv" || e == "hmap"))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_heatmap(p)).collect()
}

/// One line per lattice row: blank for empty sites, `A`, `B`, ... for
/// template rows 1, 2, ...; trailing blanks trimmed.
pub fn ascii_render(space: &GeneratorSpace, config: &Configuration) -> Result<String, IoError> {
    if space.row_count() > 27 {
        return Err(IoError::TooManyGenerators(space.row_count()));
    }
    let mut out = String::new();
    for (row, sites) in config.grid().rows().enumerate() {
        let mut line = String::with_capacity(sites.len());
        for (col, g) in sites.iter().enumerate() {
            if g.alpha as usize >= space.row_count() {
                return Err(IoError::UnknownGenerator {
                    alpha: g.alpha,
                    site: (row, col),
                });
            }
            line.push(match g.alpha {
                0 => ' ',
                a => char::from(b'A' + a - 1),
            });
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    Ok(out)
}

/// Per-sample metadata line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub class: u8,
    pub steps: usize,
    pub rng_seed: u64,
}

/// A dataset on disk: IDX tensors for images, class labels, `y_g` and
/// `y_s` (0 at empty sites), plus a JSON-lines manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub samples: Vec<SampleRecord>,
}

impl DatasetBundle {
    pub fn new(samples: Vec<SampleRecord>) -> Self {
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn manifest(&self) -> Vec<ManifestEntry> {
        self.samples
            .iter()
            .enumerate()
            .map(|(index, s)| ManifestEntry {
                index,
                class: s.class_label,
                steps: s.steps,
                rng_seed: s.rng_seed,
            })
            .collect()
    }

    /// Writes the bundle into `dir`, creating it if needed. With `png`, each
    /// image is also written as `png/NNNNN.png`.
    pub fn write(&self, dir: &Path, png: bool) -> Result<(), IoError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let images: Vec<Grid<u8>> = self.samples.iter().map(|s| image_bytes(&s.image)).collect();
        let y_g: Vec<Grid<u8>> = self.samples.iter().map(|s| s.y_g.clone()).collect();
        let y_s: Vec<Grid<u8>> = self
            .samples
            .iter()
            .map(|s| {
                Grid::from_fn(
                    SIDE,
                    SIDE,
                    |site| if s.y_g[site] == 0 { 0 } else { s.y_s[site] },
                )
            })
            .collect();
        let labels: Vec<u8> = self.samples.iter().map(|s| s.class_label).collect();
        write_idx(
            &dir.join(IMAGES_FILE),
            &IdxTensor::from_grids(SIDE, SIDE, &images)?,
        )?;
        write_idx(
            &dir.join(LABELS_FILE),
            &IdxTensor::new(vec![labels.len()], labels)?,
        )?;
        write_idx(
            &dir.join(Y_G_FILE),
            &IdxTensor::from_grids(SIDE, SIDE, &y_g)?,
        )?;
        write_idx(
            &dir.join(Y_S_FILE),
            &IdxTensor::from_grids(SIDE, SIDE, &y_s)?,
        )?;

        let path = dir.join(MANIFEST_FILE);
        let mut out = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        for entry in self.manifest() {
            serde_json::to_writer(&mut out, &entry)?;
            out.write_all(b"\n").map_err(io_err(&path))?;
        }
        out.flush().map_err(io_err(&path))?;

        if png {
            let png_dir = dir.join(PNG_DIR);
            fs::create_dir_all(&png_dir).map_err(io_err(&png_dir))?;
            for (i, pixels) in images.iter().enumerate() {
                let path = png_dir.join(format!("{i:05}.png"));
                fs::write(&path, encode_png(pixels)?).map_err(io_err(&path))?;
            }
        }
        Ok(())
    }

    /// Reads a bundle, checking that every file agrees on the sample count.
    pub fn read(dir: &Path) -> Result<Self, IoError> {
        let images = read_idx(&dir.join(IMAGES_FILE))?.to_grids()?;
        let labels = read_idx(&dir.join(LABELS_FILE))?;
        let y_g = read_idx(&dir.join(Y_G_FILE))?.to_grids()?;
        let y_s = read_idx(&dir.join(Y_S_FILE))?.to_grids()?;
        let manifest = read_manifest(&dir.join(MANIFEST_FILE))?;
        let n = images.len();
        for (name, count) in [
            (LABELS_FILE, labels.data.len()),
            (Y_G_FILE, y_g.len()),
            (Y_S_FILE, y_s.len()),
            (MANIFEST_FILE, manifest.len()),
        ] {
            if count != n {
                return Err(IoError::Bundle(format!(
                    "{name} holds {count} samples, {IMAGES_FILE} holds {n}"
                )));
            }
        }
        let samples = (0..n)
            .map(|i| {
                let entry = manifest[i];
                if entry.index != i || entry.class != labels.data[i] {
                    return Err(IoError::Bundle(format!(
                        "manifest line {i} does not describe sample {i}"
                    )));
                }
                Ok(SampleRecord {
                    image: bytes_image(&images[i]),
                    class_label: labels.data[i],
                    y_g: y_g[i].clone(),
                    y_s: y_s[i].map(|&s| s.max(1)),
                    steps: entry.steps,
                    rng_seed: entry.rng_seed,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { samples })
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut entries = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if !line.trim().is_empty() {
            entries.push(serde_json::from_str(&line)?);
        }
    }
    Ok(entries)
}
