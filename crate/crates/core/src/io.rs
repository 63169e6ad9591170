//! Disk formats bridging the pipeline to the filesystem: binary PGM
//! silhouettes, ASCII PLY particle clouds, camera JSON, and JSON/CSV reports.
//!
//! Writers are deterministic — identical inputs produce identical bytes — so
//! seeded experiment reports can be compared byte-for-byte. Readers are
//! strict about the formats the writers emit and report parse failures with
//! the byte offset of the offending token.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geometry::{CameraExtrinsics, CameraIntrinsics, CameraView, Mask, Mat3, Vec3};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: byte {offset}: {message}")]
    Parse {
        path: PathBuf,
        offset: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl IoError {
    fn file(path: &Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        |source| Self::File { path: path.to_path_buf(), source }
    }

    fn parse(path: &Path, offset: usize, message: impl Into<String>) -> Self {
        Self::Parse { path: path.to_path_buf(), offset, message: message.into() }
    }

    fn json(path: &Path) -> impl FnOnce(serde_json::Error) -> Self + '_ {
        |source| Self::Json { path: path.to_path_buf(), source }
    }
}

// ---------------------------------------------------------------------------
// PGM silhouettes

/// Write a mask as binary PGM (P5, maxval 255): foreground pixels 255,
/// background 0.
pub fn write_pgm(path: impl AsRef<Path>, mask: &Mask) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut out =
        BufWriter::new(File::create(path).map_err(IoError::file(path))?);
    let mut run = || -> std::io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", mask.width, mask.height)?;
        let raster: Vec<u8> =
            mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
        out.write_all(&raster)?;
        out.flush()
    };
    run().map_err(IoError::file(path))
}

/// Read a binary PGM (P5, maxval 255). A pixel is foreground when its value
/// is at least 128.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Mask, IoError> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(IoError::file(path))?;
    if !data.starts_with(b"P5") {
        return Err(IoError::parse(path, 0, "expected binary PGM magic \"P5\""));
    }
    let mut at = 2;
    let width = header_number(path, &data, &mut at, "width")?;
    let height = header_number(path, &data, &mut at, "height")?;
    let maxval_at = at;
    let maxval = header_number(path, &data, &mut at, "maxval")?;
    if maxval != 255 {
        return Err(IoError::parse(
            path,
            skip_header_space(&data, maxval_at),
            format!("maxval {maxval} unsupported (writer emits 255)"),
        ));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match data.get(at) {
        Some(b) if b.is_ascii_whitespace() => at += 1,
        _ => {
            return Err(IoError::parse(path, at, "expected single whitespace before raster"))
        }
    }
    let need = width as usize * height as usize;
    let raster = &data[at..];
    if raster.len() < need {
        return Err(IoError::parse(
            path,
            data.len(),
            format!("raster ends early: need {need} bytes, found {}", raster.len()),
        ));
    }
    if raster.len() > need {
        return Err(IoError::parse(
            path,
            at + need,
            format!("{} bytes of trailing data after raster", raster.len() - need),
        ));
    }
    let bits = raster.iter().map(|&v| v >= 128).collect();
    Ok(Mask::from_bits(width, height, bits))
}

/// Advance past whitespace and `#` comments, returning the offset of the next
/// token byte.
fn skip_header_space(data: &[u8], mut at: usize) -> usize {
    loop {
        match data.get(at) {
            Some(b) if b.is_ascii_whitespace() => at += 1,
            Some(b'#') => {
                while at < data.len() && data[at] != b'\n' {
                    at += 1;
                }
            }
            _ => return at,
        }
    }
}

/// Parse one ASCII decimal from a PGM header, leaving `at` just past it.
fn header_number(
    path: &Path,
    data: &[u8],
    at: &mut usize,
    what: &str,
) -> Result<u32, IoError> {
    let start = skip_header_space(data, *at);
    let mut end = start;
    while end < data.len() && data[end].is_ascii_digit() {
        end += 1;
    }
    if end == start {
        return Err(IoError::parse(path, start, format!("expected {what}")));
    }
    let text = std::str::from_utf8(&data[start..end]).expect("digits are ascii");
    let value: u64 = text
        .parse()
        .map_err(|_| IoError::parse(path, start, format!("{what} out of range")))?;
    if value > u32::MAX as u64 {
        return Err(IoError::parse(path, start, format!("{what} out of range")));
    }
    *at = end;
    Ok(value as u32)
}

// ---------------------------------------------------------------------------
// PLY particle clouds

/// Write a point cloud as ASCII PLY, one `x y z` vertex per line. `f64`
/// values print in shortest-roundtrip form, so a read of the file recovers
/// them bit-exactly.
pub fn write_ply(path: impl AsRef<Path>, points: &[Vec3]) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut out =
        BufWriter::new(File::create(path).map_err(IoError::file(path))?);
    let mut run = || -> std::io::Result<()> {
        write!(
            out,
            "ply\nformat ascii 1.0\nelement vertex {}\n\
             property double x\nproperty double y\nproperty double z\nend_header\n",
            points.len()
        )?;
        for p in points {
            writeln!(out, "{} {} {}", p.x, p.y, p.z)?;
        }
        out.flush()
    };
    run().map_err(IoError::file(path))
}

/// Read an ASCII PLY written by [`write_ply`]: a sole `vertex` element with
/// `x y z` float properties.
pub fn read_ply(path: impl AsRef<Path>) -> Result<Vec<Vec3>, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(IoError::file(path))?;
    // Walk lines while tracking each line's starting byte for error reports.
    let mut lines = text.split_inclusive('\n').scan(0usize, |at, line| {
        let start = *at;
        *at += line.len();
        Some((start, line.trim_end_matches(['\n', '\r'])))
    });

    let mut expect = |want: &str, what: &str| -> Result<(), IoError> {
        match lines.next() {
            Some((_, line)) if line == want => Ok(()),
            Some((start, line)) => Err(IoError::parse(
                path,
                start,
                format!("expected {what}, found {line:?}"),
            )),
            None => Err(IoError::parse(path, text.len(), format!("expected {what}"))),
        }
    };
    expect("ply", "PLY magic \"ply\"")?;
    expect("format ascii 1.0", "\"format ascii 1.0\"")?;

    let mut count: Option<usize> = None;
    let mut properties: Vec<String> = Vec::new();
    loop {
        let Some((start, line)) = lines.next() else {
            return Err(IoError::parse(path, text.len(), "header never ends"));
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["end_header"] => break,
            ["comment", ..] => {}
            ["element", "vertex", n] => {
                let n = n.parse().map_err(|_| {
                    IoError::parse(path, start, "bad vertex count")
                })?;
                count = Some(n);
            }
            ["element", other, ..] => {
                return Err(IoError::parse(
                    path,
                    start,
                    format!("unsupported element {other:?}"),
                ));
            }
            ["property", kind, name] if *kind == "double" || *kind == "float" => {
                properties.push((*name).to_string());
            }
            _ => {
                return Err(IoError::parse(
                    path,
                    start,
                    format!("unrecognized header line {line:?}"),
                ));
            }
        }
    }
    let Some(count) = count else {
        return Err(IoError::parse(path, 0, "header declares no vertex element"));
    };
    if properties != ["x", "y", "z"] {
        return Err(IoError::parse(
            path,
            0,
            format!("need exactly x y z properties, found {properties:?}"),
        ));
    }

    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let Some((start, line)) = lines.next() else {
            return Err(IoError::parse(
                path,
                text.len(),
                format!("vertex list ends early: expected {count} vertices"),
            ));
        };
        let mut coords = [0.0; 3];
        let mut fields = line.split_whitespace();
        for c in &mut coords {
            let field = fields.next().ok_or_else(|| {
                IoError::parse(path, start, "vertex line has fewer than 3 values")
            })?;
            *c = field.parse().map_err(|_| {
                IoError::parse(path, start, format!("bad coordinate {field:?}"))
            })?;
        }
        if fields.next().is_some() {
            return Err(IoError::parse(path, start, "vertex line has more than 3 values"));
        }
        points.push(Vec3::new(coords[0], coords[1], coords[2]));
    }
    Ok(points)
}

// ---------------------------------------------------------------------------
// Camera JSON

/// On-disk camera description: pinhole intrinsics plus the world-to-camera
/// rotation flattened row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraFile {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl CameraFile {
    pub fn pack(intrinsics: &CameraIntrinsics, extrinsics: &CameraExtrinsics) -> Self {
        let r = &extrinsics.rotation;
        let t = &extrinsics.translation;
        Self {
            fx: intrinsics.fx,
            fy: intrinsics.fy,
            cx: intrinsics.cx,
            cy: intrinsics.cy,
            width: intrinsics.width,
            height: intrinsics.height,
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            translation: [t.x, t.y, t.z],
        }
    }

    pub fn unpack(&self) -> (CameraIntrinsics, CameraExtrinsics) {
        let m = &self.rotation;
        (
            CameraIntrinsics {
                fx: self.fx,
                fy: self.fy,
                cx: self.cx,
                cy: self.cy,
                width: self.width,
                height: self.height,
            },
            CameraExtrinsics {
                rotation: Mat3::new(m[0], m[1], m[2], m[3], m[4], m[5], m[6], m[7], m[8]),
                translation: Vec3::new(
                    self.translation[0],
                    self.translation[1],
                    self.translation[2],
                ),
            },
        )
    }
}

pub fn write_camera(
    path: impl AsRef<Path>,
    intrinsics: &CameraIntrinsics,
    extrinsics: &CameraExtrinsics,
) -> Result<(), IoError> {
    write_json(path, &CameraFile::pack(intrinsics, extrinsics))
}

pub fn read_camera(
    path: impl AsRef<Path>,
) -> Result<(CameraIntrinsics, CameraExtrinsics), IoError> {
    Ok(read_json::<CameraFile>(path)?.unpack())
}

// ---------------------------------------------------------------------------
// View directories

/// Mask filename for view `index`: `view_007.pgm`.
pub fn mask_path(dir: impl AsRef<Path>, index: usize) -> PathBuf {
    dir.as_ref().join(format!("view_{index:03}.pgm"))
}

/// Camera filename for view `index`: `view_007.json`.
pub fn camera_path(dir: impl AsRef<Path>, index: usize) -> PathBuf {
    dir.as_ref().join(format!("view_{index:03}.json"))
}

/// Write a set of calibrated views as numbered mask/camera file pairs,
/// creating `dir` if needed.
pub fn write_views(dir: impl AsRef<Path>, views: &[CameraView]) -> Result<(), IoError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(IoError::file(dir))?;
    for (i, view) in views.iter().enumerate() {
        write_pgm(mask_path(dir, i), &view.mask)?;
        write_camera(camera_path(dir, i), &view.intrinsics, &view.extrinsics)?;
    }
    Ok(())
}

/// Read numbered views from `dir`, starting at `view_000` and stopping at the
/// first missing index. A mask without its camera file (or vice versa) is an
/// error; an empty or absent directory yields no views.
pub fn read_views(dir: impl AsRef<Path>) -> Result<Vec<CameraView>, IoError> {
    let dir = dir.as_ref();
    let mut views = Vec::new();
    for i in 0.. {
        let mask_file = mask_path(dir, i);
        let camera_file = camera_path(dir, i);
        match (mask_file.exists(), camera_file.exists()) {
            (false, false) => break,
            (true, true) => {
                let mask = read_pgm(&mask_file)?;
                let (intrinsics, extrinsics) = read_camera(&camera_file)?;
                views.push(CameraView { intrinsics, extrinsics, mask });
            }
            (true, false) => {
                return Err(IoError::parse(
                    &camera_file,
                    0,
                    "mask present but camera file missing",
                ));
            }
            (false, true) => {
                return Err(IoError::parse(
                    &mask_file,
                    0,
                    "camera file present but mask missing",
                ));
            }
        }
    }
    Ok(views)
}

// ---------------------------------------------------------------------------
// JSON / CSV reports

/// Write any serializable value as pretty-printed JSON with a trailing
/// newline. Field order follows the struct declaration, so output bytes are
/// stable across runs.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(IoError::json(path))?;
    text.push('\n');
    fs::write(path, text).map_err(IoError::file(path))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(IoError::file(path))?;
    serde_json::from_str(&text).map_err(IoError::json(path))
}

/// Write one compact JSON object per line (episode logs, trajectories).
pub fn write_jsonl<T: Serialize>(
    path: impl AsRef<Path>,
    rows: impl IntoIterator<Item = T>,
) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut out =
        BufWriter::new(File::create(path).map_err(IoError::file(path))?);
    for row in rows {
        let line = serde_json::to_string(&row).map_err(IoError::json(path))?;
        writeln!(out, "{line}").map_err(IoError::file(path))?;
    }
    out.flush().map_err(IoError::file(path))
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(IoError::file(path))?;
    text.lines()
        .filter(|line| !line.trim().is_empty())
        .map(|line| serde_json::from_str(line).map_err(IoError::json(path)))
        .collect()
}

/// Write a CSV table with a header row. Cells are quoted only when needed,
/// rows end with `\n`; equal inputs give equal bytes.
pub fn write_csv(
    path: impl AsRef<Path>,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<(), IoError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(IoError::file(path))?;
    let mut out = csv::Writer::from_writer(BufWriter::new(file));
    let mut run = || -> csv::Result<()> {
        out.write_record(header)?;
        for row in rows {
            out.write_record(row)?;
        }
        out.flush()?;
        Ok(())
    };
    run().map_err(|e| IoError::parse(path, 0, e.to_string()))
}

/// Hex SHA-256 of a value's compact JSON form. Reports embed this hash of
/// the configuration they were produced from, so a report can be traced to
/// its exact inputs.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    let digest = Sha256::digest(&json);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
