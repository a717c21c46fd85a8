//! Dataset persistence: a text index plus one binary PPM/PGM image pair per
//! frame.
//!
//! Layout under the dataset directory:
//!
//! ```text
//! index.txt
//! images/<id>_v.ppm   (visible, binary P6)
//! images/<id>_t.pgm   (thermal, binary P5)
//! ```
//!
//! The index starts with the line `iadn-dataset v1`, followed by one
//! `frame <id> <day|night> <visible-path> <thermal-path> <n>` line per frame
//! and `n` annotation lines `ann <x> <y> <w> <h> <ignore 0|1> <visibility>`.
//! Floats are written in Rust's shortest round-trip form, and pixel values
//! are quantized to the 8-bit grid at generation time, so saving and
//! reloading reproduces the in-memory dataset exactly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::boxes::BBox;
use crate::dataio::{Annotation, Dataset, Illumination, MultispectralFrame};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

const INDEX_NAME: &str = "index.txt";
const FORMAT_LINE: &str = "iadn-dataset v1";
const VERSION: &str = "v1";

/// Writes a dataset to `dir`, creating it (and an `images/` subdirectory)
/// as needed. Existing files with the same names are overwritten.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    dataset.validate()?;
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;

    let mut index = String::new();
    index.push_str(FORMAT_LINE);
    index.push('\n');
    for frame in &dataset.frames {
        let vis_rel = format!("images/{}_v.ppm", frame.id);
        let thm_rel = format!("images/{}_t.pgm", frame.id);
        index.push_str(&format!(
            "frame {} {} {} {} {}\n",
            frame.id,
            frame.illumination,
            vis_rel,
            thm_rel,
            frame.annotations.len()
        ));
        for ann in &frame.annotations {
            index.push_str(&format!(
                "ann {} {} {} {} {} {}\n",
                ann.bbox.x,
                ann.bbox.y,
                ann.bbox.w,
                ann.bbox.h,
                u8::from(ann.ignore),
                ann.visibility
            ));
        }
        write_pnm(&dir.join(&vis_rel), &frame.visible)?;
        write_pnm(&dir.join(&thm_rel), &frame.thermal)?;
    }
    let index_path = dir.join(INDEX_NAME);
    fs::write(&index_path, index).map_err(|e| Error::io(&index_path, e))?;
    Ok(())
}

/// Reads a dataset previously written by [`save_dataset`].
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let index_path = dir.join(INDEX_NAME);
    let text = fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
    let mut lines = text.lines().enumerate();

    let (_, first) = lines
        .next()
        .ok_or_else(|| data_err(&index_path, 1, "empty index file"))?;
    if first != FORMAT_LINE {
        let found = first
            .strip_prefix("iadn-dataset ")
            .unwrap_or(first)
            .to_string();
        return Err(Error::Version { found, expected: VERSION.to_string() });
    }

    let mut frames = Vec::new();
    while let Some((lineno, line)) = lines.next() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.first() != Some(&"frame") || fields.len() != 6 {
            return Err(data_err(
                &index_path,
                lineno + 1,
                &format!("expected a frame line, got {line:?}"),
            ));
        }
        let id = fields[1].to_string();
        let illumination: Illumination = fields[2].parse()?;
        let vis_rel = fields[3];
        let thm_rel = fields[4];
        let n_anns: usize = fields[5]
            .parse()
            .map_err(|_| data_err(&index_path, lineno + 1, "bad annotation count"))?;

        let mut annotations = Vec::with_capacity(n_anns);
        for _ in 0..n_anns {
            let (ann_no, ann_line) = lines.next().ok_or_else(|| {
                data_err(&index_path, lineno + 1, &format!("frame {id}: missing annotation lines"))
            })?;
            annotations.push(parse_ann(ann_line, &index_path, ann_no + 1)?);
        }

        let visible = read_pnm(&dir.join(vis_rel), 3, &id)?;
        let thermal = read_pnm(&dir.join(thm_rel), 1, &id)?;
        frames.push(MultispectralFrame { id, illumination, visible, thermal, annotations });
    }
    let dataset = Dataset { frames };
    dataset.validate()?;
    Ok(dataset)
}

fn data_err(path: &Path, lineno: usize, msg: &str) -> Error {
    Error::Data(format!("{}:{}: {}", path.display(), lineno, msg))
}

fn parse_ann(line: &str, path: &Path, lineno: usize) -> Result<Annotation> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.first() != Some(&"ann") || fields.len() != 7 {
        return Err(data_err(path, lineno, &format!("expected an ann line, got {line:?}")));
    }
    let num = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| data_err(path, lineno, &format!("bad number {s:?}")))
    };
    let bbox = BBox::new(num(fields[1])?, num(fields[2])?, num(fields[3])?, num(fields[4])?);
    bbox.ensure_valid("annotation")
        .map_err(|e| data_err(path, lineno, &e.to_string()))?;
    let ignore = match fields[5] {
        "0" => false,
        "1" => true,
        other => return Err(data_err(path, lineno, &format!("bad ignore flag {other:?}"))),
    };
    let visibility = num(fields[6])?;
    Ok(Annotation { bbox, ignore, visibility })
}

/// Writes a tensor image as binary PPM (3 channels) or PGM (1 channel).
fn write_pnm(path: &PathBuf, image: &Tensor<f32>) -> Result<()> {
    let (h, w, c) = image.dims3()?;
    let magic = match c {
        3 => "P6",
        1 => "P5",
        other => {
            return Err(Error::Data(format!(
                "cannot write {other}-channel image as PPM/PGM"
            )))
        }
    };
    let mut bytes = Vec::with_capacity(32 + h * w * c);
    bytes.extend_from_slice(format!("{magic}\n{w} {h}\n255\n").as_bytes());
    for &v in image.data() {
        bytes.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a binary PPM/PGM back into a [0, 1] tensor, checking the channel
/// count against what the caller expects for this frame.
fn read_pnm(path: &Path, expect_channels: usize, frame_id: &str) -> Result<Tensor<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |msg: &str| -> Error {
        Error::Data(format!("frame {frame_id}: {} ({})", msg, path.display()))
    };

    let mut pos = 0usize;
    let mut next_token = |bytes: &[u8]| -> Option<String> {
        // Skip whitespace and `#` comments.
        while pos < bytes.len() {
            match bytes[pos] {
                b' ' | b'\t' | b'\r' | b'\n' => pos += 1,
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    let magic = next_token(&bytes).ok_or_else(|| fail("missing PNM header"))?;
    let channels = match magic.as_str() {
        "P6" => 3,
        "P5" => 1,
        other => return Err(fail(&format!("unsupported PNM magic {other:?}"))),
    };
    if channels != expect_channels {
        return Err(fail(&format!(
            "expected {expect_channels} channel(s), file has {channels}"
        )));
    }
    let mut dim = |name: &str| -> Result<usize> {
        next_token(&bytes)
            .and_then(|t| t.parse::<usize>().ok())
            .filter(|&v| v > 0)
            .ok_or_else(|| fail(&format!("bad {name} in PNM header")))
    };
    let w = dim("width")?;
    let h = dim("height")?;
    let maxval = dim("maxval")?;
    if maxval != 255 {
        return Err(fail(&format!("unsupported maxval {maxval}, expected 255")));
    }
    // Exactly one whitespace byte separates the header from the pixel data.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(fail("malformed PNM header"));
    }
    pos += 1;
    let need = w * h * channels;
    let pixels = &bytes[pos..];
    if pixels.len() < need {
        return Err(fail(&format!(
            "truncated pixel data: expected {need} bytes, found {}",
            pixels.len()
        )));
    }
    let data: Vec<f32> = pixels[..need].iter().map(|&b| b as f32 / 255.0).collect();
    Tensor::from_vec(vec![h, w, channels], data)
}
