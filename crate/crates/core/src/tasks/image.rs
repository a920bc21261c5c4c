use std::io::{Read, Write};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

use super::dataset::{Dataset, Provenance};

/// Grayscale image with intensities in `[0, 1]`, row-major from the top.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    Checker,
    RadialChirp,
    Gradients,
}

impl SynthKind {
    pub fn name(self) -> &'static str {
        match self {
            SynthKind::Checker => "checker",
            SynthKind::RadialChirp => "radial_chirp",
            SynthKind::Gradients => "gradients",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "checker" => Ok(SynthKind::Checker),
            "radial_chirp" => Ok(SynthKind::RadialChirp),
            "gradients" => Ok(SynthKind::Gradients),
            other => Err(Error::Parse(format!("unknown synthetic image {other:?}"))),
        }
    }
}

/// Chirp rate of the radial pattern `0.5 + 0.5·cos(a·r²)`; at the image edge
/// the local frequency is about 10 cycles per image width.
pub const CHIRP_RATE: f64 = 16.0;

/// Pixel-centre coordinate in `[-1, 1]`, exactly antisymmetric about the centre.
fn coord(i: usize, size: usize) -> f64 {
    (2.0 * i as f64 - (size - 1) as f64) / (size - 1) as f64
}

pub fn synth_image(kind: SynthKind, size: usize) -> Result<GrayImage> {
    if size < 2 {
        return Err(Error::contract("image size must be at least 2"));
    }
    let cell = (size / 8).max(1);
    let mut pixels = Vec::with_capacity(size * size);
    for r in 0..size {
        for c in 0..size {
            let (x, y) = (coord(c, size), coord(r, size));
            let v = match kind {
                SynthKind::Checker => ((r / cell + c / cell) % 2) as f64,
                SynthKind::RadialChirp => 0.5 + 0.5 * (CHIRP_RATE * (x * x + y * y)).cos(),
                SynthKind::Gradients => 0.25 * (x + 1.0) + 0.25 * (y + 1.0) * (1.0 - 0.5 * x * x),
            };
            pixels.push(v.clamp(0.0, 1.0));
        }
    }
    Ok(GrayImage {
        width: size,
        height: size,
        pixels,
    })
}

/// One row per pixel: coordinates `(x, y) ∈ [-1, 1]²` (x along columns) and
/// intensity rescaled to `[-1, 1]`. Every pixel is a training row.
pub fn image_dataset(img: &GrayImage, source: &str) -> Result<Dataset> {
    if img.width < 2 || img.height < 2 || img.pixels.len() != img.width * img.height {
        return Err(Error::contract(
            "image must be at least 2×2 with one value per pixel",
        ));
    }
    let mut xs = Vec::with_capacity(2 * img.pixels.len());
    for r in 0..img.height {
        for c in 0..img.width {
            xs.push(coord(c, img.width));
            xs.push(coord(r, img.height));
        }
    }
    let ys: Vec<f64> = img.pixels.iter().map(|p| 2.0 * p - 1.0).collect();
    let n = ys.len();
    Dataset::new(
        Tensor::matrix(n, 2, xs)?,
        Tensor::matrix(n, 1, ys)?,
        (0..n).collect(),
        vec![],
        Provenance::new("image", 0)
            .with("source", source)
            .with("width", img.width)
            .with("height", img.height),
    )
}

/// Sum of six seeded sinusoids on `points` samples of `t ∈ [-1, 1]`, with
/// angular frequencies up to 40 and amplitudes normalized so `|y| ≤ 1`.
pub fn signal_dataset(seed: u64, points: usize) -> Result<Dataset> {
    if points < 2 {
        return Err(Error::contract("signal needs at least 2 points"));
    }
    let mut rng = SplitMix64::new(seed);
    let comps: Vec<(f64, f64, f64)> = (0..6)
        .map(|_| {
            let f = rng.uniform_range(1.0, 40.0);
            let a = rng.uniform_range(0.2, 1.0);
            let phi = rng.uniform_range(0.0, std::f64::consts::TAU);
            (f, a, phi)
        })
        .collect();
    let total: f64 = comps.iter().map(|c| c.1).sum();
    let ts: Vec<f64> = (0..points).map(|k| coord(k, points)).collect();
    let ys: Vec<f64> = ts
        .iter()
        .map(|&t| {
            comps
                .iter()
                .map(|&(f, a, phi)| a * (f * t + phi).sin())
                .sum::<f64>()
                / total
        })
        .collect();
    Dataset::new(
        Tensor::matrix(points, 1, ts)?,
        Tensor::matrix(points, 1, ys)?,
        (0..points).collect(),
        vec![],
        Provenance::new("signal", seed)
            .with("points", points)
            .with("components", 6),
    )
}

fn pgm_tokens(data: &[u8], count: usize) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::new();
    let mut i = 0;
    while tokens.len() < count {
        while i < data.len() && data[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < data.len() && data[i] == b'#' {
            while i < data.len() && data[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < data.len() && !data[i].is_ascii_whitespace() && data[i] != b'#' {
            i += 1;
        }
        if start == i {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        tokens.push(String::from_utf8_lossy(&data[start..i]).into_owned());
    }
    Ok((tokens, i))
}

/// Reads P2 (ASCII) or P5 (binary) PGM with maxval ≤ 255.
pub fn read_pgm(mut input: impl Read) -> Result<GrayImage> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    let (head, end) = pgm_tokens(&data, 4)?;
    let num = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::Parse(format!("bad PGM field {s:?}")))
    };
    let (width, height, maxval) = (num(&head[1])?, num(&head[2])?, num(&head[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(Error::Parse(format!(
            "unsupported PGM depth (maxval {maxval})"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::Parse("empty PGM".into()));
    }
    let n = width * height;
    let raw: Vec<usize> = match head[0].as_str() {
        "P5" => {
            let body = &data[end + 1..];
            if body.len() < n {
                return Err(Error::Parse("truncated P5 body".into()));
            }
            body[..n].iter().map(|&b| b as usize).collect()
        }
        "P2" => {
            let (all, _) = pgm_tokens(&data, 4 + n)?;
            all[4..].iter().map(|s| num(s)).collect::<Result<_>>()?
        }
        other => return Err(Error::Parse(format!("not a PGM: magic {other:?}"))),
    };
    if raw.iter().any(|&v| v > maxval) {
        return Err(Error::Parse("PGM sample exceeds maxval".into()));
    }
    Ok(GrayImage {
        width,
        height,
        pixels: raw.iter().map(|&v| v as f64 / maxval as f64).collect(),
    })
}

/// Writes maxval-255 PGM, binary (P5) or ASCII (P2).
pub fn write_pgm(img: &GrayImage, out: &mut impl Write, binary: bool) -> Result<()> {
    let q: Vec<u8> = img
        .pixels
        .iter()
        .map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    if binary {
        write!(out, "P5\n{} {}\n255\n", img.width, img.height)?;
        out.write_all(&q)?;
    } else {
        writeln!(out, "P2\n{} {}\n255", img.width, img.height)?;
        for row in q.chunks(img.width) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
    }
    Ok(())
}
