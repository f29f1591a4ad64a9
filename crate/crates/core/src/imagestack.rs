//! T×H×W×C image stacks with acquisition metadata.
//!
//! Two on-disk formats are supported:
//!
//! * multi-page grayscale TIFF (8 or 16 bit, or 32-bit float), pages ordered
//!   frame-major then channel (`page = t * C + c`); integer samples are
//!   normalized to `[0, 1]` by the bit depth maximum.
//! * raw binary: four little-endian `u32` dims (T, H, W, C) followed by
//!   `T*H*W*C` little-endian `f32` values in T-major, then row, column,
//!   channel order. Values are taken as-is.
//!
//! Metadata always comes from a JSON sidecar with the keys
//! `pixel_size_um`, `frame_interval_min`, `channels` and `origin_id`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{Dimension, Quantity, Unit};

const SIDECAR_KEYS: [&str; 4] = ["pixel_size_um", "frame_interval_min", "channels", "origin_id"];

/// Acquisition metadata attached to a stack.
#[derive(Debug, Clone, PartialEq)]
pub struct StackMetadata {
    pub pixel_size: Quantity,
    pub frame_interval: Quantity,
    pub channel_names: Vec<String>,
    pub origin_id: String,
}

/// JSON sidecar as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub pixel_size_um: f64,
    pub frame_interval_min: f64,
    pub channels: Vec<String>,
    pub origin_id: String,
}

impl StackMetadata {
    pub fn new(
        pixel_size: Quantity,
        frame_interval: Quantity,
        channel_names: Vec<String>,
        origin_id: impl Into<String>,
    ) -> Result<Self> {
        pixel_size.expect_dimension(Dimension::LENGTH)?;
        frame_interval.expect_dimension(Dimension::TIME)?;
        if !(pixel_size.canonical() > 0.0 && pixel_size.canonical().is_finite()) {
            return Err(Error::InvalidMetadata(format!(
                "pixel_size_um must be positive, got {}",
                pixel_size.canonical()
            )));
        }
        if !(frame_interval.canonical() > 0.0 && frame_interval.canonical().is_finite()) {
            return Err(Error::InvalidMetadata(format!(
                "frame_interval_min must be positive, got {}",
                frame_interval.value_in(Unit::Minute)?
            )));
        }
        if channel_names.is_empty() {
            return Err(Error::InvalidMetadata("channels must not be empty".into()));
        }
        Ok(StackMetadata {
            pixel_size,
            frame_interval,
            channel_names,
            origin_id: origin_id.into(),
        })
    }

    pub fn from_sidecar(sidecar: &Sidecar) -> Result<Self> {
        StackMetadata::new(
            Quantity::um(sidecar.pixel_size_um),
            Quantity::minutes(sidecar.frame_interval_min),
            sidecar.channels.clone(),
            sidecar.origin_id.clone(),
        )
    }

    pub fn to_sidecar(&self) -> Sidecar {
        Sidecar {
            pixel_size_um: self.pixel_size.canonical(),
            frame_interval_min: self.frame_interval.value_in(Unit::Minute).unwrap_or(f64::NAN),
            channels: self.channel_names.clone(),
            origin_id: self.origin_id.clone(),
        }
    }

    /// Parse and validate a sidecar document; missing keys are reported by name.
    pub fn parse_sidecar(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("sidecar is not valid JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::InvalidInput("sidecar must be a JSON object".into()))?;
        for key in SIDECAR_KEYS {
            if !obj.contains_key(key) {
                return Err(Error::InvalidInput(format!("sidecar missing key {key}")));
            }
        }
        let sidecar: Sidecar = serde_json::from_value(value)
            .map_err(|e| Error::InvalidInput(format!("sidecar field type: {e}")))?;
        StackMetadata::from_sidecar(&sidecar)
    }

    pub fn read_sidecar(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        StackMetadata::parse_sidecar(&text)
    }

    pub fn write_sidecar(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_sidecar())
            .map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channel_names.iter().position(|c| c == name)
    }

    /// Acquisition time of frame `t`, counted from the first frame.
    pub fn frame_time(&self, t: usize) -> Quantity {
        self.frame_interval.scale(t as f64)
    }
}

/// Time-lapse intensity data laid out T-major, then row, column, channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStack {
    frames: usize,
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f32>,
    metadata: StackMetadata,
}

impl ImageStack {
    pub fn new(
        shape: (usize, usize, usize, usize),
        pixels: Vec<f32>,
        metadata: StackMetadata,
    ) -> Result<Self> {
        let (t, h, w, c) = shape;
        if t == 0 || h == 0 || w == 0 || c == 0 {
            return Err(Error::InvalidInput(format!("empty stack shape {shape:?}")));
        }
        if pixels.len() != t * h * w * c {
            return Err(Error::InvalidInput(format!(
                "pixel count {} does not match shape {shape:?}",
                pixels.len()
            )));
        }
        if metadata.channel_names.len() != c {
            return Err(Error::InvalidInput(format!(
                "{} channel names for {c} channels",
                metadata.channel_names.len()
            )));
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("non-finite intensity".into()));
        }
        Ok(ImageStack {
            frames: t,
            height: h,
            width: w,
            channels: c,
            pixels,
            metadata,
        })
    }

    /// Replace the metadata, keeping the pixels.
    pub fn with_metadata(mut self, metadata: StackMetadata) -> Result<Self> {
        if metadata.channel_names.len() != self.channels {
            return Err(Error::InvalidInput(format!(
                "{} channel names for {} channels",
                metadata.channel_names.len(),
                self.channels
            )));
        }
        self.metadata = metadata;
        Ok(self)
    }

    /// (T, H, W, C)
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.frames, self.height, self.width, self.channels)
    }

    pub fn n_frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_channels(&self) -> usize {
        self.channels
    }

    pub fn metadata(&self) -> &StackMetadata {
        &self.metadata
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn frame(&self, t: usize) -> Result<Frame<'_>> {
        if t >= self.frames {
            return Err(Error::IndexError {
                axis: "frame",
                index: t,
                len: self.frames,
            });
        }
        let n = self.frame_len();
        Ok(Frame {
            data: &self.pixels[t * n..(t + 1) * n],
            height: self.height,
            width: self.width,
            channels: self.channels,
        })
    }

    pub fn channel(&self, t: usize, c: usize) -> Result<ChannelView<'_>> {
        self.frame(t)?.channel(c)
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = Frame<'_>> + '_ {
        self.pixels.chunks_exact(self.frame_len()).map(move |data| Frame {
            data,
            height: self.height,
            width: self.width,
            channels: self.channels,
        })
    }

    /// Acquisition time of frame `t`, in hours.
    pub fn time_of(&self, t: usize) -> Result<Quantity> {
        if t >= self.frames {
            return Err(Error::IndexError {
                axis: "frame",
                index: t,
                len: self.frames,
            });
        }
        Ok(self.metadata.frame_time(t))
    }

    pub fn frame_times_h(&self) -> Vec<f64> {
        (0..self.frames)
            .map(|t| self.metadata.frame_time(t).canonical())
            .collect()
    }

    /// Write in the raw little-endian format.
    pub fn write_raw(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut write = |bytes: &[u8]| out.write_all(bytes).map_err(|e| Error::io(path, e));
        for dim in [self.frames, self.height, self.width, self.channels] {
            let dim = u32::try_from(dim)
                .map_err(|_| Error::InvalidInput(format!("dimension {dim} exceeds u32")))?;
            write(&dim.to_le_bytes())?;
        }
        for p in &self.pixels {
            write(&p.to_le_bytes())?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// Write one 16-bit grayscale page per (frame, channel); values are
    /// clamped to `[0, 1]` and scaled by 65535.
    pub fn write_tiff_u16(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut encoder = tiff::encoder::TiffEncoder::new(BufWriter::new(file))
            .map_err(|e| Error::InvalidInput(format!("tiff: {e}")))?;
        for frame in self.frames() {
            for c in 0..self.channels {
                let page: Vec<u16> = frame
                    .channel(c)?
                    .values()
                    .map(|v| (f64::from(v).clamp(0.0, 1.0) * 65535.0).round() as u16)
                    .collect();
                encoder
                    .write_image::<tiff::encoder::colortype::Gray16>(
                        self.width as u32,
                        self.height as u32,
                        &page,
                    )
                    .map_err(|e| Error::InvalidInput(format!("tiff: {e}")))?;
            }
        }
        Ok(())
    }
}

/// One H×W×C frame borrowed from a stack.
#[derive(Debug, Clone, Copy)]
pub struct Frame<'a> {
    data: &'a [f32],
    height: usize,
    width: usize,
    channels: usize,
}

impl<'a> Frame<'a> {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn as_slice(&self) -> &'a [f32] {
        self.data
    }

    pub fn get(&self, row: usize, col: usize, c: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + c]
    }

    pub fn channel(&self, c: usize) -> Result<ChannelView<'a>> {
        if c >= self.channels {
            return Err(Error::IndexError {
                axis: "channel",
                index: c,
                len: self.channels,
            });
        }
        Ok(ChannelView {
            data: self.data,
            height: self.height,
            width: self.width,
            channels: self.channels,
            channel: c,
        })
    }
}

/// Strided H×W view of a single channel.
#[derive(Debug, Clone, Copy)]
pub struct ChannelView<'a> {
    data: &'a [f32],
    height: usize,
    width: usize,
    channels: usize,
    channel: usize,
}

impl<'a> ChannelView<'a> {
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + self.channel]
    }

    /// Value at a row-major pixel index.
    pub fn at(&self, index: usize) -> f32 {
        self.data[index * self.channels + self.channel]
    }

    /// Row-major iteration over the channel.
    pub fn values(&self) -> impl Iterator<Item = f32> + 'a {
        self.data
            .iter()
            .skip(self.channel)
            .step_by(self.channels)
            .copied()
    }
}

/// Load a stack from a TIFF or raw file plus its JSON sidecar.
pub fn load_stack(path: &Path, metadata_path: &Path) -> Result<ImageStack> {
    let metadata = StackMetadata::read_sidecar(metadata_path)?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"II*\0") || bytes.starts_with(b"MM\0*") {
        decode_tiff(&bytes, metadata)
    } else {
        decode_raw(&bytes, metadata)
    }
}

fn decode_raw(bytes: &[u8], metadata: StackMetadata) -> Result<ImageStack> {
    let mut reader = BufReader::new(bytes);
    let mut word = [0u8; 4];
    let mut dims = [0usize; 4];
    for d in &mut dims {
        reader
            .read_exact(&mut word)
            .map_err(|_| Error::InvalidInput("raw header truncated".into()))?;
        *d = u32::from_le_bytes(word) as usize;
    }
    let count = dims.iter().product::<usize>();
    let payload = &bytes[16..];
    if payload.len() != count * 4 {
        return Err(Error::InvalidInput(format!(
            "raw payload has {} bytes, expected {} for dims {dims:?}",
            payload.len(),
            count * 4
        )));
    }
    let pixels = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    ImageStack::new((dims[0], dims[1], dims[2], dims[3]), pixels, metadata)
}

fn decode_tiff(bytes: &[u8], metadata: StackMetadata) -> Result<ImageStack> {
    use tiff::decoder::{Decoder, DecodingResult};

    let tiff_err = |e: tiff::TiffError| Error::InvalidInput(format!("tiff: {e}"));
    let mut decoder = Decoder::new(std::io::Cursor::new(bytes)).map_err(tiff_err)?;
    let mut pages: Vec<Vec<f32>> = Vec::new();
    let mut size: Option<(u32, u32)> = None;
    loop {
        let dims = decoder.dimensions().map_err(tiff_err)?;
        if *size.get_or_insert(dims) != dims {
            return Err(Error::InvalidInput(format!(
                "page {} has size {dims:?}, expected {size:?}",
                pages.len()
            )));
        }
        match decoder.colortype().map_err(tiff_err)? {
            tiff::ColorType::Gray(_) => {}
            other => {
                return Err(Error::InvalidInput(format!(
                    "page {} is {other:?}, only grayscale pages are supported",
                    pages.len()
                )))
            }
        }
        let page: Vec<f32> = match decoder.read_image().map_err(tiff_err)? {
            DecodingResult::U8(v) => v.into_iter().map(|x| f32::from(x) / 255.0).collect(),
            DecodingResult::U16(v) => v.into_iter().map(|x| f32::from(x) / 65535.0).collect(),
            DecodingResult::F32(v) => v,
            _ => return Err(Error::InvalidInput("unsupported TIFF sample format".into())),
        };
        pages.push(page);
        if !decoder.more_images() {
            break;
        }
        decoder.next_image().map_err(tiff_err)?;
    }

    let c = metadata.channel_names.len();
    if pages.len() % c != 0 {
        return Err(Error::InvalidInput(format!(
            "page count {} not divisible by channel count {c}",
            pages.len()
        )));
    }
    let (w, h) = size.map(|(w, h)| (w as usize, h as usize)).unwrap_or((0, 0));
    let t = pages.len() / c;
    let mut pixels = vec![0f32; t * h * w * c];
    for (page_index, page) in pages.iter().enumerate() {
        let (frame, channel) = (page_index / c, page_index % c);
        let base = frame * h * w * c;
        for (i, v) in page.iter().enumerate() {
            pixels[base + i * c + channel] = *v;
        }
    }
    ImageStack::new((t, h, w, c), pixels, metadata)
}
