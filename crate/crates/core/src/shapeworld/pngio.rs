//! Thin PNG helpers for the three pixel layouts used on disk.

use std::io::{Read, Write};

use crate::error::{CoreError, Result};

fn encoder<W: Write>(w: W, width: usize, height: usize, color: png::ColorType, depth: png::BitDepth) -> Result<png::Writer<W>> {
    let mut enc = png::Encoder::new(w, width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    Ok(enc.write_header()?)
}

pub fn encode_rgb8(w: impl Write, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    let mut wr = encoder(w, width, height, png::ColorType::Rgb, png::BitDepth::Eight)?;
    wr.write_image_data(rgb)?;
    Ok(wr.finish()?)
}

pub fn encode_gray8(w: impl Write, width: usize, height: usize, data: &[u8]) -> Result<()> {
    let mut wr = encoder(w, width, height, png::ColorType::Grayscale, png::BitDepth::Eight)?;
    wr.write_image_data(data)?;
    Ok(wr.finish()?)
}

pub fn encode_gray16(w: impl Write, width: usize, height: usize, data: &[u16]) -> Result<()> {
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_be_bytes()).collect();
    let mut wr = encoder(w, width, height, png::ColorType::Grayscale, png::BitDepth::Sixteen)?;
    wr.write_image_data(&bytes)?;
    Ok(wr.finish()?)
}

/// Decoded pixels with their dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoded<P> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<P>,
}

fn decode(r: impl Read, color: png::ColorType, depth: png::BitDepth) -> Result<(usize, usize, Vec<u8>)> {
    let mut reader = png::Decoder::new(r).read_info()?;
    let info = reader.info();
    if info.color_type != color || info.bit_depth != depth {
        return Err(CoreError::Format(format!(
            "expected {color:?}/{depth:?} png, found {:?}/{:?}",
            info.color_type, info.bit_depth
        )));
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let frame = reader.next_frame(&mut buf)?;
    buf.truncate(frame.buffer_size());
    Ok((width, height, buf))
}

pub fn decode_rgb8(r: impl Read) -> Result<Decoded<u8>> {
    let (width, height, data) = decode(r, png::ColorType::Rgb, png::BitDepth::Eight)?;
    Ok(Decoded { width, height, data })
}

pub fn decode_gray8(r: impl Read) -> Result<Decoded<u8>> {
    let (width, height, data) = decode(r, png::ColorType::Grayscale, png::BitDepth::Eight)?;
    Ok(Decoded { width, height, data })
}

pub fn decode_gray16(r: impl Read) -> Result<Decoded<u16>> {
    let (width, height, bytes) = decode(r, png::ColorType::Grayscale, png::BitDepth::Sixteen)?;
    let data = bytes.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect();
    Ok(Decoded { width, height, data })
}

/// Map [0,1] to 8 bits by rounding.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn dequantize(v: u8) -> f32 {
    v as f32 / 255.0
}

pub fn quantize_image(image: &[f32]) -> Vec<u8> {
    image.iter().map(|&v| quantize(v)).collect()
}

pub fn rgb_png_bytes(width: usize, height: usize, image: &[f32]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    encode_rgb8(&mut out, width, height, &quantize_image(image))?;
    Ok(out)
}
