//! Decode, resize and quantize images.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader, RgbImage};

use crate::error::{Error, Result};
use crate::types::{ImageTensor, CHANNELS};

/// Decodes a PNG or JPEG file into a 3-channel tensor of `target_h x target_w`.
///
/// Grayscale is expanded to three channels and alpha is dropped. Resizing is
/// plain bilinear with half-pixel centers and no antialiasing prefilter.
pub fn load_image(path: &Path, target_h: usize, target_w: usize) -> Result<ImageTensor> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::io(format!("reading image {}", path.display()), e))?;
    decode_image(&bytes, path, target_h, target_w)
}

/// [`load_image`] on an in-memory file; `path` is used only in error messages.
pub fn decode_image(bytes: &[u8], path: &Path, target_h: usize, target_w: usize) -> Result<ImageTensor> {
    let reader = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| Error::io(format!("sniffing {}", path.display()), e))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Jpeg) => {}
        _ => return Err(Error::UnsupportedFormat(path.to_path_buf())),
    }
    let decoded = reader.decode().map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let src = to_unit_rgb(&decoded);
    let (h, w) = (decoded.height() as usize, decoded.width() as usize);
    let data = if (h, w) == (target_h, target_w) {
        src
    } else {
        resize_bilinear(&src, h, w, target_h, target_w)
    };
    ImageTensor::new(target_h, target_w, data)
}

fn to_unit_rgb(img: &DynamicImage) -> Vec<f32> {
    let wide = matches!(
        img,
        DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
            | DynamicImage::ImageRgb16(_)
            | DynamicImage::ImageRgba16(_)
    );
    if wide {
        img.to_rgb16()
            .into_raw()
            .into_iter()
            .map(|v| f32::from(v) / 65535.0)
            .collect()
    } else {
        img.to_rgb8()
            .into_raw()
            .into_iter()
            .map(|v| f32::from(v) / 255.0)
            .collect()
    }
}

struct Tap {
    lo: usize,
    hi: usize,
    frac: f32,
}

fn taps(src_len: usize, dst_len: usize) -> Vec<Tap> {
    let scale = src_len as f64 / dst_len as f64;
    let max = (src_len - 1) as f64;
    (0..dst_len)
        .map(|d| {
            let pos = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let lo = pos.floor() as usize;
            Tap {
                lo,
                hi: (lo + 1).min(src_len - 1),
                frac: (pos - lo as f64) as f32,
            }
        })
        .collect()
}

/// Bilinear resize of an HWC buffer with three channels.
pub fn resize_bilinear(src: &[f32], src_h: usize, src_w: usize, dst_h: usize, dst_w: usize) -> Vec<f32> {
    assert_eq!(src.len(), src_h * src_w * CHANNELS);
    let ys = taps(src_h, dst_h);
    let xs = taps(src_w, dst_w);
    let row_len = src_w * CHANNELS;
    let mut out = Vec::with_capacity(dst_h * dst_w * CHANNELS);
    for ty in &ys {
        let top = &src[ty.lo * row_len..(ty.lo + 1) * row_len];
        let bottom = &src[ty.hi * row_len..(ty.hi + 1) * row_len];
        let wy = ty.frac;
        for tx in &xs {
            let wx = tx.frac;
            for c in 0..CHANNELS {
                let (l, r) = (tx.lo * CHANNELS + c, tx.hi * CHANNELS + c);
                let upper = top[l] + wx * (top[r] - top[l]);
                let lower = bottom[l] + wx * (bottom[r] - bottom[l]);
                out.push((upper + wy * (lower - upper)).clamp(0.0, 1.0));
            }
        }
    }
    out
}

/// 8-bit quantization, round half up.
pub fn quantize(v: f32) -> u8 {
    (f64::from(v) * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn to_rgb8(img: &ImageTensor) -> RgbImage {
    let raw = img.data().iter().map(|&v| quantize(v)).collect();
    RgbImage::from_raw(img.width() as u32, img.height() as u32, raw)
        .expect("tensor length matches its dimensions")
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    use image::codecs::png::{CompressionType, FilterType, PngEncoder};
    use image::ImageEncoder;
    let mut buf = Vec::new();
    PngEncoder::new_with_quality(&mut buf, CompressionType::Fast, FilterType::Adaptive)
        .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgb8)
        .map_err(|e| Error::io("encoding png", std::io::Error::other(e)))?;
    Ok(buf)
}

pub fn save_png(img: &ImageTensor, path: &Path) -> Result<()> {
    let bytes = encode_png(&to_rgb8(img))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, Luma, Rgb};

    fn png_bytes(img: &DynamicImage) -> Vec<u8> {
        let mut buf = Vec::new();
        img.write_to(&mut Cursor::new(&mut buf), ImageFormat::Png).unwrap();
        buf
    }

    #[test]
    fn gray_png_resizes_to_constant() {
        let img = DynamicImage::ImageRgb8(RgbImage::from_pixel(512, 512, Rgb([128, 128, 128])));
        let t = decode_image(&png_bytes(&img), Path::new("gray.png"), 256, 256).unwrap();
        assert_eq!(t.shape(), [256, 256, 3]);
        let want = 128.0f32 / 255.0;
        assert!(t.data().iter().all(|&v| (v - want).abs() <= 1e-6));
    }

    #[test]
    fn grayscale_expands_to_three_channels() {
        let img = DynamicImage::ImageLuma8(GrayImage::from_pixel(4, 6, Luma([255])));
        let t = decode_image(&png_bytes(&img), Path::new("g.png"), 4, 6).unwrap();
        assert_eq!(t.shape(), [4, 6, 3]);
        assert!(t.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn sixteen_bit_normalizes() {
        let img = DynamicImage::ImageRgb16(image::ImageBuffer::from_pixel(2, 2, Rgb([65535u16, 0, 32768])));
        let t = decode_image(&png_bytes(&img), Path::new("w.png"), 2, 2).unwrap();
        assert_eq!(&t.data()[..3], &[1.0, 0.0, 32768.0 / 65535.0]);
    }

    #[test]
    fn truncated_jpeg_reports_path() {
        let img = DynamicImage::ImageRgb8(RgbImage::from_pixel(64, 64, Rgb([10, 200, 30])));
        let mut buf = Vec::new();
        img.write_to(&mut Cursor::new(&mut buf), ImageFormat::Jpeg).unwrap();
        buf.truncate(buf.len() / 3);
        let err = decode_image(&buf, Path::new("broken.jpg"), 8, 8).unwrap_err();
        assert!(matches!(err, Error::Decode { .. }), "{err}");
        assert!(err.to_string().contains("broken.jpg"));
    }

    #[test]
    fn non_image_bytes_are_unsupported() {
        let err = decode_image(b"GIF89a....", Path::new("x.gif"), 8, 8).unwrap_err();
        assert!(matches!(err, Error::UnsupportedFormat(_)));
        let err = decode_image(b"hello", Path::new("x.txt"), 8, 8).unwrap_err();
        assert!(matches!(err, Error::UnsupportedFormat(_)));
    }

    #[test]
    fn same_size_resize_is_identity() {
        let src: Vec<f32> = (0..5 * 7 * 3).map(|i| (i % 11) as f32 / 10.0).collect();
        assert_eq!(resize_bilinear(&src, 5, 7, 5, 7), src);
    }

    #[test]
    fn upsample_interpolates_between_neighbours() {
        // 1x2 -> 1x4: half-pixel centers put outputs at source x = -0.25,
        // 0.25, 0.75, 1.25, clamped at the edges.
        let src = vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let out = resize_bilinear(&src, 1, 2, 1, 4);
        let red: Vec<f32> = out.chunks(3).map(|p| p[0]).collect();
        assert_eq!(red, vec![0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn quantization_rounds_half_up() {
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(127.0 / 255.0), 127);
        for i in 0..=10_000 {
            let v = i as f32 / 10_000.0;
            let q = quantize(v);
            assert!((f64::from(v) * 255.0 - f64::from(q)).abs() <= 0.5);
        }
    }
}
