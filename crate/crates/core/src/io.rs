//! Grayscale image I/O, mirror padding and the posterior dump format.
//!
//! Images are binary PGM (`P5`) with 8-bit samples. Pixel values map to
//! `[0, 1]` by dividing by the header's max value (255 for every file this
//! crate writes).
//!
//! The FSP1 posterior dump is, little-endian:
//!
//! ```text
//! "FSP1"  u32 width  u32 height  u32 classes
//! f32 values, class-major, then row-major within a class
//! ```

use std::fs;
use std::path::Path;

use crate::error::{range, Error, Result};
use crate::output::DenseOutput;
use crate::tensor::{Plane, PlaneSet, Scalar};

pub const POSTERIOR_MAGIC: &[u8; 4] = b"FSP1";

fn pgm_err(msg: impl Into<String>) -> Error {
    Error::Format {
        format: "PGM",
        msg: msg.into(),
    }
}

/// Decodes a binary PGM into a single-plane set.
pub fn decode_pgm<T: Scalar>(bytes: &[u8]) -> Result<PlaneSet<T>> {
    if !bytes.starts_with(b"P5") {
        return Err(pgm_err("missing P5 magic"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        // Whitespace and comments may precede every header field.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(pgm_err(format!("malformed header field {}", i + 1)));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| pgm_err(format!("header field {} out of range", i + 1)))?;
    }
    let [width, height, maxval] = fields;
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(pgm_err("header must end with a single whitespace byte"));
    }
    pos += 1;
    if width == 0 || height == 0 {
        return Err(pgm_err(format!("empty image {width}x{height}")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(pgm_err(format!(
            "unsupported max value {maxval}, only 8-bit samples are read"
        )));
    }
    let n = width * height;
    let payload = bytes
        .get(pos..pos + n)
        .ok_or_else(|| pgm_err(format!("truncated payload: need {n} bytes, have {}", bytes.len() - pos)))?;
    let scale = T::from_f64(maxval as f64);
    let data = payload.iter().map(|&b| T::from_f64(b as f64) / scale).collect();
    Ok(PlaneSet::single(Plane::new(width, height, data)?))
}

pub fn read_pgm<T: Scalar>(path: impl AsRef<Path>) -> Result<PlaneSet<T>> {
    decode_pgm(&fs::read(path)?)
}

/// Encodes a plane as PGM, quantizing `round(clamp(v, 0, 1) * 255)`.
pub fn encode_pgm<T: Scalar>(plane: &Plane<T>) -> Vec<u8> {
    let bytes = plane
        .data()
        .iter()
        .map(|v| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect::<Vec<_>>();
    encode_pgm_bytes(plane.width(), plane.height(), &bytes)
}

pub fn encode_pgm_bytes(width: usize, height: usize, samples: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(samples);
    out
}

pub fn write_pgm<T: Scalar>(path: impl AsRef<Path>, plane: &Plane<T>) -> Result<()> {
    fs::write(path, encode_pgm(plane))?;
    Ok(())
}

/// Renders the argmax class map: class `c` of `C` becomes `round(255*c/(C-1))`.
pub fn encode_class_map<T: Scalar>(output: &DenseOutput<T>) -> Vec<u8> {
    let classes = output.class_count();
    let samples = output
        .classes()
        .iter()
        .map(|&c| {
            if classes <= 1 {
                0
            } else {
                (255.0 * c as f64 / (classes - 1) as f64).round() as u8
            }
        })
        .collect::<Vec<_>>();
    encode_pgm_bytes(output.width(), output.height(), &samples)
}

/// Reflects the plane about its border pixels without repeating them:
/// padded `-1` is original `1`, padded `-2` is original `2`, and so on.
pub fn mirror_pad<T: Scalar>(plane: &Plane<T>, margin: usize) -> Result<Plane<T>> {
    let (w, h) = (plane.width(), plane.height());
    if margin > 0 && (margin >= w || margin >= h) {
        return Err(range(
            "mirror margin",
            format!("margin {margin} needs an image larger than {w}x{h}"),
        ));
    }
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let r = if i < 0 {
            -i
        } else if i >= n {
            2 * (n - 1) - i
        } else {
            i
        };
        r as usize
    };
    let m = margin as isize;
    Plane::from_fn(w + 2 * margin, h + 2 * margin, |x, y| {
        plane.get(reflect(x as isize - m, w), reflect(y as isize - m, h))
    })
}

pub fn mirror_pad_set<T: Scalar>(maps: &PlaneSet<T>, margin: usize) -> Result<PlaneSet<T>> {
    PlaneSet::new(
        maps.planes()
            .iter()
            .map(|p| mirror_pad(p, margin))
            .collect::<Result<Vec<_>>>()?,
    )
}

pub fn encode_posteriors<T: Scalar>(output: &DenseOutput<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + output.width() * output.height() * output.class_count() * 4);
    out.extend_from_slice(POSTERIOR_MAGIC);
    for dim in [output.width(), output.height(), output.class_count()] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for plane in output.posteriors().planes() {
        for v in plane.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_posteriors(bytes: &[u8]) -> Result<DenseOutput<f32>> {
    let fail = |msg: String| Error::Format { format: "FSP1", msg };
    let rest = bytes
        .strip_prefix(POSTERIOR_MAGIC.as_slice())
        .ok_or_else(|| fail("missing FSP1 magic".into()))?;
    if rest.len() < 12 {
        return Err(fail("truncated header".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(rest[i * 4..i * 4 + 4].try_into().unwrap()) as usize;
    let (w, h, c) = (dim(0), dim(1), dim(2));
    let body = &rest[12..];
    if body.len() != w * h * c * 4 {
        return Err(fail(format!(
            "expected {} payload bytes, found {}",
            w * h * c * 4,
            body.len()
        )));
    }
    let mut values = body.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()));
    let planes = (0..c)
        .map(|_| Plane::new(w, h, values.by_ref().take(w * h).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(DenseOutput::from_posteriors(PlaneSet::new(planes)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_two_by_two() {
        let bytes = encode_pgm_bytes(2, 2, &[0, 255, 0, 255]);
        let set = decode_pgm::<f32>(&bytes).unwrap();
        assert_eq!(set.planes()[0].data(), &[0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5 # made by hand\n3 # width\n1\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 51, 255]);
        let set = decode_pgm::<f64>(&bytes).unwrap();
        assert_eq!(set.planes()[0].data(), &[0.0, 0.2, 1.0]);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(decode_pgm::<f32>(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm::<f32>(b"P5\n1\n255\n\0").is_err());
        assert!(decode_pgm::<f32>(b"P5\n1 1\n65535\n\0\0").is_err());
        assert!(decode_pgm::<f32>(b"P5\n2 2\n255\n\0\0\0").is_err());
        assert!(decode_pgm::<f32>(b"P5\n0 2\n255\n").is_err());
    }

    #[test]
    fn mirror_margin_zero_is_identity() {
        let p = Plane::from_fn(3, 2, |x, y| (x + 10 * y) as f32).unwrap();
        assert_eq!(mirror_pad(&p, 0).unwrap(), p);
    }

    #[test]
    fn mirror_row_reflects_without_repeat() {
        // [a, b, c] with margin 1 -> [b, a, b, c, b]
        let p = Plane::new(3, 2, vec![1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let padded = mirror_pad(&p, 1).unwrap();
        assert_eq!((padded.width(), padded.height()), (5, 4));
        assert_eq!(padded.row(1), &[2.0, 1.0, 2.0, 3.0, 2.0]);
        // top padding row mirrors original row 1, corners included
        assert_eq!(padded.row(0), &[5.0, 4.0, 5.0, 6.0, 5.0]);
        assert_eq!(padded.row(3), &[2.0, 1.0, 2.0, 3.0, 2.0]);
    }

    #[test]
    fn mirror_margin_must_fit() {
        let p = Plane::filled(3, 5, 0.0f32).unwrap();
        assert!(mirror_pad(&p, 3).is_err());
        assert!(mirror_pad(&p, 2).is_ok());
    }

    #[test]
    fn em95_margin_on_512() {
        let p = Plane::filled(512, 512, 0.5f32).unwrap();
        let padded = mirror_pad(&p, (95 - 1) / 2).unwrap();
        assert_eq!((padded.width(), padded.height()), (606, 606));
    }

    #[test]
    fn class_map_rendering() {
        let pixels = vec![vec![1.0f32, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let out = DenseOutput::from_pixels(3, 1, &pixels).unwrap();
        let bytes = encode_class_map(&out);
        assert_eq!(&bytes[bytes.len() - 3..], &[0, 128, 255]);
    }

    #[test]
    fn posterior_dump_round_trip() {
        let pixels = vec![vec![0.25f32, 0.75], vec![0.5, 0.5]];
        let out = DenseOutput::from_pixels(2, 1, &pixels).unwrap();
        let bytes = encode_posteriors(&out);
        assert_eq!(&bytes[..4], b"FSP1");
        assert_eq!(bytes.len(), 16 + 4 * 4);
        assert_eq!(decode_posteriors(&bytes).unwrap(), out);
        assert!(decode_posteriors(&bytes[..bytes.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn pgm_requantization_is_byte_stable(
            w in 1usize..9, h in 1usize..9, seed in any::<u64>(),
        ) {
            let mut rng = crate::rng::XorShift64Star::new(seed);
            let samples: Vec<u8> = (0..w * h).map(|_| rng.next_u64() as u8).collect();
            let file = encode_pgm_bytes(w, h, &samples);
            let plane = decode_pgm::<f32>(&file).unwrap();
            prop_assert_eq!(encode_pgm(&plane.planes()[0]), file);
        }
    }
}
