//! ID-map PNG codec: `id = R + 256·G + 256²·B`, the COCO panoptic layout.

use std::fs::File;
use std::io::{BufWriter, Cursor, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mask::EntityMap;

/// Largest ID representable in three 8-bit channels.
pub const MAX_PNG_ID: u32 = (1 << 24) - 1;

pub fn rgb_to_id(rgb: [u8; 3]) -> u32 {
    u32::from(rgb[0]) + 256 * u32::from(rgb[1]) + 256 * 256 * u32::from(rgb[2])
}

pub fn id_to_rgb(id: u32) -> [u8; 3] {
    [(id & 0xff) as u8, ((id >> 8) & 0xff) as u8, ((id >> 16) & 0xff) as u8]
}

/// Decodes an 8-bit RGB or RGBA PNG into an ID map. Alpha is ignored.
pub fn decode_id_png(bytes: &[u8]) -> Result<EntityMap> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| Error::Format(format!("png: {e}")))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format("png: image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("png: {e}")))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format(format!(
            "png: expected 8-bit channels, got {:?}",
            info.bit_depth
        )));
    }
    let stride = match info.color_type {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => return Err(Error::Format(format!("png: expected RGB or RGBA, got {other:?}"))),
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let mut ids = Vec::with_capacity(w * h);
    for row in 0..h {
        let line = &buf[row * info.line_size..row * info.line_size + w * stride];
        ids.extend(line.chunks_exact(stride).map(|px| rgb_to_id([px[0], px[1], px[2]])));
    }
    EntityMap::new(h, w, ids)
}

pub fn read_id_png(path: &Path) -> Result<EntityMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_id_png(&bytes)
}

/// Encodes an ID map as an 8-bit RGB PNG. Output bytes depend only on the map.
pub fn encode_id_png(map: &EntityMap) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_png(map, &mut out)?;
    Ok(out)
}

pub fn write_id_png(map: &EntityMap, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_png(map, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_png<W: Write>(map: &EntityMap, w: W) -> Result<()> {
    if let Some(&bad) = map.ids().iter().find(|&&id| id > MAX_PNG_ID) {
        return Err(Error::Format(format!("id {bad} does not fit in an RGB PNG")));
    }
    let mut encoder = png::Encoder::new(w, map.width() as u32, map.height() as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| Error::Format(format!("png: {e}")))?;
    let data: Vec<u8> = map.ids().iter().flat_map(|&id| id_to_rgb(id)).collect();
    writer
        .write_image_data(&data)
        .map_err(|e| Error::Format(format!("png: {e}")))?;
    writer.finish().map_err(|e| Error::Format(format!("png: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_weights() {
        assert_eq!(rgb_to_id([1, 0, 0]), 1);
        assert_eq!(rgb_to_id([0, 1, 0]), 256);
        assert_eq!(rgb_to_id([0, 0, 1]), 65536);
        assert_eq!(id_to_rgb(65536 + 256 * 2 + 3), [3, 2, 1]);
    }

    #[test]
    fn png_roundtrip() {
        let map = EntityMap::new(2, 3, vec![0, 1, 256, 70000, MAX_PNG_ID, 5]).unwrap();
        let bytes = encode_id_png(&map).unwrap();
        assert_eq!(decode_id_png(&bytes).unwrap(), map);
        assert_eq!(encode_id_png(&map).unwrap(), bytes);
    }

    #[test]
    fn oversized_id_rejected() {
        let map = EntityMap::new(1, 1, vec![MAX_PNG_ID + 1]).unwrap();
        assert!(encode_id_png(&map).is_err());
    }

    #[test]
    fn garbage_is_format_error() {
        assert!(matches!(decode_id_png(b"not a png"), Err(Error::Format(_))));
    }
}
