//! Timestamped raster frames for the depth, gray and infrared bands.

use crate::error::{Error, Result};

/// Depth raster in millimeters; `0` marks an invalid pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthFrame {
    pub width: u32,
    pub height: u32,
    pub depth_mm: Vec<u16>,
    pub timestamp_us: u64,
}

impl DepthFrame {
    pub fn new(width: u32, height: u32, depth_mm: Vec<u16>, timestamp_us: u64) -> Result<Self> {
        check_len(width, height, depth_mm.len())?;
        Ok(DepthFrame {
            width,
            height,
            depth_mm,
            timestamp_us,
        })
    }

    pub fn filled(width: u32, height: u32, value: u16) -> Self {
        DepthFrame {
            width,
            height,
            depth_mm: vec![value; width as usize * height as usize],
            timestamp_us: 0,
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.depth_mm[y as usize * self.width as usize + x as usize]
    }
}

/// 8-bit grayscale raster; stands in for the RGB stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayFrame {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
    pub timestamp_us: u64,
}

impl GrayFrame {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>, timestamp_us: u64) -> Result<Self> {
        check_len(width, height, pixels.len())?;
        Ok(GrayFrame {
            width,
            height,
            pixels,
            timestamp_us,
        })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        GrayFrame {
            width,
            height,
            pixels: vec![value; width as usize * height as usize],
            timestamp_us: 0,
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        let w = self.width as usize;
        self.pixels[y as usize * w + x as usize] = v;
    }

    /// Copies the rectangle `(x, y, w, h)`; the rectangle must be inside.
    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> Result<GrayFrame> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::OutOfRange(format!(
                "crop ({x}, {y}, {w}, {h}) outside {}x{}",
                self.width, self.height
            )));
        }
        let mut pixels = Vec::with_capacity(w as usize * h as usize);
        for row in y..y + h {
            let start = row as usize * self.width as usize + x as usize;
            pixels.extend_from_slice(&self.pixels[start..start + w as usize]);
        }
        Ok(GrayFrame {
            width: w,
            height: h,
            pixels,
            timestamp_us: self.timestamp_us,
        })
    }

    /// Bilinear resample to `out_w × out_h` (pixel-center aligned).
    pub fn resize_bilinear(&self, out_w: u32, out_h: u32) -> GrayFrame {
        let mut pixels = Vec::with_capacity(out_w as usize * out_h as usize);
        let sx = self.width as f64 / out_w as f64;
        let sy = self.height as f64 / out_h as f64;
        let max_x = self.width as f64 - 1.0;
        let max_y = self.height as f64 - 1.0;
        for oy in 0..out_h {
            let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
            let y0 = fy.floor() as u32;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = fy - y0 as f64;
            for ox in 0..out_w {
                let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
                let x0 = fx.floor() as u32;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = fx - x0 as f64;
                let top = self.get(x0, y0) as f64 * (1.0 - tx) + self.get(x1, y0) as f64 * tx;
                let bot = self.get(x0, y1) as f64 * (1.0 - tx) + self.get(x1, y1) as f64 * tx;
                let v = top * (1.0 - ty) + bot * ty;
                pixels.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
        GrayFrame {
            width: out_w,
            height: out_h,
            pixels,
            timestamp_us: self.timestamp_us,
        }
    }

    /// Pastes `src` with its top-left corner at `(x, y)`, clipping to bounds.
    pub fn paste(&mut self, src: &GrayFrame, x: i64, y: i64) {
        for sy in 0..src.height as i64 {
            let ty = y + sy;
            if ty < 0 || ty >= self.height as i64 {
                continue;
            }
            for sx in 0..src.width as i64 {
                let tx = x + sx;
                if tx < 0 || tx >= self.width as i64 {
                    continue;
                }
                self.set(tx as u32, ty as u32, src.get(sx as u32, sy as u32));
            }
        }
    }
}

/// 8-bit infrared intensity raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrFrame {
    pub width: u32,
    pub height: u32,
    pub intensity: Vec<u8>,
    pub timestamp_us: u64,
}

impl IrFrame {
    pub fn new(width: u32, height: u32, intensity: Vec<u8>, timestamp_us: u64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("IR frame must be non-empty".into()));
        }
        check_len(width, height, intensity.len())?;
        Ok(IrFrame {
            width,
            height,
            intensity,
            timestamp_us,
        })
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.intensity[y as usize * self.width as usize + x as usize]
    }
}

impl From<GrayFrame> for IrFrame {
    fn from(g: GrayFrame) -> Self {
        IrFrame {
            width: g.width,
            height: g.height,
            intensity: g.pixels,
            timestamp_us: g.timestamp_us,
        }
    }
}

impl From<IrFrame> for GrayFrame {
    fn from(ir: IrFrame) -> Self {
        GrayFrame {
            width: ir.width,
            height: ir.height,
            pixels: ir.intensity,
            timestamp_us: ir.timestamp_us,
        }
    }
}

/// Integer rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Rect { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.w > 0 && self.h > 0 && self.x + self.w <= width && self.y + self.h <= height
    }
}

fn check_len(width: u32, height: u32, len: usize) -> Result<()> {
    if width as usize * height as usize != len {
        return Err(Error::InvalidArgument(format!(
            "buffer length {len} does not match {width}x{height}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resize_identity_and_gradient() {
        let g = GrayFrame::new(4, 1, vec![0, 80, 160, 240], 0).unwrap();
        assert_eq!(g.resize_bilinear(4, 1), g);
        let up = g.resize_bilinear(8, 2);
        for row in up.pixels.chunks(8) {
            assert!(row.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn crop_bounds() {
        let g = GrayFrame::filled(10, 10, 3);
        assert!(g.crop(5, 5, 6, 1).is_err());
        let c = g.crop(2, 3, 4, 5).unwrap();
        assert_eq!((c.width, c.height), (4, 5));
    }
}
