use crate::frame::GrayFrame;

/// Summed-area tables of pixel values and squared pixel values, padded with
/// a zero row and column.
#[derive(Debug, Clone)]
pub struct IntegralImage {
    pub width: u32,
    pub height: u32,
    sum: Vec<u64>,
    sq: Vec<u64>,
}

impl IntegralImage {
    pub fn new(frame: &GrayFrame) -> Self {
        let (w, h) = (frame.width as usize, frame.height as usize);
        let stride = w + 1;
        let mut sum = vec![0u64; stride * (h + 1)];
        let mut sq = vec![0u64; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0u64;
            let mut row_sq = 0u64;
            for x in 0..w {
                let p = frame.pixels[y * w + x] as u64;
                row += p;
                row_sq += p * p;
                sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + row;
                sq[(y + 1) * stride + x + 1] = sq[y * stride + x + 1] + row_sq;
            }
        }
        IntegralImage {
            width: frame.width,
            height: frame.height,
            sum,
            sq,
        }
    }

    #[inline]
    fn lookup(table: &[u64], stride: usize, x: u32, y: u32, w: u32, h: u32) -> u64 {
        let (x0, y0, x1, y1) = (x as usize, y as usize, (x + w) as usize, (y + h) as usize);
        table[y1 * stride + x1] + table[y0 * stride + x0] - table[y0 * stride + x1] - table[y1 * stride + x0]
    }

    /// Sum of pixels in `[x, x+w) × [y, y+h)`.
    #[inline]
    pub fn rect_sum(&self, x: u32, y: u32, w: u32, h: u32) -> u64 {
        Self::lookup(&self.sum, self.width as usize + 1, x, y, w, h)
    }

    #[inline]
    pub fn rect_sq_sum(&self, x: u32, y: u32, w: u32, h: u32) -> u64 {
        Self::lookup(&self.sq, self.width as usize + 1, x, y, w, h)
    }

    /// Standard deviation of the window, floored at 1 gray level.
    pub fn window_std(&self, x: u32, y: u32, w: u32, h: u32) -> f64 {
        let n = (w as u64 * h as u64) as f64;
        let mean = self.rect_sum(x, y, w, h) as f64 / n;
        let var = self.rect_sq_sum(x, y, w, h) as f64 / n - mean * mean;
        var.max(1.0).sqrt()
    }
}
