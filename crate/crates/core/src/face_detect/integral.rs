use image::GrayImage;

/// Summed-area tables of a grayscale image and of its squared values.
///
/// Both tables are `(W+1) × (H+1)`; entry `(i, j)` holds the sum over all
/// pixels with `x < i` and `y < j`, so row 0 and column 0 are zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegralImage {
    width: u32,
    height: u32,
    sum: Vec<u64>,
    sq_sum: Vec<u64>,
}

impl IntegralImage {
    pub fn new(gray: &GrayImage) -> Self {
        let (w, h) = gray.dimensions();
        let stride = w as usize + 1;
        let mut sum = vec![0u64; stride * (h as usize + 1)];
        let mut sq_sum = vec![0u64; stride * (h as usize + 1)];
        let raw = gray.as_raw();
        for y in 0..h as usize {
            let mut row = 0u64;
            let mut row_sq = 0u64;
            for x in 0..w as usize {
                let v = u64::from(raw[y * w as usize + x]);
                row += v;
                row_sq += v * v;
                let idx = (y + 1) * stride + x + 1;
                sum[idx] = sum[idx - stride] + row;
                sq_sum[idx] = sq_sum[idx - stride] + row_sq;
            }
        }
        IntegralImage {
            width: w,
            height: h,
            sum,
            sq_sum,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Table entry `(i, j)` with `i <= W`, `j <= H`.
    #[inline]
    pub fn at(&self, i: u32, j: u32) -> u64 {
        self.sum[j as usize * (self.width as usize + 1) + i as usize]
    }

    #[inline]
    pub fn sq_at(&self, i: u32, j: u32) -> u64 {
        self.sq_sum[j as usize * (self.width as usize + 1) + i as usize]
    }

    #[inline]
    fn lookup(table: &[u64], stride: usize, x: u32, y: u32, w: u32, h: u32) -> u64 {
        let (x0, y0) = (x as usize, y as usize);
        let (x1, y1) = (x0 + w as usize, y0 + h as usize);
        let a = table[y0 * stride + x0];
        let b = table[y0 * stride + x1];
        let c = table[y1 * stride + x0];
        let d = table[y1 * stride + x1];
        (d + a) - (b + c)
    }

    /// Pixel sum of the rectangle `[x, x+w) × [y, y+h)`.
    #[inline]
    pub fn rect_sum(&self, x: u32, y: u32, w: u32, h: u32) -> u64 {
        debug_assert!(x + w <= self.width && y + h <= self.height);
        Self::lookup(&self.sum, self.width as usize + 1, x, y, w, h)
    }

    #[inline]
    pub fn rect_sq_sum(&self, x: u32, y: u32, w: u32, h: u32) -> u64 {
        debug_assert!(x + w <= self.width && y + h <= self.height);
        Self::lookup(&self.sq_sum, self.width as usize + 1, x, y, w, h)
    }
}
