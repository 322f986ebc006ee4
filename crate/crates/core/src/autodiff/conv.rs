//! im2col / col2im kernels and the GEMM wrapper shared by both convolutions.

use super::AutodiffError;

/// Spatial geometry of a square-kernel cross-correlation over a `channels × in_h × in_w`
/// plane stack producing `out_h × out_w` positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    /// Geometry of a forward convolution; rejects non-integral or empty output extents.
    pub fn forward(
        channels: usize,
        in_h: usize,
        in_w: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self, AutodiffError> {
        if stride == 0 || kernel == 0 {
            return Err(AutodiffError::Config(format!(
                "kernel ({kernel}) and stride ({stride}) must be positive"
            )));
        }
        let extent = |size: usize, axis: &str| -> Result<usize, AutodiffError> {
            let padded = size + 2 * padding;
            if padded < kernel {
                return Err(AutodiffError::Config(format!(
                    "{axis} extent {size} with padding {padding} is smaller than kernel {kernel}"
                )));
            }
            if !(padded - kernel).is_multiple_of(stride) {
                return Err(AutodiffError::Config(format!(
                    "{axis} extent {size} gives non-integral output for kernel {kernel}, \
                     stride {stride}, padding {padding}"
                )));
            }
            Ok((padded - kernel) / stride + 1)
        };
        let out_h = extent(in_h, "height")?;
        let out_w = extent(in_w, "width")?;
        Ok(Self {
            channels,
            in_h,
            in_w,
            kernel,
            stride,
            padding,
            out_h,
            out_w,
        })
    }

    /// Geometry whose forward direction maps the transposed convolution's output back
    /// onto its input (`out_h × out_w` here is the transposed input).
    pub fn transposed(
        channels: usize,
        in_h: usize,
        in_w: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self, AutodiffError> {
        if stride == 0 || kernel == 0 {
            return Err(AutodiffError::Config(format!(
                "kernel ({kernel}) and stride ({stride}) must be positive"
            )));
        }
        let extent = |size: usize, axis: &str| -> Result<usize, AutodiffError> {
            let grown = (size - 1) * stride + kernel;
            if grown <= 2 * padding {
                return Err(AutodiffError::Config(format!(
                    "transposed {axis} extent for input {size}, kernel {kernel}, stride {stride}, \
                     padding {padding} is not positive"
                )));
            }
            Ok(grown - 2 * padding)
        };
        let full_h = extent(in_h, "height")?;
        let full_w = extent(in_w, "width")?;
        let geom = Self::forward(channels, full_h, full_w, kernel, stride, padding)?;
        debug_assert_eq!((geom.out_h, geom.out_w), (in_h, in_w));
        Ok(geom)
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn in_plane(&self) -> usize {
        self.in_h * self.in_w
    }
}

/// Unfold `input` (`channels × in_h × in_w`) into a `(channels·k·k) × (out_h·out_w)` matrix.
pub fn im2col(input: &[f32], g: &ConvGeometry, cols: &mut [f32]) {
    let k = g.kernel;
    let positions = g.positions();
    debug_assert_eq!(cols.len(), g.col_rows() * positions);
    for c in 0..g.channels {
        let plane = &input[c * g.in_plane()..(c + 1) * g.in_plane()];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * positions..(row + 1) * positions];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.in_h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for (ox, slot) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        *slot = if ix < 0 || ix >= g.in_w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add a column matrix back onto `output`.
pub fn col2im(cols: &[f32], g: &ConvGeometry, output: &mut [f32]) {
    let k = g.kernel;
    let positions = g.positions();
    for c in 0..g.channels {
        let plane = &mut output[c * g.in_plane()..(c + 1) * g.in_plane()];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * positions..(row + 1) * positions];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix >= 0 && (ix as usize) < g.in_w {
                            dst[ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Row-major matrix operand: `rows × cols`, optionally read transposed.
#[derive(Clone, Copy)]
pub struct Mat<'a> {
    pub data: &'a [f32],
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
}

impl<'a> Mat<'a> {
    pub fn new(data: &'a [f32], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self {
            data,
            rows,
            cols,
            transposed: false,
        }
    }

    pub fn t(self) -> Self {
        Self {
            transposed: !self.transposed,
            ..self
        }
    }

    fn logical(&self) -> (usize, usize) {
        if self.transposed {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.cols as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `out = a · b + beta · out` with `out` row-major.
pub fn gemm(a: Mat<'_>, b: Mat<'_>, beta: f32, out: &mut [f32]) {
    let (m, k) = a.logical();
    let (k2, n) = b.logical();
    assert_eq!(k, k2, "inner dimensions differ");
    assert_eq!(out.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: the operand slices hold exactly rows·cols elements and the strides
    // describe a view fully inside them; `out` is m·n contiguous row-major.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
