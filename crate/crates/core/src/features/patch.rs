use crate::image::GrayImage;

/// A regular grid of bilinear samples with a border ring around it.
///
/// Interior coordinates run over `0..nx` x `0..ny`; the border adds
/// `border` samples on every side so that neighbourhood operators are
/// defined at the edges of the interior.
#[derive(Debug, Clone)]
pub(crate) struct Patch {
    pub nx: usize,
    pub ny: usize,
    pub border: usize,
    stride: usize,
    data: Vec<f64>,
}

impl Patch {
    /// Samples `image` at `origin + (i * step_x, j * step_y)`.
    pub fn sample(
        image: &GrayImage,
        origin: (f64, f64),
        step: (f64, f64),
        nx: usize,
        ny: usize,
        border: usize,
    ) -> Self {
        let stride = nx + 2 * border;
        let rows = ny + 2 * border;
        let mut data = Vec::with_capacity(stride * rows);
        let b = border as f64;
        for j in 0..rows {
            let y = origin.1 + (j as f64 - b) * step.1;
            for i in 0..stride {
                let x = origin.0 + (i as f64 - b) * step.0;
                data.push(image.sample(x, y));
            }
        }
        Patch {
            nx,
            ny,
            border,
            stride,
            data,
        }
    }

    /// Unit-step square patch of side `side` centred on `centre`.
    pub fn around(image: &GrayImage, centre: (f64, f64), side: usize, border: usize) -> Self {
        let half = (side / 2) as f64;
        Patch::sample(
            image,
            (centre.0 - half, centre.1 - half),
            (1.0, 1.0),
            side,
            side,
            border,
        )
    }

    /// Value at interior coordinates; `i` and `j` may reach into the border.
    #[inline]
    pub fn at(&self, i: isize, j: isize) -> f64 {
        let b = self.border as isize;
        self.data[((j + b) as usize) * self.stride + (i + b) as usize]
    }
}
