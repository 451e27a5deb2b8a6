use crate::sampler::Image;

/// Dense `[n, c, h, w]` batch in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: [usize; 4],
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor shape/data mismatch"
        );
        Self { shape, data }
    }

    /// `[n, d, 1, 1]` from rows of equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * d);
        for row in rows {
            assert_eq!(row.len(), d, "ragged rows");
            data.extend_from_slice(row);
        }
        Self::from_vec([rows.len(), d, 1, 1], data)
    }

    pub fn from_images<'a>(images: impl IntoIterator<Item = &'a Image>) -> Self {
        let mut shape = [0, 0, 0, 0];
        let mut data = Vec::new();
        for img in images {
            if shape[0] == 0 {
                shape = [0, img.channels, img.height, img.width];
            }
            assert!(
                img.channels == shape[1] && img.height == shape[2] && img.width == shape[3],
                "mixed image sizes in one batch"
            );
            data.extend_from_slice(&img.data);
            shape[0] += 1;
        }
        Self { shape, data }
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Elements per batch item.
    pub fn item_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn item(&self, n: usize) -> &[f64] {
        let len = self.item_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.batch()).map(|n| self.item(n).to_vec()).collect()
    }

    pub fn image(&self, n: usize) -> Image {
        Image {
            channels: self.shape[1],
            height: self.shape[2],
            width: self.shape[3],
            data: self.item(n).to_vec(),
        }
    }

    pub fn reshape(mut self, shape: [usize; 4]) -> Self {
        assert_eq!(shape.iter().product::<usize>(), self.data.len(), "reshape changes size");
        self.shape = shape;
        self
    }
}
