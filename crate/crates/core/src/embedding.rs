//! Embedding-level mixing: interpolate image features, stack text feature
//! sequences. Values are unbounded encoder outputs, so nothing is clamped to
//! a fixed range.

use crate::augment::{check_lambda, interpolate_into};
use crate::error::{Error, Result};

/// Row-major `rows x cols` matrix of f32 features (sequence length x dim).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidMatrix(format!(
                "dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidMatrix(format!(
                "expected {} values for {rows}x{cols}, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: f32) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Splits into the first `at` rows and the rest.
    pub fn split_rows(&self, at: usize) -> Result<(FeatureMatrix, FeatureMatrix)> {
        let (head, tail) = self.data.split_at(at.min(self.rows) * self.cols);
        Ok((
            FeatureMatrix::new(at, self.cols, head.to_vec())?,
            FeatureMatrix::new(self.rows - at, self.cols, tail.to_vec())?,
        ))
    }
}

/// Elementwise `lambda * fa + (1 - lambda) * fb`; same kernel as pixel mixing.
pub fn mix_image_embeddings(fa: &FeatureMatrix, fb: &FeatureMatrix, lambda: f32) -> Result<FeatureMatrix> {
    check_lambda(lambda)?;
    if fa.rows != fb.rows || fa.cols != fb.cols {
        return Err(Error::ShapeMismatch {
            left: vec![fa.rows, fa.cols],
            right: vec![fb.rows, fb.cols],
        });
    }
    let mut out = vec![0.0; fa.data.len()];
    interpolate_into(&mut out, &fa.data, &fb.data, lambda);
    Ok(FeatureMatrix {
        rows: fa.rows,
        cols: fa.cols,
        data: out,
    })
}

/// Stacks `fb`'s rows below `fa`'s.
pub fn concat_text_embeddings(fa: &FeatureMatrix, fb: &FeatureMatrix) -> Result<FeatureMatrix> {
    if fa.cols != fb.cols {
        return Err(Error::DimMismatch {
            left: fa.cols,
            right: fb.cols,
        });
    }
    let mut data = Vec::with_capacity(fa.data.len() + fb.data.len());
    data.extend_from_slice(&fa.data);
    data.extend_from_slice(&fb.data);
    Ok(FeatureMatrix {
        rows: fa.rows + fb.rows,
        cols: fa.cols,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::mix_images;
    use crate::random::{stream, unit_open};
    use crate::types::ImageTensor;
    use proptest::prelude::*;

    fn random_matrix(rows: usize, cols: usize, seed: u64, scale: f32) -> FeatureMatrix {
        let mut rng = stream(seed);
        let data = (0..rows * cols)
            .map(|_| (unit_open(&mut rng) as f32 - 0.5) * scale)
            .collect();
        FeatureMatrix::new(rows, cols, data).unwrap()
    }

    #[test]
    fn mix_examples() {
        let fa = random_matrix(4, 8, 1, 10.0);
        let fb = random_matrix(4, 8, 2, 10.0);
        assert_eq!(mix_image_embeddings(&fa, &fb, 1.0).unwrap(), fa);

        let twos = FeatureMatrix::filled(2, 3, 2.0).unwrap();
        let fours = FeatureMatrix::filled(2, 3, 4.0).unwrap();
        let mid = mix_image_embeddings(&twos, &fours, 0.5).unwrap();
        assert!(mid.data().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn mix_matches_scalar_loop() {
        for seed in 0..20 {
            let fa = random_matrix(4, 8, seed, 6.0);
            let fb = random_matrix(4, 8, seed + 100, 6.0);
            let lambda = unit_open(&mut stream(seed + 200)) as f32;
            let got = mix_image_embeddings(&fa, &fb, lambda).unwrap();
            for r in 0..4 {
                for c in 0..8 {
                    let x = f64::from(fa.row(r)[c]);
                    let y = f64::from(fb.row(r)[c]);
                    let l = f64::from(lambda);
                    let want = l * x + (1.0 - l) * y;
                    assert!((f64::from(got.row(r)[c]) - want).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn mix_errors() {
        let fa = FeatureMatrix::filled(2, 3, 0.0).unwrap();
        let fb = FeatureMatrix::filled(3, 3, 0.0).unwrap();
        assert!(matches!(mix_image_embeddings(&fa, &fb, 0.5), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(mix_image_embeddings(&fa, &fa, -0.1), Err(Error::InvalidLambda(_))));
    }

    #[test]
    fn concat_shapes_and_errors() {
        let fa = random_matrix(3, 8, 1, 1.0);
        let fb = random_matrix(5, 8, 2, 1.0);
        let out = concat_text_embeddings(&fa, &fb).unwrap();
        assert_eq!((out.rows(), out.cols()), (8, 8));
        let (head, tail) = out.split_rows(3).unwrap();
        assert_eq!(head, fa);
        assert_eq!(tail, fb);

        let narrow = random_matrix(5, 4, 3, 1.0);
        assert!(matches!(
            concat_text_embeddings(&fa, &narrow),
            Err(Error::DimMismatch { left: 8, right: 4 })
        ));
    }

    #[test]
    fn matrix_constructor_invariants() {
        assert!(FeatureMatrix::new(0, 3, vec![]).is_err());
        assert!(FeatureMatrix::new(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn agrees_with_pixel_kernel() {
        let img_a = ImageTensor::new(2, 2, (0..12).map(|i| i as f32 / 12.0).collect()).unwrap();
        let img_b = ImageTensor::new(2, 2, (0..12).map(|i| 1.0 - i as f32 / 13.0).collect()).unwrap();
        let fa = FeatureMatrix::new(1, 12, img_a.data().to_vec()).unwrap();
        let fb = FeatureMatrix::new(1, 12, img_b.data().to_vec()).unwrap();
        for lambda in [0.0, 0.3, 0.5, 0.77, 1.0] {
            let pix = mix_images(&img_a, &img_b, lambda).unwrap();
            let emb = mix_image_embeddings(&fa, &fb, lambda).unwrap();
            assert_eq!(pix.data(), emb.data());
        }
    }

    proptest! {
        #[test]
        fn concat_rows_add(r1 in 1usize..6, r2 in 1usize..6, r3 in 1usize..6, cols in 1usize..5) {
            let a = FeatureMatrix::filled(r1, cols, 1.0).unwrap();
            let b = FeatureMatrix::filled(r2, cols, 2.0).unwrap();
            let c = FeatureMatrix::filled(r3, cols, 3.0).unwrap();
            let left = concat_text_embeddings(&concat_text_embeddings(&a, &b).unwrap(), &c).unwrap();
            let right = concat_text_embeddings(&a, &concat_text_embeddings(&b, &c).unwrap()).unwrap();
            prop_assert_eq!(left.rows(), r1 + r2 + r3);
            prop_assert_eq!(left.cols(), cols);
            prop_assert_eq!(left, right);
        }

        #[test]
        fn finite_inputs_stay_finite(seed in any::<u64>(), lambda in 0.0f32..=1.0) {
            let big = f32::MAX;
            let fa = FeatureMatrix::new(1, 4, vec![big, -big, 1.0, big]).unwrap();
            let fb = random_matrix(1, 4, seed, 1e30);
            let out = mix_image_embeddings(&fa, &fb, lambda).unwrap();
            prop_assert!(out.data().iter().all(|v| v.is_finite()));
        }
    }
}
