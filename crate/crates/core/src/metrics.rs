//! Image-text retrieval scoring: R@K in both directions and RSUM.
//!
//! Candidates are ranked by descending score; equal scores are ordered by
//! ascending candidate index. Image-to-text retrieval counts a hit when any
//! of the image's captions lands in the top K.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `scores[i * n_texts + t]` is the similarity of image `i` and text `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    n_images: usize,
    n_texts: usize,
    scores: Vec<f32>,
}

impl ScoreMatrix {
    pub fn new(n_images: usize, n_texts: usize, scores: Vec<f32>) -> Result<Self> {
        if scores.len() != n_images * n_texts {
            return Err(Error::InvalidScores(format!(
                "expected {} scores for {n_images}x{n_texts}, got {}",
                n_images * n_texts,
                scores.len()
            )));
        }
        if let Some(p) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidScores(format!("score {p} is not finite")));
        }
        Ok(Self {
            n_images,
            n_texts,
            scores,
        })
    }

    pub fn n_images(&self) -> usize {
        self.n_images
    }

    pub fn n_texts(&self) -> usize {
        self.n_texts
    }

    pub fn get(&self, image: usize, text: usize) -> f32 {
        self.scores[image * self.n_texts + text]
    }

    pub fn scores(&self) -> &[f32] {
        &self.scores
    }

    /// Applies `f` to every score.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<Self> {
        Self::new(self.n_images, self.n_texts, self.scores.iter().map(|&s| f(s)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    image_to_texts: Vec<Vec<usize>>,
    text_to_image: Vec<usize>,
}

impl GroundTruth {
    /// Builds both maps. Every image needs at least one caption and every
    /// text index in `0..total` must belong to exactly one image.
    pub fn from_image_to_texts(image_to_texts: Vec<Vec<usize>>) -> Result<Self> {
        let n_texts: usize = image_to_texts.iter().map(Vec::len).sum();
        let mut text_to_image = vec![usize::MAX; n_texts];
        for (image, texts) in image_to_texts.iter().enumerate() {
            if texts.is_empty() {
                return Err(Error::InconsistentGroundTruth(format!(
                    "image {image} has no captions"
                )));
            }
            for &t in texts {
                match text_to_image.get_mut(t) {
                    None => {
                        return Err(Error::InconsistentGroundTruth(format!(
                            "text index {t} out of range (expected < {n_texts})"
                        )))
                    }
                    Some(slot) if *slot != usize::MAX => {
                        return Err(Error::InconsistentGroundTruth(format!(
                            "text {t} assigned to images {} and {image}",
                            *slot
                        )))
                    }
                    Some(slot) => *slot = image,
                }
            }
        }
        Ok(Self {
            image_to_texts,
            text_to_image,
        })
    }

    /// `captions_per_image` consecutive texts per image, COCO style.
    pub fn consecutive(n_images: usize, captions_per_image: usize) -> Self {
        let map = (0..n_images)
            .map(|i| (i * captions_per_image..(i + 1) * captions_per_image).collect())
            .collect();
        Self::from_image_to_texts(map).expect("consecutive layout is consistent")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            image_to_texts: Vec<Vec<usize>>,
        }
        let raw: Raw = serde_json::from_str(text).map_err(|e| Error::Json {
            context: "ground truth".into(),
            source: e,
        })?;
        Self::from_image_to_texts(raw.image_to_texts)
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "image_to_texts": self.image_to_texts }).to_string()
    }

    pub fn n_images(&self) -> usize {
        self.image_to_texts.len()
    }

    pub fn n_texts(&self) -> usize {
        self.text_to_image.len()
    }

    pub fn texts_of(&self, image: usize) -> &[usize] {
        &self.image_to_texts[image]
    }

    pub fn image_of(&self, text: usize) -> usize {
        self.text_to_image[text]
    }

    fn check_against(&self, scores: &ScoreMatrix) -> Result<()> {
        if self.n_images() != scores.n_images() || self.n_texts() != scores.n_texts() {
            return Err(Error::InconsistentGroundTruth(format!(
                "ground truth covers {}x{} but scores are {}x{}",
                self.n_images(),
                self.n_texts(),
                scores.n_images(),
                scores.n_texts()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Image query, text candidates.
    ImageToText,
    /// Text query, image candidates.
    TextToImage,
}

/// Zero-based rank of `target` among candidates scored by `score`.
fn rank_of(target: usize, n: usize, score: impl Fn(usize) -> f32) -> usize {
    let s = score(target);
    (0..n)
        .filter(|&c| {
            let sc = score(c);
            sc > s || (sc == s && c < target)
        })
        .count()
}

/// Best rank of any ground-truth candidate, per query.
pub fn best_ranks(scores: &ScoreMatrix, gt: &GroundTruth, direction: Direction) -> Result<Vec<usize>> {
    gt.check_against(scores)?;
    Ok(match direction {
        Direction::ImageToText => (0..scores.n_images())
            .map(|i| {
                gt.texts_of(i)
                    .iter()
                    .map(|&t| rank_of(t, scores.n_texts(), |c| scores.get(i, c)))
                    .min()
                    .unwrap_or(usize::MAX)
            })
            .collect(),
        Direction::TextToImage => (0..scores.n_texts())
            .map(|t| rank_of(gt.image_of(t), scores.n_images(), |c| scores.get(c, t)))
            .collect(),
    })
}

fn percent_within(ranks: &[usize], k: usize) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    let hits = ranks.iter().filter(|&&r| r < k).count();
    hits as f64 * 100.0 / ranks.len() as f64
}

/// Percentage of queries whose ground truth ranks within the top `k`.
pub fn recall_at_k(scores: &ScoreMatrix, gt: &GroundTruth, k: usize, direction: Direction) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    Ok(percent_within(&best_ranks(scores, gt, direction)?, k))
}

/// Correctly rounded sum of finite values (Shewchuk's partials with the
/// final half-even correction).
pub fn exact_sum(values: &[f64]) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for &v in values {
        let mut x = v;
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }

    let Some(mut n) = partials.len().checked_sub(1) else {
        return 0.0;
    };
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        n -= 1;
        let x = hi;
        let y = partials[n];
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

/// Sum of the six recalls, in percent points.
pub fn rsum(recalls: [f64; 6]) -> f64 {
    exact_sum(&recalls)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub tr_r1: f64,
    pub tr_r5: f64,
    pub tr_r10: f64,
    pub ir_r1: f64,
    pub ir_r5: f64,
    pub ir_r10: f64,
    pub rsum: f64,
}

impl RetrievalReport {
    pub fn from_recalls(recalls: [f64; 6]) -> Self {
        let [tr_r1, tr_r5, tr_r10, ir_r1, ir_r5, ir_r10] = recalls;
        Self {
            tr_r1,
            tr_r5,
            tr_r10,
            ir_r1,
            ir_r5,
            ir_r10,
            rsum: rsum(recalls),
        }
    }

    pub fn recalls(&self) -> [f64; 6] {
        [self.tr_r1, self.tr_r5, self.tr_r10, self.ir_r1, self.ir_r5, self.ir_r10]
    }
}

pub fn evaluate_retrieval(scores: &ScoreMatrix, gt: &GroundTruth) -> Result<RetrievalReport> {
    let tr = best_ranks(scores, gt, Direction::ImageToText)?;
    let ir = best_ranks(scores, gt, Direction::TextToImage)?;
    Ok(RetrievalReport::from_recalls([
        percent_within(&tr, 1),
        percent_within(&tr, 5),
        percent_within(&tr, 10),
        percent_within(&ir, 1),
        percent_within(&ir, 5),
        percent_within(&ir, 10),
    ]))
}
