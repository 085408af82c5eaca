//! Pair generation: image interpolation, caption concatenation and the five
//! ablation variants.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::random::{pick_uniform, sample_beta, uniform_below};
use crate::types::{
    AugmentedPair, ImageTensor, ImageTextPair, LambdaPolicy, MixGenConfig, TextSequence,
    Tokenizer, Variant, WhitespaceTokenizer,
};

/// Lambda recorded for variant C, which picks an image instead of blending.
pub const PICK_SENTINEL_LAMBDA: f32 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaSource {
    Fixed,
    BetaSample,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaDraw {
    pub value: f32,
    pub source: LambdaSource,
}

pub fn sample_lambda<R: RngCore + ?Sized>(policy: LambdaPolicy, rng: &mut R) -> Result<LambdaDraw> {
    match policy.validate()? {
        LambdaPolicy::Fixed(value) => Ok(LambdaDraw {
            value,
            source: LambdaSource::Fixed,
        }),
        LambdaPolicy::Beta { alpha, beta } => {
            let value = (sample_beta(alpha, beta, rng)? as f32).clamp(0.0, 1.0);
            Ok(LambdaDraw {
                value,
                source: LambdaSource::BetaSample,
            })
        }
    }
}

pub(crate) fn check_lambda(lambda: f32) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::InvalidLambda(f64::from(lambda)))
    }
}

/// `dst[p] = lambda * a[p] + (1 - lambda) * b[p]`, clamped to the hull of the
/// two inputs so rounding can never leave `[min(a, b), max(a, b)]`.
///
/// With `lambda` of exactly 1 or 0 the output is a bit-exact copy of `a` or `b`.
pub fn interpolate_into(dst: &mut [f32], a: &[f32], b: &[f32], lambda: f32) {
    assert!(dst.len() == a.len() && a.len() == b.len());
    let mu = 1.0 - lambda;
    for ((d, &x), &y) in dst.iter_mut().zip(a).zip(b) {
        let v = lambda * x + mu * y;
        *d = v.max(x.min(y)).min(x.max(y));
    }
}

/// In-place form of [`interpolate_into`]; `a` is overwritten with the result.
pub fn interpolate_in_place(a: &mut [f32], b: &[f32], lambda: f32) {
    assert_eq!(a.len(), b.len());
    let mu = 1.0 - lambda;
    for (x, &y) in a.iter_mut().zip(b) {
        let v = lambda * *x + mu * y;
        *x = v.max(x.min(y)).min(x.max(y));
    }
}

pub fn mix_images(a: &ImageTensor, b: &ImageTensor, lambda: f32) -> Result<ImageTensor> {
    check_lambda(lambda)?;
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let mut out = vec![0.0; a.data().len()];
    interpolate_into(&mut out, a.data(), b.data(), lambda);
    Ok(ImageTensor::from_trusted(a.height(), a.width(), out))
}

/// Joins two captions with a single space; an empty side contributes nothing.
pub fn concat_text(a: &TextSequence, b: &TextSequence) -> TextSequence {
    match (a.is_empty(), b.is_empty()) {
        (true, _) => b.clone(),
        (_, true) => a.clone(),
        _ => TextSequence::from_tokens(&[a.as_str(), b.as_str()]),
    }
}

/// Number of tokens kept out of `n` for a keep fraction: round half up, at
/// least one when anything is kept at all.
pub fn kept_token_count(n: usize, keep_fraction: f32) -> usize {
    if n == 0 || keep_fraction <= 0.0 {
        return 0;
    }
    let k = (f64::from(keep_fraction) * n as f64 + 0.5).floor() as usize;
    k.clamp(1, n)
}

/// Keeps a uniformly random subset of [`kept_token_count`] tokens, in their
/// original order.
pub fn token_subset<T: Clone, R: RngCore + ?Sized>(
    tokens: &[T],
    keep_fraction: f32,
    rng: &mut R,
) -> Vec<T> {
    let n = tokens.len();
    let k = kept_token_count(n, keep_fraction.clamp(0.0, 1.0));
    if k == n {
        return tokens.to_vec();
    }
    // Partial Fisher-Yates: the first k slots end up a uniform k-subset.
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + uniform_below(rng, (n - i) as u64) as usize;
        idx.swap(i, j);
    }
    let mut chosen = idx[..k].to_vec();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| tokens[i].clone()).collect()
}

fn truncate_tokens(text: TextSequence, max_tokens: Option<usize>, tok: &dyn Tokenizer) -> TextSequence {
    match max_tokens {
        Some(cap) => {
            let tokens = tok.tokenize(text.as_str());
            if tokens.len() <= cap {
                text
            } else {
                TextSequence::new(&tok.join(&tokens[..cap]))
            }
        }
        None => text,
    }
}

/// How a generated image is formed from its two sources.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ImagePlan {
    Mix(f32),
    TakeFirst,
    TakeSecond,
}

impl ImagePlan {
    /// Writes the planned image into `a`, which holds the first source.
    pub fn apply_in_place(self, a: &mut [f32], b: &[f32]) {
        match self {
            ImagePlan::Mix(lambda) => interpolate_in_place(a, b, lambda),
            ImagePlan::TakeFirst => {}
            ImagePlan::TakeSecond => a.copy_from_slice(b),
        }
    }

    pub fn apply(self, a: &ImageTensor, b: &ImageTensor) -> Result<ImageTensor> {
        match self {
            ImagePlan::Mix(lambda) => mix_images(a, b, lambda),
            ImagePlan::TakeFirst => Ok(a.clone()),
            ImagePlan::TakeSecond => Ok(b.clone()),
        }
    }
}

/// Every random decision for one generated pair, with the finished caption.
#[derive(Debug, Clone, PartialEq)]
pub struct PairPlan {
    pub lambda_used: f32,
    pub image: ImagePlan,
    pub text: TextSequence,
}

/// Draws the randomness for one pair and builds its caption.
///
/// Draw order: lambda first, then uniform picks, then token subsets.
/// Variants with a fixed lambda policy that pick nothing consume no
/// randomness.
pub fn plan_pair<R: RngCore + ?Sized>(
    ti: &TextSequence,
    tj: &TextSequence,
    config: &MixGenConfig,
    tokenizer: &dyn Tokenizer,
    rng: &mut R,
) -> Result<PairPlan> {
    let variant = config.variant;
    let lambda = match variant {
        Variant::C => PICK_SENTINEL_LAMBDA,
        _ => sample_lambda(config.lambda_policy, rng)?.value,
    };

    let (image, text) = match variant {
        Variant::Default | Variant::A => (ImagePlan::Mix(lambda), concat_text(ti, tj)),
        Variant::B => (ImagePlan::Mix(lambda), pick_uniform(ti, tj, rng).clone()),
        Variant::C => (
            pick_uniform(ImagePlan::TakeFirst, ImagePlan::TakeSecond, rng),
            concat_text(ti, tj),
        ),
        Variant::D => {
            let left = token_subset(&tokenizer.tokenize(ti.as_str()), lambda, rng);
            let right = token_subset(&tokenizer.tokenize(tj.as_str()), 1.0 - lambda, rng);
            let joined: Vec<&str> = left.into_iter().chain(right).collect();
            (ImagePlan::Mix(lambda), TextSequence::new(&tokenizer.join(&joined)))
        }
        Variant::E => {
            let all: Vec<&str> = tokenizer
                .tokenize(ti.as_str())
                .into_iter()
                .chain(tokenizer.tokenize(tj.as_str()))
                .collect();
            let kept = token_subset(&all, 0.5, rng);
            (ImagePlan::Mix(lambda), TextSequence::new(&tokenizer.join(&kept)))
        }
    };

    Ok(PairPlan {
        lambda_used: lambda,
        image,
        text: truncate_tokens(text, config.max_tokens, tokenizer),
    })
}

/// Generates one pair from `pi` and `pj` according to `config.variant`,
/// drawing randomness as [`plan_pair`] does.
pub fn make_pair<R: RngCore + ?Sized>(
    pi: &ImageTextPair,
    pj: &ImageTextPair,
    config: &MixGenConfig,
    rng: &mut R,
) -> Result<AugmentedPair> {
    make_pair_with(pi, pj, config, &WhitespaceTokenizer, rng)
}

pub fn make_pair_with<R: RngCore + ?Sized>(
    pi: &ImageTextPair,
    pj: &ImageTextPair,
    config: &MixGenConfig,
    tokenizer: &dyn Tokenizer,
    rng: &mut R,
) -> Result<AugmentedPair> {
    if pi.id == pj.id {
        return Err(Error::SelfMix(pi.id.clone()));
    }
    if pi.image.shape() != pj.image.shape() {
        return Err(Error::ShapeMismatch {
            left: pi.image.shape().to_vec(),
            right: pj.image.shape().to_vec(),
        });
    }
    let plan = plan_pair(&pi.text, &pj.text, config, tokenizer, rng)?;
    Ok(AugmentedPair {
        pair: ImageTextPair {
            id: format!("{}+{}", pi.id, pj.id),
            image: plan.image.apply(&pi.image, &pj.image)?,
            text: plan.text,
        },
        sources: [pi.id.clone(), pj.id.clone()],
        lambda_used: plan.lambda_used,
        variant: config.variant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{stream, ScriptedRng};
    use crate::types::LambdaPolicy;
    use proptest::prelude::*;

    fn pair(id: &str, value: f32, text: &str) -> ImageTextPair {
        ImageTextPair::new(id, ImageTensor::filled(2, 3, value).unwrap(), TextSequence::new(text))
    }

    fn random_image(h: usize, w: usize, seed: u64) -> ImageTensor {
        let mut rng = stream(seed);
        let data = (0..h * w * 3)
            .map(|_| crate::random::unit_open(&mut rng) as f32)
            .collect();
        ImageTensor::new(h, w, data).unwrap()
    }

    #[test]
    fn mix_identity_and_midpoint() {
        let a = random_image(4, 5, 1);
        let b = random_image(4, 5, 2);
        assert_eq!(mix_images(&a, &b, 1.0).unwrap(), a);
        assert_eq!(mix_images(&a, &b, 0.0).unwrap(), b);

        let zeros = ImageTensor::filled(3, 3, 0.0).unwrap();
        let ones = ImageTensor::filled(3, 3, 1.0).unwrap();
        let mid = mix_images(&zeros, &ones, 0.5).unwrap();
        assert!(mid.data().iter().all(|&v| v == 0.5));

        let p = ImageTensor::filled(1, 1, 0.2).unwrap();
        let q = ImageTensor::filled(1, 1, 0.6).unwrap();
        let r = mix_images(&p, &q, 0.5).unwrap();
        assert!(r.data().iter().all(|&v| (v - 0.4).abs() < 1e-7));
    }

    #[test]
    fn mix_rejects_bad_inputs() {
        let a = ImageTensor::filled(2, 2, 0.0).unwrap();
        let b = ImageTensor::filled(2, 3, 0.0).unwrap();
        assert!(matches!(mix_images(&a, &b, 0.5), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(mix_images(&a, &a, 1.5), Err(Error::InvalidLambda(_))));
        assert!(matches!(mix_images(&a, &a, f32::NAN), Err(Error::InvalidLambda(_))));
    }

    #[test]
    fn concat_examples() {
        let dog = TextSequence::new("a dog");
        let cat = TextSequence::new("a cat");
        let empty = TextSequence::new("");
        assert_eq!(concat_text(&dog, &cat).as_str(), "a dog a cat");
        assert_eq!(concat_text(&empty, &cat).as_str(), "a cat");
        assert_eq!(concat_text(&cat, &empty).as_str(), "a cat");
        assert_eq!(concat_text(&cat, &dog).as_str(), "a cat a dog");
        assert_ne!(concat_text(&cat, &dog), concat_text(&dog, &cat));
    }

    #[test]
    fn subset_counts() {
        let tokens: Vec<u32> = (0..10).collect();
        let out = token_subset(&tokens, 0.5, &mut stream(5));
        assert_eq!(out.len(), 5);
        assert!(out.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(token_subset(&tokens, 1.0, &mut stream(5)), tokens);
        assert!(token_subset::<u32, _>(&[], 0.5, &mut stream(5)).is_empty());
        assert!(token_subset(&tokens, 0.0, &mut stream(5)).is_empty());
    }

    #[test]
    fn subset_min_one_floor_enumerated() {
        // round(0.05 * 3) = 0, floored to one token. The single draw is
        // uniform_below(3); script every word that maps to each outcome.
        let tokens = ["x", "y", "z"];
        let mut seen = std::collections::BTreeSet::new();
        for word in 0..6u64 {
            let out = token_subset(&tokens, 0.05, &mut ScriptedRng::constant(word));
            assert_eq!(out.len(), 1);
            assert!(tokens.contains(&out[0]));
            seen.insert(out[0]);
        }
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn kept_count_rounds_half_up() {
        assert_eq!(kept_token_count(10, 0.5), 5);
        assert_eq!(kept_token_count(5, 0.5), 3);
        assert_eq!(kept_token_count(3, 0.05), 1);
        assert_eq!(kept_token_count(3, 0.0), 0);
        assert_eq!(kept_token_count(0, 0.7), 0);
        assert_eq!(kept_token_count(4, 1.0), 4);
    }

    #[test]
    fn fixed_lambda_is_deterministic() {
        let mut rng = ScriptedRng::constant(9);
        let d = sample_lambda(LambdaPolicy::Fixed(0.5), &mut rng).unwrap();
        assert_eq!(d.value, 0.5);
        assert_eq!(d.source, LambdaSource::Fixed);
        assert_eq!(rng.consumed(), 0);
    }

    #[test]
    fn default_variant_example() {
        let pi = pair("i", 0.0, "a dog");
        let pj = pair("j", 1.0, "a cat");
        let mut rng = ScriptedRng::constant(0);
        let out = make_pair(&pi, &pj, &MixGenConfig::default(), &mut rng).unwrap();
        assert!(out.pair.image.data().iter().all(|&v| v == 0.5));
        assert_eq!(out.pair.text.as_str(), "a dog a cat");
        assert_eq!(out.sources, ["i".to_string(), "j".to_string()]);
        assert_eq!(out.lambda_used, 0.5);
        assert_eq!(rng.consumed(), 0);
    }

    #[test]
    fn variant_b_stub_picks_first_text() {
        let pi = pair("i", 0.0, "a dog");
        let pj = pair("j", 1.0, "a cat");
        let cfg = MixGenConfig::for_variant(Variant::B);
        let out = make_pair(&pi, &pj, &cfg, &mut ScriptedRng::constant(0)).unwrap();
        assert_eq!(out.pair.text, pi.text);
        assert!(out.pair.image.data().iter().all(|&v| v == 0.5));
        let out = make_pair(&pi, &pj, &cfg, &mut ScriptedRng::constant(1)).unwrap();
        assert_eq!(out.pair.text, pj.text);
    }

    #[test]
    fn variant_c_picks_an_image() {
        let pi = pair("i", 0.0, "a dog");
        let pj = pair("j", 1.0, "a cat");
        let cfg = MixGenConfig::for_variant(Variant::C);
        let out = make_pair(&pi, &pj, &cfg, &mut ScriptedRng::constant(0)).unwrap();
        assert_eq!(out.pair.image, pi.image);
        assert_eq!(out.pair.text.as_str(), "a dog a cat");
        assert_eq!(out.lambda_used, PICK_SENTINEL_LAMBDA);
        let out = make_pair(&pi, &pj, &cfg, &mut ScriptedRng::constant(1)).unwrap();
        assert_eq!(out.pair.image, pj.image);
    }

    #[test]
    fn self_mix_and_shape_errors() {
        let pi = pair("i", 0.0, "a");
        assert!(matches!(
            make_pair(&pi, &pi, &MixGenConfig::default(), &mut stream(0)),
            Err(Error::SelfMix(_))
        ));
        let odd = ImageTextPair::new(
            "k",
            ImageTensor::filled(3, 3, 0.0).unwrap(),
            TextSequence::new("b"),
        );
        assert!(matches!(
            make_pair(&pi, &odd, &MixGenConfig::default(), &mut stream(0)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn max_tokens_truncates_after_concat() {
        let pi = pair("i", 0.0, "one two three");
        let pj = pair("j", 1.0, "four five");
        let cfg = MixGenConfig {
            max_tokens: Some(4),
            ..Default::default()
        };
        let out = make_pair(&pi, &pj, &cfg, &mut stream(0)).unwrap();
        assert_eq!(out.pair.text.as_str(), "one two three four");
    }

    #[test]
    fn variant_d_token_counts() {
        let pi = pair("i", 0.0, "t0 t1 t2 t3 t4 t5 t6 t7 t8 t9");
        let pj = pair("j", 1.0, "u0 u1 u2 u3 u4");
        let cfg = MixGenConfig::for_variant(Variant::D);
        let mut rng = stream(77);
        for _ in 0..200 {
            let out = make_pair(&pi, &pj, &cfg, &mut rng).unwrap();
            let lambda = out.lambda_used;
            let tokens = out.pair.text.tokens();
            let left = tokens.iter().filter(|t| t.starts_with('t')).count();
            let right = tokens.iter().filter(|t| t.starts_with('u')).count();
            assert_eq!(left, kept_token_count(10, lambda));
            assert_eq!(right, kept_token_count(5, 1.0 - lambda));
            // Left block precedes right block.
            assert!(tokens[..left].iter().all(|t| t.starts_with('t')));
        }
    }

    proptest! {
        #[test]
        fn mix_is_linear_and_bounded(
            seed_a in any::<u64>(), seed_b in any::<u64>(), lambda in 0.0f32..=1.0
        ) {
            let a = random_image(3, 4, seed_a);
            let b = random_image(3, 4, seed_b);
            let ab = mix_images(&a, &b, lambda).unwrap();
            let ba = mix_images(&b, &a, lambda).unwrap();
            for p in 0..a.data().len() {
                let (x, y) = (a.data()[p], b.data()[p]);
                prop_assert!((ab.data()[p] + ba.data()[p] - (x + y)).abs() <= 1e-6);
                prop_assert!(ab.data()[p] >= x.min(y) && ab.data()[p] <= x.max(y));
            }
        }

        #[test]
        fn subset_is_ordered_subsequence(n in 0usize..40, keep in 0.0f32..=1.0, seed in any::<u64>()) {
            let tokens: Vec<usize> = (0..n).collect();
            let out = token_subset(&tokens, keep, &mut stream(seed));
            prop_assert!(out.windows(2).all(|w| w[0] < w[1]));
            let expected = if n == 0 || keep <= 0.0 {
                0
            } else {
                ((keep as f64 * n as f64 + 0.5).floor() as usize).clamp(1, n)
            };
            prop_assert_eq!(out.len(), expected);
        }

        #[test]
        fn concat_adds_token_counts(a in "[a-z ]{0,30}", b in "[a-z ]{0,30}") {
            let (ta, tb) = (TextSequence::new(&a), TextSequence::new(&b));
            prop_assert_eq!(concat_text(&ta, &tb).token_count(), ta.token_count() + tb.token_count());
        }
    }
}
