//! Shared data model: images, captions, pairs, batches and the mixing configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every image carries three interleaved channels.
pub const CHANNELS: usize = 3;

/// Decoded image, HWC row-major, every sample a normalized intensity in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {height}x{width}"
            )));
        }
        let expected = height * width * CHANNELS;
        if data.len() != expected {
            return Err(Error::InvalidImage(format!(
                "expected {expected} samples for {height}x{width}x{CHANNELS}, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidImage(format!(
                "sample {pos} = {} is outside [0, 1]",
                data[pos]
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(height, width, vec![value; height * width * CHANNELS])
    }

    /// Caller guarantees the length and range invariants.
    pub(crate) fn from_trusted(height: usize, width: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), height * width * CHANNELS);
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        CHANNELS
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.height, self.width, CHANNELS]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}

/// Splits text into tokens and joins tokens back into text.
pub trait Tokenizer: Send + Sync {
    fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str>;

    fn join(&self, tokens: &[&str]) -> String {
        tokens.join(" ")
    }
}

/// Splits on runs of whitespace.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str> {
        text.split_whitespace().collect()
    }
}

/// A normalized caption: no leading or trailing whitespace, inner runs collapsed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub struct TextSequence {
    raw: String,
}

impl TextSequence {
    pub fn new(raw: &str) -> Self {
        normalize_text(raw)
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn tokens(&self) -> Vec<&str> {
        WhitespaceTokenizer.tokenize(&self.raw)
    }

    pub fn token_count(&self) -> usize {
        self.raw.split_whitespace().count()
    }

    /// Joins tokens with single spaces. Tokens must not contain whitespace.
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Self {
        let mut raw = String::new();
        for t in tokens {
            let t = t.as_ref();
            if t.is_empty() {
                continue;
            }
            if !raw.is_empty() {
                raw.push(' ');
            }
            raw.push_str(t);
        }
        Self { raw }
    }
}

impl From<String> for TextSequence {
    fn from(s: String) -> Self {
        normalize_text(&s)
    }
}

impl From<TextSequence> for String {
    fn from(t: TextSequence) -> Self {
        t.raw
    }
}

impl fmt::Display for TextSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

/// Collapses whitespace runs to single spaces and trims both ends.
pub fn normalize_text(raw: &str) -> TextSequence {
    let mut out = String::with_capacity(raw.len());
    for token in raw.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(token);
    }
    TextSequence { raw: out }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageTextPair {
    pub id: String,
    pub image: ImageTensor,
    pub text: TextSequence,
}

impl ImageTextPair {
    pub fn new(id: impl Into<String>, image: ImageTensor, text: TextSequence) -> Self {
        Self {
            id: id.into(),
            image,
            text,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Fixed-lambda image mix, full text concatenation.
    #[default]
    Default,
    /// Beta-sampled lambda, full text concatenation.
    A,
    /// Image mix, one of the two texts picked uniformly.
    B,
    /// One of the two images picked uniformly, full text concatenation.
    C,
    /// Image mix, lambda-proportional token subsets of each text.
    D,
    /// Image mix, half of the concatenated tokens kept.
    E,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Default,
        Variant::A,
        Variant::B,
        Variant::C,
        Variant::D,
        Variant::E,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Default => "default",
            Variant::A => "a",
            Variant::B => "b",
            Variant::C => "c",
            Variant::D => "d",
            Variant::E => "e",
        }
    }

    /// The lambda policy listed for this variant in the variants table.
    pub fn table_lambda_policy(self) -> LambdaPolicy {
        match self {
            Variant::A | Variant::D | Variant::E => LambdaPolicy::MIXUP_BETA,
            Variant::Default | Variant::B | Variant::C => LambdaPolicy::DEFAULT,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "default" => Ok(Variant::Default),
            "a" => Ok(Variant::A),
            "b" => Ok(Variant::B),
            "c" => Ok(Variant::C),
            "d" => Ok(Variant::D),
            "e" => Ok(Variant::E),
            other => Err(format!("unknown variant {other:?} (expected default|a|b|c|d|e)")),
        }
    }
}

/// A generated pair plus where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPair {
    pub pair: ImageTextPair,
    pub sources: [String; 2],
    pub lambda_used: f32,
    pub variant: Variant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pairs: Vec<ImageTextPair>,
}

impl Batch {
    pub fn new(pairs: Vec<ImageTextPair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        Ok(Self { pairs })
    }

    pub fn size(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[ImageTextPair] {
        &self.pairs
    }

    pub fn into_pairs(self) -> Vec<ImageTextPair> {
        self.pairs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaPolicy {
    Fixed(f32),
    Beta { alpha: f64, beta: f64 },
}

impl LambdaPolicy {
    pub const DEFAULT: LambdaPolicy = LambdaPolicy::Fixed(0.5);
    pub const MIXUP_BETA: LambdaPolicy = LambdaPolicy::Beta {
        alpha: 0.1,
        beta: 0.1,
    };

    pub fn validate(self) -> Result<Self> {
        match self {
            LambdaPolicy::Fixed(v) if !(0.0..=1.0).contains(&v) => {
                Err(Error::InvalidLambda(f64::from(v)))
            }
            LambdaPolicy::Beta { alpha, beta }
                if !(alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0) =>
            {
                Err(Error::InvalidBetaParams { alpha, beta })
            }
            ok => Ok(ok),
        }
    }
}

/// How many entries of a batch get replaced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MPolicy {
    Fraction(f64),
    Absolute(usize),
}

impl MPolicy {
    pub const DEFAULT: MPolicy = MPolicy::Fraction(0.25);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixGenConfig {
    pub lambda_policy: LambdaPolicy,
    pub m_policy: MPolicy,
    pub variant: Variant,
    pub seed: u64,
    pub target_height: usize,
    pub target_width: usize,
    pub max_tokens: Option<usize>,
}

impl Default for MixGenConfig {
    fn default() -> Self {
        Self {
            lambda_policy: LambdaPolicy::DEFAULT,
            m_policy: MPolicy::DEFAULT,
            variant: Variant::Default,
            seed: 0,
            target_height: 256,
            target_width: 256,
            max_tokens: None,
        }
    }
}

impl MixGenConfig {
    /// Defaults with the variant's own lambda policy from the variants table.
    pub fn for_variant(variant: Variant) -> Self {
        Self {
            lambda_policy: variant.table_lambda_policy(),
            variant,
            ..Self::default()
        }
    }

    pub fn validate(self) -> Result<Self> {
        validate_config(self)
    }
}

pub fn validate_config(config: MixGenConfig) -> Result<MixGenConfig> {
    config.lambda_policy.validate()?;
    if let MPolicy::Fraction(f) = config.m_policy {
        if !(0.0..=0.5).contains(&f) {
            return Err(Error::InvalidMRatio(f));
        }
    }
    if config.target_height == 0 || config.target_width == 0 {
        return Err(Error::InvalidConfig(format!(
            "resize target must be positive, got {}x{}",
            config.target_height, config.target_width
        )));
    }
    if config.max_tokens == Some(0) {
        return Err(Error::InvalidConfig("max_tokens must be positive".into()));
    }
    Ok(config)
}
