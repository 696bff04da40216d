//! Prompt rendering for the four protocols and the multi-emotion variant.
//!
//! Wording lives in `templates/` so any change to a prompt shows up in a diff.
//! Each rendered prompt is a [`PromptBundle`]: a fixed role sentence and a user
//! message made of the task, the scale (rating protocols only), the format
//! instruction, the labeled texts and a format example.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::design::Protocol;

const ROLE: &str = include_str!("../templates/role.txt");
const RATING: &str = include_str!("../templates/rating.txt");
const COMPARISON: &str = include_str!("../templates/comparison.txt");
const SCALES: &str = include_str!("../templates/scales.txt");
const ADAPTED_RATING: &str = include_str!("../templates/adapted_rating.txt");
const ADAPTED_COMPARISON: &str = include_str!("../templates/adapted_comparison.txt");

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("{protocol} prompts take {expected} texts, got {got}")]
    TextCount {
        protocol: Protocol,
        expected: String,
        got: usize,
    },
    #[error("invalid rating scale: {0}")]
    Scale(String),
    #[error("{0} prompts require a rating scale")]
    MissingScale(Protocol),
    #[error("{0} prompts do not use a rating scale")]
    UnexpectedScale(Protocol),
    #[error("the multi-emotion variant needs exactly 6 dimensions, got {0}")]
    DimensionCount(usize),
    #[error("the multi-emotion variant is not defined for {0}")]
    UnsupportedVariant(Protocol),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptionLevel {
    Bare,
    Outlined,
    Descriptive,
}

/// A rating scale variant such as `D-10` or `B-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RatingScaleSpec {
    pub level: DescriptionLevel,
    pub max_value: u32,
    pub decimals: bool,
}

impl RatingScaleSpec {
    pub fn new(level: DescriptionLevel, max_value: u32) -> Result<Self, PromptError> {
        if ![1, 4, 10, 100].contains(&max_value) {
            return Err(PromptError::Scale(format!(
                "scale maximum must be one of 1, 4, 10, 100; got {max_value}"
            )));
        }
        if level == DescriptionLevel::Descriptive && !matches!(max_value, 4 | 10) {
            return Err(PromptError::Scale(format!(
                "descriptive scales exist only for 0-4 and 0-10, not 0-{max_value}"
            )));
        }
        Ok(RatingScaleSpec {
            level,
            max_value,
            decimals: max_value == 1,
        })
    }

    /// Every variant used in the experiments, in table order.
    pub fn all_variants() -> Vec<RatingScaleSpec> {
        ["B-1", "OL-1", "B-10", "OL-10", "D-4", "D-10", "B-100", "OL-100"]
            .iter()
            .map(|s| s.parse().expect("known variant"))
            .collect()
    }

    /// Rounds a value onto the scale's answer granularity.
    pub fn quantize(&self, value: f64) -> f64 {
        let v = value.clamp(0.0, self.max_value as f64);
        if self.decimals {
            round4(v)
        } else {
            v.round()
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        (0.0..=self.max_value as f64).contains(&value)
    }
}

pub(crate) fn round4(v: f64) -> f64 {
    (v * 10_000.0).round() / 10_000.0
}

impl fmt::Display for RatingScaleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.level {
            DescriptionLevel::Bare => "B",
            DescriptionLevel::Outlined => "OL",
            DescriptionLevel::Descriptive => "D",
        };
        write!(f, "{prefix}-{}", self.max_value)
    }
}

impl FromStr for RatingScaleSpec {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (prefix, max) = s
            .split_once('-')
            .ok_or_else(|| PromptError::Scale(format!("expected LEVEL-MAX, got `{s}`")))?;
        let level = match prefix.to_ascii_uppercase().as_str() {
            "B" => DescriptionLevel::Bare,
            "OL" => DescriptionLevel::Outlined,
            "D" => DescriptionLevel::Descriptive,
            other => return Err(PromptError::Scale(format!("unknown description level `{other}`"))),
        };
        let max_value = max
            .parse()
            .map_err(|_| PromptError::Scale(format!("bad scale maximum `{max}`")))?;
        RatingScaleSpec::new(level, max_value)
    }
}

impl Serialize for RatingScaleSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RatingScaleSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub role_text: String,
    pub user_text: String,
    pub protocol: Protocol,
    pub tuple_ids: Vec<String>,
    pub texts: Vec<String>,
    pub scale: Option<RatingScaleSpec>,
    pub dimensions: Vec<String>,
}

impl PromptBundle {
    pub fn is_multi_dimension(&self) -> bool {
        self.dimensions.len() > 1
    }

    /// Role sentence as the first line, for backends without a system channel.
    pub fn inline_text(&self) -> String {
        format!("{}\n{}", self.role_text, self.user_text)
    }

    /// Hex SHA-256 over role and user text.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.role_text.as_bytes());
        h.update([0u8]);
        h.update(self.user_text.as_bytes());
        hex::encode(h.finalize())
    }
}

/// Drops `## ` comment lines and the trailing newline of a template resource.
fn template_body(raw: &str) -> String {
    raw.lines()
        .filter(|l| !l.starts_with("## "))
        .collect::<Vec<_>>()
        .join("\n")
}

fn scale_section(name: &str) -> Vec<&'static str> {
    let marker = format!("[{name}]");
    SCALES
        .lines()
        .skip_while(|l| *l != marker)
        .skip(1)
        .take_while(|l| !l.starts_with('['))
        .collect()
}

/// Renders the scale block with `{emo}` substituted.
pub fn render_scale(scale: &RatingScaleSpec, emo: &str) -> String {
    let mut lines: Vec<&str> = scale_section("header");
    if scale.decimals {
        lines.extend(scale_section("rounding"));
    }
    let body = match scale.level {
        DescriptionLevel::Bare => scale_section("B"),
        DescriptionLevel::Outlined => scale_section("OL"),
        DescriptionLevel::Descriptive => scale_section(&scale.to_string()),
    };
    lines.extend(body);
    lines
        .join("\n")
        .replace("{max}", &scale.max_value.to_string())
        .replace("{emo}", emo)
}

fn check_count(protocol: Protocol, got: usize) -> Result<(), PromptError> {
    let ok = match protocol {
        Protocol::Rs => got == 1,
        // the final batch of a four-text design can be short
        Protocol::RsT => (1..=4).contains(&got),
        Protocol::Pc => got == 2,
        Protocol::Bws => got == 4,
    };
    if ok {
        Ok(())
    } else {
        let expected = match protocol {
            Protocol::RsT => "1 to 4".to_string(),
            p => p.tuple_size().to_string(),
        };
        Err(PromptError::TextCount {
            protocol,
            expected,
            got,
        })
    }
}

fn texts_block(protocol: Protocol, texts: &[(String, String)]) -> String {
    match protocol {
        Protocol::Rs => format!("Text: {}", texts[0].1),
        Protocol::RsT => texts
            .iter()
            .enumerate()
            .map(|(i, (_, t))| format!("Text {}: {t}", i + 1))
            .collect::<Vec<_>>()
            .join("\n"),
        Protocol::Pc | Protocol::Bws => texts
            .iter()
            .enumerate()
            .map(|(i, (_, t))| format!("Speaker {}: {t}", i + 1))
            .collect::<Vec<_>>()
            .join("\n"),
    }
}

fn bundle(
    protocol: Protocol,
    texts: &[(String, String)],
    user_text: String,
    scale: Option<RatingScaleSpec>,
    dimensions: Vec<String>,
) -> PromptBundle {
    PromptBundle {
        role_text: template_body(ROLE),
        user_text,
        protocol,
        tuple_ids: texts.iter().map(|(id, _)| id.clone()).collect(),
        texts: texts.iter().map(|(_, t)| t.clone()).collect(),
        scale,
        dimensions,
    }
}

/// Renders a single-dimension prompt. `texts` are `(id, text)` pairs in display order.
pub fn render_prompt(
    protocol: Protocol,
    texts: &[(String, String)],
    dimension: &str,
    scale: Option<RatingScaleSpec>,
) -> Result<PromptBundle, PromptError> {
    check_count(protocol, texts.len())?;
    let emo = dimension.to_lowercase();
    let user_text = match (protocol, scale) {
        (Protocol::Rs | Protocol::RsT, Some(scale)) => template_body(RATING)
            .replace("{emo}", &emo)
            .replace("{scale}", &render_scale(&scale, &emo))
            .replace("{texts}", &texts_block(protocol, texts)),
        (Protocol::Rs | Protocol::RsT, None) => return Err(PromptError::MissingScale(protocol)),
        (Protocol::Pc | Protocol::Bws, None) => {
            let count = if protocol == Protocol::Pc { "two" } else { "four" };
            template_body(COMPARISON)
                .replace("{count}", count)
                .replace("{emo}", &emo)
                .replace("{texts}", &texts_block(protocol, texts))
        }
        (Protocol::Pc | Protocol::Bws, Some(_)) => return Err(PromptError::UnexpectedScale(protocol)),
    };
    Ok(bundle(protocol, texts, user_text, scale, vec![emo]))
}

/// Renders one prompt that asks for all six dimensions at once.
pub fn render_adapted_multiemotion(
    texts: &[(String, String)],
    dimensions: &[String],
    scale: Option<RatingScaleSpec>,
    protocol: Protocol,
) -> Result<PromptBundle, PromptError> {
    if dimensions.len() != 6 {
        return Err(PromptError::DimensionCount(dimensions.len()));
    }
    check_count(protocol, texts.len())?;
    let emos: Vec<String> = dimensions.iter().map(|d| d.to_lowercase()).collect();
    let listed = emos.join(", ");
    let user_text = match protocol {
        Protocol::RsT => {
            let scale = scale.ok_or(PromptError::MissingScale(protocol))?;
            let format = emos
                .iter()
                .flat_map(|emo| {
                    (1..=texts.len()).map(move |i| format!("Text {i} {emo} intensity:"))
                })
                .collect::<Vec<_>>()
                .join("\n");
            template_body(ADAPTED_RATING)
                .replace("{emos}", &listed)
                .replace("{format}", &format)
                .replace("{scale}", &render_scale(&scale, "emotion"))
                .replace("{texts}", &texts_block(protocol, texts))
        }
        Protocol::Bws => {
            if scale.is_some() {
                return Err(PromptError::UnexpectedScale(protocol));
            }
            let format = emos
                .iter()
                .map(|emo| format!("Most {emo} Speaker:\nLeast {emo} Speaker:"))
                .collect::<Vec<_>>()
                .join("\n");
            template_body(ADAPTED_COMPARISON)
                .replace("{emos}", &listed)
                .replace("{format}", &format)
                .replace("{texts}", &texts_block(protocol, texts))
        }
        other => return Err(PromptError::UnsupportedVariant(other)),
    };
    Ok(bundle(protocol, texts, user_text, scale, emos))
}
