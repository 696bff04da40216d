use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Annotator, BackendError, Completion, Request};
use crate::design::{mix_seed, Protocol};
use crate::prompting::{PromptBundle, RatingScaleSpec};

/// Settings for the seeded stand-in annotator.
///
/// Each request perceives every text as its latent score plus Gaussian noise
/// and answers from those perceived scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatedAnnotatorConfig {
    /// id → latent score in [0, 1].
    #[serde(default)]
    pub latent_scores: BTreeMap<String, f64>,
    /// dimension → id → latent score, consulted first for multi-dimension prompts.
    #[serde(default)]
    pub dimension_latents: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Probability that an attempt yields an unusable answer.
    #[serde(default)]
    pub malformed_rate: f64,
    /// The first this-many attempts of every prompt are unusable.
    #[serde(default)]
    pub forced_bad_attempts: u32,
    /// Ignore latents and perceive uniform random scores.
    #[serde(default)]
    pub uniform_random: bool,
}

impl SimulatedAnnotatorConfig {
    /// Noise-free, never malformed.
    pub fn perfect(latent_scores: BTreeMap<String, f64>) -> Self {
        SimulatedAnnotatorConfig {
            latent_scores,
            dimension_latents: BTreeMap::new(),
            noise_sigma: 0.0,
            seed: 0,
            malformed_rate: 0.0,
            forced_bad_attempts: 0,
            uniform_random: false,
        }
    }

    pub fn with_noise(mut self, sigma: f64, seed: u64) -> Self {
        self.noise_sigma = sigma;
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(BackendError::Config(format!(
                "noise_sigma must be ≥ 0, got {}",
                self.noise_sigma
            )));
        }
        if !(0.0..1.0).contains(&self.malformed_rate) {
            return Err(BackendError::Config(format!(
                "malformed_rate must be in [0, 1), got {}",
                self.malformed_rate
            )));
        }
        let all = self
            .latent_scores
            .iter()
            .chain(self.dimension_latents.values().flatten());
        for (id, &v) in all {
            if !(0.0..=1.0).contains(&v) {
                return Err(BackendError::Config(format!(
                    "latent score for `{id}` outside [0, 1]: {v}"
                )));
            }
        }
        Ok(())
    }
}

pub struct SimulatedAnnotator {
    cfg: SimulatedAnnotatorConfig,
    noise: Normal<f64>,
}

impl SimulatedAnnotator {
    pub fn new(cfg: SimulatedAnnotatorConfig) -> Result<Self, BackendError> {
        cfg.validate()?;
        let noise = Normal::new(0.0, cfg.noise_sigma)
            .map_err(|e| BackendError::Config(format!("noise_sigma: {e}")))?;
        Ok(SimulatedAnnotator { cfg, noise })
    }

    pub fn config(&self) -> &SimulatedAnnotatorConfig {
        &self.cfg
    }

    fn latent(&self, dimension: &str, id: &str) -> Result<f64, BackendError> {
        self.cfg
            .dimension_latents
            .get(dimension)
            .and_then(|m| m.get(id))
            .or_else(|| self.cfg.latent_scores.get(id))
            .copied()
            .ok_or_else(|| BackendError::Config(format!("simulator has no latent score for `{id}`")))
    }

    fn perceive(
        &self,
        prompt: &PromptBundle,
        dimension: &str,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>, BackendError> {
        prompt
            .tuple_ids
            .iter()
            .map(|id| {
                if self.cfg.uniform_random {
                    return Ok(rng.random::<f64>());
                }
                let latent = self.latent(dimension, id)?;
                if self.cfg.noise_sigma > 0.0 {
                    Ok(latent + self.noise.sample(rng))
                } else {
                    Ok(latent)
                }
            })
            .collect()
    }
}

/// Index of the first maximum and of the last minimum, so a constant row
/// still yields two different positions.
fn extremes(values: &[f64]) -> (usize, usize) {
    let mut best = 0;
    let mut worst = values.len() - 1;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    for (i, &v) in values.iter().enumerate().rev() {
        if v < values[worst] {
            worst = i;
        }
    }
    (best, worst)
}

fn format_value(scale: &RatingScaleSpec, perceived: f64) -> String {
    let v = scale.quantize(perceived * scale.max_value as f64);
    format!("{v}")
}

fn malformed(prompt: &PromptBundle) -> String {
    match prompt.protocol {
        Protocol::Pc | Protocol::Bws => {
            let emo = &prompt.dimensions[0];
            format!("Most {emo} Speaker: 2\nLeast {emo} Speaker: 2")
        }
        Protocol::Rs | Protocol::RsT => {
            "I'm sorry, I can't assign a number to how someone feels from a single post.".into()
        }
    }
}

impl Annotator for SimulatedAnnotator {
    fn id(&self) -> String {
        "simulated".into()
    }

    fn complete(&self, request: Request<'_>) -> Result<Completion, BackendError> {
        let prompt = request.prompt;
        let stream = mix_seed(self.cfg.seed, request.tuple_index as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(stream, request.attempt as u64));
        let unlucky = rng.random::<f64>() < self.cfg.malformed_rate;
        if unlucky || request.attempt <= self.cfg.forced_bad_attempts {
            return Ok(Completion::live(malformed(prompt)));
        }

        let multi = prompt.is_multi_dimension();
        let mut lines = Vec::new();
        for dim in &prompt.dimensions {
            let perceived = self.perceive(prompt, dim, &mut rng)?;
            match prompt.protocol {
                Protocol::Pc | Protocol::Bws => {
                    let (best, worst) = extremes(&perceived);
                    lines.push(format!("Most {dim} Speaker: {}", best + 1));
                    lines.push(format!("Least {dim} Speaker: {}", worst + 1));
                }
                Protocol::Rs | Protocol::RsT => {
                    let scale = prompt.scale.as_ref().ok_or_else(|| {
                        BackendError::Config("rating prompt without a scale".into())
                    })?;
                    for (i, &p) in perceived.iter().enumerate() {
                        let v = format_value(scale, p);
                        lines.push(match (prompt.protocol, multi) {
                            (Protocol::Rs, false) => format!("{dim} intensity: {v}"),
                            (_, false) => format!("Text {}: {v}", i + 1),
                            (_, true) => format!("Text {} {dim} intensity: {v}", i + 1),
                        });
                    }
                }
            }
        }
        Ok(Completion::live(lines.join("\n")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parsing::{parse_response, Judgment};
    use crate::prompting::{render_adapted_multiemotion, render_prompt};

    fn latents() -> BTreeMap<String, f64> {
        [("a", 0.9), ("b", 0.5), ("c", 0.3), ("d", 0.1)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }

    fn texts(ids: &[&str]) -> Vec<(String, String)> {
        ids.iter().map(|id| (id.to_string(), format!("post {id}"))).collect()
    }

    fn ask(sim: &SimulatedAnnotator, prompt: &PromptBundle, attempt: u32) -> String {
        sim.complete(Request {
            prompt,
            tuple_index: 0,
            attempt,
        })
        .unwrap()
        .text
    }

    #[test]
    fn perfect_best_worst() {
        let sim = SimulatedAnnotator::new(SimulatedAnnotatorConfig::perfect(latents())).unwrap();
        let p = render_prompt(Protocol::Bws, &texts(&["c", "a", "d", "b"]), "joy", None).unwrap();
        let answer = ask(&sim, &p, 1);
        assert_eq!(answer, "Most joy Speaker: 2\nLeast joy Speaker: 3");
        assert_eq!(parse_response(&p, &answer).unwrap(), Judgment::best_worst("a", "d"));
    }

    #[test]
    fn perfect_ratings_follow_scale() {
        let sim = SimulatedAnnotator::new(SimulatedAnnotatorConfig::perfect(latents())).unwrap();
        let d10 = "D-10".parse().unwrap();
        let p = render_prompt(Protocol::Rs, &texts(&["a"]), "joy", Some(d10)).unwrap();
        assert_eq!(ask(&sim, &p, 1), "joy intensity: 9");
        let b1 = "B-1".parse().unwrap();
        let p = render_prompt(Protocol::RsT, &texts(&["a", "b", "c", "d"]), "joy", Some(b1)).unwrap();
        let answer = ask(&sim, &p, 1);
        assert_eq!(answer, "Text 1: 0.9\nText 2: 0.5\nText 3: 0.3\nText 4: 0.1");
        assert_eq!(
            parse_response(&p, &answer).unwrap(),
            Judgment::ratings([("a", 0.9), ("b", 0.5), ("c", 0.3), ("d", 0.1)])
        );
    }

    #[test]
    fn forced_bad_attempts_are_unacceptable() {
        let mut cfg = SimulatedAnnotatorConfig::perfect(latents());
        cfg.forced_bad_attempts = 1;
        let sim = SimulatedAnnotator::new(cfg).unwrap();
        let p = render_prompt(Protocol::Bws, &texts(&["a", "b", "c", "d"]), "joy", None).unwrap();
        assert!(parse_response(&p, &ask(&sim, &p, 1)).is_err());
        assert!(parse_response(&p, &ask(&sim, &p, 2)).is_ok());
    }

    #[test]
    fn noise_is_keyed_by_request() {
        let cfg = SimulatedAnnotatorConfig::perfect(latents()).with_noise(0.5, 7);
        let sim = SimulatedAnnotator::new(cfg).unwrap();
        let b1 = "B-1".parse().unwrap();
        let p = render_prompt(Protocol::RsT, &texts(&["a", "b", "c", "d"]), "joy", Some(b1)).unwrap();
        assert_eq!(ask(&sim, &p, 1), ask(&sim, &p, 1));
        assert_ne!(ask(&sim, &p, 1), ask(&sim, &p, 2));
    }

    #[test]
    fn multi_dimension_answers_parse() {
        let dims: Vec<String> = ["anger", "fear", "joy", "sadness", "disgust", "surprise"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut cfg = SimulatedAnnotatorConfig::perfect(latents());
        let mut reversed = latents();
        for v in reversed.values_mut() {
            *v = 1.0 - *v;
        }
        cfg.dimension_latents.insert("fear".into(), reversed);
        let sim = SimulatedAnnotator::new(cfg).unwrap();
        let p = render_adapted_multiemotion(&texts(&["a", "b", "c", "d"]), &dims, None, Protocol::Bws)
            .unwrap();
        let j = parse_response(&p, &ask(&sim, &p, 1)).unwrap();
        assert_eq!(j.for_dimension("joy"), Some(&Judgment::best_worst("a", "d")));
        assert_eq!(j.for_dimension("fear"), Some(&Judgment::best_worst("d", "a")));

        let b10 = "B-10".parse().unwrap();
        let p = render_adapted_multiemotion(&texts(&["a", "b"]), &dims, Some(b10), Protocol::RsT)
            .unwrap();
        let j = parse_response(&p, &ask(&sim, &p, 1)).unwrap();
        assert_eq!(j.for_dimension("fear"), Some(&Judgment::ratings([("a", 1.0), ("b", 5.0)])));
    }

    #[test]
    fn missing_latent_and_bad_settings() {
        let sim = SimulatedAnnotator::new(SimulatedAnnotatorConfig::perfect(latents())).unwrap();
        let p = render_prompt(Protocol::Pc, &texts(&["a", "zz"]), "joy", None).unwrap();
        let err = sim
            .complete(Request {
                prompt: &p,
                tuple_index: 0,
                attempt: 1,
            })
            .unwrap_err();
        assert!(matches!(err, BackendError::Config(_)));

        let mut cfg = SimulatedAnnotatorConfig::perfect(latents());
        cfg.malformed_rate = 1.0;
        assert!(SimulatedAnnotator::new(cfg).is_err());
        let mut cfg = SimulatedAnnotatorConfig::perfect(latents());
        cfg.latent_scores.insert("x".into(), 1.5);
        assert!(SimulatedAnnotator::new(cfg).is_err());
    }

    #[test]
    fn extremes_on_ties() {
        assert_eq!(extremes(&[0.5, 0.5]), (0, 1));
        assert_eq!(extremes(&[0.1, 0.9, 0.9, 0.1]), (1, 3));
    }
}
