//! Labeled preference pairs and their text serialization.

use std::io::{BufRead, Write};

use rand::Rng;

use super::omega::OmegaModel;
use crate::error::{domain, Error, Result};
use crate::rng::{sample_index, stream, Purpose};
use crate::scalar::Real;
use crate::spaces::{FiniteSpaces, PairDistribution, PairLaw, PromptDistribution, RewardTable};

/// Cap on consecutive `y1 = y2` draws before sampling gives up.
pub const PAIR_RETRY_CAP: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PreferencePair {
    pub prompt: usize,
    pub winner: usize,
    pub loser: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreferenceDataset {
    pub pairs: Vec<PreferencePair>,
    /// Name of the law the pairs were drawn from.
    pub sampling_law: String,
    pub seed: u64,
}

impl PreferenceDataset {
    pub fn new(pairs: Vec<PreferencePair>, sampling_law: impl Into<String>, seed: u64) -> Result<Self> {
        if let Some(p) = pairs.iter().find(|p| p.winner == p.loser) {
            return domain(format!(
                "pair at prompt {} compares response {} with itself",
                p.prompt, p.winner
            ));
        }
        let sampling_law = sampling_law.into();
        if sampling_law.is_empty() || sampling_law.contains(char::is_whitespace) {
            return domain("sampling law name must be a nonempty token");
        }
        Ok(PreferenceDataset {
            pairs,
            sampling_law,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn with_law(mut self, name: impl Into<String>) -> Self {
        self.sampling_law = name.into();
        self
    }

    /// Fails when a pair indexes outside `spaces`.
    pub fn check_spaces(&self, spaces: FiniteSpaces) -> Result<()> {
        for p in &self.pairs {
            if p.prompt >= spaces.n_prompts
                || p.winner >= spaces.n_responses
                || p.loser >= spaces.n_responses
            {
                return Err(Error::Shape(format!(
                    "pair ({}, {}, {}) outside {}x{}",
                    p.prompt, p.winner, p.loser, spaces.n_prompts, spaces.n_responses
                )));
            }
        }
        Ok(())
    }

    /// Fraction of comparisons between `a` and `b` at prompt `x` won by `a`.
    pub fn win_rate(&self, x: usize, a: usize, b: usize) -> Option<f64> {
        let (mut wins, mut total) = (0usize, 0usize);
        for p in self.pairs.iter().filter(|p| p.prompt == x) {
            if p.winner == a && p.loser == b {
                wins += 1;
                total += 1;
            } else if p.winner == b && p.loser == a {
                total += 1;
            }
        }
        (total > 0).then(|| wins as f64 / total as f64)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# sampling_law={} seed={}", self.sampling_law, self.seed)?;
        for p in &self.pairs {
            writeln!(out, "{},{},{}", p.prompt, p.winner, p.loser)?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty dataset file".into()))?
            .map_err(|e| Error::Parse(e.to_string()))?;
        let (law, seed) = parse_header(&header)?;
        let mut pairs = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Parse(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::Parse(format!("line {}: bad index '{s}'", i + 2)))
            };
            if fields.len() != 3 {
                return Err(Error::Parse(format!("line {}: expected 3 fields", i + 2)));
            }
            pairs.push(PreferencePair {
                prompt: parse(fields[0])?,
                winner: parse(fields[1])?,
                loser: parse(fields[2])?,
            });
        }
        PreferenceDataset::new(pairs, law, seed)
    }
}

fn parse_header(line: &str) -> Result<(String, u64)> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| Error::Parse("dataset header must start with '#'".into()))?;
    let (mut law, mut seed) = (None, None);
    for token in body.split_whitespace() {
        match token.split_once('=') {
            Some(("sampling_law", v)) => law = Some(v.to_string()),
            Some(("seed", v)) => {
                seed = Some(
                    v.parse::<u64>()
                        .map_err(|_| Error::Parse(format!("bad seed '{v}'")))?,
                )
            }
            _ => return Err(Error::Parse(format!("unexpected header token '{token}'"))),
        }
    }
    match (law, seed) {
        (Some(l), Some(s)) => Ok((l, s)),
        _ => Err(Error::Parse("header needs sampling_law and seed".into())),
    }
}

/// Draws `n` labeled pairs using a stream derived from `seed`.
pub fn sample_preference_dataset<S: Real>(
    sampler: &PairDistribution<S>,
    d: &PromptDistribution<S>,
    omega: &OmegaModel<S>,
    reward: &RewardTable<S>,
    n: usize,
    seed: u64,
) -> Result<PreferenceDataset> {
    let mut rng = stream(seed, 0, Purpose::Dataset);
    let mut data = sample_preference_dataset_with(sampler, d, omega, reward, n, &mut rng)?;
    data.seed = seed;
    Ok(data)
}

/// Same as [`sample_preference_dataset`] with a caller-owned generator.
pub fn sample_preference_dataset_with<S: Real, R: Rng + ?Sized>(
    sampler: &PairDistribution<S>,
    d: &PromptDistribution<S>,
    omega: &OmegaModel<S>,
    reward: &RewardTable<S>,
    n: usize,
    rng: &mut R,
) -> Result<PreferenceDataset> {
    if n == 0 {
        return domain("dataset size must be at least 1");
    }
    let spaces = reward.spaces();
    if sampler.n_prompts() != spaces.n_prompts
        || sampler.n_responses() != spaces.n_responses
        || d.len() != spaces.n_prompts
    {
        return Err(Error::Shape("sampler, prompt distribution and reward disagree".into()));
    }
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let x = sample_index(d.weights(), rng);
        let (y1, y2) = draw_distinct_pair(sampler, x, rng)?;
        let p = omega.eval_in_row(reward.row(x), y1, y2)?.p.as_f64();
        let pair = if rng.random::<f64>() < p {
            PreferencePair {
                prompt: x,
                winner: y1,
                loser: y2,
            }
        } else {
            PreferencePair {
                prompt: x,
                winner: y2,
                loser: y1,
            }
        };
        pairs.push(pair);
    }
    let law = match sampler.law {
        PairLaw::Product(_) => "product",
        PairLaw::Joint(_) => "joint",
    };
    PreferenceDataset::new(pairs, law, 0)
}

/// One `(y1, y2)` draw with `y1 ≠ y2`.
fn draw_distinct_pair<S: Real, R: Rng + ?Sized>(
    sampler: &PairDistribution<S>,
    x: usize,
    rng: &mut R,
) -> Result<(usize, usize)> {
    for _ in 0..PAIR_RETRY_CAP {
        let (y1, y2) = match &sampler.law {
            PairLaw::Product(pi) => (sample_index(pi.row(x), rng), sample_index(pi.row(x), rng)),
            PairLaw::Joint(t) => {
                let k = t[x].cols();
                let idx = sample_index(t[x].as_slice(), rng);
                (idx / k, idx % k)
            }
        };
        if y1 != y2 {
            return Ok((y1, y2));
        }
    }
    domain(format!(
        "sampler for prompt {x} produced {PAIR_RETRY_CAP} identical pairs in a row"
    ))
}
