//! Synthetic corpora with controlled user typology.
//!
//! Users are of type (a) real-only, (b) fake-only or (c) mixed. A type-(c)
//! user's probability of sharing a fake article is drawn from
//! `Beta(c·s, c·(1−s))` with mean `s = type_c_fake_rate` and concentration
//! `c = type_c_concentration`. Per-user activity is Pareto-tailed with a
//! configurable share of one-share users. Articles are picked with
//! Pareto-distributed popularity weights of shape `popularity_tail`, so a
//! smaller shape leaves more articles with few sharers. Follow edges connect users of the
//! same type with probability `homophily`.
//!
//! Texts are `w<index>` tokens. Each token is, with probability
//! `signal_rate`, drawn from a block of words specific to the article's class,
//! otherwise from a Zipf-shaped background shared by both classes.

use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::{Beta, Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::{ArticleRecord, Dataset, FollowRecord, ShareRecord};
use crate::error::{Error, Result};
use crate::graph::Label;
use crate::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UserType {
    A,
    B,
    C,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub users: usize,
    pub frac_b: f64,
    pub frac_c: f64,
    pub fake_articles: usize,
    pub real_articles: usize,
    pub mean_shares: f64,
    /// Pareto shape of the activity distribution (> 1).
    pub activity_tail: f64,
    pub single_share_fraction: f64,
    /// Pareto shape of the per-article popularity weights (> 0).
    pub popularity_tail: f64,
    pub type_c_fake_rate: f64,
    pub type_c_concentration: f64,
    /// Mean number of follow edges per user.
    pub follow_density: f64,
    pub homophily: f64,
    pub vocab_size: usize,
    pub signal_rate: f64,
    pub min_length: usize,
    pub max_length: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::gossipcop_like()
    }
}

impl SynthConfig {
    pub const PRESETS: [&'static str; 3] = ["gossipcop-like", "healthstory-like", "sparse"];

    /// 38 % fake-only and 57.18 % mixed users; mixed users lean real.
    pub fn gossipcop_like() -> Self {
        Self {
            users: 3000,
            frac_b: 0.38,
            frac_c: 0.5718,
            fake_articles: 250,
            real_articles: 750,
            mean_shares: 4.0,
            activity_tail: 2.5,
            single_share_fraction: 0.2,
            popularity_tail: 0.8,
            type_c_fake_rate: 0.12,
            type_c_concentration: 6.0,
            follow_density: 4.0,
            homophily: 0.8,
            vocab_size: 2000,
            signal_rate: 0.06,
            min_length: 30,
            max_length: 60,
        }
    }

    /// 9.96 % fake-only and 74.15 % mixed users; mixed users are balanced.
    pub fn healthstory_like() -> Self {
        Self {
            frac_b: 0.0996,
            frac_c: 0.7415,
            type_c_fake_rate: 0.4,
            ..Self::gossipcop_like()
        }
    }

    /// Low-activity regime with a heavy tail of frequent sharers.
    pub fn sparse() -> Self {
        Self {
            users: 3000,
            fake_articles: 300,
            real_articles: 900,
            mean_shares: 3.0,
            activity_tail: 1.6,
            single_share_fraction: 0.4,
            follow_density: 2.0,
            popularity_tail: 2.0,
            ..Self::gossipcop_like()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "gossipcop-like" => Ok(Self::gossipcop_like()),
            "healthstory-like" => Ok(Self::healthstory_like()),
            "sparse" => Ok(Self::sparse()),
            other => Err(Error::Config(format!(
                "unknown preset {other:?} (expected one of {:?})",
                Self::PRESETS
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.users == 0 || self.fake_articles == 0 || self.real_articles == 0 {
            return bad("user and per-class article counts must be positive".into());
        }
        for (name, p) in [
            ("frac_b", self.frac_b),
            ("frac_c", self.frac_c),
            ("single_share_fraction", self.single_share_fraction),
            ("type_c_fake_rate", self.type_c_fake_rate),
            ("homophily", self.homophily),
            ("signal_rate", self.signal_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if self.frac_b + self.frac_c > 1.0 + 1e-12 {
            return bad("frac_b + frac_c exceeds 1".into());
        }
        if !(self.mean_shares >= 1.0) {
            return bad(format!("mean_shares {} below 1", self.mean_shares));
        }
        if self.mean_shares > (self.fake_articles + self.real_articles) as f64 {
            return bad("mean shares per user exceed the article count".into());
        }
        if !(self.popularity_tail > 0.0) {
            return bad("popularity_tail must be positive".into());
        }
        if !(self.activity_tail > 1.0) || !(self.type_c_concentration > 0.0) || !(self.follow_density >= 0.0) {
            return bad("activity_tail must exceed 1, concentration be positive, follow density nonnegative".into());
        }
        if self.vocab_size < 20 {
            return bad("vocab_size must be at least 20".into());
        }
        if self.min_length == 0 || self.min_length > self.max_length {
            return bad("text lengths must satisfy 0 < min_length ≤ max_length".into());
        }
        if self.frac_c > 0.0 && self.fake_articles + self.real_articles < 2 {
            return bad("mixed users need both classes".into());
        }
        Ok(())
    }

    pub fn type_counts(&self) -> (usize, usize, usize) {
        let b = (self.frac_b * self.users as f64).round() as usize;
        let c = ((self.frac_c * self.users as f64).round() as usize).min(self.users - b);
        (self.users - b - c, b, c)
    }
}

/// Generated records plus the ground-truth user types.
#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub user_types: Vec<(String, UserType)>,
}

fn user_id(i: usize) -> String {
    format!("u{i:05}")
}

fn word(i: usize) -> String {
    format!("w{i:04}")
}

/// Deterministic corpus for `config` and `seed`.
pub fn synth_generate(config: &SynthConfig, seed: u64) -> Result<SynthOutput> {
    config.validate()?;
    let n_articles = config.fake_articles + config.real_articles;

    // labels shuffled over ids so id order carries no class information
    let mut labels: Vec<Label> = (0..n_articles)
        .map(|i| if i < config.fake_articles { Label::Fake } else { Label::Real })
        .collect();
    labels.shuffle(&mut rng::derive(seed, "synth-labels"));
    let fake_ids: Vec<usize> = (0..n_articles).filter(|&i| labels[i].is_fake()).collect();
    let real_ids: Vec<usize> = (0..n_articles).filter(|&i| !labels[i].is_fake()).collect();

    let articles = texts(config, &labels, &mut rng::derive(seed, "synth-text"));

    let (na, nb, nc) = config.type_counts();
    let mut types: Vec<UserType> = std::iter::repeat_n(UserType::A, na)
        .chain(std::iter::repeat_n(UserType::B, nb))
        .chain(std::iter::repeat_n(UserType::C, nc))
        .collect();
    let mut rng = rng::derive(seed, "synth-shares");
    types.shuffle(&mut rng);

    let x_min = config.mean_shares * (config.activity_tail - 1.0) / config.activity_tail;
    let fake_lean = Beta::new(
        config.type_c_concentration * config.type_c_fake_rate.max(1e-6),
        config.type_c_concentration * (1.0 - config.type_c_fake_rate).max(1e-6),
    )
    .map_err(|e| Error::Validation(format!("type-c skew: {e}")))?;

    let mut pop_rng = rng::derive(seed, "synth-popularity");
    let popularity: Vec<f64> = (0..n_articles)
        .map(|_| pop_rng.random::<f64>().max(1e-12).powf(-1.0 / config.popularity_tail))
        .collect();

    let mut shares = Vec::new();
    for (u, &t) in types.iter().enumerate() {
        let mut k = if rng.random::<f64>() < config.single_share_fraction {
            1
        } else {
            let p: f64 = rng.random::<f64>().max(1e-12);
            (x_min * p.powf(-1.0 / config.activity_tail)).ceil().max(1.0) as usize
        };
        let (n_fake, n_real) = match t {
            UserType::A => (0, k.min(real_ids.len())),
            UserType::B => (k.min(fake_ids.len()), 0),
            UserType::C => {
                k = k.max(2);
                let lean = fake_lean.sample(&mut rng);
                let f = Binomial::new(k as u64, lean)
                    .map_err(|e| Error::Validation(format!("binomial: {e}")))?
                    .sample(&mut rng) as usize;
                let f = f.clamp(1, k - 1);
                (f.min(fake_ids.len()), (k - f).min(real_ids.len()))
            }
        };
        for (pool, n) in [(&fake_ids, n_fake), (&real_ids, n_real)] {
            let picked = index::sample_weighted(&mut rng, pool.len(), |j| popularity[pool[j]], n)
                .map_err(|e| Error::Validation(format!("popularity weights: {e}")))?;
            for j in picked.into_vec() {
                shares.push(ShareRecord {
                    user_id: user_id(u),
                    article_id: article_id(pool[j]),
                });
            }
        }
    }

    let mut rng = rng::derive(seed, "synth-follows");
    let by_type: Vec<Vec<usize>> = [UserType::A, UserType::B, UserType::C]
        .iter()
        .map(|ty| (0..types.len()).filter(|&u| types[u] == *ty).collect())
        .collect();
    let target = (config.follow_density * config.users as f64 / 2.0).round() as usize;
    let mut follows = BTreeSet::new();
    let mut attempts = 0;
    while follows.len() < target && attempts < 20 * target + 100 && config.users > 1 {
        attempts += 1;
        let u = rng.random_range(0..config.users);
        let same = &by_type[types[u] as usize];
        let v = if rng.random::<f64>() < config.homophily && same.len() > 1 {
            same[rng.random_range(0..same.len())]
        } else {
            rng.random_range(0..config.users)
        };
        if let Some(f) = FollowRecord::new(&user_id(u), &user_id(v)) {
            follows.insert(f);
        }
    }

    let dataset = Dataset {
        articles,
        shares,
        follows: follows.into_iter().collect(),
    }
    .normalize()?;
    Ok(SynthOutput {
        dataset,
        user_types: types.iter().enumerate().map(|(u, &t)| (user_id(u), t)).collect(),
    })
}

fn article_id(i: usize) -> String {
    format!("n{i:05}")
}

fn texts(config: &SynthConfig, labels: &[Label], rng: &mut Rng) -> Vec<ArticleRecord> {
    let v = config.vocab_size;
    let block = (v / 20).max(1);
    // background: Zipf over the words after the two signal blocks
    let background: Vec<usize> = (2 * block..v).collect();
    let weights: Vec<f64> = (1..=background.len()).map(|r| 1.0 / r as f64).collect();
    let total: f64 = weights.iter().sum();
    let cdf: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w / total;
            Some(*acc)
        })
        .collect();
    labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let len = rng.random_range(config.min_length..=config.max_length);
            let offset = if label.is_fake() { 0 } else { block };
            let words: Vec<String> = (0..len)
                .map(|_| {
                    if rng.random::<f64>() < config.signal_rate {
                        word(offset + rng.random_range(0..block))
                    } else {
                        let p: f64 = rng.random();
                        let j = cdf.partition_point(|&c| c < p).min(background.len() - 1);
                        word(background[j])
                    }
                })
                .collect();
            ArticleRecord {
                article_id: article_id(i),
                label,
                text: words.join(" "),
            }
        })
        .collect()
}
