//! Dialogue worlds with known latent causal graphs.
//!
//! Every utterance `u_i` has a latent value `z_i` from a small finite domain.
//! Responses sit at odd indices and seekers at even indices. The neighborhood
//! of each response is drawn from four templates:
//!
//! - [`Template::SingleParent`]: `z_{t-1}` is a root; `z_t` has one parent `z_{t-1}`.
//! - [`Template::Chain`]: `z_{t-1}` continues `z_{t-2}`, so `z_{t-3} -> z_{t-2} -> z_{t-1} -> z_t`
//!   while `z_t` keeps the single parent `z_{t-1}`.
//! - [`Template::TwoParent`]: `z_{t-1}` is a root; `z_t` has parents `z_j` and `z_{t-1}`.
//! - [`Template::LinkedTwoParent`]: as above, with `z_j` also reaching `z_{t-1}`,
//!   either directly or through `z_{t-2}`.
//!
//! Values live in two orbits of equal size. A single-parent response steps
//! within the orbit of `z_{t-1}`; a two-parent response usually maps `z_j` into
//! the opposite orbit and otherwise follows `z_{t-1}`. Text is a bag of words
//! from the value's private vocabulary with a fraction of words drawn from the
//! whole vocabulary.

mod cmi;
mod dsep;
mod render;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed;

pub use cmi::{
    conditional_mutual_information, empirical_ci_check, permutation_test, CmiEstimate, CMI_ALPHA, CMI_PERMUTATIONS,
};
pub use dsep::{d_separated, oracle_ci};
pub use render::{generate_corpus, render_dialogue, Rendered, SyntheticCorpus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    SingleParent,
    Chain,
    TwoParent,
    LinkedTwoParent,
}

impl Template {
    pub const ALL: [Template; 4] = [
        Template::SingleParent,
        Template::Chain,
        Template::TwoParent,
        Template::LinkedTwoParent,
    ];

    /// Smallest response index at which the template can be realized.
    pub fn min_t(self) -> usize {
        match self {
            Template::SingleParent => 1,
            _ => 3,
        }
    }
}

/// Template weights; normalized when sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureMix {
    pub single_parent: f64,
    pub chain: f64,
    pub two_parent: f64,
    pub linked_two_parent: f64,
}

impl StructureMix {
    pub fn only(template: Template) -> Self {
        let mut m = Self {
            single_parent: 0.0,
            chain: 0.0,
            two_parent: 0.0,
            linked_two_parent: 0.0,
        };
        *m.weight_mut(template) = 1.0;
        m
    }

    pub fn weight(&self, template: Template) -> f64 {
        match template {
            Template::SingleParent => self.single_parent,
            Template::Chain => self.chain,
            Template::TwoParent => self.two_parent,
            Template::LinkedTwoParent => self.linked_two_parent,
        }
    }

    fn weight_mut(&mut self, template: Template) -> &mut f64 {
        match template {
            Template::SingleParent => &mut self.single_parent,
            Template::Chain => &mut self.chain,
            Template::TwoParent => &mut self.two_parent,
            Template::LinkedTwoParent => &mut self.linked_two_parent,
        }
    }

    fn validate(&self) -> Result<(), String> {
        let w: Vec<f64> = Template::ALL.iter().map(|&t| self.weight(t)).collect();
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
            return Err(format!(
                "structure mix weights must be non-negative with a positive sum: {w:?}"
            ));
        }
        Ok(())
    }
}

impl Default for StructureMix {
    fn default() -> Self {
        Self {
            single_parent: 0.3,
            chain: 0.2,
            two_parent: 0.3,
            linked_two_parent: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub n_values: usize,
    /// Disjoint word set per latent value.
    pub topic_vocabulary: Vec<Vec<String>>,
    /// Fraction of rendered words drawn from the whole vocabulary.
    pub noise_rate: f64,
    /// Probability that a response value is resampled uniformly.
    pub latent_noise: f64,
    /// Probability that a linked seeker copies its parent's value.
    pub continuity: f64,
    /// Probability that a two-parent response follows its earlier cause.
    pub second_cause_weight: f64,
    pub structure_mix: StructureMix,
    pub min_turns: usize,
    pub max_turns: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub seed: u64,
}

const SYLLABLES: [&str; 16] = [
    "ba", "ke", "di", "mo", "lu", "ra", "te", "si", "no", "fu", "ga", "pe", "vi", "zo", "hu", "ja",
];

fn pseudo_word(id: usize) -> String {
    let mut w = String::new();
    let mut x = id;
    for _ in 0..3 {
        w.push_str(SYLLABLES[x % SYLLABLES.len()]);
        x /= SYLLABLES.len();
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub n_values: usize,
    pub words_per_value: usize,
    pub noise_rate: f64,
    pub structure_mix: StructureMix,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_values: 8,
            words_per_value: 8,
            noise_rate: 0.1,
            structure_mix: StructureMix::default(),
            seed: 0,
        }
    }
}

impl SyntheticWorld {
    pub fn new(config: WorldConfig) -> Result<Self, String> {
        if config.n_values < 2 || config.n_values % 2 != 0 {
            return Err(format!("n_values must be even and at least 2, got {}", config.n_values));
        }
        if config.words_per_value == 0 || config.n_values * config.words_per_value > 4096 {
            return Err("words_per_value must be in 1..=4096/n_values".into());
        }
        if !(0.0..1.0).contains(&config.noise_rate) {
            return Err(format!("noise_rate must be in [0, 1), got {}", config.noise_rate));
        }
        config.structure_mix.validate()?;
        // word ids are permuted by the world seed so vocabularies differ across worlds
        let total = config.n_values * config.words_per_value;
        let mut ids: Vec<usize> = (0..4096).collect();
        let mut rng = seed::rng(config.seed, seed::SYNTHESIS, &["vocabulary"]);
        for i in 0..total {
            let k = rng.random_range(i..ids.len());
            ids.swap(i, k);
        }
        let topic_vocabulary = (0..config.n_values)
            .map(|v| {
                (0..config.words_per_value)
                    .map(|k| pseudo_word(ids[v * config.words_per_value + k]))
                    .collect()
            })
            .collect();
        Ok(Self {
            n_values: config.n_values,
            topic_vocabulary,
            noise_rate: config.noise_rate,
            latent_noise: 0.02,
            continuity: 0.8,
            second_cause_weight: 0.95,
            structure_mix: config.structure_mix,
            min_turns: 6,
            max_turns: 10,
            min_words: 4,
            max_words: 8,
            seed: config.seed,
        })
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_values < 2 || self.n_values % 2 != 0 || self.topic_vocabulary.len() != self.n_values {
            return Err("vocabulary must list one word set per value, with an even value count".into());
        }
        let mut seen = std::collections::HashSet::new();
        for words in &self.topic_vocabulary {
            if words.is_empty() {
                return Err("empty word set".into());
            }
            for w in words {
                if !seen.insert(w.as_str()) {
                    return Err(format!("word {w:?} appears in two word sets"));
                }
            }
        }
        for (name, p) in [("noise_rate", self.noise_rate), ("latent_noise", self.latent_noise)] {
            if !(0.0..1.0).contains(&p) {
                return Err(format!("{name} must be in [0, 1)"));
            }
        }
        for (name, p) in [
            ("continuity", self.continuity),
            ("second_cause_weight", self.second_cause_weight),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must be in [0, 1]"));
            }
        }
        if self.min_turns < 2 || self.min_turns > self.max_turns {
            return Err("turn range must satisfy 2 <= min_turns <= max_turns".into());
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return Err("word range must satisfy 1 <= min_words <= max_words".into());
        }
        self.structure_mix.validate()
    }

    fn half(&self) -> usize {
        self.n_values / 2
    }

    /// Within-orbit successor: the value a single-parent response takes.
    pub fn step(&self, v: usize) -> usize {
        let h = self.half();
        let base = v / h * h;
        base + (v - base + 1) % h
    }

    /// Cross-orbit map: the value a two-parent response takes from its earlier cause.
    pub fn cross(&self, v: usize) -> usize {
        let h = self.half();
        let base = v / h * h;
        let other = if base == 0 { h } else { 0 };
        other + (v - base + 1) % h
    }

    pub fn value_of_word(&self, word: &str) -> Option<usize> {
        self.topic_vocabulary.iter().position(|ws| ws.iter().any(|w| w == word))
    }

    /// Majority value of the recognized words; ties go to the smaller value.
    pub fn decode(&self, text: &str) -> Option<usize> {
        let mut counts = vec![0usize; self.n_values];
        for w in text.split_whitespace() {
            if let Some(v) = self.value_of_word(w) {
                counts[v] += 1;
            }
        }
        let best = *counts.iter().max()?;
        if best == 0 {
            return None;
        }
        counts.iter().position(|&c| c == best)
    }
}

/// Latent graph over `z_0..z_{n-1}`; responses are the odd indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatentGraph {
    /// Sorted parent list per node.
    pub parents: Vec<Vec<usize>>,
    /// Template per node; `None` for seekers.
    pub templates: Vec<Option<Template>>,
}

impl LatentGraph {
    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn is_response(&self, i: usize) -> bool {
        i % 2 == 1
    }

    pub fn response_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (1..self.len()).step_by(2)
    }

    pub fn is_parent(&self, j: usize, t: usize) -> bool {
        self.parents[t].contains(&j)
    }

    /// The earlier cause of a two-parent response.
    pub fn second_cause(&self, t: usize) -> Option<usize> {
        self.parents[t].iter().copied().find(|&p| p + 1 != t)
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        (i + 1..self.len()).filter(|&c| self.parents[c].contains(&i)).collect()
    }

    pub fn validate(&self) -> Result<(), String> {
        for (i, ps) in self.parents.iter().enumerate() {
            if ps.iter().any(|&p| p >= i) {
                return Err(format!("node {i} has a parent that is not earlier"));
            }
            if self.is_response(i) {
                if !ps.contains(&(i - 1)) || ps.len() > 2 {
                    return Err(format!("response {i} violates the parent constraints"));
                }
            } else if ps.len() > 1 {
                return Err(format!("seeker {i} has {} parents", ps.len()));
            }
        }
        Ok(())
    }
}

/// Earlier-cause prior of a two-parent response at `t`: `t-2` with weight
/// 0.45, `t-3` with 0.3, the rest spread uniformly over `0..=t-4`.
fn sample_second_cause<R: Rng>(t: usize, rng: &mut R) -> usize {
    debug_assert!(t >= 3);
    let far = t - 3; // number of indices in 0..=t-4
    let (w2, w3, wf) = (0.45, 0.3, if far > 0 { 0.25 } else { 0.0 });
    let x: f64 = rng.random::<f64>() * (w2 + w3 + wf);
    if x < w2 {
        t - 2
    } else if x < w2 + w3 || far == 0 {
        t - 3
    } else {
        rng.random_range(0..far)
    }
}

fn sample_template<R: Rng>(mix: &StructureMix, t: usize, rng: &mut R) -> Template {
    let feasible: Vec<(Template, f64)> = Template::ALL
        .iter()
        .filter(|tpl| tpl.min_t() <= t)
        .map(|&tpl| (tpl, mix.weight(tpl)))
        .filter(|&(_, w)| w > 0.0)
        .collect();
    let total: f64 = feasible.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return Template::SingleParent;
    }
    let mut x = rng.random::<f64>() * total;
    for &(tpl, w) in &feasible {
        if x < w {
            return tpl;
        }
        x -= w;
    }
    feasible.last().unwrap().0
}

/// Samples a latent graph over `n_turns` utterances.
pub fn sample_graph(world: &SyntheticWorld, n_turns: usize, seed: u64) -> LatentGraph {
    assert!(n_turns >= 2, "a dialogue needs at least 2 turns");
    let mut rng = seed::rng(seed, seed::SYNTHESIS, &["graph"]);
    let mut parents = vec![Vec::new(); n_turns];
    let mut templates = vec![None; n_turns];
    for t in (1..n_turns).step_by(2) {
        let tpl = sample_template(&world.structure_mix, t, &mut rng);
        templates[t] = Some(tpl);
        parents[t] = vec![t - 1];
        match tpl {
            Template::SingleParent => {}
            Template::Chain => parents[t - 1] = vec![t - 2],
            Template::TwoParent => {
                let j = sample_second_cause(t, &mut rng);
                parents[t] = vec![j, t - 1];
            }
            Template::LinkedTwoParent => {
                if rng.random::<bool>() {
                    let j = sample_second_cause(t, &mut rng);
                    parents[t - 1] = vec![j];
                    parents[t] = vec![j, t - 1];
                } else {
                    parents[t - 1] = vec![t - 2];
                    parents[t] = vec![t - 3, t - 1];
                }
            }
        }
    }
    LatentGraph { parents, templates }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world() -> SyntheticWorld {
        SyntheticWorld::new(WorldConfig::default()).unwrap()
    }

    #[test]
    fn maps_respect_orbits() {
        let w = world();
        for v in 0..8 {
            assert_eq!(w.step(v) / 4, v / 4);
            assert_ne!(w.step(v), v);
            assert_ne!(w.cross(v) / 4, v / 4);
        }
        let crossed: std::collections::BTreeSet<_> = (0..8).map(|v| w.cross(v)).collect();
        assert_eq!(crossed.len(), 8);
    }

    #[test]
    fn vocabulary_is_disjoint() {
        let w = world();
        assert!(w.validate().is_ok());
        for v in 0..8 {
            let text = w.topic_vocabulary[v].join(" ");
            assert_eq!(w.decode(&text), Some(v));
        }
    }

    #[test]
    fn forced_templates() {
        let mut w = world();
        w.structure_mix = StructureMix::only(Template::SingleParent);
        for s in 0..20 {
            let g = sample_graph(&w, 12, s);
            g.validate().unwrap();
            assert!(g.response_nodes().all(|t| g.parents[t] == vec![t - 1]));
        }
        w.structure_mix = StructureMix::only(Template::TwoParent);
        let g = sample_graph(&w, 12, 3);
        assert!(g.response_nodes().filter(|&t| t >= 3).all(|t| g.parents[t].len() == 2));
        assert!(g.response_nodes().all(|t| g.children(t - 1).contains(&t)));
    }

    #[test]
    fn graph_is_deterministic() {
        let w = world();
        assert_eq!(sample_graph(&w, 11, 5), sample_graph(&w, 11, 5));
    }
}
