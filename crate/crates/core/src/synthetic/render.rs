use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{sample_graph, LatentGraph, SyntheticWorld};
use crate::corpus::{Corpus, Dialogue, HistoryResponsePair, Source, Speaker, Utterance};
use crate::seed;

/// One rendered dialogue with its graph and latent values.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub dialogue: Dialogue,
    pub pairs: Vec<HistoryResponsePair>,
    pub graph: LatentGraph,
    pub latents: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub pairs: Vec<HistoryResponsePair>,
    pub graphs: Vec<LatentGraph>,
    pub latents: Vec<Vec<usize>>,
}

/// Draws latent values in index order from the structural equations.
pub fn sample_latents(graph: &LatentGraph, world: &SyntheticWorld, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let v = world.n_values;
    let mut z = vec![0usize; graph.len()];
    for i in 0..graph.len() {
        let ps = &graph.parents[i];
        z[i] = if graph.is_response(i) {
            let prev = z[i - 1];
            let mut value = match graph.second_cause(i) {
                Some(j) if rng.random::<f64>() < world.second_cause_weight => world.cross(z[j]),
                _ => world.step(prev),
            };
            if rng.random::<f64>() < world.latent_noise {
                value = rng.random_range(0..v);
            }
            value
        } else {
            match ps.first() {
                Some(&p) if rng.random::<f64>() < world.continuity => z[p],
                _ => rng.random_range(0..v),
            }
        };
    }
    z
}

/// Bag of words for one latent value.
pub fn render_text(value: usize, world: &SyntheticWorld, rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(world.min_words..=world.max_words);
    let n_values = world.topic_vocabulary.len();
    let words: Vec<&str> = (0..n)
        .map(|_| {
            let pool = if rng.random::<f64>() < world.noise_rate {
                &world.topic_vocabulary[rng.random_range(0..n_values)]
            } else {
                &world.topic_vocabulary[value]
            };
            pool[rng.random_range(0..pool.len())].as_str()
        })
        .collect();
    words.join(" ")
}

/// Renders `graph` into a dialogue whose gold causes are the graph parents.
pub fn render_dialogue(graph: &LatentGraph, world: &SyntheticWorld, seed: u64, id: &str) -> Rendered {
    let mut rng = seed::rng(seed, seed::SYNTHESIS, &["render"]);
    let latents = sample_latents(graph, world, &mut rng);
    let utterances = latents
        .iter()
        .enumerate()
        .map(|(i, &z)| Utterance {
            index: i,
            speaker: if i % 2 == 0 {
                Speaker::Seeker
            } else {
                Speaker::Supporter
            },
            text: render_text(z, world, &mut rng),
            clause_spans: None,
        })
        .collect();
    let pairs = graph
        .response_nodes()
        .map(|t| HistoryResponsePair::with_causes(id, t, graph.parents[t].iter().copied()))
        .collect();
    Rendered {
        dialogue: Dialogue {
            id: id.to_string(),
            source: Source::Synthetic,
            utterances,
        },
        pairs,
        graph: graph.clone(),
        latents,
    }
}

/// `n_dialogues` independent dialogues; ids are `syn<seed>-<index>`.
pub fn generate_corpus(world: &SyntheticWorld, n_dialogues: usize, seed: u64) -> SyntheticCorpus {
    let rendered: Vec<Rendered> = (0..n_dialogues)
        .into_par_iter()
        .map(|i| {
            let d_seed = seed::derive(seed, seed::SYNTHESIS, &["dialogue", &i.to_string()]);
            let mut rng = seed::rng(d_seed, seed::SYNTHESIS, &["turns"]);
            let n_turns = rng.random_range(world.min_turns..=world.max_turns);
            let graph = sample_graph(world, n_turns, d_seed);
            render_dialogue(&graph, world, d_seed, &format!("syn{seed}-{i:05}"))
        })
        .collect();
    let mut out = SyntheticCorpus::default();
    for r in rendered {
        out.corpus.push(r.dialogue);
        out.pairs.extend(r.pairs);
        out.graphs.push(r.graph);
        out.latents.push(r.latents);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::WorldConfig;

    #[test]
    fn noiseless_text_identifies_value() {
        let mut cfg = WorldConfig::default();
        cfg.noise_rate = 0.0;
        let world = SyntheticWorld::new(cfg).unwrap();
        let sc = generate_corpus(&world, 20, 1);
        for (d, z) in sc.corpus.dialogues().iter().zip(&sc.latents) {
            for (u, &v) in d.utterances.iter().zip(z) {
                assert!(u.text.split_whitespace().all(|w| world.value_of_word(w) == Some(v)));
            }
        }
    }

    #[test]
    fn causes_contain_previous() {
        let world = SyntheticWorld::new(WorldConfig::default()).unwrap();
        let sc = generate_corpus(&world, 50, 2);
        for p in &sc.pairs {
            assert!(p.cause_indices.contains(&(p.t - 1)));
            assert!(p.cause_indices.len() <= 2);
        }
    }
}
