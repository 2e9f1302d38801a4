//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Exact criteria (3, 5, 6, 7) fail the process. Directional criteria on the
//! synthetic worlds (1, 2, 4) only report, unless `ACCEPTANCE_STRICT=1`.
//! Criterion 8 needs the real corpus at `$CG_REFERENCE_CORPUS`.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use causal_dialog::cause_id::{self, baseline_causes, evaluate_cause_id, predict_all, predict_causes, Baseline, Mode};
use causal_dialog::ci::{
    bce_loss_and_grad, build_dependence_set, train_supervised, BagOfWordsEncoder, BowConfig, CiClassifier,
    ClassifierKind, Encoder, Head, Triple, DEFAULT_SEPARATOR,
};
use causal_dialog::constrain::{self_train, IterationRecord, SelfTrainConfig, Variant};
use causal_dialog::corpus::{corpus_stats, load_corpus, Source};
use causal_dialog::metrics::{
    average_bleu, bleu, bws_by_metric, cohen_kappa, distinct_n, self_bleu, span_f1, two_sample_t_test, BwsRecord,
    Judgment,
};
use causal_dialog::perturbation::{CauseOracleGenerator, Mode as PMode, PerturbationSpec, Target};
use causal_dialog::pipeline::{select_index, CandidateResponse};
use causal_dialog::synthetic::{
    d_separated, empirical_ci_check, generate_corpus, oracle_ci, sample_graph, LatentGraph, StructureMix,
    SyntheticCorpus, SyntheticWorld, Template, WorldConfig,
};
use causal_dialog::{Corpus, HistoryResponsePair};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const N_LABELED: usize = 50;
const N_UNLABELED: usize = 500;
const N_HELD_OUT: usize = 200;
const MIN_F1: f64 = 0.90;
const MIN_RECALL_WINS: usize = 4;
const MIN_CHAIN_CI: f64 = 0.95;
const MIN_CHAIN_DEP_NON_PARENT: f64 = 0.5;
const MAX_CAUSE_BLEU: f64 = 0.9;
const N_CANDIDATE_SETS: usize = 1000;
const METRIC_TOL: f64 = 1e-9;
const P_VALUE_TOL: f64 = 1e-6;
const GRAD_REL_TOL: f64 = 1e-5;
const N_GRAD_TRIPLES: usize = 20;
const CMI_SAMPLES: usize = 10_000;
const MIN_CMI_AGREEMENT: f64 = 0.95;
const REF_PROPORTION_TOL: f64 = 0.01;
const REF_BASELINE_TOL: f64 = 0.02;

#[derive(Clone, Copy, PartialEq)]
enum Gate {
    Exact,
    Directional,
}

enum Verdict {
    Pass,
    Fail,
    Skip,
}

struct Line {
    id: u8,
    gate: Gate,
    verdict: Verdict,
    detail: String,
    seconds: f64,
}

fn verdict(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Labeled, unlabeled and held-out corpora of one seed, merged for lookup.
struct Split {
    corpus: Corpus,
    train: Vec<HistoryResponsePair>,
    valid: Vec<HistoryResponsePair>,
    unlabeled: Vec<HistoryResponsePair>,
    labeled_all: Vec<HistoryResponsePair>,
    unlabeled_gold: Vec<HistoryResponsePair>,
    test: SyntheticCorpus,
    encoder: Arc<dyn Encoder>,
}

fn split_for(seed: u64, test_world: &SyntheticWorld, world: &SyntheticWorld) -> Split {
    let lab = generate_corpus(world, N_LABELED, 1000 + seed);
    let unl = generate_corpus(world, N_UNLABELED, 2000 + seed);
    let test = generate_corpus(test_world, N_HELD_OUT, 3000 + seed);
    let corpus = lab.corpus.merged(&unl.corpus).merged(&test.corpus);
    let texts: Vec<&str> = lab
        .corpus
        .dialogues()
        .iter()
        .chain(unl.corpus.dialogues())
        .flat_map(|d| d.utterances.iter().map(|u| u.text.as_str()))
        .collect();
    let encoder: Arc<dyn Encoder> = Arc::new(BagOfWordsEncoder::fit(
        texts,
        BowConfig {
            seed,
            ..Default::default()
        },
    ));
    // last fifth of the labeled dialogues validates
    let ids: Vec<String> = lab.corpus.dialogues().iter().map(|d| d.id.clone()).collect();
    let valid_ids: HashSet<&String> = ids[N_LABELED * 4 / 5..].iter().collect();
    let (valid, train): (Vec<_>, Vec<_>) = lab
        .pairs
        .iter()
        .cloned()
        .partition(|p| valid_ids.contains(&p.dialogue_id));
    let unlabeled = unl
        .pairs
        .iter()
        .map(|p| HistoryResponsePair::unlabeled(p.dialogue_id.clone(), p.t))
        .collect();
    Split {
        corpus,
        train,
        valid,
        unlabeled,
        labeled_all: lab.pairs,
        unlabeled_gold: unl.pairs,
        test,
        encoder,
    }
}

fn world(seed: u64) -> SyntheticWorld {
    SyntheticWorld::new(WorldConfig {
        seed,
        n_values: 8,
        noise_rate: 0.1,
        ..Default::default()
    })
    .unwrap()
}

fn self_train_config(variant: Variant, seed: u64, encoder: &dyn Encoder) -> SelfTrainConfig {
    let mut cfg = SelfTrainConfig {
        variant,
        seed,
        ..Default::default()
    };
    cfg.train.lr = encoder.recommended_lr().unwrap_or(cfg.train.lr);
    cfg
}

fn criterion_1(traces: &mut Vec<Vec<IterationRecord>>) -> (Verdict, String) {
    let mut f1s = Vec::new();
    let mut wins = 0;
    let mut rows = Vec::new();
    for &s in &SEEDS {
        let w = world(s);
        let sp = split_for(s, &w, &w);
        let base = CiClassifier::new(
            sp.encoder.clone(),
            DEFAULT_SEPARATOR,
            ClassifierKind::ConditionalIndependence,
        );
        let mut recall = [0.0; 2];
        for (k, variant) in [Variant::Init, Variant::Constrain].into_iter().enumerate() {
            let cfg = self_train_config(variant, s, sp.encoder.as_ref());
            let out = self_train(&base, &sp.corpus, &sp.train, &sp.valid, &sp.unlabeled, &cfg).unwrap();
            let preds = predict_all(&out.classifier, &sp.test.pairs, &sp.corpus, Mode::Inference, 0.5).unwrap();
            let m = evaluate_cause_id(&preds, &sp.test.pairs).unwrap();
            recall[k] = m.recall;
            if variant == Variant::Constrain {
                f1s.push(m.f1);
                traces.push(out.trace);
            }
        }
        wins += usize::from(recall[1] > recall[0]);
        rows.push(format!(
            "s{s}:f1={:.3},R={:.3}/{:.3}",
            f1s.last().unwrap(),
            recall[1],
            recall[0]
        ));
    }
    let mean_f1 = f1s.iter().sum::<f64>() / f1s.len() as f64;
    let ok = mean_f1 >= MIN_F1 && wins >= MIN_RECALL_WINS;
    (
        verdict(ok),
        format!(
            "constrain mean F1 {mean_f1:.3} (>= {MIN_F1}), recall constrain>init in {wins}/5 (>= {MIN_RECALL_WINS}) [{}]",
            rows.join(" ")
        ),
    )
}

fn criterion_2() -> (Verdict, String) {
    let (mut ci_ok, mut dep_bad, mut n) = (0usize, 0usize, 0usize);
    for &s in &SEEDS[..3] {
        let w = world(s);
        let mut chain = w.clone();
        chain.structure_mix = StructureMix::only(Template::Chain);
        let sp = split_for(s, &chain, &w);
        let base = CiClassifier::new(
            sp.encoder.clone(),
            DEFAULT_SEPARATOR,
            ClassifierKind::ConditionalIndependence,
        );
        let cfg = self_train_config(Variant::Constrain, s, sp.encoder.as_ref());
        let ci = self_train(&base, &sp.corpus, &sp.train, &sp.valid, &sp.unlabeled, &cfg)
            .unwrap()
            .classifier;
        // the dependence test needs no cause labels, so it sees all training dialogues
        let dep_pairs: Vec<_> = sp.labeled_all.iter().chain(&sp.unlabeled_gold).cloned().collect();
        let dep_set = build_dependence_set(&dep_pairs, &sp.corpus, s).unwrap();
        let mut dep = CiClassifier::new(sp.encoder.clone(), DEFAULT_SEPARATOR, ClassifierKind::Dependence);
        train_supervised(&mut dep, &dep_set, &[], &cfg.train).unwrap();
        for p in sp.test.pairs.iter().filter(|p| p.t >= 3) {
            let c = predict_causes(&ci, p, &sp.corpus, Mode::Inference, 0.5).unwrap();
            ci_ok += usize::from(c.cause_set() == p.cause_indices);
            let d = predict_causes(&dep, p, &sp.corpus, Mode::Inference, 0.5).unwrap();
            dep_bad += usize::from(d.cause_set() != p.cause_indices);
            n += 1;
        }
    }
    let ci_rate = ci_ok as f64 / n as f64;
    let dep_rate = dep_bad as f64 / n as f64;
    (
        verdict(ci_rate >= MIN_CHAIN_CI && dep_rate >= MIN_CHAIN_DEP_NON_PARENT),
        format!(
            "CI picks the true parent in {ci_rate:.3} (>= {MIN_CHAIN_CI}), dependence picks a non-parent in {dep_rate:.3} (>= {MIN_CHAIN_DEP_NON_PARENT}), n={n}"
        ),
    )
}

fn check_trace(trace: &[IterationRecord], threshold: f64, window: &BTreeSet<usize>) -> Result<(usize, usize), String> {
    let mut n_pp = 0;
    let mut n_batches = 0;
    for (k, rec) in trace.iter().enumerate() {
        for pp in &rec.pseudo_positives {
            if !(pp.score > threshold) || !window.contains(&(pp.t - pp.j)) {
                return Err(format!(
                    "iteration {k}: pseudo-positive {pp:?} violates the constraints"
                ));
            }
            n_pp += 1;
        }
        for b in &rec.batches {
            if b.n_pos != b.n_neg {
                return Err(format!("iteration {k}: batch {b:?} is unbalanced"));
            }
            n_batches += 1;
        }
        if k > 0 && rec.dataset_size < trace[k - 1].dataset_size {
            return Err(format!("iteration {k}: dataset shrank"));
        }
    }
    Ok((n_pp, n_batches))
}

fn criterion_3(traces: &[Vec<IterationRecord>]) -> (Verdict, String) {
    let defaults = SelfTrainConfig::default();
    let mut n_pp = 0;
    let mut n_batches = 0;
    for t in traces {
        match check_trace(t, defaults.threshold, &defaults.context_window) {
            Ok((a, b)) => {
                n_pp += a;
                n_batches += b;
            }
            Err(e) => return (Verdict::Fail, e),
        }
    }
    // the persisted trace of a CLI run
    let tmp = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_causal-dialog");
    let run = |args: &[&str]| {
        let st = Command::new(bin)
            .args(args)
            .env("CG_RUNS_DIR", tmp.path())
            .status()
            .unwrap();
        assert!(st.success(), "{args:?} failed");
    };
    let p = |s: &str| tmp.path().join(s).to_string_lossy().into_owned();
    run(&["synth", "--dialogues", "40", "--seed", "1", "--out", &p("lab")]);
    run(&["synth", "--dialogues", "200", "--seed", "2", "--out", &p("unl")]);
    run(&[
        "train-ci",
        "--labeled",
        &p("lab/corpus.jsonl"),
        "--unlabeled",
        &p("unl/corpus.jsonl"),
        "--variant",
        "constrain",
        "--out",
        &p("train"),
    ]);
    let text = std::fs::read_to_string(tmp.path().join("train/trace.jsonl")).unwrap();
    let persisted: Vec<IterationRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    match check_trace(&persisted, defaults.threshold, &defaults.context_window) {
        Ok((a, b)) => {
            n_pp += a;
            n_batches += b;
        }
        Err(e) => return (Verdict::Fail, format!("persisted trace: {e}")),
    }
    (
        Verdict::Pass,
        format!(
            "{} traces, {n_pp} pseudo-positives with score > 0.9 and t-j in {{2,3}}, {n_batches} balanced batches, sizes non-decreasing",
            traces.len() + 1
        ),
    )
}

fn criterion_4() -> (Verdict, String) {
    let w = world(0);
    let syn = generate_corpus(&w, 60, 4000);
    let pairs: Vec<_> = syn
        .pairs
        .iter()
        .filter(|p| !CauseOracleGenerator::has_collision(&syn.corpus, p))
        .cloned()
        .collect();
    let mut specs = Vec::new();
    for mode in [PMode::Drop, PMode::ReplacePad] {
        for target in [Target::Causes, Target::NonCauses, Target::NonCausesRandomK] {
            let mut s = PerturbationSpec::new(target, mode);
            s.seed = 7;
            specs.push(s);
        }
    }
    let report = CauseOracleGenerator::study(&syn.corpus, &pairs, &specs, &Default::default()).unwrap();
    let base_ppl = report.baseline.ppl;
    let mut ok = true;
    let mut parts = Vec::new();
    for mode in ["drop", "replace_pad"] {
        let get = |t: &str| report.condition(&format!("{mode}:{t}")).unwrap();
        let (c, nc, rk) = (get("causes"), get("non_causes"), get("non_causes_random_k"));
        let nc_bleu = nc.avg_bleu.unwrap();
        let c_bleu = c.avg_bleu.unwrap();
        let rk_bleu = rk.avg_bleu.unwrap();
        let nc_exact = nc_bleu == 1.0 && nc.ppl == base_ppl && nc.n_failed == 0;
        let between = c_bleu < rk_bleu && rk_bleu < nc_bleu;
        ok &= nc_exact && c_bleu < MAX_CAUSE_BLEU && between;
        parts.push(format!(
            "{mode}: non_causes bleu={nc_bleu} dPPL={} causes bleu={c_bleu:.3} random_k bleu={rk_bleu:.3}{}",
            nc.ppl - base_ppl,
            if between { "" } else { " (not strictly between)" }
        ));
    }
    (verdict(ok), format!("{} pairs; {}", pairs.len(), parts.join("; ")))
}

fn random_candidates(rng: &mut ChaCha8Rng, cap: f64) -> Vec<CandidateResponse> {
    let n = rng.random_range(1..8);
    let mut c: Vec<CandidateResponse> = (0..n)
        .map(|j| CandidateResponse {
            j: Some(j),
            conditioning_text: String::new(),
            text: format!("candidate {j}"),
            // coarse grid so ties happen
            ci_score: Some((rng.random_range(1..=20) as f64 / 20.0).min(cap)),
            error: None,
        })
        .collect();
    c.push(CandidateResponse {
        j: None,
        conditioning_text: String::new(),
        text: "fallback".into(),
        ci_score: None,
        error: None,
    });
    c
}

/// Argmax over the j candidates, ties to the largest j.
fn argmax_oracle(c: &[CandidateResponse]) -> usize {
    let mut best = None::<(usize, f64)>;
    for (i, x) in c.iter().enumerate() {
        if let Some(s) = x.ci_score {
            if best.is_none_or(|(_, b)| s >= b) {
                best = Some((i, s));
            }
        }
    }
    best.unwrap().0
}

fn criterion_5() -> (Verdict, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..N_CANDIDATE_SETS {
        let low = random_candidates(&mut rng, 0.5);
        let fb = low.len() - 1;
        if select_index(&low, 0.5).unwrap() != fb {
            return (Verdict::Fail, format!("set {k}: scores <= 0.5 did not fall back"));
        }
        let c = random_candidates(&mut rng, 1.0);
        if select_index(&c, 0.0).unwrap() != argmax_oracle(&c) {
            return (Verdict::Fail, format!("set {k}: threshold 0 differs from argmax"));
        }
        if select_index(&c, 1.0).unwrap() != c.len() - 1 {
            return (Verdict::Fail, format!("set {k}: threshold 1 did not fall back"));
        }
        // same rule on the cause-identification side
        let scores: Vec<f64> = c.iter().filter_map(|x| x.ci_score).collect();
        let t = scores.len() + 1;
        let second = cause_id::argmax_recent(&scores).map(|(j, probability)| cause_id::SecondCause { j, probability });
        let at0 = cause_id::decide("d", t, second, Mode::Inference, 0.0);
        let at1 = cause_id::decide("d", t, second, Mode::Inference, 1.0);
        if at0.causes != vec![t - 1, c[argmax_oracle(&c)].j.unwrap()] || at1.causes != vec![t - 1] {
            return (Verdict::Fail, format!("set {k}: decide disagrees with select_index"));
        }
    }
    (
        Verdict::Pass,
        format!("{N_CANDIDATE_SETS} random sets: fallback below 0.5, threshold 0 = argmax, threshold 1 = fallback"),
    )
}

fn toks(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Welch two-sided p-value by Simpson integration of the t density.
fn p_value_oracle(t: f64, df: f64) -> f64 {
    let ln_c = statrs::function::gamma::ln_gamma((df + 1.0) / 2.0)
        - statrs::function::gamma::ln_gamma(df / 2.0)
        - 0.5 * (df * std::f64::consts::PI).ln();
    let pdf = |x: f64| (ln_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
    // central mass on [0, |t|], Simpson with an even panel count
    let n = 20_000;
    let h = t.abs() / n as f64;
    let mut s = pdf(0.0) + pdf(t.abs());
    for i in 1..n {
        s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - 2.0 * s * h / 3.0
}

fn criterion_6() -> (Verdict, String) {
    let mut failures: Vec<String> = Vec::new();
    let mut check = |name: &str, got: f64, want: f64, tol: f64| {
        if !close(got, want, tol) {
            failures.push(format!("{name}: got {got}, want {want}"));
        }
    };
    let e = std::f64::consts::E;

    // BLEU
    check(
        "bleu id",
        bleu(&toks("the cat sat on the mat"), &[toks("the cat sat on the mat")], 4),
        1.0,
        METRIC_TOL,
    );
    // p1 = 3/3, p2 = 2/2, bp = exp(1 - 4/3)
    check(
        "bleu short",
        bleu(&toks("the cat sat"), &[toks("the cat sat down")], 2),
        (1.0f64 - 4.0 / 3.0).exp(),
        METRIC_TOL,
    );
    // p1 = 2/4, no bigram match -> 1/(2*4); geometric mean of 1/2 and 1/8 = 1/4
    check(
        "bleu smooth",
        bleu(&toks("a b c d"), &[toks("a x b y")], 2),
        0.25,
        METRIC_TOL,
    );
    // clipped: "the" x3 vs max 2 in a reference -> p1 = 2/3; closest ref length 3
    check(
        "bleu clip",
        bleu(&toks("the the the"), &[toks("the the cat"), toks("the dog")], 1),
        2.0 / 3.0,
        METRIC_TOL,
    );
    // closest ref len 2 < 3, bp = 1; p1 = 2/3, p2 = 1/2
    check(
        "bleu multi",
        bleu(&toks("a b c"), &[toks("a b"), toks("x y z w v")], 2),
        (2.0f64 / 3.0 * 0.5).sqrt(),
        METRIC_TOL,
    );
    check("bleu zero", bleu(&toks("p q"), &[toks("a b")], 4), 0.0, METRIC_TOL);

    // average BLEU: mean over orders 1..4
    let h = toks("a b c");
    let r = [toks("a b c d")];
    let bp = (1.0f64 - 4.0 / 3.0).exp();
    // orders above 3 are dropped, so orders 1..3 all have precision 1
    check("avg id", average_bleu(&h, &[h.clone()]), 1.0, METRIC_TOL);
    check("avg bp", average_bleu(&h, &r), bp, METRIC_TOL);
    check("avg zero", average_bleu(&toks("z"), &[toks("a")]), 0.0, METRIC_TOL);
    // order 1: 1/2 ; orders 2..4 collapse to order 2 bound: sqrt(1/2 * 1/4)
    let a1 = 0.5;
    let a2 = (0.5f64 * 0.25).sqrt();
    check(
        "avg mixed",
        average_bleu(&toks("a z"), &[toks("a y")]),
        (a1 + 3.0 * a2) / 4.0,
        METRIC_TOL,
    );
    check("avg len1", average_bleu(&toks("a"), &[toks("a")]), 1.0, METRIC_TOL);

    // distinct-n
    check(
        "d1 a",
        distinct_n(&[toks("a a b"), toks("b c")], 1).unwrap(),
        3.0 / 5.0,
        METRIC_TOL,
    );
    check(
        "d2 a",
        distinct_n(&[toks("a a b"), toks("b c")], 2).unwrap(),
        3.0 / 3.0,
        METRIC_TOL,
    );
    check(
        "d2 b",
        distinct_n(&[toks("a b a b")], 2).unwrap(),
        2.0 / 3.0,
        METRIC_TOL,
    );
    check("d1 b", distinct_n(&[toks("x x x x")], 1).unwrap(), 0.25, METRIC_TOL);
    check(
        "d2 c",
        distinct_n(&[toks("a b"), toks("a b"), toks("c")], 2).unwrap(),
        0.5,
        METRIC_TOL,
    );

    // self-BLEU over identical candidates is 1; disjoint candidates 0
    check(
        "sb same",
        self_bleu(&[toks("a b"), toks("a b")]).unwrap(),
        1.0,
        METRIC_TOL,
    );
    check(
        "sb disjoint",
        self_bleu(&[toks("a b"), toks("c d"), toks("e f")]).unwrap(),
        0.0,
        METRIC_TOL,
    );
    // "a b" vs ["a c"]: order 1 = 1/2, orders 2..4 = sqrt(1/2 * 1/4); symmetric
    check(
        "sb half",
        self_bleu(&[toks("a b"), toks("a c")]).unwrap(),
        (a1 + 3.0 * a2) / 4.0,
        METRIC_TOL,
    );
    check(
        "sb three",
        self_bleu(&[toks("q"), toks("q"), toks("q")]).unwrap(),
        1.0,
        METRIC_TOL,
    );
    // "a" vs ["a b"]: bp = exp(1 - 2); "a b" vs ["a"]: p1 = 1/2, p2 = 1/4
    check(
        "sb bp",
        self_bleu(&[toks("a"), toks("a b")]).unwrap(),
        ((1.0 / e) + (a1 + 3.0 * a2) / 4.0) / 2.0,
        METRIC_TOL,
    );

    // Cohen's kappa
    let b = |v: &[u8]| v.iter().map(|&x| x == 1).collect::<Vec<bool>>();
    let kappa = |x: &[u8], y: &[u8]| cohen_kappa(&b(x), &b(y)).unwrap().kappa;
    check("k id", kappa(&[1, 0, 1, 1], &[1, 0, 1, 1]), 1.0, METRIC_TOL);
    check("k zero", kappa(&[1, 1, 0, 0], &[1, 0, 1, 0]), 0.0, METRIC_TOL);
    // po = 2/4, pe = 1/2 * 1/2 + 1/2 * 1/2... a = 1100, b = 0011 -> po 0, pe 1/2
    check("k neg", kappa(&[1, 1, 0, 0], &[0, 0, 1, 1]), -1.0, METRIC_TOL);
    // po = 4/5, pa = 3/5, pb = 2/5, pe = 6/25 + 6/25 = 12/25
    check(
        "k mid",
        kappa(&[1, 1, 1, 0, 0], &[1, 1, 0, 0, 0]),
        (0.8 - 0.48) / (1.0 - 0.48),
        METRIC_TOL,
    );
    // po = 4/6, pa = 3/6, pb = 3/6, pe = 1/2
    check(
        "k six",
        kappa(&[1, 1, 1, 0, 0, 0], &[1, 1, 0, 1, 0, 0]),
        (4.0 / 6.0 - 0.5) / 0.5,
        METRIC_TOL,
    );

    // span F1
    let s = |v: &[usize]| v.iter().copied().collect::<BTreeSet<usize>>();
    check("f1 id", span_f1(&[s(&[1, 2]), s(&[1, 2])]).unwrap(), 1.0, METRIC_TOL);
    check("f1 half", span_f1(&[s(&[1, 2]), s(&[2, 3])]).unwrap(), 0.5, METRIC_TOL);
    check("f1 none", span_f1(&[s(&[1]), s(&[2])]).unwrap(), 0.0, METRIC_TOL);
    // pairs: (12,123) = 4/5, (12,3) = 0, (123,3) = 2/4
    check(
        "f1 three",
        span_f1(&[s(&[1, 2]), s(&[1, 2, 3]), s(&[3])]).unwrap(),
        (0.8 + 0.0 + 0.5) / 3.0,
        METRIC_TOL,
    );
    check("f1 empty", span_f1(&[s(&[]), s(&[])]).unwrap(), 1.0, METRIC_TOL);

    // Welch t-test: t and df from the closed form, p against reference values
    // and numerical integration of the density
    let cases: [(&[f64], &[f64], f64); 5] = [
        (
            &[1.0, 2.0, 3.0, 4.0, 5.0],
            &[2.0, 4.0, 6.0, 8.0, 10.0, 12.0],
            0.04928433820673049,
        ),
        (&[0.1, 0.3, 0.2, 0.5], &[0.9, 1.1, 0.7], 0.012205085248472337),
        (
            &[5.5, 6.1, 5.9, 6.3, 5.7, 6.0, 6.2],
            &[5.0, 5.2, 5.1, 4.9],
            5.145882456008785e-05,
        ),
        (&[1.0, 1.0, 2.0], &[3.0, 3.0, 4.0, 10.0], 0.11570732086635942),
        (
            &[10.0, 12.5, 9.75, 11.0, 10.25],
            &[10.5, 11.75, 10.0, 12.0, 11.5, 9.5],
            0.7937604654635279,
        ),
    ];
    for (k, (a, bb, p_ref)) in cases.iter().enumerate() {
        let mv = |x: &[f64]| {
            let n = x.len() as f64;
            let m = x.iter().sum::<f64>() / n;
            (m, x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0), n)
        };
        let (ma, va, na) = mv(a);
        let (mb, vb, nb) = mv(bb);
        let se2 = va / na + vb / nb;
        let t = (ma - mb) / se2.sqrt();
        let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
        let r = two_sample_t_test(a, bb).unwrap();
        check(&format!("t{k}"), r.t_statistic, t, METRIC_TOL);
        check(&format!("df{k}"), r.df, df, METRIC_TOL);
        check(&format!("p{k} ref"), r.p_value, *p_ref, P_VALUE_TOL);
        check(&format!("p{k} integral"), r.p_value, p_value_oracle(t, df), P_VALUE_TOL);
    }

    // BWS: pairwise scores sum to zero per metric
    let rec = |exp: &str, item: &str, a: &str, b: &str, m: &str, j: Vec<Judgment>| BwsRecord {
        experiment_id: exp.into(),
        item_id: item.into(),
        system_a: a.into(),
        system_b: b.into(),
        metric: serde_json::from_value(serde_json::json!(m)).unwrap(),
        judgments: j,
    };
    use Judgment::*;
    let fixtures = [
        vec![
            rec("e1", "i1", "ours", "base", "fluency", vec![ABest, ABest, Tie]),
            rec("e1", "i2", "ours", "base", "fluency", vec![BBest, ABest, ABest]),
            rec("e1", "i1", "ours", "base", "relevance", vec![Tie, Tie, BBest]),
        ],
        vec![
            rec("e2", "i1", "a", "b", "informativeness", vec![ABest]),
            rec("e2", "i2", "b", "c", "informativeness", vec![ABest, BBest]),
            rec("e2", "i3", "c", "a", "informativeness", vec![ABest, ABest, ABest]),
        ],
    ];
    let mut scored = 0;
    for f in &fixtures {
        for (_, scores) in bws_by_metric(f).unwrap() {
            scored += 1;
            if scores.values().sum::<i64>() != 0 {
                failures.push(format!("bws scores {scores:?} do not sum to 0"));
            }
        }
    }
    // fluency in e1: ours +2 then +1
    let e1 = bws_by_metric(&fixtures[0]).unwrap();
    let fl = e1
        .iter()
        .find(|(m, _)| format!("{m:?}").eq_ignore_ascii_case("fluency"))
        .unwrap()
        .1;
    if fl["ours"] != 3 || fl["base"] != -3 {
        failures.push(format!("bws fluency {fl:?}"));
    }

    if failures.is_empty() {
        (
            Verdict::Pass,
            format!("BLEU, avg-BLEU, distinct-n, self-BLEU, kappa, span F1, Welch t-test within {METRIC_TOL:e} (p {P_VALUE_TOL:e}); BWS sums zero on {scored} metric groups"),
        )
    } else {
        (Verdict::Fail, failures.join("; "))
    }
}

/// d-separation by listing every simple path in the skeleton.
fn d_separated_by_paths(g: &LatentGraph, x: usize, y: usize, z: &BTreeSet<usize>) -> bool {
    let n = g.len();
    let is_edge = |a: usize, b: usize| g.parents[b].contains(&a);
    let mut desc = vec![BTreeSet::new(); n];
    for v in (0..n).rev() {
        desc[v].insert(v);
        for c in g.children(v) {
            let d = desc[c].clone();
            desc[v].extend(d);
        }
    }
    let blocked = |path: &[usize]| {
        path.windows(3).any(|w| {
            let (a, m, b) = (w[0], w[1], w[2]);
            let collider = is_edge(a, m) && is_edge(b, m);
            if collider {
                desc[m].is_disjoint(z)
            } else {
                z.contains(&m)
            }
        })
    };
    fn walk(
        g: &LatentGraph,
        y: usize,
        path: &mut Vec<usize>,
        found_open: &mut bool,
        blocked: &dyn Fn(&[usize]) -> bool,
    ) {
        if *found_open {
            return;
        }
        let last = *path.last().unwrap();
        if last == y {
            if !blocked(path) {
                *found_open = true;
            }
            return;
        }
        let mut next: Vec<usize> = g.parents[last].clone();
        next.extend(g.children(last));
        for v in next {
            if !path.contains(&v) {
                path.push(v);
                walk(g, y, path, found_open, blocked);
                path.pop();
            }
        }
    }
    let mut open = false;
    walk(g, y, &mut vec![x], &mut open, &blocked);
    !open
}

/// Every valid graph over `n` nodes: seekers with at most one earlier
/// parent, responses with `t-1` and at most one more earlier parent.
fn all_graphs(n: usize) -> Vec<LatentGraph> {
    let options: Vec<Vec<Vec<usize>>> = (0..n)
        .map(|i| {
            if i % 2 == 1 {
                let mut o = vec![vec![i - 1]];
                o.extend((0..i - 1).map(|j| vec![j, i - 1]));
                o
            } else {
                let mut o = vec![vec![]];
                o.extend((0..i).map(|j| vec![j]));
                o
            }
        })
        .collect();
    let mut out = vec![Vec::<Vec<usize>>::new()];
    for o in &options {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                o.iter().map(move |p| {
                    let mut v = prefix.clone();
                    v.push(p.clone());
                    v
                })
            })
            .collect();
    }
    out.into_iter()
        .map(|parents| LatentGraph {
            templates: (0..n).map(|i| (i % 2 == 1).then_some(Template::TwoParent)).collect(),
            parents,
        })
        .collect()
}

fn criterion_7() -> (Verdict, String) {
    // gradients on real triples
    let w = world(0);
    let syn = generate_corpus(&w, 30, 7000);
    let texts: Vec<&str> = syn
        .corpus
        .dialogues()
        .iter()
        .flat_map(|d| d.utterances.iter().map(|u| u.text.as_str()))
        .collect();
    let enc: Arc<dyn Encoder> = Arc::new(BagOfWordsEncoder::fit(texts, BowConfig::default()));
    let clf = CiClassifier::new(enc, DEFAULT_SEPARATOR, ClassifierKind::ConditionalIndependence);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for k in 0..N_GRAD_TRIPLES {
        let p = &syn.pairs[rng.random_range(0..syn.pairs.len())];
        let d = syn.corpus.resolve(p).unwrap();
        let j = rng.random_range(0..p.t);
        let triple = Triple {
            dialogue_id: d.id.clone(),
            u_j: d.utterances[j].text.clone(),
            u_prev: d.utterances[p.t - 1].text.clone(),
            response: d.utterances[p.t].text.clone(),
            j,
            t: p.t,
        };
        let f = clf.features(&triple).unwrap();
        let label = k % 2 == 0;
        let head = Head {
            weights: (0..f.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            bias: rng.random_range(-1.0..1.0),
        };
        let (_, gw, gb) = bce_loss_and_grad(&head, &[&f], &[label]);
        let loss = |h: &Head| bce_loss_and_grad(h, &[&f], &[label]).0;
        let eps = 1e-6;
        let mut diff = 0.0;
        let mut norm_a = 0.0;
        let mut norm_n = 0.0;
        for i in 0..=f.len() {
            let (mut hp, mut hm) = (head.clone(), head.clone());
            if i < f.len() {
                hp.weights[i] += eps;
                hm.weights[i] -= eps;
            } else {
                hp.bias += eps;
                hm.bias -= eps;
            }
            let numeric = (loss(&hp) - loss(&hm)) / (2.0 * eps);
            let analytic = if i < f.len() { gw[i] } else { gb };
            diff += (analytic - numeric).powi(2);
            norm_a += analytic * analytic;
            norm_n += numeric * numeric;
        }
        // relative error of the whole gradient vector of this triple
        worst = worst.max(diff.sqrt() / norm_a.sqrt().max(norm_n.sqrt()).max(1e-12));
    }

    // oracle_ci against path enumeration on all graphs with up to 4 responses
    let mut n_graphs = 0;
    let mut n_queries = 0;
    for n in 2..=8 {
        for g in all_graphs(n) {
            n_graphs += 1;
            for t in (1..n).step_by(2) {
                for j in 0..t {
                    let want = j + 1 == t || !d_separated_by_paths(&g, j, t, &BTreeSet::from([t - 1]));
                    n_queries += 1;
                    if oracle_ci(&g, j, t) != want {
                        return (Verdict::Fail, format!("oracle_ci({j}, {t}) wrong on {:?}", g.parents));
                    }
                    if j + 1 < t && d_separated(&g, j, t, &[t - 1]) == want {
                        return (Verdict::Fail, format!("d_separated({j}, {t}) wrong on {:?}", g.parents));
                    }
                }
            }
        }
    }

    // empirical CMI against the oracle
    let mut agree = 0;
    let mut total = 0;
    for (noise, gseed) in [(0.1, 0u64), (0.2, 1)] {
        let w = SyntheticWorld::new(WorldConfig {
            seed: gseed,
            noise_rate: noise,
            ..Default::default()
        })
        .unwrap();
        for k in 0..6 {
            let g = sample_graph(&w, 8, 100 * gseed + k);
            for t in (3..8).step_by(2) {
                for j in 0..t - 1 {
                    let est = empirical_ci_check(&w, &g, j, t, CMI_SAMPLES, 1000, k).unwrap();
                    agree += usize::from(est.dependent == oracle_ci(&g, j, t));
                    total += 1;
                }
            }
        }
    }
    let rate = agree as f64 / total as f64;
    (
        verdict(worst <= GRAD_REL_TOL && rate >= MIN_CMI_AGREEMENT),
        format!(
            "max gradient rel err {worst:.2e} (<= {GRAD_REL_TOL:e}) on {N_GRAD_TRIPLES} triples; oracle_ci = path d-separation on {n_graphs} graphs / {n_queries} queries; empirical CMI agrees on {rate:.3} of {total} pairs (>= {MIN_CMI_AGREEMENT})"
        ),
    )
}

fn criterion_8() -> (Verdict, String) {
    let Some(path) = std::env::var_os("CG_REFERENCE_CORPUS") else {
        return (
            Verdict::Skip,
            "set CG_REFERENCE_CORPUS to an annotated corpus JSONL".into(),
        );
    };
    if !Path::new(&path).is_file() {
        return (Verdict::Skip, format!("{path:?} not found"));
    }
    let loaded = load_corpus(&path).unwrap();
    let mut parts = Vec::new();
    let mut ok = true;
    // (source, cause proportion, always-prev P/R/F1)
    for (source, prop, prf) in [
        (Source::Esconv, 0.86, [0.80, 0.41, 0.54]),
        (Source::Msc, 0.72, [0.98, 0.51, 0.67]),
    ] {
        let pairs: Vec<_> = loaded
            .pairs
            .iter()
            .filter(|p| loaded.corpus.resolve(p).is_some_and(|d| d.source == source))
            .cloned()
            .collect();
        if pairs.is_empty() {
            parts.push(format!("{source:?}: no pairs"));
            ok = false;
            continue;
        }
        let stats = corpus_stats(&pairs, &loaded.corpus).unwrap();
        let got = stats.cause_proportion_in_utterance.mean;
        let preds: Vec<_> = pairs.iter().map(|p| baseline_causes(p, Baseline::AlwaysPrev)).collect();
        let m = evaluate_cause_id(&preds, &pairs).unwrap();
        ok &= close(got, prop, REF_PROPORTION_TOL)
            && close(m.precision, prf[0], REF_BASELINE_TOL)
            && close(m.recall, prf[1], REF_BASELINE_TOL)
            && close(m.f1, prf[2], REF_BASELINE_TOL);
        parts.push(format!(
            "{source:?}: proportion {got:.3} (ref {prop}), always_prev P/R/F1 {:.3}/{:.3}/{:.3}",
            m.precision, m.recall, m.f1
        ));
    }
    (verdict(ok), parts.join("; "))
}

fn main() {
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut lines = Vec::new();
    let mut timed = |id: u8, gate: Gate, f: &mut dyn FnMut() -> (Verdict, String)| {
        let t0 = Instant::now();
        let (verdict, detail) = f();
        let line = Line {
            id,
            gate,
            verdict,
            detail,
            seconds: t0.elapsed().as_secs_f64(),
        };
        let tag = match line.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Skip => "SKIP",
        };
        println!("criterion {} {tag} ({:.1}s): {}", line.id, line.seconds, line.detail);
        lines.push(line);
    };
    let mut traces = Vec::new();
    timed(1, Gate::Directional, &mut || criterion_1(&mut traces));
    timed(2, Gate::Directional, &mut criterion_2);
    timed(3, Gate::Exact, &mut || criterion_3(&traces));
    timed(4, Gate::Directional, &mut criterion_4);
    timed(5, Gate::Exact, &mut criterion_5);
    timed(6, Gate::Exact, &mut criterion_6);
    timed(7, Gate::Exact, &mut criterion_7);
    timed(8, Gate::Exact, &mut criterion_8);
    let failed: Vec<&Line> = lines.iter().filter(|l| matches!(l.verdict, Verdict::Fail)).collect();
    let fatal = failed.iter().any(|l| strict || l.gate == Gate::Exact);
    println!(
        "acceptance: {} pass, {} fail, {} skip",
        lines.iter().filter(|l| matches!(l.verdict, Verdict::Pass)).count(),
        failed.len(),
        lines.iter().filter(|l| matches!(l.verdict, Verdict::Skip)).count()
    );
    if fatal {
        std::process::exit(1);
    }
}
