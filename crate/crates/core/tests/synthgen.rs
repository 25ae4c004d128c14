use tsf_mia::data::{build_windows, DataPoint, Episode, Standardizer, WindowSpec};
use tsf_mia::experiment::{embed_windows, run_attack};
use tsf_mia::metrics::mse_set;
use tsf_mia::model::{pretrain_embedding, ForecasterParams, TrainConfig};
use tsf_mia::synth::{binned_missingness, generate, GeneratorConfig};

#[test]
fn default_corpus_missingness_is_in_range() {
    let cfg = GeneratorConfig { n_episodes: 1000, ..Default::default() };
    let eps = generate(&cfg).unwrap();
    let miss = binned_missingness(&eps, cfg.n_vars);
    assert!((0.85..=0.93).contains(&miss), "missingness {miss}");
}

#[test]
fn dense_variables_have_ar_autocorrelation() {
    let cfg = GeneratorConfig { n_episodes: 600, ..Default::default() };
    let eps = generate(&cfg).unwrap();
    for var in 0..cfg.dense_var_count {
        // hourly series per episode, first observation per hour
        let series: Vec<Vec<Option<f64>>> = eps
            .iter()
            .map(|ep| {
                let mut s = vec![None; ep.length_hours() as usize];
                for tr in ep.triplets().iter().filter(|t| t.var == var) {
                    let h = tr.t.floor() as usize;
                    if h < s.len() && s[h].is_none() {
                        s[h] = Some(tr.value);
                    }
                }
                s
            })
            .collect();
        let all: Vec<f64> = series.iter().flatten().flatten().copied().collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        let var0 = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / all.len() as f64;
        let (mut cov, mut n) = (0.0, 0usize);
        for s in &series {
            for w in s.windows(2) {
                if let (Some(a), Some(b)) = (w[0], w[1]) {
                    cov += (a - mean) * (b - mean);
                    n += 1;
                }
            }
        }
        let rho = cov / n as f64 / var0;
        assert!((rho - 0.95).abs() <= 0.05, "var {var}: lag-1 autocorrelation {rho}");
    }
}

fn episodes(n: usize, seed: u64) -> Vec<Episode> {
    generate(&GeneratorConfig { n_episodes: n, seed, ..Default::default() }).unwrap()
}

fn predict_zero_mse(xs: &[DataPoint]) -> f64 {
    xs.iter()
        .map(|x| {
            let (mut s, mut c) = (0.0, 0.0);
            for r in 0..x.y.rows() {
                for f in 0..x.y.cols() {
                    if x.m.get(r, f) {
                        s += x.y.get(r, f).powi(2);
                        c += 1.0;
                    }
                }
            }
            s / c
        })
        .sum::<f64>()
        / xs.len() as f64
}

#[test]
fn forecaster_beats_predict_zero_on_heldout() {
    let eps = episodes(240, 21);
    let (train, held) = eps.split_at(160);
    let std = Standardizer::fit(train, 16).unwrap();
    let spec = WindowSpec::default();
    let tw = build_windows(train, &spec, &std).unwrap();
    let hw = build_windows(held, &spec, &std).unwrap();
    let cfg = TrainConfig { max_epochs: 15, ..Default::default() };
    let (emb, params) = pretrain_embedding(&tw, &cfg).unwrap();
    let held = embed_windows(&hw, &emb).unwrap();
    let model = mse_set(&held, &params).unwrap();
    let zero = predict_zero_mse(&held);
    assert!(model < zero, "model {model} vs predict-zero {zero}");
}

#[test]
fn small_training_set_can_be_overfit() {
    let eps = episodes(200, 22);
    let (train, held) = eps.split_at(60);
    let std = Standardizer::fit(train, 16).unwrap();
    let spec = WindowSpec::default();
    let mut tw = build_windows(train, &spec, &std).unwrap();
    tw.truncate(500);
    let hw = build_windows(held, &spec, &std).unwrap();
    let cfg = TrainConfig { max_epochs: 200, hidden_dim: 64, ..Default::default() };
    let (emb, params): (_, ForecasterParams) = pretrain_embedding(&tw, &cfg).unwrap();
    let members = embed_windows(&tw, &emb).unwrap();
    let non = embed_windows(&hw, &emb).unwrap();
    let report = run_attack(&params, &members, &non).unwrap();
    assert!(report.auroc > 0.55, "auroc {}", report.auroc);
}
