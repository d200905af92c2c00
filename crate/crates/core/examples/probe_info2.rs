// probe: per-snapshot scale spread; logistic oracle on AGC'd magnitude features
use beamsim_core::config::Config;
use beamsim_core::datagen::generate_dataset;
use beamsim_core::exec::ExecMode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let cfg = Config::default().desk_scale();
    let ds = generate_dataset(&cfg, 7, ExecMode::default()).unwrap();
    let w = ds.input_width as usize;
    let snap_len = 2 * w;

    // RMS spread across samples (last snapshot)
    let mut rms: Vec<f64> = ds.samples.iter().map(|s| {
        let x = &s.history[s.history.len() - snap_len..];
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }).collect();
    rms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pct = |p: f64| rms[((rms.len() - 1) as f64 * p) as usize];
    println!("per-snapshot RMS: p5 {:.2e} p50 {:.2e} p95 {:.2e} ratio95/5 {:.1}", pct(0.05), pct(0.5), pct(0.95), pct(0.95)/pct(0.05));

    // Logistic on AGC'd per-bin magnitudes (8 features)
    let feat = |s: &beamsim_core::datagen::Sample| -> Vec<f64> {
        let x = &s.history[s.history.len() - snap_len..];
        let mut mags: Vec<f64> = (0..w).map(|i| (x[i] * x[i] + x[w + i] * x[w + i]).sqrt()).collect();
        let norm = (mags.iter().map(|v| v * v).sum::<f64>()).sqrt().max(1e-15);
        for v in mags.iter_mut() { *v /= norm; }
        mags
    };
    let train = ds.train_samples();
    let val = ds.validation_samples();
    let classes = 32usize;
    let dim = w;
    let mut wts = vec![0.0f64; classes * dim];
    let mut bias = vec![0.0f64; classes];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for v in wts.iter_mut() { *v = rng.gen_range(-0.05..0.05); }
    let lr = 0.5;
    for step in 0..2000 {
        let mut gw = vec![0.0; classes * dim];
        let mut gb = vec![0.0; classes];
        for s in train {
            let x = feat(s);
            let label = s.labels[0] as usize;
            let mut logits = vec![0.0; classes];
            for c in 0..classes {
                logits[c] = bias[c] + wts[c * dim..(c + 1) * dim].iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
            }
            let maxv = logits.iter().cloned().fold(f64::MIN, f64::max);
            let mut sum = 0.0;
            for v in logits.iter_mut() { *v = (*v - maxv).exp(); sum += *v; }
            for v in logits.iter_mut() { *v /= sum; }
            for c in 0..classes {
                let d = (logits[c] - if c == label { 1.0 } else { 0.0 }) / train.len() as f64;
                gb[c] += d;
                for k in 0..dim { gw[c * dim + k] += d * x[k]; }
            }
        }
        for i in 0..wts.len() { wts[i] -= lr * gw[i]; }
        for i in 0..bias.len() { bias[i] -= lr * gb[i]; }
        if step % 500 == 499 {
            let mut vloss = 0.0;
            let mut hits = 0usize;
            for s in val {
                let x = feat(s);
                let label = s.labels[0] as usize;
                let mut logits = vec![0.0; classes];
                for c in 0..classes {
                    logits[c] = bias[c] + wts[c * dim..(c + 1) * dim].iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
                }
                let maxv = logits.iter().cloned().fold(f64::MIN, f64::max);
                let mut sum = 0.0;
                for v in logits.iter_mut() { *v = (*v - maxv).exp(); sum += *v; }
                let am = logits.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
                if am == label { hits += 1; }
                vloss -= (logits[label] / sum).ln();
            }
            println!("magnitude logistic step {}: val loss {:.3} acc {:.3}", step + 1, vloss / val.len() as f64, hits as f64 / val.len() as f64);
        }
    }
}
