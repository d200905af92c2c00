// probe: (a) receptive field of the preprocessing stack, (b) achievable loss
// of plain softmax regression on raw angular features.
use beamsim_core::config::Config;
use beamsim_core::datagen::generate_dataset;
use beamsim_core::exec::ExecMode;
use beamsim_core::predictor::BeamPredictor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let cfg = Config::default().desk_scale();
    let ds = generate_dataset(&cfg, 7, ExecMode::default()).unwrap();
    let w = ds.input_width as usize;

    // (a) receptive field: perturb each input position, watch features
    let model = BeamPredictor::new(&cfg.predictor, w, 1).unwrap();
    let snap: Vec<f64> = (0..2 * w).map(|i| 0.3 * ((i * 7 + 1) as f64).sin()).collect();
    let base = model.pre.features_infer(&snap, 1).unwrap();
    print!("feature sensitivity per input bin: ");
    for pos in 0..w {
        let mut s2 = snap.clone();
        s2[pos] += 1.0;       // real channel
        s2[w + pos] += 1.0;   // imag channel
        let f2 = model.pre.features_infer(&s2, 1).unwrap();
        let delta: f64 = base.iter().zip(&f2).map(|(a, b)| (a - b).abs()).sum();
        print!("{pos}:{:.3} ", delta);
    }
    println!();

    // (b) softmax regression oracle on the LAST snapshot (16 features -> 32)
    let train = ds.train_samples();
    let val = ds.validation_samples();
    let snap_len = 2 * w;
    let feat = |s: &beamsim_core::datagen::Sample| -> Vec<f64> {
        let start = s.history.len() - snap_len;
        // normalize per snapshot so scale is comparable
        let x = &s.history[start..];
        let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt().max(1e-12);
        x.iter().map(|v| v / rms).collect()
    };
    let classes = 32usize;
    let dim = snap_len;
    let mut wts = vec![0.0f64; classes * dim];
    let mut bias = vec![0.0f64; classes];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for v in wts.iter_mut() { *v = rng.gen_range(-0.05..0.05); }
    let lr = 0.05;
    for step in 0..600 {
        let mut gw = vec![0.0; classes * dim];
        let mut gb = vec![0.0; classes];
        let mut loss = 0.0;
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
            loss -= logits[label].ln();
            for c in 0..classes {
                let d = (logits[c] - if c == label { 1.0 } else { 0.0 }) / train.len() as f64;
                gb[c] += d;
                for k in 0..dim { gw[c * dim + k] += d * x[k]; }
            }
        }
        for i in 0..wts.len() { wts[i] -= lr * gw[i] * 10.0; }
        for i in 0..bias.len() { bias[i] -= lr * gb[i] * 10.0; }
        if step % 100 == 99 {
            let mut vloss = 0.0;
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
                vloss -= (logits[label] / sum).ln();
            }
            println!("logistic step {}: train {:.3} val {:.3}", step + 1, loss / train.len() as f64, vloss / val.len() as f64);
        }
    }
}
