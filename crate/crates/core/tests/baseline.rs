use rrforge_core::baselines::{baseline_rr, extract_modulations, BaselineParams};
use rrforge_core::io::WristRecording;
use rrforge_core::pipeline::{recording_windows, WindowSet, Windowing};
use rrforge_core::synth::{gen_segment, SynthSpec, WRIST_RATE};

fn window(spec: &SynthSpec) -> WindowSet {
    let seg = gen_segment(spec).unwrap();
    let wrist = WristRecording { rate: WRIST_RATE, ppg: seg.wrist.ppg, acc: seg.wrist.acc, gyr: seg.wrist.gyr };
    recording_windows(&wrist, None, Windowing::Fixed).unwrap().remove(0)
}

fn spread(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt() / m.abs()
}

#[test]
fn recovers_fifteen_breaths_per_minute() {
    for seed in 0..5 {
        let w = window(&SynthSpec { rr: 15.0, seed, ..SynthSpec::default() });
        let est = baseline_rr(&w.ppg, &w.acc, BaselineParams::default());
        let rr = est.rr.expect("clean window is available");
        assert!((rr - 15.0).abs() < 1.0, "seed {seed}: {rr}");
        assert!((est.acc.rr - 15.0).abs() < 1.0, "seed {seed}: acc side {}", est.acc.rr);
    }
}

#[test]
fn zero_depth_modulations_are_flat() {
    let spec = SynthSpec { am_depth: 0.0, bw_depth: 0.0, fm_depth: 0.0, noise_std: 0.0, seed: 2, ..SynthSpec::default() };
    let w = window(&spec);
    let m = extract_modulations(&w.ppg, 100.0, BaselineParams::default()).expect("beats found");
    // Peaks sit on the 20 Hz wrist grid, so intervals alone spread by about
    // 3%; the modulated side uses depths well above that.
    let modulated = window(&SynthSpec { am_depth: 0.2, fm_depth: 0.4, noise_std: 0.0, seed: 2, ..SynthSpec::default() });
    let mm = extract_modulations(&modulated.ppg, 100.0, BaselineParams::default()).unwrap();
    assert!(spread(&m.am_beats) < 0.3 * spread(&mm.am_beats), "{} vs {}", spread(&m.am_beats), spread(&mm.am_beats));
    assert!(spread(&m.fm_beats) < 0.3 * spread(&mm.fm_beats), "{} vs {}", spread(&m.fm_beats), spread(&mm.fm_beats));
}

#[test]
fn clean_windows_are_mostly_available() {
    let mut available = 0;
    for seed in 0..20 {
        let rr = 8.0 + seed as f64;
        let w = window(&SynthSpec { rr, seed, ..SynthSpec::default() });
        let est = baseline_rr(&w.ppg, &w.acc, BaselineParams::default());
        if let Some(v) = est.rr {
            available += 1;
            assert!((4.0..=60.0).contains(&v));
            assert!(est.quality >= BaselineParams::default().confidence_threshold);
        }
    }
    assert!(available >= 18, "{available}/20");
}
