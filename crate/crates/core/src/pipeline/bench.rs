//! Inference benchmark: the mesh-feature encoder plus its small decoder
//! against the random-Fourier-feature encoder feeding the wide baseline
//! MLP. Timed single-threaded over a fixed batch of surface points.

use std::hint::black_box;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::encoding::FeatureSet;
use crate::error::Result;
use crate::mesh::{Mesh, SurfaceSample};
use crate::nn::{Mlp, RffEncoder};

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub batch: usize,
    pub warmup: usize,
    pub reps: usize,
    pub ours_mean_ms: f64,
    pub ours_median_ms: f64,
    pub baseline_mean_ms: f64,
    pub baseline_median_ms: f64,
    /// baseline mean over ours mean.
    pub speedup: f64,
    pub ours_params: usize,
    pub baseline_params: usize,
}

impl BenchReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<26} {:>12} {:>12} {:>10}\n",
            "model", "mean ms", "median ms", "params"
        ));
        out.push_str(&format!(
            "{:<26} {:>12.4} {:>12.4} {:>10}\n",
            "meshfeat (encode + mlp)", self.ours_mean_ms, self.ours_median_ms, self.ours_params
        ));
        out.push_str(&format!(
            "{:<26} {:>12.4} {:>12.4} {:>10}\n",
            "rff baseline", self.baseline_mean_ms, self.baseline_median_ms, self.baseline_params
        ));
        out.push_str(&format!(
            "speedup: {:.2}x  (batch {}, {} reps after {} warmup)\n",
            self.speedup, self.batch, self.reps, self.warmup
        ));
        out
    }
}

/// Random surface samples plus their 3D positions (the baseline's input).
pub fn random_surface_batch(
    mesh: &Mesh,
    count: usize,
    seed: u64,
) -> (Vec<SurfaceSample>, Array2<f32>) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let faces = mesh.face_count() as u32;
    let mut samples = Vec::with_capacity(count);
    let mut points = Array2::zeros((count, 3));
    for i in 0..count {
        let (a, b): (f64, f64) = (rng.gen(), rng.gen());
        let (a, b) = if a + b > 1.0 { (1.0 - a, 1.0 - b) } else { (a, b) };
        let sample = SurfaceSample {
            face: rng.gen_range(0..faces),
            bary: [1.0 - a - b, a, b],
        };
        let p = mesh
            .point_from_barycentric(&sample)
            .expect("random sample is valid");
        points[(i, 0)] = p.x as f32;
        points[(i, 1)] = p.y as f32;
        points[(i, 2)] = p.z as f32;
        samples.push(sample);
    }
    (samples, points)
}

fn summarize(mut times: Vec<f64>) -> (f64, f64) {
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    times.sort_by(f64::total_cmp);
    let median = if times.len() % 2 == 1 {
        times[times.len() / 2]
    } else {
        0.5 * (times[times.len() / 2 - 1] + times[times.len() / 2])
    };
    (mean * 1e3, median * 1e3)
}

/// Wall-clock comparison of one full forward pass (encoding plus MLP) per
/// model over the same batch.
#[allow(clippy::too_many_arguments)]
pub fn benchmark_inference(
    features: &FeatureSet<f32>,
    mlp: &Mlp<f32>,
    rff: &RffEncoder<f32>,
    baseline_mlp: &Mlp<f32>,
    samples: &[SurfaceSample],
    points: ArrayView2<f32>,
    warmup: usize,
    reps: usize,
) -> Result<BenchReport> {
    assert_eq!(samples.len(), points.nrows());

    let ours_pass = || -> Result<Array2<f32>> {
        let encoded = features.encode_features_only(samples)?;
        Ok(mlp.forward_inference(encoded.view()))
    };
    let baseline_pass = || -> Array2<f32> {
        let encoded = rff.encode(points);
        baseline_mlp.forward_inference(encoded.view())
    };

    for _ in 0..warmup {
        black_box(ours_pass()?);
        black_box(baseline_pass());
    }

    let mut ours_times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        black_box(ours_pass()?);
        ours_times.push(start.elapsed().as_secs_f64());
    }
    let mut baseline_times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        black_box(baseline_pass());
        baseline_times.push(start.elapsed().as_secs_f64());
    }

    let (ours_mean_ms, ours_median_ms) = summarize(ours_times);
    let (baseline_mean_ms, baseline_median_ms) = summarize(baseline_times);
    Ok(BenchReport {
        batch: samples.len(),
        warmup,
        reps,
        ours_mean_ms,
        ours_median_ms,
        baseline_mean_ms,
        baseline_median_ms,
        speedup: baseline_mean_ms / ours_mean_ms,
        ours_params: features.param_count() + mlp.param_count(),
        baseline_params: rff.param_count() + baseline_mlp.param_count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::nn::OutputActivation;
    use crate::simplify::build_hierarchy;
    use crate::synth::icosphere;

    #[test]
    fn self_comparison_speedup_is_near_one() {
        let mesh = icosphere(2, 1.0);
        let h = Arc::new(build_hierarchy(&mesh, &[1.0, 0.3]).unwrap());
        let features: FeatureSet<f32> = FeatureSet::init(h, 4, 1);
        let mlp: Mlp<f32> = Mlp::new(&[4, 32, 32, 3], OutputActivation::Sigmoid, 2);
        let (samples, _) = random_surface_batch(&mesh, 4096, 3);

        // Time the same pass against itself through the public API by using
        // an RFF encoder and baseline that mirror ours in size is not
        // possible; instead compare two manual timing runs of the same
        // closure.
        let run = || {
            let encoded = features.encode_features_only(&samples).unwrap();
            mlp.forward_inference(encoded.view())
        };
        for _ in 0..10 {
            std::hint::black_box(run());
        }
        // Median over many reps: robust against scheduler noise on a busy
        // machine.
        let time = |n: usize| {
            let mut times = Vec::new();
            for _ in 0..n {
                let s = Instant::now();
                std::hint::black_box(run());
                times.push(s.elapsed().as_secs_f64());
            }
            times.sort_by(f64::total_cmp);
            times[times.len() / 2]
        };
        let a = time(120);
        let b = time(120);
        let ratio = a / b;
        assert!(
            (0.85..=1.15).contains(&ratio),
            "self-comparison ratio {ratio}"
        );
    }

    #[test]
    fn report_records_protocol_fields() {
        let mesh = icosphere(1, 1.0);
        let h = Arc::new(build_hierarchy(&mesh, &[1.0]).unwrap());
        let features: FeatureSet<f32> = FeatureSet::init(h, 4, 1);
        let mlp: Mlp<f32> = Mlp::new(&[4, 32, 32, 3], OutputActivation::Sigmoid, 2);
        let rff: RffEncoder<f32> = RffEncoder::new(16, 12.0, 3);
        let baseline: Mlp<f32> = Mlp::new(&[32, 64, 3], OutputActivation::Sigmoid, 4);
        let (samples, points) = random_surface_batch(&mesh, 256, 5);
        let report = benchmark_inference(
            &features,
            &mlp,
            &rff,
            &baseline,
            &samples,
            points.view(),
            2,
            7,
        )
        .unwrap();
        assert_eq!(report.reps, 7);
        assert_eq!(report.warmup, 2);
        assert_eq!(report.batch, 256);
        assert!(report.speedup > 0.0);
        assert_eq!(report.ours_params, features.param_count() + 1315);
    }
}
