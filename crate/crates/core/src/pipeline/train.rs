//! Training loop. The per-batch loss and gradients live in free functions
//! so gradient checks can difference the exact same code path the
//! optimizer consumes.
//!
//! Total loss: batch-mean L1 on the colors (gamma-mapped for the BRDF
//! task) plus `lambda_reg` times the Laplacian feature regularizer
//! evaluated on the full accumulated feature matrix. The MLP's L2 weight
//! penalty enters through the optimizer's weight-decay group rather than
//! the loss.

use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::encoding::FeatureSet;
use crate::error::{Error, Result};
use crate::laplacian::{build_laplacian, NormalizedLaplacian};
use crate::mesh::SurfaceSample;
use crate::nn::{AdamGroup, AdamState, Mlp, MlpGradients, OutputActivation};
use crate::pipeline::dataset::Dataset;
use crate::pipeline::{Task, TrainConfig};
use crate::render::brdf::{gamma_map, gamma_map_s, shade_directional, DisneyParams, PARAM_COUNT};
use crate::scalar::{Dual, Scalar};
use crate::simplify::Hierarchy;

/// Data term and raw (unscaled) regularizer term of one batch.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms<T> {
    pub data: T,
    pub reg: T,
}

impl<T: Scalar> LossTerms<T> {
    pub fn total(&self, lambda_reg: f64) -> T {
        self.data + T::from_f64(lambda_reg) * self.reg
    }
}

#[derive(Debug, Clone)]
pub struct BatchGradients<T> {
    pub features: Vec<Array2<T>>,
    pub mlp: MlpGradients<T>,
}

impl<T: Scalar> BatchGradients<T> {
    pub fn max_abs(&self) -> f64 {
        let mut max = 0.0f64;
        for g in self
            .features
            .iter()
            .chain(self.mlp.d_weights.iter())
        {
            for &v in g.iter() {
                max = max.max(v.abs().to_f64());
            }
        }
        for b in &self.mlp.d_biases {
            for &v in b.iter() {
                max = max.max(v.abs().to_f64());
            }
        }
        max
    }
}

fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

fn gather(dataset: &Dataset, indices: &[usize]) -> Vec<SurfaceSample> {
    indices.iter().map(|&i| dataset.samples[i]).collect()
}

fn check_task_inputs(dataset: &Dataset, indices: &[usize], task: Task) -> Result<()> {
    if indices.iter().any(|&i| i >= dataset.len()) {
        return Err(Error::IndexOutOfRange {
            what: "batch index",
            index: *indices.iter().max().unwrap_or(&0),
            limit: dataset.len(),
        });
    }
    if task == Task::Brdf && dataset.shading.is_none() {
        return Err(Error::InvalidArgument(
            "BRDF task needs shading data in the dataset".into(),
        ));
    }
    Ok(())
}

/// Loss and exact gradients for one batch. This is the single gradient
/// path of the trainer.
pub fn batch_loss_and_grads<T: Scalar>(
    features: &FeatureSet<T>,
    mlp: &Mlp<T>,
    dataset: &Dataset,
    indices: &[usize],
    laplacian: Option<&NormalizedLaplacian<T>>,
    lambda_reg: f64,
    task: Task,
) -> Result<(LossTerms<T>, BatchGradients<T>)> {
    check_task_inputs(dataset, indices, task)?;
    let samples = gather(dataset, indices);
    let encoded = features.encode(&samples)?;
    let (y, cache) = mlp.forward(encoded.features.view())?;
    let batch = indices.len();
    let inv_b = T::from_f64(1.0 / batch as f64);

    let mut data_loss = T::zero();
    let mut dl_dy = Array2::zeros(y.dim());
    match task {
        Task::Texture => {
            for (row, &gi) in indices.iter().enumerate() {
                for ch in 0..3 {
                    let r = y[(row, ch)] - T::from_f64(dataset.targets[gi][ch] as f64);
                    data_loss += r.abs() * inv_b;
                    dl_dy[(row, ch)] = sign(r) * inv_b;
                }
            }
        }
        Task::Brdf => {
            let shading = dataset.shading.as_ref().expect("checked above");
            for (row, &gi) in indices.iter().enumerate() {
                let params: [Dual<T, PARAM_COUNT>; PARAM_COUNT] =
                    std::array::from_fn(|j| Dual::variable(y[(row, j)], j));
                let rgb = shade_directional(
                    &DisneyParams::from_array(params),
                    shading.normals[gi],
                    shading.light_dirs[gi],
                    shading.view_dirs[gi],
                    shading.light_intensities[gi],
                    shading.occluded[gi],
                );
                for ch in 0..3 {
                    let pred = gamma_map_s(rgb[ch]);
                    let target = T::from_f64(gamma_map(dataset.targets[gi][ch] as f64));
                    let err = pred.v - target;
                    data_loss += err.abs() * inv_b;
                    let s = sign(err);
                    if s != T::zero() {
                        for j in 0..PARAM_COUNT {
                            dl_dy[(row, j)] += s * pred.d[j] * inv_b;
                        }
                    }
                }
            }
        }
    }

    let (mlp_grads, dl_dphi) = mlp.backward(&cache, dl_dy.view())?;
    let mut feature_grads = features.scatter_gradients(&encoded, dl_dphi.view())?;

    let mut reg = T::zero();
    if lambda_reg > 0.0 {
        if let Some(lap) = laplacian {
            let phi = features.accumulate_all();
            let (reg_loss, grad_phi) = lap.loss_and_grad(phi.view())?;
            features.scatter_accumulated(
                grad_phi.view(),
                T::from_f64(lambda_reg),
                &mut feature_grads,
            )?;
            reg = reg_loss;
        }
    }

    Ok((
        LossTerms {
            data: data_loss,
            reg,
        },
        BatchGradients {
            features: feature_grads,
            mlp: mlp_grads,
        },
    ))
}

/// Loss-only evaluation of the identical objective, kept free of any
/// backward-pass code so finite differences check the gradients
/// independently.
pub fn batch_loss<T: Scalar>(
    features: &FeatureSet<T>,
    mlp: &Mlp<T>,
    dataset: &Dataset,
    indices: &[usize],
    laplacian: Option<&NormalizedLaplacian<T>>,
    lambda_reg: f64,
    task: Task,
) -> Result<LossTerms<T>> {
    check_task_inputs(dataset, indices, task)?;
    let samples = gather(dataset, indices);
    let encoded = features.encode(&samples)?;
    let y = mlp.forward_inference(encoded.features.view());
    let inv_b = T::from_f64(1.0 / indices.len() as f64);

    let mut data_loss = T::zero();
    match task {
        Task::Texture => {
            for (row, &gi) in indices.iter().enumerate() {
                for ch in 0..3 {
                    let r = y[(row, ch)] - T::from_f64(dataset.targets[gi][ch] as f64);
                    data_loss += r.abs() * inv_b;
                }
            }
        }
        Task::Brdf => {
            let shading = dataset.shading.as_ref().expect("checked above");
            for (row, &gi) in indices.iter().enumerate() {
                let params: [T; PARAM_COUNT] = std::array::from_fn(|j| y[(row, j)]);
                let rgb = shade_directional(
                    &DisneyParams::from_array(params),
                    shading.normals[gi],
                    shading.light_dirs[gi],
                    shading.view_dirs[gi],
                    shading.light_intensities[gi],
                    shading.occluded[gi],
                );
                for ch in 0..3 {
                    let pred = gamma_map_s(rgb[ch]);
                    let target = T::from_f64(gamma_map(dataset.targets[gi][ch] as f64));
                    data_loss += (pred - target).abs() * inv_b;
                }
            }
        }
    }

    let mut reg = T::zero();
    if lambda_reg > 0.0 {
        if let Some(lap) = laplacian {
            let phi = features.accumulate_all();
            let applied = lap.apply(phi.view())?;
            for &v in applied.iter() {
                reg += v.abs();
            }
        }
    }
    Ok(LossTerms {
        data: data_loss,
        reg,
    })
}

/// One CSV-friendly row per epoch.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub data_loss: f64,
    /// Lambda-scaled regularizer contribution.
    pub reg_loss: f64,
    pub lr: f64,
    pub wall_time: f64,
}

#[derive(Debug)]
pub struct TrainResult<T> {
    pub features: FeatureSet<T>,
    pub mlp: Mlp<T>,
    pub adam: AdamState<T>,
    pub log: Vec<EpochLog>,
}

/// Per-epoch shuffle stream: counter-based so any epoch's ordering can be
/// reproduced without replaying the previous ones.
fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_add((epoch as u64 + 1).wrapping_mul(0x9E3779B97F4A7C15))
}

/// Run the full training loop. Feature matrices are seeded from
/// `config.seed` and the decoder from `config.seed + 1`.
pub fn train<T: Scalar>(
    config: &TrainConfig,
    hierarchy: Arc<Hierarchy>,
    dataset: &Dataset,
) -> Result<TrainResult<T>> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    if config.task == Task::Brdf && dataset.shading.is_none() {
        return Err(Error::InvalidArgument(
            "BRDF task needs shading data in the dataset".into(),
        ));
    }

    let laplacian: Option<NormalizedLaplacian<T>> = if config.lambda_reg > 0.0 {
        Some(build_laplacian(hierarchy.mesh(0))?.normalized())
    } else {
        None
    };

    let mut features: FeatureSet<T> =
        FeatureSet::init(hierarchy.clone(), config.feature_dim, config.seed);
    let mut mlp: Mlp<T> = Mlp::new(
        &config.layer_sizes(),
        OutputActivation::Sigmoid,
        config.seed.wrapping_add(1),
    );

    // Optimizer slots in update order: decoder weights and biases (the
    // weight-decay group), then the per-level feature matrices.
    let mut slots: Vec<(usize, usize)> = Vec::new();
    for w in mlp.weights() {
        slots.push((w.len(), 0));
    }
    for b in mlp.biases() {
        slots.push((b.len(), 0));
    }
    for z in features.levels() {
        slots.push((z.len(), 1));
    }
    let mut adam: AdamState<T> = AdamState::new(&slots);
    let groups = [
        AdamGroup {
            lr: T::from_f64(config.lr_mlp),
            weight_decay: T::from_f64(config.l2_mlp),
        },
        AdamGroup {
            lr: T::from_f64(config.lr_features),
            weight_decay: T::zero(),
        },
    ];

    let started = Instant::now();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = Vec::with_capacity(config.epochs());
    for epoch in 0..config.epochs() {
        let mut rng = ChaCha12Rng::seed_from_u64(epoch_seed(config.seed, epoch));
        order.shuffle(&mut rng);

        let mut data_sum = 0.0f64;
        let mut reg_sum = 0.0f64;
        let mut batches = 0usize;
        for (batch_index, batch) in order.chunks(config.batch_size()).enumerate() {
            let (terms, grads) = batch_loss_and_grads(
                &features,
                &mlp,
                dataset,
                batch,
                laplacian.as_ref(),
                config.lambda_reg,
                config.task,
            )?;
            let data = terms.data.to_f64();
            let reg = terms.reg.to_f64();
            if !data.is_finite() || !reg.is_finite() {
                return Err(Error::NumericalFailure {
                    epoch,
                    batch: batch_index,
                    max_grad: grads.max_abs(),
                });
            }
            apply_step(&mut features, &mut mlp, &mut adam, &grads, &groups)?;
            data_sum += data;
            reg_sum += config.lambda_reg * reg;
            batches += 1;
        }
        log.push(EpochLog {
            epoch,
            data_loss: data_sum / batches as f64,
            reg_loss: reg_sum / batches as f64,
            lr: config.lr_mlp,
            wall_time: started.elapsed().as_secs_f64(),
        });
    }

    Ok(TrainResult {
        features,
        mlp,
        adam,
        log,
    })
}

fn apply_step<T: Scalar>(
    features: &mut FeatureSet<T>,
    mlp: &mut Mlp<T>,
    adam: &mut AdamState<T>,
    grads: &BatchGradients<T>,
    groups: &[AdamGroup<T>],
) -> Result<()> {
    let (weights, biases) = mlp.parts_mut();
    let mut params: Vec<&mut [T]> = Vec::new();
    for w in weights.iter_mut() {
        params.push(w.as_slice_mut().expect("weights are standard layout"));
    }
    for b in biases.iter_mut() {
        params.push(b.as_slice_mut().expect("biases are standard layout"));
    }
    for z in features.levels_mut() {
        params.push(z.as_slice_mut().expect("features are standard layout"));
    }

    let mut grad_slices: Vec<&[T]> = Vec::new();
    for g in &grads.mlp.d_weights {
        grad_slices.push(g.as_slice().expect("gradients are standard layout"));
    }
    for g in &grads.mlp.d_biases {
        grad_slices.push(g.as_slice().expect("gradients are standard layout"));
    }
    for g in &grads.features {
        grad_slices.push(g.as_slice().expect("gradients are standard layout"));
    }
    adam.step(&mut params, &grad_slices, groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;
    use rand::Rng;

    use crate::render::bvh::Bvh;
    use crate::simplify::build_hierarchy;
    use crate::synth::{icosphere, orbit_view};

    fn tiny_hierarchy() -> Arc<Hierarchy> {
        let mesh = icosphere(1, 1.0); // 42 vertices
        Arc::new(build_hierarchy(&mesh, &[1.0, 0.5]).unwrap())
    }

    fn constant_color_dataset(h: &Hierarchy, color: [f32; 3], count: usize) -> Dataset {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let faces = h.mesh(0).face_count() as u32;
        let samples: Vec<SurfaceSample> = (0..count)
            .map(|_| {
                let (a, b): (f64, f64) = (rng.gen(), rng.gen());
                let (a, b) = if a + b > 1.0 { (1.0 - a, 1.0 - b) } else { (a, b) };
                SurfaceSample::new(rng.gen_range(0..faces), [1.0 - a - b, a, b]).unwrap()
            })
            .collect();
        Dataset {
            targets: vec![color; samples.len()],
            samples,
            ..Dataset::default()
        }
    }

    #[test]
    fn constant_target_smoke_convergence() {
        let h = tiny_hierarchy();
        let dataset = constant_color_dataset(&h, [0.3, 0.7, 0.45], 64);
        let mut config = TrainConfig::for_task(Task::Texture);
        config.lambda_reg = 0.0;
        config.batch_size = Some(64);
        config.epochs = Some(200); // 200 optimizer steps
        config.lr_mlp = 1e-2;
        config.seed = 3;
        let result: TrainResult<f64> = train(&config, h, &dataset).unwrap();
        let final_loss = result.log.last().unwrap().data_loss;
        assert!(final_loss < 1e-2, "final L1 {final_loss}");
    }

    #[test]
    fn zero_features_bias_only_loss_is_mean_absolute_deviation() {
        let h = tiny_hierarchy();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let mut dataset = constant_color_dataset(&h, [0.0; 3], 50);
        for t in dataset.targets.iter_mut() {
            *t = [rng.gen(), rng.gen(), rng.gen()];
        }
        let features: FeatureSet<f64> = FeatureSet::zeros(h.clone(), 4);

        // Decoder with all-zero weights and an output bias realizing the
        // per-channel mean color.
        let mean: [f64; 3] = std::array::from_fn(|c| {
            dataset.targets.iter().map(|t| t[c] as f64).sum::<f64>() / dataset.targets.len() as f64
        });
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let weights = vec![
            ndarray::Array2::zeros((4, 8)),
            ndarray::Array2::zeros((8, 3)),
        ];
        let biases = vec![
            Array1::zeros(8),
            ndarray::arr1(&[logit(mean[0]), logit(mean[1]), logit(mean[2])]),
        ];
        let mlp = Mlp::from_parts(weights, biases, OutputActivation::Sigmoid).unwrap();

        let indices: Vec<usize> = (0..dataset.len()).collect();
        let terms = batch_loss(&features, &mlp, &dataset, &indices, None, 0.0, Task::Texture)
            .unwrap();
        let mad: f64 = dataset
            .targets
            .iter()
            .map(|t| {
                (0..3)
                    .map(|c| (t[c] as f64 - mean[c]).abs())
                    .sum::<f64>()
            })
            .sum::<f64>()
            / dataset.targets.len() as f64;
        assert!((terms.data - mad).abs() < 1e-9, "{} vs {mad}", terms.data);
    }

    #[test]
    fn texture_gradients_match_finite_differences() {
        let h = tiny_hierarchy();
        let mut dataset = constant_color_dataset(&h, [0.0; 3], 24);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for t in dataset.targets.iter_mut() {
            *t = [rng.gen(), rng.gen(), rng.gen()];
        }
        // Inflate the features so the regularizer is active far from its
        // kinks, and use a lambda that makes both terms contribute.
        let mut features: FeatureSet<f64> = FeatureSet::init(h.clone(), 4, 2);
        for z in features.levels_mut() {
            z.mapv_inplace(|v| v * 1e3);
        }
        let mlp: Mlp<f64> = Mlp::new(&[4, 8, 3], OutputActivation::Sigmoid, 9);
        let lap = build_laplacian(h.mesh(0)).unwrap().normalized::<f64>();
        let lambda = 1e-3;
        let indices: Vec<usize> = (0..dataset.len()).collect();

        let (_, grads) = batch_loss_and_grads(
            &features,
            &mlp,
            &dataset,
            &indices,
            Some(&lap),
            lambda,
            Task::Texture,
        )
        .unwrap();

        let h_step = 1e-5;
        let mut checked = 0;
        for level in 0..features.level_count() {
            for r in (0..features.level(level).nrows()).step_by(7) {
                for c in 0..2 {
                    let mut plus = features.clone();
                    plus.level_mut(level)[(r, c)] += h_step;
                    let mut minus = features.clone();
                    minus.level_mut(level)[(r, c)] -= h_step;
                    let lp = batch_loss(
                        &plus, &mlp, &dataset, &indices, Some(&lap), lambda, Task::Texture,
                    )
                    .unwrap()
                    .total(lambda);
                    let lm = batch_loss(
                        &minus, &mlp, &dataset, &indices, Some(&lap), lambda, Task::Texture,
                    )
                    .unwrap()
                    .total(lambda);
                    let fd = (lp - lm) / (2.0 * h_step);
                    let an = grads.features[level][(r, c)];
                    let rel = (fd - an).abs() / an.abs().max(1e-6);
                    assert!(rel < 1e-3, "level {level} ({r},{c}): fd {fd} vs {an}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 10);
    }

    #[test]
    fn brdf_gradients_match_finite_differences() {
        let h = tiny_hierarchy();
        let mesh = h.mesh(0).clone();
        let bvh = Bvh::build(&mesh);
        let mut view = orbit_view(30.0, 20.0, 2.8, 24, 24, 40.0);
        view.image = Some(crate::render::image::ImageBuf::new(24, 24, [0.2; 3]));
        let view = view
            .with_light(nalgebra::Vector3::new(0.4, 0.1, 0.9), 1.0)
            .unwrap();
        let mut dataset =
            crate::pipeline::dataset::prepare_samples(&mesh, &bvh, &[view], Task::Brdf, None)
                .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        for t in dataset.targets.iter_mut() {
            *t = [rng.gen::<f32>() * 0.6, rng.gen::<f32>() * 0.6, rng.gen::<f32>() * 0.6];
        }

        let features: FeatureSet<f64> = FeatureSet::init(h.clone(), 4, 8);
        let mut mlp: Mlp<f64> = Mlp::new(&[4, 8, 12], OutputActivation::Sigmoid, 10);
        let indices: Vec<usize> = (0..dataset.len().min(40)).collect();

        let (_, grads) = batch_loss_and_grads(
            &features, &mlp, &dataset, &indices, None, 0.0, Task::Brdf,
        )
        .unwrap();

        let h_step = 1e-6;
        let mut checked = 0;
        for layer in 0..mlp.weights().len() {
            for r in 0..mlp.weights()[layer].nrows() {
                for c in (0..mlp.weights()[layer].ncols()).step_by(3) {
                    let original = mlp.weights()[layer][(r, c)];
                    mlp.weights_mut()[layer][(r, c)] = original + h_step;
                    let lp = batch_loss(&features, &mlp, &dataset, &indices, None, 0.0, Task::Brdf)
                        .unwrap()
                        .data;
                    mlp.weights_mut()[layer][(r, c)] = original - h_step;
                    let lm = batch_loss(&features, &mlp, &dataset, &indices, None, 0.0, Task::Brdf)
                        .unwrap()
                        .data;
                    mlp.weights_mut()[layer][(r, c)] = original;
                    let fd = (lp - lm) / (2.0 * h_step);
                    let an = grads.mlp.d_weights[layer][(r, c)];
                    let rel = (fd - an).abs() / an.abs().max(1e-5);
                    assert!(rel < 1e-3, "w[{layer}][{r},{c}]: fd {fd} vs {an}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 20);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let h = tiny_hierarchy();
        let mut dataset = constant_color_dataset(&h, [0.0; 3], 640);
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for t in dataset.targets.iter_mut() {
            *t = [rng.gen(), rng.gen(), rng.gen()];
        }
        let mut config = TrainConfig::for_task(Task::Texture);
        config.batch_size = Some(64); // 10 batches per epoch
        config.epochs = Some(2);
        config.seed = 42;
        let a: TrainResult<f64> = train(&config, h.clone(), &dataset).unwrap();
        let b: TrainResult<f64> = train(&config, h.clone(), &dataset).unwrap();
        for (x, y) in a.log.iter().zip(&b.log) {
            assert_eq!(x.data_loss.to_bits(), y.data_loss.to_bits());
            assert_eq!(x.reg_loss.to_bits(), y.reg_loss.to_bits());
        }
        for (za, zb) in a.features.levels().iter().zip(b.features.levels()) {
            assert_eq!(za, zb);
        }
    }

    #[test]
    fn nan_targets_abort_with_diagnostics() {
        let h = tiny_hierarchy();
        let mut dataset = constant_color_dataset(&h, [0.5; 3], 32);
        dataset.targets[3] = [f32::NAN, 0.0, 0.0];
        let mut config = TrainConfig::for_task(Task::Texture);
        config.batch_size = Some(32);
        config.epochs = Some(1);
        let err = train::<f64>(&config, h, &dataset).unwrap_err();
        match err {
            Error::NumericalFailure { epoch, batch, .. } => {
                assert_eq!(epoch, 0);
                assert_eq!(batch, 0);
            }
            other => panic!("expected numerical failure, got {other:?}"),
        }
    }
}
