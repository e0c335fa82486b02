use glam::DVec3;
use ssdr::camera::Camera;
use ssdr::inverse::Adam;
use ssdr::lighting::{lightnet_input_dim, lightnet_query, posenc, FeatureGrid, LightNetInputs};
use ssdr::image::ImageBuffer;
use ssdr::mlp::{sigmoid, softplus, MlpWeights};
use ssdr::oov::{nerf_eval, NerfConfig};

use ssdr::sampler::SampleRng;
use ssdr::scene::{Scene, SceneKind};
use ssdr::spectrum::Spectrum;
use ssdr::ssrt::{trace, SsrtConfig};

#[test]
fn tiny_lightnet_fits_a_constant_field() {
    let scene = Scene::with_size(SceneKind::TwoPlane, 16, 12);
    let g = scene.gbuffer();
    let cam: Camera = scene.camera;
    let mut rng = SampleRng::from_seed(4);
    let mut img = ImageBuffer::new(16, 12, 4);
    for v in img.data_mut() {
        *v = rng.uniform();
    }
    let features = FeatureGrid::new(img).unwrap();
    let cfg = SsrtConfig::default();
    // traced queries from floor points toward the wall
    let mut queries = Vec::new();
    while queries.len() < 256 {
        let i = (rng.uniform() * g.pixel_count() as f64) as usize % g.pixel_count();
        if g.normal(i).y > -0.5 {
            continue;
        }
        let p = cam
            .unproject(Camera::pixel_center(i % 16, i / 16), g.depth(i))
            .unwrap();
        let d = DVec3::new(rng.uniform() - 0.5, -0.2 - 0.5 * rng.uniform(), 1.0).normalize();
        let hit = trace(&g.depth, &cam, p, d, &cfg).unwrap();
        if hit.is_hit() {
            queries.push((p, d, hit.pixel));
        }
    }
    let inputs: Vec<Vec<f64>> = queries
        .iter()
        .map(|(_, d, px)| LightNetInputs::gather(&features, &g, *d, *px).to_vec())
        .collect();
    let mut w = MlpWeights::random(vec![lightnet_input_dim(4), 8, 3], 9).unwrap();
    let mut adam = Adam::new(w.param_count());
    for _ in 0..1500 {
        let mut grad = vec![0.0; w.param_count()];
        for x in &inputs {
            let t = w.forward_trace(x);
            let o = t.output().to_vec();
            let d_out: Vec<f64> = o
                .iter()
                .map(|&z| 2.0 * (softplus(z) - 1.0) * sigmoid(z) / inputs.len() as f64)
                .collect();
            w.backward(&t, &d_out, &mut grad);
        }
        let mut params = w.params().to_vec();
        adam.step(&mut params, &grad, 0.01);
        w.params_mut().copy_from_slice(&params);
    }
    let mut worst: f64 = 0.0;
    for (p, d, _) in &queries {
        let (l, hit) = lightnet_query(&features, &g, &w, &cam, *p, *d, &cfg).unwrap();
        assert!(hit.is_hit());
        for c in 0..3 {
            worst = worst.max((l[c] - 1.0).abs());
        }
    }
    assert!(worst < 1e-2, "max error {worst}");
}

#[test]
fn nerf_fits_a_constant_density_box() {
    let cfg = NerfConfig {
        radiance_scale: 1.0,
        ..Default::default()
    };
    let mut w = MlpWeights::random(cfg.default_dims(), 5).unwrap();
    let mut rng = SampleRng::from_seed(6);
    let mut point = || DVec3::new(rng.uniform(), rng.uniform(), rng.uniform()) - 0.5;
    let train: Vec<DVec3> = (0..128).map(|_| point()).collect();
    let test: Vec<DVec3> = (0..256).map(|_| point()).collect();
    let target = Spectrum::new(1.0, 0.0, 0.0);
    let enc = cfg.posenc();
    let mut adam = Adam::new(w.param_count());
    for _ in 0..300 {
        let mut grad = vec![0.0; w.param_count()];
        let n = train.len() as f64;
        for x in &train {
            let t = w.forward_trace(&posenc(&x.to_array(), &enc));
            let o = t.output().to_vec();
            let sigma = softplus(o[0]);
            let mut d_out = vec![2.0 * (sigma - 1.0) * sigmoid(o[0]) / n];
            for k in 0..3 {
                let s = sigmoid(o[k + 1]);
                d_out.push(2.0 * (cfg.radiance_scale * s - target[k]) * cfg.radiance_scale * s * (1.0 - s) / n);
            }
            w.backward(&t, &d_out, &mut grad);
        }
        let mut params = w.params().to_vec();
        adam.step(&mut params, &grad, 3e-3);
        w.params_mut().copy_from_slice(&params);
    }
    let err = test
        .iter()
        .map(|x| (nerf_eval(&w, *x, &cfg).unwrap().0 - 1.0).abs())
        .sum::<f64>()
        / test.len() as f64;
    assert!(err < 0.05, "mean |sigma - 1| = {err}");
    let c = nerf_eval(&w, DVec3::ZERO, &cfg).unwrap().1;
    assert!(c.r > 0.9 && c.g < 0.1, "{c:?}");
}
