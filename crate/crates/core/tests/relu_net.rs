use stlearn::datagen::{make_regression_dataset, make_relu_teacher, Dataset};
use stlearn::numerics::{fro_norm, gaussian_mat, Mat, SeededRng};
use stlearn::relu_net::{
    base_loss, feature_st_loss, grads, simplified_st_loss, ReluLoss, ShallowReluNet,
};

const H: f64 = 1e-5;

fn far_from_kinks(net: &ShallowReluNet, teacher: &ShallowReluNet, ds: &Dataset) -> bool {
    let ok = |h: Mat| h.iter().all(|v| v.abs() > 1e-3);
    ok(net.w1.dot(&ds.xeps)) && ok(teacher.w1.dot(&ds.x))
}

fn fd(net: &ShallowReluNet, f: &dyn Fn(&ShallowReluNet) -> f64, second: bool) -> Mat {
    let target = if second { &net.w2 } else { &net.w1 };
    Mat::from_shape_fn(target.dim(), |(i, j)| {
        let mut plus = net.clone();
        let mut minus = net.clone();
        if second {
            plus.w2[[i, j]] += H;
            minus.w2[[i, j]] -= H;
        } else {
            plus.w1[[i, j]] += H;
            minus.w1[[i, j]] -= H;
        }
        (f(&plus) - f(&minus)) / (2.0 * H)
    })
}

fn rel(a: &Mat, b: &Mat) -> f64 {
    fro_norm(&(a - b)) / fro_norm(b).max(1e-8)
}

#[test]
fn relu_gradients_match_finite_differences() {
    let mut checked = 0;
    for seed in 0..40u64 {
        let rng = SeededRng::new(seed);
        let teacher = ShallowReluNet::xavier(&rng.fork(1), 4, 6, 2).unwrap();
        let student = ShallowReluNet::xavier(&rng.fork(2), 4, 6, 2).unwrap();
        let ds = make_regression_dataset(&rng, 4, 5, 0.3, &teacher).unwrap();
        if !far_from_kinks(&student, &teacher, &ds) {
            continue;
        }
        checked += 1;
        let g = grads(&student, None, &ds, ReluLoss::Base).unwrap();
        let f = |m: &ShallowReluNet| base_loss(m, &ds).unwrap();
        assert!(rel(&g.w1, &fd(&student, &f, false)) < 1e-5);
        assert!(rel(g.w2.as_ref().unwrap(), &fd(&student, &f, true)) < 1e-5);

        let lambda = 0.7;
        let g = grads(&student, Some(&teacher), &ds, ReluLoss::FeatureSt { lambda }).unwrap();
        let f = |m: &ShallowReluNet| feature_st_loss(m, &teacher, &ds, lambda).unwrap();
        assert!(rel(&g.w1, &fd(&student, &f, false)) < 1e-5, "seed {seed}");
        assert!(rel(g.w2.as_ref().unwrap(), &fd(&student, &f, true)) < 1e-5);
    }
    assert!(checked >= 5, "only {checked} kink-free instances");
}

#[test]
fn simplified_loss_gradient_matches_finite_differences() {
    let mut checked = 0;
    for seed in 0..40u64 {
        let rng = SeededRng::new(100 + seed);
        let t = make_relu_teacher(&rng.fork(1), 5, 8, 2, true).unwrap();
        let teacher = ShallowReluNet::from_teacher(&t).unwrap();
        let init = gaussian_mat(&rng.fork(2), 8, 5, 0.5).unwrap();
        let student = ShallowReluNet::pooled(init, teacher.w2.clone(), 2).unwrap();
        let ds = make_regression_dataset(&rng, 5, 4, 0.3, &teacher).unwrap();
        if !far_from_kinks(&student, &teacher, &ds) {
            continue;
        }
        checked += 1;
        let g = grads(&student, Some(&teacher), &ds, ReluLoss::SimplifiedSt).unwrap();
        assert!(g.w2.is_none());
        let f = |m: &ShallowReluNet| simplified_st_loss(m, &teacher, &ds).unwrap();
        assert!(rel(&g.w1, &fd(&student, &f, false)) < 1e-5, "seed {seed}");
    }
    assert!(checked >= 5, "only {checked} kink-free instances");
}
