use driftlab::calculus::{curl_fd, relative_error};
use driftlab::density::ParticleSet;
use driftlab::fields::{eval_buggy_softmax, eval_naive_drift, subfield, FieldKind, FieldSpec};
use driftlab::kernels::{KernelFamily, RadialKernel};
use proptest::prelude::*;

fn family() -> impl Strategy<Value = KernelFamily> {
    prop_oneof![
        Just(KernelFamily::Gaussian),
        Just(KernelFamily::Laplacian),
        Just(KernelFamily::RationalQuadratic)
    ]
}

fn cloud(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.5f64..2.5, 2), n)
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 2)
}

fn min_dist(x: &[f64], sets: &[&[Vec<f64>]]) -> f64 {
    sets.iter()
        .flat_map(|s| s.iter())
        .map(|y| ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min)
}

fn rotate(v: &[f64], c: f64, s: f64) -> Vec<f64> {
    vec![c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

// Brute-force field oracle written directly from the definitions.
fn oracle(kind: FieldKind, k: &RadialKernel, pos: &[Vec<f64>], neg: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let numerator = |set: &[Vec<f64>], kern: &RadialKernel| {
        let mut m = [0.0, 0.0];
        for y in set {
            let w = kern.eval(x, y).unwrap() / set.len() as f64;
            m[0] += w * (y[0] - x[0]);
            m[1] += w * (y[1] - x[1]);
        }
        m
    };
    let mean = |set: &[Vec<f64>], kern: &RadialKernel| {
        set.iter().map(|y| kern.eval(x, y).unwrap()).sum::<f64>() / set.len() as f64
    };
    let (mp, mq, zp, zq) = match kind {
        FieldKind::Unnormalized => (numerator(pos, k), numerator(neg, k), 1.0, 1.0),
        FieldKind::MmdGradient => {
            let f = k.flat().unwrap();
            (numerator(pos, &f), numerator(neg, &f), 1.0, 1.0)
        }
        FieldKind::Drift => (numerator(pos, k), numerator(neg, k), mean(pos, k), mean(neg, k)),
        FieldKind::SharpNormalized => {
            let s = k.sharp().unwrap();
            (numerator(pos, k), numerator(neg, k), mean(pos, &s), mean(neg, &s))
        }
        FieldKind::BuggyBar => {
            let (mp, mq) = (numerator(pos, k), numerator(neg, k));
            let (zp, zq) = (mean(pos, k), mean(neg, k));
            let den = (zp + zq) * (zp + zq);
            return vec![(zq * mp[0] - zp * mq[0]) / den, (zq * mp[1] - zp * mq[1]) / den];
        }
    };
    vec![mp[0] / zp - mq[0] / zq, mp[1] / zp - mq[1] / zq]
}

fn set(points: &[Vec<f64>]) -> ParticleSet {
    ParticleSet::new(points.to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_direct_definition(
        f in family(), s in 0.4f64..2.0, p in cloud(5), q in cloud(5), x in point(),
    ) {
        prop_assume!(min_dist(&x, &[&p, &q]) > 1e-3);
        let k = RadialKernel::new(f, s).unwrap();
        let (pos, neg) = (set(&p), set(&q));
        for kind in FieldKind::ALL {
            let got = FieldSpec::new(kind, k, &pos, &neg).unwrap().eval(&x).unwrap();
            let want = oracle(kind, &k, &p, &q, &x);
            let scale = want.iter().map(|v| v.abs()).fold(0.0, f64::max);
            prop_assert!(
                (got[0] - want[0]).abs().max((got[1] - want[1]).abs()) <= 1e-12 * scale.max(1e-300),
                "{kind:?}: {got:?} vs {want:?}"
            );
        }
    }

    #[test]
    fn anti_symmetric_in_the_two_sets(
        f in family(), s in 0.4f64..2.0, p in cloud(4), q in cloud(6), x in point(),
    ) {
        prop_assume!(min_dist(&x, &[&p, &q]) > 1e-3);
        let k = RadialKernel::new(f, s).unwrap();
        let (pos, neg) = (set(&p), set(&q));
        for kind in [FieldKind::Unnormalized, FieldKind::Drift, FieldKind::SharpNormalized, FieldKind::MmdGradient] {
            let spec = FieldSpec::new(kind, k, &pos, &neg).unwrap();
            let a = spec.eval(&x).unwrap();
            let b = spec.swapped().eval(&x).unwrap();
            prop_assert!((a[0] + b[0]).abs() <= 1e-12 * (1.0 + a[0].abs()));
            prop_assert!((a[1] + b[1]).abs() <= 1e-12 * (1.0 + a[1].abs()));
        }
    }

    #[test]
    fn equivariant_under_rigid_motions(
        f in family(), s in 0.4f64..2.0, p in cloud(4), q in cloud(4), x in point(),
        angle in 0.0f64..std::f64::consts::TAU, shift in point(),
    ) {
        prop_assume!(min_dist(&x, &[&p, &q]) > 1e-3);
        let (c, sn) = (angle.cos(), angle.sin());
        let move_pt = |v: &Vec<f64>| {
            let r = rotate(v, c, sn);
            vec![r[0] + shift[0], r[1] + shift[1]]
        };
        let k = RadialKernel::new(f, s).unwrap();
        let (pos, neg) = (set(&p), set(&q));
        let pos2 = set(&p.iter().map(move_pt).collect::<Vec<_>>());
        let neg2 = set(&q.iter().map(move_pt).collect::<Vec<_>>());
        for kind in FieldKind::ALL {
            let v = FieldSpec::new(kind, k, &pos, &neg).unwrap().eval(&x).unwrap();
            let w = FieldSpec::new(kind, k, &pos2, &neg2).unwrap().eval(&move_pt(&x)).unwrap();
            let rv = rotate(&v, c, sn);
            let scale = 1e-9 * (1.0 + rv[0].abs() + rv[1].abs());
            prop_assert!((w[0] - rv[0]).abs() <= scale && (w[1] - rv[1]).abs() <= scale,
                "{kind:?}: {w:?} vs {rv:?}");
        }
    }

    #[test]
    fn attractive_subfields_share_a_direction(
        f in family(), s in 0.4f64..2.0, p in cloud(5), x in point(),
    ) {
        prop_assume!(min_dist(&x, &[&p]) > 1e-3);
        let k = RadialKernel::new(f, s).unwrap();
        let pos = set(&p);
        let u = subfield(FieldKind::Unnormalized, &k, &pos, &x, None).unwrap();
        prop_assume!(u[0].hypot(u[1]) > 1e-12);
        for kind in [FieldKind::Drift, FieldKind::SharpNormalized] {
            let v = subfield(kind, &k, &pos, &x, None).unwrap();
            let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
            prop_assert!((cos - 1.0).abs() <= 1e-9, "cosine {cos}");
        }
    }

    #[test]
    fn curl_splits_over_subfields(
        f in family(), p in cloud(4), q in cloud(4), x in point(),
    ) {
        prop_assume!(min_dist(&x, &[&p, &q]) > 1e-2);
        let k = RadialKernel::new(f, 1.0).unwrap();
        let (pos, neg) = (set(&p), set(&q));
        let spec = FieldSpec::new(FieldKind::Drift, k, &pos, &neg).unwrap();
        let h = 1e-4;
        let total = curl_fd(|y: &[f64]| spec.eval(y), &x, h).unwrap();
        let plus = curl_fd(|y: &[f64]| subfield(FieldKind::Drift, &k, &pos, y, None), &x, h).unwrap();
        let minus = curl_fd(|y: &[f64]| subfield(FieldKind::Drift, &k, &neg, y, None), &x, h).unwrap();
        prop_assert!((total[0] - (plus[0] - minus[0])).abs() <= 1e-8);
    }

    #[test]
    fn gaussian_drift_is_sigma_squared_sharp(
        s in 0.3f64..3.0, p in cloud(5), q in cloud(5), x in point(),
    ) {
        let k = RadialKernel::gaussian(s).unwrap();
        let (pos, neg) = (set(&p), set(&q));
        let d = FieldSpec::new(FieldKind::Drift, k, &pos, &neg).unwrap().eval(&x).unwrap();
        let sh = FieldSpec::new(FieldKind::SharpNormalized, k, &pos, &neg).unwrap().eval(&x).unwrap();
        let scaled: Vec<f64> = sh.iter().map(|v| s * s * v).collect();
        prop_assume!(d[0].hypot(d[1]) > 1e-9);
        prop_assert!(relative_error(&scaled, &d) <= 1e-12);
    }

    #[test]
    fn softmax_paths_match_closed_forms(
        f in family(), p in cloud(6), q in cloud(6), extra in cloud(3),
    ) {
        let k = RadialKernel::new(f, 1.0).unwrap();
        let (pos, neg) = (set(&p), set(&q));
        let mut xs = q.clone();
        xs.extend(extra);
        let soft = eval_buggy_softmax(&k, &pos, &neg, &xs, false).unwrap();
        let naive = eval_naive_drift(&k, &pos, &neg, &xs, false).unwrap();
        let buggy = FieldSpec::new(FieldKind::BuggyBar, k, &pos, &neg).unwrap();
        let drift = buggy.with_kind(FieldKind::Drift).unwrap();
        for (i, x) in xs.iter().enumerate() {
            let c = buggy.eval(x).unwrap();
            let d = drift.eval(x).unwrap();
            prop_assert!((soft[i][0] - c[0]).abs().max((soft[i][1] - c[1]).abs()) <= 1e-10 * (1.0 + c[0].abs() + c[1].abs()));
            prop_assert!((naive[i][0] - d[0]).abs().max((naive[i][1] - d[1]).abs()) <= 1e-10 * (1.0 + d[0].abs() + d[1].abs()));
        }
    }
}

#[test]
fn leave_one_out_batch_matches_per_point_oracle() {
    let p = vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![-0.7, 1.2]];
    let q = vec![vec![2.0, 1.0], vec![1.5, -0.5], vec![0.3, 0.3]];
    let k = RadialKernel::laplacian(0.8).unwrap();
    let batch = eval_naive_drift(&k, &set(&p), &set(&q), &q, true).unwrap();
    for (i, x) in q.iter().enumerate() {
        let others: Vec<Vec<f64>> = q.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v.clone()).collect();
        let want = oracle(FieldKind::Drift, &k, &p, &others, x);
        assert!(relative_error(&batch[i], &want) <= 1e-12);
    }
}

#[test]
fn single_particle_laplacian_tail_magnitudes() {
    // one data point at the origin, Laplacian σ: closed forms along an axis
    let s = 1.5;
    let k = RadialKernel::laplacian(s).unwrap();
    let pos = set(&[vec![0.0, 0.0]]);
    for t in [10.0, 100.0] {
        let x = [t * s, 0.0];
        let sharp = subfield(FieldKind::SharpNormalized, &k, &pos, &x, None).unwrap();
        let drift = subfield(FieldKind::Drift, &k, &pos, &x, None).unwrap();
        let unnorm = subfield(FieldKind::Unnormalized, &k, &pos, &x, None).unwrap();
        let d = t * s;
        assert!((sharp[0].abs() - d / (s * (d + s))).abs() <= 1e-12);
        assert!((drift[0].abs() - d).abs() <= 1e-12 * d);
        assert!((unnorm[0].abs() - d * (-t).exp()).abs() <= 1e-12);
        assert!((sharp[0].abs() * s - 1.0).abs() <= 0.1);
    }
    let far = subfield(FieldKind::SharpNormalized, &k, &pos, &[100.0 * s, 0.0], None).unwrap();
    assert!((far[0].abs() * s - 1.0).abs() <= 0.05);
}
