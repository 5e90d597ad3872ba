use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subthurston::geometry::*;
use subthurston::potential::*;

fn cos_cos(a: f64) -> Potential {
    Potential::torus_trig(&[(1, 1, a)])
}

fn random_point(rng: &mut ChaCha8Rng, face: Option<Colour>) -> SplitPoint {
    let d = 997i128;
    let face = face.unwrap_or(if rng.gen::<bool>() { Colour::White } else { Colour::Black });
    SplitPoint::from_fractions(face, (rng.gen_range(0..=d), d), (rng.gen_range(0..=d), d)).unwrap()
}

fn family() -> Vec<Potential> {
    vec![
        Potential::constant(-1.5),
        cos_cos(0.3),
        Potential::torus_trig(&[(1, 1, 0.3), (2, 1, -0.4), (0, 3, 0.2)]).shifted(0.1),
        Potential::coordinate_poly(&[(1, 0, 1.0), (2, 2, -0.7), (0, 1, 0.25)]),
        cos_cos(0.5).plus(&Potential::coordinate_poly(&[(1, 1, 0.8)])),
    ]
}

#[test]
fn eval_examples() {
    let c = Potential::constant(0.7);
    assert_eq!(c.eval(&SplitPoint::from_fractions(Colour::Black, (1, 3), (2, 5)).unwrap()), 0.7);
    let t = cos_cos(1.0);
    assert!((t.eval(&SplitPoint::from_fractions(Colour::White, (0, 1), (0, 1)).unwrap()) - 1.0).abs() < 1e-15);
    assert!(t.eval(&SplitPoint::center(Colour::White)).abs() < 1e-15);
    assert_eq!(eval(&t, &SplitPoint::center(Colour::Black)), t.eval(&SplitPoint::center(Colour::Black)));
}

#[test]
fn face_independent_formulas_agree_on_the_curve() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for phi in family() {
        for _ in 0..100 {
            let t = rng.gen::<f64>();
            for (x, y) in [(0.0, t), (1.0, t), (t, 0.0), (t, 1.0)] {
                assert_eq!(phi.eval_local(Colour::White, x, y), phi.eval_local(Colour::Black, x, y));
            }
        }
    }
}

#[test]
fn birkhoff_examples() {
    let m = PillowMap::new(3).unwrap();
    let p = SplitPoint::from_fractions(Colour::White, (2, 7), (1, 5)).unwrap();
    assert_eq!(birkhoff_sum(&m, &cos_cos(0.3), &p, 0), 0.0);
    for n in 0..6 {
        assert!((birkhoff_sum(&m, &Potential::constant(0.4), &p, n) - 0.4 * n as f64).abs() < 1e-15);
    }
    let corner = SplitPoint::from_fractions(Colour::White, (0, 1), (0, 1)).unwrap();
    assert_eq!(apply_map(&m, &corner), corner);
    let phi = cos_cos(0.3);
    assert!((birkhoff_sum(&m, &phi, &corner, 5) - 5.0 * phi.eval(&corner)).abs() < 1e-15);
}

#[test]
fn birkhoff_cocycle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for s in [2u32, 3] {
        let m = PillowMap::new(s).unwrap();
        for phi in family() {
            let p = random_point(&mut rng, None);
            for n in 0..=6 {
                for k in 0..=6 {
                    let lhs = birkhoff_sum(&m, &phi, &p, n + k);
                    let rhs = birkhoff_sum(&m, &phi, &p, n) + birkhoff_sum(&m, &phi, &apply_map_iter(&m, &p, n), k);
                    assert!((lhs - rhs).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn holder_data_examples() {
    let c = holder_data(&Potential::constant(-2.0));
    assert_eq!((c.alpha, c.seminorm, c.sup), (1.0, 0.0, 2.0));
    let t = holder_data(&cos_cos(0.3));
    assert_eq!(t.alpha, 1.0);
    assert!((t.seminorm - 0.6 * PI).abs() < 1e-15);
    assert!((t.sup - 0.3).abs() < 1e-15);
    let a = holder_data(&cos_cos(0.3));
    let b = holder_data(&Potential::torus_trig(&[(2, 1, -0.4)]));
    let ab = holder_data(&Potential::torus_trig(&[(1, 1, 0.3), (2, 1, -0.4)]));
    assert!((ab.seminorm - (a.seminorm + b.seminorm)).abs() < 1e-14);
}

#[test]
fn empirical_holder_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for phi in family() {
        let h = phi.holder_data();
        for _ in 0..10_000 {
            let p = random_point(&mut rng, None);
            let q = random_point(&mut rng, None);
            let (px, py) = p.to_f64();
            let (qx, qy) = q.to_f64();
            let d = pillow_distance((p.face, px, py), (q.face, qx, qy));
            let diff = (phi.eval(&p) - phi.eval(&q)).abs();
            assert!(diff <= h.seminorm * d.powf(h.alpha) + 1e-12, "{diff} vs {}", h.seminorm * d);
            assert!(phi.eval(&p).abs() <= h.sup + 1e-12);
        }
    }
}

#[test]
fn branch_distortion_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let m = PillowMap::new(3).unwrap();
    for phi in family() {
        let h = phi.holder_data();
        let c1 = h.seminorm / (1.0 - m.expansion().powf(-h.alpha));
        for n in 1..=6 {
            for _ in 0..50 {
                let face = if rng.gen::<bool>() { Colour::White } else { Colour::Black };
                let digits = (0..n).map(|_| (rng.gen_range(0..3), rng.gen_range(0..3))).collect();
                let b = AffineBranch::new(&m, &TileAddress::new(face, digits)).unwrap();
                let x = random_point(&mut rng, Some(b.colour()));
                let y = random_point(&mut rng, Some(b.colour()));
                let (bx, by) = (b.evaluate(&x).unwrap(), b.evaluate(&y).unwrap());
                let lhs = (birkhoff_sum(&m, &phi, &bx, n) - birkhoff_sum(&m, &phi, &by, n)).abs();
                let (xf, yf) = (x.to_f64(), y.to_f64());
                let d = pillow_distance((x.face, xf.0, xf.1), (y.face, yf.0, yf.1));
                assert!(lhs <= c1 * d.powf(h.alpha) + 1e-12);
            }
        }
    }
}

#[test]
fn distortion_constants_follow_their_formula() {
    let m = PillowMap::new(3).unwrap();
    let phi = cos_cos(0.3);
    let h = phi.holder_data();
    let d = distortion_constants(&m, &phi, 2);
    let c1 = h.seminorm / (1.0 - 1.0 / 3.0);
    assert!((d.c1 - c1).abs() < 1e-14);
    let log_c_bar = 2.0 * 9f64.ln() + c1 * PILLOW_DIAMETER + 4.0 * h.sup_variable;
    assert!((d.c_bar.ln() - log_c_bar).abs() < 1e-12);
    // A constant shift changes nothing.
    let e = distortion_constants(&m, &phi.shifted(5.0), 2);
    assert!((e.c_bar - d.c_bar).abs() < 1e-9 * d.c_bar);
}

#[test]
fn algebra_of_potentials() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = cos_cos(0.3);
    let b = Potential::coordinate_poly(&[(2, 0, 1.0)]);
    for _ in 0..100 {
        let p = random_point(&mut rng, None);
        let sum = a.plus(&b).eval(&p);
        assert!((sum - a.eval(&p) - b.eval(&p)).abs() < 1e-15);
        assert!((a.scaled(-2.0).eval(&p) + 2.0 * a.eval(&p)).abs() < 1e-15);
        assert!((a.shifted(1.5).eval(&p) - a.eval(&p) - 1.5).abs() < 1e-15);
        assert!((a.variable_part().eval(&p) - a.eval(&p) + a.constant).abs() < 1e-15);
    }
    assert!(Potential::constant(3.0).is_constant());
    assert!(!a.is_constant());
}

#[test]
fn face_indicator_terms_are_flagged_discontinuous() {
    let mut phi = cos_cos(0.3);
    phi.push(Term { coeff: 1.0, x: Factor::One, y: Factor::One, face: Some(Colour::White) });
    assert!(!phi.holder_data().globally_continuous);
    assert_eq!(phi.require_continuous("test").unwrap_err().kind(), "invalid_input");
    assert_eq!(phi.eval_local(Colour::White, 0.5, 0.5) - phi.eval_local(Colour::Black, 0.5, 0.5), 1.0);
}
