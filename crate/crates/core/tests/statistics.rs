use std::collections::HashMap;

use subthurston::combinatorics::{enumerate_tiles, SubTile, Subsystem};
use subthurston::equilibrium::{equilibrium_state, Estimate};
use subthurston::geometry::*;
use subthurston::potential::{birkhoff_sum, Potential};
use subthurston::statistics::*;
use subthurston::transfer::*;

fn trig() -> Potential {
    Potential::torus_trig(&[(1, 1, 0.3)])
}

fn base() -> SplitPoint {
    SplitPoint::from_fractions(Colour::Black, (2, 7), (3, 5)).unwrap()
}

fn spectral(sub: &Subsystem, phi: &Potential, k: usize) -> SpectralData {
    solve_spectral(transfer_matrix(sub, phi, k).unwrap(), SolverOptions::default()).unwrap()
}

fn key(face: Colour, x: f64, y: f64) -> (usize, i64, i64) {
    (face.index(), (x * 1e9).round() as i64, (y * 1e9).round() as i64)
}

/// Oracle: exact branch points of x at level n with weights exp(S_nφ),
/// normalized, keyed by rounded coordinates.
fn brute_preimages(sub: &Subsystem, phi: &Potential, x: &SplitPoint, n: usize) -> HashMap<(usize, i64, i64), (SplitPoint, f64)> {
    let mut out = HashMap::new();
    let mut z = 0.0;
    for a in enumerate_tiles(sub, n).unwrap().tiles {
        let b = AffineBranch::new(sub.map(), &a).unwrap();
        if b.colour() != x.face {
            continue;
        }
        let y = b.evaluate(x).unwrap();
        let w = birkhoff_sum(sub.map(), phi, &y, n).exp();
        z += w;
        let (fx, fy) = y.to_f64();
        out.insert(key(y.face, fx, fy), (y, w));
    }
    for v in out.values_mut() {
        v.1 /= z;
    }
    out
}

#[test]
fn zero_potential_on_full_map_gives_uniform_preimages() {
    let sub = Subsystem::full(3).unwrap();
    for n in 1..=3 {
        let nu = preimage_measure(&sub, &Potential::zero(), &base(), n, PreimageMode::Point).unwrap();
        assert_eq!(nu.points.len(), 9usize.pow(n as u32));
        for w in &nu.weights {
            assert!((w - 9f64.powi(-(n as i32))).abs() < 1e-15);
        }
    }
}

#[test]
fn preimage_weights_match_exact_branch_oracle() {
    let sub = Subsystem::carpet();
    let phi = trig().plus(&Potential::coordinate_poly(&[(1, 1, -0.5)]));
    for n in 1..=3 {
        let nu = preimage_measure(&sub, &phi, &base(), n, PreimageMode::Point).unwrap();
        let want = brute_preimages(&sub, &phi, &base(), n);
        assert_eq!(nu.points.len(), want.len());
        for (p, w) in nu.points.iter().zip(&nu.weights) {
            let (_, ww) = &want[&key(p.face, p.x, p.y)];
            assert!((w - ww).abs() < 1e-13, "n={n}");
        }
    }
}

#[test]
fn birkhoff_mode_spreads_weight_along_orbits() {
    let sub = Subsystem::carpet();
    let phi = trig();
    let n = 3;
    let hat = preimage_measure(&sub, &phi, &base(), n, PreimageMode::Birkhoff).unwrap();
    let want = brute_preimages(&sub, &phi, &base(), n);
    // Oracle: push each exact preimage along its orbit.
    let mut oracle: HashMap<(usize, i64, i64), f64> = HashMap::new();
    for (y, w) in want.values() {
        let mut p = y.clone();
        for _ in 0..n {
            let (fx, fy) = p.to_f64();
            *oracle.entry(key(p.face, fx, fy)).or_default() += w / n as f64;
            p = apply_map(sub.map(), &p);
        }
    }
    let mut got: HashMap<(usize, i64, i64), f64> = HashMap::new();
    for (p, w) in hat.points.iter().zip(&hat.weights) {
        *got.entry(key(p.face, p.x, p.y)).or_default() += w;
    }
    assert_eq!(got.len(), oracle.len());
    for (k, w) in &oracle {
        assert!((got[k] - w).abs() < 1e-13);
    }
}

#[test]
fn preimage_measures_are_probabilities() {
    let sub = Subsystem::carpet();
    for mode in [PreimageMode::Point, PreimageMode::Birkhoff] {
        for n in 0..=5 {
            let nu = preimage_measure(&sub, &trig().shifted(3.0), &base(), n, mode).unwrap();
            assert!((nu.total() - 1.0).abs() < 1e-12);
            assert!(nu.normalized);
        }
    }
}

#[test]
fn constant_potential_changes_nothing() {
    let sub = Subsystem::carpet();
    let a = preimage_measure(&sub, &trig(), &base(), 3, PreimageMode::Point).unwrap();
    let b = preimage_measure(&sub, &trig().shifted(-4.0), &base(), 3, PreimageMode::Point).unwrap();
    assert_eq!(a.points, b.points);
    for (x, y) in a.weights.iter().zip(&b.weights) {
        assert!((x - y).abs() < 1e-15);
    }
    let z = preimage_measure(&sub, &Potential::zero(), &base(), 2, PreimageMode::Point).unwrap();
    let c = preimage_measure(&sub, &Potential::constant(2.0), &base(), 2, PreimageMode::Point).unwrap();
    assert_eq!(z.weights, c.weights);
}

/// Local forward rule in floating point for a point strictly inside a cell.
fn forward(s: u32, p: &BranchPoint) -> (Colour, f64, f64) {
    let sf = f64::from(s);
    let (i, j) = ((p.x * sf).floor(), (p.y * sf).floor());
    let (w, v) = (p.x * sf - i, p.y * sf - j);
    let x = if i as i64 % 2 == 1 { 1.0 - w } else { w };
    let y = if j as i64 % 2 == 1 { 1.0 - v } else { v };
    (p.face.flip_if((i as i64 + j as i64) % 2 == 1), x, y)
}

#[test]
fn pushforward_reweights_the_previous_level() {
    // F_*ν_n(z) = ν_{n−1}(z)·L(1)(z)·Z_{n−1}/Z_n, where L is one step of the
    // split operator.
    let sub = Subsystem::carpet();
    let phi = trig();
    let x = base();
    for n in 2..=4 {
        let nu = preimage_measure(&sub, &phi, &x, n, PreimageMode::Point).unwrap();
        let prev = preimage_measure(&sub, &phi, &x, n - 1, PreimageMode::Point).unwrap();
        let mut pushed: HashMap<(usize, i64, i64), f64> = HashMap::new();
        for (p, w) in nu.points.iter().zip(&nu.weights) {
            let (f, a, b) = forward(3, p);
            *pushed.entry(key(f, a, b)).or_default() += w;
        }
        assert_eq!(pushed.len(), prev.points.len());
        let mut ratio = None;
        for (z, w) in prev.points.iter().zip(&prev.weights) {
            let l1 = apply_split_operator_at(&sub, &phi, |_| 1.0, z.face, z.x, z.y, 1).unwrap();
            let r = pushed[&key(z.face, z.x, z.y)] / (w * l1);
            let r0 = *ratio.get_or_insert(r);
            assert!((r - r0).abs() < 1e-12 * r0, "n={n}");
        }
    }
}

#[test]
fn streamed_integrals_match_materialized_measures() {
    let sub = Subsystem::carpet();
    let phi = trig();
    let g = Potential::coordinate_poly(&[(1, 0, 1.0), (0, 2, -0.5)]);
    for mode in [PreimageMode::Point, PreimageMode::Birkhoff] {
        let streamed = preimage_integrals(&sub, &phi, &g, &base(), 4, mode).unwrap();
        for n in 1..=4 {
            let nu = preimage_measure(&sub, &phi, &base(), n, mode).unwrap();
            let direct = nu.integrate(|p| g.eval_local(p.face, p.x, p.y));
            assert!((streamed[n - 1] - direct).abs() < 1e-12, "{mode:?} n={n}");
        }
    }
}

#[test]
fn skeleton_basepoint_is_rejected() {
    let sub = Subsystem::carpet();
    let x = SplitPoint::from_fractions(Colour::White, (1, 9), (1, 2)).unwrap();
    assert_eq!(preimage_measure(&sub, &trig(), &x, 3, PreimageMode::Point).unwrap_err().kind(), "boundary_point");
    assert_eq!(preimage_integrals(&sub, &trig(), &trig(), &x, 3, PreimageMode::Point).unwrap_err().kind(), "boundary_point");
}

#[test]
fn weak_star_gap_vanishes_for_constant_test_function() {
    let sub = Subsystem::carpet();
    let one = Potential::constant(1.0);
    let reference = Estimate { value: 1.0, error_bar: 0.0 };
    for mode in [PreimageMode::Point, PreimageMode::Birkhoff] {
        let t = weak_star_table(&sub, &trig(), &one, &base(), &[1, 3, 5], mode, reference).unwrap();
        for r in &t.rows {
            assert!(r.gap < 1e-14);
        }
    }
}

#[test]
fn preimages_approach_eigenmeasure_and_equilibrium_state() {
    let sub = Subsystem::carpet();
    let phi = trig();
    let g = Potential::torus_trig(&[(1, 1, 1.0)]);
    let sp = spectral(&sub, &phi, 5);
    let ns: Vec<usize> = (3..=7).collect();
    for mode in [PreimageMode::Point, PreimageMode::Birkhoff] {
        let r = equidistribution_reference(&sub, &g, &sp, mode).unwrap();
        let t = weak_star_table(&sub, &phi, &g, &base(), &ns, mode, r).unwrap();
        assert!(t.non_increasing, "{mode:?}");
        assert!(t.rows.last().unwrap().gap < 1e-2, "{mode:?}");
    }
    // Point mode converges geometrically, so deep levels agree with the
    // eigenmeasure up to its own discretization.
    let r = equidistribution_reference(&sub, &g, &sp, PreimageMode::Point).unwrap();
    let v = preimage_integrals(&sub, &phi, &g, &base(), 7, PreimageMode::Point).unwrap();
    assert!((v[6] - r.value).abs() < 1e-5);
}

#[test]
fn markov_entropy_examples() {
    let carpet = Subsystem::carpet();
    let u = MarkovMeasure::uniform(&carpet).unwrap();
    assert!((markov_entropy(&u) - 8f64.ln()).abs() < 1e-14);
    let d = MarkovMeasure::deterministic(&carpet).unwrap();
    assert_eq!(markov_entropy(&d), 0.0);
    // Two white cells in the white face: each may follow the other or itself.
    let pair = Subsystem::new(
        PillowMap::new(3).unwrap(),
        [SubTile::new(Colour::White, 0, 0), SubTile::new(Colour::White, 0, 2)],
    )
    .unwrap();
    let coin = MarkovMeasure::new(&pair, vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
    assert!((markov_entropy(&coin) - 2f64.ln()).abs() < 1e-15);
    assert_eq!(coin.stationary(), &[0.5, 0.5]);
}

#[test]
fn stationary_distributions_are_stationary() {
    let sub = Subsystem::carpet();
    for seed in 0..10 {
        let mm = MarkovMeasure::random(&sub, seed).unwrap();
        assert!(mm.stationarity_defect <= 1e-12);
        let pi = mm.stationary();
        for j in 0..mm.states() {
            let v: f64 = (0..mm.states()).map(|i| pi[i] * mm.transition()[i][j]).sum();
            assert!((v - pi[j]).abs() <= 1e-12);
        }
    }
    // The deterministic chain settles on the two fixed corner tiles.
    let d = MarkovMeasure::deterministic(&sub).unwrap();
    let support: Vec<usize> = (0..d.states()).filter(|&i| d.stationary()[i] > 0.0).collect();
    assert_eq!(support.len(), 2);
    for &i in &support {
        assert_eq!((sub.tiles()[i].i, sub.tiles()[i].j), (0, 0));
    }
}

#[test]
fn invalid_chains_are_rejected() {
    let sub = Subsystem::carpet();
    let n = sub.len();
    let u = MarkovMeasure::uniform(&sub).unwrap();
    // An edge against the colour rule.
    let mut q = u.transition().to_vec();
    let bad = (0..n).find(|&j| q[0][j] == 0.0).unwrap();
    let good = (0..n).find(|&j| q[0][j] > 0.0).unwrap();
    q[0][bad] = q[0][good];
    q[0][good] = 0.0;
    assert_eq!(MarkovMeasure::new(&sub, q).unwrap_err().kind(), "invalid_input");
    // A non-stochastic row.
    let mut q = u.transition().to_vec();
    q[1][good] += 0.1;
    assert!(MarkovMeasure::new(&sub, q).is_err());
    // A non-stationary distribution.
    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    assert!(MarkovMeasure::with_distribution(&sub, u.transition().to_vec(), pi).is_err());
}

/// Oracle: Σ over enumerated d-tiles of the cylinder probability of their
/// letter sequence times φ at the tile center.
fn brute_markov_integral(sub: &Subsystem, mm: &MarkovMeasure, phi: &Potential, d: usize) -> f64 {
    let mut acc = 0.0;
    for a in enumerate_tiles(sub, d).unwrap().tiles {
        let mut face = a.face;
        let mut letters = Vec::new();
        for &(i, j) in &a.digits {
            let t = SubTile::new(face, i, j);
            letters.push(sub.id_of(&t).unwrap());
            face = sub.map().cell_colour(face, i, j);
        }
        let mut p = mm.stationary()[letters[0]];
        for w in letters.windows(2) {
            p *= mm.transition()[w[0]][w[1]];
        }
        acc += p * phi.eval(&resolve_address(sub.map(), &a).unwrap().center());
    }
    acc
}

#[test]
fn markov_integral_matches_cylinder_oracle() {
    let sub = Subsystem::carpet();
    let phi = trig().plus(&Potential::coordinate_poly(&[(2, 1, 0.4)]));
    for seed in [1, 2] {
        let mm = MarkovMeasure::random(&sub, seed).unwrap();
        for d in 1..=3 {
            let got = markov_integral(&sub, &mm, &phi, d).unwrap();
            let want = brute_markov_integral(&sub, &mm, &phi, d);
            assert!((got.value - want).abs() < 1e-13, "seed {seed} d={d}");
        }
    }
}

#[test]
fn markov_integral_examples() {
    let sub = Subsystem::carpet();
    let mm = MarkovMeasure::random(&sub, 9).unwrap();
    assert_eq!(markov_integral(&sub, &mm, &Potential::constant(1.25), 4).unwrap().value, 1.25);
    // Linearity in φ.
    let a = markov_integral(&sub, &mm, &trig(), 4).unwrap().value;
    let b = markov_integral(&sub, &mm, &Potential::coordinate_poly(&[(1, 0, 1.0)]), 4).unwrap().value;
    let ab = markov_integral(&sub, &mm, &trig().scaled(2.0).plus(&Potential::coordinate_poly(&[(1, 0, -3.0)])), 4).unwrap().value;
    assert!((ab - (2.0 * a - 3.0 * b)).abs() < 1e-13);
    // The uniform chain is the zero-potential equilibrium state.
    let u = MarkovMeasure::uniform(&sub).unwrap();
    let st = equilibrium_state(&spectral(&sub, &Potential::zero(), 5), 5).unwrap();
    let eq = st.integrate(&sub, &trig()).unwrap();
    let mk = markov_integral(&sub, &u, &trig(), 5).unwrap();
    assert!((eq.value - mk.value).abs() < 1e-12);
    assert!((eq.error_bar - mk.error_bar).abs() < 1e-15);
}

#[test]
fn rate_function_examples() {
    let sub = Subsystem::carpet();
    let zero = Potential::zero();
    let sp = spectral(&sub, &zero, 3);
    let p = Estimate { value: sp.pressure, error_bar: 0.0 };
    let u = rate_function(&sub, &zero, p, &MarkovMeasure::uniform(&sub).unwrap(), 4).unwrap();
    assert!(u.value.abs() <= 1e-12);
    let d = rate_function(&sub, &zero, p, &MarkovMeasure::deterministic(&sub).unwrap(), 4).unwrap();
    assert!((d.value - 8f64.ln()).abs() < 1e-12);
    assert_eq!(d.entropy, 0.0);
    for seed in 0..20 {
        let r = rate_function(&sub, &zero, p, &MarkovMeasure::random(&sub, seed).unwrap(), 3).unwrap();
        assert!(r.raw >= 0.0);
        assert!((r.raw - (r.pressure - r.entropy - r.integral.value)).abs() < 1e-15);
    }
}

#[test]
fn rate_function_is_nonnegative_up_to_its_error_for_trig_potential() {
    let sub = Subsystem::carpet();
    let phi = trig();
    let sp = spectral(&sub, &phi, 5);
    let p = Estimate { value: sp.pressure, error_bar: 0.0 };
    for seed in 0..10 {
        let r = rate_function(&sub, &phi, p, &MarkovMeasure::random(&sub, seed).unwrap(), 5).unwrap();
        assert!(r.raw >= -r.quadrature_error, "seed {seed}");
        assert!(r.value >= -r.quadrature_error);
    }
    // Clipping only ever raises the value.
    let r = rate_function(&sub, &phi, Estimate { value: 0.0, error_bar: 0.5 }, &MarkovMeasure::uniform(&sub).unwrap(), 3).unwrap();
    assert!(r.raw < -0.5);
    assert_eq!(r.value, -r.quadrature_error);
}

#[test]
fn mgf_constant_direction_is_exact() {
    let sub = Subsystem::carpet();
    let rep = mgf_pressure_check(&sub, &trig(), &Potential::constant(0.7), 5, 3, SolverOptions::default()).unwrap();
    for r in &rep.rows {
        assert!((r.value - 0.7).abs() < 1e-12);
        assert!((r.target - 0.7).abs() < 1e-12);
        assert_eq!(r.error_bar, 0.0);
    }
}

#[test]
fn mgf_identity_at_moderate_depth() {
    let sub = Subsystem::carpet();
    let phi = trig();
    let psi = Potential::torus_trig(&[(2, 1, 0.3)]);
    let rep = mgf_pressure_check(&sub, &phi, &psi, 7, 4, SolverOptions::default()).unwrap();
    let last = rep.rows.last().unwrap();
    assert!(last.gap < 1e-2);
    // The gap shrinks with n like the boundary term it comes from.
    for w in rep.rows.windows(2) {
        assert!(w[1].gap <= w[0].gap);
    }
}

#[test]
fn mgf_small_amplitude_matches_derivative() {
    // For ψ = εφ the first-order Taylor term of P(φ+ψ) − P(φ) is ε·∫φ dμ_φ.
    let sub = Subsystem::carpet();
    let phi = trig();
    let eps = 1e-3;
    let rep = mgf_pressure_check(&sub, &phi, &phi.scaled(eps), 4, 4, SolverOptions::default()).unwrap();
    let st = equilibrium_state(&spectral(&sub, &phi, 4), 4).unwrap();
    let slope = st.integrate(&sub, &phi).unwrap().value;
    assert!((rep.rows[0].target / eps - slope).abs() < 1e-3);
}

#[test]
fn ldp_examples() {
    let sub = Subsystem::carpet();
    let phi = trig();
    let g = Potential::torus_trig(&[(1, 1, 1.0)]);
    let x = [base()];
    let ns = [1, 2, 3, 4, 5];
    // A radius covering the range of g: the event is everything.
    for r in ldp_empirical(&sub, &phi, &g, 0.0, 5.0, &ns, &x).unwrap() {
        assert!((r.mass - 1.0).abs() < 1e-12);
        assert!(r.log_rate.abs() < 1e-12);
    }
    // A center far outside the range: the event is empty.
    for r in ldp_empirical(&sub, &phi, &g, 10.0, 1.0, &ns, &x).unwrap() {
        assert_eq!(r.mass, 0.0);
        assert_eq!(r.log_rate, f64::NEG_INFINITY);
        assert!(serde_json::to_string(&r).unwrap().contains("\"-inf\""));
    }
    // Nested events have nested masses.
    let sp = spectral(&sub, &phi, 4);
    let a = equilibrium_state(&sp, 4).unwrap().integrate(&sub, &g).unwrap().value;
    let mut prev: Option<Vec<LdpRow>> = None;
    for r in [0.4, 0.2, 0.1, 0.05] {
        let rows = ldp_empirical(&sub, &phi, &g, a, r, &ns, &x).unwrap();
        if let Some(p) = &prev {
            for (small, big) in rows.iter().zip(p) {
                assert!(small.mass <= big.mass);
                assert!(small.log_rate <= big.log_rate);
            }
        }
        prev = Some(rows);
    }
}

#[test]
fn ldp_basepoint_sequences() {
    let sub = Subsystem::carpet();
    let g = Potential::coordinate_poly(&[(1, 0, 1.0)]);
    let pts = [base(), SplitPoint::from_fractions(Colour::White, (1, 2), (1, 2)).unwrap(), base()];
    let rows = ldp_empirical(&sub, &trig(), &g, 0.5, 0.1, &[1, 2, 3], &pts).unwrap();
    let single = ldp_empirical(&sub, &trig(), &g, 0.5, 0.1, &[2], &pts[1..2]).unwrap();
    assert_eq!(rows[1].mass, single[0].mass);
    assert!(ldp_empirical(&sub, &trig(), &g, 0.5, 0.1, &[4], &pts).is_err());
}

#[test]
fn sampled_rate_minimum_respects_the_event() {
    let sub = Subsystem::carpet();
    let zero = Potential::zero();
    let g = Potential::torus_trig(&[(1, 1, 1.0)]);
    let chains: Vec<MarkovMeasure> = (0..8).map(|s| MarkovMeasure::random(&sub, s).unwrap()).collect();
    let p = Estimate { value: 8f64.ln(), error_bar: 0.0 };
    let all = sampled_rate_minimum(&sub, &zero, &g, 0.0, 10.0, p, &chains, 3).unwrap();
    assert_eq!(all.chains_in_event, 8);
    assert!(all.min_rate.unwrap() >= 0.0);
    let none = sampled_rate_minimum(&sub, &zero, &g, 10.0, 0.5, p, &chains, 3).unwrap();
    assert_eq!(none.chains_in_event, 0);
    assert!(none.min_rate.is_none());
}

#[test]
fn mgf_gap_settles_as_depth_grows() {
    // At fixed n the gap is dominated by its own O(1/n) term, so deeper
    // discretizations converge to it rather than push it to zero.
    let sub = Subsystem::carpet();
    let phi = trig();
    let psi = Potential::torus_trig(&[(2, 1, 0.3)]);
    let gaps: Vec<f64> = (2..=5)
        .map(|k| mgf_pressure_check(&sub, &phi, &psi, 5, k, SolverOptions::default()).unwrap().rows[4].gap)
        .collect();
    let steps: Vec<f64> = gaps.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    for w in steps.windows(2) {
        assert!(w[1] < w[0] / 3.0, "{steps:?}");
    }
}

fn face_indicator() -> Potential {
    use subthurston::potential::{Factor, Term};
    Potential::zero().with_term(Term { coeff: 1.0, x: Factor::One, y: Factor::One, face: Some(Colour::White) })
}

#[test]
fn face_indicator_potentials_are_rejected_where_continuity_is_needed() {
    let sub = Subsystem::carpet();
    let ind = face_indicator();
    let kind = |e: subthurston::error::Error| e.kind();
    assert_eq!(transfer_matrix(&sub, &ind, 2).map(|_| ()).map_err(kind), Err("invalid_input"));
    assert_eq!(pressure_via_tiles(&sub, &ind, 3).map(|_| ()).map_err(kind), Err("invalid_input"));
    assert_eq!(pressure_via_operator(&sub, &ind, &base(), 3).map(|_| ()).map_err(kind), Err("invalid_input"));
    assert_eq!(preimage_measure(&sub, &ind, &base(), 2, PreimageMode::Point).map(|_| ()).map_err(kind), Err("invalid_input"));
    let r = preimage_integrals(&sub, &trig(), &ind, &base(), 2, PreimageMode::Birkhoff);
    assert_eq!(r.map(|_| ()).map_err(kind), Err("invalid_input"));
    let sp = spectral(&sub, &trig(), 2);
    assert!(equidistribution_reference(&sub, &ind, &sp, PreimageMode::Birkhoff).is_err());
    // Large-deviation events may be cut out by a face indicator.
    let rows = ldp_empirical(&sub, &Potential::zero(), &ind, 1.0, 0.25, &[1, 2, 3], &[base()]).unwrap();
    for r in &rows {
        assert!(r.mass > 0.0 && r.mass < 1.0);
    }
}
