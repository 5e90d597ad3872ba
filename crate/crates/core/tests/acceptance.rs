//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails. Run with
//! `cargo test -p subthurston --test acceptance`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subthurston::combinatorics::*;
use subthurston::equilibrium::*;
use subthurston::geometry::*;
use subthurston::potential::Potential;
use subthurston::statistics::*;
use subthurston::transfer::*;

type Outcome = Result<String, String>;

fn trig() -> Potential {
    Potential::torus_trig(&[(1, 1, 0.3)])
}

fn spectral(sub: &Subsystem, phi: &Potential, k: usize) -> SpectralData {
    solve_spectral(transfer_matrix(sub, phi, k).unwrap(), SolverOptions::default()).unwrap()
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_surjective(rng: &mut ChaCha8Rng, s: u32) -> Subsystem {
    loop {
        let mut tiles = Vec::new();
        for face in Colour::ALL {
            for i in 0..s {
                for j in 0..s {
                    if rng.gen_bool(0.5) {
                        tiles.push(SubTile::new(face, i, j));
                    }
                }
            }
        }
        if tiles.is_empty() {
            continue;
        }
        let sub = Subsystem::new(PillowMap::new(s).unwrap(), tiles).unwrap();
        if sub.is_surjective() {
            return sub;
        }
    }
}

fn power_law() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    for c in 0..20 {
        let sub = random_surjective(&mut rng, if c % 2 == 0 { 2 } else { 3 });
        let a = sub.tile_matrix();
        for (n, counted) in count_tiles_by_enumeration(&sub, 8).iter().enumerate().skip(1) {
            if a.pow(n as u32) != TileMatrix::from_u64(*counted) {
                mismatches += 1;
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(mismatches == 0 && secs < 10.0, format!("20 subsystems, n <= 8, {mismatches} mismatches, {secs:.2} s"))
}

fn carpet_pressure() -> Outcome {
    let t = Instant::now();
    let sub = Subsystem::carpet();
    let zero = Potential::zero();
    let log8 = 8f64.ln();
    let a = sub.tile_matrix();
    // Integer identity behind the floating point tables: 2·8ⁿ level-n tiles.
    let integer_ok = (1..=10u32).all(|n| a.pow(n).total() == num_bigint::BigUint::from(2u64 * 8u64.pow(n)));
    let tiles = pressure_via_tiles(&sub, &zero, 10).unwrap();
    let q = SplitPoint::from_fractions(Colour::White, (3, 7), (5, 11)).unwrap();
    let op = pressure_via_operator(&sub, &zero, &q, 10).unwrap();
    let worst = tiles.iter().chain(&op).map(|r| (r.value - log8).abs()).fold(0.0, f64::max);
    let sp = spectral(&sub, &zero, 4);
    let secs = t.elapsed().as_secs_f64();
    check(
        integer_ok && worst <= 4.0 * f64::EPSILON && (sp.lambda - 8.0).abs() <= 1e-8 && secs < 5.0,
        format!("max |P_n - log 8| = {worst:.1e}, |lambda - 8| = {:.1e}, {secs:.2} s", (sp.lambda - 8.0).abs()),
    )
}

fn full_pressure() -> Outcome {
    let sub = Subsystem::full(3).unwrap();
    let zero = Potential::zero();
    let log9 = 9f64.ln();
    let q = SplitPoint::from_fractions(Colour::Black, (3, 7), (5, 11)).unwrap();
    let t = pressure_via_tiles(&sub, &zero, 10).unwrap()[9].value;
    let o = pressure_via_operator(&sub, &zero, &q, 10).unwrap()[9].value;
    let s = spectral(&sub, &zero, 4).pressure;
    let worst = [t, o, s].iter().map(|v| (v - log9).abs()).fold(0.0, f64::max);
    check(worst <= 1e-3, format!("tiles {t:.12}, operator {o:.12}, spectral {s:.12}, max gap {worst:.1e}"))
}

fn shift_exactness() -> Outcome {
    let sub = Subsystem::carpet();
    let base = spectral(&sub, &trig(), 4);
    let mut worst: f64 = 0.0;
    for c in [-1.0, 0.5, 2.0] {
        let sh = spectral(&sub, &trig().shifted(c), 4);
        worst = worst.max((sh.pressure - base.pressure - c).abs());
    }
    check(worst <= 1e-12, format!("max |dP - c| = {worst:.1e}"))
}

fn normalized_fixed_point() -> Outcome {
    let sub = Subsystem::carpet();
    let phi = trig();
    let sp = spectral(&sub, &phi, 6);
    let mut worst: f64 = 0.0;
    let tiles = enumerate_tiles(&sub, 6).unwrap().tiles;
    for a in &tiles {
        let q = resolve_address(sub.map(), a).unwrap().center();
        let v = normalized_apply(&sub, &phi, &sp, |_| 1.0, &q, 1).unwrap();
        worst = worst.max((v - 1.0).abs());
    }
    check(worst <= 1e-6, format!("sup |L1 - 1| = {worst:.1e} over {} depth-6 tile centers", tiles.len()))
}

fn gibbs() -> Outcome {
    let sub = Subsystem::carpet();
    let phi = trig();
    let sp = spectral(&sub, &phi, 6);
    let st = equilibrium_state(&sp, 6).unwrap();
    let rep = gibbs_check(&sub, &phi, &st, sp.pressure, 6).unwrap();
    check(
        rep.within_bounds && rep.spread.is_finite() && rep.slope_mean.abs() <= 1e-3,
        format!(
            "C_mu = {:.3e}, spread = {:.4}, slope of mean log-ratio = {:.1e} (envelope slopes {:.1e} / {:.1e})",
            rep.c_mu, rep.spread, rep.slope_mean, rep.slope_min, rep.slope_max
        ),
    )
}

fn derivative() -> Outcome {
    let t = Instant::now();
    let sub = Subsystem::carpet();
    let phi = trig();
    let d = pressure_derivative_check(&sub, &phi, &trig(), 1e-3, 6, SolverOptions::default(), false).unwrap();
    let secs = t.elapsed().as_secs_f64();
    check(d.gap <= 5e-3 && secs < 60.0, format!("finite difference {:.9}, integral {:.9}, gap {:.1e}, {secs:.1} s", d.finite_diff, d.integral.value, d.gap))
}

fn equidistribution() -> Outcome {
    let sub = Subsystem::carpet();
    let phi = trig();
    let g = Potential::torus_trig(&[(1, 1, 1.0)]);
    let sp = spectral(&sub, &phi, 6);
    let r = equidistribution_reference(&sub, &g, &sp, PreimageMode::Birkhoff).unwrap();
    let ns: Vec<usize> = (4..=10).collect();
    let t = weak_star_table(&sub, &phi, &g, &SplitPoint::center(Colour::White), &ns, PreimageMode::Birkhoff, r).unwrap();
    let last = t.rows.last().unwrap().gap;
    check(last <= 1e-2 && t.non_increasing, format!("gap at n = 10 {last:.2e}, slope over n = 4..10 {:.1e}", t.slope))
}

fn mgf() -> Outcome {
    let sub = Subsystem::carpet();
    let psi = Potential::torus_trig(&[(2, 1, 0.3)]);
    let rep = mgf_pressure_check(&sub, &trig(), &psi, 10, 6, SolverOptions::default()).unwrap();
    let row = rep.rows.last().unwrap();
    check(row.gap <= 1e-2, format!("n = 10: value {:.6}, target {:.6}, gap {:.1e}", row.value, row.target, row.gap))
}

fn rate() -> Outcome {
    let sub = Subsystem::carpet();
    let zero = Potential::zero();
    let sp = spectral(&sub, &zero, 4);
    let p = Estimate { value: sp.pressure, error_bar: 0.0 };
    let u = rate_function(&sub, &zero, p, &MarkovMeasure::uniform(&sub).unwrap(), 4).unwrap();
    let d = rate_function(&sub, &zero, p, &MarkovMeasure::deterministic(&sub).unwrap(), 4).unwrap();
    let mut lowest = f64::INFINITY;
    for seed in 0..50 {
        let r = rate_function(&sub, &zero, p, &MarkovMeasure::random(&sub, seed).unwrap(), 4).unwrap();
        lowest = lowest.min(r.raw);
    }
    let dgap = (d.value - 8f64.ln()).abs();
    check(
        u.value <= 1e-2 && lowest >= -1e-6 && dgap <= 1e-9,
        format!("I(uniform) = {:.1e}, min I over 50 random chains = {lowest:.4}, |I(deterministic) - log 8| = {dgap:.1e}", u.value),
    )
}

fn structure() -> Outcome {
    let carpet = check_structure(&Subsystem::carpet(), 8).unwrap();
    let same = check_structure(&Subsystem::same_colour_only(3).unwrap(), 8).unwrap();
    let two = limit_set_diagnostics(&Subsystem::two_point(), 4).unwrap();
    let witness_ok = carpet.strongly_primitive && carpet.strong_primitive_witness.is_some_and(|w| w <= 3);
    let two_ok = two.limit_set_points_at_most.as_deref() == Some("2") && two.isolated_point_risk;
    check(
        witness_ok && !same.irreducible && two_ok,
        format!(
            "carpet witness {:?}, same-colour irreducible {}, two-tile limit set <= {:?} points, isolated-point risk {}",
            carpet.strong_primitive_witness, same.irreducible, two.limit_set_points_at_most, two.isolated_point_risk
        ),
    )
}

fn distortion() -> Outcome {
    let sub = Subsystem::carpet();
    let mut parts = Vec::new();
    let mut total = 0;
    for phi in [trig(), Potential::torus_trig(&[(1, 1, 0.3), (2, 1, -0.4)]).plus(&Potential::coordinate_poly(&[(1, 1, 0.5)]))] {
        let sp = spectral(&sub, &phi, 5);
        let rep = verify_distortion(&sub, &phi, sp.pressure, 6, 1000, 7).unwrap();
        total += rep.violations();
        parts.push(format!("{} pairs, {} violations", rep.pairs_checked, rep.violations()));
    }
    check(total == 0, parts.join("; "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("tile-matrix power law", power_law),
        ("carpet pressure", carpet_pressure),
        ("full-map pressure", full_pressure),
        ("constant-shift exactness", shift_exactness),
        ("normalized-operator fixed point", normalized_fixed_point),
        ("Gibbs bounds", gibbs),
        ("derivative identity", derivative),
        ("equidistribution", equidistribution),
        ("MGF/pressure identity", mgf),
        ("rate function", rate),
        ("structure checks", structure),
        ("distortion verification", distortion),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (tag, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} [{:2}] {name}: {detail} ({:.1} s)", i + 1, t.elapsed().as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
