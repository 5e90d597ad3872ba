use std::str::FromStr;

use serde::Serialize;
use serde_json::{json, Number, Value};
use subthurston::combinatorics::*;
use subthurston::equilibrium::*;
use subthurston::geometry::Colour;
use subthurston::potential::distortion_constants;
use subthurston::statistics::*;
use subthurston::transfer::*;

use crate::config::Config;
use crate::Failure;

/// One line of a convergence table. Cells without a meaningful value are
/// left empty.
#[derive(Debug, Serialize)]
pub struct CsvRow {
    pub n: usize,
    pub value: f64,
    pub error_bar: Option<f64>,
    pub target: Option<f64>,
    pub gap: Option<f64>,
}

/// A result document plus its tables. The first table goes to the --csv path,
/// later ones to sibling files named after their series.
pub struct Output {
    pub result: Value,
    pub tables: Vec<(&'static str, Vec<CsvRow>)>,
}

impl Output {
    fn plain(result: Value) -> Self {
        Output { result, tables: Vec::new() }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result types serialize")
}

fn exact(m: &TileMatrix) -> Value {
    let rows = m.to_strings();
    Value::Array(
        rows.iter()
            .map(|r| Value::Array(r.iter().map(|e| Value::Number(Number::from_str(e).expect("decimal integer"))).collect()))
            .collect(),
    )
}

fn estimate(e: Estimate) -> Value {
    json!({ "value": e.value, "error_bar": e.error_bar })
}

pub fn run(command: &str, cfg: &Config) -> Result<Output, Failure> {
    match command {
        "describe" => describe(cfg),
        "tile-matrix" => tile_matrix_cmd(cfg),
        "check" => check(cfg),
        "pressure" => pressure(cfg),
        "spectral" => spectral_cmd(cfg),
        "gibbs" => gibbs(cfg),
        "invariance" => invariance(cfg),
        "derivative" => derivative(cfg),
        "equidistribute" => equidistribute(cfg),
        "mgf" => mgf(cfg),
        "rate" => rate(cfg),
        "ldp" => ldp(cfg),
        other => Err(Failure::config(format!("unknown command {other}"))),
    }
}

fn solve(cfg: &Config, sub: &Subsystem, phi: &subthurston::potential::Potential) -> Result<SpectralData, Failure> {
    Ok(solve_spectral(transfer_matrix(sub, phi, cfg.params.depth)?, cfg.solver())?)
}

fn describe(cfg: &Config) -> Result<Output, Failure> {
    let a = cfg.tile_matrix()?;
    if cfg.is_abstract() {
        return Ok(Output::plain(json!({
            "s": Value::Null,
            "geometry": false,
            "tile_matrix": exact(&a),
            "matrix_class": to_value(&a.classify()),
        })));
    }
    let sub = cfg.subsystem()?;
    let phi = cfg.potential()?;
    let holder = phi.holder_data();
    let structure = check_structure(&sub, 8)?;
    let nf = structure.strong_primitive_witness.or(structure.primitive_witness);
    Ok(Output::plain(json!({
        "s": sub.map().s(),
        "degree": sub.map().degree(),
        "geometry": true,
        "tiles": to_value(&sub.tiles()),
        "tiles_per_face": { "white": sub.per_face_counts()[0], "black": sub.per_face_counts()[1] },
        "tiles_per_colour": {
            "white": sub.with_colour(Colour::White).len(),
            "black": sub.with_colour(Colour::Black).len(),
        },
        "surjective": sub.is_surjective(),
        "tile_matrix": exact(&a),
        "matrix_class": to_value(&a.classify()),
        "potential": to_value(&phi),
        "holder": to_value(&holder),
        "distortion_constants": nf.map(|n| to_value(&distortion_constants(sub.map(), &phi, n))),
    })))
}

fn tile_matrix_cmd(cfg: &Config) -> Result<Output, Failure> {
    let a = cfg.tile_matrix()?;
    let n = cfg.params.level;
    let an = a.pow(n as u32);
    Ok(Output::plain(json!({
        "level": n,
        "tile_matrix": exact(&a),
        "power": exact(&an),
        "total": Value::Number(Number::from_str(&an.total().to_string()).expect("decimal integer")),
        "matrix_class": to_value(&a.classify()),
    })))
}

fn check(cfg: &Config) -> Result<Output, Failure> {
    let sub = cfg.subsystem()?;
    let l = cfg.params.max_level;
    Ok(Output::plain(json!({
        "structure": to_value(&check_structure(&sub, l)?),
        "transitivity": to_value(&transitivity_report(&sub, l)?),
        "limit_set": to_value(&limit_set_diagnostics(&sub, l)?),
    })))
}

fn pressure_rows(rows: &[PressureRow], target: f64) -> Vec<CsvRow> {
    rows.iter()
        .map(|r| CsvRow { n: r.n, value: r.value, error_bar: Some(r.error_bar), target: Some(target), gap: Some((r.value - target).abs()) })
        .collect()
}

fn pressure(cfg: &Config) -> Result<Output, Failure> {
    let sub = cfg.subsystem()?;
    let phi = cfg.potential()?;
    let q = cfg.basepoint()?;
    let n = cfg.params.n_max;
    let tiles = pressure_via_tiles(&sub, &phi, n)?;
    let op = pressure_via_operator(&sub, &phi, &q, n)?;
    let sp = solve(cfg, &sub, &phi)?;
    let p = pressure_estimate(&sp, &phi);
    Ok(Output {
        result: json!({
            "via_tiles": to_value(&tiles),
            "via_operator": to_value(&op),
            "spectral": { "depth": sp.depth(), "pressure": estimate(p) },
        }),
        tables: vec![("tiles", pressure_rows(&tiles, p.value)), ("operator", pressure_rows(&op, p.value))],
    })
}

fn spectral_cmd(cfg: &Config) -> Result<Output, Failure> {
    let sub = cfg.subsystem()?;
    let phi = cfg.potential()?;
    let sp = solve(cfg, &sub, &phi)?;
    let (right, left) = eigen_residuals(&sp);
    let state = equilibrium_state(&sp, sp.depth())?;
    let mut out = json!({
        "depth": sp.depth(),
        "dimension": sp.matrix.dim(),
        "lambda": { "value": sp.lambda, "error_bar": right * sp.lambda },
        "pressure": estimate(pressure_estimate(&sp, &phi)),
        "iterations": sp.iterations,
        "right_residual": right,
        "left_residual": left,
        "eigenvalue_gap": sp.eigenvalue_gap,
        "u": { "min": sp.u.min(), "max": sp.u.max() },
        "m": { "min": sp.m.weights.iter().copied().fold(f64::INFINITY, f64::min), "max": sp.m.weights.iter().copied().fold(0.0, f64::max) },
        "equilibrium_provenance": state.provenance,
    });
    if cfg.params.dump_vectors {
        out["u"]["values"] = to_value(&sp.u.values);
        out["m"]["weights"] = to_value(&sp.m.weights);
    }
    if cfg.params.distortion_pairs > 0 {
        let rep = verify_distortion(&sub, &phi, sp.pressure, cfg.params.distortion_level, cfg.params.distortion_pairs, cfg.seed())?;
        let mut v = to_value(&rep);
        v["violations"] = json!(rep.violations());
        out["distortion"] = v;
    }
    Ok(Output::plain(out))
}

fn gibbs(cfg: &Config) -> Result<Output, Failure> {
    let sub = cfg.subsystem()?;
    let phi = cfg.potential()?;
    let sp = solve(cfg, &sub, &phi)?;
    let state = equilibrium_state(&sp, sp.depth())?;
    let levels = cfg.params.levels.unwrap_or(sp.depth());
    let rep = gibbs_check(&sub, &phi, &state, sp.pressure, levels)?;
    Ok(Output::plain(json!({
        "depth": sp.depth(),
        "pressure": estimate(pressure_estimate(&sp, &phi)),
        "report": to_value(&rep),
    })))
}

fn invariance(cfg: &Config) -> Result<Output, Failure> {
    let sub = cfg.subsystem()?;
    let phi = cfg.potential()?;
    let sp = solve(cfg, &sub, &phi)?;
    let state = equilibrium_state(&sp, sp.depth())?;
    let levels = cfg.params.levels.unwrap_or(sp.depth()).min(sp.depth());
    let defects = (1..=levels)
        .map(|n| Ok(json!({ "n": n, "defect": invariance_check(&state.measure, n)? })))
        .collect::<Result<Vec<Value>, Failure>>()?;
    let mut out = json!({ "depth": sp.depth(), "equilibrium": defects, "tolerance": cfg.params.tol });
    if cfg.params.negative_control {
        let control = random_tile_measure(sp.index().clone(), cfg.seed())?;
        let defects = (1..=levels)
            .map(|n| Ok(json!({ "n": n, "defect": invariance_check(&control, n)? })))
            .collect::<Result<Vec<Value>, Failure>>()?;
        out["negative_control"] = Value::Array(defects);
    }
    Ok(Output::plain(out))
}

fn derivative(cfg: &Config) -> Result<Output, Failure> {
    let sub = cfg.subsystem()?;
    let phi = cfg.potential()?;
    let gamma = cfg.required("gamma", &cfg.params.gamma)?;
    let rep = pressure_derivative_check(&sub, &phi, &gamma, cfg.params.epsilon, cfg.params.depth, cfg.solver(), cfg.params.richardson)?;
    Ok(Output::plain(to_value(&rep)))
}

fn equidistribute(cfg: &Config) -> Result<Output, Failure> {
    let sub = cfg.subsystem()?;
    let phi = cfg.potential()?;
    let g = cfg.required("g", &cfg.params.g)?;
    let x = cfg.basepoint()?;
    let sp = solve(cfg, &sub, &phi)?;
    let mode = cfg.params.mode;
    let reference = equidistribution_reference(&sub, &g, &sp, mode)?;
    let table = weak_star_table(&sub, &phi, &g, &x, &cfg.n_list(), mode, reference)?;
    let rows = table
        .rows
        .iter()
        .map(|r| CsvRow { n: r.n, value: r.value, error_bar: Some(r.error_bar), target: Some(r.reference), gap: Some(r.gap) })
        .collect();
    Ok(Output { result: json!({ "reference": estimate(reference), "table": to_value(&table) }), tables: vec![("weak_star", rows)] })
}

fn mgf(cfg: &Config) -> Result<Output, Failure> {
    let sub = cfg.subsystem()?;
    let phi = cfg.potential()?;
    let psi = cfg.required("psi", &cfg.params.psi)?;
    let rep = mgf_pressure_check(&sub, &phi, &psi, cfg.params.n_max, cfg.params.depth, cfg.solver())?;
    let rows = rep
        .rows
        .iter()
        .map(|r| CsvRow { n: r.n, value: r.value, error_bar: Some(r.error_bar), target: Some(r.target), gap: Some(r.gap) })
        .collect();
    Ok(Output { result: to_value(&rep), tables: vec![("mgf", rows)] })
}

fn rate(cfg: &Config) -> Result<Output, Failure> {
    let sub = cfg.subsystem()?;
    let phi = cfg.potential()?;
    let sp = solve(cfg, &sub, &phi)?;
    let p = pressure_estimate(&sp, &phi);
    let depth = cfg.params.depth;
    let chain = cfg.chain(&sub)?;
    let main = rate_function(&sub, &phi, p, &chain, depth)?;
    let mut out = json!({
        "pressure": estimate(p),
        "chain": { "states": chain.states(), "stationarity_defect": chain.stationarity_defect },
        "report": to_value(&main),
    });
    if cfg.params.random_chains > 0 {
        let mut raws = Vec::with_capacity(cfg.params.random_chains);
        for i in 0..cfg.params.random_chains as u64 {
            let mm = MarkovMeasure::random(&sub, cfg.seed().wrapping_add(i))?;
            raws.push(rate_function(&sub, &phi, p, &mm, depth)?.raw);
        }
        let min = raws.iter().copied().fold(f64::INFINITY, f64::min);
        out["random_chains"] = json!({ "count": raws.len(), "min_raw": min, "error_bar": main.quadrature_error, "raw": raws });
    }
    Ok(Output::plain(out))
}

fn ldp(cfg: &Config) -> Result<Output, Failure> {
    let sub = cfg.subsystem()?;
    let phi = cfg.potential()?;
    let g = cfg.required("g", &cfg.params.g)?;
    let (Some(center), Some(radius)) = (cfg.params.center, cfg.params.radius) else {
        return Err(Failure::config("params.center and params.radius are required for ldp"));
    };
    let rows = ldp_empirical(&sub, &phi, &g, center, radius, &cfg.n_list(), &cfg.basepoints()?)?;
    let mut out = json!({ "center": center, "radius": radius, "rows": to_value(&rows) });
    let mut target = None;
    if cfg.params.sampled_chains > 0 {
        let sp = solve(cfg, &sub, &phi)?;
        let p = pressure_estimate(&sp, &phi);
        let chains = (0..cfg.params.sampled_chains as u64)
            .map(|i| MarkovMeasure::random(&sub, cfg.seed().wrapping_add(i)))
            .collect::<Result<Vec<_>, _>>()?;
        let s = sampled_rate_minimum(&sub, &phi, &g, center, radius, p, &chains, cfg.params.depth)?;
        target = s.min_rate.map(|r| -r);
        out["sampled_rate"] = to_value(&s);
        out["pressure"] = estimate(p);
    }
    let table = rows
        .iter()
        .map(|r| CsvRow { n: r.n, value: r.log_rate, error_bar: None, target, gap: target.map(|t| (r.log_rate - t).abs()) })
        .collect();
    Ok(Output { result: out, tables: vec![("ldp", table)] })
}
