//! The analysis commands. Every command is deterministic given its config
//! (probe randomness comes from the seeded generator recorded in the
//! config) and writes its outputs atomically.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};

use twistframe::frames::{
    decompose_with_details, fiber_gram, frame_bounds_single, frame_operator_apply,
    parsevalize_with_details, span_residual, truncated_gram_translates, FixpointOptions,
    GeneratorSet, InverseFrameOptions,
};
use twistframe::grids::{parse_generator, SampledFunction};
use twistframe::io;
use twistframe::probes::{random_member, random_span_member};
use twistframe::rangeops::{
    check_tsp_property_transfer, extract_multiplier_table, extract_range_operator, verify_tsp,
    CheckLine, CheckStatus, FrameOperator, InverseFrameOperator, LinearOperator, MatrixOperator,
    MultiplicationOperator, PropertyTransferReport, ScaledIdentity, TransferOptions,
};
use twistframe::twist::{half_phase, translate_clipped, LatticePoint};
use twistframe::zak::{bracket_of_fields, membership_residual, zak_transform, ZakField};

use crate::config::RunConfig;
use crate::CliError;

fn parse_generators(cfg: &RunConfig) -> Result<Vec<SampledFunction>, CliError> {
    if cfg.generators.is_empty() {
        return Err(CliError::Config("generator list is empty".into()));
    }
    let mut out = Vec::new();
    for expr in &cfg.generators {
        let g = parse_generator(cfg.spec, expr).map_err(|e| match e {
            twistframe::Error::Parse(m) => CliError::Config(m),
            other => CliError::Config(other.to_string()),
        })?;
        out.push(g);
    }
    Ok(out)
}

fn generator_set(cfg: &RunConfig) -> Result<GeneratorSet, CliError> {
    GeneratorSet::new(parse_generators(cfg)?)
        .map_err(|e| CliError::Config(format!("bad generator family: {e}")))
}

fn fixpoint_options(cfg: &RunConfig) -> FixpointOptions {
    FixpointOptions {
        zero_threshold: cfg.zero_threshold,
        ..FixpointOptions::default()
    }
}

/// Operator selection: `identity`, `mult:<symbol>`, `frameop`,
/// `matrix:<path>`.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorSpec {
    Identity,
    Mult { kx: i64, ky: i64 },
    FrameOp,
    Matrix(PathBuf),
}

pub fn parse_operator(text: &str) -> Result<OperatorSpec, CliError> {
    let t = text.trim();
    if t == "identity" {
        return Ok(OperatorSpec::Identity);
    }
    if t == "frameop" {
        return Ok(OperatorSpec::FrameOp);
    }
    if let Some(rest) = t.strip_prefix("mult:") {
        let (kx, ky) = parse_mult_exponent(rest)?;
        return Ok(OperatorSpec::Mult { kx, ky });
    }
    if let Some(rest) = t.strip_prefix("matrix:") {
        return Ok(OperatorSpec::Matrix(PathBuf::from(rest.trim())));
    }
    Err(CliError::Config(format!(
        "unknown operator '{t}', expected identity | mult:<symbol> | frameop | matrix:<path>"
    )))
}

/// Parse a 1-periodic plane-wave symbol `exp(2*pi*i*(a*x+b*y))` (with the
/// shorthand forms `exp(2*pi*i*x)`, `exp(2*pi*i*y)`, `exp(2*pi*i*2*y)`).
pub fn parse_mult_exponent(expr: &str) -> Result<(i64, i64), CliError> {
    let compact: String = expr.chars().filter(|c| !c.is_whitespace()).collect();
    let inner = compact
        .strip_prefix("exp(")
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| CliError::Config(format!("symbol '{expr}' is not exp(...)")))?;
    let linear = inner.strip_prefix("2*pi*i*").ok_or_else(|| {
        CliError::Config(format!("symbol '{expr}' must start with exp(2*pi*i*"))
    })?;
    let linear = linear
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .unwrap_or(linear);

    let mut kx = 0i64;
    let mut ky = 0i64;
    // split into signed terms
    let mut terms = Vec::new();
    let mut start = 0usize;
    for (i, ch) in linear.char_indices() {
        if (ch == '+' || ch == '-') && i > 0 {
            terms.push(&linear[start..i]);
            start = i;
        }
    }
    terms.push(&linear[start..]);
    for term in terms {
        if term.is_empty() {
            return Err(CliError::Config(format!("empty term in '{expr}'")));
        }
        let (sign, body) = match term.strip_prefix('-') {
            Some(rest) => (-1i64, rest),
            None => (1i64, term.strip_prefix('+').unwrap_or(term)),
        };
        let (coeff, var) = if let Some(v) = body.strip_suffix("*x") {
            (v, 'x')
        } else if let Some(v) = body.strip_suffix("*y") {
            (v, 'y')
        } else if body == "x" {
            ("1", 'x')
        } else if body == "y" {
            ("1", 'y')
        } else {
            return Err(CliError::Config(format!(
                "term '{term}' in '{expr}' is not k*x or k*y"
            )));
        };
        let k: i64 = coeff
            .parse()
            .map_err(|_| CliError::Config(format!("non-integer frequency '{coeff}' in '{expr}'")))?;
        match var {
            'x' => kx += sign * k,
            _ => ky += sign * k,
        }
    }
    Ok((kx, ky))
}

fn read_matrix_csv(path: &Path) -> Result<nalgebra::DMatrix<Complex64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read matrix '{}': {e}", path.display())))?;
    let mut entries = Vec::new();
    let mut dim = 0usize;
    for (ln, line) in text.lines().enumerate() {
        if ln == 0 && line.trim() == "row,col,re,im" {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(CliError::Config(format!(
                "matrix line {} is not row,col,re,im",
                ln + 1
            )));
        }
        let row: usize = parts[0].trim().parse().map_err(|_| bad_line(ln))?;
        let col: usize = parts[1].trim().parse().map_err(|_| bad_line(ln))?;
        let re: f64 = parts[2].trim().parse().map_err(|_| bad_line(ln))?;
        let im: f64 = parts[3].trim().parse().map_err(|_| bad_line(ln))?;
        dim = dim.max(row + 1).max(col + 1);
        entries.push((row, col, Complex64::new(re, im)));
    }
    let mut m = nalgebra::DMatrix::<Complex64>::zeros(dim, dim);
    for (r, c, v) in entries {
        m[(r, c)] = v;
    }
    Ok(m)
}

fn bad_line(ln: usize) -> CliError {
    CliError::Config(format!("bad number on matrix line {}", ln + 1))
}

fn build_operator(
    spec_op: &OperatorSpec,
    cfg: &RunConfig,
    gens: &GeneratorSet,
) -> Result<Box<dyn LinearOperator>, CliError> {
    match spec_op {
        OperatorSpec::Identity => Ok(Box::new(ScaledIdentity::identity())),
        OperatorSpec::Mult { kx, ky } => Ok(Box::new(MultiplicationOperator::from_exponential(
            cfg.spec, *kx, *ky,
        ))),
        OperatorSpec::FrameOp => Ok(Box::new(FrameOperator::new(
            gens.clone(),
            cfg.frameop_kmax,
        ))),
        OperatorSpec::Matrix(path) => {
            let matrix = read_matrix_csv(path)?;
            let (basis_set, _) = decompose_with_details(gens, fixpoint_options(cfg))?;
            let mut elems = Vec::new();
            for g in basis_set.iter() {
                for k in -cfg.basis_pmax..=cfg.basis_pmax {
                    for l in -cfg.basis_pmax..=cfg.basis_pmax {
                        elems.push(translate_clipped(g, LatticePoint::new(k, l)));
                    }
                }
            }
            if elems.len() != matrix.nrows() {
                return Err(CliError::Config(format!(
                    "matrix is {}x{} but the translate basis has {} elements",
                    matrix.nrows(),
                    matrix.ncols(),
                    elems.len()
                )));
            }
            Ok(Box::new(
                MatrixOperator::new(elems, matrix, format!("matrix[{}]", path.display()))
                    .map_err(|e| CliError::Config(e.to_string()))?,
            ))
        }
    }
}

fn ensure_outdir(cfg: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Config(format!("cannot create output dir: {e}")))
}

/// Bracket tables, frame bounds and the translate-Gram cross-check for
/// every generator.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<(), CliError> {
    ensure_outdir(cfg)?;
    let gens = parse_generators(cfg)?;
    let mut reports = Vec::new();
    for (i, g) in gens.iter().enumerate() {
        let z = zak_transform(g);
        let br = bracket_of_fields(&z, &z, cfg.eps_support);
        io::write_bracket_csv(&br, &cfg.output_dir.join(format!("bracket_{i}.csv")))?;

        let mut rep = frame_bounds_single(g, 1e-6)?;
        let single = GeneratorSet::single(g.clone());
        let (a_est, b_est) = truncated_gram_translates(&single, cfg.kmax)?;
        rep.lower_estimate = Some(a_est);
        rep.upper_estimate = Some(b_est);
        rep.kmax = Some(cfg.kmax);
        println!(
            "{}: A={:.6} B={:.6} A_est={:.6} B_est={:.6} frame={} parseval={}",
            g.label(),
            rep.lower,
            rep.upper,
            a_est,
            b_est,
            rep.is_frame,
            rep.is_parseval
        );
        reports.push(rep);
    }
    io::write_frame_reports_csv(&reports, &cfg.output_dir.join("frame_report.csv"))?;
    Ok(())
}

/// Parseval-ize each generator, dump the results and their verification
/// residuals.
pub fn cmd_parsevalize(cfg: &RunConfig) -> Result<(), CliError> {
    ensure_outdir(cfg)?;
    let gens = parse_generators(cfg)?;
    let mut rows = String::from(
        "label,bracket_min,bracket_max,omega_fraction,membership_forward,membership_reverse,fixpoint_deviation,iterations\n",
    );
    for (i, g) in gens.iter().enumerate() {
        let (psi, diag) = parsevalize_with_details(g, fixpoint_options(cfg))?;
        io::write_function_binary(&psi, &cfg.output_dir.join(format!("parseval_{i}.twsf")))?;
        let z = zak_transform(&psi);
        let br = bracket_of_fields(&z, &z, cfg.eps_support);
        let (lo, hi) = br.range_on_omega().unwrap_or((0.0, 0.0));
        let (fwd, _) = membership_residual(&psi, g)?;
        let (rev, _) = membership_residual(g, &psi)?;
        println!(
            "{}: bracket [{lo:.8}, {hi:.8}], membership {fwd:.3e}/{rev:.3e}, {} iterations",
            g.label(),
            diag.iterations
        );
        rows.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            csv_field(g.label()),
            lo,
            hi,
            br.omega_fraction(),
            fwd,
            rev,
            diag.deviation,
            diag.iterations
        ));
    }
    io::atomic_write(&cfg.output_dir.join("parseval_report.csv"), rows.as_bytes())?;
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains(',') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Orthogonal Parseval decomposition with a manifest and span residuals.
pub fn cmd_decompose(cfg: &RunConfig) -> Result<(), CliError> {
    ensure_outdir(cfg)?;
    let gens = generator_set(cfg)?;
    let (out, details) = decompose_with_details(&gens, fixpoint_options(cfg))?;
    let fields: Vec<ZakField> = out.iter().map(zak_transform).collect();

    let mut manifest = String::from("label,file,norm,fixpoint_deviation,iterations,max_cross\n");
    for (i, psi) in out.iter().enumerate() {
        let file = format!("parseval_{i}.twsf");
        io::write_function_binary(psi, &cfg.output_dir.join(&file))?;
        let mut max_cross = 0.0f64;
        for (j, other) in fields.iter().enumerate() {
            if i == j {
                continue;
            }
            let cross = fields[i].fiber_inner_field(other);
            max_cross = max_cross.max(cross.iter().map(|v| v.norm()).fold(0.0f64, f64::max));
        }
        manifest.push_str(&format!(
            "{},{},{},{},{},{}\n",
            csv_field(psi.label()),
            file,
            psi.norm(),
            details[i].deviation,
            details[i].iterations,
            max_cross
        ));
    }
    io::atomic_write(&cfg.output_dir.join("decompose_manifest.csv"), manifest.as_bytes())?;

    let nonzero: Vec<ZakField> = fields
        .iter()
        .zip(out.iter())
        .filter(|(_, f)| f.norm() > 1e-9)
        .map(|(z, _)| z.clone())
        .collect();
    let mut residuals = String::from("input_label,span_residual\n");
    for g in gens.iter() {
        let res = span_residual(&zak_transform(g), &nonzero, cfg.eps_rank) / g.norm();
        println!("span residual for {}: {res:.3e}", g.label());
        residuals.push_str(&format!("{},{}\n", csv_field(g.label()), res));
    }
    io::atomic_write(&cfg.output_dir.join("decompose_residuals.csv"), residuals.as_bytes())?;
    Ok(())
}

fn report_failed(report: &PropertyTransferReport) -> bool {
    !report.passed()
}

/// Verify the frame operator is shift preserving and that its range
/// operator (and the inverse's) matches the dual Gramian (and its
/// pseudo-inverse).
pub fn cmd_frameop(cfg: &RunConfig) -> Result<(), CliError> {
    ensure_outdir(cfg)?;
    let gens = generator_set(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let frame_op = FrameOperator::new(gens.clone(), cfg.frameop_kmax);
    let raw_fns: Vec<SampledFunction> = gens.iter().cloned().collect();
    let probes: Vec<SampledFunction> = (0..cfg.trials.max(1))
        .map(|_| random_member(&raw_fns, 1, &mut rng))
        .collect::<Result<_, _>>()?;
    let commute = verify_tsp(&frame_op, &probes, cfg.pmax)?;

    let (basis, _) = decompose_with_details(&gens, fixpoint_options(cfg))?;
    let fg = fiber_gram(&gens);
    let field = extract_range_operator(&frame_op, &basis)?;
    let worst_s = max_image_gap(&field, |bz| fg.dual_apply(bz));

    let inv_op = InverseFrameOperator::new(
        &gens,
        InverseFrameOptions {
            eps_rank: cfg.eps_rank,
            membership_tol: cfg.membership_tol,
            ..InverseFrameOptions::default()
        },
    );
    let inv_field = extract_range_operator(&inv_op, &basis)?;
    let worst_i = max_image_gap(&inv_field, |bz| fg.dual_pinv_apply(bz, cfg.eps_rank));

    let basis_fields: Vec<ZakField> = basis.iter().map(zak_transform).collect();
    let f = random_span_member(&basis_fields, 1, &mut rng);
    let sinv_f = inv_op.apply(&f)?;
    let round = frame_operator_apply(&gens, &sinv_f, cfg.frameop_kmax)?;
    let roundtrip = round.sub(&f)?.norm() / f.norm();

    let line = |id: &str, value: f64, tol: f64| CheckLine {
        id: id.to_string(),
        lhs: value,
        rhs: 0.0,
        residual: value,
        status: if value <= tol {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
    };
    let report = PropertyTransferReport {
        operator: frame_op.label().to_string(),
        lines: vec![
            line("tsp.commute", commute, 1e-6),
            line("thm5.2", worst_s, 1e-3),
            line("thm5.3", worst_i, 1e-3),
            line("inverse.roundtrip", roundtrip, 1e-3),
        ],
    };
    print!("{report}");
    io::write_property_report(&report, &cfg.output_dir.join("frameop_report.txt"))?;
    if report_failed(&report) {
        return Err(CliError::Numeric("frame operator checks failed".into()));
    }
    Ok(())
}

fn max_image_gap(
    field: &twistframe::rangeops::FiberOperatorField,
    expected: impl Fn(&ZakField) -> ZakField,
) -> f64 {
    let spec = field.spec();
    let mut worst = 0.0f64;
    for (i, bz) in field.basis().iter().enumerate() {
        let want = expected(bz);
        for a in 0..spec.torus_samples() {
            for b in 0..spec.periods() {
                if !field.active(i)[[a, b]] {
                    continue;
                }
                let mut d2 = 0.0f64;
                for c in 0..spec.len() {
                    d2 += (field.images()[i].values()[[a, b, c]] - want.values()[[a, b, c]])
                        .norm_sqr();
                }
                worst = worst.max((d2 * spec.dx()).sqrt());
            }
        }
    }
    worst
}

/// Measure the commutation residual of the selected operator and write the
/// property-transfer report.
pub fn cmd_verify_tsp(cfg: &RunConfig) -> Result<(), CliError> {
    ensure_outdir(cfg)?;
    let gens = generator_set(cfg)?;
    let op_spec = parse_operator(&cfg.operator)?;
    let op = build_operator(&op_spec, cfg, &gens)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let raw_fns: Vec<SampledFunction> = gens.iter().cloned().collect();
    let probes: Vec<SampledFunction> = (0..cfg.trials.max(1))
        .map(|_| random_member(&raw_fns, 1, &mut rng))
        .collect::<Result<_, _>>()?;
    let residual = verify_tsp(op.as_ref(), &probes, cfg.pmax)?;
    println!("commutation residual for {}: {residual:.6e}", op.label());

    let (basis, _) = decompose_with_details(&gens, fixpoint_options(cfg))?;
    let report = check_tsp_property_transfer(
        op.as_ref(),
        &basis,
        TransferOptions {
            probes: cfg.trials.max(2),
            seed: cfg.seed,
            pmax: cfg.pmax,
            basis_pmax: cfg.basis_pmax,
            ..TransferOptions::default()
        },
    )?;
    print!("{report}");
    let mut text = format!("# commutation residual {residual:.6e}\n");
    text.push_str(&report.to_string());
    io::atomic_write(&cfg.output_dir.join("tsp_report.txt"), text.as_bytes())?;
    if report_failed(&report) {
        return Err(CliError::Numeric(format!(
            "property transfer failed for {}",
            op.label()
        )));
    }
    Ok(())
}

/// Reproduce the multiplication-operator range table: extract the fiber
/// multiplier from the operator's action on a probe and compare it against
/// the plane-wave formula.
pub fn cmd_demo_mult(cfg: &RunConfig) -> Result<(), CliError> {
    ensure_outdir(cfg)?;
    let spec = cfg.spec;
    let (kx, ky) = match parse_operator(&cfg.operator)? {
        OperatorSpec::Mult { kx, ky } => (kx, ky),
        OperatorSpec::Identity => (0, 1), // default demo multiplier
        other => {
            return Err(CliError::Config(format!(
                "demo-mult needs a mult:<symbol> operator, got {other:?}"
            )))
        }
    };
    if kx != 0 {
        return Err(CliError::Config(
            "demo-mult reproduces the pure y-multiplier table; use mult:exp(2*pi*i*<b>*y)".into(),
        ));
    }
    let probe = if cfg.generators.is_empty() {
        twistframe::grids::make_gaussian(spec, (0.0, 0.0), 1.0)?
    } else {
        parse_generators(cfg)?.remove(0)
    };
    let op = MultiplicationOperator::from_exponential(spec, 0, ky);
    let (table, mask) = extract_multiplier_table(&op, &probe)?;

    let mut csv = String::from("xi,eta,re,im\n");
    let mut worst = 0.0f64;
    let mut defined = 0usize;
    for a in 0..spec.torus_samples() {
        for c in 0..spec.len() {
            if !mask[[a, c]] {
                continue;
            }
            defined += 1;
            let v = table[[a, c]];
            csv.push_str(&format!("{},{},{},{}\n", spec.xi(a), spec.coord(c), v.re, v.im));
            let want = half_phase(2.0 * ky as f64 * (spec.coord(c) - spec.xi(a)));
            worst = worst.max((v - want).norm());
        }
    }
    io::atomic_write(&cfg.output_dir.join("demo_mult.csv"), csv.as_bytes())?;
    let pass = worst <= 1e-6 && defined > 0;
    let report = format!(
        "mult.range {worst:.6e} 0 {worst:.6e} {}\n",
        if pass { "pass" } else { "fail" }
    );
    print!("{report}");
    io::atomic_write(&cfg.output_dir.join("demo_mult_report.txt"), report.as_bytes())?;
    if !pass {
        return Err(CliError::Numeric(format!(
            "multiplier table deviates by {worst:.3e}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operator_strings_parse() {
        assert_eq!(parse_operator("identity").unwrap(), OperatorSpec::Identity);
        assert_eq!(parse_operator("frameop").unwrap(), OperatorSpec::FrameOp);
        assert_eq!(
            parse_operator("mult:exp(2*pi*i*y)").unwrap(),
            OperatorSpec::Mult { kx: 0, ky: 1 }
        );
        assert_eq!(
            parse_operator("mult:exp(2*pi*i*(2*x-3*y))").unwrap(),
            OperatorSpec::Mult { kx: 2, ky: -3 }
        );
        assert_eq!(
            parse_operator("mult:exp(2 * pi * i * (x + y))").unwrap(),
            OperatorSpec::Mult { kx: 1, ky: 1 }
        );
        assert!(parse_operator("mult:exp(pi*i*y)").is_err());
        assert!(parse_operator("mult:exp(2*pi*i*0.5*y)").is_err());
        assert!(parse_operator("wobble").is_err());
    }
}
