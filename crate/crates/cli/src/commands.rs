//! One function per CLI command.

use crate::output::{boolean, float, int, text, CsvField, CsvWriter};
use crate::spec_file::ParsedModel;
use crate::{CliError, RunConfig};
use num_complex::Complex64;
use ruin_core::exact::GridSpec;
use ruin_core::inversion::{invert_in_u, invert_in_u_t, InversionSettings};
use ruin_core::model::ValidatedModel;
use ruin_core::simulate::{ChunkSums, DirectContext, EstimatorMethod, IsContext, RuinEstimate, CHUNK};
use ruin_core::{asymptotics, exact, simulate, transforms};

fn need<T: Copy>(value: Option<T>, what: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Validation(format!("missing required flag --{what}")))
}

fn sorted_grid(grid: &[f64], what: &str) -> Result<Vec<f64>, CliError> {
    if grid.is_empty() {
        return Err(CliError::Validation(format!("empty grid: --{what}")));
    }
    let mut g = grid.to_vec();
    g.sort_by(|a, b| {
        a.partial_cmp(b)
            .ok_or(())
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    if g.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Validation(format!("non-finite entry in --{what}")));
    }
    Ok(g)
}

fn variant_of(config: &RunConfig) -> Result<transforms::TransformVariant, CliError> {
    match config.variant.as_deref() {
        None | Some("base") => Ok(transforms::TransformVariant::Base),
        Some("brownian") => Ok(transforms::TransformVariant::Brownian),
        Some("nondefault") => Ok(transforms::TransformVariant::NonDefault),
        Some(other) => Err(CliError::Validation(format!(
            "unknown variant {other:?}; use base, brownian or nondefault"
        ))),
    }
}

pub fn transform(config: &RunConfig, parsed: &ParsedModel) -> Result<String, CliError> {
    let model = parsed.portfolio()?;
    let gammas = sorted_grid(&config.gamma, "gamma")?;
    let theta = config.theta.unwrap_or(0.0);
    let n = need(config.n, "n")?;
    let variant = variant_of(config)?;
    let mut csv = CsvWriter::new("transform", &parsed.sha256, config.seed);
    csv.header(&["variant", "n", "theta", "gamma", "psi"]);
    for &gamma in &gammas {
        let query = transforms::TransformQuery {
            gamma,
            theta,
            level: n,
            variant,
        };
        let psi = transforms::evaluate(&model, &query)?;
        csv.row(&[
            text(format!("{variant:?}").to_lowercase()),
            int(n as i64),
            float(theta),
            float(gamma),
            float(psi),
        ]);
    }
    csv.write_to(&config.out)?;
    Ok(format!(
        "transform: {} gamma points at n = {n}, theta = {theta} -> {}",
        gammas.len(),
        config.out.display()
    ))
}

pub fn invert(config: &RunConfig, parsed: &ParsedModel) -> Result<String, CliError> {
    let model = parsed.portfolio()?;
    let us = sorted_grid(&config.u_grid, "u-grid")?;
    let n = need(config.n, "n")?;
    let variant = variant_of(config)?;
    let settings = InversionSettings::default();
    let mut csv = CsvWriter::new("invert", &parsed.sha256, config.seed);

    if let Some(theta) = config.theta {
        // Exponential horizon: one inversion per reserve.
        csv.header(&["u", "theta", "p", "raw", "est_error"]);
        let th = Complex64::from(theta);
        for &u in &us {
            let f = |g: Complex64| match variant {
                transforms::TransformVariant::Base => transforms::psi_complex(&model, n, th, g),
                transforms::TransformVariant::Brownian => {
                    transforms::psi_brownian_complex(&model, n, th, g)
                }
                transforms::TransformVariant::NonDefault => {
                    transforms::psi_nondefault_complex(&model, n, theta, g)
                }
            };
            let inv = invert_in_u(&f, u, &settings)?;
            csv.row(&[
                float(u),
                float(theta),
                float(inv.value),
                float(inv.raw),
                float(inv.est_error),
            ]);
        }
        csv.write_to(&config.out)?;
        Ok(format!(
            "invert: {} reserves at exponential horizon rate {theta} -> {}",
            us.len(),
            config.out.display()
        ))
    } else {
        // Fixed horizons via the double transform.
        let ts = sorted_grid(&config.t_grid, "t-grid")?;
        if variant == transforms::TransformVariant::NonDefault {
            return Err(CliError::Validation(
                "fixed-horizon inversion is not available for the non-default variant; \
                 its level constants need a real horizon rate"
                    .into(),
            ));
        }
        csv.header(&["u", "t", "p", "raw", "est_error"]);
        for &u in &us {
            for &t in &ts {
                let f = |g: Complex64, th: Complex64| match variant {
                    transforms::TransformVariant::Base => transforms::psi_complex(&model, n, th, g),
                    transforms::TransformVariant::Brownian => {
                        transforms::psi_brownian_complex(&model, n, th, g)
                    }
                    transforms::TransformVariant::NonDefault => unreachable!(),
                };
                let inv = invert_in_u_t(&f, u, t, &settings)?;
                csv.row(&[
                    float(u),
                    float(t),
                    float(inv.value),
                    float(inv.raw),
                    float(inv.est_error),
                ]);
            }
        }
        csv.write_to(&config.out)?;
        Ok(format!(
            "invert: {} reserve x {} horizon points -> {}",
            us.len(),
            ts.len(),
            config.out.display()
        ))
    }
}

fn grid_spec_for(
    config: &RunConfig,
    model: &ValidatedModel,
    n: usize,
    u: f64,
    t_max: f64,
) -> Result<GridSpec, CliError> {
    let mut spec = GridSpec::covering(model, n, u, t_max)?;
    if let Some(nu) = config.grid_nu {
        spec.n_u = nu;
    }
    if let Some(nt) = config.grid_nt {
        spec.n_t = nt;
    }
    if let Some(u_max) = config.u_max {
        spec.u_max = u_max;
    }
    Ok(spec)
}

pub fn exact(config: &RunConfig, parsed: &ParsedModel) -> Result<String, CliError> {
    let model = parsed.portfolio()?;
    let n = need(config.n, "n")?;
    let u = need(config.u, "u")?;
    let t_max = need(config.t, "t")?;
    let spec = grid_spec_for(config, &model, n, u, t_max)?;
    let grids = exact::pn_grids(&model, n, &spec)?;

    // Per-level ruin curves over time at the queried reserve.
    let mut csv = CsvWriter::new("exact", &parsed.sha256, config.seed);
    let mut columns = vec!["t".to_string()];
    columns.extend((1..=n).map(|k| format!("p_n{k}")));
    let column_refs: Vec<&str> = columns.iter().map(|s| s.as_str()).collect();
    csv.header(&column_refs);
    let last = &grids[n - 1];
    for t in last.t_nodes() {
        let mut fields: Vec<CsvField> = vec![float(t)];
        for g in &grids {
            fields.push(float(g.value_at(u, t)));
        }
        csv.row(&fields);
    }
    csv.write_to(&config.out)?;

    // Optional full-grid export: header row carries the reserve nodes, the
    // first column the time nodes.
    if let Some(grid_path) = &config.emit_grid {
        let mut gcsv = CsvWriter::new("exact-grid", &parsed.sha256, config.seed);
        let mut head = vec!["t".to_string()];
        head.extend(last.u_nodes().map(|v| format!("{v}")));
        let head_refs: Vec<&str> = head.iter().map(|s| s.as_str()).collect();
        gcsv.header(&head_refs);
        for (j, t) in last.t_nodes().enumerate() {
            let mut fields: Vec<CsvField> = vec![float(t)];
            for i in 0..=last.n_u {
                fields.push(float(last.node(i, j)));
            }
            gcsv.row(&fields);
        }
        gcsv.write_to(grid_path)?;
    }
    Ok(format!(
        "exact: levels 1..={n} at u = {u}, t <= {t_max} (tail resolved: {}) -> {}",
        grids.iter().all(|g| g.tail_ok),
        config.out.display()
    ))
}

/// Run a simulation context over chunks, optionally on several workers.
/// Chunks are merged in index order, so the result does not depend on the
/// worker count.
fn run_chunked<F>(runs: u64, workers: usize, run_range: F) -> ChunkSums
where
    F: Fn(u64, u64) -> ChunkSums + Sync,
{
    let chunk_count = runs.div_ceil(CHUNK);
    let mut partials: Vec<Option<ChunkSums>> = (0..chunk_count).map(|_| None).collect();
    if workers <= 1 {
        for (c, slot) in partials.iter_mut().enumerate() {
            let from = c as u64 * CHUNK;
            let to = (from + CHUNK).min(runs);
            *slot = Some(run_range(from, to));
        }
    } else {
        let next = std::sync::atomic::AtomicU64::new(0);
        let slots = std::sync::Mutex::new(&mut partials);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let c = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if c >= chunk_count {
                        break;
                    }
                    let from = c * CHUNK;
                    let to = (from + CHUNK).min(runs);
                    let sums = run_range(from, to);
                    slots.lock().unwrap()[c as usize] = Some(sums);
                });
            }
        });
    }
    let mut total = partials[0].take().unwrap();
    for slot in partials.iter_mut().skip(1) {
        total.merge(&slot.take().unwrap());
    }
    total
}

fn estimate_rows(csv: &mut CsvWriter, est: &RuinEstimate, n: usize, u: f64, t: f64) {
    csv.row(&[
        text(est.method.tag()),
        int(n as i64),
        float(u),
        float(t),
        int(est.runs as i64),
        int(est.seed as i64),
        float(est.estimate),
        float(est.std_error),
        float(est.ci95.0),
        float(est.ci95.1),
        float(est.variance),
    ]);
}

pub fn simulate(config: &RunConfig, parsed: &ParsedModel) -> Result<String, CliError> {
    let model = parsed.portfolio()?;
    let n = need(config.n, "n")?;
    let u = need(config.u, "u")?;
    let ts = sorted_grid(&config.t_grid, "t-grid")?;
    let runs = config.runs.unwrap_or(100_000);
    if runs == 0 {
        return Err(CliError::Validation("need at least one run".into()));
    }
    let method = config.method.as_deref().unwrap_or("is");
    let mut csv = CsvWriter::new("simulate", &parsed.sha256, config.seed);
    csv.header(&[
        "method", "n", "u", "t", "runs", "seed", "estimate", "std_error", "ci_lo", "ci_hi",
        "variance",
    ]);
    for &t in &ts {
        let est = match method {
            "direct" => {
                let ctx = DirectContext::new(&model, n, u, t)?;
                let sums = run_chunked(runs, config.workers, |from, to| {
                    ctx.run_range(config.seed, from, to)
                });
                finalize(&sums, EstimatorMethod::Direct, config.seed)
            }
            "is" => {
                let ctx = IsContext::new(&model, n, u, t)?;
                let sums = run_chunked(runs, config.workers, |from, to| {
                    ctx.run_range(config.seed, from, to)
                });
                finalize(&sums, EstimatorMethod::ImportanceSampling, config.seed)
            }
            other => {
                return Err(CliError::Validation(format!(
                    "unknown method {other:?}; use direct or is"
                )))
            }
        };
        estimate_rows(&mut csv, &est, n, u, t);
    }
    csv.write_to(&config.out)?;
    Ok(format!(
        "simulate ({method}): {} horizons, {runs} runs each -> {}",
        ts.len(),
        config.out.display()
    ))
}

fn finalize(sums: &ChunkSums, method: EstimatorMethod, seed: u64) -> RuinEstimate {
    let n = sums.runs as f64;
    let mean = sums.sum / n;
    let variance = if sums.runs > 1 {
        ((sums.sum_sq - sums.sum * sums.sum / n) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    let std_error = (variance / n).sqrt();
    let ci95 = if sums.sum == 0.0 {
        (0.0, 3.0 / n)
    } else {
        ((mean - 1.96 * std_error).max(0.0), mean + 1.96 * std_error)
    };
    RuinEstimate {
        estimate: mean,
        std_error,
        ci95,
        runs: sums.runs,
        variance,
        method,
        seed,
    }
}

pub fn asymptotics(config: &RunConfig, parsed: &ParsedModel) -> Result<String, CliError> {
    let model = parsed.portfolio()?;
    let u = need(config.u, "u")?;
    let t = need(config.t, "t")?;
    let points = config.points.unwrap_or(512);
    let curves = asymptotics::rate_curves(&model, u, t, points)?;
    let mut csv = CsvWriter::new("asymptotics", &parsed.sha256, config.seed);
    csv.header(&["s", "alpha_star", "rate"]);
    for i in 0..curves.s.len() {
        csv.row(&[float(curves.s[i]), float(curves.alpha[i]), float(curves.rate[i])]);
    }
    csv.write_to(&config.out)?;
    Ok(format!(
        "asymptotics: t* = {}, rate {} (sup tilt {}) -> {}",
        curves.t_star,
        curves.rate_at_t_star,
        curves.sup_alpha,
        config.out.display()
    ))
}

pub fn bound(config: &RunConfig, parsed: &ParsedModel) -> Result<String, CliError> {
    let model = parsed.portfolio()?;
    let u = need(config.u, "u")?;
    let levels: Vec<usize> = if config.n_list.is_empty() {
        let n = need(config.n, "n")?;
        (1..=n).collect()
    } else {
        config.n_list.clone()
    };
    if levels.is_empty() {
        return Err(CliError::Validation("empty grid: --n-list".into()));
    }
    let mut csv = CsvWriter::new("bound", &parsed.sha256, config.seed);
    csv.header(&["n", "gamma_n", "bound", "hypothesis_ok"]);
    let mut last = 1.0;
    for &n in &levels {
        let rep = asymptotics::lundberg_bound(&model, n, u)?;
        csv.row(&[
            int(n as i64),
            float(rep.gammas[n - 1]),
            float(rep.bound),
            boolean(rep.hypothesis_ok),
        ]);
        last = rep.bound;
    }
    csv.write_to(&config.out)?;
    Ok(format!(
        "bound: {} levels at u = {u} (last bound {last}) -> {}",
        levels.len(),
        config.out.display()
    ))
}

pub fn multigroup(config: &RunConfig, parsed: &ParsedModel) -> Result<String, CliError> {
    let mg = parsed.multigroup()?;
    if config.counts.is_empty() {
        return Err(CliError::Validation("empty grid: --counts".into()));
    }
    let gammas = sorted_grid(&config.gamma, "gamma")?;
    let theta = config.theta.unwrap_or(0.0);
    let mut csv = CsvWriter::new("multigroup", &parsed.sha256, config.seed);
    csv.header(&["counts", "theta", "gamma", "psi"]);
    let counts_label = config
        .counts
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join("|");
    for &gamma in &gammas {
        let psi = transforms::psi_multigroup(&mg, &config.counts, theta, gamma)?;
        csv.row(&[
            text(counts_label.clone()),
            float(theta),
            float(gamma),
            float(psi),
        ]);
    }
    csv.write_to(&config.out)?;
    Ok(format!(
        "multigroup: {} gamma points at counts [{counts_label}] -> {}",
        gammas.len(),
        config.out.display()
    ))
}

pub fn compare(config: &RunConfig, parsed: &ParsedModel) -> Result<String, CliError> {
    let model = parsed.portfolio()?;
    if config.methods.len() != 2 {
        return Err(CliError::Validation(
            "compare needs --methods with exactly two of: exact, invert, direct, is".into(),
        ));
    }
    let n = need(config.n, "n")?;
    let u = need(config.u, "u")?;
    let ts = sorted_grid(&config.t_grid, "t-grid")?;
    let runs = config.runs.unwrap_or(100_000);

    #[derive(Clone, Copy, PartialEq)]
    enum M {
        Exact,
        Invert,
        Direct,
        Is,
    }
    let parse = |name: &str| -> Result<M, CliError> {
        match name {
            "exact" => Ok(M::Exact),
            "invert" => Ok(M::Invert),
            "direct" => Ok(M::Direct),
            "is" => Ok(M::Is),
            other => Err(CliError::Validation(format!("unknown method {other:?}"))),
        }
    };
    let a = parse(&config.methods[0])?;
    let b = parse(&config.methods[1])?;

    let t_max = ts.last().copied().unwrap();
    let grid = if a == M::Exact || b == M::Exact {
        let spec = grid_spec_for(config, &model, n, u, t_max)?;
        Some(exact::pn_grid(&model, n, &spec)?)
    } else {
        None
    };
    let settings = InversionSettings::default();

    // Evaluate one method at one horizon; simulation methods also return
    // their standard error for the 3-SE tolerance.
    let eval = |m: M, t: f64| -> Result<(f64, Option<f64>), CliError> {
        match m {
            M::Exact => Ok((grid.as_ref().unwrap().value_at(u, t), None)),
            M::Invert => {
                let f = |g: Complex64, th: Complex64| transforms::psi_complex(&model, n, th, g);
                Ok((invert_in_u_t(&f, u, t, &settings)?.value, None))
            }
            M::Direct => {
                let est = simulate::simulate_direct(&model, n, u, t, runs, config.seed)?;
                Ok((est.estimate, Some(est.std_error)))
            }
            M::Is => {
                let (est, _) = simulate::simulate_is(&model, n, u, t, runs, config.seed)?;
                Ok((est.estimate, Some(est.std_error)))
            }
        }
    };

    let mut csv = CsvWriter::new("compare", &parsed.sha256, config.seed);
    csv.header(&[
        "n", "u", "t", "method_a", "value_a", "method_b", "value_b", "abs_diff", "tolerance",
        "pass",
    ]);
    let mut all_pass = true;
    for &t in &ts {
        let (va, sea) = eval(a, t)?;
        let (vb, seb) = eval(b, t)?;
        let diff = (va - vb).abs();
        // Deterministic pairs compare at 1e-3; anything against a
        // simulation uses three standard errors.
        let tol = match (sea, seb) {
            (None, None) => 1e-3,
            (Some(se), None) | (None, Some(se)) => 3.0 * se,
            (Some(s1), Some(s2)) => 3.0 * (s1 * s1 + s2 * s2).sqrt(),
        };
        let pass = diff <= tol;
        all_pass &= pass;
        csv.row(&[
            int(n as i64),
            float(u),
            float(t),
            text(config.methods[0].clone()),
            float(va),
            text(config.methods[1].clone()),
            float(vb),
            float(diff),
            float(tol),
            boolean(pass),
        ]);
    }
    csv.write_to(&config.out)?;
    Ok(format!(
        "compare {} vs {}: {} horizons, all pass: {all_pass} -> {}",
        config.methods[0],
        config.methods[1],
        ts.len(),
        config.out.display()
    ))
}
