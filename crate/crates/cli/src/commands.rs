use delaycert::inequality::{run_batch, write_csv, Family};
use delaycert::lmi::{assemble, count_variables, TheoremParams};
use delaycert::sdp::BarrierSolver;
use delaycert::search::{
    check_stability, max_decay_rate, max_delay, write_search_csv, CheckOutcome, DelayBounds,
    SearchResult, SearchRow, SearchSettings, DEFAULT_XI_FRACTIONS,
};
use delaycert::sim::{estimate_decay_rate, simulate, DecayFit, DelaySignal, InitialHistory};
use delaycert::Execution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::error::CliError;
use crate::manifest::{sha256_hex, Artifacts, InputRecord, Manifest};
use crate::system_file::{load, LoadedSystem};
use crate::{CliResult, Command, Common, Format};

fn to_json<T: Serialize>(v: &T) -> CliResult<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Numerical(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn system_name(sys: &LoadedSystem) -> String {
    sys.file.name.clone().unwrap_or_else(|| sys.source.clone())
}

/// Runs `cmd`, then writes the manifest whatever the outcome.
pub fn run(cmd: &Command, args: &[String]) -> CliResult<()> {
    let common = cmd.common();
    let mut art = Artifacts::new(&common.out)?;
    let loaded = cmd.system().map(load).transpose();
    let input = match (&loaded, cmd.system()) {
        (Ok(Some(l)), _) => Some(InputRecord {
            source: l.source.clone(),
            sha256: sha256_hex(l.text.as_bytes()),
        }),
        (_, Some(source)) => std::fs::read(source).ok().map(|b| InputRecord {
            source: source.to_string(),
            sha256: sha256_hex(&b),
        }),
        _ => None,
    };
    let result = loaded.and_then(|l| dispatch(cmd, l.as_ref(), &mut art));
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        core_version: delaycert::VERSION,
        command: cmd.name().to_string(),
        arguments: args.to_vec(),
        system: input,
        seed: common.seed,
        formulation: format!("{:?}", common.formulation).to_lowercase(),
        outputs: vec![],
        exit_code: result.as_ref().map_or_else(|e| e.exit_code(), |_| 0),
    };
    art.finish(manifest)?;
    result
}

fn need(sys: Option<&LoadedSystem>) -> CliResult<&LoadedSystem> {
    sys.ok_or_else(|| CliError::Invalid("this command needs --system".into()))
}

fn dispatch(cmd: &Command, sys: Option<&LoadedSystem>, art: &mut Artifacts) -> CliResult<()> {
    let solver = BarrierSolver::default();
    match cmd {
        Command::Check {
            h,
            mu,
            k,
            xi,
            common,
            ..
        } => check(need(sys)?, *h, *mu, *k, *xi, common, &solver, art),
        Command::BisectK {
            h,
            mu,
            k_min,
            k_max,
            tol,
            xi,
            common,
            ..
        } => {
            let s = need(sys)?;
            let k_max = k_max.unwrap_or(0.999 * s.system.min_k0());
            let settings = SearchSettings {
                tol: *tol,
                xi_fractions: xi.map_or(DEFAULT_XI_FRACTIONS.to_vec(), |x| vec![x / h]),
                formulation: common.formulation.into(),
                ..Default::default()
            };
            let res = max_decay_rate(
                &s.system,
                DelayBounds { h: *h, mu: *mu },
                (*k_min, k_max),
                &settings,
                &solver,
            )
            .map_err(CliError::from_core)?;
            report_search(s, &res, *mu, *h, "bisect-k", common, art)
        }
        Command::BisectH {
            mu,
            k,
            h_min,
            h_max,
            tol,
            xi_fraction,
            common,
            ..
        } => {
            let s = need(sys)?;
            let settings = SearchSettings {
                tol: *tol,
                xi_fractions: xi_fraction.map_or(DEFAULT_XI_FRACTIONS.to_vec(), |f| vec![f]),
                formulation: common.formulation.into(),
                ..Default::default()
            };
            let res = max_delay(&s.system, *mu, *k, (*h_min, *h_max), &settings, &solver)
                .map_err(CliError::from_core)?;
            report_search(s, &res, *mu, *k, "bisect-h", common, art)
        }
        Command::Simulate {
            horizon,
            step,
            initial,
            h,
            random_histories,
            common,
            ..
        } => run_simulation(
            need(sys)?,
            *horizon,
            *step,
            initial.as_deref(),
            *h,
            *random_histories,
            common,
            art,
        ),
        Command::VerifyInequalities { cases, common } => verify(*cases, common, art),
        Command::CountVars { n, common } => {
            let count = count_variables(*n);
            println!("{count}");
            if common.wants(Format::Json, false) {
                art.write("count.json", &to_json(&json!({ "n": n, "count": count }))?)?;
            }
            Ok(())
        }
        Command::ExportLmi {
            h,
            mu,
            k,
            xi,
            common,
            ..
        } => {
            let s = need(sys)?;
            let params = TheoremParams {
                h: *h,
                mu: *mu,
                k: *k,
                xi: xi.unwrap_or(0.5 * h),
                formulation: common.formulation.into(),
            };
            let lmis = assemble(&s.system, &params).map_err(CliError::from_core)?;
            let text = lmis.problem.to_json().map_err(CliError::from_core)?;
            let path = art.write("lmi.json", text.as_bytes())?;
            println!(
                "{} constraints, {} variables -> {}",
                lmis.problem.constraints.len(),
                lmis.problem.num_vars,
                path.display()
            );
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn check(
    s: &LoadedSystem,
    h: f64,
    mu: f64,
    k: f64,
    xi: Option<f64>,
    common: &Common,
    solver: &BarrierSolver,
    art: &mut Artifacts,
) -> CliResult<()> {
    let points: Vec<f64> = match xi {
        Some(x) => vec![x],
        None => DEFAULT_XI_FRACTIONS.iter().map(|f| f * h).collect(),
    };
    let mut last: Option<(TheoremParams, CheckOutcome)> = None;
    for x in points {
        let params = TheoremParams {
            h,
            mu,
            k,
            xi: x,
            formulation: common.formulation.into(),
        };
        let out = check_stability(&s.system, &params, solver).map_err(CliError::from_core)?;
        let done = out.certified();
        last = Some((params, out));
        if done {
            break;
        }
    }
    let (params, out) = last.expect("at least one split point");
    if common.wants(Format::Json, true) {
        let doc = json!({
            "system": system_name(s),
            "certified": out.certified(),
            "status": out.status,
            "params": params,
            "certificate": out.certificate,
        });
        art.write("certificate.json", &to_json(&doc)?)?;
    }
    match &out.certificate {
        Some(c) => {
            println!(
                "certified: h={h} mu={mu} k={k} xi={} min eigenvalue {:.3e}, E={:.4e}",
                params.xi, c.min_eigenvalue, c.envelope.e
            );
            Ok(())
        }
        None => Err(CliError::NotCertified(format!(
            "h={h} mu={mu} k={k}: solver status {:?}",
            out.status
        ))),
    }
}

fn report_search(
    s: &LoadedSystem,
    res: &SearchResult,
    mu: f64,
    fixed: f64,
    stem: &str,
    common: &Common,
    art: &mut Artifacts,
) -> CliResult<()> {
    let row = SearchRow::new(res, mu, fixed);
    let mut buf = vec![];
    write_search_csv(std::slice::from_ref(&row), &mut buf).map_err(CliError::from_core)?;
    print!("{}", String::from_utf8_lossy(&buf));
    if common.wants(Format::Csv, true) {
        art.write(&format!("{stem}.csv"), &buf)?;
        let mut probes = csv::Writer::from_writer(vec![]);
        for p in &res.log {
            probes
                .serialize(p)
                .map_err(|e| CliError::Numerical(e.to_string()))?;
        }
        let bytes = probes
            .into_inner()
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        art.write(&format!("{stem}-probes.csv"), &bytes)?;
    }
    if common.wants(Format::Json, true) {
        if let Some(cert) = &res.certificate {
            let doc = json!({
                "system": system_name(s),
                "certified": true,
                "params": cert.params,
                "certificate": cert,
            });
            art.write("certificate.json", &to_json(&doc)?)?;
        }
    }
    if res.best.is_none() {
        return Err(CliError::NotCertified(
            "no point in the searched range was certified".into(),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct FitRow {
    index: usize,
    seed: u64,
    rate: Option<f64>,
    constant: Option<f64>,
    error: Option<String>,
}

#[allow(clippy::too_many_arguments)]
fn run_simulation(
    s: &LoadedSystem,
    horizon: f64,
    step: Option<f64>,
    initial: Option<&[f64]>,
    h: Option<f64>,
    random: usize,
    common: &Common,
    art: &mut Artifacts,
) -> CliResult<()> {
    let delay = match (h, &s.file.delay) {
        (Some(h), _) => DelaySignal::constant(h),
        (None, Some(d)) => d.clone(),
        (None, None) => {
            return Err(CliError::Invalid(
                "no delay: pass --h or add a [delay] table to the system file".into(),
            ))
        }
    };
    let r0 = initial
        .map(<[f64]>::to_vec)
        .or_else(|| s.file.initial_state.clone())
        .ok_or_else(|| {
            CliError::Invalid("no initial state: pass --initial or set initial_state".into())
        })?;
    let hist = InitialHistory::constant(&r0);
    let traj = simulate(&s.system, &delay, &hist, horizon, step).map_err(CliError::from_core)?;
    let window = (0.25 * horizon, horizon);
    let fit: Option<DecayFit> = estimate_decay_rate(&traj, window).ok();
    if common.wants(Format::Csv, true) {
        let mut buf = vec![];
        traj.write_csv(&mut buf).map_err(CliError::from_core)?;
        art.write("trajectory.csv", &buf)?;
    }
    if common.wants(Format::Svg, true) {
        let title = format!("{} trajectory", system_name(s));
        art.write("trajectory.svg", traj.to_svg(&title).as_bytes())?;
    }
    let seeds: Vec<u64> = (0..random as u64)
        .map(|i| common.seed.wrapping_add(i))
        .collect();
    let rows: Vec<FitRow> = Execution::default().map(random, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds[i]);
        let hist = InitialHistory::random(&mut rng, s.system.dim());
        let res = simulate(&s.system, &delay, &hist, horizon, step)
            .and_then(|t| estimate_decay_rate(&t, window));
        match res {
            Ok(f) => FitRow {
                index: i,
                seed: seeds[i],
                rate: Some(f.rate),
                constant: Some(f.constant),
                error: None,
            },
            Err(e) => FitRow {
                index: i,
                seed: seeds[i],
                rate: None,
                constant: None,
                error: Some(e.to_string()),
            },
        }
    });
    if random > 0 && common.wants(Format::Csv, true) {
        let mut w = csv::Writer::from_writer(vec![]);
        for r in &rows {
            w.serialize(r)
                .map_err(|e| CliError::Numerical(e.to_string()))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        art.write("decay-fits.csv", &bytes)?;
    }
    if common.wants(Format::Json, true) {
        let doc = json!({
            "system": system_name(s),
            "delay": delay,
            "initial_state": r0,
            "horizon": horizon,
            "step": traj.step,
            "fit": fit,
            "final_norm": traj.states.last().map(|r| r.norm()),
            "sector_violation": traj.sector_violation(&s.system),
            "random_history_rates": rows.iter().map(|r| r.rate).collect::<Vec<_>>(),
        });
        art.write("simulation.json", &to_json(&doc)?)?;
    }
    match &fit {
        Some(f) => println!(
            "final |r| = {:.3e}, fitted decay rate {:.4} over [{}, {}]",
            traj.states.last().map_or(0.0, |r| r.norm()),
            f.rate,
            f.window.0,
            f.window.1
        ),
        None => println!("no decay fit (trajectory is zero on the window)"),
    }
    Ok(())
}

fn verify(cases: usize, common: &Common, art: &mut Artifacts) -> CliResult<()> {
    let mut all = vec![];
    let mut failed = 0;
    for family in Family::ALL {
        let recs = run_batch(family, cases, common.seed, Execution::default())
            .map_err(CliError::from_core)?;
        let bad = recs.iter().filter(|r| !r.passed).count();
        println!(
            "{}: {}/{} passed",
            family.label(),
            recs.len() - bad,
            recs.len()
        );
        failed += bad;
        all.extend(recs);
    }
    if common.wants(Format::Csv, true) {
        let mut buf = vec![];
        write_csv(&all, &mut buf).map_err(CliError::from_core)?;
        art.write("inequalities.csv", &buf)?;
    }
    if failed > 0 {
        return Err(CliError::NotCertified(format!(
            "{failed} inequality cases failed"
        )));
    }
    Ok(())
}
