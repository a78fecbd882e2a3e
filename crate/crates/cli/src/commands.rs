use std::fmt;
use std::fs;

use nalgebra::DVector;
use serde::Serialize;

use qwalk_core::chains::{ChainSpec, Family, MarkovChain};
use qwalk_core::classical::{classical_row, deleted_spectrum};
use qwalk_core::linalg::{cnorm, to_complex};
use qwalk_core::phase::{dense_oracle, detect, rotate, rotate_unchecked, PEConfig, ORACLE_LIMIT};
use qwalk_core::qht::{qh_distribution, qh_distribution_chain, ratio_sq};
use qwalk_core::szegedy::{
    block_walk, classical_analogue, is_reversible_walk, random_signs, reflection_walk,
    search_operator, signed_blocks, transport_blocks, EdgeOperator,
};
use qwalk_core::tulsi::find_experiment;
use qwalk_core::verify::{verify_chain, Tolerances, VerifyReport, QUANTUM_NMAX};
use qwalk_core::Error;

use crate::output::emit;
use crate::{AnalogueCmd, ChainArgs, ChainCmd, Format, HitCmd, Output, PhaseCmd, VerifyCmd};

/// Largest chain accepted by any subcommand.
pub const CLASSICAL_NMAX: usize = 64;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Verification(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Verification(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn tolerances(out: &Output) -> Result<Tolerances> {
    let tol = match out.tol {
        Some(t) => Some(t),
        None => match std::env::var("QWALK_TOL") {
            Ok(s) => Some(
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Usage(format!("QWALK_TOL={s} is not a number")))?,
            ),
            Err(_) => None,
        },
    };
    match tol {
        Some(t) => Ok(Tolerances::with_override(t)?),
        None => Ok(Tolerances::default()),
    }
}

fn check_eps(eps: &[f64]) -> Result<Vec<f64>> {
    if eps.is_empty() {
        return Err(CliError::Usage("empty eps list".into()));
    }
    if let Some(bad) = eps.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
        return Err(CliError::Usage(format!("eps {bad} outside (0, 1)")));
    }
    let mut v = eps.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    Ok(v)
}

pub fn load_chain(args: &ChainArgs) -> Result<MarkovChain> {
    let chain = match (&args.chain, &args.family) {
        (Some(path), None) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
            let spec = ChainSpec::from_json(&text).map_err(|e| {
                CliError::Io(format!("malformed chain spec {}: {e}", path.display()))
            })?;
            let chain = spec.build()?;
            match args.lazy {
                Some(a) => chain.lazify(a)?,
                None => chain,
            }
        }
        (None, Some(name)) => {
            let n = args
                .n
                .ok_or_else(|| CliError::Usage("--family needs --n".into()))?;
            let chain = MarkovChain::family(&Family::parse(name, n, args.seed)?)?;
            match args.lazy {
                Some(a) => chain.lazify(a)?,
                None => chain,
            }
        }
        _ => {
            return Err(CliError::Usage(
                "give exactly one of --family or --chain".into(),
            ))
        }
    };
    if chain.n() > CLASSICAL_NMAX {
        return Err(CliError::Usage(format!(
            "{} states exceeds the limit of {CLASSICAL_NMAX}",
            chain.n()
        )));
    }
    Ok(chain)
}

fn chain_id(c: &MarkovChain) -> String {
    format!("{}@{}", c.label(), c.spec_hash())
}

fn states(c: &MarkovChain, z: &str) -> Result<Vec<usize>> {
    if z == "all" {
        return Ok((0..c.n()).collect());
    }
    let v: usize = z
        .parse()
        .map_err(|_| CliError::Usage(format!("--z expects a state index or 'all', got '{z}'")))?;
    if v >= c.n() {
        return Err(CliError::Usage(format!(
            "state {v} out of range for {} states",
            c.n()
        )));
    }
    Ok(vec![v])
}

fn require_quantum_size(c: &MarkovChain) -> Result<()> {
    if c.n() > QUANTUM_NMAX {
        return Err(CliError::Usage(format!(
            "{} states exceeds the quantum limit of {QUANTUM_NMAX}",
            c.n()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct ChainDoc {
    chain_id: String,
    label: String,
    hash: String,
    n: usize,
    reversible: bool,
    known_transitive: bool,
    transition: Vec<Vec<f64>>,
    stationary: Vec<f64>,
    eigenvalues: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct StateRow {
    chain_id: String,
    state: usize,
    pi: f64,
}

pub fn chain(cmd: &ChainCmd) -> Result<()> {
    let c = load_chain(&cmd.chain)?;
    let id = chain_id(&c);
    let rows: Vec<StateRow> = c
        .stationary()
        .iter()
        .enumerate()
        .map(|(state, &pi)| StateRow {
            chain_id: id.clone(),
            state,
            pi,
        })
        .collect();
    let doc = ChainDoc {
        chain_id: id.clone(),
        label: c.label().to_string(),
        hash: c.spec_hash(),
        n: c.n(),
        reversible: c.is_reversible(),
        known_transitive: c.known_transitive(),
        transition: c
            .transition()
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
        stationary: c.stationary().iter().copied().collect(),
        eigenvalues: c.is_reversible().then(|| c.eigenvalues()).transpose()?,
    };
    emit(&cmd.output, &rows, &doc)
}

#[allow(non_snake_case)]
#[derive(Serialize)]
struct HitRow {
    chain_id: String,
    n: usize,
    z: usize,
    eps: f64,
    HT: f64,
    E_Hz: f64,
    HT_eps: f64,
    h_eps: usize,
    QHT: Option<f64>,
    QHT_eps: Option<f64>,
    ratio_sq: Option<f64>,
}

#[derive(Serialize)]
struct RowsDoc<R: Serialize> {
    chain_id: String,
    n: usize,
    rows: Vec<R>,
}

pub fn hitting(cmd: &HitCmd, quantum: bool) -> Result<()> {
    let c = load_chain(&cmd.chain)?;
    let eps = check_eps(&cmd.eps)?;
    let zs = states(&c, &cmd.z)?;
    let tol = tolerances(&cmd.output)?;
    if quantum {
        require_quantum_size(&c)?;
    }
    let id = chain_id(&c);
    let mut rows = Vec::new();
    for &z in &zs {
        let qd = if quantum {
            Some(qh_distribution_chain(&c, z)?)
        } else {
            None
        };
        for &e in &eps {
            let row = classical_row(&c, z, e)?;
            let (qht, qht_eps, ratio) = match &qd {
                Some(d) => {
                    let qe = d.quantile(e)?;
                    let ratio = ratio_sq(qe, row.ht_eps);
                    if (ratio - 1.0).abs() > tol.identity {
                        return Err(CliError::Verification(format!(
                            "{id} z={z} eps={e}: QHT_eps^2/HT_eps = {ratio}"
                        )));
                    }
                    (Some(d.mean()), Some(qe), Some(ratio))
                }
                None => (None, None, None),
            };
            rows.push(HitRow {
                chain_id: id.clone(),
                n: c.n(),
                z,
                eps: e,
                HT: row.ht,
                E_Hz: row.e_hz,
                HT_eps: row.ht_eps,
                h_eps: row.h_eps,
                QHT: qht,
                QHT_eps: qht_eps,
                ratio_sq: ratio,
            });
        }
    }
    let doc = RowsDoc {
        chain_id: id,
        n: c.n(),
        rows,
    };
    emit(&cmd.output, &doc.rows, &doc)
}

#[derive(Serialize)]
struct PhaseRow {
    chain_id: String,
    z: usize,
    eps: f64,
    t: u32,
    r: usize,
    /// `‖φ̃₀‖²`, the acceptance probability of an ideal detector.
    target: f64,
    accept_prob: Option<f64>,
    accepted: Option<bool>,
    distance_to_ideal: Option<f64>,
    garbage_norm: Option<f64>,
    phase_range_ok: Option<bool>,
    oracle_gap: Option<f64>,
}

fn phase_config(
    cmd: &PhaseCmd,
    u2: &EdgeOperator,
    mu: &DVector<f64>,
    eps: f64,
) -> Result<PEConfig> {
    if let (Some(t), Some(r)) = (cmd.t, cmd.r) {
        return Ok(PEConfig::explicit(t, r)?);
    }
    let delta = match cmd.delta {
        Some(d) => d,
        None => 1.0 / qh_distribution(u2, mu)?.quantile(eps)?.max(1.0),
    };
    Ok(PEConfig::new(delta, eps)?)
}

pub fn phase(cmd: &PhaseCmd, rotating: bool) -> Result<()> {
    let c = load_chain(&cmd.hit.chain)?;
    require_quantum_size(&c)?;
    let eps = check_eps(&cmd.hit.eps)?;
    let zs = states(&c, &cmd.hit.z)?;
    let id = chain_id(&c);
    let mut rows = Vec::new();
    for &z in &zs {
        let s = search_operator(&c, z)?;
        let psi = to_complex(&s.phi_tilde());
        for &e in &eps {
            let cfg = phase_config(cmd, &s.u2, &s.mu, e)?;
            let bits = cfg.t as usize * cfg.r;
            let oracle = if cmd.oracle && bits < 40 && s.u.dim() << bits <= ORACLE_LIMIT {
                Some(dense_oracle(&s.u, &cfg, &psi)?)
            } else {
                None
            };
            let mut row = PhaseRow {
                chain_id: id.clone(),
                z,
                eps: e,
                t: cfg.t,
                r: cfg.r,
                target: psi.norm_squared(),
                accept_prob: None,
                accepted: None,
                distance_to_ideal: None,
                garbage_norm: None,
                phase_range_ok: None,
                oracle_gap: None,
            };
            if rotating {
                let (rep, ok) = match rotate(&s.u, &cfg, &psi) {
                    Ok(r) => (r, true),
                    Err(Error::PhaseRangeViolation { .. }) => {
                        (rotate_unchecked(&s.u, &cfg, &psi)?, false)
                    }
                    Err(other) => return Err(other.into()),
                };
                row.oracle_gap = oracle.map(|o| cnorm(&(&o.rotate_output - &rep.output)));
                row.distance_to_ideal = Some(rep.distance_to_ideal);
                row.garbage_norm = Some(rep.garbage_norm);
                row.phase_range_ok = Some(ok);
            } else {
                let d = detect(&s.u, &cfg, &psi, c_seed(&cmd.hit.chain, z))?;
                row.oracle_gap = oracle.map(|o| (o.accept_prob - d.accept_prob).abs());
                row.accept_prob = Some(d.accept_prob);
                row.accepted = Some(d.accepted);
            }
            rows.push(row);
        }
    }
    let doc = RowsDoc {
        chain_id: id,
        n: c.n(),
        rows,
    };
    emit(&cmd.hit.output, &doc.rows, &doc)
}

/// Per-state sampling seed derived from the run seed.
fn c_seed(args: &ChainArgs, z: usize) -> u64 {
    args.seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(z as u64)
}

#[derive(Serialize)]
struct TulsiRow {
    chain_id: String,
    z: usize,
    eps: f64,
    known_transitive: bool,
    theta: f64,
    alpha1: f64,
    alpha1_theta: f64,
    steps: f64,
    overlap_closed_form: f64,
    overlap_simulated: f64,
    agreement_budget: f64,
    agrees: bool,
    in_hypothesis: bool,
    phase_range_ok: bool,
}

pub fn tulsi(cmd: &HitCmd) -> Result<()> {
    let c = load_chain(&cmd.chain)?;
    require_quantum_size(&c)?;
    let eps = check_eps(&cmd.eps)?;
    if let Some(bad) = eps.iter().find(|&&e| e > 0.5) {
        return Err(CliError::Usage(format!(
            "tulsi needs eps <= 1/2, got {bad}"
        )));
    }
    let zs = states(&c, &cmd.z)?;
    let id = chain_id(&c);
    let mut rows = Vec::new();
    for &z in &zs {
        for &e in &eps {
            let r = find_experiment(&c, z, e)?;
            rows.push(TulsiRow {
                chain_id: id.clone(),
                z,
                eps: e,
                known_transitive: c.known_transitive(),
                agrees: r.agrees(),
                theta: r.theta,
                alpha1: r.alpha1,
                alpha1_theta: r.alpha1_theta,
                steps: r.steps,
                overlap_closed_form: r.overlap_closed_form,
                overlap_simulated: r.overlap_simulated,
                agreement_budget: r.agreement_budget,
                in_hypothesis: r.in_hypothesis,
                phase_range_ok: r.phase_range_ok,
            });
        }
    }
    let doc = RowsDoc {
        chain_id: id,
        n: c.n(),
        rows,
    };
    emit(&cmd.output, &doc.rows, &doc)
}

#[allow(non_snake_case)]
#[derive(Serialize)]
struct LowerBoundRow {
    chain_id: String,
    z: usize,
    eps: f64,
    QHT_eps_walk: f64,
    sqrt_HT_eps: f64,
}

#[derive(Serialize)]
struct AnalogueDoc {
    chain_id: String,
    walk: &'static str,
    walk_reversible: bool,
    analogue_reversible: bool,
    round_trip_error: f64,
    analogue_transition: Vec<Vec<f64>>,
    lower_bound: Vec<LowerBoundRow>,
}

/// A walk on the chain's graph fixing `Σ √π_x |x⟩|p_x⟩`. Reversible chains
/// use Szegedy reflections; otherwise the first block orientation that
/// leaves a single fixed vector is taken.
fn walk_for(c: &MarkovChain, signs: bool, seed: u64) -> Result<(EdgeOperator, &'static str)> {
    if c.is_reversible() {
        let s = signs.then(|| random_signs(c.n(), seed));
        let blocks = signed_blocks(c, s.as_ref());
        return Ok((
            reflection_walk(&blocks, Some(c.transition()))?,
            "reflection",
        ));
    }
    let n = c.n();
    if n > 10 {
        return Err(CliError::Usage(
            "non-reversible analogue search is limited to 10 states".into(),
        ));
    }
    for combo in 0u64..1 << (2 * n) {
        let plane: Vec<bool> = (0..n).map(|x| combo >> (2 * x) & 1 == 1).collect();
        let rest: Vec<bool> = (0..n).map(|x| combo >> (2 * x + 1) & 1 == 1).collect();
        if let Ok(w) = block_walk(&transport_blocks(c, &plane, &rest), Some(c.transition())) {
            return Ok((w, "transport"));
        }
    }
    Err(CliError::Usage(
        "no block orientation gives a single fixed vector".into(),
    ))
}

pub fn analogue(cmd: &AnalogueCmd) -> Result<()> {
    let c = load_chain(&cmd.hit.chain)?;
    require_quantum_size(&c)?;
    let eps = check_eps(&cmd.hit.eps)?;
    let zs = states(&c, &cmd.hit.z)?;
    let (walk, kind) = walk_for(&c, cmd.signs, cmd.hit.chain.seed)?;
    let back = classical_analogue(&walk)?;
    let id = chain_id(&c);
    let mut lower = Vec::new();
    if c.is_reversible() && c.min_eigenvalue()? >= -qwalk_core::classical::NEG_EIG_TOL {
        let n = c.n();
        let s = cmd.signs.then(|| random_signs(n, cmd.hit.chain.seed));
        let blocks = signed_blocks(&c, s.as_ref());
        for &z in &zs {
            let mut mu = DVector::zeros(n * n);
            mu.rows_mut(z * n, n).copy_from(&blocks[z]);
            let qd = qh_distribution(&walk, &mu)?;
            let dist = deleted_spectrum(&c, z)?.distribution();
            for &e in &eps {
                lower.push(LowerBoundRow {
                    chain_id: id.clone(),
                    z,
                    eps: e,
                    QHT_eps_walk: qd.quantile(e)?,
                    sqrt_HT_eps: dist.quantile(e)?.sqrt(),
                });
            }
        }
    }
    let doc = AnalogueDoc {
        chain_id: id,
        walk: kind,
        walk_reversible: is_reversible_walk(&walk)?,
        analogue_reversible: back.is_reversible(),
        round_trip_error: (back.transition() - c.transition()).amax(),
        analogue_transition: back
            .transition()
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
        lower_bound: lower,
    };
    emit(&cmd.hit.output, &doc.lower_bound, &doc)
}

#[derive(Serialize)]
struct ViolationRow {
    tag: String,
    chain: String,
    z: Option<usize>,
    eps: Option<f64>,
    detail: String,
}

fn family_members(name: &str, nmin: usize, nmax: usize, seed: u64) -> Result<Vec<Family>> {
    let mut out = Vec::new();
    match name {
        "cycle" | "complete" | "random" => {
            for n in nmin.max(2)..=nmax {
                out.push(Family::parse(name, n, seed.wrapping_add(n as u64))?);
            }
        }
        "torus2d" | "torus" => {
            for side in 2.. {
                let n = side * side;
                if n > nmax {
                    break;
                }
                if n >= nmin {
                    out.push(Family::Torus2d { side });
                }
            }
        }
        "hypercube" => {
            for dim in 1..7 {
                let n = 1usize << dim;
                if n > nmax {
                    break;
                }
                if n >= nmin {
                    out.push(Family::Hypercube { dim });
                }
            }
        }
        other => return Err(CliError::Usage(format!("unknown family '{other}'"))),
    }
    Ok(out)
}

pub fn verify(cmd: &VerifyCmd) -> Result<()> {
    let eps = check_eps(&cmd.eps)?;
    let tol = tolerances(&cmd.output)?;
    if cmd.nmax > CLASSICAL_NMAX || cmd.nmin > cmd.nmax {
        return Err(CliError::Usage(format!(
            "need nmin <= nmax <= {CLASSICAL_NMAX}, got {}..{}",
            cmd.nmin, cmd.nmax
        )));
    }
    let mut families = cmd.families.clone();
    families.sort();
    families.dedup();
    let mut report = VerifyReport::default();
    for name in &families {
        for f in family_members(name, cmd.nmin, cmd.nmax, cmd.seed)? {
            let chain = MarkovChain::family(&f)?.lazify(cmd.lazy)?;
            report.merge(verify_chain(&chain, &eps, cmd.seed, tol)?);
        }
    }
    let rows: Vec<ViolationRow> = report
        .violations
        .iter()
        .map(|v| ViolationRow {
            tag: v.tag.to_string(),
            chain: v.chain.clone(),
            z: v.z,
            eps: v.eps,
            detail: v.detail.clone(),
        })
        .collect();
    for v in &rows {
        eprintln!(
            "FAIL [{}] {} z={} eps={}: {}",
            v.tag,
            v.chain,
            v.z.map_or("-".into(), |z| z.to_string()),
            v.eps.map_or("-".into(), |e| e.to_string()),
            v.detail
        );
    }
    if cmd.output.format == Format::Json || cmd.output.out.is_some() || !rows.is_empty() {
        emit(&cmd.output, &rows, &report)?;
    }
    let summary = format!(
        "{} chains, {} checks, {} violations",
        report.chains,
        report.checks,
        report.violations.len()
    );
    if report.passed() {
        eprintln!("verify: {summary}");
        Ok(())
    } else {
        Err(CliError::Verification(format!("verify: {summary}")))
    }
}
