//! Game, hypothesis ledger, diagonal factorization, optional `Γ`-selection
//! and assembly of `I = B̃ T Ã`.

use serde::{Deserialize, Serialize};

use super::{run_default_game, GameConfig, Transcript};
use crate::blocks::{
    assemble_factorization, build_d, interaction_matrix, verify_conditions, AssemblyParams, BlockSystem, Branch,
    FactorizationCertificate, Ledger, LedgerInput,
};
use crate::error::Result;
use crate::operators::{diagonal_factorization, select_gamma, GammaSelection, OperatorZ};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factorization {
    pub certificate: FactorizationCertificate,
    pub transcript: Transcript,
    pub blocks: Option<BlockSystem>,
    pub gamma_selection: Option<GammaSelection>,
}

/// Run the whole pipeline. Configuration errors are returned as `Err`; every
/// later failure yields a failed certificate naming the stage.
pub fn factorize(t: &OperatorZ, config: &GameConfig) -> Result<Factorization> {
    config.validate()?;
    let base = |delta: f64, k: f64| AssemblyParams {
        branch: config.branch,
        delta,
        eta: config.eta,
        lambda: 1.0,
        k,
        c: config.c_target,
        t_norm: 0.0,
        gamma: None,
        norm_trials: config.norm_trials,
        seed: config.seed,
    };
    let (transcript, bs) = match run_default_game(t, config) {
        Ok(x) => x,
        Err(a) => {
            let delta = a.transcript.pregame.as_ref().map_or(0.0, |p| p.delta);
            let cert = FactorizationCertificate::failed("game", a.error.to_string(), &base(delta, f64::INFINITY), None);
            return Ok(Factorization { certificate: cert, transcript: a.transcript, blocks: None, gamma_selection: None });
        }
    };
    let pregame = transcript.pregame.clone().expect("a finished game has a pregame");
    let delta_eff = (1.0 - config.eta) * pregame.delta;
    let k = 1.0 / delta_eff;
    let mut params = base(pregame.delta, k);
    params.t_norm = pregame.t_norm_proxy;
    let done = |cert, gamma_selection| Factorization {
        certificate: cert,
        transcript: transcript.clone(),
        blocks: Some(bs.clone()),
        gamma_selection,
    };

    let input = LedgerInput {
        eta: config.eta,
        schedule: pregame.schedule.clone(),
        c_target: config.c_target,
        tail_chain: transcript.tail_chain(),
        samples: config.samples,
        seed: config.seed,
    };
    let ledger: Ledger = match verify_conditions(t, &bs, &input) {
        Ok(l) => l,
        Err(e) => return Ok(done(FactorizationCertificate::failed("verify_conditions", e.to_string(), &params, None), None)),
    };
    params.c = ledger.c_lower();

    let d = match build_d(t, &bs) {
        Ok(d) => d,
        Err(e) => return Ok(done(FactorizationCertificate::failed("build_d", e.to_string(), &params, Some(ledger)), None)),
    };
    let factors = match diagonal_factorization(&d, delta_eff) {
        Ok(f) => f,
        Err(e) => {
            return Ok(done(FactorizationCertificate::failed("diagonal_factorization", e.to_string(), &params, Some(ledger)), None))
        }
    };

    let mut selection = None;
    if config.branch == Branch::SubSum {
        let omegas = config.omegas();
        let budget = config.gamma_budget.unwrap_or(config.small.len().saturating_sub(1).max(1));
        let s = interaction_matrix(t, &bs).and_then(|m| m.sub(&d));
        let sel = s.and_then(|s| select_gamma(&s, &omegas, config.eta, budget.max(omegas.len()).min(config.small.len()), config.seed));
        match sel {
            Ok(sel) => {
                if let Some(l) = omegas.iter().position(|om| om.is_disjoint(&sel.gamma)) {
                    let msg = format!("Γ misses the class Ω_{l}");
                    return Ok(done(FactorizationCertificate::failed("select_gamma", msg, &params, Some(ledger)), Some(sel)));
                }
                params.gamma = Some(sel.gamma.clone());
                selection = Some(sel);
            }
            Err(e) => {
                return Ok(done(FactorizationCertificate::failed("select_gamma", e.to_string(), &params, Some(ledger)), None))
            }
        }
    }
    let cert = assemble_factorization(t, &bs, &factors, Some(ledger), &params);
    Ok(done(cert, selection))
}
