//! End to end: game, hypothesis ledger, diagonal factorization and the
//! certificate for I = B~ T A~, on the shipped demo config.

use haarfactor::blocks::Branch;
use haarfactor::cli::load_config;
use haarfactor::game::factorize;

fn main() -> haarfactor::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/demo.json");
    let mut cfg = load_config(path.as_ref())?;
    for branch in [Branch::SubSum, Branch::Full] {
        cfg.branch = branch;
        let t = cfg.operator.build(&cfg.big)?;
        let f = factorize(&t, &cfg)?;
        let c = &f.certificate;
        println!("branch {}: stage {}, status {:?}", branch.label(), c.stage, c.status);
        println!("  residual ||B~TA~ - I||_max  {:e}", c.residual_max.unwrap_or(f64::NAN));
        println!("  ||A~|| ||B~|| >=            {:.4}", c.norm_product_lower.unwrap_or(f64::NAN));
        println!("  K = {:.3}, sampled C >= {:.3}, target bound {:?}", c.k, c.c_lower, c.target_bound);
        if let Some(l) = &c.ledger {
            println!("  ledger: {} entries, {} violations", l.entries.len(), l.violations());
        }
        if let Some(g) = &f.gamma_selection {
            println!("  Gamma = {:?}", g.gamma);
        }
    }
    Ok(())
}
