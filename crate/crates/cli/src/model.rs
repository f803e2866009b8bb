use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use condext::config::ModelConfig;
use condext::expr::Compiled;
use condext::toy_models;

use crate::ModelArgs;

/// A constant expression such as `8/7` or `-1/2`.
pub fn number(src: &str) -> Result<f64, String> {
    Compiled::new(src.trim(), &[], &BTreeMap::new())
        .and_then(|c| c.eval::<f64>(&[]))
        .map_err(|e| format!("`{src}`: {e}"))
}

pub fn numbers(items: &[String]) -> anyhow::Result<Vec<f64>> {
    items
        .iter()
        .map(|s| number(s).map_err(|e| anyhow!(e)))
        .collect()
}

/// `NAME=VALUE` with a constant expression on the right.
pub fn assignment(src: &str) -> anyhow::Result<(String, f64)> {
    let (name, value) = src
        .split_once('=')
        .ok_or_else(|| anyhow!("`{src}` is not NAME=VALUE"))?;
    Ok((
        name.trim().to_string(),
        number(value).map_err(|e| anyhow!(e))?,
    ))
}

/// Built-in name or TOML file, with `--set` overrides applied.
pub fn load(args: &ModelArgs) -> anyhow::Result<ModelConfig> {
    let mut cfg = match toy_models::builtin(&args.model) {
        Some(cfg) => cfg,
        None => {
            let path = Path::new(&args.model);
            if !path.exists() {
                bail!(
                    "`{}` is neither a built-in model ({}) nor a file",
                    args.model,
                    toy_models::NAMES.join(", ")
                );
            }
            let src = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            ModelConfig::from_toml(&src).with_context(|| format!("in {}", path.display()))?
        }
    };
    for s in &args.set {
        let (name, value) = assignment(s)?;
        cfg.set_param(&name, value)?;
    }
    let t = &mut cfg.tolerances;
    for (slot, flag) in [
        (&mut t.rank_tol, args.rank_tol),
        (&mut t.closure_tol, args.closure_tol),
        (&mut t.hessian_tol, args.hessian_tol),
        (&mut t.rtol, args.rtol),
        (&mut t.atol, args.atol),
    ] {
        if let Some(v) = flag {
            *slot = v;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}
