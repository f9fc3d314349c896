//! Run configuration.
//!
//! A TOML document is merged over the defaults of its problem, checked for
//! unknown keys and invalid values, and hashed in canonical form. The hash
//! names the output directory, so formatting, key order and restating a
//! default never change it.

use std::collections::BTreeSet;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Value;

use crate::criteria::{CriterionKind, CriterionParams};
use crate::design::DesignSpace;
use crate::edloop::AscentConfig;
use crate::error::{Error, Result};
use crate::harness::HarnessConfig;
use crate::metainit::MetaConfig;
use crate::pde::{Problem, ProblemKind};
use crate::pinn::TrainConfig;

/// A design method: one of the criteria or a baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fist,
    Mote,
    Tip,
    Mi,
    Random,
    Grid,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Fist, Method::Mote, Method::Tip, Method::Mi, Method::Random, Method::Grid];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fist => "fist",
            Method::Mote => "mote",
            Method::Tip => "tip",
            Method::Mi => "mi",
            Method::Random => "random",
            Method::Grid => "grid",
        }
    }

    pub fn criterion(self) -> Option<CriterionKind> {
        match self {
            Method::Fist => Some(CriterionKind::Fist),
            Method::Mote => Some(CriterionKind::Mote),
            Method::Tip => Some(CriterionKind::Tip),
            Method::Mi => Some(CriterionKind::Mi),
            Method::Random | Method::Grid => None,
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method `{s}`")))
    }
}

/// Hidden-layer overrides of the solution network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub depth: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub seed: u64,
    /// Ensemble size N of the design stage.
    pub threads: usize,
    pub methods: Vec<Method>,
    pub network: NetworkConfig,
    pub meta: MetaConfig,
    pub forward: TrainConfig,
    pub design: DesignSpace,
    pub criterion: CriterionParams,
    pub ascent: AscentConfig,
    pub evaluate: HarnessConfig,
}

impl RunConfig {
    pub fn defaults(kind: ProblemKind) -> Self {
        let net = Problem::new(kind).net;
        // Table-6 budgets scaled down tenfold, except the oscillator, whose
        // forward budget is the 2k-step fine-tune of the meta-init check and
        // whose inverse solves get 5k decayed steps.
        let (forward, inverse) = match kind {
            ProblemKind::Oscillator => (
                TrainConfig { steps: 2000, lr: 0.01, lr_decay: 0.01, n_interior: 300, n_boundary: 1, seed: 0 },
                TrainConfig { steps: 5000, lr: 0.01, lr_decay: 0.01, n_interior: 300, n_boundary: 1, seed: 0 },
            ),
            ProblemKind::Wave => {
                let t = TrainConfig { steps: 20_000, lr: 0.001, lr_decay: 0.1, n_interior: 1500, n_boundary: 200, seed: 0 };
                (t.clone(), t)
            }
            ProblemKind::Eikonal => {
                let t = TrainConfig { steps: 5000, lr: 0.001, lr_decay: 0.1, n_interior: 1000, n_boundary: 1, seed: 0 };
                (t.clone(), t)
            }
        };
        let meta = MetaConfig {
            inner: TrainConfig { n_interior: forward.n_interior, n_boundary: forward.n_boundary, ..MetaConfig::default().inner },
            ..MetaConfig::default()
        };
        RunConfig {
            problem: kind,
            seed: 0,
            threads: 8,
            methods: Method::ALL.to_vec(),
            network: NetworkConfig { depth: net.depth, width: net.width },
            meta,
            forward,
            design: DesignSpace::default_for(kind),
            criterion: CriterionParams::defaults(kind),
            ascent: AscentConfig { restarts: 4, steps: 20, step_size: 0.05 },
            evaluate: HarnessConfig { train: inverse, ..HarnessConfig::default() },
        }
    }

    /// Parses a TOML document over the defaults of its `problem`.
    pub fn from_toml(text: &str) -> Result<Self> {
        let user: Value =
            toml::from_str(text).map_err(|e| Error::Config { keys: vec![format!("parse error: {}", e.message())] })?;
        let Value::Table(user) = user else { unreachable!("toml documents are tables") };
        let kind = match user.get("problem") {
            None => ProblemKind::Oscillator,
            Some(Value::String(s)) => s.parse().map_err(|_| Error::Config { keys: vec!["problem".into()] })?,
            Some(_) => return Err(Error::Config { keys: vec!["problem".into()] }),
        };
        let unknown = unknown_keys(&user);
        if !unknown.is_empty() {
            return Err(Error::Config { keys: unknown.into_iter().map(|k| format!("{k} (unknown)")).collect() });
        }
        let mut merged = to_value(&RunConfig::defaults(kind));
        merge(&mut merged, &Value::Table(user));
        let cfg: RunConfig = merged.try_into().map_err(|e: toml::de::Error| Error::Config {
            keys: vec![e.message().to_string()],
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Lists every offending key.
    pub fn validate(&self) -> Result<()> {
        let mut bad: Vec<String> = Vec::new();
        let mut check = |ok: bool, key: &str| {
            if !ok {
                bad.push(key.to_string());
            }
        };
        check(self.threads >= 1, "threads");
        check(!self.methods.is_empty(), "methods");
        check(self.network.depth >= 1, "network.depth");
        check(self.network.width >= 1, "network.width");
        check(self.meta.tasks >= 1, "meta.tasks");
        check(self.meta.interpolation > 0.0 && self.meta.interpolation <= 1.0, "meta.interpolation");
        for (name, t) in [("meta.inner", &self.meta.inner), ("forward", &self.forward), ("evaluate.train", &self.evaluate.train)]
        {
            check(t.lr > 0.0, &format!("{name}.lr"));
            check(t.lr_decay > 0.0 && t.lr_decay <= 1.0, &format!("{name}.lr_decay"));
            check(t.n_interior >= 1, &format!("{name}.n_interior"));
            check(t.n_boundary >= 1, &format!("{name}.n_boundary"));
        }
        let c = &self.criterion;
        check(c.perturb_var >= 0.0, "criterion.perturb_var");
        check(c.mote_theta_var >= 0.0, "criterion.mote_theta_var");
        check(c.lr > 0.0, "criterion.lr");
        check(c.adam_eps > 0.0, "criterion.adam_eps");
        check(c.jitter > 0.0, "criterion.jitter");
        check(c.noise_var >= 0.0, "criterion.noise_var");
        check(c.n_interior >= 1, "criterion.n_interior");
        check(self.ascent.restarts >= 1, "ascent.restarts");
        check(self.ascent.step_size > 0.0, "ascent.step_size");
        check(self.evaluate.instances >= 1, "evaluate.instances");
        check(self.evaluate.noise_var >= 0.0, "evaluate.noise_var");
        check((0.0..0.5).contains(&self.evaluate.trim), "evaluate.trim");
        if self.design.validate().is_err() {
            bad.push("design".into());
        } else if self.design.point_dim() != Problem::new(self.problem).input_dim() {
            bad.push("design.lo".into());
        }
        if self.methods.contains(&Method::Mi) && self.threads < 2 {
            bad.push("threads".into());
        }
        bad.dedup();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config { keys: bad })
        }
    }

    /// The problem with architecture overrides applied.
    pub fn problem(&self) -> Problem {
        let mut p = Problem::new(self.problem);
        p.net.depth = self.network.depth;
        p.net.width = self.network.width;
        p
    }

    /// Hex SHA-256 prefix of the canonical form. The method list only
    /// selects which designs a command computes, so it is left out.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(&RunConfig { methods: Vec::new(), ..self.clone() }).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))[..16].to_string()
    }
}

fn to_value(cfg: &RunConfig) -> Value {
    Value::try_from(cfg).expect("config serializes")
}

/// Recursive table merge; a design table naming its `kind` replaces the
/// default design wholesale since variants have different fields.
fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                let replace = k == "design" && v.as_table().is_some_and(|t| t.contains_key("kind"));
                match b.get_mut(k) {
                    Some(slot) if !replace => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

fn key_paths(v: &Value, prefix: &str, out: &mut BTreeSet<String>) {
    if let Value::Table(t) = v {
        for (k, v) in t {
            let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            key_paths(v, &path, out);
            out.insert(path);
        }
    }
}

fn unknown_keys(user: &toml::Table) -> Vec<String> {
    let mut known = BTreeSet::new();
    for kind in [ProblemKind::Oscillator, ProblemKind::Wave, ProblemKind::Eikonal] {
        key_paths(&to_value(&RunConfig::defaults(kind)), "", &mut known);
    }
    // Optional keys absent from some defaults.
    for k in ["criterion.mote_steps", "design.sensors", "design.times", "design.points"] {
        known.insert(k.to_string());
    }
    let mut given = BTreeSet::new();
    key_paths(&Value::Table(user.clone()), "", &mut given);
    given.into_iter().filter(|k| !known.contains(k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::defaults(ProblemKind::Oscillator));
        let w = RunConfig::from_toml("problem = \"wave\"").unwrap();
        assert_eq!(w, RunConfig::defaults(ProblemKind::Wave));
    }

    #[test]
    fn overrides_merge_into_defaults() {
        let c = RunConfig::from_toml("threads = 3\n[criterion]\nfist_steps = 7\n[meta.inner]\nsteps = 9\n").unwrap();
        assert_eq!((c.threads, c.criterion.fist_steps, c.meta.inner.steps), (3, 7, 9));
        assert_eq!(c.criterion.perturb_var, 0.5);
        assert_eq!(c.meta.inner.lr, 0.01);
    }

    #[test]
    fn design_kind_replaces_default_design() {
        let c = RunConfig::from_toml(
            "problem = \"wave\"\n[design]\nkind = \"regular-grid1d\"\nsensors = 4\nlo = 0.0\nhi = 6.0\n",
        );
        // 1-D grid of positions on a 2-D domain
        assert!(matches!(c, Err(Error::Config { .. })));
        let c = RunConfig::from_toml("[design]\nkind = \"regular-grid1d\"\nsensors = 4\nlo = 0.0\nhi = 20.0\n").unwrap();
        assert_eq!(c.design, DesignSpace::RegularGrid1d { sensors: 4, lo: 0.0, hi: 20.0 });
    }

    #[test]
    fn validation_lists_all_offending_keys() {
        let err = RunConfig::from_toml("threads = 0\n[forward]\nlr = -1.0\n[criterion]\njitter = 0.0\n").unwrap_err();
        let Error::Config { keys } = err else { panic!("wrong error") };
        assert!(keys.contains(&"threads".to_string()));
        assert!(keys.contains(&"forward.lr".to_string()));
        assert!(keys.contains(&"criterion.jitter".to_string()));
    }

    #[test]
    fn unknown_keys_are_reported() {
        let Error::Config { keys } = RunConfig::from_toml("bogus = 1\n[meta]\nroundz = 3\n").unwrap_err() else {
            panic!("wrong error")
        };
        assert_eq!(keys, vec!["bogus (unknown)", "meta.roundz (unknown)"]);
    }

    #[test]
    fn hash_ignores_formatting_and_restated_defaults() {
        let a = RunConfig::from_toml("threads = 8").unwrap();
        let b = RunConfig::from_toml("# comment\n\nthreads    =   8\n[meta]\nrounds = 20\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig::from_toml("threads = 7").unwrap();
        assert_ne!(a.hash(), c.hash());
        let d = RunConfig::from_toml("[evaluate.train]\nlr_decay = 0.5").unwrap();
        assert_ne!(a.hash(), d.hash());
        let e = RunConfig::from_toml("threads = 8\nmethods = [\"fist\"]").unwrap();
        assert_eq!(a.hash(), e.hash());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::defaults(ProblemKind::Eikonal);
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn methods_parse() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("vboed".parse::<Method>().is_err());
    }
}
