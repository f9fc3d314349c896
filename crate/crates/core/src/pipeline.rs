//! Stages of a run and their artifacts.
//!
//! Everything lands under `<out>/<config hash>/`:
//!
//! - `config.toml`: the resolved configuration
//! - `theta_si.bin`: shared initialization blob
//! - `forward/thread-<i>.bin` and `forward.csv`: the ensemble
//! - `design.csv`, `traces.csv`: chosen designs and ascent traces
//! - `instances.csv`, `summary.csv`: inverse-problem evaluation
//! - `timings.json`: wall-clock and failed restarts, kept out of the CSVs
//!
//! Every CSV starts with a `# config_hash=…, seed=…` line. Stages that
//! need an earlier artifact load it when present and compute it otherwise.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{Method, RunConfig};
use crate::criteria::{CriterionContext, Member, Scorer};
use crate::edloop::{baseline_grid, baseline_random, optimize_design, EdResult};
use crate::error::{Error, Result};
use crate::harness::{evaluate_design, RunReport};
use crate::metainit::reptile;
use crate::network::{read_blob_file, write_blob_file, ParamVector};
use crate::pde::Problem;
use crate::pinn::{train_forward, TrainConfig};
use crate::seed;

/// Chosen design of one method.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignRow {
    pub method: Method,
    pub gamma: Vec<f64>,
    /// Aggregate criterion score; baselines have none.
    pub score: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct Timing {
    seconds: f64,
    failed_restarts: Vec<String>,
}

pub struct Pipeline {
    pub cfg: RunConfig,
    pub problem: Problem,
    pub hash: String,
    pub dir: PathBuf,
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.parse().map_err(|_| Error::Format(format!("{}: bad number `{s}`", path.display())))
}

impl Pipeline {
    pub fn new(cfg: RunConfig, out: &Path) -> Result<Self> {
        cfg.validate()?;
        let hash = cfg.hash();
        let dir = out.join(&hash);
        fs::create_dir_all(dir.join("forward")).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join("config.toml");
        fs::write(&path, cfg.to_toml()).map_err(|e| Error::io(&path, e))?;
        Ok(Pipeline { problem: cfg.problem(), cfg, hash, dir })
    }

    fn header(&self) -> String {
        format!("# config_hash={}, seed={}\n", self.hash, self.cfg.seed)
    }

    fn write_csv(&self, name: &str, headers: &[String], rows: &[Vec<String>]) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(self.header().into_bytes());
        let err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
        w.write_record(headers).map_err(err)?;
        for r in rows {
            w.write_record(r).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }

    fn read_csv(&self, name: &str) -> Result<Option<Vec<Vec<String>>>> {
        let path = self.dir.join(name);
        if !path.exists() {
            return Ok(None);
        }
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .flexible(true)
            .from_path(&path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let rows = r
            .records()
            .map(|rec| {
                rec.map(|r| r.iter().map(str::to_string).collect())
                    .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
            })
            .collect::<Result<Vec<Vec<String>>>>()?;
        Ok(Some(rows))
    }

    fn theta_si_path(&self) -> PathBuf {
        self.dir.join("theta_si.bin")
    }

    fn thread_path(&self, i: usize) -> PathBuf {
        self.dir.join("forward").join(format!("thread-{i}.bin"))
    }

    /// Meta-learns the shared initialization and stores it.
    pub fn meta_init(&self) -> Result<ParamVector> {
        let run = || -> Result<ParamVector> {
            let theta = reptile(&self.problem, &self.cfg.meta, seed::stage(self.cfg.seed, "meta"))?;
            write_blob_file(&self.theta_si_path(), &theta)?;
            Ok(theta)
        };
        run().map_err(|e| e.in_stage("meta-init"))
    }

    pub fn theta_si(&self) -> Result<ParamVector> {
        let path = self.theta_si_path();
        if path.exists() {
            let theta = read_blob_file(&path).map_err(|e| e.in_stage("meta-init"))?;
            if theta.arch == self.problem.net {
                return Ok(theta);
            }
        }
        self.meta_init()
    }

    fn ensemble_beta(&self, i: usize) -> Vec<f64> {
        self.problem.beta_space.sample(seed::derive(seed::stage(self.cfg.seed, "ensemble"), i as u64))
    }

    /// Trains one forward network per ensemble thread from the shared initialization.
    pub fn forward(&self) -> Result<Vec<Member>> {
        let theta_si = self.theta_si()?;
        let run = || -> Result<Vec<Member>> {
            use rayon::prelude::*;
            let outcomes: Vec<(Member, [f64; 3])> = (0..self.cfg.threads)
                .into_par_iter()
                .map(|i| {
                    let beta = self.ensemble_beta(i);
                    let cfg = TrainConfig {
                        seed: seed::derive(seed::stage(self.cfg.seed, "forward"), i as u64),
                        ..self.cfg.forward.clone()
                    };
                    let out = train_forward(&self.problem, &beta, &theta_si, &cfg).map_err(|e| e.in_thread(i))?;
                    write_blob_file(&self.thread_path(i), &out.params)?;
                    let l = out.final_loss;
                    Ok((Member { beta, theta: out.params.values }, [l.total, l.pde, l.obs]))
                })
                .collect::<Result<_>>()?;
            let d = self.problem.beta_space.dim();
            let mut headers = vec!["thread".to_string()];
            headers.extend((0..d).map(|k| format!("beta_{k}")));
            headers.extend(["loss".into(), "loss_pde".into(), "loss_obs".into()]);
            let rows: Vec<Vec<String>> = outcomes
                .iter()
                .enumerate()
                .map(|(i, (m, l))| {
                    let mut r = vec![i.to_string()];
                    r.extend(m.beta.iter().map(|&v| fmt(v)));
                    r.extend(l.iter().map(|&v| fmt(v)));
                    r
                })
                .collect();
            self.write_csv("forward.csv", &headers, &rows)?;
            Ok(outcomes.into_iter().map(|(m, _)| m).collect())
        };
        run().map_err(|e| e.in_stage("forward"))
    }

    pub fn ensemble(&self) -> Result<Vec<Member>> {
        let load = || -> Result<Option<Vec<Member>>> {
            let Some(rows) = self.read_csv("forward.csv")? else { return Ok(None) };
            if rows.len() != self.cfg.threads {
                return Ok(None);
            }
            let path = self.dir.join("forward.csv");
            let d = self.problem.beta_space.dim();
            let mut out = Vec::with_capacity(rows.len());
            for (i, r) in rows.iter().enumerate() {
                let blob = self.thread_path(i);
                if !blob.exists() || r.len() < 1 + d {
                    return Ok(None);
                }
                let beta = r[1..1 + d].iter().map(|s| parse_f64(s, &path)).collect::<Result<Vec<_>>>()?;
                out.push(Member { beta, theta: read_blob_file(&blob)?.values });
            }
            Ok(Some(out))
        };
        match load().map_err(|e| e.in_stage("forward"))? {
            Some(m) => Ok(m),
            None => self.forward(),
        }
    }

    fn design_one(&self, method: Method, ctx: Option<&CriterionContext>) -> Result<(DesignRow, Option<EdResult>)> {
        let space = &self.cfg.design;
        match (method.criterion(), ctx) {
            (Some(kind), Some(ctx)) => {
                let scorer = Scorer::new(ctx, kind).map_err(|e| e.in_stage(method.name()))?;
                let r = optimize_design(&scorer, space, &self.cfg.ascent, seed::stage(self.cfg.seed, "ascent"))?;
                Ok((DesignRow { method, gamma: r.gamma.clone(), score: Some(r.score) }, Some(r)))
            }
            _ => {
                let gamma = match method {
                    Method::Grid => baseline_grid(space),
                    _ => baseline_random(space, seed::stage(self.cfg.seed, "random-design")),
                };
                Ok((DesignRow { method, gamma, score: None }, None))
            }
        }
    }

    /// Optimizes the design of every configured method. Rows of methods not
    /// run this time are kept from an earlier `design.csv`.
    pub fn design(&self) -> Result<Vec<DesignRow>> {
        let run = || -> Result<Vec<DesignRow>> {
            let mut rows: BTreeMap<usize, DesignRow> = self.load_designs()?.into_iter().map(|r| (idx(r.method), r)).collect();
            let mut traces: BTreeMap<usize, Vec<Vec<String>>> = BTreeMap::new();
            if let Some(old) = self.read_csv("traces.csv")? {
                for r in old {
                    if let Some(m) = r.first().and_then(|s| s.parse::<Method>().ok()) {
                        traces.entry(idx(m)).or_default().push(r);
                    }
                }
            }
            let timing_path = self.dir.join("timings.json");
            let mut timings: BTreeMap<String, Timing> = fs::read(&timing_path)
                .ok()
                .and_then(|b| serde_json::from_slice(&b).ok())
                .unwrap_or_default();
            let ctx = if self.cfg.methods.iter().any(|m| m.criterion().is_some()) {
                let ensemble = self.ensemble()?;
                let theta_si = self.theta_si()?;
                Some(CriterionContext::new(
                    self.problem.clone(),
                    self.cfg.design.clone(),
                    ensemble,
                    theta_si.values,
                    self.cfg.criterion.clone(),
                    seed::stage(self.cfg.seed, "criteria"),
                )?)
            } else {
                None
            };
            for &m in &self.cfg.methods {
                let (row, ed) = self.design_one(m, ctx.as_ref()).map_err(|e| e.in_stage(m.name()))?;
                let mut tr = Vec::new();
                let mut t = Timing::default();
                if let Some(ed) = ed {
                    t.seconds = ed.seconds;
                    for (k, trace) in ed.traces.iter().enumerate() {
                        for (s, (g, v)) in trace.gammas.iter().zip(&trace.scores).enumerate() {
                            let mut r = vec![m.name().to_string(), k.to_string(), s.to_string(), fmt(*v)];
                            r.extend(g.iter().map(|&x| fmt(x)));
                            tr.push(r);
                        }
                        if let Some(f) = &trace.failed {
                            t.failed_restarts.push(format!("restart {k}: {f}"));
                        }
                    }
                }
                timings.insert(m.name().to_string(), t);
                traces.insert(idx(m), tr);
                rows.insert(idx(m), row);
            }
            let dim = self.cfg.design.dim();
            let gamma_cols = (0..dim).map(|k| format!("gamma_{k}"));
            let mut h: Vec<String> = vec!["method".into(), "score".into()];
            h.extend(gamma_cols.clone());
            let out: Vec<Vec<String>> = rows
                .values()
                .map(|r| {
                    let mut v = vec![r.method.name().to_string(), r.score.map(fmt).unwrap_or_default()];
                    v.extend(r.gamma.iter().map(|&x| fmt(x)));
                    v
                })
                .collect();
            self.write_csv("design.csv", &h, &out)?;
            let mut h: Vec<String> = vec!["method".into(), "restart".into(), "step".into(), "score".into()];
            h.extend(gamma_cols);
            self.write_csv("traces.csv", &h, &traces.into_values().flatten().collect::<Vec<_>>())?;
            let json = serde_json::to_vec_pretty(&timings).expect("timings serialize");
            fs::write(&timing_path, json).map_err(|e| Error::io(&timing_path, e))?;
            Ok(rows.into_values().collect())
        };
        run().map_err(|e| e.in_stage("design"))
    }

    /// Designs recorded in `design.csv`, in method order.
    pub fn load_designs(&self) -> Result<Vec<DesignRow>> {
        let path = self.dir.join("design.csv");
        let Some(rows) = self.read_csv("design.csv")? else { return Ok(Vec::new()) };
        rows.iter()
            .map(|r| {
                if r.len() < 2 {
                    return Err(Error::Format(format!("{}: short row", path.display())));
                }
                let method: Method = r[0].parse()?;
                let score = if r[1].is_empty() { None } else { Some(parse_f64(&r[1], &path)?) };
                let gamma = r[2..].iter().map(|s| parse_f64(s, &path)).collect::<Result<_>>()?;
                Ok(DesignRow { method, gamma, score })
            })
            .collect()
    }

    /// Evaluates the configured methods' designs on the inverse problems.
    pub fn evaluate(&self) -> Result<Vec<RunReport>> {
        let run = || -> Result<Vec<RunReport>> {
            let mut designs = self.load_designs()?;
            let missing = self.cfg.methods.iter().any(|m| !designs.iter().any(|d| d.method == *m));
            if missing {
                designs = self.design()?;
            }
            let theta_si = self.theta_si()?;
            let mut reports = Vec::new();
            for d in designs.iter().filter(|d| self.cfg.methods.contains(&d.method)) {
                let mut r = evaluate_design(
                    &self.problem,
                    &self.cfg.design,
                    &d.gamma,
                    d.method.name(),
                    &theta_si,
                    &self.cfg.evaluate,
                    seed::stage(self.cfg.seed, "evaluate"),
                )
                .map_err(|e| e.in_stage(d.method.name()))?;
                r.config_hash = self.hash.clone();
                reports.push(r);
            }
            let d = self.problem.beta_space.dim();
            let mut h: Vec<String> = vec!["method".into(), "instance_seed".into()];
            h.extend((0..d).map(|k| format!("beta_{k}")));
            h.extend(["error".into(), "diverged".into()]);
            let rows: Vec<Vec<String>> = reports
                .iter()
                .flat_map(|r| {
                    r.instances.iter().map(move |i| {
                        let mut v = vec![r.method.clone(), i.seed.to_string()];
                        v.extend(i.beta.iter().map(|&b| fmt(b)));
                        v.extend([fmt(i.error), i.diverged.to_string()]);
                        v
                    })
                })
                .collect();
            self.write_csv("instances.csv", &h, &rows)?;
            let h: Vec<String> = ["method", "median", "siqr", "n", "diverged"].map(String::from).to_vec();
            let rows: Vec<Vec<String>> = reports
                .iter()
                .map(|r| {
                    let div = r.instances.iter().filter(|i| i.diverged).count();
                    vec![r.method.clone(), fmt(r.median), fmt(r.siqr), r.n.to_string(), div.to_string()]
                })
                .collect();
            self.write_csv("summary.csv", &h, &rows)?;
            Ok(reports)
        };
        run().map_err(|e| e.in_stage("evaluate"))
    }

    /// Every stage in order, recomputing each.
    pub fn run_all(&self) -> Result<Vec<RunReport>> {
        self.meta_init()?;
        self.forward()?;
        self.design()?;
        self.evaluate()
    }
}

fn idx(m: Method) -> usize {
    Method::ALL.iter().position(|&x| x == m).expect("listed method")
}
