use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use super::pipeline::{score_run, triangulation_rows, Layout, RunSlot, Score, TimingRecord};
use super::plan::{derive_seed, EngineConfig};
use super::store::{ArtifactKind, Store};
use crate::error::{Error, Result};
use crate::estimator::{Triangulated, TriangulationFlag};
use crate::metrics::ensemble_median_with_ci;

/// Plot-ready tables, one per figure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Figure {
    ErrorVsTa,
    ErrorVsSize,
    DirectVsIndirect,
    ErrorVsChi,
    CostVsChi,
}

impl Figure {
    pub const ALL: [Figure; 5] = [
        Figure::ErrorVsTa,
        Figure::ErrorVsSize,
        Figure::DirectVsIndirect,
        Figure::ErrorVsChi,
        Figure::CostVsChi,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Figure::ErrorVsTa => "error_vs_ta",
            Figure::ErrorVsSize => "error_vs_size",
            Figure::DirectVsIndirect => "direct_vs_indirect",
            Figure::ErrorVsChi => "error_vs_chi",
            Figure::CostVsChi => "cost_vs_chi",
        }
    }

    pub fn header(&self) -> &'static str {
        match self {
            Figure::ErrorVsTa | Figure::ErrorVsSize => {
                "cell,geometry,size,distribution,t_a,method,chi,l_max,row,value,ci_lo,ci_hi"
            }
            Figure::DirectVsIndirect => "instance,eps_direct,eps_indirect,flags",
            Figure::ErrorVsChi => {
                "cell,geometry,size,distribution,t_a,method,chi,l_max,row,value,ci_lo,ci_hi,seconds_per_measurement"
            }
            Figure::CostVsChi => "cell,geometry,size,t_a,chi,l_max,row,seconds,ci_lo,ci_hi",
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown figure `{s}`")))
    }
}

/// Runs of one engine over the instances of one (cell, size, t_a).
struct Group<'a> {
    runs: Vec<&'a RunSlot>,
}

/// Group key ordered by cell, size, annealing time and engine position.
type GroupKey = (usize, usize, u64, usize);

fn groups<'a>(layout: &'a Layout, keep: impl Fn(&EngineConfig) -> bool) -> BTreeMap<GroupKey, Group<'a>> {
    let mut out: BTreeMap<GroupKey, Group<'a>> = BTreeMap::new();
    for run in &layout.runs {
        if !keep(layout.engine_of(run)) {
            continue;
        }
        let inst = &layout.instances[run.slot];
        out.entry((inst.cell, inst.size, run.t_a.to_bits(), run.engine))
            .or_insert_with(|| Group { runs: Vec::new() })
            .runs
            .push(run);
    }
    out
}

fn fmt_opt(x: Option<usize>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn chi_l(engine: &EngineConfig) -> (Option<usize>, Option<usize>) {
    match engine {
        EngineConfig::Bptns(c) => (Some(c.chi), Some(c.l_max)),
        _ => (None, None),
    }
}

struct Scored {
    per_instance: Vec<(usize, f64)>,
    missing: Vec<String>,
}

fn collect_scores(layout: &Layout, store: &Store, group: &Group) -> Result<Scored> {
    let mut per_instance = Vec::new();
    let mut missing = Vec::new();
    for run in &group.runs {
        match score_run(layout, store, run)? {
            Score::Value(v) => per_instance.push((layout.instances[run.slot].index, v)),
            Score::Failed(_) => {}
            Score::Missing => missing.push(layout.run_id(run)),
        }
    }
    Ok(Scored { per_instance, missing })
}

fn timing(layout: &Layout, store: &Store, run: &RunSlot) -> Result<Option<TimingRecord>> {
    let name = format!("{}.json", layout.correlation_key(run));
    if !store.exists(ArtifactKind::Timing, &name) {
        return Ok(None);
    }
    Ok(Some(serde_json::from_slice(&store.read(ArtifactKind::Timing, &name)?)?))
}

/// Rows `prefix,index,value,,` per instance and `prefix,median,m,lo,hi`.
fn ensemble_rows(
    out: &mut String,
    prefix: &str,
    values: &[(usize, f64)],
    n_boot: usize,
    seed: u64,
    extra: &dyn Fn(Option<usize>) -> String,
) -> Result<()> {
    for &(k, v) in values {
        let _ = writeln!(out, "{prefix},{k},{v:?},,{}", extra(Some(k)));
    }
    if values.is_empty() {
        return Ok(());
    }
    let vs: Vec<f64> = values.iter().map(|x| x.1).collect();
    let ci = ensemble_median_with_ci(&vs, n_boot, seed)?;
    let _ = writeln!(out, "{prefix},median,{:?},{:?},{:?}{}", ci.median, ci.lo, ci.hi, extra(None));
    Ok(())
}

/// Write the table of `figure` into the store's `figures/` directory. Fails
/// with [`Error::MissingCells`] naming every run whose results are absent.
pub fn report(layout: &Layout, store: &Store, figure: Figure) -> Result<PathBuf> {
    let plan = &layout.plan;
    let mut out = String::from(figure.header());
    out.push('\n');
    let mut missing: Vec<String> = Vec::new();
    let boot_seed = |what: &str, key: &GroupKey| derive_seed(plan.seed, &format!("{what}:{key:?}"));
    match figure {
        Figure::ErrorVsTa | Figure::ErrorVsSize => {
            let mut gs: Vec<(GroupKey, Group)> =
                groups(layout, |e| !matches!(e, EngineConfig::Exact)).into_iter().collect();
            if figure == Figure::ErrorVsSize {
                gs.sort_by_key(|(k, _)| (k.0, k.2, k.3, k.1));
            }
            let indirect = if figure == Figure::ErrorVsSize {
                triangulation_rows(layout, store)?
            } else {
                Vec::new()
            };
            if gs.is_empty() {
                missing.push("no engine besides exact in any cell".into());
            }
            for (key, group) in &gs {
                let run = group.runs[0];
                let cell = layout.cell_of(run);
                let engine = layout.engine_of(run);
                let (chi, l) = chi_l(engine);
                let scored = collect_scores(layout, store, group)?;
                missing.extend(scored.missing);
                let prefix = format!(
                    "{},{},{},{},{:?},{},{},{}",
                    cell.name,
                    cell.geometry.label(),
                    key.1,
                    cell.distribution,
                    run.t_a,
                    engine.label(),
                    fmt_opt(chi),
                    fmt_opt(l)
                );
                ensemble_rows(&mut out, &prefix, &scored.per_instance, plan.n_boot, boot_seed("direct", key), &|_| {
                    String::new()
                })?;
                // indirect estimates of the same method, one block per reference engine
                let mut by_ref: BTreeMap<usize, Vec<(usize, Triangulated)>> = BTreeMap::new();
                for t in indirect.iter().filter(|t| group.runs.iter().any(|r| std::ptr::eq(*r, &layout.runs[t.method_run]))) {
                    let r = &layout.runs[t.reference_run];
                    by_ref
                        .entry(r.engine)
                        .or_default()
                        .push((layout.instances[r.slot].index, t.row.eps_hat));
                }
                for (ref_engine, values) in by_ref {
                    let label = format!("{}~{}", engine.label(), cell.engines[ref_engine].label());
                    let prefix = format!(
                        "{},{},{},{},{:?},{},{},{}",
                        cell.name,
                        cell.geometry.label(),
                        key.1,
                        cell.distribution,
                        run.t_a,
                        label,
                        fmt_opt(chi),
                        fmt_opt(l)
                    );
                    let defined: Vec<(usize, f64)> =
                        values.iter().filter_map(|(k, t)| t.value().map(|v| (*k, v))).collect();
                    for (k, t) in values.iter().filter(|(_, t)| !t.is_defined()) {
                        let _ = writeln!(out, "{prefix},{k},{t},,");
                    }
                    ensemble_rows(&mut out, &prefix, &defined, plan.n_boot, boot_seed("indirect", key), &|_| {
                        String::new()
                    })?;
                }
            }
        }
        Figure::ErrorVsChi | Figure::CostVsChi => {
            let mut gs: Vec<(GroupKey, Group)> =
                groups(layout, |e| matches!(e, EngineConfig::Bptns(_))).into_iter().collect();
            if gs.is_empty() {
                missing.push("no bptns engine in any cell".into());
            }
            // order by cell, size, t_a, l_max, chi
            gs.sort_by_key(|(k, g)| {
                let (chi, l) = chi_l(layout.engine_of(g.runs[0]));
                (k.0, k.1, k.2, l, chi, k.3)
            });
            for (key, group) in &gs {
                let run = group.runs[0];
                let cell = layout.cell_of(run);
                let engine = layout.engine_of(run);
                let (chi, l) = chi_l(engine);
                let mut seconds: BTreeMap<usize, f64> = BTreeMap::new();
                for r in &group.runs {
                    match timing(layout, store, r)? {
                        Some(t) => {
                            seconds.insert(layout.instances[r.slot].index, t.median);
                        }
                        None if figure == Figure::CostVsChi && score_run(layout, store, r)? == Score::Missing => {
                            missing.push(layout.run_id(r))
                        }
                        None => {}
                    }
                }
                let time_values: Vec<(usize, f64)> = seconds.iter().map(|(k, v)| (*k, *v)).collect();
                if figure == Figure::ErrorVsChi {
                    let scored = collect_scores(layout, store, group)?;
                    missing.extend(scored.missing);
                    let prefix = format!(
                        "{},{},{},{},{:?},{},{},{}",
                        cell.name,
                        cell.geometry.label(),
                        key.1,
                        cell.distribution,
                        run.t_a,
                        engine.label(),
                        fmt_opt(chi),
                        fmt_opt(l)
                    );
                    let med_time = crate::metrics::median(&time_values.iter().map(|x| x.1).collect::<Vec<_>>()).ok();
                    let extra = |k: Option<usize>| {
                        let v = match k {
                            Some(k) => seconds.get(&k).copied(),
                            None => med_time,
                        };
                        format!(",{}", v.map(|x| format!("{x:?}")).unwrap_or_default())
                    };
                    ensemble_rows(&mut out, &prefix, &scored.per_instance, plan.n_boot, boot_seed("chi", key), &extra)?;
                } else {
                    let prefix = format!(
                        "{},{},{},{:?},{},{}",
                        cell.name,
                        cell.geometry.label(),
                        key.1,
                        run.t_a,
                        fmt_opt(chi),
                        fmt_opt(l)
                    );
                    ensemble_rows(&mut out, &prefix, &time_values, plan.n_boot, boot_seed("cost", key), &|_| {
                        String::new()
                    })?;
                }
            }
        }
        Figure::DirectVsIndirect => {
            let rows = triangulation_rows(layout, store)?;
            let mut expected = 0usize;
            for cell in &plan.cells {
                let n_bptns = cell.engines.iter().filter(|e| matches!(e, EngineConfig::Bptns(_))).count();
                let n_ref = cell.engines.iter().filter(|e| matches!(e, EngineConfig::Reference { .. })).count();
                if n_bptns == 0 || n_ref == 0 {
                    missing.push(format!("{}: needs a bptns and a reference engine", cell.name));
                }
                expected += n_bptns * n_ref * cell.sizes.len() * cell.t_a.len() * cell.n_instances;
            }
            if rows.len() < expected {
                for run in &layout.runs {
                    if matches!(layout.engine_of(run), EngineConfig::Exact) {
                        continue;
                    }
                    if score_run(layout, store, run)? == Score::Missing {
                        missing.push(layout.run_id(run));
                    }
                }
            }
            for t in &rows {
                let flags: Vec<&str> = t.row.flags.iter().map(TriangulationFlag::as_str).collect();
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    t.row.cell,
                    t.eps_direct.map(|v| format!("{v:?}")).unwrap_or_default(),
                    t.row.eps_hat,
                    flags.join(";")
                );
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingCells(missing));
    }
    store.write(ArtifactKind::Figure, &format!("{}.csv", figure.as_str()), out.as_bytes())
}
