//! Subcommand implementations. Each returns the process exit code.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use ebf_core::bmc::{bmc_check_until, BmcConfig, BmcVerdict};
use ebf_core::ensemble::{exec_echo, run_ebf_with, EnsembleConfig, Outcome};
use ebf_core::exec::{run_forced, ExecConfig};
use ebf_core::gbf::{crash_report, FuzzSeed};
use ebf_core::mir::{parse_program, Program};
use ebf_core::rng::SplitMix64;
use ebf_core::time::Deadline;
use ebf_core::witness::{record, replay, CrashReport};

use crate::args::{Cli, Command, Common};
use crate::engine::{fuzz_jobs, random_seeds, with_big_stack, GuardedBmc, WallClock};
use crate::report::{engine_name, exit_code, FindingRecord, PhaseMillis, RunReport, EXIT_ERROR};
use crate::sweep::{sweep, SweepSettings};

pub fn load_program(path: &Path) -> Result<Program> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_program(&text).map_err(|e| anyhow!("{}: {}", path.display(), e))
}

/// Run a parsed command line, printing errors and mapping them to the
/// error exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {:#}", e);
            EXIT_ERROR
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Parse { path } => {
            let p = load_program(&path)?;
            print!("{}", p);
            Ok(0)
        }
        Command::Check {
            path,
            common,
            exec,
            bmc,
            split,
        } => {
            let program = load_program(&path)?;
            let config = EnsembleConfig {
                total_budget: Some(split.budget),
                work_units: split.work,
                seed_count: split.seed_count,
                exec: exec.config(common.detectors),
                bmc: bmc.config(common.detectors),
                ..EnsembleConfig::default()
            }
            .with_split(split.bmc_frac, split.fuzz_frac);
            config.check().map_err(|e| anyhow!("{}", e))?;
            check(&path, &program, &config, &common)
        }
        Command::Fuzz {
            path,
            common,
            exec,
            fuzz,
        } => {
            let program = load_program(&path)?;
            let seeds = match &fuzz.seeds {
                Some(dir) => read_seeds(dir)?,
                None => random_seeds(&program, fuzz.seed_count, &mut SplitMix64::new(common.seed)),
            };
            let opts = FuzzOptions {
                execs: fuzz.execs,
                budget: fuzz.budget,
                jobs: fuzz.jobs,
            };
            fuzz_command(&path, &program, &seeds, &exec.config(common.detectors), &opts, &common)
        }
        Command::Bmc {
            path,
            common,
            bmc,
            budget,
        } => {
            let program = load_program(&path)?;
            let config = bmc.config(common.detectors);
            config.check().map_err(|e| anyhow!("{}", e))?;
            bmc_command(&path, &program, &config, budget, &common)
        }
        Command::Replay { path, witness, json } => replay_command(&path, &witness, json),
        Command::Sweep {
            dir,
            axis,
            values,
            common,
            exec,
            bmc,
            execs,
            work,
            jobs,
        } => {
            let entries = crate::corpus::load(&dir)?;
            let settings = SweepSettings {
                exec: exec.config(common.detectors),
                bmc: bmc.config(common.detectors),
                detectors: common.detectors,
                seed: common.seed,
                execs,
                work,
                jobs,
                ..SweepSettings::default()
            };
            let table = sweep(&entries, axis, &values, &settings)?;
            let json = serde_json::to_string_pretty(&table)?;
            fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
            fs::write(common.out.join("sweep.json"), &json)?;
            if common.json {
                println!("{}", json);
            } else {
                print!("{}", table.render());
            }
            Ok(0)
        }
    }
}

fn read_seeds(dir: &Path) -> Result<Vec<FuzzSeed>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| p.is_file());
    paths.sort();
    if paths.is_empty() {
        bail!("no seeds in {}", dir.display());
    }
    paths
        .iter()
        .map(|p| Ok(FuzzSeed::new(fs::read(p).with_context(|| format!("reading {}", p.display()))?)))
        .collect()
}

fn write_outputs(common: &Common, report: &mut RunReport, witnesses: &[CrashReport]) -> Result<()> {
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    for w in witnesses {
        let path = common.out.join(format!("witness_{}.txt", w.run_id));
        fs::write(&path, w.serialize()).with_context(|| format!("writing {}", path.display()))?;
        if report.witness.is_none() {
            report.witness = Some(path.display().to_string());
        }
    }
    fs::write(common.out.join("report.json"), report.to_json())?;
    if common.json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.summary());
    }
    Ok(())
}

fn base_report(path: &Path, mode: &str, common: &Common) -> RunReport {
    RunReport {
        program: path.display().to_string(),
        mode: mode.to_string(),
        seed: common.seed,
        ..RunReport::default()
    }
}

fn exec_map(c: &ExecConfig) -> BTreeMap<String, String> {
    let mut m: BTreeMap<String, String> = exec_echo(c).into_iter().collect();
    m.insert("step_budget".into(), c.step_budget.to_string());
    m
}

fn bmc_map(c: &BmcConfig) -> BTreeMap<String, String> {
    let domain: Vec<String> = c.input_domain.iter().map(|v| v.to_string()).collect();
    BTreeMap::from([
        ("k".to_string(), c.step_bound.to_string()),
        ("C".to_string(), c.context_bound.to_string()),
        ("input_domain".to_string(), domain.join(",")),
        ("harvest_constants".to_string(), c.harvest_constants.to_string()),
        ("state_hashing".to_string(), c.state_hashing.to_string()),
        ("bmc_detectors".to_string(), c.detectors.to_list()),
    ])
}

fn check(path: &Path, program: &Program, config: &EnsembleConfig, common: &Common) -> Result<i32> {
    let clock = WallClock::start();
    let v = with_big_stack(|| run_ebf_with(program, config, common.seed, &clock, &mut GuardedBmc(config.bmc.clone())));
    let mut report = base_report(path, "check", common);
    report.outcome = v.outcome.name().to_string();
    report.exit_code = exit_code(v.outcome);
    report.engines.insert("bmc".into(), v.bmc.to_string());
    report.engines.insert("gbf".into(), v.gbf.to_string());
    report.contributors = v.contributors.iter().map(|e| engine_name(*e).to_string()).collect();
    report.findings = v
        .findings
        .iter()
        .map(|(e, f)| FindingRecord::new(engine_name(*e), program, f))
        .collect();
    report.timings_ms = PhaseMillis::from(v.timings);
    if let Some(f) = &v.fuzz {
        report.executions = Some(f.executions);
        report.crashes = Some(f.crash_count);
    }
    report.states = v.bmc_report.as_ref().map(|r| r.states);
    report.config = exec_map(&config.exec);
    report.config.extend(bmc_map(&config.bmc));
    report.config.insert("bmc_frac".into(), config.bmc_frac.to_string());
    report.config.insert("fuzz_frac".into(), config.fuzz_frac.to_string());
    if let Some(b) = config.total_budget {
        report.config.insert("budget".into(), humantime::format_duration(b).to_string());
    }
    if let Some(w) = config.work_units {
        report.config.insert("work".into(), w.to_string());
    }
    report.notes = v.notes.clone();
    let witnesses: Vec<CrashReport> = v.witness.into_iter().collect();
    write_outputs(common, &mut report, &witnesses)?;
    Ok(report.exit_code)
}

pub struct FuzzOptions {
    pub execs: u64,
    pub budget: Option<Duration>,
    pub jobs: usize,
}

fn fuzz_command(
    path: &Path,
    program: &Program,
    seeds: &[FuzzSeed],
    exec: &ExecConfig,
    opts: &FuzzOptions,
    common: &Common,
) -> Result<i32> {
    let clock = WallClock::start();
    let r = fuzz_jobs(program, seeds, opts.execs, opts.budget, false, exec, common.seed, opts.jobs);
    let elapsed = clock.elapsed();
    let mut report = base_report(path, "fuzz", common);
    let outcome = if r.found_bug() { Outcome::Unsafe } else { Outcome::Unknown };
    report.outcome = outcome.name().to_string();
    report.exit_code = exit_code(outcome);
    report.engines.insert(
        "gbf".into(),
        if r.found_bug() { "Bug" } else { "Unknown" }.to_string(),
    );
    report.executions = Some(r.executions);
    report.crashes = Some(r.crash_count);
    report.timings_ms.fuzz = elapsed.as_millis() as u64;
    report.config = exec_map(exec);
    report.config.insert("execs".into(), opts.execs.to_string());
    report.config.insert("jobs".into(), opts.jobs.to_string());

    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    let mut witnesses = Vec::new();
    let mut echo = vec![
        ("engine".to_string(), "gbf".to_string()),
        ("seed".to_string(), common.seed.to_string()),
    ];
    echo.extend(exec_echo(exec));
    for (n, (_, _, index)) in r.distinct_crashes().into_iter().enumerate() {
        let crash = &r.crashes[index];
        report
            .findings
            .push(FindingRecord::new("gbf", program, &crash.outcome.findings[0]));
        let seed_path = common.out.join(format!("crash_{}.seed", n));
        fs::write(&seed_path, &crash.seed.bytes)?;
        report.crash_seeds.push(seed_path.display().to_string());
        match crash_report(program, &crash.seed, exec, n as u64, echo.clone()) {
            Some(w) => witnesses.push(w),
            None => report.notes.push(format!("crash {} did not reproduce when recorded", n)),
        }
    }
    write_outputs(common, &mut report, &witnesses)?;
    Ok(report.exit_code)
}

fn bmc_command(path: &Path, program: &Program, config: &BmcConfig, budget: Option<Duration>, common: &Common) -> Result<i32> {
    let clock = WallClock::start();
    let r = with_big_stack(|| bmc_check_until(program, config, Deadline::never(&clock).within(budget)));
    let mut report = base_report(path, "bmc", common);
    let (outcome, verdict) = match &r.verdict {
        BmcVerdict::Safe => (Outcome::Safe, "Safe".to_string()),
        BmcVerdict::Bug(_) => (Outcome::Unsafe, "Bug".to_string()),
        BmcVerdict::Unknown(why) => {
            report.notes.push(format!("model checker unknown: {}", why));
            (Outcome::Unknown, "Unknown".to_string())
        }
    };
    report.outcome = outcome.name().to_string();
    report.exit_code = exit_code(outcome);
    report.engines.insert("bmc".into(), verdict);
    report.states = Some(r.states);
    report.timings_ms.bmc = clock.elapsed().as_millis() as u64;
    report.config = bmc_map(config);
    let mut witnesses = Vec::new();
    if let BmcVerdict::Bug(cex) = &r.verdict {
        report.findings.push(FindingRecord::new("bmc", program, &cex.finding));
        let echo = vec![
            ("engine".to_string(), "bmc".to_string()),
            ("seed".to_string(), common.seed.to_string()),
            ("detectors".to_string(), config.detectors.to_list()),
        ];
        let out = run_forced(program, &cex.inputs, &cex.schedule, config.detectors, true)
            .map_err(|e| anyhow!("counterexample does not replay: {}", e))?;
        match record(program, &out, 0, echo) {
            Some(w) => witnesses.push(w),
            None => report.notes.push("counterexample did not reproduce when recorded".into()),
        }
    }
    write_outputs(common, &mut report, &witnesses)?;
    Ok(report.exit_code)
}

fn replay_command(path: &Path, witness: &Path, json: bool) -> Result<i32> {
    let program = load_program(path)?;
    let text = fs::read_to_string(witness).with_context(|| format!("reading {}", witness.display()))?;
    let report = CrashReport::deserialize(&text).map_err(|e| anyhow!("{}: {}", witness.display(), e))?;
    let outcome = replay(&program, &report).map_err(|e| anyhow!("{}", e))?;
    let reproduced = report.reproduced_by(&program, &outcome);
    let findings: Vec<FindingRecord> = outcome
        .findings
        .iter()
        .map(|f| FindingRecord::new("replay", &program, f))
        .collect();
    if json {
        let value = serde_json::json!({
            "program": path.display().to_string(),
            "witness": witness.display().to_string(),
            "reproduced": reproduced,
            "status": format!("{:?}", outcome.status),
            "findings": findings,
        });
        println!("{}", serde_json::to_string_pretty(&value)?);
    } else if reproduced {
        for f in &findings {
            println!("reproduced {} at {} (tick {}, {})", f.kind, f.location, f.tick, f.thread);
        }
    } else {
        println!("not reproduced: run ended with {:?}", outcome.status);
    }
    Ok(if reproduced { 1 } else { EXIT_ERROR })
}
