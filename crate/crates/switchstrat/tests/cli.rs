use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proptest::prelude::*;
use switchstrat::io;
use switchstrat::run::{self, Target};
use switchstrat::RunConfig;
use switchstrat_core::estimands::{self as est, McNodes};
use switchstrat_core::trial::{generate, GeneratorConfig};
use switchstrat_core::{Arm, Theta};

fn tiny_config(out: &Path, run_id: &str) -> String {
    format!(
        r#"
run_id = "{run_id}"
output_dir = "{}"
seed = 7
kappa_grid = [0.0, 0.5]
lambda_variants = [{{ label = "improper", prior = {{ kind = "improper_uniform" }} }}]

[generator]
n = 50

[mcmc]
n_iter = 200
burn_in = 100
thin = 1
n_chains = 2

[estimands]
y_grid = [0.5, 1.0, 2.0]
s_values = [0.5, 1.5]
mc_size = 64
max_draws = 25

[ppc]
t_grid = [0.5, 1.0, 1.5]
"#,
        out.display()
    )
}

fn write_config(dir: &Path, run_id: &str) -> PathBuf {
    let path = dir.join(format!("{run_id}.toml"));
    std::fs::write(&path, tiny_config(dir, run_id)).unwrap();
    path
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_switchstrat")).args(args).output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

#[test]
fn smoke_fit_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "smoke");
    let out = cli(&["--config", cfg.to_str().unwrap(), "--threads", "2", "fit", "--kappa", "0"]);
    ok(&out);
    let run = tmp.path().join("smoke");
    let draws = lines(&run.join("kappa=0/draws.csv"));
    assert_eq!(
        draws[0],
        "chain,iter,pi,alpha_s,beta_s,alpha_y_ns,beta_y_ns,alpha_y_sw,beta_y_sw,nu_y_ns,gamma_y_ns,nu_y_sw,gamma_y_sw,lambda,ace_ns,mean_y0_ns,mean_y1_ns"
    );
    assert_eq!(draws.len(), 1 + 2 * 100);
    assert!(draws[1..].iter().all(|l| l.split(',').count() == 17));
    let diag = lines(&run.join("kappa=0/diagnostics.csv"));
    assert_eq!(diag[0], "param,mean,sd,q025,q25,q50,q75,q975,rhat");
    assert_eq!(diag.len(), 13);
    for f in ["manifest.json", "data.csv", "truth.csv", "kappa=0/acceptance.json", "itt/draws.csv", "itt/curves.csv", "itt/km_control.csv", "itt/km_treated.csv"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    assert_eq!(lines(&run.join("itt/km_control.csv"))[0], "t,survival,at_risk,events");
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"]["master"], 7);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn kappa_values_get_separate_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "layout");
    for k in ["0", "0.5"] {
        ok(&cli(&["--config", cfg.to_str().unwrap(), "fit", "--kappa", k]));
    }
    let a = std::fs::read(tmp.path().join("layout/kappa=0/draws.csv")).unwrap();
    let b = std::fs::read(tmp.path().join("layout/kappa=0.5/draws.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn zero_units_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("n0.toml");
    std::fs::write(&path, format!("output_dir = \"{}\"\n[generator]\nn = 0\n", tmp.path().display())).unwrap();
    let out = cli(&["--config", path.to_str().unwrap(), "generate"]);
    assert_eq!(out.status.code(), Some(2));
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "no_such_key = 3\n").unwrap();
    assert_eq!(cli(&["--config", bad.to_str().unwrap(), "generate"]).status.code(), Some(2));
}

#[test]
fn ppc_refuses_nonzero_kappa() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "refuse");
    ok(&cli(&["--config", cfg.to_str().unwrap(), "fit", "--kappa", "0.5"]));
    let out = cli(&["--config", cfg.to_str().unwrap(), "ppc", "--kappa", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kappa = 0"));
}

#[test]
fn ppc_report_has_every_row() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "ppc");
    ok(&cli(&["--config", cfg.to_str().unwrap(), "fit"]));
    ok(&cli(&["--config", cfg.to_str().unwrap(), "ppc"]));
    let rows = lines(&tmp.path().join("ppc/kappa=0/ppc.csv"));
    assert_eq!(rows[0], "discrepancy,group,pppv,n_used,n_excluded");
    let keys: Vec<String> = rows[1..].iter().map(|l| l.split(',').take(2).collect::<Vec<_>>().join(",")).collect();
    let mut expected = vec!["bic,all".to_string(), "deviance,survival".into(), "deviance,switching_time".into()];
    for g in ["non_switchers", "switchers", "switching_time"] {
        for d in ["signal", "noise", "ratio"] {
            expected.push(format!("{d},{g}"));
        }
    }
    let (mut a, mut b) = (keys.clone(), expected.clone());
    a.sort();
    b.sort();
    assert_eq!(a, b);
    let km = lines(&tmp.path().join("ppc/kappa=0/ppc_km.csv"));
    assert_eq!(km[0], "t,group,pppv");
    assert_eq!(km.len(), 1 + 3 * 3);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("ppc/kappa=0/ppc.json")).unwrap()).unwrap();
    assert_eq!(report["n_draws"], 200);
}

#[test]
fn commands_are_deterministic_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for (id, threads) in [("a", "1"), ("b", "3")] {
        let cfg = write_config(tmp.path(), id);
        let c = cfg.to_str().unwrap();
        ok(&cli(&["--config", c, "--threads", threads, "generate"]));
        ok(&cli(&["--config", c, "--threads", threads, "fit"]));
        ok(&cli(&["--config", c, "--threads", threads, "estimands"]));
        ok(&cli(&["--config", c, "--threads", threads, "ppc"]));
        files.push(tmp.path().join(id));
    }
    for f in ["data.csv", "truth.csv", "kappa=0/draws.csv", "kappa=0/curves.csv", "kappa=0/ppc.json", "itt/draws.csv"] {
        assert_eq!(std::fs::read(files[0].join(f)).unwrap(), std::fs::read(files[1].join(f)).unwrap(), "{f}");
    }
    // Manifests differ only through the run id.
    let m = |p: &Path| std::fs::read_to_string(p.join("manifest.json")).unwrap();
    assert_eq!(m(&files[0]).replace("\"a\"", "\"b\""), m(&files[1]).replace("\"a\"", "\"b\"").replace(&hash_of(&files[1]), &hash_of(&files[0])));
}

fn hash_of(run: &Path) -> String {
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    v["config_sha256"].as_str().unwrap().to_string()
}

#[test]
fn seed_flag_changes_the_data() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "seeded");
    ok(&cli(&["--config", cfg.to_str().unwrap(), "generate"]));
    let a = std::fs::read(tmp.path().join("seeded/data.csv")).unwrap();
    ok(&cli(&["--config", cfg.to_str().unwrap(), "--seed", "8", "generate"]));
    let b = std::fs::read(tmp.path().join("seeded/data.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn sensitivity_covers_the_grid_and_variants() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sens");
    ok(&cli(&["--config", cfg.to_str().unwrap(), "sensitivity"]));
    for d in ["kappa=0", "kappa=0.5", "lambda=improper/kappa=0"] {
        for f in ["draws.csv", "diagnostics.csv", "curves.csv"] {
            assert!(tmp.path().join("sens").join(d).join(f).is_file(), "{d}/{f}");
        }
    }
}

#[test]
fn strict_mode_fails_on_unconverged_chains() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("strict.toml");
    // Ten kept draws per chain cannot put every R-hat below 1.0001.
    let text = tiny_config(tmp.path(), "strict")
        .replace("n_iter = 200\nburn_in = 100", "n_iter = 20\nburn_in = 10")
        .replacen("seed = 7\n", "seed = 7\nrhat_threshold = 1.0001\n", 1);
    std::fs::write(&path, text).unwrap();
    let out = cli(&["--config", path.to_str().unwrap(), "--strict", "fit"]);
    assert_eq!(out.status.code(), Some(1));
    ok(&cli(&["--config", path.to_str().unwrap(), "fit"]));
}

fn lib_config(tmp: &Path, run_id: &str) -> RunConfig {
    RunConfig::from_toml(&tiny_config(tmp, run_id)).unwrap()
}

#[test]
fn estimands_from_empty_draws_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = lib_config(tmp.path(), "empty");
    let dir = Target::main(0.0).dir(&cfg);
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("draws.csv"), io::draws_header().join(",") + "\n").unwrap();
    let err = run::cmd_estimands(&cfg, Target::main(0.0)).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn single_draw_gives_degenerate_intervals() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = lib_config(tmp.path(), "single");
    let dir = Target::main(0.5).dir(&cfg);
    let theta = Theta::calibration_truth(0.5);
    let row: Vec<String> = ["0".to_string(), "1".into()]
        .into_iter()
        .chain(theta.values().iter().chain(switchstrat_core::sampler::Snapshot::of(&theta).values().iter()).map(|v| v.to_string()))
        .collect();
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("draws.csv"), format!("{}\n{}\n", io::draws_header().join(","), row.join(","))).unwrap();
    let rows = run::cmd_estimands(&cfg, Target::main(0.5)).unwrap();
    assert_eq!(rows.len(), run::curve_layout(&cfg).len());
    for r in rows.iter().filter(|r| r.median.is_some()) {
        assert_eq!(r.q025, r.median, "{}", r.estimand);
        assert_eq!(r.q975, r.median, "{}", r.estimand);
    }
    let ace = rows.iter().find(|r| r.estimand == "ace_ns").unwrap();
    assert_eq!(ace.median, Some(est::ace_ns(&theta)));
}

#[test]
fn curves_match_direct_library_calls() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = lib_config(tmp.path(), "direct");
    let fit = run::cmd_fit(&cfg, Target::main(0.5), false).unwrap();
    let rows = run::cmd_estimands(&cfg, Target::main(0.5)).unwrap();
    let thetas: Vec<Theta> = fit.draws.thetas().copied().collect();
    let picked = run::subsample(thetas.len(), cfg.estimands.max_draws);
    assert_eq!(picked.len(), 25);
    let nodes = McNodes::new(cfg.estimands.mc_size, cfg.seeds().nodes);
    let vals: Vec<f64> = picked.iter().map(|&i| est::dce_sw(1.0, 0.5, &thetas[i], &nodes)).collect();
    let sum = est::summarize(&vals).unwrap();
    let row = rows.iter().find(|r| r.estimand == "dce_sw" && r.s == Some(0.5) && r.y == Some(1.0)).unwrap();
    assert_eq!((row.q025, row.median, row.q975), (Some(sum.q025), Some(sum.median), Some(sum.q975)));
    assert_eq!(row.kappa, Some(0.5));
    // The file on disk has one line per row and the fixed header.
    let text = lines(&fit.dir.join("curves.csv"));
    assert_eq!(text[0], "estimand,s,y,kappa,q025,median,q975");
    assert_eq!(text.len(), 1 + rows.len());
}

#[test]
fn draws_file_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = lib_config(tmp.path(), "rt");
    let fit = run::cmd_fit(&cfg, Target::main(0.0), false).unwrap();
    let back = io::read_draws(&fit.dir.join("draws.csv"), 0.0).unwrap();
    assert_eq!(back.chains.len(), fit.draws.chains.len());
    for (a, b) in back.chains.iter().zip(&fit.draws.chains) {
        assert_eq!(a.draws, b.draws);
    }
}

#[test]
fn default_generate_matches_the_descriptive_table() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("cal.toml");
    std::fs::write(&path, format!("output_dir = \"{}\"\nrun_id = \"cal\"\n", tmp.path().display())).unwrap();
    ok(&cli(&["--config", path.to_str().unwrap(), "generate"]));
    let ds = io::read_dataset(&tmp.path().join("cal/data.csv"), Some(3.0)).unwrap();
    assert_eq!(ds.len(), 1000);
    let controls: Vec<_> = ds.records().iter().filter(|r| r.arm == Arm::Control).collect();
    let no_switch = controls.iter().filter(|r| !r.s_event).count() as f64 / controls.len() as f64;
    let censored = ds.records().iter().filter(|r| !r.y_event).count() as f64 / 1000.0;
    assert!((no_switch - 0.62).abs() <= 0.06, "{no_switch}");
    assert!((censored - 0.69).abs() <= 0.06, "{censored}");
}

#[test]
fn config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = lib_config(tmp.path(), "cfg");
    assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    let d = RunConfig::default();
    assert_eq!(RunConfig::from_toml(&d.to_toml()).unwrap(), d);
    let out = cli(&["--config", write_config(tmp.path(), "show").to_str().unwrap(), "show-config"]);
    ok(&out);
    let shown = RunConfig::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(shown, lib_config(tmp.path(), "show"));
}

#[test]
fn dataset_examples() {
    let text = "id,z,c,s_tilde,s_event,y_tilde,y_event\n1,0,3.0,1.24,1,2.10,1\n2,1,2.5,,0,2.5,0\n7,0,2.0,,0,2.0,0\n";
    let ds = io::parse_dataset(text, 3.0).unwrap();
    let ids: Vec<u64> = ds.records().iter().map(|r| r.id).collect();
    assert_eq!(ids, [1, 2, 7]);
    assert_eq!(ds.records()[2].s_tilde, Some(2.0));
    let dup = "id,z,c,s_tilde,s_event,y_tilde,y_event\n1,1,2.5,,0,2.5,0\n1,1,2.5,,0,2.5,0\n";
    assert!(matches!(io::parse_dataset(dup, 3.0), Err(switchstrat::DataError::InvariantViolation { id: 1, .. })));
    let long = "id,z,c,s_tilde,s_event,y_tilde,y_event\n1,1,2.5,,0,2.6,1\n";
    assert!(matches!(io::parse_dataset(long, 3.0), Err(switchstrat::DataError::InvariantViolation { id: 1, .. })));
    let short = "id,z,c,s_tilde,s_event,y_tilde,y_event\n1,1,2.5,,0\n";
    assert!(matches!(io::parse_dataset(short, 3.0), Err(switchstrat::DataError::MalformedRow { line: 2, .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dataset_round_trips(seed in any::<u64>(), n in 2usize..80, p in 0.05f64..0.95, kappa in 0.0f64..=1.0) {
        let cfg = GeneratorConfig { n, p_treat: p, theta: Theta::calibration_truth(kappa), ..GeneratorConfig::calibrated(seed) };
        let (ds, truth) = generate(&cfg).unwrap();
        let mut buf = Vec::new();
        io::write_dataset(&mut buf, &ds).unwrap();
        let back = io::parse_dataset(std::str::from_utf8(&buf).unwrap(), ds.c_max()).unwrap();
        prop_assert_eq!(back, ds);
        let mut buf = Vec::new();
        io::write_truth(&mut buf, &truth).unwrap();
        prop_assert_eq!(io::parse_truth(std::str::from_utf8(&buf).unwrap()).unwrap(), truth);
    }

    #[test]
    fn config_round_trips_for_any_seed_and_grid(seed in any::<u64>(), grid in prop::collection::vec(0.0f64..=1.0, 1..6), mc in 1usize..5000) {
        let cfg = RunConfig {
            seed,
            kappa_grid: grid,
            estimands: switchstrat::config::EstimandSection { mc_size: mc, ..Default::default() },
            ..RunConfig::default()
        };
        prop_assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
