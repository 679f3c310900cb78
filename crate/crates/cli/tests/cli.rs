//! The binary against the shipped fixtures: outputs, exit codes, round trips.

use std::path::PathBuf;
use std::process::{Command, Output};

use interdistrict::fixtures;
use interdistrict::generate::{random_order, random_problem, random_rules, random_school_diversity, GenConfig, RuleFamily};
use interdistrict::*;
use interdistrict_cli::schema::{parse_instance, Instance, InstanceFile, Meta};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(format!("{name}.json"))
}

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_interdistrict")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn load(name: &str) -> Instance {
    let text = std::fs::read_to_string(fixture(name)).unwrap();
    parse_instance(&text, name).unwrap().resolve().unwrap()
}

fn temp(name: &str, body: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("interdistrict-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const ALL: [&str; 8] =
    ["example1", "example1-respecting", "example1-rationed", "example3", "example5", "reserves", "type-ceilings", "stuck"];

#[test]
fn fixtures_encode_the_library_markets() {
    let cases: [(&str, Problem, Vec<RuleSpec>); 6] = {
        let e1 = fixtures::simple_market();
        let ac = fixtures::reserves_market();
        [
            ("example1", e1.clone(), fixtures::simple_rules(&e1)),
            ("example1-respecting", e1.clone(), fixtures::respecting_rules(&e1)),
            ("example1-rationed", e1.clone(), fixtures::rationed_rules(&e1)),
            ("example3", fixtures::ceiling_market(), vec![]),
            ("example5", fixtures::ttc_market(), vec![]),
            ("reserves", ac.clone(), fixtures::reserves_rules(&ac)),
        ]
    };
    for (name, p, rules) in cases {
        let inst = load(name);
        assert_eq!(inst.problem, p, "{name}");
        assert_eq!(inst.rules, rules, "{name}");
    }
    let e3 = load("example3");
    assert_eq!(e3.policy, Some(fixtures::ceiling_goal(&e3.problem, 1)));
    let e5 = load("example5");
    assert_eq!(e5.policy, Some(fixtures::ttc_goal(&e5.problem)));
    assert_eq!(load("type-ceilings").problem, fixtures::nonexistence_market());
    let stuck = load("stuck");
    assert_eq!(stuck.policy, Some(fixtures::stuck_goal(&stuck.problem)));
}

#[test]
fn fixture_files_round_trip() {
    for name in ALL {
        let text = std::fs::read_to_string(fixture(name)).unwrap();
        let file = parse_instance(&text, name).unwrap();
        let again = parse_instance(&serde_json::to_string(&file).unwrap(), name).unwrap();
        assert_eq!(again, file, "{name}");
        let inst = file.resolve().unwrap();
        assert_eq!(InstanceFile::from_instance(&inst).resolve().unwrap(), inst, "{name}");
    }
}

fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let problem = random_problem(&mut rng, &GenConfig::default());
    let family = RuleFamily::ALL[(seed % 4) as usize];
    let rules = random_rules(&mut rng, &problem, family);
    let policy = Some(random_school_diversity(&mut rng, &problem, seed.is_multiple_of(2)));
    let master = Some(random_order(&mut rng, &problem));
    let meta = Meta { name: format!("random-{seed}"), version: "1".into() };
    Instance { meta, problem, rules, policy, master, alpha: Some(Rational::new(seed as i64 % 7, 5)) }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_instances_round_trip(seed in any::<u64>()) {
        let inst = random_instance(seed);
        let file = InstanceFile::from_instance(&inst);
        let text = serde_json::to_string_pretty(&file).unwrap();
        let parsed = parse_instance(&text, "random").unwrap();
        prop_assert_eq!(&parsed, &file);
        prop_assert_eq!(parsed.resolve().unwrap(), inst);
    }
}

#[test]
fn run_reports_are_byte_identical_across_runs() {
    let trace_a = temp("det-a.json", "");
    let trace_b = temp("det-b.json", "");
    for (name, mech) in [("example1", "spda"), ("example5", "ttc"), ("reserves", "spda"), ("example1", "spda-intra")] {
        let f = fixture(name);
        let a = bin(&["run", f.to_str().unwrap(), mech, "--trace", trace_a.to_str().unwrap()]);
        let b = bin(&["run", f.to_str().unwrap(), mech, "--trace", trace_b.to_str().unwrap()]);
        assert_eq!(a.status.code(), Some(0), "{name}: {}", stderr(&a));
        let strip = |s: String, t: &PathBuf| s.replace(t.to_str().unwrap(), "TRACE");
        assert_eq!(strip(stdout(&a), &trace_a), strip(stdout(&b), &trace_b));
        assert_eq!(std::fs::read(&trace_a).unwrap(), std::fs::read(&trace_b).unwrap());
    }
}

#[test]
fn run_writes_outcome_csv() {
    let csv = temp("e5.csv", "");
    let o = bin(&["run", fixture("example5").to_str().unwrap(), "ttc", "--csv", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let body = std::fs::read_to_string(&csv).unwrap();
    assert!(body.starts_with("student,school,district\n"));
    assert!(stdout(&o).contains(&body));
}

#[test]
fn ttc_master_flag_overrides_the_file() {
    let f = fixture("example5");
    let o = bin(&["run", f.to_str().unwrap(), "ttc", "--master", "s1,s2,s3"]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(stderr(&o).contains("master list"));
    let o = bin(&["run", f.to_str().unwrap(), "ttc", "--master", "s1,s2,s3,s9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown student `s9`"));
}

#[test]
fn malformed_json_exits_2_with_locus() {
    let bad = temp("bad.json", "{\n  \"meta\": {\"name\": \"x\"},\n  \"types\": [\n");
    let o = bin(&["run", bad.to_str().unwrap(), "spda"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn dangling_reference_exits_2_with_locus() {
    let text = std::fs::read_to_string(fixture("example1")).unwrap().replace(r#""c3": ["s3""#, r#""c9": ["s3""#);
    let path = temp("dangling.json", &text);
    let o = bin(&["run", path.to_str().unwrap(), "spda"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rules[1].priorities.c9: unknown school `c9`"), "{}", stderr(&o));
}

#[test]
fn incomplete_preferences_are_rejected() {
    let text = std::fs::read_to_string(fixture("example1"))
        .unwrap()
        .replace(r#""preferences": ["c3", "c1", "c2"]"#, r#""preferences": ["c3", "c1"]"#);
    let o = bin(&["run", temp("prefs.json", &text).to_str().unwrap(), "spda"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("s2"), "{}", stderr(&o));
}

#[test]
fn stuck_ttc_exits_3_and_keeps_the_trace() {
    let trace = temp("stuck-trace.json", "");
    let o = bin(&["run", fixture("stuck").to_str().unwrap(), "ttc", "--trace", trace.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("no progress"));
    let t: serde_json::Value = serde_json::from_slice(&std::fs::read(&trace).unwrap()).unwrap();
    assert_eq!(t["outcome"], serde_json::Value::Null);
}

#[test]
fn spda_without_rules_is_an_input_error() {
    let o = bin(&["run", fixture("example3").to_str().unwrap(), "spda"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rules:"));
}

#[test]
fn check_rule_respects_initial_fails_on_example1() {
    let o = bin(&["check-rule", fixture("example1").to_str().unwrap(), "d1", "respects-initial"]);
    assert_eq!(o.status.code(), Some(4));
    let out = stdout(&o);
    // c1 ranks s3 above its initial student s1, so {(s1,c1),(s3,c1)} loses s1
    assert!(out.contains("respects-initial: fails"));
    assert!(out.contains("set: {(s1,c1),(s3,c1)}"));
    assert!(out.contains("contract: (s1,c1)"));
}

#[test]
fn check_rule_on_reserves_holds() {
    let o = bin(&["check-rule", fixture("reserves").to_str().unwrap(), "d1", "weakly-acceptant", "rationed"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("weakly-acceptant: holds\nrationed: holds\n"));
}

#[test]
fn check_rule_usage_errors() {
    let f = fixture("example1");
    assert_eq!(bin(&["check-rule", f.to_str().unwrap(), "d1"]).status.code(), Some(2));
    let o = bin(&["check-rule", f.to_str().unwrap(), "d1", "monotone"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown property `monotone`"));
    assert_eq!(bin(&["check-rule", f.to_str().unwrap(), "d7", "irc"]).status.code(), Some(2));
}

#[test]
fn bounds_exit_codes() {
    let f = fixture("reserves");
    assert_eq!(bin(&["bounds", f.to_str().unwrap(), "--alpha", "3/4"]).status.code(), Some(0));
    let o = bin(&["bounds", f.to_str().unwrap(), "--alpha", "1/6"]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stdout(&o).contains("condition: fails"));
    assert_eq!(bin(&["bounds", f.to_str().unwrap(), "--alpha", "0.5"]).status.code(), Some(2));

    // every school-type ceiling at zero leaves no legitimate matching
    let text = std::fs::read_to_string(&f).unwrap();
    let zero = zero_ceilings(&text);
    let o = bin(&["bounds", temp("zero.json", &zero).to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("no legitimate matching"), "{}", stderr(&o));
}

fn zero_ceilings(text: &str) -> String {
    let mut file: InstanceFile = serde_json::from_str(text).unwrap();
    for r in &mut file.rules {
        for row in r.ceilings.values_mut() {
            for v in row.values_mut() {
                *v = 0;
            }
        }
    }
    serde_json::to_string(&file).unwrap()
}

#[test]
fn audit_example1_spda_is_clean_and_exhaustive() {
    let o = bin(&["audit", fixture("example1").to_str().unwrap(), "spda"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("misreport runs: 24\nexhaustive: yes\nfindings: 0\n"), "{out}");
    assert!(out.contains("oracle: agrees"));
}

#[test]
fn audit_with_zero_budget_is_not_exhaustive() {
    let o = bin(&["--budget", "0", "audit", fixture("example1").to_str().unwrap(), "spda"]);
    assert_eq!(o.status.code(), Some(7));
    assert!(stdout(&o).contains("exhaustive: no"));
}

#[test]
fn audit_example3_efficient_selector_reports_a_finding() {
    let o = bin(&["--threads", "4", "audit", fixture("example3").to_str().unwrap(), "efficient-selector"]);
    assert_eq!(o.status.code(), Some(6));
    let out = stdout(&o);
    assert!(out.contains("exhaustive: yes"));
    assert!(!out.contains("findings: 0"));
}

#[test]
fn audit_example5_ttc_is_clean() {
    let o = bin(&["audit", fixture("example5").to_str().unwrap(), "ttc"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn policy_check_verdicts() {
    let o = bin(&["policy-check", fixture("example5").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("m-convex: holds"));
    let o = bin(&["policy-check", fixture("example3").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    let out = stdout(&o);
    assert!(out.contains("goal members: 169"));
    assert!(out.contains("m-convex: fails"));
    assert!(out.contains("warning:"));
}

#[test]
fn nonexistence_verdicts() {
    let f = fixture("type-ceilings");
    let o = bin(&["nonexistence", f.to_str().unwrap(), "--district", "d"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("verdict: unsatisfiable"));
    let o = bin(&["nonexistence", f.to_str().unwrap(), "--district", "d", "--no-symmetry"]);
    assert!(stdout(&o).contains("verdict: unsatisfiable"));
    let o = bin(&["nonexistence", f.to_str().unwrap(), "--district", "d", "--ceiling", "t1=2", "--ceiling", "t2=2"]);
    let out = stdout(&o);
    assert!(out.contains("verdict: satisfiable"));
    assert_eq!(out.matches(": holds").count(), 4, "{out}");
    let o = bin(&["--budget", "0", "nonexistence", f.to_str().unwrap(), "--district", "d", "--no-symmetry"]);
    assert_eq!(o.status.code(), Some(7));
}
