use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pit(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pit"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

const FIXTURE_CSV: &str = "time,slope,increment\n1.2,0.2,0.2\n1.4,0,0.5\n1.6,1,1\n2.5,2,2\n2.9,0,0.5\n3.2,1.6,1.6\n";

#[test]
fn speed_summary_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = pit(
        &[
            "speed",
            "--lambda",
            "1",
            "--gamma",
            "point_mass(1)",
            "--cycles",
            "100000",
            "--seed",
            "3",
        ],
        dir.path(),
    );
    assert_ok(&o);
    let s = summary(dir.path());
    let v = s["results"]["v_hat"].as_f64().unwrap();
    assert!((v - 1.0 / 3.0).abs() < 0.005, "v_hat {v}");
    assert_eq!(s["results"]["exact_speed"].as_f64().unwrap(), 1.0 / 3.0);
    assert_eq!(s["seed"], 3);
    assert!(s["build"].as_str().is_some_and(|b| !b.is_empty()));
    assert!(s["wall_time_seconds"].as_f64().is_some());
}

#[test]
fn heuristics_summary_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = pit(
        &[
            "heuristics",
            "--lambda",
            "1",
            "--gamma",
            "point_mass(1)",
            "--cycles",
            "0",
        ],
        dir.path(),
    );
    assert_ok(&o);
    let r = &summary(dir.path())["results"];
    assert!((r["v_gl"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    assert!((r["v_rgl"].as_f64().unwrap() - 0.5 * (-0.5f64).exp()).abs() < 1e-9);
    assert!(r["simulated"].is_null());
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for cmd in [
        &[
            "pit-run",
            "--horizon",
            "500",
            "--replicates",
            "3",
            "--seed",
            "9",
            "--gamma",
            "exponential(1)",
        ][..],
        &[
            "moran-run",
            "--n",
            "500",
            "--horizon",
            "3",
            "--grid-step",
            "0.05",
            "--replicates",
            "2",
            "--seed",
            "9",
        ][..],
    ] {
        assert_ok(&pit(cmd, a.path()));
        assert_ok(&pit(cmd, b.path()));
        for f in std::fs::read_dir(a.path()).unwrap() {
            let name = f.unwrap().file_name();
            if name == "summary.json" || name == "scenario.txt" {
                continue;
            }
            let (x, y) = (
                std::fs::read(a.path().join(&name)).unwrap(),
                std::fs::read(b.path().join(&name)).unwrap(),
            );
            assert!(x == y, "{name:?} differs for {}", cmd[0]);
        }
    }
}

#[test]
fn negative_rate_fails_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let o = pit(&["pit-run", "--lambda", "-1"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("lambda"));
    let o = pit(&["gw", "--set", "lamda=1"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("lamda"));
}

#[test]
fn replay_from_a_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("fixture.csv"), FIXTURE_CSV).unwrap();
    let config = dir.path().join("replay.txt");
    std::fs::write(
        &config,
        "# six mutations\ncommand = pit-replay\ninput_file = fixture.csv\nhorizon = 3\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    // the flag overrides the file's horizon
    let o = pit(
        &["pit-replay", "--config", config.to_str().unwrap(), "--horizon", "6"],
        &out,
    );
    assert_ok(&o);
    let r = &summary(&out)["results"];
    let times: Vec<f64> = r["resident_changes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["time"].as_f64().unwrap())
        .collect();
    let expected = [2.6, 3.4, 4.0 + 8.0 / 15.0];
    assert_eq!(times.len(), 3);
    for (t, e) in times.iter().zip(expected) {
        assert!((t - e).abs() < 1e-9, "{t} vs {e}");
    }
    let parents: Vec<i64> = r["parents"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["parent"].as_i64().unwrap())
        .collect();
    assert_eq!(parents, [0, 0, 0, 0, 3, 3]);
    assert!((r["final_fitness"].as_f64().unwrap() - 2.6).abs() < 1e-9);
}

#[test]
fn command_mismatch_with_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("s.txt");
    std::fs::write(&config, "command = gw\n").unwrap();
    let o = pit(&["speed", "--config", config.to_str().unwrap()], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("command"));
}

#[test]
fn every_artifact_carries_the_scenario_hash() {
    let dir = tempfile::tempdir().unwrap();
    let input = "input=1.2:0.2;1.4:0:0.5;1.6:1;2.5:2;2.9:0:0.5;3.2:1.6";
    let o = pit(
        &[
            "couple",
            "--n",
            "2000",
            "--horizon",
            "5",
            "--replicates",
            "3",
            "--set",
            input,
        ],
        dir.path(),
    );
    assert_ok(&o);
    let s = summary(dir.path());
    let hash = s["scenario_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    for f in s["files"].as_array().unwrap() {
        let text = std::fs::read_to_string(dir.path().join(f.as_str().unwrap())).unwrap();
        assert!(text.lines().next().unwrap().contains(&hash), "{f}");
    }
    assert_eq!(s["results"]["patterns"].as_array().unwrap().len(), 3);
    // the echoed scenario text parses back to the same hash
    let echoed = pit_cli::scenario::Scenario::from_text(s["scenario_text"].as_str().unwrap(), None).unwrap();
    assert_eq!(echoed.hash(), hash);
}

#[test]
fn output_directory_defaults_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_pit"))
        .args(["gw", "--replicates", "50", "--horizon", "5"])
        .env("PIT_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_ok(&o);
    let r = &summary(dir.path())["results"];
    assert_eq!(r["survival_formula"].as_f64().unwrap(), 0.5);
}

#[test]
fn fclt_needs_enough_runs() {
    let dir = tempfile::tempdir().unwrap();
    let o = pit(&["fclt", "--replicates", "10", "--cycles", "1000"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("runs"));
}
