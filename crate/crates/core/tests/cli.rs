use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

const BIN: &str = env!("CARGO_BIN_EXE_probe-arena");

const SMOKE: &str = r#"{
  "schema_version": 1,
  "variant": "DET_PLUS_STOCH",
  "rounds": 4,
  "episodes_per_round": 2,
  "episode_length": 8,
  "seed": 11,
  "checkpoint_every": 2,
  "classifier": { "hidden_size": 16, "epochs_per_round": 2 },
  "ppo": { "hidden_size": 16 }
}"#;

fn probe(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("PROBE_ARENA_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn train(dir: &Path, config: &str) -> Output {
    let cfg = dir.join("config.in.json");
    fs::write(&cfg, config).unwrap();
    let out = dir.join("run");
    probe(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"])
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn smoke_train_writes_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let o = train(dir.path(), SMOKE);
    assert!(start.elapsed().as_secs_f64() < 10.0);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.path().join("run");
    let csv = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    assert_eq!(
        csv.lines().next().unwrap(),
        "round,phase,classifier_loss,classifier_acc,mean_reward,clip_fraction,wall_ms"
    );
    let snapshot: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(snapshot["class_set"].as_array().unwrap().len(), 9);
    assert_eq!(snapshot["ppo"]["clip_epsilon"], 0.2);
    assert_eq!(snapshot["classifier"]["batch_size"], 32);
    for sub in ["round_00002", "final"] {
        for f in ["classifier.ckpt", "policy.ckpt"] {
            assert!(run.join("checkpoints").join(sub).join(f).exists(), "{sub}/{f}");
        }
    }
}

#[test]
fn same_seed_gives_identical_metrics() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(train(a.path(), SMOKE).status.code(), Some(0));
    assert_eq!(train(b.path(), SMOKE).status.code(), Some(0));
    let read = |d: &Path| fs::read(d.join("run/metrics.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn seed_flag_overrides_config() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(train(a.path(), SMOKE).status.code(), Some(0));
    let cfg = b.path().join("c.json");
    fs::write(&cfg, SMOKE).unwrap();
    let out = b.path().join("run");
    let o = probe(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "12", "--quiet"]);
    assert_eq!(o.status.code(), Some(0));
    let snap = fs::read_to_string(out.join("config.json")).unwrap();
    assert!(snap.contains("\"seed\": 12"));
    assert_ne!(fs::read(a.path().join("run/metrics.csv")).unwrap(), fs::read(out.join("metrics.csv")).unwrap());
}

#[test]
fn bad_configs_exit_two_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = train(dir.path(), &SMOKE.replace("\"ppo\": { \"hidden_size\": 16 }", "\"ppo\": { \"clip_epsilon\": 1.5 }"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("clip_epsilon"));

    let o = train(dir.path(), &SMOKE.replace("\"rounds\": 4", "\"roundz\": 4"));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr).to_string();
    assert!(err.contains("roundz") && err.contains("line"), "{err}");

    let o = probe(&["train", "--config", "/nonexistent/config.json", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

fn trained_run() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SMOKE.replace("\"episode_length\": 8", "\"map\": \"empty\", \"episode_length\": 8");
    assert_eq!(train(dir.path(), &cfg).status.code(), Some(0));
    dir
}

#[test]
fn replay_prints_every_frame() {
    let dir = trained_run();
    let ckpt = dir.path().join("run/checkpoints/final");
    let o = probe(&["replay", "--ckpt", ckpt.to_str().unwrap(), "--class", "3", "--seed", "5", "--steps", "12"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let frames: Vec<Vec<&str>> = text
        .split("step ")
        .skip(1)
        .map(|f| f.lines().filter(|l| l.len() == 4 && l.chars().all(|c| ".#AO".contains(c))).collect())
        .collect();
    assert_eq!(frames.len(), 13);
    let find = |f: &[&str], ch: char| -> Vec<(isize, isize)> {
        let mut v = Vec::new();
        for (r, l) in f.iter().enumerate() {
            for (c, x) in l.chars().enumerate() {
                if x == ch {
                    v.push((r as isize, c as isize));
                }
            }
        }
        v
    };
    let mut mirrored = 0;
    for w in frames.windows(2) {
        assert_eq!(w[0].len(), 4);
        let (a0, o0) = (find(&w[0], 'A'), find(&w[0], 'O'));
        let (a1, o1) = (find(&w[1], 'A'), find(&w[1], 'O'));
        assert_eq!((a0.len(), o0.len(), a1.len(), o1.len()), (1, 1, 1, 1));
        let da = (a1[0].0 - a0[0].0, a1[0].1 - a0[0].1);
        let dopp = (o1[0].0 - o0[0].0, o1[0].1 - o0[0].1);
        // follower: whenever both actually moved, they moved the same way
        if da != (0, 0) && dopp != (0, 0) {
            assert_eq!(da, dopp);
            mirrored += 1;
        }
    }
    assert!(mirrored > 0);
    assert_eq!(text.lines().filter(|l| l.starts_with("top1 ")).count(), 13);
    assert!(text.starts_with("replay class=det_follower"));
}

#[test]
fn replay_of_missing_checkpoint_exits_two() {
    let o = probe(&["replay", "--ckpt", "/nonexistent", "--class", "0", "--seed", "0", "--steps", "4"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_writes_confusion_matrix() {
    let dir = trained_run();
    let ckpt = dir.path().join("run/checkpoints/final");
    let ck = ckpt.to_str().unwrap();
    let o = probe(&["eval", "--ckpt", ck, "--episodes", "90", "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let path = dir.path().join("run/eval/confusion.csv");
    let csv = fs::read_to_string(&path).unwrap();
    let total: usize = csv
        .lines()
        .skip(1)
        .flat_map(|l| l.split(',').skip(1).map(|n| n.parse::<usize>().unwrap()).collect::<Vec<_>>())
        .sum();
    assert_eq!(total, 90);
    assert_eq!(csv.lines().count(), 10);
    let again = probe(&["eval", "--ckpt", ck, "--episodes", "90", "--seed", "4"]);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(fs::read_to_string(&path).unwrap(), csv);

    let o = probe(&["eval", "--ckpt", ck, "--episodes", "90", "--seed", "4", "--predictor", "label"]);
    assert!(stdout(&o).contains("overall_accuracy 1.0000"));
    let o = probe(&["eval", "--ckpt", ck, "--episodes", "18", "--seed", "4", "--predictor", "bayes"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn plot_renders_two_curves() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("metrics.csv");
    fs::write(
        &csv,
        "round,phase,classifier_loss,classifier_acc,mean_reward,clip_fraction,wall_ms\n\
         0,CLASSIFIER,2.1,0.2,0.11,0,0\n1,AGENT,2.0,0.3,0.12,0.01,0\n\
         2,CLASSIFIER,1.7,0.4,0.2,0,0\n3,AGENT,1.5,0.5,0.3,0.02,0\n",
    )
    .unwrap();
    let svg = dir.path().join("plot.svg");
    let run = || probe(&["plot", "--metrics", csv.to_str().unwrap(), "--out", svg.to_str().unwrap()]);
    assert_eq!(run().status.code(), Some(0));
    let first = fs::read_to_string(&svg).unwrap();
    let polylines: Vec<&str> = first.lines().filter(|l| l.starts_with("<polyline")).collect();
    assert_eq!(polylines.len(), 2);
    for p in polylines {
        let pts = p.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split(' ').count(), 2);
    }
    assert_eq!(run().status.code(), Some(0));
    assert_eq!(fs::read_to_string(&svg).unwrap(), first);
}

#[test]
fn plot_rejects_malformed_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("metrics.csv");
    let svg = dir.path().join("plot.svg");
    let header = "round,phase,classifier_loss,classifier_acc,mean_reward,clip_fraction,wall_ms\n";
    fs::write(&csv, header).unwrap();
    let o = probe(&["plot", "--metrics", csv.to_str().unwrap(), "--out", svg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    fs::write(&csv, format!("{header}0,CLASSIFIER,1,1,1,0,0\n1,AGENT,oops,1,1,0,0\n")).unwrap();
    let o = probe(&["plot", "--metrics", csv.to_str().unwrap(), "--out", svg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 2"));
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let o = Command::new(BIN)
        .args(["plot", "--metrics", "x", "--out", "y"])
        .env("PROBE_ARENA_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
