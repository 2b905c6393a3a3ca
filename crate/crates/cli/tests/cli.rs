use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use handmap_core::mocap::{parse_mocap_tsv_with, ParseOptions};
use handmap_core::pipeline::{embody_file, record_take};
use handmap_core::shipped;
use handmap_core::trajectory::{read_trajectory, write_trajectory};

fn handmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_handmap")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = handmap(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    handmap(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Take {
    _dir: tempfile::TempDir,
    take: PathBuf,
    states: PathBuf,
}

fn recorded_take(frames: usize) -> Take {
    let dir = tempfile::tempdir().unwrap();
    let take = dir.path().join("take.tsv");
    let states = dir.path().join("states.json");
    ok(&["synth", "-o", s(&take), "--frames", &frames.to_string(), "--seed", "5"]);
    ok(&["record", s(&take), "-o", s(&states)]);
    Take { _dir: dir, take, states }
}

#[test]
fn files_compose_like_the_library() {
    let t = recorded_take(30);
    let dir = t.take.parent().unwrap();
    let commands = dir.join("mia.json");
    ok(&["embody", s(&t.states), "-o", s(&commands), "--hand", "mia"]);

    let p = shipped::pipeline();
    let text = std::fs::read_to_string(&t.take).unwrap();
    let seq = parse_mocap_tsv_with(&text, &ParseOptions {
        label_map: p.io.label_map.clone(),
        lenient: false,
    })
    .unwrap()
    .sequence;
    let rec = record_take(&seq, &p.record, p.io.max_gap, s(&t.take), p.digests.clone()).unwrap();
    assert_eq!(std::fs::read_to_string(&t.states).unwrap(), write_trajectory(&rec.file));

    let mia = shipped::embodiment("mia").unwrap();
    let emb = embody_file(&rec.file, &p.shape, &mia, &mia.hand.name, s(&t.states), BTreeMap::new()).unwrap();
    assert_eq!(std::fs::read_to_string(&commands).unwrap(), write_trajectory(&emb.file));
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let take = dir.path().join(format!("take{run}.tsv"));
        let states = dir.path().join(format!("states{run}.json"));
        let commands = dir.path().join(format!("commands{run}.json"));
        ok(&["synth", "-o", s(&take), "--frames", "25", "--seed", "9"]);
        ok(&["record", s(&take), "-o", s(&states)]);
        ok(&["embody", s(&states), "-o", s(&commands), "--hand", "shadow"]);
        outputs.push([take, states, commands].map(|p| std::fs::read_to_string(p).unwrap()));
    }
    assert_eq!(outputs[0][0], outputs[1][0]);
    // provenance names the input file, which differs between the runs
    let strip = |t: &str| {
        let mut f = read_trajectory(t).unwrap();
        f.provenance.source.clear();
        write_trajectory(&f)
    };
    assert_eq!(strip(&outputs[0][1]), strip(&outputs[1][1]));
    assert_eq!(strip(&outputs[0][2]), strip(&outputs[1][2]));
}

#[test]
fn embody_report_lists_commanded_and_locked_joints() {
    let t = recorded_take(20);
    let out = ok(&["embody", s(&t.states), "-o", s(&t.take.with_file_name("c.json")), "--hand", "mia"]);
    assert!(out.contains("commanded: 3"), "{out}");
    assert!(out.contains("locked: thumb_opposition"), "{out}");
    for f in ["thumb", "index", "middle", "ring", "little"] {
        let line = out.lines().find(|l| l.trim_start().starts_with(f)).unwrap();
        assert!(line.split_whitespace().nth(1).unwrap().parse::<f64>().is_ok(), "{line}");
    }
    assert!(out.contains("timing: mean"));
}

#[test]
fn distance_table_has_a_column_per_finger() {
    let t = recorded_take(20);
    let dir = t.take.parent().unwrap();
    for (hand, mapped) in [("mia", 5), ("robotiq_2f140", 2)] {
        let commands = dir.join(format!("{hand}.json"));
        ok(&["embody", s(&t.states), "-o", s(&commands), "--hand", hand]);
        let out = ok(&["eval-distance", s(&commands), "--frames", "0,10", "-n", "30", "--hand", hand]);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[1].split_whitespace().collect::<Vec<_>>(), ["hand", "thumb", "index", "middle", "ring", "little"]);
        let cells: Vec<&str> = lines[2].split_whitespace().skip(1).collect();
        assert_eq!(cells.len(), 5, "{out}");
        assert_eq!(cells.iter().filter(|c| c.parse::<f64>().is_ok()).count(), mapped, "{out}");
        assert_eq!(cells.iter().filter(|c| **c == "-").count(), 5 - mapped, "{out}");
    }
}

#[test]
fn exit_codes_separate_data_from_usage_errors() {
    let t = recorded_take(10);
    let dir = t.take.parent().unwrap();
    let out = dir.join("out.json");
    assert_eq!(code(&["record", "/no/such/file.tsv", "-o", s(&out)]), 2);
    assert_eq!(code(&["record"]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["embody", s(&t.states), "-o", s(&out), "--hand", "allegro"]), 2);

    let bad = dir.join("bad.tsv");
    std::fs::write(&bad, "FREQUENCY\t100\nMARKER_NAMES\thand_front\tbogus\n1\t2\t3\t4\t5\t6\n").unwrap();
    assert_eq!(code(&["record", s(&bad), "-o", s(&out)]), 1);
    let empty = dir.join("empty.tsv");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(code(&["record", s(&empty), "-o", s(&out)]), 1);
    let broken = dir.join("broken.json");
    std::fs::write(&broken, "{\"schema_version\": 1").unwrap();
    assert_eq!(code(&["embody", s(&broken), "-o", s(&out), "--hand", "mia"]), 1);

    // a command trajectory is not a state trajectory
    let commands = dir.join("commands.json");
    ok(&["embody", s(&t.states), "-o", s(&commands), "--hand", "mia"]);
    assert_eq!(code(&["embody", s(&commands), "-o", s(&out), "--hand", "mia"]), 2);
    assert_eq!(code(&["eval-distance", s(&commands), "--frames", "99", "--hand", "mia"]), 2);
    assert_eq!(code(&["eval-distance", s(&commands), "--frames", "0", "--hand", "shadow"]), 2);
}

#[test]
fn lenient_record_drops_bad_rows() {
    let t = recorded_take(10);
    let mut text = std::fs::read_to_string(&t.take).unwrap();
    text.push_str("99\tnot-a-time\n");
    let bad = t.take.with_file_name("bad.tsv");
    std::fs::write(&bad, text).unwrap();
    let out = t.take.with_file_name("out.json");
    assert_eq!(code(&["record", s(&bad), "-o", s(&out)]), 1);
    let report = ok(&["record", s(&bad), "-o", s(&out), "--lenient"]);
    assert!(report.contains("rejected rows: 1"), "{report}");
}
