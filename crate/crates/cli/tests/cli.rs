use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mixplan::domain::MachineGroup;
use mixplan::scenario_io::{load_scenario, SCHEDULE_FILE};
use mixplan::scheduler::{Changeover, Schedule};
use mixplan_cli::{gantt, write_atomically, EXIT_INPUT, EXIT_OK, EXIT_VERIFY};

fn mixplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixplan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen_small(dir: &Path, seed: &str) -> PathBuf {
    let out = dir.join(format!("s{seed}.toml"));
    let o = mixplan(&[
        "gen",
        "--seed",
        seed,
        "--scale",
        "0.25",
        "--products",
        "12",
        "--orders",
        "30",
        "--horizon",
        "30",
        "--load",
        "0.35",
        "--clustering",
        "0",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn run_b(dir: &Path, scenario: &Path) -> PathBuf {
    let out = dir.join("run");
    let o = mixplan(&[
        "run",
        "--scenario",
        p(scenario),
        "--scheme",
        "B",
        "--out-dir",
        p(&out),
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.starts_with("OTD="), "{stdout}");
    out
}

fn verify(dir: &Path, scenario: &Path) -> Output {
    mixplan(&[
        "verify",
        "--schedule",
        p(dir),
        "--envelope",
        p(&dir.join("envelope.json")),
        "--scenario",
        p(scenario),
    ])
}

#[test]
fn gen_rejects_zero_scale() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.toml");
    let o = mixplan(&["gen", "--scale", "0", "--out", p(&out)]);
    assert_eq!(code(&o), EXIT_INPUT);
    assert!(!out.exists());
}

#[test]
fn bad_arguments_exit_with_input_code() {
    assert_eq!(code(&mixplan(&["run", "--scheme", "Z"])), EXIT_INPUT);
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let o = mixplan(&["run", "--scenario", p(&missing), "--out-dir", p(dir.path())]);
    assert_eq!(code(&o), EXIT_INPUT);
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen_small(dir.path(), "4");
    let b = dir.path().join("again.toml");
    fs::copy(&a, &b).unwrap();
    let c = gen_small(dir.path(), "4");
    assert_eq!(fs::read(&b).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn verify_accepts_a_clean_run_and_catches_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = gen_small(dir.path(), "3");
    let run = run_b(dir.path(), &scenario);
    for f in ["envelope.json", "schedule.csv", "report.kv", "report.txt"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    assert!(!run.join("violations.txt").exists());
    assert_eq!(code(&verify(&run, &scenario)), EXIT_OK);

    let csv_path = run.join(SCHEDULE_FILE);
    let original = fs::read_to_string(&csv_path).unwrap();
    let mut lines: Vec<String> = original.lines().map(String::from).collect();
    let (head, row) = (2, lines[2].clone());
    let cols: Vec<&str> = row.split(',').collect();

    // Inflate one assignment.
    let units: f64 = cols[3].parse().unwrap();
    lines[head] = format!("{},{},{},{}", cols[0], cols[1], cols[2], units + 50.0);
    fs::write(&csv_path, lines.join("\n") + "\n").unwrap();
    let o = verify(&run, &scenario);
    assert_eq!(code(&o), EXIT_VERIFY);
    assert!(!o.stdout.is_empty());

    // Move one assignment onto a machine that cannot hold the product's mold.
    let sc = load_scenario(&scenario).unwrap();
    let cnc = sc
        .machines()
        .iter()
        .find(|m| m.group == MachineGroup::Cnc)
        .unwrap();
    lines[head] = format!("{},{},{},{}", cols[0], cnc.id.as_str(), cols[2], cols[3]);
    fs::write(&csv_path, lines.join("\n") + "\n").unwrap();
    let o = verify(&run, &scenario);
    assert_eq!(code(&o), EXIT_VERIFY);
    assert!(String::from_utf8_lossy(&o.stdout).contains(cnc.id.as_str()));
}

#[test]
fn report_renders_one_and_compares_many() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = gen_small(dir.path(), "5");
    let run = run_b(dir.path(), &scenario);
    let greedy = dir.path().join("greedy");
    let o = mixplan(&[
        "run",
        "--scenario",
        p(&scenario),
        "--scheme",
        "greedy",
        "--out-dir",
        p(&greedy),
    ]);
    assert_eq!(code(&o), EXIT_OK);

    let kv = run.join("report.kv");
    let one = mixplan(&["report", p(&kv)]);
    assert_eq!(code(&one), EXIT_OK);
    assert_eq!(
        String::from_utf8_lossy(&one.stdout),
        fs::read_to_string(run.join("report.txt")).unwrap()
    );

    let many = mixplan(&["report", p(&kv), p(&greedy.join("report.kv"))]);
    assert_eq!(code(&many), EXIT_OK);
    let text = String::from_utf8_lossy(&many.stdout);
    assert_eq!(text.lines().count(), 3, "{text}");
}

#[test]
fn gantt_command_writes_svg() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = gen_small(dir.path(), "6");
    let run = run_b(dir.path(), &scenario);
    let svg = dir.path().join("g.svg");
    let o = mixplan(&[
        "gantt",
        "--schedule",
        p(&run),
        "--scenario",
        p(&scenario),
        "--group",
        "G150",
        "--out",
        p(&svg),
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"));
    assert!(text.contains("class=\"block\""));

    let o = mixplan(&[
        "gantt",
        "--schedule",
        p(&run),
        "--scenario",
        p(&scenario),
        "--group",
        "G999",
        "--out",
        p(&svg),
    ]);
    assert_eq!(code(&o), EXIT_INPUT);
}

/// Attribute values of every `<rect>` with the given class.
fn rects(svg: &str, class: &str) -> Vec<Vec<(String, String)>> {
    let marker = format!("class=\"{class}\"");
    svg.split("<rect")
        .skip(1)
        .filter(|r| r.contains(&marker))
        .map(|r| {
            let tag = &r[..r.find('>').unwrap()];
            tag.split('"')
                .collect::<Vec<_>>()
                .chunks(2)
                .filter(|c| c.len() == 2)
                .map(|c| {
                    (
                        c[0].trim().trim_end_matches('=').to_string(),
                        c[1].to_string(),
                    )
                })
                .collect()
        })
        .collect()
}

fn attr<'a>(rect: &'a [(String, String)], name: &str) -> &'a str {
    &rect.iter().find(|(k, _)| k == name).unwrap().1
}

fn small_scenario() -> mixplan::domain::Scenario {
    let dir = tempfile::tempdir().unwrap();
    load_scenario(&gen_small(dir.path(), "2")).unwrap()
}

#[test]
fn empty_schedule_renders_axis_only() {
    let sc = small_scenario();
    let svg = gantt::render(&Schedule::default(), &sc, None);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert!(rects(&svg, "block").is_empty());
    assert!(rects(&svg, "changeover").is_empty());
    assert_eq!(
        svg.matches("class=\"machine\"").count(),
        sc.machines().len()
    );
}

#[test]
fn changeover_and_blocks_have_hour_proportional_widths() {
    let sc = small_scenario();
    let machine = sc
        .machines()
        .iter()
        .find(|m| m.group == MachineGroup::G150)
        .unwrap();
    let order = sc
        .orders()
        .iter()
        .find(|o| {
            let mold = &sc.product(&o.product).unwrap().mold;
            sc.molds()
                .iter()
                .any(|k| &k.id == mold && k.compatible_machines.contains(&machine.id))
        })
        .unwrap();
    let product = sc.product(&order.product).unwrap();
    let mut s = Schedule::default();
    s.z.insert((order.id.clone(), machine.id.clone(), 2), 100.0);
    s.mold_state
        .insert((machine.id.clone(), 2), vec![product.mold.clone()]);
    s.changeovers.push(Changeover {
        machine: machine.id.clone(),
        day: 2,
        from: None,
        to: product.mold.clone(),
        hours_lost: 5.0,
    });
    let svg = gantt::render(&s, &sc, Some("G150"));

    let changes = rects(&svg, "changeover");
    assert_eq!(changes.len(), 1);
    let c = &changes[0];
    assert_eq!(attr(c, "fill"), "url(#changeover)");
    let blocks = rects(&svg, "block");
    assert_eq!(blocks.len(), 1);
    let b = &blocks[0];
    assert_eq!(attr(b, "data-product"), product.id.as_str());
    assert_eq!(attr(b, "fill"), gantt::product_color(&product.id));

    let width = |r: &[(String, String)]| attr(r, "width").parse::<f64>().unwrap();
    let x = |r: &[(String, String)]| attr(r, "x").parse::<f64>().unwrap();
    let busy = 100.0 * mixplan::domain::unit_time(machine, product);
    assert!((width(b) / width(c) - busy / 5.0).abs() < 1e-3);
    // The changeover comes first and the block starts where it ends.
    assert!((x(c) + width(c) - x(b)).abs() < 0.02);
}

#[test]
fn same_product_keeps_its_color() {
    let sc = small_scenario();
    let f = &sc.products()[0].id;
    assert_eq!(gantt::product_color(f), gantt::product_color(&f.clone()));
    let colors: std::collections::BTreeSet<_> = sc
        .products()
        .iter()
        .map(|p| gantt::product_color(&p.id))
        .collect();
    assert!(colors.len() > 1);
}

#[test]
fn atomic_write_replaces_all_files_and_leaves_no_staging() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    write_atomically(
        &out,
        &[("a.txt".into(), "1".into()), ("b.txt".into(), "2".into())],
    )
    .unwrap();
    write_atomically(
        &out,
        &[("a.txt".into(), "3".into()), ("b.txt".into(), "4".into())],
    )
    .unwrap();
    assert_eq!(fs::read_to_string(out.join("a.txt")).unwrap(), "3");
    assert_eq!(fs::read_to_string(out.join("b.txt")).unwrap(), "4");
    let names: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(names, vec![std::ffi::OsString::from("out")]);
}

#[test]
fn failed_atomic_write_leaves_target_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    write_atomically(&out, &[("a.txt".into(), "keep".into())]).unwrap();
    // A nested path cannot be created inside the staging directory.
    let err = write_atomically(
        &out,
        &[
            ("a.txt".into(), "new".into()),
            ("x/y.txt".into(), "bad".into()),
        ],
    );
    assert!(err.is_err());
    assert_eq!(fs::read_to_string(out.join("a.txt")).unwrap(), "keep");
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}
