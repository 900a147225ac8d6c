mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::*;
use drbanet::io::pgm::{read_pgm, write_pgm, GrayImage};
use drbanet::io::tensor_file::{encode_tensor, read_tensor, write_tensor};
use drbanet::network::save_weights;
use drbanet::{build_plan, init_weights, WeightStore};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drbanet")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gray(w: usize, h: usize, f: impl Fn(usize, usize) -> u8) -> GrayImage {
    let mut pixels = Vec::new();
    for y in 0..h {
        for x in 0..w {
            pixels.push(f(y, x));
        }
    }
    GrayImage { width: w, height: h, pixels }
}

#[test]
fn describe_golden_passes() {
    let o = run(&["describe", "--resolution", "1024x1024", "--golden"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("512x512x32"));
}

#[test]
fn describe_half_resolution() {
    let o = run(&["describe", "--resolution", "512x512"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("256x256x32") && s.contains("8x8x512"));
    let golden = run(&["describe", "--resolution", "512x512", "--golden"]);
    assert_eq!(golden.status.code(), Some(1));
}

#[test]
fn describe_rejects_bad_resolution() {
    let o = run(&["describe", "--resolution", "100x100"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("resolution must be divisible by 64"));
}

#[test]
fn count_verify_reports_deltas() {
    let o = run(&["count", "--verify"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("params ") && s.contains("vs 2.3 M") && s.contains("vs 11.9 G"));
    assert!(s.contains("FLOPs@1024x1024") && s.contains("FLOPs@2048x1024"));
    assert!(s.contains("FLOPs = 2 x MACs"));
    assert!(s.contains("claims: PASS"));
}

#[test]
fn count_machine_is_key_value_and_stable() {
    let a = run(&["count", "--resolution", "1024x1024", "--machine"]);
    let b = run(&["count", "--resolution", "1024x1024", "--machine"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let s = stdout(&a);
    assert!(s.lines().all(|l| l.split_once('=').is_some_and(|(k, _)| !k.is_empty())));
    let plan = build_plan(19, (1024, 1024)).unwrap();
    let total = init_weights(&plan, 0).unwrap().total_elements();
    assert!(s.contains(&format!("params.total={total}\n")));
    assert!(s.contains("macs.total@1024x1024="));
    assert_eq!(run(&["count"]).stdout, run(&["count"]).stdout);
}

#[test]
fn forward_writes_contracted_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.drbt");
    write_tensor(&input, &random_tensor(&mut rng(7), [1, 3, 512, 512])).unwrap();
    let out1 = dir.path().join("o1");
    let out2 = dir.path().join("o2");
    for out in [&out1, &out2] {
        let o = run(&["forward", "--input", p(&input), "--random-seed", "3", "--out-dir", p(out), "--argmax"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for (name, c) in [("seg.drbt", 19), ("aux.drbt", 19), ("boundary.drbt", 1)] {
        let t = read_tensor(out1.join(name)).unwrap();
        assert_eq!(t.dims().to_array(), [1, c, 512, 512], "{name}");
        assert!(t.data().iter().all(|v| v.is_finite()));
        assert_eq!(std::fs::read(out1.join(name)).unwrap(), std::fs::read(out2.join(name)).unwrap());
    }
    let classes = read_pgm(out1.join("classes.pgm")).unwrap();
    assert_eq!((classes.width, classes.height), (512, 512));
    assert!(classes.pixels.iter().all(|&c| c < 19));
}

#[test]
fn forward_with_weight_file() {
    let dir = tempfile::tempdir().unwrap();
    let plan = build_plan(3, (64, 128)).unwrap();
    let store = init_weights(&plan, 5).unwrap();
    let wpath = dir.path().join("w.drbw");
    save_weights(&store, &wpath).unwrap();
    let input = dir.path().join("x.drbt");
    write_tensor(&input, &random_tensor(&mut rng(1), [1, 3, 64, 128])).unwrap();
    let out = dir.path().join("o");
    let o = run(&["forward", "--classes", "3", "--input", p(&input), "--weights", p(&wpath), "--out-dir", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let seeded = dir.path().join("s");
    run(&["forward", "--classes", "3", "--input", p(&input), "--random-seed", "5", "--out-dir", p(&seeded)]);
    assert_eq!(std::fs::read(out.join("seg.drbt")).unwrap(), std::fs::read(seeded.join("seg.drbt")).unwrap());

    let victim = "head.fusion.conv.weight";
    let mut partial = WeightStore::new();
    for (name, param) in store.iter().filter(|(n, _)| *n != victim) {
        partial.insert(name, param.clone()).unwrap();
    }
    save_weights(&partial, &wpath).unwrap();
    let o = run(&["forward", "--classes", "3", "--input", p(&input), "--weights", p(&wpath), "--out-dir", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(victim), "{}", stderr(&o));
}

#[test]
fn forward_reports_byte_offset_of_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.drbt");
    let mut bytes = encode_tensor(&drbanet::Tensor::zeros([1, 3, 64, 64])).unwrap();
    bytes.truncate(bytes.len() - 5);
    std::fs::write(&input, bytes).unwrap();
    let o = run(&["forward", "--input", p(&input), "--out-dir", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("at byte 28"), "{}", stderr(&o));
}

#[test]
fn boundary_gt_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let uniform = dir.path().join("u.pgm");
    write_pgm(&uniform, &gray(32, 32, |_, _| 3)).unwrap();
    let out = dir.path().join("b.pgm");
    assert!(run(&["boundary-gt", "--input", p(&uniform), "--output", p(&out)]).status.success());
    assert!(read_pgm(&out).unwrap().pixels.iter().all(|&v| v == 0));

    let split = dir.path().join("s.pgm");
    write_pgm(&split, &gray(32, 32, |_, x| (x >= 16) as u8)).unwrap();
    assert!(run(&["boundary-gt", "--input", p(&split), "--output", p(&out)]).status.success());
    let b = read_pgm(&out).unwrap();
    for y in 0..32 {
        for x in 0..32 {
            let want = if (15..=20).contains(&x) { 255 } else { 0 };
            assert_eq!(b.pixels[y * 32 + x], want, "({y}, {x})");
        }
    }

    // re-process the {0, 255} output with 255 treated as a class
    let again = dir.path().join("b2.pgm");
    let o = run(&["boundary-gt", "--input", p(&out), "--output", p(&again), "--ignore", "none"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let b2 = read_pgm(&again).unwrap();
    for (i, &v) in b2.pixels.iter().enumerate() {
        let x = i % 32;
        assert!(v == 0 || (14 - 8..=21 + 8).contains(&x), "column {x}");
    }
    assert!(b2.pixels[14] == 255 && b2.pixels[21] == 255);

    let bad = dir.path().join("bad.pgm");
    std::fs::write(&bad, b"P5\n4 4\n255\n\x00\x01").unwrap();
    assert!(!run(&["boundary-gt", "--input", p(&bad), "--output", p(&out)]).status.success());
}

#[test]
fn eval_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    std::fs::create_dir_all(&pred).unwrap();
    std::fs::create_dir_all(&gt).unwrap();
    for i in 0..3 {
        let img = gray(16, 8, |y, x| ((x + y + i) % 19) as u8);
        write_pgm(gt.join(format!("img{i}.pgm")), &img).unwrap();
        write_pgm(pred.join(format!("img{i}.pgm")), &img).unwrap();
    }
    let o = run(&["eval", "--pred-dir", p(&pred), "--gt-dir", p(&gt), "--machine"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).lines().any(|l| l == "miou=1.0"));

    let (pred2, gt2) = (dir.path().join("pred2"), dir.path().join("gt2"));
    std::fs::create_dir_all(&pred2).unwrap();
    std::fs::create_dir_all(&gt2).unwrap();
    write_pgm(gt2.join("a.pgm"), &gray(8, 4, |_, x| (x >= 4) as u8)).unwrap();
    write_pgm(pred2.join("a.pgm"), &gray(8, 4, |_, _| 0)).unwrap();
    let o = run(&["eval", "--classes", "2", "--pred-dir", p(&pred2), "--gt-dir", p(&gt2), "--machine"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).lines().any(|l| l == "miou=0.25"));

    write_pgm(pred2.join("extra.pgm"), &gray(8, 4, |_, _| 0)).unwrap();
    let o = run(&["eval", "--classes", "2", "--pred-dir", p(&pred2), "--gt-dir", p(&gt2)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("extra.pgm"));
}

#[test]
fn loss_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(2);
    let seg = dir.path().join("seg.drbt");
    let aux = dir.path().join("aux.drbt");
    let bnd = dir.path().join("boundary.drbt");
    write_tensor(&seg, &random_tensor(&mut r, [1, 4, 16, 16])).unwrap();
    write_tensor(&aux, &random_tensor(&mut r, [1, 4, 16, 16])).unwrap();
    write_tensor(&bnd, &random_tensor(&mut r, [1, 1, 16, 16])).unwrap();
    let labels = dir.path().join("l.pgm");
    write_pgm(&labels, &gray(16, 16, |y, x| ((x / 5 + y / 7) % 4) as u8)).unwrap();
    let args = |l1: &'static str, l2: &'static str| {
        vec![
            "loss".to_string(), "--machine".into(), "--seg".into(), p(&seg).into(), "--aux".into(), p(&aux).into(),
            "--boundary".into(), p(&bnd).into(), "--labels".into(), p(&labels).into(),
            "--lambda1".into(), l1.into(), "--lambda2".into(), l2.into(),
        ]
    };
    let value = |o: &Output, key: &str| -> f64 {
        stdout(o).lines().find_map(|l| l.strip_prefix(&format!("{key}="))).unwrap().parse().unwrap()
    };
    let zero = Command::new(env!("CARGO_BIN_EXE_drbanet")).args(args("0", "0")).output().unwrap();
    assert!(zero.status.success(), "{}", stderr(&zero));
    assert_eq!(value(&zero, "loss.total"), value(&zero, "loss.seg"));
    let def = Command::new(env!("CARGO_BIN_EXE_drbanet")).args(args("0.2", "0.1")).output().unwrap();
    let expect = value(&def, "loss.seg") + 0.2 * value(&def, "loss.aux") + 0.1 * value(&def, "loss.boundary");
    assert!((value(&def, "loss.total") - expect).abs() <= 1e-12);
}
