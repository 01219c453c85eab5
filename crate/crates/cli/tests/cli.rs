use std::path::Path;
use std::process::{Command, Output};

fn nrg(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nrg"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn infer_encode_decode_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let n: usize = ok(&nrg(
        &[
            "synth-table",
            "--rows",
            "6",
            "--cols",
            "5",
            "--width",
            "3",
            "--fill",
            "0.6",
            "--seed",
            "4",
            "--out",
            "t.bin",
        ],
        d,
    ))
    .trim()
    .parse()
    .unwrap();
    let src = std::fs::read(d.join("t.bin")).unwrap();
    assert_eq!(src.len(), n);

    let size: usize = ok(&nrg(&["infer", "--algo", "greedy", "--trace", "t.jsonl", "t.bin"], d))
        .trim()
        .parse()
        .unwrap();
    assert!(size < n);
    let trace = std::fs::read_to_string(d.join("t.jsonl")).unwrap();
    let last = trace.lines().last().unwrap();
    assert!(last.contains(&format!("\"size\":{size}")), "{last}");

    let post = ok(&nrg(&["post", "--grammar", "t.grammar", "-o", "p.grammar"], d));
    let fields: Vec<&str> = post.split_whitespace().collect();
    assert_eq!(fields[0].parse::<usize>().unwrap(), size);
    let post_size: usize = fields[1].parse().unwrap();
    assert!(post_size <= size);

    for g in ["t.grammar", "p.grammar"] {
        let len: usize = ok(&nrg(&["encode", "--grammar", g, "-o", "out.nrg"], d)).trim().parse().unwrap();
        assert_eq!(len, if g == "t.grammar" { size } else { post_size });
        let out = nrg(&["decode", "out.nrg"], d);
        ok(&out);
        assert_eq!(out.stdout, src);
    }

    ok(&nrg(&["encode", "--grammar", "p.grammar", "--text", "-o", "out.txt"], d));
    ok(&nrg(&["decode", "--text", "out.txt", "-o", "back.bin"], d));
    assert_eq!(std::fs::read(d.join("back.bin")).unwrap(), src);
}

#[test]
fn nrgreedy_on_tokens() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("s.txt"), "a x b c a y b c a z b c a w b c a v b c a u b c").unwrap();
    let size: usize = ok(&nrg(&["infer", "--algo", "nrgreedy-fix", "--tokens", "-o", "s.g", "s.txt"], d))
        .trim()
        .parse()
        .unwrap();
    assert!(size < 25);
    let g = std::fs::read_to_string(d.join("s.g")).unwrap();
    assert!(g.starts_with("#mode token"));
}

#[test]
fn brackets_of_branching_grammar() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("g"), "#mode token\nN0 -> N1 N1 c d\nN1 -> a N2 b\nN2 =>2 x y | z w\n").unwrap();
    std::fs::write(d.join("corpus"), "a x y b\na z w b c d\n").unwrap();
    std::fs::write(
        d.join("gold"),
        "(S (A a) (B (X x) (Y y)) (C b))\n(S (S (A a) (B (Z z) (W w)) (C b)) (C c) (D d))\n",
    )
    .unwrap();
    let out = ok(&nrg(
        &[
            "brackets",
            "--grammar",
            "g",
            "--corpus",
            "corpus",
            "--gold",
            "gold",
            "--json",
            "--predictions",
            "p.tsv",
        ],
        d,
    ));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    // first context bracket is sentence-wide and filtered; the second matches
    assert_eq!(v["context"]["extracted"], 2);
    assert_eq!(v["context"]["scored"], 1);
    assert_eq!(v["context"]["matched"], 1);
    assert_eq!(v["inside"]["matched"], 2);
    assert_eq!(std::fs::read_to_string(d.join("p.tsv")).unwrap().lines().count(), 4);

    std::fs::write(d.join("corpus2"), "a x y b\na z w b c e\n").unwrap();
    let bad = nrg(&["brackets", "--grammar", "g", "--corpus", "corpus2", "--gold", "gold"], d);
    assert_eq!(bad.status.code(), Some(5));
}

#[test]
fn bench_custom_paths() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("f1"), "abracadabra abracadabra abracadabra").unwrap();
    let out = ok(&nrg(
        &["bench", "--corpus", "f1", "--algorithms", "greedy,post,nrgreedy-fix", "--json"],
        d,
    ));
    let v: serde_json::Value = serde_json::from_str(out.lines().next().unwrap()).unwrap();
    assert_eq!(v["file"], "f1");
    assert!(v["greedy"]["size"].as_u64().unwrap() >= v["post"]["size"].as_u64().unwrap());
    assert!(v["nrgreedy_fix"]["size"].is_u64());
    let table = ok(&nrg(&["bench", "--corpus", "f1", "--algorithms", ""], d));
    assert!(table.starts_with("file"));
    let sweep = ok(&nrg(&["bench", "--sweep", "5,100"], d));
    let points: Vec<serde_json::Value> = sweep.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(points.len(), 2);
    assert_eq!(points[0]["greedy_steps"], 5);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(nrg(&["frobnicate"], d).status.code(), Some(2));
    assert_eq!(nrg(&["infer"], d).status.code(), Some(2));
    assert_eq!(nrg(&["decode", "missing.nrg"], d).status.code(), Some(3));
    std::fs::write(d.join("junk.nrg"), b"not a stream").unwrap();
    assert_eq!(nrg(&["decode", "junk.nrg"], d).status.code(), Some(4));
    std::fs::write(d.join("bad.grammar"), "N0 -> N1\n").unwrap();
    assert_eq!(nrg(&["post", "--grammar", "bad.grammar"], d).status.code(), Some(4));
    let o = nrg(
        &[
            "synth-table",
            "--rows",
            "0",
            "--cols",
            "1",
            "--width",
            "1",
            "--fill",
            "0.5",
            "--out",
            "x",
        ],
        d,
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("nrg: error:"));
}
