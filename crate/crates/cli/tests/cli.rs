#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use common::*;
use serde_json::Value;
use vkg_core::catalog::statistics;
use vkg_core::ingest::{parse_coco, DatasetDescriptor, TaskKind};
use vkg_core::taxonomy::materialize;

fn vkg(store: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vkg"))
        .arg("--store")
        .arg(store)
        .args(args)
        .env_remove("VKG_BASE_IRI")
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "{:?}: {}", out.status, String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn fx(rel: &str) -> String {
    fixtures().join(rel).display().to_string()
}

fn ingest_person_fixtures(store: &Path) {
    ok(vkg(store, &["taxonomy", "--file", &fx("taxonomy/person.json")]));
    ok(vkg(
        store,
        &["ingest", "--format", "coco", "--name", "Mini COCO", "--slug", "coco-mini", "--license", CC_BY, &fx("coco-mini/annotations.json")],
    ));
    ok(vkg(
        store,
        &[
            "ingest", "--format", "kitti", "--name", "Mini KITTI", "--slug", "kitti-mini", "--license", CC_BY_NC_SA,
            "--attrs", &fx("kitti-mini/attributes.json"), &fx("kitti-mini"),
        ],
    ));
    ok(vkg(
        store,
        &[
            "ingest", "--format", "cls", "--name", "Mini Visual Genome (classification)", "--slug", "vg-cls",
            "--license", CC_BY, &fx("vg-cls/labels.csv"),
        ],
    ));
}

fn number_in(text: &str) -> usize {
    text.split(|c: char| !c.is_ascii_digit()).find(|s| !s.is_empty()).unwrap().parse().unwrap()
}

#[test]
fn enrich_prints_the_materialized_count() {
    let tmp = tempfile::tempdir().unwrap();
    let store = tmp.path().join("st");
    ingest_person_fixtures(&store);

    let mut expected = build(&[coco(), kitti(), vg()], &person_taxonomy(), false);
    let asserted = std::fs::read_to_string(store.join("asserted.nt")).unwrap();
    assert_eq!(asserted, expected.dump_ntriples(false));
    let inferred = materialize(&mut expected);
    assert!(inferred > 0);

    let printed = ok(vkg(&store, &["enrich"]));
    assert_eq!(number_in(&printed), inferred);

    let stats: Value = serde_json::from_str(&ok(vkg(&store, &["stats"]))).unwrap();
    assert_eq!(stats, serde_json::to_value(statistics(&expected)).unwrap());
    assert_eq!(number_in(&ok(vkg(&store, &["enrich"]))), 0);
}

#[test]
fn empty_pattern_query_prints_one_empty_binding() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(vkg(&tmp.path().join("fresh"), &["query", "-e", "SELECT * WHERE {}", "--json"]));
    let json: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(json["results"]["bindings"], serde_json::json!([{}]));
    assert!(!tmp.path().join("fresh").exists());
}

#[test]
fn exit_codes_and_messages() {
    let tmp = tempfile::tempdir().unwrap();
    let store = tmp.path().join("st");

    let broken = vkg(&store, &["ingest", "--format", "coco", "--name", "B", "--slug", "b", &fx("broken/coco-missing-height.json")]);
    assert_eq!(broken.status.code(), Some(2));
    assert!(stderr(&broken).contains("coco-missing-height.json"));
    assert!(stderr(&broken).contains("images[1].height"));

    let voc = vkg(&store, &["ingest", "--format", "voc", "--name", "B", "--slug", "b", &fx("broken/voc-syntax.xml")]);
    assert_eq!(voc.status.code(), Some(2));
    assert!(stderr(&voc).contains("voc-syntax.xml"));

    let missing = vkg(&store, &["ingest", "--format", "coco", "--name", "B", "--slug", "b", "/no/such/file.json"]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(stderr(&missing).contains("/no/such/file.json"));

    let parse = vkg(&store, &["query", "-e", "SELECT ?x WHERE {\n ?x cv:hasLabel }"]);
    assert_eq!(parse.status.code(), Some(2));
    assert!(stderr(&parse).contains("<expr>:2:"), "{}", stderr(&parse));

    let rq = tmp.path().join("bad.rq");
    std::fs::write(&rq, "SELECT ?x\nWHERE { ?x ?p }").unwrap();
    let parse = vkg(&store, &["query", "-f", rq.to_str().unwrap()]);
    assert_eq!(parse.status.code(), Some(2));
    assert!(stderr(&parse).contains(&format!("{}:2:", rq.display())), "{}", stderr(&parse));

    let cycle = vkg(&store, &["taxonomy", "--file", &fx("broken/taxonomy-cycle.json")]);
    assert_eq!(cycle.status.code(), Some(2));
    assert!(stderr(&cycle).contains("cycle"));

    let nt = vkg(&store, &["load", &fx("broken/bad.nt")]);
    assert_eq!(nt.status.code(), Some(2));
    assert!(stderr(&nt).contains("bad.nt: line 2"));

    for usage in [
        vec!["frobnicate"],
        vec!["query"],
        vec!["query", "-e", "SELECT * WHERE {}", "-f", "x.rq"],
        vec!["query", "-e", "SELECT * WHERE {}", "--json", "--table"],
        vec!["ingest", "--format", "yolo", "--name", "x", "--slug", "x", "a"],
        vec!["ingest", "--format", "coco", "--name", "x", "--slug", "Bad Slug", "a.json"],
    ] {
        assert_eq!(vkg(&store, &usage).status.code(), Some(1), "{usage:?}");
    }
    let no_store = Command::new(env!("CARGO_BIN_EXE_vkg")).args(["stats"]).output().unwrap();
    assert_eq!(no_store.status.code(), Some(1));
    assert!(!store.exists());
}

#[test]
fn dump_then_load_reproduces_query_results() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    ingest_person_fixtures(&a);
    ok(vkg(&a, &["enrich"]));
    let dump = tmp.path().join("all.nt");
    ok(vkg(&a, &["dump", "--out", dump.to_str().unwrap()]));

    let b = tmp.path().join("b");
    let loaded = ok(vkg(&b, &["load", dump.to_str().unwrap()]));
    assert!(number_in(&loaded) > 0);

    let queries = [
        "SELECT DISTINCT ?img WHERE { ?img cv:hasAnnotation ?a . ?a cv:hasLabel :Person } ORDER BY ?img",
        "SELECT ?img WHERE { ?img cv:weather \"rainy\" . ?img cv:timeOfDay \"night\" . ?img cv:hasAnnotation ?a . ?a cv:hasLabel :Car }",
        "SELECT (COUNT(*) AS ?n) WHERE { ?s ?p ?o }",
        "SELECT ?l (COUNT(?a) AS ?n) WHERE { ?a cv:hasLabel ?l } GROUP BY ?l ORDER BY ?l",
    ];
    for q in queries {
        let left = ok(vkg(&a, &["query", "-e", q, "--json"]));
        let right = ok(vkg(&b, &["query", "-e", q, "--json"]));
        assert_eq!(left, right, "{q}");
        assert_eq!(ok(vkg(&a, &["query", "-e", q])), ok(vkg(&b, &["query", "-e", q])));
    }
    let persons: Value = serde_json::from_str(&ok(vkg(&b, &["query", "-e", queries[0], "--json"]))).unwrap();
    assert_eq!(persons["results"]["bindings"].as_array().unwrap().len(), 6);

    let again = tmp.path().join("again.nt");
    ok(vkg(&b, &["dump", "--out", again.to_str().unwrap()]));
    assert_eq!(std::fs::read(&again).unwrap(), std::fs::read(&dump).unwrap());
}

#[test]
fn export_writes_files() {
    let tmp = tempfile::tempdir().unwrap();
    let store = tmp.path().join("st");
    ingest_person_fixtures(&store);
    ok(vkg(&store, &["enrich"]));

    let req = tmp.path().join("req.json");
    std::fs::write(
        &req,
        r#"{"query": "SELECT DISTINCT ?img WHERE { ?img cv:hasAnnotation ?a . ?a cv:hasLabel :Person }",
            "format": "coco", "allowedLicenses": ["https://creativecommons.org/licenses/by/4.0/"]}"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    ok(vkg(&store, &["export", "--request", req.to_str().unwrap(), "--out", out.to_str().unwrap()]));
    let coco_json = std::fs::read_to_string(out.join("annotations.json")).unwrap();
    let desc = DatasetDescriptor::new("back", "Back", None, None, [TaskKind::Detection, TaskKind::Classification]).unwrap();
    let back = parse_coco(&coco_json, desc).unwrap();
    assert_eq!(back.images.len(), 4);
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["images"].as_array().unwrap().iter().all(|i| i["license"] == CC_BY));

    let kitti_req = tmp.path().join("kitti.json");
    std::fs::write(&kitti_req, r#"{"query": "SELECT ?img WHERE { ?img a cv:Image }", "format": "kitti", "allowedLicenses": ["https://creativecommons.org/licenses/by-nc-sa/3.0/"]}"#).unwrap();
    let kout = tmp.path().join("kout");
    ok(vkg(&store, &["export", "--request", kitti_req.to_str().unwrap(), "--out", kout.to_str().unwrap()]));
    assert_eq!(std::fs::read_dir(kout.join("labels")).unwrap().count(), 4);

    for (body, needle) in [
        ("{\n  \"query\": 1", "bad.json:2:"),
        (r#"{"query": "SELECT ?img WHERE { ?img a cv:Image }", "format": "coco", "split": {"trainFraction": 0, "seed": 1}}"#, "train fraction"),
        (r#"{"query": "SELECT ?img WHERE { ?img a cv:Image }", "format": "coco", "allowedLicenses": []}"#, "no exportable images"),
        (r#"{"query": "SELECT ?img WHERE { ?img a }", "format": "coco"}"#, "bad.json (query):1:"),
    ] {
        let bad = tmp.path().join("bad.json");
        std::fs::write(&bad, body).unwrap();
        let r = vkg(&store, &["export", "--request", bad.to_str().unwrap(), "--out", tmp.path().join("x").to_str().unwrap()]);
        assert_eq!(r.status.code(), Some(2), "{body}");
        assert!(stderr(&r).contains(needle), "{}", stderr(&r));
    }
}

#[test]
fn base_iri_comes_from_the_environment_and_is_fixed_per_store() {
    let tmp = tempfile::tempdir().unwrap();
    let store = tmp.path().join("st");
    let run = |base: &str, slug: &str| {
        Command::new(env!("CARGO_BIN_EXE_vkg"))
            .args(["--store", store.to_str().unwrap(), "ingest", "--format", "cls", "--name", "V", "--slug", slug])
            .arg(fx("vg-cls/labels.csv"))
            .env("VKG_BASE_IRI", base)
            .output()
            .unwrap()
    };
    ok(run("http://data.example.com", "v1"));
    let out = ok(vkg(&store, &["query", "-e", "SELECT ?d WHERE { ?d a cv:Dataset }", "--json"]));
    let json: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(json["results"]["bindings"][0]["d"]["value"], "http://data.example.com/dataset/v1");
    let clash = run("http://elsewhere.example.com", "v2");
    assert_eq!(clash.status.code(), Some(1));
    ok(run("http://data.example.com", "v2"));
    let dup = run("http://data.example.com", "v2");
    assert_eq!(dup.status.code(), Some(1));
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn http_get(port: u16, path: &str) -> Option<String> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    write!(s, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut bytes = Vec::new();
    s.read_to_end(&mut bytes).ok()?;
    Some(String::from_utf8_lossy(&bytes).into_owned())
}

fn wait_for<T>(mut f: impl FnMut() -> Option<T>) -> T {
    let start = Instant::now();
    loop {
        if let Some(v) = f() {
            return v;
        }
        assert!(start.elapsed() < Duration::from_secs(20), "timed out");
        std::thread::sleep(Duration::from_millis(50));
    }
}

fn dataset_count(response: &str) -> usize {
    let body = response.split_once("\r\n\r\n").unwrap().1;
    serde_json::from_str::<Value>(body).unwrap().as_array().unwrap().len()
}

#[cfg(unix)]
#[test]
fn serve_answers_and_reloads_on_sighup() {
    let tmp = tempfile::tempdir().unwrap();
    let store: PathBuf = tmp.path().join("st");
    ok(vkg(&store, &["ingest", "--format", "coco", "--name", "C", "--slug", "coco-mini", "--license", CC_BY, &fx("coco-mini/annotations.json")]));
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let server = Server(
        Command::new(env!("CARGO_BIN_EXE_vkg"))
            .args(["--store", store.to_str().unwrap(), "serve", "--port", &port.to_string()])
            .args(["--image-root", &format!("kitti-mini={}", fx("images/kitti-mini"))])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let first = wait_for(|| http_get(port, "/datasets"));
    assert!(first.starts_with("HTTP/1.1 200"), "{first}");
    assert_eq!(dataset_count(&first), 1);
    let img = http_get(port, "/images/kitti-mini/000000.png").unwrap();
    assert!(img.starts_with("HTTP/1.1 200"));

    ok(vkg(&store, &["ingest", "--format", "cls", "--name", "V", "--slug", "vg-cls", "--license", CC_BY, &fx("vg-cls/labels.csv")]));
    assert_eq!(dataset_count(&http_get(port, "/datasets").unwrap()), 1);
    let pid = server.0.id().to_string();
    assert!(Command::new("kill").args(["-HUP", &pid]).status().unwrap().success());
    wait_for(|| (dataset_count(&http_get(port, "/datasets")?) == 2).then_some(()));
}
