#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;

use axum::body::{Body, Bytes};
use axum::http::{header, HeaderMap, Method, Request, StatusCode};
use axum::Router;
use common::*;
use http_body_util::BodyExt;
use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};
use serde_json::{json, Value};
use tower::ServiceExt;
use vkg_core::catalog::statistics;
use vkg_core::ingest::{parse_coco, DatasetDescriptor, TaskKind};
use vkg_core::sparql::{evaluate, parse_query};
use vkg_core::{TripleSource, TripleStore};
use vkg_server::{Service, ServiceConfig, MAX_GET_QUERY, SPARQL_QUERY, SPARQL_RESULTS_JSON};

const CAR_VAN: &str = "SELECT ?img WHERE { ?img cv:hasAnnotation ?a . ?a cv:hasLabel :Car . \
                       ?img cv:hasAnnotation ?b . ?b cv:hasLabel :Van } LIMIT 100";

struct Reply {
    status: StatusCode,
    headers: HeaderMap,
    body: Bytes,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    fn header(&self, name: &str) -> Option<&str> {
        self.headers.get(name).and_then(|v| v.to_str().ok())
    }
}

async fn call(router: &Router, req: Request<Body>) -> Reply {
    let resp = router.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp.into_body().collect().await.unwrap().to_bytes();
    Reply { status, headers, body }
}

async fn get(router: &Router, uri: &str) -> Reply {
    call(router, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(router: &Router, uri: &str, content_type: &str, body: impl Into<Body>) -> Reply {
    call(router, Request::post(uri).header(header::CONTENT_TYPE, content_type).body(body.into()).unwrap()).await
}

fn encode(q: &str) -> String {
    utf8_percent_encode(q, NON_ALPHANUMERIC).to_string()
}

fn service(store: &TripleStore, config: ServiceConfig) -> Service {
    Service::new(store.snapshot(), config)
}

fn person_router() -> (TripleStore, Router) {
    let store = person_store();
    let roots = BTreeMap::from([("kitti-mini".to_owned(), fixtures().join("images/kitti-mini"))]);
    let router = service(&store, ServiceConfig { image_roots: roots, ..Default::default() }).router();
    (store, router)
}

#[tokio::test]
async fn empty_pattern_yields_one_empty_binding() {
    let (_, router) = person_router();
    let r = get(&router, &format!("/sparql?query={}", encode("SELECT * WHERE {}"))).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.header("content-type"), Some(SPARQL_RESULTS_JSON));
    assert_eq!(r.header("x-truncated"), Some("false"));
    assert_eq!(r.json(), json!({"head": {"vars": []}, "results": {"bindings": [{}]}}));
}

#[tokio::test]
async fn all_three_encodings_match_in_process_evaluation() {
    let (store, router) = person_router();
    let want = evaluate(&parse_query(CAR_VAN).unwrap(), &store).to_json();
    assert_eq!(want["results"]["bindings"].as_array().unwrap().len(), 2);

    let by_get = get(&router, &format!("/sparql?query={}", encode(CAR_VAN))).await;
    let by_form = post(&router, "/sparql", "application/x-www-form-urlencoded", format!("query={}", encode(CAR_VAN))).await;
    let by_body = post(&router, "/sparql", &format!("{SPARQL_QUERY}; charset=utf-8"), CAR_VAN.to_owned()).await;
    for r in [by_get, by_form, by_body] {
        assert_eq!(r.status, StatusCode::OK);
        assert_eq!(r.json(), want);
    }
}

#[tokio::test]
async fn sparql_errors() {
    let (_, router) = person_router();
    let r = post(&router, "/sparql", SPARQL_QUERY, "SELECT ?x WHERE {\n  ?x cv:hasLabel \n}").await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let body = r.json();
    assert_eq!(body["query"]["line"], 3);
    assert_eq!(body["query"]["column"], 1);
    assert!(body["query"]["kind"].is_string());
    assert!(body["error"].is_string());

    let r = get(&router, &format!("/sparql?query={}", encode("SELECT ?x WHERE { ?x <rel> ?y }"))).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["query"]["line"], 1);

    assert_eq!(get(&router, "/sparql").await.status, StatusCode::BAD_REQUEST);
    assert_eq!(post(&router, "/sparql", "application/x-www-form-urlencoded", "q=1").await.status, StatusCode::BAD_REQUEST);
    assert_eq!(post(&router, "/sparql", "text/plain", "SELECT * WHERE {}").await.status, StatusCode::UNSUPPORTED_MEDIA_TYPE);
    assert_eq!(post(&router, "/sparql", SPARQL_QUERY, vec![0xffu8, 0xfe]).await.status, StatusCode::BAD_REQUEST);

    let long = format!("SELECT * WHERE {{}} {}", "#".repeat(MAX_GET_QUERY));
    assert_eq!(get(&router, &format!("/sparql?query={}", encode(&long))).await.status, StatusCode::URI_TOO_LONG);
    let r = post(&router, "/sparql", SPARQL_QUERY, format!("SELECT * WHERE {{}}\n{}", "#".repeat(MAX_GET_QUERY))).await;
    assert_eq!(r.status, StatusCode::OK);
}

#[tokio::test]
async fn rows_are_capped_at_max_rows() {
    let store = person_store();
    let router = service(&store, ServiceConfig { max_rows: 7, ..Default::default() }).router();
    let r = get(&router, &format!("/sparql?query={}", encode("SELECT * WHERE { ?s ?p ?o }"))).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.header("x-truncated"), Some("true"));
    assert_eq!(r.json()["results"]["bindings"].as_array().unwrap().len(), 7);

    let r = get(&router, &format!("/sparql?query={}", encode("SELECT * WHERE { ?s ?p ?o } LIMIT 7"))).await;
    assert_eq!(r.header("x-truncated"), Some("false"));
    assert_eq!(r.json()["results"]["bindings"].as_array().unwrap().len(), 7);
}

#[tokio::test]
async fn catalog_routes() {
    let (store, router) = person_router();
    let ds = get(&router, "/datasets").await.json();
    assert_eq!(ds.as_array().unwrap().len(), 3);
    assert_eq!(ds[1]["slug"], "kitti-mini");
    assert_eq!(ds[1]["imageCount"], 4);
    assert_eq!(ds[1]["license"], CC_BY_NC_SA);

    let ped = get(&router, "/categories?dataset=kitti-mini&q=PED").await;
    assert_eq!(ped.status, StatusCode::OK);
    let ped = ped.json();
    assert_eq!(ped.as_array().unwrap().len(), 1);
    assert_eq!(ped[0]["name"], "pedestrian");
    assert_eq!(ped[0]["annotationCount"], 2);

    let cls = get(&router, "/categories?task=classification").await.json();
    assert_eq!(cls.as_array().unwrap().len(), 3);
    assert_eq!(get(&router, "/categories?dataset=nope").await.status, StatusCode::NOT_FOUND);
    assert_eq!(get(&router, "/categories?task=juggling").await.status, StatusCode::BAD_REQUEST);

    let stats = get(&router, "/statistics").await.json();
    assert_eq!(stats, serde_json::to_value(statistics(&store)).unwrap());
    let count = |class: &str| store.count_matches(None, Some(&iri(vkg_core::schema::ns::RDF_TYPE)), Some(&cv(class)));
    assert_eq!(stats["totals"]["images"], count("Image"));
    assert_eq!(stats["totals"]["annotations"], count("Annotation"));
    assert_eq!(stats["totals"]["triples"], store.len());

    let index = get(&router, "/").await.json();
    assert_eq!(index["maxRows"], 10_000);
}

#[tokio::test]
async fn export_route() {
    let (_, router) = person_router();
    let person = "SELECT DISTINCT ?img WHERE { ?img cv:hasAnnotation ?a . ?a cv:hasLabel :Person }";

    let r = post(&router, "/export", "application/json", json!({"query": person, "format": "coco"}).to_string()).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.header("content-type"), Some("application/json"));
    let desc = DatasetDescriptor::new("back", "Back", None, None, [TaskKind::Detection, TaskKind::Classification]);
    let back = parse_coco(std::str::from_utf8(&r.body).unwrap(), desc.unwrap()).unwrap();
    assert_eq!(back.images.len(), 6);
    let again = post(&router, "/export", "application/json", json!({"query": person, "format": "coco"}).to_string()).await;
    assert_eq!(again.body, r.body);

    let cls = json!({"query": "SELECT ?img WHERE { ?img a cv:Image }", "format": "cls", "allowedLicenses": [CC_BY]});
    let r = post(&router, "/export", "application/json", cls.to_string()).await;
    assert_eq!(r.status, StatusCode::OK);
    assert!(r.header("content-type").unwrap().starts_with("text/csv"));
    assert_eq!(std::str::from_utf8(&r.body).unwrap().lines().count(), 1 + 3 + 6);

    let kitti = json!({"query": "SELECT ?img WHERE { ?img a cv:Image }", "format": "kitti", "allowedLicenses": [CC_BY_NC_SA]});
    let r = post(&router, "/export", "application/json", kitti.to_string()).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json().as_object().unwrap().len(), 4);

    let none = json!({"query": person, "format": "coco", "allowedLicenses": []});
    assert_eq!(post(&router, "/export", "application/json", none.to_string()).await.status, StatusCode::UNPROCESSABLE_ENTITY);
    let boxless = json!({"query": person, "format": "kitti"});
    assert_eq!(post(&router, "/export", "application/json", boxless.to_string()).await.status, StatusCode::UNPROCESSABLE_ENTITY);

    let zero = json!({"query": person, "format": "coco", "split": {"trainFraction": 0.0, "seed": 1}});
    assert_eq!(post(&router, "/export", "application/json", zero.to_string()).await.status, StatusCode::BAD_REQUEST);
    assert_eq!(post(&router, "/export", "application/json", "{").await.status, StatusCode::BAD_REQUEST);
    let unknown = json!({"query": person, "format": "yolo"});
    assert_eq!(post(&router, "/export", "application/json", unknown.to_string()).await.status, StatusCode::BAD_REQUEST);
    let no_var = json!({"query": "SELECT ?a WHERE { ?a a cv:Annotation }", "format": "coco"});
    assert_eq!(post(&router, "/export", "application/json", no_var.to_string()).await.status, StatusCode::BAD_REQUEST);
    let r = post(&router, "/export", "application/json", json!({"query": "SELECT", "format": "coco"}).to_string()).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["query"]["line"], 1);
}

#[tokio::test]
async fn image_route() {
    let (_, router) = person_router();
    let r = get(&router, "/images/kitti-mini/000000.png").await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.header("content-type"), Some("image/png"));
    assert_eq!(r.body.as_ref(), std::fs::read(fixtures().join("images/kitti-mini/000000.png")).unwrap());

    assert_eq!(get(&router, "/images/kitti-mini/../../etc/passwd").await.status, StatusCode::FORBIDDEN);
    assert_eq!(get(&router, "/images/kitti-mini/..%2F..%2Fetc%2Fpasswd").await.status, StatusCode::FORBIDDEN);
    assert_eq!(get(&router, "/images/kitti-mini/%2Fetc%2Fpasswd").await.status, StatusCode::FORBIDDEN);
    assert_eq!(get(&router, "/images/kitti-mini/a%5C..%5Cb.png").await.status, StatusCode::FORBIDDEN);
    assert_eq!(get(&router, "/images/kitti-mini/000009.png").await.status, StatusCode::NOT_FOUND);
    assert_eq!(get(&router, "/images/coco-mini/000000000139.jpg").await.status, StatusCode::NOT_FOUND);
}

#[cfg(unix)]
#[tokio::test]
async fn symlink_out_of_root_is_forbidden() {
    let outside = tempfile::tempdir().unwrap();
    std::fs::write(outside.path().join("secret.png"), b"x").unwrap();
    let root = tempfile::tempdir().unwrap();
    std::os::unix::fs::symlink(outside.path().join("secret.png"), root.path().join("link.png")).unwrap();
    std::fs::write(root.path().join("ok.jpg"), b"jpeg").unwrap();
    let roots = BTreeMap::from([("d".to_owned(), root.path().to_path_buf())]);
    let router = service(&TripleStore::new(), ServiceConfig { image_roots: roots, ..Default::default() }).router();
    assert_eq!(get(&router, "/images/d/link.png").await.status, StatusCode::FORBIDDEN);
    let ok = get(&router, "/images/d/ok.jpg").await;
    assert_eq!((ok.status, ok.header("content-type")), (StatusCode::OK, Some("image/jpeg")));
}

#[tokio::test]
async fn requests_never_mutate_the_store() {
    let (store, router) = person_router();
    let before = (get(&router, "/statistics").await.body, store.dump_ntriples(true));
    let requests = [
        "/sparql?query=SELECT%20*%20WHERE%20%7B%3Fs%20%3Fp%20%3Fo%7D",
        "/datasets",
        "/categories?dataset=coco-mini",
        "/images/kitti-mini/000000.png",
        "/sparql?query=broken",
    ];
    for i in 0..100 {
        if i % 6 == 5 {
            let body = json!({"query": "SELECT ?img WHERE { ?img a cv:Image }", "format": "cls"}).to_string();
            post(&router, "/export", "application/json", body).await;
        } else {
            get(&router, requests[i % requests.len()]).await;
        }
    }
    assert_eq!(get(&router, "/statistics").await.body, before.0);
    assert_eq!(store.dump_ntriples(true), before.1);
}

#[tokio::test]
async fn publish_swaps_the_snapshot() {
    let empty = TripleStore::new();
    let svc = service(&empty, ServiceConfig::default());
    let router = svc.router();
    let held = svc.snapshot();
    assert_eq!(get(&router, "/datasets").await.json(), json!([]));
    svc.publish(person_store().snapshot());
    assert_eq!(get(&router, "/datasets").await.json().as_array().unwrap().len(), 3);
    assert_eq!(held.len(), 0);
}

#[tokio::test]
async fn cors_headers_follow_config() {
    let store = TripleStore::new();
    let preflight = || {
        Request::builder()
            .method(Method::OPTIONS)
            .uri("/sparql")
            .header(header::ORIGIN, "http://localhost:5173")
            .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
            .body(Body::empty())
            .unwrap()
    };
    let open = service(&store, ServiceConfig { cors_allowed: true, ..Default::default() }).router();
    let r = call(&open, preflight()).await;
    assert!(r.header("access-control-allow-origin").is_some());
    let closed = service(&store, ServiceConfig::default()).router();
    let r = call(&closed, preflight()).await;
    assert!(r.header("access-control-allow-origin").is_none());
}
