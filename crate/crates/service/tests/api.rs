use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use lap_core::solvers::fit_student_t_hyperparams;
use lap_service::session::{CreateSession, Session, SessionFamily};
use lap_service::store::{write_atomic_interrupted, Kind, Store};
use lap_service::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(dir: &std::path::Path) -> Router {
    let state = AppState::new(Store::open(dir).unwrap(), 2);
    state.preload();
    router(state)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

const ELICITED_MARGINALS: [(f64, f64); 4] = [(5.0, 6.35), (2.0, 2.67), (1.0, 1.34), (3.0, 5.02)];

async fn mvn_session(app: &Router, k: usize) -> String {
    let (s, v) = call(app, "POST", "/sessions", Some(json!({ "family": "mvn", "k": k, "n_e": 10 }))).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

async fn put_marginals(app: &Router, id: &str) -> Value {
    let marginals: Vec<Value> = ELICITED_MARGINALS
        .iter()
        .enumerate()
        .map(|(i, (a, b))| json!({ "component": i + 1, "q50": a, "q75": b }))
        .collect();
    let (s, v) = call(app, "PUT", &format!("/sessions/{id}/marginals"), Some(json!({ "marginals": marginals }))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    v
}

async fn wait_done(app: &Router, job: &str) -> Value {
    let start = Instant::now();
    loop {
        let (s, v) = call(app, "GET", &format!("/jobs/{job}"), None).await;
        assert_eq!(s, StatusCode::OK);
        match v["status"].as_str().unwrap() {
            "done" => return v,
            "failed" => panic!("job failed: {v}"),
            _ => {}
        }
        assert!(start.elapsed() < Duration::from_secs(300), "job did not finish");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

async fn run_job(app: &Router, session: &str, sampler: Value) -> String {
    let (s, v) = call(app, "POST", &format!("/sessions/{session}/jobs"), Some(json!({ "sampler": sampler }))).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
    let id = v["id"].as_str().unwrap().to_string();
    wait_done(app, &id).await;
    id
}

#[tokio::test]
async fn reference_marginals_give_reference_betas() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = mvn_session(&app, 4).await;
    let v = put_marginals(&app, &id).await;
    let expected = [16.89, 4.22, 1.06, 38.0];
    let mut lines = Vec::new();
    for (h, (&beta, &(q50, _))) in v["hypers"].as_array().unwrap().iter().zip(expected.iter().zip(&ELICITED_MARGINALS)) {
        assert_eq!(h["mu0"].as_f64().unwrap(), q50);
        let got = h["beta_ng"].as_f64().unwrap();
        if ((got - beta) / beta).abs() > 0.01 {
            lines.push(format!("component {}: beta {got:.4} vs {beta}", h["component"]));
        }
    }
    assert!(lines.is_empty(), "{}", lines.join("; "));
}

#[tokio::test]
async fn service_hypers_equal_library_fit() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = mvn_session(&app, 4).await;
    let v = put_marginals(&app, &id).await;
    assert_eq!(v["revision"], 2);
    for (h, &(q50, q75)) in v["hypers"].as_array().unwrap().iter().zip(&ELICITED_MARGINALS) {
        let lib = fit_student_t_hyperparams(q50, q75, 10.0).unwrap();
        assert_eq!(h["beta_ng"].as_f64().unwrap(), lib.beta_ng);
        assert_eq!(h["gamma_ng"].as_f64().unwrap(), 10.0);
        assert_eq!(h["alpha_ng"].as_f64().unwrap(), 5.0);
    }
}

#[tokio::test]
async fn out_of_interval_concordance_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = mvn_session(&app, 3).await;
    let (r12, r23) = (0.9_f64, 0.9_f64);
    let p = |r: f64| 0.5 + r.asin() / std::f64::consts::PI;
    let body = json!({ "concordances": [
        { "pair": [1, 2], "p": p(r12) },
        { "pair": [1, 3], "p": 0.5 },
        { "pair": [2, 3], "p": p(r23) },
    ]});
    let (s, v) = call(&app, "PUT", &format!("/sessions/{id}/concordances"), Some(body)).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let reports = v["coherency"]["reports"].as_array().unwrap();
    let r = |i: usize, j: usize| if (i, j) == (1, 3) { 0.0 } else { [r12, r23][i - 1] };
    for (pair, a, b) in [((1, 2), (1, 3), (2, 3)), ((1, 3), (1, 2), (2, 3)), ((2, 3), (1, 2), (1, 3))] {
        // det of a 3x3 correlation matrix is positive for r_free within r_a r_b +- sqrt((1 - r_a^2)(1 - r_b^2))
        let (ra, rb) = (r(a.0, a.1), r(b.0, b.1));
        let half = ((1.0 - ra * ra) * (1.0 - rb * rb)).sqrt();
        let (lo, hi) = (ra * rb - half, ra * rb + half);
        let rep = reports.iter().find(|x| x["pair"] == json!([pair.0, pair.1])).unwrap();
        let iv = rep["interval"].as_array().unwrap();
        assert!((iv[0].as_f64().unwrap() - lo).abs() < 1e-6 && (iv[1].as_f64().unwrap() - hi).abs() < 1e-6, "{rep}");
        let own = r(pair.0, pair.1);
        assert_eq!(rep["in_interval"], own > lo && own < hi, "{rep}");
    }
    let r13 = reports.iter().find(|x| x["pair"] == json!([1, 3])).unwrap();
    assert_eq!(r13["in_interval"], false);
    assert!((r13["interval"][0].as_f64().unwrap() - 0.62).abs() < 1e-6);
    let (s, c) = call(&app, "GET", &format!("/sessions/{id}/coherency"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(c["coherency"], v["coherency"]);
}

fn trapezoid_quantile(x: &[f64], pdf: &[f64], p: f64) -> f64 {
    let mut cdf = vec![0.0];
    for i in 1..x.len() {
        cdf.push(cdf[i - 1] + 0.5 * (pdf[i] + pdf[i - 1]) * (x[i] - x[i - 1]));
    }
    let total = *cdf.last().unwrap();
    let target = p * total;
    let i = cdf.iter().position(|&c| c >= target).unwrap();
    let f = (target - cdf[i - 1]) / (cdf[i] - cdf[i - 1]);
    x[i - 1] + f * (x[i] - x[i - 1])
}

async fn exponential_session(app: &Router) -> String {
    let doc = json!({
        "model": { "family": "exponential" },
        "beliefs": [{ "observable": "t_med", "family": "lognormal", "params": { "mu": -0.32, "sigma": 0.34 } }]
    });
    let (s, v) = call(app, "POST", "/sessions", Some(json!({ "family": "exponential", "document": doc }))).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn density_grid_median_matches_lognormal() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = exponential_session(&app).await;
    let job = run_job(&app, &id, json!({ "seed": 3, "samples": 5000 })).await;
    let (s, g) = call(&app, "GET", &format!("/jobs/{job}/results/density?name=t_med"), None).await;
    assert_eq!(s, StatusCode::OK, "{g}");
    let x: Vec<f64> = serde_json::from_value(g["x"].clone()).unwrap();
    let pdf: Vec<f64> = serde_json::from_value(g["pdf"].clone()).unwrap();
    assert_eq!((x.len(), pdf.len()), (512, 512));
    let median = trapezoid_quantile(&x, &pdf, 0.5);
    assert!((median - (-0.32f64).exp()).abs() < 0.02, "{median}");

    let (s, e) = call(&app, "GET", &format!("/jobs/{job}/results/density?name=nope"), None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["details"]["fields"][0]["field"], "name");
    let (s, _) = call(&app, "GET", &format!("/jobs/{job}/results/density"), None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn summaries_are_deterministic_and_carry_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let a = exponential_session(&app).await;
    let b = exponential_session(&app).await;
    let cfg = json!({ "seed": 11, "samples": 1000, "warmup": 500 });
    let ja = run_job(&app, &a, cfg.clone()).await;
    let jb = run_job(&app, &b, cfg).await;
    let (_, sa) = call(&app, "GET", &format!("/jobs/{ja}/results/summary"), None).await;
    let (_, sb) = call(&app, "GET", &format!("/jobs/{jb}/results/summary"), None).await;
    assert_eq!(sa["summaries"], sb["summaries"]);
    assert_ne!(sa["job_id"], sb["job_id"]);

    let (_, session) = call(&app, "GET", &format!("/sessions/{a}"), None).await;
    let prov = &sa["provenance"];
    assert_eq!(prov["engine_version"], lap_core::ENGINE_VERSION);
    assert_eq!(prov["inputs"], session["inputs"]);
    assert_eq!(prov["session_revision"], session["revision"]);
    assert_eq!(prov["sampler"]["seed"], 11);
    assert_eq!(prov["document"]["beliefs"][0]["observable"], "t_med");
    let names: Vec<&str> = sa["summaries"].as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"t_med") && names.contains(&"lambda"), "{names:?}");
    assert_eq!(sa["summaries"][0]["quantiles"].as_array().unwrap().len(), sa["probs"].as_array().unwrap().len());
}

#[tokio::test]
async fn mvn_job_compares_elicited_and_model_concordances() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = mvn_session(&app, 3).await;
    let body = json!({ "concordances": [
        { "pair": [1, 2], "p": 0.6 }, { "pair": [1, 3], "p": 0.55 }, { "pair": [2, 3], "p": 0.6 },
    ]});
    call(&app, "PUT", &format!("/sessions/{id}/concordances"), Some(body)).await;
    let job = run_job(&app, &id, json!({ "seed": 1, "samples": 1000 })).await;
    let (s, v) = call(&app, "GET", &format!("/jobs/{job}/results/summary"), None).await;
    assert_eq!(s, StatusCode::OK);
    let rows = v["concordances"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["pair"], json!([1, 2]));
    assert_eq!(rows[0]["elicited"], 0.6);
    let m = rows[0]["posterior_median"].as_f64().unwrap();
    assert!(m > 0.5 && m < 0.75, "{m}");
}

#[tokio::test]
async fn status_answers_quickly_while_a_job_runs() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (_, v) = call(&app, "POST", "/sessions", Some(json!({ "family": "repeated_measures" }))).await;
    let id = v["id"].as_str().unwrap();
    let (s, v) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/jobs"),
        Some(json!({ "sampler": { "warmup": 20000, "samples": 100000, "n_chains": 2 } })),
    )
    .await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let job = v["id"].as_str().unwrap().to_string();
    let mut seen_running = 0;
    let mut worst = Duration::ZERO;
    for _ in 0..40 {
        let t = Instant::now();
        let (s, v) = call(&app, "GET", &format!("/jobs/{job}"), None).await;
        worst = worst.max(t.elapsed());
        assert_eq!(s, StatusCode::OK);
        if v["status"] == "running" {
            seen_running += 1;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    assert!(seen_running > 0, "job never observed running");
    assert!(worst < Duration::from_millis(100), "{worst:?}");
    let (s, e) = call(&app, "GET", &format!("/jobs/{job}/results/summary"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(e["code"], "job_not_finished");
}

#[tokio::test]
async fn new_revisions_mark_jobs_stale() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = mvn_session(&app, 2).await;
    let job = run_job(&app, &id, json!({ "samples": 200, "warmup": 200 })).await;
    let (_, v) = call(&app, "GET", &format!("/jobs/{job}"), None).await;
    assert_eq!(v["stale"], false);
    let body = json!({ "marginals": [{ "component": 1, "q50": 1.0, "q75": 2.0 }] });
    call(&app, "PUT", &format!("/sessions/{id}/marginals"), Some(body)).await;
    let (_, v) = call(&app, "GET", &format!("/jobs/{job}"), None).await;
    assert_eq!(v["stale"], true);
    let (_, s) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    let revs = s["revisions"].as_array().unwrap();
    assert_eq!(revs.len(), 2);
    assert_eq!(revs[0]["change"], "create");
    assert_eq!(revs[0]["inputs"]["marginals"], json!([]));
    assert_eq!(s["jobs"][0]["id"], job.as_str());
}

#[tokio::test]
async fn preview_is_the_predictive_student_t() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = mvn_session(&app, 4).await;
    put_marginals(&app, &id).await;
    let (s, v) = call(&app, "GET", &format!("/sessions/{id}/preview?component=1"), None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let x: Vec<f64> = serde_json::from_value(v["x"].clone()).unwrap();
    let pdf: Vec<f64> = serde_json::from_value(v["pdf"].clone()).unwrap();
    assert_eq!(x.len(), 512);
    let mass: f64 = (1..x.len()).map(|i| 0.5 * (pdf[i] + pdf[i - 1]) * (x[i] - x[i - 1])).sum();
    assert!((mass - 0.998).abs() < 1e-3, "{mass}");
    assert!((trapezoid_quantile(&x, &pdf, 0.5) - 5.0).abs() < 0.01);
    assert!((trapezoid_quantile(&x, &pdf, (0.75 - 0.001) / 0.998) - 6.35).abs() < 0.02);
    let (s, e) = call(&app, "GET", &format!("/sessions/{id}/preview?component=9"), None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["details"]["fields"][0]["field"], "component");
}

#[tokio::test]
async fn errors_use_one_shape() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    for uri in ["/sessions/nope", "/jobs/nope", "/jobs/nope/results/summary", "/sessions/../x"] {
        let (s, v) = call(&app, "GET", uri, None).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{uri}");
        assert!(v["code"].is_string() && v["message"].is_string() && v.get("details").is_some(), "{v}");
    }
    let (s, v) = call(&app, "POST", "/sessions", Some(json!({ "family": "mvn", "k": 1, "n_e": -1 }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "invalid_input");
    assert_eq!(v["details"]["fields"].as_array().unwrap().len(), 2);
    let (s, v) = call(&app, "POST", "/sessions", Some(json!({ "family": "weibull" }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "invalid_body");

    let id = mvn_session(&app, 3).await;
    let body = json!({ "marginals": [{ "component": 1, "q50": 2.0, "q75": 1.0 }] });
    let (s, v) = call(&app, "PUT", &format!("/sessions/{id}/marginals"), Some(body)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["details"]["fields"][0]["field"], "marginals[0]");
    let body = json!({ "concordances": [{ "pair": [1, 2], "p": 1.5 }] });
    let (s, v) = call(&app, "PUT", &format!("/sessions/{id}/concordances"), Some(body)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["details"]["fields"][0]["field"], "concordances[0]");
    let (_, session) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(session["revision"], 1);

    let (s, v) = call(&app, "POST", &format!("/sessions/{id}/jobs"), Some(json!({ "sampler": { "n_chains": 0 } }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["details"]["fields"][0]["field"], "sampler");
    let (s, _) = call(&app, "DELETE", "/nowhere", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn schema_lists_every_route() {
    let dir = tempfile::tempdir().unwrap();
    let (s, v) = call(&app(dir.path()), "GET", "/api/schema", None).await;
    assert_eq!(s, StatusCode::OK);
    let paths = v["paths"].as_object().unwrap();
    for p in ["/sessions", "/sessions/{id}/marginals", "/jobs/{id}/results/density", "/sessions/{id}/preview"] {
        assert!(paths.contains_key(p), "{p}");
    }
}

fn sample_session() -> Session {
    let inputs = CreateSession { family: SessionFamily::Mvn, k: Some(3), n_e: Some(10.0), document: None }.into_inputs().unwrap();
    Session::new("abc".into(), inputs).unwrap()
}

#[test]
fn persist_then_load_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let s = sample_session();
    store.save(Kind::Session, &s.id, &s).unwrap();
    let back: Session = store.load(Kind::Session, &s.id).unwrap();
    assert_eq!(back, s);
}

#[test]
fn interrupted_write_keeps_the_old_version() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let old = sample_session();
    store.save(Kind::Session, &old.id, &old).unwrap();
    let mut new = old.clone();
    new.updated_ms += 1;
    let bytes = serde_json::to_vec(&new).unwrap();
    let path = store.path(Kind::Session, &old.id).unwrap();
    for cut in [0, 1, bytes.len() / 2, bytes.len()] {
        assert!(write_atomic_interrupted(&path, &bytes, cut).is_err());
        let back: Session = store.load(Kind::Session, &old.id).unwrap();
        assert_eq!(back, old);
    }
}

#[test]
fn reads_during_writes_see_whole_versions() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let mut s = sample_session();
    store.save(Kind::Session, &s.id, &s).unwrap();
    let reader = {
        let store = store.clone();
        let id = s.id.clone();
        std::thread::spawn(move || {
            for _ in 0..300 {
                store.load::<Session>(Kind::Session, &id).unwrap();
            }
        })
    };
    for n in 0..300 {
        s.updated_ms = n;
        store.save(Kind::Session, &s.id, &s).unwrap();
    }
    reader.join().unwrap();
}

#[tokio::test]
async fn corrupt_file_is_named_and_others_still_load() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let good = sample_session();
    store.save(Kind::Session, &good.id, &good).unwrap();
    std::fs::write(store.path(Kind::Session, "broken").unwrap(), b"{\"id\": \"broken\", \"created").unwrap();

    let state = AppState::new(store, 1);
    let errors = state.preload();
    assert_eq!(errors.len(), 1);
    assert!(errors[0].to_string().contains("broken.json"), "{}", errors[0]);
    let app = router(state);
    let (s, v) = call(&app, "GET", "/sessions/broken", None).await;
    assert_eq!(s, StatusCode::INTERNAL_SERVER_ERROR);
    assert_eq!(v["code"], "corrupt_record");
    assert!(v["details"]["file"].as_str().unwrap().ends_with("broken.json"));
    let (s, v) = call(&app, "GET", &format!("/sessions/{}", good.id), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["id"], "abc");
}

#[tokio::test]
async fn restart_reloads_sessions_and_results() {
    let dir = tempfile::tempdir().unwrap();
    let (id, job, summary) = {
        let app = app(dir.path());
        let id = exponential_session(&app).await;
        let job = run_job(&app, &id, json!({ "samples": 300, "warmup": 200 })).await;
        let (_, summary) = call(&app, "GET", &format!("/jobs/{job}/results/summary"), None).await;
        (id, job, summary)
    };
    let app = app(dir.path());
    let (s, v) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["jobs"][0]["id"], job.as_str());
    let (_, again) = call(&app, "GET", &format!("/jobs/{job}/results/summary"), None).await;
    assert_eq!(again["summaries"], summary["summaries"]);
}
