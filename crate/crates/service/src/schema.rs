//! OpenAPI-style description served at `GET /api/schema`.

use serde_json::{json, Value};

fn op(summary: &str, ok: u16, body: Option<&str>) -> Value {
    let mut v = json!({
        "summary": summary,
        "responses": {
            ok.to_string(): { "description": "success" },
            "404": { "$ref": "#/components/responses/Error" },
            "422": { "$ref": "#/components/responses/Error" }
        }
    });
    if let Some(schema) = body {
        v["requestBody"] = json!({ "content": { "application/json": { "schema": { "$ref": format!("#/components/schemas/{schema}") } } } });
    }
    v
}

fn query(name: &str, ty: &str) -> Value {
    json!([{ "name": name, "in": "query", "required": true, "schema": { "type": ty } }])
}

pub fn api_schema() -> Value {
    let mut density = op("Gaussian kernel density grid (512 points, Silverman bandwidth) for one parameter or observable", 200, None);
    density["parameters"] = query("name", "string");
    let mut preview = op("Prior-predictive Student-t density grid for one component", 200, None);
    preview["parameters"] = query("component", "integer");
    json!({
        "openapi": "3.0.3",
        "info": { "title": "lap session service", "version": lap_core::ENGINE_VERSION },
        "paths": {
            "/sessions": { "post": op("Create an elicitation session", 201, Some("CreateSession")) },
            "/sessions/{id}": { "get": op("Session with inputs, solved hypers, coherency, jobs and revisions", 200, None) },
            "/sessions/{id}/marginals": { "put": op("Replace quantile answers and solve NormalGamma hypers", 200, Some("Marginals")) },
            "/sessions/{id}/concordances": { "put": op("Replace concordance answers and report coherency intervals", 200, Some("Concordances")) },
            "/sessions/{id}/coherency": { "get": op("Latest coherency reports", 200, None) },
            "/sessions/{id}/jobs": { "post": op("Queue a sampling job for the current inputs", 202, Some("JobRequest")) },
            "/sessions/{id}/preview": { "get": preview },
            "/jobs/{id}": { "get": op("Job status and progress", 200, None) },
            "/jobs/{id}/results/summary": { "get": op("Posterior quantiles per parameter and observable, with provenance", 200, None) },
            "/jobs/{id}/results/density": { "get": density },
            "/api/schema": { "get": op("This document", 200, None) }
        },
        "components": {
            "responses": {
                "Error": { "description": "error", "content": { "application/json": { "schema": { "$ref": "#/components/schemas/Error" } } } }
            },
            "schemas": {
                "Error": {
                    "type": "object",
                    "required": ["code", "message", "details"],
                    "properties": { "code": { "type": "string" }, "message": { "type": "string" }, "details": {} }
                },
                "CreateSession": {
                    "type": "object",
                    "required": ["family"],
                    "properties": {
                        "family": { "enum": ["mvn", "exponential", "repeated_measures"] },
                        "k": { "type": "integer", "minimum": 2 },
                        "n_e": { "type": "number", "exclusiveMinimum": 0 },
                        "document": { "type": "object", "description": "model document for non-mvn families" }
                    }
                },
                "Marginals": {
                    "type": "object",
                    "required": ["marginals"],
                    "properties": { "marginals": { "type": "array", "items": {
                        "type": "object",
                        "required": ["component", "q50", "q75"],
                        "properties": { "component": { "type": "integer" }, "q50": { "type": "number" }, "q75": { "type": "number" } }
                    } } }
                },
                "Concordances": {
                    "type": "object",
                    "required": ["concordances"],
                    "properties": { "concordances": { "type": "array", "items": {
                        "type": "object",
                        "required": ["pair"],
                        "properties": {
                            "pair": { "type": "array", "items": { "type": "integer" }, "minItems": 2, "maxItems": 2 },
                            "p": { "type": "number" },
                            "r": { "type": "number" }
                        }
                    } } }
                },
                "JobRequest": {
                    "type": "object",
                    "properties": { "sampler": { "type": "object", "properties": {
                        "n_chains": { "type": "integer" }, "warmup": { "type": "integer" }, "samples": { "type": "integer" },
                        "seed": { "type": "integer" }, "thin": { "type": "integer" }, "target_acceptance": { "type": "number" }
                    } } }
                }
            }
        }
    })
}
