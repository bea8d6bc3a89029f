use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use lap_core::LapError;
use serde::Serialize;
use serde_json::{json, Value};

use crate::store::StoreError;

/// Error body shared by every route: `{code, message, details}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl ToString) -> Self {
        Self { field: field.into(), message: message.to_string() }
    }
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into(), details: Value::Null }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    pub fn not_found(kind: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("{kind} {id} not found"))
            .with_details(json!({ "kind": kind, "id": id }))
    }

    pub fn invalid(message: impl Into<String>, fields: Vec<FieldError>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_input", message).with_details(json!({ "fields": fields }))
    }

    pub fn field(field: &str, message: impl ToString) -> Self {
        let message = message.to_string();
        Self::invalid(message.clone(), vec![FieldError::new(field, message)])
    }

    pub fn conflict(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<LapError> for ApiError {
    fn from(e: LapError) -> Self {
        let details = match &e {
            LapError::Ingestion { rows, .. } => json!({ "rows": rows }),
            LapError::GlobalIncoherence { minors } => json!({ "minors": minors }),
            LapError::Inconsistent { residuals, .. } => json!({ "residuals": residuals }),
            _ => Value::Null,
        };
        let (status, code) = if e.is_input_error() {
            (StatusCode::UNPROCESSABLE_ENTITY, "invalid_input")
        } else {
            (StatusCode::INTERNAL_SERVER_ERROR, "numerical_failure")
        };
        Self::new(status, code, e.to_string()).with_details(details)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound { kind, id } => Self::not_found(kind.label(), &id),
            StoreError::Corrupt { ref path, .. } => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "corrupt_record", e.to_string())
                .with_details(json!({ "file": path.display().to_string() })),
            StoreError::Io(_) | StoreError::Encode(_) => Self::internal(e.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        match r {
            JsonRejection::JsonSyntaxError(_) => Self::new(StatusCode::BAD_REQUEST, "malformed_json", r.body_text()),
            JsonRejection::MissingJsonContentType(_) => {
                Self::new(StatusCode::UNSUPPORTED_MEDIA_TYPE, "unsupported_media_type", r.body_text())
            }
            _ => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_body", r.body_text()),
        }
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_query", r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "code": self.code, "message": self.message, "details": self.details });
        (self.status, Json(body)).into_response()
    }
}
