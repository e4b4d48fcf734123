//! HTTP scoring for the survey client: `POST /v1/score` and `GET /v1/health`.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, CorsLayer};

use c19_core::features::{answers_to_features, survey_schema, FieldError, SurveyAnswers};
use c19_core::models::{save_model, RiskModel};
use c19_core::LogisticModel;

use crate::error::{CliError, CliResult};
use crate::manifest::sha256_hex;

/// Hex digits of the model checksum reported as `model_version`.
const VERSION_DIGITS: usize = 12;

/// A loaded survey model. Immutable, so one instance serves every request.
#[derive(Debug, Clone)]
pub struct ScoringService {
    model: LogisticModel,
    model_version: String,
}

impl ScoringService {
    /// Accepts only logistic models over the survey schema that carry a percentile map.
    pub fn new(model: RiskModel) -> CliResult<Self> {
        let mut canonical = Vec::new();
        save_model(&model, &mut canonical).map_err(|e| CliError::data("model", e))?;
        let RiskModel::Logistic(model) = model else {
            return Err(CliError::Validation("--model: the scoring service needs a logistic survey model".into()));
        };
        if model.features != survey_schema().names {
            return Err(CliError::Validation("--model: features do not match the survey schema".into()));
        }
        if model.percentiles.is_none() {
            return Err(CliError::Validation("--model: model has no percentile map".into()));
        }
        let mut model_version = sha256_hex(&canonical);
        model_version.truncate(VERSION_DIGITS);
        Ok(Self { model, model_version })
    }

    pub fn frozen() -> Self {
        Self::new(LogisticModel::frozen_survey().into()).expect("shipped model is a survey model")
    }

    pub fn model_version(&self) -> &str {
        &self.model_version
    }

    /// Scores a raw request body. Never fails for a well-formed body.
    pub fn handle_score(&self, body: &[u8]) -> (StatusCode, Value) {
        let value: Value = match serde_json::from_slice(body) {
            Ok(v) => v,
            Err(e) => {
                let err = FieldError {
                    field: String::new(),
                    message: format!("body is not valid JSON: {e}"),
                };
                return (StatusCode::BAD_REQUEST, json!({ "errors": [err] }));
            }
        };
        let answers = match SurveyAnswers::from_json(&value) {
            Ok(a) => a,
            Err(errors) => return (StatusCode::BAD_REQUEST, json!({ "errors": errors })),
        };
        let probability = self
            .model
            .score(&answers_to_features(&answers))
            .expect("survey vector matches survey model");
        let percentile = self.model.percentile_of(probability).expect("checked at construction");
        (
            StatusCode::OK,
            json!({
                "probability": probability,
                "percentile": percentile,
                "model_version": self.model_version,
            }),
        )
    }
}

async fn score(State(service): State<Arc<ScoringService>>, body: Bytes) -> Response {
    let (status, value) = service.handle_score(&body);
    (status, Json(value)).into_response()
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

/// Routes, plus CORS when any origin is allowed.
pub fn router(service: Arc<ScoringService>, allowed_origins: &[String]) -> CliResult<Router> {
    let mut app = Router::new()
        .route("/v1/score", post(score))
        .route("/v1/health", get(health))
        .with_state(service);
    if !allowed_origins.is_empty() {
        let origins = allowed_origins
            .iter()
            .map(|o| {
                HeaderValue::from_str(o).map_err(|_| CliError::Validation(format!("--allow-origin {o:?}: not a valid origin")))
            })
            .collect::<CliResult<Vec<_>>>()?;
        app = app.layer(
            CorsLayer::new()
                .allow_origin(AllowOrigin::list(origins))
                .allow_methods([Method::GET, Method::POST])
                .allow_headers([header::CONTENT_TYPE]),
        );
    }
    Ok(app)
}

pub async fn serve(app: Router, addr: SocketAddr) -> CliResult<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| CliError::Validation(format!("--port: cannot bind {addr}: {e}")))?;
    log::info!("listening on {addr}");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::Data(format!("server error: {e}")))
}
