//! Read-only HTTP access to one loaded artifact.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use log::info;
use serde::{Deserialize, Serialize};

use explsum::io::read_explmat;
use explsum::summary::{apply_filter, extract_subset, FilterSpec, SummaryArtifact};
use explsum::{Error, NormalizeOptions, SparseMatrix};

use crate::args::ServeArgs;
use crate::{CliError, CliResult};

#[derive(Debug)]
pub struct AppState {
    pub artifact: SummaryArtifact,
    /// Canonical serialization of `artifact`, served as is.
    pub summary_json: String,
    /// Normalized source matrix, needed for subsets.
    pub matrix: Option<SparseMatrix<f64>>,
}

impl AppState {
    pub fn new(artifact: SummaryArtifact, matrix: Option<SparseMatrix<f64>>) -> Self {
        Self {
            summary_json: artifact.to_json(),
            artifact,
            matrix,
        }
    }

    /// Loads the artifact and, if given, the explmat file it was built from.
    /// The matrix is normalized with the options echoed in the artifact.
    pub fn load(summary: &std::path::Path, matrix: Option<&std::path::Path>) -> CliResult<Self> {
        let text = std::fs::read_to_string(summary)
            .map_err(|e| CliError::input(anyhow::Error::new(e).context(format!("reading {}", summary.display()))))?;
        let artifact = SummaryArtifact::from_json(&text)?;
        let matrix = match matrix {
            Some(path) => {
                let opts: NormalizeOptions = artifact
                    .meta
                    .config
                    .get("normalize")
                    .cloned()
                    .map(serde_json::from_value)
                    .transpose()
                    .map_err(CliError::input)?
                    .unwrap_or_default();
                let m = read_explmat::<f64>(path)?.normalized(opts)?;
                Some(m.data().clone())
            }
            None => None,
        };
        if let Some(m) = &matrix {
            if m.n_rows() != artifact.n_instances() || m.n_cols() != artifact.n_features() {
                return Err(CliError::input(anyhow::anyhow!(
                    "matrix is {}x{} but the summary describes {}x{}",
                    m.n_rows(),
                    m.n_cols(),
                    artifact.n_instances(),
                    artifact.n_features()
                )));
            }
        }
        Ok(Self::new(artifact, matrix))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsetRequest {
    pub row_cluster: u32,
    #[serde(default)]
    pub col_cluster: Option<u32>,
    #[serde(default)]
    pub threshold: f64,
}

fn json(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn error(status: StatusCode, message: impl std::fmt::Display) -> Response {
    json(status, serde_json::json!({ "error": message.to_string() }).to_string())
}

fn ok<T: Serialize>(value: &T) -> Response {
    match serde_json::to_string(value) {
        Ok(body) => json(StatusCode::OK, body),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn health() -> Response {
    json(StatusCode::OK, r#"{"status":"ok"}"#.into())
}

async fn summary(State(state): State<Arc<AppState>>) -> Response {
    json(StatusCode::OK, state.summary_json.clone())
}

fn parse_body<T: serde::de::DeserializeOwned + Default>(body: &[u8]) -> Result<T, Response> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| error(StatusCode::BAD_REQUEST, e))
}

async fn filter(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let spec: FilterSpec = match parse_body(&body) {
        Ok(s) => s,
        Err(r) => return r,
    };
    match apply_filter(&state.artifact, &spec) {
        Ok(view) => ok(&view),
        Err(e @ Error::NotFound(_)) => error(StatusCode::UNPROCESSABLE_ENTITY, e),
        Err(e @ Error::Config(_)) => error(StatusCode::BAD_REQUEST, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn subset(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let Some(matrix) = &state.matrix else {
        return error(StatusCode::NOT_IMPLEMENTED, "subsets need the source matrix (--matrix)");
    };
    let req: SubsetRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    if !(req.threshold >= 0.0) || !req.threshold.is_finite() {
        return error(StatusCode::BAD_REQUEST, "threshold must be a nonnegative number");
    }
    match extract_subset(&state.artifact, matrix, req.row_cluster, req.col_cluster, req.threshold) {
        Ok(s) => ok(&s),
        Err(e @ Error::NotFound(_)) => error(StatusCode::NOT_FOUND, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/summary", get(summary))
        .route("/filter", post(filter))
        .route("/subset", post(subset))
        .with_state(state)
}

pub async fn serve(args: &ServeArgs) -> CliResult<()> {
    let state = Arc::new(AppState::load(&args.summary, args.matrix.as_deref())?);
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(CliError::config)?;
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(CliError::config)?;
    info!(
        "serving {} on http://{}",
        args.summary.display(),
        listener.local_addr().map_err(CliError::internal)?
    );
    axum::serve(listener, router(state)).await.map_err(CliError::internal)
}
