//! Local HTTP and websocket service for interactive embodiment.
//!
//! - `GET /api/hands`: shipped robot hands and their actuators
//! - `GET /api/model`: hand-model parameters and bounds
//! - `POST /api/embody`: one state in, one robot configuration out
//! - `GET /ws/embody`: the same exchange over a websocket, one JSON object
//!   per message, warm-started per connection
//! - everything else: static files of the explorer UI, when configured

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tower_http::services::ServeDir;

use handmap_core::api::{embody_request, hand_info, model_info, ApiError, EmbodyRequest, ErrorBody, HandsResponse};
use handmap_core::embodiment::{EmbodimentConfig, RobotCommand};
use handmap_core::hand_model::HandShape;
use handmap_core::shipped;

/// Shared, read-only mapping context.
pub struct AppState {
    pub shape: HandShape,
    pub hands: BTreeMap<String, EmbodimentConfig>,
    /// Directory with the built explorer UI.
    pub static_dir: Option<PathBuf>,
}

impl AppState {
    /// The shipped hand model and robot hands, including the model clone.
    pub fn shipped(static_dir: Option<PathBuf>) -> Self {
        let mut hands = BTreeMap::new();
        for id in shipped::HAND_IDS.iter().copied().chain([shipped::CLONE_ID]) {
            hands.insert(id.to_string(), shipped::embodiment(id).expect("shipped hand"));
        }
        AppState {
            shape: shipped::hand_shape(),
            hands,
            static_dir,
        }
    }

    fn embody(&self, req: &EmbodyRequest, previous: Option<&RobotCommand>) -> Result<(serde_json::Value, RobotCommand), ApiError> {
        let config = self.hands.get(&req.hand).ok_or_else(|| ApiError::UnknownHand(req.hand.clone()))?;
        let (resp, cmd) = embody_request(req, &self.shape, config, previous)?;
        Ok((serde_json::to_value(resp).expect("response serializes"), cmd))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let mut app = Router::new()
        .route("/api/hands", get(hands))
        .route("/api/model", get(model))
        .route("/api/embody", post(embody))
        .route("/ws/embody", get(ws_embody));
    if let Some(dir) = &state.static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    app.with_state(state)
}

/// Runs the service on `listener` until the task is dropped.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

fn error(status: StatusCode, message: impl ToString) -> Response {
    (
        status,
        Json(ErrorBody {
            error: message.to_string(),
        }),
    )
        .into_response()
}

fn api_error(e: ApiError) -> Response {
    let status = match e {
        ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
        ApiError::UnknownHand(_) => StatusCode::NOT_FOUND,
        ApiError::Embodiment(_) => StatusCode::INTERNAL_SERVER_ERROR,
    };
    error(status, e)
}

async fn hands(State(state): State<Arc<AppState>>) -> Json<HandsResponse> {
    Json(HandsResponse {
        hands: state.hands.iter().map(|(id, cfg)| hand_info(id, cfg)).collect(),
    })
}

async fn model(State(state): State<Arc<AppState>>) -> impl IntoResponse {
    Json(model_info(&state.shape))
}

// The body is parsed by hand so every malformed payload maps to 400 with a
// readable message.
async fn embody(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: EmbodyRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed request: {e}")),
    };
    let result = tokio::task::spawn_blocking(move || state.embody(&req, None)).await;
    match result {
        Ok(Ok((resp, _))) => Json(resp).into_response(),
        Ok(Err(e)) => api_error(e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn ws_embody(State(state): State<Arc<AppState>>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| stream_session(socket, state))
}

/// One connection: every text message is a request, answered in order.
/// The last command per hand warm-starts the next request for that hand.
async fn stream_session(mut socket: WebSocket, state: Arc<AppState>) {
    let mut warm: HashMap<String, RobotCommand> = HashMap::new();
    while let Some(Ok(msg)) = socket.recv().await {
        let text = match msg {
            Message::Text(t) => t,
            Message::Close(_) => break,
            _ => continue,
        };
        let reply = match serde_json::from_str::<EmbodyRequest>(text.as_str()) {
            Err(e) => serde_json::to_string(&ErrorBody {
                error: format!("malformed request: {e}"),
            }),
            Ok(req) => {
                let previous = warm.get(&req.hand).cloned();
                let st = state.clone();
                let hand = req.hand.clone();
                match tokio::task::spawn_blocking(move || st.embody(&req, previous.as_ref())).await {
                    Ok(Ok((resp, cmd))) => {
                        warm.insert(hand, cmd);
                        serde_json::to_string(&resp)
                    }
                    Ok(Err(e)) => serde_json::to_string(&ErrorBody { error: e.to_string() }),
                    Err(e) => serde_json::to_string(&ErrorBody { error: e.to_string() }),
                }
            }
        }
        .expect("reply serializes");
        if socket.send(Message::Text(reply.into())).await.is_err() {
            break;
        }
    }
}
