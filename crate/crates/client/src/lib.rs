//! Client for the handmap service: HTTP calls and the websocket stream.

use futures::{SinkExt, StreamExt};
use serde::de::DeserializeOwned;
use thiserror::Error;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use handmap_core::api::{EmbodyRequest, EmbodyResponse, ErrorBody, HandsResponse, ModelInfo};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("websocket: {0}")]
    Stream(#[from] tokio_tungstenite::tungstenite::Error),
    /// The service answered with an error body.
    #[error("service returned {status}: {message}")]
    Service { status: u16, message: String },
    #[error("unexpected reply: {0}")]
    Decode(String),
    #[error("stream closed")]
    Closed,
}

#[derive(Debug, Clone)]
pub struct HandmapClient {
    base: String,
    http: reqwest::Client,
}

impl HandmapClient {
    /// `base` like `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        HandmapClient {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, ClientError> {
        let status = resp.status();
        let bytes = resp.bytes().await?;
        if !status.is_success() {
            let message = serde_json::from_slice::<ErrorBody>(&bytes)
                .map(|b| b.error)
                .unwrap_or_else(|_| String::from_utf8_lossy(&bytes).into_owned());
            return Err(ClientError::Service {
                status: status.as_u16(),
                message,
            });
        }
        serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode(e.to_string()))
    }

    pub async fn hands(&self) -> Result<HandsResponse, ClientError> {
        Self::decode(self.http.get(format!("{}/api/hands", self.base)).send().await?).await
    }

    pub async fn model(&self) -> Result<ModelInfo, ClientError> {
        Self::decode(self.http.get(format!("{}/api/model", self.base)).send().await?).await
    }

    pub async fn embody(&self, req: &EmbodyRequest) -> Result<EmbodyResponse, ClientError> {
        let resp = self.http.post(format!("{}/api/embody", self.base)).json(req).send().await?;
        Self::decode(resp).await
    }

    /// Opens a websocket session; requests on it share a warm start.
    pub async fn stream(&self) -> Result<EmbodyStream, ClientError> {
        let url = format!("{}/ws/embody", self.base.replacen("http", "ws", 1));
        let (socket, _) = connect_async(url).await?;
        Ok(EmbodyStream { socket })
    }
}

pub struct EmbodyStream {
    socket: WebSocketStream<MaybeTlsStream<TcpStream>>,
}

impl EmbodyStream {
    /// Sends one request and waits for its reply.
    pub async fn embody(&mut self, req: &EmbodyRequest) -> Result<EmbodyResponse, ClientError> {
        let text = serde_json::to_string(req).map_err(|e| ClientError::Decode(e.to_string()))?;
        self.socket.send(Message::Text(text.into())).await?;
        loop {
            match self.socket.next().await {
                None => return Err(ClientError::Closed),
                Some(Err(e)) => return Err(e.into()),
                Some(Ok(Message::Text(t))) => {
                    let value: serde_json::Value =
                        serde_json::from_str(t.as_str()).map_err(|e| ClientError::Decode(e.to_string()))?;
                    if let Some(err) = value.get("error").and_then(|e| e.as_str()) {
                        return Err(ClientError::Service {
                            status: 400,
                            message: err.to_string(),
                        });
                    }
                    return serde_json::from_value(value).map_err(|e| ClientError::Decode(e.to_string()));
                }
                Some(Ok(Message::Close(_))) => return Err(ClientError::Closed),
                Some(Ok(_)) => continue,
            }
        }
    }

    pub async fn close(mut self) -> Result<(), ClientError> {
        self.socket.close(None).await?;
        Ok(())
    }
}
