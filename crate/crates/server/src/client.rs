use std::time::Duration;

use reqwest::blocking::Client;
use serde::de::DeserializeOwned;
use serde::Serialize;

use companion_core::search::Document;
use companion_core::service::{
    AnswerAck, AnswerRequest, ClickRequest, ClickResponse, CreateSessionRequest, QueryRequest,
    QueryResponse, ServiceError, SessionCreated, TimedRequest, TipInteractionRequest, TipsResponse,
};
use companion_core::sim::StudyTarget;
use companion_core::SessionId;

use crate::ErrorBody;

/// Blocking HTTP client for the session endpoints.
#[derive(Debug, Clone)]
pub struct HttpTarget {
    base: String,
    client: Client,
}

fn transport(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Transport(e.to_string())
}

impl HttpTarget {
    pub fn new(base_url: impl Into<String>) -> Result<Self, ServiceError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(transport)?;
        Ok(Self {
            base: base_url.into().trim_end_matches('/').to_string(),
            client,
        })
    }

    fn decode<T: DeserializeOwned>(resp: reqwest::blocking::Response) -> Result<T, ServiceError> {
        let status = resp.status();
        let bytes = resp.bytes().map_err(transport)?;
        if status.is_success() {
            return serde_json::from_slice(&bytes).map_err(transport);
        }
        match serde_json::from_slice::<ErrorBody>(&bytes) {
            Ok(ErrorBody {
                detail: Some(e), ..
            }) => Err(e),
            Ok(body) => Err(ServiceError::Transport(format!(
                "{status}: {}: {}",
                body.error, body.message
            ))),
            Err(_) => Err(ServiceError::Transport(format!(
                "{status}: {}",
                String::from_utf8_lossy(&bytes)
            ))),
        }
    }

    fn post<B: Serialize, T: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<T, ServiceError> {
        let resp = self
            .client
            .post(format!("{}{path}", self.base))
            .json(body)
            .send()
            .map_err(transport)?;
        Self::decode(resp)
    }

    fn session_post<B: Serialize, T: DeserializeOwned>(
        &self,
        id: &SessionId,
        action: &str,
        body: &B,
    ) -> Result<T, ServiceError> {
        self.post(&format!("/session/{id}/{action}"), body)
    }

    pub fn get_document(&self, doc_id: &str) -> Result<Document, ServiceError> {
        let resp = self
            .client
            .get(format!("{}/doc/{doc_id}", self.base))
            .send()
            .map_err(transport)?;
        Self::decode(resp)
    }
}

impl StudyTarget for HttpTarget {
    fn create_session(&self, req: CreateSessionRequest) -> Result<SessionCreated, ServiceError> {
        self.post("/session", &req)
    }
    fn submit_query(
        &self,
        id: &SessionId,
        req: QueryRequest,
    ) -> Result<QueryResponse, ServiceError> {
        self.session_post(id, "query", &req)
    }
    fn click_result(
        &self,
        id: &SessionId,
        req: ClickRequest,
    ) -> Result<ClickResponse, ServiceError> {
        self.session_post(id, "click", &req)
    }
    fn return_to_serp(
        &self,
        id: &SessionId,
        req: TimedRequest,
    ) -> Result<TipsResponse, ServiceError> {
        self.session_post(id, "return", &req)
    }
    fn heartbeat(&self, id: &SessionId, req: TimedRequest) -> Result<TipsResponse, ServiceError> {
        self.session_post(id, "heartbeat", &req)
    }
    fn tip_interaction(
        &self,
        id: &SessionId,
        req: TipInteractionRequest,
    ) -> Result<TipsResponse, ServiceError> {
        self.session_post(id, "tip", &req)
    }
    fn submit_answer(&self, id: &SessionId, req: AnswerRequest) -> Result<AnswerAck, ServiceError> {
        self.session_post(id, "answer", &req)
    }
}
