//! Request-signing hook.
//!
//! Real deployments plug provider-specific credential signing in here; the
//! engine itself only requires that a signer yields extra headers for a given
//! payload. The body is never modified.

use thiserror::Error;

#[derive(Debug, Error)]
#[error("signer failure: {0}")]
pub struct SignerError(pub String);

pub trait RequestSigner: Send + Sync {
    /// Returns the headers to add to the request for `body`.
    fn sign(&self, body: &[u8]) -> Result<Vec<(String, String)>, SignerError>;
}

/// Leaves requests untouched.
#[derive(Debug, Default, Clone, Copy)]
pub struct IdentitySigner;

impl RequestSigner for IdentitySigner {
    fn sign(&self, _body: &[u8]) -> Result<Vec<(String, String)>, SignerError> {
        Ok(Vec::new())
    }
}

/// Adds one fixed authorization header.
#[derive(Debug, Clone)]
pub struct StaticTokenSigner {
    pub header: String,
    pub value: String,
}

impl StaticTokenSigner {
    pub fn bearer(token: &str) -> Self {
        Self {
            header: "authorization".to_string(),
            value: format!("Bearer {token}"),
        }
    }
}

impl RequestSigner for StaticTokenSigner {
    fn sign(&self, _body: &[u8]) -> Result<Vec<(String, String)>, SignerError> {
        Ok(vec![(self.header.clone(), self.value.clone())])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_adds_nothing() {
        assert!(IdentitySigner.sign(b"payload").unwrap().is_empty());
    }

    #[test]
    fn static_token_adds_one_header() {
        let signer = StaticTokenSigner::bearer("abc");
        let headers = signer.sign(b"payload").unwrap();
        assert_eq!(
            headers,
            vec![("authorization".to_string(), "Bearer abc".to_string())]
        );
    }
}
