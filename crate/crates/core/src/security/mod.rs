//! Keys, certificates, content encryption, trust schemas and chain
//! validation.

pub mod cert;
pub mod crypto;
pub mod keys;
pub mod schema;
pub mod store;
pub mod validator;
pub mod wot;

pub use cert::{issue_cert, self_sign, sign_data, verify_signature, CertError, Certificate};
pub use crypto::{
    decrypt_content, encrypt_content, unwrap_group_key, wrap_group_key, CryptoError, GroupKey,
};
pub use keys::{generate_keypair, Algorithm, KeyPair, PublicKey};
pub use schema::{
    check_policy, compile_schema, fig3_rules, workspace_rules, MembershipModel, PolicyViolation,
    SchemaError, TrustRule, TrustSchema,
};
pub use store::CertStore;
pub use validator::{verify_data, ValidationError, Validator, VerifyOutcome};
pub use wot::{wot_authenticate, DEFAULT_WOT_DEPTH};
