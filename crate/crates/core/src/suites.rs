//! Cipher-suite catalog and the crypto-provider seam.
//!
//! Suites carry only wire sizes and a compute-cost model. No real
//! cryptography runs here: the [`MockProvider`] returns deterministic
//! opaque blobs of the declared sizes so the simulator measures protocol
//! and network behavior.

use std::collections::HashSet;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Record framing added to each hello message (handshake header, random,
/// session id, cipher suites, extensions).
pub const FIXED_HELLO_OVERHEAD: u64 = 256;
/// Finished message plus record framing.
pub const FIXED_FINISHED_BYTES: u64 = 52;
/// Non-cryptographic content of the single self-signed certificate.
pub const CERT_OVERHEAD_BYTES: u64 = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KemParams {
    pub name: String,
    pub client_share_bytes: u64,
    pub server_share_bytes: u64,
    pub shared_secret_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigParams {
    pub name: String,
    pub public_key_bytes: u64,
    pub signature_bytes: u64,
}

/// Seconds charged to the simulation clock per primitive call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub keygen_s: f64,
    pub encap_s: f64,
    pub decap_s: f64,
    pub sign_s: f64,
    pub verify_s: f64,
}

impl CostModel {
    pub fn cost_of(&self, kind: OpKind) -> f64 {
        match kind {
            OpKind::Keygen => self.keygen_s,
            OpKind::Encap => self.encap_s,
            OpKind::Decap => self.decap_s,
            OpKind::Sign => self.sign_s,
            OpKind::Verify => self.verify_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CryptoSuite {
    pub name: String,
    pub kem: KemParams,
    pub sig: SigParams,
    pub cost: CostModel,
    pub cert_overhead_bytes: u64,
}

impl CryptoSuite {
    pub fn validate(&self) -> Result<()> {
        let fail = |what: &str| Err(Error::Config(format!("suite {:?}: {what}", self.name)));
        if self.name.is_empty() || self.kem.name.is_empty() || self.sig.name.is_empty() {
            return fail("names must be non-empty");
        }
        if !crate::is_identifier(&self.name) {
            return fail("name must contain only [A-Za-z0-9_.-]");
        }
        if self.kem.client_share_bytes == 0
            || self.kem.server_share_bytes == 0
            || self.kem.shared_secret_bytes == 0
        {
            return fail("KEM byte counts must be > 0");
        }
        if self.sig.public_key_bytes == 0 || self.sig.signature_bytes == 0 {
            return fail("signature byte counts must be > 0");
        }
        let c = &self.cost;
        for (field, v) in [
            ("keygen_s", c.keygen_s),
            ("encap_s", c.encap_s),
            ("decap_s", c.decap_s),
            ("sign_s", c.sign_s),
            ("verify_s", c.verify_s),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return fail(&format!("{field} must be a finite value >= 0, got {v}"));
            }
        }
        Ok(())
    }

    pub fn flight_sizes(&self) -> FlightSizes {
        self.flight_sizes_with(&Framing::default())
    }

    pub fn flight_sizes_with(&self, framing: &Framing) -> FlightSizes {
        let certificate = self.cert_overhead_bytes + self.sig.public_key_bytes + self.sig.signature_bytes;
        FlightSizes {
            client_hello: FlightItem::new(&[
                ("hello_overhead", framing.hello_overhead),
                ("key_share", self.kem.client_share_bytes),
            ]),
            server_flight: FlightItem::new(&[
                ("hello_overhead", framing.hello_overhead),
                ("key_share", self.kem.server_share_bytes),
                ("certificate", certificate),
                ("certificate_verify", self.sig.signature_bytes),
                ("finished", framing.finished_bytes),
            ]),
            client_finished: FlightItem::new(&[("finished", framing.finished_bytes)]),
        }
    }
}

/// Fixed record-framing constants used when sizing flights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Framing {
    pub hello_overhead: u64,
    pub finished_bytes: u64,
}

impl Default for Framing {
    fn default() -> Self {
        Framing {
            hello_overhead: FIXED_HELLO_OVERHEAD,
            finished_bytes: FIXED_FINISHED_BYTES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlightItem {
    pub components: Vec<(&'static str, u64)>,
}

impl FlightItem {
    fn new(parts: &[(&'static str, u64)]) -> Self {
        FlightItem {
            components: parts.to_vec(),
        }
    }

    pub fn total(&self) -> u64 {
        self.components.iter().map(|(_, b)| b).sum()
    }

    pub fn component(&self, name: &str) -> Option<u64> {
        self.components.iter().find(|(n, _)| *n == name).map(|(_, b)| *b)
    }
}

/// Byte sizes of the three handshake flights, itemized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlightSizes {
    pub client_hello: FlightItem,
    pub server_flight: FlightItem,
    pub client_finished: FlightItem,
}

impl FlightSizes {
    pub fn total(&self) -> u64 {
        self.client_hello.total() + self.server_flight.total() + self.client_finished.total()
    }
}

// Classical: RFC 7748 X25519 (32-byte shares, 32-byte secret) and
// RFC 8032 Ed25519 (32-byte public key, 64-byte signature).
fn x25519() -> KemParams {
    KemParams {
        name: "x25519".into(),
        client_share_bytes: 32,
        server_share_bytes: 32,
        shared_secret_bytes: 32,
    }
}

// Hybrid p384_kyber768, shares concatenated:
//   P-384 uncompressed point = 1 + 2 * 48 = 97 bytes, ECDH secret 48 bytes.
//   Kyber768 round 3: public key 1184, ciphertext 1088, shared secret 32.
//   (ML-KEM-768 in FIPS 203 keeps the same sizes.)
fn p384_kyber768() -> KemParams {
    KemParams {
        name: "p384_kyber768".into(),
        client_share_bytes: 97 + 1184,
        server_share_bytes: 97 + 1088,
        shared_secret_bytes: 48 + 32,
    }
}

fn suite(name: &str, kem: KemParams, sig: SigParams) -> CryptoSuite {
    CryptoSuite {
        name: name.into(),
        kem,
        sig,
        cost: CostModel::default(),
        cert_overhead_bytes: CERT_OVERHEAD_BYTES,
    }
}

/// The four suites under test, in canonical order.
pub fn builtin_catalog() -> Vec<CryptoSuite> {
    vec![
        suite(
            "classical",
            x25519(),
            SigParams {
                name: "ed25519".into(),
                public_key_bytes: 32,
                signature_bytes: 64,
            },
        ),
        // Dilithium3, round 3: pk 1952, sig 3293.
        // FIPS 204 ML-DSA-65 differs: pk 1952, sig 3309.
        suite(
            "kyber_dilithium",
            p384_kyber768(),
            SigParams {
                name: "dilithium3".into(),
                public_key_bytes: 1952,
                signature_bytes: 3293,
            },
        ),
        // Falcon-512: pk 897, fixed padded signature 666 (variable-length
        // encoding averages ~655).
        suite(
            "kyber_falcon",
            p384_kyber768(),
            SigParams {
                name: "falcon512".into(),
                public_key_bytes: 897,
                signature_bytes: 666,
            },
        ),
        // SPHINCS+-SHA2-128f-simple: pk 32, sig 17088 (same as SLH-DSA-SHA2-128f).
        suite(
            "kyber_sphincs",
            p384_kyber768(),
            SigParams {
                name: "sphincssha2128fsimple".into(),
                public_key_bytes: 32,
                signature_bytes: 17088,
            },
        ),
    ]
}

/// Validated, name-unique collection of suites.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    suites: Vec<CryptoSuite>,
}

impl Catalog {
    pub fn new(suites: Vec<CryptoSuite>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &suites {
            s.validate()?;
            if !seen.insert(s.name.as_str()) {
                return Err(Error::Config(format!("duplicate suite name {:?}", s.name)));
            }
        }
        Ok(Catalog { suites })
    }

    pub fn builtin() -> Self {
        Catalog::new(builtin_catalog()).expect("builtin catalog is valid")
    }

    pub fn get(&self, name: &str) -> Option<&CryptoSuite> {
        self.suites.iter().find(|s| s.name == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.suites.iter().map(|s| s.name.clone()).collect()
    }

    pub fn suites(&self) -> &[CryptoSuite] {
        &self.suites
    }

    /// Applies a suite override file (TOML, see [`SuiteOverrides`]).
    pub fn apply_overrides_file(&self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let overrides: SuiteOverrides = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        self.apply_overrides(&overrides)
    }

    pub fn apply_overrides(&self, overrides: &SuiteOverrides) -> Result<Self> {
        let mut suites = self.suites.clone();
        for o in &overrides.suite {
            let s = suites.iter_mut().find(|s| s.name == o.name).ok_or_else(|| {
                Error::Config(format!(
                    "override names unknown suite {:?} (known: {})",
                    o.name,
                    self.names().join(", ")
                ))
            })?;
            o.apply(s);
        }
        Catalog::new(suites)
    }
}

/// Suite override file. Each `[[suite]]` table names a catalog suite and
/// any subset of the overridable fields; the rest inherit catalog values.
///
/// ```toml
/// [[suite]]
/// name = "kyber_dilithium"
/// signature_bytes = 3309
/// sign_s = 0.00025
/// ```
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteOverrides {
    #[serde(default)]
    pub suite: Vec<SuiteOverride>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteOverride {
    pub name: String,
    pub client_share_bytes: Option<u64>,
    pub server_share_bytes: Option<u64>,
    pub public_key_bytes: Option<u64>,
    pub signature_bytes: Option<u64>,
    pub cert_overhead_bytes: Option<u64>,
    pub keygen_s: Option<f64>,
    pub encap_s: Option<f64>,
    pub decap_s: Option<f64>,
    pub sign_s: Option<f64>,
    pub verify_s: Option<f64>,
}

impl SuiteOverride {
    fn apply(&self, s: &mut CryptoSuite) {
        fn set<T: Copy>(dst: &mut T, src: Option<T>) {
            if let Some(v) = src {
                *dst = v;
            }
        }
        set(&mut s.kem.client_share_bytes, self.client_share_bytes);
        set(&mut s.kem.server_share_bytes, self.server_share_bytes);
        set(&mut s.sig.public_key_bytes, self.public_key_bytes);
        set(&mut s.sig.signature_bytes, self.signature_bytes);
        set(&mut s.cert_overhead_bytes, self.cert_overhead_bytes);
        set(&mut s.cost.keygen_s, self.keygen_s);
        set(&mut s.cost.encap_s, self.encap_s);
        set(&mut s.cost.decap_s, self.decap_s);
        set(&mut s.cost.sign_s, self.sign_s);
        set(&mut s.cost.verify_s, self.verify_s);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Keygen,
    Encap,
    Decap,
    Sign,
    Verify,
}

impl OpKind {
    pub const ALL: [OpKind; 5] = [
        OpKind::Keygen,
        OpKind::Encap,
        OpKind::Decap,
        OpKind::Sign,
        OpKind::Verify,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Keygen => "keygen",
            OpKind::Encap => "encap",
            OpKind::Decap => "decap",
            OpKind::Sign => "sign",
            OpKind::Verify => "verify",
        }
    }
}

impl std::str::FromStr for OpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OpKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown crypto op {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpOutput {
    pub blob: Vec<u8>,
    pub elapsed_s: f64,
}

/// Stand-in for the primitives of a suite.
pub trait CryptoProvider: Send + Sync {
    fn perform(&self, kind: OpKind, suite: &CryptoSuite, seed: u64) -> OpOutput;

    fn verify(&self, suite: &CryptoSuite, seed: u64, signature: &[u8]) -> bool;
}

/// Deterministic provider: blob bytes are a pure function of
/// `(kind, suite.name, seed)` and blob lengths follow the suite parameters.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockProvider;

impl MockProvider {
    fn blob_len(kind: OpKind, suite: &CryptoSuite) -> u64 {
        match kind {
            OpKind::Keygen => suite.kem.client_share_bytes,
            OpKind::Encap => suite.kem.server_share_bytes,
            OpKind::Decap => suite.kem.shared_secret_bytes,
            OpKind::Sign => suite.sig.signature_bytes,
            // One accept/reject byte.
            OpKind::Verify => 1,
        }
    }

    fn blob(kind: OpKind, suite: &CryptoSuite, seed: u64) -> Vec<u8> {
        let mut h = Sha256::new();
        h.update(kind.as_str().as_bytes());
        h.update([0]);
        h.update(suite.name.as_bytes());
        h.update([0]);
        h.update(seed.to_le_bytes());
        let key: [u8; 32] = h.finalize().into();
        let mut out = vec![0u8; Self::blob_len(kind, suite) as usize];
        ChaCha8Rng::from_seed(key).fill_bytes(&mut out);
        out
    }
}

impl CryptoProvider for MockProvider {
    fn perform(&self, kind: OpKind, suite: &CryptoSuite, seed: u64) -> OpOutput {
        OpOutput {
            blob: Self::blob(kind, suite, seed),
            elapsed_s: suite.cost.cost_of(kind),
        }
    }

    fn verify(&self, suite: &CryptoSuite, seed: u64, signature: &[u8]) -> bool {
        signature == Self::blob(OpKind::Sign, suite, seed).as_slice()
    }
}

/// String-keyed entry point for the mock provider. Use
/// [`CryptoProvider::verify`] to check a signature blob.
pub fn mock_provider_op(kind: &str, suite: &CryptoSuite, seed: u64) -> Result<OpOutput> {
    let kind: OpKind = kind.parse()?;
    Ok(MockProvider.perform(kind, suite, seed))
}
