use std::fmt;
use std::ops::AddAssign;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};

use super::codec::FixedPointCodec;
use super::field::{FieldElement, PrimeField};
use super::shamir::{reconstruct, share, SecretShare, SharingParams};
use crate::numerics::WeightVector;
use crate::{Error, Result, Scalar};

/// Fewest contributors a secure sum accepts; with two the sum reveals the
/// other party's input.
pub const MIN_CONTRIBUTORS: usize = 3;

/// Addressable participant on the simulated channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Endpoint {
    Agent(usize),
    /// External computation server, not a training agent.
    Party(usize),
    Server,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Agent(i) => write!(f, "agent:{i}"),
            Endpoint::Party(i) => write!(f, "party:{i}"),
            Endpoint::Server => f.write_str("server"),
        }
    }
}

impl Serialize for Endpoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Who holds shares, who contributes inputs and who learns the sum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionDescriptor {
    pub parties: Vec<Endpoint>,
    /// Agent ids, in the order their inputs are supplied.
    pub contributors: Vec<usize>,
    pub recipients: Vec<Endpoint>,
}

impl SessionDescriptor {
    /// `parties` external servers summing for a central server.
    pub fn external(parties: usize, contributors: Vec<usize>) -> Self {
        Self {
            parties: (0..parties).map(Endpoint::Party).collect(),
            contributors,
            recipients: vec![Endpoint::Server],
        }
    }

    /// Agents sharing among themselves.
    pub fn among_agents(members: Vec<usize>, recipients: Vec<usize>) -> Self {
        Self {
            parties: members.iter().copied().map(Endpoint::Agent).collect(),
            contributors: members,
            recipients: recipients.into_iter().map(Endpoint::Agent).collect(),
        }
    }

    pub fn party_count(&self) -> usize {
        self.parties.len()
    }

    pub fn degree(&self) -> usize {
        self.parties.len().saturating_sub(1) / 2
    }

    pub fn params(&self, field: PrimeField) -> Result<SharingParams> {
        SharingParams::for_parties(self.parties.len(), field)
    }

    /// `contributors·ν + ν·recipients`.
    pub fn expected_messages(&self) -> usize {
        self.parties.len() * (self.contributors.len() + self.recipients.len())
    }
}

fn hex_payload<S: Serializer>(
    payload: &[FieldElement],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(payload.iter().map(|e| format!("{:x}", e.value())))
}

/// One logical message on the channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TranscriptRecord {
    pub round: usize,
    pub from: Endpoint,
    pub to: Endpoint,
    pub payload_bytes: usize,
    #[serde(serialize_with = "hex_payload", skip_serializing_if = "Vec::is_empty")]
    pub payload: Vec<FieldElement>,
}

/// Message log. Payloads are kept only when asked for.
#[derive(Debug, Clone, Default)]
pub struct Transcript {
    records: Vec<TranscriptRecord>,
    keep_payloads: bool,
}

impl Transcript {
    pub fn new(keep_payloads: bool) -> Self {
        Self {
            records: Vec::new(),
            keep_payloads,
        }
    }

    pub fn records(&self) -> &[TranscriptRecord] {
        &self.records
    }

    pub fn keeps_payloads(&self) -> bool {
        self.keep_payloads
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn clear(&mut self) {
        self.records.clear();
    }

    fn push(
        &mut self,
        round: usize,
        from: Endpoint,
        to: Endpoint,
        bytes: usize,
        payload: &[FieldElement],
    ) {
        let payload = if self.keep_payloads {
            payload.to_vec()
        } else {
            Vec::new()
        };
        self.records.push(TranscriptRecord {
            round,
            from,
            to,
            payload_bytes: bytes,
            payload,
        });
    }

    /// Whether any recorded payload element equals `e`.
    pub fn contains_element(&self, e: FieldElement) -> bool {
        self.records.iter().any(|r| r.payload.contains(&e))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TranscriptStats {
    pub messages: usize,
    pub payload_bytes: usize,
    pub share_messages: usize,
    pub reconstruction_messages: usize,
}

impl AddAssign for TranscriptStats {
    fn add_assign(&mut self, o: Self) {
        self.messages += o.messages;
        self.payload_bytes += o.payload_bytes;
        self.share_messages += o.share_messages;
        self.reconstruction_messages += o.reconstruction_messages;
    }
}

fn run_protocol<T: Scalar, R: Rng + ?Sized>(
    round: usize,
    session: &SessionDescriptor,
    params: &SharingParams,
    codec: &FixedPointCodec,
    inputs: &[&WeightVector<T>],
    rng: &mut R,
    transcript: &mut Transcript,
    corrupt_party: Option<usize>,
) -> Result<(WeightVector<T>, TranscriptStats)> {
    if inputs.len() < MIN_CONTRIBUTORS {
        return Err(Error::TooFewContributors(inputs.len()));
    }
    if inputs.len() != session.contributors.len() {
        return Err(Error::DimensionMismatch {
            expected: session.contributors.len(),
            got: inputs.len(),
        });
    }
    if params.parties() != session.party_count() {
        return Err(Error::DimensionMismatch {
            expected: session.party_count(),
            got: params.parties(),
        });
    }
    let dim = inputs[0].dim();
    for x in inputs {
        x.check_dim(inputs[0])?;
    }
    let field = *params.field();
    if !codec.fits(inputs.len(), &field) {
        return Err(Error::RangeOverflow {
            value: codec.sum_bound(inputs.len()) as f64,
            bits: field.bits(),
        });
    }
    let nu = params.parties();
    let bytes = dim * field.element_bytes();
    let mut stats = TranscriptStats::default();

    // distribution: one message per (contributor, party) carrying every coordinate
    let mut held = vec![vec![field.zero(); dim]; nu];
    let mut outgoing = vec![Vec::with_capacity(dim); nu];
    for (&agent, x) in session.contributors.iter().zip(inputs) {
        for v in &mut outgoing {
            v.clear();
        }
        for (k, e) in codec
            .encode_slice(x.as_slice(), &field)?
            .into_iter()
            .enumerate()
        {
            for s in share(e, params, rng) {
                let j = s.index - 1;
                held[j][k] = field.add(held[j][k], s.value);
                outgoing[j].push(s.value);
            }
        }
        for (j, &party) in session.parties.iter().enumerate() {
            transcript.push(round, Endpoint::Agent(agent), party, bytes, &outgoing[j]);
            stats.share_messages += 1;
        }
    }

    if let Some(j) = corrupt_party {
        let j = j % nu;
        if dim > 0 {
            held[j][0] = field.add(held[j][0], field.one());
        }
    }

    // local sums go out to every recipient
    for (j, &party) in session.parties.iter().enumerate() {
        for &to in &session.recipients {
            transcript.push(round, party, to, bytes, &held[j]);
            stats.reconstruction_messages += 1;
        }
    }
    stats.messages = stats.share_messages + stats.reconstruction_messages;
    stats.payload_bytes = stats.messages * bytes;

    let mut sum = Vec::with_capacity(dim);
    for k in 0..dim {
        let shares: Vec<SecretShare> = (0..nu)
            .map(|j| SecretShare {
                index: j + 1,
                value: held[j][k],
            })
            .collect();
        sum.push(codec.decode::<T>(reconstruct(&shares, params)?, &field));
    }
    Ok((WeightVector::from(sum), stats))
}

/// Sum of `inputs` computed by `params.parties()` external servers and
/// revealed to a single server. Returns the decoded coordinate-wise sum.
pub fn secure_aggregate<T: Scalar, R: Rng + ?Sized>(
    inputs: &[WeightVector<T>],
    params: &SharingParams,
    codec: &FixedPointCodec,
    rng: &mut R,
) -> Result<(WeightVector<T>, TranscriptStats)> {
    let session = SessionDescriptor::external(params.parties(), (0..inputs.len()).collect());
    let refs: Vec<&WeightVector<T>> = inputs.iter().collect();
    let mut transcript = Transcript::new(false);
    run_protocol(
        0,
        &session,
        params,
        codec,
        &refs,
        rng,
        &mut transcript,
        None,
    )
}

/// Stateful protocol driver holding the field, codec, share randomness and
/// transcript across rounds.
#[derive(Debug, Clone)]
pub struct SecureAggregator {
    field: PrimeField,
    codec: FixedPointCodec,
    rng: ChaCha8Rng,
    transcript: Transcript,
    stats: TranscriptStats,
    corrupt_next: Option<usize>,
}

impl SecureAggregator {
    pub fn new(field: PrimeField, codec: FixedPointCodec, seed: u64, keep_payloads: bool) -> Self {
        Self {
            field,
            codec,
            rng: ChaCha8Rng::seed_from_u64(seed),
            transcript: Transcript::new(keep_payloads),
            stats: TranscriptStats::default(),
            corrupt_next: None,
        }
    }

    pub fn field(&self) -> &PrimeField {
        &self.field
    }

    pub fn codec(&self) -> &FixedPointCodec {
        &self.codec
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn take_transcript(&mut self) -> Transcript {
        let keep = self.transcript.keeps_payloads();
        std::mem::replace(&mut self.transcript, Transcript::new(keep))
    }

    /// Running totals over all sessions.
    pub fn stats(&self) -> TranscriptStats {
        self.stats
    }

    /// Fault injection: the next session has party `position` add one to its
    /// first local sum before reconstruction.
    pub fn corrupt_next_session(&mut self, position: usize) {
        self.corrupt_next = Some(position);
    }

    pub fn aggregate<T: Scalar>(
        &mut self,
        round: usize,
        session: &SessionDescriptor,
        inputs: &[&WeightVector<T>],
    ) -> Result<(WeightVector<T>, TranscriptStats)> {
        let params = session.params(self.field)?;
        let corrupt = self.corrupt_next.take();
        let out = run_protocol(
            round,
            session,
            &params,
            &self.codec,
            inputs,
            &mut self.rng,
            &mut self.transcript,
            corrupt,
        )?;
        self.stats += out.1;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wv(v: &[f64]) -> WeightVector<f64> {
        WeightVector::from(v.to_vec())
    }

    #[test]
    fn dyadic_example() {
        let params = SharingParams::for_parties(3, PrimeField::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let inputs = [wv(&[1.0]), wv(&[2.0]), wv(&[-0.5])];
        let (sum, stats) =
            secure_aggregate(&inputs, &params, &FixedPointCodec::default(), &mut rng).unwrap();
        assert_eq!(sum.as_slice(), &[2.5]);
        assert_eq!(stats.messages, 3 * 3 + 3);
        assert_eq!(stats.payload_bytes, 12 * 16);
    }

    #[test]
    fn zeros_sum_to_zero() {
        let params = SharingParams::for_parties(5, PrimeField::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inputs = vec![WeightVector::<f64>::zeros(4); 6];
        let (sum, _) =
            secure_aggregate(&inputs, &params, &FixedPointCodec::default(), &mut rng).unwrap();
        assert_eq!(sum.as_slice(), &[0.0; 4]);
    }

    #[test]
    fn thirty_random_dyadic_inputs_exact() {
        let params = SharingParams::for_parties(3, PrimeField::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inputs: Vec<WeightVector<f64>> = (0..30)
            .map(|_| {
                WeightVector::from(
                    (0..100)
                        .map(|_| rng.random_range(-1_000_000i64..1_000_000) as f64 / 65536.0)
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        let plain: Vec<f64> = (0..100)
            .map(|k| inputs.iter().map(|x| x[k]).sum())
            .collect();
        let (sum, _) =
            secure_aggregate(&inputs, &params, &FixedPointCodec::default(), &mut rng).unwrap();
        assert_eq!(sum.as_slice(), plain.as_slice());
    }

    #[test]
    fn non_dyadic_error_bounded() {
        let params = SharingParams::for_parties(4, PrimeField::default()).unwrap();
        let codec = FixedPointCodec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inputs: Vec<WeightVector<f64>> = (0..7)
            .map(|_| WeightVector::from(vec![rng.random_range(-3.0..3.0); 5]))
            .collect();
        let (sum, _) = secure_aggregate(&inputs, &params, &codec, &mut rng).unwrap();
        for k in 0..5 {
            let plain: f64 = inputs.iter().map(|x| x[k]).sum();
            assert!((sum[k] - plain).abs() <= 7.0 * codec.resolution() / 2.0);
        }
    }

    #[test]
    fn rejects_two_contributors_and_mismatched_dims() {
        let params = SharingParams::for_parties(3, PrimeField::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let codec = FixedPointCodec::default();
        assert!(matches!(
            secure_aggregate(&[wv(&[1.0]), wv(&[2.0])], &params, &codec, &mut rng),
            Err(Error::TooFewContributors(2))
        ));
        assert!(secure_aggregate(
            &[wv(&[1.0]), wv(&[2.0]), wv(&[1.0, 2.0])],
            &params,
            &codec,
            &mut rng
        )
        .is_err());
        assert!(matches!(
            secure_aggregate(
                &[wv(&[1e10]), wv(&[2.0]), wv(&[1.0])],
                &params,
                &codec,
                &mut rng
            ),
            Err(Error::RangeOverflow { .. })
        ));
    }

    #[test]
    fn small_field_overflow_refused_up_front() {
        let params = SharingParams::for_parties(3, PrimeField::new(97).unwrap()).unwrap();
        let codec = FixedPointCodec::new(2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = secure_aggregate(
            &[wv(&[1.0]), wv(&[1.0]), wv(&[1.0])],
            &params,
            &codec,
            &mut rng,
        );
        assert!(matches!(r, Err(Error::RangeOverflow { .. })));
    }

    #[test]
    fn aggregator_transcript_and_tamper_abort() {
        let mut agg =
            SecureAggregator::new(PrimeField::default(), FixedPointCodec::default(), 9, true);
        let session = SessionDescriptor::among_agents(vec![0, 1, 2, 3], vec![0, 1, 2, 3]);
        let xs = [
            wv(&[0.5, 1.0]),
            wv(&[0.25, -1.0]),
            wv(&[1.0, 3.0]),
            wv(&[2.0, 0.0]),
        ];
        let refs: Vec<&WeightVector<f64>> = xs.iter().collect();
        let (sum, stats) = agg.aggregate(7, &session, &refs).unwrap();
        assert_eq!(sum.as_slice(), &[3.75, 3.0]);
        assert_eq!(stats.messages, session.expected_messages());
        assert_eq!(agg.transcript().len(), 32);
        assert!(agg
            .transcript()
            .records()
            .iter()
            .all(|r| r.round == 7 && r.payload.len() == 2));
        for x in &xs {
            for &v in x.iter() {
                let e = agg.codec().encode(v, agg.field()).unwrap();
                assert!(!agg.transcript().contains_element(e));
            }
        }
        let line = serde_json::to_string(&agg.transcript().records()[0]).unwrap();
        assert!(line.contains("\"from\":\"agent:0\""));

        agg.corrupt_next_session(2);
        assert!(matches!(
            agg.aggregate(8, &session, &refs),
            Err(Error::Tampered { .. })
        ));
        // the hook is one-shot
        assert!(agg.aggregate(9, &session, &refs).is_ok());
    }
}
