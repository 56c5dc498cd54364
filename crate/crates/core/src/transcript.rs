//! Newline-delimited JSON dump of matched rounds.
//!
//! One object per line:
//!
//! ```text
//! {"basis":"Z","j":0,"rounds":[7,2],"dealer_bits":[1,0],"player_bits":[1,0],
//!  "correlated":{"dealer_key_bit":1,"broadcast_bits":[1],"player_key_bits":[1,1]}}
//! ```
//!
//! Bits are written as `0`/`1`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::sim::{apply_xor, Basis, CorrelatedRound, MatchedRound};

mod bit {
    use super::*;

    pub fn serialize<S: Serializer>(b: &bool, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(serde::de::Error::custom(format!(
                "bit must be 0 or 1, got {v}"
            ))),
        }
    }
}

mod bits {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[bool], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|&b| u8::from(b)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<bool>, D::Error> {
        Vec::<u8>::deserialize(d)?
            .into_iter()
            .map(|v| match v {
                0 => Ok(false),
                1 => Ok(true),
                v => Err(serde::de::Error::custom(format!(
                    "bit must be 0 or 1, got {v}"
                ))),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelatedBits {
    #[serde(with = "bit")]
    pub dealer_key_bit: bool,
    #[serde(with = "bits")]
    pub broadcast_bits: Vec<bool>,
    #[serde(with = "bits")]
    pub player_key_bits: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptRecord {
    pub basis: Basis,
    pub j: u64,
    pub rounds: Vec<u64>,
    #[serde(with = "bits")]
    pub dealer_bits: Vec<bool>,
    #[serde(with = "bits")]
    pub player_bits: Vec<bool>,
    pub correlated: CorrelatedBits,
}

impl TranscriptRecord {
    pub fn new(matched: &MatchedRound, correlated: &CorrelatedRound) -> Self {
        TranscriptRecord {
            basis: matched.basis,
            j: matched.j,
            rounds: matched.rounds.clone(),
            dealer_bits: matched.dealer_bits.clone(),
            player_bits: matched.player_bits.clone(),
            correlated: CorrelatedBits {
                dealer_key_bit: correlated.dealer_key_bit,
                broadcast_bits: correlated.broadcast_bits.clone(),
                player_key_bits: correlated.player_key_bits.clone(),
            },
        }
    }

    pub fn matched(&self) -> MatchedRound {
        MatchedRound {
            basis: self.basis,
            j: self.j,
            rounds: self.rounds.clone(),
            dealer_bits: self.dealer_bits.clone(),
            player_bits: self.player_bits.clone(),
        }
    }

    /// Checks that the link counts agree and that the correlated bits are the
    /// XOR post-processing of the raw bits.
    pub fn validate(&self) -> Result<()> {
        let links = self.dealer_bits.len();
        if links == 0 {
            return Err(Error::invalid("dealer_bits", "record has no links"));
        }
        if self.player_bits.len() != links || self.rounds.len() != links {
            return Err(Error::invalid(
                "player_bits",
                "rounds, dealer_bits and player_bits must have one entry per link",
            ));
        }
        let expected = apply_xor(&self.matched());
        let c = &self.correlated;
        if c.dealer_key_bit != expected.dealer_key_bit
            || c.broadcast_bits != expected.broadcast_bits
            || c.player_key_bits != expected.player_key_bits
        {
            return Err(Error::invalid(
                "correlated",
                "correlated bits are not the XOR of the raw bits",
            ));
        }
        Ok(())
    }
}

/// Parses and validates one transcript line.
pub fn parse_record(line: &[u8]) -> Result<TranscriptRecord> {
    let record: TranscriptRecord = serde_json::from_slice(line)?;
    record.validate()?;
    Ok(record)
}

pub fn write_transcript<W: Write>(
    mut out: W,
    matched: &[MatchedRound],
    correlated: &[CorrelatedRound],
) -> Result<()> {
    if matched.len() != correlated.len() {
        return Err(Error::invalid(
            "correlated",
            "one correlated round is required per matched round",
        ));
    }
    for (m, c) in matched.iter().zip(correlated) {
        serde_json::to_writer(&mut out, &TranscriptRecord::new(m, c))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_transcript<R: BufRead>(input: R) -> Result<Vec<TranscriptRecord>> {
    input
        .split(b'\n')
        .filter(|line| !matches!(line, Ok(l) if l.iter().all(u8::is_ascii_whitespace)))
        .map(|line| parse_record(&line?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn round(basis: Basis, a: Vec<bool>, b: Vec<bool>) -> MatchedRound {
        MatchedRound {
            basis,
            j: 3,
            rounds: (0..a.len() as u64).collect(),
            dealer_bits: a,
            player_bits: b,
        }
    }

    #[test]
    fn line_format() {
        let m = round(Basis::Z, vec![true, false], vec![true, false]);
        let c = apply_xor(&m);
        let mut buf = Vec::new();
        write_transcript(&mut buf, &[m], &[c]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"basis\":\"Z\",\"j\":3,\"rounds\":[0,1],\"dealer_bits\":[1,0],\"player_bits\":[1,0],\
             \"correlated\":{\"dealer_key_bit\":1,\"broadcast_bits\":[1],\"player_key_bits\":[1,1]}}\n"
        );
    }

    #[test]
    fn rejects_bad_records() {
        let bad_bit = br#"{"basis":"X","j":0,"rounds":[0],"dealer_bits":[2],"player_bits":[0],
            "correlated":{"dealer_key_bit":0,"broadcast_bits":[],"player_key_bits":[0]}}"#;
        assert!(parse_record(bad_bit).is_err());

        let inconsistent =
            br#"{"basis":"X","j":0,"rounds":[0,0],"dealer_bits":[1,0],"player_bits":[1,0],
            "correlated":{"dealer_key_bit":0,"broadcast_bits":[],"player_key_bits":[1,0]}}"#;
        assert!(matches!(
            parse_record(inconsistent),
            Err(Error::Invalid { .. })
        ));

        let ragged = br#"{"basis":"Z","j":0,"rounds":[0],"dealer_bits":[1,0],"player_bits":[1],
            "correlated":{"dealer_key_bit":1,"broadcast_bits":[1],"player_key_bits":[1]}}"#;
        assert!(parse_record(ragged).is_err());

        assert!(parse_record(b"").is_err());
        assert!(parse_record(br#"{"basis":"Y"}"#).is_err());
    }

    proptest! {
        #[test]
        fn write_then_read(
            rows in prop::collection::vec(
                (any::<bool>(), prop::collection::vec((any::<bool>(), any::<bool>()), 1..6)),
                0..20,
            )
        ) {
            let links = rows.first().map_or(1, |r| r.1.len());
            let matched: Vec<MatchedRound> = rows
                .into_iter()
                .map(|(z, mut bits)| {
                    bits.resize(links, (false, false));
                    let basis = if z { Basis::Z } else { Basis::X };
                    round(basis, bits.iter().map(|b| b.0).collect(), bits.iter().map(|b| b.1).collect())
                })
                .collect();
            let correlated: Vec<_> = matched.iter().map(apply_xor).collect();
            let mut buf = Vec::new();
            write_transcript(&mut buf, &matched, &correlated).unwrap();
            let back = read_transcript(buf.as_slice()).unwrap();
            let back_matched: Vec<_> = back.iter().map(TranscriptRecord::matched).collect();
            prop_assert_eq!(back_matched, matched);
        }
    }
}
