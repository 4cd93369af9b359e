use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::Error;

/// Training strategy: who talks to whom and in which order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Markov-switching subsets, local step then mixing.
    Dms,
    /// Same graphs as `Dms` with mixing before the local step.
    Ctl,
    /// Star topology with a central averaging server.
    FedAvg,
    /// Static ring.
    Dring,
    /// Static complete graph.
    Dfc,
    /// Pooled data, single model.
    Centralized,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Dms,
        Strategy::Ctl,
        Strategy::FedAvg,
        Strategy::Dring,
        Strategy::Dfc,
        Strategy::Centralized,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Dms => "dms",
            Strategy::Ctl => "ctl",
            Strategy::FedAvg => "fed_avg",
            Strategy::Dring => "dring",
            Strategy::Dfc => "dfc",
            Strategy::Centralized => "centralized",
        }
    }

    /// Peer-to-peer strategies without a server.
    pub fn is_decentralized(self) -> bool {
        matches!(
            self,
            Strategy::Dms | Strategy::Ctl | Strategy::Dring | Strategy::Dfc
        )
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        match key.as_str() {
            "dms" => Ok(Strategy::Dms),
            "ctl" => Ok(Strategy::Ctl),
            "fed_avg" | "fedavg" => Ok(Strategy::FedAvg),
            "dring" | "ring" => Ok(Strategy::Dring),
            "dfc" | "complete" => Ok(Strategy::Dfc),
            "centralized" | "central" => Ok(Strategy::Centralized),
            _ => Err(Error::Config(format!("unknown strategy {s:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(json, format!("\"{}\"", s.name()));
        }
        assert_eq!("FedAvg".parse::<Strategy>().unwrap(), Strategy::FedAvg);
        assert!("gossip".parse::<Strategy>().is_err());
    }
}
