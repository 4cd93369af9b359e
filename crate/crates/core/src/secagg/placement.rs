use std::collections::BTreeMap;

use super::protocol::{SessionDescriptor, MIN_CONTRIBUTORS};
use crate::topology::Graph;
use crate::{Error, Result, Scalar, Strategy};

/// External servers used for the star topology.
pub const EXTERNAL_PARTIES: usize = 3;

/// Secure sessions needed for one round on `graph`.
///
/// With a server, every client contributes to one session run by
/// [`EXTERNAL_PARTIES`] external servers; `graph` is the star whose hub is
/// the last vertex. Without one, each distinct closed neighbourhood of size
/// at least two forms a session among its own members, and every agent
/// with that neighbourhood receives the sum. Isolated agents need none.
pub fn party_placement<T: Scalar>(
    strategy: Strategy,
    graph: &Graph<T>,
) -> Result<Vec<SessionDescriptor>> {
    match strategy {
        Strategy::Centralized => Err(Error::invalid("centralized training has no aggregation")),
        Strategy::FedAvg => {
            let clients = graph.agent_count().saturating_sub(1);
            if clients < MIN_CONTRIBUTORS {
                return Err(Error::TooFewContributors(clients));
            }
            Ok(vec![SessionDescriptor::external(
                EXTERNAL_PARTIES,
                (0..clients).collect(),
            )])
        }
        _ => {
            let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
            for (i, mut nbrs) in graph.adjacency().into_iter().enumerate() {
                if nbrs.is_empty() {
                    continue;
                }
                nbrs.push(i);
                nbrs.sort_unstable();
                groups.entry(nbrs).or_default().push(i);
            }
            groups
                .into_iter()
                .map(|(members, recipients)| {
                    if members.len() < MIN_CONTRIBUTORS {
                        return Err(Error::invalid(format!(
                            "aggregation group {members:?} is smaller than {MIN_CONTRIBUTORS}"
                        )));
                    }
                    Ok(SessionDescriptor::among_agents(members, recipients))
                })
                .collect()
        }
    }
}
