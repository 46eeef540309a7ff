use crate::codec::{decode_round, decode_update};
use crate::error::{Error, Result};
use crate::tensor::ParameterSet;

/// Master weights, the last global update and the round counter.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    weights: ParameterSet,
    delta: ParameterSet,
    round: u64,
}

impl ServerState {
    pub fn new(init: ParameterSet) -> Self {
        Self {
            delta: init.zeros_like(),
            weights: init,
            round: 0,
        }
    }

    pub fn weights(&self) -> &ParameterSet {
        &self.weights
    }

    pub fn last_delta(&self) -> &ParameterSet {
        &self.delta
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    /// Decodes one client's upload into a dense update with the master's
    /// tensor layout.
    pub fn decode_upload(&self, bytes: &[u8]) -> Result<ParameterSet> {
        let messages = decode_round(bytes)?;
        if messages.len() != self.weights.len() {
            return Err(Error::shape(
                "<round>",
                format!(
                    "{} messages for {} tensors",
                    messages.len(),
                    self.weights.len()
                ),
            ));
        }
        let mut dense = self.weights.zeros_like();
        for (msg, slot) in messages.iter().zip(dense.tensors_mut()) {
            let h = &msg.header;
            if h.tensor_name != slot.name() || h.tensor_length as usize != slot.len() {
                return Err(Error::shape(
                    slot.name(),
                    format!(
                        "message for `{}` with length {}, expected length {}",
                        h.tensor_name,
                        h.tensor_length,
                        slot.len()
                    ),
                ));
            }
            let update = decode_update(msg)?;
            let values = slot.values_mut();
            match update {
                crate::compress::TensorUpdate::Dense(d) => values.copy_from_slice(&d.values),
                other => other.add_into(values)?,
            }
        }
        Ok(dense)
    }

    /// Averages the uploads in ascending client order, moves the master
    /// weights and returns the update to broadcast.
    pub fn aggregate(&mut self, uploads: &[(usize, Vec<u8>)]) -> Result<ParameterSet> {
        if uploads.is_empty() {
            return Err(Error::Empty("no participating clients".into()));
        }
        let mut ordered: Vec<&(usize, Vec<u8>)> = uploads.iter().collect();
        ordered.sort_by_key(|(id, _)| *id);
        let mut sum: Option<ParameterSet> = None;
        for (id, bytes) in ordered {
            let dense = self.decode_upload(bytes).map_err(|e| Error::Client {
                client: *id,
                source: Box::new(e),
            })?;
            match sum.as_mut() {
                None => sum = Some(dense),
                Some(acc) => acc.add_assign(&dense)?,
            }
        }
        let mut delta = sum.expect("at least one upload");
        let count = uploads.len() as f32;
        for t in delta.tensors_mut() {
            t.values_mut().iter_mut().for_each(|v| *v /= count);
        }
        self.weights.add_assign(&delta)?;
        self.delta = delta.clone();
        self.round += 1;
        Ok(delta)
    }
}
