//! Analytic cost model of stacked LSTM/GRU layers.
//!
//! Only the weight-bearing matrix-vector products are costed. Each gate owns
//! an input matrix `W_x` (`H x I_eff`) and a recurrent matrix `W_h` (`H x H`),
//! so one time-step of one layer touches every weight exactly once.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellType {
    #[serde(alias = "lstm")]
    LSTM,
    #[serde(alias = "gru")]
    GRU,
}

impl CellType {
    /// Number of weight-bearing gate blocks. A GRU's candidate state carries
    /// its own `W_x`/`W_h` pair in addition to the update and reset gates.
    pub fn gate_count(self) -> u64 {
        match self {
            CellType::LSTM => 4,
            CellType::GRU => 3,
        }
    }
}

pub fn gate_count(cell_type: CellType) -> u64 {
    cell_type.gate_count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RnnModel {
    pub name: String,
    pub cell_type: CellType,
    pub num_layers: usize,
    /// Neurons per gate (`H`).
    pub cell_size: u64,
    /// Layer-0 input width (`I`). Deeper layers consume `H`-wide outputs.
    pub input_size: u64,
    pub bytes_per_weight: u64,
    pub bytes_per_activation: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerCost {
    pub weight_bytes: u64,
    pub bias_bytes: u64,
    pub macs_per_timestep: u64,
    pub output_bytes_per_timestep: u64,
    /// Bytes read per time-step to feed the layer's input vector.
    pub input_bytes_per_timestep: u64,
}

impl RnnModel {
    /// MNMT machine-translation model: 8 LSTM layers of 1024 cells, 16-bit.
    pub fn mnmt() -> Self {
        RnnModel {
            name: "MNMT".into(),
            cell_type: CellType::LSTM,
            num_layers: 8,
            cell_size: 1024,
            input_size: 1024,
            bytes_per_weight: 2,
            bytes_per_activation: 2,
        }
    }

    /// DeepSpeech2 recurrent stack: 5 GRU layers of 800 cells, 16-bit. The
    /// layer-0 feature width defaults to the cell size.
    pub fn deepspeech2() -> Self {
        RnnModel {
            name: "DeepSpeech2".into(),
            cell_type: CellType::GRU,
            num_layers: 5,
            cell_size: 800,
            input_size: 800,
            bytes_per_weight: 2,
            bytes_per_activation: 2,
        }
    }

    pub fn with_layers(mut self, num_layers: usize) -> Self {
        self.num_layers = num_layers;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 {
            return Err(Error::config("model.num_layers", "must be >= 1"));
        }
        if self.cell_size == 0 {
            return Err(Error::config("model.cell_size", "must be >= 1"));
        }
        if self.input_size == 0 {
            return Err(Error::config("model.input_size", "must be >= 1"));
        }
        if !matches!(self.bytes_per_weight, 1 | 2) {
            return Err(Error::config("model.bytes_per_weight", "must be 1 or 2"));
        }
        if !matches!(self.bytes_per_activation, 1 | 2) {
            return Err(Error::config("model.bytes_per_activation", "must be 1 or 2"));
        }
        Ok(())
    }

    pub fn gate_count(&self) -> u64 {
        self.cell_type.gate_count()
    }

    /// Input width seen by `layer`.
    pub fn layer_input_width(&self, layer: usize) -> u64 {
        if layer == 0 {
            self.input_size
        } else {
            self.cell_size
        }
    }

    pub fn check_layer(&self, layer: usize) -> Result<()> {
        if layer >= self.num_layers {
            return Err(Error::LayerOutOfRange {
                index: layer,
                num_layers: self.num_layers,
            });
        }
        Ok(())
    }

    pub fn layer_cost(&self, layer: usize) -> Result<LayerCost> {
        self.check_layer(layer)?;
        let gates = self.gate_count();
        let h = self.cell_size;
        let i_eff = self.layer_input_width(layer);
        let macs = gates * (i_eff + h) * h;
        Ok(LayerCost {
            weight_bytes: macs * self.bytes_per_weight,
            bias_bytes: gates * h * self.bytes_per_weight,
            macs_per_timestep: macs,
            output_bytes_per_timestep: h * self.bytes_per_activation,
            input_bytes_per_timestep: i_eff * self.bytes_per_activation,
        })
    }

    /// Total weight bytes over all layers (biases excluded).
    pub fn weight_bytes(&self) -> u64 {
        (0..self.num_layers)
            .map(|l| self.layer_cost(l).map_or(0, |c| c.weight_bytes))
            .sum()
    }
}

pub fn layer_cost(model: &RnnModel, layer_index: usize) -> Result<LayerCost> {
    model.layer_cost(layer_index)
}

pub fn model_weight_bytes(model: &RnnModel) -> u64 {
    model.weight_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_counts() {
        assert_eq!(gate_count(CellType::LSTM), 4);
        assert_eq!(gate_count(CellType::GRU), 3);
    }

    #[test]
    fn unknown_cell_type_fails_to_parse() {
        let err = serde_json::from_str::<CellType>("\"RNN\"");
        assert!(err.is_err());
        assert_eq!(serde_json::from_str::<CellType>("\"gru\"").unwrap(), CellType::GRU);
    }

    #[test]
    fn unit_lstm_layer() {
        let m = RnnModel {
            name: "unit".into(),
            cell_type: CellType::LSTM,
            num_layers: 1,
            cell_size: 1,
            input_size: 1,
            bytes_per_weight: 1,
            bytes_per_activation: 1,
        };
        let c = m.layer_cost(0).unwrap();
        assert_eq!(c.weight_bytes, 8);
        assert_eq!(c.macs_per_timestep, 8);
        assert_eq!(c.bias_bytes, 4);
    }

    #[test]
    fn out_of_range_layer() {
        let m = RnnModel::mnmt();
        assert!(matches!(
            m.layer_cost(8),
            Err(Error::LayerOutOfRange {
                index: 8,
                num_layers: 8
            })
        ));
    }

    #[test]
    fn deep_layers_ignore_input_size() {
        let mut m = RnnModel::deepspeech2();
        let before = m.layer_cost(3).unwrap();
        m.input_size = 161;
        assert_eq!(m.layer_cost(3).unwrap(), before);
        assert_ne!(m.layer_cost(0).unwrap().weight_bytes, before.weight_bytes);
    }

    #[test]
    fn validation() {
        let mut m = RnnModel::mnmt();
        m.bytes_per_weight = 4;
        assert!(m.validate().is_err());
        let m = RnnModel::mnmt().with_layers(0);
        assert!(m.validate().is_err());
        assert!(RnnModel::deepspeech2().validate().is_ok());
    }
}
