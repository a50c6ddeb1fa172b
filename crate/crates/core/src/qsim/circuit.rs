use crate::error::{Error, Result};
use crate::qsim::{Gate, Statevector};

/// Points at which an attack block may be spliced into a template.
///
/// Diagonal attack gates are provably inert when appended after all
/// non-diagonal layers, so the interesting insertion points sit before
/// layers that fail to commute with them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertionPoint {
    PreEncoding,
    BeforeFinalBlock,
    PostCircuit,
}

impl InsertionPoint {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pre_encoding" => Ok(InsertionPoint::PreEncoding),
            "before_final_block" => Ok(InsertionPoint::BeforeFinalBlock),
            "post_circuit" => Ok(InsertionPoint::PostCircuit),
            other => Err(Error::Config(format!("unknown insertion point '{other}'"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            InsertionPoint::PreEncoding => "pre_encoding",
            InsertionPoint::BeforeFinalBlock => "before_final_block",
            InsertionPoint::PostCircuit => "post_circuit",
        }
    }
}

/// An ordered gate program with encoder slots, trainable-parameter slots,
/// and the marked positions where attack blocks can be inserted.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitTemplate {
    n_wires: usize,
    gates: Vec<Gate>,
    pre_encoding_index: usize,
    before_final_index: usize,
    n_params: usize,
    n_inputs: usize,
}

impl CircuitTemplate {
    /// Validate gates and slot coverage. Each `Param` and `Input` slot must
    /// be used by exactly one gate, and slots must be contiguous from zero.
    pub fn new(
        n_wires: usize,
        gates: Vec<Gate>,
        pre_encoding_index: usize,
        before_final_index: usize,
    ) -> Result<Self> {
        if n_wires == 0 || n_wires > super::MAX_WIRES {
            return Err(Error::Circuit(format!(
                "template register width {n_wires} out of range"
            )));
        }
        if pre_encoding_index > gates.len()
            || before_final_index > gates.len()
            || pre_encoding_index > before_final_index
        {
            return Err(Error::Circuit(format!(
                "insertion marks out of order: pre={pre_encoding_index} final={before_final_index} len={}",
                gates.len()
            )));
        }
        let mut param_slots = Vec::new();
        let mut input_slots = Vec::new();
        for gate in &gates {
            gate.validate(n_wires)?;
            if let Some(slot) = gate.param_slot() {
                param_slots.push(slot);
            }
            if let Some(slot) = gate.input_slot() {
                input_slots.push(slot);
            }
        }
        let n_params = check_slot_coverage(&mut param_slots, "parameter")?;
        let n_inputs = check_slot_coverage(&mut input_slots, "input")?;
        Ok(CircuitTemplate {
            n_wires,
            gates,
            pre_encoding_index,
            before_final_index,
            n_params,
            n_inputs,
        })
    }

    pub fn n_wires(&self) -> usize {
        self.n_wires
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    fn insertion_index(&self, point: InsertionPoint) -> usize {
        match point {
            InsertionPoint::PreEncoding => self.pre_encoding_index,
            InsertionPoint::BeforeFinalBlock => self.before_final_index,
            InsertionPoint::PostCircuit => self.gates.len(),
        }
    }

    /// A copy of this template with `block` spliced in at `point`. The
    /// block must not introduce new parameter or input slots.
    pub fn with_block_inserted(&self, point: InsertionPoint, block: Vec<Gate>) -> Result<Self> {
        for gate in &block {
            gate.validate(self.n_wires)?;
            if gate.param_slot().is_some() || gate.input_slot().is_some() {
                return Err(Error::Circuit(
                    "inserted attack blocks must use fixed angles only".into(),
                ));
            }
        }
        let at = self.insertion_index(point);
        let mut gates = self.gates.clone();
        let shift = block.len();
        gates.splice(at..at, block);
        // Marks keep pointing at their original layer boundaries; a mark at
        // the splice position stays before the inserted block.
        let pre = self.pre_encoding_index;
        let fin = if self.before_final_index > at {
            self.before_final_index + shift
        } else {
            self.before_final_index
        };
        CircuitTemplate::new(self.n_wires, gates, pre, fin)
    }

    /// Run the resolved gate list on a fresh `|0...0>` register.
    pub fn run(&self, params: &[f64], inputs: &[f64]) -> Result<Statevector> {
        if params.len() != self.n_params {
            return Err(Error::Circuit(format!(
                "expected {} quantum parameters, got {}",
                self.n_params,
                params.len()
            )));
        }
        if inputs.len() != self.n_inputs {
            return Err(Error::Circuit(format!(
                "expected {} input angles, got {}",
                self.n_inputs,
                inputs.len()
            )));
        }
        let mut state = Statevector::new(self.n_wires)?;
        for gate in &self.gates {
            state.apply_resolved(gate, params, inputs)?;
        }
        Ok(state)
    }
}

fn check_slot_coverage(slots: &mut Vec<usize>, kind: &str) -> Result<usize> {
    slots.sort_unstable();
    for (expected, &slot) in slots.iter().enumerate() {
        if slot != expected {
            return Err(Error::Circuit(format!(
                "{kind} slots must be contiguous and used exactly once; problem at slot {slot}"
            )));
        }
    }
    Ok(slots.len())
}
