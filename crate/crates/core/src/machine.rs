//! The reference machine.
//!
//! A tiny monotone machine driven by a stream of coin-flip program bits.
//! Programs are sequences of 3-bit opcodes, most significant bit first,
//! fetched lazily: the machine only asks for the next opcode when its program
//! counter runs past the end of what it has already read. Because of that,
//! the set of exactly-consumed halting programs is prefix-free by
//! construction.
//!
//! | bits | opcode | effect |
//! |------|--------|--------|
//! | 000  | HALT   | stop |
//! | 001  | LEFT   | work head -1 |
//! | 010  | RIGHT  | work head +1 |
//! | 011  | FLIP   | toggle current cell |
//! | 100  | OUT    | emit current cell |
//! | 101  | JZ     | if cell = 0 skip forward past the matching JB |
//! | 110  | JB     | if cell = 1 jump back to just after the matching JZ |
//! | 111  | AUX    | copy the next aux-tape bit into the cell (0 past its end) |
//!
//! Every executed opcode costs one step, and so does every opcode skipped by
//! a JZ forward scan. The fuel check happens before any fetch, so a machine
//! that runs out of steps never demands further program bits.

use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::error::{Error, Result};

/// Tag stored in caches and reports; bump on any semantic change.
pub const MACHINE_VERSION: &str = "UTM-3/1";

pub const OPCODE_BITS: usize = 3;

/// Keeps products of three path masses inside the exact dyadic range.
pub const MAX_DEPTH_CAP: usize = 36;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MachineConfig {
    step_cap: u64,
    depth_cap: usize,
    aux_tape: Bits,
}

impl MachineConfig {
    pub fn new(depth_cap: usize, step_cap: u64, aux_tape: Bits) -> Result<Self> {
        if step_cap == 0 {
            return Err(Error::InvalidMachineConfig("step_cap must be >= 1".into()));
        }
        if depth_cap < OPCODE_BITS {
            return Err(Error::InvalidMachineConfig(format!(
                "depth_cap must be >= {OPCODE_BITS}, got {depth_cap}"
            )));
        }
        if depth_cap > MAX_DEPTH_CAP {
            return Err(Error::InvalidMachineConfig(format!(
                "depth_cap {depth_cap} exceeds the supported maximum {MAX_DEPTH_CAP}"
            )));
        }
        Ok(MachineConfig {
            step_cap,
            depth_cap,
            aux_tape,
        })
    }

    pub fn unconditional(depth_cap: usize, step_cap: u64) -> Result<Self> {
        Self::new(depth_cap, step_cap, Bits::new())
    }

    pub fn with_aux(&self, aux_tape: Bits) -> Self {
        MachineConfig {
            aux_tape,
            ..self.clone()
        }
    }

    pub fn step_cap(&self) -> u64 {
        self.step_cap
    }

    pub fn depth_cap(&self) -> usize {
        self.depth_cap
    }

    pub fn aux_tape(&self) -> &Bits {
        &self.aux_tape
    }

    /// Deepest program length any run can actually reach: whole opcodes only.
    pub fn effective_depth(&self) -> usize {
        self.depth_cap / OPCODE_BITS * OPCODE_BITS
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Opcode {
    Halt = 0,
    Left = 1,
    Right = 2,
    Flip = 3,
    Out = 4,
    Jz = 5,
    Jb = 6,
    Aux = 7,
}

impl Opcode {
    pub const ALL: [Opcode; 8] = [
        Opcode::Halt,
        Opcode::Left,
        Opcode::Right,
        Opcode::Flip,
        Opcode::Out,
        Opcode::Jz,
        Opcode::Jb,
        Opcode::Aux,
    ];

    pub fn from_code(code: u8) -> Opcode {
        Self::ALL[(code & 7) as usize]
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn push_bits(self, out: &mut Bits) {
        let c = self.code();
        out.push(c & 4 != 0);
        out.push(c & 2 != 0);
        out.push(c & 1 != 0);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Status {
    Halted,
    OutOfFuel,
    DepthExceeded,
    Faulted,
}

impl Status {
    pub fn to_byte(self) -> u8 {
        match self {
            Status::Halted => 0,
            Status::OutOfFuel => 1,
            Status::DepthExceeded => 2,
            Status::Faulted => 3,
        }
    }

    pub fn from_byte(b: u8) -> Option<Status> {
        Some(match b {
            0 => Status::Halted,
            1 => Status::OutOfFuel,
            2 => Status::DepthExceeded,
            3 => Status::Faulted,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecOutcome {
    pub status: Status,
    pub output: Bits,
    pub consumed_bits: usize,
    /// `consumed_bits` at the moment each output bit was emitted.
    pub emission_profile: Vec<u32>,
    pub steps_used: u64,
}

/// Demand-driven source of program bits. `None` means the source is dry.
pub trait BitOracle {
    fn next_bit(&mut self) -> Option<bool>;
}

impl<F: FnMut() -> Option<bool>> BitOracle for F {
    fn next_bit(&mut self) -> Option<bool> {
        self()
    }
}

/// Replays a fixed program, then runs dry.
pub struct Replay<'a> {
    bits: &'a Bits,
    pos: usize,
}

impl<'a> Replay<'a> {
    pub fn new(bits: &'a Bits) -> Self {
        Replay { bits, pos: 0 }
    }
}

impl BitOracle for Replay<'_> {
    fn next_bit(&mut self) -> Option<bool> {
        let b = self.bits.get(self.pos)?;
        self.pos += 1;
        Some(b)
    }
}

/// Binary work tape, unbounded both ways, all zero initially.
#[derive(Clone, Debug, Default)]
struct Tape {
    cells: Vec<bool>,
    origin: usize,
}

impl Tape {
    fn index(&mut self, head: i64) -> usize {
        let idx = head + self.origin as i64;
        if idx < 0 {
            let grow = (-idx) as usize;
            let mut cells = vec![false; grow];
            cells.append(&mut self.cells);
            self.cells = cells;
            self.origin += grow;
            0
        } else {
            let idx = idx as usize;
            if idx >= self.cells.len() {
                self.cells.resize(idx + 1, false);
            }
            idx
        }
    }

    fn read(&self, head: i64) -> bool {
        let idx = head + self.origin as i64;
        idx >= 0 && self.cells.get(idx as usize).copied().unwrap_or(false)
    }

    fn write(&mut self, head: i64, v: bool) {
        let i = self.index(head);
        self.cells[i] = v;
    }
}

/// What the machine needs next.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Poll {
    NeedOpcode,
    Finished(Status),
}

/// Resumable interpreter state. Cloning it forks the execution, which is how
/// the tree enumerator shares work along a path.
#[derive(Clone, Debug)]
pub struct Machine<'c> {
    cfg: &'c MachineConfig,
    ops: Vec<Opcode>,
    pc: usize,
    tape: Tape,
    head: i64,
    aux_pos: usize,
    steps: u64,
    output: Bits,
    emissions: Vec<u32>,
    /// Nesting depth while a JZ forward scan is in progress.
    scan: Option<u32>,
}

impl<'c> Machine<'c> {
    pub fn new(cfg: &'c MachineConfig) -> Self {
        Machine {
            cfg,
            ops: Vec::new(),
            pc: 0,
            tape: Tape::default(),
            head: 0,
            aux_pos: 0,
            steps: 0,
            output: Bits::new(),
            emissions: Vec::new(),
            scan: None,
        }
    }

    pub fn consumed_bits(&self) -> usize {
        self.ops.len() * OPCODE_BITS
    }

    pub fn output(&self) -> &Bits {
        &self.output
    }

    pub fn emission_profile(&self) -> &[u32] {
        &self.emissions
    }

    pub fn opcodes(&self) -> &[Opcode] {
        &self.ops
    }

    /// Appends the next program opcode. Only valid right after `NeedOpcode`.
    pub fn supply(&mut self, op: Opcode) {
        debug_assert_eq!(self.pc, self.ops.len());
        self.ops.push(op);
    }

    fn can_fetch(&self) -> bool {
        self.consumed_bits() + OPCODE_BITS <= self.cfg.depth_cap
    }

    /// Runs until the machine terminates or needs another opcode.
    pub fn poll(&mut self) -> Poll {
        loop {
            if self.steps >= self.cfg.step_cap {
                return Poll::Finished(Status::OutOfFuel);
            }
            if self.pc == self.ops.len() {
                if !self.can_fetch() {
                    // A JZ scan that runs into the depth cap is a fault.
                    return Poll::Finished(if self.scan.is_some() {
                        Status::Faulted
                    } else {
                        Status::DepthExceeded
                    });
                }
                return Poll::NeedOpcode;
            }
            let op = self.ops[self.pc];
            self.pc += 1;
            self.steps += 1;

            if let Some(depth) = self.scan {
                self.scan = match op {
                    Opcode::Jz => Some(depth + 1),
                    Opcode::Jb if depth == 0 => None,
                    Opcode::Jb => Some(depth - 1),
                    _ => Some(depth),
                };
                continue;
            }

            match op {
                Opcode::Halt => return Poll::Finished(Status::Halted),
                Opcode::Left => self.head -= 1,
                Opcode::Right => self.head += 1,
                Opcode::Flip => {
                    let v = self.tape.read(self.head);
                    self.tape.write(self.head, !v);
                }
                Opcode::Out => {
                    self.output.push(self.tape.read(self.head));
                    self.emissions.push(self.consumed_bits() as u32);
                }
                Opcode::Jz => {
                    if !self.tape.read(self.head) {
                        self.scan = Some(0);
                    }
                }
                Opcode::Jb => {
                    let Some(open) = self.matching_jz(self.pc - 1) else {
                        return Poll::Finished(Status::Faulted);
                    };
                    if self.tape.read(self.head) {
                        self.pc = open + 1;
                    }
                }
                Opcode::Aux => {
                    let v = self.cfg.aux_tape.get(self.aux_pos).unwrap_or(false);
                    self.aux_pos += 1;
                    self.tape.write(self.head, v);
                }
            }
        }
    }

    fn matching_jz(&self, jb: usize) -> Option<usize> {
        let mut depth = 0u32;
        for i in (0..jb).rev() {
            match self.ops[i] {
                Opcode::Jb => depth += 1,
                Opcode::Jz if depth == 0 => return Some(i),
                Opcode::Jz => depth -= 1,
                _ => {}
            }
        }
        None
    }

    pub fn into_outcome(self, status: Status) -> ExecOutcome {
        ExecOutcome {
            status,
            consumed_bits: self.consumed_bits(),
            output: self.output,
            emission_profile: self.emissions,
            steps_used: self.steps,
        }
    }
}

/// Runs the machine against a demand-driven bit source.
pub fn execute(config: &MachineConfig, oracle: &mut dyn BitOracle) -> ExecOutcome {
    let mut m = Machine::new(config);
    loop {
        match m.poll() {
            Poll::Finished(status) => return m.into_outcome(status),
            Poll::NeedOpcode => {
                let mut code = 0u8;
                for _ in 0..OPCODE_BITS {
                    match oracle.next_bit() {
                        Some(b) => code = (code << 1) | b as u8,
                        None => return m.into_outcome(Status::DepthExceeded),
                    }
                }
                m.supply(Opcode::from_code(code));
            }
        }
    }
}

/// Runs a fixed program; demanding past its end gives `DepthExceeded`.
pub fn run_fixed(config: &MachineConfig, program: &Bits) -> ExecOutcome {
    execute(config, &mut Replay::new(program))
}
