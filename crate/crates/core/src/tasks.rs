//! Task generators for the symbol-rearrangement benchmarks and the
//! per-task interface availability masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Symbol inventory. Indices `0..payload` are payload symbols, `payload` is
/// the terminator, and the next two slots are the repeat-count markers used
/// by RepeatCopy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabSpec {
    pub payload: usize,
}

impl VocabSpec {
    pub fn new(payload: usize) -> Self {
        assert!(payload >= 1);
        VocabSpec { payload }
    }

    pub fn terminator(&self) -> usize {
        self.payload
    }

    pub fn count_symbol(&self, m: usize) -> usize {
        debug_assert!(m == 2 || m == 3);
        self.payload + m - 1
    }

    /// Dimension of input-symbol one-hots (payload + terminator + counts).
    pub fn input_dim(&self) -> usize {
        self.payload + 3
    }

    /// Number of output classes (payload + terminator).
    pub fn output_dim(&self) -> usize {
        self.payload + 1
    }

    pub fn render(&self, sym: usize) -> String {
        if sym < self.payload {
            format!("{}", sym + 1)
        } else if sym == self.payload {
            "$".to_string()
        } else {
            format!("m{}", sym - self.payload + 1)
        }
    }

    pub fn parse_symbol(&self, tok: &str) -> Result<usize> {
        if tok == "$" {
            return Ok(self.terminator());
        }
        if let Some(m) = tok.strip_prefix('m') {
            let m: usize = m
                .parse()
                .map_err(|_| Error::CheckpointCorrupt(format!("bad symbol `{tok}`")))?;
            return Ok(self.count_symbol(m));
        }
        let v: usize = tok
            .parse()
            .map_err(|_| Error::CheckpointCorrupt(format!("bad symbol `{tok}`")))?;
        if v == 0 || v > self.payload {
            return Err(Error::CheckpointCorrupt(format!("symbol `{tok}` out of range")));
        }
        Ok(v - 1)
    }
}

impl Default for VocabSpec {
    fn default() -> Self {
        VocabSpec { payload: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Copy,
    DuplicatedInput,
    Reverse,
    RepeatCopy,
    ForwardReverse,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Copy => "copy",
            Task::DuplicatedInput => "duplicated-input",
            Task::Reverse => "reverse",
            Task::RepeatCopy => "repeat-copy",
            Task::ForwardReverse => "forward-reverse",
        }
    }

    pub fn from_name(s: &str) -> Option<Task> {
        match s {
            "copy" => Some(Task::Copy),
            "duplicated-input" => Some(Task::DuplicatedInput),
            "reverse" => Some(Task::Reverse),
            "repeat-copy" => Some(Task::RepeatCopy),
            "forward-reverse" => Some(Task::ForwardReverse),
            _ => None,
        }
    }

    /// Smallest complexity that yields a non-empty payload.
    pub fn min_complexity(&self) -> usize {
        match self {
            Task::RepeatCopy => 3,
            _ => 2,
        }
    }
}

/// Which interfaces an instance exposes and which input-head moves exist.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterfaceMask {
    /// Allowed input-head increments, in fixed order.
    pub input_deltas: Vec<i64>,
    /// Whether the external memory tape (head, window, write) is available.
    pub memory: bool,
}

pub fn interface_mask(task: Task) -> InterfaceMask {
    match task {
        Task::ForwardReverse => InterfaceMask {
            input_deltas: vec![0, 1],
            memory: true,
        },
        _ => InterfaceMask {
            input_deltas: vec![-1, 0, 1],
            memory: false,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskInstance {
    pub task: Task,
    pub input: Vec<usize>,
    pub target: Vec<usize>,
    /// Desired-output length including the terminator.
    pub complexity: usize,
    pub mask: InterfaceMask,
}

/// Generate one instance. `complexity` is the desired output length
/// including the terminator.
pub fn generate(
    task: Task,
    complexity: usize,
    seed: u64,
    vocab: VocabSpec,
) -> Result<TaskInstance> {
    if complexity < task.min_complexity() {
        return Err(Error::ComplexityTooSmall {
            task: task.name().to_string(),
            complexity,
        });
    }
    let mut rng = StreamRng::new(seed, &format!("taskgen/{}/{complexity}", task.name()));
    let term = vocab.terminator();
    let draw = |rng: &mut StreamRng, n: usize| -> Vec<usize> {
        (0..n).map(|_| rng.next_below(vocab.payload)).collect()
    };
    let (input, target) = match task {
        Task::Copy => {
            let payload = draw(&mut rng, complexity - 1);
            let mut input = payload.clone();
            input.push(term);
            (input.clone(), input)
        }
        Task::DuplicatedInput => {
            let payload = draw(&mut rng, complexity - 1);
            let mut input = Vec::with_capacity(payload.len() * 3 + 1);
            for &s in &payload {
                input.extend([s, s, s]);
            }
            input.push(term);
            let mut target = payload;
            target.push(term);
            (input, target)
        }
        Task::Reverse | Task::ForwardReverse => {
            let payload = draw(&mut rng, complexity - 1);
            let mut input = payload.clone();
            input.push(term);
            let mut target: Vec<usize> = payload.into_iter().rev().collect();
            target.push(term);
            (input, target)
        }
        Task::RepeatCopy => {
            let mut m = 2 + rng.next_below(2);
            let mut payload_len = (complexity - 1) / m;
            if payload_len == 0 {
                m = 2;
                payload_len = (complexity - 1) / m;
            }
            if payload_len == 0 {
                return Err(Error::ComplexityTooSmall {
                    task: task.name().to_string(),
                    complexity,
                });
            }
            let payload = draw(&mut rng, payload_len);
            let mut input = vec![vocab.count_symbol(m)];
            input.extend(&payload);
            input.push(term);
            let mut target = Vec::with_capacity(m * payload_len + 1);
            for _ in 0..m {
                target.extend(&payload);
            }
            target.push(term);
            (input, target)
        }
    };
    Ok(TaskInstance {
        task,
        input,
        target,
        complexity,
        mask: interface_mask(task),
    })
}

impl TaskInstance {
    /// One-line fixture format: `task;complexity;input;target` with
    /// space-separated symbol tokens.
    pub fn dump_line(&self, vocab: VocabSpec) -> String {
        let syms = |s: &[usize]| {
            s.iter()
                .map(|&x| vocab.render(x))
                .collect::<Vec<_>>()
                .join(" ")
        };
        format!(
            "{};{};{};{}",
            self.task.name(),
            self.complexity,
            syms(&self.input),
            syms(&self.target)
        )
    }

    pub fn parse_line(line: &str, vocab: VocabSpec) -> Result<TaskInstance> {
        let parts: Vec<&str> = line.trim().split(';').collect();
        if parts.len() != 4 {
            return Err(Error::CheckpointCorrupt(format!(
                "instance line needs 4 fields, got {}",
                parts.len()
            )));
        }
        let task = Task::from_name(parts[0])
            .ok_or_else(|| Error::CheckpointCorrupt(format!("unknown task `{}`", parts[0])))?;
        let complexity: usize = parts[1]
            .parse()
            .map_err(|_| Error::CheckpointCorrupt("bad complexity".into()))?;
        let syms = |field: &str| -> Result<Vec<usize>> {
            field
                .split_whitespace()
                .map(|tok| vocab.parse_symbol(tok))
                .collect()
        };
        Ok(TaskInstance {
            task,
            input: syms(parts[2])?,
            target: syms(parts[3])?,
            complexity,
            mask: interface_mask(task),
        })
    }
}
