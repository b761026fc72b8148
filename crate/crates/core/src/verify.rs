//! Finite-difference verification of every backward pass.
//!
//! Each probe wraps one differentiable operation with its inputs promoted to
//! parameters and a fixed random linear read-out as the loss, so the oracle
//! checks gradients into inputs as well as weights.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::Sentiment;
use crate::encoding::RhoHotFamily;
use crate::error::{Error, Result};
use crate::lexicon::{ConjunctionLexicon, KeyWordCategory, Lexicons, PosTag};
use crate::network::{
    Classifier, EncodedClause, Level1Model, Level2Model, Pooling, SentenceInput, TrainConfig, Vocab,
};
use crate::numerics::ops::dot;
use crate::numerics::{compare_grads, finite_diff_grad, Activation, ParamSet, Parameter, Tensor};
use crate::recurrent::{
    attention_conj, attention_lex, attention_lex_pos, attention_plain, BiLstm, CellConfig, CellRecurrence, CellState,
    LstmParams, ScoreLayer, StateGrad,
};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub eps: f64,
    pub tolerance: f64,
    pub seeds: Vec<u64>,
    /// Perturb the analytic gradient of this op before comparing; a
    /// negative control for the harness itself.
    pub corrupt: Option<String>,
    /// Restrict the run to ops whose name starts with this prefix.
    pub only: Option<String>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS,
            tolerance: DEFAULT_TOLERANCE,
            seeds: (0..5).collect(),
            corrupt: None,
            only: None,
        }
    }
}

/// One op checked at one shape and seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub op: String,
    pub shape: String,
    pub seed: u64,
    pub max_rel_error: f64,
    pub worst_param: String,
    pub params_checked: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub tolerance: f64,
    pub cases: Vec<CaseReport>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        !self.cases.is_empty() && self.cases.iter().all(|c| c.passed)
    }

    /// Worst case per op, in first-seen order.
    pub fn per_op(&self) -> Vec<&CaseReport> {
        let mut order = Vec::new();
        let mut worst: BTreeMap<&str, &CaseReport> = BTreeMap::new();
        for c in &self.cases {
            match worst.get(c.op.as_str()) {
                None => {
                    order.push(c.op.as_str());
                    worst.insert(&c.op, c);
                }
                Some(w) if c.max_rel_error > w.max_rel_error || (!c.passed && w.passed) => {
                    worst.insert(&c.op, c);
                }
                _ => {}
            }
        }
        order.into_iter().map(|o| worst[o]).collect()
    }

    /// Parameter names whose gradients were checked, per op.
    pub fn ops(&self) -> Vec<String> {
        self.per_op().into_iter().map(|c| c.op.clone()).collect()
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<30} {:>6} {:>14}  {:<6} worst parameter", "op", "cases", "max rel err", "result")?;
        for w in self.per_op() {
            let n = self.cases.iter().filter(|c| c.op == w.op).count();
            writeln!(
                f,
                "{:<30} {:>6} {:>14.3e}  {:<6} {}",
                w.op,
                n,
                w.max_rel_error,
                if w.passed { "ok" } else { "FAIL" },
                w.worst_param
            )?;
        }
        write!(
            f,
            "{} cases, tolerance {:e}: {}",
            self.cases.len(),
            self.tolerance,
            if self.passed() { "all passed" } else { "FAILED" }
        )
    }
}

trait Probe: ParamSet<f64> {
    fn loss(&self) -> Result<f64>;
    /// Accumulates analytic gradients of `loss` into the parameters.
    fn backward(&mut self) -> Result<()>;
}

fn randomize(p: &mut dyn ParamSet<f64>, rng: &mut ChaCha8Rng, scale: f64) {
    p.visit_mut(&mut |q| q.value.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-scale..scale)));
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn input(name: String, rng: &mut ChaCha8Rng, n: usize) -> Parameter<f64> {
    Parameter::new(name, Tensor::from_fn(&[n], |_| rng.gen_range(-1.0..1.0)))
}

fn add_grad(p: &mut Parameter<f64>, d: &[f64]) {
    p.grad.data_mut().iter_mut().zip(d).for_each(|(g, v)| *g += v);
}

fn check<P: Probe>(op: &str, shape: String, seed: u64, probe: &mut P, cfg: &SuiteConfig) -> Result<CaseReport> {
    probe.validate_params()?;
    probe.zero_grads();
    probe.backward()?;
    let mut analytic = probe.grads();
    probe.zero_grads();
    if cfg.corrupt.as_deref() == Some(op) {
        let g = &mut analytic[0].1.data_mut()[0];
        *g += 1e-2 * (1.0 + g.abs());
    }
    let numeric = finite_diff_grad(probe, |p| p.loss(), cfg.eps)?;
    let diffs = compare_grads(&analytic, &numeric)?;
    let worst = diffs
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .ok_or_else(|| Error::Oracle(format!("{op}: no parameters")))?;
    let max_rel_error = worst.max_rel_error;
    Ok(CaseReport {
        op: op.to_string(),
        shape,
        seed,
        max_rel_error,
        worst_param: worst.name.clone(),
        params_checked: diffs.len(),
        passed: max_rel_error < cfg.tolerance,
    })
}

// ---- lstm_cell ------------------------------------------------------------

struct CellProbe {
    cell: LstmParams<f64>,
    x: Parameter<f64>,
    h: Parameter<f64>,
    c: Parameter<f64>,
    d: Parameter<f64>,
    read: [Vec<f64>; 3],
}

impl CellProbe {
    fn new(input: usize, hidden: usize, cell: CellConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut lstm = LstmParams::new("cell", input, hidden, cell, rng);
        randomize(&mut lstm, rng, 0.6);
        Self {
            cell: lstm,
            x: self::input("x".into(), rng, input),
            h: self::input("h_prev".into(), rng, hidden),
            c: self::input("c_prev".into(), rng, hidden),
            d: self::input("d_prev".into(), rng, hidden),
            read: [rand_vec(rng, hidden), rand_vec(rng, hidden), rand_vec(rng, hidden)],
        }
    }

    fn prev(&self) -> CellState<f64> {
        CellState {
            h: self.h.value.data().to_vec(),
            c: self.c.value.data().to_vec(),
            d: self.d.value.data().to_vec(),
        }
    }
}

impl ParamSet<f64> for CellProbe {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<f64>)) {
        self.cell.visit(f);
        f(&self.x);
        f(&self.h);
        f(&self.c);
        if self.cell.cell.recurrence == CellRecurrence::PreviousCandidate {
            f(&self.d);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<f64>)) {
        self.cell.visit_mut(f);
        f(&mut self.x);
        f(&mut self.h);
        f(&mut self.c);
        if self.cell.cell.recurrence == CellRecurrence::PreviousCandidate {
            f(&mut self.d);
        }
    }
}

impl Probe for CellProbe {
    fn loss(&self) -> Result<f64> {
        let (s, _) = self.cell.step(self.x.value.data(), &self.prev())?;
        Ok(dot(&self.read[0], &s.h) + dot(&self.read[1], &s.c) + dot(&self.read[2], &s.d))
    }

    fn backward(&mut self) -> Result<()> {
        let (_, cache) = self.cell.step(self.x.value.data(), &self.prev())?;
        let mut next = StateGrad {
            h: vec![0.0; self.h.len()],
            c: self.read[1].clone(),
            d: self.read[2].clone(),
        };
        let dx = self.cell.step_backward(&cache, &self.read[0].clone(), &mut next);
        add_grad(&mut self.x, &dx);
        add_grad(&mut self.h, &next.h);
        add_grad(&mut self.c, &next.c);
        add_grad(&mut self.d, &next.d);
        Ok(())
    }
}

// ---- bilstm ---------------------------------------------------------------

struct BiLstmProbe {
    net: BiLstm<f64>,
    xs: Vec<Parameter<f64>>,
    read: Vec<Vec<f64>>,
}

impl BiLstmProbe {
    fn values(&self) -> Vec<Vec<f64>> {
        self.xs.iter().map(|x| x.value.data().to_vec()).collect()
    }
}

impl ParamSet<f64> for BiLstmProbe {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<f64>)) {
        self.net.visit(f);
        self.xs.iter().for_each(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<f64>)) {
        self.net.visit_mut(f);
        self.xs.iter_mut().for_each(f);
    }
}

impl Probe for BiLstmProbe {
    fn loss(&self) -> Result<f64> {
        let hs = self.net.forward(&self.values())?.0.concatenated();
        Ok(hs.iter().zip(&self.read).map(|(h, r)| dot(h, r)).sum())
    }

    fn backward(&mut self) -> Result<()> {
        let (_, cache) = self.net.forward(&self.values())?;
        let dxs = self.net.backward(&cache, &self.read);
        for (x, d) in self.xs.iter_mut().zip(&dxs) {
            add_grad(x, d);
        }
        Ok(())
    }
}

// ---- attention ------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Variant {
    Plain,
    Lex,
    LexPos,
    Conj,
}

impl Variant {
    /// Streams (by index) concatenated into the score input and the value.
    fn layout(self) -> (&'static [usize], &'static [usize]) {
        match self {
            Variant::Plain => (&[0], &[0]),
            Variant::Lex => (&[0, 1], &[0]),
            Variant::LexPos => (&[0, 1, 2], &[0]),
            // streams: y, h, ω^s, ω^e
            Variant::Conj => (&[0, 1, 2, 3], &[1, 0]),
        }
    }
}

struct AttentionProbe {
    variant: Variant,
    layer: ScoreLayer<f64>,
    streams: Vec<Vec<Parameter<f64>>>,
    read: Vec<f64>,
}

impl AttentionProbe {
    fn new(variant: Variant, positions: usize, widths: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let streams: Vec<Vec<Parameter<f64>>> = widths
            .iter()
            .enumerate()
            .map(|(s, &w)| (0..positions).map(|t| input(format!("s{s}[{t}]"), rng, w)).collect())
            .collect();
        let (u, v) = variant.layout();
        let uw: usize = u.iter().map(|&s| widths[s]).sum();
        let vw: usize = v.iter().map(|&s| widths[s]).sum();
        let mut layer = ScoreLayer::new("attn", uw, variant != Variant::Plain, rng);
        randomize(&mut layer, rng, 1.0);
        Self {
            variant,
            layer,
            streams,
            read: rand_vec(rng, vw),
        }
    }

    fn values(&self, s: usize) -> Vec<Vec<f64>> {
        self.streams[s].iter().map(|p| p.value.data().to_vec()).collect()
    }

    fn assemble(&self, layout: &[usize]) -> Vec<Vec<f64>> {
        (0..self.streams[0].len())
            .map(|t| layout.iter().flat_map(|&s| self.streams[s][t].value.data().iter().copied()).collect())
            .collect()
    }

    fn scatter(&mut self, layout: &[usize], grads: &[Vec<f64>]) {
        for (t, g) in grads.iter().enumerate() {
            let mut off = 0;
            for &s in layout {
                let p = &mut self.streams[s][t];
                let w = p.len();
                add_grad(p, &g[off..off + w]);
                off += w;
            }
        }
    }
}

impl ParamSet<f64> for AttentionProbe {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<f64>)) {
        self.layer.visit(f);
        self.streams.iter().flatten().for_each(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<f64>)) {
        self.layer.visit_mut(f);
        self.streams.iter_mut().flatten().for_each(f);
    }
}

impl Probe for AttentionProbe {
    fn loss(&self) -> Result<f64> {
        let out = match self.variant {
            Variant::Plain => attention_plain(&self.values(0), self.layer.w.value.data())?,
            Variant::Lex => attention_lex(&self.values(0), &self.values(1), &self.layer)?,
            Variant::LexPos => attention_lex_pos(&self.values(0), &self.values(1), &self.values(2), &self.layer)?,
            Variant::Conj => attention_conj(
                &self.values(0),
                &self.values(1),
                &self.values(2),
                &self.values(3),
                &self.layer,
            )?,
        };
        Ok(dot(&out.gamma, &self.read))
    }

    fn backward(&mut self) -> Result<()> {
        let (u, v) = self.variant.layout();
        let (_, cache) = self.layer.forward(self.assemble(u), self.assemble(v))?;
        let (du, dv) = self.layer.backward(&cache, &self.read.clone());
        self.scatter(u, &du);
        self.scatter(v, &dv);
        Ok(())
    }
}

// ---- ρ-hot ------------------------------------------------------------------

struct RhoProbe {
    family: RhoHotFamily<f64>,
    active: Vec<Option<usize>>,
    read: Vec<Vec<f64>>,
}

impl ParamSet<f64> for RhoProbe {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<f64>)) {
        f(&self.family.rho)
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<f64>)) {
        f(&mut self.family.rho)
    }
}

impl Probe for RhoProbe {
    fn loss(&self) -> Result<f64> {
        let mut v = vec![0.0; self.family.width()];
        let mut total = 0.0;
        for (k, r) in self.active.iter().zip(&self.read) {
            self.family.write_into(*k, &mut v);
            total += dot(&v, r);
        }
        Ok(total)
    }

    fn backward(&mut self) -> Result<()> {
        for (k, r) in self.active.iter().zip(&self.read) {
            self.family.accumulate_grad(*k, r);
        }
        Ok(())
    }
}

// ---- whole-model losses -----------------------------------------------------

struct LossProbe<M: Classifier<f64>> {
    model: M,
    data: Vec<(M::Input, usize)>,
}

impl<M: Classifier<f64>> ParamSet<f64> for LossProbe<M> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<f64>)) {
        self.model.visit(f)
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<f64>)) {
        self.model.visit_mut(f)
    }
}

impl<M: Classifier<f64>> Probe for LossProbe<M> {
    fn loss(&self) -> Result<f64> {
        let mut total = 0.0;
        for (x, y) in &self.data {
            total += crate::network::cross_entropy(&self.model.probabilities(x)?, *y);
        }
        Ok(total)
    }

    fn backward(&mut self) -> Result<()> {
        for (x, y) in &self.data {
            self.model.loss_and_grad(x, *y)?;
        }
        Ok(())
    }
}

fn level1_probe(pooling: Pooling, shape: (usize, usize, usize), rng: &mut ChaCha8Rng) -> Result<LossProbe<Level1Model<f64>>> {
    let (embed_dim, n, hidden) = shape;
    let cfg = TrainConfig {
        embed_dim,
        n,
        hidden1: hidden,
        pooling,
        ..Default::default()
    };
    let vocab = Vocab::build(["w0", "w1", "w2", "w3", "w4"]);
    let mut model = Level1Model::new(&cfg, vocab, Lexicons::default(), rng)?;
    randomize(&mut model, rng, 0.5);
    for fam in [model.keyword.as_mut(), model.pos.as_mut()].into_iter().flatten() {
        fam.set_rho(rng.gen_range(0.3..1.2));
    }
    let data = (0..2)
        .map(|i| {
            let len = 2 + i;
            let enc = EncodedClause {
                ids: (0..len).map(|_| rng.gen_range(0..6)).collect(),
                keyword: (0..len).map(|_| rng.gen_range(0..KeyWordCategory::COUNT)).collect(),
                pos: (0..len).map(|_| rng.gen_range(0..PosTag::COUNT)).collect(),
            };
            (enc, rng.gen_range(0..3))
        })
        .collect();
    Ok(LossProbe { model, data })
}

fn level2_probe(shape: (usize, usize, usize), rng: &mut ChaCha8Rng) -> Result<LossProbe<Level2Model<f64>>> {
    let (gamma_dim, hidden, clauses) = shape;
    let cfg = TrainConfig {
        hidden2: hidden,
        ..Default::default()
    };
    let conj = ConjunctionLexicon::from_words(["but", "and", "so"]);
    let mut model = Level2Model::new(&cfg, gamma_dim, conj, rng)?;
    randomize(&mut model, rng, 0.5);
    if let Some(f) = model.conj.as_mut() {
        f.set_rho(rng.gen_range(0.3..1.2));
    }
    let data = (0..2)
        .map(|i| {
            let t_len = clauses + i;
            let ys = (0..t_len)
                .map(|_| {
                    let raw: Vec<f64> = (0..3).map(|_| rng.gen_range(0.1..1.0)).collect();
                    let z: f64 = raw.iter().sum();
                    raw.iter().map(|v| v / z).collect()
                })
                .collect();
            let pick = |rng: &mut ChaCha8Rng| match rng.gen_range(0..4) {
                3 => None,
                k => Some(k),
            };
            let mut start: Vec<Option<usize>> = (0..t_len).map(|_| pick(rng)).collect();
            start[0] = Some(0);
            let input = SentenceInput {
                ys,
                gammas: (0..t_len).map(|_| rand_vec(rng, gamma_dim)).collect(),
                start,
                end: (0..t_len).map(|_| pick(rng)).collect(),
            };
            (input, Sentiment::ALL[i % 3].index())
        })
        .collect();
    Ok(LossProbe { model, data })
}

/// Runs every probe over three shapes and every configured seed.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    if cfg.seeds.is_empty() {
        return Err(Error::config("gradient suite needs at least one seed"));
    }
    let mut cases = Vec::new();
    let wanted = |op: &str| cfg.only.as_deref().is_none_or(|p| op.starts_with(p));
    let mut run = |op: &str, shape: String, seed: u64, probe: &mut dyn FnMut(&mut ChaCha8Rng) -> Result<CaseReport>| -> Result<()> {
        if wanted(op) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut report = probe(&mut rng)?;
            report.shape = shape;
            cases.push(report);
        }
        Ok(())
    };

    for &seed in &cfg.seeds {
        let cells = [
            ("lstm_cell", CellConfig::default()),
            (
                "lstm_cell[tanh]",
                CellConfig {
                    candidate: Activation::Tanh,
                    ..Default::default()
                },
            ),
            (
                "lstm_cell[prev-candidate]",
                CellConfig {
                    recurrence: CellRecurrence::PreviousCandidate,
                    ..Default::default()
                },
            ),
        ];
        for (op, cell) in cells {
            for (input_dim, hidden) in [(1, 1), (3, 2), (4, 5)] {
                run(op, format!("in={input_dim} hidden={hidden}"), seed, &mut |rng| {
                    check(op, String::new(), seed, &mut CellProbe::new(input_dim, hidden, cell, rng), cfg)
                })?;
            }
        }

        for (input_dim, hidden, len) in [(2, 1, 1), (3, 2, 3), (2, 3, 5)] {
            run("bilstm", format!("in={input_dim} hidden={hidden} T={len}"), seed, &mut |rng| {
                let mut net = BiLstm::new("bilstm", input_dim, hidden, CellConfig::default(), rng);
                randomize(&mut net, rng, 0.6);
                let xs = (0..len).map(|t| input(format!("x[{t}]"), rng, input_dim)).collect();
                let read = (0..len).map(|_| rand_vec(rng, 2 * hidden)).collect();
                check("bilstm", String::new(), seed, &mut BiLstmProbe { net, xs, read }, cfg)
            })?;
        }

        let attention: [(&str, Variant, [&[usize]; 3]); 4] = [
            ("attention_plain", Variant::Plain, [&[1], &[3], &[4]]),
            ("attention_lex", Variant::Lex, [&[1, 2], &[3, 6], &[4, 12]]),
            ("attention_lex_pos", Variant::LexPos, [&[1, 1, 2], &[3, 6, 8], &[4, 12, 16]]),
            ("attention_conj", Variant::Conj, [&[3, 2, 1, 1], &[3, 4, 3, 3], &[1, 6, 5, 5]]),
        ];
        for (op, variant, shapes) in attention {
            for (k, widths) in shapes.iter().enumerate() {
                let positions = [1, 3, 5][k];
                run(op, format!("T={positions} widths={widths:?}"), seed, &mut |rng| {
                    check(op, String::new(), seed, &mut AttentionProbe::new(variant, positions, widths, rng), cfg)
                })?;
            }
        }

        let families = [
            ("rho_hot[keyword]", KeyWordCategory::COUNT, [1, 3, 11]),
            ("rho_hot[pos]", PosTag::COUNT, [1, 3, 11]),
            ("rho_hot[conjunction]", 9, [1, 1, 1]),
        ];
        for (op, count, ns) in families {
            for (k, n) in ns.into_iter().enumerate() {
                let count = if count == 9 { [1, 4, 9][k] } else { count };
                run(op, format!("K={count} n={n}"), seed, &mut |rng| {
                    let mut family = RhoHotFamily::new("rho", count, n, rng.gen_range(0.2..1.5))?;
                    family.set_rho(rng.gen_range(0.2..1.5));
                    let active = (0..4)
                        .map(|_| if rng.gen_bool(0.2) { None } else { Some(rng.gen_range(0..count)) })
                        .collect();
                    let read = (0..4).map(|_| rand_vec(rng, count * n)).collect();
                    check(op, String::new(), seed, &mut RhoProbe { family, active, read }, cfg)
                })?;
            }
        }

        let poolings = [
            ("level1_loss", Pooling::LexPos),
            ("level1_loss[lex]", Pooling::Lex),
            ("level1_loss[plain]", Pooling::Plain),
            ("level1_loss[sum]", Pooling::Sum),
        ];
        for (op, pooling) in poolings {
            for shape in [(2, 1, 1), (3, 2, 2), (4, 3, 2)] {
                run(op, format!("E={} n={} hidden={}", shape.0, shape.1, shape.2), seed, &mut |rng| {
                    check(op, String::new(), seed, &mut level1_probe(pooling, shape, rng)?, cfg)
                })?;
            }
        }

        for shape in [(2, 1, 1), (4, 2, 2), (3, 3, 3)] {
            run(
                "level2_loss",
                format!("gamma={} hidden={} clauses={}..{}", shape.0, shape.1, shape.2, shape.2 + 1),
                seed,
                &mut |rng| check("level2_loss", String::new(), seed, &mut level2_probe(shape, rng)?, cfg),
            )?;
        }
    }
    if cases.is_empty() {
        return Err(Error::config(format!(
            "no gradient-suite op matches '{}'",
            cfg.only.as_deref().unwrap_or_default()
        )));
    }
    Ok(SuiteReport {
        tolerance: cfg.tolerance,
        cases,
    })
}
