//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use std::cell::RefCell;
use std::rc::Rc;

use super::graph::{Graph, Mode, PinnedChoices, Var};
use super::param::ParamStore;
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Entries per parameter to perturb; `None` checks every entry.
    pub max_entries: Option<usize>,
    /// Denominator floor for the relative error `|a - n| / max(|a|, |n|, floor)`.
    pub floor: f64,
    pub mode: Mode,
    pub graph_seed: u64,
    pub sample_seed: u64,
    /// Replays the analytic pass's neighbor tables in every perturbed evaluation.
    pub pin_choices: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            max_entries: None,
            floor: 1e-4,
            mode: Mode::Train,
            graph_seed: 0,
            sample_seed: 0,
            pin_choices: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    /// (entry, analytic, numeric) of the worst entry.
    pub worst: (usize, f64, f64),
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err() < tol
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params.iter().max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

fn new_graph(opts: &GradCheckOptions, pins: &Rc<RefCell<PinnedChoices>>) -> Graph {
    let g = Graph::new(opts.mode, opts.graph_seed);
    if opts.pin_choices {
        g.with_pinned_choices(pins.clone())
    } else {
        g
    }
}

fn eval_loss<F>(f: &F, store: &ParamStore, opts: &GradCheckOptions, pins: &Rc<RefCell<PinnedChoices>>) -> Result<f64>
where
    F: Fn(&Graph, &ParamStore) -> Result<Var>,
{
    let g = new_graph(opts, pins);
    let loss = f(&g, store)?;
    let v = g.value(loss).item();
    Ok(v)
}

/// Compares backward-pass gradients of every parameter in `store` with central differences.
///
/// `f` must build a scalar loss deterministically from the store; the graph seed is
/// fixed so dropout masks repeat across evaluations, and with `pin_choices` the
/// neighbor tables of the analytic pass are reused so that perturbations cannot
/// reorder neighbors.
pub fn check_gradients<F>(store: &mut ParamStore, f: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&Graph, &ParamStore) -> Result<Var>,
{
    store.zero_grad();
    let pins = PinnedChoices::new();
    {
        let g = new_graph(opts, &pins);
        let loss = f(&g, store)?;
        g.backward(loss, store)?;
    }
    pins.borrow_mut().freeze();
    let analytic: Vec<_> = store.params().iter().map(|p| p.grad.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.sample_seed);
    let mut report = Vec::new();
    let ids: Vec<_> = store.ids().collect();
    for (pi, id) in ids.into_iter().enumerate() {
        let len = store.get(id).value.len();
        let entries: Vec<usize> = match opts.max_entries {
            Some(k) if k < len => {
                let mut e = sample(&mut rng, len, k).into_vec();
                e.sort_unstable();
                e
            }
            _ => (0..len).collect(),
        };
        let mut check = ParamCheck {
            name: store.get(id).name.clone(),
            checked: entries.len(),
            max_rel_err: 0.0,
            worst: (0, 0.0, 0.0),
        };
        for e in entries {
            let orig = store.get(id).value.data()[e];
            store.get_mut(id).value.data_mut()[e] = orig + opts.step;
            let up = eval_loss(&f, store, opts, &pins)?;
            store.get_mut(id).value.data_mut()[e] = orig - opts.step;
            let down = eval_loss(&f, store, opts, &pins)?;
            store.get_mut(id).value.data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * opts.step);
            let a = analytic[pi].data()[e];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
            if rel > check.max_rel_err || !rel.is_finite() {
                check.max_rel_err = if rel.is_finite() { rel } else { f64::INFINITY };
                check.worst = (e, a, numeric);
            }
        }
        report.push(check);
    }
    Ok(GradCheckReport { params: report })
}
