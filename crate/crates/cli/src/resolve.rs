//! Turns a parsed config into core objects, collecting field diagnostics.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use distcomm_core::channel_code::JointTypicality;
use distcomm_core::channels::{
    Channel, ChannelKind, ChannelModel, CompoundSet, Medium, ParallelMedium, SharedNoiseMedium,
};
use distcomm_core::layering::{compose, Layer};
use distcomm_core::multiuser::{PairEncoder, PairSpec};
use distcomm_core::prob::{DistortionSpec, Distribution, Kernel};
use distcomm_core::rd::{rate_distortion, DEFAULT_TOL};
use distcomm_core::source_code::make_source_code_channel;
use distcomm_core::{Alphabet, Error, Sequence};

use crate::config::*;
use crate::error::{CliError, Diagnostic};

const SUM_TOLERANCE: f64 = 1e-9;

/// A channel under a user-chosen name.
#[derive(Debug)]
pub struct Labeled {
    inner: Arc<dyn Channel>,
    label: String,
}

impl Channel for Labeled {
    fn label(&self) -> &str {
        &self.label
    }

    fn input_alphabet(&self) -> &Alphabet {
        self.inner.input_alphabet()
    }

    fn output_alphabet(&self) -> &Alphabet {
        self.inner.output_alphabet()
    }

    fn transmit(
        &self,
        x: &Sequence,
        rng: &mut distcomm_core::SeededRng,
    ) -> distcomm_core::Result<Sequence> {
        self.inner.transmit(x, rng)
    }
}

#[derive(Clone, Debug)]
pub struct Certify {
    pub n_list: Vec<usize>,
    pub trials: usize,
    pub max_excess: f64,
}

/// Source law, fidelity criterion and target distortion.
#[derive(Clone, Debug)]
pub struct Fidelity {
    pub p: Distribution,
    pub d: DistortionSpec,
    pub target: f64,
}

#[derive(Clone, Debug)]
pub struct MultiSeparation {
    pub payloads: Vec<Fidelity>,
    pub certify: Certify,
    pub source_margin: f64,
    pub channel_margin: f64,
    pub n_list: Vec<usize>,
    pub trials: usize,
}

pub enum Body {
    Rd {
        src: Fidelity,
        grid: Vec<f64>,
        tol: f64,
    },
    Exponent {
        src: Fidelity,
        eps_grid: Vec<f64>,
        tol: f64,
    },
    Source {
        src: Fidelity,
        codeword_law: Option<Distribution>,
        rates: Vec<f64>,
        n_list: Vec<usize>,
        trials: usize,
    },
    Reliability {
        rule: JointTypicality,
        set: CompoundSet,
        rates: Vec<f64>,
        n_list: Vec<usize>,
        messages_sampled: usize,
        trials_per_message: usize,
        certify: Option<Certify>,
    },
    Separation {
        src: Fidelity,
        pipe: Fidelity,
        set: CompoundSet,
        certify: Certify,
        source_margin: f64,
        channel_rate: f64,
        eps: f64,
        n_list: Vec<usize>,
        trials: usize,
    },
    Multiuser {
        medium: Arc<dyn Medium>,
        pairs: Vec<PairSpec>,
        modes: Vec<Mode>,
        eps: f64,
        n_list: Vec<usize>,
        trials: usize,
        messages_sampled: usize,
        trials_per_message: usize,
        induction: Option<InductionDecl>,
        separation: Option<MultiSeparation>,
    },
    Equivalence {
        pipe: Fidelity,
        channel: Arc<dyn Channel>,
        payload: Fidelity,
        certify: Certify,
        params: distcomm_core::layering::EquivalenceParams,
    },
    SanovCheck {
        src: Fidelity,
        eps: f64,
        rate: f64,
        n_list: Vec<usize>,
        y_types: Vec<Distribution>,
    },
}

pub struct Plan {
    pub kind: &'static str,
    pub seed: u64,
    pub output: String,
    pub body: Body,
}

struct Resolver {
    alphabets: BTreeMap<String, Alphabet>,
    diags: Vec<Diagnostic>,
    fatal: Option<Error>,
}

fn join(path: &str, field: &str) -> String {
    if path.is_empty() {
        field.to_string()
    } else {
        format!("{path}.{field}")
    }
}

impl Resolver {
    fn err(&mut self, path: impl Into<String>, msg: impl Into<String>) {
        self.diags.push(Diagnostic::new(path, msg));
    }

    fn core<T>(&mut self, r: distcomm_core::Result<T>, path: &str) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(Error::InvalidArgument(m)) => {
                self.err(path, m);
                None
            }
            Err(e) => {
                self.fatal.get_or_insert(e);
                None
            }
        }
    }

    fn alphabet(&mut self, name: &str, path: &str) -> Option<Alphabet> {
        match self.alphabets.get(name) {
            Some(a) => Some(a.clone()),
            None => {
                self.err(path, format!("undeclared alphabet {name:?}"));
                None
            }
        }
    }

    fn dist(&mut self, d: &DistDecl, path: &str) -> Option<Distribution> {
        let a = self.alphabet(&d.alphabet, &join(path, "alphabet"))?;
        let probs_path = join(path, "probs");
        if d.probs.len() != a.size() {
            self.err(
                probs_path,
                format!(
                    "{} entries for alphabet {:?} of size {}",
                    d.probs.len(),
                    d.alphabet,
                    a.size()
                ),
            );
            return None;
        }
        if let Some(i) = d
            .probs
            .iter()
            .position(|p| !p.is_finite() || *p < 0.0 || *p > 1.0)
        {
            self.err(format!("{probs_path}[{i}]"), "must lie in [0, 1]");
            return None;
        }
        let sum: f64 = d.probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            self.err(probs_path, format!("sums to {sum}, expected 1"));
            return None;
        }
        self.core(Distribution::new(a, d.probs.clone()), path)
    }

    fn distortion(&mut self, d: &DistortionDecl, path: &str) -> Option<DistortionSpec> {
        let i = self.alphabet(&d.input, &join(path, "input"));
        let o = self.alphabet(&d.output, &join(path, "output"));
        let (i, o) = (i?, o?);
        match &d.matrix {
            MatrixDecl::Named(s) if s == "hamming" => {
                if i != o {
                    self.err(
                        join(path, "matrix"),
                        "hamming needs equal input and output alphabets",
                    );
                    return None;
                }
                Some(DistortionSpec::hamming(i))
            }
            MatrixDecl::Named(s) => {
                self.err(
                    join(path, "matrix"),
                    format!("unknown matrix {s:?}, expected \"hamming\" or rows"),
                );
                None
            }
            MatrixDecl::Rows(rows) => {
                self.core(DistortionSpec::new(i, o, rows), &join(path, "matrix"))
            }
        }
    }

    fn fidelity(
        &mut self,
        p: &DistDecl,
        d: &DistortionDecl,
        target: f64,
        path: &str,
        src_field: &str,
    ) -> Option<Fidelity> {
        let p = self.dist(p, &join(path, src_field));
        let d = self.distortion(d, &join(path, "distortion"));
        self.nonneg(target, &join(path, "target"));
        let (p, d) = (p?, d?);
        if p.alphabet() != d.input() {
            self.err(
                join(path, "distortion.input"),
                "differs from the source alphabet",
            );
            return None;
        }
        Some(Fidelity { p, d, target })
    }

    fn kernel(&mut self, k: &KernelDecl, path: &str) -> Option<Kernel> {
        match k {
            KernelDecl::Bsc { flip } => self.core(Kernel::bsc(*flip), &join(path, "flip")),
            KernelDecl::Matrix {
                input,
                output,
                rows,
            } => {
                let i = self.alphabet(input, &join(path, "input"));
                let o = self.alphabet(output, &join(path, "output"));
                self.core(Kernel::new(i?, o?, rows), &join(path, "rows"))
            }
        }
    }

    fn kernels(&mut self, ks: &[KernelDecl], path: &str) -> Option<Vec<Kernel>> {
        if ks.is_empty() {
            self.err(path, "must not be empty");
            return None;
        }
        let out: Vec<Option<Kernel>> = ks
            .iter()
            .enumerate()
            .map(|(i, k)| self.kernel(k, &format!("{path}[{i}]")))
            .collect();
        out.into_iter().collect()
    }

    fn channel(&mut self, c: &ChannelDecl, path: &str) -> Option<Arc<dyn Channel>> {
        let (ch, label): (Arc<dyn Channel>, &Option<String>) = match c {
            ChannelDecl::Bsc { flip, label } => (
                Arc::new(self.core(ChannelModel::bsc(*flip), &join(path, "flip"))?),
                label,
            ),
            ChannelDecl::Identity { alphabet, label } => {
                let a = self.alphabet(alphabet, &join(path, "alphabet"))?;
                (
                    Arc::new(ChannelModel::dmc("identity", Kernel::identity(a))),
                    label,
                )
            }
            ChannelDecl::Dmc { kernel, label } => {
                let k = self.kernel(kernel, &join(path, "kernel"))?;
                (Arc::new(ChannelModel::dmc("dmc", k)), label)
            }
            ChannelDecl::SlidingWindow {
                window,
                driver,
                kernels,
                label,
            } => {
                let driver = self.dist(driver, &join(path, "driver"));
                let kernels = self.kernels(kernels, &join(path, "kernels"));
                let kind = ChannelKind::SlidingWindowNoise {
                    window: *window,
                    driver: driver?,
                    kernels: kernels?,
                };
                let name = format!("sliding-window({window})");
                (
                    Arc::new(self.core(ChannelModel::new(name, kind), path)?),
                    label,
                )
            }
            ChannelDecl::Switch {
                period,
                kernels,
                label,
            } => {
                let kernels = self.kernels(kernels, &join(path, "kernels"))?;
                let kind = ChannelKind::AdversarialSwitch {
                    kernels,
                    period: *period,
                };
                let name = format!("switch({period})");
                (
                    Arc::new(self.core(ChannelModel::new(name, kind), path)?),
                    label,
                )
            }
            ChannelDecl::SourceCode {
                source,
                distortion,
                target,
                margin,
                n_family,
                seed,
                label,
            } => {
                let f = self.fidelity(source, distortion, *target, path, "source")?;
                if !self.n_list(n_family, &join(path, "n_family")) {
                    return None;
                }
                let ch = make_source_code_channel(&f.p, &f.d, f.target, *margin, n_family, *seed);
                (Arc::new(self.core(ch, path)?), label)
            }
            ChannelDecl::Layered {
                base,
                layers,
                label,
            } => {
                let mut ch = self.channel(base, &join(path, "base"))?;
                for (i, l) in layers.iter().enumerate() {
                    let a = ch.input_alphabet().clone();
                    let layer = match l {
                        LayerDecl::Scrambler { seed } => Layer::scrambler(a, *seed),
                        LayerDecl::Interleaver { seed } => Layer::interleaver(a, *seed),
                    };
                    ch = Arc::new(self.core(compose(ch, layer), &format!("{path}.layers[{i}]"))?);
                }
                (ch, label)
            }
        };
        Some(match label {
            Some(l) => Arc::new(Labeled {
                inner: ch,
                label: l.clone(),
            }),
            None => ch,
        })
    }

    fn compound(&mut self, cs: &[ChannelDecl], path: &str) -> Option<CompoundSet> {
        if cs.is_empty() {
            self.err(path, "must not be empty");
            return None;
        }
        let members: Vec<Option<Arc<dyn Channel>>> = cs
            .iter()
            .enumerate()
            .map(|(i, c)| self.channel(c, &format!("{path}[{i}]")))
            .collect();
        let members: Vec<Arc<dyn Channel>> = members.into_iter().collect::<Option<_>>()?;
        let mut seen = HashSet::new();
        for (i, m) in members.iter().enumerate() {
            if !seen.insert(m.label().to_string()) {
                self.err(
                    format!("{path}[{i}]"),
                    format!("duplicate channel label {:?}; set `label`", m.label()),
                );
                return None;
            }
        }
        self.core(CompoundSet::new(members), path)
    }

    fn nonneg(&mut self, v: f64, path: &str) -> bool {
        let ok = v.is_finite() && v >= 0.0;
        if !ok {
            self.err(path, format!("must be finite and >= 0, got {v}"));
        }
        ok
    }

    fn positive(&mut self, v: f64, path: &str) -> bool {
        let ok = v.is_finite() && v > 0.0;
        if !ok {
            self.err(path, format!("must be finite and > 0, got {v}"));
        }
        ok
    }

    fn count(&mut self, v: usize, path: &str) -> bool {
        if v == 0 {
            self.err(path, "must be >= 1");
        }
        v > 0
    }

    fn n_list(&mut self, ns: &[usize], path: &str) -> bool {
        if ns.is_empty() {
            self.err(path, "must not be empty");
            return false;
        }
        if let Some(i) = ns.iter().position(|&n| n == 0) {
            self.err(format!("{path}[{i}]"), "blocklength must be >= 1");
            return false;
        }
        true
    }

    fn grid(&mut self, vs: &[f64], path: &str) -> bool {
        if vs.is_empty() {
            self.err(path, "must not be empty");
            return false;
        }
        vs.iter()
            .enumerate()
            .all(|(i, &v)| self.nonneg(v, &format!("{path}[{i}]")))
    }

    fn certify(&mut self, c: &CertifyDecl, path: &str) -> Certify {
        self.n_list(&c.n_list, &join(path, "n_list"));
        if c.trials < 100 {
            self.err(
                join(path, "trials"),
                "certification needs at least 100 trials",
            );
        }
        if !(0.0..=1.0).contains(&c.max_excess) {
            self.err(join(path, "max_excess"), "must lie in [0, 1]");
        }
        Certify {
            n_list: c.n_list.clone(),
            trials: c.trials,
            max_excess: c.max_excess,
        }
    }

    fn medium(&mut self, m: &MediumDecl, path: &str) -> Option<Arc<dyn Medium>> {
        match m {
            MediumDecl::Parallel {
                users,
                pairs,
                channels,
            } => {
                let chans: Vec<Option<Arc<dyn Channel>>> = channels
                    .iter()
                    .enumerate()
                    .map(|(i, c)| self.channel(c, &format!("{path}.channels[{i}]")))
                    .collect();
                let chans = chans.into_iter().collect::<Option<Vec<_>>>()?;
                let m = ParallelMedium::new(*users, pairs.clone(), chans);
                Some(Arc::new(self.core(m, path)?))
            }
            MediumDecl::SharedNoise {
                users,
                pairs,
                alphabet,
                common,
                private,
            } => {
                let a = self.alphabet(alphabet, &join(path, "alphabet"))?;
                let m = SharedNoiseMedium::new(*users, pairs.clone(), a, *common, *private);
                Some(Arc::new(self.core(m, path)?))
            }
        }
    }

    fn pair(&mut self, k: usize, p: &PairDecl, path: &str) -> Option<PairSpec> {
        let f = self.fidelity(&p.source, &p.distortion, p.target, path, "source")?;
        let rate = match (p.rate, p.rate_fraction) {
            (Some(r), None) => self.positive(r, &join(path, "rate")).then_some(r)?,
            (None, Some(frac)) => {
                if !self.positive(frac, &join(path, "rate_fraction")) {
                    return None;
                }
                let rd = self.core(
                    rate_distortion(&f.p, &f.d, f.target, DEFAULT_TOL),
                    &join(path, "target"),
                )?;
                frac * rd.rate_bits
            }
            _ => {
                self.err(path, "set exactly one of `rate` and `rate_fraction`");
                return None;
            }
        };
        let mut spec = PairSpec::new(f.p, f.d, f.target, rate, p.seed_tag.unwrap_or(k as u64));
        spec.encoder = match p.encoder {
            None | Some(EncoderDecl::Random) => PairEncoder::RandomCode,
            Some(EncoderDecl::Constant(s)) => PairEncoder::Constant(s),
        };
        Some(spec)
    }

    fn body(&mut self, e: &Experiment) -> Option<Body> {
        let path = "experiment";
        let tol = |t: Option<f64>| t.unwrap_or(DEFAULT_TOL);
        match e {
            Experiment::Rd(x) => {
                let src = self.fidelity(&x.source, &x.distortion, 0.0, path, "source");
                let ok = self.grid(&x.d_grid, "experiment.d_grid");
                ok.then_some(())?;
                Some(Body::Rd {
                    src: src?,
                    grid: x.d_grid.clone(),
                    tol: tol(x.tol),
                })
            }
            Experiment::Exponent(x) => {
                let src = self.fidelity(&x.source, &x.distortion, x.target, path, "source");
                self.grid(&x.eps_grid, "experiment.eps_grid")
                    .then_some(())?;
                Some(Body::Exponent {
                    src: src?,
                    eps_grid: x.eps_grid.clone(),
                    tol: tol(x.tol),
                })
            }
            Experiment::Source(x) => {
                let src = self.fidelity(&x.source, &x.distortion, x.target, path, "source");
                let law = x
                    .codeword_law
                    .as_ref()
                    .map(|q| self.dist(q, "experiment.codeword_law"));
                let ok = [
                    self.rates(&x.rates, "experiment.rates"),
                    self.n_list(&x.n_list, "experiment.n_list"),
                    self.count(x.trials, "experiment.trials"),
                ];
                ok.iter().all(|&b| b).then_some(())?;
                let codeword_law = match law {
                    Some(q) => Some(q?),
                    None => None,
                };
                Some(Body::Source {
                    src: src?,
                    codeword_law,
                    rates: x.rates.clone(),
                    n_list: x.n_list.clone(),
                    trials: x.trials,
                })
            }
            Experiment::Reliability(x) => {
                let src = self.fidelity(&x.input, &x.distortion, x.target, path, "input");
                let set = self.compound(&x.channels, "experiment.channels");
                let certify = x
                    .certify
                    .as_ref()
                    .map(|c| self.certify(c, "experiment.certify"));
                let ok = [
                    self.nonneg(x.eps, "experiment.eps"),
                    self.rates(&x.rates, "experiment.rates"),
                    self.n_list(&x.n_list, "experiment.n_list"),
                    self.count(x.messages_sampled, "experiment.messages_sampled"),
                    self.count(x.trials_per_message, "experiment.trials_per_message"),
                ];
                let (src, set) = (src?, set?);
                ok.iter().all(|&b| b).then_some(())?;
                let rule = self
                    .core(JointTypicality::new(src.p, x.eps, src.d, src.target), path)?
                    .with_eps_in_distortion(x.eps_in_distortion);
                Some(Body::Reliability {
                    rule,
                    set,
                    rates: x.rates.clone(),
                    n_list: x.n_list.clone(),
                    messages_sampled: x.messages_sampled,
                    trials_per_message: x.trials_per_message,
                    certify,
                })
            }
            Experiment::Separation(x) => {
                let src = self.fidelity(&x.source, &x.distortion, x.target, path, "source");
                let pipe = self.fidelity(
                    &x.pipe.source,
                    &x.pipe.distortion,
                    x.pipe.target,
                    "experiment.pipe",
                    "source",
                );
                let set = self.compound(&x.channels, "experiment.channels");
                let certify = self.certify(&x.certify, "experiment.certify");
                let ok = [
                    self.positive(x.source_margin, "experiment.source_margin"),
                    self.positive(x.channel_rate, "experiment.channel_rate"),
                    self.nonneg(x.eps, "experiment.eps"),
                    self.n_list(&x.n_list, "experiment.n_list"),
                    self.count(x.trials, "experiment.trials"),
                ];
                let (src, pipe, set) = (src?, pipe?, set?);
                ok.iter().all(|&b| b).then_some(())?;
                Some(Body::Separation {
                    src,
                    pipe,
                    set,
                    certify,
                    source_margin: x.source_margin,
                    channel_rate: x.channel_rate,
                    eps: x.eps,
                    n_list: x.n_list.clone(),
                    trials: x.trials,
                })
            }
            Experiment::Multiuser(x) => self.multiuser(x),
            Experiment::Equivalence(x) => {
                let pipe = self.fidelity(
                    &x.pipe.source,
                    &x.pipe.distortion,
                    x.pipe.target,
                    "experiment.pipe",
                    "source",
                );
                let channel = self.channel(&x.pipe.channel, "experiment.pipe.channel");
                let payload = self.fidelity(
                    &x.payload.source,
                    &x.payload.distortion,
                    x.payload.target,
                    "experiment.payload",
                    "source",
                );
                let certify = self.certify(&x.certify, "experiment.certify");
                let d = distcomm_core::layering::EquivalenceParams::default();
                let params = distcomm_core::layering::EquivalenceParams {
                    margin: x.margin.unwrap_or(d.margin),
                    source_fraction: x.source_fraction.unwrap_or(d.source_fraction),
                    channel_fraction: x.channel_fraction.unwrap_or(d.channel_fraction),
                    eps: x.eps.unwrap_or(d.eps),
                    n_list: x.n_list.clone().unwrap_or(d.n_list),
                    trials: x.trials.unwrap_or(d.trials),
                    seed: 0,
                };
                let ok = [
                    self.nonneg(params.margin, "experiment.margin"),
                    self.nonneg(params.eps, "experiment.eps"),
                    self.n_list(&params.n_list, "experiment.n_list"),
                    self.count(params.trials, "experiment.trials"),
                ];
                let (pipe, channel, payload) = (pipe?, channel?, payload?);
                ok.iter().all(|&b| b).then_some(())?;
                Some(Body::Equivalence {
                    pipe,
                    channel,
                    payload,
                    certify,
                    params,
                })
            }
            Experiment::SanovCheck(x) => {
                let src = self.fidelity(&x.source, &x.distortion, x.target, path, "source");
                let ys: Vec<Option<Distribution>> = x
                    .y_types
                    .iter()
                    .enumerate()
                    .map(|(i, y)| self.dist(y, &format!("experiment.y_types[{i}]")))
                    .collect();
                let ok = [
                    self.nonneg(x.eps, "experiment.eps"),
                    self.positive(x.rate, "experiment.rate"),
                    self.n_list(&x.n_list, "experiment.n_list"),
                    !x.y_types.is_empty() || {
                        self.err("experiment.y_types", "must not be empty");
                        false
                    },
                ];
                let src = src?;
                let y_types = ys.into_iter().collect::<Option<Vec<_>>>()?;
                ok.iter().all(|&b| b).then_some(())?;
                Some(Body::SanovCheck {
                    src,
                    eps: x.eps,
                    rate: x.rate,
                    n_list: x.n_list.clone(),
                    y_types,
                })
            }
        }
    }

    fn rates(&mut self, rs: &[f64], path: &str) -> bool {
        if rs.is_empty() {
            self.err(path, "must not be empty");
            return false;
        }
        rs.iter()
            .enumerate()
            .all(|(i, &r)| self.positive(r, &format!("{path}[{i}]")))
    }

    fn multiuser(&mut self, x: &MultiuserExp) -> Option<Body> {
        let medium = self.medium(&x.medium, "experiment.medium");
        let pairs: Vec<Option<PairSpec>> = x
            .pairs
            .iter()
            .enumerate()
            .map(|(k, p)| self.pair(k, p, &format!("experiment.pairs[{k}]")))
            .collect();
        let mut ok =
            self.nonneg(x.eps, "experiment.eps") & self.n_list(&x.n_list, "experiment.n_list");
        if x.modes.is_empty() {
            self.err("experiment.modes", "must not be empty");
            ok = false;
        }
        let need = |this: &mut Self, v: Option<usize>, field: &str, mode: &str| -> usize {
            match v {
                Some(v) => {
                    this.count(v, &format!("experiment.{field}"));
                    v
                }
                None => {
                    this.err(
                        format!("experiment.{field}"),
                        format!("required by mode {mode:?}"),
                    );
                    0
                }
            }
        };
        let trials = if x.modes.contains(&Mode::Direct) {
            need(self, x.trials, "trials", "direct")
        } else {
            x.trials.unwrap_or(0)
        };
        let (mut messages_sampled, mut trials_per_message) = (0, 0);
        if x.modes.contains(&Mode::Reliable) {
            messages_sampled = need(self, x.messages_sampled, "messages_sampled", "reliable");
            trials_per_message = need(self, x.trials_per_message, "trials_per_message", "reliable");
        }
        if x.modes.contains(&Mode::Induction) {
            match &x.induction {
                Some(i) => {
                    self.count(i.n, "experiment.induction.n");
                    self.count(i.trials, "experiment.induction.trials");
                    self.positive(i.threshold, "experiment.induction.threshold");
                }
                None => self.err("experiment.induction", "required by mode \"induction\""),
            }
        }
        let separation = if x.modes.contains(&Mode::Separation) {
            match &x.separation {
                Some(s) => self.multi_separation(s, x.pairs.len()),
                None => {
                    self.err("experiment.separation", "required by mode \"separation\"");
                    None
                }
            }
        } else {
            None
        };
        let medium = medium?;
        let pairs = pairs.into_iter().collect::<Option<Vec<_>>>()?;
        if pairs.len() != medium.pairs().len() {
            self.err(
                "experiment.pairs",
                format!(
                    "{} entries for a medium with {} pairs",
                    pairs.len(),
                    medium.pairs().len()
                ),
            );
            return None;
        }
        ok.then_some(())?;
        Some(Body::Multiuser {
            medium,
            pairs,
            modes: x.modes.clone(),
            eps: x.eps,
            n_list: x.n_list.clone(),
            trials,
            messages_sampled,
            trials_per_message,
            induction: x.induction.clone(),
            separation,
        })
    }

    fn multi_separation(&mut self, s: &MultiSeparationDecl, np: usize) -> Option<MultiSeparation> {
        let path = "experiment.separation";
        if s.payloads.len() != np {
            self.err(
                join(path, "payloads"),
                format!("{} entries for {np} pairs", s.payloads.len()),
            );
        }
        let payloads: Vec<Option<Fidelity>> = s
            .payloads
            .iter()
            .enumerate()
            .map(|(k, p)| {
                self.fidelity(
                    &p.source,
                    &p.distortion,
                    p.target,
                    &format!("{path}.payloads[{k}]"),
                    "source",
                )
            })
            .collect();
        let certify = self.certify(&s.certify, &join(path, "certify"));
        let ok = [
            self.positive(s.source_margin, &join(path, "source_margin")),
            self.positive(s.channel_margin, &join(path, "channel_margin")),
            self.n_list(&s.n_list, &join(path, "n_list")),
            self.count(s.trials, &join(path, "trials")),
        ];
        let payloads = payloads.into_iter().collect::<Option<Vec<_>>>()?;
        ok.iter().all(|&b| b).then_some(())?;
        Some(MultiSeparation {
            payloads,
            certify,
            source_margin: s.source_margin,
            channel_margin: s.channel_margin,
            n_list: s.n_list.clone(),
            trials: s.trials,
        })
    }
}

/// Validates `cfg` fully and builds everything needed to run it.
pub fn resolve(cfg: &ExperimentConfig) -> Result<Plan, CliError> {
    let mut r = Resolver {
        alphabets: BTreeMap::new(),
        diags: Vec::new(),
        fatal: None,
    };
    for (name, decl) in &cfg.alphabets {
        let a = match decl {
            AlphabetDecl::Size(k) => Alphabet::indexed(*k),
            AlphabetDecl::Symbols(s) => Alphabet::new(s.iter().cloned()),
        };
        if let Some(a) = r.core(a, &format!("alphabets.{name}")) {
            r.alphabets.insert(name.clone(), a);
        }
    }
    let body = r.body(&cfg.experiment);
    if let Some(e) = r.fatal {
        return Err(e.into());
    }
    match body {
        Some(body) if r.diags.is_empty() => {
            let kind = cfg.experiment.kind();
            Ok(Plan {
                kind,
                seed: cfg.seed.unwrap_or(0),
                output: cfg.output.clone().unwrap_or_else(|| format!("{kind}.csv")),
                body,
            })
        }
        _ => {
            if r.diags.is_empty() {
                r.err("experiment", "invalid experiment");
            }
            Err(CliError::Schema(r.diags))
        }
    }
}
