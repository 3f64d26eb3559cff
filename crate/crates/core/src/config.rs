//! Declarative run configuration.
//!
//! Flat TOML key-value files; unknown keys are rejected so typos in
//! experiment configs fail loudly. Every field has a default tied to the
//! problem kind, so a minimal file is just `problem = "diffusion"`.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fem::build_mesh;
use crate::gpc::enumerate_indices;
use crate::krylov::{KrylovConfig, KrylovMethod};
use crate::problem::{build_diffusion, build_helmholtz, AffineProblem, ProblemKind};
use crate::randfield::kl_2d;
use crate::rbsgm::RbsgmConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Sgm,
    Rbsgm,
    Compare,
}

/// Raw file schema: everything optional except the problem kind.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: String,
    rect: Option<[f64; 4]>,
    n: Option<usize>,
    m: Option<usize>,
    p: Option<usize>,
    mean: Option<f64>,
    sigma: Option<f64>,
    corr_len: Option<f64>,
    tol: Option<f64>,
    ns: Option<usize>,
    nmax: Option<usize>,
    training: Option<usize>,
    seed: Option<u64>,
    mode: Option<String>,
}

/// A fully resolved experiment configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    #[serde(serialize_with = "serialize_kind")]
    pub kind: ProblemKind,
    /// x0, x1, y0, y1.
    pub rect: [f64; 4],
    /// Nodes per side (nominal N_h = n^2).
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub mean: f64,
    pub sigma: f64,
    pub corr_len: f64,
    pub tol: f64,
    pub ns: usize,
    pub nmax: usize,
    pub training: usize,
    pub seed: u64,
    pub mode: RunMode,
}

fn serialize_kind<S: serde::Serializer>(
    kind: &ProblemKind,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(match kind {
        ProblemKind::Diffusion => "diffusion",
        ProblemKind::HelmholtzDirichlet => "helmholtz-dirichlet",
    })
}

impl RunConfig {
    /// Defaults of the diffusion test problem (unit source on [-1,1]^2).
    pub fn diffusion_defaults() -> RunConfig {
        RunConfig {
            kind: ProblemKind::Diffusion,
            rect: [-1.0, 1.0, -1.0, 1.0],
            n: 33,
            m: 5,
            p: 5,
            mean: 0.2,
            sigma: 0.1,
            corr_len: 1.0,
            tol: 1e-4,
            ns: 15,
            nmax: 200,
            training: 500,
            seed: 1,
            mode: RunMode::Rbsgm,
        }
    }

    /// Defaults of the Helmholtz-type test problem (Gaussian point source on
    /// the unit square, wavenumber field around 8 pi).
    pub fn helmholtz_defaults() -> RunConfig {
        let mu = 8.0 * std::f64::consts::PI;
        RunConfig {
            kind: ProblemKind::HelmholtzDirichlet,
            rect: [0.0, 1.0, 0.0, 1.0],
            n: 33,
            m: 5,
            p: 4,
            mean: mu,
            sigma: 0.1 * mu,
            corr_len: 4.0,
            tol: 1e-4,
            ns: 10,
            nmax: 200,
            training: 400,
            seed: 1,
            mode: RunMode::Rbsgm,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        let mut cfg = match raw.problem.as_str() {
            "diffusion" => RunConfig::diffusion_defaults(),
            "helmholtz-dirichlet" => RunConfig::helmholtz_defaults(),
            other => {
                return Err(Error::Config(format!(
                    "unknown problem kind '{other}' (expected 'diffusion' or 'helmholtz-dirichlet')"
                )))
            }
        };
        if let Some(r) = raw.rect {
            cfg.rect = r;
        }
        if let Some(v) = raw.n {
            cfg.n = v;
        }
        if let Some(v) = raw.m {
            cfg.m = v;
        }
        if let Some(v) = raw.p {
            cfg.p = v;
        }
        if let Some(v) = raw.mean {
            cfg.mean = v;
        }
        if let Some(v) = raw.sigma {
            cfg.sigma = v;
        }
        if let Some(v) = raw.corr_len {
            cfg.corr_len = v;
        }
        if let Some(v) = raw.tol {
            cfg.tol = v;
        }
        if let Some(v) = raw.ns {
            cfg.ns = v;
        }
        if let Some(v) = raw.nmax {
            cfg.nmax = v;
        }
        if let Some(v) = raw.training {
            cfg.training = v;
        }
        if let Some(v) = raw.seed {
            cfg.seed = v;
        }
        if let Some(mode) = raw.mode {
            cfg.mode = match mode.as_str() {
                "sgm" => RunMode::Sgm,
                "rbsgm" => RunMode::Rbsgm,
                "compare" => RunMode::Compare,
                other => return Err(Error::Config(format!("unknown mode '{other}'"))),
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::Config("n must be >= 3".into()));
        }
        if self.m == 0 {
            return Err(Error::Config("m must be >= 1".into()));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::Config("tol must lie in (0,1)".into()));
        }
        if self.ns == 0 || self.ns > self.nmax {
            return Err(Error::Config("need 1 <= ns <= nmax".into()));
        }
        if self.training == 0 {
            return Err(Error::Config("training size must be >= 1".into()));
        }
        if self.rect[0] >= self.rect[1] || self.rect[2] >= self.rect[3] {
            return Err(Error::Config("rectangle is empty".into()));
        }
        if self.corr_len <= 0.0 {
            return Err(Error::Config("corr_len must be > 0".into()));
        }
        if self.sigma < 0.0 {
            return Err(Error::Config("sigma must be >= 0".into()));
        }
        Ok(())
    }

    /// CG for the SPD diffusion systems, Bi-CGSTAB for the indefinite
    /// Helmholtz-type systems.
    pub fn krylov_method(&self) -> KrylovMethod {
        match self.kind {
            ProblemKind::Diffusion => KrylovMethod::Cg,
            ProblemKind::HelmholtzDirichlet => KrylovMethod::BiCgStab,
        }
    }

    /// Krylov settings for full SGM solves at the run tolerance.
    pub fn full_krylov(&self) -> KrylovConfig {
        KrylovConfig::new(self.tol, 5000, self.krylov_method())
    }

    /// Reduced solves run one decade tighter than the target residual so the
    /// inner solver error never dominates the reported global residual.
    pub fn rbsgm_config(&self) -> RbsgmConfig {
        RbsgmConfig {
            tol: self.tol,
            ns: self.ns,
            nmax: self.nmax,
            krylov: KrylovConfig::new(self.tol / 10.0, 5000, self.krylov_method()),
            seed: self.seed,
            training_size: self.training,
            check_cardinality: false,
        }
    }

    pub fn source(&self) -> Box<dyn Fn(f64, f64) -> f64 + Send + Sync> {
        match self.kind {
            ProblemKind::Diffusion => Box::new(|_, _| 1.0),
            ProblemKind::HelmholtzDirichlet => {
                let s = 8.0 * 4.0;
                let cx = 0.5 * (self.rect[0] + self.rect[1]);
                let cy = 0.5 * (self.rect[2] + self.rect[3]);
                Box::new(move |x, y| {
                    (-(s * s) * ((x - cx).powi(2) + (y - cy).powi(2))).exp()
                })
            }
        }
    }

    /// Assemble the mesh, KL field, gPC basis and both operator families.
    /// `p_override` swaps the gPC order (used for reference solutions).
    pub fn build_problem(&self, p_override: Option<usize>) -> Result<AffineProblem> {
        let p = p_override.unwrap_or(self.p);
        let mesh = build_mesh(
            (self.rect[0], self.rect[1]),
            (self.rect[2], self.rect[3]),
            self.n,
        )?;
        let field = kl_2d(
            [self.corr_len, self.corr_len],
            (self.rect[0], self.rect[1]),
            (self.rect[2], self.rect[3]),
            self.m,
            &mesh.xs,
            &mesh.ys,
            self.mean,
            self.sigma,
        )?;
        let basis = enumerate_indices(self.m, p)?;
        let source = self.source();
        match self.kind {
            ProblemKind::Diffusion => build_diffusion(mesh, field, basis, &source),
            ProblemKind::HelmholtzDirichlet => build_helmholtz(mesh, field, basis, &source),
        }
    }
}
