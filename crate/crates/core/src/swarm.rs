//! Swarm description and the plant/target recursions.
//!
//! Per agent `m` the plant is `x_m(t+1) = Σ_n A_mn x_n(t) + B_m û_m(t) + w_m(t)`,
//! assembled into the global form `x(t+1) = A x(t) + Σ_m B̂_m û_m(t) + ŵ(t)` with
//! `B̂_m` the actuation matrix placed at block row `m`. The target evolves as
//! `r(t+1) = G r(t)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::ensure_finite;
use crate::rng::{normal_matrix, normal_vector, stream_rng, Stream};
use crate::{Error, Matrix, Result, Vector};

/// Default per-agent plant noise variance.
pub const DEFAULT_NOISE_SCALE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub row: usize,
    pub col: usize,
    pub block: Matrix,
}

/// Static system matrices. Immutable once built; the global transition matrix
/// and the plant-noise square roots are derived at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TopologyDoc", try_from = "TopologyDoc")]
pub struct SwarmTopology {
    agent_count: usize,
    state_dim: usize,
    rx_dim: usize,
    tx_dim: usize,
    internal: Vec<Matrix>,
    coupling: Vec<Coupling>,
    actuation: Vec<Matrix>,
    plant_noise: Vec<Matrix>,
    target_transition: Matrix,
    global_transition: Matrix,
    noise_sqrt: Vec<Matrix>,
}

impl SwarmTopology {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        state_dim: usize,
        rx_dim: usize,
        tx_dim: usize,
        internal: Vec<Matrix>,
        coupling: Vec<Coupling>,
        actuation: Vec<Matrix>,
        plant_noise: Vec<Matrix>,
        target_transition: Matrix,
    ) -> Result<Self> {
        let m = internal.len();
        if m == 0 {
            return Err(Error::param("agent_count", "must be >= 1"));
        }
        if state_dim == 0 || rx_dim == 0 || tx_dim == 0 {
            return Err(Error::param("dims", "state, rx and tx dimensions must be >= 1"));
        }
        let d = state_dim;
        let n = d * m;
        for a in &internal {
            check_shape(a, d, d, "internal block")?;
            ensure_finite(a, "internal block")?;
        }
        for c in &coupling {
            if c.row >= m || c.col >= m {
                return Err(Error::dim("coupling index", format!("< {m}"), format!("({}, {})", c.row, c.col)));
            }
            if c.row == c.col {
                return Err(Error::param("coupling", "diagonal blocks belong in `internal`"));
            }
            check_shape(&c.block, d, d, "coupling block")?;
            ensure_finite(&c.block, "coupling block")?;
        }
        if actuation.len() != m {
            return Err(Error::dim("actuation count", m, actuation.len()));
        }
        for b in &actuation {
            check_shape(b, d, rx_dim, "actuation block")?;
            ensure_finite(b, "actuation block")?;
        }
        if plant_noise.len() != m {
            return Err(Error::dim("plant noise count", m, plant_noise.len()));
        }
        let mut noise_sqrt = Vec::with_capacity(m);
        for w in &plant_noise {
            check_shape(w, d, d, "plant noise covariance")?;
            ensure_finite(w, "plant noise covariance")?;
            if (w - w.transpose()).amax() > 1e-12 * (1.0 + w.amax()) {
                return Err(Error::param("plant_noise", "covariance must be symmetric"));
            }
            let eig = w.clone().symmetric_eigen();
            if eig.eigenvalues.iter().any(|&l| l < -1e-12) {
                return Err(Error::param("plant_noise", "covariance must be positive semidefinite"));
            }
            let root = Vector::from_iterator(d, eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()));
            noise_sqrt.push(&eig.eigenvectors * Matrix::from_diagonal(&root));
        }
        check_shape(&target_transition, n, n, "target transition")?;
        ensure_finite(&target_transition, "target transition")?;

        let mut global = Matrix::zeros(n, n);
        for (i, a) in internal.iter().enumerate() {
            global.view_mut((i * d, i * d), (d, d)).copy_from(a);
        }
        for c in &coupling {
            let mut view = global.view_mut((c.row * d, c.col * d), (d, d));
            view += &c.block;
        }

        Ok(Self {
            agent_count: m,
            state_dim: d,
            rx_dim,
            tx_dim,
            internal,
            coupling,
            actuation,
            plant_noise,
            target_transition,
            global_transition: global,
            noise_sqrt,
        })
    }

    pub fn agent_count(&self) -> usize {
        self.agent_count
    }
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }
    /// `N_r`, the received-signal dimension.
    pub fn rx_dim(&self) -> usize {
        self.rx_dim
    }
    /// `N_t`, the transmitted-signal dimension.
    pub fn tx_dim(&self) -> usize {
        self.tx_dim
    }
    /// `d · M`.
    pub fn global_dim(&self) -> usize {
        self.state_dim * self.agent_count
    }
    pub fn internal(&self, m: usize) -> &Matrix {
        &self.internal[m]
    }
    pub fn couplings(&self) -> &[Coupling] {
        &self.coupling
    }
    pub fn actuation(&self, m: usize) -> &Matrix {
        &self.actuation[m]
    }
    pub fn plant_noise(&self, m: usize) -> &Matrix {
        &self.plant_noise[m]
    }
    pub fn target_transition(&self) -> &Matrix {
        &self.target_transition
    }
    pub fn global_transition(&self) -> &Matrix {
        &self.global_transition
    }

    /// `B̂_m`: `B_m` at block row `m`, zeros elsewhere.
    pub fn global_actuation(&self, m: usize) -> Matrix {
        let d = self.state_dim;
        let mut out = Matrix::zeros(self.global_dim(), self.rx_dim);
        out.view_mut((m * d, 0), (d, self.rx_dim)).copy_from(&self.actuation[m]);
        out
    }

    /// `Tr(Diag(W_1, …, W_M))`.
    pub fn noise_trace(&self) -> f64 {
        self.plant_noise.iter().map(|w| w.trace()).sum()
    }

    /// `Σ_m Tr(B_m B_mᵀ)`.
    pub fn actuation_energy(&self) -> f64 {
        self.actuation.iter().map(|b| b.norm_squared()).sum()
    }

    /// Draws `ŵ ~ N(0, Diag(W_1, …, W_M))`.
    pub fn sample_plant_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let d = self.state_dim;
        let mut out = Vector::zeros(self.global_dim());
        for (m, root) in self.noise_sqrt.iter().enumerate() {
            let z = normal_vector(rng, d);
            out.rows_mut(m * d, d).copy_from(&(root * z));
        }
        out
    }

    /// Scales every transition block (and hence `A`) by `factor`.
    pub fn scale_transition(&self, factor: f64) -> Result<Self> {
        self.rebuild(|t| {
            for a in &mut t.internal {
                *a *= factor;
            }
            for c in &mut t.coupling {
                c.block *= factor;
            }
        })
    }

    /// Rescales `A` so that `‖A‖₂ = target`. A zero `A` is left unchanged.
    pub fn with_transition_norm(&self, target: f64) -> Result<Self> {
        let norm = crate::numerics::spectral_norm(&self.global_transition)?;
        if norm == 0.0 {
            return Ok(self.clone());
        }
        self.scale_transition(target / norm)
    }

    pub fn scale_actuation(&self, factor: f64) -> Result<Self> {
        self.rebuild(|t| {
            for b in &mut t.actuation {
                *b *= factor;
            }
        })
    }

    pub fn with_target_transition(&self, g: Matrix) -> Result<Self> {
        self.rebuild(|t| t.target_transition = g)
    }

    fn rebuild(&self, edit: impl FnOnce(&mut Self)) -> Result<Self> {
        let mut t = self.clone();
        edit(&mut t);
        Self::new(
            t.state_dim,
            t.rx_dim,
            t.tx_dim,
            t.internal,
            t.coupling,
            t.actuation,
            t.plant_noise,
            t.target_transition,
        )
    }
}

fn check_shape(m: &Matrix, rows: usize, cols: usize, what: &'static str) -> Result<()> {
    if m.shape() == (rows, cols) {
        Ok(())
    } else {
        Err(Error::dim(what, format!("{rows}x{cols}"), format!("{}x{}", m.nrows(), m.ncols())))
    }
}

/// Ring-coupled random swarm: `A_mm`, `B_m` i.i.d. standard normal, agent `m`
/// coupled to its successor with `A_{m,succ(m)} = A_mm`, `W_m = noise_scale·I`,
/// and `G = I`. With a single agent the successor is the agent itself and no
/// coupling is added.
pub fn build_ring_topology(
    agents: usize,
    state_dim: usize,
    tx_dim: usize,
    rx_dim: usize,
    noise_scale: f64,
    seed: u64,
) -> Result<SwarmTopology> {
    if agents == 0 {
        return Err(Error::param("agents", "must be >= 1"));
    }
    if !(noise_scale >= 0.0) {
        return Err(Error::param("noise_scale", "must be >= 0"));
    }
    let mut rng = stream_rng(seed, Stream::Topology, 0);
    let mut internal = Vec::with_capacity(agents);
    let mut actuation = Vec::with_capacity(agents);
    for _ in 0..agents {
        internal.push(normal_matrix(&mut rng, state_dim, state_dim));
        actuation.push(normal_matrix(&mut rng, state_dim, rx_dim));
    }
    let coupling = (0..agents)
        .filter_map(|m| {
            let next = (m + 1) % agents;
            (next != m).then(|| Coupling {
                row: m,
                col: next,
                block: internal[m].clone(),
            })
        })
        .collect();
    let noise = vec![Matrix::identity(state_dim, state_dim) * noise_scale; agents];
    let n = agents * state_dim;
    SwarmTopology::new(
        state_dim,
        rx_dim,
        tx_dim,
        internal,
        coupling,
        actuation,
        noise,
        Matrix::identity(n, n),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub x: Vector,
    pub r: Vector,
    pub t: usize,
}

impl SwarmState {
    pub fn new(x: Vector, r: Vector) -> Self {
        Self { x, r, t: 0 }
    }

    /// Every agent starts from the same per-agent value in every coordinate.
    pub fn uniform(topology: &SwarmTopology, x0: f64, r0: f64) -> Self {
        let n = topology.global_dim();
        Self::new(Vector::from_element(n, x0), Vector::from_element(n, r0))
    }

    pub fn error(&self) -> Vector {
        &self.x - &self.r
    }
}

#[derive(Debug, Clone)]
pub struct TrackingError {
    pub e: Vector,
    /// `‖e‖²`, equal to both the trace and the spectral norm of `sigma`.
    pub cost: f64,
    /// `e eᵀ`
    pub sigma: Matrix,
}

pub fn tracking_error(state: &SwarmState) -> TrackingError {
    let e = state.error();
    let sigma = &e * e.transpose();
    TrackingError {
        cost: e.norm_squared(),
        e,
        sigma,
    }
}

/// Plant update; `received[m]` is `û_m`. Advances `t`, leaves `r` untouched.
pub fn step_swarm(
    topology: &SwarmTopology,
    state: &SwarmState,
    received: &[Vector],
    noise: &Vector,
) -> Result<SwarmState> {
    let m_count = topology.agent_count();
    let n = topology.global_dim();
    let d = topology.state_dim();
    if received.len() != m_count {
        return Err(Error::dim("received controls", m_count, received.len()));
    }
    if state.x.len() != n || state.r.len() != n {
        return Err(Error::dim("state", n, state.x.len()));
    }
    if noise.len() != n {
        return Err(Error::dim("plant noise", n, noise.len()));
    }
    let mut x = topology.global_transition() * &state.x + noise;
    for (m, u) in received.iter().enumerate() {
        if u.len() != topology.rx_dim() {
            return Err(Error::dim("received control", topology.rx_dim(), u.len()));
        }
        let mut block = x.rows_mut(m * d, d);
        block += topology.actuation(m) * u;
    }
    Ok(SwarmState {
        x,
        r: state.r.clone(),
        t: state.t + 1,
    })
}

/// `r ← G r`; `x` and `t` are left untouched so this composes with [`step_swarm`].
pub fn step_target(topology: &SwarmTopology, state: &SwarmState) -> Result<SwarmState> {
    let n = topology.global_dim();
    if state.r.len() != n {
        return Err(Error::dim("target", n, state.r.len()));
    }
    Ok(SwarmState {
        x: state.x.clone(),
        r: topology.target_transition() * &state.r,
        t: state.t,
    })
}

// ---- JSON document form -------------------------------------------------

type Rows = Vec<Vec<f64>>;

fn to_rows(m: &Matrix) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn from_rows(rows: &Rows, what: &str) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Topology(format!("{what}: ragged rows")));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

#[derive(Serialize, Deserialize)]
struct CouplingDoc {
    row: usize,
    col: usize,
    block: Rows,
}

/// Matrices are row-major nested arrays.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyDoc {
    agent_count: usize,
    state_dim: usize,
    rx_dim: usize,
    tx_dim: usize,
    internal: Vec<Rows>,
    coupling: Vec<CouplingDoc>,
    actuation: Vec<Rows>,
    plant_noise: Vec<Rows>,
    target_transition: Rows,
}

impl From<SwarmTopology> for TopologyDoc {
    fn from(t: SwarmTopology) -> Self {
        Self {
            agent_count: t.agent_count,
            state_dim: t.state_dim,
            rx_dim: t.rx_dim,
            tx_dim: t.tx_dim,
            internal: t.internal.iter().map(to_rows).collect(),
            coupling: t
                .coupling
                .iter()
                .map(|c| CouplingDoc {
                    row: c.row,
                    col: c.col,
                    block: to_rows(&c.block),
                })
                .collect(),
            actuation: t.actuation.iter().map(to_rows).collect(),
            plant_noise: t.plant_noise.iter().map(to_rows).collect(),
            target_transition: to_rows(&t.target_transition),
        }
    }
}

impl TryFrom<TopologyDoc> for SwarmTopology {
    type Error = Error;

    fn try_from(doc: TopologyDoc) -> Result<Self> {
        let parse = |v: &[Rows], what: &str| v.iter().map(|r| from_rows(r, what)).collect::<Result<Vec<_>>>();
        let internal = parse(&doc.internal, "internal")?;
        if internal.len() != doc.agent_count {
            return Err(Error::Topology(format!(
                "agent_count {} but {} internal blocks",
                doc.agent_count,
                internal.len()
            )));
        }
        let coupling = doc
            .coupling
            .iter()
            .map(|c| {
                Ok(Coupling {
                    row: c.row,
                    col: c.col,
                    block: from_rows(&c.block, "coupling")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        SwarmTopology::new(
            doc.state_dim,
            doc.rx_dim,
            doc.tx_dim,
            internal,
            coupling,
            parse(&doc.actuation, "actuation")?,
            parse(&doc.plant_noise, "plant_noise")?,
            from_rows(&doc.target_transition, "target_transition")?,
        )
    }
}
