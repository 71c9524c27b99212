//! Exact two-qubit quantum scenarios: states, projective measurements,
//! outcome probabilities, analytic S and W oracles, and event-log sampling.
//!
//! Conventions: the computational basis is the ẑ eigenbasis; Bell states
//! defined in the x basis are converted at construction. Outcome 0 of a
//! measurement corresponds to the projector along +bloch.

use nalgebra::{Complex, Matrix2, Matrix4, Vector2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{CountsTable, EventRecord, StateLabel};
use crate::witness::{self, Side};

type C64 = Complex<f64>;
type M2 = Matrix2<C64>;
type M4 = Matrix4<C64>;

fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

const HERMITICITY_TOL: f64 = 1e-12;
const EIGENVALUE_TOL: f64 = 1e-10;

/// A two-qubit density matrix (4x4, Hermitian, unit trace, PSD).
#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitState {
    pub rho: M4,
}

impl TwoQubitState {
    /// Wrap a matrix, checking the density-matrix invariants.
    pub fn new(rho: M4) -> Result<Self> {
        let state = TwoQubitState { rho };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        let diff = self.rho - self.rho.adjoint();
        if diff.iter().any(|v| v.norm() > HERMITICITY_TOL) {
            return Err(Error::domain("state is not Hermitian"));
        }
        let trace = self.rho.trace();
        if (trace.re - 1.0).abs() > HERMITICITY_TOL || trace.im.abs() > HERMITICITY_TOL {
            return Err(Error::domain(format!("state trace {trace} is not 1")));
        }
        for ev in self.eigenvalues() {
            if ev < -EIGENVALUE_TOL {
                return Err(Error::domain(format!("negative eigenvalue {ev}")));
            }
        }
        Ok(())
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.rho.symmetric_eigenvalues().iter().copied().collect()
    }

    pub fn purity(&self) -> f64 {
        (self.rho * self.rho).trace().re
    }
}

/// A binary projective measurement along a Bloch direction:
/// Π_a = (I + (−1)^a bloch·σ)/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetting {
    pub bloch: [f64; 3],
}

impl MeasurementSetting {
    /// Normalizes the direction; errors on a zero vector.
    pub fn new(bloch: [f64; 3]) -> Result<Self> {
        let norm = (bloch[0].powi(2) + bloch[1].powi(2) + bloch[2].powi(2)).sqrt();
        if norm < 1e-12 {
            return Err(Error::domain("measurement direction must be nonzero"));
        }
        Ok(MeasurementSetting {
            bloch: [bloch[0] / norm, bloch[1] / norm, bloch[2] / norm],
        })
    }

    fn pauli_dot(&self) -> M2 {
        let [nx, ny, nz] = self.bloch;
        M2::new(c(nz, 0.0), c(nx, -ny), c(nx, ny), c(-nz, 0.0))
    }

    pub fn projector(&self, outcome: u8) -> M2 {
        let sign = if outcome == 0 { 1.0 } else { -1.0 };
        (M2::identity() + self.pauli_dot() * c(sign, 0.0)) * c(0.5, 0.0)
    }
}

/// Full measurement scenario: a shared state and two settings per side.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub state: TwoQubitState,
    pub alice: [MeasurementSetting; 2],
    pub bob: [MeasurementSetting; 2],
    pub name: Option<String>,
    /// Label stamped onto sampled events.
    pub label: StateLabel,
}

/// The heralded Bell states, defined in the x-basis convention
/// |Ψ±⟩ = (|↑↓⟩ₓ ± |↓↑⟩ₓ)/√2 with |↑⟩ₓ = (|↑⟩_z+|↓⟩_z)/√2 and
/// |↓⟩ₓ = (i/√2)(|↑⟩_z−|↓⟩_z).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BellState {
    PsiPlus,
    PsiMinus,
}

impl BellState {
    pub fn label(&self) -> StateLabel {
        match self {
            BellState::PsiPlus => StateLabel::PsiPlus,
            BellState::PsiMinus => StateLabel::PsiMinus,
        }
    }
}

fn kron2(a: &Vector2<C64>, b: &Vector2<C64>) -> Vector4<C64> {
    Vector4::new(a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1])
}

/// Pure Bell-state density matrix in the computational (ẑ) basis.
pub fn bell_state(which: BellState) -> TwoQubitState {
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let up_x = Vector2::new(c(inv_sqrt2, 0.0), c(inv_sqrt2, 0.0));
    let down_x = Vector2::new(c(0.0, inv_sqrt2), c(0.0, -inv_sqrt2));
    let sign = match which {
        BellState::PsiPlus => 1.0,
        BellState::PsiMinus => -1.0,
    };
    let psi = (kron2(&up_x, &down_x) + kron2(&down_x, &up_x) * c(sign, 0.0)) * c(inv_sqrt2, 0.0);
    TwoQubitState {
        rho: psi * psi.adjoint(),
    }
}

/// Werner state z|Ψ⁺⟩⟨Ψ⁺| + (1−z)/4·I.
pub fn werner_state(z: f64) -> Result<TwoQubitState> {
    if !(0.0..=1.0).contains(&z) {
        return Err(Error::domain(format!("noise parameter z={z} outside [0,1]")));
    }
    let psi = bell_state(BellState::PsiPlus);
    let rho = psi.rho * c(z, 0.0) + M4::identity() * c((1.0 - z) / 4.0, 0.0);
    Ok(TwoQubitState { rho })
}

impl Scenario {
    pub fn new(
        state: TwoQubitState,
        alice: [MeasurementSetting; 2],
        bob: [MeasurementSetting; 2],
    ) -> Self {
        Scenario {
            state,
            alice,
            bob,
            name: None,
            label: StateLabel::Unlabeled,
        }
    }

    /// Joint outcome probabilities p(ab|xy) = Tr(ρ · Π^A_{a|x} ⊗ Π^B_{b|y}).
    pub fn outcome_probabilities(&self, x: u8, y: u8) -> [[f64; 2]; 2] {
        let mut table = [[0.0f64; 2]; 2];
        for a in 0..2u8 {
            let pa = self.alice[x as usize].projector(a);
            for b in 0..2u8 {
                let pb = self.bob[y as usize].projector(b);
                let p = (self.state.rho * pa.kronecker(&pb)).trace().re;
                table[a as usize][b as usize] = p.max(0.0);
            }
        }
        table
    }

    /// Preparing-party marginal p(outcome|setting).
    pub fn marginal(&self, side: Side, setting: u8, outcome: u8) -> f64 {
        let table = match side {
            Side::AlicePrepares => self.outcome_probabilities(setting, 0),
            Side::BobPrepares => self.outcome_probabilities(0, setting),
        };
        match side {
            Side::AlicePrepares => table[outcome as usize][0] + table[outcome as usize][1],
            Side::BobPrepares => table[0][outcome as usize] + table[1][outcome as usize],
        }
    }

    /// The state steered onto the non-measuring party's qubit when `side`'s
    /// party measures `setting` and obtains `outcome`.
    pub fn steered_state(&self, side: Side, setting: u8, outcome: u8) -> Result<M2> {
        let p = self.marginal(side, setting, outcome);
        if p <= 0.0 {
            return Err(Error::ZeroPreparation {
                side: match side {
                    Side::AlicePrepares => "alice_prepares",
                    Side::BobPrepares => "bob_prepares",
                },
                setting,
                outcome,
            });
        }
        let (proj, trace_out_first) = match side {
            Side::AlicePrepares => (
                self.alice[setting as usize]
                    .projector(outcome)
                    .kronecker(&M2::identity()),
                true,
            ),
            Side::BobPrepares => (
                M2::identity().kronecker(&self.bob[setting as usize].projector(outcome)),
                false,
            ),
        };
        let m = proj * self.state.rho * proj;
        let mut reduced = M2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                let mut sum = c(0.0, 0.0);
                for k in 0..2 {
                    sum += if trace_out_first {
                        m[(2 * k + i, 2 * k + j)]
                    } else {
                        m[(2 * i + k, 2 * j + k)]
                    };
                }
                reduced[(i, j)] = sum;
            }
        }
        Ok(reduced / c(p, 0.0))
    }

    /// ρ_{a|x}: Bob's conditional state after Alice measures x and gets a.
    pub fn conditional_state(&self, x: u8, a: u8) -> Result<M2> {
        self.steered_state(Side::AlicePrepares, x, a)
    }

    /// p(b|x',y) = Tr(ρ_{a|x} M^B_{b|y}), the trace-formula route.
    pub fn rsp_probability(&self, x: u8, a: u8, y: u8, b: u8) -> Result<f64> {
        let steered = self.conditional_state(x, a)?;
        Ok((steered * self.bob[y as usize].projector(b)).trace().re)
    }

    /// Exact CHSH statistic from the outcome-probability tables.
    pub fn analytic_s(&self) -> f64 {
        let mut e = [[0.0f64; 2]; 2];
        for x in 0..2u8 {
            for y in 0..2u8 {
                let t = self.outcome_probabilities(x, y);
                e[x as usize][y as usize] = t[0][0] + t[1][1] - t[0][1] - t[1][0];
            }
        }
        (e[0][0] + e[0][1] + e[1][0] - e[1][1]).abs()
    }

    /// Exact p(1|x',y) table for one preparation side.
    pub fn analytic_rsp_table(&self, side: Side) -> Result<[[f64; 2]; 4]> {
        let mut p1 = [[0.0f64; 2]; 4];
        for setting in 0..2u8 {
            for outcome in 0..2u8 {
                let steered = self.steered_state(side, setting, outcome)?;
                for meas in 0..2u8 {
                    let proj = match side {
                        Side::AlicePrepares => self.bob[meas as usize].projector(1),
                        Side::BobPrepares => self.alice[meas as usize].projector(1),
                    };
                    p1[(2 * setting + outcome) as usize][meas as usize] =
                        (steered * proj).trace().re;
                }
            }
        }
        Ok(p1)
    }

    /// Exact witness value for one preparation side.
    pub fn analytic_w(&self, side: Side) -> Result<f64> {
        Ok(witness::det_witness(&self.analytic_rsp_table(side)?).abs())
    }

    /// Exact W_rsp = min over both sides.
    pub fn analytic_w_rsp(&self) -> Result<f64> {
        Ok(self
            .analytic_w(Side::AlicePrepares)?
            .min(self.analytic_w(Side::BobPrepares)?))
    }

    /// Draw i.i.d. trials: settings uniform on {0,1}², outcomes from the
    /// exact probability tables. Deterministic given the seed.
    pub fn sample_events(&self, n: u64, seed: u64) -> Vec<EventRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tables: Vec<[[f64; 2]; 2]> = (0..4)
            .map(|i| self.outcome_probabilities((i >> 1) as u8, (i & 1) as u8))
            .collect();
        let mut events = Vec::with_capacity(n as usize);
        for trial in 0..n {
            let setting: u8 = rng.gen_range(0..4);
            let (x, y) = (setting >> 1, setting & 1);
            let table = &tables[setting as usize];
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut outcome = (1u8, 1u8);
            'pick: for a in 0..2u8 {
                for b in 0..2u8 {
                    acc += table[a as usize][b as usize];
                    if u < acc {
                        outcome = (a, b);
                        break 'pick;
                    }
                }
            }
            events.push(EventRecord {
                trial,
                x,
                y,
                a: outcome.0,
                b: outcome.1,
                state: self.label,
            });
        }
        events
    }

    /// Counts proportional to the exact probabilities (each cell rounded).
    /// With a large power-of-two `n_per_setting` the empirical frequencies
    /// reproduce the exact probabilities to ~1e-14.
    pub fn ideal_counts(&self, n_per_setting: u64) -> CountsTable {
        let mut counts = CountsTable::default();
        for x in 0..2u8 {
            for y in 0..2u8 {
                let table = self.outcome_probabilities(x, y);
                for a in 0..2u8 {
                    for b in 0..2u8 {
                        counts.n[a as usize][b as usize][x as usize][y as usize] =
                            (table[a as usize][b as usize] * n_per_setting as f64).round() as u64;
                    }
                }
            }
        }
        counts
    }

    /// The same physical scenario conjugated by a common single-qubit
    /// rotation (axis-angle) applied to the state and every setting.
    pub fn rotated(&self, axis: [f64; 3], angle: f64) -> Result<Scenario> {
        let axis = MeasurementSetting::new(axis)?;
        let [nx, ny, nz] = axis.bloch;
        let (s, cos) = ((angle / 2.0).sin(), (angle / 2.0).cos());
        // SU(2) rotation: U = cos(θ/2) I − i sin(θ/2) n·σ
        let u = M2::identity() * c(cos, 0.0) + axis.pauli_dot() * c(0.0, -s);
        let uu = u.kronecker(&u);
        let rho = uu * self.state.rho * uu.adjoint();
        let rotate = |v: [f64; 3]| -> Result<MeasurementSetting> {
            // Rodrigues rotation of the Bloch vector
            let dot = nx * v[0] + ny * v[1] + nz * v[2];
            let cross = [
                ny * v[2] - nz * v[1],
                nz * v[0] - nx * v[2],
                nx * v[1] - ny * v[0],
            ];
            let ca = angle.cos();
            let sa = angle.sin();
            MeasurementSetting::new([
                v[0] * ca + cross[0] * sa + nx * dot * (1.0 - ca),
                v[1] * ca + cross[1] * sa + ny * dot * (1.0 - ca),
                v[2] * ca + cross[2] * sa + nz * dot * (1.0 - ca),
            ])
        };
        Ok(Scenario {
            state: TwoQubitState { rho },
            alice: [rotate(self.alice[0].bloch)?, rotate(self.alice[1].bloch)?],
            bob: [rotate(self.bob[0].bloch)?, rotate(self.bob[1].bloch)?],
            name: self.name.clone(),
            label: self.label,
        })
    }
}

const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Alice {ẑ, x̂}; Bob {(ẑ−x̂)/√2, (ẑ+x̂)/√2}: maximizes S at 2√2·z on the
/// Werner family and gives W = z².
pub fn chsh_optimal(state: TwoQubitState) -> Scenario {
    let mut sc = Scenario::new(
        state,
        [
            MeasurementSetting::new([0.0, 0.0, 1.0]).unwrap(),
            MeasurementSetting::new([1.0, 0.0, 0.0]).unwrap(),
        ],
        [
            MeasurementSetting::new([-INV_SQRT2, 0.0, INV_SQRT2]).unwrap(),
            MeasurementSetting::new([INV_SQRT2, 0.0, INV_SQRT2]).unwrap(),
        ],
    );
    sc.name = Some("chsh_optimal".into());
    sc
}

/// Both parties {x̂, ẑ} (the BBM92 arrangement): no Bell violation, but the
/// witness still reaches 1 on a Bell state.
pub fn bbm92(state: TwoQubitState) -> Scenario {
    let mut sc = Scenario::new(
        state,
        [
            MeasurementSetting::new([1.0, 0.0, 0.0]).unwrap(),
            MeasurementSetting::new([0.0, 0.0, 1.0]).unwrap(),
        ],
        [
            MeasurementSetting::new([1.0, 0.0, 0.0]).unwrap(),
            MeasurementSetting::new([0.0, 0.0, 1.0]).unwrap(),
        ],
    );
    sc.name = Some("bbm92".into());
    sc
}

/// Scenario description file contents (JSON).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub state: StateSpec,
    /// Preset name (`chsh_optimal` or `bbm92`); mutually exclusive with
    /// explicit settings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alice: Option<[[f64; 3]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bob: Option<[[f64; 3]; 2]>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSpec {
    Werner(f64),
    Bell(BellState),
}

impl ScenarioSpec {
    pub fn build(&self) -> Result<Scenario> {
        let (state, label) = match self.state {
            StateSpec::Werner(z) => (werner_state(z)?, StateLabel::Unlabeled),
            StateSpec::Bell(which) => (bell_state(which), which.label()),
        };
        let mut sc = match (&self.preset, self.alice, self.bob) {
            (Some(name), None, None) => preset_scenario(name, state)?,
            (None, Some(alice), Some(bob)) => Scenario::new(
                state,
                [
                    MeasurementSetting::new(alice[0])?,
                    MeasurementSetting::new(alice[1])?,
                ],
                [MeasurementSetting::new(bob[0])?, MeasurementSetting::new(bob[1])?],
            ),
            _ => {
                return Err(Error::domain(
                    "scenario needs either a preset or both alice and bob settings",
                ))
            }
        };
        sc.label = label;
        Ok(sc)
    }
}

pub fn preset_scenario(name: &str, state: TwoQubitState) -> Result<Scenario> {
    match name {
        "chsh_optimal" => Ok(chsh_optimal(state)),
        "bbm92" => Ok(bbm92(state)),
        other => Err(Error::domain(format!("unknown preset {other:?}"))),
    }
}
