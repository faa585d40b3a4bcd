"""Per-scenario economic dispatch: assembly and interior-point solution.

The dispatch problem is a strictly convex QP over generator outputs, line
flows, battery charge/discharge/state-of-charge, and load shedding. All
coupling between variables lives in equality constraints (node balance and
the storage recursion); every inequality is a variable box whose faces may
depend on the capacity vector eta. Consequently the right-hand side splits
as ``b(eta) = b0 + B eta`` with constant A, and B is the sparse map used by
implicit differentiation.

Battery state of charge is stored relative to its boundary level
``boundary_soc * capacity`` so that the scenario-cyclic boundary conditions
are eta-free equalities and all capacity dependence stays in b.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import qp
from .errors import DispatchError
from .network import Network, validate_network
from .scenarios import Scenario

__all__ = [
    "VariableLayout",
    "DispatchProblem",
    "DispatchSolution",
    "assemble",
    "solve",
    "operational_cost",
    "emissions",
]


@dataclass(frozen=True)
class VariableLayout:
    """Index map for the dispatch vector.

    Blocks in order: generator output p, line flow f, battery charge c,
    battery discharge d, battery state-of-charge offset e, load shed u.
    Each block is device-major, hour-minor. Shed variables exist only for
    nodes hosting at least one load. The SOC variable at slot t is the state
    at the end of hour t, measured relative to the boundary level.
    """

    T: int
    n_gen: int
    n_line: int
    n_bat: int
    shed_nodes: tuple[int, ...]

    @property
    def n_shed(self) -> int:
        return len(self.shed_nodes)

    @property
    def gen_off(self) -> int:
        return 0

    @property
    def line_off(self) -> int:
        return self.n_gen * self.T

    @property
    def charge_off(self) -> int:
        return self.line_off + self.n_line * self.T

    @property
    def discharge_off(self) -> int:
        return self.charge_off + self.n_bat * self.T

    @property
    def soc_off(self) -> int:
        return self.discharge_off + self.n_bat * self.T

    @property
    def shed_off(self) -> int:
        return self.soc_off + self.n_bat * self.T

    @property
    def n_vars(self) -> int:
        return self.shed_off + self.n_shed * self.T

    def gen(self, g: int, t: int) -> int:
        return self.gen_off + g * self.T + t

    def line(self, l: int, t: int) -> int:
        return self.line_off + l * self.T + t

    def charge(self, j: int, t: int) -> int:
        return self.charge_off + j * self.T + t

    def discharge(self, j: int, t: int) -> int:
        return self.discharge_off + j * self.T + t

    def soc(self, j: int, t: int) -> int:
        return self.soc_off + j * self.T + t

    def shed(self, u: int, t: int) -> int:
        return self.shed_off + u * self.T + t

    def block(self, name: str) -> slice:
        offs = {
            "gen": (self.gen_off, self.n_gen),
            "line": (self.line_off, self.n_line),
            "charge": (self.charge_off, self.n_bat),
            "discharge": (self.discharge_off, self.n_bat),
            "soc": (self.soc_off, self.n_bat),
            "shed": (self.shed_off, self.n_shed),
        }
        off, count = offs[name]
        return slice(off, off + count * self.T)


@dataclass
class DispatchProblem:
    """Assembled QP for one scenario at a fixed capacity vector.

    ``A x <= b0 + B_eta @ eta`` stacks all lower-bound rows (-x <= ...)
    before all upper-bound rows (x <= ...), so M = 2N and row i / row N+i
    are the two faces of variable i. ``margin`` is a small constant added to
    every face so the feasible interior stays nonempty even when a capacity
    hits zero.
    """

    layout: VariableLayout
    scenario_id: int
    eta: np.ndarray
    q: np.ndarray
    hdiag: np.ndarray
    G: sp.csr_matrix
    g_eq: np.ndarray
    A: sp.csr_matrix
    b0: np.ndarray
    B_eta: sp.csr_matrix
    margin: float
    epsilon: float
    emission_rates: np.ndarray
    battery_caps: np.ndarray
    boundary_fractions: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    obj_scale: float

    @property
    def N(self) -> int:
        return self.q.size

    @property
    def M(self) -> int:
        return self.b0.size

    @property
    def P(self) -> int:
        return self.g_eq.size

    @property
    def K(self) -> int:
        return self.B_eta.shape[1]

    @property
    def b(self) -> np.ndarray:
        return self.b0 + self.B_eta @ self.eta

    def capacity_coefficients(self) -> sp.csr_matrix:
        """Sparse d b / d eta, one row per inequality."""
        return self.B_eta

    def default_tau(self) -> float:
        return 1e-6 * self.obj_scale

    def initial_point(self) -> np.ndarray:
        return 0.5 * (self.lb + self.ub)


@dataclass
class DispatchSolution:
    """Primal-dual dispatch solution on the tau-perturbed central path."""

    x: np.ndarray
    nu: np.ndarray
    mu: np.ndarray
    slacks: np.ndarray
    objective: float
    barrier_tau: float
    kkt_residual: float
    converged: bool
    iterations: int
    problem: DispatchProblem = field(repr=False)
    adjoint_factor: object = field(default=None, repr=False, compare=False)

    def _view(self, name: str) -> np.ndarray:
        lay = self.problem.layout
        counts = {
            "gen": lay.n_gen, "line": lay.n_line, "charge": lay.n_bat,
            "discharge": lay.n_bat, "soc": lay.n_bat, "shed": lay.n_shed,
        }
        return self.x[lay.block(name)].reshape(counts[name], lay.T)

    def generation(self) -> np.ndarray:
        return self._view("gen")

    def flows(self) -> np.ndarray:
        return self._view("line")

    def charge(self) -> np.ndarray:
        return self._view("charge")

    def discharge(self) -> np.ndarray:
        return self._view("discharge")

    def soc_offset(self) -> np.ndarray:
        return self._view("soc")

    def state_of_charge(self) -> np.ndarray:
        """Absolute state of charge, offset plus the boundary level."""
        prob = self.problem
        base = prob.boundary_fractions * prob.battery_caps
        return self.soc_offset() + base[:, None]

    def shed(self) -> np.ndarray:
        return self._view("shed")


def assemble(net: Network, scenario: Scenario, eta: np.ndarray, *,
             epsilon: float | None = None, margin: float | None = None) -> DispatchProblem:
    """Build the dispatch QP for one scenario at capacities ``eta``."""
    violations = validate_network(net)
    if violations:
        raise DispatchError("invalid network: " + "; ".join(violations))
    gens, lines, bats, loads = net.generators, net.lines, net.batteries, net.loads
    K = net.parameter_count
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (K,):
        raise DispatchError(f"eta must have length K={K}, got {eta.shape}")
    if (eta < -1e-9).any():
        raise DispatchError("capacities must be nonnegative")
    eta = np.maximum(eta, 0.0)
    T = scenario.T
    if scenario.demand.shape != (len(net.nodes), T):
        raise DispatchError(
            f"scenario demand shape {scenario.demand.shape} does not match "
            f"({len(net.nodes)}, {T})"
        )
    if scenario.availability.shape != (len(gens), T):
        raise DispatchError(
            f"scenario availability shape {scenario.availability.shape} does not match "
            f"({len(gens)}, {T})"
        )

    shed_nodes = tuple(sorted({net.node_index(ld.node) for ld in loads}))
    lay = VariableLayout(T=T, n_gen=len(gens), n_line=len(lines), n_bat=len(bats),
                         shed_nodes=shed_nodes)
    N = lay.n_vars
    hours = np.arange(T)

    def cap_of(dev) -> tuple[int | None, float]:
        if dev.parameter_index is not None:
            return dev.parameter_index, eta[dev.parameter_index]
        return None, float(dev.capacity)

    # variable boxes: lb = lb0 + L eta, ub = ub0 + U eta (triplets for L, U)
    lb0 = np.zeros(N)
    ub0 = np.zeros(N)
    lrows: list[int] = []
    lcols: list[int] = []
    lvals: list[float] = []
    urows: list[int] = []
    ucols: list[int] = []
    uvals: list[float] = []

    def add_bound(rows, cols, vals, var0, k, coeffs):
        rows.extend(range(var0, var0 + T))
        cols.extend([k] * T)
        vals.extend(np.broadcast_to(coeffs, (T,)))

    q = np.zeros(N)
    for g, gen in enumerate(gens):
        v0 = lay.gen(g, 0)
        rho = scenario.availability[g]
        k, cap = cap_of(gen)
        if k is None:
            ub0[v0:v0 + T] = rho * cap
        else:
            add_bound(urows, ucols, uvals, v0, k, rho)
        q[v0:v0 + T] = gen.fuel_cost
    for l, line in enumerate(lines):
        v0 = lay.line(l, 0)
        k, cap = cap_of(line)
        if k is None:
            lb0[v0:v0 + T] = -cap
            ub0[v0:v0 + T] = cap
        else:
            add_bound(lrows, lcols, lvals, v0, k, -1.0)
            add_bound(urows, ucols, uvals, v0, k, 1.0)
    battery_caps = np.zeros(len(bats))
    boundary = np.zeros(len(bats))
    for j, bat in enumerate(bats):
        k, cap = cap_of(bat)
        battery_caps[j] = cap
        boundary[j] = bat.boundary_soc
        power = 1.0 / bat.duration
        for block in ("charge", "discharge"):
            v0 = getattr(lay, block)(j, 0)
            if k is None:
                ub0[v0:v0 + T] = cap * power
            else:
                add_bound(urows, ucols, uvals, v0, k, power)
        v0 = lay.soc(j, 0)
        if k is None:
            lb0[v0:v0 + T] = -bat.boundary_soc * cap
            ub0[v0:v0 + T] = (1.0 - bat.boundary_soc) * cap
        else:
            add_bound(lrows, lcols, lvals, v0, k, -bat.boundary_soc)
            add_bound(urows, ucols, uvals, v0, k, 1.0 - bat.boundary_soc)
    node_penalty = np.zeros(len(net.nodes))
    for ld in loads:
        n = net.node_index(ld.node)
        node_penalty[n] = max(node_penalty[n], ld.shed_penalty)
    for u, n in enumerate(shed_nodes):
        v0 = lay.shed(u, 0)
        ub0[v0:v0 + T] = scenario.demand[n]
        q[v0:v0 + T] = node_penalty[n]

    L = sp.coo_matrix((lvals, (lrows, lcols)), shape=(N, K)).tocsr()
    U = sp.coo_matrix((uvals, (urows, ucols)), shape=(N, K)).tocsr()
    lb = lb0 + L @ eta
    ub = ub0 + U @ eta

    # equalities: node balance per (node, hour), then SOC recursion + terminal
    n_nodes = len(net.nodes)
    P = n_nodes * T + len(bats) * (T + 1)
    erows: list[np.ndarray] = []
    ecols: list[np.ndarray] = []
    evals: list[np.ndarray] = []

    def add_eq(rows, cols, coeff):
        erows.append(np.asarray(rows))
        ecols.append(np.asarray(cols))
        evals.append(np.broadcast_to(coeff, np.shape(rows)).astype(float))

    def bal_row(n):
        return n * T + hours

    for g, gen in enumerate(gens):
        add_eq(bal_row(net.node_index(gen.node)), lay.gen(g, 0) + hours, 1.0)
    for l, line in enumerate(lines):
        cols = lay.line(l, 0) + hours
        add_eq(bal_row(net.node_index(line.node_from)), cols, -1.0)
        add_eq(bal_row(net.node_index(line.node_to)), cols, 1.0)
    for j, bat in enumerate(bats):
        n = net.node_index(bat.node)
        add_eq(bal_row(n), lay.discharge(j, 0) + hours, 1.0)
        add_eq(bal_row(n), lay.charge(j, 0) + hours, -1.0)
    for u, n in enumerate(shed_nodes):
        add_eq(bal_row(n), lay.shed(u, 0) + hours, 1.0)

    soc_base = n_nodes * T
    for j, bat in enumerate(bats):
        rows = soc_base + j * (T + 1) + hours
        add_eq(rows, lay.soc(j, 0) + hours, 1.0)
        add_eq(rows[1:], lay.soc(j, 0) + hours[:-1], -1.0)
        add_eq(rows, lay.charge(j, 0) + hours, -bat.charge_efficiency)
        add_eq(rows, lay.discharge(j, 0) + hours, 1.0 / bat.discharge_efficiency)
        add_eq([soc_base + j * (T + 1) + T], [lay.soc(j, T - 1)], 1.0)

    G = sp.coo_matrix(
        (np.concatenate(evals), (np.concatenate(erows), np.concatenate(ecols))),
        shape=(P, N),
    ).tocsr()
    g_eq = np.zeros(P)
    g_eq[:n_nodes * T] = scenario.demand.reshape(-1)

    if epsilon is None:
        mean_fuel = float(np.mean([g.fuel_cost for g in gens])) if gens else 0.0
        epsilon = 1e-6 * max(1.0, mean_fuel)
    if epsilon <= 0:
        raise DispatchError("epsilon must be positive")
    if margin is None:
        cap_scale = max(1.0, float(np.abs(ub).max()) if N else 1.0,
                        float(np.abs(lb).max()) if N else 1.0)
        margin = 1e-6 * cap_scale
    if margin <= 0:
        raise DispatchError("margin must be positive")

    A = sp.vstack([-sp.identity(N, format="csr"), sp.identity(N, format="csr")],
                  format="csr")
    b0 = np.concatenate([margin - lb0, margin + ub0])
    B = sp.vstack([-L, U], format="csr")

    positive_fuel = [g.fuel_cost for g in gens if g.fuel_cost > 0]
    mean_fuel = float(np.mean(positive_fuel)) if positive_fuel else 1.0
    obj_scale = max(1.0, mean_fuel * float(scenario.demand.sum()))

    return DispatchProblem(
        layout=lay, scenario_id=scenario.scenario_id, eta=eta.copy(), q=q,
        hdiag=np.full(N, epsilon), G=G, g_eq=g_eq, A=A, b0=b0, B_eta=B,
        margin=margin, epsilon=epsilon,
        emission_rates=np.array([g.emissions_rate for g in gens]),
        battery_caps=battery_caps, boundary_fractions=boundary,
        lb=lb, ub=ub, obj_scale=obj_scale,
    )


def solve(prob: DispatchProblem, tau_final: float | None = None, tol: float = 1e-9,
          max_iterations: int = 200) -> DispatchSolution:
    """Solve the dispatch QP to the perturbed KKT system at ``tau_final``.

    The result is deterministic for identical inputs. A run that exhausts the
    iteration budget returns its best iterate flagged non-converged.
    """
    if tau_final is None:
        tau_final = prob.default_tau()
    res = qp.solve_qp(prob.q, prob.hdiag, prob.A, prob.b, prob.G, prob.g_eq,
                      tau_final=tau_final, tol=tol, max_iterations=max_iterations,
                      x0=prob.initial_point())
    return DispatchSolution(
        x=res.x, nu=res.nu, mu=res.mu, slacks=res.slacks, objective=res.objective,
        barrier_tau=tau_final, kkt_residual=res.residual, converged=res.converged,
        iterations=res.iterations, problem=prob,
    )


def operational_cost(sol: DispatchSolution) -> float:
    """Fuel plus shed cost of a dispatch, excluding the quadratic regularizer."""
    return float(sol.problem.q @ sol.x)


def emissions(sol: DispatchSolution, net: Network) -> float:
    """Total emissions (tons of CO2) of a dispatch over its horizon."""
    rates = np.array([g.emissions_rate for g in net.generators])
    if rates.size != sol.problem.layout.n_gen:
        raise DispatchError("network does not match the dispatch problem layout")
    return float((rates[:, None] * sol.generation()).sum())
