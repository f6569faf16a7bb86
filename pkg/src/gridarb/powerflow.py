"""AC power flow solvers for slack + PQ networks.

Two independent solvers share one solution format:

* ``solve_fixed_point`` — the fast path.  The nodal current balance is
  linearized around the flat profile and the resulting linear system,
  factorized once per network, is reapplied until the complex power
  mismatch converges:  v <- y_dd^-1 (conj(s/v) - y_ds V_0).
* ``solve_reference`` — full Newton-Raphson on the polar mismatch
  equations.  Slower, used as the accuracy oracle for the fast path.

``batch_solve`` runs the fixed-point update on a whole matrix of
injection columns at once against the shared factorization.  Each column
is frozen the moment it converges, and every matrix operation touching
per-column state is elementwise or a multi-RHS triangular solve, so the
batch result is bit-identical to solving the columns one at a time.

Convergence metric everywhere: infinity norm of the complex power
mismatch at PQ nodes, in per-unit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_solve

from .errors import NotConverged
from .network import AdmittancePartition

__all__ = [
    "InjectionSet",
    "SolveOptions",
    "PowerFlowSolution",
    "solve_fixed_point",
    "solve_reference",
    "batch_solve",
]


@dataclass(frozen=True)
class InjectionSet:
    """Net complex power injections at PQ nodes (generation positive)."""

    p: np.ndarray  # per-unit active injection, partition ordering
    q: np.ndarray  # per-unit reactive injection

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if p.shape != q.shape or p.ndim != 1:
            raise ValueError("p and q must be equal-length 1-D arrays")
        if not (np.isfinite(p).all() and np.isfinite(q).all()):
            raise ValueError("injections must be finite")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)


@dataclass(frozen=True)
class SolveOptions:
    tolerance: float = 1e-8  # per-unit power mismatch bound
    max_iterations: int = 100

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True, eq=False)
class PowerFlowSolution:
    """Converged network state in canonical node order (slack first)."""

    v: np.ndarray  # complex node voltages, pu
    line_p: np.ndarray  # sending-end active flow per line, pu
    line_q: np.ndarray  # sending-end reactive flow per line, pu
    line_i2: np.ndarray  # squared current magnitude per line, pu
    slack_p: float  # substation active injection, pu
    slack_q: float  # substation reactive injection, pu
    iterations: int
    residual: float  # power mismatch infinity norm, pu
    converged: bool = True


def _check_batch_shape(adm: AdmittancePartition, injs) -> tuple[np.ndarray, np.ndarray]:
    n = adm.n_pq
    p = np.empty((n, len(injs)))
    q = np.empty((n, len(injs)))
    for j, inj in enumerate(injs):
        if inj.p.shape[0] != n:
            raise ValueError(
                f"injection {j} has {inj.p.shape[0]} entries, partition has {n} PQ nodes")
        p[:, j] = inj.p
        q[:, j] = inj.q
    return p, q


def _finalize(adm: AdmittancePartition, v_pq: np.ndarray, iterations, residual,
              converged) -> list[PowerFlowSolution]:
    """Attach line flows and slack power to converged voltage columns."""
    v0 = adm.slack_voltage
    k = v_pq.shape[1]
    v_full = np.empty((adm.n_pq + 1, k), dtype=complex)
    v_full[0, :] = v0
    v_full[1:, :] = v_pq

    vf = v_full[adm.line_from, :]
    vt = v_full[adm.line_to, :]
    i_line = (vf - vt) * adm.line_y[:, None]
    s_line = vf * np.conj(i_line)
    line_i2 = i_line.real ** 2 + i_line.imag ** 2

    out = []
    for j in range(k):
        # slack row dot product done per contiguous column copy so the BLAS
        # kernel (and therefore the bits) match between batch and single
        i_slack = adm.y_ss * v0 + np.dot(adm.y_sd, np.ascontiguousarray(v_pq[:, j]))
        s_slack = v0 * np.conj(i_slack)
        vj = v_full[:, j].copy()
        lp = np.ascontiguousarray(s_line.real[:, j])
        lq = np.ascontiguousarray(s_line.imag[:, j])
        li2 = np.ascontiguousarray(line_i2[:, j])
        for arr in (vj, lp, lq, li2):
            arr.setflags(write=False)
        out.append(PowerFlowSolution(
            v=vj, line_p=lp, line_q=lq, line_i2=li2,
            slack_p=float(s_slack.real), slack_q=float(s_slack.imag),
            iterations=int(iterations[j]), residual=float(residual[j]),
            converged=bool(converged[j])))
    return out


def _fixed_point_columns(adm: AdmittancePartition, p: np.ndarray, q: np.ndarray,
                         opt: SolveOptions):
    """Fixed-point iteration over injection columns with per-column freezing."""
    n, k = p.shape
    v0 = adm.slack_voltage
    s = p + 1j * q
    v = np.ones((n, k), dtype=complex)
    iterations = np.zeros(k, dtype=int)
    residual = np.empty(k)
    converged = np.zeros(k, dtype=bool)

    # Mismatch at the flat start.  Y_dd @ 1 is shared by every column, so the
    # check costs one matrix-vector product and stays column-independent.
    flat_current = adm.y_dd @ np.ones(n, dtype=complex) + adm.y_ds * v0
    mism0 = np.conj(flat_current)[:, None] - s
    residual[:] = np.max(np.abs(mism0), axis=0)
    converged[:] = residual <= opt.tolerance

    rhs_const = -adm.y_ds * v0
    active = np.flatnonzero(~converged)
    it = 0
    while active.size and it < opt.max_iterations:
        it += 1
        va = v[:, active]
        cur = np.conj(s[:, active] / va)
        v_new = lu_solve(adm.lu, cur + rhs_const[:, None])

        bad = ~np.isfinite(v_new).all(axis=0)
        if bad.any():
            # keep the previous finite iterate for diverged columns
            v_new[:, bad] = va[:, bad]

        v[:, active] = v_new
        # The solve makes y_dd @ v_new + y_ds v0 equal cur up to machine
        # precision, so cur stands in for the implied current without a
        # matrix product.
        mism = v_new * np.conj(cur) - s[:, active]
        res = np.max(np.abs(mism), axis=0)
        res = np.where(np.isfinite(res), res, np.inf)
        residual[active] = res
        iterations[active] = it
        done = (res <= opt.tolerance) | bad
        converged[active] = res <= opt.tolerance
        active = active[~done]

    return _finalize(adm, v, iterations, residual, converged)


def solve_fixed_point(adm: AdmittancePartition, inj: InjectionSet,
                      opt: SolveOptions = SolveOptions()) -> PowerFlowSolution:
    """Solve one injection set with the factored fixed-point scheme.

    Raises NotConverged (carrying the last iterate) if the mismatch never
    drops below tolerance.
    """
    sol = _fixed_point_columns(adm, inj.p[:, None], inj.q[:, None], opt)[0]
    if not sol.converged:
        raise NotConverged(
            f"fixed-point solve stalled at residual {sol.residual:.3e} "
            f"after {sol.iterations} iterations",
            solution=sol, residual=sol.residual)
    return sol


def batch_solve(adm: AdmittancePartition, injs, opt: SolveOptions = SolveOptions()
                ) -> list[PowerFlowSolution]:
    """Solve many injection sets against the shared factorization.

    Element i is bit-identical to ``solve_fixed_point(adm, injs[i], opt)``.
    If any element fails, NotConverged is raised with that element's index;
    its ``solutions`` attribute still holds every per-element solution.
    """
    if len(injs) == 0:
        raise ValueError("batch_solve requires a nonempty sequence")
    p, q = _check_batch_shape(adm, injs)
    sols = _fixed_point_columns(adm, p, q, opt)
    for i, sol in enumerate(sols):
        if not sol.converged:
            err = NotConverged(
                f"batch element {i} stalled at residual {sol.residual:.3e}",
                solution=sol, residual=sol.residual, index=i)
            err.solutions = sols
            raise err
    return sols


def _full_admittance(adm: AdmittancePartition) -> np.ndarray:
    n = adm.n_pq
    y = np.empty((n + 1, n + 1), dtype=complex)
    y[0, 0] = adm.y_ss
    y[0, 1:] = adm.y_sd
    y[1:, 0] = adm.y_ds
    y[1:, 1:] = adm.y_dd
    return y


def solve_reference(adm: AdmittancePartition, inj: InjectionSet,
                    opt: SolveOptions = SolveOptions()) -> PowerFlowSolution:
    """Newton-Raphson reference solve on the polar mismatch equations.

    Independent of the fixed-point path: iterates angle and magnitude
    corrections from the full Jacobian at each step.
    """
    n = adm.n_pq
    if inj.p.shape[0] != n:
        raise ValueError(f"injection has {inj.p.shape[0]} entries, partition has {n}")
    y = _full_admittance(adm)
    v0 = adm.slack_voltage
    s_spec = inj.p + 1j * inj.q

    vm = np.ones(n)
    va = np.zeros(n)
    v_full = np.empty(n + 1, dtype=complex)
    v_full[0] = v0

    best_v = None
    best_res = np.inf
    iterations = 0
    pq = np.arange(1, n + 1)

    for it in range(opt.max_iterations + 1):
        v_full[1:] = vm * np.exp(1j * va)
        i_bus = y @ v_full
        mism = v_full[1:] * np.conj(i_bus[1:]) - s_spec
        res = float(np.max(np.abs(mism))) if n else 0.0
        if res < best_res:
            best_res = res
            best_v = v_full[1:].copy()
            iterations = it
        if res <= opt.tolerance:
            sol = _finalize(adm, v_full[1:, None],
                            [it], [res], [True])[0]
            return sol
        if it == opt.max_iterations:
            break

        v_norm = v_full / np.abs(v_full)
        ds_dva = 1j * v_full[:, None] * np.conj(np.diag(i_bus) - y * v_full[None, :])
        ds_dvm = v_full[:, None] * np.conj(y * v_norm[None, :])
        ds_dvm[np.diag_indices_from(ds_dvm)] += np.conj(i_bus) * v_norm

        j11 = ds_dva[np.ix_(pq, pq)].real
        j12 = ds_dvm[np.ix_(pq, pq)].real
        j21 = ds_dva[np.ix_(pq, pq)].imag
        j22 = ds_dvm[np.ix_(pq, pq)].imag
        jac = np.block([[j11, j12], [j21, j22]])
        rhs = -np.concatenate([mism.real, mism.imag])
        try:
            dx = np.linalg.solve(jac, rhs)
        except np.linalg.LinAlgError:
            break
        if not np.isfinite(dx).all():
            break
        va = va + dx[:n]
        vm = vm + dx[n:]
        if not (np.isfinite(vm).all() and (vm > 0).all()):
            break

    sol = _finalize(adm, best_v[:, None], [iterations], [best_res], [False])[0]
    raise NotConverged(
        f"Newton solve stalled at residual {best_res:.3e}",
        solution=sol, residual=best_res)
