"""Fixed-point solver for the stationary velocity-vorticity system.

The nonlinear problem is written as ``s = T(N(s))``: ``N`` evaluates the
nonlinear data for the current iterate and ``T`` is the linear operator of
:mod:`vvflow.stokes`. Continuation in ``lambda`` scales forcing and
nonlinear terms together, ``s = T(lambda N(s))``, and walks ``lambda`` up
to 1 with warm starts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import assembly as asm
from .fespaces import Field, Spaces, State
from .fieldcalc import alpha_plus
from .quadrature import tetrahedron_rule
from .stokes import StokesOperator, TInput


class PicardError(RuntimeError):
    """Fixed-point iteration failed; carries the trace and the best iterate."""

    def __init__(self, message, trace=None, best=None):
        super().__init__(message)
        self.trace = trace
        self.best = best


@dataclass
class PicardConfig:
    max_iter: int = 50
    tol: float = 1e-10
    damping: float = 1.0
    lambda_schedule: tuple = (1.0,)
    quad_degree: int = 4
    skew: bool = False
    growth_patience: int = 3  # consecutive increment growths before damping falls back
    fallback_damping: float = 0.5

    def __post_init__(self):
        if not (self.tol > 0):
            raise ValueError(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be a positive integer, got {self.max_iter}")
        if not (0 < self.damping <= 1):
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        sched = tuple(float(x) for x in self.lambda_schedule)
        if not sched or sched[-1] != 1.0 or any(b < a for a, b in zip(sched, sched[1:])) \
                or sched[0] < 0:
            raise ValueError(f"lambda_schedule must be nondecreasing in [0, 1] and end at 1, got {sched}")
        self.lambda_schedule = sched
        if self.quad_degree not in (4, 6):
            raise ValueError(f"quad_degree must be 4 or 6, got {self.quad_degree}")

    @classmethod
    def with_steps(cls, n_steps: int, **kwargs) -> "PicardConfig":
        """Uniform schedule ``1/n, 2/n, ..., 1``."""
        if n_steps < 1:
            raise ValueError("lambda steps must be at least 1")
        return cls(lambda_schedule=tuple((k + 1) / n_steps for k in range(n_steps)), **kwargs)


@dataclass
class PicardTrace:
    iteration: list = field(default_factory=list)
    lam: list = field(default_factory=list)
    increment: list = field(default_factory=list)  # relative star-norm increment
    step: list = field(default_factory=list)  # absolute star-norm increment
    ratio: list = field(default_factory=list)  # step_k / step_{k-1}, nan for the first step
    residual_velocity: list = field(default_factory=list)
    residual_vorticity: list = field(default_factory=list)
    damping: list = field(default_factory=list)

    def __len__(self):
        return len(self.iteration)

    def append(self, **row):
        for k, v in row.items():
            getattr(self, k).append(v)

    def rows(self):
        keys = ["iteration", "lam", "increment", "step", "ratio", "residual_velocity",
                "residual_vorticity", "damping"]
        return keys, [[getattr(self, k)[i] for k in keys] for i in range(len(self))]


class VVSProblem:
    """Nonlinear operator pieces for fixed forcing ``f`` and coefficients ``nu, alpha``."""

    def __init__(self, spaces: Spaces, f, nu: float, alpha: float, cfg: PicardConfig | None = None,
                 operator: StokesOperator | None = None):
        self.cfg = cfg or PicardConfig()
        self.spaces = spaces
        self.nu, self.alpha = float(nu), float(alpha)
        TInput(None, None, self.nu, self.alpha)  # validates coefficients
        self.rule = tetrahedron_rule(self.cfg.quad_degree)
        self.T = operator if operator is not None else StokesOperator(spaces, self.cfg.quad_degree)
        X, W = spaces.X, spaces.W
        self.f = f
        if f is None:
            self.F_X, self.F_W = np.zeros(X.size), np.zeros(W.size)
        else:
            self.F_X = asm.assemble_rhs(X, f, self.rule)
            self.F_W = asm.assemble_rot_rhs(W, f, self.rule)
        self.f_norm = l2_norm_of(f, spaces.mesh, self.rule)

    # -- N ------------------------------------------------------------------
    def apply_N(self, s: State, lam: float = 1.0) -> TInput:
        """``lam * N(s)``: ``g = f - w x u``, ``l = (f, rot .) + b(w, u, .) - b(u, w, .)``."""
        X, W = self.spaces.X, self.spaces.W
        g = self.F_X - asm.cross_rhs(s.w, s.u, X, self.rule)
        l = (self.F_W + asm.convection_rhs(s.w, s.u, W, self.rule, self.cfg.skew)
             - asm.convection_rhs(s.u, s.w, W, self.rule, self.cfg.skew))
        return TInput(lam * g, lam * l, self.nu, self.alpha)

    def step(self, s: State, theta: float = 1.0, lam: float = 1.0) -> State:
        """``(1 - theta) s + theta T(lam N(s))``."""
        return s.combine(self.T.solve_T(self.apply_N(s, lam)), theta)

    # -- norms and residuals --------------------------------------------------
    def star_norm(self, u: Field) -> float:
        x = u.free_values
        return math.sqrt(max(self.alpha * x @ (self.T.M_X @ x) + self.nu * x @ (self.T.G_X @ x), 0.0))

    def vorticity_norm(self, w: Field) -> float:
        x = w.free_values
        return math.sqrt(max(x @ (self.T.M_W @ x), 0.0))

    def state_norm(self, s: State) -> float:
        return self.star_norm(s.u) + self.vorticity_norm(s.w)

    def difference_norm(self, a: State, b: State) -> float:
        du = Field(a.u.space, a.u.coefficients - b.u.coefficients)
        dw = Field(a.w.space, a.w.coefficients - b.w.coefficients)
        return self.star_norm(du) + self.vorticity_norm(dw)

    def residuals(self, s: State, lam: float = 1.0, data: TInput | None = None):
        """Relative residuals of the velocity and vorticity equations at ``s``."""
        data = data if data is not None else self.apply_N(s, lam)
        T, sp_ = self.T, self.spaces
        xf, wf = sp_.X.free, sp_.W.free
        u, P, w, eta = s.u.free_values, s.P.coefficients, s.w.free_values, s.eta.coefficients
        g = np.asarray(data.g)[xf]
        ru = (self.alpha * T.M_X + self.nu * T.G_X) @ u - T.B_X.T @ P - g
        rhs_w = data.l - asm.assemble_fbc(s.P, sp_.W, "volume", self.rule)
        rw = (self.alpha * T.M_W + self.nu * T.RD_W) @ w - T.B_W.T @ eta - rhs_w[wf]
        rel = lambda r, b: float(np.linalg.norm(r) / max(np.linalg.norm(b), 1e-300))
        return rel(ru, g) if np.any(g) else float(np.linalg.norm(ru)), \
            rel(rw, rhs_w[wf]) if np.any(rhs_w[wf]) else float(np.linalg.norm(rw))

    def fixed_point_defect(self, s: State) -> float:
        """``||s - T(N(s))||`` in the stopping norm, relative to ``||s||``."""
        d = self.difference_norm(s, self.T.solve_T(self.apply_N(s)))
        n = self.state_norm(s)
        return d / n if n > 0 else d


def l2_norm_of(f, mesh, rule) -> float:
    if f is None:
        return 0.0
    vals = asm.values_at_quadrature(f, mesh, rule, 3)
    return float(np.sqrt(np.einsum("cq,cqm,cqm->", asm.quadrature_weights(mesh, rule), vals, vals)))


def apply_N(problem: VVSProblem, s: State, lam: float = 1.0) -> TInput:
    return problem.apply_N(s, lam)


def picard_step(problem: VVSProblem, s: State, theta: float = 1.0, lam: float = 1.0) -> State:
    return problem.step(s, theta, lam)


@dataclass
class PicardResult:
    state: State
    trace: PicardTrace
    iterations: int
    final_residuals: tuple


def solve_vvs(problem: VVSProblem, initial: State | None = None) -> PicardResult:
    """Damped Picard iteration with lambda-continuation.

    Raises
    ------
    PicardError
        When some lambda level does not converge within ``max_iter``
        iterations, or the iterates stop being finite. The exception carries
        the trace and the iterate with the smallest increment.
    """
    cfg = problem.cfg
    s = initial if initial is not None else problem.spaces.zero_state()
    trace = PicardTrace()
    total = 0
    best, best_inc = s, math.inf
    for lam in cfg.lambda_schedule:
        theta = cfg.damping
        prev_step, prev_inc, growth = None, None, 0
        converged = False
        for _ in range(cfg.max_iter):
            with np.errstate(over="ignore", invalid="ignore"):
                data = problem.apply_N(s, lam)
                res_u, res_w = problem.residuals(s, lam, data)
                s_new = s.combine(problem.T.solve_T(data), theta)
                step = problem.difference_norm(s_new, s)
                scale = problem.state_norm(s_new)
            total += 1
            inc = step / scale if scale > 0 else step
            ratio = step / prev_step if prev_step not in (None, 0.0) else math.nan
            trace.append(iteration=total, lam=lam, increment=inc, step=step, ratio=ratio,
                         residual_velocity=res_u, residual_vorticity=res_w, damping=theta)
            if not math.isfinite(inc):
                raise PicardError(f"iterates diverged to non-finite values at lambda={lam}",
                                  trace, best)
            if prev_step is not None and step > prev_step:
                growth += 1
                if growth >= cfg.growth_patience and theta > cfg.fallback_damping:
                    theta = cfg.fallback_damping
                    growth = 0
            else:
                growth = 0
            prev_step, prev_inc = step, inc
            s = s_new
            if inc < best_inc:
                best, best_inc = s, inc
            if inc <= cfg.tol:
                converged = True
                break
        if not converged:
            raise PicardError(f"no convergence at lambda={lam} within {cfg.max_iter} iterations "
                              f"(last relative increment {prev_inc:.3e})", trace, best)
    return PicardResult(s, trace, total, problem.residuals(s))


# ---------------------------------------------------------------------------
# smallness conditions
# ---------------------------------------------------------------------------
@dataclass
class Constants:
    """Domain constants entering the smallness conditions.

    ``c_p``: Poincare constant; ``c_star``: coercivity constant of the
    nonstandard problem; ``M``: trilinear constant; ``c_omega``: factor in
    the surrogate ``K1 = c_omega C_P ||f|| / nu``.
    """

    c_p: float
    c_star: float
    M: float
    c_omega: float = 1.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"constant {k} must be positive and finite, got {v}")


@dataclass
class SmallnessReport:
    nu: float
    alpha: float
    alpha_plus: float
    c_p: float
    f_norm: float
    forcing_bound: float  # C*/sqrt(2) nu^(5/4) alpha_+^(3/4)
    forcing_ok: bool
    alpha1: float
    alpha1_ok: bool
    K1: float
    uniqueness_product: float
    uniqueness_ok: bool

    @property
    def all_pass(self) -> bool:
        return self.forcing_ok and self.alpha1_ok and self.uniqueness_ok

    def lines(self):
        fmt = lambda v: str(bool(v)) if isinstance(v, (bool, np.bool_)) else repr(float(v))
        out = [f"{k} = {fmt(v)}" for k, v in asdict(self).items()]
        out.append(f"all_pass = {self.all_pass}")
        return out


def check_smallness(f_norm: float, nu: float, alpha: float, constants: Constants) -> SmallnessReport:
    """Evaluate the existence/uniqueness conditions with the given constants (advisory)."""
    if f_norm < 0:
        raise ValueError("f_norm must be non-negative")
    ap = alpha_plus(alpha, nu, constants.c_p)
    bound = constants.c_star / math.sqrt(2.0) * nu**1.25 * ap**0.75
    a1 = 1.0 - 2.0 * math.sqrt(2.0) * constants.M * nu**-1.25 * ap**-0.75 * f_norm
    K1 = constants.c_omega * constants.c_p * f_norm / nu
    if a1 > 0:
        prod = 2.0 * math.sqrt(2.0) * constants.M**2 / (nu**2 * ap * a1) * f_norm * K1
    else:
        prod = math.inf
    return SmallnessReport(nu=nu, alpha=alpha, alpha_plus=ap, c_p=constants.c_p, f_norm=f_norm,
                           forcing_bound=float(bound), forcing_ok=bool(f_norm <= bound), alpha1=a1,
                           alpha1_ok=a1 > 0, K1=K1, uniqueness_product=prod,
                           uniqueness_ok=prod < 1.0)


def max_admissible_forcing(nu: float, alpha: float, constants: Constants, rel_tol: float = 1e-10) -> float:
    """Largest ``||f||`` passing every smallness condition (bisection; all are monotone)."""
    ok = lambda x: check_smallness(x, nu, alpha, constants).all_pass
    lo, hi = 0.0, 1.0
    while ok(hi):
        lo, hi = hi, 2.0 * hi
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo
